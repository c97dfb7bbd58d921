#include "doctest.h"
#include "linkdist/snapshot.hpp"
#include "test_util.hpp"

using namespace linkdist;
using test_util::TempDir;

namespace {

template <typename M>
void randomise(M& m, uint64_t seed) {
  RngStream rng(seed, 1);
  m.init(rng);
  for (auto* p : m.params())
    for (auto& v : p->value.values()) v += static_cast<float>(0.1 * rng.normal());
  for (auto* blk : {&m.block1, &m.block2}) {
    for (auto& v : blk->batch_norm.stats.running_mean) v = static_cast<float>(rng.normal());
    for (auto& v : blk->batch_norm.stats.running_var) v = static_cast<float>(0.5 + rng.uniform_double());
  }
}

Tensor2 inputs(size_t n, size_t f) {
  RngStream rng(99, 2);
  Tensor2 x(n, f);
  for (auto& v : x.values()) v = static_cast<float>(rng.normal());
  return x;
}

}  // namespace

TEST_CASE("forked snapshot round trip") {
  TempDir dir;
  ForkedMLP<float> m({6, 16, 3});
  randomise(m, 1);
  save_snapshot(dir.path(), Snapshot{m, "linkdist", 0.625});
  const Snapshot s = load_snapshot(dir.path());
  CHECK(s.method == "linkdist");
  CHECK(s.alpha == 0.625);
  const auto& back = std::get<ForkedMLP<float>>(s.model);
  const Tensor2 x = inputs(10, 6);
  const auto a = m.infer(x), b = back.infer(x);
  CHECK(a.z == b.z);
  CHECK(a.s == b.s);
  CHECK(back.block2.batch_norm.stats.running_var == m.block2.batch_norm.stats.running_var);
}

TEST_CASE("three-layer snapshot round trip") {
  TempDir dir;
  ThreeLayerNet<float> m({5, 8, 4});
  randomise(m, 2);
  save_snapshot(dir.path(), Snapshot{m, "gcn", std::nullopt});
  const Snapshot s = load_snapshot(dir.path());
  CHECK_FALSE(s.alpha.has_value());
  const auto& back = std::get<ThreeLayerNet<float>>(s.model);
  const Tensor2 x = inputs(7, 5);
  CHECK(mlp_forward(back, x, Mode::kEval, nullptr) == mlp_forward(m, x, Mode::kEval, nullptr));
}

TEST_CASE("damaged snapshots are rejected") {
  TempDir dir;
  ForkedMLP<float> m({3, 4, 2});
  randomise(m, 3);
  save_snapshot(dir.path(), Snapshot{m, "colinkdist", 0.5});
  const std::string w = test_util::read_bytes(dir / "weights.f32");
  test_util::write_bytes(dir / "weights.f32", w.substr(0, w.size() - 4));
  CHECK_THROWS_AS(load_snapshot(dir.path()), Error);
  test_util::write_bytes(dir / "weights.f32", w);
  test_util::write_bytes(dir / "snapshot.json", "{}");
  CHECK_THROWS_AS(load_snapshot(dir.path()), Error);
  CHECK_THROWS_AS(load_snapshot(dir / "nowhere"), Error);
}
