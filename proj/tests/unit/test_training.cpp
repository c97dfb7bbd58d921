#include <cmath>

#include "doctest.h"
#include "linkdist/eval.hpp"
#include "linkdist/training.hpp"

using namespace linkdist;

namespace {

Graph separable_sbm(uint64_t seed, size_t blocks = 3, size_t per_block = 40) {
  RngStream rng(seed, static_cast<uint64_t>(Stream::kSbm));
  return generate_sbm({blocks, per_block, 0.2, 0.01, 8, 0.3}, rng);
}

// Fixed split: one fifth validation, one fifth test, the rest training.
SplitMasks fifths(size_t n) {
  SplitMasks m{std::vector<Role>(n, Role::kTrain)};
  for (size_t i = 0; i < n; ++i) {
    if (i % 5 == 0) m.roles[i] = Role::kVal;
    if (i % 5 == 1) m.roles[i] = Role::kTest;
  }
  return m;
}

TrainConfig small_config(uint64_t seed) {
  TrainConfig cfg;
  cfg.seed = seed;
  cfg.hidden = 32;
  return cfg;
}

std::vector<float> flat_params(ForkedMLP<float>& m) {
  std::vector<float> out;
  for (auto* p : m.params()) out.insert(out.end(), p->value.values().begin(), p->value.values().end());
  return out;
}

std::vector<float> flat_params(ThreeLayerNet<float>& m) {
  std::vector<float> out;
  for (auto* p : m.params()) out.insert(out.end(), p->value.values().begin(), p->value.values().end());
  return out;
}

}  // namespace

TEST_CASE("batch ranges never leave a single-row batch") {
  using R = std::vector<std::pair<size_t, size_t>>;
  CHECK(batch_ranges(10, 4) == R{{0, 4}, {4, 8}, {8, 10}});
  CHECK(batch_ranges(9, 4) == R{{0, 4}, {4, 9}});
  CHECK(batch_ranges(3, 1024) == R{{0, 3}});
  CHECK(batch_ranges(0, 8).empty());
}

TEST_CASE("pair loss example") {
  using M = BasicTensor<double>;
  const M zi{{0, 0}}, si{{1, 0}}, zj{{0, 1}}, sj{{2, 0}};
  const LabelledRows li{{0}, {0}}, lj{};
  const std::vector<double> w{1, 1};
  const auto pl = linkdist_pair_loss<double>(zi, si, zj, sj, li, lj, w, 0.5);
  CHECK(pl.ce == doctest::Approx(std::log(2.0) + std::log1p(std::exp(-2.0))));
  CHECK(pl.mse == doctest::Approx(3.0));
  CHECK(pl.i.dz(0, 0) == doctest::Approx(-1.5));
  CHECK(pl.i.dz(0, 1) == doctest::Approx(0.5));
  // j.ds: CE(sj, 0) gradient plus alpha * d/d(sj) MSE(zi, sj).
  const double p0 = 1.0 / (1.0 + std::exp(-2.0));
  CHECK(pl.j.ds(0, 0) == doctest::Approx(p0 - 1.0 + 0.5 * 2.0));
  CHECK(pl.j.ds(0, 1) == doctest::Approx(1.0 - p0));

  const auto off = linkdist_pair_loss<double>(zi, si, zj, sj, li, lj, w, 0.0);
  CHECK(off.mse == doctest::Approx(3.0));
  CHECK(off.j.dz == M{{0, 0}});
}

TEST_CASE("repulsion targets are constants") {
  using M = BasicTensor<double>;
  const M za{{0.3, -0.2, 0.1}}, sa{{1.0, 0.5, -0.5}}, zk{{-1.0, 0.0, 2.0}}, sk{{0.2, 0.2, 0.1}};
  const LabelledRows none{};
  const auto implicit = colinkdist_negative_loss<double>(za, sa, zk, sk, none, none, 0.3);
  const auto explicit_targets =
      colinkdist_negative_loss<double>(za, sa, zk, sk, softmax_rows(za), softmax_rows(zk), none, none, 0.3);
  CHECK(implicit.a.dz == explicit_targets.a.dz);
  CHECK(implicit.k.dz == explicit_targets.k.dz);
  // Without labels and with alpha zero, z receives no gradient at all.
  const auto no_mse = colinkdist_negative_loss<double>(za, sa, zk, sk, none, none, 0.0);
  CHECK(no_mse.a.dz == M{{0, 0, 0}});
  CHECK(no_mse.k.dz == M{{0, 0, 0}});
}

TEST_CASE("repulsion terms clamp and stop contributing") {
  using M = BasicTensor<double>;
  // s_a is extremely confident against the target, so its CE exceeds 4 ln 2.
  const M za{{10, -10}}, sa{{-30, 30}}, zk{{0, 0}}, sk{{0, 0}};
  const LabelledRows none{};
  const auto pk = M{{1, 0}};
  const auto nl = colinkdist_negative_loss<double>(za, sa, zk, sk, M{{0.5, 0.5}}, pk, none, none, 1.0);
  CHECK(nl.neg_mse <= repulsion_mse_cap(2) * 2);
  const double cap = repulsion_ce_cap(2);
  CHECK(cap == doctest::Approx(4 * std::log(2.0)));
  // a's repulsion CE is clamped: only the MSE term remains on a.ds.
  const auto mse_only = colinkdist_negative_loss<double>(za, sa, zk, sk, M{{0.5, 0.5}}, pk, none, none, 1.0);
  CHECK(nl.a.ds == mse_only.a.ds);
  CHECK(nl.neg_ce >= cap);
}

TEST_CASE("MLP fits a separable graph and records every epoch") {
  // Two classes whose feature signatures sit ten noise deviations apart.
  RngStream sbm_rng(1, static_cast<uint64_t>(Stream::kSbm));
  const Graph g = generate_sbm({2, 60, 0.2, 0.01, 8, 0.1}, sbm_rng);
  const SplitMasks m = fifths(g.num_nodes());
  const TrainView view(g, m, Setting::kTransductive);
  TrainConfig cfg;
  cfg.seed = 3;
  SupervisedResult r = train_supervised(Method::kMlp, view, cfg);
  CHECK(r.trace.size() == 200);
  CHECK(r.trace.front().epoch == 1);
  const auto pred = argmax_rows(infer_logits(r.best_model, g.features()));
  CHECK(accuracy(pred, g.labels(), m, Role::kTrain) >= 0.99);
  CHECK(view.eval_label_reads() == 0);
}

TEST_CASE("training is deterministic for a fixed seed") {
  const Graph g = separable_sbm(2);
  const SplitMasks m = fifths(g.num_nodes());
  const TrainView view(g, m, Setting::kTransductive);
  TrainConfig cfg = small_config(5);
  cfg.epochs = 4;
  for (Method method : {Method::kMlp, Method::kGcn, Method::kGcn2Mlp, Method::kLinkDist, Method::kCoLinkDist}) {
    CAPTURE(method_name(method));
    TrainOutcome a = run_training(method, view, cfg), b = run_training(method, view, cfg);
    REQUIRE(a.trace.size() == b.trace.size());
    for (size_t e = 0; e < a.trace.size(); ++e) {
      CHECK(a.trace[e].loss.total == b.trace[e].loss.total);
      CHECK(a.trace[e].val_acc == b.trace[e].val_acc);
    }
    if (auto* fa = std::get_if<ForkedMLP<float>>(&a.best_model))
      CHECK(flat_params(*fa) == flat_params(std::get<ForkedMLP<float>>(b.best_model)));
    else
      CHECK(flat_params(std::get<ThreeLayerNet<float>>(a.best_model)) ==
            flat_params(std::get<ThreeLayerNet<float>>(b.best_model)));
  }
}

TEST_CASE("alpha zero without labelled endpoints leaves the weights untouched") {
  // The only training node is isolated, so no edge carries a label.
  Graph g = separable_sbm(3);
  std::vector<Edge> edges;
  for (const Edge& e : g.edges())
    if (e.u != 2 && e.v != 2) edges.push_back(e);
  const Graph h("h", g.num_classes(), g.features(), g.labels(), edges);
  SplitMasks m{std::vector<Role>(h.num_nodes(), Role::kUnused)};
  m.roles[2] = Role::kTrain;
  const TrainView view(h, m, Setting::kTransductive);
  ForkedMLP<float> model({h.num_features(), 16, h.num_classes()});
  RunRngs rngs(1);
  model.init(rngs.init);
  const auto before = flat_params(model);
  LinkDistParams p;
  p.alpha = 0.0;
  p.class_weights.assign(h.num_classes(), 1.0f);
  p.batch_size = 64;
  const LossReport rep = linkdist_epoch(model, view, p, rngs);
  CHECK(rep.ce_term == 0.0);
  CHECK(rep.mse_term > 0.0);
  CHECK(flat_params(model) == before);
}

TEST_CASE("matching loss falls when only distillation drives training") {
  const Graph g = separable_sbm(4);
  SplitMasks m{std::vector<Role>(g.num_nodes(), Role::kUnused)};
  m.roles[0] = Role::kTrain;
  const TrainView view(g, m, Setting::kTransductive);
  ForkedMLP<float> model({g.num_features(), 32, g.num_classes()});
  RunRngs rngs(2);
  model.init(rngs.init);
  LinkDistParams p;
  p.alpha = 1.0;
  p.class_weights.assign(g.num_classes(), 1.0f);
  p.batch_size = 64;
  std::vector<double> mse;
  for (int e = 0; e < 5; ++e) mse.push_back(linkdist_epoch(model, view, p, rngs).mse_term);
  CHECK(mse.back() < mse.front());
}

TEST_CASE("contrastive loss accounting") {
  const Graph g = separable_sbm(5);
  const SplitMasks m = fifths(g.num_nodes());
  const TrainView view(g, m, Setting::kTransductive);
  ForkedMLP<float> model({g.num_features(), 32, g.num_classes()});
  RunRngs rngs(3);
  model.init(rngs.init);
  LinkDistParams p;
  p.alpha = 0.7;
  p.class_weights.assign(g.num_classes(), 1.0f);
  p.batch_size = 64;
  for (int e = 0; e < 3; ++e) {
    const LossReport r = colinkdist_epoch(model, view, p, rngs);
    CHECK(r.neg_ce_term > 0.0);
    CHECK(r.total == doctest::Approx(r.ce_term + p.alpha * r.mse_term - r.neg_ce_term - p.alpha * r.neg_mse_term));
  }
}

TEST_CASE("LinkDist trains for the degree-scaled budget") {
  const Graph g = separable_sbm(6);
  const SplitMasks m = fifths(g.num_nodes());
  const TrainView view(g, m, Setting::kTransductive);
  const LinkDistResult r = train_linkdist(view, small_config(1), false);
  CHECK(r.trace.size() == epoch_budget(g));
  CHECK(r.alpha_used == r.alpha.alpha);
  for (const auto& rec : r.trace) CHECK(rec.val_acc_mp.has_value());
}

TEST_CASE("inductive training never reads evaluation nodes") {
  const Graph g = separable_sbm(7);
  const SplitMasks m = fifths(g.num_nodes());
  TrainConfig cfg = small_config(2);
  cfg.epochs = 2;
  for (Method method : {Method::kMlp, Method::kGcn, Method::kGcn2Mlp, Method::kLinkDist, Method::kCoLinkDist}) {
    CAPTURE(method_name(method));
    const TrainView view(g, m, Setting::kInductive);
    run_training(method, view, cfg);
    CHECK(view.eval_label_reads() == 0);
    CHECK(view.eval_feature_reads() == 0);
    CHECK(view.hidden_feature_reads() == 0);
  }
}

TEST_CASE("transductive training reads no evaluation labels") {
  const Graph g = separable_sbm(8);
  const SplitMasks m = fifths(g.num_nodes());
  TrainConfig cfg = small_config(2);
  cfg.epochs = 2;
  for (Method method : {Method::kMlp, Method::kGcn, Method::kGcn2Mlp, Method::kLinkDist, Method::kCoLinkDist}) {
    const TrainView view(g, m, Setting::kTransductive);
    run_training(method, view, cfg);
    CHECK(view.eval_label_reads() == 0);
  }
}

TEST_CASE("GCN2MLP keeps the teacher trace") {
  const Graph g = separable_sbm(9);
  const SplitMasks m = fifths(g.num_nodes());
  TrainConfig cfg = small_config(4);
  cfg.epochs = 3;
  const TrainOutcome o = run_training(Method::kGcn2Mlp, g, m, Setting::kTransductive, cfg);
  CHECK(o.teacher_trace.size() == 3);
  CHECK(o.trace.size() == 3);
  const TrainOutcome gcn = run_training(Method::kGcn, g, m, Setting::kTransductive, cfg);
  for (size_t e = 0; e < 3; ++e) CHECK(o.teacher_trace[e].val_acc == gcn.trace[e].val_acc);
  CHECK(o.trace[0].loss.mse_term > 0.0);
}
