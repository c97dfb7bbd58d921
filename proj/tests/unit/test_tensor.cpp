#include "doctest.h"
#include "linkdist/tensor.hpp"

using namespace linkdist;

namespace {

// Textbook triple loop.
Tensor2d naive_matmul(const Tensor2d& a, const Tensor2d& b) {
  Tensor2d out(a.rows(), b.cols());
  for (size_t i = 0; i < a.rows(); ++i)
    for (size_t j = 0; j < b.cols(); ++j) {
      double s = 0;
      for (size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
  return out;
}

}  // namespace

TEST_CASE("matmul_into matches the triple loop, zeros included") {
  Tensor2d a{{1, 0, 2}, {0, 0, 0}, {-1, 3, 0.5}};
  Tensor2d w{{1, 2}, {3, 4}, {5, 6}};
  Tensor2d out(3, 2);
  matmul_into(a, w, out);
  CHECK(out == naive_matmul(a, w));
}

TEST_CASE("matmul_tn_accumulate adds a^T g") {
  Tensor2d a{{1, 2}, {3, 4}};
  Tensor2d g{{1, 0, 1}, {0, 1, 2}};
  Tensor2d acc(2, 3, 1.0);
  matmul_tn_accumulate(a, g, acc);
  const Tensor2d expect = naive_matmul(transpose(a), g);
  for (size_t k = 0; k < acc.size(); ++k) CHECK(acc.data()[k] == expect.data()[k] + 1.0);
}

TEST_CASE("gather_rows and shape errors") {
  Tensor2 x{{1, 2}, {3, 4}, {5, 6}};
  const std::vector<uint32_t> ids{2, 0};
  const Tensor2 g = gather_rows(x, ids);
  CHECK(g == Tensor2{{5, 6}, {1, 2}});
  CHECK_THROWS_AS(require_same_shape(x, g, "test"), Error);
  CHECK_THROWS_AS(Tensor2(2, 2, std::vector<float>(3)), Error);
}
