#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "linkdist/error.hpp"

namespace linkdist {

// Dense row-major matrix.
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  BasicTensor(size_t rows, size_t cols, T fill = T(0)) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  BasicTensor(size_t rows, size_t cols, std::vector<T> data) : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows_ * cols_) {
      throw Error(ErrorCode::kDimension, "tensor data length " + std::to_string(data_.size()) +
                                             " does not match shape " + shape_string(rows, cols));
    }
  }
  BasicTensor(std::initializer_list<std::initializer_list<T>> rows) {
    rows_ = rows.size();
    cols_ = rows_ ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) throw Error(ErrorCode::kDimension, "ragged tensor literal");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  size_t rows() const { return rows_; }
  size_t cols() const { return cols_; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T& operator()(size_t r, size_t c) { return data_[r * cols_ + c]; }
  const T& operator()(size_t r, size_t c) const { return data_[r * cols_ + c]; }

  std::span<T> row(size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(size_t r) const { return {data_.data() + r * cols_, cols_}; }

  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  const std::vector<T>& storage() const { return data_; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }
  bool same_shape(const BasicTensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  std::string shape() const { return shape_string(rows_, cols_); }

  template <typename U>
  BasicTensor<U> cast() const {
    BasicTensor<U> out(rows_, cols_);
    std::transform(data_.begin(), data_.end(), out.data(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  bool operator==(const BasicTensor& o) const = default;

  static std::string shape_string(size_t r, size_t c) {
    return "[" + std::to_string(r) + "x" + std::to_string(c) + "]";
  }

 private:
  size_t rows_ = 0;
  size_t cols_ = 0;
  std::vector<T> data_;
};

using Tensor2 = BasicTensor<float>;
using Tensor2d = BasicTensor<double>;

template <typename T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b, const char* op) {
  if (!a.same_shape(b)) {
    throw Error(ErrorCode::kDimension, std::string(op) + ": shape mismatch " + a.shape() + " vs " + b.shape());
  }
}

namespace detail {

// Four rows of `a` against one 2-vector wide column tile of `w`, over the
// listed k in ascending order.
template <typename T>
void matmul_tile4(const T* const ar[4], T* const o[4], const BasicTensor<T>& w, const std::vector<uint32_t>& ks,
                  size_t j0) {
  typedef T V __attribute__((vector_size(32)));
  constexpr size_t L = sizeof(V) / sizeof(T);
  V c[4][2];
  for (size_t q = 0; q < 4; ++q)
    for (size_t h = 0; h < 2; ++h) std::memcpy(&c[q][h], o[q] + j0 + h * L, sizeof(V));
  for (uint32_t k : ks) {
    const T* wr = w.row(k).data() + j0;
    V w0, w1;
    std::memcpy(&w0, wr, sizeof(V));
    std::memcpy(&w1, wr + L, sizeof(V));
    for (size_t q = 0; q < 4; ++q) {
      const T av = ar[q][k];
      c[q][0] += av * w0;
      c[q][1] += av * w1;
    }
  }
  for (size_t q = 0; q < 4; ++q)
    for (size_t h = 0; h < 2; ++h) std::memcpy(o[q] + j0 + h * L, &c[q][h], sizeof(V));
}

}  // namespace detail

// out[B x N] += a[B x K] * w[K x N]. Zero entries of `a` are skipped, which
// keeps bag-of-words inputs cheap. Rows go four at a time through vector
// tiles; each output still sums over k in ascending order, so the result is
// the same as the plain triple loop.
template <typename T>
void matmul_into(const BasicTensor<T>& a, const BasicTensor<T>& w, BasicTensor<T>& out) {
  constexpr size_t R = 4, J = 2 * 32 / sizeof(T);
  const size_t n = w.cols(), kdim = a.cols(), rows = a.rows();
  const size_t n_tiled = n / J * J;
  std::vector<uint32_t> ks;
  ks.reserve(kdim);
  size_t i0 = 0;
  for (; i0 + R <= rows; i0 += R) {
    const T* ar[R];
    T* o[R];
    for (size_t q = 0; q < R; ++q) {
      ar[q] = a.row(i0 + q).data();
      o[q] = out.row(i0 + q).data();
    }
    ks.clear();
    for (size_t k = 0; k < kdim; ++k)
      if (ar[0][k] != T(0) || ar[1][k] != T(0) || ar[2][k] != T(0) || ar[3][k] != T(0)) ks.push_back(static_cast<uint32_t>(k));
    for (size_t j0 = 0; j0 < n_tiled; j0 += J) detail::matmul_tile4(ar, o, w, ks, j0);
    for (size_t q = 0; q < R && n_tiled < n; ++q)
      for (uint32_t k : ks) {
        const T av = ar[q][k];
        const T* wr = w.row(k).data();
        for (size_t j = n_tiled; j < n; ++j) o[q][j] += av * wr[j];
      }
  }
  for (size_t i = i0; i < rows; ++i) {
    T* __restrict o = out.row(i).data();
    const T* ar = a.row(i).data();
    for (size_t k = 0; k < kdim; ++k) {
      const T av = ar[k];
      if (av == T(0)) continue;
      const T* __restrict wr = w.row(k).data();
      for (size_t j = 0; j < n; ++j) o[j] += av * wr[j];
    }
  }
}

// acc[K x N] += a^T[K x B] * g[B x N], summing over B in ascending order.
template <typename T>
void matmul_tn_accumulate(const BasicTensor<T>& a, const BasicTensor<T>& g, BasicTensor<T>& acc) {
  const size_t n = g.cols();
  for (size_t i = 0; i < a.rows(); ++i) {
    const T* ar = a.row(i).data();
    const T* __restrict gr = g.row(i).data();
    for (size_t k = 0; k < a.cols(); ++k) {
      const T av = ar[k];
      if (av == T(0)) continue;
      T* __restrict accr = acc.row(k).data();
      for (size_t j = 0; j < n; ++j) accr[j] += av * gr[j];
    }
  }
}

template <typename T>
BasicTensor<T> transpose(const BasicTensor<T>& a) {
  BasicTensor<T> t(a.cols(), a.rows());
  for (size_t i = 0; i < a.rows(); ++i)
    for (size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

template <typename T>
BasicTensor<T> gather_rows(const BasicTensor<T>& src, std::span<const uint32_t> ids) {
  BasicTensor<T> out(ids.size(), src.cols());
  for (size_t i = 0; i < ids.size(); ++i) {
    auto from = src.row(ids[i]);
    std::copy(from.begin(), from.end(), out.row(i).begin());
  }
  return out;
}

}  // namespace linkdist
