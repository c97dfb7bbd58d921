#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "linkdist/nn.hpp"

namespace linkdist {

// Batch rows whose node carries a training label, with those labels.
struct LabelledRows {
  std::vector<uint32_t> rows;
  std::vector<int32_t> labels;
};

template <typename T>
struct SideGrads {
  BasicTensor<T> dz, ds;
};

template <typename T>
struct PairLoss {
  double ce = 0.0;   // sum of the four supervised terms
  double mse = 0.0;  // MSE(z_i, s_j) + MSE(z_j, s_i), unscaled
  SideGrads<T> i, j;
};

namespace detail {

template <typename T>
void axpy(BasicTensor<T>& acc, const BasicTensor<T>& g, T scale) {
  for (size_t k = 0; k < acc.size(); ++k) acc.data()[k] += scale * g.data()[k];
}

template <typename T>
SideGrads<T> zero_side(const BasicTensor<T>& like) {
  return {BasicTensor<T>(like.rows(), like.cols()), BasicTensor<T>(like.rows(), like.cols())};
}

}  // namespace detail

// Loss of a batch of linked pairs (i_b, j_b). The label of i supervises z_i
// and s_j, and symmetrically for j; alpha scales the logit matching terms.
// With alpha == 0 the matching gradients are skipped entirely.
template <typename T>
PairLoss<T> linkdist_pair_loss(const BasicTensor<T>& zi, const BasicTensor<T>& si, const BasicTensor<T>& zj,
                               const BasicTensor<T>& sj, const LabelledRows& li, const LabelledRows& lj,
                               std::span<const T> weights, T alpha) {
  PairLoss<T> out{0.0, 0.0, detail::zero_side(zi), detail::zero_side(zj)};
  auto supervise = [&](const BasicTensor<T>& logits, const LabelledRows& l, BasicTensor<T>& grad) {
    const auto ce = cross_entropy_rows<T>(logits, l.rows, l.labels, weights);
    detail::axpy(grad, ce.grad, T(1));
    out.ce += static_cast<double>(ce.loss);
  };
  supervise(zi, li, out.i.dz);
  supervise(sj, li, out.j.ds);
  supervise(zj, lj, out.j.dz);
  supervise(si, lj, out.i.ds);

  const auto d1 = mse(zi, sj);
  const auto d2 = mse(zj, si);
  out.mse = static_cast<double>(d1.loss) + static_cast<double>(d2.loss);
  if (alpha != T(0)) {
    detail::axpy(out.i.dz, d1.grad_a, alpha);
    detail::axpy(out.j.ds, d1.grad_b, alpha);
    detail::axpy(out.j.dz, d2.grad_a, alpha);
    detail::axpy(out.i.ds, d2.grad_b, alpha);
  }
  return out;
}

inline double repulsion_ce_cap(size_t num_classes) { return 4.0 * std::log(static_cast<double>(num_classes)); }
inline double repulsion_mse_cap(size_t num_classes) { return 10.0 * static_cast<double>(num_classes); }

template <typename T>
struct NegativeLoss {
  double ce = 0.0;       // unweighted supervision of labelled negatives
  double neg_ce = 0.0;   // clamped repulsion cross entropy
  double neg_mse = 0.0;  // clamped repulsion MSE, unscaled
  SideGrads<T> a, k;
};

// Negative pairs (a_b, k_b). Each repulsion term is a batch mean clamped at
// its cap; a clamped term contributes no gradient. `pa` and `pk` are the
// constant targets softmax(z_a) and softmax(z_k).
template <typename T>
NegativeLoss<T> colinkdist_negative_loss(const BasicTensor<T>& za, const BasicTensor<T>& sa, const BasicTensor<T>& zk,
                                         const BasicTensor<T>& sk, const BasicTensor<T>& pa, const BasicTensor<T>& pk,
                                         const LabelledRows& la, const LabelledRows& lk, T alpha) {
  const size_t c = za.cols();
  const std::vector<T> unit(c, T(1));
  NegativeLoss<T> out{0.0, 0.0, 0.0, detail::zero_side(za), detail::zero_side(zk)};
  auto supervise = [&](const BasicTensor<T>& logits, const LabelledRows& l, BasicTensor<T>& grad) {
    const auto ce = cross_entropy_rows<T>(logits, l.rows, l.labels, std::span<const T>(unit));
    detail::axpy(grad, ce.grad, T(1));
    out.ce += static_cast<double>(ce.loss);
  };
  supervise(za, la, out.a.dz);
  supervise(zk, lk, out.k.dz);

  const double ce_cap = repulsion_ce_cap(c), mse_cap = repulsion_mse_cap(c);
  auto repel_ce = [&](const BasicTensor<T>& s, const BasicTensor<T>& p_other, BasicTensor<T>& ds) {
    const auto r = weighted_cross_entropy<T>(s, p_other, std::span<const T>(unit));
    const auto loss = static_cast<double>(r.loss);
    if (loss < ce_cap) detail::axpy(ds, r.grad, T(-1));
    out.neg_ce += std::min(loss, ce_cap);
  };
  repel_ce(sa, pk, out.a.ds);
  repel_ce(sk, pa, out.k.ds);

  auto repel_mse = [&](const BasicTensor<T>& z, const BasicTensor<T>& s, BasicTensor<T>& dz, BasicTensor<T>& ds) {
    const auto r = mse(z, s);
    const auto loss = static_cast<double>(r.loss);
    if (loss < mse_cap && alpha != T(0)) {
      detail::axpy(dz, r.grad_a, -alpha);
      detail::axpy(ds, r.grad_b, -alpha);
    }
    out.neg_mse += std::min(loss, mse_cap);
  };
  repel_mse(za, sk, out.a.dz, out.k.ds);
  repel_mse(zk, sa, out.k.dz, out.a.ds);
  return out;
}

template <typename T>
NegativeLoss<T> colinkdist_negative_loss(const BasicTensor<T>& za, const BasicTensor<T>& sa, const BasicTensor<T>& zk,
                                         const BasicTensor<T>& sk, const LabelledRows& la, const LabelledRows& lk,
                                         T alpha) {
  return colinkdist_negative_loss(za, sa, zk, sk, softmax_rows(za), softmax_rows(zk), la, lk, alpha);
}

}  // namespace linkdist
