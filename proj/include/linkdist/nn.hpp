#pragma once

// Layers, losses and the optimizer. Everything is templated on the scalar so
// the 64-bit gradient checker exercises exactly the code that trains in
// 32-bit.

#include <atomic>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "linkdist/rng.hpp"
#include "linkdist/tensor.hpp"

namespace linkdist {

enum class Mode { kTrain, kEval };

// Fault injection for the gradient-check harness. Never enabled in training.
enum class FaultSite : int { kNone = 0, kLinear, kBatchNorm, kLayerNorm, kCrossEntropy, kMse };
inline std::atomic<int> g_injected_fault{0};
inline void inject_fault(FaultSite site) { g_injected_fault.store(static_cast<int>(site)); }
inline bool fault_active(FaultSite site) { return g_injected_fault.load(std::memory_order_relaxed) == static_cast<int>(site); }

template <typename T>
struct ParamTensor {
  BasicTensor<T> value;
  BasicTensor<T> grad;
  BasicTensor<T> adam_m;
  BasicTensor<T> adam_v;
  uint64_t step_count = 0;
  std::string name;

  ParamTensor() = default;
  explicit ParamTensor(BasicTensor<T> v, std::string n = {})
      : value(std::move(v)),
        grad(value.rows(), value.cols()),
        adam_m(value.rows(), value.cols()),
        adam_v(value.rows(), value.cols()),
        name(std::move(n)) {}

  void zero_grad() { grad.fill(T(0)); }
};

template <typename T>
using ParamList = std::vector<ParamTensor<T>*>;

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(size_t in, size_t out, const std::string& name)
      : weight(BasicTensor<T>(in, out), name + ".weight"), bias(BasicTensor<T>(1, out), name + ".bias") {}

  size_t in_features() const { return weight.value.rows(); }
  size_t out_features() const { return weight.value.cols(); }

  // Uniform in +-sqrt(6 / (fan_in + fan_out)); zero bias.
  void init_xavier(RngStream& rng) {
    const double bound = std::sqrt(6.0 / static_cast<double>(in_features() + out_features()));
    for (auto& w : weight.value.values()) w = static_cast<T>((2.0 * rng.uniform_double() - 1.0) * bound);
    bias.value.fill(T(0));
  }

  BasicTensor<T> forward(const BasicTensor<T>& x) const {
    if (x.cols() != in_features()) {
      throw Error(ErrorCode::kDimension, "linear " + weight.name + ": input " + x.shape() + " vs weights " +
                                             weight.value.shape());
    }
    BasicTensor<T> out(x.rows(), out_features());
    for (size_t i = 0; i < out.rows(); ++i) {
      auto r = out.row(i);
      std::copy(bias.value.values().begin(), bias.value.values().end(), r.begin());
    }
    matmul_into(x, weight.value, out);
    return out;
  }

  // Accumulates dW and db; writes dx when requested.
  void backward(const BasicTensor<T>& x, const BasicTensor<T>& dy, BasicTensor<T>* dx) {
    matmul_tn_accumulate(x, dy, weight.grad);
    auto db = bias.grad.row(0);
    for (size_t i = 0; i < dy.rows(); ++i) {
      auto g = dy.row(i);
      for (size_t j = 0; j < g.size(); ++j) db[j] += g[j];
    }
    if (fault_active(FaultSite::kLinear)) {
      for (auto& g : weight.grad.values()) g *= T(1.05);
    }
    if (dx) {
      const BasicTensor<T> wt = transpose(weight.value);
      *dx = BasicTensor<T>(dy.rows(), in_features());
      matmul_into(dy, wt, *dx);
    }
  }

  ParamList<T> params() { return {&weight, &bias}; }

  ParamTensor<T> weight;
  ParamTensor<T> bias;
};

template <typename T>
struct NormStats {
  std::vector<T> running_mean;
  std::vector<T> running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;
};

template <typename T>
class BatchNorm {
 public:
  struct Cache {
    BasicTensor<T> xhat;
    std::vector<T> inv_std;
    std::vector<T> batch_mean;
    std::vector<T> batch_var;  // unbiased
    Mode mode = Mode::kEval;
  };

  BatchNorm() = default;
  BatchNorm(size_t width, const std::string& name)
      : gamma(BasicTensor<T>(1, width, T(1)), name + ".gamma"), beta(BasicTensor<T>(1, width), name + ".beta") {
    stats.running_mean.assign(width, T(0));
    stats.running_var.assign(width, T(1));
  }

  size_t width() const { return stats.running_mean.size(); }

  // Const in both modes; training-mode batch statistics land in the cache and
  // reach the running estimates through commit().
  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode, Cache* cache) const {
    const size_t b = x.rows(), f = x.cols();
    if (f != width()) throw Error(ErrorCode::kDimension, "batch norm: input " + x.shape() + " vs width " + std::to_string(width()));
    std::vector<T> mean(f, T(0)), inv_std(f);
    if (mode == Mode::kTrain) {
      if (b < 2) throw Error(ErrorCode::kDegenerateBatch, "batch norm needs at least 2 rows in training mode, got " + std::to_string(b));
      std::vector<T> var(f, T(0));
      for (size_t i = 0; i < b; ++i)
        for (size_t j = 0; j < f; ++j) mean[j] += x(i, j);
      for (auto& m : mean) m /= static_cast<T>(b);
      for (size_t i = 0; i < b; ++i)
        for (size_t j = 0; j < f; ++j) {
          const T d = x(i, j) - mean[j];
          var[j] += d * d;
        }
      for (size_t j = 0; j < f; ++j) {
        inv_std[j] = T(1) / std::sqrt(var[j] / static_cast<T>(b) + static_cast<T>(stats.epsilon));
      }
      if (cache) {
        cache->batch_mean = mean;
        cache->batch_var.resize(f);
        for (size_t j = 0; j < f; ++j) cache->batch_var[j] = var[j] / static_cast<T>(b - 1);
      }
    } else {
      for (size_t j = 0; j < f; ++j) {
        mean[j] = stats.running_mean[j];
        inv_std[j] = T(1) / std::sqrt(stats.running_var[j] + static_cast<T>(stats.epsilon));
      }
    }
    BasicTensor<T> xhat(b, f), y(b, f);
    const auto g = gamma.value.row(0), be = beta.value.row(0);
    for (size_t i = 0; i < b; ++i)
      for (size_t j = 0; j < f; ++j) {
        xhat(i, j) = (x(i, j) - mean[j]) * inv_std[j];
        y(i, j) = g[j] * xhat(i, j) + be[j];
      }
    if (cache) {
      cache->xhat = std::move(xhat);
      cache->inv_std = std::move(inv_std);
      cache->mode = mode;
    }
    return y;
  }

  void commit(const Cache& c) {
    if (c.mode != Mode::kTrain) return;
    const T mom = static_cast<T>(stats.momentum);
    for (size_t j = 0; j < width(); ++j) {
      stats.running_mean[j] = (T(1) - mom) * stats.running_mean[j] + mom * c.batch_mean[j];
      stats.running_var[j] = (T(1) - mom) * stats.running_var[j] + mom * c.batch_var[j];
    }
  }

  BasicTensor<T> backward(const BasicTensor<T>& dy, const Cache& c) {
    const size_t b = dy.rows(), f = dy.cols();
    auto dg = gamma.grad.row(0), db = beta.grad.row(0);
    const auto g = gamma.value.row(0);
    std::vector<T> sum_dxhat(f, T(0)), sum_dxhat_xhat(f, T(0));
    for (size_t i = 0; i < b; ++i)
      for (size_t j = 0; j < f; ++j) {
        dg[j] += dy(i, j) * c.xhat(i, j);
        db[j] += dy(i, j);
        const T dxh = dy(i, j) * g[j];
        sum_dxhat[j] += dxh;
        sum_dxhat_xhat[j] += dxh * c.xhat(i, j);
      }
    BasicTensor<T> dx(b, f);
    if (c.mode == Mode::kTrain) {
      const T inv_b = T(1) / static_cast<T>(b);
      for (size_t i = 0; i < b; ++i)
        for (size_t j = 0; j < f; ++j) {
          const T dxh = dy(i, j) * g[j];
          dx(i, j) = inv_b * c.inv_std[j] *
                     (static_cast<T>(b) * dxh - sum_dxhat[j] - c.xhat(i, j) * sum_dxhat_xhat[j]);
        }
    } else {
      for (size_t i = 0; i < b; ++i)
        for (size_t j = 0; j < f; ++j) dx(i, j) = dy(i, j) * g[j] * c.inv_std[j];
    }
    if (fault_active(FaultSite::kBatchNorm)) {
      for (auto& v : dx.values()) v *= T(1.05);
    }
    return dx;
  }

  ParamList<T> params() { return {&gamma, &beta}; }

  NormStats<T> stats;
  ParamTensor<T> gamma;
  ParamTensor<T> beta;
};

template <typename T>
class LayerNorm {
 public:
  struct Cache {
    BasicTensor<T> xhat;
    std::vector<T> inv_std;
  };

  LayerNorm() = default;
  LayerNorm(size_t width, const std::string& name, double eps = 1e-5)
      : epsilon(eps),
        gamma(BasicTensor<T>(1, width, T(1)), name + ".gamma"),
        beta(BasicTensor<T>(1, width), name + ".beta") {}

  BasicTensor<T> forward(const BasicTensor<T>& x, Cache* cache) const {
    const size_t b = x.rows(), f = x.cols();
    if (f != gamma.value.cols()) throw Error(ErrorCode::kDimension, "layer norm: input " + x.shape());
    BasicTensor<T> xhat(b, f), y(b, f);
    std::vector<T> inv_std(b);
    const auto g = gamma.value.row(0), be = beta.value.row(0);
    for (size_t i = 0; i < b; ++i) {
      const auto r = x.row(i);
      T mean = 0;
      for (T v : r) mean += v;
      mean /= static_cast<T>(f);
      T var = 0;
      for (T v : r) var += (v - mean) * (v - mean);
      var /= static_cast<T>(f);
      inv_std[i] = T(1) / std::sqrt(var + static_cast<T>(epsilon));
      for (size_t j = 0; j < f; ++j) {
        xhat(i, j) = (r[j] - mean) * inv_std[i];
        y(i, j) = g[j] * xhat(i, j) + be[j];
      }
    }
    if (cache) {
      cache->xhat = std::move(xhat);
      cache->inv_std = std::move(inv_std);
    }
    return y;
  }

  BasicTensor<T> backward(const BasicTensor<T>& dy, const Cache& c) {
    const size_t b = dy.rows(), f = dy.cols();
    auto dg = gamma.grad.row(0), db = beta.grad.row(0);
    const auto g = gamma.value.row(0);
    BasicTensor<T> dx(b, f);
    std::vector<T> dxh(f);
    for (size_t i = 0; i < b; ++i) {
      T s1 = 0, s2 = 0;
      for (size_t j = 0; j < f; ++j) {
        dg[j] += dy(i, j) * c.xhat(i, j);
        db[j] += dy(i, j);
        dxh[j] = dy(i, j) * g[j];
        s1 += dxh[j];
        s2 += dxh[j] * c.xhat(i, j);
      }
      const T scale = c.inv_std[i] / static_cast<T>(f);
      for (size_t j = 0; j < f; ++j)
        dx(i, j) = scale * (static_cast<T>(f) * dxh[j] - s1 - c.xhat(i, j) * s2);
    }
    if (fault_active(FaultSite::kLayerNorm)) {
      for (auto& v : dx.values()) v *= T(1.05);
    }
    return dx;
  }

  ParamList<T> params() { return {&gamma, &beta}; }

  double epsilon = 1e-5;
  ParamTensor<T> gamma;
  ParamTensor<T> beta;
};

template <typename T>
T leaky_relu(T x, T slope) {
  return x > T(0) ? x : slope * x;
}

// Inverted dropout: kept activations are scaled by 1/(1-p) so evaluation is
// the identity.
template <typename T>
BasicTensor<T> dropout_forward(const BasicTensor<T>& x, double p, Mode mode, RngStream* rng, std::vector<T>* scale_out) {
  if (mode == Mode::kEval || p == 0.0) {
    if (scale_out) scale_out->clear();
    return x;
  }
  BasicTensor<T> y(x.rows(), x.cols());
  std::vector<T> scale(x.size());
  const T keep_scale = static_cast<T>(1.0 / (1.0 - p));
  const float pf = static_cast<float>(p);
  for (size_t k = 0; k < x.size(); ++k) {
    scale[k] = rng->uniform_float() < pf ? T(0) : keep_scale;
    y.data()[k] = x.data()[k] * scale[k];
  }
  if (scale_out) *scale_out = std::move(scale);
  return y;
}

// `scale` as produced by dropout_forward; empty means identity.
template <typename T>
BasicTensor<T> dropout_backward(const BasicTensor<T>& dy, const std::vector<T>& scale) {
  if (scale.empty()) return dy;
  BasicTensor<T> d(dy.rows(), dy.cols());
  for (size_t k = 0; k < d.size(); ++k) d.data()[k] = dy.data()[k] * scale[k];
  return d;
}

template <typename T>
BasicTensor<T> leaky_relu_forward(const BasicTensor<T>& x, double slope) {
  const T s = static_cast<T>(slope);
  BasicTensor<T> y(x.rows(), x.cols());
  for (size_t k = 0; k < x.size(); ++k) y.data()[k] = leaky_relu(x.data()[k], s);
  return y;
}

template <typename T>
BasicTensor<T> leaky_relu_backward(const BasicTensor<T>& dy, const BasicTensor<T>& x, double slope) {
  const T s = static_cast<T>(slope);
  BasicTensor<T> d(dy.rows(), dy.cols());
  for (size_t k = 0; k < dy.size(); ++k) d.data()[k] = x.data()[k] > T(0) ? dy.data()[k] : s * dy.data()[k];
  return d;
}

// BatchNorm -> LayerNorm -> Dropout -> LeakyReLU, placed between two linear layers.
template <typename T>
class InterLayerBlock {
 public:
  struct Cache {
    typename BatchNorm<T>::Cache bn;
    typename LayerNorm<T>::Cache ln;
    std::vector<T> dropout_scale;
    BasicTensor<T> pre_activation;
  };

  InterLayerBlock() = default;
  InterLayerBlock(size_t width, const std::string& name, double dropout = 0.5, double slope = 0.01)
      : batch_norm(width, name + ".bn"), layer_norm(width, name + ".ln"), dropout_p(dropout), leaky_slope(slope) {
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw Error(ErrorCode::kValidation, "dropout_p must be in [0,1)");
    if (!(leaky_slope > 0.0 && leaky_slope < 1.0)) throw Error(ErrorCode::kValidation, "leaky_slope must be in (0,1)");
  }

  BasicTensor<T> forward(const BasicTensor<T>& x, Mode mode, RngStream* rng, Cache* cache) const {
    Cache local;
    Cache& c = cache ? *cache : local;
    BasicTensor<T> h = batch_norm.forward(x, mode, &c.bn);
    h = layer_norm.forward(h, &c.ln);
    h = dropout_forward(h, dropout_p, mode, rng, &c.dropout_scale);
    BasicTensor<T> y = leaky_relu_forward(h, leaky_slope);
    c.pre_activation = std::move(h);
    return y;
  }

  void commit(const Cache& c) { batch_norm.commit(c.bn); }

  BasicTensor<T> backward(const BasicTensor<T>& dy, const Cache& c) {
    BasicTensor<T> d = leaky_relu_backward(dy, c.pre_activation, leaky_slope);
    d = dropout_backward(d, c.dropout_scale);
    d = layer_norm.backward(d, c.ln);
    return batch_norm.backward(d, c.bn);
  }

  ParamList<T> params() { return {&batch_norm.gamma, &batch_norm.beta, &layer_norm.gamma, &layer_norm.beta}; }

  BatchNorm<T> batch_norm;
  LayerNorm<T> layer_norm;
  double dropout_p = 0.5;
  double leaky_slope = 0.01;
};

template <typename T>
BasicTensor<T> softmax_rows(const BasicTensor<T>& logits) {
  BasicTensor<T> p(logits.rows(), logits.cols());
  for (size_t i = 0; i < logits.rows(); ++i) {
    const auto r = logits.row(i);
    T mx = -std::numeric_limits<T>::infinity();
    for (T v : r) mx = std::max(mx, v);
    T sum = 0;
    auto out = p.row(i);
    for (size_t j = 0; j < r.size(); ++j) {
      out[j] = std::exp(r[j] - mx);
      sum += out[j];
    }
    for (auto& v : out) v /= sum;
  }
  return p;
}

template <typename T>
struct LossGrad {
  T loss = 0;
  BasicTensor<T> grad;
};

namespace detail {

// Adds -sum_c w_c t_c log p_c for one row and its gradient (scaled by `scale`).
template <typename T>
T weighted_ce_row(std::span<const T> logits, std::span<const T> target, std::span<const T> weights, T scale,
                  std::span<T> grad) {
  T mx = -std::numeric_limits<T>::infinity();
  for (T v : logits) mx = std::max(mx, v);
  T sum = 0;
  for (T v : logits) sum += std::exp(v - mx);
  const T log_z = mx + std::log(sum);
  T loss = 0, wt_sum = 0;
  for (size_t c = 0; c < logits.size(); ++c) {
    const T wt = weights[c] * target[c];
    if (wt != T(0)) loss -= wt * (logits[c] - log_z);
    wt_sum += wt;
  }
  for (size_t c = 0; c < logits.size(); ++c) {
    const T p = std::exp(logits[c] - log_z);
    grad[c] += scale * (p * wt_sum - weights[c] * target[c]);
  }
  return loss;
}

}  // namespace detail

// Mean over rows of -sum_c w_c t_c log softmax(logits)_c.
template <typename T>
LossGrad<T> weighted_cross_entropy(const BasicTensor<T>& logits, const BasicTensor<T>& targets,
                                   std::span<const T> weights) {
  require_same_shape(logits, targets, "weighted_cross_entropy");
  if (weights.size() != logits.cols()) throw Error(ErrorCode::kDimension, "weighted_cross_entropy: weight count mismatch");
  for (T w : weights) {
    if (!(w >= T(0)) || !std::isfinite(static_cast<double>(w)))
      throw Error(ErrorCode::kValidation, "weighted_cross_entropy: class weights must be finite and non-negative");
  }
  LossGrad<T> out{T(0), BasicTensor<T>(logits.rows(), logits.cols())};
  if (logits.rows() == 0) return out;
  const T scale = T(1) / static_cast<T>(logits.rows());
  for (size_t i = 0; i < logits.rows(); ++i) {
    T s = 0;
    for (T v : targets.row(i)) s += v;
    if (std::abs(static_cast<double>(s) - 1.0) > 1e-5)
      throw Error(ErrorCode::kValidation, "weighted_cross_entropy: target row " + std::to_string(i) +
                                              " sums to " + std::to_string(static_cast<double>(s)));
    out.loss += detail::weighted_ce_row<T>(logits.row(i), targets.row(i), weights, scale, out.grad.row(i));
  }
  out.loss *= scale;
  if (fault_active(FaultSite::kCrossEntropy)) {
    for (auto& g : out.grad.values()) g *= T(1.05);
  }
  return out;
}

// Hard-label cross entropy over a subset of rows; the gradient has the full
// logits shape with zeros outside `rows`. An empty subset contributes 0.
template <typename T>
LossGrad<T> cross_entropy_rows(const BasicTensor<T>& logits, std::span<const uint32_t> rows,
                               std::span<const int32_t> labels, std::span<const T> weights) {
  LossGrad<T> out{T(0), BasicTensor<T>(logits.rows(), logits.cols())};
  if (rows.empty()) return out;
  const T scale = T(1) / static_cast<T>(rows.size());
  std::vector<T> onehot(logits.cols());
  for (size_t k = 0; k < rows.size(); ++k) {
    std::fill(onehot.begin(), onehot.end(), T(0));
    onehot[static_cast<size_t>(labels[k])] = T(1);
    out.loss += detail::weighted_ce_row<T>(logits.row(rows[k]), onehot, weights, scale, out.grad.row(rows[k]));
  }
  out.loss *= scale;
  if (fault_active(FaultSite::kCrossEntropy)) {
    for (auto& g : out.grad.values()) g *= T(1.05);
  }
  return out;
}

template <typename T>
struct MseResult {
  T loss = 0;
  BasicTensor<T> grad_a;
  BasicTensor<T> grad_b;
};

template <typename T>
MseResult<T> mse(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  require_same_shape(a, b, "mse");
  MseResult<T> out{T(0), BasicTensor<T>(a.rows(), a.cols()), BasicTensor<T>(a.rows(), a.cols())};
  if (a.size() == 0) return out;
  const T inv_n = T(1) / static_cast<T>(a.size());
  T acc = 0;
  for (size_t k = 0; k < a.size(); ++k) {
    const T d = a.data()[k] - b.data()[k];
    acc += d * d;
    out.grad_a.data()[k] = T(2) * d * inv_n;
    out.grad_b.data()[k] = -out.grad_a.data()[k];
  }
  out.loss = acc * inv_n;
  if (fault_active(FaultSite::kMse)) {
    for (auto& g : out.grad_a.values()) g *= T(1.05);
  }
  return out;
}

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Bias-corrected Adam; gradients are zeroed afterwards.
template <typename T>
void adam_step(std::span<ParamTensor<T>* const> params, double lr, const AdamConfig& cfg = {}) {
  const T b1 = static_cast<T>(cfg.beta1), b2 = static_cast<T>(cfg.beta2);
  for (ParamTensor<T>* p : params) {
    ++p->step_count;
    const double t = static_cast<double>(p->step_count);
    const T c1 = static_cast<T>(1.0 / (1.0 - std::pow(cfg.beta1, t)));
    const T c2 = static_cast<T>(1.0 / (1.0 - std::pow(cfg.beta2, t)));
    const T step = static_cast<T>(lr), eps = static_cast<T>(cfg.epsilon);
    T* w = p->value.data();
    T* g = p->grad.data();
    T* m = p->adam_m.data();
    T* v = p->adam_v.data();
    for (size_t k = 0; k < p->value.size(); ++k) {
      m[k] = b1 * m[k] + (T(1) - b1) * g[k];
      v[k] = b2 * v[k] + (T(1) - b2) * g[k] * g[k];
      w[k] -= step * (m[k] * c1) / (std::sqrt(v[k] * c2) + eps);
      g[k] = T(0);
    }
  }
}

template <typename T>
void adam_step(const ParamList<T>& params, double lr, const AdamConfig& cfg = {}) {
  adam_step<T>(std::span<ParamTensor<T>* const>(params.data(), params.size()), lr, cfg);
}

template <typename T>
void zero_grads(const ParamList<T>& params) {
  for (auto* p : params) p->zero_grad();
}

}  // namespace linkdist
