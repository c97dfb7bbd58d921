#include <cmath>

#include "linkdist/gradcheck.hpp"
#include "linkdist/graph.hpp"
#include "linkdist/losses.hpp"
#include "linkdist/models.hpp"

namespace linkdist {

namespace {

using T2 = Tensor2d;
using P = ParamTensor<double>;

constexpr double kStrict = 1e-4;  // single linear layer, CE, MSE
constexpr double kLoose = 1e-3;   // everything else

T2 random_tensor(RngStream& rng, size_t r, size_t c, double scale = 1.0) {
  T2 t(r, c);
  for (auto& v : t.values()) v = scale * rng.normal();
  return t;
}

double dot(const T2& a, const T2& b) {
  double s = 0.0;
  for (size_t k = 0; k < a.size(); ++k) s += a.data()[k] * b.data()[k];
  return s;
}

void accumulate(P& p, const T2& g) {
  for (size_t k = 0; k < g.size(); ++k) p.grad.data()[k] += g.data()[k];
}

// Gammas away from 1 and non-zero betas, so those paths carry signal.
void perturb_affine(RngStream& rng, P& gamma, P& beta) {
  for (auto& v : gamma.value.values()) v = 1.0 + 0.3 * rng.normal();
  for (auto& v : beta.value.values()) v = 0.3 * rng.normal();
}

template <typename Net>
void perturb_blocks(RngStream& rng, Net& m) {
  for (auto* b : {&m.block1, &m.block2}) {
    perturb_affine(rng, b->batch_norm.gamma, b->batch_norm.beta);
    perturb_affine(rng, b->layer_norm.gamma, b->layer_norm.beta);
  }
}

template <typename Net>
void perturb_biases(RngStream& rng, Net& m) {
  for (auto* p : m.params())
    if (p->name.ends_with(".bias")) p->value = random_tensor(rng, 1, p->value.cols(), 0.1);
}

std::vector<int32_t> random_labels(RngStream& rng, size_t n, size_t classes) {
  std::vector<int32_t> y(n);
  for (auto& v : y) v = static_cast<int32_t>(rng.uniform_index(classes));
  return y;
}

std::vector<uint32_t> all_rows(size_t n) {
  std::vector<uint32_t> r(n);
  for (size_t i = 0; i < n; ++i) r[i] = static_cast<uint32_t>(i);
  return r;
}

LabelledRows labelled(RngStream& rng, size_t classes, std::vector<uint32_t> rows) {
  LabelledRows l;
  l.rows = std::move(rows);
  l.labels = random_labels(rng, l.rows.size(), classes);
  return l;
}

GradCheckReport check(const LossClosure& fn, const ParamList<double>& params, double tol) {
  GradCheckOptions opts;
  opts.tolerance = tol;
  return grad_check(fn, params, opts);
}

constexpr uint64_t kDropoutStream = 0xD0;

}  // namespace

std::optional<FaultSite> parse_fault_site(std::string_view name) {
  if (name == "none") return FaultSite::kNone;
  if (name == "linear") return FaultSite::kLinear;
  if (name == "batch_norm") return FaultSite::kBatchNorm;
  if (name == "layer_norm") return FaultSite::kLayerNorm;
  if (name == "cross_entropy") return FaultSite::kCrossEntropy;
  if (name == "mse") return FaultSite::kMse;
  return std::nullopt;
}

std::vector<ComponentReport> run_gradcheck_suite(uint64_t seed, FaultSite fault) {
  struct FaultScope {
    explicit FaultScope(FaultSite f) { inject_fault(f); }
    ~FaultScope() { inject_fault(FaultSite::kNone); }
  } scope(fault);

  RngStream rng(seed, 0x6C);
  std::vector<ComponentReport> out;
  const size_t batch = 8, width = 6, classes = 4;

  {
    Linear<double> lin(7, 4, "linear");
    lin.init_xavier(rng);
    lin.bias.value = random_tensor(rng, 1, 4, 0.5);
    P x(random_tensor(rng, 5, 7), "input");
    const T2 r = random_tensor(rng, 5, 4);
    auto fn = [&](bool grads) {
      const double loss = dot(lin.forward(x.value), r);
      if (grads) {
        T2 dx;
        lin.backward(x.value, r, &dx);
        accumulate(x, dx);
      }
      return loss;
    };
    out.push_back({"linear", check(fn, {&lin.weight, &lin.bias, &x}, kStrict)});
  }

  for (Mode mode : {Mode::kTrain, Mode::kEval}) {
    BatchNorm<double> bn(width, "batch_norm");
    perturb_affine(rng, bn.gamma, bn.beta);
    for (auto& v : bn.stats.running_mean) v = rng.normal();
    for (auto& v : bn.stats.running_var) v = 0.5 + rng.uniform_double();
    P x(random_tensor(rng, batch, width, 2.0), "input");
    const T2 r = random_tensor(rng, batch, width);
    auto fn = [&](bool grads) {
      BatchNorm<double>::Cache c;
      const double loss = dot(bn.forward(x.value, mode, &c), r);
      if (grads) accumulate(x, bn.backward(r, c));
      return loss;
    };
    const std::string name = mode == Mode::kTrain ? "batch_norm_train" : "batch_norm_eval";
    out.push_back({name, check(fn, {&bn.gamma, &bn.beta, &x}, kLoose)});
  }

  {
    LayerNorm<double> ln(width, "layer_norm");
    perturb_affine(rng, ln.gamma, ln.beta);
    P x(random_tensor(rng, batch, width, 2.0), "input");
    const T2 r = random_tensor(rng, batch, width);
    auto fn = [&](bool grads) {
      LayerNorm<double>::Cache c;
      const double loss = dot(ln.forward(x.value, &c), r);
      if (grads) accumulate(x, ln.backward(r, c));
      return loss;
    };
    out.push_back({"layer_norm", check(fn, {&ln.gamma, &ln.beta, &x}, kLoose)});
  }

  {
    P x(random_tensor(rng, batch, width), "input");
    const T2 r = random_tensor(rng, batch, width);
    auto fn = [&](bool grads) {
      RngStream drop(seed, kDropoutStream);  // same mask on every evaluation
      std::vector<double> scale;
      const double loss = dot(dropout_forward(x.value, 0.5, Mode::kTrain, &drop, &scale), r);
      if (grads) accumulate(x, dropout_backward(r, scale));
      return loss;
    };
    out.push_back({"dropout", check(fn, {&x}, kLoose)});
  }

  {
    P x(random_tensor(rng, batch, width), "input");
    // Keep inputs clear of the kink at 0.
    for (auto& v : x.value.values()) v = v >= 0 ? v + 0.1 : v - 0.1;
    const T2 r = random_tensor(rng, batch, width);
    auto fn = [&](bool grads) {
      const double loss = dot(leaky_relu_forward(x.value, 0.01), r);
      if (grads) accumulate(x, leaky_relu_backward(r, x.value, 0.01));
      return loss;
    };
    out.push_back({"leaky_relu", check(fn, {&x}, kLoose)});
  }

  {
    InterLayerBlock<double> block(width, "inter_layer_block");
    perturb_affine(rng, block.batch_norm.gamma, block.batch_norm.beta);
    perturb_affine(rng, block.layer_norm.gamma, block.layer_norm.beta);
    P x(random_tensor(rng, batch, width, 2.0), "input");
    const T2 r = random_tensor(rng, batch, width);
    auto fn = [&](bool grads) {
      RngStream drop(seed, kDropoutStream);
      InterLayerBlock<double>::Cache c;
      const double loss = dot(block.forward(x.value, Mode::kTrain, &drop, &c), r);
      if (grads) accumulate(x, block.backward(r, c));
      return loss;
    };
    ParamList<double> params = block.params();
    params.push_back(&x);
    out.push_back({"inter_layer_block", check(fn, params, kLoose)});
  }

  {
    P logits(random_tensor(rng, batch, classes, 2.0), "logits");
    const T2 targets = softmax_rows(random_tensor(rng, batch, classes, 2.0));
    const std::vector<double> w{0.5, 1.5, 1.0, 2.0};
    auto fn = [&](bool grads) {
      const auto r = weighted_cross_entropy<double>(logits.value, targets, w);
      if (grads) accumulate(logits, r.grad);
      return r.loss;
    };
    out.push_back({"weighted_cross_entropy", check(fn, {&logits}, kStrict)});
  }

  {
    P a(random_tensor(rng, batch, classes), "a"), b(random_tensor(rng, batch, classes), "b");
    auto fn = [&](bool grads) {
      const auto r = mse(a.value, b.value);
      if (grads) {
        accumulate(a, r.grad_a);
        accumulate(b, r.grad_b);
      }
      return r.loss;
    };
    out.push_back({"mse", check(fn, {&a, &b}, kStrict)});
  }

  {
    Linear<double> lin(width, classes, "linear_ce");
    lin.init_xavier(rng);
    const T2 x = random_tensor(rng, batch, width);
    const std::vector<uint32_t> rows{0, 2, 3, 5, 7};
    const auto labels = random_labels(rng, rows.size(), classes);
    const std::vector<double> w{0.5, 1.5, 1.0, 2.0};
    auto fn = [&](bool grads) {
      const auto r = cross_entropy_rows<double>(lin.forward(x), rows, labels, w);
      if (grads) lin.backward(x, r.grad, nullptr);
      return r.loss;
    };
    out.push_back({"linear_cross_entropy", check(fn, lin.params(), kLoose)});
  }

  const ModelDims dims{width, 8, 3};
  const std::vector<double> unit(dims.classes, 1.0);

  {
    ThreeLayerNet<double> net(dims);
    net.init(rng);
    perturb_blocks(rng, net);
    perturb_biases(rng, net);
    const T2 x = random_tensor(rng, 10, width);
    const auto labels = random_labels(rng, 10, dims.classes);
    auto fn = [&](bool grads) {
      RngStream drop(seed, kDropoutStream);
      ThreeLayerNet<double>::Cache c;
      const T2 logits = net.forward(x, nullptr, Mode::kTrain, &drop, &c);
      const auto r = cross_entropy_rows<double>(logits, all_rows(10), labels, unit);
      if (grads) net.backward(c, r.grad);
      return r.loss;
    };
    out.push_back({"mlp", check(fn, net.params(), kLoose)});
  }

  {
    ThreeLayerNet<double> net(dims);
    net.init(rng);
    perturb_blocks(rng, net);
    perturb_biases(rng, net);
    const size_t n = 10;
    std::vector<Edge> edges;
    for (uint32_t u = 0; u < n; ++u)
      for (uint32_t v = u + 1; v < n; ++v)
        if (rng.uniform_double() < 0.3) edges.push_back({u, v});
    const SparseRows adj = normalized_adjacency(n, edges);
    const T2 x = random_tensor(rng, n, width);
    const auto labels = random_labels(rng, n, dims.classes);
    const std::vector<uint32_t> train{0, 1, 4, 6, 9};
    std::vector<int32_t> train_labels;
    for (uint32_t i : train) train_labels.push_back(labels[i]);
    auto fn = [&](bool grads) {
      RngStream drop(seed, kDropoutStream);
      ThreeLayerNet<double>::Cache c;
      const T2 logits = gcn_forward(net, adj, x, Mode::kTrain, &drop, &c);
      const auto r = cross_entropy_rows<double>(logits, train, train_labels, unit);
      if (grads) net.backward(c, r.grad);
      return r.loss;
    };
    out.push_back({"gcn", check(fn, net.params(), kLoose)});
  }

  {
    ForkedMLP<double> net(dims);
    net.init(rng);
    perturb_blocks(rng, net);
    perturb_biases(rng, net);
    const T2 x = random_tensor(rng, batch, width);
    const T2 target = random_tensor(rng, batch, dims.classes);
    const auto yz = random_labels(rng, batch, dims.classes), ys = random_labels(rng, batch, dims.classes);
    auto fn = [&](bool grads) {
      RngStream drop(seed, kDropoutStream);
      ForkedMLP<double>::Cache c;
      const auto o = net.forward(x, Mode::kTrain, &drop, &c);
      const auto cz = cross_entropy_rows<double>(o.z, all_rows(batch), yz, unit);
      const auto cs = cross_entropy_rows<double>(o.s, all_rows(batch), ys, unit);
      const auto m = mse(o.s, target);
      if (grads) {
        T2 ds = cs.grad;
        for (size_t k = 0; k < ds.size(); ++k) ds.data()[k] += 0.3 * m.grad_a.data()[k];
        net.backward(c, cz.grad, ds);
      }
      return cz.loss + cs.loss + 0.3 * m.loss;
    };
    out.push_back({"forked_mlp", check(fn, net.params(), kLoose)});
  }

  const std::vector<double> weights{0.5, 1.5, 1.0};
  const double alpha = 0.6;

  {
    ForkedMLP<double> net(dims);
    net.init(rng);
    perturb_blocks(rng, net);
    perturb_biases(rng, net);
    const T2 xi = random_tensor(rng, batch, width), xj = random_tensor(rng, batch, width);
    const LabelledRows li = labelled(rng, dims.classes, {0, 2, 3, 5});
    const LabelledRows lj = labelled(rng, dims.classes, {1, 2, 6});
    auto fn = [&](bool grads) {
      RngStream drop(seed, kDropoutStream);
      ForkedMLP<double>::Cache ci, cj;
      const auto fi = net.forward(xi, Mode::kTrain, &drop, &ci);
      const auto fj = net.forward(xj, Mode::kTrain, &drop, &cj);
      const auto pl = linkdist_pair_loss<double>(fi.z, fi.s, fj.z, fj.s, li, lj, weights, alpha);
      if (grads) {
        net.backward(ci, pl.i.dz, pl.i.ds);
        net.backward(cj, pl.j.dz, pl.j.ds);
      }
      return pl.ce + alpha * pl.mse;
    };
    out.push_back({"linkdist_loss", check(fn, net.params(), kLoose)});
  }

  {
    ForkedMLP<double> net(dims);
    net.init(rng);
    perturb_blocks(rng, net);
    perturb_biases(rng, net);
    const T2 xi = random_tensor(rng, batch, width), xj = random_tensor(rng, batch, width);
    const T2 xa = random_tensor(rng, batch, width), xk = random_tensor(rng, batch, width);
    const LabelledRows li = labelled(rng, dims.classes, {0, 2, 3, 5});
    const LabelledRows lj = labelled(rng, dims.classes, {1, 2, 6});
    const LabelledRows la = labelled(rng, dims.classes, {4, 7});
    const LabelledRows lk = labelled(rng, dims.classes, {0, 3});
    // The repulsion targets are constants of the objective, so they are
    // frozen at the starting weights rather than recomputed per probe.
    T2 pa, pk;
    {
      RngStream drop(seed, kDropoutStream);
      net.forward(xi, Mode::kTrain, &drop, nullptr);
      net.forward(xj, Mode::kTrain, &drop, nullptr);
      pa = softmax_rows(net.forward(xa, Mode::kTrain, &drop, nullptr).z);
      pk = softmax_rows(net.forward(xk, Mode::kTrain, &drop, nullptr).z);
    }
    auto fn = [&](bool grads) {
      RngStream drop(seed, kDropoutStream);
      ForkedMLP<double>::Cache ci, cj, ca, ck;
      const auto fi = net.forward(xi, Mode::kTrain, &drop, &ci);
      const auto fj = net.forward(xj, Mode::kTrain, &drop, &cj);
      const auto fa = net.forward(xa, Mode::kTrain, &drop, &ca);
      const auto fk = net.forward(xk, Mode::kTrain, &drop, &ck);
      const auto pl = linkdist_pair_loss<double>(fi.z, fi.s, fj.z, fj.s, li, lj, weights, alpha);
      const auto nl = colinkdist_negative_loss<double>(fa.z, fa.s, fk.z, fk.s, pa, pk, la, lk, alpha);
      if (nl.neg_ce >= repulsion_ce_cap(dims.classes) || nl.neg_mse >= repulsion_mse_cap(dims.classes))
        throw Error(ErrorCode::kValidation, "gradcheck instance hit a repulsion clamp");
      if (grads) {
        net.backward(ci, pl.i.dz, pl.i.ds);
        net.backward(cj, pl.j.dz, pl.j.ds);
        net.backward(ca, nl.a.dz, nl.a.ds);
        net.backward(ck, nl.k.dz, nl.k.ds);
      }
      return pl.ce + alpha * pl.mse + nl.ce - nl.neg_ce - alpha * nl.neg_mse;
    };
    out.push_back({"colinkdist_loss", check(fn, net.params(), kLoose)});
  }
  return out;
}

}  // namespace linkdist
