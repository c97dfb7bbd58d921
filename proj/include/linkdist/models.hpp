#pragma once

#include <cstdint>
#include <vector>

#include "linkdist/graph.hpp"
#include "linkdist/nn.hpp"

namespace linkdist {

struct ModelDims {
  size_t in = 0;
  size_t hidden = 256;
  size_t classes = 0;
};

struct BlockSettings {
  double dropout = 0.5;
  double leaky_slope = 0.01;
  double bn_momentum = 0.1;
  double bn_epsilon = 1e-5;
  double ln_epsilon = 1e-5;
};

template <typename T>
InterLayerBlock<T> make_block(size_t width, const std::string& name, const BlockSettings& s) {
  InterLayerBlock<T> b(width, name, s.dropout, s.leaky_slope);
  b.batch_norm.stats.momentum = s.bn_momentum;
  b.batch_norm.stats.epsilon = s.bn_epsilon;
  b.layer_norm.epsilon = s.ln_epsilon;
  return b;
}

// Three linear layers with an inter-layer block after the first two. Used as
// the plain MLP and, given an adjacency, as the GCN (each layer then computes
// A_hat * H * W + b).
template <typename T>
class ThreeLayerNet {
 public:
  struct Cache {
    const SparseRows* adjacency = nullptr;
    BasicTensor<T> in1, in2, in3;
    typename InterLayerBlock<T>::Cache b1, b2;
  };

  ThreeLayerNet() = default;
  ThreeLayerNet(const ModelDims& d, const BlockSettings& s = {})
      : dims(d),
        settings(s),
        layer1(d.in, d.hidden, "layer1"),
        layer2(d.hidden, d.hidden, "layer2"),
        layer3(d.hidden, d.classes, "layer3"),
        block1(make_block<T>(d.hidden, "block1", s)),
        block2(make_block<T>(d.hidden, "block2", s)) {}

  void init(RngStream& rng) {
    layer1.init_xavier(rng);
    layer2.init_xavier(rng);
    layer3.init_xavier(rng);
  }

  BasicTensor<T> forward(const BasicTensor<T>& x, const SparseRows* adjacency, Mode mode, RngStream* rng,
                         Cache* cache) const {
    Cache local;
    Cache& c = cache ? *cache : local;
    c.adjacency = adjacency;
    c.in1 = adjacency ? spmm(*adjacency, x) : x;
    BasicTensor<T> h = block1.forward(layer1.forward(c.in1), mode, rng, &c.b1);
    c.in2 = adjacency ? spmm(*adjacency, h) : std::move(h);
    h = block2.forward(layer2.forward(c.in2), mode, rng, &c.b2);
    c.in3 = adjacency ? spmm(*adjacency, h) : std::move(h);
    return layer3.forward(c.in3);
  }

  void commit(const Cache& c) {
    block1.commit(c.b1);
    block2.commit(c.b2);
  }

  void backward(const Cache& c, const BasicTensor<T>& dlogits) {
    BasicTensor<T> d;
    layer3.backward(c.in3, dlogits, &d);
    if (c.adjacency) d = spmm_transposed(*c.adjacency, d);
    d = block2.backward(d, c.b2);
    BasicTensor<T> d2;
    layer2.backward(c.in2, d, &d2);
    if (c.adjacency) d2 = spmm_transposed(*c.adjacency, d2);
    d2 = block1.backward(d2, c.b1);
    layer1.backward(c.in1, d2, nullptr);
  }

  ParamList<T> params() {
    ParamList<T> out;
    for (auto* p : layer1.params()) out.push_back(p);
    for (auto* p : block1.params()) out.push_back(p);
    for (auto* p : layer2.params()) out.push_back(p);
    for (auto* p : block2.params()) out.push_back(p);
    for (auto* p : layer3.params()) out.push_back(p);
    return out;
  }

  ModelDims dims;
  BlockSettings settings;
  Linear<T> layer1, layer2, layer3;
  InterLayerBlock<T> block1, block2;
};

template <typename T>
using MLPModel = ThreeLayerNet<T>;
template <typename T>
using GCNModel = ThreeLayerNet<T>;

template <typename T>
BasicTensor<T> mlp_forward(const MLPModel<T>& m, const BasicTensor<T>& x, Mode mode, RngStream* rng,
                           typename MLPModel<T>::Cache* cache = nullptr) {
  return m.forward(x, nullptr, mode, rng, cache);
}

template <typename T>
BasicTensor<T> gcn_forward(const GCNModel<T>& m, const SparseRows& adjacency, const BasicTensor<T>& features, Mode mode,
                           RngStream* rng, typename GCNModel<T>::Cache* cache = nullptr) {
  if (adjacency.n != features.rows())
    throw Error(ErrorCode::kDimension, "gcn_forward: adjacency has " + std::to_string(adjacency.n) + " nodes, features " +
                                           features.shape());
  return m.forward(features, &adjacency, mode, rng, cache);
}

template <typename T>
struct ForkedOutput {
  BasicTensor<T> z;  // logits of the node's own label
  BasicTensor<T> s;  // logits of an adjacent node's label
};

// Shared hidden trunk feeding an output head (z) and an inference head (s).
template <typename T>
class ForkedMLP {
 public:
  struct Cache {
    BasicTensor<T> x, h1, h;
    typename InterLayerBlock<T>::Cache b1, b2;
  };

  ForkedMLP() = default;
  ForkedMLP(const ModelDims& d, const BlockSettings& s = {})
      : dims(d),
        settings(s),
        hidden1(d.in, d.hidden, "hidden1"),
        hidden2(d.hidden, d.hidden, "hidden2"),
        output_head(d.hidden, d.classes, "output_head"),
        inference_head(d.hidden, d.classes, "inference_head"),
        block1(make_block<T>(d.hidden, "block1", s)),
        block2(make_block<T>(d.hidden, "block2", s)) {}

  void init(RngStream& rng) {
    hidden1.init_xavier(rng);
    hidden2.init_xavier(rng);
    output_head.init_xavier(rng);
    inference_head.init_xavier(rng);
  }

  ForkedOutput<T> forward(const BasicTensor<T>& x, Mode mode, RngStream* rng, Cache* cache) const {
    Cache local;
    Cache& c = cache ? *cache : local;
    c.x = x;
    c.h1 = block1.forward(hidden1.forward(x), mode, rng, &c.b1);
    c.h = block2.forward(hidden2.forward(c.h1), mode, rng, &c.b2);
    return {output_head.forward(c.h), inference_head.forward(c.h)};
  }

  // Eval-mode forward without keeping intermediates.
  ForkedOutput<T> infer(const BasicTensor<T>& x) const {
    const BasicTensor<T> h = block2.forward(hidden2.forward(block1.forward(hidden1.forward(x), Mode::kEval, nullptr, nullptr)),
                                            Mode::kEval, nullptr, nullptr);
    return {output_head.forward(h), inference_head.forward(h)};
  }

  void commit(const Cache& c) {
    block1.commit(c.b1);
    block2.commit(c.b2);
  }

  void backward(const Cache& c, const BasicTensor<T>& dz, const BasicTensor<T>& ds) {
    BasicTensor<T> dh, dh_s;
    output_head.backward(c.h, dz, &dh);
    inference_head.backward(c.h, ds, &dh_s);
    for (size_t k = 0; k < dh.size(); ++k) dh.data()[k] += dh_s.data()[k];
    dh = block2.backward(dh, c.b2);
    BasicTensor<T> dh1;
    hidden2.backward(c.h1, dh, &dh1);
    dh1 = block1.backward(dh1, c.b1);
    hidden1.backward(c.x, dh1, nullptr);
  }

  ParamList<T> params() {
    ParamList<T> out;
    for (auto* p : hidden1.params()) out.push_back(p);
    for (auto* p : block1.params()) out.push_back(p);
    for (auto* p : hidden2.params()) out.push_back(p);
    for (auto* p : block2.params()) out.push_back(p);
    for (auto* p : output_head.params()) out.push_back(p);
    for (auto* p : inference_head.params()) out.push_back(p);
    return out;
  }

  ModelDims dims;
  BlockSettings settings;
  Linear<T> hidden1, hidden2, output_head, inference_head;
  InterLayerBlock<T> block1, block2;
};

template <typename T>
ForkedOutput<T> forked_forward(const ForkedMLP<T>& m, const BasicTensor<T>& x, Mode mode, RngStream* rng,
                               typename ForkedMLP<T>::Cache* cache = nullptr) {
  return m.forward(x, mode, rng, cache);
}

// Row-wise argmax; ties go to the lowest class id.
std::vector<int32_t> argmax_rows(const Tensor2& logits);

// Eval-mode inference over all rows in bounded chunks.
Tensor2 infer_logits(const MLPModel<float>& m, const Tensor2& x);
ForkedOutput<float> infer_forked(const ForkedMLP<float>& m, const Tensor2& x);

// Non-message-passing prediction: argmax of z. Takes no graph.
std::vector<int32_t> predict_mlp_mode(const ForkedMLP<float>& m, const Tensor2& x);

// y_hat_i = z_i + alpha * sum_{j in N(i)} s_j, neighbors summed in ascending id order.
Tensor2 combine_mp(const ForkedOutput<float>& out, const Graph& g, double alpha);
std::vector<int32_t> predict_mp_mode(const ForkedMLP<float>& m, const Graph& g, double alpha);

}  // namespace linkdist
