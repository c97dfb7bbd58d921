#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "linkdist/rng.hpp"
#include "linkdist/tensor.hpp"

namespace linkdist {

struct Edge {
  uint32_t u = 0;
  uint32_t v = 0;
  bool operator==(const Edge&) const = default;
};

// Undirected attributed graph. Immutable after construction; the CSR
// neighbor lists are sorted by ascending node id.
class Graph {
 public:
  Graph() = default;
  Graph(std::string name, size_t num_classes, Tensor2 features, std::vector<int32_t> labels, std::vector<Edge> edges);

  Graph(const Graph& o);
  Graph& operator=(const Graph& o);
  Graph(Graph&&) noexcept;
  Graph& operator=(Graph&&) noexcept;

  const std::string& name() const { return name_; }
  size_t num_nodes() const { return features_.rows(); }
  size_t num_features() const { return features_.cols(); }
  size_t num_classes() const { return num_classes_; }
  size_t num_edges() const { return edges_.size(); }
  bool has_labels() const { return !labels_.empty(); }

  const Tensor2& features() const { return features_; }
  const std::vector<int32_t>& labels() const { return labels_; }

  // Edge-list and neighbor accessors are counted so tests can prove a code
  // path never looked at the graph structure.
  std::span<const Edge> edges() const {
    adjacency_reads_.fetch_add(1, std::memory_order_relaxed);
    return edges_;
  }
  std::span<const uint32_t> neighbors(uint32_t node) const {
    adjacency_reads_.fetch_add(1, std::memory_order_relaxed);
    return {neighbors_.data() + offsets_[node], neighbors_.data() + offsets_[node + 1]};
  }
  size_t degree(uint32_t node) const { return offsets_[node + 1] - offsets_[node]; }

  uint64_t adjacency_reads() const { return adjacency_reads_.load(); }
  void reset_adjacency_reads() const { adjacency_reads_.store(0); }

 private:
  void build_csr();

  std::string name_;
  size_t num_classes_ = 0;
  Tensor2 features_;
  std::vector<int32_t> labels_;
  std::vector<Edge> edges_;
  std::vector<size_t> offsets_{0};
  std::vector<uint32_t> neighbors_;
  mutable std::atomic<uint64_t> adjacency_reads_{0};
};

enum class Role : uint8_t { kUnused = 0, kTrain = 1, kVal = 2, kTest = 3 };

// One role per node keeps the three sets disjoint by construction.
struct SplitMasks {
  std::vector<Role> roles;

  bool is_train(size_t i) const { return roles[i] == Role::kTrain; }
  bool is_val(size_t i) const { return roles[i] == Role::kVal; }
  bool is_test(size_t i) const { return roles[i] == Role::kTest; }
  bool is_eval(size_t i) const { return is_val(i) || is_test(i); }
  std::vector<uint32_t> nodes(Role r) const;
  size_t count(Role r) const;
};

enum class Setting { kTransductive, kInductive };

SplitMasks make_semi_split(const Graph& g, RngStream& rng, size_t per_class = 20, size_t val = 500, size_t test = 1000);
SplitMasks make_full_split(const Graph& g, RngStream& rng);
void validate_masks(const Graph& g, const SplitMasks& masks);

// What a trainer is allowed to see. Features and labels are only reachable
// through the counted accessors below.
class TrainView {
 public:
  TrainView(const Graph& g, const SplitMasks& masks, Setting setting);

  const Graph& graph() const { return *graph_; }
  const SplitMasks& masks() const { return *masks_; }
  Setting setting() const { return setting_; }
  size_t num_classes() const { return graph_->num_classes(); }
  size_t num_features() const { return graph_->num_features(); }

  bool node_visible(uint32_t i) const { return visible_nodes_[i] != 0; }
  const std::vector<uint32_t>& visible_node_ids() const { return visible_node_ids_; }
  // Indices into graph().edges().
  const std::vector<uint32_t>& visible_edges() const { return visible_edges_; }
  Edge edge(uint32_t index) const { return edges_[index]; }

  bool is_labelled(uint32_t i) const { return masks_->is_train(i); }
  // Label of a training node. Any other request is counted as a leak and
  // rejected.
  int32_t train_label(uint32_t i) const;
  Tensor2 gather_features(std::span<const uint32_t> ids) const;

  uint64_t eval_label_reads() const { return eval_label_reads_; }
  uint64_t eval_feature_reads() const { return eval_feature_reads_; }
  uint64_t hidden_feature_reads() const { return hidden_feature_reads_; }

 private:
  const Graph* graph_;
  const SplitMasks* masks_;
  Setting setting_;
  std::span<const Edge> edges_;
  std::vector<uint8_t> visible_nodes_;
  std::vector<uint32_t> visible_node_ids_;
  std::vector<uint32_t> visible_edges_;
  mutable uint64_t eval_label_reads_ = 0;
  mutable uint64_t eval_feature_reads_ = 0;
  mutable uint64_t hidden_feature_reads_ = 0;
};

struct AlphaSchedule {
  uint64_t n_e = 0;
  uint64_t e_total = 0;
  double alpha = 0.0;
};

AlphaSchedule alpha_schedule(const TrainView& view);

struct ClassWeights {
  std::vector<double> y_n;
  std::vector<double> y_e;
  std::vector<float> weights;
  std::vector<uint32_t> floored_classes;
};

ClassWeights class_weights(const TrainView& view);

// Row-stochastic (D + I)^-1 (A + I) in CSR form.
struct SparseRows {
  size_t n = 0;
  std::vector<size_t> offsets;
  std::vector<uint32_t> cols;
  std::vector<float> vals;
};

SparseRows normalized_adjacency(size_t num_nodes, std::span<const Edge> edges);
inline SparseRows normalized_adjacency(const Graph& g) { return normalized_adjacency(g.num_nodes(), g.edges()); }

template <typename T>
BasicTensor<T> spmm(const SparseRows& a, const BasicTensor<T>& x) {
  if (a.n != x.rows())
    throw Error(ErrorCode::kDimension, "adjacency built for " + std::to_string(a.n) + " nodes applied to " + x.shape());
  BasicTensor<T> out(x.rows(), x.cols());
  for (size_t i = 0; i < a.n; ++i) {
    T* __restrict o = out.row(i).data();
    for (size_t k = a.offsets[i]; k < a.offsets[i + 1]; ++k) {
      const T w = static_cast<T>(a.vals[k]);
      const T* __restrict xr = x.row(a.cols[k]).data();
      for (size_t j = 0; j < x.cols(); ++j) o[j] += w * xr[j];
    }
  }
  return out;
}

// out = A^T x.
template <typename T>
BasicTensor<T> spmm_transposed(const SparseRows& a, const BasicTensor<T>& x) {
  if (a.n != x.rows()) throw Error(ErrorCode::kDimension, "adjacency transpose size mismatch");
  BasicTensor<T> out(x.rows(), x.cols());
  for (size_t i = 0; i < a.n; ++i) {
    const T* __restrict xr = x.row(i).data();
    for (size_t k = a.offsets[i]; k < a.offsets[i + 1]; ++k) {
      const T w = static_cast<T>(a.vals[k]);
      T* __restrict o = out.row(a.cols[k]).data();
      for (size_t j = 0; j < x.cols(); ++j) o[j] += w * xr[j];
    }
  }
  return out;
}

double average_degree(const Graph& g);
size_t epoch_budget(const Graph& g, size_t base = 200);

std::vector<std::pair<uint32_t, uint32_t>> sample_negative_pairs(const TrainView& view, size_t count, RngStream& rng);

struct SbmParams {
  size_t blocks = 2;
  size_t nodes_per_block = 100;
  double p_in = 0.1;
  double p_out = 0.01;
  size_t feat_dim = 16;
  double feat_noise = 1.0;
};

Graph generate_sbm(const SbmParams& params, RngStream& rng, std::string name = "sbm");

}  // namespace linkdist
