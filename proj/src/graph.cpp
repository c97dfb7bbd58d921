#include "linkdist/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <unordered_set>

namespace linkdist {

namespace {

uint64_t pair_key(uint32_t a, uint32_t b) {
  if (a > b) std::swap(a, b);
  return (static_cast<uint64_t>(a) << 32) | b;
}

std::string pair_string(const Edge& e) {
  return "(" + std::to_string(e.u) + ", " + std::to_string(e.v) + ")";
}

}  // namespace

Graph::Graph(std::string name, size_t num_classes, Tensor2 features, std::vector<int32_t> labels,
             std::vector<Edge> edges)
    : name_(std::move(name)),
      num_classes_(num_classes),
      features_(std::move(features)),
      labels_(std::move(labels)),
      edges_(std::move(edges)) {
  const size_t n = features_.rows();
  if (!labels_.empty()) {
    if (labels_.size() != n)
      throw Error(ErrorCode::kValidation, "label count " + std::to_string(labels_.size()) + " != num_nodes " + std::to_string(n));
    for (size_t i = 0; i < n; ++i) {
      if (labels_[i] < 0 || static_cast<size_t>(labels_[i]) >= num_classes_)
        throw Error(ErrorCode::kValidation, "node " + std::to_string(i) + " has label " + std::to_string(labels_[i]) +
                                                " outside [0, " + std::to_string(num_classes_) + ")");
    }
  }
  std::unordered_set<uint64_t> seen;
  seen.reserve(edges_.size() * 2);
  for (const Edge& e : edges_) {
    if (e.u >= n || e.v >= n) throw Error(ErrorCode::kValidation, "edge " + pair_string(e) + " has an endpoint >= num_nodes");
    if (e.u == e.v) throw Error(ErrorCode::kValidation, "self-loop edge " + pair_string(e));
    if (!seen.insert(pair_key(e.u, e.v)).second) throw Error(ErrorCode::kValidation, "duplicate edge " + pair_string(e));
  }
  build_csr();
}

Graph::Graph(const Graph& o)
    : name_(o.name_),
      num_classes_(o.num_classes_),
      features_(o.features_),
      labels_(o.labels_),
      edges_(o.edges_),
      offsets_(o.offsets_),
      neighbors_(o.neighbors_) {}

Graph& Graph::operator=(const Graph& o) {
  if (this != &o) {
    Graph tmp(o);
    *this = std::move(tmp);
  }
  return *this;
}

Graph::Graph(Graph&& o) noexcept
    : name_(std::move(o.name_)),
      num_classes_(o.num_classes_),
      features_(std::move(o.features_)),
      labels_(std::move(o.labels_)),
      edges_(std::move(o.edges_)),
      offsets_(std::move(o.offsets_)),
      neighbors_(std::move(o.neighbors_)) {}

Graph& Graph::operator=(Graph&& o) noexcept {
  name_ = std::move(o.name_);
  num_classes_ = o.num_classes_;
  features_ = std::move(o.features_);
  labels_ = std::move(o.labels_);
  edges_ = std::move(o.edges_);
  offsets_ = std::move(o.offsets_);
  neighbors_ = std::move(o.neighbors_);
  adjacency_reads_.store(0);
  return *this;
}

void Graph::build_csr() {
  const size_t n = features_.rows();
  offsets_.assign(n + 1, 0);
  for (const Edge& e : edges_) {
    ++offsets_[e.u + 1];
    ++offsets_[e.v + 1];
  }
  std::partial_sum(offsets_.begin(), offsets_.end(), offsets_.begin());
  neighbors_.assign(offsets_[n], 0);
  std::vector<size_t> cursor(offsets_.begin(), offsets_.end() - 1);
  for (const Edge& e : edges_) {
    neighbors_[cursor[e.u]++] = e.v;
    neighbors_[cursor[e.v]++] = e.u;
  }
  for (size_t i = 0; i < n; ++i) std::sort(neighbors_.begin() + offsets_[i], neighbors_.begin() + offsets_[i + 1]);
}

std::vector<uint32_t> SplitMasks::nodes(Role r) const {
  std::vector<uint32_t> out;
  for (size_t i = 0; i < roles.size(); ++i)
    if (roles[i] == r) out.push_back(static_cast<uint32_t>(i));
  return out;
}

size_t SplitMasks::count(Role r) const { return static_cast<size_t>(std::count(roles.begin(), roles.end(), r)); }

void validate_masks(const Graph& g, const SplitMasks& masks) {
  if (masks.roles.size() != g.num_nodes())
    throw Error(ErrorCode::kValidation, "split covers " + std::to_string(masks.roles.size()) + " nodes, graph has " +
                                            std::to_string(g.num_nodes()));
  if (masks.count(Role::kTrain) == 0) throw Error(ErrorCode::kValidation, "empty train mask");
}

SplitMasks make_semi_split(const Graph& g, RngStream& rng, size_t per_class, size_t val, size_t test) {
  if (!g.has_labels()) throw Error(ErrorCode::kValidation, "semi-supervised split needs labels");
  const size_t n = g.num_nodes();
  std::vector<uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  rng.shuffle(std::span<uint32_t>(order));
  SplitMasks masks{std::vector<Role>(n, Role::kUnused)};
  std::vector<size_t> taken(g.num_classes(), 0);
  std::vector<uint32_t> rest;
  rest.reserve(n);
  for (uint32_t i : order) {
    const auto c = static_cast<size_t>(g.labels()[i]);
    if (taken[c] < per_class) {
      ++taken[c];
      masks.roles[i] = Role::kTrain;
    } else {
      rest.push_back(i);
    }
  }
  if (rest.size() < val + test)
    throw Error(ErrorCode::kInsufficientNodes, "only " + std::to_string(rest.size()) + " nodes left for " +
                                                   std::to_string(val) + " validation + " + std::to_string(test) + " test");
  for (size_t k = 0; k < val; ++k) masks.roles[rest[k]] = Role::kVal;
  for (size_t k = val; k < val + test; ++k) masks.roles[rest[k]] = Role::kTest;
  return masks;
}

SplitMasks make_full_split(const Graph& g, RngStream& rng) {
  const size_t n = g.num_nodes();
  if (n < 5) throw Error(ErrorCode::kInsufficientNodes, "full split needs at least 5 nodes");
  std::vector<uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  rng.shuffle(std::span<uint32_t>(order));
  const auto n_train = static_cast<size_t>(std::llround(0.6 * static_cast<double>(n)));
  const size_t rest = n - n_train;
  const size_t n_val = (rest + 1) / 2;  // validation takes the odd node
  SplitMasks masks{std::vector<Role>(n, Role::kTest)};
  for (size_t k = 0; k < n_train; ++k) masks.roles[order[k]] = Role::kTrain;
  for (size_t k = n_train; k < n_train + n_val; ++k) masks.roles[order[k]] = Role::kVal;
  return masks;
}

TrainView::TrainView(const Graph& g, const SplitMasks& masks, Setting setting)
    : graph_(&g), masks_(&masks), setting_(setting), edges_(g.edges()) {
  validate_masks(g, masks);
  const size_t n = g.num_nodes();
  visible_nodes_.assign(n, 1);
  if (setting == Setting::kInductive) {
    for (size_t i = 0; i < n; ++i)
      if (masks.is_eval(i)) visible_nodes_[i] = 0;
  }
  for (size_t i = 0; i < n; ++i)
    if (visible_nodes_[i]) visible_node_ids_.push_back(static_cast<uint32_t>(i));
  for (size_t k = 0; k < edges_.size(); ++k) {
    if (visible_nodes_[edges_[k].u] && visible_nodes_[edges_[k].v]) visible_edges_.push_back(static_cast<uint32_t>(k));
  }
}

int32_t TrainView::train_label(uint32_t i) const {
  if (!masks_->is_train(i)) {
    if (masks_->is_eval(i)) ++eval_label_reads_;
    throw Error(ErrorCode::kValidation, "label of non-training node " + std::to_string(i) + " requested during training");
  }
  return graph_->labels()[i];
}

Tensor2 TrainView::gather_features(std::span<const uint32_t> ids) const {
  for (uint32_t i : ids) {
    if (masks_->is_eval(i)) ++eval_feature_reads_;
    if (!visible_nodes_[i]) ++hidden_feature_reads_;
  }
  if (hidden_feature_reads_ > 0) throw Error(ErrorCode::kValidation, "features of a hidden node requested during training");
  return gather_rows(graph_->features(), ids);
}

AlphaSchedule alpha_schedule(const TrainView& view) {
  AlphaSchedule a;
  for (uint32_t k : view.visible_edges()) {
    const Edge e = view.edge(k);
    a.n_e += view.is_labelled(e.u) + view.is_labelled(e.v);
  }
  a.e_total = 2 * static_cast<uint64_t>(view.visible_edges().size());
  a.alpha = a.e_total == 0 ? 0.0 : 1.0 - static_cast<double>(a.n_e) / static_cast<double>(a.e_total);
  return a;
}

ClassWeights class_weights(const TrainView& view) {
  const size_t c = view.num_classes();
  ClassWeights w;
  w.y_n.assign(c, 0.0);
  w.y_e.assign(c, 0.0);
  w.weights.assign(c, 0.0f);
  double n_train = 0;
  for (uint32_t i : view.visible_node_ids()) {
    if (!view.is_labelled(i)) continue;
    w.y_n[static_cast<size_t>(view.train_label(i))] += 1;
    n_train += 1;
  }
  double n_endpoints = 0;
  for (uint32_t k : view.visible_edges()) {
    const Edge e = view.edge(k);
    for (uint32_t node : {e.u, e.v}) {
      if (!view.is_labelled(node)) continue;
      w.y_e[static_cast<size_t>(view.train_label(node))] += 1;
      n_endpoints += 1;
    }
  }
  if (n_endpoints == 0) throw Error(ErrorCode::kValidation, "class_weights: no labelled endpoint in the training view");
  for (auto& v : w.y_n) v /= n_train;
  for (auto& v : w.y_e) v /= n_endpoints;
  const double floor = 1.0 / (2.0 * static_cast<double>(view.visible_edges().size()));
  for (size_t k = 0; k < c; ++k) {
    if (w.y_n[k] == 0.0) continue;
    double ye = w.y_e[k];
    if (ye == 0.0) {
      ye = floor;
      w.floored_classes.push_back(static_cast<uint32_t>(k));
      std::fprintf(stderr, "warning: class %zu has training nodes but no labelled edge endpoint; using y_e floor %g\n",
                   k, floor);
    }
    w.weights[k] = static_cast<float>(w.y_n[k] / ye);
  }
  return w;
}

SparseRows normalized_adjacency(size_t num_nodes, std::span<const Edge> edges) {
  SparseRows a;
  a.n = num_nodes;
  std::vector<std::vector<uint32_t>> rows(num_nodes);
  for (size_t i = 0; i < num_nodes; ++i) rows[i].push_back(static_cast<uint32_t>(i));
  for (const Edge& e : edges) {
    rows[e.u].push_back(e.v);
    rows[e.v].push_back(e.u);
  }
  a.offsets.assign(num_nodes + 1, 0);
  for (size_t i = 0; i < num_nodes; ++i) {
    auto& r = rows[i];
    std::sort(r.begin(), r.end());
    const float w = 1.0f / static_cast<float>(r.size());
    for (uint32_t j : r) {
      a.cols.push_back(j);
      a.vals.push_back(w);
    }
    a.offsets[i + 1] = a.cols.size();
  }
  return a;
}

double average_degree(const Graph& g) {
  return g.num_nodes() == 0 ? 0.0 : 2.0 * static_cast<double>(g.num_edges()) / static_cast<double>(g.num_nodes());
}

size_t epoch_budget(const Graph& g, size_t base) {
  if (g.num_edges() == 0) throw Error(ErrorCode::kNoEdges, "epoch_budget: graph " + g.name() + " has no edges");
  const double d = average_degree(g);
  return std::max<size_t>(1, static_cast<size_t>(std::ceil(static_cast<double>(base) / d)));
}

std::vector<std::pair<uint32_t, uint32_t>> sample_negative_pairs(const TrainView& view, size_t count, RngStream& rng) {
  const auto& nodes = view.visible_node_ids();
  if (nodes.size() < 2)
    throw Error(ErrorCode::kSampling, "negative sampling needs at least 2 visible nodes, have " + std::to_string(nodes.size()));
  std::vector<std::pair<uint32_t, uint32_t>> out;
  out.reserve(count);
  while (out.size() < count) {
    const uint32_t a = nodes[rng.uniform_index(nodes.size())];
    const uint32_t b = nodes[rng.uniform_index(nodes.size())];
    if (a != b) out.emplace_back(a, b);
  }
  return out;
}

Graph generate_sbm(const SbmParams& p, RngStream& rng, std::string name) {
  if (!(p.p_out >= 0.0 && p.p_in <= 1.0 && (p.p_out < p.p_in || (p.p_in == 0.0 && p.p_out == 0.0))))
    throw Error(ErrorCode::kValidation, "sbm: need 0 <= p_out < p_in <= 1");
  if (p.blocks == 0 || p.nodes_per_block == 0 || p.feat_dim == 0) throw Error(ErrorCode::kValidation, "sbm: empty shape");
  const size_t n = p.blocks * p.nodes_per_block;
  std::vector<int32_t> labels(n);
  for (size_t i = 0; i < n; ++i) labels[i] = static_cast<int32_t>(i / p.nodes_per_block);
  Tensor2 features(n, p.feat_dim);
  for (size_t i = 0; i < n; ++i) {
    for (size_t j = 0; j < p.feat_dim; ++j) {
      const double signature = (static_cast<size_t>(labels[i]) % p.feat_dim) == j ? 1.0 : 0.0;
      features(i, j) = static_cast<float>(signature + (p.feat_noise > 0.0 ? p.feat_noise * rng.normal() : 0.0));
    }
  }
  std::vector<Edge> edges;
  for (uint32_t i = 0; i < n; ++i) {
    for (uint32_t j = i + 1; j < n; ++j) {
      const double prob = labels[i] == labels[j] ? p.p_in : p.p_out;
      if (prob > 0.0 && rng.uniform_double() < prob) edges.push_back({i, j});
    }
  }
  return Graph(std::move(name), p.blocks, std::move(features), std::move(labels), std::move(edges));
}

}  // namespace linkdist
