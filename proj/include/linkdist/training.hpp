#pragma once

#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "linkdist/graph.hpp"
#include "linkdist/losses.hpp"
#include "linkdist/models.hpp"

namespace linkdist {

enum class Method { kMlp, kGcn, kGcn2Mlp, kLinkDist, kCoLinkDist };

std::string method_name(Method m);
std::optional<Method> parse_method(std::string_view s);

struct TrainConfig {
  double lr = 0.01;
  size_t batch_size = 1024;
  // 0 selects the method default: base_epochs for node-iterating trainers,
  // ceil(base_epochs / average degree) for edge-iterating ones.
  size_t epochs = 0;
  size_t base_epochs = 200;
  std::optional<double> alpha;       // overrides alpha_schedule
  std::vector<float> class_weights;  // overrides class_weights() when non-empty
  uint64_t seed = 0;
  size_t hidden = 256;
  BlockSettings blocks;
};

struct LossReport {
  double ce_term = 0.0;
  double mse_term = 0.0;
  double neg_ce_term = 0.0;
  double neg_mse_term = 0.0;
  double total = 0.0;
};

struct EpochRecord {
  size_t epoch = 0;  // 1-based
  LossReport loss;
  double val_acc = 0.0;
  double test_acc = 0.0;
  // Message-passing evaluation, LinkDist models only.
  std::optional<double> val_acc_mp;
  std::optional<double> test_acc_mp;
  double wall_ms = 0.0;
};

using EpochTrace = std::vector<EpochRecord>;
using EpochCallback = std::function<void(const EpochRecord&)>;

// Independent per-purpose random streams of one run.
struct RunRngs {
  explicit RunRngs(uint64_t seed)
      : init(make_stream(seed, Stream::kInit)),
        dropout(make_stream(seed, Stream::kDropout)),
        shuffle(make_stream(seed, Stream::kShuffle)),
        negatives(make_stream(seed, Stream::kNegatives)) {}
  RngStream init, dropout, shuffle, negatives;
};

// Batch boundaries over n items; a trailing single-item batch is merged into
// the previous one so training-mode batch norm always sees >= 2 rows.
std::vector<std::pair<size_t, size_t>> batch_ranges(size_t n, size_t batch_size);

struct SupervisedResult {
  ThreeLayerNet<float> best_model;  // weights at the best validation epoch
  EpochTrace trace;
};

// MLP: mini-batches of training nodes. GCN: one full-batch step per epoch.
SupervisedResult train_supervised(Method arch, const TrainView& view, const TrainConfig& cfg, const EpochCallback& cb = {});

// Student MLP regressing the teacher GCN's logits on every node outside the
// evaluation sets.
SupervisedResult gcn2mlp_distill(const ThreeLayerNet<float>& teacher, const TrainView& view, const TrainConfig& cfg,
                                 const EpochCallback& cb = {});

struct LinkDistParams {
  double alpha = 0.0;
  std::vector<float> class_weights;
  size_t batch_size = 1024;
  double lr = 0.01;
};

// One pass over the shuffled visible edges with one Adam step per batch.
LossReport linkdist_epoch(ForkedMLP<float>& m, const TrainView& view, const LinkDistParams& p, RunRngs& rngs);
// linkdist_epoch plus an equal-sized batch of sampled negative pairs per step.
LossReport colinkdist_epoch(ForkedMLP<float>& m, const TrainView& view, const LinkDistParams& p, RunRngs& rngs);

struct LinkDistResult {
  ForkedMLP<float> best_model;  // selected by MLP-mode validation accuracy
  EpochTrace trace;
  AlphaSchedule alpha;
  double alpha_used = 0.0;
  ClassWeights weights;
};

LinkDistResult train_linkdist(const TrainView& view, const TrainConfig& cfg, bool contrastive, const EpochCallback& cb = {});

struct TrainOutcome {
  Method method = Method::kMlp;
  EpochTrace trace;
  EpochTrace teacher_trace;  // GCN2MLP only
  std::variant<std::monostate, ThreeLayerNet<float>, ForkedMLP<float>> best_model;
  std::optional<double> alpha;
};

struct TrainCallbacks {
  EpochCallback on_epoch;
  EpochCallback on_teacher_epoch;
};

TrainOutcome run_training(Method method, const TrainView& view, const TrainConfig& cfg, const TrainCallbacks& cbs = {});
TrainOutcome run_training(Method method, const Graph& g, const SplitMasks& masks, Setting setting, const TrainConfig& cfg,
                          const TrainCallbacks& cbs = {});

}  // namespace linkdist
