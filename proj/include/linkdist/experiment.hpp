#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "linkdist/container.hpp"
#include "linkdist/training.hpp"

namespace linkdist {

enum class ExperimentSetting { kSemiTransductive, kSemiInductive, kFull };
enum class EvalMode { kMlp, kMp };

std::string setting_name(ExperimentSetting s);
std::optional<ExperimentSetting> parse_setting(std::string_view s);
std::string eval_mode_name(EvalMode m);
std::optional<EvalMode> parse_eval_mode(std::string_view s);

Setting view_setting(ExperimentSetting s);

// Evaluation mode a method reports by default; throws kUsage for a mode the
// method cannot produce (MP for plain MLPs, MLP for the GCN).
EvalMode default_eval_mode(Method m);
void check_eval_mode(Method m, EvalMode mode);

// Split for run `seed`: semi-supervised settings reuse a predefined split when
// the dataset ships one; otherwise a fresh split is drawn from the seed.
SplitMasks split_for_run(const Dataset& ds, ExperimentSetting setting, uint64_t seed);

struct RunResult {
  uint64_t seed = 0;
  std::vector<std::pair<double, double>> trace;  // (val_acc, test_acc) per epoch
  double best_val_acc = 0.0;
  double selected_test_acc = 0.0;
  size_t best_epoch = 0;  // 1-based
  std::optional<double> alpha;
};

struct ExperimentSummary {
  Method method = Method::kMlp;
  std::string dataset;
  ExperimentSetting setting = ExperimentSetting::kSemiTransductive;
  EvalMode eval_mode = EvalMode::kMlp;
  double mean_acc = 0.0;
  double std_acc = 0.0;  // population convention
  size_t n_runs = 0;
  std::vector<RunResult> per_run;
};

struct ExperimentOptions {
  size_t runs = 10;
  uint64_t base_seed = 0;
  size_t jobs = 1;
  // Only lr, batch_size, epochs and alpha are taken from here; the seed is
  // base_seed + run index.
  TrainConfig train;
  std::optional<std::filesystem::path> log_dir;
  // run_experiment saves the first run's selected model here.
  std::optional<std::filesystem::path> snapshot_dir;
};

// Selection over one eval mode of a trace (MP accuracies for kMp).
RunResult select_result(const EpochTrace& trace, EvalMode mode, uint64_t seed);

void summarize(ExperimentSummary& s);

ExperimentSummary run_experiment(Method method, const Dataset& ds, ExperimentSetting setting, EvalMode eval_mode,
                                 const ExperimentOptions& opts);

// The seven table rows, in display order.
enum class TableRow { kMlp, kGcn2Mlp, kLinkDistMlp, kCoLinkDistMlp, kGcn, kLinkDist, kCoLinkDist };
inline constexpr size_t kTableRows = 7;
std::string row_label(TableRow r);
bool row_uses_message_passing(TableRow r);

struct TableCell {
  ExperimentSummary summary;
  bool best = false;  // maximum of its column within its group
};

struct TableResult {
  ExperimentSetting setting = ExperimentSetting::kSemiTransductive;
  std::vector<std::string> datasets;
  std::vector<std::vector<TableCell>> cells;  // [row][dataset]
};

// Trains each method family once per (dataset, run): the GCN row is the
// GCN2MLP teacher, and each LinkDist training yields both of its rows.
TableResult run_table(const std::vector<const Dataset*>& datasets, ExperimentSetting setting,
                      const ExperimentOptions& opts);

std::string summary_json(const ExperimentSummary& s, const ExperimentOptions& opts);
std::string summary_text(const ExperimentSummary& s);
std::string table_json(const TableResult& t, const ExperimentOptions& opts);
std::string table_text(const TableResult& t);

}  // namespace linkdist
