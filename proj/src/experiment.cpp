#include "linkdist/experiment.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <functional>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "linkdist/eval.hpp"
#include "linkdist/snapshot.hpp"

namespace linkdist {

namespace {

using json = nlohmann::ordered_json;

// Runs tasks on up to `jobs` threads. Results land in caller-owned slots, so
// the outcome does not depend on scheduling.
void run_tasks(std::vector<std::function<void()>>& tasks, size_t jobs) {
  jobs = std::max<size_t>(1, std::min(jobs, tasks.size()));
  if (jobs == 1) {
    for (auto& t : tasks) t();
    return;
  }
  std::atomic<size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  std::vector<std::thread> workers;
  for (size_t w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (size_t k = next++; k < tasks.size(); k = next++) {
        try {
          tasks[k]();
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& t : workers) t.join();
  if (first_error) std::rethrow_exception(first_error);
}

TrainConfig run_config(const ExperimentOptions& opts, uint64_t seed) {
  TrainConfig cfg = opts.train;
  cfg.seed = seed;
  return cfg;
}

void write_log(const ExperimentOptions& opts, const std::string& dataset, const std::string& method,
               ExperimentSetting setting, uint64_t seed, const EpochTrace& trace) {
  if (!opts.log_dir) return;
  std::filesystem::create_directories(*opts.log_dir);
  const auto path = *opts.log_dir / (dataset + "-" + method + "-" + setting_name(setting) + "-seed" +
                                     std::to_string(seed) + ".jsonl");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorCode::kIo, "cannot write log " + path.string());
  for (const auto& r : trace) {
    json j{{"epoch", r.epoch},           {"ce", r.loss.ce_term},          {"mse", r.loss.mse_term},
           {"neg_ce", r.loss.neg_ce_term}, {"neg_mse", r.loss.neg_mse_term}, {"total", r.loss.total},
           {"val_acc", r.val_acc},       {"test_acc", r.test_acc}};
    if (r.val_acc_mp) {
      j["val_acc_mp"] = *r.val_acc_mp;
      j["test_acc_mp"] = *r.test_acc_mp;
    }
    j["wall_ms"] = r.wall_ms;
    out << j.dump() << '\n';
  }
}

std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", 100.0 * v);
  return buf;
}

json run_json(const RunResult& r) {
  json trace = json::array();
  for (const auto& [v, t] : r.trace) trace.push_back({v, t});
  json j{{"seed", r.seed},
         {"best_val_acc", r.best_val_acc},
         {"selected_test_acc", r.selected_test_acc},
         {"best_epoch", r.best_epoch}};
  if (r.alpha) j["alpha"] = *r.alpha;
  j["trace"] = trace;
  return j;
}

json options_json(const ExperimentOptions& opts) {
  json j{{"runs", opts.runs},
         {"base_seed", opts.base_seed},
         {"lr", opts.train.lr},
         {"batch_size", opts.train.batch_size},
         {"epochs", opts.train.epochs}};
  j["alpha"] = opts.train.alpha ? json(*opts.train.alpha) : json(nullptr);
  j["std_convention"] = "population";
  return j;
}

}  // namespace

std::string setting_name(ExperimentSetting s) {
  switch (s) {
    case ExperimentSetting::kSemiTransductive: return "semi-transductive";
    case ExperimentSetting::kSemiInductive: return "semi-inductive";
    case ExperimentSetting::kFull: return "full";
  }
  return "?";
}

std::optional<ExperimentSetting> parse_setting(std::string_view s) {
  for (auto v : {ExperimentSetting::kSemiTransductive, ExperimentSetting::kSemiInductive, ExperimentSetting::kFull})
    if (setting_name(v) == s) return v;
  return std::nullopt;
}

std::string eval_mode_name(EvalMode m) { return m == EvalMode::kMlp ? "mlp" : "mp"; }

std::optional<EvalMode> parse_eval_mode(std::string_view s) {
  if (s == "mlp") return EvalMode::kMlp;
  if (s == "mp") return EvalMode::kMp;
  return std::nullopt;
}

Setting view_setting(ExperimentSetting s) {
  return s == ExperimentSetting::kSemiInductive ? Setting::kInductive : Setting::kTransductive;
}

EvalMode default_eval_mode(Method m) { return m == Method::kGcn ? EvalMode::kMp : EvalMode::kMlp; }

void check_eval_mode(Method m, EvalMode mode) {
  if (m == Method::kLinkDist || m == Method::kCoLinkDist) return;
  if (mode != default_eval_mode(m))
    throw Error(ErrorCode::kUsage, method_name(m) + " has no " + eval_mode_name(mode) + " evaluation mode");
}

SplitMasks split_for_run(const Dataset& ds, ExperimentSetting setting, uint64_t seed) {
  if (setting != ExperimentSetting::kFull && ds.predefined_split) return *ds.predefined_split;
  RngStream rng = make_stream(seed, Stream::kSplit);
  return setting == ExperimentSetting::kFull ? make_full_split(ds.graph, rng) : make_semi_split(ds.graph, rng);
}

RunResult select_result(const EpochTrace& trace, EvalMode mode, uint64_t seed) {
  RunResult r;
  r.seed = seed;
  for (const auto& e : trace) {
    // A GCN trace has only one accuracy pair, and it already uses the graph.
    if (mode == EvalMode::kMp && e.val_acc_mp) {
      r.trace.emplace_back(*e.val_acc_mp, *e.test_acc_mp);
    } else {
      r.trace.emplace_back(e.val_acc, e.test_acc);
    }
  }
  const Selection s = select_run(r.trace);
  r.best_val_acc = s.best_val;
  r.selected_test_acc = s.selected_test;
  r.best_epoch = s.epoch + 1;
  return r;
}

void summarize(ExperimentSummary& s) {
  s.n_runs = s.per_run.size();
  if (s.n_runs == 0) throw Error(ErrorCode::kValidation, "summary over zero runs");
  double sum = 0.0;
  for (const auto& r : s.per_run) sum += r.selected_test_acc;
  s.mean_acc = sum / static_cast<double>(s.n_runs);
  double sq = 0.0;
  for (const auto& r : s.per_run) sq += (r.selected_test_acc - s.mean_acc) * (r.selected_test_acc - s.mean_acc);
  s.std_acc = std::sqrt(sq / static_cast<double>(s.n_runs));
}

ExperimentSummary run_experiment(Method method, const Dataset& ds, ExperimentSetting setting, EvalMode eval_mode,
                                 const ExperimentOptions& opts) {
  check_eval_mode(method, eval_mode);
  if (opts.runs == 0) throw Error(ErrorCode::kValidation, "runs must be positive");
  ExperimentSummary summary;
  summary.method = method;
  summary.dataset = ds.graph.name();
  summary.setting = setting;
  summary.eval_mode = eval_mode;
  summary.per_run.resize(opts.runs);

  std::vector<std::function<void()>> tasks;
  for (size_t r = 0; r < opts.runs; ++r) {
    tasks.emplace_back([&, r] {
      const uint64_t seed = opts.base_seed + r;
      const SplitMasks masks = split_for_run(ds, setting, seed);
      const TrainOutcome out = run_training(method, ds.graph, masks, view_setting(setting), run_config(opts, seed));
      write_log(opts, ds.graph.name(), method_name(method), setting, seed, out.trace);
      if (method == Method::kGcn2Mlp) write_log(opts, ds.graph.name(), "gcn2mlp-teacher", setting, seed, out.teacher_trace);
      RunResult rr = select_result(out.trace, eval_mode, seed);
      rr.alpha = out.alpha;
      summary.per_run[r] = std::move(rr);
      if (r == 0 && opts.snapshot_dir) {
        Snapshot snap;
        if (const auto* m = std::get_if<ForkedMLP<float>>(&out.best_model)) snap.model = *m;
        else snap.model = std::get<ThreeLayerNet<float>>(out.best_model);
        snap.method = method_name(method);
        snap.alpha = out.alpha;
        save_snapshot(*opts.snapshot_dir, snap);
      }
    });
  }
  run_tasks(tasks, opts.jobs);
  summarize(summary);
  return summary;
}

std::string row_label(TableRow r) {
  switch (r) {
    case TableRow::kMlp: return "MLP";
    case TableRow::kGcn2Mlp: return "GCN2MLP";
    case TableRow::kLinkDistMlp: return "LinkDistMLP";
    case TableRow::kCoLinkDistMlp: return "CoLinkDistMLP";
    case TableRow::kGcn: return "GCN";
    case TableRow::kLinkDist: return "LinkDist";
    case TableRow::kCoLinkDist: return "CoLinkDist";
  }
  return "?";
}

bool row_uses_message_passing(TableRow r) {
  return r == TableRow::kGcn || r == TableRow::kLinkDist || r == TableRow::kCoLinkDist;
}

namespace {

struct RowSpec {
  Method method;
  EvalMode mode;
};

RowSpec row_spec(TableRow r) {
  switch (r) {
    case TableRow::kMlp: return {Method::kMlp, EvalMode::kMlp};
    case TableRow::kGcn2Mlp: return {Method::kGcn2Mlp, EvalMode::kMlp};
    case TableRow::kLinkDistMlp: return {Method::kLinkDist, EvalMode::kMlp};
    case TableRow::kCoLinkDistMlp: return {Method::kCoLinkDist, EvalMode::kMlp};
    case TableRow::kGcn: return {Method::kGcn, EvalMode::kMp};
    case TableRow::kLinkDist: return {Method::kLinkDist, EvalMode::kMp};
    case TableRow::kCoLinkDist: return {Method::kCoLinkDist, EvalMode::kMp};
  }
  return {Method::kMlp, EvalMode::kMlp};
}

}  // namespace

TableResult run_table(const std::vector<const Dataset*>& datasets, ExperimentSetting setting,
                      const ExperimentOptions& opts) {
  if (datasets.empty()) throw Error(ErrorCode::kUsage, "table needs at least one dataset");
  if (opts.runs == 0) throw Error(ErrorCode::kValidation, "runs must be positive");
  TableResult table;
  table.setting = setting;
  const size_t nd = datasets.size();
  table.cells.assign(kTableRows, std::vector<TableCell>(nd));
  for (size_t d = 0; d < nd; ++d) {
    table.datasets.push_back(datasets[d]->graph.name());
    for (size_t row = 0; row < kTableRows; ++row) {
      auto& s = table.cells[row][d].summary;
      const RowSpec spec = row_spec(static_cast<TableRow>(row));
      s.method = spec.method;
      s.dataset = datasets[d]->graph.name();
      s.setting = setting;
      s.eval_mode = spec.mode;
      s.per_run.resize(opts.runs);
    }
  }

  const Method families[] = {Method::kMlp, Method::kGcn2Mlp, Method::kLinkDist, Method::kCoLinkDist};
  std::vector<std::function<void()>> tasks;
  for (size_t d = 0; d < nd; ++d) {
    for (size_t r = 0; r < opts.runs; ++r) {
      for (Method fam : families) {
        tasks.emplace_back([&, d, r, fam] {
          const Dataset& ds = *datasets[d];
          const uint64_t seed = opts.base_seed + r;
          const SplitMasks masks = split_for_run(ds, setting, seed);
          const TrainOutcome out = run_training(fam, ds.graph, masks, view_setting(setting), run_config(opts, seed));
          const std::string& name = ds.graph.name();
          auto put = [&](TableRow row, const EpochTrace& trace, EvalMode mode) {
            RunResult rr = select_result(trace, mode, seed);
            rr.alpha = out.alpha;
            table.cells[static_cast<size_t>(row)][d].summary.per_run[r] = std::move(rr);
          };
          write_log(opts, name, method_name(fam), setting, seed, out.trace);
          switch (fam) {
            case Method::kMlp: put(TableRow::kMlp, out.trace, EvalMode::kMlp); break;
            case Method::kGcn2Mlp:
              write_log(opts, name, "gcn", setting, seed, out.teacher_trace);
              put(TableRow::kGcn2Mlp, out.trace, EvalMode::kMlp);
              put(TableRow::kGcn, out.teacher_trace, EvalMode::kMp);
              break;
            case Method::kLinkDist:
              put(TableRow::kLinkDistMlp, out.trace, EvalMode::kMlp);
              put(TableRow::kLinkDist, out.trace, EvalMode::kMp);
              break;
            case Method::kCoLinkDist:
              put(TableRow::kCoLinkDistMlp, out.trace, EvalMode::kMlp);
              put(TableRow::kCoLinkDist, out.trace, EvalMode::kMp);
              break;
            default: break;
          }
        });
      }
    }
  }
  run_tasks(tasks, opts.jobs);

  for (size_t d = 0; d < nd; ++d) {
    for (size_t row = 0; row < kTableRows; ++row) summarize(table.cells[row][d].summary);
    for (bool mp : {false, true}) {
      double best = -1.0;
      for (size_t row = 0; row < kTableRows; ++row)
        if (row_uses_message_passing(static_cast<TableRow>(row)) == mp) best = std::max(best, table.cells[row][d].summary.mean_acc);
      for (size_t row = 0; row < kTableRows; ++row)
        if (row_uses_message_passing(static_cast<TableRow>(row)) == mp)
          table.cells[row][d].best = table.cells[row][d].summary.mean_acc == best;
    }
  }
  return table;
}

std::string summary_json(const ExperimentSummary& s, const ExperimentOptions& opts) {
  json runs = json::array();
  for (const auto& r : s.per_run) runs.push_back(run_json(r));
  json j{{"method", method_name(s.method)},
         {"dataset", s.dataset},
         {"setting", setting_name(s.setting)},
         {"eval_mode", eval_mode_name(s.eval_mode)},
         {"n_runs", s.n_runs},
         {"mean_acc", s.mean_acc},
         {"std_acc", s.std_acc},
         {"config", options_json(opts)},
         {"per_run", runs}};
  return j.dump(2) + "\n";
}

std::string summary_text(const ExperimentSummary& s) {
  std::ostringstream out;
  out << method_name(s.method) << " (" << eval_mode_name(s.eval_mode) << " mode) on " << s.dataset << ", "
      << setting_name(s.setting) << ", " << s.n_runs << " runs\n";
  out << "accuracy " << percent(s.mean_acc) << " +- " << percent(s.std_acc) << "\n";
  return out.str();
}

std::string table_json(const TableResult& t, const ExperimentOptions& opts) {
  json rows = json::array();
  for (size_t row = 0; row < kTableRows; ++row) {
    const auto tr = static_cast<TableRow>(row);
    json cells = json::array();
    for (size_t d = 0; d < t.datasets.size(); ++d) {
      const auto& c = t.cells[row][d];
      json runs = json::array();
      for (const auto& r : c.summary.per_run) runs.push_back(r.selected_test_acc);
      cells.push_back({{"dataset", t.datasets[d]},
                       {"mean_acc", c.summary.mean_acc},
                       {"std_acc", c.summary.std_acc},
                       {"n_runs", c.summary.n_runs},
                       {"best", c.best},
                       {"selected_test_acc", runs}});
    }
    rows.push_back({{"row", row_label(tr)},
                    {"method", method_name(row_spec(tr).method)},
                    {"eval_mode", eval_mode_name(row_spec(tr).mode)},
                    {"message_passing", row_uses_message_passing(tr)},
                    {"cells", cells}});
  }
  json j{{"setting", setting_name(t.setting)}, {"datasets", t.datasets}, {"config", options_json(opts)}, {"rows", rows}};
  return j.dump(2) + "\n";
}

std::string table_text(const TableResult& t) {
  const size_t label_w = 15, cell_w = 16;
  std::ostringstream out;
  auto pad = [](std::string s, size_t w) {
    if (s.size() < w) s.append(w - s.size(), ' ');
    return s;
  };
  auto rule = [&] { out << std::string(label_w + cell_w * t.datasets.size(), '-') << '\n'; };
  out << "Accuracy (%), " << setting_name(t.setting) << ", mean +- population std; * marks the group maximum\n";
  rule();
  out << pad("Method", label_w);
  for (const auto& d : t.datasets) out << pad(d, cell_w);
  out << '\n';
  for (bool mp : {false, true}) {
    rule();
    for (size_t row = 0; row < kTableRows; ++row) {
      const auto tr = static_cast<TableRow>(row);
      if (row_uses_message_passing(tr) != mp) continue;
      out << pad(row_label(tr), label_w);
      for (size_t d = 0; d < t.datasets.size(); ++d) {
        const auto& c = t.cells[row][d];
        out << pad(percent(c.summary.mean_acc) + "+-" + percent(c.summary.std_acc) + (c.best ? "*" : ""), cell_w);
      }
      out << '\n';
    }
  }
  rule();
  return out.str();
}

}  // namespace linkdist
