// Command-line front end. Talks to the library only through linkdist.h.
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "linkdist/linkdist.h"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace fs = std::filesystem;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct RuntimeFailure : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Usage-class library failures map to exit 2, everything else to 1.
void check(ld_status s, bool usage_on_validation = false) {
  if (s == LD_OK) return;
  const std::string msg = std::string(ld_status_name(s)) + ": " + ld_last_error();
  if (s == LD_ERR_USAGE || (usage_on_validation && s == LD_ERR_VALIDATION)) throw UsageError(msg);
  throw RuntimeFailure(msg);
}

struct OwnedString {
  char* p = nullptr;
  ~OwnedString() { ld_string_free(p); }
  std::string str() const { return p ? p : ""; }
};

struct GraphHandle {
  ld_graph* g = nullptr;
  GraphHandle() = default;
  GraphHandle(const GraphHandle&) = delete;
  GraphHandle(GraphHandle&& o) noexcept : g(o.g) { o.g = nullptr; }
  ~GraphHandle() { ld_graph_free(g); }
};

// A path to a container directory, or a dataset name under LINKDIST_DATA_DIR.
fs::path resolve_dataset(const std::string& spec) {
  if (fs::is_directory(spec)) return spec;
  if (const char* root = std::getenv("LINKDIST_DATA_DIR")) {
    const fs::path p = fs::path(root) / spec;
    if (fs::is_directory(p)) return p;
  }
  throw UsageError("dataset '" + spec + "' is neither a directory nor found under LINKDIST_DATA_DIR");
}

GraphHandle load_dataset(const std::string& spec) {
  GraphHandle h;
  const ld_status s = ld_graph_load(resolve_dataset(spec).c_str(), &h.g);
  if (s == LD_ERR_IO) throw UsageError(std::string("cannot read dataset: ") + ld_last_error());
  check(s);
  return h;
}

void write_file(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out || !(out << text)) throw RuntimeFailure("cannot write " + p.string());
}

struct CommonFlags {
  std::string setting = "semi-transductive";
  uint32_t runs = 10;
  uint64_t seed = 0;
  uint32_t jobs = 1;
  double lr = 0.01;
  uint32_t batch = 1024;
  uint32_t epochs = 0;
  double alpha = -1.0;
  std::string out = "linkdist_out";
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--setting", f.setting, "semi-transductive, semi-inductive or full")
      ->check(CLI::IsMember({"semi-transductive", "semi-inductive", "full"}))
      ->capture_default_str();
  cmd->add_option("--runs", f.runs, "Seeded runs per cell")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--seed", f.seed, "Base seed; run r uses seed + r")->capture_default_str();
  cmd->add_option("--jobs", f.jobs, "Concurrent runs")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--lr", f.lr, "Adam learning rate")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--batch", f.batch, "Batch size")->check(CLI::Range(2u, 1u << 30))->capture_default_str();
  cmd->add_option("--epochs", f.epochs, "Epoch override (0 keeps the method default)")->capture_default_str();
  cmd->add_option("--alpha", f.alpha, "Override the distillation weight")->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--out", f.out, "Output directory")->capture_default_str();
}

ld_run_config make_config(const CommonFlags& f, const std::string& log_dir) {
  ld_run_config cfg;
  ld_run_config_init(&cfg);
  cfg.setting = f.setting.c_str();
  cfg.runs = f.runs;
  cfg.seed = f.seed;
  cfg.jobs = f.jobs;
  cfg.lr = f.lr;
  cfg.batch_size = f.batch;
  cfg.epochs = f.epochs;
  if (f.alpha >= 0.0) {
    cfg.has_alpha = 1;
    cfg.alpha = f.alpha;
  }
  cfg.log_dir = log_dir.c_str();
  return cfg;
}

}  // namespace

// Training frees and reallocates the same multi-megabyte buffers every step.
// glibc would return them to the kernel each time and fault them back in.
static void keep_freed_memory() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

int main(int argc, char** argv) {
  keep_freed_memory();
  CLI::App app{"LinkDist: distilling neighbourhood knowledge into MLPs"};
  app.require_subcommand(1);

  CommonFlags run_flags;
  std::string run_dataset, method, eval_mode, snapshot;
  auto* run = app.add_subcommand("run", "Train one method over seeded runs");
  run->add_option("--dataset", run_dataset, "Container directory or name under LINKDIST_DATA_DIR")->required();
  run->add_option("--method", method, "mlp, gcn, gcn2mlp, linkdist or colinkdist")->required();
  run->add_option("--eval-mode", eval_mode, "mlp or mp (default depends on the method)");
  run->add_option("--snapshot", snapshot, "Save the first run's selected model to this directory");
  add_common(run, run_flags);

  CommonFlags table_flags;
  std::vector<std::string> table_datasets;
  auto* table = app.add_subcommand("table", "All seven method rows over one or more datasets");
  table->add_option("--dataset", table_datasets, "Datasets (repeat or comma-separate)")->delimiter(',');
  add_common(table, table_flags);

  std::string fault = "none";
  uint64_t gc_seed = 7;
  auto* gradcheck = app.add_subcommand("gradcheck", "Compare every backward pass against finite differences");
  gradcheck->add_option("--inject-fault", fault, "Corrupt one backward pass on purpose")
      ->check(CLI::IsMember({"none", "linear", "batch_norm", "layer_norm", "cross_entropy", "mse"}));
  gradcheck->add_option("--seed", gc_seed)->capture_default_str();

  ld_sbm_params sbm{2, 100, 0.1, 0.01, 16, 1.0, nullptr};
  std::string sbm_out, sbm_name = "sbm";
  uint64_t sbm_seed = 0;
  auto* gen = app.add_subcommand("gen-sbm", "Write a stochastic block model graph as a dataset container");
  gen->add_option("--out", sbm_out, "Output directory")->required();
  gen->add_option("--blocks", sbm.blocks)->check(CLI::PositiveNumber)->capture_default_str();
  gen->add_option("--nodes-per-block", sbm.nodes_per_block)->check(CLI::PositiveNumber)->capture_default_str();
  gen->add_option("--p-in", sbm.p_in)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  gen->add_option("--p-out", sbm.p_out)->check(CLI::Range(0.0, 1.0))->capture_default_str();
  gen->add_option("--feat-dim", sbm.feat_dim)->check(CLI::PositiveNumber)->capture_default_str();
  gen->add_option("--feat-noise", sbm.feat_noise)->check(CLI::NonNegativeNumber)->capture_default_str();
  gen->add_option("--name", sbm_name)->capture_default_str();
  gen->add_option("--seed", sbm_seed)->capture_default_str();

  std::string pred_snapshot, pred_dataset, pred_mode = "mlp", pred_out;
  auto* predict = app.add_subcommand("predict", "Predict a class for every node from a saved model");
  predict->add_option("--snapshot", pred_snapshot)->required();
  predict->add_option("--dataset", pred_dataset)->required();
  predict->add_option("--eval-mode", pred_mode)->check(CLI::IsMember({"mlp", "mp"}))->capture_default_str();
  predict->add_option("--out", pred_out, "File for one prediction per line (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*run) {
      GraphHandle g = load_dataset(run_dataset);
      const fs::path out = run_flags.out;
      const std::string log_dir = (out / "logs").string();
      ld_run_config cfg = make_config(run_flags, log_dir);
      cfg.method = method.c_str();
      cfg.eval_mode = eval_mode.empty() ? nullptr : eval_mode.c_str();
      if (!snapshot.empty()) cfg.snapshot_dir = snapshot.c_str();
      OwnedString json, text;
      check(ld_run(g.g, &cfg, &json.p, &text.p));
      write_file(out / "summary.json", json.str());
      write_file(out / "table.txt", text.str());
      std::cout << text.str();
    } else if (*table) {
      if (table_datasets.empty()) throw UsageError("table needs at least one --dataset");
      std::vector<GraphHandle> graphs;
      std::vector<const ld_graph*> ptrs;
      for (const auto& d : table_datasets) {
        graphs.push_back(load_dataset(d));
        ptrs.push_back(graphs.back().g);
      }
      const fs::path out = table_flags.out;
      const std::string log_dir = (out / "logs").string();
      ld_run_config cfg = make_config(table_flags, log_dir);
      OwnedString json, text;
      check(ld_table(ptrs.data(), ptrs.size(), &cfg, &json.p, &text.p));
      write_file(out / "summary.json", json.str());
      write_file(out / "table.txt", text.str());
      std::cout << text.str();
    } else if (*gradcheck) {
      OwnedString report;
      int passed = 0;
      check(ld_gradcheck(fault.c_str(), gc_seed, &report.p, &passed));
      std::cout << report.str();
      if (!passed) {
        std::cerr << "gradcheck failed\n";
        return kExitRuntime;
      }
    } else if (*gen) {
      sbm.name = sbm_name.c_str();
      GraphHandle g;
      check(ld_generate_sbm(&sbm, sbm_seed, &g.g), /*usage_on_validation=*/true);
      check(ld_graph_save(g.g, sbm_out.c_str()));
      ld_graph_info info;
      check(ld_graph_info_get(g.g, &info));
      std::cout << "wrote " << sbm_out << ": " << info.num_nodes << " nodes, " << info.num_edges << " edges\n";
    } else if (*predict) {
      GraphHandle g = load_dataset(pred_dataset);
      ld_graph_info info;
      check(ld_graph_info_get(g.g, &info));
      std::vector<int32_t> pred(info.num_nodes);
      check(ld_predict(pred_snapshot.c_str(), g.g, pred_mode.c_str(), pred.data(), pred.size()));
      std::ofstream file;
      if (!pred_out.empty()) {
        file.open(pred_out, std::ios::trunc);
        if (!file) throw RuntimeFailure("cannot write " + pred_out);
      }
      std::ostream& os = pred_out.empty() ? std::cout : file;
      for (int32_t p : pred) os << p << '\n';
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitOk;
}
