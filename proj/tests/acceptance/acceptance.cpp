// Acceptance runner: one PASS/FAIL line per criterion.
//
//   acceptance [--only <criterion>]
//
// Exit status: 0 when every selected criterion passes, 77 when the only
// failures are criteria blocked on a missing dataset, 1 otherwise.
#include <sys/wait.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <regex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "linkdist/container.hpp"
#include "linkdist/experiment.hpp"
#include "linkdist/gradcheck.hpp"
#include "linkdist/training.hpp"
#include "unit/test_util.hpp"

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace fs = std::filesystem;
using namespace linkdist;

namespace {

enum class Verdict { kPass, kFail, kBlocked };

struct Outcome {
  Verdict verdict = Verdict::kFail;
  std::string detail;
  std::vector<std::string> notes;
};

Outcome pass(std::string d) { return {Verdict::kPass, std::move(d), {}}; }
Outcome fail(std::string d) { return {Verdict::kFail, std::move(d), {}}; }
Outcome blocked(std::string d) { return {Verdict::kBlocked, std::move(d), {}}; }
Outcome judge(bool ok, std::string d) { return ok ? pass(std::move(d)) : fail(std::move(d)); }

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

std::string pct(double acc) { return fmt("%.2f", 100.0 * acc); }

// ---------------------------------------------------------------------------
// Datasets: LINKDIST_DATA_DIR/<name> first, then tests/fixtures/<name>.

std::optional<fs::path> find_dataset(const std::string& name) {
  std::vector<fs::path> roots;
  if (const char* d = std::getenv("LINKDIST_DATA_DIR")) roots.emplace_back(d);
  roots.emplace_back(fs::path(LINKDIST_SOURCE_DIR) / "tests" / "fixtures");
  std::string upper = name;
  upper[0] = static_cast<char>(std::toupper(upper[0]));
  for (const auto& r : roots)
    for (const auto& n : {name, upper})
      if (fs::exists(r / n / "meta.json")) return r / n;
  return std::nullopt;
}

std::map<std::string, Dataset>& dataset_cache() {
  static std::map<std::string, Dataset> cache;
  return cache;
}

// Loaded dataset, or a reason it is unavailable.
const Dataset* dataset(const std::string& name, std::string* why) {
  auto& cache = dataset_cache();
  if (auto it = cache.find(name); it != cache.end()) return &it->second;
  const auto dir = find_dataset(name);
  if (!dir) {
    *why = "no " + name + " container under LINKDIST_DATA_DIR or tests/fixtures";
    return nullptr;
  }
  return &cache.emplace(name, load_container(*dir)).first->second;
}

// ---------------------------------------------------------------------------
constexpr const char* kReferenceFile = "paper.md";

// Reference accuracies read from the LaTeX tables in the reference file: first numeric column (Cora) or
// second (Citeseer) of a named row in the table with the given label.

std::optional<double> reference_value(const std::string& table_label, const std::string& row, size_t column) {
  std::ifstream in(fs::path(LINKDIST_SOURCE_DIR) / kReferenceFile);
  std::string line;
  bool in_table = false;
  while (std::getline(in, line)) {
    if (line.find("\\label{" + table_label + "}") != std::string::npos) in_table = true;
    if (!in_table) continue;
    if (line.find("\\end{table}") != std::string::npos) break;
    std::istringstream ls(line);
    std::string head;
    if (!std::getline(ls, head, '&')) continue;
    head.erase(0, head.find_first_not_of(" \t"));
    head.erase(head.find_last_not_of(" \t") + 1);
    if (head != row) continue;
    std::string cell;
    for (size_t c = 0; c <= column && std::getline(ls, cell, '&'); ++c) {
      if (c != column) continue;
      std::smatch m;
      if (std::regex_search(cell, m, std::regex(R"((\d+\.\d+))"))) return std::stod(m[1]) / 100.0;
    }
  }
  return std::nullopt;
}

double reference_or_die(const std::string& table, const std::string& row, size_t column) {
  const auto v = reference_value(table, row, column);
  if (!v) throw std::runtime_error(std::string(kReferenceFile) + ": no value for " + row + " in " + table);
  return *v;
}

// ---------------------------------------------------------------------------
// Shared semi-supervised table per dataset, built once per process.

ExperimentOptions ten_runs() {
  ExperimentOptions o;
  o.runs = 10;
  o.base_seed = 0;
  o.jobs = std::max(1u, std::thread::hardware_concurrency());
  return o;
}

double cell_mean(const TableResult& t, TableRow r) { return t.cells[static_cast<size_t>(r)][0].summary.mean_acc; }

std::map<std::string, TableResult>& table_cache() {
  static std::map<std::string, TableResult> cache;
  return cache;
}

const TableResult& semi_table(const std::string& name, const Dataset& ds) {
  auto& cache = table_cache();
  if (auto it = cache.find(name); it != cache.end()) return it->second;
  if (!ds.predefined_split) throw std::runtime_error(name + " container carries no predefined split");
  return cache.emplace(name, run_table({&ds}, ExperimentSetting::kSemiTransductive, ten_runs())).first->second;
}

// ---------------------------------------------------------------------------
// Criteria.

Outcome gradient_oracle() {
  const std::clock_t t0 = std::clock();
  const auto reports = run_gradcheck_suite(7);
  const double cpu_s = static_cast<double>(std::clock() - t0) / CLOCKS_PER_SEC;
  bool ok = cpu_s < 60.0;
  double worst = 0.0;
  std::string failed;
  for (const auto& c : reports) {
    const bool tight = c.component == "linear" || c.component == "weighted_cross_entropy" || c.component == "mse";
    const double expected_tol = tight ? 1e-4 : 1e-3;
    const bool good = c.report.passed && c.report.tolerance <= expected_tol && c.report.entries_checked > 0;
    if (!good) failed += " " + c.component;
    ok = ok && good;
    worst = std::max(worst, c.report.max_rel_error);
  }
  std::string d = std::to_string(reports.size()) + " components, worst rel err " + fmt("%.2e", worst) + ", cpu " +
                  fmt("%.2f", cpu_s) + " s";
  if (!failed.empty()) d += ", failing:" + failed;
  return judge(ok && reports.size() >= 13, d);
}

Outcome cora_table() {
  const std::string tbl = "tbl:transductive";
  struct Check {
    TableRow row;
    std::string label;
    double lo, hi;
  };
  const double mlp = reference_or_die(tbl, "MLP", 0), gcn = reference_or_die(tbl, "GCN", 0),
               ld = reference_or_die(tbl, "LinkDistMLP", 0);
  std::string why;
  const Dataset* cora = dataset("cora", &why);
  if (!cora) {
    Outcome o = blocked(why);
    o.notes.push_back("reference values: MLP " + pct(mlp) + ", GCN " + pct(gcn) + ", LinkDistMLP " + pct(ld));
    return o;
  }
  const TableResult& t = semi_table("cora", *cora);
  const std::vector<Check> checks{{TableRow::kMlp, "MLP", mlp - 0.04, mlp + 0.04},
                                  {TableRow::kGcn, "GCN", gcn - 0.04, gcn + 0.04},
                                  {TableRow::kLinkDistMlp, "LinkDistMLP", ld - 0.04, ld + 0.04},
                                  {TableRow::kCoLinkDistMlp, "CoLinkDistMLP", 0.77, 1.0}};
  bool ok = true;
  std::string d;
  for (const auto& c : checks) {
    const double v = cell_mean(t, c.row);
    const bool in = v >= c.lo && v <= c.hi;
    ok = ok && in;
    d += (d.empty() ? "" : ", ") + c.label + " " + pct(v) + " in [" + pct(c.lo) + ", " + pct(c.hi) + "]" +
         (in ? "" : " (out)");
  }
  return judge(ok, d);
}

Outcome ordering() {
  std::string why_cora, why_cite;
  const Dataset* cora = dataset("cora", &why_cora);
  const Dataset* cite = dataset("citeseer", &why_cite);
  if (!cora || !cite) {
    const std::string tbl = "tbl:transductive";
    Outcome o = blocked(!cora ? why_cora : why_cite);
    o.notes.push_back("reference gaps LinkDistMLP - MLP: Cora " +
                      pct(reference_or_die(tbl, "LinkDistMLP", 0) - reference_or_die(tbl, "MLP", 0)) + ", Citeseer " +
                      pct(reference_or_die(tbl, "LinkDistMLP", 1) - reference_or_die(tbl, "MLP", 1)) + " pts");
    return o;
  }
  bool ok = true;
  std::string d;
  for (const auto& [name, ds] : {std::pair{"cora", cora}, std::pair{"citeseer", cite}}) {
    const TableResult& t = semi_table(name, *ds);
    const double mlp = cell_mean(t, TableRow::kMlp), ld = cell_mean(t, TableRow::kLinkDistMlp),
                 co = cell_mean(t, TableRow::kCoLinkDistMlp);
    const bool gap = ld - mlp >= 0.10, co_ok = co >= ld - 0.005;
    ok = ok && gap && co_ok;
    d += std::string(d.empty() ? "" : "; ") + name + ": LinkDistMLP-MLP " + pct(ld - mlp) + " pts" +
         (gap ? "" : " (< 10)") + ", CoLinkDistMLP " + pct(co) + " vs LinkDistMLP " + pct(ld) + (co_ok ? "" : " (low)");
  }
  return judge(ok, d);
}

Outcome full_supervised() {
  std::string why;
  const Dataset* cora = dataset("cora", &why);
  if (!cora) {
    const std::string tbl = "tbl:full-supervised";
    Outcome o = blocked(why);
    o.notes.push_back("reference values: LinkDistMLP " + pct(reference_or_die(tbl, "LinkDistMLP", 0)) +
                      ", GCN2MLP " + pct(reference_or_die(tbl, "GCN2MLP", 0)) + ", MLP " + pct(reference_or_die(tbl, "MLP", 0)));
    return o;
  }
  const ExperimentOptions o = ten_runs();
  auto mean = [&](Method m) {
    return run_experiment(m, *cora, ExperimentSetting::kFull, EvalMode::kMlp, o).mean_acc;
  };
  const double ld = mean(Method::kLinkDist), mlp = mean(Method::kMlp), g2m = mean(Method::kGcn2Mlp);
  const bool ld_ok = ld >= 0.82, gap_ok = std::abs(g2m - mlp) <= 0.03;
  return judge(ld_ok && gap_ok, "LinkDistMLP " + pct(ld) + (ld_ok ? " >= 82" : " < 82") + ", GCN2MLP " + pct(g2m) +
                                    " vs MLP " + pct(mlp) + (gap_ok ? " (within 3)" : " (apart > 3)"));
}

// The weighted-CE-only trainer used as the oracle: same stream order, same
// forward and backward calls, no matching terms at all.
void ce_only_epoch(ForkedMLP<float>& m, const TrainView& view, const std::vector<float>& w, size_t batch, double lr,
                   RunRngs& rngs) {
  std::vector<uint32_t> edges = view.visible_edges();
  rngs.shuffle.shuffle(std::span<uint32_t>(edges));
  const ParamList<float> params = m.params();
  for (const auto& [b, e] : batch_ranges(edges.size(), batch)) {
    std::vector<uint32_t> ii, jj, rows;
    std::vector<int32_t> yi, yj;
    for (size_t k = b; k < e; ++k) {
      const Edge ed = view.edge(edges[k]);
      ii.push_back(ed.u);
      jj.push_back(ed.v);
      yi.push_back(view.train_label(ed.u));
      yj.push_back(view.train_label(ed.v));
      rows.push_back(static_cast<uint32_t>(k - b));
    }
    ForkedMLP<float>::Cache ci, cj;
    const auto oi = m.forward(view.gather_features(ii), Mode::kTrain, &rngs.dropout, &ci);
    m.commit(ci);
    const auto oj = m.forward(view.gather_features(jj), Mode::kTrain, &rngs.dropout, &cj);
    m.commit(cj);
    const std::span<const float> ws(w);
    const auto dzi = cross_entropy_rows<float>(oi.z, rows, yi, ws).grad;
    const auto dsj = cross_entropy_rows<float>(oj.s, rows, yi, ws).grad;
    const auto dzj = cross_entropy_rows<float>(oj.z, rows, yj, ws).grad;
    const auto dsi = cross_entropy_rows<float>(oi.s, rows, yj, ws).grad;
    m.backward(ci, dzi, dsi);
    m.backward(cj, dzj, dsj);
    adam_step(params, lr);
  }
}

Outcome alpha_degeneracy() {
  RngStream sbm_rng(21, static_cast<uint64_t>(Stream::kSbm));
  const Graph g = generate_sbm({4, 150, 0.05, 0.005, 16, 1.0}, sbm_rng);
  const SplitMasks all_train{std::vector<Role>(g.num_nodes(), Role::kTrain)};
  const TrainView view(g, all_train, Setting::kTransductive);
  const AlphaSchedule a = alpha_schedule(view);
  if (a.alpha != 0.0) return fail("alpha_schedule gave " + fmt("%.17g", a.alpha) + " on a fully labelled view");

  const ClassWeights cw = class_weights(view);
  ForkedMLP<float> ld({g.num_features(), 256, g.num_classes()}), oracle = ld;
  RunRngs r1(5), r2(5);
  ld.init(r1.init);
  oracle.init(r2.init);
  LinkDistParams p;
  p.alpha = a.alpha;
  p.class_weights = cw.weights;
  p.batch_size = 256;
  const LossReport rep = linkdist_epoch(ld, view, p, r1);
  ce_only_epoch(oracle, view, cw.weights, p.batch_size, p.lr, r2);

  size_t differing = 0, total = 0;
  const auto pa = ld.params(), pb = oracle.params();
  for (size_t k = 0; k < pa.size(); ++k)
    for (size_t i = 0; i < pa[k]->value.size(); ++i, ++total)
      differing += std::memcmp(&pa[k]->value.data()[i], &pb[k]->value.data()[i], sizeof(float)) != 0;
  return judge(differing == 0 && rep.mse_term > 0.0,
               "alpha = 0 exactly (n_e " + std::to_string(a.n_e) + " of " + std::to_string(a.e_total) + "), " +
                   std::to_string(differing) + " of " + std::to_string(total) +
                   " weights differ from the CE-only trainer after one epoch");
}

Outcome mode_equivalence() {
  RngStream meta(99, 1);
  size_t mismatches = 0, nodes = 0;
  for (int trial = 0; trial < 100; ++trial) {
    SbmParams sp;
    sp.blocks = 2 + meta.uniform_index(5);
    sp.nodes_per_block = 10 + meta.uniform_index(40);
    sp.p_in = 0.05 + 0.3 * meta.uniform_double();
    sp.p_out = sp.p_in * 0.2 * meta.uniform_double();
    sp.feat_dim = 4 + meta.uniform_index(13);
    sp.feat_noise = 0.2 + 1.5 * meta.uniform_double();
    RngStream rng(static_cast<uint64_t>(trial), static_cast<uint64_t>(Stream::kSbm));
    const Graph g = generate_sbm(sp, rng);
    ForkedMLP<float> m({g.num_features(), 32, g.num_classes()});
    RngStream init(static_cast<uint64_t>(trial), static_cast<uint64_t>(Stream::kInit));
    m.init(init);
    // Perturb every parameter and the running statistics so the heads disagree.
    for (auto* p : m.params())
      for (auto& v : p->value.values()) v += static_cast<float>(0.3 * init.normal());
    const auto mp = predict_mp_mode(m, g, 0.0), mlp = predict_mlp_mode(m, g.features());
    for (size_t i = 0; i < mp.size(); ++i) mismatches += mp[i] != mlp[i];
    nodes += mp.size();
  }
  return judge(mismatches == 0,
               "100 graphs, " + std::to_string(nodes) + " nodes, " + std::to_string(mismatches) + " argmax mismatches");
}

struct LeakCounts {
  uint64_t eval_labels = 0, eval_features = 0, hidden_features = 0;
};

LeakCounts leak_run(const Graph& g, const SplitMasks& masks, Setting setting, size_t epochs) {
  LeakCounts total;
  for (Method m : {Method::kMlp, Method::kGcn, Method::kGcn2Mlp, Method::kLinkDist, Method::kCoLinkDist}) {
    const TrainView view(g, masks, setting);
    TrainConfig cfg;
    cfg.seed = 1;
    cfg.epochs = epochs;
    run_training(m, view, cfg);
    total.eval_labels += view.eval_label_reads();
    total.eval_features += view.eval_feature_reads();
    total.hidden_features += view.hidden_feature_reads();
  }
  return total;
}

std::string leak_text(const LeakCounts& c) {
  return "eval label reads " + std::to_string(c.eval_labels) + ", eval feature reads " +
         std::to_string(c.eval_features) + ", hidden feature reads " + std::to_string(c.hidden_features);
}

Outcome leak_free() {
  std::string why;
  const Dataset* cora = dataset("cora", &why);
  if (!cora) {
    // Not a substitute for the criterion; reported so the counters are seen working.
    RngStream rng(3, static_cast<uint64_t>(Stream::kSbm));
    const Graph g = generate_sbm({7, 387, 0.004, 0.0004, 64, 1.0}, rng, "sbm");
    RngStream split_rng(3, static_cast<uint64_t>(Stream::kSplit));
    const SplitMasks masks = make_semi_split(g, split_rng);
    Outcome o = blocked(why);
    o.notes.push_back("Cora-sized SBM, all five methods, inductive, 2 epochs: " +
                      leak_text(leak_run(g, masks, Setting::kInductive, 2)));
    return o;
  }
  const SplitMasks masks = cora->predefined_split ? *cora->predefined_split : split_for_run(*cora, ExperimentSetting::kSemiInductive, 0);
  const LeakCounts ind = leak_run(cora->graph, masks, Setting::kInductive, 0);
  const LeakCounts tra = leak_run(cora->graph, masks, Setting::kTransductive, 0);
  const bool ok = ind.eval_labels == 0 && ind.eval_features == 0 && ind.hidden_features == 0 && tra.eval_labels == 0;
  return judge(ok, "inductive: " + leak_text(ind) + "; transductive eval label reads " + std::to_string(tra.eval_labels));
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string("\"") + LINKDIST_CLI_PATH + "\" " + args + " > /dev/null 2>&1";
  const int rc = std::system(cmd.c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

Outcome cli_determinism() {
  test_util::TempDir dir;
  const std::string data = (dir / "sbm").string();
  if (run_cli("gen-sbm --out " + data + " --blocks 4 --nodes-per-block 60 --p-in 0.1 --p-out 0.01 --seed 8") != 0)
    return fail("gen-sbm failed");
  std::string outs[2];
  for (int k = 0; k < 2; ++k) {
    const std::string out = (dir / ("run" + std::to_string(k))).string();
    const int rc = run_cli("run --dataset " + data + " --method colinkdist --eval-mode mp --setting full --runs 3 --seed 42 " +
                           "--epochs 3 --jobs " + std::to_string(k + 1) + " --out " + out);
    if (rc != 0) return fail("run " + std::to_string(k) + " exited " + std::to_string(rc));
    outs[k] = test_util::read_bytes(fs::path(out) / "summary.json");
  }
  return judge(!outs[0].empty() && outs[0] == outs[1],
               "two invocations (1 and 2 jobs), summary.json " + std::to_string(outs[0].size()) + " bytes, " +
                   (outs[0] == outs[1] ? "identical" : "different"));
}

struct Criterion {
  std::string name;
  std::function<Outcome()> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all{
      {"gradcheck", gradient_oracle},        {"cora_table", cora_table},
      {"ordering", ordering},                {"full_supervised", full_supervised},
      {"alpha_degeneracy", alpha_degeneracy}, {"mode_equivalence", mode_equivalence},
      {"leak_free", leak_free},              {"cli_determinism", cli_determinism},
  };
  return all;
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
  std::string only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--only" && i + 1 < argc) {
      only = argv[++i];
    } else {
      std::cerr << "usage: acceptance [--only <criterion>]\n";
      return 2;
    }
  }
  bool any_fail = false, any_blocked = false, matched = false;
  for (const auto& c : criteria()) {
    if (!only.empty() && c.name != only) continue;
    matched = true;
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = fail(std::string("error: ") + e.what());
    }
    switch (o.verdict) {
      case Verdict::kPass: std::cout << "PASS " << c.name << ": " << o.detail << '\n'; break;
      case Verdict::kFail:
        std::cout << "FAIL " << c.name << ": " << o.detail << '\n';
        any_fail = true;
        break;
      case Verdict::kBlocked:
        std::cout << "FAIL " << c.name << " (blocked: " << o.detail << ")\n";
        any_blocked = true;
        break;
    }
    for (const auto& n : o.notes) std::cout << "     note: " << n << '\n';
    std::cout.flush();
  }
  if (!matched) {
    std::cerr << "unknown criterion '" << only << "'\n";
    return 2;
  }
  if (any_fail) return 1;
  return any_blocked ? 77 : 0;
}
