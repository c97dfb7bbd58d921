#include "linkdist/linkdist.h"

#include <cstring>
#include <sstream>

#include "linkdist/container.hpp"
#include "linkdist/experiment.hpp"
#include "linkdist/gradcheck.hpp"
#include "linkdist/snapshot.hpp"

struct ld_graph {
  linkdist::Dataset ds;
};

namespace {

thread_local std::string g_last_error;

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

template <typename Fn>
ld_status guarded(Fn&& fn) {
  try {
    g_last_error.clear();
    fn();
    return LD_OK;
  } catch (const linkdist::Error& e) {
    g_last_error = e.what();
    return static_cast<ld_status>(static_cast<int>(e.code()));
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return LD_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return LD_ERR_INTERNAL;
  }
}

void require(bool ok, const char* what) {
  if (!ok) throw linkdist::Error(linkdist::ErrorCode::kUsage, what);
}

linkdist::ExperimentSetting setting_of(const ld_run_config* cfg) {
  require(cfg->setting != nullptr, "setting is required");
  const auto s = linkdist::parse_setting(cfg->setting);
  if (!s) throw linkdist::Error(linkdist::ErrorCode::kUsage, std::string("unknown setting '") + cfg->setting + "'");
  return *s;
}

linkdist::ExperimentOptions options_of(const ld_run_config* cfg) {
  require(cfg->runs > 0, "runs must be positive");
  require(cfg->batch_size > 1, "batch size must be at least 2");
  require(cfg->lr > 0.0, "learning rate must be positive");
  linkdist::ExperimentOptions o;
  o.runs = cfg->runs;
  o.base_seed = cfg->seed;
  o.jobs = cfg->jobs == 0 ? 1 : cfg->jobs;
  o.train.lr = cfg->lr;
  o.train.batch_size = cfg->batch_size;
  o.train.epochs = cfg->epochs;
  if (cfg->has_alpha) {
    require(cfg->alpha >= 0.0 && cfg->alpha <= 1.0, "alpha must lie in [0, 1]");
    o.train.alpha = cfg->alpha;
  }
  if (cfg->log_dir) o.log_dir = cfg->log_dir;
  if (cfg->snapshot_dir) o.snapshot_dir = cfg->snapshot_dir;
  return o;
}

}  // namespace

extern "C" {

const char* ld_last_error(void) { return g_last_error.c_str(); }

const char* ld_status_name(ld_status s) {
  switch (s) {
    case LD_OK: return "ok";
    case LD_ERR_DIMENSION: return "dimension";
    case LD_ERR_VALIDATION: return "validation";
    case LD_ERR_FORMAT: return "format";
    case LD_ERR_IO: return "io";
    case LD_ERR_DEGENERATE_BATCH: return "degenerate_batch";
    case LD_ERR_INSUFFICIENT_NODES: return "insufficient_nodes";
    case LD_ERR_NO_EDGES: return "no_edges";
    case LD_ERR_SAMPLING: return "sampling";
    case LD_ERR_DETERMINISM: return "determinism";
    case LD_ERR_USAGE: return "usage";
    case LD_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

void ld_string_free(char* s) { std::free(s); }

void ld_run_config_init(ld_run_config* cfg) {
  if (!cfg) return;
  *cfg = ld_run_config{};
  cfg->method = "linkdist";
  cfg->setting = "semi-transductive";
  cfg->eval_mode = nullptr;
  cfg->runs = 10;
  cfg->seed = 0;
  cfg->jobs = 1;
  cfg->lr = 0.01;
  cfg->batch_size = 1024;
  cfg->epochs = 0;
  cfg->has_alpha = 0;
  cfg->alpha = 0.0;
}

ld_status ld_graph_load(const char* dir, ld_graph** out) {
  return guarded([&] {
    require(dir && out, "ld_graph_load: null argument");
    *out = new ld_graph{linkdist::load_container(dir)};
  });
}

ld_status ld_graph_save(const ld_graph* g, const char* dir) {
  return guarded([&] {
    require(g && dir, "ld_graph_save: null argument");
    linkdist::save_container(dir, g->ds.graph, g->ds.predefined_split);
  });
}

ld_status ld_graph_info_get(const ld_graph* g, ld_graph_info* out) {
  return guarded([&] {
    require(g && out, "ld_graph_info_get: null argument");
    const auto& gr = g->ds.graph;
    *out = {gr.num_nodes(), gr.num_features(), gr.num_classes(), gr.num_edges(), gr.has_labels() ? 1 : 0,
            g->ds.predefined_split ? 1 : 0};
  });
}

ld_status ld_generate_sbm(const ld_sbm_params* params, uint64_t seed, ld_graph** out) {
  return guarded([&] {
    require(params && out, "ld_generate_sbm: null argument");
    linkdist::SbmParams p;
    p.blocks = params->blocks;
    p.nodes_per_block = params->nodes_per_block;
    p.p_in = params->p_in;
    p.p_out = params->p_out;
    p.feat_dim = params->feat_dim;
    p.feat_noise = params->feat_noise;
    linkdist::RngStream rng = linkdist::make_stream(seed, linkdist::Stream::kSbm);
    *out = new ld_graph{linkdist::Dataset{linkdist::generate_sbm(p, rng, params->name ? params->name : "sbm"), std::nullopt}};
  });
}

void ld_graph_free(ld_graph* g) { delete g; }

ld_status ld_run(const ld_graph* g, const ld_run_config* cfg, char** summary_json, char** summary_text) {
  return guarded([&] {
    require(g && cfg && summary_json && summary_text, "ld_run: null argument");
    require(cfg->method != nullptr, "method is required");
    const auto method = linkdist::parse_method(cfg->method);
    if (!method) throw linkdist::Error(linkdist::ErrorCode::kUsage, std::string("unknown method '") + cfg->method + "'");
    const auto setting = setting_of(cfg);
    linkdist::EvalMode mode = linkdist::default_eval_mode(*method);
    if (cfg->eval_mode) {
      const auto m = linkdist::parse_eval_mode(cfg->eval_mode);
      if (!m) throw linkdist::Error(linkdist::ErrorCode::kUsage, std::string("unknown eval mode '") + cfg->eval_mode + "'");
      mode = *m;
    }
    linkdist::check_eval_mode(*method, mode);
    const auto opts = options_of(cfg);
    const auto summary = linkdist::run_experiment(*method, g->ds, setting, mode, opts);
    *summary_json = dup_string(linkdist::summary_json(summary, opts));
    *summary_text = dup_string(linkdist::summary_text(summary));
  });
}

ld_status ld_table(const ld_graph* const* graphs, size_t n, const ld_run_config* cfg, char** table_json,
                   char** table_text) {
  return guarded([&] {
    require(cfg && table_json && table_text, "ld_table: null argument");
    require(n > 0 && graphs, "table needs at least one dataset");
    std::vector<const linkdist::Dataset*> ds;
    for (size_t k = 0; k < n; ++k) {
      require(graphs[k] != nullptr, "ld_table: null graph");
      ds.push_back(&graphs[k]->ds);
    }
    const auto setting = setting_of(cfg);
    const auto opts = options_of(cfg);
    const auto table = linkdist::run_table(ds, setting, opts);
    *table_json = dup_string(linkdist::table_json(table, opts));
    *table_text = dup_string(linkdist::table_text(table));
  });
}

ld_status ld_gradcheck(const char* fault, uint64_t seed, char** report, int* all_passed) {
  return guarded([&] {
    require(report && all_passed, "ld_gradcheck: null argument");
    const auto site = linkdist::parse_fault_site(fault ? fault : "none");
    if (!site) throw linkdist::Error(linkdist::ErrorCode::kUsage, std::string("unknown fault site '") + fault + "'");
    const auto results = linkdist::run_gradcheck_suite(seed, *site);
    std::ostringstream out;
    bool ok = true;
    for (const auto& c : results) {
      char line[256];
      std::snprintf(line, sizeof line, "%-24s max_rel_err %.3e  tol %.0e  entries %4zu  %s", c.component.c_str(),
                    c.report.max_rel_error, c.report.tolerance, c.report.entries_checked,
                    c.report.passed ? "ok" : "FAIL");
      out << line;
      if (!c.report.passed) out << " (worst: " << c.report.worst_param << ")";
      out << '\n';
      ok = ok && c.report.passed;
    }
    *report = dup_string(out.str());
    *all_passed = ok ? 1 : 0;
  });
}

ld_status ld_predict(const char* snapshot_dir, const ld_graph* g, const char* eval_mode, int32_t* out, size_t out_len) {
  return guarded([&] {
    require(snapshot_dir && g && out, "ld_predict: null argument");
    const auto& graph = g->ds.graph;
    require(out_len == graph.num_nodes(), "ld_predict: output length differs from the node count");
    const linkdist::Snapshot snap = linkdist::load_snapshot(snapshot_dir);
    const auto mode = linkdist::parse_eval_mode(eval_mode ? eval_mode : "mlp");
    require(mode.has_value(), "ld_predict: unknown eval mode");
    std::vector<int32_t> pred;
    if (const auto* m = std::get_if<linkdist::ForkedMLP<float>>(&snap.model)) {
      pred = *mode == linkdist::EvalMode::kMp ? linkdist::predict_mp_mode(*m, graph, snap.alpha.value_or(0.0))
                                               : linkdist::predict_mlp_mode(*m, graph.features());
    } else {
      const auto& net = std::get<linkdist::ThreeLayerNet<float>>(snap.model);
      if (snap.method == "gcn") {
        const auto adj = linkdist::normalized_adjacency(graph);
        pred = linkdist::argmax_rows(linkdist::gcn_forward(net, adj, graph.features(), linkdist::Mode::kEval, nullptr));
      } else {
        pred = linkdist::argmax_rows(linkdist::infer_logits(net, graph.features()));
      }
    }
    std::copy(pred.begin(), pred.end(), out);
  });
}

}  // extern "C"
