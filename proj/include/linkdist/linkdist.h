/* C interface to the linkdist library. All strings returned through char**
 * out-parameters are owned by the caller and released with ld_string_free.
 * On failure a function returns a non-zero ld_status and ld_last_error()
 * describes the problem (per thread, valid until the next call). */
#ifndef LINKDIST_LINKDIST_H
#define LINKDIST_LINKDIST_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum {
  LD_OK = 0,
  LD_ERR_DIMENSION = 1,
  LD_ERR_VALIDATION = 2,
  LD_ERR_FORMAT = 3,
  LD_ERR_IO = 4,
  LD_ERR_DEGENERATE_BATCH = 5,
  LD_ERR_INSUFFICIENT_NODES = 6,
  LD_ERR_NO_EDGES = 7,
  LD_ERR_SAMPLING = 8,
  LD_ERR_DETERMINISM = 9,
  LD_ERR_USAGE = 10,
  LD_ERR_INTERNAL = 99
} ld_status;

typedef struct ld_graph ld_graph;

typedef struct {
  uint64_t num_nodes;
  uint64_t num_features;
  uint64_t num_classes;
  uint64_t num_edges;
  int has_labels;
  int has_predefined_split;
} ld_graph_info;

typedef struct {
  uint32_t blocks;
  uint32_t nodes_per_block;
  double p_in;
  double p_out;
  uint32_t feat_dim;
  double feat_noise;
  const char* name; /* NULL: "sbm" */
} ld_sbm_params;

typedef struct {
  const char* method;    /* mlp, gcn, gcn2mlp, linkdist, colinkdist */
  const char* setting;   /* semi-transductive, semi-inductive, full */
  const char* eval_mode; /* mlp, mp, or NULL for the method default */
  uint32_t runs;
  uint64_t seed;
  uint32_t jobs;
  double lr;
  uint32_t batch_size;
  uint32_t epochs; /* 0: method default */
  int has_alpha;
  double alpha;
  const char* log_dir;      /* NULL: no per-run logs */
  const char* snapshot_dir; /* NULL: no snapshot */
} ld_run_config;

const char* ld_last_error(void);
const char* ld_status_name(ld_status s);
void ld_string_free(char* s);

void ld_run_config_init(ld_run_config* cfg);

ld_status ld_graph_load(const char* dir, ld_graph** out);
ld_status ld_graph_save(const ld_graph* g, const char* dir);
ld_status ld_graph_info_get(const ld_graph* g, ld_graph_info* out);
ld_status ld_generate_sbm(const ld_sbm_params* params, uint64_t seed, ld_graph** out);
void ld_graph_free(ld_graph* g);

/* One method over cfg->runs seeded runs. */
ld_status ld_run(const ld_graph* g, const ld_run_config* cfg, char** summary_json, char** summary_text);
/* All seven table rows over n graphs; cfg->method and cfg->eval_mode are ignored. */
ld_status ld_table(const ld_graph* const* graphs, size_t n, const ld_run_config* cfg, char** table_json,
                   char** table_text);

/* fault: NULL or "none", "linear", "batch_norm", "layer_norm", "cross_entropy", "mse". */
ld_status ld_gradcheck(const char* fault, uint64_t seed, char** report, int* all_passed);

/* Class per node from a saved snapshot; out must hold num_nodes entries. */
ld_status ld_predict(const char* snapshot_dir, const ld_graph* g, const char* eval_mode, int32_t* out, size_t out_len);

#ifdef __cplusplus
}
#endif

#endif
