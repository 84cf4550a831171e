/*
 * C API for the PathTree hierarchical slide-classification engine.
 *
 * All functions return pt_status; on failure pt_last_error() carries a
 * single-line "<Code>: <detail>" message (thread local). Objects returned
 * through pt_* handles are owned by the caller and released with the
 * matching *_free / *_close call. Strings returned through char** are
 * heap-allocated and released with pt_string_free().
 */
#ifndef PATHTREE_H
#define PATHTREE_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum pt_status {
  PT_OK = 0,
  PT_USAGE_ERROR = 1,   /* bad arguments or configuration keys */
  PT_DATA_ERROR = 2,    /* parse, validation, or file errors */
  PT_NUMERIC_ERROR = 3  /* non-finite loss or failed gradient check */
} pt_status;

const char* pt_last_error(void);
void pt_string_free(char* s);

/* ------------------------------------------------------------- taxonomy */
typedef struct pt_taxonomy pt_taxonomy;

pt_status pt_taxonomy_open(const char* path, pt_taxonomy** out);
pt_status pt_taxonomy_parse(const char* json_text, pt_taxonomy** out);
void pt_taxonomy_close(pt_taxonomy* t);

int pt_taxonomy_node_count(const pt_taxonomy* t);
int pt_taxonomy_leaf_count(const pt_taxonomy* t);
int pt_taxonomy_root_id(const pt_taxonomy* t);
/* NULL when node_id is out of range; pointer valid until close. */
const char* pt_taxonomy_node_name(const pt_taxonomy* t, int node_id);
/* Root-first path into buffer (capacity ints); length always written. */
pt_status pt_taxonomy_find_path(const pt_taxonomy* t, int node_id, int* buffer,
                                int capacity, int* length);
pt_status pt_taxonomy_sibling(const pt_taxonomy* t, int node_id, int* sibling_out);
/* Dense class index of a leaf node, -1 for internal nodes. */
int pt_taxonomy_leaf_class(const pt_taxonomy* t, int node_id);
/* Leaf node id for a class index, -1 when out of range. */
int pt_taxonomy_class_leaf(const pt_taxonomy* t, int class_index);

/* ------------------------------------------------------- configuration */
/*
 * Flat key=value overrides applied over compiled defaults. Keys:
 *   seed epochs folds fold variant model fusion d_k landmarks pinv_iters
 *   lr beta1 beta2 weight_decay eps clip_norm threads debug_checks
 *   lambda_leaf lambda_sibling lambda_parent mu_match mu_path tau_init
 *   squared_triplet dim slides_per_class patches_min patches_max
 *   signal_fraction separation gc_leaves gc_dim gc_patches gc_tol gc_coords
 *   gc_variant resume coarse_grouping
 * The PATHTREE_SEED environment variable seeds the default (lowest
 * precedence); an explicit "seed" override wins.
 */
typedef struct pt_config pt_config;

pt_config* pt_config_new(void);
void pt_config_free(pt_config* c);
pt_status pt_config_set(pt_config* c, const char* key, const char* value);
pt_status pt_config_set_kv(pt_config* c, const char* key_equals_value);
/* Effective configuration (defaults overlaid with overrides), one key=value
 * per line, keys sorted. */
pt_status pt_config_dump(const pt_config* c, char** text_out);

/* ----------------------------------------------------------- workflows */

/* Validates the taxonomy file; report starts with
 * "nodes=<n> leaves=<n> internal=<n>" followed by a per-node path table. */
pt_status pt_validate_tree(const char* taxonomy_path, char** report_out);

/* Materializes a synthetic dataset (manifest.tsv, prompts.pte,
 * per-slide embedding files) under out_dir. */
pt_status pt_synth(const char* taxonomy_path, const char* out_dir, const pt_config* cfg);

/* Writes fold_<i>_train.tsv / fold_<i>_val.tsv manifests under out_dir. */
pt_status pt_split(const char* manifest_path, const char* out_dir, const pt_config* cfg);

/* Trains one fold; writes checkpoint_best.ptck, checkpoint_last.ptck and
 * train_log.tsv under out_dir. summary_out (optional) receives key=value
 * lines. prompts_path may be empty for model=linear-probe. */
pt_status pt_train(const char* data_root, const char* manifest_path,
                   const char* taxonomy_path, const char* prompts_path,
                   const char* out_dir, const pt_config* cfg, char** summary_out);

/* Inference + metrics; writes metrics.txt, metrics.json and
 * predictions.json under out_dir. report_out (optional) receives the
 * metrics text. */
pt_status pt_evaluate(const char* checkpoint_path, const char* data_root,
                      const char* manifest_path, const char* taxonomy_path,
                      const char* prompts_path, const char* out_dir,
                      const pt_config* cfg, char** report_out);

/* Inference only; writes per-slide predictions (JSON) to out_json. */
pt_status pt_predict(const char* checkpoint_path, const char* data_root,
                     const char* manifest_path, const char* taxonomy_path,
                     const char* prompts_path, const char* out_json,
                     const pt_config* cfg);

/* Attention scores of one slide for one tree node (node_id < 0 selects the
 * predicted leaf) exported as CSV. */
pt_status pt_heatmap(const char* checkpoint_path, const char* data_root,
                     const char* manifest_path, const char* taxonomy_path,
                     const char* prompts_path, const char* slide_id, int node_id,
                     const char* out_csv, const pt_config* cfg);

/* Central-difference check of the full training objective on a random
 * instance. Returns PT_NUMERIC_ERROR when the max relative error reaches
 * gc_tol; report/err outputs are filled either way. */
pt_status pt_gradcheck(const pt_config* cfg, double* max_rel_err_out, char** report_out);

#ifdef __cplusplus
}
#endif

#endif /* PATHTREE_H */
