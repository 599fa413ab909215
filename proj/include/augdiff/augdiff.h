#ifndef AUGDIFF_AUGDIFF_H
#define AUGDIFF_AUGDIFF_H

#include <stddef.h>
#include <stdint.h>

#if defined(AUGD_BUILDING_LIBRARY)
#define AUGD_API __attribute__((visibility("default")))
#else
#define AUGD_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Every fallible call returns a status; on failure augd_last_error() holds a
 * message for the calling thread until its next failing call. */
typedef enum augd_status {
  AUGD_OK = 0,
  AUGD_ERR_INVALID_ARGUMENT = 1,
  AUGD_ERR_IO = 2,
  AUGD_ERR_BAD_MAGIC = 3,
  AUGD_ERR_BAD_VERSION = 4,
  AUGD_ERR_CORRUPT = 5,
  AUGD_ERR_SHAPE = 6,
  AUGD_ERR_RUNTIME = 7,
  AUGD_ERR_INTERNAL = 8
} augd_status;

AUGD_API const char* augd_last_error(void);
AUGD_API const char* augd_status_string(augd_status status);
AUGD_API const char* augd_version(void);

/* ---- datasets ---- */

typedef struct augd_dataset augd_dataset;

typedef struct augd_synth_spec {
  uint64_t n_images;
  uint32_t size;
  double lesion_intensity_min;
  double lesion_intensity_max;
  double lesion_radius_min;
  double lesion_radius_max;
  double background_sigma;
  double background_std;
  double positive_fraction;
  uint64_t seed;
  uint64_t group_offset;
} augd_synth_spec;

AUGD_API void augd_synth_spec_default(augd_synth_spec* spec);
AUGD_API augd_status augd_dataset_generate(const augd_synth_spec* spec, augd_dataset** out);
/* Reads `path` and its sibling label CSV (extension replaced by .csv). */
AUGD_API augd_status augd_dataset_load(const char* path, augd_dataset** out);
AUGD_API augd_status augd_dataset_save(const augd_dataset* data, const char* path);
AUGD_API void augd_dataset_free(augd_dataset* data);
AUGD_API size_t augd_dataset_size(const augd_dataset* data);
AUGD_API uint32_t augd_dataset_image_size(const augd_dataset* data);
/* Copies image `index` (size*size doubles) into `out`. */
AUGD_API augd_status augd_dataset_image(const augd_dataset* data, size_t index, double* out);
AUGD_API augd_status augd_dataset_label(const augd_dataset* data, size_t index, int* label);

/* ---- training configuration ---- */

/* Flat key/value settings; strategy defaults are applied when resolved, then
 * every other key overrides them. Later assignments win. */
typedef struct augd_config augd_config;

AUGD_API augd_status augd_config_new(augd_config** out);
AUGD_API void augd_config_free(augd_config* cfg);
AUGD_API augd_status augd_config_set(augd_config* cfg, const char* key, const char* value);
/* Merges `key = value` lines from a file. */
AUGD_API augd_status augd_config_load_file(augd_config* cfg, const char* path);
/* Resolves and validates, failing with the reason for rejected settings. */
AUGD_API augd_status augd_config_validate(const augd_config* cfg);
/* Writes the resolved config text (NUL-terminated) into buf. *needed receives
 * the required capacity including the terminator. */
AUGD_API augd_status augd_config_format(const augd_config* cfg, char* buf, size_t cap, size_t* needed);
/* Number of documented keys and the i-th key name. */
AUGD_API size_t augd_config_key_count(void);
AUGD_API const char* augd_config_key(size_t i);

/* ---- training ---- */

typedef struct augd_epoch_summary {
  uint64_t epoch;
  uint64_t batches;
  double mean_loss_con;
  double mean_loss_sup;
  double seconds;
} augd_epoch_summary;

typedef void (*augd_epoch_callback)(const augd_epoch_summary* summary, void* user);

/* Trains into run_dir (config.txt, metrics.csv, checkpoints/, final.ckpt). */
AUGD_API augd_status augd_train(const augd_config* cfg, const augd_dataset* data, const char* run_dir,
                                augd_epoch_callback on_epoch, void* user);

/* ---- models ---- */

typedef struct augd_model augd_model;

AUGD_API augd_status augd_model_load(const char* checkpoint, augd_model** out);
/* Freshly initialized networks for a config (seeded as training would). */
AUGD_API augd_status augd_model_init(const augd_config* cfg, augd_model** out);
AUGD_API augd_status augd_model_save(const augd_model* model, const char* checkpoint);
AUGD_API void augd_model_free(augd_model* model);
AUGD_API int augd_model_has_transform_net(const augd_model* model);
AUGD_API uint32_t augd_model_latent_dim(const augd_model* model);
/* Lambda [n,7] predicted by the transformation network for n images. */
AUGD_API augd_status augd_model_transform_params(const augd_model* model, const double* images, size_t n,
                                                 uint32_t size, double* out);
/* Encoder features [n, latent] of the dataset images. */
AUGD_API augd_status augd_model_features(const augd_model* model, const augd_dataset* data, double* out);

/* ---- evaluation ---- */

#define AUGD_MAX_SPLITS 32

typedef struct augd_eval_options {
  uint32_t splits;
  uint32_t steps;
  double lr;
  uint64_t seed;
  int standardize;
} augd_eval_options;

typedef struct augd_eval_report {
  double auc_mean;
  double auc_std;
  uint32_t n_splits;
  double split_aucs[AUGD_MAX_SPLITS];
} augd_eval_report;

AUGD_API void augd_eval_options_default(augd_eval_options* opts);
/* Linear evaluation of the model's frozen encoder on a labeled pool. */
AUGD_API augd_status augd_evaluate(const augd_model* model, const augd_dataset* pool, const augd_eval_options* opts,
                                   augd_eval_report* out);
/* Fails with AUGD_ERR_INVALID_ARGUMENT when `pool` shares group ids with the
 * pre-training pool recorded in run_dir/train_groups.txt. */
AUGD_API augd_status augd_check_eval_pool(const char* run_dir, const augd_dataset* pool);
AUGD_API augd_status augd_roc_auc(const double* scores, const int* labels, size_t n, double* out);

/* ---- transforms ---- */

/* Applies the composition in `order` ("G,N,Crop,Flip0,Flip1,R" when NULL) to
 * one size x size image. Noise is drawn from noise_seed. */
AUGD_API augd_status augd_transform_compose(const double* image, uint32_t size, const double params[7],
                                            const char* order, uint64_t noise_seed, double* out);
/* n uniform lambda vectors [n,7] from seed. */
AUGD_API augd_status augd_sample_random_lambda(uint64_t seed, size_t n, double* out);

/* ---- gradient checks ---- */

typedef struct augd_gradcheck_options {
  double h;
  double tolerance;
  uint32_t draws;
  uint32_t image_size;
  double e2e_h;
  double e2e_tolerance;
  uint64_t seed;
  /* Comma-separated subset of blur,noise,crop,flip0,flip1,rotate,compose,end-to-end; NULL or "" for all. */
  const char* only;
} augd_gradcheck_options;

typedef struct augd_gradcheck_row {
  char check[32];
  char target[64];
  double max_rel_error;
  double tolerance;
  uint32_t draws;
  int pass;
} augd_gradcheck_row;

AUGD_API void augd_gradcheck_options_default(augd_gradcheck_options* opts);
/* Fills up to `cap` rows; *count receives the total row count. */
AUGD_API augd_status augd_grad_check(const augd_gradcheck_options* opts, augd_gradcheck_row* rows, size_t cap,
                                     size_t* count, int* all_pass);

#ifdef __cplusplus
}
#endif

#endif
