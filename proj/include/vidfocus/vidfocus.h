/*
 * vidfocus C API.
 *
 * Every function returns a vf_status. On failure the message for the calling
 * thread is available from vf_last_error() until the next failing call on
 * that thread. Objects handed out through an out-parameter are owned by the
 * caller and released with the matching *_free function.
 */
#ifndef VIDFOCUS_VIDFOCUS_H
#define VIDFOCUS_VIDFOCUS_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(VIDFOCUS_BUILDING)
#    define VF_API __declspec(dllexport)
#  else
#    define VF_API __declspec(dllimport)
#  endif
#else
#  define VF_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum vf_status {
  VF_OK = 0,
  VF_ERR_INVALID_ARGUMENT = 1,
  VF_ERR_SHAPE = 2,
  VF_ERR_RANGE = 3,
  VF_ERR_PARSE = 4,
  VF_ERR_IO = 5,
  VF_ERR_BACKEND = 6,
  VF_ERR_INTERNAL = 7
} vf_status;

VF_API const char* vf_status_name(vf_status status);
VF_API const char* vf_last_error(void);
VF_API const char* vf_version(void);

/* Owned byte string. Data is NUL-terminated but may contain embedded NULs. */
typedef struct vf_buffer vf_buffer;
VF_API const char* vf_buffer_data(const vf_buffer* buffer);
VF_API size_t vf_buffer_size(const vf_buffer* buffer);
VF_API void vf_buffer_free(vf_buffer* buffer);

/* ---- matrices ---------------------------------------------------------- */

typedef struct vf_matrix vf_matrix;

/* data holds rows*cols finite values in row-major order; may be NULL for a
 * zero-filled matrix. */
VF_API vf_status vf_matrix_new(size_t rows, size_t cols, const double* data,
                               vf_matrix** out);
/* Text format: "rows cols" then whitespace separated row-major values. */
VF_API vf_status vf_matrix_parse(const char* text, size_t len, vf_matrix** out);
VF_API vf_status vf_matrix_read_file(const char* path, vf_matrix** out);
VF_API vf_status vf_matrix_format(const vf_matrix* m, vf_buffer** out);
VF_API size_t vf_matrix_rows(const vf_matrix* m);
VF_API size_t vf_matrix_cols(const vf_matrix* m);
VF_API const double* vf_matrix_data(const vf_matrix* m);
VF_API void vf_matrix_free(vf_matrix* m);

/* ---- fusion attention -------------------------------------------------- */

typedef enum vf_value_source {
  VF_VALUES_LOW_FREQUENCY = 0,
  VF_VALUES_CLIP_LITERAL = 1
} vf_value_source;

typedef enum vf_arrangement {
  VF_ARRANGE_CONCAT_AFTER_LOW_FREQUENCY = 0,
  VF_ARRANGE_FUSED_ONLY = 1
} vf_arrangement;

/* clip_tokens are the high-frequency queries, low_freq_tokens the keys. */
VF_API vf_status vf_fuse(const vf_matrix* clip_tokens, const vf_matrix* low_freq_tokens,
                         vf_value_source values, vf_arrangement arrangement,
                         vf_matrix** out);

/* ---- frame sampling ---------------------------------------------------- */

typedef struct vf_plan_options {
  double duration_s;
  double native_fps;
  double interval_f_s;
  /* 0 = unlimited */
  size_t max_frames;
  int clamp_to_native_fps;
  /* non-zero selects the clip plan over [clip_start_s, clip_end_s] */
  int has_clip;
  double clip_start_s;
  double clip_end_s;
} vf_plan_options;

VF_API void vf_plan_options_init(vf_plan_options* opts);
/* JSON: {"stage": "...", "interval_s": x, "timestamps_s": [...]} */
VF_API vf_status vf_sample_plan(const vf_plan_options* opts, vf_buffer** json_out);

/* ---- completion clients ------------------------------------------------ */

/* Callback clients receive the wire request JSON
 * {"text": ..., "visual_tokens": [[...]], "max_new_tokens": n} and answer
 * with the generated text through vf_reply_set. A non-OK return is reported
 * as a backend error. */
typedef struct vf_reply vf_reply;
VF_API vf_status vf_reply_set(vf_reply* reply, const char* text, size_t len);
typedef vf_status (*vf_complete_fn)(void* user_data, const char* request_json,
                                    size_t request_len, vf_reply* reply);

typedef struct vf_client {
  /* Used when non-NULL; otherwise url selects the HTTP client. */
  vf_complete_fn callback;
  void* user_data;
  const char* url;
  const char* api_key;
  int timeout_s;
} vf_client;

/* ---- toy model ----------------------------------------------------------- */

typedef struct vf_toy_config {
  size_t vocab_size;
  size_t d;
  size_t n_layers;
  size_t mlp_width;
  size_t max_seq;
  uint64_t seed;
  double init_scale;
} vf_toy_config;

typedef struct vf_toy_model vf_toy_model;

/* Defaults suitable for the byte-level backend: vocab 257, d 16, 2 layers. */
VF_API void vf_toy_config_init(vf_toy_config* cfg);
VF_API vf_status vf_toy_model_new(const vf_toy_config* cfg, vf_toy_model** out);
VF_API void vf_toy_model_free(vf_toy_model* model);
/* Logits for [visual ; text], shape (visual rows + n_ids) x vocab. visual may
 * be NULL. */
VF_API vf_status vf_toy_forward(const vf_toy_model* model, const uint32_t* ids, size_t n_ids,
                                const vf_matrix* visual, vf_matrix** logits_out);
/* Greedy continuation; out_ids must hold max_new entries. */
VF_API vf_status vf_toy_greedy_decode(const vf_toy_model* model, const uint32_t* prompt_ids,
                                      size_t n_prompt, const vf_matrix* visual,
                                      size_t max_new, uint32_t* out_ids, size_t* out_len);

/* ---- two-stage inference ----------------------------------------------- */

typedef enum vf_backend_kind { VF_BACKEND_TOY = 0, VF_BACKEND_REMOTE = 1 } vf_backend_kind;

typedef struct vf_infer_options {
  double duration_s;
  double native_fps;
  double interval_f_s;
  size_t max_frames;
  double clip_start_s;
  double clip_end_s;
  const char* question1;
  const char* question2;
  uint64_t seed;
  vf_value_source values;
  vf_arrangement arrangement;
  size_t max_new_tokens_stage1;
  size_t max_new_tokens_stage2;
  vf_backend_kind backend;
  /* Toy backend configuration; its seed is overridden by `seed`. */
  vf_toy_config toy;
  /* Remote backend client and declared embedding width. */
  vf_client remote;
  size_t remote_width;
} vf_infer_options;

VF_API void vf_infer_options_init(vf_infer_options* opts);
/* JSON: {"answer1": ..., "answer2": ..., "stage2_prompt": ..., ...} */
VF_API vf_status vf_infer(const vf_infer_options* opts, vf_buffer** json_out);

/* ---- dataset construction ---------------------------------------------- */

typedef struct vf_dataset_options {
  const char* metadata_path;
  const char* transcript_path;
  const char* frame_scores_path;
  const char* knowledge_out_path;
  const char* qa_out_path;
  /* optional */
  const char* report_out_path;
  double frame_threshold;
  double segment_threshold;
  /* Augmentation client; when neither callback nor url is set the
   * deterministic offline augmenter is used. */
  vf_client augmenter;
} vf_dataset_options;

VF_API void vf_dataset_options_init(vf_dataset_options* opts);
VF_API vf_status vf_build_dataset(const vf_dataset_options* opts, vf_buffer** report_json,
                                  size_t* violation_count);
/* Validates existing corpora written by vf_build_dataset. */
VF_API vf_status vf_validate_corpus(const char* knowledge_path, const char* qa_path,
                                    vf_buffer** report_json, size_t* violation_count);

/* ---- evaluation ---------------------------------------------------------- */

typedef struct vf_eval_options {
  const char* predictions_path;
  const char* references_path;
  int use_judge;
  vf_client judge;
  size_t judge_concurrency;
} vf_eval_options;

VF_API void vf_eval_options_init(vf_eval_options* opts);
VF_API vf_status vf_evaluate(const vf_eval_options* opts, vf_buffer** report_json);

/* ---- gradient verification ----------------------------------------------- */

/* suite: "fusion", "toy" or "all". all_passed is set to 1 or 0. */
VF_API vf_status vf_gradcheck(const char* suite, uint64_t seed, size_t cases,
                              vf_buffer** report_json, int* all_passed);

#ifdef __cplusplus
}
#endif

#endif /* VIDFOCUS_VIDFOCUS_H */
