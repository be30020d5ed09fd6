#include "vidfocus/vidfocus.h"

#include <cstring>
#include <memory>
#include <string>

#include <json.hpp>

#include "vidfocus/dataset.hpp"
#include "vidfocus/error.hpp"
#include "vidfocus/gradcheck.hpp"
#include "vidfocus/matrix_io.hpp"
#include "vidfocus/metrics.hpp"
#include "vidfocus/orchestrator.hpp"

struct vf_buffer {
  std::string bytes;
};

struct vf_matrix {
  vidfocus::Matrix value;
};

struct vf_toy_model {
  vidfocus::ToyModel model;
};

struct vf_reply {
  std::string text;
  bool set = false;
};

namespace {

using namespace vidfocus;

thread_local std::string g_last_error;

vf_status fail(vf_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

vf_status status_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidArgument: return VF_ERR_INVALID_ARGUMENT;
    case ErrorKind::Shape: return VF_ERR_SHAPE;
    case ErrorKind::Range: return VF_ERR_RANGE;
    case ErrorKind::Parse: return VF_ERR_PARSE;
    case ErrorKind::Io: return VF_ERR_IO;
    case ErrorKind::Backend: return VF_ERR_BACKEND;
  }
  return VF_ERR_INTERNAL;
}

// Runs fn, translating exceptions into status codes. Nothing escapes the C
// boundary.
template <typename Fn>
vf_status guarded(Fn&& fn) {
  try {
    fn();
    return VF_OK;
  } catch (const Error& e) {
    return fail(status_for(e.kind()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(VF_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(VF_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(VF_ERR_INTERNAL, "unknown error");
  }
}

#define VF_REQUIRE(cond, msg)                                          \
  do {                                                                 \
    if (!(cond)) return fail(VF_ERR_INVALID_ARGUMENT, (msg));          \
  } while (0)

vf_buffer* make_buffer(std::string bytes) { return new vf_buffer{std::move(bytes)}; }

std::string opt_string(const char* s) { return s == nullptr ? std::string() : std::string(s); }

FusionConfig fusion_config(vf_value_source values, vf_arrangement arrangement) {
  FusionConfig cfg;
  cfg.value_source = values == VF_VALUES_CLIP_LITERAL ? ValueSource::ClipValuesLiteral
                                                      : ValueSource::LowFrequencyValues;
  cfg.output_arrangement = arrangement == VF_ARRANGE_FUSED_ONLY
                               ? OutputArrangement::FusedOnly
                               : OutputArrangement::ConcatAfterLowFrequency;
  return cfg;
}

// Null when the client names neither a callback nor a URL.
std::shared_ptr<CompletionClient> make_client(const vf_client& c) {
  if (c.callback != nullptr) {
    const vf_complete_fn fn = c.callback;
    void* user = c.user_data;
    return std::make_shared<CallbackClient>([fn, user](const std::string& request) {
      vf_reply reply;
      const vf_status st = fn(user, request.c_str(), request.size(), &reply);
      if (st != VF_OK) {
        throw BackendError(std::string("callback client returned ") + vf_status_name(st));
      }
      if (!reply.set) throw BackendError("callback client did not set a reply");
      return reply.text;
    });
  }
  if (c.url != nullptr && c.url[0] != '\0') {
    HttpClientConfig cfg;
    cfg.url = c.url;
    cfg.api_key = opt_string(c.api_key);
    if (c.timeout_s > 0) cfg.timeout = std::chrono::seconds(c.timeout_s);
    return std::make_shared<HttpClient>(cfg);
  }
  return nullptr;
}

ToyModelConfig toy_config(const vf_toy_config& c) {
  ToyModelConfig cfg;
  cfg.vocab_size = c.vocab_size;
  cfg.d = c.d;
  cfg.n_layers = c.n_layers;
  cfg.n_heads = 1;
  cfg.mlp_width = c.mlp_width;
  cfg.max_seq = c.max_seq;
  cfg.seed = c.seed;
  cfg.init_scale = c.init_scale;
  return cfg;
}

std::string validation_json(const ValidationReport& report) {
  DatasetBuild build;
  build.report = report;
  auto j = nlohmann::ordered_json::parse(build_report_to_json(build));
  for (const char* key : {"videos", "keysteps_total", "keysteps_retained", "qa_input", "qa_dropped"})
    j.erase(key);
  return j.dump(2);
}

}  // namespace

extern "C" {

const char* vf_status_name(vf_status status) {
  switch (status) {
    case VF_OK: return "ok";
    case VF_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case VF_ERR_SHAPE: return "shape_error";
    case VF_ERR_RANGE: return "range_error";
    case VF_ERR_PARSE: return "parse_error";
    case VF_ERR_IO: return "io_error";
    case VF_ERR_BACKEND: return "backend_error";
    case VF_ERR_INTERNAL: return "internal_error";
  }
  return "unknown";
}

const char* vf_last_error(void) { return g_last_error.c_str(); }

const char* vf_version(void) { return VIDFOCUS_VERSION; }

const char* vf_buffer_data(const vf_buffer* buffer) {
  return buffer == nullptr ? "" : buffer->bytes.c_str();
}

size_t vf_buffer_size(const vf_buffer* buffer) {
  return buffer == nullptr ? 0 : buffer->bytes.size();
}

void vf_buffer_free(vf_buffer* buffer) { delete buffer; }

vf_status vf_matrix_new(size_t rows, size_t cols, const double* data, vf_matrix** out) {
  VF_REQUIRE(out != nullptr, "vf_matrix_new: out is NULL");
  return guarded([&] {
    std::vector<double> values(rows * cols, 0.0);
    if (data != nullptr) values.assign(data, data + rows * cols);
    *out = new vf_matrix{Matrix(rows, cols, std::move(values))};
  });
}

vf_status vf_matrix_parse(const char* text, size_t len, vf_matrix** out) {
  VF_REQUIRE(text != nullptr && out != nullptr, "vf_matrix_parse: NULL argument");
  return guarded([&] { *out = new vf_matrix{parse_matrix_text(std::string_view(text, len))}; });
}

vf_status vf_matrix_read_file(const char* path, vf_matrix** out) {
  VF_REQUIRE(path != nullptr && out != nullptr, "vf_matrix_read_file: NULL argument");
  return guarded([&] { *out = new vf_matrix{read_matrix_file(path)}; });
}

vf_status vf_matrix_format(const vf_matrix* m, vf_buffer** out) {
  VF_REQUIRE(m != nullptr && out != nullptr, "vf_matrix_format: NULL argument");
  return guarded([&] { *out = make_buffer(format_matrix_text(m->value)); });
}

size_t vf_matrix_rows(const vf_matrix* m) { return m == nullptr ? 0 : m->value.rows(); }
size_t vf_matrix_cols(const vf_matrix* m) { return m == nullptr ? 0 : m->value.cols(); }
const double* vf_matrix_data(const vf_matrix* m) {
  return m == nullptr ? nullptr : m->value.data().data();
}
void vf_matrix_free(vf_matrix* m) { delete m; }

vf_status vf_fuse(const vf_matrix* clip_tokens, const vf_matrix* low_freq_tokens,
                  vf_value_source values, vf_arrangement arrangement, vf_matrix** out) {
  VF_REQUIRE(clip_tokens != nullptr && low_freq_tokens != nullptr && out != nullptr,
             "vf_fuse: NULL argument");
  return guarded([&] {
    const TokenMatrix fused =
        fuse(TokenMatrix(clip_tokens->value, TokenSource::HighFrequency),
             TokenMatrix(low_freq_tokens->value, TokenSource::LowFrequency),
             fusion_config(values, arrangement));
    *out = new vf_matrix{fused.data()};
  });
}

void vf_plan_options_init(vf_plan_options* opts) {
  if (opts == nullptr) return;
  *opts = vf_plan_options{};
  opts->native_fps = 30.0;
  opts->interval_f_s = 10.0;
  opts->clamp_to_native_fps = 1;
}

vf_status vf_sample_plan(const vf_plan_options* opts, vf_buffer** json_out) {
  VF_REQUIRE(opts != nullptr && json_out != nullptr, "vf_sample_plan: NULL argument");
  return guarded([&] {
    VideoMeta meta;
    meta.duration_s = opts->duration_s;
    meta.native_fps = opts->native_fps;
    SamplerConfig cfg;
    cfg.max_frames = opts->max_frames;
    cfg.clamp_to_native_fps = opts->clamp_to_native_fps != 0;
    const FrameSamplePlan plan =
        opts->has_clip != 0
            ? plan_clip(meta, ClipSpan{opts->clip_start_s, opts->clip_end_s}, opts->interval_f_s, cfg)
            : plan_full_video(meta, opts->interval_f_s, cfg);
    *json_out = make_buffer(plan_to_json(plan));
  });
}

vf_status vf_reply_set(vf_reply* reply, const char* text, size_t len) {
  VF_REQUIRE(reply != nullptr && (text != nullptr || len == 0), "vf_reply_set: NULL argument");
  reply->text.assign(text == nullptr ? "" : text, len);
  reply->set = true;
  return VF_OK;
}

void vf_toy_config_init(vf_toy_config* cfg) {
  if (cfg == nullptr) return;
  cfg->vocab_size = 257;
  cfg->d = 16;
  cfg->n_layers = 2;
  cfg->mlp_width = 32;
  cfg->max_seq = 1024;
  cfg->seed = 0;
  cfg->init_scale = 0.02;
}

vf_status vf_toy_model_new(const vf_toy_config* cfg, vf_toy_model** out) {
  VF_REQUIRE(cfg != nullptr && out != nullptr, "vf_toy_model_new: NULL argument");
  return guarded([&] { *out = new vf_toy_model{ToyModel::init(toy_config(*cfg))}; });
}

void vf_toy_model_free(vf_toy_model* model) { delete model; }

vf_status vf_toy_forward(const vf_toy_model* model, const uint32_t* ids, size_t n_ids,
                         const vf_matrix* visual, vf_matrix** logits_out) {
  VF_REQUIRE(model != nullptr && logits_out != nullptr && (ids != nullptr || n_ids == 0),
             "vf_toy_forward: NULL argument");
  return guarded([&] {
    const std::vector<TokenId> text(ids, ids + n_ids);
    const Matrix empty(0, model->model.config().d);
    *logits_out = new vf_matrix{forward(model->model, text, visual ? visual->value : empty)};
  });
}

vf_status vf_toy_greedy_decode(const vf_toy_model* model, const uint32_t* prompt_ids,
                               size_t n_prompt, const vf_matrix* visual, size_t max_new,
                               uint32_t* out_ids, size_t* out_len) {
  VF_REQUIRE(model != nullptr && out_len != nullptr && (prompt_ids != nullptr || n_prompt == 0) &&
                 (out_ids != nullptr || max_new == 0),
             "vf_toy_greedy_decode: NULL argument");
  return guarded([&] {
    const std::vector<TokenId> prompt(prompt_ids, prompt_ids + n_prompt);
    const Matrix empty(0, model->model.config().d);
    const auto ids = greedy_decode(model->model, prompt, visual ? visual->value : empty, max_new);
    std::copy(ids.begin(), ids.end(), out_ids);
    *out_len = ids.size();
  });
}

void vf_infer_options_init(vf_infer_options* opts) {
  if (opts == nullptr) return;
  *opts = vf_infer_options{};
  opts->native_fps = 30.0;
  opts->interval_f_s = 10.0;
  opts->values = VF_VALUES_LOW_FREQUENCY;
  opts->arrangement = VF_ARRANGE_CONCAT_AFTER_LOW_FREQUENCY;
  opts->max_new_tokens_stage1 = 256;
  opts->max_new_tokens_stage2 = 256;
  opts->backend = VF_BACKEND_TOY;
  vf_toy_config_init(&opts->toy);
  opts->remote_width = 16;
}

vf_status vf_infer(const vf_infer_options* opts, vf_buffer** json_out) {
  VF_REQUIRE(opts != nullptr && json_out != nullptr, "vf_infer: NULL argument");
  VF_REQUIRE(opts->question1 != nullptr && opts->question2 != nullptr,
             "vf_infer: both questions are required");
  return guarded([&] {
    VideoMeta meta;
    meta.duration_s = opts->duration_s;
    meta.native_fps = opts->native_fps;

    std::unique_ptr<Backend> backend;
    std::size_t width = 0;
    if (opts->backend == VF_BACKEND_REMOTE) {
      auto client = make_client(opts->remote);
      if (!client) throw InvalidArgument("remote backend needs a callback or a url");
      width = opts->remote_width;
      backend = std::make_unique<RemoteBackend>(std::move(client), width);
    } else {
      ToyModelConfig cfg = toy_config(opts->toy);
      cfg.seed = opts->seed;
      width = cfg.d;
      backend = std::make_unique<ToyBackend>(ToyModel::init(cfg));
    }
    if (width == 0) throw InvalidArgument("backend embedding width must be positive");
    SeededFrameEncoder encoder(width, opts->seed);

    TwoStageOptions options;
    options.interval_f_s = opts->interval_f_s;
    options.sampler.max_frames = opts->max_frames;
    options.fusion = fusion_config(opts->values, opts->arrangement);
    options.max_new_tokens_stage1 = opts->max_new_tokens_stage1;
    options.max_new_tokens_stage2 = opts->max_new_tokens_stage2;
    const TwoStageResult result =
        run_two_stage(meta, encoder, opts->question1,
                      StageTwoRequest{opts->question2, {opts->clip_start_s, opts->clip_end_s}},
                      *backend, options);

    nlohmann::ordered_json j;
    j["answer1"] = result.answer1;
    j["answer2"] = result.answer2;
    j["stage2_prompt"] = result.stage2_prompt;
    j["full_plan"] = nlohmann::ordered_json::parse(plan_to_json(result.full_plan));
    j["clip_plan"] = nlohmann::ordered_json::parse(plan_to_json(result.clip_plan));
    j["stage2_visual_tokens"] = result.stage2_visual_tokens;
    *json_out = make_buffer(j.dump(2, ' ', false, nlohmann::ordered_json::error_handler_t::replace));
  });
}

void vf_dataset_options_init(vf_dataset_options* opts) {
  if (opts == nullptr) return;
  *opts = vf_dataset_options{};
  opts->frame_threshold = 0.5;
  opts->segment_threshold = 0.8;
}

vf_status vf_build_dataset(const vf_dataset_options* opts, vf_buffer** report_json,
                           size_t* violation_count) {
  VF_REQUIRE(opts != nullptr && opts->metadata_path != nullptr && opts->transcript_path != nullptr &&
                 opts->frame_scores_path != nullptr && opts->knowledge_out_path != nullptr &&
                 opts->qa_out_path != nullptr,
             "vf_build_dataset: input and output paths are required");
  return guarded([&] {
    DatasetPaths paths{opts->metadata_path,      opts->transcript_path, opts->frame_scores_path,
                       opts->knowledge_out_path, opts->qa_out_path,     opt_string(opts->report_out_path)};
    FilterConfig filter;
    filter.frame_threshold = opts->frame_threshold;
    filter.segment_threshold = opts->segment_threshold;
    auto client = make_client(opts->augmenter);
    OfflineAugmenter offline;
    std::unique_ptr<ClientAugmenter> remote;
    Augmenter* augmenter = &offline;
    if (client) {
      remote = std::make_unique<ClientAugmenter>(*client);
      augmenter = remote.get();
    }
    const DatasetBuild build = build_dataset_files(paths, *augmenter, filter);
    if (report_json != nullptr) *report_json = make_buffer(build_report_to_json(build));
    if (violation_count != nullptr) *violation_count = build.report.violations.size();
  });
}

vf_status vf_validate_corpus(const char* knowledge_path, const char* qa_path,
                             vf_buffer** report_json, size_t* violation_count) {
  VF_REQUIRE(knowledge_path != nullptr && qa_path != nullptr, "vf_validate_corpus: NULL path");
  return guarded([&] {
    const ValidationReport report =
        validate_corpus(read_knowledge_corpus(knowledge_path), read_qa_corpus(qa_path));
    if (report_json != nullptr) *report_json = make_buffer(validation_json(report));
    if (violation_count != nullptr) *violation_count = report.violations.size();
  });
}

void vf_eval_options_init(vf_eval_options* opts) {
  if (opts == nullptr) return;
  *opts = vf_eval_options{};
  opts->judge_concurrency = 4;
}

vf_status vf_evaluate(const vf_eval_options* opts, vf_buffer** report_json) {
  VF_REQUIRE(opts != nullptr && report_json != nullptr && opts->predictions_path != nullptr &&
                 opts->references_path != nullptr,
             "vf_evaluate: predictions and references paths are required");
  return guarded([&] {
    const auto samples = load_eval_samples(opts->predictions_path, opts->references_path);
    ScoringOptions scoring;
    std::shared_ptr<CompletionClient> judge;
    if (opts->use_judge != 0) {
      judge = make_client(opts->judge);
      if (!judge) throw InvalidArgument("judge enabled but no callback or url configured");
      scoring.judge = judge.get();
      scoring.judge_concurrency = opts->judge_concurrency;
    }
    const auto scores = score_samples(samples, scoring);
    *report_json = make_buffer(report_to_json(aggregate(samples, scores)));
  });
}

vf_status vf_gradcheck(const char* suite, uint64_t seed, size_t cases, vf_buffer** report_json,
                       int* all_passed) {
  VF_REQUIRE(suite != nullptr && report_json != nullptr, "vf_gradcheck: NULL argument");
  const std::string name(suite);
  VF_REQUIRE(name == "fusion" || name == "toy" || name == "all",
             "vf_gradcheck: suite must be fusion, toy or all");
  VF_REQUIRE(cases > 0, "vf_gradcheck: cases must be positive");
  return guarded([&] {
    std::vector<GradcheckSuite> suites;
    if (name != "toy") suites.push_back(run_fusion_gradcheck(seed, cases));
    if (name != "fusion") suites.push_back(run_toy_gradcheck(seed, cases));
    bool ok = true;
    for (const auto& s : suites) ok = ok && s.passed;
    *report_json = make_buffer(gradcheck_to_json(suites));
    if (all_passed != nullptr) *all_passed = ok ? 1 : 0;
  });
}

}  // extern "C"
