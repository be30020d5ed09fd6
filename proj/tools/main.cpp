// vidfocus command line front end. Everything goes through the C API.
//
// Exit codes: 0 success, 1 validation or runtime failure, 2 usage error.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "vidfocus/vidfocus.h"

namespace {

using json = nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

struct Failure {
  std::string message;
};

struct BufferDeleter {
  void operator()(vf_buffer* b) const { vf_buffer_free(b); }
};
using Buffer = std::unique_ptr<vf_buffer, BufferDeleter>;

struct MatrixDeleter {
  void operator()(vf_matrix* m) const { vf_matrix_free(m); }
};
using MatrixHandle = std::unique_ptr<vf_matrix, MatrixDeleter>;

void check(vf_status st, const char* what) {
  if (st != VF_OK) {
    throw Failure{std::string(what) + ": " + vf_status_name(st) + ": " + vf_last_error()};
  }
}

std::string buffer_text(const Buffer& b) { return std::string(vf_buffer_data(b.get()), vf_buffer_size(b.get())); }

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Failure{"cannot open " + path};
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string env_or_empty(const char* name) {
  const char* v = std::getenv(name);
  return v == nullptr ? std::string() : std::string(v);
}

// Keys accepted in --config files. Anything else is rejected.
const std::map<std::string, json::value_t> kConfigKeys = {
    {"seed", json::value_t::number_unsigned},
    {"values", json::value_t::string},
    {"arrangement", json::value_t::string},
    {"interval_f_s", json::value_t::number_float},
    {"native_fps", json::value_t::number_float},
    {"max_frames", json::value_t::number_unsigned},
    {"clamp_to_native_fps", json::value_t::boolean},
    {"backend", json::value_t::string},
    {"backend_url", json::value_t::string},
    {"backend_width", json::value_t::number_unsigned},
    {"judge_url", json::value_t::string},
    {"judge_concurrency", json::value_t::number_unsigned},
    {"metadata", json::value_t::string},
    {"transcripts", json::value_t::string},
    {"frame_scores", json::value_t::string},
    {"knowledge_out", json::value_t::string},
    {"qa_out", json::value_t::string},
    {"report_out", json::value_t::string},
    {"predictions", json::value_t::string},
    {"references", json::value_t::string},
};

bool type_matches(const json& v, json::value_t want) {
  switch (want) {
    case json::value_t::number_float: return v.is_number();
    case json::value_t::number_unsigned: return v.is_number_unsigned();
    default: return v.type() == want;
  }
}

json load_config(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text_file(path));
  } catch (const json::parse_error& e) {
    throw Failure{"config " + path + ": " + e.what()};
  }
  if (!j.is_object()) throw Failure{"config " + path + ": top level must be an object"};
  for (const auto& [key, value] : j.items()) {
    const auto it = kConfigKeys.find(key);
    if (it == kConfigKeys.end()) throw Failure{"config " + path + ": unknown key \"" + key + "\""};
    if (!type_matches(value, it->second)) throw Failure{"config " + path + ": wrong type for \"" + key + "\""};
  }
  return j;
}

// Fills a value from the config file unless the flag was given explicitly.
class ConfigBinder {
 public:
  void bind(CLI::Option* opt, const std::string& key, std::function<void(const json&)> apply) {
    bindings_.push_back({opt, key, std::move(apply)});
  }
  // The same key can be bound from several subcommands; a flag given on any
  // of them wins over the file.
  void apply(const json& cfg) const {
    std::set<std::string> explicit_keys;
    for (const auto& b : bindings_) {
      if (b.opt->count() > 0) explicit_keys.insert(b.key);
    }
    std::set<std::string> applied;
    for (const auto& b : bindings_) {
      if (explicit_keys.count(b.key) || !cfg.contains(b.key) || !applied.insert(b.key).second) continue;
      b.apply(cfg.at(b.key));
    }
  }

 private:
  struct Binding {
    CLI::Option* opt;
    std::string key;
    std::function<void(const json&)> apply;
  };
  std::vector<Binding> bindings_;
};

template <typename T>
void bind_value(ConfigBinder& binder, CLI::Option* opt, const std::string& key, T& target) {
  binder.bind(opt, key, [&target](const json& v) { target = v.get<T>(); });
}

vf_value_source parse_values(const std::string& s) {
  if (s == "low_frequency") return VF_VALUES_LOW_FREQUENCY;
  if (s == "clip_literal") return VF_VALUES_CLIP_LITERAL;
  throw Failure{"unknown value source \"" + s + "\""};
}

vf_arrangement parse_arrangement(const std::string& s) {
  if (s == "concat") return VF_ARRANGE_CONCAT_AFTER_LOW_FREQUENCY;
  if (s == "fused_only") return VF_ARRANGE_FUSED_ONLY;
  throw Failure{"unknown arrangement \"" + s + "\""};
}

void write_output(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    std::cout.flush();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Failure{"cannot write " + path};
  out << text;
}

struct Options {
  std::string config_path;
  // shared
  std::uint64_t seed = 0;
  std::string values = "low_frequency";
  std::string arrangement = "concat";
  double interval_f_s = 10.0;
  double native_fps = 30.0;
  std::size_t max_frames = 0;
  bool clamp = true;
  bool no_clamp = false;
  // sample-plan / infer
  double duration_s = 0.0;
  std::optional<double> clip_start_s;
  std::optional<double> clip_end_s;
  // fuse
  std::string clip_tokens;
  std::string low_tokens;
  std::string out = "-";
  // build-dataset
  std::string metadata, transcripts, frame_scores, knowledge_out, qa_out, report_out;
  double frame_threshold = 0.5;
  double segment_threshold = 0.8;
  // evaluate
  std::string predictions, references;
  bool judge = false;
  std::string judge_url;
  std::size_t judge_concurrency = 4;
  // gradcheck
  std::string suite = "all";
  std::size_t cases = 100;
  // infer
  std::string question1, question2, question1_file, question2_file;
  std::string backend = "toy";
  std::string backend_url;
  std::size_t backend_width = 16;
  std::size_t max_new1 = 256;
  std::size_t max_new2 = 256;
};

int run_sample_plan(const Options& o) {
  vf_plan_options p;
  vf_plan_options_init(&p);
  p.duration_s = o.duration_s;
  p.native_fps = o.native_fps;
  p.interval_f_s = o.interval_f_s;
  p.max_frames = o.max_frames;
  p.clamp_to_native_fps = o.clamp && !o.no_clamp;
  if (o.clip_start_s.has_value() != o.clip_end_s.has_value()) {
    throw Failure{"--clip-start and --clip-end must be given together"};
  }
  if (o.clip_start_s) {
    p.has_clip = 1;
    p.clip_start_s = *o.clip_start_s;
    p.clip_end_s = *o.clip_end_s;
  }
  vf_buffer* raw = nullptr;
  check(vf_sample_plan(&p, &raw), "sample-plan");
  Buffer out(raw);
  std::cout << buffer_text(out) << "\n";
  return kExitOk;
}

int run_fuse(const Options& o) {
  vf_matrix* c = nullptr;
  vf_matrix* f = nullptr;
  check(vf_matrix_read_file(o.clip_tokens.c_str(), &c), "clip tokens");
  MatrixHandle clip(c);
  check(vf_matrix_read_file(o.low_tokens.c_str(), &f), "low-frequency tokens");
  MatrixHandle low(f);
  vf_matrix* e = nullptr;
  check(vf_fuse(clip.get(), low.get(), parse_values(o.values), parse_arrangement(o.arrangement), &e),
        "fuse");
  MatrixHandle fused(e);
  vf_buffer* raw = nullptr;
  check(vf_matrix_format(fused.get(), &raw), "format");
  Buffer text(raw);
  write_output(o.out, buffer_text(text));
  return kExitOk;
}

int run_build_dataset(const Options& o) {
  vf_dataset_options d;
  vf_dataset_options_init(&d);
  d.metadata_path = o.metadata.c_str();
  d.transcript_path = o.transcripts.c_str();
  d.frame_scores_path = o.frame_scores.c_str();
  d.knowledge_out_path = o.knowledge_out.c_str();
  d.qa_out_path = o.qa_out.c_str();
  d.report_out_path = o.report_out.empty() ? nullptr : o.report_out.c_str();
  d.frame_threshold = o.frame_threshold;
  d.segment_threshold = o.segment_threshold;
  vf_buffer* raw = nullptr;
  std::size_t violations = 0;
  check(vf_build_dataset(&d, &raw, &violations), "build-dataset");
  Buffer report(raw);
  std::cout << buffer_text(report) << "\n";
  if (violations > 0) {
    std::cerr << "build-dataset: " << violations << " validation violation(s)\n";
    return kExitFailure;
  }
  return kExitOk;
}

int run_evaluate(const Options& o) {
  vf_eval_options e;
  vf_eval_options_init(&e);
  e.predictions_path = o.predictions.c_str();
  e.references_path = o.references.c_str();
  const std::string url = o.judge_url.empty() ? env_or_empty("VIDFOCUS_JUDGE_URL") : o.judge_url;
  const std::string key = env_or_empty("VIDFOCUS_JUDGE_API_KEY");
  if (o.judge) {
    if (url.empty()) throw Failure{"--judge needs --judge-url, judge_url in the config, or VIDFOCUS_JUDGE_URL"};
    e.use_judge = 1;
    e.judge.url = url.c_str();
    e.judge.api_key = key.c_str();
    e.judge_concurrency = o.judge_concurrency;
  }
  vf_buffer* raw = nullptr;
  check(vf_evaluate(&e, &raw), "evaluate");
  Buffer report(raw);
  write_output(o.out, buffer_text(report) + "\n");
  return kExitOk;
}

int run_gradcheck(const Options& o) {
  vf_buffer* raw = nullptr;
  int passed = 0;
  check(vf_gradcheck(o.suite.c_str(), o.seed, o.cases, &raw, &passed), "gradcheck");
  Buffer report(raw);
  std::cout << buffer_text(report) << "\n";
  std::cerr << "gradcheck " << o.suite << ": " << (passed ? "PASS" : "FAIL") << "\n";
  return passed ? kExitOk : kExitFailure;
}

int run_infer(const Options& o) {
  const std::string q1 = o.question1_file.empty() ? o.question1 : read_text_file(o.question1_file);
  const std::string q2 = o.question2_file.empty() ? o.question2 : read_text_file(o.question2_file);
  if (!o.clip_start_s || !o.clip_end_s) throw Failure{"infer needs --clip-start and --clip-end"};
  vf_infer_options p;
  vf_infer_options_init(&p);
  p.duration_s = o.duration_s;
  p.native_fps = o.native_fps;
  p.interval_f_s = o.interval_f_s;
  p.max_frames = o.max_frames;
  p.clip_start_s = *o.clip_start_s;
  p.clip_end_s = *o.clip_end_s;
  p.question1 = q1.c_str();
  p.question2 = q2.c_str();
  p.seed = o.seed;
  p.values = parse_values(o.values);
  p.arrangement = parse_arrangement(o.arrangement);
  p.max_new_tokens_stage1 = o.max_new1;
  p.max_new_tokens_stage2 = o.max_new2;
  const std::string key = env_or_empty("VIDFOCUS_BACKEND_API_KEY");
  if (o.backend == "remote") {
    if (o.backend_url.empty()) throw Failure{"remote backend needs --url or backend_url in the config"};
    p.backend = VF_BACKEND_REMOTE;
    p.remote.url = o.backend_url.c_str();
    p.remote.api_key = key.c_str();
    p.remote_width = o.backend_width;
  } else if (o.backend == "toy") {
    p.backend = VF_BACKEND_TOY;
  } else {
    throw Failure{"unknown backend \"" + o.backend + "\""};
  }
  vf_buffer* raw = nullptr;
  check(vf_infer(&p, &raw), "infer");
  Buffer result(raw);
  std::cout << buffer_text(result) << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  ConfigBinder binder;
  CLI::App app{"vidfocus: two-stage video QA sampling, fusion attention, dataset and metric tools"};
  app.set_version_flag("--version", std::string(vf_version()));
  app.require_subcommand(1, 1);
  app.add_option("--config", o.config_path, "JSON config file; flags override its values")
      ->check(CLI::ExistingFile);

  auto add_sampling = [&](CLI::App* sub) {
    bind_value(binder, sub->add_option("--interval", o.interval_f_s, "full-video sampling interval I_F (s)")
                           ->capture_default_str(),
               "interval_f_s", o.interval_f_s);
    bind_value(binder, sub->add_option("--fps", o.native_fps, "native frame rate")->capture_default_str(),
               "native_fps", o.native_fps);
    bind_value(binder, sub->add_option("--max-frames", o.max_frames, "frame cap per plan, 0 = none")
                           ->capture_default_str(),
               "max_frames", o.max_frames);
  };
  auto add_fusion_mode = [&](CLI::App* sub) {
    bind_value(binder,
               sub->add_option("--values", o.values, "value source: low_frequency | clip_literal")
                   ->capture_default_str(),
               "values", o.values);
    bind_value(binder,
               sub->add_option("--arrangement", o.arrangement, "output: concat | fused_only")
                   ->capture_default_str(),
               "arrangement", o.arrangement);
  };
  auto add_seed = [&](CLI::App* sub) {
    bind_value(binder, sub->add_option("--seed", o.seed, "random seed")->capture_default_str(), "seed",
               o.seed);
  };

  CLI::App* plan = app.add_subcommand("sample-plan", "print a frame sampling plan as JSON");
  plan->add_option("--duration", o.duration_s, "video duration T (s)")->required();
  add_sampling(plan);
  plan->add_option("--clip-start", o.clip_start_s, "clip start (s); selects the clip plan");
  plan->add_option("--clip-end", o.clip_end_s, "clip end (s)");
  auto* no_clamp = plan->add_flag("--no-clamp", o.no_clamp, "do not clamp I_C to the native frame period");
  binder.bind(no_clamp, "clamp_to_native_fps", [&o](const json& v) { o.clamp = v.get<bool>(); });

  CLI::App* fuse = app.add_subcommand("fuse", "fuse clip tokens with low-frequency tokens");
  fuse->add_option("--clip", o.clip_tokens, "clip (query) token matrix file")->required();
  fuse->add_option("--low", o.low_tokens, "low-frequency (key) token matrix file")->required();
  fuse->add_option("--out", o.out, "output file, - for stdout")->capture_default_str();
  add_fusion_mode(fuse);

  CLI::App* build = app.add_subcommand("build-dataset", "build knowledge and QA corpora");
  bind_value(binder, build->add_option("--metadata", o.metadata, "video metadata JSONL"), "metadata",
             o.metadata);
  bind_value(binder, build->add_option("--transcripts", o.transcripts, "transcript JSONL"), "transcripts",
             o.transcripts);
  bind_value(binder, build->add_option("--frame-scores", o.frame_scores, "frame score JSONL"),
             "frame_scores", o.frame_scores);
  bind_value(binder, build->add_option("--knowledge-out", o.knowledge_out, "knowledge corpus output"),
             "knowledge_out", o.knowledge_out);
  bind_value(binder, build->add_option("--qa-out", o.qa_out, "QA corpus output"), "qa_out", o.qa_out);
  bind_value(binder, build->add_option("--report-out", o.report_out, "validation report output"),
             "report_out", o.report_out);
  build->add_option("--frame-threshold", o.frame_threshold, "per-frame surgical score threshold")
      ->capture_default_str();
  build->add_option("--segment-threshold", o.segment_threshold, "required surgical frame fraction")
      ->capture_default_str();

  CLI::App* eval = app.add_subcommand("evaluate", "score predictions against references");
  bind_value(binder, eval->add_option("--predictions", o.predictions, "predictions JSONL {id, candidate}"),
             "predictions", o.predictions);
  bind_value(binder,
             eval->add_option("--references", o.references, "references JSONL {id, references, task}"),
             "references", o.references);
  eval->add_flag("--judge", o.judge, "score with the judge client (key from VIDFOCUS_JUDGE_API_KEY)");
  bind_value(binder, eval->add_option("--judge-url", o.judge_url, "judge endpoint (or VIDFOCUS_JUDGE_URL)"),
             "judge_url", o.judge_url);
  bind_value(binder,
             eval->add_option("--judge-concurrency", o.judge_concurrency, "max in-flight judge requests")
                 ->capture_default_str(),
             "judge_concurrency", o.judge_concurrency);
  eval->add_option("--out", o.out, "output file, - for stdout")->capture_default_str();

  CLI::App* grad = app.add_subcommand("gradcheck", "finite-difference gradient verification");
  grad->add_option("--suite", o.suite, "fusion | toy | all")
      ->check(CLI::IsMember({"fusion", "toy", "all"}))
      ->capture_default_str();
  grad->add_option("--cases", o.cases, "random instances per suite")->capture_default_str();
  add_seed(grad);

  CLI::App* infer = app.add_subcommand("infer", "run two-stage inference and print both answers");
  infer->add_option("--duration", o.duration_s, "video duration T (s)")->required();
  infer->add_option("--clip-start", o.clip_start_s, "question-related clip start (s)")->required();
  infer->add_option("--clip-end", o.clip_end_s, "question-related clip end (s)")->required();
  auto* q1 = infer->add_option("--question1", o.question1, "stage-one question");
  auto* q1f = infer->add_option("--question1-file", o.question1_file, "read the stage-one question from a file");
  auto* q2 = infer->add_option("--question2", o.question2, "stage-two question");
  auto* q2f = infer->add_option("--question2-file", o.question2_file, "read the stage-two question from a file");
  q1->excludes(q1f);
  q2->excludes(q2f);
  bind_value(binder, infer->add_option("--backend", o.backend, "toy | remote")->capture_default_str(),
             "backend", o.backend);
  bind_value(binder, infer->add_option("--url", o.backend_url, "remote endpoint (key from VIDFOCUS_BACKEND_API_KEY)"),
             "backend_url", o.backend_url);
  bind_value(binder,
             infer->add_option("--width", o.backend_width, "remote embedding width")->capture_default_str(),
             "backend_width", o.backend_width);
  infer->add_option("--max-new1", o.max_new1, "stage-one token budget")->capture_default_str();
  infer->add_option("--max-new2", o.max_new2, "stage-two token budget")->capture_default_str();
  add_sampling(infer);
  add_fusion_mode(infer);
  add_seed(infer);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    CLI::App* failed = &app;
    for (CLI::App* sub : app.get_subcommands()) failed = sub;
    std::cerr << failed->help();
    return kExitUsage;
  }

  try {
    if (!o.config_path.empty()) binder.apply(load_config(o.config_path));
    if (*plan) return run_sample_plan(o);
    if (*fuse) return run_fuse(o);
    if (*build) {
      for (const auto* p : {&o.metadata, &o.transcripts, &o.frame_scores, &o.knowledge_out, &o.qa_out}) {
        if (p->empty()) {
          std::cerr << "error: build-dataset needs --metadata, --transcripts, --frame-scores, "
                       "--knowledge-out and --qa-out\n\n"
                    << build->help();
          return kExitUsage;
        }
      }
      return run_build_dataset(o);
    }
    if (*eval) {
      if (o.predictions.empty() || o.references.empty()) {
        std::cerr << "error: evaluate needs --predictions and --references\n\n" << eval->help();
        return kExitUsage;
      }
      return run_evaluate(o);
    }
    if (*grad) return run_gradcheck(o);
    if (*infer) {
      if ((o.question1.empty() && o.question1_file.empty()) || (o.question2.empty() && o.question2_file.empty())) {
        std::cerr << "error: infer needs both questions\n\n" << infer->help();
        return kExitUsage;
      }
      return run_infer(o);
    }
  } catch (const Failure& f) {
    std::cerr << "error: " << f.message << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  std::cerr << app.help();
  return kExitUsage;
}
