#include "vidfocus/orchestrator.hpp"

#include <cmath>

#include "vidfocus/error.hpp"
#include "vidfocus/random.hpp"

namespace vidfocus {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::string call_backend(Backend& backend, const BackendRequest& request,
                         const char* stage) {
  if (request.visual_tokens.width() != backend.embedding_width()) {
    throw ShapeError(std::string(stage) + ": visual token width " +
                     std::to_string(request.visual_tokens.width()) +
                     " does not match backend width " +
                     std::to_string(backend.embedding_width()));
  }
  try {
    return backend.generate(request);
  } catch (const std::exception& e) {
    throw BackendError(std::string(stage) + ": " + e.what());
  }
}

}  // namespace

std::string build_stage2_prompt(std::string_view answer1, std::string_view question2) {
  std::string out;
  out.reserve(kVideoPlaceholder.size() + answer1.size() +
              kBackgroundInstruction.size() + question2.size() + 2);
  out.append(kVideoPlaceholder);
  out.append(answer1);
  out.push_back('\n');
  out.append(kBackgroundInstruction);
  out.push_back('\n');
  out.append(question2);
  return out;
}

TokenMatrix SeededFrameEncoder::encode(const FrameSamplePlan& plan, TokenSource source) {
  std::vector<double> data;
  data.reserve(plan.size() * width_);
  for (double t : plan.timestamps_s) {
    const auto ms = static_cast<std::uint64_t>(std::llround(t * 1000.0));
    Rng rng(splitmix64(seed_ ^ splitmix64(ms)));
    for (std::size_t j = 0; j < width_; ++j) data.push_back(rng.normal());
  }
  return TokenMatrix(Matrix(plan.size(), width_, std::move(data)), source);
}

ToyBackend::ToyBackend(ToyModel model) : model_(std::move(model)) {
  if (model_.config().vocab_size < 257) {
    throw InvalidArgument("toy backend: byte tokenizer needs vocab_size >= 257, got " +
                          std::to_string(model_.config().vocab_size));
  }
}

std::string ToyBackend::generate(const BackendRequest& request) {
  const auto ids = encode_bytes(request.text);
  return decode_bytes(
      greedy_decode(model_, ids, request.visual_tokens.data(), request.max_new_tokens));
}

std::string RemoteBackend::generate(const BackendRequest& request) {
  WireRequest wire{request.text, request.visual_tokens.data(), request.max_new_tokens};
  return client_->complete(wire);
}

TwoStageResult run_two_stage(const VideoMeta& video, TokensProvider& tokens,
                             const std::string& question1,
                             const StageTwoRequest& request, Backend& backend,
                             const TwoStageOptions& options) {
  video.validate();
  if (request.question.empty()) throw InvalidArgument("stage 2: question must be non-empty");
  validate_clip(video, request.clip);

  TwoStageResult result;
  result.full_plan = plan_full_video(video, options.interval_f_s, options.sampler);
  StageOneResult stage_one{
      "", tokens.encode(result.full_plan, TokenSource::LowFrequency), result.full_plan};
  BackendRequest first{std::string(kVideoPlaceholder) + question1,
                       stage_one.low_freq_tokens, options.max_new_tokens_stage1};
  stage_one.answer_text = call_backend(backend, first, "stage 1");
  result.answer1 = stage_one.answer_text;

  result.clip_plan = plan_clip(video, request.clip, options.interval_f_s, options.sampler);
  const TokenMatrix clip_tokens = tokens.encode(result.clip_plan, TokenSource::HighFrequency);
  TokenMatrix fused = fuse(clip_tokens, stage_one.low_freq_tokens, options.fusion);
  result.stage2_prompt = build_stage2_prompt(stage_one.answer_text, request.question);
  result.stage2_visual_tokens = fused.n_tokens();
  BackendRequest second{result.stage2_prompt, std::move(fused),
                        options.max_new_tokens_stage2};
  result.answer2 = call_backend(backend, second, "stage 2");
  return result;
}

}  // namespace vidfocus
