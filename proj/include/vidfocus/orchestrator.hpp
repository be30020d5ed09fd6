#pragma once

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string>
#include <string_view>

#include "vidfocus/client.hpp"
#include "vidfocus/fusion.hpp"
#include "vidfocus/sampler.hpp"
#include "vidfocus/toy_vlm.hpp"

namespace vidfocus {

inline constexpr std::string_view kVideoPlaceholder = "<video>";
inline constexpr std::string_view kBackgroundInstruction =
    "According to the above background information of the video, answer the "
    "following question: ";

// "<video>" + answer1 + "\n" + instruction + "\n" + question2, byte for byte.
std::string build_stage2_prompt(std::string_view answer1, std::string_view question2);

struct BackendRequest {
  std::string text;
  TokenMatrix visual_tokens;
  std::size_t max_new_tokens = 256;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string generate(const BackendRequest& request) = 0;
  virtual std::size_t embedding_width() const = 0;
};

// Maps a sampling plan to visual tokens. A real system runs a frozen vision
// encoder here.
class TokensProvider {
 public:
  virtual ~TokensProvider() = default;
  virtual TokenMatrix encode(const FrameSamplePlan& plan, TokenSource source) = 0;
};

// Deterministic stand-in encoder: each frame's embedding is a pseudo-random
// normal vector seeded by (seed, timestamp in milliseconds). The same
// timestamp always yields the same row, in either stage.
class SeededFrameEncoder : public TokensProvider {
 public:
  SeededFrameEncoder(std::size_t width, std::uint64_t seed) : width_(width), seed_(seed) {}
  TokenMatrix encode(const FrameSamplePlan& plan, TokenSource source) override;

 private:
  std::size_t width_;
  std::uint64_t seed_;
};

// Byte-tokenizes the request text and greedy-decodes with a toy model.
class ToyBackend : public Backend {
 public:
  explicit ToyBackend(ToyModel model);
  std::string generate(const BackendRequest& request) override;
  std::size_t embedding_width() const override { return model_.config().d; }
  const ToyModel& model() const noexcept { return model_; }

 private:
  ToyModel model_;
};

// Forwards requests over a CompletionClient using the wire format.
class RemoteBackend : public Backend {
 public:
  RemoteBackend(std::shared_ptr<CompletionClient> client, std::size_t width)
      : client_(std::move(client)), width_(width) {}
  std::string generate(const BackendRequest& request) override;
  std::size_t embedding_width() const override { return width_; }

 private:
  std::shared_ptr<CompletionClient> client_;
  std::size_t width_;
};

struct StageOneResult {
  std::string answer_text;
  TokenMatrix low_freq_tokens;
  FrameSamplePlan plan;
};

struct StageTwoRequest {
  std::string question;
  ClipSpan clip;
};

struct TwoStageOptions {
  double interval_f_s = 10.0;
  SamplerConfig sampler;
  FusionConfig fusion;
  std::size_t max_new_tokens_stage1 = 256;
  std::size_t max_new_tokens_stage2 = 256;
};

struct TwoStageResult {
  std::string answer1;
  std::string answer2;
  FrameSamplePlan full_plan;
  FrameSamplePlan clip_plan;
  std::string stage2_prompt;
  std::size_t stage2_visual_tokens = 0;
};

// Stage 1 over the full video (the text is "<video>" + question1), then Stage 2
// over the clip with fused tokens and the Stage-1 answer as prefix. Backend
// failures are rethrown as BackendError tagged with the stage.
TwoStageResult run_two_stage(const VideoMeta& video, TokensProvider& tokens,
                             const std::string& question1,
                             const StageTwoRequest& request, Backend& backend,
                             const TwoStageOptions& options = {});

}  // namespace vidfocus
