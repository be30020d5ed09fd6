#include "vidfocus/sampler.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

#include "vidfocus/error.hpp"

namespace vidfocus {

namespace {

// Slack for grid arithmetic so that e.g. 300 / 10 does not lose its last
// point to rounding.
constexpr double kGridSlack = 1e-9;

double apply_frame_cap(double interval_s, double span_s, const SamplerConfig& cfg) {
  if (cfg.max_frames == 0) return interval_s;
  if (cfg.max_frames == 1) return std::max(interval_s, span_s + 1.0);
  const double needed = span_s / static_cast<double>(cfg.max_frames - 1);
  return std::max(interval_s, needed);
}

}  // namespace

std::string_view to_string(PlanStage stage) {
  return stage == PlanStage::FullVideo ? "full_video" : "clip";
}

void VideoMeta::validate() const {
  if (!(duration_s > 0.0) || !std::isfinite(duration_s)) {
    throw InvalidArgument("video duration must be positive, got " +
                          std::to_string(duration_s));
  }
  if (!(native_fps > 0.0) || !std::isfinite(native_fps)) {
    throw InvalidArgument("native fps must be positive, got " +
                          std::to_string(native_fps));
  }
  if (frame_height == 0 || frame_width == 0) {
    throw InvalidArgument("frame dimensions must be positive");
  }
}

void validate_clip(const VideoMeta& meta, const ClipSpan& clip) {
  if (!std::isfinite(clip.start_s) || !std::isfinite(clip.end_s) ||
      !(clip.end_s > clip.start_s)) {
    throw InvalidArgument("degenerate clip [" + std::to_string(clip.start_s) +
                          ", " + std::to_string(clip.end_s) + "]");
  }
  if (clip.start_s < 0.0 || clip.end_s > meta.duration_s) {
    throw RangeError("clip [" + std::to_string(clip.start_s) + ", " +
                     std::to_string(clip.end_s) + "] outside video [0, " +
                     std::to_string(meta.duration_s) + "]");
  }
}

std::vector<double> grid_timestamps(double start_s, double end_s,
                                    double interval_s) {
  if (!(interval_s > 0.0) || !std::isfinite(interval_s)) {
    throw InvalidArgument("sampling interval must be positive, got " +
                          std::to_string(interval_s));
  }
  if (end_s < start_s) return {};
  const double steps = std::floor((end_s - start_s) / interval_s + kGridSlack);
  const auto count = static_cast<std::size_t>(steps) + 1;
  std::vector<double> out;
  out.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    out.push_back(std::min(start_s + static_cast<double>(k) * interval_s, end_s));
  }
  return out;
}

FrameSamplePlan plan_full_video(const VideoMeta& meta, double interval_f_s,
                                const SamplerConfig& cfg) {
  meta.validate();
  if (!(interval_f_s > 0.0)) {
    throw InvalidArgument("full-video interval must be positive, got " +
                          std::to_string(interval_f_s));
  }
  FrameSamplePlan plan;
  plan.stage = PlanStage::FullVideo;
  plan.interval_s = apply_frame_cap(interval_f_s, meta.duration_s, cfg);
  plan.timestamps_s = grid_timestamps(0.0, meta.duration_s, plan.interval_s);
  return plan;
}

double clip_ratio(const VideoMeta& meta, const ClipSpan& clip) {
  meta.validate();
  validate_clip(meta, clip);
  return meta.duration_s / clip.length();
}

double clip_interval(const VideoMeta& meta, const ClipSpan& clip,
                     double interval_f_s, const SamplerConfig& cfg) {
  if (!(interval_f_s > 0.0)) {
    throw InvalidArgument("full-video interval must be positive, got " +
                          std::to_string(interval_f_s));
  }
  const double r = clip_ratio(meta, clip);
  double interval = interval_f_s / r;
  if (cfg.clamp_to_native_fps) interval = std::max(interval, 1.0 / meta.native_fps);
  return apply_frame_cap(interval, clip.length(), cfg);
}

FrameSamplePlan plan_clip(const VideoMeta& meta, const ClipSpan& clip,
                          double interval_f_s, const SamplerConfig& cfg) {
  FrameSamplePlan plan;
  plan.stage = PlanStage::Clip;
  plan.interval_s = clip_interval(meta, clip, interval_f_s, cfg);
  plan.timestamps_s = grid_timestamps(clip.start_s, clip.end_s, plan.interval_s);
  return plan;
}

std::string plan_to_json(const FrameSamplePlan& plan) {
  nlohmann::ordered_json j;
  j["stage"] = std::string(to_string(plan.stage));
  j["interval_s"] = plan.interval_s;
  j["timestamps_s"] = plan.timestamps_s;
  return j.dump();
}

}  // namespace vidfocus
