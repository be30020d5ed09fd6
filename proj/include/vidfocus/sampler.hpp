#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace vidfocus {

struct VideoMeta {
  double duration_s = 0.0;
  double native_fps = 30.0;
  std::size_t frame_height = 224;
  std::size_t frame_width = 224;

  // Throws InvalidArgument unless duration and fps are positive and finite.
  void validate() const;
};

struct ClipSpan {
  double start_s = 0.0;
  double end_s = 0.0;

  double length() const noexcept { return end_s - start_s; }
  bool contains(const ClipSpan& other) const noexcept {
    return start_s <= other.start_s && other.end_s <= end_s;
  }
  bool intersects(const ClipSpan& other) const noexcept {
    return start_s < other.end_s && other.start_s < end_s;
  }
  friend bool operator==(const ClipSpan&, const ClipSpan&) = default;
};

enum class PlanStage { FullVideo, Clip };

std::string_view to_string(PlanStage stage);

struct FrameSamplePlan {
  std::vector<double> timestamps_s;
  double interval_s = 0.0;
  PlanStage stage = PlanStage::FullVideo;

  std::size_t size() const noexcept { return timestamps_s.size(); }
};

struct SamplerConfig {
  // 0 means unlimited. When the plan would exceed the cap, the interval is
  // widened until it fits.
  std::size_t max_frames = 0;
  // Never sample faster than the native frame period.
  bool clamp_to_native_fps = true;
};

// Throws InvalidArgument on a degenerate span, RangeError if the span leaves
// [0, duration].
void validate_clip(const VideoMeta& meta, const ClipSpan& clip);

// Low-frequency plan over [0, T]: 0, I_F, 2 I_F, ... up to T.
FrameSamplePlan plan_full_video(const VideoMeta& meta, double interval_f_s,
                                const SamplerConfig& cfg = {});

// Ratio of the full duration to the clip length; >= 1 for sub-spans.
double clip_ratio(const VideoMeta& meta, const ClipSpan& clip);

// The interval plan_clip would use: max(I_F / r, 1 / fps) when clamping.
double clip_interval(const VideoMeta& meta, const ClipSpan& clip,
                     double interval_f_s, const SamplerConfig& cfg = {});

// High-frequency plan over the clip anchored at its start.
FrameSamplePlan plan_clip(const VideoMeta& meta, const ClipSpan& clip,
                          double interval_f_s, const SamplerConfig& cfg = {});

// Evenly spaced timestamps start, start + interval, ... <= end. Shared by the
// planners and the dataset segment filter.
std::vector<double> grid_timestamps(double start_s, double end_s,
                                    double interval_s);

// {"stage": ..., "interval_s": ..., "timestamps_s": [...]}
std::string plan_to_json(const FrameSamplePlan& plan);

}  // namespace vidfocus
