#include "vidfocus/task.hpp"

namespace vidfocus {

std::string_view to_string(TaskKind task) {
  switch (task) {
    case TaskKind::SummaryDescription: return "summary_description";
    case TaskKind::Plan: return "plan";
    case TaskKind::PreRequisites: return "pre_requisites";
    case TaskKind::Causal: return "causal";
    case TaskKind::NoticeAndSuggestion: return "notice_and_suggestion";
    case TaskKind::Recall: return "recall";
    case TaskKind::FullVideoSummarization: return "full_video_summarization";
    case TaskKind::FullVideoPerception: return "full_video_perception";
  }
  return "unknown";
}

std::optional<TaskKind> parse_task(std::string_view name) {
  for (TaskKind t : kAllTasks)
    if (to_string(t) == name) return t;
  return std::nullopt;
}

bool is_clip_task(TaskKind task) {
  return task != TaskKind::FullVideoSummarization &&
         task != TaskKind::FullVideoPerception;
}

std::string_view to_string(ReportBlock block) {
  switch (block) {
    case ReportBlock::FullVideoDescription: return "full_video_description";
    case ReportBlock::FineGrainedDescription: return "fine_grained_description";
    case ReportBlock::TemporalReasoning: return "fine_grained_temporal_reasoning";
    case ReportBlock::PerceptionReasoning: return "fine_grained_perception_reasoning";
  }
  return "unknown";
}

ReportBlock block_for(TaskKind task) {
  switch (task) {
    case TaskKind::FullVideoSummarization:
    case TaskKind::FullVideoPerception:
      return ReportBlock::FullVideoDescription;
    case TaskKind::SummaryDescription:
      return ReportBlock::FineGrainedDescription;
    case TaskKind::Plan:
    case TaskKind::PreRequisites:
      return ReportBlock::TemporalReasoning;
    case TaskKind::Causal:
    case TaskKind::NoticeAndSuggestion:
    case TaskKind::Recall:
      return ReportBlock::PerceptionReasoning;
  }
  return ReportBlock::FullVideoDescription;
}

}  // namespace vidfocus
