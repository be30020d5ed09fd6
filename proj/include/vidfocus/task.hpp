#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace vidfocus {

// Instruction-tuning task taxonomy. The first six are keystep-clip tasks; the
// last two apply to whole videos.
enum class TaskKind {
  SummaryDescription,
  Plan,
  PreRequisites,
  Causal,
  NoticeAndSuggestion,
  Recall,
  FullVideoSummarization,
  FullVideoPerception,
};

inline constexpr std::array<TaskKind, 8> kAllTasks{
    TaskKind::SummaryDescription, TaskKind::Plan,
    TaskKind::PreRequisites,      TaskKind::Causal,
    TaskKind::NoticeAndSuggestion, TaskKind::Recall,
    TaskKind::FullVideoSummarization, TaskKind::FullVideoPerception,
};

std::string_view to_string(TaskKind task);
std::optional<TaskKind> parse_task(std::string_view name);

bool is_clip_task(TaskKind task);

// Reporting groups: one per block of the results table.
enum class ReportBlock {
  FullVideoDescription,
  FineGrainedDescription,
  TemporalReasoning,
  PerceptionReasoning,
};

inline constexpr std::array<ReportBlock, 4> kAllBlocks{
    ReportBlock::FullVideoDescription, ReportBlock::FineGrainedDescription,
    ReportBlock::TemporalReasoning, ReportBlock::PerceptionReasoning,
};

std::string_view to_string(ReportBlock block);
ReportBlock block_for(TaskKind task);

}  // namespace vidfocus
