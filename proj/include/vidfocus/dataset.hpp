#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vidfocus/client.hpp"
#include "vidfocus/sampler.hpp"
#include "vidfocus/task.hpp"

namespace vidfocus {

struct KeystepAnnotation {
  std::string label;
  ClipSpan span;
  friend bool operator==(const KeystepAnnotation&, const KeystepAnnotation&) = default;
};

struct KeystepEntry {
  KeystepAnnotation keystep;
  std::string enriched_text;
  friend bool operator==(const KeystepEntry&, const KeystepEntry&) = default;
};

struct Narration {
  ClipSpan span;
  std::string text;
  friend bool operator==(const Narration&, const Narration&) = default;
};

// Abstract / keystep / narration hierarchy for one procedure video.
struct KnowledgeRecord {
  std::string video_id;
  std::string abstract_text;
  std::vector<KeystepEntry> keysteps;
  std::vector<Narration> narrations;
  friend bool operator==(const KnowledgeRecord&, const KnowledgeRecord&) = default;
};

enum class Granularity { FullVideo, Clip };

struct QAPair {
  std::string video_id;
  Granularity granularity = Granularity::FullVideo;
  TaskKind task = TaskKind::FullVideoSummarization;
  std::string question;
  std::string answer;
  std::optional<ClipSpan> clip;

  // Clip granularity iff a clip is present, and the task kind must agree.
  // Returns an empty string when consistent, otherwise the reason.
  std::string consistency_error() const;
  friend bool operator==(const QAPair&, const QAPair&) = default;
};

struct FrameVerdict {
  double timestamp_s = 0.0;
  double surgical_score = 0.0;
};

// Maps a timestamp inside a segment to a surgical probability in [0, 1].
using FrameScorer = std::function<double(double timestamp_s)>;

// One span per keystep, in order. Throws InvalidArgument naming the keystep
// when spans are degenerate, unsorted or overlapping, RangeError when a span
// leaves [0, duration].
std::vector<ClipSpan> segment_by_keysteps(double duration_s,
                                          const std::vector<KeystepAnnotation>& keysteps);

struct FilterConfig {
  double frame_threshold = 0.5;
  double segment_threshold = 0.8;
  double sample_fps = 1.0;
};

struct SegmentVerdict {
  std::vector<FrameVerdict> frames;
  std::size_t surgical_frames = 0;
  bool surgical = false;
};

SegmentVerdict classify_segment(const ClipSpan& span, const FrameScorer& scorer,
                                const FilterConfig& cfg = {});

// A segment is kept when at least segment_threshold of its 1 fps frames score
// >= frame_threshold. Both comparisons are inclusive.
bool filter_segment(const ClipSpan& span, const FrameScorer& scorer,
                    double frame_threshold = 0.5, double segment_threshold = 0.8);

enum class AugmentationKind { Abstract, Keystep };

struct AugmentationRequest {
  std::string request_id;
  AugmentationKind kind = AugmentationKind::Abstract;
  std::string video_id;
  std::string template_version;
  // Abstract requests.
  std::string abstract_text;
  std::vector<std::string> keystep_labels;
  // Keystep requests.
  std::size_t keystep_index = 0;
  std::string keystep_label;
  ClipSpan span;
  std::vector<Narration> narrations;
};

// The abstract request first, then one request per keystep carrying the
// narrations whose spans intersect it.
std::vector<AugmentationRequest> build_augmentation_requests(const KnowledgeRecord& record);

// Fills the versioned prompt template for a request.
std::string render_augmentation_prompt(const AugmentationRequest& request);

class Augmenter {
 public:
  virtual ~Augmenter() = default;
  virtual std::string augment(const AugmentationRequest& request) = 0;
  virtual bool concurrent_safe() const { return false; }
};

// Deterministic offline rewriting: the abstract passes through unchanged and a
// keystep becomes its label followed by its narrations.
class OfflineAugmenter : public Augmenter {
 public:
  std::string augment(const AugmentationRequest& request) override;
  bool concurrent_safe() const override { return true; }
};

// Renders the prompt and sends it through a completion client.
class ClientAugmenter : public Augmenter {
 public:
  explicit ClientAugmenter(CompletionClient& client) : client_(client) {}
  std::string augment(const AugmentationRequest& request) override;
  bool concurrent_safe() const override { return client_.concurrent_safe(); }

 private:
  CompletionClient& client_;
};

// Applies the augmenter to every request of the record. Requests may run
// concurrently; results are placed by keystep index.
KnowledgeRecord augment_record(const KnowledgeRecord& record, Augmenter& augmenter,
                               std::size_t max_concurrency = 4);

struct ValidationReport {
  std::vector<std::string> violations;
  std::map<TaskKind, std::size_t> task_counts;
  std::size_t records = 0;
  std::size_t qa_pairs = 0;
  std::size_t full_video = 0;
  std::size_t fine_grained = 0;

  bool ok() const noexcept { return violations.empty(); }
};

ValidationReport validate_corpus(const std::vector<KnowledgeRecord>& records,
                                 const std::vector<QAPair>& qa);

// JSONL line codecs. Parsing throws ParseError with the offending field.
std::string knowledge_to_json(const KnowledgeRecord& record);
KnowledgeRecord knowledge_from_json(const std::string& line);
std::string qa_to_json(const QAPair& qa);
QAPair qa_from_json(const std::string& line);

// Per-video input for the build: metadata plus pre-authored QA pairs.
struct VideoMetadata {
  std::string video_id;
  double duration_s = 0.0;
  std::string abstract_text;
  std::vector<KeystepAnnotation> keysteps;
  std::vector<QAPair> qa;
};

struct FrameScoreRow {
  std::string video_id;
  double timestamp_s = 0.0;
  double surgical_score = 0.0;
};

struct TranscriptRow {
  std::string video_id;
  Narration narration;
};

struct BuildStats {
  std::size_t videos = 0;
  std::size_t keysteps_total = 0;
  std::size_t keysteps_retained = 0;
  std::size_t qa_input = 0;
  std::size_t qa_dropped = 0;
};

struct DatasetBuild {
  std::vector<KnowledgeRecord> records;
  std::vector<QAPair> qa;
  ValidationReport report;
  BuildStats stats;
};

// Nearest scored frame within half a second, otherwise 0 (non-surgical).
FrameScorer make_table_scorer(std::vector<FrameVerdict> frames);

DatasetBuild build_dataset(const std::vector<VideoMetadata>& videos,
                           const std::vector<TranscriptRow>& transcripts,
                           const std::vector<FrameScoreRow>& frame_scores,
                           Augmenter& augmenter, const FilterConfig& filter = {});

struct DatasetPaths {
  std::string metadata;
  std::string transcripts;
  std::string frame_scores;
  std::string knowledge_out;
  std::string qa_out;
  // Optional; empty means no file.
  std::string report_out;
};

// Reads the three JSONL inputs, builds, and writes both corpora (and the report
// when a path is given). IoError / ParseError name the file and line.
DatasetBuild build_dataset_files(const DatasetPaths& paths, Augmenter& augmenter,
                                 const FilterConfig& filter = {});

std::string build_report_to_json(const DatasetBuild& build);

std::vector<KnowledgeRecord> read_knowledge_corpus(const std::string& path);
std::vector<QAPair> read_qa_corpus(const std::string& path);

}  // namespace vidfocus
