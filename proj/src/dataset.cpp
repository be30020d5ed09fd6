#include "vidfocus/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <set>

#include <json.hpp>

#include "vidfocus/error.hpp"
#include "vidfocus/prompt_templates.hpp"

namespace vidfocus {

namespace {

using json = nlohmann::ordered_json;

std::string span_string(const ClipSpan& s) {
  json j = json::array({s.start_s, s.end_s});
  return j.dump();
}

template <typename T>
T get_field(const json& j, const char* key, const char* what) {
  if (!j.is_object() || !j.contains(key)) {
    throw ParseError(std::string(what) + ": missing field \"" + key + "\"");
  }
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ParseError(std::string(what) + ": field \"" + key + "\" has the wrong type");
  }
}

const json& get_array(const json& j, const char* key, const char* what) {
  if (!j.contains(key) || !j.at(key).is_array()) {
    throw ParseError(std::string(what) + ": field \"" + key + "\" must be an array");
  }
  return j.at(key);
}

json parse_line(const std::string& line, const char* what) {
  try {
    return json::parse(line);
  } catch (const json::exception& e) {
    throw ParseError(std::string(what) + ": invalid JSON: " + e.what());
  }
}

ClipSpan span_from(const json& j, const char* what) {
  return ClipSpan{get_field<double>(j, "start_s", what), get_field<double>(j, "end_s", what)};
}

std::string_view granularity_name(Granularity g) {
  return g == Granularity::FullVideo ? "full" : "clip";
}

QAPair qa_from_object(const json& j, const std::string& video_id) {
  QAPair qa;
  qa.video_id = video_id;
  const auto gran = get_field<std::string>(j, "granularity", "qa");
  if (gran == "full") {
    qa.granularity = Granularity::FullVideo;
  } else if (gran == "clip") {
    qa.granularity = Granularity::Clip;
  } else {
    throw ParseError("qa: granularity must be \"full\" or \"clip\", got \"" + gran + "\"");
  }
  const auto task = get_field<std::string>(j, "task", "qa");
  const auto parsed = parse_task(task);
  if (!parsed) throw ParseError("qa: unknown task \"" + task + "\"");
  qa.task = *parsed;
  qa.question = get_field<std::string>(j, "question", "qa");
  qa.answer = get_field<std::string>(j, "answer", "qa");
  if (j.contains("clip") && !j.at("clip").is_null()) qa.clip = span_from(j.at("clip"), "qa.clip");
  return qa;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

template <typename Fn>
void for_each_jsonl(const std::string& path, Fn&& fn) {
  const auto lines = read_lines(path);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].find_first_not_of(" \t") == std::string::npos) continue;
    try {
      fn(lines[i]);
    } catch (const ParseError& e) {
      throw ParseError(path + ":" + std::to_string(i + 1) + ": " + e.what());
    }
  }
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path);
  out << content;
  if (!out) throw IoError("write failed for " + path);
}

std::string replace_all(std::string text, const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  while ((pos = text.find(key, pos)) != std::string::npos) {
    text.replace(pos, key.size(), value);
    pos += value.size();
  }
  return text;
}

std::string format_seconds(double s) {
  json j = s;
  return j.dump();
}

}  // namespace

std::string QAPair::consistency_error() const {
  if (granularity == Granularity::Clip && !clip) return "clip granularity without a clip span";
  if (granularity == Granularity::FullVideo && clip) return "full-video granularity with a clip span";
  if (is_clip_task(task) && granularity != Granularity::Clip) {
    return "task " + std::string(to_string(task)) + " requires clip granularity";
  }
  if (!is_clip_task(task) && granularity != Granularity::FullVideo) {
    return "task " + std::string(to_string(task)) + " requires full-video granularity";
  }
  if (clip && !(clip->end_s > clip->start_s && clip->start_s >= 0.0)) {
    return "degenerate clip span " + span_string(*clip);
  }
  return {};
}

std::vector<ClipSpan> segment_by_keysteps(double duration_s,
                                          const std::vector<KeystepAnnotation>& keysteps) {
  std::vector<ClipSpan> spans;
  spans.reserve(keysteps.size());
  for (std::size_t i = 0; i < keysteps.size(); ++i) {
    const auto& k = keysteps[i];
    const std::string name = "keystep " + std::to_string(i) + " '" + k.label + "' " +
                             span_string(k.span);
    if (!(k.span.end_s > k.span.start_s)) throw InvalidArgument(name + " is degenerate");
    if (k.span.start_s < 0.0 || k.span.end_s > duration_s) {
      throw RangeError(name + " is outside the video [0, " + format_seconds(duration_s) + "]");
    }
    if (!spans.empty()) {
      if (k.span.start_s < spans.back().start_s) throw InvalidArgument(name + " is out of order");
      if (k.span.start_s < spans.back().end_s) {
        throw InvalidArgument(name + " overlaps the previous keystep");
      }
    }
    spans.push_back(k.span);
  }
  return spans;
}

SegmentVerdict classify_segment(const ClipSpan& span, const FrameScorer& scorer,
                                const FilterConfig& cfg) {
  if (!(span.end_s > span.start_s) || !std::isfinite(span.start_s) || !std::isfinite(span.end_s)) {
    throw InvalidArgument("segment filter: degenerate span " + span_string(span));
  }
  auto in_unit = [](double v) { return v > 0.0 && v <= 1.0; };
  if (!in_unit(cfg.frame_threshold) || !in_unit(cfg.segment_threshold)) {
    throw InvalidArgument("segment filter: thresholds must lie in (0, 1]");
  }
  if (!(cfg.sample_fps > 0.0)) throw InvalidArgument("segment filter: sample_fps must be positive");

  SegmentVerdict verdict;
  for (double t : grid_timestamps(span.start_s, span.end_s, 1.0 / cfg.sample_fps)) {
    const double score = scorer(t);
    if (!(score >= 0.0 && score <= 1.0)) {
      throw RangeError("segment filter: score " + std::to_string(score) + " at t=" +
                       format_seconds(t) + " outside [0, 1]");
    }
    verdict.frames.push_back({t, score});
    if (score >= cfg.frame_threshold) ++verdict.surgical_frames;
  }
  const auto total = static_cast<double>(verdict.frames.size());
  // Inclusive, with slack so that e.g. 8 of 10 at 0.8 is not lost to rounding.
  verdict.surgical =
      static_cast<double>(verdict.surgical_frames) >= cfg.segment_threshold * total - 1e-9;
  return verdict;
}

bool filter_segment(const ClipSpan& span, const FrameScorer& scorer,
                    double frame_threshold, double segment_threshold) {
  FilterConfig cfg;
  cfg.frame_threshold = frame_threshold;
  cfg.segment_threshold = segment_threshold;
  return classify_segment(span, scorer, cfg).surgical;
}

std::vector<AugmentationRequest> build_augmentation_requests(const KnowledgeRecord& record) {
  std::vector<AugmentationRequest> out;
  AugmentationRequest abstract;
  abstract.request_id = record.video_id + "/abstract";
  abstract.kind = AugmentationKind::Abstract;
  abstract.video_id = record.video_id;
  abstract.template_version = std::string(kAbstractTemplateVersion);
  abstract.abstract_text = record.abstract_text;
  for (const auto& k : record.keysteps) abstract.keystep_labels.push_back(k.keystep.label);
  out.push_back(std::move(abstract));

  for (std::size_t i = 0; i < record.keysteps.size(); ++i) {
    const auto& k = record.keysteps[i].keystep;
    AugmentationRequest req;
    req.request_id = record.video_id + "/keystep/" + std::to_string(i);
    req.kind = AugmentationKind::Keystep;
    req.video_id = record.video_id;
    req.template_version = std::string(kKeystepTemplateVersion);
    req.keystep_index = i;
    req.keystep_label = k.label;
    req.span = k.span;
    for (const auto& n : record.narrations)
      if (n.span.intersects(k.span)) req.narrations.push_back(n);
    out.push_back(std::move(req));
  }
  return out;
}

std::string render_augmentation_prompt(const AugmentationRequest& request) {
  if (request.kind == AugmentationKind::Abstract) {
    std::string labels;
    for (std::size_t i = 0; i < request.keystep_labels.size(); ++i) {
      labels += std::to_string(i + 1) + ". " + request.keystep_labels[i] + "\n";
    }
    std::string text = replace_all(std::string(kAbstractTemplate), "{video_id}", request.video_id);
    text = replace_all(std::move(text), "{keysteps}", labels);
    return replace_all(std::move(text), "{abstract}", request.abstract_text);
  }
  std::string narr;
  for (const auto& n : request.narrations) {
    narr += "[" + format_seconds(n.span.start_s) + "-" + format_seconds(n.span.end_s) + "] " +
            n.text + "\n";
  }
  std::string text = replace_all(std::string(kKeystepTemplate), "{video_id}", request.video_id);
  text = replace_all(std::move(text), "{label}", request.keystep_label);
  text = replace_all(std::move(text), "{start_s}", format_seconds(request.span.start_s));
  text = replace_all(std::move(text), "{end_s}", format_seconds(request.span.end_s));
  return replace_all(std::move(text), "{narrations}", narr);
}

std::string OfflineAugmenter::augment(const AugmentationRequest& request) {
  if (request.kind == AugmentationKind::Abstract) return request.abstract_text;
  std::string text = request.keystep_label;
  for (const auto& n : request.narrations) {
    text += text.empty() ? "" : " ";
    text += n.text;
  }
  return text;
}

std::string ClientAugmenter::augment(const AugmentationRequest& request) {
  WireRequest wire{render_augmentation_prompt(request), Matrix(), 512};
  try {
    return client_.complete(wire);
  } catch (const std::exception& e) {
    throw BackendError("augmentation " + request.request_id + ": " + e.what());
  }
}

KnowledgeRecord augment_record(const KnowledgeRecord& record, Augmenter& augmenter,
                               std::size_t max_concurrency) {
  const auto requests = build_augmentation_requests(record);
  std::vector<std::string> replies(requests.size());
  const std::size_t width =
      augmenter.concurrent_safe() ? std::max<std::size_t>(1, max_concurrency) : 1;
  for (std::size_t begin = 0; begin < requests.size(); begin += width) {
    const std::size_t end = std::min(requests.size(), begin + width);
    if (width == 1) {
      replies[begin] = augmenter.augment(requests[begin]);
      continue;
    }
    std::vector<std::future<std::string>> batch;
    for (std::size_t i = begin; i < end; ++i) {
      batch.push_back(std::async(std::launch::async,
                                 [&, i] { return augmenter.augment(requests[i]); }));
    }
    for (std::size_t i = begin; i < end; ++i) replies[i] = batch[i - begin].get();
  }

  KnowledgeRecord out = record;
  for (std::size_t i = 0; i < requests.size(); ++i) {
    if (requests[i].kind == AugmentationKind::Abstract) {
      out.abstract_text = replies[i];
    } else {
      out.keysteps[requests[i].keystep_index].enriched_text = replies[i];
    }
  }
  return out;
}

ValidationReport validate_corpus(const std::vector<KnowledgeRecord>& records,
                                 const std::vector<QAPair>& qa) {
  ValidationReport report;
  report.records = records.size();
  report.qa_pairs = qa.size();
  for (TaskKind t : kAllTasks) report.task_counts[t] = 0;

  std::map<std::string, const KnowledgeRecord*> by_id;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& r = records[i];
    if (r.video_id.empty()) {
      report.violations.push_back("record " + std::to_string(i) + ": empty video_id");
      continue;
    }
    if (!by_id.emplace(r.video_id, &r).second) {
      report.violations.push_back("record " + std::to_string(i) + ": duplicate video_id " +
                                  r.video_id);
    }
  }

  for (std::size_t i = 0; i < qa.size(); ++i) {
    const auto& q = qa[i];
    const std::string where = "qa " + std::to_string(i) + " (" + q.video_id + ")";
    ++report.task_counts[q.task];
    if (q.granularity == Granularity::FullVideo) {
      ++report.full_video;
    } else {
      ++report.fine_grained;
    }
    if (auto err = q.consistency_error(); !err.empty()) {
      report.violations.push_back(where + ": " + err);
    }
    auto it = by_id.find(q.video_id);
    if (it == by_id.end()) {
      report.violations.push_back(where + ": unknown video_id");
      continue;
    }
    if (q.granularity == Granularity::Clip && q.clip) {
      const auto& keysteps = it->second->keysteps;
      const bool inside = std::any_of(keysteps.begin(), keysteps.end(), [&](const KeystepEntry& k) {
        return k.keystep.span.contains(*q.clip);
      });
      if (!inside) {
        report.violations.push_back(where + ": clip " + span_string(*q.clip) +
                                    " is not inside any keystep");
      }
    }
  }
  return report;
}

std::string knowledge_to_json(const KnowledgeRecord& record) {
  json j;
  j["video_id"] = record.video_id;
  j["abstract_text"] = record.abstract_text;
  json keysteps = json::array();
  for (const auto& k : record.keysteps) {
    keysteps.push_back({{"label", k.keystep.label},
                        {"start_s", k.keystep.span.start_s},
                        {"end_s", k.keystep.span.end_s},
                        {"enriched_text", k.enriched_text}});
  }
  j["keysteps"] = std::move(keysteps);
  json narrations = json::array();
  for (const auto& n : record.narrations) {
    narrations.push_back({{"start_s", n.span.start_s}, {"end_s", n.span.end_s}, {"text", n.text}});
  }
  j["narrations"] = std::move(narrations);
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

KnowledgeRecord knowledge_from_json(const std::string& line) {
  const json j = parse_line(line, "knowledge record");
  KnowledgeRecord r;
  r.video_id = get_field<std::string>(j, "video_id", "knowledge record");
  r.abstract_text = get_field<std::string>(j, "abstract_text", "knowledge record");
  for (const auto& k : get_array(j, "keysteps", "knowledge record")) {
    r.keysteps.push_back(
        {{get_field<std::string>(k, "label", "keystep"), span_from(k, "keystep")},
         get_field<std::string>(k, "enriched_text", "keystep")});
  }
  for (const auto& n : get_array(j, "narrations", "knowledge record")) {
    r.narrations.push_back({span_from(n, "narration"), get_field<std::string>(n, "text", "narration")});
  }
  return r;
}

std::string qa_to_json(const QAPair& qa) {
  json j;
  j["video_id"] = qa.video_id;
  j["granularity"] = std::string(granularity_name(qa.granularity));
  j["task"] = std::string(to_string(qa.task));
  j["question"] = qa.question;
  j["answer"] = qa.answer;
  if (qa.clip) j["clip"] = {{"start_s", qa.clip->start_s}, {"end_s", qa.clip->end_s}};
  return j.dump(-1, ' ', false, json::error_handler_t::replace);
}

QAPair qa_from_json(const std::string& line) {
  const json j = parse_line(line, "qa");
  return qa_from_object(j, get_field<std::string>(j, "video_id", "qa"));
}

FrameScorer make_table_scorer(std::vector<FrameVerdict> frames) {
  std::sort(frames.begin(), frames.end(), [](const FrameVerdict& a, const FrameVerdict& b) {
    return a.timestamp_s < b.timestamp_s;
  });
  return [frames = std::move(frames)](double t) {
    auto it = std::lower_bound(frames.begin(), frames.end(), t,
                               [](const FrameVerdict& f, double v) { return f.timestamp_s < v; });
    const FrameVerdict* best = nullptr;
    if (it != frames.end()) best = &*it;
    if (it != frames.begin()) {
      const FrameVerdict* prev = &*std::prev(it);
      if (best == nullptr || t - prev->timestamp_s <= best->timestamp_s - t) best = prev;
    }
    if (best == nullptr || std::abs(best->timestamp_s - t) > 0.5) return 0.0;
    return best->surgical_score;
  };
}

DatasetBuild build_dataset(const std::vector<VideoMetadata>& videos,
                           const std::vector<TranscriptRow>& transcripts,
                           const std::vector<FrameScoreRow>& frame_scores,
                           Augmenter& augmenter, const FilterConfig& filter) {
  std::map<std::string, std::vector<Narration>> narrations;
  for (const auto& t : transcripts) narrations[t.video_id].push_back(t.narration);
  std::map<std::string, std::vector<FrameVerdict>> scores;
  for (const auto& f : frame_scores) scores[f.video_id].push_back({f.timestamp_s, f.surgical_score});

  DatasetBuild build;
  build.stats.videos = videos.size();
  for (const auto& video : videos) {
    if (video.video_id.empty()) throw InvalidArgument("metadata: empty video_id");
    if (!(video.duration_s > 0.0)) {
      throw InvalidArgument("metadata: video " + video.video_id + " has non-positive duration");
    }
    const auto spans = segment_by_keysteps(video.duration_s, video.keysteps);
    const FrameScorer scorer = make_table_scorer(scores[video.video_id]);

    KnowledgeRecord record;
    record.video_id = video.video_id;
    record.abstract_text = video.abstract_text;
    for (std::size_t i = 0; i < spans.size(); ++i) {
      ++build.stats.keysteps_total;
      if (classify_segment(spans[i], scorer, filter).surgical) {
        record.keysteps.push_back({video.keysteps[i], ""});
      }
    }
    build.stats.keysteps_retained += record.keysteps.size();
    auto& narr = narrations[video.video_id];
    std::stable_sort(narr.begin(), narr.end(), [](const Narration& a, const Narration& b) {
      return a.span.start_s < b.span.start_s;
    });
    record.narrations = narr;
    record = augment_record(record, augmenter);

    for (const auto& q : video.qa) {
      ++build.stats.qa_input;
      QAPair pair = q;
      pair.video_id = video.video_id;
      if (pair.granularity == Granularity::Clip && pair.clip) {
        const bool kept = std::any_of(record.keysteps.begin(), record.keysteps.end(),
                                      [&](const KeystepEntry& k) {
                                        return k.keystep.span.contains(*pair.clip);
                                      });
        if (!kept) {
          ++build.stats.qa_dropped;
          continue;
        }
      }
      build.qa.push_back(std::move(pair));
    }
    build.records.push_back(std::move(record));
  }
  build.report = validate_corpus(build.records, build.qa);
  return build;
}

DatasetBuild build_dataset_files(const DatasetPaths& paths, Augmenter& augmenter,
                                 const FilterConfig& filter) {
  std::vector<VideoMetadata> videos;
  for_each_jsonl(paths.metadata, [&](const std::string& line) {
    const json j = parse_line(line, "metadata");
    VideoMetadata v;
    v.video_id = get_field<std::string>(j, "video_id", "metadata");
    v.duration_s = get_field<double>(j, "duration_s", "metadata");
    v.abstract_text = get_field<std::string>(j, "abstract_text", "metadata");
    for (const auto& k : get_array(j, "keysteps", "metadata")) {
      v.keysteps.push_back({get_field<std::string>(k, "label", "keystep"), span_from(k, "keystep")});
    }
    if (j.contains("qa")) {
      for (const auto& q : get_array(j, "qa", "metadata")) v.qa.push_back(qa_from_object(q, v.video_id));
    }
    videos.push_back(std::move(v));
  });
  std::vector<TranscriptRow> transcripts;
  for_each_jsonl(paths.transcripts, [&](const std::string& line) {
    const json j = parse_line(line, "transcript");
    transcripts.push_back({get_field<std::string>(j, "video_id", "transcript"),
                           {span_from(j, "transcript"), get_field<std::string>(j, "text", "transcript")}});
  });
  std::vector<FrameScoreRow> frames;
  for_each_jsonl(paths.frame_scores, [&](const std::string& line) {
    const json j = parse_line(line, "frame score");
    frames.push_back({get_field<std::string>(j, "video_id", "frame score"),
                      get_field<double>(j, "timestamp_s", "frame score"),
                      get_field<double>(j, "surgical_score", "frame score")});
  });

  DatasetBuild build = build_dataset(videos, transcripts, frames, augmenter, filter);
  std::string knowledge, qa;
  for (const auto& r : build.records) knowledge += knowledge_to_json(r) + "\n";
  for (const auto& q : build.qa) qa += qa_to_json(q) + "\n";
  write_file(paths.knowledge_out, knowledge);
  write_file(paths.qa_out, qa);
  if (!paths.report_out.empty()) write_file(paths.report_out, build_report_to_json(build) + "\n");
  return build;
}

std::string build_report_to_json(const DatasetBuild& build) {
  json j;
  j["records"] = build.report.records;
  j["qa_pairs"] = build.report.qa_pairs;
  j["full_video"] = build.report.full_video;
  j["fine_grained"] = build.report.fine_grained;
  json counts;
  for (TaskKind t : kAllTasks) {
    auto it = build.report.task_counts.find(t);
    counts[std::string(to_string(t))] = it == build.report.task_counts.end() ? 0 : it->second;
  }
  j["task_counts"] = std::move(counts);
  j["videos"] = build.stats.videos;
  j["keysteps_total"] = build.stats.keysteps_total;
  j["keysteps_retained"] = build.stats.keysteps_retained;
  j["qa_input"] = build.stats.qa_input;
  j["qa_dropped"] = build.stats.qa_dropped;
  j["violations"] = build.report.violations;
  return j.dump(2);
}

std::vector<KnowledgeRecord> read_knowledge_corpus(const std::string& path) {
  std::vector<KnowledgeRecord> out;
  for_each_jsonl(path, [&](const std::string& line) { out.push_back(knowledge_from_json(line)); });
  return out;
}

std::vector<QAPair> read_qa_corpus(const std::string& path) {
  std::vector<QAPair> out;
  for_each_jsonl(path, [&](const std::string& line) { out.push_back(qa_from_json(line)); });
  return out;
}

}  // namespace vidfocus
