#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "vidfocus/client.hpp"
#include "vidfocus/task.hpp"

namespace vidfocus {

using Tokens = std::vector<std::string>;

// Lowercases ASCII, splits on whitespace, then splits leading and trailing
// punctuation runs off each word as their own tokens. Apostrophes are kept
// inside words ("denonvilliers'").
Tokens tokenize(std::string_view text);

// Sentence BLEU with clipped n-gram precisions for n = 1..4, uniform weights,
// no smoothing, and a brevity penalty against the closest reference length.
double bleu4(const Tokens& candidate, const std::vector<Tokens>& references);

// LCS-based F-measure, best over references.
double rouge_l(const Tokens& candidate, const std::vector<Tokens>& references,
               double beta = 1.2);

struct Alignment {
  std::size_t matches = 0;
  std::size_t chunks = 0;
};

// Exact-match unigram alignment with the maximum number of matches and, among
// those, the fewest chunks. The search is exhaustive up to node_budget nodes,
// after which the best alignment found so far is returned.
Alignment meteor_alignment(const Tokens& candidate, const Tokens& reference,
                           std::size_t node_budget = 1'000'000);

double meteor(const Tokens& candidate, const std::vector<Tokens>& references);

struct EvalSample {
  std::string id;
  std::string candidate;
  std::vector<std::string> references;
  TaskKind task = TaskKind::SummaryDescription;
};

struct CiderConfig {
  std::size_t max_n = 4;
  double sigma = 6.0;
};

// Corpus-level CIDEr, one value per sample on a 0-10 scale. Document
// frequencies are taken over each sample's reference set.
std::vector<double> cider(const std::vector<EvalSample>& samples,
                          const CiderConfig& cfg = {});

struct JudgeScores {
  int ci = 0;
  int do_ = 0;
  int cu = 0;
  int tu = 0;
  friend bool operator==(const JudgeScores&, const JudgeScores&) = default;
};

std::string build_judge_prompt(const EvalSample& sample);

// Strict parse of {"ci":..,"do":..,"cu":..,"tu":..}. ParseError on anything
// malformed, RangeError for a score outside [1, 5].
JudgeScores parse_judge_reply(const std::string& reply);

// Malformed replies are retried up to max_retries times; range errors and
// transport errors are not retried.
JudgeScores judge_evaluate(const EvalSample& sample, CompletionClient& client,
                           int max_retries = 3);

struct SampleScores {
  double bleu4 = 0.0;
  double meteor = 0.0;
  double rouge_l = 0.0;
  double cider = 0.0;
  std::optional<JudgeScores> judge;
};

struct ScoringOptions {
  CiderConfig cider;
  CompletionClient* judge = nullptr;
  // Upper bound on in-flight judge requests; only used when the client is
  // safe for concurrent calls.
  std::size_t judge_concurrency = 4;
};

std::vector<SampleScores> score_samples(const std::vector<EvalSample>& samples,
                                        const ScoringOptions& options = {});

struct JudgeMeans {
  double ci = 0.0;
  double do_ = 0.0;
  double cu = 0.0;
  double tu = 0.0;
};

struct BlockSummary {
  std::size_t count = 0;
  double bleu4 = 0.0;
  double meteor = 0.0;
  double rouge_l = 0.0;
  double cider = 0.0;
  std::optional<JudgeMeans> judge;
};

struct EvalReport {
  std::map<ReportBlock, BlockSummary> blocks;
  BlockSummary overall;
};

EvalReport aggregate(const std::vector<EvalSample>& samples,
                     const std::vector<SampleScores>& scores);

// Joins a predictions JSONL ({id, candidate}) with a references JSONL
// ({id, references, task}) by id, in reference order. Every reference id needs
// exactly one prediction and vice versa.
std::vector<EvalSample> load_eval_samples(const std::string& predictions_path,
                                          const std::string& references_path);

// Blocks in a fixed order (full video, then the three fine-grained groups);
// BLEU-4/METEOR/ROUGE-L appear raw and x100.
std::string report_to_json(const EvalReport& report);

}  // namespace vidfocus
