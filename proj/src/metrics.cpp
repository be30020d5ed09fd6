#include "vidfocus/metrics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <future>
#include <limits>
#include <unordered_map>

#include <json.hpp>

#include "vidfocus/error.hpp"

namespace vidfocus {

namespace {

using json = nlohmann::ordered_json;

bool is_punct(unsigned char c) { return c < 128 && std::ispunct(c) && c != '\''; }

void require_references(std::size_t n, const char* metric) {
  if (n == 0) throw InvalidArgument(std::string(metric) + ": at least one reference required");
}

using NgramCounts = std::unordered_map<std::string, std::size_t>;

NgramCounts count_ngrams(const Tokens& tokens, std::size_t n) {
  NgramCounts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    std::string key = tokens[i];
    for (std::size_t k = 1; k < n; ++k) {
      key.push_back('\x1f');
      key += tokens[i + k];
    }
    ++counts[key];
  }
  return counts;
}

std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

// Depth-first search over alignments that reach the maximum match count.
class AlignmentSearch {
 public:
  AlignmentSearch(const Tokens& cand, const Tokens& ref, std::size_t budget)
      : budget_(budget) {
    std::unordered_map<std::string, int> ids;
    auto id_of = [&](const std::string& s) {
      auto [it, inserted] = ids.emplace(s, static_cast<int>(ids.size()));
      return it->second;
    };
    for (const auto& t : cand) cand_.push_back(id_of(t));
    for (const auto& t : ref) ref_.push_back(id_of(t));
    const std::size_t types = ids.size();
    free_refs_.assign(types, 0);
    cand_left_.assign(types, 0);
    ref_positions_.assign(types, {});
    for (std::size_t j = 0; j < ref_.size(); ++j) {
      ++free_refs_[ref_[j]];
      ref_positions_[ref_[j]].push_back(j);
    }
    for (int w : cand_) ++cand_left_[w];
    for (std::size_t w = 0; w < types; ++w) target_ += std::min(free_refs_[w], cand_left_[w]);
    used_.assign(ref_.size(), false);
  }

  Alignment run() {
    if (target_ == 0) return {};
    best_chunks_ = std::numeric_limits<std::size_t>::max();
    visit(0, 0, 0, -1);
    return {target_, best_chunks_};
  }

 private:
  void visit(std::size_t i, std::size_t matched, std::size_t chunks, long prev_j) {
    if (nodes_++ >= budget_ && best_chunks_ != std::numeric_limits<std::size_t>::max()) return;
    if (chunks >= best_chunks_) return;
    if (i == cand_.size()) {
      if (matched == target_) best_chunks_ = chunks;
      return;
    }
    const int w = cand_[i];
    --cand_left_[w];
    if (free_refs_[w] > 0) {
      // Extending the current chunk first finds good bounds early.
      const long next = prev_j + 1;
      if (prev_j >= 0 && static_cast<std::size_t>(next) < ref_.size() && ref_[next] == w &&
          !used_[next]) {
        take(next);
        visit(i + 1, matched + 1, chunks, next);
        release(next);
      }
      for (std::size_t j : ref_positions_[w]) {
        if (used_[j] || (prev_j >= 0 && static_cast<long>(j) == next)) continue;
        take(j);
        visit(i + 1, matched + 1, chunks + 1, static_cast<long>(j));
        release(j);
      }
    }
    // Leaving position i unmatched keeps the maximum reachable only if the
    // remaining candidates of this type can still use up the free references.
    if (cand_left_[w] >= free_refs_[w]) visit(i + 1, matched, chunks, -1);
    ++cand_left_[w];
  }

  void take(std::size_t j) {
    used_[j] = true;
    --free_refs_[ref_[j]];
  }
  void release(std::size_t j) {
    used_[j] = false;
    ++free_refs_[ref_[j]];
  }

  std::vector<int> cand_, ref_;
  std::vector<std::size_t> free_refs_, cand_left_;
  std::vector<std::vector<std::size_t>> ref_positions_;
  std::vector<bool> used_;
  std::size_t target_ = 0;
  std::size_t best_chunks_ = 0;
  std::size_t budget_;
  std::size_t nodes_ = 0;
};

double safe_mean(double total, std::size_t n) {
  return n == 0 ? 0.0 : total / static_cast<double>(n);
}

json summary_json(const BlockSummary& s) {
  json j;
  j["count"] = s.count;
  j["bleu4"] = s.bleu4;
  j["bleu4_pct"] = s.bleu4 * 100.0;
  j["meteor"] = s.meteor;
  j["meteor_pct"] = s.meteor * 100.0;
  j["rouge_l"] = s.rouge_l;
  j["rouge_l_pct"] = s.rouge_l * 100.0;
  j["cider"] = s.cider;
  if (s.judge) {
    j["judge"] = {{"ci", s.judge->ci}, {"do", s.judge->do_}, {"cu", s.judge->cu},
                  {"tu", s.judge->tu}};
  }
  return j;
}

}  // namespace

Tokens tokenize(std::string_view text) {
  Tokens out;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t end = i;
    while (end < text.size() && !std::isspace(static_cast<unsigned char>(text[end]))) ++end;
    if (end == i) break;
    std::string word(text.substr(i, end - i));
    for (char& c : word) {
      const auto u = static_cast<unsigned char>(c);
      if (u < 128) c = static_cast<char>(std::tolower(u));
    }
    i = end;

    std::size_t first = 0;
    while (first < word.size() && is_punct(static_cast<unsigned char>(word[first]))) ++first;
    if (first == word.size()) {
      out.push_back(std::move(word));
      continue;
    }
    std::size_t last = word.size();
    while (is_punct(static_cast<unsigned char>(word[last - 1]))) --last;
    if (first > 0) out.push_back(word.substr(0, first));
    out.push_back(word.substr(first, last - first));
    if (last < word.size()) out.push_back(word.substr(last));
  }
  return out;
}

double bleu4(const Tokens& candidate, const std::vector<Tokens>& references) {
  require_references(references.size(), "bleu4");
  if (candidate.empty()) return 0.0;
  double log_precision = 0.0;
  for (std::size_t n = 1; n <= 4; ++n) {
    const NgramCounts cand_counts = count_ngrams(candidate, n);
    NgramCounts max_ref;
    for (const auto& ref : references) {
      for (const auto& [gram, c] : count_ngrams(ref, n)) {
        auto& slot = max_ref[gram];
        slot = std::max(slot, c);
      }
    }
    std::size_t clipped = 0, total = 0;
    for (const auto& [gram, c] : cand_counts) {
      total += c;
      auto it = max_ref.find(gram);
      if (it != max_ref.end()) clipped += std::min(c, it->second);
    }
    if (clipped == 0) return 0.0;
    log_precision += 0.25 * std::log(static_cast<double>(clipped) / static_cast<double>(total));
  }
  const std::size_t c = candidate.size();
  std::size_t r = references.front().size();
  for (const auto& ref : references) {
    const auto dist = [&](std::size_t len) { return len > c ? len - c : c - len; };
    if (dist(ref.size()) < dist(r) || (dist(ref.size()) == dist(r) && ref.size() < r)) {
      r = ref.size();
    }
  }
  const double bp = c < r ? std::exp(1.0 - static_cast<double>(r) / static_cast<double>(c)) : 1.0;
  return bp * std::exp(log_precision);
}

double rouge_l(const Tokens& candidate, const std::vector<Tokens>& references,
               double beta) {
  require_references(references.size(), "rouge_l");
  double best = 0.0;
  for (const auto& ref : references) {
    if (candidate.empty() || ref.empty()) continue;
    const auto lcs = static_cast<double>(lcs_length(candidate, ref));
    if (lcs == 0.0) continue;
    const double p = lcs / static_cast<double>(candidate.size());
    const double r = lcs / static_cast<double>(ref.size());
    const double b2 = beta * beta;
    best = std::max(best, ((1.0 + b2) * p * r) / (r + b2 * p));
  }
  return best;
}

Alignment meteor_alignment(const Tokens& candidate, const Tokens& reference,
                           std::size_t node_budget) {
  return AlignmentSearch(candidate, reference, node_budget).run();
}

double meteor(const Tokens& candidate, const std::vector<Tokens>& references) {
  require_references(references.size(), "meteor");
  double best = 0.0;
  for (const auto& ref : references) {
    const Alignment a = meteor_alignment(candidate, ref);
    if (a.matches == 0) continue;
    const double m = static_cast<double>(a.matches);
    const double p = m / static_cast<double>(candidate.size());
    const double r = m / static_cast<double>(ref.size());
    const double f_mean = 10.0 * p * r / (r + 9.0 * p);
    const double penalty = 0.5 * std::pow(static_cast<double>(a.chunks) / m, 3.0);
    best = std::max(best, f_mean * (1.0 - penalty));
  }
  return best;
}

std::vector<double> cider(const std::vector<EvalSample>& samples, const CiderConfig& cfg) {
  if (samples.empty()) throw InvalidArgument("cider: empty corpus");
  if (cfg.max_n == 0 || !(cfg.sigma > 0.0)) throw InvalidArgument("cider: bad config");
  struct Prepared {
    Tokens candidate;
    std::vector<Tokens> references;
  };
  std::vector<Prepared> prepared;
  prepared.reserve(samples.size());
  for (const auto& s : samples) {
    require_references(s.references.size(), "cider");
    Prepared p{tokenize(s.candidate), {}};
    for (const auto& r : s.references) p.references.push_back(tokenize(r));
    prepared.push_back(std::move(p));
  }

  const double log_docs = std::log(static_cast<double>(samples.size()));
  std::vector<double> totals(samples.size(), 0.0);
  for (std::size_t n = 1; n <= cfg.max_n; ++n) {
    std::unordered_map<std::string, std::size_t> doc_freq;
    std::vector<std::vector<NgramCounts>> ref_counts(samples.size());
    for (std::size_t s = 0; s < prepared.size(); ++s) {
      std::unordered_map<std::string, bool> seen;
      for (const auto& ref : prepared[s].references) {
        ref_counts[s].push_back(count_ngrams(ref, n));
        for (const auto& [gram, c] : ref_counts[s].back()) seen.emplace(gram, true);
      }
      for (const auto& [gram, unused] : seen) ++doc_freq[gram];
    }
    auto weight = [&](const std::string& gram) {
      auto it = doc_freq.find(gram);
      const double df = it == doc_freq.end() ? 1.0 : static_cast<double>(it->second);
      return log_docs - std::log(df);
    };
    auto norm = [&](const NgramCounts& counts) {
      double acc = 0.0;
      for (const auto& [gram, c] : counts) {
        const double v = static_cast<double>(c) * weight(gram);
        acc += v * v;
      }
      return std::sqrt(acc);
    };

    for (std::size_t s = 0; s < prepared.size(); ++s) {
      const NgramCounts cand = count_ngrams(prepared[s].candidate, n);
      const double cand_norm = norm(cand);
      double score = 0.0;
      for (std::size_t r = 0; r < ref_counts[s].size(); ++r) {
        const NgramCounts& ref = ref_counts[s][r];
        const double ref_norm = norm(ref);
        double sim = 0.0;
        if (cand_norm > 0.0 && ref_norm > 0.0) {
          double dot = 0.0;
          for (const auto& [gram, c] : cand) {
            auto it = ref.find(gram);
            if (it == ref.end()) continue;
            const double w = weight(gram);
            dot += static_cast<double>(c) * w * static_cast<double>(it->second) * w;
          }
          sim = dot / (cand_norm * ref_norm);
        }
        const double delta = static_cast<double>(prepared[s].candidate.size()) -
                             static_cast<double>(prepared[s].references[r].size());
        score += sim * std::exp(-(delta * delta) / (2.0 * cfg.sigma * cfg.sigma));
      }
      totals[s] += score / static_cast<double>(ref_counts[s].size());
    }
  }
  for (double& t : totals) t = 10.0 * t / static_cast<double>(cfg.max_n);
  return totals;
}

std::string build_judge_prompt(const EvalSample& sample) {
  std::string prompt =
      "You are evaluating the answer of a video understanding assistant against "
      "reference answers. Rate the candidate answer on a scale from 1 to 5 for "
      "each of four aspects:\n"
      "ci: Correctness of Information\n"
      "do: Detail Orientation\n"
      "cu: Contextual Understanding\n"
      "tu: Temporal Understanding\n"
      "Reply with only a JSON object of four integers, exactly of the form "
      "{\"ci\": 1, \"do\": 1, \"cu\": 1, \"tu\": 1}.\n\n";
  for (std::size_t i = 0; i < sample.references.size(); ++i) {
    prompt += "Reference answer " + std::to_string(i + 1) + ": " + sample.references[i] + "\n";
  }
  prompt += "Candidate answer: " + sample.candidate + "\n";
  return prompt;
}

JudgeScores parse_judge_reply(const std::string& reply) {
  json j;
  try {
    j = json::parse(reply);
  } catch (const json::exception&) {
    throw ParseError("judge reply is not JSON: " + reply.substr(0, 80));
  }
  if (!j.is_object() || j.size() != 4) {
    throw ParseError("judge reply must be an object with exactly ci, do, cu, tu");
  }
  auto field = [&](const char* key) {
    if (!j.contains(key) || !j[key].is_number_integer()) {
      throw ParseError(std::string("judge reply: \"") + key + "\" missing or not an integer");
    }
    const auto v = j[key].get<long long>();
    if (v < 1 || v > 5) {
      throw RangeError(std::string("judge reply: \"") + key + "\"=" + std::to_string(v) +
                       " outside [1, 5]");
    }
    return static_cast<int>(v);
  };
  JudgeScores s;
  s.ci = field("ci");
  s.do_ = field("do");
  s.cu = field("cu");
  s.tu = field("tu");
  return s;
}

JudgeScores judge_evaluate(const EvalSample& sample, CompletionClient& client,
                           int max_retries) {
  WireRequest request{build_judge_prompt(sample), Matrix(), 64};
  std::string last_error;
  for (int attempt = 0; attempt <= max_retries; ++attempt) {
    std::string reply;
    try {
      reply = client.complete(request);
    } catch (const std::exception& e) {
      throw BackendError("judge: sample " + sample.id + ": " + e.what());
    }
    try {
      return parse_judge_reply(reply);
    } catch (const ParseError& e) {
      last_error = e.what();
    } catch (const RangeError& e) {
      throw RangeError("judge: sample " + sample.id + ": " + e.what());
    }
  }
  throw ParseError("judge: sample " + sample.id + ": no parseable reply after " +
                   std::to_string(max_retries + 1) + " attempts (" + last_error + ")");
}

std::vector<SampleScores> score_samples(const std::vector<EvalSample>& samples,
                                        const ScoringOptions& options) {
  std::vector<SampleScores> scores(samples.size());
  if (samples.empty()) return scores;
  const std::vector<double> cider_scores = cider(samples, options.cider);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Tokens cand = tokenize(samples[i].candidate);
    std::vector<Tokens> refs;
    for (const auto& r : samples[i].references) refs.push_back(tokenize(r));
    scores[i].bleu4 = bleu4(cand, refs);
    scores[i].meteor = meteor(cand, refs);
    scores[i].rouge_l = rouge_l(cand, refs);
    scores[i].cider = cider_scores[i];
  }
  if (options.judge == nullptr) return scores;

  CompletionClient& judge = *options.judge;
  const std::size_t width = judge.concurrent_safe()
                                ? std::max<std::size_t>(1, options.judge_concurrency)
                                : 1;
  for (std::size_t begin = 0; begin < samples.size(); begin += width) {
    const std::size_t end = std::min(samples.size(), begin + width);
    if (width == 1) {
      scores[begin].judge = judge_evaluate(samples[begin], judge);
      continue;
    }
    std::vector<std::future<JudgeScores>> batch;
    for (std::size_t i = begin; i < end; ++i) {
      batch.push_back(std::async(std::launch::async,
                                 [&, i] { return judge_evaluate(samples[i], judge); }));
    }
    for (std::size_t i = begin; i < end; ++i) scores[i].judge = batch[i - begin].get();
  }
  return scores;
}

EvalReport aggregate(const std::vector<EvalSample>& samples,
                     const std::vector<SampleScores>& scores) {
  if (samples.size() != scores.size()) {
    throw InvalidArgument("aggregate: " + std::to_string(samples.size()) + " samples but " +
                          std::to_string(scores.size()) + " score rows");
  }
  struct Acc {
    BlockSummary sum;
    JudgeMeans judge_sum;
    std::size_t judged = 0;
  };
  std::map<ReportBlock, Acc> acc;
  Acc all;
  auto add_to = [](Acc& a, const SampleScores& s) {
    ++a.sum.count;
    a.sum.bleu4 += s.bleu4;
    a.sum.meteor += s.meteor;
    a.sum.rouge_l += s.rouge_l;
    a.sum.cider += s.cider;
    if (s.judge) {
      ++a.judged;
      a.judge_sum.ci += s.judge->ci;
      a.judge_sum.do_ += s.judge->do_;
      a.judge_sum.cu += s.judge->cu;
      a.judge_sum.tu += s.judge->tu;
    }
  };
  for (std::size_t i = 0; i < samples.size(); ++i) {
    add_to(acc[block_for(samples[i].task)], scores[i]);
    add_to(all, scores[i]);
  }
  auto finish = [](const Acc& a) {
    BlockSummary s = a.sum;
    s.bleu4 = safe_mean(s.bleu4, s.count);
    s.meteor = safe_mean(s.meteor, s.count);
    s.rouge_l = safe_mean(s.rouge_l, s.count);
    s.cider = safe_mean(s.cider, s.count);
    if (a.judged > 0) {
      s.judge = JudgeMeans{safe_mean(a.judge_sum.ci, a.judged), safe_mean(a.judge_sum.do_, a.judged),
                           safe_mean(a.judge_sum.cu, a.judged), safe_mean(a.judge_sum.tu, a.judged)};
    }
    return s;
  };
  EvalReport report;
  for (ReportBlock b : kAllBlocks) {
    auto it = acc.find(b);
    report.blocks[b] = it == acc.end() ? BlockSummary{} : finish(it->second);
  }
  report.overall = finish(all);
  return report;
}

std::string report_to_json(const EvalReport& report) {
  json j;
  json blocks;
  for (ReportBlock b : kAllBlocks) {
    auto it = report.blocks.find(b);
    blocks[std::string(to_string(b))] =
        summary_json(it == report.blocks.end() ? BlockSummary{} : it->second);
  }
  j["blocks"] = std::move(blocks);
  j["overall"] = summary_json(report.overall);
  return j.dump(2);
}

}  // namespace vidfocus
