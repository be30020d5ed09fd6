#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>

#include <json.hpp>

#include "support/fixtures.hpp"
#include "support/metric_oracles.hpp"
#include "vidfocus/error.hpp"
#include "vidfocus/metrics.hpp"
#include "vidfocus/random.hpp"

using namespace vidfocus;
namespace vt = vidfocus::testing;
using vt::oracle_bleu;
using vt::oracle_rouge;
using vt::random_tokens;
using Gram = vt::Gram;
using vt::brute_counts;
using vt::brute_lcs;

namespace {

// Every partial one-to-one matching of equal tokens, scored by (matches desc,
// chunks asc).
void enumerate_alignments(const Tokens& c, const Tokens& r, std::size_t i, std::vector<bool>& used,
                          std::vector<std::pair<std::size_t, std::size_t>>& pairs, Alignment& best) {
  if (i == c.size()) {
    std::size_t chunks = 0;
    for (std::size_t k = 0; k < pairs.size(); ++k)
      if (k == 0 || pairs[k].second != pairs[k - 1].second + 1 || pairs[k].first != pairs[k - 1].first + 1)
        ++chunks;
    if (pairs.size() > best.matches || (pairs.size() == best.matches && chunks < best.chunks)) {
      best.matches = pairs.size();
      best.chunks = chunks;
    }
    return;
  }
  enumerate_alignments(c, r, i + 1, used, pairs, best);
  for (std::size_t j = 0; j < r.size(); ++j) {
    if (used[j] || r[j] != c[i]) continue;
    used[j] = true;
    pairs.push_back({i, j});
    enumerate_alignments(c, r, i + 1, used, pairs, best);
    pairs.pop_back();
    used[j] = false;
  }
}

Alignment oracle_alignment(const Tokens& c, const Tokens& r) {
  Alignment best{0, 0};
  std::vector<bool> used(r.size(), false);
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  enumerate_alignments(c, r, 0, used, pairs, best);
  return best;
}

// TF-IDF vectors over n-grams, cosine similarity, Gaussian length penalty.
std::vector<double> oracle_cider(const std::vector<EvalSample>& samples) {
  const double N = static_cast<double>(samples.size());
  std::vector<double> out(samples.size(), 0.0);
  for (std::size_t n = 1; n <= 4; ++n) {
    std::map<Gram, int> df;
    for (const auto& s : samples) {
      std::map<Gram, bool> seen;
      for (const auto& r : s.references)
        for (const auto& [g, c] : brute_counts(tokenize(r), n)) seen[g] = true;
      for (const auto& [g, b] : seen) ++df[g];
    }
    auto vec = [&](const Tokens& t) {
      std::map<Gram, double> v;
      for (const auto& [g, c] : brute_counts(t, n)) {
        const int d = df.count(g) ? df[g] : 1;
        v[g] = c * std::log(N / d);
      }
      return v;
    };
    for (std::size_t i = 0; i < samples.size(); ++i) {
      const Tokens cand = tokenize(samples[i].candidate);
      const auto cv = vec(cand);
      double acc = 0.0;
      for (const auto& ref : samples[i].references) {
        const Tokens rt = tokenize(ref);
        const auto rv = vec(rt);
        double dot = 0, na = 0, nb = 0;
        for (const auto& [g, x] : cv) {
          na += x * x;
          auto it = rv.find(g);
          if (it != rv.end()) dot += x * it->second;
        }
        for (const auto& [g, x] : rv) nb += x * x;
        const double cos = (na > 0 && nb > 0) ? dot / std::sqrt(na * nb) : 0.0;
        const double delta = static_cast<double>(cand.size()) - static_cast<double>(rt.size());
        acc += cos * std::exp(-delta * delta / 72.0);
      }
      out[i] += acc / samples[i].references.size();
    }
  }
  for (double& v : out) v = v * 10.0 / 4.0;
  return out;
}

class StubJudge : public CompletionClient {
 public:
  explicit StubJudge(std::vector<std::string> replies) : replies_(std::move(replies)) {}
  std::string complete(const WireRequest&) override {
    const std::size_t i = calls++;
    if (replies_.empty()) throw BackendError("unreachable");
    return replies_[std::min(i, replies_.size() - 1)];
  }
  std::atomic<std::size_t> calls{0};

 private:
  std::vector<std::string> replies_;
};

}  // namespace

TEST(Tokenize, Examples) {
  EXPECT_EQ(tokenize("The Denonvilliers' fascia."), (Tokens{"the", "denonvilliers'", "fascia", "."}));
  EXPECT_TRUE(tokenize("").empty());
  EXPECT_EQ(tokenize("A  B"), (Tokens{"a", "b"}));
  EXPECT_EQ(tokenize("(see: x)!"), (Tokens{"(", "see", ":", "x", ")!"}));
  EXPECT_EQ(tokenize("..."), (Tokens{"..."}));
}

TEST(Bleu, IdentityAndDisjoint) {
  const Tokens t = tokenize("the surgeon dissects the fascia carefully");
  EXPECT_EQ(bleu4(t, {t}), 1.0);
  EXPECT_EQ(bleu4(tokenize("a b c d"), {tokenize("e f g h")}), 0.0);
}

TEST(Bleu, SixTokenWorkedExample) {
  const Tokens cand = tokenize("the cat sat on the mat");
  const Tokens ref = tokenize("the cat sat on a mat today");
  // p1 = 5/6, p2 = 3/5, p3 = 2/4, p4 = 1/3, BP = exp(1 - 7/6).
  const double expected = std::exp(1.0 - 7.0 / 6.0) * std::pow(5.0 / 6 * 3.0 / 5 * 2.0 / 4 * 1.0 / 3, 0.25);
  EXPECT_NEAR(bleu4(cand, {ref}), expected, 1e-12);
  EXPECT_NEAR(oracle_bleu(cand, {ref}), expected, 1e-12);
}

TEST(Bleu, MatchesBruteForceOnRandomCorpora) {
  Rng rng(1);
  for (int corpus = 0; corpus < 200; ++corpus) {
    const Tokens cand = random_tokens(rng, 10, 5);
    std::vector<Tokens> refs;
    const std::size_t n_refs = 1 + rng.index(3);
    for (std::size_t r = 0; r < n_refs; ++r) refs.push_back(random_tokens(rng, 10, 5));
    EXPECT_NEAR(bleu4(cand, refs), oracle_bleu(cand, refs), 1e-9) << "corpus " << corpus;
  }
}

TEST(RougeL, Examples) {
  const Tokens t = tokenize("identical text here");
  EXPECT_EQ(rouge_l(t, {t}), 1.0);
  EXPECT_EQ(rouge_l(tokenize("a b"), {tokenize("c d")}), 0.0);
  EXPECT_NEAR(rouge_l({"a", "b", "c", "d"}, {{"a", "c", "d", "b"}}), 0.75, 1e-12);
  EXPECT_EQ(brute_lcs({"a", "b", "c", "d"}, {"a", "c", "d", "b"}), 3u);
}

TEST(RougeL, MatchesBruteForceOnRandomCorpora) {
  Rng rng(2);
  for (int corpus = 0; corpus < 200; ++corpus) {
    const Tokens cand = random_tokens(rng, 9, 4);
    std::vector<Tokens> refs;
    const std::size_t n_refs = 1 + rng.index(3);
    for (std::size_t r = 0; r < n_refs; ++r) refs.push_back(random_tokens(rng, 9, 4));
    EXPECT_NEAR(rouge_l(cand, refs), oracle_rouge(cand, refs), 1e-9) << "corpus " << corpus;
  }
}

TEST(Meteor, IdentityFormula) {
  const Tokens t = tokenize("one two three four five");
  const Alignment a = meteor_alignment(t, t);
  EXPECT_EQ(a.matches, 5u);
  EXPECT_EQ(a.chunks, 1u);
  EXPECT_NEAR(meteor(t, {t}), 1.0 - 0.5 * std::pow(1.0 / 5.0, 3), 1e-12);
  EXPECT_EQ(meteor(tokenize("a b"), {tokenize("c d")}), 0.0);
}

TEST(Meteor, TwoChunkWorkedExample) {
  const Tokens c = tokenize("a b c d e"), r = tokenize("a b x d e");
  const Alignment a = meteor_alignment(c, r);
  const Alignment o = oracle_alignment(c, r);
  EXPECT_EQ(a.matches, o.matches);
  EXPECT_EQ(a.chunks, o.chunks);
  EXPECT_EQ(a.chunks, 2u);
  // P = R = 0.8, Fmean = 0.8, penalty = 0.5 (2/4)^3.
  EXPECT_NEAR(meteor(c, {r}), 0.75, 1e-12);
}

TEST(Meteor, AlignmentMatchesExhaustiveSearch) {
  Rng rng(3);
  for (int i = 0; i < 300; ++i) {
    const Tokens c = random_tokens(rng, 7, 3);
    const Tokens r = random_tokens(rng, 7, 3);
    const Alignment a = meteor_alignment(c, r);
    const Alignment o = oracle_alignment(c, r);
    EXPECT_EQ(a.matches, o.matches);
    EXPECT_EQ(a.chunks, o.chunks) << i;
  }
}

TEST(Cider, SingleSampleIsZero) {
  EXPECT_EQ(cider({{"s", "a b c d", {"a b c d"}, TaskKind::Recall}}), std::vector<double>{0.0});
}

TEST(Cider, DisjointSamplesScoreTen) {
  const std::vector<EvalSample> s{{"1", "a b c d e", {"a b c d e"}, TaskKind::Recall},
                                  {"2", "v w x y z", {"v w x y z"}, TaskKind::Recall}};
  const auto got = cider(s);
  const auto want = oracle_cider(s);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_NEAR(got[i], want[i], 1e-12);
    EXPECT_NEAR(got[i], 10.0, 1e-12);
  }
}

TEST(Cider, NothingSharedIsZero) {
  const std::vector<EvalSample> s{{"1", "p q r", {"a b c d e"}, TaskKind::Recall},
                                  {"2", "v w x y z", {"v w x y z"}, TaskKind::Recall}};
  EXPECT_EQ(cider(s)[0], 0.0);
}

TEST(Cider, MatchesVectorSpaceOracle) {
  Rng rng(4);
  for (int corpus = 0; corpus < 50; ++corpus) {
    std::vector<EvalSample> s;
    const std::size_t n = 1 + rng.index(5);
    for (std::size_t i = 0; i < n; ++i) {
      auto join = [](const Tokens& t) {
        std::string out;
        for (const auto& w : t) out += (out.empty() ? "" : " ") + w;
        return out;
      };
      EvalSample e{std::to_string(i), join(random_tokens(rng, 8, 6)), {}, TaskKind::Plan};
      const std::size_t n_refs = 1 + rng.index(3);
      for (std::size_t r = 0; r < n_refs; ++r) e.references.push_back(join(random_tokens(rng, 8, 6)));
      s.push_back(e);
    }
    const auto got = cider(s);
    const auto want = oracle_cider(s);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(got[i], want[i], 1e-9);
    std::vector<EvalSample> reversed(s.rbegin(), s.rend());
    const auto rev = cider(reversed);
    for (std::size_t i = 0; i < n; ++i) EXPECT_NEAR(rev[n - 1 - i], got[i], 1e-12);
  }
}

TEST(Metrics, RangesAndReferenceOrderInvariance) {
  Rng rng(5);
  for (int i = 0; i < 300; ++i) {
    const Tokens c = random_tokens(rng, 12, 6);
    std::vector<Tokens> refs;
    const std::size_t n_refs = 1 + rng.index(4);
    for (std::size_t r = 0; r < n_refs; ++r) refs.push_back(random_tokens(rng, 12, 6));
    std::vector<Tokens> shuffled(refs.rbegin(), refs.rend());
    for (auto f : {&bleu4, &meteor}) {
      const double v = f(c, refs);
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
      EXPECT_EQ(v, f(c, shuffled));
    }
    const double rl = rouge_l(c, refs);
    EXPECT_GE(rl, 0.0);
    EXPECT_LE(rl, 1.0);
    EXPECT_EQ(rl, rouge_l(c, shuffled));
  }
}

TEST(Metrics, EmptyReferenceListRejected) {
  EXPECT_THROW(bleu4({"a"}, {}), InvalidArgument);
  EXPECT_THROW(rouge_l({"a"}, {}), InvalidArgument);
  EXPECT_THROW(meteor({"a"}, {}), InvalidArgument);
  EXPECT_THROW(cider({}), InvalidArgument);
}

TEST(Judge, ParsesValidReply) {
  StubJudge judge({R"({"ci":3,"do":2,"cu":4,"tu":3})"});
  EXPECT_EQ(judge_evaluate({"s", "c", {"r"}, TaskKind::Plan}, judge), (JudgeScores{3, 2, 4, 3}));
  EXPECT_EQ(judge.calls.load(), 1u);
}

TEST(Judge, GarbageFailsAfterRetries) {
  StubJudge judge({"five"});
  EXPECT_THROW(judge_evaluate({"s", "c", {"r"}, TaskKind::Plan}, judge), ParseError);
  EXPECT_EQ(judge.calls.load(), 4u);
}

TEST(Judge, RetryRecoversFromMalformedReply) {
  StubJudge judge({"{", R"({"ci":1,"do":5,"cu":1,"tu":5})"});
  EXPECT_EQ(judge_evaluate({"s", "c", {"r"}, TaskKind::Plan}, judge), (JudgeScores{1, 5, 1, 5}));
  EXPECT_EQ(judge.calls.load(), 2u);
}

TEST(Judge, OutOfRangeIsRangeError) {
  StubJudge judge({R"({"ci":6,"do":2,"cu":4,"tu":3})"});
  EXPECT_THROW(judge_evaluate({"s", "c", {"r"}, TaskKind::Plan}, judge), RangeError);
  EXPECT_EQ(judge.calls.load(), 1u);
}

TEST(Judge, StrictShape) {
  EXPECT_THROW(parse_judge_reply(R"({"ci":3,"do":2,"cu":4})"), ParseError);
  EXPECT_THROW(parse_judge_reply(R"({"ci":3,"do":2,"cu":4,"tu":3,"x":1})"), ParseError);
  EXPECT_THROW(parse_judge_reply(R"({"ci":3.5,"do":2,"cu":4,"tu":3})"), ParseError);
  EXPECT_THROW(parse_judge_reply(R"({"ci":"3","do":2,"cu":4,"tu":3})"), ParseError);
  EXPECT_THROW(parse_judge_reply(R"(Sure! {"ci":3,"do":2,"cu":4,"tu":3})"), ParseError);
  EXPECT_THROW(parse_judge_reply(R"({"ci":0,"do":2,"cu":4,"tu":3})"), RangeError);
}

TEST(Judge, TransportErrorIsNotRetried) {
  StubJudge judge({});
  EXPECT_THROW(judge_evaluate({"s", "c", {"r"}, TaskKind::Plan}, judge), BackendError);
  EXPECT_EQ(judge.calls.load(), 1u);
}

TEST(Judge, PromptCarriesCandidateAndReferences) {
  const std::string p = build_judge_prompt({"s", "CANDIDATE TEXT", {"REF ONE", "REF TWO"}, TaskKind::Causal});
  EXPECT_NE(p.find("CANDIDATE TEXT"), std::string::npos);
  EXPECT_NE(p.find("REF ONE"), std::string::npos);
  EXPECT_NE(p.find("REF TWO"), std::string::npos);
  EXPECT_NE(p.find("\"ci\""), std::string::npos);
}

TEST(Aggregate, SingleSampleEqualsItsScores) {
  SampleScores s{0.1, 0.2, 0.3, 4.0, JudgeScores{1, 2, 3, 4}};
  const auto rep = aggregate({{"a", "x", {"y"}, TaskKind::Recall}}, {s});
  const auto& b = rep.blocks.at(ReportBlock::PerceptionReasoning);
  EXPECT_EQ(b.count, 1u);
  EXPECT_EQ(b.bleu4, 0.1);
  EXPECT_EQ(b.meteor, 0.2);
  EXPECT_EQ(b.rouge_l, 0.3);
  EXPECT_EQ(b.cider, 4.0);
  ASSERT_TRUE(b.judge.has_value());
  EXPECT_EQ(b.judge->tu, 4.0);
  EXPECT_EQ(rep.blocks.at(ReportBlock::TemporalReasoning).count, 0u);
}

TEST(Aggregate, MeanOfTwo) {
  SampleScores a, b;
  a.bleu4 = 0.2;
  b.bleu4 = 0.4;
  const auto rep = aggregate({{"1", "x", {"y"}, TaskKind::Plan}, {"2", "x", {"y"}, TaskKind::PreRequisites}}, {a, b});
  EXPECT_NEAR(rep.blocks.at(ReportBlock::TemporalReasoning).bleu4, 0.3, 1e-15);
  EXPECT_NEAR(rep.overall.bleu4, 0.3, 1e-15);
  EXPECT_FALSE(rep.overall.judge.has_value());
}

TEST(Aggregate, HandPartitionedBlocks) {
  const std::vector<std::pair<TaskKind, ReportBlock>> partition{
      {TaskKind::FullVideoSummarization, ReportBlock::FullVideoDescription},
      {TaskKind::FullVideoPerception, ReportBlock::FullVideoDescription},
      {TaskKind::SummaryDescription, ReportBlock::FineGrainedDescription},
      {TaskKind::Plan, ReportBlock::TemporalReasoning},
      {TaskKind::PreRequisites, ReportBlock::TemporalReasoning},
      {TaskKind::Causal, ReportBlock::PerceptionReasoning},
      {TaskKind::NoticeAndSuggestion, ReportBlock::PerceptionReasoning},
      {TaskKind::Recall, ReportBlock::PerceptionReasoning},
  };
  std::vector<EvalSample> samples;
  std::vector<SampleScores> scores;
  std::map<ReportBlock, std::vector<double>> expected;
  for (std::size_t i = 0; i < partition.size(); ++i) {
    EXPECT_EQ(block_for(partition[i].first), partition[i].second);
    samples.push_back({std::to_string(i), "x", {"y"}, partition[i].first});
    SampleScores s;
    s.meteor = 0.1 * static_cast<double>(i);
    scores.push_back(s);
    expected[partition[i].second].push_back(s.meteor);
  }
  const auto rep = aggregate(samples, scores);
  for (const auto& [block, values] : expected) {
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    EXPECT_EQ(rep.blocks.at(block).count, values.size());
    EXPECT_NEAR(rep.blocks.at(block).meteor, mean, 1e-15);
  }
  EXPECT_EQ(rep.overall.count, 8u);
}

TEST(ScoreSamples, ConcurrentJudge) {
  std::atomic<int> in_flight{0}, peak{0}, calls{0};
  CallbackClient judge(
      [&](const std::string&) {
        const int now = ++in_flight;
        int p = peak.load();
        while (now > p && !peak.compare_exchange_weak(p, now)) {
        }
        ++calls;
        --in_flight;
        return std::string(R"({"ci":4,"do":4,"cu":4,"tu":2})");
      },
      true);
  std::vector<EvalSample> samples;
  for (int i = 0; i < 9; ++i) samples.push_back({std::to_string(i), "a b c", {"a b c"}, TaskKind::Causal});
  ScoringOptions opts;
  opts.judge = &judge;
  opts.judge_concurrency = 3;
  const auto scores = score_samples(samples, opts);
  EXPECT_EQ(calls.load(), 9);
  EXPECT_LE(peak.load(), 3);
  for (const auto& s : scores) EXPECT_EQ(s.judge->tu, 2);
  const auto rep = aggregate(samples, scores);
  EXPECT_EQ(rep.overall.judge->ci, 4.0);
}

TEST(ReportJson, BlocksInFixedOrderWithPercentages) {
  SampleScores s{0.25, 0.5, 0.75, 1.0, std::nullopt};
  const auto j = nlohmann::ordered_json::parse(report_to_json(aggregate({{"1", "x", {"y"}, TaskKind::Plan}}, {s})));
  std::vector<std::string> keys;
  for (const auto& [k, v] : j["blocks"].items()) keys.push_back(k);
  EXPECT_EQ(keys, (std::vector<std::string>{"full_video_description", "fine_grained_description",
                                            "fine_grained_temporal_reasoning",
                                            "fine_grained_perception_reasoning"}));
  const auto& t = j["blocks"]["fine_grained_temporal_reasoning"];
  EXPECT_EQ(t["bleu4"], 0.25);
  EXPECT_EQ(t["bleu4_pct"], 25.0);
  EXPECT_EQ(t["rouge_l_pct"], 75.0);
}

TEST(LoadEvalSamples, JoinsById) {
  vt::TempDir dir("vf-eval");
  vt::write_text(dir.file("p.jsonl"), "{\"id\":\"b\",\"candidate\":\"B\"}\n{\"id\":\"a\",\"candidate\":\"A\"}\n");
  vt::write_text(dir.file("r.jsonl"),
                 "{\"id\":\"a\",\"references\":[\"x\"],\"task\":\"plan\"}\n"
                 "{\"id\":\"b\",\"references\":[\"y\",\"z\"],\"task\":\"recall\"}\n");
  const auto s = load_eval_samples(dir.file("p.jsonl"), dir.file("r.jsonl"));
  ASSERT_EQ(s.size(), 2u);
  EXPECT_EQ(s[0].id, "a");
  EXPECT_EQ(s[0].candidate, "A");
  EXPECT_EQ(s[1].references.size(), 2u);
  EXPECT_EQ(s[1].task, TaskKind::Recall);
}

TEST(LoadEvalSamples, RejectsInconsistentFiles) {
  vt::TempDir dir("vf-eval-bad");
  vt::write_text(dir.file("r.jsonl"), "{\"id\":\"a\",\"references\":[\"x\"],\"task\":\"plan\"}\n");
  vt::write_text(dir.file("missing.jsonl"), "");
  EXPECT_THROW(load_eval_samples(dir.file("missing.jsonl"), dir.file("r.jsonl")), InvalidArgument);
  vt::write_text(dir.file("extra.jsonl"), "{\"id\":\"a\",\"candidate\":\"A\"}\n{\"id\":\"q\",\"candidate\":\"Q\"}\n");
  EXPECT_THROW(load_eval_samples(dir.file("extra.jsonl"), dir.file("r.jsonl")), InvalidArgument);
  vt::write_text(dir.file("dup.jsonl"), "{\"id\":\"a\",\"candidate\":\"A\"}\n{\"id\":\"a\",\"candidate\":\"A\"}\n");
  EXPECT_THROW(load_eval_samples(dir.file("dup.jsonl"), dir.file("r.jsonl")), ParseError);
  vt::write_text(dir.file("ok.jsonl"), "{\"id\":\"a\",\"candidate\":\"A\"}\n");
  vt::write_text(dir.file("badtask.jsonl"), "{\"id\":\"a\",\"references\":[\"x\"],\"task\":\"dance\"}\n");
  EXPECT_THROW(load_eval_samples(dir.file("ok.jsonl"), dir.file("badtask.jsonl")), ParseError);
  vt::write_text(dir.file("norefs.jsonl"), "{\"id\":\"a\",\"references\":[],\"task\":\"plan\"}\n");
  EXPECT_THROW(load_eval_samples(dir.file("ok.jsonl"), dir.file("norefs.jsonl")), ParseError);
  EXPECT_THROW(load_eval_samples(dir.file("nope.jsonl"), dir.file("r.jsonl")), IoError);
}
