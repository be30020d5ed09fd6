#include <gtest/gtest.h>

#include <json.hpp>

#include "vidfocus/client.hpp"
#include "vidfocus/error.hpp"
#include "vidfocus/orchestrator.hpp"

using namespace vidfocus;

namespace {

const std::string kSentence =
    "According to the above background information of the video, answer the following question: ";

// Records every request and answers with a fixed string per call.
class RecordingBackend : public Backend {
 public:
  explicit RecordingBackend(std::size_t width) : width_(width) {}
  std::string generate(const BackendRequest& request) override {
    requests.push_back(request);
    if (fail_on_call == requests.size()) throw std::runtime_error("boom");
    return "answer" + std::to_string(requests.size());
  }
  std::size_t embedding_width() const override { return width_; }

  std::vector<BackendRequest> requests;
  std::size_t fail_on_call = 0;

 private:
  std::size_t width_;
};

VideoMeta video(double t) {
  VideoMeta m;
  m.duration_s = t;
  return m;
}

std::size_t count_occurrences(const std::string& haystack, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = haystack.find(needle); pos != std::string::npos; pos = haystack.find(needle, pos + 1)) ++n;
  return n;
}

}  // namespace

TEST(Stage2Prompt, GoldenBytes) {
  EXPECT_EQ(build_stage2_prompt("A", "B"),
            "<video>A\nAccording to the above background information of the video, answer the "
            "following question: \nB");
}

TEST(Stage2Prompt, EmptyAnswer) {
  EXPECT_EQ(build_stage2_prompt("", "B"), "<video>\n" + kSentence + "\nB");
}

TEST(Stage2Prompt, NewlinesPassThrough) {
  EXPECT_EQ(build_stage2_prompt("x\ny", "q"), "<video>x\ny\n" + kSentence + "\nq");
}

TEST(SeededFrameEncoder, SameTimestampSameRow) {
  SeededFrameEncoder enc(6, 42);
  FrameSamplePlan a{{0.0, 10.0, 20.0}, 10.0, PlanStage::FullVideo};
  FrameSamplePlan b{{10.0, 11.0}, 1.0, PlanStage::Clip};
  const TokenMatrix ta = enc.encode(a, TokenSource::LowFrequency);
  const TokenMatrix tb = enc.encode(b, TokenSource::HighFrequency);
  EXPECT_EQ(ta.source(), TokenSource::LowFrequency);
  EXPECT_EQ(tb.source(), TokenSource::HighFrequency);
  EXPECT_EQ(row_slice(ta.data(), 1, 2), row_slice(tb.data(), 0, 1));
  EXPECT_NE(row_slice(tb.data(), 0, 1), row_slice(tb.data(), 1, 2));
  SeededFrameEncoder other(6, 43);
  EXPECT_NE(other.encode(a, TokenSource::LowFrequency).data(), ta.data());
}

TEST(TwoStage, RecordingBackendSeesExactPrompts) {
  SeededFrameEncoder enc(4, 1);
  RecordingBackend backend(4);
  const auto r = run_two_stage(video(300), enc, "Q1", {"Q2", {100, 130}}, backend);
  ASSERT_EQ(backend.requests.size(), 2u);
  EXPECT_EQ(backend.requests[0].text, "<video>Q1");
  EXPECT_EQ(backend.requests[1].text, build_stage2_prompt("answer1", "Q2"));
  EXPECT_EQ(r.stage2_prompt, backend.requests[1].text);
  EXPECT_EQ(r.answer1, "answer1");
  EXPECT_EQ(r.answer2, "answer2");
  EXPECT_EQ(backend.requests[0].max_new_tokens, 256u);
  EXPECT_EQ(backend.requests[1].max_new_tokens, 256u);

  const std::string& text2 = backend.requests[1].text;
  EXPECT_EQ(text2.rfind("<video>", 0), 0u);
  EXPECT_EQ(count_occurrences(text2, kSentence), 1u);
}

TEST(TwoStage, VisualTokenCounts) {
  SeededFrameEncoder enc(4, 1);
  for (auto arrangement : {OutputArrangement::ConcatAfterLowFrequency, OutputArrangement::FusedOnly}) {
    RecordingBackend backend(4);
    TwoStageOptions opts;
    opts.fusion.output_arrangement = arrangement;
    const auto r = run_two_stage(video(300), enc, "Q1", {"Q2", {100, 130}}, backend, opts);
    const std::size_t n_f = r.full_plan.size(), n_c = r.clip_plan.size();
    EXPECT_EQ(backend.requests[0].visual_tokens.n_tokens(), n_f);
    const std::size_t expected = arrangement == OutputArrangement::FusedOnly ? n_c : n_f + n_c;
    EXPECT_EQ(backend.requests[1].visual_tokens.n_tokens(), expected);
    EXPECT_EQ(r.stage2_visual_tokens, expected);
  }
}

TEST(TwoStage, WholeVideoClip) {
  SeededFrameEncoder enc(4, 9);
  RecordingBackend backend(4);
  const auto r = run_two_stage(video(60), enc, "Q1", {"Q2", {0, 60}}, backend);
  EXPECT_EQ(r.clip_plan.timestamps_s, r.full_plan.timestamps_s);
  const Matrix x_f = enc.encode(r.full_plan, TokenSource::LowFrequency).data();
  const Matrix& sent = backend.requests[1].visual_tokens.data();
  EXPECT_EQ(row_slice(sent, 0, x_f.rows()), x_f);
  const Matrix expected_fused =
      fuse(TokenMatrix(x_f, TokenSource::HighFrequency), TokenMatrix(x_f, TokenSource::LowFrequency),
           FusionConfig{})
          .data();
  EXPECT_EQ(sent, expected_fused);
}

TEST(TwoStage, BackendErrorsCarryStage) {
  SeededFrameEncoder enc(4, 1);
  for (std::size_t call : {1u, 2u}) {
    RecordingBackend backend(4);
    backend.fail_on_call = call;
    try {
      run_two_stage(video(300), enc, "Q1", {"Q2", {100, 130}}, backend);
      FAIL() << "expected a backend error";
    } catch (const BackendError& e) {
      EXPECT_NE(std::string(e.what()).find("stage " + std::to_string(call)), std::string::npos);
    }
    EXPECT_EQ(backend.requests.size(), call);
  }
}

TEST(TwoStage, RejectsBadRequests) {
  SeededFrameEncoder enc(4, 1);
  RecordingBackend backend(4);
  EXPECT_THROW(run_two_stage(video(300), enc, "Q1", {"Q2", {250, 330}}, backend), RangeError);
  EXPECT_THROW(run_two_stage(video(300), enc, "Q1", {"Q2", {30, 30}}, backend), InvalidArgument);
  EXPECT_THROW(run_two_stage(video(300), enc, "Q1", {"", {30, 40}}, backend), InvalidArgument);
  EXPECT_TRUE(backend.requests.empty());
  RecordingBackend narrow(3);
  EXPECT_THROW(run_two_stage(video(300), enc, "Q1", {"Q2", {30, 40}}, narrow), ShapeError);
}

TEST(TwoStage, ToyBackendIsDeterministic) {
  ToyModelConfig cfg;
  cfg.vocab_size = 257;
  cfg.d = 8;
  cfg.max_seq = 256;
  cfg.seed = 17;
  TwoStageOptions opts;
  opts.max_new_tokens_stage1 = 24;
  opts.max_new_tokens_stage2 = 24;
  auto run = [&] {
    ToyBackend backend(ToyModel::init(cfg));
    SeededFrameEncoder enc(8, 17);
    return run_two_stage(video(120), enc, "What is shown?", {"Which tool?", {30, 50}}, backend, opts);
  };
  const auto a = run();
  const auto b = run();
  EXPECT_EQ(a.answer1, b.answer1);
  EXPECT_EQ(a.answer2, b.answer2);
  EXPECT_LE(a.answer1.size(), 24u);
}

TEST(ToyBackend, NeedsByteVocabulary) {
  ToyModelConfig cfg;
  cfg.vocab_size = 64;
  EXPECT_THROW(ToyBackend(ToyModel::init(cfg)), InvalidArgument);
}

TEST(RemoteBackend, SpeaksWireFormat) {
  std::string seen;
  auto client = std::make_shared<CallbackClient>([&](const std::string& body) {
    seen = body;
    return std::string("remote says hi");
  });
  RemoteBackend backend(client, 2);
  BackendRequest req{"<video>hello", TokenMatrix(Matrix::from_rows({{1.5, -2}}), TokenSource::LowFrequency), 7};
  EXPECT_EQ(backend.generate(req), "remote says hi");
  const auto j = nlohmann::json::parse(seen);
  EXPECT_EQ(j["text"], "<video>hello");
  EXPECT_EQ(j["max_new_tokens"], 7);
  EXPECT_EQ(j["visual_tokens"], nlohmann::json::parse("[[1.5,-2.0]]"));
}
