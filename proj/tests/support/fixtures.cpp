#include "fixtures.hpp"

#include <fcntl.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace vidfocus::testing {

namespace fs = std::filesystem;
using json = nlohmann::json;

TempDir::TempDir(const std::string& prefix) {
  std::random_device rd;
  for (int attempt = 0; attempt < 100; ++attempt) {
    fs::path candidate = fs::temp_directory_path() / (prefix + "-" + std::to_string(rd()));
    if (fs::create_directory(candidate)) {
      path_ = candidate;
      return;
    }
  }
  throw std::runtime_error("could not create temp dir");
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

CorpusFixture write_corpus_fixture(const TempDir& dir) {
  static const std::array<const char*, 6> kClipTasks = {
      "summary_description", "plan", "pre_requisites", "causal", "notice_and_suggestion", "recall"};
  // 8+8+8+8+8+9 = 49 surgical keysteps.
  static const std::array<int, 6> kSurgicalPerVideo = {8, 8, 8, 8, 8, 9};

  CorpusFixture fx;
  fx.metadata = dir.file("metadata.jsonl");
  fx.transcripts = dir.file("transcripts.jsonl");
  fx.frame_scores = dir.file("frame_scores.jsonl");
  std::ostringstream meta, trans, scores;

  for (std::size_t v = 0; v < kSurgicalPerVideo.size(); ++v) {
    const std::string id = "vid" + std::to_string(v);
    const int n_surgical = kSurgicalPerVideo[v];
    const double step_len = 20.0;
    // Surgical keysteps first, then one non-surgical keystep at the end.
    const double duration = step_len * (n_surgical + 1);
    json keysteps = json::array();
    json qa = json::array();
    for (int k = 0; k <= n_surgical; ++k) {
      const double start = step_len * k;
      const double end = start + step_len;
      const bool surgical = k < n_surgical;
      keysteps.push_back({{"label", "step " + std::to_string(k)}, {"start_s", start}, {"end_s", end}});
      for (const char* task : kClipTasks) {
        qa.push_back({{"granularity", "clip"},
                      {"task", task},
                      {"question", std::string("What about ") + task + " in step " + std::to_string(k) + "?"},
                      {"answer", "Answer for step " + std::to_string(k)},
                      {"clip", {{"start_s", start + 2.0}, {"end_s", end - 2.0}}}});
        if (surgical) {
          ++fx.fine_grained_qa;
          ++fx.task_counts[task];
        } else {
          ++fx.dropped_qa;
        }
      }
      // Frames at 1 fps over [start, end]. Surgical steps score 0.9 on every
      // frame, the last one 0.2.
      for (double t = start; t <= end + 1e-9; t += 1.0) {
        scores << json({{"video_id", id}, {"timestamp_s", t}, {"surgical_score", surgical ? 0.9 : 0.2}}).dump()
               << "\n";
      }
      trans << json({{"video_id", id}, {"start_s", start + 1.0}, {"end_s", start + 5.0},
                     {"text", "narration for step " + std::to_string(k)}})
                   .dump()
            << "\n";
      ++fx.keysteps_total;
      if (surgical) ++fx.keysteps_surgical;
    }
    for (const char* task : {"full_video_summarization", "full_video_summarization", "full_video_perception"}) {
      qa.push_back({{"granularity", "full"},
                    {"task", task},
                    {"question", std::string("Describe the whole video (") + task + ")."},
                    {"answer", "The procedure of " + id + "."}});
      ++fx.full_video_qa;
      ++fx.task_counts[task];
    }
    meta << json({{"video_id", id},
                  {"duration_s", duration},
                  {"abstract_text", "Abstract of " + id},
                  {"keysteps", keysteps},
                  {"qa", qa}})
                .dump()
         << "\n";
    ++fx.videos;
  }
  write_text(fx.metadata, meta.str());
  write_text(fx.transcripts, trans.str());
  write_text(fx.frame_scores, scores.str());
  return fx;
}

namespace {

std::string drain(int fd) {
  std::string out;
  std::array<char, 4096> buf{};
  ssize_t n;
  while ((n = read(fd, buf.data(), buf.size())) > 0) out.append(buf.data(), static_cast<std::size_t>(n));
  return out;
}

}  // namespace

ProcessResult run_process(const std::vector<std::string>& argv) {
  // Both streams go to temp files so a chatty child cannot deadlock on a
  // full pipe.
  char out_name[] = "/tmp/vf-out-XXXXXX";
  char err_name[] = "/tmp/vf-err-XXXXXX";
  const int out_fd = mkstemp(out_name);
  const int err_fd = mkstemp(err_name);
  if (out_fd < 0 || err_fd < 0) throw std::runtime_error("mkstemp failed");

  const pid_t pid = fork();
  if (pid < 0) throw std::runtime_error("fork failed");
  if (pid == 0) {
    dup2(out_fd, STDOUT_FILENO);
    dup2(err_fd, STDERR_FILENO);
    std::vector<char*> args;
    for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
    args.push_back(nullptr);
    execv(args[0], args.data());
    _exit(127);
  }
  int status = 0;
  waitpid(pid, &status, 0);
  ProcessResult result;
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  lseek(out_fd, 0, SEEK_SET);
  lseek(err_fd, 0, SEEK_SET);
  result.out = drain(out_fd);
  result.err = drain(err_fd);
  close(out_fd);
  close(err_fd);
  unlink(out_name);
  unlink(err_name);
  return result;
}

}  // namespace vidfocus::testing
