#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace vidfocus::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& prefix);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const noexcept { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

// Synthetic build-dataset inputs: six videos, 49 surgical keysteps with one QA
// pair per clip task (294 fine-grained pairs), three full-video pairs per
// video (18), plus one non-surgical keystep per video whose QA must be
// dropped.
struct CorpusFixture {
  std::string metadata;
  std::string transcripts;
  std::string frame_scores;
  std::size_t videos = 0;
  std::size_t keysteps_total = 0;
  std::size_t keysteps_surgical = 0;
  std::size_t full_video_qa = 0;
  std::size_t fine_grained_qa = 0;
  std::size_t dropped_qa = 0;
  std::map<std::string, std::size_t> task_counts;
};

CorpusFixture write_corpus_fixture(const TempDir& dir);

struct ProcessResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

// Runs argv[0] with the given arguments, capturing both streams.
ProcessResult run_process(const std::vector<std::string>& argv);

}  // namespace vidfocus::testing
