#include <fstream>
#include <map>
#include <set>

#include <json.hpp>

#include "vidfocus/error.hpp"
#include "vidfocus/metrics.hpp"

namespace vidfocus {

namespace {

using json = nlohmann::json;

template <typename Fn>
void read_jsonl(const std::string& path, Fn&& fn) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string line;
  for (std::size_t lineno = 1; std::getline(in, line); ++lineno) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    json j;
    try {
      j = json::parse(line);
      fn(j, where);
    } catch (const json::exception& e) {
      throw ParseError(where + ": " + e.what());
    }
  }
}

}  // namespace

std::vector<EvalSample> load_eval_samples(const std::string& predictions_path,
                                          const std::string& references_path) {
  std::map<std::string, std::string> predictions;
  read_jsonl(predictions_path, [&](const json& j, const std::string& where) {
    const auto id = j.at("id").get<std::string>();
    if (!predictions.emplace(id, j.at("candidate").get<std::string>()).second) {
      throw ParseError(where + ": duplicate prediction id " + id);
    }
  });

  std::vector<EvalSample> samples;
  std::set<std::string> seen;
  read_jsonl(references_path, [&](const json& j, const std::string& where) {
    EvalSample s;
    s.id = j.at("id").get<std::string>();
    if (!seen.insert(s.id).second) throw ParseError(where + ": duplicate reference id " + s.id);
    s.references = j.at("references").get<std::vector<std::string>>();
    if (s.references.empty()) throw ParseError(where + ": empty reference list for " + s.id);
    const auto task = j.at("task").get<std::string>();
    const auto parsed = parse_task(task);
    if (!parsed) throw ParseError(where + ": unknown task \"" + task + "\"");
    s.task = *parsed;
    auto it = predictions.find(s.id);
    if (it == predictions.end()) throw InvalidArgument(where + ": no prediction for id " + s.id);
    s.candidate = it->second;
    samples.push_back(std::move(s));
  });
  for (const auto& [id, unused] : predictions) {
    if (seen.count(id) == 0) throw InvalidArgument("prediction " + id + " has no reference");
  }
  return samples;
}

}  // namespace vidfocus
