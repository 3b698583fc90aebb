#pragma once

#include <cstdio>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace rarelab::harness {

/// One scored subset of an evaluation. `family` groups slices that are
/// read together, e.g. "bucket" or "c_max".
struct Slice {
  std::string family;
  std::string name;
  std::size_t count = 0;
  double score = 0.0;
};

struct EvalReport {
  std::string metric;  // "mrr" or "accuracy"
  std::size_t total = 0;
  std::vector<Slice> slices;
  nlohmann::json details = nlohmann::json::object();

  const Slice* find(const std::string& family, const std::string& name) const {
    for (const auto& s : slices) {
      if (s.family == family && s.name == name) return &s;
    }
    return nullptr;
  }

  const Slice& at(const std::string& family, const std::string& name) const {
    if (const auto* s = find(family, name)) return *s;
    throw DomainError("report has no slice " + family + "/" + name);
  }

  nlohmann::json to_json() const {
    auto slices_json = nlohmann::json::array();
    for (const auto& s : slices) {
      slices_json.push_back({{"family", s.family}, {"name", s.name}, {"count", s.count}, {"score", s.score}});
    }
    return {{"metric", metric}, {"total", total}, {"slices", slices_json}, {"details", details}};
  }

  /// family,name,count,score rows with a fixed number format.
  std::string to_csv(const std::string& label = "") const {
    std::string out = label.empty() ? "family,name,count,score\n" : "run,family,name,count,score\n";
    for (const auto& s : slices) {
      char score[32];
      std::snprintf(score, sizeof(score), "%.6f", s.score);
      if (!label.empty()) out += label + ",";
      out += s.family + "," + s.name + "," + std::to_string(s.count) + "," + score + "\n";
    }
    return out;
  }
};

}  // namespace rarelab::harness
