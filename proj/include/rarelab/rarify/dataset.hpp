#pragma once

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rarelab/core/io.hpp"
#include "rarelab/core/rng.hpp"
#include "rarelab/text/corpus.hpp"
#include "rarelab/text/vocab.hpp"

namespace rarelab::rarify {

using text::Sentence;

/// A classification example; `text_b` is empty for single-text tasks.
struct LabeledInstance {
  Sentence text;
  Sentence text_b;
  int label = 0;

  bool is_pair() const { return !text_b.empty(); }
  std::size_t word_count() const { return text.size() + text_b.size(); }

  /// Word at a position counted over text followed by text_b.
  const std::string& word(std::size_t position) const {
    if (position >= word_count()) {
      throw DomainError("position " + std::to_string(position) + " outside instance of " +
                        std::to_string(word_count()) + " words");
    }
    return position < text.size() ? text[position] : text_b[position - text.size()];
  }

  std::string& word(std::size_t position) {
    return const_cast<std::string&>(std::as_const(*this).word(position));
  }

  bool operator==(const LabeledInstance&) const = default;
};

struct Replacement {
  std::size_t position = 0;
  std::string original;
  std::string replacement;

  bool operator==(const Replacement&) const = default;
};

/// A test instance whose decision-critical words were swapped for rare
/// synonyms.
struct RarifiedInstance {
  LabeledInstance instance;
  std::vector<Replacement> provenance;
  std::size_t source_index = 0;

  /// The instance as it was before substitution.
  LabeledInstance original() const {
    LabeledInstance out = instance;
    for (const auto& r : provenance) out.word(r.position) = r.original;
    return out;
  }
};

/// Copy of `x` with the word at `position` replaced by [MASK].
inline LabeledInstance mask_word(const LabeledInstance& x, std::size_t position) {
  LabeledInstance out = x;
  out.word(position) = std::string(text::kMask);
  return out;
}

inline nlohmann::json to_json(const LabeledInstance& x) {
  nlohmann::json j{{"text", x.text}};
  if (x.is_pair()) j["text_b"] = x.text_b;
  j["label"] = x.label;
  return j;
}

inline LabeledInstance instance_from_json(const nlohmann::json& j) {
  LabeledInstance x;
  x.text = j.at("text").get<Sentence>();
  if (j.contains("text_b") && !j.at("text_b").is_null()) x.text_b = j.at("text_b").get<Sentence>();
  x.label = j.at("label").get<int>();
  return x;
}

inline nlohmann::json to_json(const RarifiedInstance& r) {
  auto j = to_json(r.instance);
  auto prov = nlohmann::json::array();
  for (const auto& p : r.provenance) prov.push_back({p.position, p.original, p.replacement});
  j["provenance"] = std::move(prov);
  j["source_index"] = r.source_index;
  return j;
}

inline RarifiedInstance rarified_from_json(const nlohmann::json& j) {
  RarifiedInstance r;
  r.instance = instance_from_json(j);
  for (const auto& p : j.value("provenance", nlohmann::json::array())) {
    r.provenance.push_back({p.at(0).get<std::size_t>(), p.at(1).get<std::string>(),
                            p.at(2).get<std::string>()});
  }
  r.source_index = j.value("source_index", std::size_t{0});
  return r;
}

/// One JSON record per line; blank lines are skipped.
template <typename T, typename Parse>
std::vector<T> parse_jsonl(const std::string& content, Parse&& parse, const std::string& what) {
  std::vector<T> out;
  std::istringstream in(content);
  std::size_t line_no = 0;
  for (std::string line; std::getline(in, line);) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw IoError(what + " line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

template <typename T>
std::string to_jsonl(const std::vector<T>& items) {
  std::string out;
  for (const auto& item : items) out += to_json(item).dump() + "\n";
  return out;
}

inline std::vector<LabeledInstance> load_dataset(const std::filesystem::path& path) {
  return parse_jsonl<LabeledInstance>(core::read_file(path), instance_from_json, path.string());
}

inline std::vector<RarifiedInstance> load_rarified(const std::filesystem::path& path) {
  return parse_jsonl<RarifiedInstance>(core::read_file(path), rarified_from_json, path.string());
}

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> candidates;
};

template <typename T>
std::vector<T> select(const std::vector<T>& items, const std::vector<std::size_t>& indices) {
  std::vector<T> out;
  out.reserve(indices.size());
  for (auto i : indices) out.push_back(items.at(i));
  return out;
}

}  // namespace rarelab::rarify
