#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "rarelab/core/error.hpp"
#include "rarelab/text/utf8.hpp"

namespace rarelab::text {

using Sentence = std::vector<std::string>;

/// Whitespace-tokenized sentences with word counts and an inverted index.
class Corpus {
 public:
  Corpus() = default;

  explicit Corpus(std::vector<Sentence> sentences) : sentences_(std::move(sentences)) {
    for (std::size_t s = 0; s < sentences_.size(); ++s) {
      for (const auto& w : sentences_[s]) {
        ++frequency_[w];
        auto& ids = index_[w];
        if (ids.empty() || ids.back() != s) ids.push_back(s);
      }
      tokens_ += sentences_[s].size();
    }
  }

  static Corpus from_lines(const std::vector<std::string>& lines, bool lowercase = false) {
    std::vector<Sentence> sentences;
    for (const auto& line : lines) {
      auto words = split_whitespace(lowercase ? to_lower(line) : line);
      if (!words.empty()) sentences.push_back(std::move(words));
    }
    return Corpus(std::move(sentences));
  }

  const std::vector<Sentence>& sentences() const { return sentences_; }
  const Sentence& sentence(std::size_t i) const { return sentences_.at(i); }
  std::size_t size() const { return sentences_.size(); }
  std::size_t token_count() const { return tokens_; }
  std::size_t type_count() const { return frequency_.size(); }

  std::size_t frequency(const std::string& word) const {
    auto it = frequency_.find(word);
    return it == frequency_.end() ? 0 : it->second;
  }

  /// Ids of sentences containing `word`, ascending, each listed once.
  std::span<const std::size_t> sentences_with(const std::string& word) const {
    auto it = index_.find(word);
    if (it == index_.end()) return {};
    return it->second;
  }

  const std::unordered_map<std::string, std::size_t>& frequencies() const {
    return frequency_;
  }

  /// Words ordered by descending frequency, ties broken lexicographically.
  std::vector<std::pair<std::string, std::size_t>> words_by_frequency() const {
    std::vector<std::pair<std::string, std::size_t>> out(frequency_.begin(), frequency_.end());
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
      return a.second != b.second ? a.second > b.second : a.first < b.first;
    });
    return out;
  }

 private:
  std::vector<Sentence> sentences_;
  std::unordered_map<std::string, std::size_t> frequency_;
  std::unordered_map<std::string, std::vector<std::size_t>> index_;
  std::size_t tokens_ = 0;
};

/// Reads one sentence per line; blank lines are skipped.
inline Corpus ingest_corpus(const std::filesystem::path& path, bool lowercase = false) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read corpus " + path.string());
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(std::move(line));
  Corpus corpus = Corpus::from_lines(lines, lowercase);
  if (corpus.size() == 0) throw DomainError("corpus " + path.string() + " is empty");
  return corpus;
}

enum class FrequencyBucket { Rare, Medium, Frequent };

/// [0,10) rare, [10,100) medium, [100,inf) frequent.
inline FrequencyBucket frequency_bucket(std::size_t count) {
  if (count < 10) return FrequencyBucket::Rare;
  if (count < 100) return FrequencyBucket::Medium;
  return FrequencyBucket::Frequent;
}

inline const char* bucket_name(FrequencyBucket b) {
  switch (b) {
    case FrequencyBucket::Rare: return "rare";
    case FrequencyBucket::Medium: return "medium";
    case FrequencyBucket::Frequent: return "frequent";
  }
  return "?";
}

}  // namespace rarelab::text
