#pragma once

#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rarelab/rarify/dataset.hpp"
#include "rarelab/text/corpus.hpp"

namespace rarelab::rarify {

struct LexiconEntry {
  std::vector<std::string> synonyms;
  std::string kind;  // free-form tag such as "wn" or "msp"
};

/// Maps words to rare synonyms. Synonyms are kept sorted and unique.
class SubstitutionLexicon {
 public:
  explicit SubstitutionLexicon(std::size_t threshold = 100) : threshold_(threshold) {}

  std::size_t threshold() const { return threshold_; }
  std::size_t size() const { return entries_.size(); }
  const std::map<std::string, LexiconEntry>& entries() const { return entries_; }

  void add(const std::string& word, const std::vector<std::string>& synonyms, std::string kind = "") {
    std::set<std::string> unique(synonyms.begin(), synonyms.end());
    unique.erase(word);
    if (unique.empty()) return;
    auto& e = entries_[word];
    unique.insert(e.synonyms.begin(), e.synonyms.end());
    e.synonyms.assign(unique.begin(), unique.end());
    if (!kind.empty()) e.kind = std::move(kind);
  }

  const std::vector<std::string>& synonyms(const std::string& word) const {
    static const std::vector<std::string> none;
    auto it = entries_.find(word);
    return it == entries_.end() ? none : it->second.synonyms;
  }

  bool substitutable(const std::string& word) const { return !synonyms(word).empty(); }

  std::string kind(const std::string& word) const {
    auto it = entries_.find(word);
    return it == entries_.end() ? std::string() : it->second.kind;
  }

  bool substitutable(const LabeledInstance& x) const {
    for (std::size_t i = 0; i < x.word_count(); ++i) {
      if (substitutable(x.word(i))) return true;
    }
    return false;
  }

  /// Drops synonyms occurring `threshold` or more times in `reference`.
  SubstitutionLexicon filtered(const text::Corpus& reference) const {
    SubstitutionLexicon out(threshold_);
    for (const auto& [word, e] : entries_) {
      std::vector<std::string> keep;
      for (const auto& s : e.synonyms) {
        if (reference.frequency(s) < threshold_) keep.push_back(s);
      }
      out.add(word, keep, e.kind);
    }
    return out;
  }

  std::string to_jsonl() const {
    std::string out;
    for (const auto& [word, e] : entries_) {
      nlohmann::json j{{"word", word}, {"synonyms", e.synonyms}};
      if (!e.kind.empty()) j["kind"] = e.kind;
      out += j.dump() + "\n";
    }
    return out;
  }

  static SubstitutionLexicon from_jsonl(const std::string& content, std::size_t threshold = 100) {
    SubstitutionLexicon lex(threshold);
    struct Record {
      std::string word;
      std::vector<std::string> synonyms;
      std::string kind;
    };
    auto records = parse_jsonl<Record>(
        content,
        [](const nlohmann::json& j) {
          return Record{j.at("word").get<std::string>(),
                        j.at("synonyms").get<std::vector<std::string>>(), j.value("kind", "")};
        },
        "lexicon");
    for (auto& r : records) lex.add(r.word, r.synonyms, r.kind);
    return lex;
  }

  static SubstitutionLexicon load(const std::filesystem::path& path, std::size_t threshold = 100) {
    return from_jsonl(core::read_file(path), threshold);
  }

 private:
  std::size_t threshold_;
  std::map<std::string, LexiconEntry> entries_;
};

/// Instances without any substitutable word go to training. Substitutable
/// ones stay candidates unless training would hold less than a third of
/// the data, in which case a seeded random subset of them moves over.
inline Split split_dataset(const std::vector<LabeledInstance>& data, const SubstitutionLexicon& lexicon,
                           std::uint64_t seed) {
  if (data.size() < 3) throw DomainError("splitting needs at least 3 instances");
  Split split;
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < data.size(); ++i) {
    (lexicon.substitutable(data[i]) ? eligible : split.train).push_back(i);
  }
  if (eligible.empty()) throw DomainError("rarification impossible: no instance has a substitutable word");
  const std::size_t need = (data.size() + 2) / 3;
  if (split.train.size() < need) {
    core::Rng rng(seed);
    std::shuffle(eligible.begin(), eligible.end(), rng);
    const std::size_t move = need - split.train.size();
    split.train.insert(split.train.end(), eligible.begin(), eligible.begin() + static_cast<long>(move));
    eligible.erase(eligible.begin(), eligible.begin() + static_cast<long>(move));
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(eligible.begin(), eligible.end());
  split.candidates = std::move(eligible);
  return split;
}

}  // namespace rarelab::rarify
