#pragma once

#include <algorithm>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rarelab/core/rng.hpp"
#include "rarelab/harness/probe.hpp"
#include "rarelab/rarify/dataset.hpp"
#include "rarelab/rarify/lexicon.hpp"
#include "rarelab/text/corpus.hpp"

namespace rarelab::harness {

/// Sizes and noise levels of a generated toy world.
struct ToyConfig {
  std::size_t classes = 10;
  std::size_t frequent_per_class = 15;
  std::size_t medium_per_class = 12;
  std::size_t rare_per_class = 20;
  std::size_t attributes_per_class = 5;
  std::size_t misspelled_per_class = 3;
  std::size_t sentences = 50000;
  /// Occurrence range of frequent members, inclusive.
  std::size_t frequent_min_count = 150;
  std::size_t frequent_max_count = 300;
  std::size_t dataset_size = 600;
  double suffix_noise = 0.2;
  double root_noise = 0.2;
  /// Share of member sentences that say nothing about the class.
  double generic_share = 0.5;
  /// Share of member sentences prefixed with "W :".
  double repeat_share = 0.1;
  std::uint64_t seed = 7;

  static ToyConfig from_json(const nlohmann::json& j) {
    ToyConfig c;
    c.classes = j.value("classes", c.classes);
    c.frequent_per_class = j.value("frequent_per_class", c.frequent_per_class);
    c.medium_per_class = j.value("medium_per_class", c.medium_per_class);
    c.rare_per_class = j.value("rare_per_class", c.rare_per_class);
    c.attributes_per_class = j.value("attributes_per_class", c.attributes_per_class);
    c.misspelled_per_class = j.value("misspelled_per_class", c.misspelled_per_class);
    c.sentences = j.value("sentences", c.sentences);
    c.frequent_min_count = j.value("frequent_min_count", c.frequent_min_count);
    c.frequent_max_count = j.value("frequent_max_count", c.frequent_max_count);
    c.dataset_size = j.value("dataset_size", c.dataset_size);
    c.suffix_noise = j.value("suffix_noise", c.suffix_noise);
    c.root_noise = j.value("root_noise", c.root_noise);
    c.generic_share = j.value("generic_share", c.generic_share);
    c.repeat_share = j.value("repeat_share", c.repeat_share);
    c.seed = j.value("seed", c.seed);
    return c;
  }
};

enum class Tier { Frequent, Medium, Rare, Misspelled };

struct ToyWord {
  std::string word;
  std::size_t cls = 0;
  Tier tier = Tier::Frequent;
};

struct ToyWorld {
  std::vector<std::string> class_names;
  std::vector<std::vector<std::string>> attributes;
  std::vector<ToyWord> members;
  std::vector<text::Sentence> sentences;
  rarify::SubstitutionLexicon lexicon;
  std::vector<ClozeProbe> probes;
  std::vector<rarify::LabeledInstance> dataset;

  std::vector<std::string> words_in_tier(Tier tier) const {
    std::vector<std::string> out;
    for (const auto& m : members) {
      if (m.tier == tier) out.push_back(m.word);
    }
    return out;
  }
};

namespace detail {

inline const std::vector<std::string>& function_words() {
  static const std::vector<std::string> words = {
      "a", "the", "is", "very", "i", "saw", "near", "that", "my", "and", "other", "has",
      "was", "here", "every", "like", "we", "found", "today", "look", "at", "some", ":"};
  return words;
}

/// Pronounceable strings made of consonant-vowel syllables.
class SyllableSource {
 public:
  explicit SyllableSource(core::Rng& rng) : rng_(rng) {}

  std::string syllable() {
    static const std::string consonants = "bdfgklmnprstvz";
    static const std::string vowels = "aeiou";
    std::string s;
    s += consonants[core::uniform_index(rng_, consonants.size())];
    s += vowels[core::uniform_index(rng_, vowels.size())];
    return s;
  }

  /// A fresh word of `syllables` syllables, never returned before.
  std::string fresh(std::size_t syllables, const std::string& tail = "") {
    for (;;) {
      std::string w;
      for (std::size_t i = 0; i < syllables; ++i) w += syllable();
      w += tail;
      if (used_.insert(w).second) return w;
    }
  }

  bool reserve(const std::string& w) { return used_.insert(w).second; }

 private:
  core::Rng& rng_;
  std::set<std::string> used_;
};

inline std::string misspell(const std::string& word, core::Rng& rng) {
  std::string w = word;
  const std::size_t i = core::uniform_index(rng, w.size() - 1);
  std::swap(w[i], w[i + 1]);
  if (w == word) w.insert(w.begin() + static_cast<long>(i), w[i]);
  return w;
}

}  // namespace detail

/// Generates a corpus of short template sentences about words of several
/// classes. Member words are root + syllable + class suffix, where root and
/// suffix point to the wrong class with the configured noise. Frequent
/// members occur more than 100 times, medium ones 10 to 60 times and rare
/// ones fewer than 10.
inline ToyWorld generate_toy_world(const ToyConfig& config) {
  core::Rng rng(config.seed);
  detail::SyllableSource source(rng);
  for (const auto& w : detail::function_words()) source.reserve(w);

  ToyWorld world;
  const std::size_t K = config.classes;
  std::vector<std::string> suffixes;
  std::vector<std::vector<std::string>> roots(K);
  for (std::size_t c = 0; c < K; ++c) {
    world.class_names.push_back(source.fresh(2));
    suffixes.push_back(source.fresh(1, "x"));
    for (int r = 0; r < 4; ++r) roots[c].push_back(source.fresh(1));
    std::vector<std::string> attrs;
    for (std::size_t a = 0; a < config.attributes_per_class; ++a) attrs.push_back(source.fresh(2, "y"));
    world.attributes.push_back(std::move(attrs));
  }

  auto member = [&](std::size_t c, Tier tier) {
    std::size_t root_cls = c, suffix_cls = c;
    if (core::bernoulli(rng, config.root_noise)) root_cls = core::uniform_index(rng, K);
    if (core::bernoulli(rng, config.suffix_noise)) suffix_cls = core::uniform_index(rng, K);
    const auto& root = roots[root_cls][core::uniform_index(rng, roots[root_cls].size())];
    for (;;) {
      std::string w = root + source.syllable() + suffixes[suffix_cls];
      if (source.reserve(w)) {
        world.members.push_back({w, c, tier});
        return w;
      }
    }
  };

  std::map<std::string, std::size_t> occurrences;
  std::vector<std::vector<std::string>> frequent(K), rare(K);
  for (std::size_t c = 0; c < K; ++c) {
    for (std::size_t i = 0; i < config.frequent_per_class; ++i) {
      auto w = member(c, Tier::Frequent);
      occurrences[w] = config.frequent_min_count +
                       core::uniform_index(rng, config.frequent_max_count - config.frequent_min_count + 1);
      frequent[c].push_back(w);
    }
    for (std::size_t i = 0; i < config.medium_per_class; ++i) {
      auto w = member(c, Tier::Medium);
      occurrences[w] = 10 + core::uniform_index(rng, 51);
    }
    for (std::size_t i = 0; i < config.rare_per_class; ++i) {
      auto w = member(c, Tier::Rare);
      occurrences[w] = 1 + core::uniform_index(rng, 9);
      rare[c].push_back(w);
    }
  }

  // Lexicon: misspellings for the first few frequent words of a class,
  // rare same-class words for the others.
  for (std::size_t c = 0; c < K; ++c) {
    for (std::size_t i = 0; i < frequent[c].size(); ++i) {
      const auto& w = frequent[c][i];
      std::vector<std::string> synonyms;
      std::string kind = "wn";
      if (i < config.misspelled_per_class) {
        std::string m = detail::misspell(w, rng);
        while (!source.reserve(m)) m = detail::misspell(m, rng);
        world.members.push_back({m, c, Tier::Misspelled});
        occurrences[m] = 1 + core::uniform_index(rng, 6);
        synonyms.push_back(m);
        kind = "msp";
      } else if (!rare[c].empty()) {
        const std::size_t n = 1 + core::uniform_index(rng, std::min<std::size_t>(3, rare[c].size()));
        std::set<std::string> picked;
        while (picked.size() < n) picked.insert(rare[c][core::uniform_index(rng, rare[c].size())]);
        synonyms.assign(picked.begin(), picked.end());
      }
      world.lexicon.add(w, synonyms, kind);
    }
  }

  auto attr = [&](std::size_t c) {
    return world.attributes[c][core::uniform_index(rng, world.attributes[c].size())];
  };
  auto plain_sentence = [&](const ToyWord& m) -> text::Sentence {
    const auto& w = m.word;
    const std::size_t c = m.cls;
    const auto& C = world.class_names[c];
    if (core::bernoulli(rng, config.generic_share)) {
      switch (core::uniform_index(rng, 3)) {
        case 0: return {"i", "saw", "the", w};
        case 1: return {"the", w, "was", "here"};
        default: return {"look", "at", "the", w};
      }
    }
    static const std::size_t weights[] = {3, 3, 2, 2, 2, 1, 1};
    std::size_t pick = core::uniform_index(rng, 14), t = 0;
    while (pick >= weights[t]) pick -= weights[t++];
    switch (t) {
      case 0: return {"a", w, "is", "a", C};
      case 1: return {"the", w, "is", "very", attr(c)};
      case 2: return {"i", "saw", "the", w, "near", "the", attr(c)};
      case 3: return {w, ":", "a", C, "that", "is", attr(c)};
      case 4: return {"every", w, "has", "a", attr(c)};
      case 5: return {"my", w, "and", "the", "other", C};
      default: return {"the", attr(c), w, "was", "here"};
    }
  };
  // A prefixed sentence holds the word twice and so uses two occurrences.
  auto member_sentence = [&](const ToyWord& m, std::size_t& left) -> text::Sentence {
    if (left < 2 || !core::bernoulli(rng, config.repeat_share)) {
      --left;
      return plain_sentence(m);
    }
    left -= 2;
    text::Sentence s = {m.word, ":"};
    for (auto& t : plain_sentence(m)) s.push_back(std::move(t));
    return s;
  };

  std::vector<text::Sentence> sentences;
  for (const auto& m : world.members) {
    for (std::size_t left = occurrences[m.word]; left > 0;) sentences.push_back(member_sentence(m, left));
  }
  while (sentences.size() < config.sentences) {
    const std::size_t c = core::uniform_index(rng, K);
    const auto& C = world.class_names[c];
    if (core::bernoulli(rng, 0.5)) {
      sentences.push_back({"the", C, "is", "very", attr(c)});
    } else {
      sentences.push_back({"every", C, "has", "a", attr(c), "and", "a", attr(c)});
    }
  }
  std::shuffle(sentences.begin(), sentences.end(), rng);
  world.sentences = std::move(sentences);

  for (const auto& m : world.members) {
    if (m.tier == Tier::Frequent) continue;
    world.probes.push_back({{"a", m.word, "is", "a", "___"}, m.word, {world.class_names[m.cls]}});
  }

  // Classification data: the label is the class of the one member word.
  std::vector<const ToyWord*> labelled;
  for (const auto& m : world.members) {
    if (m.tier == Tier::Frequent || m.tier == Tier::Medium) labelled.push_back(&m);
  }
  for (std::size_t i = 0; i < config.dataset_size && !labelled.empty(); ++i) {
    const auto* m = labelled[core::uniform_index(rng, labelled.size())];
    text::Sentence text;
    switch (core::uniform_index(rng, 3)) {
      case 0: text = {"i", "like", "the", m->word}; break;
      case 1: text = {"we", "found", "a", m->word, "today"}; break;
      default: text = {"look", "at", "my", m->word}; break;
    }
    world.dataset.push_back({std::move(text), {}, static_cast<int>(m->cls)});
  }
  return world;
}

}  // namespace rarelab::harness
