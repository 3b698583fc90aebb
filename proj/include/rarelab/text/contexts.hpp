#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <set>
#include <vector>

#include "rarelab/core/io.hpp"
#include "rarelab/core/rng.hpp"
#include "rarelab/text/corpus.hpp"

namespace rarelab::text {

inline bool contains_word(const Sentence& sentence, const std::string& word) {
  return std::find(sentence.begin(), sentence.end(), word) != sentence.end();
}

/// Sentences containing `word`: corpus hits first, then `extra` sentences,
/// with identical sentences kept once. Above `max_contexts` a seeded
/// uniform subsample is returned in original order. `max_contexts == 0`
/// means no cap.
inline std::vector<Sentence> collect_contexts(const std::string& word, const Corpus& corpus,
                                              std::size_t max_contexts,
                                              const std::vector<Sentence>& extra = {},
                                              std::uint64_t seed = 0) {
  std::vector<Sentence> found;
  std::set<Sentence> seen;
  for (std::size_t id : corpus.sentences_with(word)) {
    const auto& s = corpus.sentence(id);
    if (seen.insert(s).second) found.push_back(s);
  }
  for (const auto& s : extra) {
    if (contains_word(s, word) && seen.insert(s).second) found.push_back(s);
  }
  if (max_contexts == 0 || found.size() <= max_contexts) return found;

  core::Rng rng(core::derive_seed(seed, core::fnv1a(word)));
  std::vector<std::size_t> order(found.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < max_contexts; ++i) {
    std::swap(order[i], order[i + core::uniform_index(rng, order.size() - i)]);
  }
  order.resize(max_contexts);
  std::sort(order.begin(), order.end());
  std::vector<Sentence> out;
  out.reserve(max_contexts);
  for (std::size_t i : order) out.push_back(std::move(found[i]));
  return out;
}

}  // namespace rarelab::text
