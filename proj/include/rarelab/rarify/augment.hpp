#pragma once

#include <string>

#include <nlohmann/json.hpp>

#include "rarelab/core/rng.hpp"
#include "rarelab/rarify/dataset.hpp"

namespace rarelab::rarify {

struct AugmentConfig {
  double mask_rate = 0.05;
  double duplicate_rate = 0.10;
  double copy_mask_rate = 0.25;
};

struct AugmentStats {
  std::size_t words = 0;
  std::size_t masked = 0;
  std::size_t duplicated = 0;
  std::size_t copies = 0;
  std::size_t copies_masked = 0;

  AugmentStats& operator+=(const AugmentStats& o) {
    words += o.words;
    masked += o.masked;
    duplicated += o.duplicated;
    copies += o.copies;
    copies_masked += o.copies_masked;
    return *this;
  }

  nlohmann::json to_json() const {
    auto rate = [](std::size_t a, std::size_t b) { return b ? static_cast<double>(a) / static_cast<double>(b) : 0.0; };
    return {{"words", words},
            {"masked", masked},
            {"duplicated", duplicated},
            {"copies", copies},
            {"copies_masked", copies_masked},
            {"mask_rate", rate(masked, words)},
            {"duplicate_rate", rate(duplicated, words)},
            {"copy_mask_rate", rate(copies_masked, copies)}};
  }
};

/// Training-time noise for one sentence. Each word is first masked with
/// `mask_rate`; independently it is then written as "w / w" with
/// `duplicate_rate`, and each of the two copies is masked with
/// `copy_mask_rate`.
inline Sentence augment_sentence(const Sentence& words, core::Rng& rng, const AugmentConfig& config,
                                 AugmentStats* stats = nullptr) {
  const std::string mask(text::kMask), slash(text::kSlash);
  AugmentStats local;
  Sentence out;
  out.reserve(words.size() + words.size() / 4);
  for (const auto& w : words) {
    ++local.words;
    std::string word = w;
    if (core::bernoulli(rng, config.mask_rate)) {
      word = mask;
      ++local.masked;
    }
    if (core::bernoulli(rng, config.duplicate_rate)) {
      ++local.duplicated;
      for (int copy = 0; copy < 2; ++copy) {
        ++local.copies;
        if (copy == 1) out.push_back(slash);
        if (core::bernoulli(rng, config.copy_mask_rate)) {
          ++local.copies_masked;
          out.push_back(mask);
        } else {
          out.push_back(word);
        }
      }
    } else {
      out.push_back(std::move(word));
    }
  }
  if (stats) *stats += local;
  return out;
}

inline LabeledInstance augment(const LabeledInstance& x, core::Rng& rng, const AugmentConfig& config,
                               AugmentStats* stats = nullptr) {
  LabeledInstance out;
  out.text = augment_sentence(x.text, rng, config, stats);
  out.text_b = augment_sentence(x.text_b, rng, config, stats);
  out.label = x.label;
  return out;
}

}  // namespace rarelab::rarify
