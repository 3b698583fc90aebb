#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "rarelab/core/error.hpp"
#include "rarelab/text/utf8.hpp"

namespace rarelab::text {

/// Boundary symbol placed before and after the word; counts as one symbol.
inline constexpr std::string_view kBoundary = "<S>";

struct NGramSet {
  std::string word;
  std::vector<std::string> grams;
};

/// All contiguous substrings of <S>word<S> with length in [min_n, max_n],
/// ordered by start position and then by length. Duplicates are kept.
inline NGramSet extract_ngrams(std::string_view word, std::size_t min_n = 3,
                               std::size_t max_n = 5) {
  if (word.empty()) throw DomainError("n-grams of an empty word");
  if (min_n < 1 || min_n > max_n) {
    throw DomainError("n-gram range [" + std::to_string(min_n) + ", " +
                      std::to_string(max_n) + "] is invalid");
  }
  std::vector<std::string> symbols;
  symbols.emplace_back(kBoundary);
  for (auto& c : utf8_chars(word)) symbols.push_back(std::move(c));
  symbols.emplace_back(kBoundary);

  NGramSet out{std::string(word), {}};
  for (std::size_t start = 0; start < symbols.size(); ++start) {
    std::string gram;
    for (std::size_t n = 1; n <= max_n && start + n <= symbols.size(); ++n) {
      gram += symbols[start + n - 1];
      if (n >= min_n) out.grams.push_back(gram);
    }
  }
  return out;
}

}  // namespace rarelab::text
