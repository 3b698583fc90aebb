#pragma once

#include <functional>
#include <string>
#include <vector>

#include "rarelab/bertram/model.hpp"
#include "rarelab/encoder/model.hpp"

namespace rarelab::harness {

/// Produces the vector injected for a word, given its contexts.
template <typename Real>
using WordVectors = std::function<std::vector<Real>(const std::string& word,
                                                    const std::vector<text::Sentence>& contexts)>;

/// BERTRAM inference. Both models are captured by reference.
template <typename Real>
WordVectors<Real> bertram_vectors(const bertram::BertramModel<Real>& model,
                                  const encoder::EncoderModel<Real>& encoder, const text::Vocabulary& vocab) {
  return [&model, &encoder, &vocab](const std::string& word, const std::vector<text::Sentence>& contexts) {
    return bertram::infer(model, encoder, vocab, word, contexts);
  };
}

/// Mean of the word's own piece embeddings; for a single-piece word this is
/// exactly its table row.
template <typename Real>
WordVectors<Real> piece_mean_vectors(const encoder::EncoderModel<Real>& encoder, const text::Vocabulary& vocab) {
  return [&encoder, &vocab](const std::string& word, const std::vector<text::Sentence>&) {
    const auto pieces = vocab.tokenize_word(word);
    std::vector<Real> out(encoder.hidden(), Real(0));
    for (auto id : pieces) {
      const auto row = encoder.token_row(id);
      for (std::size_t k = 0; k < out.size(); ++k) out[k] += row[k];
    }
    if (pieces.size() > 1) {
      for (auto& v : out) v /= static_cast<Real>(pieces.size());
    }
    return out;
  };
}

}  // namespace rarelab::harness
