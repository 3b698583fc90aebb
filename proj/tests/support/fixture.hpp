#pragma once

#include <random>
#include <string>
#include <vector>

#include "rarelab/encoder/model.hpp"
#include "rarelab/text/vocab.hpp"

namespace rarelab::testing {

inline text::Corpus small_corpus() {
  return text::Corpus::from_lines({
      "other washables such as trousers are clean",
      "the washables dry in the sun",
      "a unicycle is hard to ride",
      "riding a unicycle is hard",
      "the cat sat on the mat",
      "the dog sat on the rug",
      "washables and trousers and shirts",
      "the mat is red and the rug is blue",
  });
}

inline text::Vocabulary small_vocab(const text::Corpus& corpus) {
  return text::build_vocab(corpus, 120, 2);
}

inline encoder::EncoderConfig tiny_encoder_config(std::size_t vocab_size, std::size_t hidden = 8) {
  encoder::EncoderConfig c;
  c.layers = 1;
  c.hidden = hidden;
  c.heads = 2;
  c.ffn = 2 * hidden;
  c.max_length = 16;
  c.vocab_size = vocab_size;
  c.seed = 5;
  return c;
}

/// An encoder with weights large enough that states vary visibly.
template <typename Real>
encoder::EncoderModel<Real> tiny_encoder(std::size_t vocab_size, std::size_t hidden = 8,
                                         double scale = 0.4) {
  encoder::EncoderModel<Real> model(tiny_encoder_config(vocab_size, hidden));
  std::mt19937_64 rng(17);
  std::normal_distribution<double> dist(0.0, scale);
  for (auto* p : model.parameters()) {
    if (p->name().find("gain") != std::string::npos) continue;
    for (auto& v : p->mutable_value().values()) v = static_cast<Real>(dist(rng));
  }
  model.set_frozen(true);
  return model;
}

template <typename Real>
core::Tensor<Real> random_tensor(core::Shape shape, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  core::Tensor<Real> t(std::move(shape));
  for (auto& v : t.values()) v = static_cast<Real>(dist(rng));
  return t;
}

template <typename Real>
void randomize(core::Parameter<Real>& p, std::mt19937_64& rng, double scale = 0.3) {
  std::normal_distribution<double> dist(0.0, scale);
  for (auto& v : p.mutable_value().values()) v = static_cast<Real>(dist(rng));
}

}  // namespace rarelab::testing
