#pragma once

#include <algorithm>
#include <functional>
#include <numeric>
#include <vector>

#include "rarelab/core/adam.hpp"
#include "rarelab/core/rng.hpp"
#include "rarelab/encoder/model.hpp"
#include "rarelab/text/corpus.hpp"

namespace rarelab::encoder {

struct MaskingRates {
  double select = 0.15;  // fraction of text tokens chosen for prediction
  double mask = 0.8;     // of those, replaced by [MASK]
  double random = 0.1;   // of those, replaced by a random token; rest kept
};

enum class MaskAction { Mask, Random, Keep };

struct MlmExample {
  std::vector<TokenId> input;
  std::vector<std::size_t> positions;
  std::vector<TokenId> targets;
  std::vector<MaskAction> actions;
};

/// Chooses prediction positions among non-control tokens and corrupts them
/// per `rates`. Random replacements are drawn uniformly from non-control ids.
inline MlmExample mask_for_mlm(std::span<const TokenId> ids, const text::Vocabulary& vocab,
                               core::Rng& rng, const MaskingRates& rates = {}) {
  MlmExample ex;
  ex.input.assign(ids.begin(), ids.end());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (vocab.is_control(ids[i])) continue;
    if (!core::bernoulli(rng, rates.select)) continue;
    ex.positions.push_back(i);
    ex.targets.push_back(ids[i]);
    const double u = core::uniform01(rng);
    if (u < rates.mask) {
      ex.input[i] = vocab.mask_id();
      ex.actions.push_back(MaskAction::Mask);
    } else if (u < rates.mask + rates.random) {
      TokenId replacement;
      do {
        replacement = core::uniform_index(rng, vocab.size());
      } while (vocab.is_control(replacement));
      ex.input[i] = replacement;
      ex.actions.push_back(MaskAction::Random);
    } else {
      ex.actions.push_back(MaskAction::Keep);
    }
  }
  return ex;
}

struct PretrainConfig {
  std::size_t epochs = 3;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double warmup_fraction = 0.1;
  std::uint64_t seed = 1;
  MaskingRates rates;
  /// Sentences in the fixed probe sample used for before/after loss.
  std::size_t probe_sentences = 256;

  static PretrainConfig from_json(const nlohmann::json& j) {
    PretrainConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.warmup_fraction = j.value("warmup_fraction", c.warmup_fraction);
    c.seed = j.value("seed", c.seed);
    c.probe_sentences = j.value("probe_sentences", c.probe_sentences);
    return c;
  }
};

struct PretrainReport {
  double initial_loss = 0.0;
  double final_loss = 0.0;
  std::vector<double> epoch_loss;
  std::size_t steps = 0;

  nlohmann::json to_json() const {
    return {{"initial_loss", initial_loss}, {"final_loss", final_loss}, {"epoch_loss", epoch_loss}, {"steps", steps}};
  }
};

/// Mean masked-token cross-entropy over `examples`.
template <typename Real>
double mlm_loss(const EncoderModel<Real>& model, const std::vector<MlmExample>& examples) {
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& ex : examples) {
    if (ex.positions.empty()) continue;
    auto h = model.forward_ids(ex.input);
    auto logits = model.mlm_logits(core::gather_rows(h, std::span<const std::size_t>(ex.positions)));
    total += static_cast<double>(core::cross_entropy(logits, std::span<const TokenId>(ex.targets)).item());
    count += ex.positions.size();
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

/// Masked-LM training of `model` in place.
template <typename Real>
PretrainReport pretrain_mlm(EncoderModel<Real>& model, const text::Corpus& corpus,
                            const text::Vocabulary& vocab, const PretrainConfig& config,
                            const std::function<void(std::size_t, double)>& on_epoch = {}) {
  if (config.batch_size == 0 || corpus.size() < config.batch_size) {
    throw DomainError("corpus of " + std::to_string(corpus.size()) +
                      " sentences is smaller than one batch of " +
                      std::to_string(config.batch_size));
  }
  if (vocab.size() != model.config().vocab_size) {
    throw ConfigError("vocabulary size does not match encoder configuration");
  }
  const std::size_t max_len = model.config().max_length;
  std::vector<std::vector<TokenId>> encoded;
  encoded.reserve(corpus.size());
  for (const auto& s : corpus.sentences()) encoded.push_back(encode_sentence(s, vocab, max_len));

  PretrainReport report;
  core::Rng probe_rng(core::derive_seed(config.seed, 17));
  std::vector<MlmExample> probe;
  for (std::size_t i = 0; i < std::min(config.probe_sentences, encoded.size()); ++i) {
    probe.push_back(mask_for_mlm(encoded[i], vocab, probe_rng, config.rates));
  }
  report.initial_loss = mlm_loss(model, probe);

  model.set_frozen(false);
  const std::size_t batches = encoded.size() / config.batch_size;
  core::AdamConfig adam_config;
  adam_config.learning_rate = config.learning_rate;
  adam_config.schedule = {config.warmup_fraction, batches * config.epochs, true};
  core::Adam<Real> adam(adam_config, model.parameters());
  adam.zero_grad();

  core::Rng rng(config.seed);
  std::vector<std::size_t> order(encoded.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_total = 0.0;
    std::size_t epoch_count = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      std::vector<MlmExample> batch;
      std::size_t selected = 0;
      for (std::size_t k = 0; k < config.batch_size; ++k) {
        batch.push_back(mask_for_mlm(encoded[order[b * config.batch_size + k]], vocab, rng, config.rates));
        selected += batch.back().positions.size();
      }
      if (selected == 0) continue;
      const Real inv = Real(1) / static_cast<Real>(selected);
      for (const auto& ex : batch) {
        if (ex.positions.empty()) continue;
        auto h = model.forward_ids(ex.input);
        auto rows = core::gather_rows(h, std::span<const std::size_t>(ex.positions));
        auto loss = core::cross_entropy(model.mlm_logits(rows), std::span<const TokenId>(ex.targets));
        epoch_total += static_cast<double>(loss.item());
        core::backward(core::scale(loss, inv));
      }
      epoch_count += selected;
      adam.step();
      ++report.steps;
    }
    const double mean = epoch_count ? epoch_total / static_cast<double>(epoch_count) : 0.0;
    report.epoch_loss.push_back(mean);
    if (on_epoch) on_epoch(epoch, mean);
  }
  report.final_loss = mlm_loss(model, probe);
  return report;
}

/// Builds and pretrains a fresh encoder for `vocab`.
inline EncoderModel<float> pretrain_mlm(const text::Corpus& corpus, const text::Vocabulary& vocab,
                                        EncoderConfig encoder_config, const PretrainConfig& config,
                                        PretrainReport* report = nullptr) {
  encoder_config.vocab_size = vocab.size();
  EncoderModel<float> model(encoder_config);
  auto r = pretrain_mlm(model, corpus, vocab, config);
  if (report) *report = std::move(r);
  return model;
}

}  // namespace rarelab::encoder
