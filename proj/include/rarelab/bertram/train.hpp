#pragma once

#include <algorithm>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "rarelab/bertram/model.hpp"
#include "rarelab/core/adam.hpp"
#include "rarelab/text/contexts.hpp"

namespace rarelab::bertram {

/// A frequent word with its known embedding and the contexts it occurs in.
template <typename Real>
struct TrainingWord {
  std::string word;
  std::vector<Real> target;
  std::vector<text::Sentence> contexts;
};

struct StageConfig {
  std::size_t epochs = 5;
  double learning_rate = 1e-3;
  double warmup_fraction = 0.1;
  std::size_t words_per_batch = 16;
  std::size_t min_contexts = 4;
  std::size_t max_contexts = 32;
  std::uint64_t seed = 1;

  static StageConfig from_json(const nlohmann::json& j) {
    StageConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.warmup_fraction = j.value("warmup_fraction", c.warmup_fraction);
    c.words_per_batch = j.value("words_per_batch", c.words_per_batch);
    c.min_contexts = j.value("min_contexts", c.min_contexts);
    c.max_contexts = j.value("max_contexts", c.max_contexts);
    c.seed = j.value("seed", c.seed);
    return c;
  }
};

struct StageReport {
  int stage = 0;
  std::vector<double> epoch_loss;  // mean per-word loss
  std::size_t steps = 0;
  std::size_t skipped_words = 0;   // words without contexts

  nlohmann::json to_json() const {
    return {{"stage", stage}, {"epoch_loss", epoch_loss}, {"steps", steps}, {"skipped_words", skipped_words}};
  }
};

/// Single-token words with corpus frequency at least `min_frequency`, in
/// lexicographic order.
inline std::vector<std::string> select_training_words(const text::Corpus& corpus,
                                                      const text::Vocabulary& vocab,
                                                      std::size_t min_frequency = 100) {
  std::vector<std::string> out;
  for (const auto& [word, count] : corpus.frequencies()) {
    if (count < min_frequency) continue;
    const auto ids = vocab.tokenize_word(word);
    if (ids.size() == 1 && !vocab.is_control(ids.front()) && ids.front() != vocab.colon_id() &&
        ids.front() != vocab.slash_id()) {
      out.push_back(word);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Targets from the encoder's token table and up to `max_contexts`
/// contexts per word from `corpus`.
template <typename Real>
std::vector<TrainingWord<Real>> build_training_words(const std::vector<std::string>& words,
                                                     const text::Corpus& corpus,
                                                     const text::Vocabulary& vocab,
                                                     const encoder::EncoderModel<Real>& encoder,
                                                     std::size_t max_contexts, std::uint64_t seed) {
  std::vector<TrainingWord<Real>> out;
  out.reserve(words.size());
  for (const auto& w : words) {
    out.push_back({w, encoder::target_embedding(w, vocab, encoder),
                   text::collect_contexts(w, corpus, max_contexts, {}, seed)});
  }
  return out;
}

namespace detail {

/// Between `lo` and `hi` distinct indices below `n` (all of them when n is
/// smaller), in increasing order.
inline std::vector<std::size_t> sample_indices(std::size_t n, std::size_t lo, std::size_t hi,
                                               core::Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  if (n <= lo) return idx;
  const std::size_t upper = std::min(hi, n);
  const std::size_t k = lo + core::uniform_index(rng, upper - lo + 1);
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + core::uniform_index(rng, n - i)]);
  idx.resize(k);
  std::sort(idx.begin(), idx.end());
  return idx;
}

template <typename Real>
Var<Real> target_var(const std::vector<Real>& target) {
  return Var<Real>::constant(Tensor<Real>::vector(target));
}

inline void require_frozen_encoder(bool frozen) {
  if (!frozen) throw ConfigError("the encoder must be frozen before training BERTRAM");
}

/// Shuffled minibatches of word indices per epoch; `loss_of` returns the
/// unscaled loss for one word.
template <typename Real>
StageReport run_epochs(int stage, const StageConfig& config, std::size_t count,
                       const core::ParameterList<Real>& trainable,
                       const std::function<Var<Real>(std::size_t, core::Rng&)>& loss_of) {
  StageReport report;
  report.stage = stage;
  if (count == 0) return report;
  const std::size_t per_batch = std::max<std::size_t>(1, config.words_per_batch);
  const std::size_t batches = (count + per_batch - 1) / per_batch;
  core::AdamConfig adam_config;
  adam_config.learning_rate = config.learning_rate;
  adam_config.schedule = {config.warmup_fraction, batches * config.epochs, true};
  core::Adam<Real> adam(adam_config, trainable);
  adam.zero_grad();

  core::Rng rng(core::derive_seed(config.seed, static_cast<std::uint64_t>(stage)));
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t begin = b * per_batch, end = std::min(count, begin + per_batch);
      const Real inv = Real(1) / static_cast<Real>(end - begin);
      for (std::size_t k = begin; k < end; ++k) {
        auto loss = loss_of(order[k], rng);
        total += static_cast<double>(loss.item());
        core::backward(core::scale(loss, inv));
      }
      adam.step();
      ++report.steps;
    }
    report.epoch_loss.push_back(total / static_cast<double>(count));
  }
  return report;
}

}  // namespace detail

/// Stage 1: only A, b and the aggregator learn, from SHALLOW context states.
template <typename Real>
StageReport train_stage1_context(BertramModel<Real>& model, const encoder::EncoderModel<Real>& encoder,
                                 const text::Vocabulary& vocab,
                                 const std::vector<TrainingWord<Real>>& words,
                                 const StageConfig& config) {
  detail::require_frozen_encoder(encoder.all_frozen());
  core::set_frozen(model.parameters(), true);
  core::set_frozen(model.context_parameters(), false);

  // Encoder states do not depend on anything trained here.
  std::vector<std::size_t> usable;
  std::vector<std::vector<Var<Real>>> states(words.size());
  std::size_t skipped = 0;
  for (std::size_t w = 0; w < words.size(); ++w) {
    if (words[w].contexts.empty()) {
      ++skipped;
      continue;
    }
    for (const auto& c : words[w].contexts) {
      auto ctx = encoder_context(Variant::Shallow, words[w].word, c, vocab, encoder.config().max_length);
      auto h = context_embedding<Real>(Variant::Shallow, encoder, vocab, ctx);
      states[w].push_back(Var<Real>::constant(h.value()));
    }
    usable.push_back(w);
  }

  auto report = detail::run_epochs<Real>(
      1, config, usable.size(), model.context_parameters(), [&](std::size_t k, core::Rng& rng) {
        const auto& all = states[usable[k]];
        std::vector<Var<Real>> chosen;
        for (auto i : detail::sample_indices(all.size(), config.min_contexts, config.max_contexts, rng)) {
          chosen.push_back(all[i]);
        }
        return mimicking_loss(detail::target_var(words[usable[k]].target),
                              context_only_embedding(model, chosen));
      });
  report.skipped_words = skipped;
  model.mark_stage(1);
  return report;
}

/// Stage 2: only the n-gram table learns, from targets alone.
template <typename Real>
StageReport train_stage2_form(BertramModel<Real>& model,
                              const std::vector<std::pair<std::string, std::vector<Real>>>& targets,
                              const StageConfig& config) {
  core::set_frozen(model.parameters(), true);
  core::set_frozen(model.form_parameters(), false);
  const double dropout = model.config().ngram_dropout;
  auto report = detail::run_epochs<Real>(
      2, config, targets.size(), model.form_parameters(), [&](std::size_t k, core::Rng& rng) {
        return mimicking_loss(detail::target_var(targets[k].second),
                              form_embedding(targets[k].first, model.ngrams(), &rng, dropout));
      });
  model.mark_stage(2);
  return report;
}

template <typename Real>
std::vector<std::pair<std::string, std::vector<Real>>> form_targets(
    const std::vector<TrainingWord<Real>>& words) {
  std::vector<std::pair<std::string, std::vector<Real>>> out;
  for (const auto& w : words) out.emplace_back(w.word, w.target);
  return out;
}

/// Stage 3: everything except the encoder learns through the model's
/// variant; ADD additionally keeps the n-gram table fixed.
template <typename Real>
StageReport train_stage3_combined(BertramModel<Real>& model,
                                  const encoder::EncoderModel<Real>& encoder,
                                  const text::Vocabulary& vocab,
                                  const std::vector<TrainingWord<Real>>& words,
                                  const StageConfig& config) {
  if (!model.has_stage(1) || !model.has_stage(2)) {
    throw ConfigError("combined training needs the context-only and form-only stages first");
  }
  detail::require_frozen_encoder(encoder.all_frozen());
  core::set_frozen(model.parameters(), false);
  if (model.variant() == Variant::Add) core::set_frozen(model.form_parameters(), true);
  core::ParameterList<Real> trainable;
  for (auto* p : model.parameters()) {
    if (!p->frozen()) trainable.push_back(p);
  }

  std::vector<std::size_t> usable;
  std::vector<std::vector<MaskedContext>> prepared(words.size());
  std::size_t skipped = 0;
  for (std::size_t w = 0; w < words.size(); ++w) {
    if (words[w].contexts.empty()) {
      ++skipped;
      continue;
    }
    prepared[w] = prepare_contexts(model, encoder, vocab, words[w].word, words[w].contexts);
    usable.push_back(w);
  }

  auto report = detail::run_epochs<Real>(
      3, config, usable.size(), trainable, [&](std::size_t k, core::Rng& rng) {
        const auto& word = words[usable[k]];
        const auto& all = prepared[usable[k]];
        std::vector<MaskedContext> chosen;
        for (auto i : detail::sample_indices(all.size(), config.min_contexts, config.max_contexts, rng)) {
          chosen.push_back(all[i]);
        }
        return mimicking_loss(detail::target_var(word.target),
                              embed_prepared(model, encoder, vocab, word.word, chosen, &rng));
      });
  report.skipped_words = skipped;
  model.mark_stage(3);
  return report;
}

/// Per-word mimicking loss without dropout, each word on its first
/// `max_contexts` contexts.
template <typename Real>
std::vector<double> word_losses(const BertramModel<Real>& model,
                                const encoder::EncoderModel<Real>& encoder,
                                const text::Vocabulary& vocab,
                                const std::vector<TrainingWord<Real>>& words,
                                std::size_t max_contexts = 32) {
  std::vector<double> out;
  out.reserve(words.size());
  for (const auto& w : words) {
    std::vector<text::Sentence> contexts(
        w.contexts.begin(), w.contexts.begin() + std::min(max_contexts, w.contexts.size()));
    auto prepared = prepare_contexts(model, encoder, vocab, w.word, contexts);
    auto v = embed_prepared(model, encoder, vocab, w.word, prepared);
    out.push_back(static_cast<double>(mimicking_loss(detail::target_var(w.target), v).item()));
  }
  return out;
}

}  // namespace rarelab::bertram
