#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rarelab/bertram/train.hpp"
#include "rarelab/encoder/pretrain.hpp"
#include "rarelab/harness/probe.hpp"
#include "rarelab/harness/toy.hpp"

namespace rarelab::harness {

inline ToyConfig experiment_world() {
  ToyConfig c;
  c.generic_share = 0.2;
  c.root_noise = 0.3;
  c.suffix_noise = 0.3;
  c.repeat_share = 0.2;
  return c;
}

struct ToyExperimentConfig {
  ToyConfig world = experiment_world();
  std::size_t vocab_size = 600;
  std::size_t whole_word_min_freq = 100;
  encoder::EncoderConfig encoder{.layers = 2, .hidden = 64, .heads = 4, .ffn = 128, .max_length = 24};
  encoder::PretrainConfig pretrain{.epochs = 6, .batch_size = 32, .learning_rate = 2e-3};
  std::size_t held_out = 50;
  std::size_t max_contexts = 32;
  /// Contexts per held-out word at evaluation, emulating a rare word.
  std::size_t eval_contexts = 4;
  bertram::BertramConfig bertram;
  bertram::StageConfig stage1{.epochs = 100, .learning_rate = 3e-3, .words_per_batch = 8};
  bertram::StageConfig stage2{.epochs = 5, .learning_rate = 1e-2};
  bertram::StageConfig stage3{.epochs = 60, .learning_rate = 1e-3, .words_per_batch = 1};
  std::uint64_t seed = 7;
};

struct ToyExperimentResult {
  double cosine_context_only = 0.0;
  double cosine_form_only = 0.0;
  double cosine_combined = 0.0;
  double rare_mrr_plain = 0.0;
  double rare_mrr_bertram = 0.0;
  std::size_t training_words = 0;
  std::size_t held_out_words = 0;
  std::size_t rare_probes = 0;
  nlohmann::json timings = nlohmann::json::object();
  nlohmann::json losses = nlohmann::json::object();

  nlohmann::json to_json() const {
    return {{"cosine_context_only", cosine_context_only}, {"cosine_form_only", cosine_form_only},
            {"cosine_combined", cosine_combined},         {"rare_mrr_plain", rare_mrr_plain},
            {"rare_mrr_bertram", rare_mrr_bertram},       {"training_words", training_words},
            {"held_out_words", held_out_words},           {"rare_probes", rare_probes},
            {"timings", timings},                         {"losses", losses}};
  }
};

template <typename Real>
double cosine(const std::vector<Real>& a, const std::vector<Real>& b) {
  double ab = 0, aa = 0, bb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<double>(a[i]) * b[i];
    aa += static_cast<double>(a[i]) * a[i];
    bb += static_cast<double>(b[i]) * b[i];
  }
  return aa > 0 && bb > 0 ? ab / std::sqrt(aa * bb) : 0.0;
}

/// Generated world, pretrained encoder, three-stage BERTRAM training, then
/// cosine to held-out targets and rare-keyword probe MRR against the plain
/// encoder.
inline ToyExperimentResult run_toy_experiment(const ToyExperimentConfig& config,
                                              const std::function<void(const std::string&)>& log = {}) {
  using clock = std::chrono::steady_clock;
  auto t0 = clock::now();
  ToyExperimentResult result;
  auto lap = [&](const std::string& name) {
    const auto now = clock::now();
    result.timings[name] = std::chrono::duration<double>(now - t0).count();
    t0 = now;
    if (log) log(name + " done in " + std::to_string(result.timings[name].get<double>()) + "s");
  };

  const auto world = generate_toy_world(config.world);
  text::Corpus corpus(world.sentences);
  const auto vocab = text::build_vocab(corpus, config.vocab_size, config.whole_word_min_freq);
  lap("world");

  encoder::PretrainReport pre;
  auto enc = encoder::pretrain_mlm(corpus, vocab, config.encoder, config.pretrain, &pre);
  enc.set_frozen(true);
  result.losses["pretrain"] = pre.epoch_loss;
  lap("pretrain");

  // Held-out words: frequent members spread over classes, never trained on.
  auto frequent = world.words_in_tier(Tier::Frequent);
  core::Rng rng(core::derive_seed(config.seed, 3));
  std::shuffle(frequent.begin(), frequent.end(), rng);
  std::vector<std::string> held(frequent.begin(),
                                frequent.begin() + static_cast<long>(std::min(config.held_out, frequent.size())));
  std::sort(held.begin(), held.end());
  std::vector<std::string> names;
  for (const auto& w : bertram::select_training_words(corpus, vocab, 100)) {
    if (!std::binary_search(held.begin(), held.end(), w)) names.push_back(w);
  }
  const auto train = bertram::build_training_words(names, corpus, vocab, enc, config.max_contexts, config.seed);
  const auto eval = bertram::build_training_words(held, corpus, vocab, enc, config.eval_contexts, config.seed);
  result.training_words = train.size();
  result.held_out_words = eval.size();

  bertram::BertramConfig bc = config.bertram;
  bc.variant = bertram::Variant::Add;
  bertram::BertramModel<float> model(bc, enc.hidden(), names);
  auto r1 = bertram::train_stage1_context(model, enc, vocab, train, config.stage1);
  result.losses["stage1"] = r1.epoch_loss;
  lap("stage1");

  auto mean_cosine = [&](auto&& embed) {
    double total = 0;
    for (const auto& w : eval) total += cosine(embed(w), w.target);
    return eval.empty() ? 0.0 : total / static_cast<double>(eval.size());
  };
  auto shallow_states = [&](const bertram::TrainingWord<float>& w) {
    std::vector<core::Var<float>> states;
    for (const auto& c : w.contexts) {
      auto ctx = bertram::encoder_context(bertram::Variant::Shallow, w.word, c, vocab, enc.config().max_length);
      states.push_back(bertram::context_embedding<float>(bertram::Variant::Shallow, enc, vocab, ctx));
    }
    return states;
  };
  result.cosine_context_only = mean_cosine([&](const auto& w) {
    const auto v = bertram::context_only_embedding(model, shallow_states(w)).value().values();
    return std::vector<float>(v.begin(), v.end());
  });

  auto r2 = bertram::train_stage2_form(model, bertram::form_targets(train), config.stage2);
  result.losses["stage2"] = r2.epoch_loss;
  result.cosine_form_only = mean_cosine([&](const auto& w) {
    const auto v = bertram::form_embedding<float>(w.word, model.ngrams()).value().values();
    return std::vector<float>(v.begin(), v.end());
  });
  lap("stage2");

  auto r3 = bertram::train_stage3_combined(model, enc, vocab, train, config.stage3);
  result.losses["stage3"] = r3.epoch_loss;
  result.cosine_combined = mean_cosine([&](const auto& w) { return bertram::infer(model, enc, vocab, w.word, w.contexts); });
  lap("stage3");

  std::vector<ClozeProbe> rare;
  for (const auto& p : world.probes) {
    if (text::frequency_bucket(corpus.frequency(p.keyword)) == text::FrequencyBucket::Rare) rare.push_back(p);
  }
  result.rare_probes = rare.size();
  if (!rare.empty()) {
    ProbeOptions po{.cutoff = 100, .max_contexts = config.max_contexts, .seed = config.seed};
    const auto vectors = bertram_vectors(model, enc, vocab);
    result.rare_mrr_plain = run_probe<float>(enc, vocab, rare, corpus, nullptr, po).report.at("all", "all").score;
    result.rare_mrr_bertram = run_probe<float>(enc, vocab, rare, corpus, &vectors, po).report.at("all", "all").score;
  }
  lap("probe");
  return result;
}

}  // namespace rarelab::harness
