#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rarelab/core/adam.hpp"
#include "rarelab/core/checkpoint.hpp"
#include "rarelab/encoder/model.hpp"
#include "rarelab/rarify/augment.hpp"
#include "rarelab/rarify/dataset.hpp"

namespace rarelab::rarify {

using core::Parameter;
using core::Tensor;
using core::Var;
using text::TokenId;

/// Encoder input for an instance. `spans[p]` is the half-open token range
/// of word p (over text then text_b); words cut by truncation get an empty
/// range at the cut.
struct EncodedInstance {
  std::vector<TokenId> ids;
  std::vector<std::pair<std::size_t, std::size_t>> spans;
};

/// [CLS] text [SEP] or [CLS] text [SEP] text_b [SEP]. When too long, pieces
/// are dropped from the end of the longer segment first.
inline EncodedInstance encode_instance(const Sentence& text, const Sentence& text_b,
                                       const text::Vocabulary& vocab, std::size_t max_length) {
  auto a = vocab.tokenize_words(text);
  auto b = vocab.tokenize_words(text_b);
  const std::size_t specials = text_b.empty() ? 2 : 3;
  if (max_length < specials + 1) throw DomainError("max_length too small for an instance");
  std::size_t keep_a = a.ids.size(), keep_b = b.ids.size();
  while (keep_a + keep_b + specials > max_length) {
    (keep_a >= keep_b ? keep_a : keep_b) -= 1;
  }
  EncodedInstance out;
  out.ids.push_back(vocab.cls_id());
  auto append = [&](const text::WordPieces& wp, std::size_t keep) {
    const std::size_t base = out.ids.size();
    out.ids.insert(out.ids.end(), wp.ids.begin(), wp.ids.begin() + static_cast<long>(keep));
    for (auto [s, e] : wp.spans) {
      out.spans.emplace_back(base + std::min(s, keep), base + std::min(e, keep));
    }
    out.ids.push_back(vocab.sep_id());
  };
  append(a, keep_a);
  if (!text_b.empty()) append(b, keep_b);
  return out;
}

struct FinetuneConfig {
  std::size_t epochs = 3;
  std::size_t batch_size = 16;
  double learning_rate = 1e-3;
  double warmup_fraction = 0.1;
  std::uint64_t seed = 1;
  AugmentConfig augment;

  static FinetuneConfig from_json(const nlohmann::json& j) {
    FinetuneConfig c;
    c.epochs = j.value("epochs", c.epochs);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.warmup_fraction = j.value("warmup_fraction", c.warmup_fraction);
    c.seed = j.value("seed", c.seed);
    c.augment.mask_rate = j.value("mask_rate", c.augment.mask_rate);
    c.augment.duplicate_rate = j.value("duplicate_rate", c.augment.duplicate_rate);
    c.augment.copy_mask_rate = j.value("copy_mask_rate", c.augment.copy_mask_rate);
    return c;
  }
};

struct FinetuneReport {
  std::vector<double> epoch_loss;
  std::size_t steps = 0;
  AugmentStats augmentation;
};

/// Encoder copy with a linear head over the final [CLS] state.
template <typename Real>
class Classifier {
 public:
  Classifier() = default;

  Classifier(encoder::EncoderModel<Real> encoder, std::size_t num_labels, std::uint64_t seed)
      : encoder_(std::move(encoder)) {
    if (num_labels < 2) throw ConfigError("a classifier needs at least two labels");
    core::Rng rng(seed);
    std::normal_distribution<double> dist(0.0, 0.02);
    Tensor<Real> w({num_labels, encoder_.hidden()});
    for (auto& v : w.values()) v = static_cast<Real>(dist(rng));
    weight_ = Parameter<Real>("head.weight", std::move(w));
    bias_ = Parameter<Real>("head.bias", Tensor<Real>({num_labels}, Real(0)));
  }

  std::size_t num_labels() const { return bias_.value().numel(); }
  const encoder::EncoderModel<Real>& encoder() const { return encoder_; }
  encoder::EncoderModel<Real>& encoder() { return encoder_; }

  EncodedInstance encode(const Sentence& text, const Sentence& text_b, const text::Vocabulary& vocab) const {
    return encode_instance(text, text_b, vocab, encoder_.config().max_length);
  }

  /// Label scores for an input embedding sequence [m×d].
  Var<Real> logits(const Var<Real>& embeddings) const {
    auto h = encoder_.forward_embeddings(embeddings);
    return core::add(core::matmul_nt(core::row(h, 0), weight_.var()), bias_.var());
  }

  Var<Real> logits_ids(const std::vector<TokenId>& ids) const { return logits(encoder_.embed_tokens(ids)); }

  std::vector<double> proba_from_embeddings(const Var<Real>& embeddings) const {
    return softmax(logits(embeddings).value().values());
  }

  std::vector<double> predict_proba(const Sentence& text, const Sentence& text_b,
                                    const text::Vocabulary& vocab) const {
    return softmax(logits_ids(encode(text, text_b, vocab).ids).value().values());
  }

  core::ParameterList<Real> head_parameters() { return {&weight_, &bias_}; }

  core::ParameterList<Real> parameters() {
    auto out = encoder_.parameters();
    out.push_back(&weight_);
    out.push_back(&bias_);
    return out;
  }

  std::vector<const Parameter<Real>*> parameters() const {
    auto list = const_cast<Classifier*>(this)->parameters();
    return {list.begin(), list.end()};
  }

  void set_frozen(bool frozen) { core::set_frozen(parameters(), frozen); }

  core::Checkpoint to_checkpoint(nlohmann::json meta = nlohmann::json::object()) const {
    core::Checkpoint ckpt;
    ckpt.meta = std::move(meta);
    ckpt.meta["kind"] = "classifier";
    ckpt.meta["config"] = encoder_.config().to_json();
    ckpt.meta["num_labels"] = num_labels();
    core::append_parameters<Real>(ckpt, parameters());
    return ckpt;
  }

  static Classifier from_checkpoint(const core::Checkpoint& ckpt) {
    if (ckpt.meta.value("kind", "") != "classifier") {
      throw ConfigError("checkpoint does not hold a classifier");
    }
    Classifier c(encoder::EncoderModel<Real>(encoder::EncoderConfig::from_json(ckpt.meta.at("config"))),
                 ckpt.meta.at("num_labels").get<std::size_t>(), 0);
    core::load_parameters<Real>(ckpt, c.parameters(), true);
    return c;
  }

  static std::vector<double> softmax(std::span<const Real> z) {
    std::vector<double> p(z.size());
    const double top = static_cast<double>(*std::max_element(z.begin(), z.end()));
    double total = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) total += p[i] = std::exp(static_cast<double>(z[i]) - top);
    for (auto& v : p) v /= total;
    return p;
  }

 private:
  encoder::EncoderModel<Real> encoder_{encoder::EncoderConfig{.vocab_size = 1}};
  Parameter<Real> weight_, bias_;
};

/// Index of the largest probability; ties go to the lowest label.
inline int argmax(const std::vector<double>& p) {
  return static_cast<int>(std::max_element(p.begin(), p.end()) - p.begin());
}

/// Binds a classifier to its vocabulary so it can score instances directly.
template <typename Real>
class BoundClassifier {
 public:
  BoundClassifier(const Classifier<Real>& model, const text::Vocabulary& vocab)
      : model_(&model), vocab_(&vocab) {}

  std::vector<double> predict_proba(const LabeledInstance& x) const {
    return model_->predict_proba(x.text, x.text_b, *vocab_);
  }

  const Classifier<Real>& model() const { return *model_; }
  const text::Vocabulary& vocab() const { return *vocab_; }

 private:
  const Classifier<Real>* model_;
  const text::Vocabulary* vocab_;
};

/// Cross-entropy finetuning with augmentation redrawn for every example in
/// every epoch. Token, position and embedding-normalization parameters stay
/// frozen; everything is frozen again afterwards.
template <typename Real>
FinetuneReport finetune_baseline(Classifier<Real>& classifier, const std::vector<LabeledInstance>& train,
                                 const text::Vocabulary& vocab, const FinetuneConfig& config) {
  if (train.empty()) throw DomainError("finetuning on an empty training set");
  if (config.batch_size == 0) throw ConfigError("batch_size must be positive");
  for (const auto& x : train) {
    if (x.label < 0 || static_cast<std::size_t>(x.label) >= classifier.num_labels()) {
      throw DomainError("label " + std::to_string(x.label) + " outside the label set");
    }
  }
  classifier.set_frozen(false);
  core::set_frozen(classifier.encoder().embedding_parameters(), true);

  const std::size_t batches = (train.size() + config.batch_size - 1) / config.batch_size;
  core::AdamConfig adam_config;
  adam_config.learning_rate = config.learning_rate;
  adam_config.schedule = {config.warmup_fraction, batches * config.epochs, true};
  core::Adam<Real> adam(adam_config, classifier.parameters());
  adam.zero_grad();

  FinetuneReport report;
  core::Rng rng(config.seed);
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double total = 0.0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t begin = b * config.batch_size;
      const std::size_t end = std::min(train.size(), begin + config.batch_size);
      const Real inv = Real(1) / static_cast<Real>(end - begin);
      for (std::size_t k = begin; k < end; ++k) {
        const auto x = augment(train[order[k]], rng, config.augment, &report.augmentation);
        const auto ids = classifier.encode(x.text, x.text_b, vocab).ids;
        const std::size_t label = static_cast<std::size_t>(x.label);
        auto logits = classifier.logits_ids(ids);
        auto loss = core::cross_entropy(core::concat_rows<Real>({logits}), std::span<const std::size_t>(&label, 1));
        total += static_cast<double>(loss.item());
        core::backward(core::scale(loss, inv));
      }
      adam.step();
      ++report.steps;
    }
    report.epoch_loss.push_back(total / static_cast<double>(train.size()));
  }
  classifier.set_frozen(true);
  return report;
}

/// Fraction of instances predicted correctly.
template <typename C>
double accuracy(const C& classifier, const std::vector<LabeledInstance>& data) {
  if (data.empty()) return 0.0;
  std::size_t correct = 0;
  for (const auto& x : data) correct += argmax(classifier.predict_proba(x)) == x.label;
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace rarelab::rarify
