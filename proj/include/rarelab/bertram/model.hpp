#pragma once

#include <algorithm>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rarelab/bertram/aggregator.hpp"
#include "rarelab/bertram/form.hpp"
#include "rarelab/core/checkpoint.hpp"
#include "rarelab/encoder/model.hpp"

namespace rarelab::bertram {

using text::TokenId;

enum class Variant { Shallow, Replace, Add };

inline const char* variant_name(Variant v) {
  switch (v) {
    case Variant::Shallow: return "shallow";
    case Variant::Replace: return "replace";
    case Variant::Add: return "add";
  }
  return "?";
}

inline Variant parse_variant(const std::string& name) {
  if (name == "shallow") return Variant::Shallow;
  if (name == "replace") return Variant::Replace;
  if (name == "add") return Variant::Add;
  throw ConfigError("unknown variant '" + name + "' (expected shallow, replace or add)");
}

/// Token ids of an encoder input and the position read for the word.
struct MaskedContext {
  std::vector<TokenId> ids;
  std::size_t mask = 0;
};

/// [CLS] context [SEP] with every occurrence of `word` replaced by [MASK].
inline MaskedContext prepare_masked_context(const std::string& word, const text::Sentence& context,
                                            const text::Vocabulary& vocab) {
  MaskedContext out;
  out.ids.push_back(vocab.cls_id());
  std::optional<std::size_t> first;
  for (const auto& w : context) {
    if (w == word) {
      if (!first) first = out.ids.size();
      out.ids.push_back(vocab.mask_id());
    } else {
      for (TokenId id : vocab.tokenize_word(w)) out.ids.push_back(id);
    }
  }
  if (!first) throw DomainError("context does not contain '" + word + "'");
  out.ids.push_back(vocab.sep_id());
  out.mask = *first;
  return out;
}

/// Keeps [CLS] and [SEP] and a window of the interior centred on the mask
/// so that the result has at most `budget` tokens.
inline MaskedContext crop_context(MaskedContext ctx, std::size_t budget) {
  if (ctx.ids.size() <= budget) return ctx;
  if (budget < 3 || ctx.mask == 0 || ctx.mask + 1 >= ctx.ids.size()) {
    throw DomainError("cannot crop a context of " + std::to_string(ctx.ids.size()) +
                      " tokens to " + std::to_string(budget) + " and keep the mask");
  }
  const std::size_t interior = ctx.ids.size() - 2, keep = budget - 2;
  const std::size_t at = ctx.mask - 1;
  std::size_t start = at > keep / 2 ? at - keep / 2 : 0;
  start = std::min(start, interior - keep);
  MaskedContext out;
  out.ids.push_back(ctx.ids.front());
  out.ids.insert(out.ids.end(), ctx.ids.begin() + 1 + start, ctx.ids.begin() + 1 + start + keep);
  out.ids.push_back(ctx.ids.back());
  out.mask = ctx.mask - start;
  return out;
}

/// Prepared and cropped for `variant` under an encoder of `max_length`.
inline MaskedContext encoder_context(Variant variant, const std::string& word,
                                     const text::Sentence& context, const text::Vocabulary& vocab,
                                     std::size_t max_length) {
  const std::size_t budget = variant == Variant::Add ? max_length - 2 : max_length;
  return crop_context(prepare_masked_context(word, context, vocab), budget);
}

/// The context used when a word has none: [CLS] [MASK] [SEP].
inline MaskedContext empty_context(const text::Vocabulary& vocab) {
  return {{vocab.cls_id(), vocab.mask_id(), vocab.sep_id()}, 1};
}

struct BertramConfig {
  Variant variant = Variant::Add;
  std::size_t min_n = 3;
  std::size_t max_n = 5;
  double ngram_dropout = 0.1;
  std::uint64_t seed = 1;

  nlohmann::json to_json() const {
    return {{"variant", variant_name(variant)}, {"min_n", min_n}, {"max_n", max_n},
            {"ngram_dropout", ngram_dropout}, {"seed", seed}};
  }
  static BertramConfig from_json(const nlohmann::json& j) {
    BertramConfig c;
    c.variant = parse_variant(j.value("variant", std::string("add")));
    c.min_n = j.value("min_n", c.min_n);
    c.max_n = j.value("max_n", c.max_n);
    c.ngram_dropout = j.value("ngram_dropout", c.ngram_dropout);
    c.seed = j.value("seed", c.seed);
    return c;
  }
};

/// Form and context model producing embeddings for (rare) words. The
/// encoder is referenced, never owned or trained.
template <typename Real>
class BertramModel {
 public:
  BertramModel() = default;

  BertramModel(const BertramConfig& config, std::size_t dim, const std::vector<std::string>& words)
      : config_(config),
        ngrams_(words, dim, config.min_n, config.max_n, core::derive_seed(config.seed, 1)),
        aggregator_(dim, core::derive_seed(config.seed, 2)) {
    Tensor<Real> identity({dim, dim});
    for (std::size_t i = 0; i < dim; ++i) identity(i, i) = Real(1);
    A_ = Parameter<Real>("head.A", std::move(identity));
    b_ = Parameter<Real>("head.b", Tensor<Real>({dim}));
    gate_x_ = Parameter<Real>("gate.x", Tensor<Real>({2 * dim}));
    gate_y_ = Parameter<Real>("gate.y", Tensor<Real>::scalar(0));
  }

  const BertramConfig& config() const { return config_; }
  Variant variant() const { return config_.variant; }
  std::size_t dim() const { return A_.value().rows(); }

  /// Same weights under another variant. The gate keeps its values and is
  /// only consulted by SHALLOW.
  BertramModel with_variant(Variant v) const {
    BertramModel out(*this);
    out.config_.variant = v;
    return out;
  }

  NGramTable<Real>& ngrams() { return ngrams_; }
  const NGramTable<Real>& ngrams() const { return ngrams_; }
  AttentionAggregator<Real>& aggregator() { return aggregator_; }
  const AttentionAggregator<Real>& aggregator() const { return aggregator_; }
  Parameter<Real>& A() { return A_; }
  Parameter<Real>& b() { return b_; }
  const Parameter<Real>& A() const { return A_; }
  const Parameter<Real>& b() const { return b_; }
  Parameter<Real>& gate_x() { return gate_x_; }
  Parameter<Real>& gate_y() { return gate_y_; }
  const Parameter<Real>& gate_x() const { return gate_x_; }
  const Parameter<Real>& gate_y() const { return gate_y_; }

  /// A, b and the aggregator.
  core::ParameterList<Real> context_parameters() {
    return {&A_, &b_, &aggregator_.query(), &aggregator_.key()};
  }
  core::ParameterList<Real> form_parameters() { return {&ngrams_.parameter()}; }
  core::ParameterList<Real> gate_parameters() {
    if (config_.variant != Variant::Shallow) return {};
    return {&gate_x_, &gate_y_};
  }
  core::ParameterList<Real> parameters() {
    auto out = context_parameters();
    for (auto* p : form_parameters()) out.push_back(p);
    for (auto* p : gate_parameters()) out.push_back(p);
    return out;
  }
  std::vector<const Parameter<Real>*> parameters() const {
    auto list = const_cast<BertramModel*>(this)->parameters();
    return {list.begin(), list.end()};
  }

  const std::vector<int>& completed_stages() const { return stages_; }
  bool has_stage(int stage) const {
    return std::find(stages_.begin(), stages_.end(), stage) != stages_.end();
  }
  void mark_stage(int stage) {
    if (!has_stage(stage)) stages_.push_back(stage);
    std::sort(stages_.begin(), stages_.end());
  }

  core::Checkpoint to_checkpoint(nlohmann::json meta = nlohmann::json::object()) const {
    core::Checkpoint ckpt;
    ckpt.meta = std::move(meta);
    ckpt.meta["kind"] = "bertram";
    ckpt.meta["config"] = config_.to_json();
    ckpt.meta["stages"] = stages_;
    std::vector<std::string> grams(ngrams_.size());
    for (const auto& [g, id] : ngrams_.index()) grams[id] = g;
    ckpt.meta["ngrams"] = grams;
    auto params = const_cast<BertramModel*>(this)->context_parameters();
    params.push_back(const_cast<Parameter<Real>*>(&ngrams_.parameter()));
    params.push_back(const_cast<Parameter<Real>*>(&gate_x_));
    params.push_back(const_cast<Parameter<Real>*>(&gate_y_));
    core::append_parameters<Real>(ckpt, {params.begin(), params.end()});
    return ckpt;
  }

  static BertramModel from_checkpoint(const core::Checkpoint& ckpt) {
    if (ckpt.meta.value("kind", "") != "bertram") {
      throw ConfigError("checkpoint does not hold a bertram model");
    }
    const auto config = BertramConfig::from_json(ckpt.meta.at("config"));
    const auto& table = ckpt.at("ngrams");
    const std::size_t dim = table.shape.at(1);
    BertramModel model(config, dim, {});
    model.ngrams_ = NGramTable<Real>(ckpt.meta.at("ngrams").get<std::vector<std::string>>(),
                                     Tensor<Real>(table.shape), config.min_n, config.max_n);
    auto params = model.context_parameters();
    params.push_back(&model.ngrams_.parameter());
    params.push_back(&model.gate_x_);
    params.push_back(&model.gate_y_);
    core::load_parameters<Real>(ckpt, params, true);
    model.stages_ = ckpt.meta.value("stages", std::vector<int>{});
    return model;
  }

 private:
  BertramConfig config_;
  NGramTable<Real> ngrams_;
  AttentionAggregator<Real> aggregator_;
  Parameter<Real> A_, b_, gate_x_, gate_y_;
  std::vector<int> stages_;
};

/// Final-layer state for one masked context. SHALLOW ignores `v_form`;
/// REPLACE puts it in place of the mask embedding; ADD inserts it and the
/// colon embedding after [CLS] and reads two positions later.
template <typename Real>
Var<Real> context_embedding(Variant variant, const encoder::EncoderModel<Real>& encoder,
                            const text::Vocabulary& vocab, const MaskedContext& ctx,
                            const Var<Real>& v_form = {}) {
  using namespace core;
  if (ctx.mask >= ctx.ids.size() || ctx.ids[ctx.mask] != vocab.mask_id()) {
    throw DomainError("context position " + std::to_string(ctx.mask) + " is not a mask");
  }
  auto e = encoder.embed_tokens(ctx.ids);
  switch (variant) {
    case Variant::Shallow:
      return row(encoder.forward_embeddings(e), ctx.mask);
    case Variant::Replace:
      return row(encoder.forward_embeddings(replace_row(e, ctx.mask, v_form)), ctx.mask);
    case Variant::Add: {
      const std::size_t m = ctx.ids.size();
      if (m + 2 > encoder.config().max_length) {
        throw DomainError("ADD input of " + std::to_string(m + 2) + " tokens exceeds " +
                          std::to_string(encoder.config().max_length));
      }
      const TokenId colon[] = {vocab.colon_id()};
      auto input = concat_rows<Real>(
          {row(e, 0), v_form, encoder.embed_tokens(colon), slice_rows(e, 1, m)});
      return row(encoder.forward_embeddings(input), ctx.mask + 2);
    }
  }
  throw DomainError("unknown variant");
}

/// v_(w,C): gated FCM blend for SHALLOW, A·v_context + b otherwise.
template <typename Real>
Var<Real> single_context_embedding(const BertramModel<Real>& model,
                                   const encoder::EncoderModel<Real>& encoder,
                                   const text::Vocabulary& vocab, const MaskedContext& ctx,
                                   const Var<Real>& v_form) {
  const auto variant = model.variant();
  auto v_context = context_embedding(variant, encoder, vocab, ctx, v_form);
  if (variant == Variant::Shallow) {
    auto alpha = gate(v_form, v_context, model.gate_x().var(), model.gate_y().var());
    return fcm_combine(v_form, v_context, alpha, model.A().var(), model.b().var());
  }
  return affine(v_context, model.A().var(), model.b().var());
}

/// Attentive mimicking over already computed per-context embeddings.
template <typename Real>
Aggregation<Real> attentive_mimicking(const BertramModel<Real>& model,
                                      const std::vector<Var<Real>>& embeddings) {
  if (embeddings.empty()) throw DomainError("attentive mimicking over zero contexts");
  return model.aggregator()(core::concat_rows(embeddings));
}

/// Masked, cropped encoder inputs for each context, or the empty-context
/// fallback when there are none.
template <typename Real>
std::vector<MaskedContext> prepare_contexts(const BertramModel<Real>& model,
                                            const encoder::EncoderModel<Real>& encoder,
                                            const text::Vocabulary& vocab, const std::string& word,
                                            const std::vector<text::Sentence>& contexts) {
  std::vector<MaskedContext> out;
  for (const auto& c : contexts) {
    out.push_back(encoder_context(model.variant(), word, c, vocab, encoder.config().max_length));
  }
  if (out.empty()) out.push_back(empty_context(vocab));
  return out;
}

/// v_(w,𝒞) from prepared contexts. The form embedding is computed once and
/// shared by all contexts; `rng` enables n-gram dropout.
template <typename Real>
Var<Real> embed_prepared(const BertramModel<Real>& model, const encoder::EncoderModel<Real>& encoder,
                         const text::Vocabulary& vocab, const std::string& word,
                         const std::vector<MaskedContext>& contexts, core::Rng* rng = nullptr) {
  auto v_form = form_embedding(word, model.ngrams(), rng, model.config().ngram_dropout);
  std::vector<Var<Real>> per_context;
  per_context.reserve(contexts.size());
  for (const auto& ctx : contexts) {
    per_context.push_back(single_context_embedding(model, encoder, vocab, ctx, v_form));
  }
  return attentive_mimicking(model, per_context).output;
}

/// Embedding of `word` given its contexts; no contexts uses the form-only
/// fallback context.
template <typename Real>
std::vector<Real> infer(const BertramModel<Real>& model, const encoder::EncoderModel<Real>& encoder,
                        const text::Vocabulary& vocab, const std::string& word,
                        const std::vector<text::Sentence>& contexts) {
  auto prepared = prepare_contexts(model, encoder, vocab, word, contexts);
  const auto v = embed_prepared(model, encoder, vocab, word, prepared);
  const auto& values = v.value().values();
  return {values.begin(), values.end()};
}

/// Context-only embedding: SHALLOW states mapped by A, b and aggregated.
template <typename Real>
Var<Real> context_only_embedding(const BertramModel<Real>& model,
                                 const std::vector<Var<Real>>& shallow_states) {
  std::vector<Var<Real>> mapped;
  mapped.reserve(shallow_states.size());
  for (const auto& s : shallow_states) mapped.push_back(affine(s, model.A().var(), model.b().var()));
  return attentive_mimicking(model, mapped).output;
}

}  // namespace rarelab::bertram
