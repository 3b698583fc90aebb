#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rarelab/core/checkpoint.hpp"
#include "rarelab/core/ops.hpp"
#include "rarelab/core/rng.hpp"
#include "rarelab/text/vocab.hpp"

namespace rarelab::encoder {

using core::Parameter;
using core::Tensor;
using core::Var;
using text::TokenId;

struct EncoderConfig {
  std::size_t layers = 2;
  std::size_t hidden = 64;
  std::size_t heads = 4;
  std::size_t ffn = 256;
  std::size_t max_length = 64;
  std::size_t vocab_size = 0;
  std::uint64_t seed = 1;

  void validate() const {
    if (heads == 0 || hidden % heads != 0) {
      throw ConfigError("hidden size " + std::to_string(hidden) +
                        " is not divisible by " + std::to_string(heads) + " heads");
    }
    if (max_length < 8) throw ConfigError("max_length must be at least 8");
    if (vocab_size == 0) throw ConfigError("vocab_size must be positive");
    if (layers == 0 || ffn == 0) throw ConfigError("layers and ffn must be positive");
  }

  nlohmann::json to_json() const {
    return {{"layers", layers}, {"hidden", hidden}, {"heads", heads}, {"ffn", ffn},
            {"max_length", max_length}, {"vocab_size", vocab_size}, {"seed", seed}};
  }

  static EncoderConfig from_json(const nlohmann::json& j) {
    EncoderConfig c;
    c.layers = j.value("layers", c.layers);
    c.hidden = j.value("hidden", c.hidden);
    c.heads = j.value("heads", c.heads);
    c.ffn = j.value("ffn", c.ffn);
    c.max_length = j.value("max_length", c.max_length);
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.seed = j.value("seed", c.seed);
    return c;
  }
};

template <typename Real>
struct EncoderLayer {
  Parameter<Real> wq, bq, wk, bk, wv, bv, wo, bo;
  Parameter<Real> ln1_gain, ln1_bias;
  Parameter<Real> w1, b1, w2, b2;
  Parameter<Real> ln2_gain, ln2_bias;

  template <typename Self, typename Visit>
  static void visit(Self& self, Visit&& f) {
    for (auto* p : {&self.wq, &self.bq, &self.wk, &self.bk, &self.wv, &self.bv, &self.wo,
                    &self.bo, &self.ln1_gain, &self.ln1_bias, &self.w1, &self.b1, &self.w2,
                    &self.b2, &self.ln2_gain, &self.ln2_bias}) {
      f(*p);
    }
  }
};

/// Post-norm transformer encoder with learned absolute positions and an MLM
/// head tied to the token embedding table.
template <typename Real>
class EncoderModel {
 public:
  explicit EncoderModel(const EncoderConfig& config) : config_(config) {
    config_.validate();
    const std::size_t d = config_.hidden, f = config_.ffn;
    core::Rng rng(config_.seed);
    auto normal = [&](std::string name, core::Shape shape) {
      std::normal_distribution<double> dist(0.0, 0.02);
      Tensor<Real> t(std::move(shape));
      for (auto& v : t.values()) v = static_cast<Real>(dist(rng));
      return Parameter<Real>(std::move(name), std::move(t));
    };
    auto filled = [](std::string name, core::Shape shape, Real value) {
      return Parameter<Real>(std::move(name), Tensor<Real>(std::move(shape), value));
    };
    token_embeddings_ = normal("embeddings.token", {config_.vocab_size, d});
    position_embeddings_ = normal("embeddings.position", {config_.max_length, d});
    embed_ln_gain_ = filled("embeddings.ln.gain", {d}, Real(1));
    embed_ln_bias_ = filled("embeddings.ln.bias", {d}, Real(0));
    for (std::size_t l = 0; l < config_.layers; ++l) {
      const std::string p = "layer" + std::to_string(l) + ".";
      EncoderLayer<Real> layer{
          normal(p + "attn.wq", {d, d}),     filled(p + "attn.bq", {d}, 0),
          normal(p + "attn.wk", {d, d}),     filled(p + "attn.bk", {d}, 0),
          normal(p + "attn.wv", {d, d}),     filled(p + "attn.bv", {d}, 0),
          normal(p + "attn.wo", {d, d}),     filled(p + "attn.bo", {d}, 0),
          filled(p + "ln1.gain", {d}, 1),    filled(p + "ln1.bias", {d}, 0),
          normal(p + "ffn.w1", {d, f}),      filled(p + "ffn.b1", {f}, 0),
          normal(p + "ffn.w2", {f, d}),      filled(p + "ffn.b2", {d}, 0),
          filled(p + "ln2.gain", {d}, 1),    filled(p + "ln2.bias", {d}, 0)};
      layers_.push_back(std::move(layer));
    }
    output_bias_ = filled("mlm.bias", {config_.vocab_size}, Real(0));
  }

  const EncoderConfig& config() const { return config_; }
  std::size_t hidden() const { return config_.hidden; }

  /// Rows of the token table for `ids`, without positions.
  Var<Real> embed_tokens(std::span<const TokenId> ids) const {
    for (TokenId id : ids) {
      if (id >= config_.vocab_size) {
        throw DomainError("token id " + std::to_string(id) + " out of range for vocabulary of " +
                          std::to_string(config_.vocab_size));
      }
    }
    return core::gather_rows(token_embeddings_.var(), ids);
  }

  /// Final-layer states for an arbitrary sequence of input vectors [m×d].
  Var<Real> forward_embeddings(const Var<Real>& e) const {
    const std::size_t m = e.rows();
    if (e.cols() != config_.hidden || e.value().rank() != 2) {
      throw DimensionError("encoder input " + core::shape_string(e.shape()) +
                           " is not [m x " + std::to_string(config_.hidden) + "]");
    }
    if (m == 0 || m > config_.max_length) {
      throw DomainError("encoder input length " + std::to_string(m) +
                        " outside [1, " + std::to_string(config_.max_length) + "]");
    }
    using namespace core;
    Var<Real> x = add(e, slice_rows(position_embeddings_.var(), 0, m));
    x = layer_norm(x, embed_ln_gain_.var(), embed_ln_bias_.var());
    for (const auto& L : layers_) {
      auto q = add_row(matmul(x, L.wq.var()), L.bq.var());
      auto k = add_row(matmul(x, L.wk.var()), L.bk.var());
      auto v = add_row(matmul(x, L.wv.var()), L.bv.var());
      auto attended = multi_head_attention(q, k, v, config_.heads);
      auto projected = add_row(matmul(attended, L.wo.var()), L.bo.var());
      x = layer_norm(add(x, projected), L.ln1_gain.var(), L.ln1_bias.var());
      auto hidden = gelu(add_row(matmul(x, L.w1.var()), L.b1.var()));
      auto ff = add_row(matmul(hidden, L.w2.var()), L.b2.var());
      x = layer_norm(add(x, ff), L.ln2_gain.var(), L.ln2_bias.var());
    }
    return x;
  }

  Var<Real> forward_ids(std::span<const TokenId> ids) const {
    return forward_embeddings(embed_tokens(ids));
  }

  /// Vocabulary scores for each row of `h` via the tied embedding table.
  Var<Real> mlm_logits(const Var<Real>& h) const {
    return core::add_row(core::matmul_nt(h, token_embeddings_.var()), output_bias_.var());
  }

  const Tensor<Real>& token_table() const { return token_embeddings_.value(); }
  Parameter<Real>& token_embeddings() { return token_embeddings_; }
  const Parameter<Real>& token_embeddings() const { return token_embeddings_; }

  std::vector<Real> token_row(TokenId id) const {
    if (id >= config_.vocab_size) throw DomainError("token id out of range");
    auto r = token_table().row(id);
    return {r.begin(), r.end()};
  }

  /// Token table, position table and embedding normalization.
  core::ParameterList<Real> embedding_parameters() {
    return {&token_embeddings_, &position_embeddings_, &embed_ln_gain_, &embed_ln_bias_};
  }

  core::ParameterList<Real> parameters() {
    core::ParameterList<Real> out = embedding_parameters();
    for (auto& L : layers_) EncoderLayer<Real>::visit(L, [&](Parameter<Real>& p) { out.push_back(&p); });
    out.push_back(&output_bias_);
    return out;
  }

  std::vector<const Parameter<Real>*> parameters() const {
    auto list = const_cast<EncoderModel*>(this)->parameters();
    return {list.begin(), list.end()};
  }

  void set_frozen(bool frozen) { core::set_frozen(parameters(), frozen); }

  bool all_frozen() const {
    for (const auto* p : parameters()) {
      if (!p->frozen()) return false;
    }
    return true;
  }

  template <typename Other>
  EncoderModel<Other> cast() const {
    EncoderModel<Other> out(config_);
    core::copy_parameters<Other, Real>(parameters(), out.parameters());
    return out;
  }

  core::Checkpoint to_checkpoint(nlohmann::json meta = nlohmann::json::object()) const {
    core::Checkpoint ckpt;
    ckpt.meta = std::move(meta);
    ckpt.meta["kind"] = "encoder";
    ckpt.meta["config"] = config_.to_json();
    core::append_parameters<Real>(ckpt, parameters());
    return ckpt;
  }

  static EncoderModel from_checkpoint(const core::Checkpoint& ckpt) {
    if (ckpt.meta.value("kind", "") != "encoder") {
      throw ConfigError("checkpoint does not hold an encoder");
    }
    EncoderModel model(EncoderConfig::from_json(ckpt.meta.at("config")));
    core::load_parameters<Real>(ckpt, model.parameters(), true);
    return model;
  }

 private:
  EncoderConfig config_;
  Parameter<Real> token_embeddings_;
  Parameter<Real> position_embeddings_;
  Parameter<Real> embed_ln_gain_, embed_ln_bias_;
  std::vector<EncoderLayer<Real>> layers_;
  Parameter<Real> output_bias_;
};

/// Embedding row of a word that is a single token of `vocab`.
template <typename Real>
std::vector<Real> target_embedding(const std::string& word, const text::Vocabulary& vocab,
                                   const EncoderModel<Real>& model) {
  const auto pieces = vocab.tokenize_word(word);
  if (pieces.size() != 1 || vocab.is_control(pieces.front())) {
    throw DomainError("target word '" + word + "' tokenizes to " +
                      std::to_string(pieces.size()) + " pieces; exactly one is required");
  }
  return model.token_row(pieces.front());
}

/// [CLS] pieces [SEP], truncated to `max_length`.
inline std::vector<TokenId> encode_sentence(const text::Sentence& words, const text::Vocabulary& vocab,
                                            std::size_t max_length) {
  std::vector<TokenId> ids{vocab.cls_id()};
  for (const auto& w : words) {
    for (TokenId id : vocab.tokenize_word(w)) ids.push_back(id);
  }
  if (ids.size() + 1 > max_length) ids.resize(max_length - 1);
  ids.push_back(vocab.sep_id());
  return ids;
}

}  // namespace rarelab::encoder
