#pragma once

#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "rarelab/core/ops.hpp"
#include "rarelab/core/rng.hpp"
#include "rarelab/text/ngrams.hpp"

namespace rarelab::bertram {

using core::Parameter;
using core::Tensor;
using core::Var;

/// Learned vectors for character n-grams. Grams outside the table are
/// ignored when averaging.
template <typename Real>
class NGramTable {
 public:
  NGramTable() = default;

  /// One row per distinct gram of `words`, uniform in [-0.05, 0.05].
  NGramTable(const std::vector<std::string>& words, std::size_t dim, std::size_t min_n,
             std::size_t max_n, std::uint64_t seed)
      : min_n_(min_n), max_n_(max_n) {
    std::set<std::string> grams;
    for (const auto& w : words) {
      for (auto& g : text::extract_ngrams(w, min_n, max_n).grams) grams.insert(std::move(g));
    }
    core::Rng rng(seed);
    std::uniform_real_distribution<double> init(-0.05, 0.05);
    Tensor<Real> table({grams.size(), dim});
    for (auto& v : table.values()) v = static_cast<Real>(init(rng));
    std::size_t id = 0;
    for (const auto& g : grams) index_.emplace(g, id++);
    table_ = Parameter<Real>("ngrams", std::move(table));
  }

  /// A table with explicit rows, mostly for tests.
  NGramTable(const std::vector<std::string>& grams, Tensor<Real> rows, std::size_t min_n,
             std::size_t max_n)
      : min_n_(min_n), max_n_(max_n) {
    if (rows.rank() != 2 || rows.rows() != grams.size()) {
      throw DimensionError("n-gram rows " + core::shape_string(rows.shape()) + " do not match " +
                           std::to_string(grams.size()) + " grams");
    }
    for (std::size_t i = 0; i < grams.size(); ++i) {
      if (!index_.emplace(grams[i], i).second) throw DomainError("duplicate n-gram " + grams[i]);
    }
    table_ = Parameter<Real>("ngrams", std::move(rows));
  }

  std::size_t size() const { return index_.size(); }
  std::size_t dim() const { return table_.value().cols(); }
  std::size_t min_n() const { return min_n_; }
  std::size_t max_n() const { return max_n_; }
  const std::map<std::string, std::size_t>& index() const { return index_; }
  Parameter<Real>& parameter() { return table_; }
  const Parameter<Real>& parameter() const { return table_; }

  /// Table rows for the known grams of `word`, duplicates kept.
  std::vector<std::size_t> lookup(const std::string& word) const {
    std::vector<std::size_t> ids;
    for (const auto& g : text::extract_ngrams(word, min_n_, max_n_).grams) {
      if (auto it = index_.find(g); it != index_.end()) ids.push_back(it->second);
    }
    return ids;
  }

 private:
  std::size_t min_n_ = 3, max_n_ = 5;
  std::map<std::string, std::size_t> index_;
  Parameter<Real> table_;
};

/// Mean of the word's known gram vectors. With `rng` set, each gram is
/// dropped independently with probability `dropout`. No surviving gram
/// gives the zero vector.
template <typename Real>
Var<Real> form_embedding(const std::string& word, const NGramTable<Real>& table,
                         core::Rng* rng = nullptr, double dropout = 0.0) {
  if (word.empty()) throw DomainError("form embedding of an empty word");
  auto ids = table.lookup(word);
  if (rng && dropout > 0) {
    std::vector<std::size_t> kept;
    for (auto id : ids) {
      if (!core::bernoulli(*rng, dropout)) kept.push_back(id);
    }
    ids = std::move(kept);
  }
  if (ids.empty()) return Var<Real>::constant(Tensor<Real>({table.dim()}));
  return core::mean_rows(core::gather_rows(table.parameter().var(), std::span<const std::size_t>(ids)));
}

/// σ(x·[v_form; v_context] + y).
template <typename Real>
Var<Real> gate(const Var<Real>& v_form, const Var<Real>& v_context, const Var<Real>& x,
               const Var<Real>& y) {
  if (v_form.numel() != v_context.numel() || x.numel() != 2 * v_form.numel() || y.numel() != 1) {
    throw DomainError("gate: v_form " + core::shape_string(v_form.shape()) + ", v_context " +
                      core::shape_string(v_context.shape()) + ", x " +
                      core::shape_string(x.shape()) + ", y " + core::shape_string(y.shape()) +
                      " are inconsistent");
  }
  return core::sigmoid(core::add(core::dot(x, core::concat(v_form, v_context)), y));
}

/// A·v + b for a vector v.
template <typename Real>
Var<Real> affine(const Var<Real>& v, const Var<Real>& A, const Var<Real>& b) {
  return core::add(core::matmul_nt(v, A), b);
}

/// α·(A·v_context + b) + (1 − α)·v_form.
template <typename Real>
Var<Real> fcm_combine(const Var<Real>& v_form, const Var<Real>& v_context, const Var<Real>& alpha,
                      const Var<Real>& A, const Var<Real>& b) {
  auto transformed = affine(v_context, A, b);
  return core::add(v_form, core::scale_by(core::sub(transformed, v_form), alpha));
}

/// ‖e_w − v‖².
template <typename Real>
Var<Real> mimicking_loss(const Var<Real>& target, const Var<Real>& v) {
  return core::squared_distance(target, v);
}

}  // namespace rarelab::bertram
