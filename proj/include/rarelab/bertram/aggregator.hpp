#pragma once

#include <cmath>
#include <random>

#include "rarelab/core/ops.hpp"
#include "rarelab/core/rng.hpp"

namespace rarelab::bertram {

using core::Parameter;
using core::Tensor;
using core::Var;

template <typename Real>
struct Aggregation {
  Var<Real> weights;  // ρ, length m
  Var<Real> output;   // Σ ρ_i v_i
};

/// Self-attention pooling over per-context embeddings. Scores are
/// s_ij = (Q v_i)·(K v_j) / √d and ρ = softmax_i(Σ_j s_ij).
template <typename Real>
class AttentionAggregator {
 public:
  AttentionAggregator() = default;

  AttentionAggregator(std::size_t dim, std::uint64_t seed, double init_scale = 0.02) {
    core::Rng rng(seed);
    std::normal_distribution<double> dist(0.0, init_scale);
    auto make = [&](const char* name) {
      Tensor<Real> t({dim, dim});
      for (auto& v : t.values()) v = static_cast<Real>(dist(rng));
      return Parameter<Real>(name, std::move(t));
    };
    query_ = make("am.query");
    key_ = make("am.key");
  }

  std::size_t dim() const { return query_.value().rows(); }
  Parameter<Real>& query() { return query_; }
  Parameter<Real>& key() { return key_; }
  const Parameter<Real>& query() const { return query_; }
  const Parameter<Real>& key() const { return key_; }

  /// `v` holds one embedding per row.
  Aggregation<Real> operator()(const Var<Real>& v) const {
    const std::size_t m = v.value().rank() == 1 ? 1 : v.rows();
    if (v.numel() == 0 || m == 0) throw DomainError("attentive mimicking over zero contexts");
    if (v.cols() != dim()) {
      throw DimensionError("aggregator of width " + std::to_string(dim()) + " given " +
                           core::shape_string(v.shape()));
    }
    using namespace core;
    auto queries = matmul_nt(v, query_.var());
    auto keys = matmul_nt(v, key_.var());
    auto scores = scale(matmul_nt(queries, keys), Real(1) / std::sqrt(static_cast<Real>(dim())));
    auto rho = softmax(row_sums(scores));
    auto rows = v.value().rank() == 1 ? concat_rows<Real>({v}) : v;
    return {rho, matmul(rho, rows)};
  }

 private:
  Parameter<Real> query_, key_;
};

}  // namespace rarelab::bertram
