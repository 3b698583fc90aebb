#pragma once

// Differentiable kernels over Var. Rank-1 values act as a single row.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

#include "rarelab/core/autograd.hpp"

namespace rarelab::core {

namespace detail {

template <typename Real>
using RowMatrix =
    Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Real>
Eigen::Map<const RowMatrix<Real>> view(std::span<const Real> data,
                                       std::size_t rows, std::size_t cols) {
  return {data.data(), static_cast<Eigen::Index>(rows),
          static_cast<Eigen::Index>(cols)};
}

template <typename Real>
Eigen::Map<RowMatrix<Real>> view(std::span<Real> data, std::size_t rows,
                                 std::size_t cols) {
  return {data.data(), static_cast<Eigen::Index>(rows),
          static_cast<Eigen::Index>(cols)};
}

inline void require_same_shape(const Shape& a, const Shape& b,
                               const char* op) {
  if (a != b) {
    throw DimensionError(std::string(op) + ": shapes " + shape_string(a) +
                         " and " + shape_string(b) + " differ");
  }
}

template <typename Real>
Shape matrix_shape(const Var<Real>& like, std::size_t rows, std::size_t cols) {
  if (like.value().rank() <= 1) return {cols};
  return {rows, cols};
}

}  // namespace detail

/// a[m×k] · b[k×n].
template <typename Real>
Var<Real> matmul(const Var<Real>& a, const Var<Real>& b) {
  const std::size_t m = a.rows(), k = a.cols();
  if (b.value().rank() != 2 || b.rows() != k) {
    throw DimensionError("matmul: shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " do not agree");
  }
  const std::size_t n = b.cols();
  Tensor<Real> out(detail::matrix_shape(a, m, n));
  detail::view(out.data(), m, n).noalias() =
      detail::view(a.value().data(), m, k) * detail::view(b.value().data(), k, n);
  return make_op(std::move(out), {a, b}, [m, k, n](Node<Real>& self) {
    auto dc = detail::view<Real>(self.value.grad(), m, n);
    if (auto ga = input_grad(self, 0); !ga.empty()) {
      detail::view(ga, m, k).noalias() +=
          dc * detail::view<Real>(self.inputs[1]->value.data(), k, n).transpose();
    }
    if (auto gb = input_grad(self, 1); !gb.empty()) {
      detail::view(gb, k, n).noalias() +=
          detail::view<Real>(self.inputs[0]->value.data(), m, k).transpose() * dc;
    }
  });
}

/// a[m×k] · b[n×k]ᵀ.
template <typename Real>
Var<Real> matmul_nt(const Var<Real>& a, const Var<Real>& b) {
  const std::size_t m = a.rows(), k = a.cols();
  if (b.cols() != k) {
    throw DimensionError("matmul_nt: shapes " + shape_string(a.shape()) +
                         " and " + shape_string(b.shape()) + " do not agree");
  }
  const std::size_t n = b.rows();
  Tensor<Real> out(detail::matrix_shape(a, m, n));
  detail::view(out.data(), m, n).noalias() =
      detail::view(a.value().data(), m, k) *
      detail::view(b.value().data(), n, k).transpose();
  return make_op(std::move(out), {a, b}, [m, k, n](Node<Real>& self) {
    auto dc = detail::view<Real>(self.value.grad(), m, n);
    if (auto ga = input_grad(self, 0); !ga.empty()) {
      detail::view(ga, m, k).noalias() +=
          dc * detail::view<Real>(self.inputs[1]->value.data(), n, k);
    }
    if (auto gb = input_grad(self, 1); !gb.empty()) {
      detail::view(gb, n, k).noalias() +=
          dc.transpose() * detail::view<Real>(self.inputs[0]->value.data(), m, k);
    }
  });
}

template <typename Real>
Var<Real> add(const Var<Real>& a, const Var<Real>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "add");
  Tensor<Real> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] + b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node<Real>& self) {
    auto g = self.value.grad();
    for (std::size_t k = 0; k < 2; ++k) {
      if (auto gi = input_grad(self, k); !gi.empty()) {
        for (std::size_t i = 0; i < g.size(); ++i) gi[i] += g[i];
      }
    }
  });
}

template <typename Real>
Var<Real> sub(const Var<Real>& a, const Var<Real>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "sub");
  Tensor<Real> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] - b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node<Real>& self) {
    auto g = self.value.grad();
    if (auto ga = input_grad(self, 0); !ga.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (auto gb = input_grad(self, 1); !gb.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
    }
  });
}

/// Elementwise product.
template <typename Real>
Var<Real> mul(const Var<Real>& a, const Var<Real>& b) {
  detail::require_same_shape(a.shape(), b.shape(), "mul");
  Tensor<Real> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * b.value()[i];
  return make_op(std::move(out), {a, b}, [](Node<Real>& self) {
    auto g = self.value.grad();
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (auto ga = input_grad(self, 0); !ga.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
    }
    if (auto gb = input_grad(self, 1); !gb.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
    }
  });
}

/// Adds `bias` (length = a.cols()) to every row of `a`.
template <typename Real>
Var<Real> add_row(const Var<Real>& a, const Var<Real>& bias) {
  const std::size_t m = a.rows(), n = a.cols();
  if (bias.numel() != n) {
    throw DimensionError("add_row: bias " + shape_string(bias.shape()) +
                         " does not match " + shape_string(a.shape()));
  }
  Tensor<Real> out(a.shape());
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      out[r * n + c] = a.value()[r * n + c] + bias.value()[c];
    }
  }
  return make_op(std::move(out), {a, bias}, [m, n](Node<Real>& self) {
    auto g = self.value.grad();
    if (auto ga = input_grad(self, 0); !ga.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (auto gb = input_grad(self, 1); !gb.empty()) {
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) gb[c] += g[r * n + c];
      }
    }
  });
}

/// Multiplies by a constant.
template <typename Real>
Var<Real> scale(const Var<Real>& a, Real factor) {
  Tensor<Real> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * factor;
  return make_op(std::move(out), {a}, [factor](Node<Real>& self) {
    auto g = self.value.grad();
    if (auto ga = input_grad(self, 0); !ga.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
    }
  });
}

/// Multiplies every entry of `a` by the scalar value `s`.
template <typename Real>
Var<Real> scale_by(const Var<Real>& a, const Var<Real>& s) {
  if (s.numel() != 1) {
    throw DimensionError("scale_by: factor must be scalar, got " +
                         shape_string(s.shape()));
  }
  const Real factor = s.item();
  Tensor<Real> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = a.value()[i] * factor;
  return make_op(std::move(out), {a, s}, [factor](Node<Real>& self) {
    auto g = self.value.grad();
    if (auto ga = input_grad(self, 0); !ga.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
    }
    if (auto gs = input_grad(self, 1); !gs.empty()) {
      const auto& av = self.inputs[0]->value;
      Real acc = 0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * av[i];
      gs[0] += acc;
    }
  });
}

template <typename Real>
Var<Real> sum(const Var<Real>& a) {
  Real total = 0;
  for (Real v : a.value().data()) total += v;
  return make_op(Tensor<Real>::scalar(total), {a}, [](Node<Real>& self) {
    const Real g = self.value.grad()[0];
    if (auto ga = input_grad(self, 0); !ga.empty()) {
      for (auto& v : ga) v += g;
    }
  });
}

template <typename Real>
Var<Real> dot(const Var<Real>& a, const Var<Real>& b) {
  if (a.numel() != b.numel()) {
    throw DimensionError("dot: shapes " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()) + " differ in length");
  }
  Real total = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) total += a.value()[i] * b.value()[i];
  return make_op(Tensor<Real>::scalar(total), {a, b}, [](Node<Real>& self) {
    const Real g = self.value.grad()[0];
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (auto ga = input_grad(self, 0); !ga.empty()) {
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g * bv[i];
    }
    if (auto gb = input_grad(self, 1); !gb.empty()) {
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += g * av[i];
    }
  });
}

/// ‖a − b‖².
template <typename Real>
Var<Real> squared_distance(const Var<Real>& a, const Var<Real>& b) {
  if (a.numel() != b.numel()) {
    throw DimensionError("squared_distance: shapes " + shape_string(a.shape()) +
                         " and " + shape_string(b.shape()) + " differ");
  }
  Real total = 0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const Real d = a.value()[i] - b.value()[i];
    total += d * d;
  }
  return make_op(Tensor<Real>::scalar(total), {a, b}, [](Node<Real>& self) {
    const Real g = self.value.grad()[0];
    const auto& av = self.inputs[0]->value;
    const auto& bv = self.inputs[1]->value;
    if (auto ga = input_grad(self, 0); !ga.empty()) {
      for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += 2 * g * (av[i] - bv[i]);
    }
    if (auto gb = input_grad(self, 1); !gb.empty()) {
      for (std::size_t i = 0; i < gb.size(); ++i) gb[i] -= 2 * g * (av[i] - bv[i]);
    }
  });
}

template <typename Real>
Var<Real> sigmoid(const Var<Real>& a) {
  Tensor<Real> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = sigmoid(a.value()[i]);
  return make_op(std::move(out), {a}, [](Node<Real>& self) {
    auto g = self.value.grad();
    const auto& y = self.value;
    if (auto ga = input_grad(self, 0); !ga.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i] * (1 - y[i]);
    }
  });
}

/// GELU, tanh approximation.
template <typename Real>
Var<Real> gelu(const Var<Real>& a) {
  constexpr Real c = static_cast<Real>(0.7978845608028654);  // sqrt(2/pi)
  constexpr Real k = static_cast<Real>(0.044715);
  Tensor<Real> out(a.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) {
    const Real x = a.value()[i];
    out[i] = Real(0.5) * x * (1 + std::tanh(c * (x + k * x * x * x)));
  }
  return make_op(std::move(out), {a}, [](Node<Real>& self) {
    auto g = self.value.grad();
    const auto& xv = self.inputs[0]->value;
    if (auto ga = input_grad(self, 0); !ga.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) {
        const Real x = xv[i];
        const Real t = std::tanh(c * (x + k * x * x * x));
        const Real dt = (1 - t * t) * c * (1 + 3 * k * x * x);
        ga[i] += g[i] * (Real(0.5) * (1 + t) + Real(0.5) * x * dt);
      }
    }
  });
}

/// Row-wise softmax.
template <typename Real>
Var<Real> softmax(const Var<Real>& a) {
  Tensor<Real> out = softmax(a.value());
  const std::size_t m = a.rows(), n = a.cols();
  return make_op(std::move(out), {a}, [m, n](Node<Real>& self) {
    auto g = self.value.grad();
    const auto& y = self.value;
    if (auto ga = input_grad(self, 0); !ga.empty()) {
      for (std::size_t r = 0; r < m; ++r) {
        Real inner = 0;
        for (std::size_t c = 0; c < n; ++c) inner += g[r * n + c] * y[r * n + c];
        for (std::size_t c = 0; c < n; ++c) {
          ga[r * n + c] += y[r * n + c] * (g[r * n + c] - inner);
        }
      }
    }
  });
}

/// Per-row normalization to zero mean and unit variance, then gain and bias.
template <typename Real>
Var<Real> layer_norm(const Var<Real>& a, const Var<Real>& gain,
                     const Var<Real>& bias, Real eps = Real(1e-5)) {
  const std::size_t m = a.rows(), n = a.cols();
  if (gain.numel() != n || bias.numel() != n) {
    throw DimensionError("layer_norm: gain/bias do not match " +
                         shape_string(a.shape()));
  }
  Tensor<Real> out(a.shape());
  std::vector<Real> xhat(m * n), inv_std(m);
  for (std::size_t r = 0; r < m; ++r) {
    auto x = a.value().row(r);
    Real mean = 0;
    for (Real v : x) mean += v;
    mean /= static_cast<Real>(n);
    Real var = 0;
    for (Real v : x) var += (v - mean) * (v - mean);
    var /= static_cast<Real>(n);
    inv_std[r] = Real(1) / std::sqrt(var + eps);
    for (std::size_t c = 0; c < n; ++c) {
      xhat[r * n + c] = (x[c] - mean) * inv_std[r];
      out[r * n + c] = xhat[r * n + c] * gain.value()[c] + bias.value()[c];
    }
  }
  return make_op(std::move(out), {a, gain, bias},
                 [m, n, xhat = std::move(xhat),
                  inv_std = std::move(inv_std)](Node<Real>& self) {
                   auto g = self.value.grad();
                   const auto& gv = self.inputs[1]->value;
                   if (auto ga = input_grad(self, 0); !ga.empty()) {
                     for (std::size_t r = 0; r < m; ++r) {
                       Real mean_d = 0, mean_dx = 0;
                       for (std::size_t c = 0; c < n; ++c) {
                         const Real d = g[r * n + c] * gv[c];
                         mean_d += d;
                         mean_dx += d * xhat[r * n + c];
                       }
                       mean_d /= static_cast<Real>(n);
                       mean_dx /= static_cast<Real>(n);
                       for (std::size_t c = 0; c < n; ++c) {
                         const Real d = g[r * n + c] * gv[c];
                         ga[r * n + c] += inv_std[r] * (d - mean_d - xhat[r * n + c] * mean_dx);
                       }
                     }
                   }
                   if (auto gg = input_grad(self, 1); !gg.empty()) {
                     for (std::size_t i = 0; i < m * n; ++i) gg[i % n] += g[i] * xhat[i];
                   }
                   if (auto gb = input_grad(self, 2); !gb.empty()) {
                     for (std::size_t i = 0; i < m * n; ++i) gb[i % n] += g[i];
                   }
                 });
}

/// Rows of `table` at `ids`, as a [ids.size() × cols] matrix.
template <typename Real>
Var<Real> gather_rows(const Var<Real>& table, std::span<const std::size_t> ids) {
  const std::size_t rows = table.rows(), n = table.cols();
  Tensor<Real> out({ids.size(), n});
  for (std::size_t r = 0; r < ids.size(); ++r) {
    if (ids[r] >= rows) {
      throw DomainError("row index " + std::to_string(ids[r]) +
                        " out of range for " + std::to_string(rows) + " rows");
    }
    auto src = table.value().row(ids[r]);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  return make_op(std::move(out), {table}, [n, idx = std::move(idx)](Node<Real>& self) {
    auto g = self.value.grad();
    if (auto gt = input_grad(self, 0); !gt.empty()) {
      for (std::size_t r = 0; r < idx.size(); ++r) {
        for (std::size_t c = 0; c < n; ++c) gt[idx[r] * n + c] += g[r * n + c];
      }
    }
  });
}

/// Row `i` of `a` as a rank-1 value.
template <typename Real>
Var<Real> row(const Var<Real>& a, std::size_t i) {
  const std::size_t n = a.cols();
  if (i >= a.rows()) {
    throw DomainError("row " + std::to_string(i) + " out of range for " +
                      shape_string(a.shape()));
  }
  auto src = a.value().row(i);
  Tensor<Real> out({n}, std::vector<Real>(src.begin(), src.end()));
  return make_op(std::move(out), {a}, [i, n](Node<Real>& self) {
    auto g = self.value.grad();
    if (auto ga = input_grad(self, 0); !ga.empty()) {
      for (std::size_t c = 0; c < n; ++c) ga[i * n + c] += g[c];
    }
  });
}

/// Rows [begin, end) of `a`.
template <typename Real>
Var<Real> slice_rows(const Var<Real>& a, std::size_t begin, std::size_t end) {
  const std::size_t n = a.cols();
  if (begin > end || end > a.rows()) {
    throw DomainError("slice_rows [" + std::to_string(begin) + ", " +
                      std::to_string(end) + ") out of range for " +
                      shape_string(a.shape()));
  }
  const auto& src = a.value().values();
  Tensor<Real> out({end - begin, n},
                   std::vector<Real>(src.begin() + begin * n, src.begin() + end * n));
  return make_op(std::move(out), {a}, [begin, n](Node<Real>& self) {
    auto g = self.value.grad();
    if (auto ga = input_grad(self, 0); !ga.empty()) {
      for (std::size_t i = 0; i < g.size(); ++i) ga[begin * n + i] += g[i];
    }
  });
}

/// Stacks vectors and matrices with a common column count.
template <typename Real>
Var<Real> concat_rows(const std::vector<Var<Real>>& parts) {
  if (parts.empty()) throw DomainError("concat_rows of nothing");
  const std::size_t n = parts.front().cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    if (p.cols() != n) {
      throw DimensionError("concat_rows: " + shape_string(p.shape()) +
                           " has a different width than " +
                           shape_string(parts.front().shape()));
    }
    total += p.rows();
  }
  Tensor<Real> out({total, n});
  std::vector<std::size_t> offsets;
  std::size_t at = 0;
  for (const auto& p : parts) {
    offsets.push_back(at);
    std::copy(p.value().values().begin(), p.value().values().end(),
              out.values().begin() + at * n);
    at += p.rows();
  }
  return make_op(std::move(out), parts, [n, offsets = std::move(offsets)](Node<Real>& self) {
    auto g = self.value.grad();
    for (std::size_t k = 0; k < self.inputs.size(); ++k) {
      if (auto gi = input_grad(self, k); !gi.empty()) {
        for (std::size_t i = 0; i < gi.size(); ++i) gi[i] += g[offsets[k] * n + i];
      }
    }
  });
}

/// Copy of `a` with row `i` taken from the vector `v`.
template <typename Real>
Var<Real> replace_row(const Var<Real>& a, std::size_t i, const Var<Real>& v) {
  const std::size_t n = a.cols();
  if (i >= a.rows()) {
    throw DomainError("replace_row: row " + std::to_string(i) +
                      " out of range for " + shape_string(a.shape()));
  }
  if (v.numel() != n) {
    throw DimensionError("replace_row: vector " + shape_string(v.shape()) +
                         " does not fit rows of " + shape_string(a.shape()));
  }
  Tensor<Real> out(a.value().shape(), a.value().values());
  std::copy(v.value().values().begin(), v.value().values().end(), out.row(i).begin());
  return make_op(std::move(out), {a, v}, [i, n](Node<Real>& self) {
    auto g = self.value.grad();
    if (auto ga = input_grad(self, 0); !ga.empty()) {
      for (std::size_t k = 0; k < g.size(); ++k) {
        if (k / n != i) ga[k] += g[k];
      }
    }
    if (auto gv = input_grad(self, 1); !gv.empty()) {
      for (std::size_t c = 0; c < n; ++c) gv[c] += g[i * n + c];
    }
  });
}

/// Concatenation of two vectors.
template <typename Real>
Var<Real> concat(const Var<Real>& a, const Var<Real>& b) {
  const std::size_t na = a.numel(), nb = b.numel();
  std::vector<Real> values(a.value().values());
  values.insert(values.end(), b.value().values().begin(), b.value().values().end());
  return make_op(Tensor<Real>::vector(std::move(values)), {a, b},
                 [na, nb](Node<Real>& self) {
                   auto g = self.value.grad();
                   if (auto ga = input_grad(self, 0); !ga.empty()) {
                     for (std::size_t i = 0; i < na; ++i) ga[i] += g[i];
                   }
                   if (auto gb = input_grad(self, 1); !gb.empty()) {
                     for (std::size_t i = 0; i < nb; ++i) gb[i] += g[na + i];
                   }
                 });
}

/// Column means of a [m×n] matrix, as a length-n vector.
template <typename Real>
Var<Real> mean_rows(const Var<Real>& a) {
  const std::size_t m = a.rows(), n = a.cols();
  if (m == 0) throw DomainError("mean_rows of an empty matrix");
  Tensor<Real> out({n});
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) out[c] += a.value()[r * n + c];
  }
  for (std::size_t c = 0; c < n; ++c) out[c] /= static_cast<Real>(m);
  return make_op(std::move(out), {a}, [m, n](Node<Real>& self) {
    auto g = self.value.grad();
    if (auto ga = input_grad(self, 0); !ga.empty()) {
      const Real inv = Real(1) / static_cast<Real>(m);
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) ga[r * n + c] += g[c] * inv;
      }
    }
  });
}

/// Sum of each row of a [m×n] matrix, as a length-m vector.
template <typename Real>
Var<Real> row_sums(const Var<Real>& a) {
  const std::size_t m = a.rows(), n = a.cols();
  Tensor<Real> out({m});
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t c = 0; c < n; ++c) out[r] += a.value()[r * n + c];
  }
  return make_op(std::move(out), {a}, [m, n](Node<Real>& self) {
    auto g = self.value.grad();
    if (auto ga = input_grad(self, 0); !ga.empty()) {
      for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t c = 0; c < n; ++c) ga[r * n + c] += g[r];
      }
    }
  });
}

/// Summed softmax cross-entropy of logits [m×V] against one target per row.
template <typename Real>
Var<Real> cross_entropy(const Var<Real>& logits, std::span<const std::size_t> targets) {
  const std::size_t m = logits.rows(), n = logits.cols();
  if (targets.size() != m) {
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(m) + " rows");
  }
  Tensor<Real> probs = softmax(logits.value());
  Real loss = 0;
  for (std::size_t r = 0; r < m; ++r) {
    if (targets[r] >= n) throw DomainError("cross_entropy: target out of range");
    loss -= std::log(std::max(probs[r * n + targets[r]], std::numeric_limits<Real>::min()));
  }
  std::vector<std::size_t> tgt(targets.begin(), targets.end());
  return make_op(Tensor<Real>::scalar(loss), {logits},
                 [n, probs = std::move(probs), tgt = std::move(tgt)](Node<Real>& self) {
                   const Real g = self.value.grad()[0];
                   if (auto gl = input_grad(self, 0); !gl.empty()) {
                     for (std::size_t i = 0; i < gl.size(); ++i) gl[i] += g * probs[i];
                     for (std::size_t r = 0; r < tgt.size(); ++r) gl[r * n + tgt[r]] -= g;
                   }
                 });
}

/// Scaled dot-product self-attention split over `heads` column blocks.
/// q, k, v are [m×d]; the result is [m×d] with heads concatenated.
template <typename Real>
Var<Real> multi_head_attention(const Var<Real>& q, const Var<Real>& k,
                               const Var<Real>& v, std::size_t heads) {
  const std::size_t m = q.rows(), d = q.cols();
  detail::require_same_shape(q.shape(), k.shape(), "attention");
  detail::require_same_shape(q.shape(), v.shape(), "attention");
  if (heads == 0 || d % heads != 0) {
    throw DimensionError("attention: width " + std::to_string(d) +
                         " not divisible by " + std::to_string(heads) + " heads");
  }
  const std::size_t dh = d / heads;
  const Real inv_scale = Real(1) / std::sqrt(static_cast<Real>(dh));
  using Mat = detail::RowMatrix<Real>;
  using Stride = Eigen::OuterStride<>;
  auto block = [&](std::span<const Real> data, std::size_t h) {
    return Eigen::Map<const Mat, 0, Stride>(data.data() + h * dh,
                                            static_cast<Eigen::Index>(m),
                                            static_cast<Eigen::Index>(dh),
                                            Stride(static_cast<Eigen::Index>(d)));
  };

  Tensor<Real> out({m, d});
  std::vector<Mat> probs(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    Mat scores = block(q.value().data(), h) * block(k.value().data(), h).transpose();
    scores *= inv_scale;
    for (Eigen::Index r = 0; r < scores.rows(); ++r) {
      const Real mx = scores.row(r).maxCoeff();
      scores.row(r) = (scores.row(r).array() - mx).exp();
      scores.row(r) /= scores.row(r).sum();
    }
    Eigen::Map<Mat, 0, Stride> o(out.values().data() + h * dh,
                                 static_cast<Eigen::Index>(m),
                                 static_cast<Eigen::Index>(dh),
                                 Stride(static_cast<Eigen::Index>(d)));
    o.noalias() = scores * block(v.value().data(), h);
    probs[h] = std::move(scores);
  }

  return make_op(std::move(out), {q, k, v},
                 [m, d, dh, heads, inv_scale, probs = std::move(probs)](Node<Real>& self) {
                   auto cview = [&](std::span<const Real> data, std::size_t h) {
                     return Eigen::Map<const Mat, 0, Stride>(
                         data.data() + h * dh, static_cast<Eigen::Index>(m),
                         static_cast<Eigen::Index>(dh), Stride(static_cast<Eigen::Index>(d)));
                   };
                   auto mview = [&](std::span<Real> data, std::size_t h) {
                     return Eigen::Map<Mat, 0, Stride>(
                         data.data() + h * dh, static_cast<Eigen::Index>(m),
                         static_cast<Eigen::Index>(dh), Stride(static_cast<Eigen::Index>(d)));
                   };
                   std::span<const Real> g = self.value.grad();
                   auto gq = input_grad(self, 0);
                   auto gk = input_grad(self, 1);
                   auto gv = input_grad(self, 2);
                   const auto& qv = self.inputs[0]->value;
                   const auto& kv = self.inputs[1]->value;
                   const auto& vv = self.inputs[2]->value;
                   for (std::size_t h = 0; h < heads; ++h) {
                     const Mat& p = probs[h];
                     auto dout = cview(g, h);
                     if (!gv.empty()) mview(gv, h).noalias() += p.transpose() * dout;
                     if (gq.empty() && gk.empty()) continue;
                     Mat dp = dout * cview(vv.data(), h).transpose();
                     Mat ds(p.rows(), p.cols());
                     for (Eigen::Index r = 0; r < p.rows(); ++r) {
                       const Real inner = (dp.row(r).array() * p.row(r).array()).sum();
                       ds.row(r) = p.row(r).array() * (dp.row(r).array() - inner);
                     }
                     ds *= inv_scale;
                     if (!gq.empty()) mview(gq, h).noalias() += ds * cview(kv.data(), h);
                     if (!gk.empty()) mview(gk, h).noalias() += ds.transpose() * cview(qv.data(), h);
                   }
                 });
}

}  // namespace rarelab::core
