#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "rarelab/core/tensor.hpp"

namespace rarelab::harness {

enum class Strategy { Replace, Slash };

inline const char* strategy_name(Strategy s) { return s == Strategy::Replace ? "replace" : "slash"; }

inline Strategy parse_strategy(const std::string& name) {
  if (name == "replace") return Strategy::Replace;
  if (name == "slash") return Strategy::Slash;
  throw ConfigError("unknown strategy '" + name + "' (expected replace or slash)");
}

/// Token rows [begin, end) of one word and the vector that stands for it.
template <typename Real>
struct InjectionSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
  std::vector<Real> vector;
};

template <typename Real>
struct InjectionPlan {
  std::vector<InjectionSpan<Real>> spans;

  /// Sorts by position and checks bounds and overlap against a sequence of
  /// `length` rows of width `dim`.
  void validate(std::size_t length, std::size_t dim) {
    std::sort(spans.begin(), spans.end(), [](const auto& a, const auto& b) { return a.begin < b.begin; });
    for (std::size_t k = 0; k < spans.size(); ++k) {
      const auto& s = spans[k];
      if (s.begin >= s.end || s.end > length) {
        throw DomainError("injection span [" + std::to_string(s.begin) + ", " + std::to_string(s.end) +
                          ") outside a sequence of " + std::to_string(length));
      }
      if (s.vector.size() != dim) throw DimensionError("injected vector width does not match the sequence");
      if (k > 0 && spans[k - 1].end > s.begin) throw DomainError("overlapping injection spans");
    }
  }
};

template <typename Real>
struct Injected {
  core::Tensor<Real> sequence;
  /// Row of each span's vector in `sequence`.
  std::vector<std::size_t> positions;
};

namespace detail {

template <typename Real>
void append_row(std::vector<Real>& out, std::span<const Real> row) {
  out.insert(out.end(), row.begin(), row.end());
}

template <typename Real>
core::Tensor<Real> from_rows(std::vector<Real> data, std::size_t dim) {
  const std::size_t rows = data.size() / dim;
  return core::Tensor<Real>({rows, dim}, std::move(data));
}

}  // namespace detail

/// Each span collapses to its single vector.
template <typename Real>
Injected<Real> inject_replace(const core::Tensor<Real>& e, InjectionPlan<Real> plan) {
  const std::size_t n = e.rows(), d = e.cols();
  plan.validate(n, d);
  std::vector<Real> out;
  Injected<Real> result;
  std::size_t next = 0;
  for (const auto& s : plan.spans) {
    for (std::size_t r = next; r < s.begin; ++r) detail::append_row<Real>(out, e.row(r));
    result.positions.push_back(out.size() / d);
    detail::append_row<Real>(out, s.vector);
    next = s.end;
  }
  for (std::size_t r = next; r < n; ++r) detail::append_row<Real>(out, e.row(r));
  result.sequence = detail::from_rows(std::move(out), d);
  return result;
}

/// Inverse of inject_replace given the original rows of every span.
template <typename Real>
core::Tensor<Real> restore_replace(const core::Tensor<Real>& injected, InjectionPlan<Real> plan,
                                   const core::Tensor<Real>& original) {
  plan.validate(original.rows(), original.cols());
  const std::size_t d = injected.cols();
  std::vector<Real> out;
  std::size_t read = 0, orig = 0;
  for (const auto& s : plan.spans) {
    while (orig < s.begin) {
      detail::append_row<Real>(out, injected.row(read++));
      ++orig;
    }
    for (std::size_t r = s.begin; r < s.end; ++r) detail::append_row<Real>(out, original.row(r));
    ++read;
    orig = s.end;
  }
  while (read < injected.rows()) detail::append_row<Real>(out, injected.row(read++));
  return detail::from_rows(std::move(out), d);
}

/// After each span appends the slash row and the span's vector. Above
/// `max_length` rows the interior is center-cropped around the spans while
/// the first and last rows are kept; `max_length == 0` disables cropping.
template <typename Real>
Injected<Real> inject_slash(const core::Tensor<Real>& e, InjectionPlan<Real> plan, std::span<const Real> slash,
                            std::size_t max_length = 0) {
  const std::size_t n = e.rows(), d = e.cols();
  plan.validate(n, d);
  if (slash.size() != d) throw DimensionError("slash embedding width does not match the sequence");
  std::vector<Real> out;
  Injected<Real> result;
  std::size_t next = 0;
  for (const auto& s : plan.spans) {
    for (std::size_t r = next; r < s.end; ++r) detail::append_row<Real>(out, e.row(r));
    detail::append_row<Real>(out, slash);
    result.positions.push_back(out.size() / d);
    detail::append_row<Real>(out, s.vector);
    next = s.end;
  }
  for (std::size_t r = next; r < n; ++r) detail::append_row<Real>(out, e.row(r));
  const std::size_t m = out.size() / d;
  if (max_length == 0 || m <= max_length || plan.spans.empty()) {
    result.sequence = detail::from_rows(std::move(out), d);
    return result;
  }
  if (max_length < 3) throw DomainError("cannot crop to fewer than 3 rows");
  // Rows [lo, hi) hold every span with its insertion.
  const std::size_t lo = plan.spans.front().begin;
  const std::size_t hi = result.positions.back() + 1;
  const std::size_t room = max_length - 2;
  if (lo < 1 || hi > m - 1 || hi - lo > room) {
    throw DomainError("slash injection needs " + std::to_string(m) + " rows and spans cannot fit in " +
                      std::to_string(max_length));
  }
  const std::size_t centre = (lo + hi) / 2;
  std::size_t start = centre > room / 2 ? centre - room / 2 : 1;
  start = std::clamp<std::size_t>(start, std::max<std::size_t>(1, hi > room ? hi - room : 1),
                                   std::min(lo, m - 1 - room));
  std::vector<Real> cropped;
  detail::append_row<Real>(cropped, std::span<const Real>(out.data(), d));
  cropped.insert(cropped.end(), out.begin() + static_cast<long>(start * d),
                 out.begin() + static_cast<long>((start + room) * d));
  detail::append_row<Real>(cropped, std::span<const Real>(out.data() + (m - 1) * d, d));
  for (auto& p : result.positions) p = p - start + 1;
  result.sequence = detail::from_rows(std::move(cropped), d);
  return result;
}

}  // namespace rarelab::harness
