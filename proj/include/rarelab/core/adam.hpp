#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include "rarelab/core/autograd.hpp"

namespace rarelab::core {

/// Learning-rate schedule: linear warmup over a fraction of the planned
/// steps, then linear decay to zero. `total_steps == 0` keeps the rate
/// constant.
struct Schedule {
  double warmup_fraction = 0.0;
  std::size_t total_steps = 0;
  bool linear_decay = true;

  /// Multiplier for the 1-based step `t`.
  double factor(std::size_t t) const {
    if (total_steps == 0) return 1.0;
    const double total = static_cast<double>(total_steps);
    const double warmup = std::floor(warmup_fraction * total);
    const double s = static_cast<double>(t - 1);
    if (s < warmup) return (s + 1.0) / warmup;
    if (!linear_decay) return 1.0;
    return std::max(0.0, (total - s) / std::max(1.0, total - warmup));
  }
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  Schedule schedule;
};

/// Adam with bias correction. Frozen parameters are never touched and
/// every gradient slot is zeroed after a step.
template <typename Real>
class Adam {
 public:
  Adam(AdamConfig config, ParameterList<Real> params)
      : config_(config), params_(std::move(params)) {
    for (auto* p : params_) {
      first_.emplace_back(p->value().numel(), 0.0);
      second_.emplace_back(p->value().numel(), 0.0);
    }
  }

  const AdamConfig& config() const { return config_; }
  std::size_t step_count() const { return step_; }

  double current_learning_rate() const {
    return config_.learning_rate * config_.schedule.factor(std::max<std::size_t>(step_, 1));
  }

  void step() {
    ++step_;
    const double lr = config_.learning_rate * config_.schedule.factor(step_);
    const double b1 = config_.beta1, b2 = config_.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step_));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
      Parameter<Real>& p = *params_[k];
      if (p.frozen() || !p.has_grad()) continue;
      auto& data = p.mutable_value().values();
      auto grad = p.grad();
      auto& m = first_[k];
      auto& v = second_[k];
      for (std::size_t i = 0; i < data.size(); ++i) {
        const double g = static_cast<double>(grad[i]);
        m[i] = b1 * m[i] + (1.0 - b1) * g;
        v[i] = b2 * v[i] + (1.0 - b2) * g * g;
        const double mhat = m[i] / c1;
        const double vhat = v[i] / c2;
        data[i] = static_cast<Real>(static_cast<double>(data[i]) -
                                    lr * mhat / (std::sqrt(vhat) + config_.epsilon));
      }
      p.zero_grad();
    }
  }

  void zero_grad() { zero_grads(params_); }

 private:
  AdamConfig config_;
  ParameterList<Real> params_;
  std::vector<std::vector<double>> first_;
  std::vector<std::vector<double>> second_;
  std::size_t step_ = 0;
};

}  // namespace rarelab::core
