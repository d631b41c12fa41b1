#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "eblab/tensor.hpp"

namespace eblab {

enum class OptimizerKind { kAdam, kSgd };

inline const char* to_string(OptimizerKind k) { return k == OptimizerKind::kAdam ? "adam" : "sgd"; }

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double lr = 0.001;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// SGD or bias-corrected Adam over a fixed list of parameter tensors.
class Optimizer {
 public:
  Optimizer() = default;
  explicit Optimizer(OptimizerConfig cfg) : cfg_(cfg) {
    if (!(cfg_.lr >= 0.0)) throw std::invalid_argument("optimizer: lr must be >= 0");
  }

  const OptimizerConfig& config() const { return cfg_; }
  std::int64_t steps() const { return step_; }
  double lr() const { return cfg_.lr; }
  void set_lr(double lr) {
    if (!(lr >= 0.0)) throw std::invalid_argument("optimizer: lr must be >= 0");
    cfg_.lr = lr;
  }
  const std::vector<Tensor>& first_moments() const { return m_; }
  const std::vector<Tensor>& second_moments() const { return v_; }

  void step(std::span<Tensor* const> params, std::span<const Tensor> grads) {
    if (params.size() != grads.size()) throw ShapeError("optimizer: parameter/gradient count mismatch");
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (params[i]->shape() != grads[i].shape()) {
        throw ShapeError("optimizer: gradient shape " + shape_string(grads[i].shape()) + " for parameter " +
                         shape_string(params[i]->shape()));
      }
      require_finite(grads[i], "optimizer gradient");
    }
    if (cfg_.kind == OptimizerKind::kAdam && m_.empty()) {
      for (Tensor* p : params) {
        m_.emplace_back(p->shape(), 0.0);
        v_.emplace_back(p->shape(), 0.0);
      }
    }
    if (cfg_.kind == OptimizerKind::kAdam && m_.size() != params.size()) {
      throw ShapeError("optimizer: parameter list changed between steps");
    }

    ++step_;
    // Write to scratch first so a non-finite update leaves parameters intact.
    std::vector<Tensor> next;
    next.reserve(params.size());
    if (cfg_.kind == OptimizerKind::kSgd) {
      for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor p = *params[i];
        for (std::size_t k = 0; k < p.size(); ++k) p[k] -= cfg_.lr * grads[i][k];
        next.push_back(std::move(p));
      }
    } else {
      const double t = static_cast<double>(step_);
      const double c1 = 1.0 - std::pow(cfg_.beta1, t);
      const double c2 = 1.0 - std::pow(cfg_.beta2, t);
      for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor p = *params[i];
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        if (m.shape() != p.shape()) throw ShapeError("optimizer: moment shape mismatch");
        for (std::size_t k = 0; k < p.size(); ++k) {
          const double g = grads[i][k];
          m[k] = cfg_.beta1 * m[k] + (1.0 - cfg_.beta1) * g;
          v[k] = cfg_.beta2 * v[k] + (1.0 - cfg_.beta2) * g * g;
          p[k] -= cfg_.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg_.eps);
        }
        next.push_back(std::move(p));
      }
    }
    for (const Tensor& p : next) require_finite(p, "optimizer update");
    for (std::size_t i = 0; i < params.size(); ++i) *params[i] = std::move(next[i]);
  }

 private:
  OptimizerConfig cfg_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::int64_t step_ = 0;
};

/// Constant learning rate with an optional linear decay to 0 that starts at
/// `decay_start` (a fraction of the total steps; >= 1 disables it).
struct LrSchedule {
  double base = 0.001;
  double decay_start = 1.0;
  std::int64_t total_steps = 0;

  double at(std::int64_t step) const {
    if (decay_start >= 1.0 || total_steps <= 0) return base;
    const double start = decay_start * static_cast<double>(total_steps);
    const double s = static_cast<double>(step);
    if (s <= start) return base;
    const double span = static_cast<double>(total_steps) - start;
    return base * std::max(0.0, 1.0 - (s - start) / span);
  }
};

}  // namespace eblab
