#pragma once

// Energy-based adversarial objectives and the probabilistic-GAN baseline.
//
//   L_D = mean(e_real) + mean([m - e_fake]^+)
//   L_G = mean(e_fake) + lambda_pt * f_PT(S_fake)
//
// f_PT is the mean squared cosine similarity between distinct rows of the
// encoder representation batch S. It enters only the generator loss.

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "eblab/autodiff.hpp"
#include "eblab/tensor.hpp"

namespace eblab {

enum class MarginKind { kConstant, kLinear };

/// m(t): either fixed, or decaying linearly from m0 to exactly 0 at
/// decay_end_step and staying there.
struct MarginSchedule {
  MarginKind kind = MarginKind::kConstant;
  double m0 = 10.0;
  std::int64_t decay_end_step = 0;

  static MarginSchedule constant(double m) { return {MarginKind::kConstant, m, 0}; }
  static MarginSchedule linear(double m0, std::int64_t end) { return {MarginKind::kLinear, m0, end}; }

  void validate() const {
    if (!(m0 >= 0.0) || !std::isfinite(m0)) throw std::invalid_argument("margin: m0 must be finite and >= 0");
    if (kind == MarginKind::kLinear && decay_end_step <= 0) {
      throw std::invalid_argument("margin: linear decay needs decay_end_step > 0");
    }
  }

  friend bool operator==(const MarginSchedule&, const MarginSchedule&) = default;
};

inline double margin_at(const MarginSchedule& s, std::int64_t step) {
  if (step < 0) throw std::invalid_argument("margin_at: negative step");
  if (s.kind == MarginKind::kConstant) return s.m0;
  if (step >= s.decay_end_step) return 0.0;
  return s.m0 * std::max(0.0, 1.0 - static_cast<double>(step) / static_cast<double>(s.decay_end_step));
}

inline constexpr double kProbabilityClamp = 1e-7;
inline constexpr double kPullAwayNormEps = 1e-12;

namespace detail {

inline void require_nonnegative(const Tensor& e, const char* op) {
  for (double v : e.values()) {
    if (!(v >= 0.0)) throw std::invalid_argument(std::string(op) + ": energies must be non-negative");
  }
}

inline void require_probabilities(const Tensor& p, const char* op) {
  for (double v : p.values()) {
    if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument(std::string(op) + ": probabilities must lie in [0,1]");
  }
}

}  // namespace detail

/// Hinge term [m - e]^+ per sample.
inline Var hinge(Var e, double m) { return relu(add_scalar(scale(e, -1.0), m)); }

inline Var ebgan_d_loss(Var e_real, Var e_fake, double m) {
  if (!(m >= 0.0)) throw std::invalid_argument("ebgan_d_loss: margin must be >= 0");
  detail::require_nonnegative(e_real.value(), "ebgan_d_loss");
  detail::require_nonnegative(e_fake.value(), "ebgan_d_loss");
  return add(mean(e_real), mean(hinge(e_fake, m)));
}

inline Var ebgan_g_loss(Var e_fake) {
  detail::require_nonnegative(e_fake.value(), "ebgan_g_loss");
  return mean(e_fake);
}

inline double ebgan_d_loss(std::span<const double> e_real, std::span<const double> e_fake, double m) {
  Graph g;
  return ebgan_d_loss(g.constant(Tensor({e_real.size()}, {e_real.begin(), e_real.end()})),
                      g.constant(Tensor({e_fake.size()}, {e_fake.begin(), e_fake.end()})), m)
      .value()
      .item();
}

inline double ebgan_g_loss(std::span<const double> e_fake) {
  Graph g;
  return ebgan_g_loss(g.constant(Tensor({e_fake.size()}, {e_fake.begin(), e_fake.end()}))).value().item();
}

/// Differentiable pull-away term over S [N, s]. Norms are offset by
/// `norm_eps`; with norm_eps == 0 a zero row is an error.
inline Var pull_away(Var s, double norm_eps = kPullAwayNormEps) {
  const Tensor& sv = s.value();
  detail::require_rank2(sv, "pull_away");
  const std::size_t n = sv.rows(), d = sv.cols();
  if (n < 2) throw std::invalid_argument("pull_away: needs at least two rows");

  auto sm = detail::as_matrix(sv);
  Eigen::VectorXd norm = sm.rowwise().norm();
  if (norm_eps == 0.0) {
    for (Eigen::Index i = 0; i < norm.size(); ++i) {
      if (norm[i] == 0.0) throw std::invalid_argument("pull_away: zero-norm representation row");
    }
  }
  Eigen::VectorXd denom = norm.array() + norm_eps;
  detail::RowMatrix unit = sm.array().colwise() / denom.array();
  detail::RowMatrix cos = unit * unit.transpose();
  cos.diagonal().setZero();
  const double k = 1.0 / (static_cast<double>(n) * static_cast<double>(n - 1));
  const double value = k * cos.squaredNorm();

  return s.graph()->record(
      Tensor::scalar(value), {s},
      [n, d, k, sv = sv, norm = std::move(norm), denom = std::move(denom), unit = std::move(unit),
       cos = std::move(cos)](const Tensor& dy, std::span<Tensor* const> grads) {
        // d f / d S_a = 4k / n_a * ( sum_j c_aj U_j - (sum_j c_aj^2) S_a / |S_a| )
        detail::RowMatrix cu = cos * unit;
        Eigen::VectorXd c2 = cos.array().square().rowwise().sum();
        auto sm = detail::as_matrix(sv);
        Tensor& g = *grads[0];
        for (std::size_t a = 0; a < n; ++a) {
          const double scale_a = dy[0] * 4.0 * k / denom[a];
          const double radial = norm[a] > 0.0 ? c2[a] / norm[a] : 0.0;
          for (std::size_t c = 0; c < d; ++c) {
            g[a * d + c] += scale_a * (cu(a, c) - radial * sm(a, c));
          }
        }
      },
      "pull_away");
}

/// Exact pull-away term; zero rows and single-row batches are errors.
inline double pull_away_term(const Tensor& s) {
  Graph g;
  return pull_away(g.constant(s), 0.0).value().item();
}

/// mean(-log p_real - log(1 - p_fake)), probabilities clamped away from 0 and 1.
inline Var gan_d_loss(Var p_real, Var p_fake) {
  detail::require_probabilities(p_real.value(), "gan_d_loss");
  detail::require_probabilities(p_fake.value(), "gan_d_loss");
  const double lo = kProbabilityClamp, hi = 1.0 - kProbabilityClamp;
  Var real_term = mean(log(clamp(p_real, lo, hi)));
  Var fake_term = mean(log(add_scalar(scale(clamp(p_fake, lo, hi), -1.0), 1.0)));
  return scale(add(real_term, fake_term), -1.0);
}

/// Non-saturating generator loss mean(-log p_fake).
inline Var gan_g_loss(Var p_fake) {
  detail::require_probabilities(p_fake.value(), "gan_g_loss");
  return scale(mean(log(clamp(p_fake, kProbabilityClamp, 1.0 - kProbabilityClamp))), -1.0);
}

}  // namespace eblab
