#pragma once

// Discrete-sample-space analogues of the discriminator and generator
// objectives,
//
//   V(p_G, D) = sum_k p_data(k) D_k + p_G(k) [m - D_k]^+
//   U(p_G, D) = sum_k p_G(k) D_k
//
// with exact best responses and brute-force oracles. On a finite space the
// equilibrium statements become finite checks: the best response to p_G is
// pointwise m-or-0, min_D V = m exactly when p_G = p_data, and at
// p_G = p_data every constant D = gamma in [0,m] is a best response against
// which the generator is indifferent.
//
// V is separable over points, so per-point minimization is exact; the full
// product search exists only to confirm that and is capped at K <= 4.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "eblab/rng.hpp"

namespace eblab {

inline constexpr std::size_t kMaxCheckPoints = 16;
inline constexpr std::size_t kMaxProductSearchPoints = 4;
inline constexpr double kDefaultOracleTol = 1e-12;

/// Probability vector on K points.
class DiscreteDensity {
 public:
  DiscreteDensity() = default;

  explicit DiscreteDensity(std::vector<double> p, double tol = kDefaultOracleTol) : p_(std::move(p)) {
    if (p_.empty()) throw std::invalid_argument("density: empty support");
    double s = 0.0;
    for (double v : p_) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("density: entries must be finite and >= 0");
      s += v;
    }
    if (std::abs(s - 1.0) > tol) throw std::invalid_argument("density: entries must sum to 1");
  }

  /// Normalizes non-negative weights.
  static DiscreteDensity from_weights(std::vector<double> w) {
    double s = 0.0;
    for (double v : w) s += v;
    if (!(s > 0.0)) throw std::invalid_argument("density: weights must have positive mass");
    for (double& v : w) v /= s;
    return DiscreteDensity(std::move(w), 1e-12);
  }

  static DiscreteDensity uniform(std::size_t k) { return DiscreteDensity(std::vector<double>(k, 1.0 / static_cast<double>(k))); }

  /// Random density on k points; `zero_prob` chance for each point to carry
  /// no mass (at least one point keeps mass).
  static DiscreteDensity random(std::size_t k, Rng& rng, double zero_prob = 0.0) {
    std::vector<double> w(k);
    bool any = false;
    for (auto& v : w) {
      v = rng.bernoulli(zero_prob) ? 0.0 : rng.uniform() + 1e-3;
      any = any || v > 0.0;
    }
    if (!any) w[rng.index(k)] = 1.0;
    return from_weights(std::move(w));
  }

  std::size_t size() const { return p_.size(); }
  double operator[](std::size_t k) const { return p_[k]; }
  const std::vector<double>& values() const { return p_; }

 private:
  std::vector<double> p_;
};

/// D restricted to K points; every value finite and >= 0.
class DiscreteDiscriminator {
 public:
  DiscreteDiscriminator() = default;
  explicit DiscreteDiscriminator(std::vector<double> d) : d_(std::move(d)) {
    for (double v : d_) {
      if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("discriminator: values must be finite and >= 0");
    }
  }
  static DiscreteDiscriminator constant(std::size_t k, double gamma) { return DiscreteDiscriminator(std::vector<double>(k, gamma)); }

  std::size_t size() const { return d_.size(); }
  double operator[](std::size_t k) const { return d_[k]; }
  const std::vector<double>& values() const { return d_; }

 private:
  std::vector<double> d_;
};

// ---------------------------------------------------------------------------
// phi(y) = a y + b [m - y]^+
// ---------------------------------------------------------------------------

struct PhiMinimum {
  double y = 0.0;
  double value = 0.0;
  bool unique = true;
};

inline double phi(double a, double b, double m, double y) { return a * y + b * std::max(0.0, m - y); }

/// Minimizer of phi on [0, inf): m when a < b, otherwise 0. Ties (a == b)
/// and a == 0 have non-unique minimizers and are flagged.
inline PhiMinimum phi_argmin(double a, double b, double m) {
  if (!(a >= 0.0 && b >= 0.0)) throw std::invalid_argument("phi_argmin: a and b must be >= 0");
  if (!(m > 0.0)) throw std::invalid_argument("phi_argmin: m must be > 0");
  PhiMinimum r;
  r.y = a < b ? m : 0.0;
  r.value = phi(a, b, m, r.y);
  r.unique = !(a == b || a == 0.0);
  return r;
}

// ---------------------------------------------------------------------------
// V, U and best responses
// ---------------------------------------------------------------------------

namespace detail {
inline void require_same_size(std::size_t a, std::size_t b, const char* op) {
  if (a != b) throw std::invalid_argument(std::string(op) + ": sample-space sizes differ");
}
}  // namespace detail

inline double discrete_V(const DiscreteDensity& p_data, const DiscreteDensity& p_g, const DiscreteDiscriminator& d,
                         double m) {
  detail::require_same_size(p_data.size(), p_g.size(), "discrete_V");
  detail::require_same_size(p_data.size(), d.size(), "discrete_V");
  double v = 0.0;
  for (std::size_t k = 0; k < d.size(); ++k) v += p_data[k] * d[k] + p_g[k] * std::max(0.0, m - d[k]);
  return v;
}

inline double discrete_U(const DiscreteDensity& p_g, const DiscreteDiscriminator& d) {
  detail::require_same_size(p_g.size(), d.size(), "discrete_U");
  double u = 0.0;
  for (std::size_t k = 0; k < d.size(); ++k) u += p_g[k] * d[k];
  return u;
}

/// Pointwise Lemma-1 rule: D_k = m where p_data(k) < p_G(k), else 0.
inline DiscreteDiscriminator best_response_D(const DiscreteDensity& p_data, const DiscreteDensity& p_g, double m) {
  detail::require_same_size(p_data.size(), p_g.size(), "best_response_D");
  std::vector<double> d(p_data.size());
  for (std::size_t k = 0; k < d.size(); ++k) d[k] = phi_argmin(p_data[k], p_g[k], m).y;
  return DiscreteDiscriminator(std::move(d));
}

/// Grid {0, m/n, ..., m} with n = round(m / step); endpoints are exact.
inline std::vector<double> margin_grid(double m, double step) {
  if (!(step > 0.0) || !(m > 0.0)) throw std::invalid_argument("margin_grid: m and step must be > 0");
  const auto n = static_cast<std::size_t>(std::max(1.0, std::round(m / step)));
  if (n > 100'000'000) throw std::invalid_argument("margin_grid: grid too fine");
  std::vector<double> g(n + 1);
  for (std::size_t j = 0; j <= n; ++j) g[j] = m * static_cast<double>(j) / static_cast<double>(n);
  g[n] = m;
  return g;
}

struct BruteForceResult {
  double v_min = 0.0;
  DiscreteDiscriminator argmin;
  /// Set when the product search ran and agreed with the per-point search.
  std::optional<bool> separability_confirmed;
  double grid_step = 0.0;
};

/// Exhaustive search over all of {0,...,m}^K. Infeasible sizes are errors.
inline BruteForceResult product_search_min_V(const DiscreteDensity& p_data, const DiscreteDensity& p_g, double m,
                                             double grid_step, std::size_t max_evaluations = 20'000'000) {
  detail::require_same_size(p_data.size(), p_g.size(), "product_search_min_V");
  const std::size_t k = p_data.size();
  if (k > kMaxProductSearchPoints) throw std::invalid_argument("product_search_min_V: K > 4 is infeasible");
  const auto grid = margin_grid(m, grid_step);
  double total = 1.0;
  for (std::size_t i = 0; i < k; ++i) total *= static_cast<double>(grid.size());
  if (total > static_cast<double>(max_evaluations)) {
    throw std::invalid_argument("product_search_min_V: grid^K too large");
  }
  std::vector<std::size_t> idx(k, 0);
  std::vector<double> d(k), best_d(k);
  double best = INFINITY;
  for (;;) {
    double v = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      d[i] = grid[idx[i]];
      v += phi(p_data[i], p_g[i], m, d[i]);
    }
    if (v < best) {
      best = v;
      best_d = d;
    }
    std::size_t i = 0;
    while (i < k && ++idx[i] == grid.size()) idx[i++] = 0;
    if (i == k) break;
  }
  return {best, DiscreteDiscriminator(best_d), std::nullopt, grid_step};
}

/// Per-point exhaustive minimization of V over D_k in {0, step, ..., m}. For
/// K <= 4 the full product space is searched too when it fits the budget.
inline BruteForceResult brute_force_min_V(const DiscreteDensity& p_data, const DiscreteDensity& p_g, double m,
                                          double grid_step, double product_step = 0.0) {
  detail::require_same_size(p_data.size(), p_g.size(), "brute_force_min_V");
  if (p_data.size() > kMaxCheckPoints) throw std::invalid_argument("brute_force_min_V: K > 16 is infeasible");
  const auto grid = margin_grid(m, grid_step);
  std::vector<double> d(p_data.size());
  double v = 0.0;
  for (std::size_t k = 0; k < d.size(); ++k) {
    double best = INFINITY;
    for (double y : grid) {
      const double f = phi(p_data[k], p_g[k], m, y);
      if (f < best) {
        best = f;
        d[k] = y;
      }
    }
    v += best;
  }
  BruteForceResult r{v, DiscreteDiscriminator(d), std::nullopt, grid_step};
  if (p_data.size() <= kMaxProductSearchPoints) {
    const double step = product_step > 0.0 ? product_step : grid_step;
    try {
      const auto full = product_search_min_V(p_data, p_g, m, step);
      // The product grid is a coarsening or the same grid; both contain 0 and
      // m, which hold every minimizer.
      r.separability_confirmed = std::abs(full.v_min - v) <= 1e-12 * std::max(1.0, m);
    } catch (const std::invalid_argument&) {
      // product space over budget for this step; separability left unchecked
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Lemma 2 and theorem checks
// ---------------------------------------------------------------------------

struct Lemma2Result {
  std::size_t measure_lt = 0;  ///< #{k : p_k < q_k}
  std::size_t measure_ne = 0;  ///< #{k : p_k != q_k}
  bool equivalent = true;      ///< both zero or both non-zero
};

/// Counts the two indicator sets with unit weights. Comparisons treat
/// differences within `tol` as equal.
inline Lemma2Result lemma2_check(const DiscreteDensity& p, const DiscreteDensity& q, double tol = kDefaultOracleTol) {
  detail::require_same_size(p.size(), q.size(), "lemma2_check");
  Lemma2Result r;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (q[k] - p[k] > tol) ++r.measure_lt;
    if (std::abs(p[k] - q[k]) > tol) ++r.measure_ne;
  }
  r.equivalent = (r.measure_lt == 0) == (r.measure_ne == 0);
  return r;
}

inline bool densities_equal(const DiscreteDensity& p, const DiscreteDensity& q, double tol = kDefaultOracleTol) {
  return lemma2_check(p, q, tol).measure_ne == 0;
}

struct EquilibriumReport {
  double v = 0.0;
  double u = 0.0;
  DiscreteDiscriminator best_response;
  bool constant_gamma = false;

  // Theorem 1
  bool densities_equal = false;
  bool v_min_equals_m = false;
  bool thm1_forward = false;   ///< equal densities => min V = m
  bool thm1_converse = false;  ///< min V = m => equal densities
  bool thm1_consistent = false;  ///< both directions hold for this pair
  bool thm1_certified = false;   ///< equilibrium certified: equal densities and min V = m
  bool best_response_bounded = false;  ///< D*_k <= m everywhere

  // Theorem 2
  std::size_t gammas_checked = 0;
  bool all_gamma_v_equals_m = false;
  bool all_gamma_best_response = false;
  bool generator_indifferent = false;
  bool carveout_ok = false;
  bool nonconstant_refuted = false;
  bool thm2_certified = false;

  std::string detail;
};

/// Certifies both directions of "min_D V = m iff p_G = p_data" on one pair.
inline EquilibriumReport check_theorem1(const DiscreteDensity& p_data, const DiscreteDensity& p_g, double m,
                                        double tol = kDefaultOracleTol) {
  if (p_data.size() > kMaxCheckPoints) throw std::invalid_argument("check_theorem1: K > 16");
  EquilibriumReport r;
  r.best_response = best_response_D(p_data, p_g, m);
  r.v = discrete_V(p_data, p_g, r.best_response, m);
  r.u = discrete_U(p_g, r.best_response);
  r.densities_equal = densities_equal(p_data, p_g, tol);
  r.v_min_equals_m = std::abs(r.v - m) <= tol;
  r.thm1_forward = !r.densities_equal || r.v_min_equals_m;
  r.thm1_converse = !r.v_min_equals_m || r.densities_equal;
  r.best_response_bounded = std::all_of(r.best_response.values().begin(), r.best_response.values().end(),
                                        [m](double d) { return d <= m; });
  const auto& bv = r.best_response.values();
  r.constant_gamma = std::adjacent_find(bv.begin(), bv.end(), std::not_equal_to<>()) == bv.end();
  r.thm1_consistent = r.thm1_forward && r.thm1_converse;
  r.thm1_certified = r.densities_equal && r.v_min_equals_m && r.best_response_bounded;
  return r;
}

struct Theorem2Options {
  double tol = kDefaultOracleTol;
  std::size_t gamma_count = 11;
  std::size_t perturbations = 100;
  std::uint64_t seed = 7;
};

/// With p_G = p_data: every constant D = gamma (gamma sampled evenly over
/// [0,m]) attains V = m and is a best response, the generator objective U is
/// unchanged under arbitrary generator densities, arbitrary values in [0,m]
/// on zero-density points keep V = m, and a non-constant D on the support
/// always admits a strictly better generator.
inline EquilibriumReport check_theorem2(const DiscreteDensity& p_data, double m, const Theorem2Options& opt = {}) {
  const std::size_t k = p_data.size();
  if (k > kMaxCheckPoints) throw std::invalid_argument("check_theorem2: K > 16");
  if (opt.gamma_count < 2) throw std::invalid_argument("check_theorem2: need at least two gamma values");
  EquilibriumReport r;
  Rng rng(opt.seed);
  const DiscreteDensity& p_g = p_data;
  const double v_min = discrete_V(p_data, p_g, best_response_D(p_data, p_g, m), m);

  r.all_gamma_v_equals_m = true;
  r.all_gamma_best_response = true;
  r.generator_indifferent = true;
  r.carveout_ok = true;
  for (std::size_t i = 0; i < opt.gamma_count; ++i) {
    const double gamma = m * static_cast<double>(i) / static_cast<double>(opt.gamma_count - 1);
    const auto d = DiscreteDiscriminator::constant(k, gamma);
    const double v = discrete_V(p_data, p_g, d, m);
    r.all_gamma_v_equals_m = r.all_gamma_v_equals_m && std::abs(v - m) <= opt.tol;
    r.all_gamma_best_response = r.all_gamma_best_response && v <= v_min + opt.tol;
    const double u_eq = discrete_U(p_g, d);
    for (std::size_t t = 0; t < opt.perturbations; ++t) {
      const auto q = DiscreteDensity::random(k, rng, 0.2);
      r.generator_indifferent = r.generator_indifferent && std::abs(discrete_U(q, d) - u_eq) <= opt.tol;
    }
    // Off-support values are free within [0, m].
    std::vector<double> free_d(k, gamma);
    for (std::size_t j = 0; j < k; ++j)
      if (p_data[j] == 0.0) free_d[j] = rng.uniform(0.0, m);
    r.carveout_ok = r.carveout_ok && std::abs(discrete_V(p_data, p_g, DiscreteDiscriminator(free_d), m) - m) <= opt.tol;
    ++r.gammas_checked;
    if (i == 0) {
      r.v = v;
      r.u = u_eq;
      r.best_response = d;
    }
  }

  // Non-constant D on the support: a point mass at its smallest value lowers U.
  std::vector<std::size_t> support;
  for (std::size_t j = 0; j < k; ++j)
    if (p_data[j] > 0.0) support.push_back(j);
  r.nonconstant_refuted = true;
  if (support.size() >= 2) {
    for (std::size_t t = 0; t < opt.perturbations; ++t) {
      std::vector<double> d(k, 0.0);
      for (std::size_t j : support) d[j] = rng.uniform(0.0, m);
      d[support[0]] = 0.0;
      d[support[1]] = m;  // guarantees non-constant
      const auto dd = DiscreteDiscriminator(d);
      std::size_t arg = support[0];
      for (std::size_t j : support)
        if (d[j] < d[arg]) arg = j;
      std::vector<double> point(k, 0.0);
      point[arg] = 1.0;
      const double improved = discrete_U(DiscreteDensity(point), dd);
      r.nonconstant_refuted = r.nonconstant_refuted && improved < discrete_U(p_g, dd) - opt.tol;
    }
  }
  r.constant_gamma = true;
  r.thm2_certified = r.all_gamma_v_equals_m && r.all_gamma_best_response && r.generator_indifferent &&
                     r.carveout_ok && r.nonconstant_refuted;
  return r;
}

}  // namespace eblab
