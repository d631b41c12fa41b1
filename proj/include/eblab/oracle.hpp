#pragma once

// Randomized certification suites over the discrete equilibrium model, as
// run by the `oracle` subcommand.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eblab/equilibrium.hpp"
#include "eblab/rng.hpp"

namespace eblab {

struct SuiteResult {
  std::string name;
  std::size_t trials = 0;
  std::size_t failures = 0;
  double max_error = 0.0;
  double seconds = 0.0;
  std::string first_failure;

  bool passed() const { return failures == 0 && trials > 0; }
};

struct SuiteOptions {
  std::size_t trials = 0;  ///< 0: the suite's default
  double tol = kDefaultOracleTol;
  std::uint64_t seed = 2024;
};

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

inline void fail(SuiteResult& r, const std::string& what) {
  if (r.failures++ == 0) r.first_failure = what;
}

/// Random pair on k points; roughly a quarter of the pairs are equal.
inline std::pair<DiscreteDensity, DiscreteDensity> random_pair(Rng& rng, std::size_t k, bool force_equal) {
  auto p = DiscreteDensity::random(k, rng, 0.15);
  if (force_equal) return {p, p};
  return {p, DiscreteDensity::random(k, rng, 0.15)};
}

}  // namespace detail

/// phi_argmin against a dense y-grid on [0, 2m].
inline SuiteResult lemma1_suite(const SuiteOptions& opt = {}) {
  SuiteResult r;
  r.name = "lemma1";
  const auto t0 = detail::Clock::now();
  Rng rng(opt.seed);
  const std::size_t trials = opt.trials ? opt.trials : 1000;
  const double value_tol = std::max(opt.tol, 1e-9);
  for (std::size_t t = 0; t < trials; ++t) {
    const double a = rng.uniform(0.0, 10.0), b = rng.uniform(0.0, 10.0);
    for (double m : {1.0, 10.0}) {
      const auto n = static_cast<std::size_t>(std::llround(2.0 * m / 1e-3));
      double best = INFINITY;
      for (std::size_t j = 0; j <= n; ++j) best = std::min(best, phi(a, b, m, 2.0 * m * static_cast<double>(j) / static_cast<double>(n)));
      const double err = std::abs(phi_argmin(a, b, m).value - best);
      r.max_error = std::max(r.max_error, err);
      ++r.trials;
      if (err > value_tol) detail::fail(r, "a=" + std::to_string(a) + " b=" + std::to_string(b));
    }
  }
  r.seconds = detail::seconds_since(t0);
  return r;
}

/// The two Lemma 2 sets vanish together on random pairs, a quarter forced equal.
inline SuiteResult lemma2_suite(const SuiteOptions& opt = {}) {
  SuiteResult r;
  r.name = "lemma2";
  const auto t0 = detail::Clock::now();
  Rng rng(opt.seed);
  const std::size_t trials = opt.trials ? opt.trials : 100000;
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t k = 1 + rng.index(kMaxCheckPoints);
    const auto [p, q] = detail::random_pair(rng, k, t % 4 == 0);
    const auto res = lemma2_check(p, q, opt.tol);
    ++r.trials;
    if (!res.equivalent) detail::fail(r, "trial " + std::to_string(t));
  }
  r.seconds = detail::seconds_since(t0);
  return r;
}

/// Equal pairs reach min V = m; unequal pairs fall strictly below m and the
/// best response matches the brute-force minimum.
inline SuiteResult theorem1_suite(const SuiteOptions& opt = {}) {
  SuiteResult r;
  r.name = "thm1";
  const auto t0 = detail::Clock::now();
  Rng rng(opt.seed);
  const std::size_t trials = opt.trials ? opt.trials : 200;
  const double m = 10.0, step = 1e-3;
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t k = 1 + rng.index(8);
    const auto p = DiscreteDensity::random(k, rng, 0.15);
    const auto bf = brute_force_min_V(p, p, m, step, 0.5);
    const auto rep = check_theorem1(p, p, m, opt.tol);
    const double err = std::abs(bf.v_min - m);
    r.max_error = std::max(r.max_error, err);
    ++r.trials;
    if (err > opt.tol || !rep.thm1_certified || bf.separability_confirmed == false) {
      detail::fail(r, "equal pair, trial " + std::to_string(t));
    }
  }
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t k = 2 + rng.index(7);
    const auto p = DiscreteDensity::random(k, rng, 0.15);
    auto q = DiscreteDensity::random(k, rng, 0.15);
    if (densities_equal(p, q, opt.tol)) continue;
    const auto bf = brute_force_min_V(p, q, m, step, 0.5);
    const auto rep = check_theorem1(p, q, m, opt.tol);
    const double err = std::abs(rep.v - bf.v_min);
    r.max_error = std::max(r.max_error, err);
    ++r.trials;
    if (!(bf.v_min < m) || err > step || rep.thm1_certified || !rep.thm1_consistent) {
      detail::fail(r, "unequal pair, trial " + std::to_string(t));
    }
  }
  r.seconds = detail::seconds_since(t0);
  return r;
}

/// Constant discriminators at equilibrium: V = m and generator indifference.
inline SuiteResult theorem2_suite(const SuiteOptions& opt = {}) {
  SuiteResult r;
  r.name = "thm2";
  const auto t0 = detail::Clock::now();
  Rng rng(opt.seed);
  const std::size_t trials = opt.trials ? opt.trials : 50;
  for (std::size_t t = 0; t < trials; ++t) {
    const std::size_t k = 1 + rng.index(kMaxCheckPoints);
    const auto p = DiscreteDensity::random(k, rng, t % 2 ? 0.0 : 0.2);
    Theorem2Options o;
    o.tol = opt.tol;
    o.seed = rng.next_u64();
    const auto rep = check_theorem2(p, 10.0, o);
    ++r.trials;
    r.max_error = std::max(r.max_error, std::abs(rep.v - 10.0));
    if (!rep.thm2_certified) detail::fail(r, "trial " + std::to_string(t) + ": " + rep.detail);
  }
  r.seconds = detail::seconds_since(t0);
  return r;
}

inline std::vector<SuiteResult> run_oracle_suites(const std::string& which, const SuiteOptions& opt = {}) {
  std::vector<SuiteResult> out;
  if (which == "lemma1" || which == "all") out.push_back(lemma1_suite(opt));
  if (which == "lemma2" || which == "all") out.push_back(lemma2_suite(opt));
  if (which == "thm1" || which == "all") out.push_back(theorem1_suite(opt));
  if (which == "thm2" || which == "all") out.push_back(theorem2_suite(opt));
  if (out.empty()) throw std::invalid_argument("unknown oracle suite '" + which + "'");
  return out;
}

inline nlohmann::json to_json(const SuiteResult& r) {
  return {{"suite", r.name},         {"trials", r.trials},   {"failures", r.failures},
          {"max_error", r.max_error}, {"seconds", r.seconds}, {"passed", r.passed()},
          {"first_failure", r.first_failure}};
}

}  // namespace eblab
