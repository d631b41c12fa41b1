#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "eblab/data.hpp"
#include "eblab/metrics.hpp"

using namespace eblab;

namespace {

// Direct formula with no sorting; agrees with the library up to rounding.
double iprime_naive(const Tensor& p) {
  const std::size_t n = p.rows(), c = p.cols();
  std::vector<double> marg(c, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < c; ++k) marg[k] += p.at(i, k) / static_cast<double>(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < c; ++k)
      if (marg[k] > 0) acc += marg[k] * std::log(marg[k] / std::max(p.at(i, k), 1e-8));
  return acc / static_cast<double>(n);
}

Tensor random_posteriors(std::size_t n, std::size_t c, Rng& rng, double temperature = 3.0) {
  Tensor p({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0;
    for (std::size_t k = 0; k < c; ++k) s += (p.at(i, k) = std::exp(temperature * rng.normal()));
    for (std::size_t k = 0; k < c; ++k) p.at(i, k) /= s;
  }
  return p;
}

}  // namespace

TEST(Kl, TwoPointExample) {
  const std::vector<double> p{0.5, 0.5}, q{0.9, 0.1};
  const double expected = 0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1);
  EXPECT_NEAR(kl_divergence(p, q), expected, 1e-15);
  EXPECT_NEAR(kl_divergence(p, q), 0.5108, 1e-4);
  EXPECT_EQ(kl_divergence(p, p), 0.0);
}

TEST(Kl, ZeroEntriesAndClamp) {
  const std::vector<double> p{1.0, 0.0}, q{0.0, 1.0};
  EXPECT_NEAR(kl_divergence(p, q), -std::log(kPosteriorClamp), 1e-12);
  EXPECT_EQ(kl_divergence(q, std::vector<double>{0.3, 0.7}), std::log(1.0 / 0.7));
  EXPECT_THROW(kl_divergence(p, std::vector<double>{0.5}), std::invalid_argument);
  EXPECT_THROW(kl_divergence(std::vector<double>{0.5, 0.6}, q), std::invalid_argument);
}

TEST(InceptionScore, CollapsedSetIsZero) {
  Tensor p({50, 10});
  for (std::size_t i = 0; i < 50; ++i) p.at(i, 3) = 1.0;
  EXPECT_NEAR(modified_inception_score(p), 0.0, 1e-12);
  Tensor soft({7, 3});
  for (std::size_t i = 0; i < 7; ++i) {
    soft.at(i, 0) = 0.2;
    soft.at(i, 1) = 0.3;
    soft.at(i, 2) = 0.5;
  }
  EXPECT_NEAR(modified_inception_score(soft), 0.0, 1e-12);
}

TEST(InceptionScore, TwoSampleExample) {
  const Tensor p = Tensor::matrix({{0.9, 0.1}, {0.1, 0.9}});
  EXPECT_NEAR(modified_inception_score(p), 0.5108, 1e-4);
}

TEST(InceptionScore, OneHotSpreadIsSetByTheClamp) {
  Tensor p({10, 10});
  for (std::size_t i = 0; i < 10; ++i) p.at(i, i) = 1.0;
  // KL(uniform || clamped one-hot) = ln 0.1 - 0.9 ln 1e-8, well above ln 10.
  const double expected = std::log(0.1) - 0.9 * std::log(kPosteriorClamp);
  EXPECT_NEAR(modified_inception_score(p), expected, 1e-9);
}

TEST(InceptionScore, MatchesNaiveFormula) {
  Rng rng(31);
  for (int t = 0; t < 100; ++t) {
    const std::size_t n = 1 + rng.index(40), c = 2 + rng.index(9);
    const Tensor p = random_posteriors(n, c, rng);
    const double s = modified_inception_score(p);
    EXPECT_NEAR(s, iprime_naive(p), 1e-12);
    EXPECT_GE(s, -1e-15);
  }
}

TEST(InceptionScore, SoftPosteriorsStayBelowLogC) {
  // Holds for soft classifiers only; see OneHotSpreadIsSetByTheClamp.
  Rng rng(34);
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + rng.index(40), c = 2 + rng.index(9);
    const Tensor p = random_posteriors(n, c, rng, 1.0);
    EXPECT_LE(modified_inception_score(p), std::log(static_cast<double>(c)) + 1e-6);
  }
}

TEST(InceptionScore, OrderInvarianceIsBitExact) {
  Rng rng(32);
  const Tensor p = random_posteriors(200, 10, rng);
  const double s = modified_inception_score(p);
  std::vector<std::size_t> perm(200);
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  for (int t = 0; t < 20; ++t) {
    for (std::size_t i = perm.size() - 1; i > 0; --i) std::swap(perm[i], perm[rng.index(i + 1)]);
    Tensor q({200, 10});
    for (std::size_t i = 0; i < 200; ++i)
      for (std::size_t k = 0; k < 10; ++k) q.at(i, k) = p.at(perm[i], k);
    EXPECT_EQ(modified_inception_score(q), s);
  }
}

TEST(InceptionScore, RejectsBadInput) {
  EXPECT_THROW(modified_inception_score(Tensor({0, 3})), std::invalid_argument);
  EXPECT_THROW(modified_inception_score(Tensor::matrix({{0.5, 0.6}})), std::invalid_argument);
}

TEST(Classifier, LearnsSeparableClusters) {
  Rng rng(33);
  Dataset ds;
  ds.samples = Tensor({600, 2});
  for (std::size_t i = 0; i < 600; ++i) {
    const int k = static_cast<int>(i % 3);
    ds.samples.at(i, 0) = std::clamp(0.6 * (k - 1) + 0.05 * rng.normal(), -1.0, 1.0);
    ds.samples.at(i, 1) = std::clamp(0.3 * k - 0.3 + 0.05 * rng.normal(), -1.0, 1.0);
    ds.labels.push_back(k);
  }
  ClassifierOptions opt;
  opt.steps = 400;
  opt.hidden = 16;
  ProxyClassifier clf = train_proxy_classifier(ds, 3, opt);
  EXPECT_GT(clf.accuracy(ds), 0.99);
  const Tensor p = clf.posteriors(ds.samples);
  for (std::size_t i = 0; i < p.rows(); ++i) {
    double s = 0;
    for (double v : p.row(i)) s += v;
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  const auto path = std::filesystem::temp_directory_path() / "eblab_clf.ckpt";
  clf.save(path);
  ProxyClassifier back = ProxyClassifier::load(path);
  EXPECT_EQ(back.posteriors(ds.samples), p);
  std::filesystem::remove(path);
}

TEST(Histogram, BinsAndPercentages) {
  const std::vector<double> scores{-0.5, 0.0, 0.05, 0.5, 0.99, 1.0, 7.0};
  const auto h = build_histogram(scores, {0.0, 1.0, 10});
  ASSERT_EQ(h.bins(), 10u);
  EXPECT_EQ(h.total, scores.size());
  EXPECT_EQ(h.counts[0], 3u);  // -0.5 clamps down, 0.0 and 0.05
  EXPECT_EQ(h.counts[5], 1u);
  EXPECT_EQ(h.counts[9], 3u);  // 0.99, 1.0 and 7.0
  double pct = 0;
  for (std::size_t i = 0; i < h.bins(); ++i) pct += h.percent(i);
  EXPECT_NEAR(pct, 100.0, 1e-12);
  EXPECT_EQ(h.edges.front(), 0.0);
  EXPECT_EQ(h.edges.back(), 1.0);
  EXPECT_THROW(build_histogram(scores, {1.0, 1.0, 10}), std::invalid_argument);
  EXPECT_THROW(build_histogram(std::vector<double>{NAN}, {}), std::invalid_argument);
  EXPECT_EQ(build_histogram(std::vector<double>{}, {}).percent(0), 0.0);
}

TEST(ModeCoverage, CountsNearbySamples) {
  const Tensor centers = Tensor::matrix({{0.5, 0.0}, {-0.5, 0.0}, {0.0, 0.5}, {0.0, -0.5}});
  Tensor s({40, 2});
  for (std::size_t i = 0; i < 40; ++i) {
    const std::size_t k = i < 30 ? i % 2 : 2;  // mode 3 empty, mode 2 thin
    s.at(i, 0) = centers.at(k, 0) + 0.01;
    s.at(i, 1) = centers.at(k, 1);
  }
  const auto cov = mode_coverage(s, centers, 0.1);
  EXPECT_EQ(cov.counts, (std::vector<std::size_t>{15, 15, 10, 0}));
  EXPECT_EQ(cov.covered, 3u);
  EXPECT_EQ(mode_coverage(s, centers, 0.1, 1.1).covered, 2u);  // 10 < 1.1 * 10
  EXPECT_EQ(mode_coverage(s, centers, 0.005).covered, 0u);
  EXPECT_THROW(mode_coverage(s, Tensor({2, 3}), 0.1), ShapeError);
}

TEST(ModeCoverage, SamplesAtCenters) {
  RingMixtureSpec spec;
  const Tensor c = ring_centers(spec);
  EXPECT_EQ(mode_coverage(c, c, 0.01).covered, 8u);
  Tensor one({50, 2});
  for (std::size_t i = 0; i < 50; ++i) {
    one.at(i, 0) = c.at(5, 0);
    one.at(i, 1) = c.at(5, 1);
  }
  const auto cov = mode_coverage(one, c, 0.01);
  EXPECT_EQ(cov.covered, 1u);
  EXPECT_EQ(cov.counts[5], 50u);
}

// Points on a circle of radius rho around the origin: distance to the nearest
// of K evenly spaced centers on radius R follows from the angle gap alone.
TEST(ModeCoverage, RadiusSweepMatchesAngularCount) {
  RingMixtureSpec spec;
  const Tensor c = ring_centers(spec);
  const double big_r = std::hypot(c.at(0, 0), c.at(0, 1));
  const double rho = 0.95 * big_r;
  const std::size_t n = 4000, k = 8;
  const double pi = std::acos(-1.0);
  Rng rng(8);
  Tensor s({n, 2});
  std::vector<double> gap(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double th = rng.uniform(0.0, 2.0 * pi);
    s.at(i, 0) = rho * std::cos(th);
    s.at(i, 1) = rho * std::sin(th);
    const double base = std::atan2(c.at(0, 1), c.at(0, 0));
    double rel = std::fmod(th - base + 4.0 * pi, 2.0 * pi / k);
    gap[i] = std::min(rel, 2.0 * pi / k - rel);
  }
  for (double radius : {0.05, 0.1, 0.2, 0.3, 0.5}) {
    std::size_t inside = 0;
    for (double g : gap) inside += rho * rho + big_r * big_r - 2.0 * rho * big_r * std::cos(g) <= radius * radius;
    const auto cov = mode_coverage(s, c, radius);
    std::size_t total = 0;
    for (auto v : cov.counts) total += v;
    EXPECT_EQ(total, inside) << "radius " << radius;
  }
}
