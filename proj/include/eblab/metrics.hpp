#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "eblab/autodiff.hpp"
#include "eblab/data.hpp"
#include "eblab/nets.hpp"
#include "eblab/optim.hpp"
#include "eblab/tensor.hpp"

namespace eblab {

inline constexpr double kPosteriorClamp = 1e-8;

namespace detail {

inline void require_distribution(std::span<const double> p, const char* what) {
  double s = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument(std::string(what) + ": negative or non-finite entry");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-6) throw std::invalid_argument(std::string(what) + ": entries do not sum to 1");
}

/// Order-independent sum: the multiset is sorted before accumulation, so any
/// permutation of the input gives a bit-identical result.
inline double sorted_sum(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += x;
  return s;
}

}  // namespace detail

/// KL(p || q) in nats with q clamped below at 1e-8; p_i = 0 terms vanish.
inline double kl_divergence(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size() || p.empty()) throw std::invalid_argument("kl_divergence: size mismatch");
  detail::require_distribution(p, "kl_divergence p");
  detail::require_distribution(q, "kl_divergence q");
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    kl += p[i] * std::log(p[i] / std::max(q[i], kPosteriorClamp));
  }
  return kl;
}

/// I' = mean_x KL(p(y) || p(y|x)), p(y) = mean_x p(y|x). `posteriors` is
/// [n, C], one distribution per sample. Invariant to sample order, bitwise.
inline double modified_inception_score(const Tensor& posteriors) {
  if (posteriors.rank() != 2 || posteriors.rows() == 0) throw std::invalid_argument("inception score: need [n,C] posteriors");
  const std::size_t n = posteriors.rows(), c = posteriors.cols();
  std::vector<double> marginal(c);
  std::vector<double> column(n);
  for (std::size_t k = 0; k < c; ++k) {
    for (std::size_t i = 0; i < n; ++i) column[i] = posteriors.at(i, k);
    marginal[k] = detail::sorted_sum(column) / static_cast<double>(n);
  }
  std::vector<double> kls(n);
  for (std::size_t i = 0; i < n; ++i) kls[i] = kl_divergence(marginal, posteriors.row(i));
  return detail::sorted_sum(std::move(kls)) / static_cast<double>(n);
}

// ---------------------------------------------------------------------------
// Proxy classifier
// ---------------------------------------------------------------------------

struct ClassifierOptions {
  std::size_t hidden = 128;
  std::size_t steps = 3000;
  std::size_t batch = 128;
  double lr = 0.001;
  std::uint64_t seed = 11;
};

/// Two-layer MLP producing class posteriors; stands in for an image classifier.
class ProxyClassifier {
 public:
  ProxyClassifier() = default;
  ProxyClassifier(std::size_t input_dim, std::size_t hidden, std::size_t classes) {
    const LayerSpec specs[] = {{hidden, false, false, Activation::kRelu, false},
                               {classes, false, false, Activation::kNone, false}};
    mlp_ = Mlp(input_dim, specs);
  }

  std::size_t input_dim() const { return mlp_.in_dim(); }
  std::size_t classes() const { return mlp_.out_dim(); }
  Mlp& mlp() { return mlp_; }

  Var log_posteriors(Graph& g, std::span<const Var> params, Var x) {
    ForwardMode mode;
    mode.training = false;
    return log_softmax(mlp_.forward(g, params, x, mode));
  }

  /// [n, C] class probabilities.
  Tensor posteriors(const Tensor& x) {
    Graph g;
    auto params = mlp_.bind(g, false);
    Tensor lp = log_posteriors(g, params, g.constant(x)).value();
    for (double& v : lp.values()) v = std::exp(v);
    return lp;
  }

  std::vector<int> predict(const Tensor& x) {
    const Tensor p = posteriors(x);
    std::vector<int> out(p.rows());
    for (std::size_t i = 0; i < p.rows(); ++i) {
      auto r = p.row(i);
      out[i] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
    }
    return out;
  }

  double accuracy(const Dataset& ds) {
    if (!ds.has_labels()) throw std::invalid_argument("accuracy: dataset has no labels");
    const auto pred = predict(ds.samples);
    std::size_t ok = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) ok += pred[i] == ds.labels[i];
    return static_cast<double>(ok) / static_cast<double>(pred.size());
  }

  void save(const std::filesystem::path& path) const { save_checkpoint(path, mlp_.state("clf.")); }

  static ProxyClassifier load(const std::filesystem::path& path) {
    const auto tensors = load_checkpoint(path);
    auto shape_of = [&](const std::string& name) -> const Shape& {
      for (const auto& [k, t] : tensors)
        if (k == name) return t.shape();
      throw std::runtime_error("classifier checkpoint: missing " + name);
    };
    const Shape& w0 = shape_of("clf.layer0.weight");
    const Shape& w1 = shape_of("clf.layer1.weight");
    ProxyClassifier c(w0[0], w0[1], w1[1]);
    c.mlp_.load_state(tensors, "clf.");
    return c;
  }

 private:
  Mlp mlp_;
};

/// Cross-entropy training with Adam on a labelled dataset.
inline ProxyClassifier train_proxy_classifier(const Dataset& train, std::size_t classes,
                                              const ClassifierOptions& opt = {}) {
  if (!train.has_labels()) throw std::invalid_argument("train_proxy_classifier: labels required");
  Rng rng(opt.seed);
  ProxyClassifier clf(train.dim(), opt.hidden, classes);
  // He-style init so the ReLU layer starts in its active regime.
  for (DenseLayer& l : clf.mlp().layers()) {
    const double s = std::sqrt(2.0 / static_cast<double>(l.in_dim()));
    for (double& w : l.weight.values()) w = rng.normal(0.0, s);
  }
  Optimizer adam({OptimizerKind::kAdam, opt.lr, 0.9, 0.999, 1e-8});
  auto params = clf.mlp().parameters();
  std::vector<std::size_t> idx(opt.batch);
  for (std::size_t step = 0; step < opt.steps; ++step) {
    for (auto& i : idx) i = rng.index(train.size());
    Tensor onehot({opt.batch, classes}, 0.0);
    for (std::size_t b = 0; b < opt.batch; ++b) onehot.at(b, static_cast<std::size_t>(train.labels[idx[b]])) = 1.0;
    Graph g;
    auto vars = clf.mlp().bind(g, true);
    Var lp = clf.log_posteriors(g, vars, g.constant(train.rows(idx)));
    Var loss = scale(sum(mul(lp, g.constant(onehot))), -1.0 / static_cast<double>(opt.batch));
    g.backward(loss);
    std::vector<Tensor> grads;
    for (Var v : vars) grads.push_back(g.grad(v));
    adam.step(params, grads);
  }
  return clf;
}

// ---------------------------------------------------------------------------
// Histograms
// ---------------------------------------------------------------------------

struct HistogramSpec {
  double lo = 0.0;
  double hi = -std::log(kPosteriorClamp);  // largest I' the clamp allows
  std::size_t bins = 40;
};

struct ScoreHistogram {
  std::vector<double> edges;  ///< bins + 1, strictly increasing
  std::vector<std::size_t> counts;
  std::size_t total = 0;
  std::string framework;

  std::size_t bins() const { return counts.size(); }
  double percent(std::size_t i) const {
    return total == 0 ? 0.0 : 100.0 * static_cast<double>(counts[i]) / static_cast<double>(total);
  }
};

/// Equal-width bins over [lo, hi]; scores below lo land in the first bin and
/// scores at or above hi in the last, so every score is counted once.
inline ScoreHistogram build_histogram(std::span<const double> scores, const HistogramSpec& spec,
                                      std::string framework = {}) {
  if (spec.bins < 1) throw std::invalid_argument("histogram: bins must be >= 1");
  if (!(spec.hi > spec.lo)) throw std::invalid_argument("histogram: hi must exceed lo");
  ScoreHistogram h;
  h.framework = std::move(framework);
  h.edges.resize(spec.bins + 1);
  for (std::size_t i = 0; i <= spec.bins; ++i) {
    h.edges[i] = spec.lo + (spec.hi - spec.lo) * static_cast<double>(i) / static_cast<double>(spec.bins);
  }
  h.counts.assign(spec.bins, 0);
  for (double s : scores) {
    if (std::isnan(s)) throw std::invalid_argument("histogram: NaN score");
    const double t = (s - spec.lo) / (spec.hi - spec.lo) * static_cast<double>(spec.bins);
    const auto bin = static_cast<std::size_t>(std::clamp(std::floor(t), 0.0, static_cast<double>(spec.bins - 1)));
    ++h.counts[bin];
    ++h.total;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Mode coverage on 2-D mixtures
// ---------------------------------------------------------------------------

struct ModeCoverage {
  std::size_t covered = 0;
  std::vector<std::size_t> counts;  ///< samples assigned to each mode
  std::vector<double> mass;         ///< counts / total samples
};

/// Each sample is assigned to its nearest center if within `radius`. A mode
/// is covered when it receives at least `coverage_frac` of its expected
/// share n / K.
inline ModeCoverage mode_coverage(const Tensor& samples, const Tensor& centers, double radius,
                                  double coverage_frac = 0.25) {
  if (samples.rank() != 2 || centers.rank() != 2 || samples.cols() != centers.cols()) {
    throw ShapeError("mode_coverage: dimension mismatch");
  }
  if (!(radius > 0.0)) throw std::invalid_argument("mode_coverage: radius must be > 0");
  const std::size_t k = centers.rows(), d = centers.cols(), n = samples.rows();
  ModeCoverage out;
  out.counts.assign(k, 0);
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t c = 0; c < k; ++c) {
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = samples.at(i, j) - centers.at(c, j);
        s += diff * diff;
      }
      if (s < best) {
        best = s;
        arg = c;
      }
    }
    if (best <= radius * radius) ++out.counts[arg];
  }
  const double expected = static_cast<double>(n) / static_cast<double>(k);
  for (std::size_t c = 0; c < k; ++c) {
    out.mass.push_back(static_cast<double>(out.counts[c]) / static_cast<double>(n));
    if (static_cast<double>(out.counts[c]) >= coverage_frac * expected) ++out.covered;
  }
  return out;
}

}  // namespace eblab
