#pragma once

// Alternating D/G training, margin estimation and single-run persistence.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "eblab/autodiff.hpp"
#include "eblab/config.hpp"
#include "eblab/data.hpp"
#include "eblab/metrics.hpp"
#include "eblab/nets.hpp"
#include "eblab/objectives.hpp"
#include "eblab/optim.hpp"
#include "eblab/rng.hpp"

namespace eblab {

struct StepMetrics {
  std::int64_t step = 0;  ///< index of the completed step, from 0
  double margin = 0.0;
  double loss_d = 0.0;
  double loss_g = 0.0;
  double e_real = 0.0;  ///< mean energy, or mean probability for GAN
  double e_fake = 0.0;
  double f_pt = 0.0;
  double lr_d = 0.0;
  double lr_g = 0.0;
};

inline constexpr const char* kMetricsHeader = "step,margin,loss_d,loss_g,e_real,e_fake,f_pt,lr_d,lr_g";

inline std::string metrics_row(const StepMetrics& m) {
  using detail::fmt_double;
  return std::to_string(m.step) + ',' + fmt_double(m.margin) + ',' + fmt_double(m.loss_d) + ',' +
         fmt_double(m.loss_g) + ',' + fmt_double(m.e_real) + ',' + fmt_double(m.e_fake) + ',' + fmt_double(m.f_pt) +
         ',' + fmt_double(m.lr_d) + ',' + fmt_double(m.lr_g);
}

using Discriminator = std::variant<AutoEncoderDiscriminator, LogisticDiscriminator>;

struct TrainState {
  ExperimentConfig config;
  GeneratorNet generator;
  Discriminator discriminator;
  Optimizer opt_d;
  Optimizer opt_g;
  LrSchedule lr_d;
  LrSchedule lr_g;
  MarginSchedule margin;
  std::int64_t step = 0;
  Rng data_rng;
  Rng latent_rng;
  Rng dropout_rng;
  Rng eval_rng;

  bool is_ebgan() const { return std::holds_alternative<AutoEncoderDiscriminator>(discriminator); }
  AutoEncoderDiscriminator& autoencoder() { return std::get<AutoEncoderDiscriminator>(discriminator); }
  LogisticDiscriminator& logistic() { return std::get<LogisticDiscriminator>(discriminator); }

  std::vector<Tensor*> d_parameters() {
    return std::visit([](auto& d) { return d.parameters(); }, discriminator);
  }
  std::vector<Var> bind_d(Graph& g, bool requires_grad) const {
    return std::visit([&](const auto& d) { return d.bind(g, requires_grad); }, discriminator);
  }
  NamedTensors d_state() const {
    return std::visit([](const auto& d) { return d.state(); }, discriminator);
  }
};

inline NetOptions net_options(const ExperimentConfig& c) { return {c.batchnorm, c.bn_gamma}; }

/// Builds and initializes both networks. The seed is split into independent
/// streams: init, data, latent, dropout, eval.
inline TrainState make_train_state(const ExperimentConfig& cfg, std::size_t data_dim) {
  validate_config(cfg);
  TrainState s;
  s.config = cfg;
  Rng root(cfg.seed);
  Rng init = root.split();
  s.data_rng = root.split();
  s.latent_rng = root.split();
  s.dropout_rng = root.split();
  s.eval_rng = root.split();

  const NetOptions opt = net_options(cfg);
  s.generator = GeneratorNet(cfg.latent_dim, data_dim, cfg.n_layer_g, cfg.size_g, opt);
  s.generator.init(init);
  if (cfg.framework == Framework::kEbgan) {
    AutoEncoderDiscriminator d(data_dim, cfg.n_layer_d, cfg.size_d, cfg.dropout_d, opt, cfg.energy_norm);
    d.init(init);
    s.discriminator = std::move(d);
  } else {
    LogisticDiscriminator d(data_dim, cfg.n_layer_d, cfg.size_d, cfg.dropout_d, opt);
    d.init(init);
    s.discriminator = std::move(d);
  }
  s.opt_d = Optimizer({cfg.optim_d, cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps});
  s.opt_g = Optimizer({cfg.optim_g, cfg.lr, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps});
  s.lr_d = {cfg.lr, cfg.lr_decay_start, cfg.total_steps};
  s.lr_g = s.lr_d;
  s.margin = cfg.margin;
  return s;
}

namespace detail {

inline ForwardMode training_mode(TrainState& s) {
  ForwardMode mode;
  mode.training = true;
  mode.dropout_rate = s.config.dropout_rate;
  mode.dropout_rng = &s.dropout_rng;
  return mode;
}

inline double mean_of(const Tensor& t) {
  double acc = 0.0;
  for (double v : t.values()) acc += v;
  return acc / static_cast<double>(t.size());
}

inline std::vector<Tensor> grads_of(const Graph& g, std::span<const Var> vars) {
  std::vector<Tensor> out;
  out.reserve(vars.size());
  for (Var v : vars) out.push_back(g.grad(v));
  return out;
}

inline void require_finite_loss(double v, const char* what) {
  if (!std::isfinite(v)) throw NonFiniteError(std::string(what) + ": non-finite loss");
}

}  // namespace detail

/// One discriminator update then one generator update, each on a fresh
/// latent batch. The D step treats G as fixed; the G step treats D as fixed.
/// Throws NonFiniteError on divergence.
inline StepMetrics train_step(TrainState& s, const Tensor& real) {
  if (real.rank() != 2 || real.cols() != s.generator.output_dim()) {
    throw ShapeError("train_step: real batch " + shape_string(real.shape()));
  }
  StepMetrics out;
  out.step = s.step;
  out.margin = s.is_ebgan() ? margin_at(s.margin, s.step) : 0.0;
  out.lr_d = s.lr_d.at(s.step);
  out.lr_g = s.lr_g.at(s.step);
  s.opt_d.set_lr(out.lr_d);
  s.opt_g.set_lr(out.lr_g);
  const std::size_t batch = real.rows();
  const ForwardMode mode = detail::training_mode(s);

  {
    const Tensor z = s.generator.latent().sample(batch, s.latent_rng);
    Graph g;
    auto gp = s.generator.mlp().bind(g, false);
    Var fake = s.generator.forward(g, gp, g.constant(z), mode);
    auto dp = s.bind_d(g, true);
    Var loss;
    if (s.is_ebgan()) {
      auto& d = s.autoencoder();
      Var e_real = d.energy(g, dp, g.constant(real), mode).energies;
      Var e_fake = d.energy(g, dp, fake, mode).energies;
      loss = ebgan_d_loss(e_real, e_fake, out.margin);
      out.e_real = detail::mean_of(e_real.value());
      out.e_fake = detail::mean_of(e_fake.value());
    } else {
      auto& d = s.logistic();
      Var p_real = d.score(g, dp, g.constant(real), mode);
      Var p_fake = d.score(g, dp, fake, mode);
      loss = gan_d_loss(p_real, p_fake);
      out.e_real = detail::mean_of(p_real.value());
      out.e_fake = detail::mean_of(p_fake.value());
    }
    out.loss_d = loss.value().item();
    detail::require_finite_loss(out.loss_d, "discriminator");
    g.backward(loss);
    s.opt_d.step(s.d_parameters(), detail::grads_of(g, dp));
  }

  {
    const Tensor z = s.generator.latent().sample(batch, s.latent_rng);
    Graph g;
    auto gp = s.generator.mlp().bind(g, true);
    Var fake = s.generator.forward(g, gp, g.constant(z), mode);
    auto dp = s.bind_d(g, false);
    Var loss;
    if (s.is_ebgan()) {
      EnergyVars ev = s.autoencoder().energy(g, dp, fake, mode);
      loss = ebgan_g_loss(ev.energies);
      if (s.config.lambda_pt > 0.0) {
        Var pt = pull_away(ev.representations);
        out.f_pt = pt.value().item();
        loss = add(loss, scale(pt, s.config.lambda_pt));
      } else {
        // Reported only; kept off the training graph.
        Graph scratch;
        out.f_pt = pull_away(scratch.constant(ev.representations.value())).value().item();
      }
    } else {
      loss = gan_g_loss(s.logistic().score(g, dp, fake, mode));
    }
    out.loss_g = loss.value().item();
    detail::require_finite_loss(out.loss_g, "generator");
    g.backward(loss);
    s.opt_g.step(s.generator.mlp().parameters(), detail::grads_of(g, gp));
  }

  ++s.step;
  return out;
}

// ---------------------------------------------------------------------------
// Margin estimation
// ---------------------------------------------------------------------------

struct MarginEstimate {
  double suggested = 0.0;
  std::vector<double> trace;  ///< mean reconstruction energy per step
  std::size_t window = 0;
};

/// Trains the configured auto-encoder alone on real data and returns the mean
/// energy over the last 10% of steps as a starting point for the margin.
inline MarginEstimate estimate_margin(const ExperimentConfig& cfg, const Dataset& data, std::int64_t steps) {
  if (data.size() == 0) throw std::invalid_argument("estimate_margin: empty dataset");
  if (steps < 1) throw std::invalid_argument("estimate_margin: steps must be >= 1");
  ExperimentConfig c = cfg;
  c.framework = Framework::kEbgan;
  c.grid_mode = false;
  TrainState s = make_train_state(c, data.dim());
  auto& d = s.autoencoder();
  Optimizer opt({c.optim_d, c.lr, c.adam_beta1, c.adam_beta2, c.adam_eps});
  const ForwardMode mode = detail::training_mode(s);
  MarginEstimate est;
  est.trace.reserve(static_cast<std::size_t>(steps));
  for (std::int64_t t = 0; t < steps; ++t) {
    const Tensor x = data.sample_batch(s.data_rng, c.batch_size);
    Graph g;
    auto dp = d.bind(g, true);
    Var loss = mean(d.energy(g, dp, g.constant(x), mode).energies);
    const double v = loss.value().item();
    detail::require_finite_loss(v, "estimate_margin");
    est.trace.push_back(v);
    g.backward(loss);
    opt.step(d.parameters(), detail::grads_of(g, dp));
  }
  est.window = std::max<std::size_t>(1, est.trace.size() / 10);
  double acc = 0.0;
  for (std::size_t i = est.trace.size() - est.window; i < est.trace.size(); ++i) acc += est.trace[i];
  est.suggested = acc / static_cast<double>(est.window);
  return est;
}

// ---------------------------------------------------------------------------
// Datasets from config
// ---------------------------------------------------------------------------

inline RingMixtureSpec ring_spec(const ExperimentConfig& c) {
  return {c.ring_modes, c.ring_radius, c.ring_std, c.dataset_size, c.dataset_seed};
}

inline Dataset load_dataset(const ExperimentConfig& c) {
  Dataset ds;
  if (c.dataset == "ring") {
    ds = gen_ring_mixture(ring_spec(c));
  } else if (c.dataset == "digits") {
    DigitsSpec spec;
    spec.count = c.dataset_size;
    spec.seed = c.dataset_seed;
    spec.noise = c.digits_noise;
    ds = gen_synth_digits(spec);
  } else if (c.dataset == "idx") {
    ds = load_idx(c.idx_images, c.idx_labels, c.idx_pad);
  } else {
    throw ConfigError("unknown dataset '" + c.dataset + "'");
  }
  ds.validate();
  return ds;
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

enum class RunStatus { kCompleted, kFailed };

inline const char* to_string(RunStatus s) { return s == RunStatus::kCompleted ? "completed" : "failed"; }

struct RunRecord {
  std::string run_id;
  ExperimentConfig config;
  RunStatus status = RunStatus::kCompleted;
  std::string diagnostic;  ///< abort reason for failed runs
  std::int64_t steps_completed = 0;
  std::optional<StepMetrics> last_metrics;
  std::optional<double> iprime;
  std::string metrics_path;
  std::vector<std::string> sample_paths;
  double wall_clock_s = 0.0;
  std::uint64_t seed = 0;
};

inline nlohmann::json to_json(const RunRecord& r) {
  nlohmann::json j;
  j["run_id"] = r.run_id;
  j["config"] = serialize_config(r.config);
  j["description"] = describe_config(r.config);
  j["status"] = to_string(r.status);
  j["diagnostic"] = r.diagnostic;
  j["steps_completed"] = r.steps_completed;
  j["iprime"] = r.iprime ? nlohmann::json(*r.iprime) : nlohmann::json(nullptr);
  if (r.last_metrics) {
    const auto& m = *r.last_metrics;
    j["final"] = {{"step", m.step},     {"margin", m.margin}, {"loss_d", m.loss_d}, {"loss_g", m.loss_g},
                  {"e_real", m.e_real}, {"e_fake", m.e_fake}, {"f_pt", m.f_pt}};
  }
  j["metrics_path"] = r.metrics_path;
  j["sample_paths"] = r.sample_paths;
  j["wall_clock_s"] = r.wall_clock_s;
  j["seed"] = r.seed;
  return j;
}

inline RunRecord record_from_json(const nlohmann::json& j) {
  RunRecord r;
  r.run_id = j.at("run_id").get<std::string>();
  r.config = parse_config_string(j.at("config").get<std::string>());
  r.status = j.at("status").get<std::string>() == "completed" ? RunStatus::kCompleted : RunStatus::kFailed;
  r.diagnostic = j.at("diagnostic").get<std::string>();
  r.steps_completed = j.at("steps_completed").get<std::int64_t>();
  if (!j.at("iprime").is_null()) r.iprime = j.at("iprime").get<double>();
  if (j.contains("final")) {
    const auto& f = j.at("final");
    StepMetrics m;
    m.step = f.at("step").get<std::int64_t>();
    m.margin = f.at("margin").get<double>();
    m.loss_d = f.at("loss_d").get<double>();
    m.loss_g = f.at("loss_g").get<double>();
    m.e_real = f.at("e_real").get<double>();
    m.e_fake = f.at("e_fake").get<double>();
    m.f_pt = f.at("f_pt").get<double>();
    r.last_metrics = m;
  }
  r.metrics_path = j.at("metrics_path").get<std::string>();
  r.sample_paths = j.at("sample_paths").get<std::vector<std::string>>();
  r.wall_clock_s = j.at("wall_clock_s").get<double>();
  r.seed = j.at("seed").get<std::uint64_t>();
  return r;
}

/// Writes `text` to `path` via a temporary file and rename, so readers never
/// see a partial file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& text) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp);
    out << text;
    out.flush();
    if (!out) throw std::runtime_error("write failed: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

inline void save_record(const std::filesystem::path& dir, const RunRecord& r) {
  write_file_atomic(dir / "record", to_json(r).dump(2) + "\n");
}

inline RunRecord load_record(const std::filesystem::path& dir) {
  std::ifstream in(dir / "record");
  if (!in) throw std::runtime_error("cannot open " + (dir / "record").string());
  return record_from_json(nlohmann::json::parse(in));
}

struct RunCallbacks {
  std::function<void(const StepMetrics&)> on_log;  ///< every log_interval steps and the last step
  std::function<void(std::int64_t step, const Tensor& samples)> on_snapshot;
};

struct RunOptions {
  std::optional<std::filesystem::path> out_dir;  ///< nothing is written when unset
  const ProxyClassifier* classifier = nullptr;   ///< when set, I' is scored on completion
  std::string run_id = "run";
  std::size_t snapshot_count = 64;  ///< samples per snapshot
};

struct RunOutcome {
  RunRecord record;
  TrainState state;
};

/// Draws `n` samples with batch-norm running statistics.
inline Tensor sample_generator(TrainState& s, std::size_t n, Rng& rng) {
  return s.generator.generate(s.generator.latent().sample(n, rng), false);
}

/// I' of `n` generated samples under `clf`, with a seed-derived latent stream.
inline double score_generator(TrainState& s, const ProxyClassifier& clf, std::size_t n) {
  Rng rng = s.eval_rng;
  const Tensor x = sample_generator(s, n, rng);
  ProxyClassifier local = clf;
  return modified_inception_score(local.posteriors(x));
}

namespace detail {

inline std::optional<std::string> write_snapshot(const std::filesystem::path& dir, std::int64_t step,
                                                 const Tensor& samples, const Dataset& data) {
  const auto path = dir / ("samples_" + std::to_string(step) + ".pgm");
  if (data.is_image()) {
    std::size_t cols = 1;
    while (cols * cols < samples.rows()) ++cols;
    const std::size_t rows = (samples.rows() + cols - 1) / cols;
    write_sample_grid(samples, data.image_height, data.image_width, rows, cols, path);
  } else if (data.dim() == 2) {
    write_scatter_pgm(samples, 128, path);
  } else {
    return std::nullopt;
  }
  return path.string();
}

}  // namespace detail

/// Runs total_steps train steps with snapshots at the start, every
/// snapshot_interval steps and at the end. A diverged run stops and comes back
/// flagged failed with what it completed so far.
inline RunOutcome train_run(const ExperimentConfig& cfg, const Dataset& data, std::int64_t total_steps,
                            const RunCallbacks& callbacks = {}, const RunOptions& opt = {}) {
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig c = cfg;
  c.total_steps = total_steps;
  RunOutcome o;
  o.state = make_train_state(c, data.dim());
  TrainState& s = o.state;
  RunRecord& r = o.record;
  r.run_id = opt.run_id;
  r.config = c;
  r.seed = c.seed;

  std::ofstream metrics;
  if (opt.out_dir) {
    std::filesystem::create_directories(*opt.out_dir);
    write_file_atomic(*opt.out_dir / "config", serialize_config(c));
    r.metrics_path = (*opt.out_dir / "metrics.csv").string();
    metrics.open(r.metrics_path, std::ios::trunc);
    if (!metrics) throw std::runtime_error("cannot write " + r.metrics_path);
    metrics << kMetricsHeader << '\n';
  }

  // A fixed latent batch so snapshots show the same z over time.
  Rng snap_rng = Rng(s.eval_rng).split();  // eval_rng itself stays untouched for scoring
  const Tensor snap_z = s.generator.latent().sample(opt.snapshot_count, snap_rng);
  auto snapshot = [&](std::int64_t step) {
    const Tensor x = s.generator.generate(snap_z, false);
    if (callbacks.on_snapshot) callbacks.on_snapshot(step, x);
    if (opt.out_dir) {
      if (auto p = detail::write_snapshot(*opt.out_dir, step, x, data)) r.sample_paths.push_back(*p);
    }
  };

  try {
    snapshot(0);
    for (std::int64_t t = 0; t < total_steps; ++t) {
      const Tensor real = data.sample_batch(s.data_rng, c.batch_size);
      const StepMetrics m = train_step(s, real);
      r.last_metrics = m;
      r.steps_completed = s.step;
      const bool last = t + 1 == total_steps;
      if ((t + 1) % c.log_interval == 0 || last) {
        if (metrics.is_open()) metrics << metrics_row(m) << '\n';
        if (callbacks.on_log) callbacks.on_log(m);
      }
      if (!last && c.snapshot_interval > 0 && (t + 1) % c.snapshot_interval == 0) snapshot(t + 1);
    }
    if (total_steps > 0) snapshot(total_steps);
    if (opt.classifier) r.iprime = score_generator(s, *opt.classifier, c.eval_samples);
  } catch (const NonFiniteError& e) {
    r.status = RunStatus::kFailed;
    r.diagnostic = "diverged at step " + std::to_string(s.step) + ": " + e.what();
  }

  if (opt.out_dir) {
    metrics.close();
    if (r.status == RunStatus::kCompleted) {
      save_checkpoint(*opt.out_dir / "generator.ckpt", s.generator.mlp().state("gen."));
      save_checkpoint(*opt.out_dir / "discriminator.ckpt", s.d_state());
    }
  }
  r.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (opt.out_dir) save_record(*opt.out_dir, r);
  return o;
}

/// Rebuilds the final state of a completed run from its directory: networks
/// from the checkpoints, rng streams from the seed.
inline TrainState restore_run(const std::filesystem::path& run_dir) {
  const RunRecord rec = load_record(run_dir);
  if (rec.status != RunStatus::kCompleted) throw std::runtime_error("run " + rec.run_id + " did not complete");
  const NamedTensors gen = load_checkpoint(run_dir / "generator.ckpt");
  const std::string last = "gen.layer" + std::to_string(rec.config.n_layer_g - 1) + ".weight";
  std::size_t dim = 0;
  for (const auto& [k, t] : gen)
    if (k == last) dim = t.cols();
  if (dim == 0) throw std::runtime_error("generator checkpoint: missing " + last);
  TrainState s = make_train_state(rec.config, dim);
  s.generator.mlp().load_state(gen, "gen.");
  const NamedTensors disc = load_checkpoint(run_dir / "discriminator.ckpt");
  std::visit([&](auto& d) { d.load_state(disc); }, s.discriminator);
  s.step = rec.steps_completed;
  return s;
}

}  // namespace eblab
