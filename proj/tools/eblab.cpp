// eblab: command-line front end for training, grids, oracles and data.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "eblab/eblab.hpp"

namespace fs = std::filesystem;
using namespace eblab;

namespace {

void print_metrics(const StepMetrics& m) {
  std::printf("step %lld  m=%g  L_D=%.5f  L_G=%.5f  e_real=%.5f  e_fake=%.5f  f_pt=%.4f\n",
              static_cast<long long>(m.step + 1), m.margin, m.loss_d, m.loss_g, m.e_real, m.e_fake, m.f_pt);
  std::fflush(stdout);
}

/// Loads a classifier checkpoint, or trains one for labelled data. Digits go
/// through the accuracy gate.
ProxyClassifier obtain_classifier(const std::string& path, const ExperimentConfig& base, const Dataset& data,
                                  const fs::path& save_to) {
  if (!path.empty()) return ProxyClassifier::load(path);
  if (!data.has_labels()) throw std::runtime_error("dataset has no labels; pass --classifier");
  ProxyClassifier clf;
  if (base.dataset == "digits") {
    DigitsSpec spec;
    spec.seed = base.dataset_seed + 7919;
    spec.noise = base.digits_noise;
    auto g = train_digit_classifier(spec);
    std::printf("proxy classifier: held-out accuracy %.4f\n", g.held_out_accuracy);
    clf = std::move(g.classifier);
  } else {
    int classes = 0;
    for (int l : data.labels) classes = std::max(classes, l + 1);
    clf = train_proxy_classifier(data, static_cast<std::size_t>(classes));
    std::printf("proxy classifier: training accuracy %.4f\n", clf.accuracy(data));
  }
  fs::create_directories(save_to.parent_path());
  clf.save(save_to);
  return clf;
}

std::map<std::string, std::string> read_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path);
  std::map<std::string, std::string> kv;
  for (auto& [k, v] : detail::read_key_values(in)) kv[k] = v;
  return kv;
}

int make_data(const std::string& kind, const std::string& spec_path, const std::string& out) {
  const auto kv = read_spec(spec_path);
  auto take = [&](const char* key, auto fallback) {
    auto it = kv.find(key);
    return it == kv.end() ? std::string(fallback) : it->second;
  };
  std::set<std::string> known;
  if (kind == "ring") {
    known = {"modes", "radius", "stddev", "count", "seed"};
    RingMixtureSpec s;
    s.modes = detail::parse_size("modes", take("modes", "8"));
    s.radius = detail::parse_double("radius", take("radius", "2"));
    s.stddev = detail::parse_double("stddev", take("stddev", "0.05"));
    s.count = detail::parse_size("count", take("count", "10000"));
    s.seed = detail::parse_size("seed", take("seed", "1"));
    for (const auto& [k, _] : kv)
      if (!known.count(k)) throw ConfigError("unknown key '" + k + "'");
    const Dataset ds = gen_ring_mixture(s);
    std::ofstream f(out);
    if (!f) throw std::runtime_error("cannot write " + out);
    f << "x,y,label\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
      f << detail::fmt_double(ds.samples.at(i, 0)) << ',' << detail::fmt_double(ds.samples.at(i, 1)) << ','
        << ds.labels[i] << '\n';
    }
    std::printf("wrote %zu ring points to %s\n", ds.size(), out.c_str());
  } else if (kind == "digits") {
    known = {"count", "seed", "noise", "min_intensity"};
    DigitsSpec s;
    s.count = detail::parse_size("count", take("count", "10000"));
    s.seed = detail::parse_size("seed", take("seed", "1"));
    s.noise = detail::parse_double("noise", take("noise", "0.1"));
    s.min_intensity = detail::parse_double("min_intensity", take("min_intensity", "0.6"));
    for (const auto& [k, _] : kv)
      if (!known.count(k)) throw ConfigError("unknown key '" + k + "'");
    const Dataset ds = gen_synth_digits(s);
    save_idx(ds, out, out + ".labels");
    std::printf("wrote %zu digits to %s (labels: %s.labels)\n", ds.size(), out.c_str(), out.c_str());
  } else {
    throw ConfigError("make-data: expected ring or digits");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Energy-based GAN lab"};
  app.require_subcommand(1);

  auto* train = app.add_subcommand("train", "Train one model from a config file");
  std::string config_path, out_dir, classifier_path;
  train->add_option("--config", config_path)->required()->check(CLI::ExistingFile);
  train->add_option("--out", out_dir, "run directory");
  train->add_option("--classifier", classifier_path, "proxy classifier checkpoint for I'");

  auto* grid = app.add_subcommand("grid", "Run a hyper-parameter grid");
  std::string spec_path, grid_id;
  std::size_t parallel = 1;
  grid->add_option("--spec", spec_path)->required()->check(CLI::ExistingFile);
  grid->add_option("--parallel", parallel)->check(CLI::PositiveNumber);
  grid->add_option("--out", out_dir)->required();
  grid->add_option("--classifier", classifier_path);
  grid->add_option("--grid-id", grid_id, "defaults to the spec file name");

  auto* oracle = app.add_subcommand("oracle", "Certify the equilibrium results on discrete densities");
  std::string suite = "all", summary_path;
  std::size_t trials = 0;
  double tol = kDefaultOracleTol;
  std::uint64_t oracle_seed = 2024;
  oracle->add_option("--suite", suite)->check(CLI::IsMember({"lemma1", "lemma2", "thm1", "thm2", "all"}));
  oracle->add_option("--trials", trials, "0 uses each suite's default");
  oracle->add_option("--tol", tol);
  oracle->add_option("--seed", oracle_seed);
  oracle->add_option("--summary", summary_path, "JSON summary file");

  auto* eval = app.add_subcommand("eval", "Score a finished run with I'");
  std::string run_dir;
  std::size_t eval_samples = 0;
  eval->add_option("--run", run_dir)->required()->check(CLI::ExistingDirectory);
  eval->add_option("--classifier", classifier_path)->required()->check(CLI::ExistingFile);
  eval->add_option("--samples", eval_samples, "defaults to the run's eval_samples");

  auto* estimate = app.add_subcommand("estimate-margin", "Train the auto-encoder alone and suggest m");
  std::int64_t estimate_steps = 0;
  estimate->add_option("--config", config_path)->required()->check(CLI::ExistingFile);
  estimate->add_option("--steps", estimate_steps, "defaults to margin_estimate_steps");

  auto* data = app.add_subcommand("make-data", "Write a synthetic dataset");
  std::string data_kind, data_out;
  data->add_option("kind", data_kind)->required()->check(CLI::IsMember({"ring", "digits"}));
  data->add_option("--spec", spec_path)->required()->check(CLI::ExistingFile);
  data->add_option("--out", data_out)->required();

  auto* clf_cmd = app.add_subcommand("train-classifier", "Train the synthetic-digit proxy classifier");
  std::uint64_t clf_seed = 1;
  clf_cmd->add_option("--out", data_out)->required();
  clf_cmd->add_option("--seed", clf_seed);

  auto* sweep = app.add_subcommand("margin-sweep", "One EBGAN run per margin value");
  std::vector<double> margins = kMarginSweep;
  sweep->add_option("--config", config_path)->required()->check(CLI::ExistingFile);
  sweep->add_option("--out", out_dir)->required();
  sweep->add_option("--classifier", classifier_path);
  sweep->add_option("--margins", margins)->delimiter(',');

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      ExperimentConfig c = parse_config_file(config_path);
      apply_env_seed(c);
      const Dataset ds = load_dataset(c);
      std::optional<ProxyClassifier> clf;
      if (!classifier_path.empty()) clf = ProxyClassifier::load(classifier_path);
      RunOptions opt;
      if (!out_dir.empty()) opt.out_dir = out_dir;
      opt.classifier = clf ? &*clf : nullptr;
      RunCallbacks cb;
      cb.on_log = print_metrics;
      const auto o = train_run(c, ds, c.total_steps, cb, opt);
      const auto& r = o.record;
      std::printf("%s after %lld steps (%.1fs)\n", to_string(r.status), static_cast<long long>(r.steps_completed),
                  r.wall_clock_s);
      if (r.iprime) std::printf("I' = %.6f\n", *r.iprime);
      if (!r.diagnostic.empty()) std::fprintf(stderr, "%s\n", r.diagnostic.c_str());
      return r.status == RunStatus::kCompleted ? 0 : 1;
    }

    if (*grid) {
      GridSpec g = parse_grid_file(spec_path);
      apply_env_seed(g);
      if (grid_id.empty()) grid_id = fs::path(spec_path).stem().string();
      const fs::path root = fs::path(out_dir) / grid_id;
      fs::create_directories(root);
      const Dataset ds = load_dataset(g.base);
      const ProxyClassifier clf = obtain_classifier(classifier_path, g.base, ds, root / "classifier.ckpt");
      std::printf("grid %s: %zu runs on %zu worker(s)\n", grid_id.c_str(), g.size(), parallel);
      std::size_t done = 0;
      const std::size_t total = g.size();
      auto res = run_grid(g, ds, &clf, parallel, root, [&](const RunRecord& r) {
        std::printf("[%zu/%zu] %s %s I'=%s  %s\n", ++done, total, r.run_id.c_str(), to_string(r.status),
                    r.iprime ? detail::fmt_double(*r.iprime).c_str() : "-", describe_config(r.config).c_str());
        std::fflush(stdout);
      });
      std::size_t failed = 0;
      for (const auto& r : res.records) failed += r.status == RunStatus::kFailed;
      std::printf("%zu runs, %zu failed; report in %s\n", res.records.size(), failed, root.c_str());
      return 0;
    }

    if (*oracle) {
      SuiteOptions opt;
      opt.trials = trials;
      opt.tol = tol;
      opt.seed = oracle_seed;
      const auto results = run_oracle_suites(suite, opt);
      bool ok = true;
      nlohmann::json summary = nlohmann::json::array();
      for (const auto& r : results) {
        std::printf("%-7s %s  trials=%zu failures=%zu max_error=%.3g time=%.2fs\n", r.name.c_str(),
                    r.passed() ? "CERTIFIED" : "FAILED", r.trials, r.failures, r.max_error, r.seconds);
        if (!r.first_failure.empty()) std::printf("        first failure: %s\n", r.first_failure.c_str());
        ok = ok && r.passed();
        summary.push_back(to_json(r));
      }
      if (!summary_path.empty()) write_file_atomic(summary_path, summary.dump(2) + "\n");
      return ok ? 0 : 1;
    }

    if (*eval) {
      TrainState s = restore_run(run_dir);
      const ProxyClassifier clf = ProxyClassifier::load(classifier_path);
      const std::size_t n = eval_samples ? eval_samples : s.config.eval_samples;
      std::printf("I' = %.17g\n", score_generator(s, clf, n));
      return 0;
    }

    if (*estimate) {
      ExperimentConfig c = parse_config_file(config_path);
      apply_env_seed(c);
      const Dataset ds = load_dataset(c);
      const auto est = estimate_margin(c, ds, estimate_steps ? estimate_steps : c.margin_estimate_steps);
      std::printf("suggested m = %.6g (mean energy over the last %zu of %zu steps)\n", est.suggested, est.window,
                  est.trace.size());
      return 0;
    }

    if (*data) return make_data(data_kind, spec_path, data_out);

    if (*clf_cmd) {
      DigitsSpec spec;
      spec.seed = clf_seed;
      auto g = train_digit_classifier(spec);
      g.classifier.save(data_out);
      std::printf("held-out accuracy %.4f; saved %s\n", g.held_out_accuracy, data_out.c_str());
      return 0;
    }

    if (*sweep) {
      ExperimentConfig c = parse_config_file(config_path);
      apply_env_seed(c);
      const Dataset ds = load_dataset(c);
      std::optional<ProxyClassifier> clf;
      if (!classifier_path.empty() || (c.dataset == "digits" && ds.has_labels())) {
        clf = obtain_classifier(classifier_path, c, ds, fs::path(out_dir) / "classifier.ckpt");
      }
      const auto rows = margin_sweep(c, ds, margins, clf ? &*clf : nullptr, out_dir);
      bool ok = true;
      for (const auto& [m, r] : rows) {
        std::printf("m=%-4g %s e_real=%s I'=%s\n", m, to_string(r.status),
                    r.last_metrics ? detail::fmt_double(r.last_metrics->e_real).c_str() : "-",
                    r.iprime ? detail::fmt_double(*r.iprime).c_str() : "-");
        ok = ok && r.status == RunStatus::kCompleted;
      }
      return ok ? 0 : 1;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
