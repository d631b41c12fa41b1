#pragma once

// Grid execution, score aggregation and reports.
//
// Layout of a grid run:
//
//   <out>/<grid-id>/<run-id>/{config, metrics.csv, samples_*.pgm, record}
//   <out>/<grid-id>/scores.csv, hist_*.csv, histograms.svg, best_*.pgm

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "eblab/config.hpp"
#include "eblab/metrics.hpp"
#include "eblab/trainer.hpp"

namespace eblab {

inline constexpr const char* kSeedEnv = "EBLAB_SEED";

/// Value of EBLAB_SEED, if set. A malformed value is an error, not ignored.
inline std::optional<std::uint64_t> env_seed() {
  const char* v = std::getenv(kSeedEnv);
  if (!v || !*v) return std::nullopt;
  return detail::parse_size(kSeedEnv, v);
}

inline void apply_env_seed(ExperimentConfig& c) {
  if (auto s = env_seed()) c.seed = *s;
}

inline void apply_env_seed(GridSpec& g) { apply_env_seed(g.base); }

inline std::string run_id_for(std::size_t index, const ExperimentConfig& c) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%05zu-%s", index, to_string(c.framework));
  return buf;
}

// ---------------------------------------------------------------------------
// Scores
// ---------------------------------------------------------------------------

/// One row of scores.csv. Failed runs have no I'.
struct ScoreRow {
  std::string run_id;
  ExperimentConfig config;
  RunStatus status = RunStatus::kCompleted;
  std::optional<double> iprime;

  /// Histogram value: failed runs count as 0.
  double score() const { return status == RunStatus::kCompleted && iprime ? *iprime : 0.0; }
};

inline constexpr const char* kScoresHeader =
    "run_id,framework,nLayerG,nLayerD,sizeG,sizeD,dropoutD,optimD,optimG,lr,margin,lambda_pt,seed,status,iprime";

inline std::vector<ScoreRow> score_rows(const std::vector<RunRecord>& records) {
  std::vector<ScoreRow> rows;
  for (const auto& r : records) rows.push_back({r.run_id, r.config, r.status, r.iprime});
  return rows;
}

inline std::string scores_csv(const std::vector<ScoreRow>& rows) {
  using detail::fmt_double;
  std::ostringstream os;
  os << kScoresHeader << '\n';
  for (const auto& r : rows) {
    const auto& c = r.config;
    os << r.run_id << ',' << to_string(c.framework) << ',' << c.n_layer_g << ',' << c.n_layer_d << ',' << c.size_g
       << ',' << c.size_d << ',' << (c.dropout_d ? "true" : "false") << ',' << to_string(c.optim_d) << ','
       << to_string(c.optim_g) << ',' << fmt_double(c.lr) << ',' << fmt_double(c.margin.m0) << ','
       << fmt_double(c.lambda_pt) << ',' << c.seed << ',' << to_string(r.status) << ','
       << (r.iprime ? fmt_double(*r.iprime) : "") << '\n';
  }
  return os.str();
}

inline std::vector<ScoreRow> read_scores_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kScoresHeader) throw std::runtime_error("scores.csv: bad header");
  std::vector<ScoreRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) f.push_back(cell);
    if (!line.empty() && line.back() == ',') f.emplace_back();
    if (f.size() != 15) throw std::runtime_error("scores.csv: expected 15 fields in '" + line + "'");
    ScoreRow r;
    r.run_id = f[0];
    ExperimentConfig& c = r.config;
    static const char* keys[] = {"framework", "nLayerG", "nLayerD", "sizeG", "sizeD", "dropoutD",
                                 "optimD",    "optimG",  "lr",      "margin", "lambda_pt", "seed"};
    for (std::size_t k = 0; k < 12; ++k) set_config_key(c, keys[k], f[k + 1]);
    if (f[13] == "completed") r.status = RunStatus::kCompleted;
    else if (f[13] == "failed") r.status = RunStatus::kFailed;
    else throw std::runtime_error("scores.csv: bad status '" + f[13] + "'");
    if (!f[14].empty()) r.iprime = detail::parse_double("iprime", f[14]);
    rows.push_back(std::move(r));
  }
  return rows;
}

/// Histograms keyed by name: "ebgan", "gan", and for GAN the optimizer
/// sub-grids "gan_<optimD>_<optimG>_<lr>".
using HistogramSet = std::map<std::string, ScoreHistogram>;

inline std::string subgrid_key(const ExperimentConfig& c) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", c.lr);
  return std::string("gan_") + to_string(c.optim_d) + "_" + to_string(c.optim_g) + "_" + buf;
}

inline HistogramSet histograms_from_scores(const std::vector<ScoreRow>& rows, const HistogramSpec& spec) {
  std::map<std::string, std::vector<double>> groups;
  for (const auto& r : rows) {
    groups[to_string(r.config.framework)].push_back(r.score());
    if (r.config.framework == Framework::kGan) groups[subgrid_key(r.config)].push_back(r.score());
  }
  HistogramSet out;
  for (const auto& [name, scores] : groups) out.emplace(name, build_histogram(scores, spec, name));
  return out;
}

inline std::string histogram_csv(const ScoreHistogram& h) {
  std::ostringstream os;
  os << "bin_lo,bin_hi,percent\n";
  for (std::size_t i = 0; i < h.bins(); ++i) {
    os << detail::fmt_double(h.edges[i]) << ',' << detail::fmt_double(h.edges[i + 1]) << ','
       << detail::fmt_double(h.percent(i)) << '\n';
  }
  return os.str();
}

/// Side-by-side bars for the framework histograms (sub-grids are omitted).
inline std::string histograms_svg(const HistogramSet& hs) {
  std::vector<const ScoreHistogram*> shown;
  for (const char* k : {"ebgan", "gan"})
    if (auto it = hs.find(k); it != hs.end()) shown.push_back(&it->second);
  const double w = 640, h = 360, left = 50, bottom = 40, top = 20;
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  const double plot_w = w - left - 20, plot_h = h - bottom - top;
  os << "<line x1=\"" << left << "\" y1=\"" << h - bottom << "\" x2=\"" << w - 20 << "\" y2=\"" << h - bottom
     << "\" stroke=\"black\"/>\n";
  const char* colors[] = {"#1f77b4", "#d62728"};
  if (!shown.empty()) {
    const std::size_t bins = shown[0]->bins();
    double ymax = 1.0;
    for (auto* s : shown)
      for (std::size_t i = 0; i < s->bins(); ++i) ymax = std::max(ymax, s->percent(i));
    const double slot = plot_w / static_cast<double>(bins);
    const double bar = slot / static_cast<double>(shown.size() + 1);
    for (std::size_t k = 0; k < shown.size(); ++k) {
      for (std::size_t i = 0; i < bins && i < shown[k]->bins(); ++i) {
        const double bh = plot_h * shown[k]->percent(i) / ymax;
        os << "<rect x=\"" << left + slot * static_cast<double>(i) + bar * static_cast<double>(k) << "\" y=\""
           << h - bottom - bh << "\" width=\"" << bar << "\" height=\"" << bh << "\" fill=\"" << colors[k % 2]
           << "\"/>\n";
      }
      os << "<text x=\"" << left + 10 << "\" y=\"" << top + 14 * static_cast<double>(k + 1) << "\" fill=\""
         << colors[k % 2] << "\" font-size=\"12\">" << shown[k]->framework << "</text>\n";
    }
    const auto& e = shown[0]->edges;
    for (std::size_t i = 0; i <= bins; i += std::max<std::size_t>(1, bins / 5)) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.2f", e[i]);
      os << "<text x=\"" << left + slot * static_cast<double>(i) << "\" y=\"" << h - bottom + 16
         << "\" font-size=\"10\">" << buf << "</text>\n";
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f%%", ymax);
    os << "<text x=\"4\" y=\"" << top + 4 << "\" font-size=\"10\">" << buf << "</text>\n";
  }
  os << "<text x=\"" << w / 2 - 20 << "\" y=\"" << h - 6 << "\" font-size=\"12\">I'</text>\n";
  os << "</svg>\n";
  return os.str();
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

struct BestRuns {
  std::optional<std::size_t> gan, ebgan, ebgan_pt;  ///< indices into the record list
};

/// Argmax I' per category among completed runs; ties go to the earliest run id.
inline BestRuns select_best(const std::vector<RunRecord>& records) {
  BestRuns b;
  auto consider = [&](std::optional<std::size_t>& slot, std::size_t i) {
    const auto& r = records[i];
    if (r.status != RunStatus::kCompleted || !r.iprime) return;
    if (!slot) {
      slot = i;
      return;
    }
    const auto& cur = records[*slot];
    if (*r.iprime > *cur.iprime || (*r.iprime == *cur.iprime && r.run_id < cur.run_id)) slot = i;
  };
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& c = records[i].config;
    if (c.framework == Framework::kGan) consider(b.gan, i);
    else if (c.lambda_pt > 0.0) consider(b.ebgan_pt, i);
    else consider(b.ebgan, i);
  }
  return b;
}

struct ReportFiles {
  std::filesystem::path scores;
  std::vector<std::filesystem::path> histograms;
  std::filesystem::path svg;
  std::vector<std::filesystem::path> best_grids;
  std::filesystem::path best_configs;
};

inline ReportFiles report(const std::vector<RunRecord>& records, const HistogramSpec& spec,
                          const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  ReportFiles f;
  const auto rows = score_rows(records);
  f.scores = out_dir / "scores.csv";
  write_file_atomic(f.scores, scores_csv(rows));
  const auto hs = histograms_from_scores(rows, spec);
  for (const auto& [name, h] : hs) {
    const auto p = out_dir / ("hist_" + name + ".csv");
    write_file_atomic(p, histogram_csv(h));
    f.histograms.push_back(p);
  }
  f.svg = out_dir / "histograms.svg";
  write_file_atomic(f.svg, histograms_svg(hs));

  const BestRuns best = select_best(records);
  std::ostringstream txt;
  auto emit = [&](const char* name, const std::optional<std::size_t>& idx) {
    if (!idx) {
      txt << name << ": none\n";
      return;
    }
    const auto& r = records[*idx];
    txt << name << ": " << r.run_id << " I'=" << detail::fmt_double(*r.iprime) << " " << describe_config(r.config)
        << '\n';
    if (!r.sample_paths.empty() && std::filesystem::exists(r.sample_paths.back())) {
      const auto dst = out_dir / (std::string(name) + ".pgm");
      std::filesystem::copy_file(r.sample_paths.back(), dst, std::filesystem::copy_options::overwrite_existing);
      f.best_grids.push_back(dst);
    }
  };
  emit("best_gan", best.gan);
  emit("best_ebgan", best.ebgan);
  emit("best_ebgan_pt", best.ebgan_pt);
  f.best_configs = out_dir / "best_configs.txt";
  write_file_atomic(f.best_configs, txt.str());
  return f;
}

// ---------------------------------------------------------------------------
// Grid runner
// ---------------------------------------------------------------------------

struct GridResult {
  std::vector<RunRecord> records;
  HistogramSet histograms;
  std::optional<ReportFiles> files;
};

/// Runs every grid point on a pool of `parallelism` workers. Runs share
/// nothing but the read-only dataset and classifier; a failing run is
/// recorded and the grid carries on. Output order is grid order.
inline GridResult run_grid(const GridSpec& grid, const Dataset& data, const ProxyClassifier* classifier,
                           std::size_t parallelism, const std::optional<std::filesystem::path>& out_dir = {},
                           const std::function<void(const RunRecord&)>& on_done = {}) {
  if (parallelism < 1) throw std::invalid_argument("run_grid: parallelism must be >= 1");
  const auto configs = expand_grid(grid);
  GridResult res;
  res.records.resize(configs.size());
  std::atomic<std::size_t> next{0};
  std::mutex done_mu;

  auto worker = [&] {
    for (std::size_t i = next++; i < configs.size(); i = next++) {
      const auto& c = configs[i];
      RunOptions opt;
      opt.run_id = run_id_for(i, c);
      opt.classifier = classifier;
      if (out_dir) opt.out_dir = *out_dir / opt.run_id;
      RunRecord r;
      try {
        r = train_run(c, data, c.total_steps, {}, opt).record;
      } catch (const std::exception& e) {
        r.run_id = opt.run_id;
        r.config = c;
        r.seed = c.seed;
        r.status = RunStatus::kFailed;
        r.diagnostic = e.what();
      }
      if (on_done) {
        std::lock_guard lock(done_mu);
        on_done(r);
      }
      res.records[i] = std::move(r);
    }
  };
  const std::size_t n = std::min(parallelism, std::max<std::size_t>(1, configs.size()));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  res.histograms = histograms_from_scores(score_rows(res.records), grid.histogram);
  if (out_dir) res.files = report(res.records, grid.histogram, *out_dir);
  return res;
}

// ---------------------------------------------------------------------------
// Margin sweep
// ---------------------------------------------------------------------------

inline const std::vector<double> kMarginSweep{1, 2, 4, 6, 8, 12, 16, 32};

struct SweepRow {
  double margin = 0.0;
  RunRecord record;
};

/// One EBGAN run per margin value, everything else held fixed. Writes a run
/// directory per margin and margin_sweep.csv.
inline std::vector<SweepRow> margin_sweep(const ExperimentConfig& base, const Dataset& data,
                                          const std::vector<double>& margins, const ProxyClassifier* classifier,
                                          const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<SweepRow> rows;
  for (double m : margins) {
    ExperimentConfig c = base;
    c.framework = Framework::kEbgan;
    c.margin.m0 = m;
    RunOptions opt;
    char buf[32];
    std::snprintf(buf, sizeof buf, "m_%g", m);
    opt.run_id = buf;
    opt.out_dir = out_dir / buf;
    opt.classifier = classifier;
    rows.push_back({m, train_run(c, data, c.total_steps, {}, opt).record});
  }
  std::ostringstream os;
  os << "margin,status,steps,e_real,e_fake,loss_d,loss_g,iprime,samples\n";
  for (const auto& [m, r] : rows) {
    using detail::fmt_double;
    os << fmt_double(m) << ',' << to_string(r.status) << ',' << r.steps_completed << ','
       << (r.last_metrics ? fmt_double(r.last_metrics->e_real) : "") << ','
       << (r.last_metrics ? fmt_double(r.last_metrics->e_fake) : "") << ','
       << (r.last_metrics ? fmt_double(r.last_metrics->loss_d) : "") << ','
       << (r.last_metrics ? fmt_double(r.last_metrics->loss_g) : "") << ','
       << (r.iprime ? fmt_double(*r.iprime) : "") << ','
       << (r.sample_paths.empty() ? "" : r.sample_paths.back()) << '\n';
  }
  write_file_atomic(out_dir / "margin_sweep.csv", os.str());
  return rows;
}

// ---------------------------------------------------------------------------
// Proxy classifier for digits
// ---------------------------------------------------------------------------

inline constexpr double kClassifierGate = 0.97;

struct GatedClassifier {
  ProxyClassifier classifier;
  double held_out_accuracy = 0.0;
};

/// Trains on one synthetic-digit draw and measures accuracy on a disjoint
/// draw (different seed). Throws if accuracy is under the gate.
inline GatedClassifier train_digit_classifier(const DigitsSpec& train_spec, const ClassifierOptions& opt = {}) {
  const Dataset train = gen_synth_digits(train_spec);
  DigitsSpec test_spec = train_spec;
  test_spec.seed = train_spec.seed + 1000003;
  test_spec.count = std::max<std::size_t>(2000, train_spec.count / 5);
  const Dataset test = gen_synth_digits(test_spec);
  GatedClassifier g{train_proxy_classifier(train, 10, opt), 0.0};
  g.held_out_accuracy = g.classifier.accuracy(test);
  if (g.held_out_accuracy < kClassifierGate) {
    throw std::runtime_error("proxy classifier held-out accuracy " + detail::fmt_double(g.held_out_accuracy) +
                             " is below the 0.97 gate");
  }
  return g;
}

}  // namespace eblab
