#pragma once

// Experiment configuration and the hyper-parameter grid.
//
// Config files are flat `key = value` lines; `#` starts a comment. Unknown
// keys are errors. Grid files use the same syntax, where axis keys take a
// comma-separated list of values.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "eblab/metrics.hpp"
#include "eblab/nets.hpp"
#include "eblab/objectives.hpp"
#include "eblab/optim.hpp"

namespace eblab {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

enum class Framework { kEbgan, kGan };

inline const char* to_string(Framework f) { return f == Framework::kEbgan ? "ebgan" : "gan"; }

struct ExperimentConfig {
  Framework framework = Framework::kEbgan;
  std::size_t n_layer_g = 3;  // nLayerG
  std::size_t n_layer_d = 2;  // nLayerD, encoder + decoder for EBGAN
  std::size_t size_g = 128;
  std::size_t size_d = 128;
  bool dropout_d = false;
  OptimizerKind optim_d = OptimizerKind::kAdam;
  OptimizerKind optim_g = OptimizerKind::kAdam;
  double lr = 0.001;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double lr_decay_start = 1.0;  ///< fraction of total_steps; >= 1 disables decay
  MarginSchedule margin = MarginSchedule::constant(10.0);
  double lambda_pt = 0.0;
  EnergyNorm energy_norm = EnergyNorm::kEuclidean;
  bool batchnorm = true;
  bool bn_gamma = true;
  double dropout_rate = 0.5;
  std::size_t latent_dim = 100;
  std::size_t batch_size = 64;
  std::int64_t total_steps = 2000;
  std::uint64_t seed = 1;
  std::string dataset = "digits";  ///< digits | ring | idx
  std::size_t dataset_size = 10000;
  std::uint64_t dataset_seed = 1;
  std::string idx_images;
  std::string idx_labels;
  std::size_t idx_pad = 0;
  std::size_t ring_modes = 8;
  double ring_radius = 2.0;
  double ring_std = 0.05;
  double digits_noise = 0.1;
  std::int64_t log_interval = 100;
  std::int64_t snapshot_interval = 0;  ///< 0: initial and final only
  std::size_t eval_samples = 1000;
  std::int64_t margin_estimate_steps = 2000;
  bool grid_mode = false;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

// Legal values in the original grid.
inline const std::vector<std::size_t> kGridLayers{2, 3, 4, 5};
inline const std::vector<std::size_t> kGridSizeG{400, 800, 1600, 3200};
inline const std::vector<std::size_t> kGridSizeD{128, 256, 512, 1024};
inline const std::vector<double> kGridLr{0.01, 0.001, 0.0001};
inline constexpr double kEbganGridLr = 0.001;
inline constexpr double kEbganGridMargin = 10.0;

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) os << ", ";
    if constexpr (std::is_floating_point_v<T>) os << fmt_double(v[i]);
    else os << v[i];
  }
  return os.str();
}

inline std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw ConfigError("empty list element in '" + v + "'");
    out.push_back(item);
  }
  if (out.empty()) throw ConfigError("empty value");
  return out;
}

inline std::size_t parse_size(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
    const auto r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return static_cast<std::size_t>(r);
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  }
}

inline std::int64_t parse_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const auto r = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return r;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
}

inline double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument("trailing");
    return r;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(key + ": expected true/false, got '" + v + "'");
}

inline OptimizerKind parse_optim(const std::string& key, std::string v) {
  std::transform(v.begin(), v.end(), v.begin(), ::tolower);
  if (v == "adam") return OptimizerKind::kAdam;
  if (v == "sgd") return OptimizerKind::kSgd;
  throw ConfigError(key + ": expected adam or sgd, got '" + v + "'");
}

inline Framework parse_framework(const std::string& key, const std::string& v) {
  if (v == "ebgan") return Framework::kEbgan;
  if (v == "gan") return Framework::kGan;
  throw ConfigError(key + ": expected ebgan or gan, got '" + v + "'");
}

/// Ordered key/value pairs of a config-style file.
inline std::vector<std::pair<std::string, std::string>> read_key_values(std::istream& in) {
  std::vector<std::pair<std::string, std::string>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    for (const auto& [k, _] : out)
      if (k == key) throw ConfigError("duplicate key '" + key + "'");
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

}  // namespace detail

/// Applies one key. Returns false for unknown keys.
inline bool set_config_key(ExperimentConfig& c, const std::string& key, const std::string& v) {
  using namespace detail;
  if (key == "framework") c.framework = parse_framework(key, v);
  else if (key == "nLayerG") c.n_layer_g = parse_size(key, v);
  else if (key == "nLayerD") c.n_layer_d = parse_size(key, v);
  else if (key == "sizeG") c.size_g = parse_size(key, v);
  else if (key == "sizeD") c.size_d = parse_size(key, v);
  else if (key == "dropoutD") c.dropout_d = parse_bool(key, v);
  else if (key == "optimD") c.optim_d = parse_optim(key, v);
  else if (key == "optimG") c.optim_g = parse_optim(key, v);
  else if (key == "lr") c.lr = parse_double(key, v);
  else if (key == "adam_beta1") c.adam_beta1 = parse_double(key, v);
  else if (key == "adam_beta2") c.adam_beta2 = parse_double(key, v);
  else if (key == "adam_eps") c.adam_eps = parse_double(key, v);
  else if (key == "lr_decay_start") c.lr_decay_start = parse_double(key, v);
  else if (key == "margin") c.margin.m0 = parse_double(key, v);
  else if (key == "margin_schedule") {
    if (v == "constant") c.margin.kind = MarginKind::kConstant;
    else if (v == "linear") c.margin.kind = MarginKind::kLinear;
    else throw ConfigError("margin_schedule: expected constant or linear, got '" + v + "'");
  } else if (key == "margin_decay_end") c.margin.decay_end_step = parse_int(key, v);
  else if (key == "lambda_pt") c.lambda_pt = parse_double(key, v);
  else if (key == "energy_norm") {
    if (v == "euclidean") c.energy_norm = EnergyNorm::kEuclidean;
    else if (v == "squared") c.energy_norm = EnergyNorm::kSquared;
    else throw ConfigError("energy_norm: expected euclidean or squared, got '" + v + "'");
  } else if (key == "batchnorm") c.batchnorm = parse_bool(key, v);
  else if (key == "bn_gamma") c.bn_gamma = parse_bool(key, v);
  else if (key == "dropout_rate") c.dropout_rate = parse_double(key, v);
  else if (key == "latent_dim") c.latent_dim = parse_size(key, v);
  else if (key == "batch_size") c.batch_size = parse_size(key, v);
  else if (key == "total_steps") c.total_steps = parse_int(key, v);
  else if (key == "seed") c.seed = parse_size(key, v);
  else if (key == "dataset") c.dataset = v;
  else if (key == "dataset_size") c.dataset_size = parse_size(key, v);
  else if (key == "dataset_seed") c.dataset_seed = parse_size(key, v);
  else if (key == "idx_images") c.idx_images = v;
  else if (key == "idx_labels") c.idx_labels = v;
  else if (key == "idx_pad") c.idx_pad = parse_size(key, v);
  else if (key == "ring_modes") c.ring_modes = parse_size(key, v);
  else if (key == "ring_radius") c.ring_radius = parse_double(key, v);
  else if (key == "ring_std") c.ring_std = parse_double(key, v);
  else if (key == "digits_noise") c.digits_noise = parse_double(key, v);
  else if (key == "log_interval") c.log_interval = parse_int(key, v);
  else if (key == "snapshot_interval") c.snapshot_interval = parse_int(key, v);
  else if (key == "eval_samples") c.eval_samples = parse_size(key, v);
  else if (key == "margin_estimate_steps") c.margin_estimate_steps = parse_int(key, v);
  else if (key == "grid_mode") c.grid_mode = parse_bool(key, v);
  else return false;
  return true;
}

namespace detail {

template <typename T>
void require_member(const char* key, const T& v, const std::vector<T>& legal) {
  if (std::find(legal.begin(), legal.end(), v) == legal.end()) {
    std::ostringstream os;
    os << key << " = ";
    if constexpr (std::is_floating_point_v<T>) os << fmt_double(v);
    else os << v;
    os << " is not a grid value; legal values: " << join(legal);
    throw ConfigError(os.str());
  }
}

}  // namespace detail

/// Structural checks, plus the original grid's legal values and EBGAN
/// restrictions when grid_mode is set.
inline void validate_config(const ExperimentConfig& c) {
  if (c.n_layer_g < 1) throw ConfigError("nLayerG must be >= 1");
  if (c.framework == Framework::kEbgan && c.n_layer_d < 2) {
    throw ConfigError("nLayerD must be >= 2 for EBGAN: the decoder is fixed to one layer");
  }
  if (c.n_layer_d < 1) throw ConfigError("nLayerD must be >= 1");
  if (c.size_g < 1 || c.size_d < 1) throw ConfigError("sizeG and sizeD must be >= 1");
  if (!(c.lr >= 0.0)) throw ConfigError("lr must be >= 0");
  if (!(c.lambda_pt >= 0.0)) throw ConfigError("lambda_pt must be >= 0");
  if (!(c.dropout_rate >= 0.0 && c.dropout_rate < 1.0)) throw ConfigError("dropout_rate must be in [0,1)");
  if (c.latent_dim < 1) throw ConfigError("latent_dim must be >= 1");
  if (c.batch_size < 2) throw ConfigError("batch_size must be >= 2");
  if (c.total_steps < 0) throw ConfigError("total_steps must be >= 0");
  if (c.log_interval < 1) throw ConfigError("log_interval must be >= 1");
  if (c.snapshot_interval < 0) throw ConfigError("snapshot_interval must be >= 0");
  if (c.eval_samples < 1) throw ConfigError("eval_samples must be >= 1");
  if (c.dataset != "digits" && c.dataset != "ring" && c.dataset != "idx") {
    throw ConfigError("dataset must be digits, ring or idx");
  }
  if (c.dataset == "idx" && c.idx_images.empty()) throw ConfigError("dataset = idx requires idx_images");
  try {
    c.margin.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  if (!c.grid_mode) return;
  detail::require_member("nLayerG", c.n_layer_g, kGridLayers);
  detail::require_member("nLayerD", c.n_layer_d, kGridLayers);
  detail::require_member("sizeG", c.size_g, kGridSizeG);
  detail::require_member("sizeD", c.size_d, kGridSizeD);
  detail::require_member("lr", c.lr, kGridLr);
  if (c.framework == Framework::kEbgan) {
    if (c.optim_d != OptimizerKind::kAdam || c.optim_g != OptimizerKind::kAdam) {
      throw ConfigError("EBGAN grid runs use adam for both G and D");
    }
    if (c.lr != kEbganGridLr) throw ConfigError("EBGAN grid runs use lr = 0.001");
    if (c.margin.kind != MarginKind::kConstant || c.margin.m0 != kEbganGridMargin) {
      throw ConfigError("EBGAN grid runs use a constant margin of 10");
    }
  }
}

inline ExperimentConfig parse_config(std::istream& in) {
  ExperimentConfig c;
  for (const auto& [k, v] : detail::read_key_values(in)) {
    if (!set_config_key(c, k, v)) throw ConfigError("unknown key '" + k + "'");
  }
  validate_config(c);
  return c;
}

inline ExperimentConfig parse_config_string(const std::string& text) {
  std::istringstream in(text);
  return parse_config(in);
}

inline ExperimentConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return parse_config(in);
}

/// Every key, in a fixed order; parse_config(serialize_config(c)) == c.
inline std::string serialize_config(const ExperimentConfig& c) {
  using detail::fmt_double;
  std::ostringstream os;
  auto b = [](bool v) { return v ? "true" : "false"; };
  os << "framework = " << to_string(c.framework) << '\n'
     << "nLayerG = " << c.n_layer_g << '\n'
     << "nLayerD = " << c.n_layer_d << '\n'
     << "sizeG = " << c.size_g << '\n'
     << "sizeD = " << c.size_d << '\n'
     << "dropoutD = " << b(c.dropout_d) << '\n'
     << "optimD = " << to_string(c.optim_d) << '\n'
     << "optimG = " << to_string(c.optim_g) << '\n'
     << "lr = " << fmt_double(c.lr) << '\n'
     << "adam_beta1 = " << fmt_double(c.adam_beta1) << '\n'
     << "adam_beta2 = " << fmt_double(c.adam_beta2) << '\n'
     << "adam_eps = " << fmt_double(c.adam_eps) << '\n'
     << "lr_decay_start = " << fmt_double(c.lr_decay_start) << '\n'
     << "margin = " << fmt_double(c.margin.m0) << '\n'
     << "margin_schedule = " << (c.margin.kind == MarginKind::kConstant ? "constant" : "linear") << '\n'
     << "margin_decay_end = " << c.margin.decay_end_step << '\n'
     << "lambda_pt = " << fmt_double(c.lambda_pt) << '\n'
     << "energy_norm = " << (c.energy_norm == EnergyNorm::kEuclidean ? "euclidean" : "squared") << '\n'
     << "batchnorm = " << b(c.batchnorm) << '\n'
     << "bn_gamma = " << b(c.bn_gamma) << '\n'
     << "dropout_rate = " << fmt_double(c.dropout_rate) << '\n'
     << "latent_dim = " << c.latent_dim << '\n'
     << "batch_size = " << c.batch_size << '\n'
     << "total_steps = " << c.total_steps << '\n'
     << "seed = " << c.seed << '\n'
     << "dataset = " << c.dataset << '\n'
     << "dataset_size = " << c.dataset_size << '\n'
     << "dataset_seed = " << c.dataset_seed << '\n';
  if (!c.idx_images.empty()) os << "idx_images = " << c.idx_images << '\n';
  if (!c.idx_labels.empty()) os << "idx_labels = " << c.idx_labels << '\n';
  os << "idx_pad = " << c.idx_pad << '\n'
     << "ring_modes = " << c.ring_modes << '\n'
     << "ring_radius = " << fmt_double(c.ring_radius) << '\n'
     << "ring_std = " << fmt_double(c.ring_std) << '\n'
     << "digits_noise = " << fmt_double(c.digits_noise) << '\n'
     << "log_interval = " << c.log_interval << '\n'
     << "snapshot_interval = " << c.snapshot_interval << '\n'
     << "eval_samples = " << c.eval_samples << '\n'
     << "margin_estimate_steps = " << c.margin_estimate_steps << '\n'
     << "grid_mode = " << b(c.grid_mode) << '\n';
  return os.str();
}

/// One-line summary in the style `nLayerG=5, nLayerD=2, sizeG=800, ...`.
inline std::string describe_config(const ExperimentConfig& c) {
  std::ostringstream os;
  os << "nLayerG=" << c.n_layer_g << ", nLayerD=" << c.n_layer_d << ", sizeG=" << c.size_g
     << ", sizeD=" << c.size_d << ", dropoutD=" << (c.dropout_d ? 1 : 0) << ", optimD=" << to_string(c.optim_d)
     << ", optimG=" << to_string(c.optim_g) << ", lr=" << detail::fmt_double(c.lr);
  if (c.framework == Framework::kEbgan) {
    os << ", margin=" << detail::fmt_double(c.margin.m0);
    if (c.lambda_pt > 0.0) os << ", lambda_PT=" << detail::fmt_double(c.lambda_pt);
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Grid
// ---------------------------------------------------------------------------

/// Value lists per axis. Axes expand in the declared order below (framework
/// outermost, lr innermost), then seeds. EBGAN points skip the optimizer and
/// learning-rate axes, which are pinned to adam / 0.001.
struct GridSpec {
  ExperimentConfig base;
  std::vector<Framework> frameworks{Framework::kEbgan};
  std::vector<std::size_t> n_layer;  ///< tied nLayerG = nLayerD axis; replaces the two below when set
  std::vector<std::size_t> n_layer_g{3};
  std::vector<std::size_t> n_layer_d{2};
  std::vector<std::size_t> size_g{128};
  std::vector<std::size_t> size_d{128};
  std::vector<bool> dropout_d{false};
  std::vector<OptimizerKind> optim_d{OptimizerKind::kAdam};
  std::vector<OptimizerKind> optim_g{OptimizerKind::kAdam};
  std::vector<double> lr{0.001};
  std::vector<double> lambda_pt{0.0};
  std::size_t seeds = 1;
  HistogramSpec histogram;

  /// Number of grid points for one framework, before seeds.
  std::size_t points(Framework f) const {
    const std::size_t layers = n_layer.empty() ? n_layer_g.size() * n_layer_d.size() : n_layer.size();
    std::size_t n = layers * size_g.size() * size_d.size() * dropout_d.size();
    if (f == Framework::kEbgan) n *= lambda_pt.size();
    else n *= optim_d.size() * optim_g.size() * lr.size();
    return n;
  }

  std::size_t size() const {
    std::size_t n = 0;
    for (Framework f : frameworks) n += points(f) * seeds;
    return n;
  }
};

/// Cartesian expansion in declared-axis order, seeds innermost. Seeds are
/// base.seed + replicate index.
inline std::vector<ExperimentConfig> expand_grid(const GridSpec& g) {
  if (g.seeds < 1) throw ConfigError("grid: seeds must be >= 1");
  std::vector<std::pair<std::size_t, std::size_t>> layer_pairs;
  if (!g.n_layer.empty()) {
    for (auto l : g.n_layer) layer_pairs.emplace_back(l, l);
  } else {
    for (auto lg : g.n_layer_g)
      for (auto ld : g.n_layer_d) layer_pairs.emplace_back(lg, ld);
  }
  std::vector<ExperimentConfig> out;
  out.reserve(g.size());
  for (Framework f : g.frameworks) {
    const bool eb = f == Framework::kEbgan;
    const std::vector<OptimizerKind> pinned_optim{OptimizerKind::kAdam};
    const std::vector<double> pinned_lr{kEbganGridLr};
    const std::vector<double> no_pt{0.0};
    const auto& od_axis = eb ? pinned_optim : g.optim_d;
    const auto& og_axis = eb ? pinned_optim : g.optim_g;
    const auto& lr_axis = eb ? pinned_lr : g.lr;
    const auto& pt_axis = eb ? g.lambda_pt : no_pt;
    for (const auto& [lg, ld] : layer_pairs)
      for (auto sg : g.size_g)
        for (auto sd : g.size_d)
          for (bool dr : g.dropout_d)
            for (auto od : od_axis)
              for (auto og : og_axis)
                for (double lr : lr_axis)
                  for (double pt : pt_axis)
                    for (std::size_t s = 0; s < g.seeds; ++s) {
                      ExperimentConfig c = g.base;
                      c.framework = f;
                      c.n_layer_g = lg;
                      c.n_layer_d = ld;
                      c.size_g = sg;
                      c.size_d = sd;
                      c.dropout_d = dr;
                      c.optim_d = od;
                      c.optim_g = og;
                      c.lr = lr;
                      c.lambda_pt = pt;
                      c.seed = g.base.seed + s;
                      validate_config(c);
                      out.push_back(std::move(c));
                    }
  }
  return out;
}

/// Grid file: any config key sets the shared base; the axis keys framework,
/// nLayer, nLayerG, nLayerD, sizeG, sizeD, dropoutD, optimD, optimG, lr and
/// lambda_pt take comma-separated lists; `seeds`, `hist_bins`, `hist_lo` and
/// `hist_hi` configure replication and histogram binning.
inline GridSpec parse_grid(std::istream& in) {
  using namespace detail;
  GridSpec g;
  bool split_layers = false;
  for (const auto& [k, v] : read_key_values(in)) {
    auto sizes = [&, &key = k, &val = v] {
      std::vector<std::size_t> r;
      for (const auto& s : split_list(val)) r.push_back(parse_size(key, s));
      return r;
    };
    if (k == "framework") {
      g.frameworks.clear();
      for (const auto& s : split_list(v)) g.frameworks.push_back(parse_framework(k, s));
    } else if (k == "nLayer") g.n_layer = sizes();
    else if (k == "nLayerG" || k == "nLayerD") {
      (k == "nLayerG" ? g.n_layer_g : g.n_layer_d) = sizes();
      split_layers = true;
    }
    else if (k == "sizeG") g.size_g = sizes();
    else if (k == "sizeD") g.size_d = sizes();
    else if (k == "dropoutD") {
      g.dropout_d.clear();
      for (const auto& s : split_list(v)) g.dropout_d.push_back(parse_bool(k, s));
    } else if (k == "optimD" || k == "optimG") {
      auto& axis = k == "optimD" ? g.optim_d : g.optim_g;
      axis.clear();
      for (const auto& s : split_list(v)) axis.push_back(parse_optim(k, s));
    } else if (k == "lr" || k == "lambda_pt") {
      auto& axis = k == "lr" ? g.lr : g.lambda_pt;
      axis.clear();
      for (const auto& s : split_list(v)) axis.push_back(parse_double(k, s));
    } else if (k == "seeds") g.seeds = parse_size(k, v);
    else if (k == "hist_bins") g.histogram.bins = parse_size(k, v);
    else if (k == "hist_lo") g.histogram.lo = parse_double(k, v);
    else if (k == "hist_hi") g.histogram.hi = parse_double(k, v);
    else if (!set_config_key(g.base, k, v)) throw ConfigError("unknown key '" + k + "'");
  }
  if (!g.n_layer.empty() && split_layers) throw ConfigError("nLayer cannot be combined with nLayerG/nLayerD");
  if (g.seeds < 1) throw ConfigError("seeds must be >= 1");
  if (g.histogram.bins < 1 || !(g.histogram.hi > g.histogram.lo)) throw ConfigError("bad histogram binning");
  expand_grid(g);  // validates every point up front
  return g;
}

inline GridSpec parse_grid_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open grid spec " + path.string());
  return parse_grid(in);
}

/// The original hyper-parameter grid, for the given frameworks.
inline GridSpec original_grid(std::vector<Framework> frameworks = {Framework::kEbgan, Framework::kGan}) {
  GridSpec g;
  g.base.grid_mode = true;
  g.frameworks = std::move(frameworks);
  g.n_layer_g = kGridLayers;
  g.n_layer_d = kGridLayers;
  g.size_g = kGridSizeG;
  g.size_d = kGridSizeD;
  g.dropout_d = {true, false};
  g.optim_d = g.optim_g = {OptimizerKind::kAdam, OptimizerKind::kSgd};
  g.lr = kGridLr;
  return g;
}

}  // namespace eblab
