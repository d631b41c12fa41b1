#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "eblab/autodiff.hpp"
#include "eblab/rng.hpp"
#include "eblab/tensor.hpp"

namespace eblab {

enum class Activation { kNone, kRelu, kTanh, kSigmoid };

/// Weight layer followed by optional batch normalization, an activation and
/// optional dropout. Layers with batch normalization carry no separate bias;
/// the normalization shift plays that role.
struct DenseLayer {
  Tensor weight;  ///< [in, out]
  Tensor bias;    ///< [out]; empty when batchnorm is set
  bool batchnorm = false;
  Tensor bn_beta;   ///< [out]
  Tensor bn_gamma;  ///< [out]; empty when the scale is disabled
  BatchNormStats running;
  Activation activation = Activation::kRelu;
  bool dropout = false;

  std::size_t in_dim() const { return weight.shape()[0]; }
  std::size_t out_dim() const { return weight.shape()[1]; }
};

struct ForwardMode {
  bool training = true;
  double dropout_rate = 0.5;
  double bn_eps = 1e-5;
  double bn_momentum = 0.9;
  Rng* dropout_rng = nullptr;  ///< required when training with dropout layers
};

struct LayerSpec {
  std::size_t out_dim = 0;
  bool batchnorm = false;
  bool bn_gamma = true;
  Activation activation = Activation::kRelu;
  bool dropout = false;
};

/// Plain multilayer perceptron; the building block for every network here.
class Mlp {
 public:
  Mlp() = default;

  Mlp(std::size_t in_dim, std::span<const LayerSpec> specs) {
    std::size_t in = in_dim;
    for (const LayerSpec& s : specs) {
      if (in == 0 || s.out_dim == 0) throw std::invalid_argument("Mlp: layer sizes must be positive");
      DenseLayer l;
      l.weight = Tensor({in, s.out_dim}, 0.0);
      l.batchnorm = s.batchnorm;
      if (s.batchnorm) {
        l.bn_beta = Tensor({s.out_dim}, 0.0);
        if (s.bn_gamma) l.bn_gamma = Tensor({s.out_dim}, 1.0);
        l.running = {Tensor({s.out_dim}, 0.0), Tensor({s.out_dim}, 1.0)};
      } else {
        l.bias = Tensor({s.out_dim}, 0.0);
      }
      l.activation = s.activation;
      l.dropout = s.dropout;
      layers_.push_back(std::move(l));
      in = s.out_dim;
    }
  }

  std::size_t depth() const { return layers_.size(); }
  std::size_t in_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim(); }
  std::size_t out_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim(); }
  std::vector<DenseLayer>& layers() { return layers_; }
  const std::vector<DenseLayer>& layers() const { return layers_; }

  /// Trainable tensors in a fixed order: per layer weight, bias|beta, gamma.
  std::vector<Tensor*> parameters() {
    std::vector<Tensor*> out;
    for (DenseLayer& l : layers_) {
      out.push_back(&l.weight);
      out.push_back(l.batchnorm ? &l.bn_beta : &l.bias);
      if (l.batchnorm && !l.bn_gamma.empty()) out.push_back(&l.bn_gamma);
    }
    return out;
  }

  std::vector<const Tensor*> parameters() const {
    std::vector<const Tensor*> out;
    for (Tensor* t : const_cast<Mlp*>(this)->parameters()) out.push_back(t);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const Tensor* t : parameters()) n += t->size();
    return n;
  }

  /// Enters the parameters into `g` as leaves, in parameters() order.
  std::vector<Var> bind(Graph& g, bool requires_grad) const {
    std::vector<Var> vars;
    for (const Tensor* t : parameters()) vars.push_back(g.leaf(*t, requires_grad));
    return vars;
  }

  /// Forward pass. `pre_dropout`, when given, receives each layer's output
  /// after its activation but before dropout.
  Var forward(Graph&, std::span<const Var> params, Var x, const ForwardMode& mode,
              std::vector<Var>* pre_dropout = nullptr) {
    std::size_t p = 0;
    Var h = x;
    if (h.value().rank() != 2 || h.value().cols() != in_dim()) {
      throw ShapeError("Mlp: input " + shape_string(h.value().shape()) + " for in_dim " +
                       std::to_string(in_dim()));
    }
    for (DenseLayer& l : layers_) {
      h = matmul(h, params[p++]);
      if (l.batchnorm) {
        Var beta = params[p++];
        std::optional<Var> gamma;
        if (!l.bn_gamma.empty()) gamma = params[p++];
        BatchNormOptions bo;
        bo.training = mode.training;
        bo.eps = mode.bn_eps;
        bo.momentum = mode.bn_momentum;
        bo.running = &l.running;
        h = batchnorm(h, beta, gamma, bo);
      } else {
        h = add_bias(h, params[p++]);
      }
      switch (l.activation) {
        case Activation::kRelu: h = relu(h); break;
        case Activation::kTanh: h = tanh(h); break;
        case Activation::kSigmoid: h = sigmoid(h); break;
        case Activation::kNone: break;
      }
      if (pre_dropout) pre_dropout->push_back(h);
      if (l.dropout && mode.training && mode.dropout_rate > 0.0) {
        if (!mode.dropout_rng) throw std::invalid_argument("Mlp: dropout needs an rng");
        h = eblab::dropout(h, mode.dropout_rate, true, *mode.dropout_rng);
      }
    }
    return h;
  }

  /// Named tensors including running statistics, for checkpoints.
  std::vector<std::pair<std::string, Tensor>> state(const std::string& prefix) const {
    std::vector<std::pair<std::string, Tensor>> out;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const DenseLayer& l = layers_[i];
      const std::string k = prefix + "layer" + std::to_string(i) + ".";
      out.emplace_back(k + "weight", l.weight);
      if (l.batchnorm) {
        out.emplace_back(k + "bn_beta", l.bn_beta);
        if (!l.bn_gamma.empty()) out.emplace_back(k + "bn_gamma", l.bn_gamma);
        out.emplace_back(k + "running_mean", l.running.mean);
        out.emplace_back(k + "running_var", l.running.var);
      } else {
        out.emplace_back(k + "bias", l.bias);
      }
    }
    return out;
  }

  /// Loads tensors written by state(); names and shapes must match exactly.
  void load_state(const std::vector<std::pair<std::string, Tensor>>& tensors, const std::string& prefix) {
    auto find = [&](const std::string& name, const Tensor& like) -> const Tensor& {
      for (const auto& [k, t] : tensors) {
        if (k != name) continue;
        if (t.shape() != like.shape()) throw ShapeError("checkpoint: shape mismatch for " + name);
        return t;
      }
      throw std::runtime_error("checkpoint: missing tensor " + name);
    };
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      DenseLayer& l = layers_[i];
      const std::string k = prefix + "layer" + std::to_string(i) + ".";
      l.weight = find(k + "weight", l.weight);
      if (l.batchnorm) {
        l.bn_beta = find(k + "bn_beta", l.bn_beta);
        if (!l.bn_gamma.empty()) l.bn_gamma = find(k + "bn_gamma", l.bn_gamma);
        l.running.mean = find(k + "running_mean", l.running.mean);
        l.running.var = find(k + "running_var", l.running.var);
      } else {
        l.bias = find(k + "bias", l.bias);
      }
    }
  }

 private:
  std::vector<DenseLayer> layers_;
};

struct NetOptions {
  bool batchnorm = true;
  bool bn_gamma = true;
};

enum class NetRole { kGenerator, kDiscriminator };

/// Standard deviations for weight initialization, by role.
inline constexpr double kGeneratorInitStd = 0.02;
inline constexpr double kDiscriminatorInitStd = 0.002;

/// Weights ~ N(0, std(role)), biases and shifts 0, scales 1. Draw order is
/// layer by layer, row-major within each weight.
inline void init_weights(Mlp& net, NetRole role, Rng& rng) {
  const double stddev = role == NetRole::kGenerator ? kGeneratorInitStd : kDiscriminatorInitStd;
  for (DenseLayer& l : net.layers()) {
    for (double& w : l.weight.values()) w = rng.normal(0.0, stddev);
    if (l.batchnorm) {
      l.bn_beta.fill(0.0);
      if (!l.bn_gamma.empty()) l.bn_gamma.fill(1.0);
      l.running.mean.fill(0.0);
      l.running.var.fill(1.0);
    } else {
      l.bias.fill(0.0);
    }
  }
}

// ---------------------------------------------------------------------------
// Generator
// ---------------------------------------------------------------------------

/// Samples from the latent prior, N(0,1) per coordinate.
struct LatentSpec {
  std::size_t dim = 100;

  Tensor sample(std::size_t batch, Rng& rng) const {
    Tensor z({batch, dim});
    for (double& v : z.values()) v = rng.normal();
    return z;
  }
};

/// MLP generator: (n-1) x [linear, batchnorm, relu] then [linear, tanh].
class GeneratorNet {
 public:
  GeneratorNet() = default;

  GeneratorNet(std::size_t latent_dim, std::size_t output_dim, std::size_t n_layers, std::size_t hidden,
               const NetOptions& opt = {})
      : latent_{latent_dim} {
    if (n_layers < 1) throw std::invalid_argument("GeneratorNet: needs at least one layer");
    std::vector<LayerSpec> specs;
    for (std::size_t i = 0; i + 1 < n_layers; ++i) {
      specs.push_back({hidden, opt.batchnorm, opt.bn_gamma, Activation::kRelu, false});
    }
    specs.push_back({output_dim, false, false, Activation::kTanh, false});
    mlp_ = Mlp(latent_dim, specs);
  }

  const LatentSpec& latent() const { return latent_; }
  std::size_t latent_dim() const { return latent_.dim; }
  std::size_t output_dim() const { return mlp_.out_dim(); }
  std::size_t n_layers() const { return mlp_.depth(); }
  Mlp& mlp() { return mlp_; }
  const Mlp& mlp() const { return mlp_; }

  void init(Rng& rng) { init_weights(mlp_, NetRole::kGenerator, rng); }

  Var forward(Graph& g, std::span<const Var> params, Var z, const ForwardMode& mode) {
    if (z.value().rank() != 2 || z.value().cols() != latent_dim()) {
      throw ShapeError("generate: latent batch " + shape_string(z.value().shape()));
    }
    return mlp_.forward(g, params, z, mode);
  }

  /// Evaluates G(z) outside any training graph.
  Tensor generate(const Tensor& z, bool training = false) {
    Graph g;
    auto params = mlp_.bind(g, false);
    ForwardMode mode;
    mode.training = training;
    return forward(g, params, g.constant(z), mode).value();
  }

 private:
  LatentSpec latent_;
  Mlp mlp_;
};

// ---------------------------------------------------------------------------
// Discriminators
// ---------------------------------------------------------------------------

enum class EnergyNorm { kEuclidean, kSquared };

struct EnergyVars {
  Var energies;         ///< [n]
  Var representations;  ///< [n, s]
};

/// Per-sample energies and encoder representations.
struct EnergyOutput {
  Tensor energies;
  Tensor representations;
};

/// Auto-encoder energy D(x) = ||Dec(Enc(x)) - x||. The encoder's first layer
/// (the discriminator input layer) has no batch normalization; the decoder is
/// a single linear layer back to input space.
class AutoEncoderDiscriminator {
 public:
  AutoEncoderDiscriminator() = default;

  /// `n_layers` counts encoder and decoder layers together.
  AutoEncoderDiscriminator(std::size_t input_dim, std::size_t n_layers, std::size_t hidden, bool dropout,
                           const NetOptions& opt = {}, EnergyNorm norm = EnergyNorm::kEuclidean)
      : AutoEncoderDiscriminator(input_dim, n_layers < 1 ? 0 : n_layers - 1, 1, hidden, dropout, opt, norm) {}

  AutoEncoderDiscriminator(std::size_t input_dim, std::size_t encoder_layers, std::size_t decoder_layers,
                           std::size_t hidden, bool dropout, const NetOptions& opt, EnergyNorm norm)
      : norm_(norm) {
    if (decoder_layers != 1) {
      throw std::invalid_argument("AutoEncoderDiscriminator: decoder must be exactly one layer");
    }
    if (encoder_layers < 1) {
      throw std::invalid_argument("AutoEncoderDiscriminator: needs at least two layers in total");
    }
    std::vector<LayerSpec> enc;
    for (std::size_t i = 0; i < encoder_layers; ++i) {
      enc.push_back({hidden, opt.batchnorm && i > 0, opt.bn_gamma, Activation::kRelu, dropout});
    }
    encoder_ = Mlp(input_dim, enc);
    const LayerSpec dec{input_dim, false, false, Activation::kNone, false};
    decoder_ = Mlp(hidden, std::span<const LayerSpec>(&dec, 1));
  }

  std::size_t input_dim() const { return encoder_.in_dim(); }
  std::size_t representation_dim() const { return encoder_.out_dim(); }
  std::size_t n_layers() const { return encoder_.depth() + decoder_.depth(); }
  std::size_t encoder_layers() const { return encoder_.depth(); }
  std::size_t decoder_layers() const { return decoder_.depth(); }
  EnergyNorm norm() const { return norm_; }
  Mlp& encoder() { return encoder_; }
  Mlp& decoder() { return decoder_; }
  const Mlp& encoder() const { return encoder_; }
  const Mlp& decoder() const { return decoder_; }

  void init(Rng& rng) {
    init_weights(encoder_, NetRole::kDiscriminator, rng);
    init_weights(decoder_, NetRole::kDiscriminator, rng);
  }

  std::vector<Tensor*> parameters() {
    auto p = encoder_.parameters();
    for (Tensor* t : decoder_.parameters()) p.push_back(t);
    return p;
  }

  std::size_t parameter_count() const { return encoder_.parameter_count() + decoder_.parameter_count(); }

  std::vector<Var> bind(Graph& g, bool requires_grad) const {
    auto p = encoder_.bind(g, requires_grad);
    for (Var v : decoder_.bind(g, requires_grad)) p.push_back(v);
    return p;
  }

  /// Representations are the encoder's last activation, before dropout.
  EnergyVars energy(Graph& g, std::span<const Var> params, Var x, const ForwardMode& mode) {
    const std::size_t n_enc = encoder_.parameters().size();
    std::vector<Var> acts;
    Var code = encoder_.forward(g, params.subspan(0, n_enc), x, mode, &acts);
    Var recon = decoder_.forward(g, params.subspan(n_enc), code, mode);
    Var diff = sub(recon, x);
    Var e = norm_ == EnergyNorm::kEuclidean ? euclidean_norm_rowwise(diff) : squared_l2_rowwise(diff);
    return {e, acts.back()};
  }

  EnergyOutput ae_energy(const Tensor& x, bool training, Rng* dropout_rng = nullptr) {
    Graph g;
    auto params = bind(g, false);
    ForwardMode mode;
    mode.training = training;
    mode.dropout_rng = dropout_rng;
    auto ev = energy(g, params, g.constant(x), mode);
    return {ev.energies.value(), ev.representations.value()};
  }

  std::vector<std::pair<std::string, Tensor>> state() const {
    auto s = encoder_.state("enc.");
    for (auto& kv : decoder_.state("dec.")) s.push_back(std::move(kv));
    return s;
  }

  void load_state(const std::vector<std::pair<std::string, Tensor>>& tensors) {
    encoder_.load_state(tensors, "enc.");
    decoder_.load_state(tensors, "dec.");
  }

 private:
  Mlp encoder_;
  Mlp decoder_;
  EnergyNorm norm_ = EnergyNorm::kEuclidean;
};

/// Binary classifier producing a probability per sample.
class LogisticDiscriminator {
 public:
  LogisticDiscriminator() = default;

  LogisticDiscriminator(std::size_t input_dim, std::size_t n_layers, std::size_t hidden, bool dropout,
                        const NetOptions& opt = {}) {
    if (n_layers < 1) throw std::invalid_argument("LogisticDiscriminator: needs at least one layer");
    std::vector<LayerSpec> specs;
    for (std::size_t i = 0; i + 1 < n_layers; ++i) {
      specs.push_back({hidden, opt.batchnorm && i > 0, opt.bn_gamma, Activation::kRelu, dropout});
    }
    specs.push_back({1, false, false, Activation::kSigmoid, false});
    mlp_ = Mlp(input_dim, specs);
  }

  std::size_t input_dim() const { return mlp_.in_dim(); }
  std::size_t n_layers() const { return mlp_.depth(); }
  Mlp& mlp() { return mlp_; }
  const Mlp& mlp() const { return mlp_; }

  void init(Rng& rng) { init_weights(mlp_, NetRole::kDiscriminator, rng); }

  std::vector<Tensor*> parameters() { return mlp_.parameters(); }
  std::size_t parameter_count() const { return mlp_.parameter_count(); }
  std::vector<Var> bind(Graph& g, bool requires_grad) const { return mlp_.bind(g, requires_grad); }

  /// Probabilities as [n].
  Var score(Graph& g, std::span<const Var> params, Var x, const ForwardMode& mode) {
    Var p = mlp_.forward(g, params, x, mode);
    return reshape(p, {p.value().rows()});
  }

  Tensor logistic_score(const Tensor& x, bool training = false, Rng* dropout_rng = nullptr) {
    Graph g;
    auto params = bind(g, false);
    ForwardMode mode;
    mode.training = training;
    mode.dropout_rng = dropout_rng;
    return score(g, params, g.constant(x), mode).value();
  }

  std::vector<std::pair<std::string, Tensor>> state() const { return mlp_.state("logit."); }
  void load_state(const std::vector<std::pair<std::string, Tensor>>& t) { mlp_.load_state(t, "logit."); }

 private:
  Mlp mlp_;
};

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------
//
// Text layout, one record per tensor:
//
//   eblab-checkpoint 1
//   tensor <name> <rank> <extent>...
//   <value> <value> ...            (all values on one line, %.17g)
//   end
//
// %.17g round-trips every double exactly.

using NamedTensors = std::vector<std::pair<std::string, Tensor>>;

inline void save_checkpoint(const std::filesystem::path& path, const NamedTensors& tensors) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + tmp.string());
    out << "eblab-checkpoint 1\n";
    char buf[32];
    for (const auto& [name, t] : tensors) {
      if (name.find_first_of(" \t\n") != std::string::npos) throw std::invalid_argument("checkpoint: bad name");
      out << "tensor " << name << ' ' << t.rank();
      for (auto e : t.shape()) out << ' ' << e;
      out << '\n';
      for (std::size_t i = 0; i < t.size(); ++i) {
        std::snprintf(buf, sizeof buf, "%.17g", t[i]);
        out << (i ? " " : "") << buf;
      }
      out << '\n';
    }
    out << "end\n";
    if (!out) throw std::runtime_error("checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline NamedTensors load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "eblab-checkpoint" || version != 1) throw std::runtime_error("checkpoint: bad header");
  NamedTensors out;
  std::string word;
  while (in >> word) {
    if (word == "end") return out;
    if (word != "tensor") throw std::runtime_error("checkpoint: unexpected token " + word);
    std::string name;
    std::size_t rank = 0;
    in >> name >> rank;
    Shape shape(rank);
    for (auto& e : shape) in >> e;
    if (!in) throw std::runtime_error("checkpoint: malformed header for " + name);
    std::vector<double> values(shape_size(shape));
    for (auto& v : values) {
      std::string tok;
      in >> tok;
      v = std::stod(tok);
    }
    if (!in) throw std::runtime_error("checkpoint: truncated values for " + name);
    out.emplace_back(name, Tensor(std::move(shape), std::move(values)));
  }
  throw std::runtime_error("checkpoint: missing end marker");
}

}  // namespace eblab
