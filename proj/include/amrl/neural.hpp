#pragma once

// Dense feed-forward networks with exact reverse-mode gradients.
//
// Batches are row-major matrices with one sample per row. Parameters are
// stored per layer as an [out x in] weight matrix and an [out] bias vector.
// The flat parameter order used by flatten()/unflatten() and by the saved
// file format is layer-major; inside a layer the weights come first in
// row-major order, followed by the biases.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "amrl/error.hpp"
#include "amrl/rng.hpp"

namespace amrl {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

enum class Activation { relu, tanh, linear };

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::linear: return "linear";
  }
  return "?";
}

inline Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "tanh") return Activation::tanh;
  if (name == "linear") return Activation::linear;
  throw ContractError(detail::concat("unknown activation '", name, "'"));
}

struct LayerParams {
  Matrix weights;  // [out x in]
  Vector biases;   // [out]
  Activation activation = Activation::linear;

  std::size_t in_dim() const { return static_cast<std::size_t>(weights.cols()); }
  std::size_t out_dim() const { return static_cast<std::size_t>(weights.rows()); }
  std::size_t parameter_count() const { return out_dim() * in_dim() + out_dim(); }
};

struct LayerSpec {
  std::size_t units;
  Activation activation;
};

class Network {
 public:
  Network() = default;

  explicit Network(std::vector<LayerParams> layers) : layers_(std::move(layers)) {
    require(!layers_.empty(), "network needs at least one layer");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& l = layers_[i];
      require(l.in_dim() > 0 && l.out_dim() > 0, "layer ", i, " has an empty dimension");
      require(static_cast<std::size_t>(l.biases.size()) == l.out_dim(), "layer ", i,
              " bias length ", l.biases.size(), " != out_dim ", l.out_dim());
      require(l.weights.allFinite() && l.biases.allFinite(), "layer ", i, " has non-finite parameters");
      if (i > 0) {
        require(l.in_dim() == layers_[i - 1].out_dim(), "layer ", i, " in_dim ", l.in_dim(),
                " != previous out_dim ", layers_[i - 1].out_dim());
      }
    }
  }

  // All-zero parameters with the given architecture.
  static Network zeros(std::size_t input_dim, std::initializer_list<LayerSpec> specs) {
    return zeros(input_dim, std::vector<LayerSpec>(specs));
  }

  static Network zeros(std::size_t input_dim, const std::vector<LayerSpec>& specs) {
    std::vector<LayerParams> layers;
    std::size_t in = input_dim;
    for (const auto& s : specs) {
      layers.push_back({Matrix::Zero(static_cast<Eigen::Index>(s.units), static_cast<Eigen::Index>(in)),
                        Vector::Zero(static_cast<Eigen::Index>(s.units)), s.activation});
      in = s.units;
    }
    return Network(std::move(layers));
  }

  std::size_t input_dim() const { return layers_.front().in_dim(); }
  std::size_t output_dim() const { return layers_.back().out_dim(); }
  std::size_t depth() const { return layers_.size(); }

  const std::vector<LayerParams>& layers() const { return layers_; }
  std::vector<LayerParams>& layers() { return layers_; }
  const LayerParams& layer(std::size_t i) const { return layers_.at(i); }
  LayerParams& layer(std::size_t i) { return layers_.at(i); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.parameter_count();
    return n;
  }

  bool same_shape(const Network& other) const {
    if (layers_.size() != other.layers_.size()) return false;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      if (layers_[i].in_dim() != other.layers_[i].in_dim() ||
          layers_[i].out_dim() != other.layers_[i].out_dim() ||
          layers_[i].activation != other.layers_[i].activation)
        return false;
    }
    return true;
  }

  friend bool operator==(const Network& a, const Network& b) {
    if (!a.same_shape(b)) return false;
    for (std::size_t i = 0; i < a.layers_.size(); ++i) {
      if (a.layers_[i].weights != b.layers_[i].weights || a.layers_[i].biases != b.layers_[i].biases)
        return false;
    }
    return true;
  }

 private:
  std::vector<LayerParams> layers_;
};

// Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) for every weight and bias.
inline void init_fan_in_uniform(Network& net, Rng& rng) {
  for (auto& l : net.layers()) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.in_dim()));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index i = 0; i < l.weights.size(); ++i) l.weights.data()[i] = u(rng);
    for (Eigen::Index i = 0; i < l.biases.size(); ++i) l.biases[i] = u(rng);
  }
}

namespace detail {

inline void activate(Matrix& z, Activation a) {
  switch (a) {
    case Activation::relu: z = z.cwiseMax(0.0); break;
    case Activation::tanh: z = z.array().tanh().matrix(); break;
    case Activation::linear: break;
  }
}

// Derivative of the activation expressed through its output.
inline void scale_by_derivative(Matrix& grad, const Matrix& out, Activation a) {
  switch (a) {
    case Activation::relu: grad = (out.array() > 0.0).select(grad, 0.0); break;
    case Activation::tanh: grad.array() *= (1.0 - out.array().square()); break;
    case Activation::linear: break;
  }
}

}  // namespace detail

// Per-layer intermediates of a batched forward pass.
struct ForwardTrace {
  std::vector<Matrix> inputs;   // input to layer i
  Matrix output;                // activations of the last layer
};

inline Matrix forward(const Network& net, const Matrix& x, ForwardTrace* trace = nullptr) {
  require(static_cast<std::size_t>(x.cols()) == net.input_dim(), "forward: input has ", x.cols(),
          " columns, network expects ", net.input_dim());
  require(x.allFinite(), "forward: non-finite input");
  if (trace) trace->inputs.clear();
  Matrix h = x;
  for (const auto& l : net.layers()) {
    if (trace) trace->inputs.push_back(h);
    Matrix z = h * l.weights.transpose();
    z.rowwise() += l.biases.transpose();
    detail::activate(z, l.activation);
    h = std::move(z);
  }
  if (trace) trace->output = h;
  return h;
}

inline Vector forward(const Network& net, const Vector& x) {
  Matrix row = x.transpose();
  return forward(net, row).row(0).transpose();
}

// Parameter-shaped container; used for gradients and optimizer moments.
struct Gradients {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  static Gradients zeros_like(const Network& net) {
    Gradients g;
    for (const auto& l : net.layers()) {
      g.weights.push_back(Matrix::Zero(l.weights.rows(), l.weights.cols()));
      g.biases.push_back(Vector::Zero(l.biases.size()));
    }
    return g;
  }

  bool matches(const Network& net) const {
    if (weights.size() != net.depth() || biases.size() != net.depth()) return false;
    for (std::size_t i = 0; i < net.depth(); ++i) {
      const auto& l = net.layer(i);
      if (weights[i].rows() != l.weights.rows() || weights[i].cols() != l.weights.cols() ||
          biases[i].size() != l.biases.size())
        return false;
    }
    return true;
  }

  double squared_norm() const {
    double s = 0.0;
    for (const auto& w : weights) s += w.squaredNorm();
    for (const auto& b : biases) s += b.squaredNorm();
    return s;
  }

  bool all_finite() const {
    for (const auto& w : weights)
      if (!w.allFinite()) return false;
    for (const auto& b : biases)
      if (!b.allFinite()) return false;
    return true;
  }

  Gradients& operator*=(double k) {
    for (auto& w : weights) w *= k;
    for (auto& b : biases) b *= k;
    return *this;
  }
};

struct BackwardResult {
  Gradients params;  // summed over the batch
  Matrix input_grad;  // one row per sample
};

// Reverse pass for a traced batch. `upstream` holds dLoss/dOutput per row.
inline BackwardResult backward(const Network& net, const ForwardTrace& trace, const Matrix& upstream) {
  require(trace.inputs.size() == net.depth(), "backward: trace does not belong to this network");
  require(upstream.rows() == trace.output.rows() && upstream.cols() == trace.output.cols(),
          "backward: upstream gradient is ", upstream.rows(), "x", upstream.cols(), ", output is ",
          trace.output.rows(), "x", trace.output.cols());

  BackwardResult res;
  res.params.weights.resize(net.depth());
  res.params.biases.resize(net.depth());

  Matrix grad = upstream;
  for (std::size_t k = net.depth(); k-- > 0;) {
    const auto& l = net.layer(k);
    const Matrix& out = (k + 1 < net.depth()) ? trace.inputs[k + 1] : trace.output;
    detail::scale_by_derivative(grad, out, l.activation);
    res.params.weights[k] = grad.transpose() * trace.inputs[k];
    res.params.biases[k] = grad.colwise().sum().transpose();
    grad = grad * l.weights;
  }
  res.input_grad = std::move(grad);
  return res;
}

// Single-sample convenience; recomputes the forward pass.
inline BackwardResult backward(const Network& net, const Vector& x, const Vector& upstream) {
  ForwardTrace trace;
  Matrix row = x.transpose();
  forward(net, row, &trace);
  Matrix up = upstream.transpose();
  return backward(net, trace, up);
}

enum class OptimizerKind { adam, sgd };

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::adam;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clip_norm = 10.0;  // global L2 norm; <= 0 disables
};

struct OptimizerState {
  OptimizerConfig config;
  Gradients first_moment;
  Gradients second_moment;
  std::uint64_t step = 0;

  OptimizerState() = default;
  OptimizerState(const Network& net, OptimizerConfig cfg)
      : config(cfg),
        first_moment(Gradients::zeros_like(net)),
        second_moment(Gradients::zeros_like(net)) {
    require(cfg.learning_rate > 0.0, "learning rate must be positive");
  }
};

// One descent step. Rejects non-finite gradients before touching `net`.
inline void apply_update(Network& net, Gradients grads, OptimizerState& opt) {
  require(grads.matches(net), "apply_update: gradient shape does not match network");
  require(opt.first_moment.matches(net), "apply_update: optimizer state does not match network");
  if (!grads.all_finite()) throw NumericFault("apply_update: non-finite gradient");

  const auto& cfg = opt.config;
  if (cfg.clip_norm > 0.0) {
    const double norm = std::sqrt(grads.squared_norm());
    if (norm > cfg.clip_norm) grads *= cfg.clip_norm / norm;
  }
  ++opt.step;

  if (cfg.kind == OptimizerKind::sgd) {
    for (std::size_t i = 0; i < net.depth(); ++i) {
      net.layer(i).weights -= cfg.learning_rate * grads.weights[i];
      net.layer(i).biases -= cfg.learning_rate * grads.biases[i];
    }
    return;
  }

  const double t = static_cast<double>(opt.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  auto adam = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseProduct(g);
    param.array() -= cfg.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg.epsilon);
  };
  for (std::size_t i = 0; i < net.depth(); ++i) {
    adam(net.layer(i).weights, opt.first_moment.weights[i], opt.second_moment.weights[i], grads.weights[i]);
    adam(net.layer(i).biases, opt.first_moment.biases[i], opt.second_moment.biases[i], grads.biases[i]);
  }
}

inline std::vector<double> flatten(const Network& net) {
  std::vector<double> v;
  v.reserve(net.parameter_count());
  for (const auto& l : net.layers()) {
    v.insert(v.end(), l.weights.data(), l.weights.data() + l.weights.size());
    v.insert(v.end(), l.biases.data(), l.biases.data() + l.biases.size());
  }
  return v;
}

inline Network unflatten(const Network& shape, std::span<const double> v) {
  require(v.size() == shape.parameter_count(), "unflatten: got ", v.size(), " values, network has ",
          shape.parameter_count(), " parameters");
  Network out = shape;
  std::size_t k = 0;
  for (auto& l : out.layers()) {
    std::copy_n(v.begin() + k, l.weights.size(), l.weights.data());
    k += static_cast<std::size_t>(l.weights.size());
    std::copy_n(v.begin() + k, l.biases.size(), l.biases.data());
    k += static_cast<std::size_t>(l.biases.size());
  }
  for (const auto& l : out.layers())
    require(l.weights.allFinite() && l.biases.allFinite(), "unflatten: non-finite parameter");
  return out;
}

// Saved form:
//   {"format": "amrl-network", "version": 1, "input_dim": N,
//    "layers": [{"in": N, "out": M, "activation": "relu"}, ...],
//    "parameters": [flat doubles in flatten() order]}
inline nlohmann::json to_json(const Network& net) {
  nlohmann::json j;
  j["format"] = "amrl-network";
  j["version"] = 1;
  j["input_dim"] = net.input_dim();
  j["layers"] = nlohmann::json::array();
  for (const auto& l : net.layers())
    j["layers"].push_back({{"in", l.in_dim()}, {"out", l.out_dim()}, {"activation", to_string(l.activation)}});
  j["parameters"] = flatten(net);
  return j;
}

inline Network network_from_json(const nlohmann::json& j) {
  try {
    require(j.at("format") == "amrl-network", "not an amrl-network document");
    require(j.at("version") == 1, "unsupported network format version ", j.at("version").dump());
    std::vector<LayerSpec> specs;
    std::size_t in = j.at("input_dim").get<std::size_t>();
    std::size_t prev = in;
    for (const auto& l : j.at("layers")) {
      require(l.at("in").get<std::size_t>() == prev, "layer input width does not chain");
      specs.push_back({l.at("out").get<std::size_t>(), parse_activation(l.at("activation").get<std::string>())});
      prev = specs.back().units;
    }
    auto params = j.at("parameters").get<std::vector<double>>();
    return unflatten(Network::zeros(in, specs), params);
  } catch (const nlohmann::json::exception& e) {
    throw ContractError(detail::concat("malformed network document: ", e.what()));
  }
}

inline void save_network(const Network& net, const std::string& path) {
  std::ofstream out(path);
  require(static_cast<bool>(out), "cannot open '", path, "' for writing");
  out << to_json(net).dump(2) << '\n';
}

inline Network load_network(const std::string& path) {
  std::ifstream in(path);
  require(static_cast<bool>(in), "cannot open '", path, "'");
  try {
    return network_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ContractError(detail::concat(path, ": ", e.what()));
  }
}

}  // namespace amrl
