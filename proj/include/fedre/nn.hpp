#pragma once

// Dense feed-forward networks with hand-written backpropagation.
//
// A DenseNet is a chain of affine layers, each followed by ReLU or identity.
// Extractors, the shared classifier, the FC representation mapping and the
// inversion attack all run on this one type.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fedre/random.hpp"

namespace fedre {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class DivergedError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace fedre

namespace fedre::nn {

enum class Activation { relu, identity };

// Row-major dense matrix.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

struct Layer {
  Matrix weight;  // out x in
  std::vector<double> bias;
  Activation activation = Activation::identity;

  std::size_t in_dim() const { return weight.cols; }
  std::size_t out_dim() const { return weight.rows; }

  friend bool operator==(const Layer&, const Layer&) = default;
};

class DenseNet {
 public:
  DenseNet() = default;
  DenseNet(const DenseNet& o) : layers_(o.layers_) {}
  DenseNet(DenseNet&& o) noexcept : layers_(std::move(o.layers_)) {}
  DenseNet& operator=(const DenseNet& o) {
    layers_ = o.layers_;
    revision_ = next_revision();
    return *this;
  }
  DenseNet& operator=(DenseNet&& o) noexcept {
    layers_ = std::move(o.layers_);
    revision_ = next_revision();
    return *this;
  }

  explicit DenseNet(std::vector<Layer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw ShapeError("DenseNet needs at least one layer");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const Layer& l = layers_[i];
      if (l.in_dim() == 0 || l.out_dim() == 0)
        throw ShapeError("layer " + std::to_string(i) + " has a zero dimension");
      if (l.bias.size() != l.out_dim())
        throw ShapeError("layer " + std::to_string(i) + " bias length " + std::to_string(l.bias.size()) +
                         " != out " + std::to_string(l.out_dim()));
      if (i > 0 && layers_[i - 1].out_dim() != l.in_dim())
        throw ShapeError("layer " + std::to_string(i) + " input " + std::to_string(l.in_dim()) +
                         " does not chain with previous output " + std::to_string(layers_[i - 1].out_dim()));
      if (!all_finite(l.weight.data) || !all_finite(l.bias))
        throw std::invalid_argument("layer " + std::to_string(i) + " has non-finite parameters");
    }
  }

  // Glorot-uniform weights in [-sqrt(6/(in+out)), +sqrt(6/(in+out))], zero bias.
  // `dims` lists input, hidden..., output widths.
  static DenseNet glorot(std::span<const std::size_t> dims, Activation hidden, Activation output, Rng& rng) {
    if (dims.size() < 2) throw ShapeError("glorot: need at least input and output widths");
    std::vector<Layer> layers;
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
      const std::size_t in = dims[i], out = dims[i + 1];
      if (in == 0 || out == 0) throw ShapeError("glorot: zero width");
      const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
      std::uniform_real_distribution<double> dist(-limit, limit);
      Layer l{Matrix(out, in), std::vector<double>(out, 0.0), i + 2 == dims.size() ? output : hidden};
      for (double& w : l.weight.data) w = dist(rng);
      layers.push_back(std::move(l));
    }
    return DenseNet(std::move(layers));
  }

  static DenseNet glorot(std::initializer_list<std::size_t> dims, Activation hidden, Activation output, Rng& rng) {
    const std::vector<std::size_t> v(dims);
    return glorot(std::span<const std::size_t>(v), hidden, output, rng);
  }

  std::size_t input_dim() const { return layers_.empty() ? 0 : layers_.front().in_dim(); }
  std::size_t output_dim() const { return layers_.empty() ? 0 : layers_.back().out_dim(); }
  std::size_t num_layers() const { return layers_.size(); }
  bool empty() const { return layers_.empty(); }

  const std::vector<Layer>& layers() const { return layers_; }

  // Any mutable access invalidates outstanding forward caches.
  std::vector<Layer>& mutable_layers() {
    revision_ = next_revision();
    return layers_;
  }

  std::uint64_t revision() const { return revision_; }

  std::size_t num_parameters() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.weight.data.size() + l.bias.size();
    return n;
  }

  // Parameters only; revision is bookkeeping.
  friend bool operator==(const DenseNet& a, const DenseNet& b) { return a.layers_ == b.layers_; }

 private:
  static std::uint64_t next_revision() {
    static std::atomic<std::uint64_t> counter{0};
    return ++counter;
  }

  std::vector<Layer> layers_;
  std::uint64_t revision_ = next_revision();
};

struct ForwardCache {
  const DenseNet* net = nullptr;
  std::uint64_t revision = 0;
  std::vector<std::vector<double>> inputs;  // input seen by each layer
  std::vector<std::vector<double>> pre;     // pre-activation of each layer
  std::vector<double> output;

  bool valid_for(const DenseNet& n) const { return net == &n && revision == n.revision(); }
};

namespace detail {

inline void check_input(const DenseNet& net, std::span<const double> x) {
  if (net.empty()) throw ShapeError("forward on an empty network");
  if (x.size() != net.input_dim())
    throw ShapeError("forward: input length " + std::to_string(x.size()) + " != input_dim " +
                     std::to_string(net.input_dim()));
  if (!all_finite(x)) throw std::invalid_argument("forward: non-finite input");
}

inline std::vector<double> affine(const Layer& l, std::span<const double> x) {
  std::vector<double> z(l.bias);
  for (std::size_t r = 0; r < l.out_dim(); ++r) {
    const double* row = &l.weight.data[r * l.weight.cols];
    double acc = 0.0;
    for (std::size_t c = 0; c < l.in_dim(); ++c) acc += row[c] * x[c];
    z[r] += acc;
  }
  return z;
}

// Finite input, non-finite output: the parameters have blown up.
inline void check_output(std::span<const double> h) {
  if (!all_finite(h)) throw DivergedError("forward: activations overflowed, training diverged");
}

inline void activate(Activation a, std::vector<double>& z) {
  if (a == Activation::relu)
    for (double& v : z) v = v > 0.0 ? v : 0.0;
}

}  // namespace detail

inline std::vector<double> forward(const DenseNet& net, std::span<const double> x) {
  detail::check_input(net, x);
  std::vector<double> h(x.begin(), x.end());
  for (const Layer& l : net.layers()) {
    h = detail::affine(l, h);
    detail::activate(l.activation, h);
  }
  detail::check_output(h);
  return h;
}

inline std::vector<double> forward(const DenseNet& net, std::span<const double> x, ForwardCache& cache) {
  detail::check_input(net, x);
  cache.net = &net;
  cache.revision = net.revision();
  cache.inputs.clear();
  cache.pre.clear();
  std::vector<double> h(x.begin(), x.end());
  for (const Layer& l : net.layers()) {
    cache.inputs.push_back(h);
    h = detail::affine(l, h);
    cache.pre.push_back(h);
    detail::activate(l.activation, h);
  }
  detail::check_output(h);
  cache.output = h;
  return h;
}

struct LayerGrad {
  Matrix weight;
  std::vector<double> bias;
};

class GradientSet {
 public:
  GradientSet() = default;

  static GradientSet zeros_like(const DenseNet& net) {
    GradientSet g;
    for (const Layer& l : net.layers())
      g.layers_.push_back({Matrix(l.out_dim(), l.in_dim()), std::vector<double>(l.out_dim(), 0.0)});
    return g;
  }

  bool matches(const DenseNet& net) const {
    if (layers_.size() != net.num_layers()) return false;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const Layer& l = net.layers()[i];
      if (layers_[i].weight.rows != l.out_dim() || layers_[i].weight.cols != l.in_dim() ||
          layers_[i].bias.size() != l.out_dim())
        return false;
    }
    return true;
  }

  bool finite() const {
    for (const auto& l : layers_)
      if (!all_finite(l.weight.data) || !all_finite(l.bias)) return false;
    return true;
  }

  void scale(double s) {
    for (auto& l : layers_) {
      for (double& v : l.weight.data) v *= s;
      for (double& v : l.bias) v *= s;
    }
  }

  void set_zero() {
    for (auto& l : layers_) {
      std::fill(l.weight.data.begin(), l.weight.data.end(), 0.0);
      std::fill(l.bias.begin(), l.bias.end(), 0.0);
    }
  }

  std::size_t size() const { return layers_.size(); }
  LayerGrad& operator[](std::size_t i) { return layers_[i]; }
  const LayerGrad& operator[](std::size_t i) const { return layers_[i]; }

 private:
  std::vector<LayerGrad> layers_;
};

// Reverse pass. Adds scale * dL/dθ into `grads` and returns dL/dx, given
// dL/d(output) for the input recorded in `cache`.
inline std::vector<double> backprop(const DenseNet& net, const ForwardCache& cache, std::span<const double> grad_output,
                                    GradientSet& grads, double scale = 1.0) {
  if (!cache.valid_for(net)) throw std::logic_error("backprop: forward cache is stale for this network");
  if (!grads.matches(net)) throw ShapeError("backprop: gradient set does not match network shape");
  if (grad_output.size() != net.output_dim()) throw ShapeError("backprop: output gradient length mismatch");

  std::vector<double> delta(grad_output.begin(), grad_output.end());
  for (std::size_t li = net.num_layers(); li-- > 0;) {
    const Layer& l = net.layers()[li];
    if (l.activation == Activation::relu)
      for (std::size_t r = 0; r < delta.size(); ++r)
        if (cache.pre[li][r] <= 0.0) delta[r] = 0.0;

    LayerGrad& g = grads[li];
    const std::vector<double>& in = cache.inputs[li];
    std::vector<double> next(l.in_dim(), 0.0);
    for (std::size_t r = 0; r < l.out_dim(); ++r) {
      const double d = delta[r];
      if (d == 0.0) continue;
      g.bias[r] += scale * d;
      double* grow = &g.weight.data[r * l.in_dim()];
      const double* wrow = &l.weight.data[r * l.in_dim()];
      for (std::size_t c = 0; c < l.in_dim(); ++c) {
        grow[c] += scale * d * in[c];
        next[c] += wrow[c] * d;
      }
    }
    delta = std::move(next);
  }
  return delta;
}

// θ ← θ − lr·∇θ. Rejects non-finite gradients or updates without touching the network.
inline void sgd_step(DenseNet& net, const GradientSet& grads, double lr) {
  if (!(lr >= 0.0) || !std::isfinite(lr)) throw std::invalid_argument("sgd_step: learning rate must be finite and >= 0");
  if (!grads.matches(net)) throw ShapeError("sgd_step: gradient set does not match network shape");
  if (!grads.finite()) throw DivergedError("sgd_step: non-finite gradient, training diverged");
  if (lr == 0.0) return;
  for (std::size_t i = 0; i < net.num_layers(); ++i) {
    const Layer& l = net.layers()[i];
    for (std::size_t k = 0; k < l.weight.data.size(); ++k)
      if (!std::isfinite(l.weight.data[k] - lr * grads[i].weight.data[k]))
        throw DivergedError("sgd_step: parameter overflow, training diverged");
    for (std::size_t k = 0; k < l.bias.size(); ++k)
      if (!std::isfinite(l.bias[k] - lr * grads[i].bias[k])) throw DivergedError("sgd_step: parameter overflow, training diverged");
  }
  auto& layers = net.mutable_layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    for (std::size_t k = 0; k < layers[i].weight.data.size(); ++k)
      layers[i].weight.data[k] -= lr * grads[i].weight.data[k];
    for (std::size_t k = 0; k < layers[i].bias.size(); ++k) layers[i].bias[k] -= lr * grads[i].bias[k];
  }
}

}  // namespace fedre::nn
