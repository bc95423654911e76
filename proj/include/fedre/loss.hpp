#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedre/nn.hpp"

namespace fedre {

// A categorical distribution over C classes: one-hot for real samples,
// a convex mixture for entangled packets.
class LabelEncoding {
 public:
  static constexpr double kSimplexTolerance = 1e-9;

  LabelEncoding() = default;

  explicit LabelEncoding(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) throw std::invalid_argument("LabelEncoding: empty");
    double sum = 0.0;
    for (double p : probs_) {
      if (!std::isfinite(p) || p < -kSimplexTolerance || p > 1.0 + kSimplexTolerance)
        throw std::invalid_argument("LabelEncoding: entry outside [0,1]");
      sum += p;
    }
    if (std::abs(sum - 1.0) > kSimplexTolerance)
      throw std::invalid_argument("LabelEncoding: entries sum to " + std::to_string(sum) + ", not 1");
  }

  static LabelEncoding one_hot(std::size_t label, std::size_t num_classes) {
    if (label >= num_classes) throw std::out_of_range("one_hot: label out of range");
    std::vector<double> p(num_classes, 0.0);
    p[label] = 1.0;
    return LabelEncoding(std::move(p));
  }

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t c) const { return probs_[c]; }
  std::span<const double> probs() const { return probs_; }

  std::size_t argmax() const {
    return static_cast<std::size_t>(std::max_element(probs_.begin(), probs_.end()) - probs_.begin());
  }

  friend bool operator==(const LabelEncoding&, const LabelEncoding&) = default;

 private:
  std::vector<double> probs_;
};

inline double log_sum_exp(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("log_sum_exp: empty input");
  const double m = *std::max_element(logits.begin(), logits.end());
  double s = 0.0;
  for (double z : logits) s += std::exp(z - m);
  return m + std::log(s);
}

inline std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty input");
  const double m = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] = std::exp(logits[i] - m));
  for (double& v : p) v /= s;
  return p;
}

// −Σ_c t_c·log softmax(z)_c, with a max-shifted log-sum-exp.
inline double soft_cross_entropy(std::span<const double> logits, const LabelEncoding& target) {
  if (logits.size() != target.size())
    throw ShapeError("soft_cross_entropy: " + std::to_string(logits.size()) + " logits vs " +
                     std::to_string(target.size()) + " classes");
  const double lse = log_sum_exp(logits);
  double loss = 0.0;
  for (std::size_t c = 0; c < logits.size(); ++c)
    if (target[c] != 0.0) loss -= target[c] * (logits[c] - lse);
  return std::max(loss, 0.0);
}

// d(soft CE)/d(logits) = softmax(z) − t for a target on the simplex.
inline std::vector<double> soft_cross_entropy_grad(std::span<const double> logits, const LabelEncoding& target) {
  if (logits.size() != target.size()) throw ShapeError("soft_cross_entropy_grad: class count mismatch");
  std::vector<double> g = softmax(logits);
  for (std::size_t c = 0; c < g.size(); ++c) g[c] -= target[c];
  return g;
}

namespace nn {

// Gradient of soft_cross_entropy(forward(net, x), target) w.r.t. every
// parameter, using the cache filled by forward(net, x, cache).
inline GradientSet backward(const DenseNet& net, const ForwardCache& cache, const LabelEncoding& target) {
  if (!cache.valid_for(net)) throw std::logic_error("backward: forward cache is stale for this network");
  GradientSet grads = GradientSet::zeros_like(net);
  const auto g = soft_cross_entropy_grad(cache.output, target);
  backprop(net, cache, g, grads);
  return grads;
}

inline GradientSet backward(const DenseNet& net, std::span<const double> x, const LabelEncoding& target) {
  ForwardCache cache;
  forward(net, x, cache);
  return backward(net, cache, target);
}

}  // namespace nn

inline std::size_t argmax_lowest(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace fedre
