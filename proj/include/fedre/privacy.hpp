#pragma once

// White-box representation inversion: given an extractor, its mapping and an
// intercepted d-vector, search the input space for a preimage.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "fedre/entangle.hpp"
#include "fedre/nn.hpp"
#include "fedre/random.hpp"

namespace fedre {

enum class TargetKind { raw, prototype, entangled };

inline std::string_view to_string(TargetKind k) {
  switch (k) {
    case TargetKind::raw: return "raw";
    case TargetKind::prototype: return "prototype";
    case TargetKind::entangled: return "entangled";
  }
  return "?";
}

inline constexpr double kPsnrCap = 99.0;

struct InversionOptions {
  std::size_t steps = 500;
  double lr = 0.05;
  double init_stddev = 1.0;
  std::size_t max_restarts = 3;
};

struct InversionResult {
  std::vector<double> reconstructed;
  double objective = 0.0;
  std::size_t iterations = 0;
  TargetKind target_kind = TargetKind::raw;
  double mse = 0.0;
  double psnr = 0.0;
};

struct Score {
  double mse = 0.0;
  double psnr = 0.0;
};

inline double psnr_from_mse(double mse, double data_range) {
  if (!(mse > 0.0)) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(data_range * data_range / mse));
}

// Best (smallest) mean squared error against any of the originals.
inline Score score(std::span<const double> reconstructed, std::span<const std::vector<double>> originals,
                   double data_range) {
  if (originals.empty()) throw std::invalid_argument("score: no originals to compare against");
  if (!(data_range > 0.0)) throw std::invalid_argument("score: data range must be positive");
  double best = std::numeric_limits<double>::infinity();
  for (const auto& o : originals) {
    if (o.size() != reconstructed.size()) throw ShapeError("score: dimension mismatch");
    double s = 0.0;
    for (std::size_t j = 0; j < o.size(); ++j) {
      const double e = reconstructed[j] - o[j];
      s += e * e;
    }
    best = std::min(best, s / static_cast<double>(o.size()));
  }
  return {best, psnr_from_mse(best, data_range)};
}

namespace detail {

// ‖rm(g(x)) − target‖² and its gradient w.r.t. x.
inline double inversion_objective(const nn::DenseNet& extractor, const RmSpec& rm, std::span<const double> x,
                                  std::span<const double> target, std::vector<double>* grad) {
  nn::ForwardCache ext_cache, fc_cache;
  const auto raw = nn::forward(extractor, x, ext_cache);
  const auto mapped = rm.op == RmOp::FC ? nn::forward(rm.fc, raw, fc_cache) : rm_map(raw, rm);
  if (mapped.size() != target.size()) throw ShapeError("invert: target length does not match the mapped dimension");
  double obj = 0.0;
  std::vector<double> g_mapped(mapped.size());
  for (std::size_t j = 0; j < mapped.size(); ++j) {
    const double e = mapped[j] - target[j];
    obj += e * e;
    g_mapped[j] = 2.0 * e;
  }
  if (grad) {
    std::vector<double> g_raw;
    if (rm.op == RmOp::FC) {
      auto scratch = nn::GradientSet::zeros_like(rm.fc);
      g_raw = nn::backprop(rm.fc, fc_cache, g_mapped, scratch);
    } else {
      g_raw = pool_backprop(raw, g_mapped, rm);
    }
    auto scratch = nn::GradientSet::zeros_like(extractor);
    *grad = nn::backprop(extractor, ext_cache, g_raw, scratch);
  }
  return obj;
}

}  // namespace detail

// Gradient descent on ‖rm(g(x)) − target‖² from a N(0, init_stddev²) start.
// Returns the best iterate seen. A start whose objective turns non-finite, or
// that sits where the gradient vanishes (every relu dead) with a positive
// objective, is abandoned for a fresh init, at most max_restarts times.
inline InversionResult invert(const nn::DenseNet& extractor, const RmSpec& rm, std::span<const double> target,
                              const InversionOptions& opts, Rng& rng) {
  if (!all_finite(target)) throw std::invalid_argument("invert: target must be finite");
  check_rm(rm, extractor.output_dim());
  if (target.size() != rm.dim) throw ShapeError("invert: target length does not match the mapped dimension");

  std::optional<InversionResult> stalled;
  for (std::size_t attempt = 0; attempt <= opts.max_restarts; ++attempt) {
    std::vector<double> x(extractor.input_dim());
    for (double& v : x) v = opts.init_stddev * standard_normal(rng);
    InversionResult best{x, detail::inversion_objective(extractor, rm, x, target, nullptr), 0};
    if (!std::isfinite(best.objective)) continue;
    bool failed = false;
    std::vector<double> grad;
    for (std::size_t step = 1; step <= opts.steps; ++step) {
      detail::inversion_objective(extractor, rm, x, target, &grad);
      if (step == 1 && best.objective > 0.0 && std::all_of(grad.begin(), grad.end(), [](double g) { return g == 0.0; })) {
        if (!stalled || best.objective < stalled->objective) stalled = best;
        failed = true;
        break;
      }
      for (std::size_t j = 0; j < x.size(); ++j) x[j] -= opts.lr * grad[j];
      if (!all_finite(x)) {
        failed = true;
        break;
      }
      const double obj = detail::inversion_objective(extractor, rm, x, target, nullptr);
      if (!std::isfinite(obj)) {
        failed = true;
        break;
      }
      if (obj < best.objective) {
        best.objective = obj;
        best.reconstructed = x;
        best.iterations = step;
      }
    }
    if (!failed) return best;
  }
  if (stalled) return *stalled;
  throw DivergedError("invert: objective became non-finite on every restart");
}

}  // namespace fedre
