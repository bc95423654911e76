#pragma once

// Representation mapping (RM) to the unified dimension, the six
// representation-entanglement (RE) weight rules, and the entanglement
// operator that collapses a client's representations into one packet.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fedre/loss.hpp"
#include "fedre/nn.hpp"
#include "fedre/random.hpp"

namespace fedre {

enum class RmOp { AP, MP, FC };

// Maps raw extractor outputs (length d_k) to the unified dimension d.
// AP/MP pool contiguous blocks of d_k/d entries; FC is a trainable net.
struct RmSpec {
  RmOp op = RmOp::AP;
  std::size_t dim = 8;
  nn::DenseNet fc;  // FC only: input d_k, output d
};

struct RepresentationSet {
  std::vector<std::vector<double>> reps;
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return reps.size(); }

  void validate() const {
    if (reps.size() != labels.size()) throw ShapeError("RepresentationSet: reps/labels length mismatch");
    for (std::size_t i = 0; i < reps.size(); ++i) {
      if (reps[i].size() != reps.front().size()) throw ShapeError("RepresentationSet: ragged representations");
      if (labels[i] >= num_classes) throw std::invalid_argument("RepresentationSet: label out of range");
    }
  }
};

struct EntangledPacket {
  std::vector<double> r_tilde;
  LabelEncoding y_tilde;
};

struct WeightVector {
  std::vector<double> w;

  std::size_t size() const { return w.size(); }
  double operator[](std::size_t i) const { return w[i]; }
  double sum() const {
    double s = 0.0;
    for (double v : w) s += v;
    return s;
  }
  friend bool operator==(const WeightVector&, const WeightVector&) = default;
};

enum class ReKind { RSR, VAR, RAR, RSP, VAP, RAP };
enum class WeightDistribution { Uniform, Gaussian, Laplace };

struct ReMechanism {
  ReKind kind = ReKind::RAP;
  WeightDistribution distribution = WeightDistribution::Uniform;  // RAR/RAP only
};

inline std::string_view to_string(RmOp op) {
  switch (op) {
    case RmOp::AP: return "AP";
    case RmOp::MP: return "MP";
    case RmOp::FC: return "FC";
  }
  return "?";
}

inline std::string_view to_string(ReKind k) {
  switch (k) {
    case ReKind::RSR: return "RSR";
    case ReKind::VAR: return "VAR";
    case ReKind::RAR: return "RAR";
    case ReKind::RSP: return "RSP";
    case ReKind::VAP: return "VAP";
    case ReKind::RAP: return "RAP";
  }
  return "?";
}

inline std::string_view to_string(WeightDistribution d) {
  switch (d) {
    case WeightDistribution::Uniform: return "Uniform";
    case WeightDistribution::Gaussian: return "Gaussian";
    case WeightDistribution::Laplace: return "Laplace";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Representation mapping

inline std::size_t pool_factor(std::size_t raw_dim, std::size_t dim) {
  if (dim == 0 || raw_dim == 0 || raw_dim % dim != 0)
    throw ShapeError("RM pooling: raw dimension " + std::to_string(raw_dim) + " is not a multiple of " +
                     std::to_string(dim));
  return raw_dim / dim;
}

inline void check_rm(const RmSpec& rm, std::size_t raw_dim) {
  if (rm.op == RmOp::FC) {
    if (rm.fc.input_dim() != raw_dim || rm.fc.output_dim() != rm.dim)
      throw ShapeError("RM FC: net is " + std::to_string(rm.fc.input_dim()) + "->" + std::to_string(rm.fc.output_dim()) +
                       ", need " + std::to_string(raw_dim) + "->" + std::to_string(rm.dim));
  } else {
    pool_factor(raw_dim, rm.dim);
  }
}

inline std::vector<double> rm_map(std::span<const double> r, const RmSpec& rm) {
  if (rm.op == RmOp::FC) {
    check_rm(rm, r.size());
    return nn::forward(rm.fc, r);
  }
  const std::size_t m = pool_factor(r.size(), rm.dim);
  std::vector<double> out(rm.dim);
  for (std::size_t b = 0; b < rm.dim; ++b) {
    const auto block = r.subspan(b * m, m);
    if (rm.op == RmOp::AP) {
      double s = 0.0;
      for (double v : block) s += v;
      out[b] = s / static_cast<double>(m);
    } else {
      out[b] = *std::max_element(block.begin(), block.end());
    }
  }
  return out;
}

// Pull a gradient on the pooled output back to the raw representation.
// MP routes each block's gradient to its first maximal entry.
inline std::vector<double> pool_backprop(std::span<const double> r, std::span<const double> grad_out, const RmSpec& rm) {
  if (rm.op == RmOp::FC) throw std::logic_error("pool_backprop: FC mapping backpropagates through its net");
  const std::size_t m = pool_factor(r.size(), rm.dim);
  if (grad_out.size() != rm.dim) throw ShapeError("pool_backprop: gradient length mismatch");
  std::vector<double> g(r.size(), 0.0);
  for (std::size_t b = 0; b < rm.dim; ++b) {
    if (rm.op == RmOp::AP) {
      for (std::size_t j = 0; j < m; ++j) g[b * m + j] = grad_out[b] / static_cast<double>(m);
    } else {
      std::size_t best = b * m;
      for (std::size_t j = b * m + 1; j < (b + 1) * m; ++j)
        if (r[j] > r[best]) best = j;
      g[best] = grad_out[b];
    }
  }
  return g;
}

inline std::vector<std::vector<double>> rm_map_all(const RepresentationSet& set, const RmSpec& rm) {
  std::vector<std::vector<double>> mapped;
  mapped.reserve(set.size());
  for (const auto& r : set.reps) mapped.push_back(rm_map(r, rm));
  return mapped;
}

// ---------------------------------------------------------------------------
// RE weight rules

namespace detail {

inline std::vector<std::size_t> class_counts(std::span<const std::size_t> labels, std::size_t num_classes) {
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::size_t y : labels) {
    if (y >= num_classes) throw std::invalid_argument("label out of range");
    ++counts[y];
  }
  return counts;
}

inline void require_nonempty(std::span<const std::size_t> labels) {
  if (labels.empty()) throw std::invalid_argument("RE weights: empty representation set");
}

}  // namespace detail

inline WeightVector rsr_weights(std::size_t n, std::size_t selected) {
  if (selected >= n) throw std::out_of_range("rsr_weights: selected index out of range");
  WeightVector w{std::vector<double>(n, 0.0)};
  w.w[selected] = 1.0;
  return w;
}

inline WeightVector var_weights(std::size_t n) {
  if (n == 0) throw std::invalid_argument("var_weights: empty representation set");
  return WeightVector{std::vector<double>(n, 1.0 / static_cast<double>(n))};
}

// w_i = u_i / Σ_j u_j.
inline WeightVector rar_weights(std::span<const double> u) {
  if (u.empty()) throw std::invalid_argument("rar_weights: empty representation set");
  double sum = 0.0;
  for (double v : u) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw std::invalid_argument("rar_weights: draws must be finite and >= 0");
    sum += v;
  }
  if (!(sum > 0.0)) throw std::invalid_argument("rar_weights: draws sum to zero");
  WeightVector w{std::vector<double>(u.begin(), u.end())};
  for (double& v : w.w) v /= sum;
  return w;
}

// w_i = 1/n_c for samples of the selected category c, 0 elsewhere.
inline WeightVector rsp_weights(std::span<const std::size_t> labels, std::size_t num_classes, std::size_t category) {
  detail::require_nonempty(labels);
  const auto counts = detail::class_counts(labels, num_classes);
  if (category >= num_classes || counts[category] == 0)
    throw std::invalid_argument("rsp_weights: selected category has no samples");
  WeightVector w{std::vector<double>(labels.size(), 0.0)};
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == category) w.w[i] = 1.0 / static_cast<double>(counts[category]);
  return w;
}

// w_i = 1/(C_k·n_c), C_k = categories present in the set.
inline WeightVector vap_weights(std::span<const std::size_t> labels, std::size_t num_classes) {
  detail::require_nonempty(labels);
  const auto counts = detail::class_counts(labels, num_classes);
  const auto present = static_cast<double>(std::count_if(counts.begin(), counts.end(), [](std::size_t n) { return n > 0; }));
  WeightVector w{std::vector<double>(labels.size())};
  for (std::size_t i = 0; i < labels.size(); ++i) w.w[i] = 1.0 / (present * static_cast<double>(counts[labels[i]]));
  return w;
}

// w_i = u_c / (n_c·Σ_j u_j) over present categories j; `u` is indexed by
// category and entries of absent categories are ignored.
inline WeightVector rap_weights(std::span<const std::size_t> labels, std::size_t num_classes, std::span<const double> u) {
  detail::require_nonempty(labels);
  if (u.size() != num_classes) throw ShapeError("rap_weights: need one draw per category");
  const auto counts = detail::class_counts(labels, num_classes);
  double sum = 0.0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (counts[c] == 0) continue;
    if (!(u[c] >= 0.0) || !std::isfinite(u[c])) throw std::invalid_argument("rap_weights: draws must be finite and >= 0");
    sum += u[c];
  }
  if (!(sum > 0.0)) throw std::invalid_argument("rap_weights: draws sum to zero");
  WeightVector w{std::vector<double>(labels.size())};
  for (std::size_t i = 0; i < labels.size(); ++i)
    w.w[i] = u[labels[i]] / (static_cast<double>(counts[labels[i]]) * sum);
  return w;
}

// One nonnegative draw: U(0,1), |N(0,1)| or |Laplace(0,1)|.
inline double draw_weight(WeightDistribution dist, Rng& rng) {
  switch (dist) {
    case WeightDistribution::Uniform: return uniform01(rng);
    case WeightDistribution::Gaussian: return std::abs(standard_normal(rng));
    case WeightDistribution::Laplace: return std::abs(standard_laplace(rng));
  }
  return 0.0;
}

// `count` draws, redrawn as a whole until their sum is positive.
inline std::vector<double> draw_weights(WeightDistribution dist, std::size_t count, Rng& rng) {
  std::vector<double> u(count);
  for (;;) {
    double sum = 0.0;
    for (double& v : u) sum += (v = draw_weight(dist, rng));
    if (sum > 0.0) return u;
  }
}

inline WeightVector re_weights(std::span<const std::size_t> labels, std::size_t num_classes, const ReMechanism& mech,
                               Rng& rng) {
  detail::require_nonempty(labels);
  const std::size_t n = labels.size();
  switch (mech.kind) {
    case ReKind::RSR: return rsr_weights(n, std::uniform_int_distribution<std::size_t>(0, n - 1)(rng));
    case ReKind::VAR: return var_weights(n);
    case ReKind::RAR: return rar_weights(draw_weights(mech.distribution, n, rng));
    case ReKind::RSP: {
      const auto counts = detail::class_counts(labels, num_classes);
      std::vector<std::size_t> present;
      for (std::size_t c = 0; c < num_classes; ++c)
        if (counts[c] > 0) present.push_back(c);
      const auto pick = std::uniform_int_distribution<std::size_t>(0, present.size() - 1)(rng);
      return rsp_weights(labels, num_classes, present[pick]);
    }
    case ReKind::VAP: return vap_weights(labels, num_classes);
    case ReKind::RAP: {
      const auto counts = detail::class_counts(labels, num_classes);
      std::vector<double> u(num_classes, 0.0);
      std::vector<std::size_t> present;
      for (std::size_t c = 0; c < num_classes; ++c)
        if (counts[c] > 0) present.push_back(c);
      const auto draws = draw_weights(mech.distribution, present.size(), rng);
      for (std::size_t j = 0; j < present.size(); ++j) u[present[j]] = draws[j];
      return rap_weights(labels, num_classes, u);
    }
  }
  throw std::logic_error("re_weights: unknown mechanism");
}

inline WeightVector re_weights(const RepresentationSet& set, const ReMechanism& mech, Rng& rng) {
  return re_weights(set.labels, set.num_classes, mech, rng);
}

// ---------------------------------------------------------------------------
// Entanglement

// Counts scalar multiplications performed by entangle_mapped.
struct OpCounter {
  std::uint64_t multiplies = 0;
};

// r̃ = Σ w_i·r_i, ỹ = Σ w_i·onehot(y_i) over already-mapped representations.
inline EntangledPacket entangle_mapped(std::span<const std::vector<double>> mapped, std::span<const std::size_t> labels,
                                       std::size_t num_classes, const WeightVector& w, OpCounter* counter = nullptr) {
  if (mapped.empty()) throw std::invalid_argument("entangle: empty representation set");
  if (mapped.size() != labels.size() || w.size() != mapped.size())
    throw ShapeError("entangle: " + std::to_string(w.size()) + " weights for " + std::to_string(mapped.size()) +
                     " representations");
  const std::size_t d = mapped.front().size();
  std::vector<double> r(d, 0.0), y(num_classes, 0.0);
  for (std::size_t i = 0; i < mapped.size(); ++i) {
    if (mapped[i].size() != d) throw ShapeError("entangle: ragged representations");
    if (labels[i] >= num_classes) throw std::invalid_argument("entangle: label out of range");
    const double wi = w[i];
    for (std::size_t j = 0; j < d; ++j) r[j] += wi * mapped[i][j];
    for (std::size_t c = 0; c < num_classes; ++c) y[c] += wi * (labels[i] == c ? 1.0 : 0.0);
  }
  if (counter) counter->multiplies += mapped.size() * (d + num_classes);
  for (double& v : y) v = std::clamp(v, 0.0, 1.0);
  return EntangledPacket{std::move(r), LabelEncoding(std::move(y))};
}

inline EntangledPacket entangle(const RepresentationSet& set, const WeightVector& w, const RmSpec& rm,
                                OpCounter* counter = nullptr) {
  set.validate();
  if (w.size() != set.size()) throw ShapeError("entangle: weight count does not match set size");
  const auto mapped = rm_map_all(set, rm);
  return entangle_mapped(mapped, set.labels, set.num_classes, w, counter);
}

// λ·(r_i, y_i) + (1−λ)·(r_j, y_j).
inline EntangledPacket mixup_pair(std::span<const double> r_i, const LabelEncoding& y_i, std::span<const double> r_j,
                                  const LabelEncoding& y_j, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("mixup_pair: lambda must be in [0,1]");
  if (r_i.size() != r_j.size() || y_i.size() != y_j.size()) throw ShapeError("mixup_pair: dimension mismatch");
  std::vector<double> r(r_i.size()), y(y_i.size());
  for (std::size_t j = 0; j < r.size(); ++j) r[j] = lambda * r_i[j] + (1.0 - lambda) * r_j[j];
  for (std::size_t c = 0; c < y.size(); ++c) y[c] = std::clamp(lambda * y_i[c] + (1.0 - lambda) * y_j[c], 0.0, 1.0);
  return EntangledPacket{std::move(r), LabelEncoding(std::move(y))};
}

struct Prototype {
  std::size_t category = 0;
  std::vector<double> center;
  std::size_t count = 0;
};

// Per present category, the mean of the given (already mapped) representations.
inline std::vector<Prototype> prototypes_mapped(std::span<const std::vector<double>> mapped,
                                                std::span<const std::size_t> labels, std::size_t num_classes) {
  if (mapped.size() != labels.size()) throw ShapeError("prototypes: reps/labels length mismatch");
  if (mapped.empty()) return {};
  const std::size_t d = mapped.front().size();
  std::vector<std::vector<double>> sums(num_classes, std::vector<double>(d, 0.0));
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::size_t i = 0; i < mapped.size(); ++i) {
    if (mapped[i].size() != d) throw ShapeError("prototypes: ragged representations");
    ++counts[labels[i]];
    for (std::size_t j = 0; j < d; ++j) sums[labels[i]][j] += mapped[i][j];
  }
  std::vector<Prototype> out;
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (counts[c] == 0) continue;
    for (double& v : sums[c]) v /= static_cast<double>(counts[c]);
    out.push_back({c, std::move(sums[c]), counts[c]});
  }
  return out;
}

inline std::vector<Prototype> compute_prototypes(const RepresentationSet& set, const RmSpec& rm) {
  set.validate();
  const auto mapped = rm_map_all(set, rm);
  return prototypes_mapped(mapped, set.labels, set.num_classes);
}

}  // namespace fedre
