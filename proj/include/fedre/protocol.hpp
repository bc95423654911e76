#pragma once

// Client and server halves of one federated round: local fine-tuning,
// packet construction, global classifier training, plus scalar accounting.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <iterator>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedre/data.hpp"
#include "fedre/entangle.hpp"
#include "fedre/loss.hpp"
#include "fedre/nn.hpp"
#include "fedre/random.hpp"

namespace fedre {

struct TrainOptions {
  double lr = 0.05;
  std::size_t batch_size = 16;
  std::size_t epochs = 1;

  friend bool operator==(const TrainOptions&, const TrainOptions&) = default;
};

struct ClientState {
  std::size_t id = 0;
  nn::DenseNet extractor;   // input -> d_k, architecture varies per client
  RmSpec rm;                // d_k -> d
  nn::DenseNet classifier;  // d -> C, identical shape everywhere
  data::Dataset train;
  data::Dataset test;
  Rng rng;
  TrainOptions options;
  std::optional<WeightVector> fixed_weights;  // fixed-sampling cache

  std::size_t num_classes() const { return train.num_classes; }
  std::size_t raw_dim() const { return extractor.output_dim(); }

  void validate() const {
    if (extractor.input_dim() != train.dim) throw ShapeError("client " + std::to_string(id) + ": extractor input dim mismatch");
    check_rm(rm, extractor.output_dim());
    if (classifier.input_dim() != rm.dim || classifier.output_dim() != train.num_classes)
      throw ShapeError("client " + std::to_string(id) + ": classifier must be " + std::to_string(rm.dim) + "->" +
                       std::to_string(train.num_classes));
  }
};

struct ServerState {
  nn::DenseNet classifier;
  TrainOptions options{0.01, 10, 5};
  Rng rng;
};

// ---------------------------------------------------------------------------
// Client model: classifier(rm(extractor(x)))

struct ClientTrace {
  nn::ForwardCache extractor;
  nn::ForwardCache fc;
  nn::ForwardCache classifier;
  std::vector<double> raw;
  std::vector<double> mapped;
  std::vector<double> logits;
};

inline std::vector<double> map_input(const ClientState& c, std::span<const double> x) {
  return rm_map(nn::forward(c.extractor, x), c.rm);
}

inline const std::vector<double>& client_forward(const ClientState& c, std::span<const double> x, ClientTrace& t) {
  t.raw = nn::forward(c.extractor, x, t.extractor);
  t.mapped = c.rm.op == RmOp::FC ? nn::forward(c.rm.fc, t.raw, t.fc) : rm_map(t.raw, c.rm);
  t.logits = nn::forward(c.classifier, t.mapped, t.classifier);
  return t.logits;
}

struct ClientGrads {
  nn::GradientSet extractor;
  nn::GradientSet fc;
  nn::GradientSet classifier;

  static ClientGrads zeros_like(const ClientState& c) {
    return {nn::GradientSet::zeros_like(c.extractor),
            c.rm.op == RmOp::FC ? nn::GradientSet::zeros_like(c.rm.fc) : nn::GradientSet{},
            nn::GradientSet::zeros_like(c.classifier)};
  }
};

// Backpropagates dL/dlogits (and an optional extra dL/dmapped) through the
// whole client model, accumulating scale·gradients.
inline void client_backprop(const ClientState& c, const ClientTrace& t, std::span<const double> grad_logits,
                            std::span<const double> extra_grad_mapped, ClientGrads& g, double scale) {
  auto grad_mapped = nn::backprop(c.classifier, t.classifier, grad_logits, g.classifier, scale);
  if (!extra_grad_mapped.empty())
    for (std::size_t j = 0; j < grad_mapped.size(); ++j) grad_mapped[j] += extra_grad_mapped[j];
  const auto grad_raw = c.rm.op == RmOp::FC ? nn::backprop(c.rm.fc, t.fc, grad_mapped, g.fc, scale)
                                            : pool_backprop(t.raw, grad_mapped, c.rm);
  nn::backprop(c.extractor, t.extractor, grad_raw, g.extractor, scale);
}

inline std::size_t predict(const ClientState& c, std::span<const double> x) {
  return argmax_lowest(nn::forward(c.classifier, map_input(c, x)));
}

inline double accuracy(const ClientState& c, const data::Dataset& ds) {
  if (ds.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& s : ds.samples) hits += predict(c, s.x) == s.label ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(ds.size());
}

inline double client_loss(const ClientState& c, const data::Dataset& ds) {
  if (ds.empty()) return 0.0;
  double total = 0.0;
  for (const auto& s : ds.samples)
    total += soft_cross_entropy(nn::forward(c.classifier, map_input(c, s.x)), LabelEncoding::one_hot(s.label, ds.num_classes));
  return total / static_cast<double>(ds.size());
}

// ω_k ← ω.
inline void receive_classifier(ClientState& c, const nn::DenseNet& global) {
  if (global.input_dim() != c.classifier.input_dim() || global.output_dim() != c.classifier.output_dim() ||
      global.num_layers() != c.classifier.num_layers())
    throw ShapeError("client " + std::to_string(c.id) + ": received classifier has a different shape");
  if (global == c.classifier) return;
  c.classifier = global;
}

struct LocalUpdateReport {
  double mean_loss = 0.0;  // average minibatch loss seen during training
  std::size_t steps = 0;
};

// Per-category anchors for the prototype regularizer; empty entries are skipped.
using PrototypeTable = std::vector<std::vector<double>>;

// Minibatch SGD on the mean cross-entropy of the local data, updating the
// extractor, the FC mapping (if any) and the local classifier. With a
// non-empty `anchors` table, adds λ·‖rm(g(x)) − anchors[y]‖² per sample.
inline LocalUpdateReport local_train(ClientState& c, const PrototypeTable* anchors = nullptr, double anchor_weight = 0.0) {
  c.validate();
  LocalUpdateReport report;
  if (c.train.empty()) return report;
  const std::size_t n = c.train.size();
  const std::size_t batch = std::max<std::size_t>(1, c.options.batch_size);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  ClientTrace trace;
  double loss_sum = 0.0;
  for (std::size_t epoch = 0; epoch < c.options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), c.rng);
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t end = std::min(n, start + batch);
      const double scale = 1.0 / static_cast<double>(end - start);
      ClientGrads g = ClientGrads::zeros_like(c);
      double batch_loss = 0.0;
      for (std::size_t b = start; b < end; ++b) {
        const auto& s = c.train.samples[order[b]];
        const auto target = LabelEncoding::one_hot(s.label, c.num_classes());
        const auto& logits = client_forward(c, s.x, trace);
        batch_loss += soft_cross_entropy(logits, target);
        std::vector<double> extra;
        if (anchors && anchor_weight > 0.0 && s.label < anchors->size() && !(*anchors)[s.label].empty()) {
          const auto& p = (*anchors)[s.label];
          extra.resize(p.size());
          for (std::size_t j = 0; j < p.size(); ++j) {
            const double diff = trace.mapped[j] - p[j];
            batch_loss += anchor_weight * diff * diff;
            extra[j] = 2.0 * anchor_weight * diff;
          }
        }
        client_backprop(c, trace, soft_cross_entropy_grad(logits, target), extra, g, scale);
      }
      batch_loss *= scale;
      if (!std::isfinite(batch_loss))
        throw DivergedError("client " + std::to_string(c.id) + ": non-finite training loss");
      nn::sgd_step(c.extractor, g.extractor, c.options.lr);
      if (c.rm.op == RmOp::FC) nn::sgd_step(c.rm.fc, g.fc, c.options.lr);
      nn::sgd_step(c.classifier, g.classifier, c.options.lr);
      loss_sum += batch_loss;
      ++report.steps;
    }
  }
  report.mean_loss = report.steps ? loss_sum / static_cast<double>(report.steps) : 0.0;
  return report;
}

// Receive the global classifier, then fine-tune locally.
inline LocalUpdateReport client_local_update(ClientState& c, const nn::DenseNet& global_classifier) {
  receive_classifier(c, global_classifier);
  return local_train(c);
}

// Mapped representations of every training sample under the current extractor.
inline RepresentationSet client_representations(const ClientState& c) {
  RepresentationSet set{{}, {}, c.num_classes()};
  set.reps.reserve(c.train.size());
  set.labels.reserve(c.train.size());
  for (const auto& s : c.train.samples) {
    set.reps.push_back(map_input(c, s.x));
    set.labels.push_back(s.label);
  }
  return set;
}

// One entangled packet from all local training samples. Weights are drawn
// fresh from the client's stream, unless `weights` is supplied.
inline EntangledPacket client_make_packet(ClientState& c, const ReMechanism& mech,
                                          const WeightVector* weights = nullptr, OpCounter* counter = nullptr) {
  if (c.train.empty()) throw std::invalid_argument("client " + std::to_string(c.id) + " has no training samples");
  const RepresentationSet mapped = client_representations(c);
  const WeightVector w = weights ? *weights : re_weights(mapped, mech, c.rng);
  return entangle_mapped(mapped.reps, mapped.labels, mapped.num_classes, w, counter);
}

struct ServerUpdateReport {
  double loss_before = 0.0;
  double loss_after = 0.0;
  std::size_t steps = 0;
};

inline double packet_loss(const nn::DenseNet& classifier, std::span<const EntangledPacket> packets) {
  double total = 0.0;
  for (const auto& p : packets) total += soft_cross_entropy(nn::forward(classifier, p.r_tilde), p.y_tilde);
  return total;
}

// Minibatch SGD on Σ_k CE(f(ω; r̃_k), ỹ_k) for options.epochs passes.
inline ServerUpdateReport server_update(ServerState& s, std::span<const EntangledPacket> packets) {
  if (packets.empty()) throw std::invalid_argument("server_update: no packets");
  for (const auto& p : packets)
    if (p.r_tilde.size() != s.classifier.input_dim() || p.y_tilde.size() != s.classifier.output_dim())
      throw ShapeError("server_update: packet dimension does not match the global classifier");
  ServerUpdateReport report;
  report.loss_before = packet_loss(s.classifier, packets);
  const std::size_t n = packets.size();
  const std::size_t batch = std::max<std::size_t>(1, s.options.batch_size);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  nn::ForwardCache cache;
  for (std::size_t epoch = 0; epoch < s.options.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), s.rng);
    for (std::size_t start = 0; start < n; start += batch) {
      const std::size_t end = std::min(n, start + batch);
      auto g = nn::GradientSet::zeros_like(s.classifier);
      for (std::size_t b = start; b < end; ++b) {
        const auto& p = packets[order[b]];
        const auto& logits = nn::forward(s.classifier, p.r_tilde, cache);
        nn::backprop(s.classifier, cache, soft_cross_entropy_grad(logits, p.y_tilde), g,
                     1.0 / static_cast<double>(end - start));
      }
      nn::sgd_step(s.classifier, g, s.options.lr);
      ++report.steps;
    }
  }
  report.loss_after = packet_loss(s.classifier, packets);
  if (!std::isfinite(report.loss_after)) throw DivergedError("server_update: non-finite loss");
  return report;
}

// ---------------------------------------------------------------------------
// Communication accounting

enum class CommConvention { representation_only, representation_plus_label };

struct RoundComm {
  std::uint64_t upload = 0;
  std::uint64_t broadcast = 0;

  friend bool operator==(const RoundComm&, const RoundComm&) = default;
};

struct CommLedger {
  CommConvention convention = CommConvention::representation_only;
  std::vector<RoundComm> rounds;

  void record(RoundComm r) { rounds.push_back(r); }

  RoundComm totals() const {
    RoundComm t;
    for (const auto& r : rounds) {
      t.upload += r.upload;
      t.broadcast += r.broadcast;
    }
    return t;
  }

  friend bool operator==(const CommLedger&, const CommLedger&) = default;
};

// Upload: one d-vector per client (+C label scalars under the plus-label
// convention). Broadcast: the d×C weights and C biases of the classifier to
// every client.
inline RoundComm fedre_round_comm(std::uint64_t clients, std::uint64_t dim, std::uint64_t classes, CommConvention conv) {
  if (clients == 0 || dim == 0 || classes == 0) throw std::invalid_argument("count_round: K, d and C must be positive");
  const std::uint64_t per_vector = dim + (conv == CommConvention::representation_plus_label ? classes : 0);
  return {clients * per_vector, clients * (dim * classes + classes)};
}

inline RoundComm count_round(CommLedger& ledger, std::uint64_t clients, std::uint64_t dim, std::uint64_t classes) {
  const RoundComm r = fedre_round_comm(clients, dim, classes, ledger.convention);
  ledger.record(r);
  return r;
}

// ⌈rate·K⌉ distinct clients, uniformly, returned in ascending order.
inline std::vector<std::size_t> participation_sample(std::size_t num_clients, double rate, Rng& rng) {
  if (!(rate > 0.0 && rate <= 1.0)) throw std::invalid_argument("participation rate must be in (0, 1]");
  const auto k = std::min(num_clients, static_cast<std::size_t>(std::ceil(rate * static_cast<double>(num_clients) - 1e-9)));
  std::vector<std::size_t> all(num_clients);
  std::iota(all.begin(), all.end(), 0);
  if (k == num_clients) return all;
  std::vector<std::size_t> picked;
  std::sample(all.begin(), all.end(), std::back_inserter(picked), k, rng);
  return picked;
}

}  // namespace fedre
