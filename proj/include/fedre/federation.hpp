#pragma once

// The round loop: broadcast, local update, upload, server update, accounting.

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fedre/protocol.hpp"
#include "fedre/strategy.hpp"

namespace fedre {

struct Federation {
  std::vector<ClientState> clients;
  ServerState server;
  Strategy strategy;
  CommLedger ledger;
  double participation_rate = 1.0;
  Rng round_rng;               // drives participation sampling
  PrototypeTable prototypes;   // FedProtoStyle global anchors, one slot per category
  std::size_t round = 0;

  std::size_t num_classes() const { return clients.empty() ? 0 : clients.front().num_classes(); }
  std::size_t unified_dim() const { return server.classifier.input_dim(); }
};

struct RoundMetrics {
  std::size_t round = 0;
  double mean_acc = 0.0;
  std::vector<double> per_client_acc;
  RoundComm comm;
  std::size_t packets = 0;
  std::vector<std::size_t> participants;
};

struct Evaluation {
  double mean_acc = 0.0;
  std::vector<double> per_client_acc;
};

// Test accuracy of every client's current model; the mean skips clients
// without test data.
inline Evaluation evaluate(const Federation& fed) {
  Evaluation ev;
  std::size_t counted = 0;
  for (const auto& c : fed.clients) {
    const double acc = accuracy(c, c.test);
    ev.per_client_acc.push_back(acc);
    if (!c.test.empty()) {
      ev.mean_acc += acc;
      ++counted;
    }
  }
  if (counted) ev.mean_acc /= static_cast<double>(counted);
  return ev;
}

namespace detail {

inline void aggregate_prototypes(Federation& fed, const std::vector<EntangledPacket>& uploads) {
  const std::size_t C = fed.num_classes(), d = fed.unified_dim();
  std::vector<std::vector<double>> sums(C, std::vector<double>(d, 0.0));
  std::vector<std::size_t> counts(C, 0);
  for (const auto& p : uploads) {
    const std::size_t c = p.y_tilde.argmax();
    ++counts[c];
    for (std::size_t j = 0; j < d; ++j) sums[c][j] += p.r_tilde[j];
  }
  fed.prototypes.resize(C);
  for (std::size_t c = 0; c < C; ++c) {
    if (counts[c] == 0) continue;
    for (double& v : sums[c]) v /= static_cast<double>(counts[c]);
    fed.prototypes[c] = std::move(sums[c]);
  }
}

}  // namespace detail

// One communication round. On any exception the federation is left as it
// was before the call.
inline RoundMetrics run_round(Federation& fed) {
  if (fed.clients.empty()) throw std::invalid_argument("run_round: no clients");
  Federation next = fed;
  const auto sampled = participation_sample(next.clients.size(), next.participation_rate, next.round_rng);
  const Strategy& strategy = next.strategy;

  RoundMetrics m;
  m.round = next.round;
  std::vector<EntangledPacket> uploads;
  std::vector<ClientStats> stats;
  for (std::size_t k : sampled) {
    ClientState& c = next.clients[k];
    if (c.train.empty()) continue;
    m.participants.push_back(k);
    try {
      if (strategy.shares_classifier()) receive_classifier(c, next.server.classifier);
      if (strategy.kind == StrategyKind::FedProtoStyle)
        local_train(c, &next.prototypes, strategy.proto_lambda);
      else
        local_train(c);
    } catch (const DivergedError& e) {
      throw DivergedError("round " + std::to_string(next.round) + ": " + e.what());
    }
    auto packets = packets_for(strategy, c, next.round);
    uploads.insert(uploads.end(), std::make_move_iterator(packets.begin()), std::make_move_iterator(packets.end()));
    stats.push_back({c.train.size(), c.train.num_present_classes()});
  }
  if (m.participants.empty()) throw std::invalid_argument("run_round: no participating client has training data");
  m.packets = uploads.size();

  if (strategy.shares_classifier()) {
    server_update(next.server, uploads);
    for (std::size_t k : m.participants) receive_classifier(next.clients[k], next.server.classifier);
  } else if (strategy.kind == StrategyKind::FedProtoStyle) {
    detail::aggregate_prototypes(next, uploads);
  }

  m.comm = ledger_for(strategy, stats, next.unified_dim(), next.num_classes(), next.ledger.convention);
  next.ledger.record(m.comm);

  const Evaluation ev = evaluate(next);
  m.mean_acc = ev.mean_acc;
  m.per_client_acc = ev.per_client_acc;
  ++next.round;
  fed = std::move(next);
  return m;
}

}  // namespace fedre
