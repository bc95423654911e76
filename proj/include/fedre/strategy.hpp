#pragma once

// What each client uploads per round under FedRE and the comparison
// strategies, and the scalar count that upload implies.

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "fedre/entangle.hpp"
#include "fedre/protocol.hpp"

namespace fedre {

enum class StrategyKind { Local, FedAllRep, FedGHStyle, FedProtoStyle, FedRE };

// RS re-draws entanglement weights every round; FS draws once and reuses them.
enum class Sampling { RS, FS };

struct Strategy {
  StrategyKind kind = StrategyKind::FedRE;
  ReMechanism mechanism{};
  Sampling sampling = Sampling::RS;
  double proto_lambda = 0.1;  // FedProtoStyle regularizer weight

  // Whether the server trains and broadcasts a global classifier.
  bool shares_classifier() const {
    return kind == StrategyKind::FedAllRep || kind == StrategyKind::FedGHStyle || kind == StrategyKind::FedRE;
  }
};

inline std::string_view to_string(StrategyKind k) {
  switch (k) {
    case StrategyKind::Local: return "Local";
    case StrategyKind::FedAllRep: return "FedAllRep";
    case StrategyKind::FedGHStyle: return "FedGHStyle";
    case StrategyKind::FedProtoStyle: return "FedProtoStyle";
    case StrategyKind::FedRE: return "FedRE";
  }
  return "?";
}

inline std::vector<EntangledPacket> one_hot_packets(std::span<const Prototype> protos, std::size_t num_classes) {
  std::vector<EntangledPacket> out;
  out.reserve(protos.size());
  for (const auto& p : protos) out.push_back({p.center, LabelEncoding::one_hot(p.category, num_classes)});
  return out;
}

// Uploads of one client for one round.
//   Local          nothing
//   FedAllRep      every mapped training representation with its one-hot label
//   FedGHStyle     one prototype per present category, one-hot labelled
//   FedProtoStyle  same prototypes, averaged per category by the server
//   FedRE          a single entangled packet (FS reuses the first draw)
inline std::vector<EntangledPacket> packets_for(const Strategy& strategy, ClientState& client, [[maybe_unused]] std::size_t round,
                                                OpCounter* counter = nullptr) {
  if (strategy.kind == StrategyKind::Local || client.train.empty()) return {};
  const RepresentationSet mapped = client_representations(client);
  switch (strategy.kind) {
    case StrategyKind::FedAllRep: {
      std::vector<EntangledPacket> out;
      out.reserve(mapped.size());
      for (std::size_t i = 0; i < mapped.size(); ++i)
        out.push_back({mapped.reps[i], LabelEncoding::one_hot(mapped.labels[i], mapped.num_classes)});
      return out;
    }
    case StrategyKind::FedGHStyle:
    case StrategyKind::FedProtoStyle: {
      const auto protos = prototypes_mapped(mapped.reps, mapped.labels, mapped.num_classes);
      return one_hot_packets(protos, mapped.num_classes);
    }
    case StrategyKind::FedRE: {
      WeightVector w;
      if (strategy.sampling == Sampling::FS) {
        if (!client.fixed_weights) client.fixed_weights = re_weights(mapped, strategy.mechanism, client.rng);
        w = *client.fixed_weights;
      } else {
        w = re_weights(mapped, strategy.mechanism, client.rng);
      }
      return {entangle_mapped(mapped.reps, mapped.labels, mapped.num_classes, w, counter)};
    }
    case StrategyKind::Local: break;
  }
  return {};
}

struct ClientStats {
  std::uint64_t samples = 0;
  std::uint64_t categories = 0;
};

// Scalars moved in one round by the participating clients described in `stats`.
inline RoundComm ledger_for(const Strategy& strategy, std::span<const ClientStats> stats, std::uint64_t dim,
                            std::uint64_t classes, CommConvention conv) {
  const std::uint64_t k = stats.size();
  const std::uint64_t per_vector = dim + (conv == CommConvention::representation_plus_label ? classes : 0);
  const std::uint64_t classifier = dim * classes + classes;
  RoundComm r;
  switch (strategy.kind) {
    case StrategyKind::Local: break;
    case StrategyKind::FedAllRep:
      for (const auto& s : stats) r.upload += s.samples * per_vector;
      r.broadcast = k * classifier;
      break;
    case StrategyKind::FedGHStyle:
      for (const auto& s : stats) r.upload += s.categories * per_vector;
      r.broadcast = k * classifier;
      break;
    case StrategyKind::FedProtoStyle:
      for (const auto& s : stats) r.upload += s.categories * per_vector;
      r.broadcast = k * classes * dim;
      break;
    case StrategyKind::FedRE:
      if (k > 0) r = fedre_round_comm(k, dim, classes, conv);
      break;
  }
  return r;
}

}  // namespace fedre
