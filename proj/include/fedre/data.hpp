#pragma once

// Synthetic datasets and non-IID client partitioning.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "fedre/nn.hpp"
#include "fedre/random.hpp"

namespace fedre::data {

struct Sample {
  std::vector<double> x;
  std::size_t label = 0;

  friend bool operator==(const Sample&, const Sample&) = default;
  friend bool operator<(const Sample& a, const Sample& b) {
    return a.label != b.label ? a.label < b.label : a.x < b.x;
  }
};

struct Dataset {
  std::size_t num_classes = 0;
  std::size_t dim = 0;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }

  void validate() const {
    for (const Sample& s : samples) {
      if (s.label >= num_classes) throw std::invalid_argument("Dataset: label out of range");
      if (s.x.size() != dim) throw ShapeError("Dataset: sample has wrong dimension");
      if (!all_finite(s.x)) throw std::invalid_argument("Dataset: non-finite feature");
    }
  }

  std::vector<std::size_t> class_counts() const {
    std::vector<std::size_t> counts(num_classes, 0);
    for (const Sample& s : samples) ++counts[s.label];
    return counts;
  }

  std::size_t num_present_classes() const {
    const auto counts = class_counts();
    return static_cast<std::size_t>(std::count_if(counts.begin(), counts.end(), [](std::size_t n) { return n > 0; }));
  }

  Dataset empty_like() const { return Dataset{num_classes, dim, {}}; }
};

// Gaussian cluster per class. Class means sit on a circle of radius
// separation·spread in the first two coordinates (first coordinate only
// when dim == 1); every coordinate has stdev `spread`. Classes are emitted
// in order, per_class samples each.
inline Dataset make_blobs(std::size_t num_classes, std::size_t per_class, std::size_t dim, double spread,
                          std::uint64_t seed, double separation = 3.0) {
  if (num_classes == 0 || per_class == 0 || dim == 0) throw std::invalid_argument("make_blobs: sizes must be positive");
  if (!(spread >= 0.0) || !(separation >= 0.0)) throw std::invalid_argument("make_blobs: spread must be >= 0");
  Rng rng(seed);
  Dataset ds{num_classes, dim, {}};
  ds.samples.reserve(num_classes * per_class);
  const double radius = separation * spread;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(num_classes);
    std::vector<double> mean(dim, 0.0);
    mean[0] = radius * std::cos(angle);
    if (dim > 1) mean[1] = radius * std::sin(angle);
    for (std::size_t i = 0; i < per_class; ++i) {
      Sample s{mean, c};
      for (double& v : s.x) v += spread * standard_normal(rng);
      ds.samples.push_back(std::move(s));
    }
  }
  return ds;
}

struct Pra {
  double alpha = 0.1;
};
struct Pat {
  std::size_t categories_per_client = 2;
};
struct LongTail {
  double imbalance_factor = 100.0;
  double alpha = 0.1;
};

struct PartitionSpec {
  std::variant<Pra, Pat, LongTail> mode = Pra{};
  std::size_t num_clients = 10;
  std::uint64_t seed = 0;
};

namespace detail {

inline std::vector<std::vector<std::size_t>> indices_by_class(const Dataset& ds) {
  std::vector<std::vector<std::size_t>> by_class(ds.num_classes);
  for (std::size_t i = 0; i < ds.samples.size(); ++i) by_class[ds.samples[i].label].push_back(i);
  return by_class;
}

// Split `total` into integer parts proportional to `shares` by largest remainder.
inline std::vector<std::size_t> largest_remainder(std::size_t total, const std::vector<double>& shares) {
  const double sum = std::accumulate(shares.begin(), shares.end(), 0.0);
  std::vector<std::size_t> out(shares.size(), 0);
  std::vector<std::pair<double, std::size_t>> rem;
  std::size_t assigned = 0;
  for (std::size_t k = 0; k < shares.size(); ++k) {
    const double exact = static_cast<double>(total) * shares[k] / sum;
    out[k] = static_cast<std::size_t>(std::floor(exact));
    assigned += out[k];
    rem.emplace_back(exact - std::floor(exact), k);
  }
  std::stable_sort(rem.begin(), rem.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t i = 0; assigned < total; ++i, ++assigned) ++out[rem[i % rem.size()].second];
  return out;
}

inline std::vector<double> sample_dirichlet(double alpha, std::size_t k, Rng& rng) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> p(k);
  double sum = 0.0;
  do {
    sum = 0.0;
    for (double& v : p) sum += (v = gamma(rng));
  } while (!(sum > 0.0));
  for (double& v : p) v /= sum;
  return p;
}

inline std::vector<Dataset> partition_dirichlet(const Dataset& ds, double alpha, std::size_t num_clients, Rng& rng) {
  if (!(alpha > 0.0)) throw std::invalid_argument("partition: Dirichlet alpha must be > 0");
  std::vector<Dataset> clients(num_clients, ds.empty_like());
  for (auto& idx : indices_by_class(ds)) {
    if (idx.empty()) continue;
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto counts = largest_remainder(idx.size(), sample_dirichlet(alpha, num_clients, rng));
    std::size_t pos = 0;
    for (std::size_t k = 0; k < num_clients; ++k)
      for (std::size_t j = 0; j < counts[k]; ++j) clients[k].samples.push_back(ds.samples[idx[pos++]]);
  }
  return clients;
}

inline std::vector<Dataset> partition_shards(const Dataset& ds, std::size_t per_client, std::size_t num_clients,
                                             Rng& rng) {
  const std::size_t C = ds.num_classes;
  if (per_client == 0 || per_client > C)
    throw std::invalid_argument("partition PAT: categories_per_client must be in [1, " + std::to_string(C) + "]");
  auto by_class = indices_by_class(ds);
  std::vector<std::size_t> present;
  for (std::size_t c = 0; c < C; ++c)
    if (!by_class[c].empty()) present.push_back(c);
  const std::size_t slots = num_clients * per_client;
  if (present.empty() || slots % present.size() != 0)
    throw std::invalid_argument("partition PAT: " + std::to_string(num_clients) + " clients x " +
                                std::to_string(per_client) + " categories = " + std::to_string(slots) +
                                " shards cannot be split evenly over " + std::to_string(present.size()) +
                                " categories");
  const std::size_t shards_per_class = slots / present.size();
  if (shards_per_class > num_clients)
    throw std::invalid_argument("partition PAT: more shards per category than clients; a client would repeat a category");
  for (std::size_t c : present)
    if (by_class[c].size() < shards_per_class)
      throw std::invalid_argument("partition PAT: category " + std::to_string(c) + " has " +
                                  std::to_string(by_class[c].size()) + " samples, fewer than its " +
                                  std::to_string(shards_per_class) + " shards");

  // Deal category slots so that each client gets distinct categories:
  // the sequence c0×s, c1×s, ... laid out column-major over clients.
  std::vector<std::size_t> order = present;
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> slot_class;
  for (std::size_t c : order)
    for (std::size_t s = 0; s < shards_per_class; ++s) slot_class.push_back(c);
  std::vector<std::vector<std::size_t>> client_classes(num_clients);
  for (std::size_t i = 0; i < slots; ++i) client_classes[i % num_clients].push_back(slot_class[i]);

  // Random unequal shard sizes per category, each shard non-empty.
  std::vector<std::vector<std::size_t>> shard_sizes(C);
  for (std::size_t c : present) {
    std::vector<double> shares(shards_per_class);
    for (double& v : shares) v = 0.5 + uniform01(rng);
    const std::size_t n = by_class[c].size();
    auto sizes = largest_remainder(n - shards_per_class, shares);
    for (auto& s : sizes) ++s;
    shard_sizes[c] = std::move(sizes);
    std::shuffle(by_class[c].begin(), by_class[c].end(), rng);
  }

  std::vector<Dataset> clients(num_clients, ds.empty_like());
  std::vector<std::size_t> next_shard(C, 0), offset(C, 0);
  for (std::size_t k = 0; k < num_clients; ++k) {
    for (std::size_t c : client_classes[k]) {
      const std::size_t n = shard_sizes[c][next_shard[c]++];
      for (std::size_t j = 0; j < n; ++j) clients[k].samples.push_back(ds.samples[by_class[c][offset[c] + j]]);
      offset[c] += n;
    }
  }
  return clients;
}

}  // namespace detail

// Keeps round(n_max·IF^(−c/(C−1))) samples of class c (at least one, at most
// what is available), chosen uniformly at random. n_max is the largest class.
inline Dataset apply_longtail(const Dataset& ds, double imbalance_factor, std::uint64_t seed) {
  if (!(imbalance_factor >= 1.0)) throw std::invalid_argument("apply_longtail: imbalance factor must be >= 1");
  if (imbalance_factor == 1.0 || ds.num_classes < 2) return ds;
  Rng rng(seed);
  auto by_class = detail::indices_by_class(ds);
  std::size_t n_max = 0;
  for (const auto& v : by_class) n_max = std::max(n_max, v.size());
  std::vector<bool> keep(ds.size(), false);
  const double denom = static_cast<double>(ds.num_classes - 1);
  for (std::size_t c = 0; c < ds.num_classes; ++c) {
    auto& idx = by_class[c];
    if (idx.empty()) continue;
    const double target = static_cast<double>(n_max) * std::pow(imbalance_factor, -static_cast<double>(c) / denom);
    const std::size_t n = std::min(idx.size(), std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(target))));
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t j = 0; j < n; ++j) keep[idx[j]] = true;
  }
  Dataset out = ds.empty_like();
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (keep[i]) out.samples.push_back(ds.samples[i]);
  return out;
}

// Splits `ds` over spec.num_clients clients. Disjoint, exhaustive, labels preserved.
inline std::vector<Dataset> partition(const Dataset& ds, const PartitionSpec& spec) {
  if (ds.empty()) throw std::invalid_argument("partition: empty dataset");
  if (spec.num_clients == 0) throw std::invalid_argument("partition: need at least one client");
  Rng rng(spec.seed);
  if (const auto* pra = std::get_if<Pra>(&spec.mode)) return detail::partition_dirichlet(ds, pra->alpha, spec.num_clients, rng);
  if (const auto* pat = std::get_if<Pat>(&spec.mode))
    return detail::partition_shards(ds, pat->categories_per_client, spec.num_clients, rng);
  const auto& lt = std::get<LongTail>(spec.mode);
  const Dataset tailed = apply_longtail(ds, lt.imbalance_factor, derive_seed(spec.seed, 0x7a11));
  return detail::partition_dirichlet(tailed, lt.alpha, spec.num_clients, rng);
}

struct TrainTest {
  Dataset train;
  Dataset test;
};

// Stratified split: per class, round(train_fraction·n_c) samples go to train.
inline TrainTest train_test_split(const Dataset& ds, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) throw std::invalid_argument("train_test_split: fraction must be in (0,1]");
  Rng rng(seed);
  TrainTest out{ds.empty_like(), ds.empty_like()};
  for (auto& idx : detail::indices_by_class(ds)) {
    std::shuffle(idx.begin(), idx.end(), rng);
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(idx.size())));
    for (std::size_t j = 0; j < idx.size(); ++j) (j < n_train ? out.train : out.test).samples.push_back(ds.samples[idx[j]]);
  }
  return out;
}

// Shannon entropy (nats) of the class histogram.
inline double label_entropy(const Dataset& ds) {
  if (ds.empty()) return 0.0;
  double h = 0.0;
  for (std::size_t n : ds.class_counts()) {
    if (n == 0) continue;
    const double p = static_cast<double>(n) / static_cast<double>(ds.size());
    h -= p * std::log(p);
  }
  return h;
}

// CSV with header `x0,...,x{dim-1},label`.
inline void write_csv(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  for (std::size_t j = 0; j < ds.dim; ++j) out << 'x' << j << ',';
  out << "label\n";
  out.precision(17);
  for (const Sample& s : ds.samples) {
    for (double v : s.x) out << v << ',';
    out << s.label << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

// num_classes = 0 infers it as max label + 1.
inline Dataset read_csv(const std::string& path, std::size_t num_classes = 0) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path + ": missing header");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.size() < 2 || header.back() != "label") throw std::runtime_error(path + ": header must end with 'label'");
  for (std::size_t j = 0; j + 1 < header.size(); ++j)
    if (header[j] != "x" + std::to_string(j)) throw std::runtime_error(path + ": unexpected column '" + header[j] + "'");
  Dataset ds{num_classes, header.size() - 1, {}};
  std::size_t max_label = 0, lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != header.size()) throw std::runtime_error(path + ":" + std::to_string(lineno) + ": wrong column count");
    Sample s;
    for (std::size_t j = 0; j < ds.dim; ++j) s.x.push_back(std::stod(cells[j]));
    s.label = static_cast<std::size_t>(std::stoul(cells.back()));
    max_label = std::max(max_label, s.label);
    ds.samples.push_back(std::move(s));
  }
  if (ds.num_classes == 0) ds.num_classes = ds.samples.empty() ? 0 : max_label + 1;
  ds.validate();
  return ds;
}

}  // namespace fedre::data
