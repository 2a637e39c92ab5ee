#include "fedssl/data/partition.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>

#include "fedssl/errors.hpp"

namespace fedssl::data {

void PartitionSpec::validate() const {
  if (clients == 0) throw ConfigError("partition.clients must be >= 1");
  if (!(dirichlet_alpha > 0.0) || !std::isfinite(dirichlet_alpha)) {
    throw ConfigError("partition.dirichlet_alpha must be > 0");
  }
  if (!(label_ratio > 0.0 && label_ratio <= 1.0)) throw ConfigError("partition.label_ratio must be in (0, 1]");
}

Matrix synthetic_centers(std::size_t classes, std::size_t dim) {
  // Fixed stream: the geometry of the task does not change with the data seed.
  Rng rng(0x5eedc0ffeeULL);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix centers(static_cast<Eigen::Index>(classes), static_cast<Eigen::Index>(dim));
  for (Eigen::Index c = 0; c < centers.rows(); ++c) {
    for (Eigen::Index j = 0; j < centers.cols(); ++j) centers(c, j) = normal(rng);
    // Gram-Schmidt while an orthogonal direction still exists.
    if (static_cast<std::size_t>(c) < dim) {
      for (Eigen::Index p = 0; p < c; ++p) {
        centers.row(c) -= centers.row(c).dot(centers.row(p)) * centers.row(p);
      }
    }
    centers.row(c).normalize();
  }
  return centers * kSyntheticRadius;
}

Dataset generate_synthetic(std::size_t classes, std::size_t dim, std::size_t per_class, double spread,
                           std::uint64_t seed) {
  if (classes < 2) throw ConfigError("dataset.classes must be >= 2");
  if (dim < 2) throw ConfigError("dataset.dim must be >= 2");
  if (spread < 0.0) throw ConfigError("dataset.spread must be >= 0");
  const Matrix centers = synthetic_centers(classes, dim);
  Rng rng(derive_seed(seed, {0xda7a}));
  std::normal_distribution<double> normal(0.0, 1.0);

  Dataset data;
  data.classes = classes;
  data.dim = dim;
  data.samples.reserve(classes * per_class);
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t i = 0; i < per_class; ++i) {
      Sample s;
      s.label = static_cast<int>(c);
      s.features.resize(dim);
      for (std::size_t j = 0; j < dim; ++j) {
        const double noise = spread > 0.0 ? spread * normal(rng) : 0.0;
        s.features[j] = centers(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(j)) + noise;
      }
      data.samples.push_back(std::move(s));
    }
  }
  std::shuffle(data.samples.begin(), data.samples.end(), rng);
  return data;
}

namespace {

std::vector<double> sample_dirichlet(std::size_t n, double alpha, Rng& rng) {
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::vector<double> p(n);
  double sum = 0.0;
  for (auto& v : p) {
    v = gamma(rng);
    sum += v;
  }
  if (!(sum > 0.0)) {
    // Every draw underflowed (tiny alpha): put all mass on one uniformly chosen component.
    std::fill(p.begin(), p.end(), 0.0);
    p[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)] = 1.0;
    return p;
  }
  for (auto& v : p) v /= sum;
  return p;
}

}  // namespace

std::vector<std::vector<std::size_t>> dirichlet_partition(const Dataset& data, const PartitionSpec& spec) {
  spec.validate();
  if (spec.clients > data.size()) {
    throw ConfigError("partition.clients (" + std::to_string(spec.clients) + ") exceeds sample count (" +
                      std::to_string(data.size()) + ")");
  }
  Rng rng(derive_seed(spec.seed, {0x9a27}));
  std::vector<std::vector<std::size_t>> by_class(data.classes);
  for (std::size_t i = 0; i < data.size(); ++i) by_class.at(static_cast<std::size_t>(data.samples[i].label)).push_back(i);

  std::vector<std::vector<std::size_t>> parts(spec.clients);
  for (auto& members : by_class) {
    std::shuffle(members.begin(), members.end(), rng);
    const auto props = sample_dirichlet(spec.clients, spec.dirichlet_alpha, rng);
    const double n = static_cast<double>(members.size());
    double cum = 0.0;
    std::size_t start = 0;
    for (std::size_t k = 0; k < spec.clients; ++k) {
      cum += props[k];
      const std::size_t end =
          (k + 1 == spec.clients) ? members.size() : std::min(members.size(), static_cast<std::size_t>(std::llround(cum * n)));
      for (std::size_t i = start; i < end; ++i) parts[k].push_back(members[i]);
      start = std::max(start, end);
    }
  }

  for (auto& part : parts) {
    if (!part.empty()) continue;
    auto largest = std::max_element(parts.begin(), parts.end(),
                                    [](const auto& a, const auto& b) { return a.size() < b.size(); });
    part.push_back(largest->back());
    largest->pop_back();
  }
  return parts;
}

ClientDataset split_labeled_unlabeled(const Dataset& data, std::span<const std::size_t> client_samples,
                                      double label_ratio, Rng& rng, std::size_t client_id) {
  if (!(label_ratio > 0.0 && label_ratio <= 1.0)) throw ConfigError("partition.label_ratio must be in (0, 1]");
  std::vector<std::size_t> order(client_samples.begin(), client_samples.end());
  std::shuffle(order.begin(), order.end(), rng);
  // floor with a guard against representation error (0.2 * 10 must give 2).
  const auto n_labeled = std::min(
      order.size(), static_cast<std::size_t>(std::floor(label_ratio * static_cast<double>(order.size()) + 1e-9)));

  ClientDataset client;
  client.id = client_id;
  client.classes = data.classes;
  client.labeled_source.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_labeled));
  client.unlabeled_source.assign(order.begin() + static_cast<std::ptrdiff_t>(n_labeled), order.end());

  client.labeled.features = feature_matrix(data, client.labeled_source);
  for (auto i : client.labeled_source) client.labeled.labels.push_back(data.samples[i].label);

  std::vector<int> hidden;
  hidden.reserve(client.unlabeled_source.size());
  for (auto i : client.unlabeled_source) hidden.push_back(data.samples[i].label);
  client.unlabeled = UnlabeledSet(feature_matrix(data, client.unlabeled_source), std::move(hidden));
  return client;
}

std::vector<ClientDataset> build_clients(const Dataset& train, const PartitionSpec& spec) {
  const auto parts = dirichlet_partition(train, spec);
  std::vector<ClientDataset> clients;
  clients.reserve(parts.size());
  for (std::size_t k = 0; k < parts.size(); ++k) {
    Rng rng(derive_seed(spec.seed, {0x5b17, k}));
    clients.push_back(split_labeled_unlabeled(train, parts[k], spec.label_ratio, rng, k));
  }
  return clients;
}

double total_variation(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  if (a.size() != b.size()) throw ConfigError("total_variation: histogram length mismatch");
  const double na = static_cast<double>(std::accumulate(a.begin(), a.end(), std::size_t{0}));
  const double nb = static_cast<double>(std::accumulate(b.begin(), b.end(), std::size_t{0}));
  if (na == 0.0 || nb == 0.0) throw ConfigError("total_variation: empty histogram");
  double tv = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) tv += std::abs(static_cast<double>(a[i]) / na - static_cast<double>(b[i]) / nb);
  return 0.5 * tv;
}

double mismatch_score(const ClientDataset& client) {
  if (client.labeled.size() == 0 || client.unlabeled.size() == 0) {
    throw ConfigError("mismatch_score: client " + std::to_string(client.id) + " has an empty labeled or unlabeled subset");
  }
  const auto hl = class_histogram(client.labeled.labels, client.classes);
  const auto hu = class_histogram(QuarantineAudit::labels(client.unlabeled), client.classes);
  return total_variation(hl, hu);
}

HoldoutSplit holdout_split(const Dataset& pool, double train_fraction, double validation_fraction, std::uint64_t seed) {
  const double test_fraction = 1.0 - train_fraction - validation_fraction;
  if (train_fraction <= 0.0 || validation_fraction < 0.0 || test_fraction <= -1e-9) {
    throw ConfigError("dataset fractions must be non-negative, train > 0, and sum to 1");
  }
  std::vector<std::size_t> order(pool.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, {0x4e1d}));
  std::shuffle(order.begin(), order.end(), rng);
  const auto n = static_cast<double>(pool.size());
  const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * n + 1e-9));
  const auto n_val = std::min(pool.size() - n_train, static_cast<std::size_t>(std::floor(validation_fraction * n + 1e-9)));

  HoldoutSplit out;
  for (Dataset* d : {&out.train, &out.validation, &out.test}) {
    d->classes = pool.classes;
    d->dim = pool.dim;
    d->image = pool.image;
  }
  for (std::size_t i = 0; i < order.size(); ++i) {
    Dataset& dst = i < n_train ? out.train : (i < n_train + n_val ? out.validation : out.test);
    dst.samples.push_back(pool.samples[order[i]]);
  }
  return out;
}

void write_clients_csv(std::ostream& out, std::span<const ClientDataset> clients) {
  Eigen::Index width = 0;
  for (const auto& c : clients) width = std::max({width, c.labeled.features.cols(), c.unlabeled.features().cols()});
  out << "client,split,label";
  for (Eigen::Index j = 0; j < width; ++j) out << ",f" << j;
  out << '\n';
  auto emit = [&](std::size_t id, const char* split, int label, const Matrix& m, Eigen::Index r) {
    out << id << ',' << split << ',' << label;
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << ',' << m(r, j);
    out << '\n';
  };
  for (const auto& c : clients) {
    for (std::size_t i = 0; i < c.labeled.size(); ++i) {
      emit(c.id, "labeled", c.labeled.labels[i], c.labeled.features, static_cast<Eigen::Index>(i));
    }
    for (std::size_t i = 0; i < c.unlabeled.size(); ++i) {
      emit(c.id, "unlabeled", QuarantineAudit::label(c.unlabeled, i), c.unlabeled.features(),
           static_cast<Eigen::Index>(i));
    }
  }
}

}  // namespace fedssl::data
