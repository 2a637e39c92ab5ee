#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <string>

#include "doctest.h"
#include "fedssl/data/partition.hpp"
#include "fedssl/errors.hpp"
#include "fedssl/federation/protocol.hpp"
#include "fedssl/federation/training.hpp"
#include "fedssl/nn/metrics.hpp"
#include "fedssl/nn/network.hpp"
#include "fixtures.hpp"

using namespace fedssl;
using namespace fedssl::federation;

namespace {

struct SmallWorld {
  std::vector<data::ClientDataset> clients;
  EvalSet test;
};

SmallWorld small_world(double label_ratio, std::uint64_t seed = 3, std::size_t clients = 6) {
  const auto pool = data::generate_synthetic(4, 6, 60, 0.6, seed);
  const auto split = data::holdout_split(pool, 0.8, 0.0, seed);
  data::PartitionSpec spec;
  spec.clients = clients;
  spec.dirichlet_alpha = 0.3;
  spec.label_ratio = label_ratio;
  spec.seed = seed;
  SmallWorld w;
  w.clients = data::build_clients(split.train, spec);
  w.test = {data::feature_matrix(split.test), data::labels_of(split.test)};
  return w;
}

TrainingOptions small_options(std::size_t rounds) {
  TrainingOptions o;
  o.rounds = rounds;
  o.participation = 0.5;
  o.seed = 9;
  o.hidden = {8};
  return o;
}

MethodConfig small_method(Method m) {
  MethodConfig c;
  c.method = m;
  c.tau = 5;
  c.tau_prime = 5;
  c.batch_size = 8;
  c.lr = 0.1;
  if (c.uses_proximal()) c.prox_mu = 0.01;
  return c;
}

double norm(std::span<const double> v) {
  return std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
}

void check_same_trajectory(const TrainingResult& a, const TrainingResult& b) {
  REQUIRE(a.rounds.size() == b.rounds.size());
  for (std::size_t t = 0; t < a.rounds.size(); ++t) {
    CHECK(a.rounds[t].test_accuracy == b.rounds[t].test_accuracy);
    CHECK(a.rounds[t].participants == b.rounds[t].participants);
    CHECK(a.rounds[t].aggregation_weights == b.rounds[t].aggregation_weights);
    CHECK(a.rounds[t].sup_loss == b.rounds[t].sup_loss);
  }
  CHECK(a.final_params == b.final_params);
}

}  // namespace

TEST_SUITE("federation") {
  TEST_CASE("client sampling") {
    Rng rng(1);
    auto all = sample_clients(5, 1.0, rng);
    CHECK(all == std::vector<std::size_t>{0, 1, 2, 3, 4});
    const auto ten = sample_clients(100, 0.1, rng);
    CHECK(ten.size() == 10);
    CHECK(std::set<std::size_t>(ten.begin(), ten.end()).size() == 10);
    CHECK(sample_clients(20, 0.3, rng).size() == 6);
    Rng a(42);
    Rng b(42);
    CHECK(sample_clients(50, 0.2, a) == sample_clients(50, 0.2, b));
  }

  TEST_CASE("sampling is uniform over clients") {
    Rng rng(8);
    std::vector<int> counts(10, 0);
    for (int i = 0; i < 5000; ++i) {
      for (auto k : sample_clients(10, 0.3, rng)) ++counts[k];
    }
    for (int c : counts) CHECK(std::abs(c - 1500) < 150);
  }

  TEST_CASE("method names round-trip") {
    for (auto m : {Method::FedAvgSup, Method::FedProxSup, Method::FedAvgFixMatch, Method::FedAvgUDA,
                   Method::FedProxFixMatch, Method::FedProxUDA, Method::FedLabel}) {
      CHECK(parse_method(to_string(m)) == m);
    }
    CHECK(!parse_method("fedmatch"));
  }

  TEST_CASE("method config validation") {
    MethodConfig c;
    c.method = Method::FedAvgSup;
    c.prox_mu = 0.1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c.method = Method::FedProxSup;
    CHECK_NOTHROW(c.validate());
    c.tau = 0;
    CHECK_THROWS_AS(c.validate(), ConfigError);
  }

  TEST_CASE("supervised update edge cases") {
    const auto w = small_world(0.5);
    const auto global = initial_model(6, 4, std::vector<std::size_t>{8}, 1);
    auto cfg = small_method(Method::FedAvgSup);

    cfg.lr = 0.0;
    Rng rng(1);
    auto r = supervised_local_update(global, w.clients[0], cfg, rng);
    CHECK(norm(r.delta) == 0.0);
    CHECK(r.local == global);

    auto empty = w.clients[0];
    empty.labeled = data::LabeledSet{nn::Matrix(0, 6), {}};
    cfg.lr = 0.1;
    r = supervised_local_update(global, empty, cfg, rng);
    CHECK(norm(r.delta) == 0.0);
  }

  TEST_CASE("a huge proximal coefficient pins the local model") {
    const auto w = small_world(0.5);
    const auto global = initial_model(6, 4, std::vector<std::size_t>{8}, 1);
    auto cfg = small_method(Method::FedProxSup);
    cfg.lr = 1e-6;
    cfg.tau = 5000;
    cfg.prox_mu = 0.0;
    Rng a(4);
    const auto free = supervised_local_update(global, w.clients[1], cfg, a);
    cfg.prox_mu = 1e6;
    Rng b(4);
    const auto pinned = supervised_local_update(global, w.clients[1], cfg, b);
    CHECK(norm(free.delta) > 0.0);
    CHECK(norm(pinned.delta) < 1e-3 * norm(free.delta));
  }

  TEST_CASE("more local steps never lower on-client labeled accuracy") {
    const auto pool = data::generate_synthetic(4, 6, 100, 1.0, 2);
    std::vector<std::size_t> idx(pool.size());
    std::iota(idx.begin(), idx.end(), 0);
    Rng split_rng(2);
    const auto client = data::split_labeled_unlabeled(pool, idx, 0.2, split_rng);
    const auto global = initial_model(6, 4, std::vector<std::size_t>{16}, 2);
    double previous = -1.0;
    for (std::size_t tau : {5, 20, 50}) {
      auto cfg = small_method(Method::FedAvgSup);
      cfg.tau = tau;
      cfg.lr = 0.05;
      Rng rng(6);
      const auto r = supervised_local_update(global, client, cfg, rng);
      const double acc = nn::top1_accuracy(r.local, client.labeled.features, client.labeled.labels);
      CHECK(acc >= previous);
      previous = acc;
    }
  }

  TEST_CASE("one client and one step equals a centralized sgd step") {
    const auto w = small_world(0.5, 5, 1);
    const auto& client = w.clients[0];
    auto cfg = small_method(Method::FedAvgSup);
    cfg.tau = 1;
    cfg.batch_size = client.labeled.size();
    const auto global = initial_model(6, 4, std::vector<std::size_t>{8}, 11);

    nn::Batch all;
    all.inputs = client.labeled.features;
    all.labels = client.labeled.labels;
    const auto expected = nn::sgd_step(global, nn::backward(global, all).grad, cfg.lr);

    ServerState server{global, 0, 1};
    data::Augmenter aug{data::AugmentConfig{}};
    const auto update = client_round(global, client, cfg, aug, 1, 0);
    aggregate(server, std::vector<ClientUpdate>{update});
    const auto& got = server.global.flatten();
    const auto& want = expected.flatten();
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-14));
  }

  TEST_CASE("aggregation arithmetic") {
    const nn::LayerShape scalar{0, 1};
    ServerState s{nn::ModelParams({scalar}), 0, 0};
    std::vector<ClientUpdate> two(2);
    two[0] = {0, {1.0}, 10, {}};
    two[1] = {1, {2.0}, 30, {}};
    const auto weights = aggregate(s, two);
    CHECK(s.global.flatten()[0] == doctest::Approx(1.75));
    CHECK(weights[0] == doctest::Approx(0.25));
    CHECK(weights[1] == doctest::Approx(0.75));

    ServerState one{nn::ModelParams({scalar}), 0, 0};
    aggregate(one, std::vector<ClientUpdate>{{3, {0.5}, 7, {}}});
    CHECK(one.global.flatten()[0] == doctest::Approx(0.5));

    ServerState zero{nn::ModelParams({scalar}), 0, 0};
    aggregate(zero, std::vector<ClientUpdate>{{0, {0.0}, 5, {}}, {1, {0.0}, 5, {}}});
    CHECK(zero.global.flatten()[0] == 0.0);

    ServerState unweighted{nn::ModelParams({scalar}), 0, 0};
    const auto w0 = aggregate(unweighted, std::vector<ClientUpdate>{{0, {4.0}, 0, {}}});
    CHECK(unweighted.global.flatten()[0] == 0.0);
    CHECK(w0 == std::vector<double>{0.0});
  }

  TEST_CASE("aggregation ignores the order updates arrive in") {
    const auto w = small_world(0.2);
    const auto global = initial_model(6, 4, std::vector<std::size_t>{8}, 3);
    const auto cfg = small_method(Method::FedLabel);
    data::Augmenter aug{data::AugmentConfig{}};
    std::vector<ClientUpdate> updates;
    for (const auto& c : w.clients) updates.push_back(client_round(global, c, cfg, aug, 5, 2));
    ServerState forward_order{global, 2, 5};
    aggregate(forward_order, updates);
    for (int trial = 0; trial < 5; ++trial) {
      auto shuffled = updates;
      Rng rng(static_cast<std::uint64_t>(trial));
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      ServerState s{global, 2, 5};
      aggregate(s, shuffled);
      CHECK(s.global == forward_order.global);
    }
  }

  TEST_CASE("beta one makes the unlabeled phase inert") {
    const auto w = small_world(0.2);
    const auto global = initial_model(6, 4, std::vector<std::size_t>{8}, 3);
    auto cfg = small_method(Method::FedLabel);
    cfg.ssl.beta = 1.0;
    data::Augmenter aug{data::AugmentConfig{}};
    for (const auto& c : w.clients) {
      Rng rng(1);
      const auto local = supervised_local_update(global, c, cfg, rng).local;
      const auto r = semi_supervised_local_update(global, local, c, cfg, aug, rng);
      CHECK(r.stats.accepted_unlabeled_count == 0);
      CHECK(norm(r.delta) == 0.0);
    }
    for (auto m : {Method::FedAvgFixMatch, Method::FedAvgUDA}) {
      auto b = small_method(m);
      b.ssl.beta = 1.0;
      Rng rng(2);
      const auto r = baseline_unsup_update(global, global, w.clients[0], b, aug, rng);
      CHECK(norm(r.delta) == 0.0);
    }
  }

  TEST_CASE("identical local and global models make the forced modes agree") {
    const auto w = small_world(0.2);
    const auto global = initial_model(6, 4, std::vector<std::size_t>{8}, 3);
    data::Augmenter aug{data::AugmentConfig{}};
    auto lo = small_method(Method::FedLabel);
    lo.ssl.selection = ssl::SelectionMode::LocalOnly;
    lo.ssl.beta = 0.2;
    auto go = lo;
    go.ssl.selection = ssl::SelectionMode::GlobalOnly;
    Rng a(3);
    Rng b(3);
    const auto ra = semi_supervised_local_update(global, global, w.clients[2], lo, aug, a);
    const auto rb = semi_supervised_local_update(global, global, w.clients[2], go, aug, b);
    CHECK(ra.delta == rb.delta);
  }

  TEST_CASE("fixmatch at a one-hot fixed point has no unsupervised gradient") {
    auto m = nn::ModelParams::unflatten({nn::LayerShape{2, 2}}, {60.0, 0.0, 0.0, 60.0, 0.0, 0.0});
    data::ClientDataset c;
    c.classes = 2;
    c.labeled = data::LabeledSet{nn::Matrix(0, 2), {}};
    nn::Matrix x(2, 2);
    x << 1, 0, 0, 1;
    c.unlabeled = data::UnlabeledSet(x, {0, 1});
    data::AugmentConfig acfg;
    acfg.magnitude = 0.0;
    acfg.vector_noise = 0.0;
    data::Augmenter aug(acfg);
    auto cfg = small_method(Method::FedAvgFixMatch);
    Rng rng(1);
    const auto r = baseline_unsup_update(m, m, c, cfg, aug, rng);
    CHECK(r.stats.accepted_unlabeled_count == 2);
    CHECK(norm(r.delta) < 1e-12);
  }

  TEST_CASE("update weight is labeled plus accepted") {
    const auto w = small_world(0.2);
    const auto global = initial_model(6, 4, std::vector<std::size_t>{8}, 3);
    data::Augmenter aug{data::AugmentConfig{}};
    for (auto m : {Method::FedLabel, Method::FedAvgFixMatch, Method::FedProxUDA, Method::FedAvgSup}) {
      auto cfg = small_method(m);
      cfg.ssl.beta = 0.1;
      for (const auto& c : w.clients) {
        const auto u = client_round(global, c, cfg, aug, 2, 0);
        CHECK(u.weight == c.labeled.size() + u.stats.accepted_unlabeled_count);
        CHECK(u.stats.accepted_unlabeled_count <= c.unlabeled.size());
        CHECK(u.delta.size() == global.size());
      }
    }
  }

  TEST_CASE("zero rounds leaves the initialization") {
    const auto w = small_world(0.2);
    data::Augmenter aug{data::AugmentConfig{}};
    const auto opts = small_options(0);
    const auto r = run_training(w.clients, small_method(Method::FedLabel), opts, aug, w.test);
    CHECK(r.rounds.empty());
    CHECK(r.final_params == initial_model(6, 4, opts.hidden, opts.seed));
  }

  TEST_CASE("beta one reduces FedLabel to partial-label FedAvg") {
    const auto w = small_world(0.2);
    data::Augmenter aug{data::AugmentConfig{}};
    auto fl = small_method(Method::FedLabel);
    fl.ssl.beta = 1.0;
    const auto a = run_training(w.clients, fl, small_options(6), aug, w.test);
    const auto b = run_training(w.clients, small_method(Method::FedAvgSup), small_options(6), aug, w.test);
    check_same_trajectory(a, b);
  }

  TEST_CASE("full labels reduce FedLabel to FedAvg") {
    const auto w = small_world(1.0);
    for (const auto& c : w.clients) REQUIRE(c.unlabeled.size() == 0);
    data::Augmenter aug{data::AugmentConfig{}};
    const auto a = run_training(w.clients, small_method(Method::FedLabel), small_options(6), aug, w.test);
    const auto b = run_training(w.clients, small_method(Method::FedAvgSup), small_options(6), aug, w.test);
    check_same_trajectory(a, b);
  }

  TEST_CASE("training never reads quarantined labels") {
    auto w = small_world(0.2);
    auto scrambled = w.clients;
    Rng rng(99);
    for (auto& c : scrambled) {
      data::QuarantineAudit::overwrite(c.unlabeled, fixtures::random_labels(c.unlabeled.size(), 4, rng));
    }
    data::Augmenter aug{data::AugmentConfig{}};
    for (auto m : {Method::FedLabel, Method::FedAvgFixMatch, Method::FedAvgUDA}) {
      const auto a = run_training(w.clients, small_method(m), small_options(5), aug, w.test);
      const auto b = run_training(scrambled, small_method(m), small_options(5), aug, w.test);
      CHECK(a.final_params == b.final_params);
    }
  }

  TEST_CASE("thread count does not change results") {
    const auto w = small_world(0.2);
    data::Augmenter aug{data::AugmentConfig{}};
    auto serial = small_options(4);
    auto parallel = serial;
    parallel.workers = 3;
    const auto a = run_training(w.clients, small_method(Method::FedLabel), serial, aug, w.test);
    const auto b = run_training(w.clients, small_method(Method::FedLabel), parallel, aug, w.test);
    check_same_trajectory(a, b);
  }

  TEST_CASE("per-round invariants hold across a run") {
    const auto w = small_world(0.2);
    data::Augmenter aug{data::AugmentConfig{}};
    auto cfg = small_method(Method::FedLabel);
    cfg.ssl.lambda0 = 1.3;
    std::size_t decisions = 0;
    bool lambda_ok = true;
    bool weights_ok = true;
    Observers obs;
    obs.on_decisions = [&](std::size_t, const data::ClientDataset&, std::span<const ssl::PseudoLabelDecision> ds) {
      for (const auto& d : ds) {
        ++decisions;
        lambda_ok = lambda_ok && d.lambda >= 0.0 && d.lambda <= cfg.ssl.lambda0;
      }
    };
    obs.on_round = [&](const ServerState&, std::span<const ClientUpdate> us, std::span<const double> ws) {
      const double sum = std::accumulate(ws.begin(), ws.end(), 0.0);
      weights_ok = weights_ok && std::abs(sum - 1.0) < 1e-12;
      for (double x : ws) weights_ok = weights_ok && x >= 0.0;
      for (const auto& u : us) weights_ok = weights_ok && u.weight == u.stats.labeled_count + u.stats.accepted_unlabeled_count;
    };
    const auto r = run_training(w.clients, cfg, small_options(8), aug, w.test, obs);
    CHECK(decisions > 0);
    CHECK(lambda_ok);
    CHECK(weights_ok);
    for (const auto& m : r.rounds) {
      CHECK(m.test_accuracy >= 0.0);
      CHECK(m.test_accuracy <= 1.0);
      CHECK(m.participants.size() == 3);
      CHECK(std::is_sorted(m.participants.begin(), m.participants.end()));
    }
  }

  TEST_CASE("divergence aborts with the round named") {
    const auto w = small_world(0.2);
    data::Augmenter aug{data::AugmentConfig{}};
    auto clients = w.clients;
    const auto poisoned = static_cast<std::size_t>(
        std::find_if(clients.begin(), clients.end(), [](const auto& c) { return c.labeled.size() > 0; }) -
        clients.begin());
    REQUIRE(poisoned < clients.size());
    clients[poisoned].labeled.features(0, 0) = INFINITY;
    auto opts = small_options(5);
    opts.participation = 1.0;
    try {
      run_training(clients, small_method(Method::FedAvgSup), opts, aug, w.test);
      FAIL("expected NumericError");
    } catch (const NumericError& e) {
      const std::string what = e.what();
      CHECK(what.find("round 0") != std::string::npos);
      CHECK(what.find("client " + std::to_string(poisoned)) != std::string::npos);
    }
  }
}
