#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "doctest.h"
#include "fedssl/data/partition.hpp"
#include "fedssl/errors.hpp"
#include "fedssl/harness/config.hpp"
#include "fedssl/harness/experiment.hpp"
#include "fedssl/nn/network.hpp"
#include "fixtures.hpp"

using namespace fedssl;
using namespace fedssl::harness;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "fedssl_unit" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string config_error(const std::string& text) {
  try {
    parse_config_string(text);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

const char* kTiny = R"(
output_dir = "out"
seed = 3
[dataset]
classes = 4
dim = 6
per_class = 40
spread = 0.6
[partition]
clients = 4
[training]
rounds = 4
participation = 0.5
hidden = [8]
[method]
name = "fedlabel"
tau = 3
tau_prime = 3
)";

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("a minimal config is fully populated with defaults") {
    const auto cfg = parse_config_string("output_dir = \"runs/x\"\n");
    const auto def = default_config();
    CHECK(cfg.output_dir == fs::path("runs/x"));
    CHECK(cfg.dataset.classes == 10);
    CHECK(cfg.dataset.dim == 32);
    CHECK(cfg.dataset.per_class == 600);
    CHECK(cfg.dataset.train_fraction == doctest::Approx(0.8));
    CHECK(cfg.dataset.validation_fraction == doctest::Approx(0.05));
    CHECK(cfg.dataset.test_fraction == doctest::Approx(0.15));
    CHECK(cfg.partition.clients == 20);
    CHECK(cfg.partition.dirichlet_alpha == doctest::Approx(0.1));
    CHECK(cfg.partition.label_ratio == doctest::Approx(0.2));
    CHECK(cfg.training.rounds == def.training.rounds);
    CHECK(cfg.training.participation == doctest::Approx(0.3));
    CHECK(cfg.method.tau == 20);
    CHECK(cfg.method.tau_prime == 20);
    CHECK(cfg.method.batch_size == 16);
    CHECK(cfg.method.lr == doctest::Approx(def.method.lr));
    CHECK(cfg.method.ssl.beta == doctest::Approx(0.4));
    CHECK(cfg.method.ssl.lambda0 == doctest::Approx(1.0));
    CHECK(cfg.method.method == federation::Method::FedLabel);
  }

  TEST_CASE("parsing errors name the offending key") {
    CHECK(config_error("output_dir = \"o\"\n[ssl]\nbeta = 1.5\n").find("\"ssl.beta\"") != std::string::npos);
    CHECK(config_error("output_dir = \"o\"\n[ssl]\nbeta = \"high\"\n").find("\"ssl.beta\"") != std::string::npos);
    CHECK(config_error("output_dir = \"o\"\n[ssl]\ngamma = 1\n").find("\"ssl.gamma\"") != std::string::npos);
    CHECK(config_error("output_dir = \"o\"\nextra = 1\n").find("\"extra\"") != std::string::npos);
    CHECK(config_error("seed = 1\n").find("\"output_dir\"") != std::string::npos);
    CHECK(config_error("output_dir = \"o\"\n[method]\nname = \"nope\"\n").find("\"method.name\"") != std::string::npos);
    CHECK(config_error("output_dir = \"o\"\n[dataset]\ntest_fraction = 0.5\n").find("fraction") != std::string::npos);
    CHECK(config_error("output_dir = \"o\"\n[method]\nname = \"fedavg\"\nprox_mu = 0.1\n").find("prox_mu") !=
          std::string::npos);
    CHECK(config_error("output_dir = \"o\"\n[dataset]\nkind = \"idx\"\nimages = \"/no/such\"\nlabels = \"/no/such\"\n")
              .find("dataset.images") != std::string::npos);
    CHECK(!config_error("output_dir = [").empty());
  }

  TEST_CASE("parsing is pure and the canonical rendering round-trips") {
    const auto a = parse_config_string(kTiny);
    const auto b = parse_config_string(kTiny);
    CHECK(to_toml(a) == to_toml(b));
    const auto again = parse_config_string(to_toml(a));
    CHECK(to_toml(again) == to_toml(a));
    CHECK(again.training.hidden == std::vector<std::size_t>{8});
  }

  TEST_CASE("fedprox methods get a default proximal coefficient") {
    const auto cfg = parse_config_string("output_dir = \"o\"\n[method]\nname = \"fedprox_uda\"\n");
    CHECK(cfg.method.prox_mu > 0.0);
  }

  TEST_CASE("relative paths resolve against the config directory") {
    const auto cfg = parse_config_string("output_dir = \"out\"\n", "/base/dir");
    CHECK(cfg.output_dir == fs::path("/base/dir/out"));
  }

  TEST_CASE("seed override from the environment") {
    auto cfg = parse_config_string(kTiny);
    ::setenv("FEDSSL_SEED", "1234", 1);
    apply_env_overrides(cfg);
    CHECK(cfg.seed == 1234);
    ::setenv("FEDSSL_SEED", "12x", 1);
    CHECK_THROWS_AS(apply_env_overrides(cfg), ConfigError);
    ::unsetenv("FEDSSL_SEED");
  }

  TEST_CASE("zero rounds writes a header-only metrics file") {
    const auto dir = scratch("zero");
    auto cfg = parse_config_string(kTiny, dir);
    cfg.training.rounds = 0;
    const auto path = run_experiment(cfg);
    CHECK(slurp(path) == std::string(kMetricsHeader) + "\n");
    CHECK(fs::exists(dir / "out" / "config.toml"));
    CHECK(fs::exists(dir / "out" / "summary.txt"));
  }

  TEST_CASE("reruns are byte-identical") {
    const auto dir = scratch("rerun");
    auto cfg = parse_config_string(kTiny, dir);
    cfg.decision_log = true;
    const auto first = slurp(run_experiment(cfg));
    const auto first_log = slurp(dir / "out" / "decisions.csv");
    const auto second = slurp(run_experiment(cfg));
    CHECK(first == second);
    CHECK(first_log == slurp(dir / "out" / "decisions.csv"));
    CHECK(std::count(first.begin(), first.end(), '\n') == 5);
    cfg.training.workers = 2;
    CHECK(slurp(run_experiment(cfg)) == first);
  }

  TEST_CASE("metrics rows have the documented columns") {
    const auto dir = scratch("columns");
    const auto cfg = parse_config_string(kTiny, dir);
    std::istringstream in(slurp(run_experiment(cfg)));
    std::string line;
    std::getline(in, line);
    CHECK(line == kMetricsHeader);
    while (std::getline(in, line)) CHECK(std::count(line.begin(), line.end(), ',') == 8);
  }

  TEST_CASE("a singleton sweep reproduces a plain run") {
    const auto dir = scratch("sweep");
    {
      std::ofstream base(dir / "base.toml");
      base << kTiny;
    }
    const auto grid = parse_grid_string("base = \"base.toml\"\noutput_dir = \"grid\"\n[grid]\n\"ssl.beta\" = [0.4]\n", dir);
    const auto rows = sweep(grid);
    REQUIRE(rows.size() == 1);
    auto cfg = parse_config_string(kTiny, dir);
    const auto plain = slurp(run_experiment(cfg));
    CHECK(slurp(rows[0].output_dir / "metrics.csv") == plain);
    CHECK(fs::exists(dir / "grid" / "sweep.csv"));
    CHECK(fs::exists(dir / "grid" / "summary.txt"));
  }

  TEST_CASE("sweeps enumerate the cross product and rank runs") {
    const auto dir = scratch("cross");
    {
      std::ofstream base(dir / "base.toml");
      base << kTiny;
    }
    const auto grid = parse_grid_string(
        "base = \"base.toml\"\noutput_dir = \"grid\"\n[grid]\n\"ssl.beta\" = [0.3, 0.9]\n\"ssl.confidence\" = "
        "[\"variance\", \"neg_entropy\"]\n",
        dir);
    const auto rows = sweep(grid);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].values.at("ssl.beta") == "0.3");
    CHECK(rows[0].values.at("ssl.confidence") == "\"variance\"");
    CHECK(rows[3].values.at("ssl.beta") == "0.9");
    const auto table = slurp(dir / "grid" / "sweep.csv");
    CHECK(std::count(table.begin(), table.end(), '\n') == 5);
    const auto summary = slurp(dir / "grid" / "summary.txt");
    CHECK(summary.rfind("1. run_", 0) == 0);
  }

  TEST_CASE("bad sweep axes fail before any run") {
    const auto dir = scratch("badgrid");
    {
      std::ofstream base(dir / "base.toml");
      base << kTiny;
    }
    const auto grid = parse_grid_string("base = \"base.toml\"\noutput_dir = \"grid\"\n[grid]\n\"ssl.beta\" = [0.3, 7.0]\n", dir);
    CHECK_THROWS_AS(sweep(grid), ConfigError);
    CHECK(!fs::exists(dir / "grid" / "run_000" / "metrics.csv"));
  }

  TEST_CASE("evaluation") {
    data::Dataset toy;
    toy.classes = 2;
    toy.dim = 2;
    toy.samples = {{{1.0, 0.0}, 0}, {{0.0, 1.0}, 1}, {{2.0, 0.5}, 0}};
    const auto oracle = nn::ModelParams::unflatten({nn::LayerShape{2, 2}}, {5.0, 0.0, 0.0, 5.0, 0.0, 0.0});
    CHECK(evaluate(oracle, toy) == doctest::Approx(1.0));

    const auto balanced = data::generate_synthetic(5, 3, 40, 1.0, 1);
    const std::size_t widths[] = {3, 5};
    const nn::ModelParams uniform(nn::make_architecture(widths));
    CHECK(evaluate(uniform, balanced) == doctest::Approx(0.2));
  }

  TEST_CASE("evaluation agrees with a per-sample count on a trained model") {
    const auto pool = data::generate_synthetic(4, 6, 150, 0.8, 13);
    const auto split = data::holdout_split(pool, 0.8, 0.0, 13);
    const auto x = data::feature_matrix(split.train);
    const auto y = data::labels_of(split.train);
    const std::size_t widths[] = {6, 16, 4};
    Rng rng(2);
    auto m = nn::ModelParams::random(nn::make_architecture(widths), rng);
    nn::Batch all;
    all.inputs = x;
    all.labels = y;
    for (int epoch = 0; epoch < 300; ++epoch) nn::sgd_step_inplace(m, nn::backward(m, all).grad, 0.5);

    std::size_t correct = 0;
    for (const auto& s : split.test.samples) {
      const auto p = nn::forward(m, s.features);
      std::size_t best = 0;
      for (std::size_t c = 1; c < p.size(); ++c) {
        if (p[c] > p[best]) best = c;
      }
      correct += static_cast<int>(best) == s.label ? 1 : 0;
    }
    const double oracle = static_cast<double>(correct) / static_cast<double>(split.test.size());
    CHECK(oracle > 0.5);
    CHECK(std::abs(evaluate(m, split.test) - oracle) <= 0.005);
  }

  TEST_CASE("partition report lists every client") {
    const auto cfg = parse_config_string(kTiny, scratch("report"));
    std::ostringstream out;
    partition_report(cfg, out);
    const auto text = out.str();
    CHECK(text.rfind("client,labeled,unlabeled,mismatch,labeled_c0", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 5);
  }

  TEST_CASE("prepared data follows the holdout fractions") {
    const auto cfg = parse_config_string(kTiny, scratch("prepared"));
    const auto p = prepare_data(cfg);
    std::size_t train = 0;
    for (const auto& c : p.clients) train += c.size();
    CHECK(train == 128);
    CHECK(p.validation.labels.size() == 8);
    CHECK(p.test.labels.size() == 24);
  }

  TEST_CASE("gradcheck passes for all loss compositions") {
    const auto results = gradcheck(20);
    CHECK(results.size() == 60);
    for (const auto& r : results) CHECK(r.max_relative_error <= 1e-4);
  }
}
