#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "fedssl/errors.hpp"
#include "fedssl/harness/config.hpp"
#include "fedssl/harness/experiment.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitNumeric = 2;

fedssl::harness::ExperimentConfig load(const std::string& path) {
  auto cfg = fedssl::harness::parse_config(path);
  fedssl::harness::apply_env_overrides(cfg);
  return cfg;
}

int cmd_run(const std::string& path, bool quiet) {
  const auto cfg = load(path);
  const auto outcome = fedssl::harness::run_experiment_detailed(cfg, quiet ? nullptr : &std::cout);
  std::cout << outcome.metrics_path.string() << '\n';
  return kExitOk;
}

int cmd_sweep(const std::string& path, bool quiet) {
  const auto grid = fedssl::harness::parse_grid(path);
  const auto rows = fedssl::harness::sweep(grid, quiet ? nullptr : &std::cout);
  std::cout << (grid.output_dir / "sweep.csv").string() << " (" << rows.size() << " runs)\n";
  return kExitOk;
}

int cmd_gradcheck(std::size_t pairs, double tolerance) {
  const auto results = fedssl::harness::gradcheck(pairs);
  double worst = 0.0;
  for (const auto& r : results) {
    worst = std::max(worst, r.max_relative_error);
    std::printf("%-12s seed=%016llx max_rel_err=%.3e\n", r.loss.c_str(), static_cast<unsigned long long>(r.seed),
                r.max_relative_error);
  }
  std::printf("worst=%.3e tolerance=%.1e %s\n", worst, tolerance, worst <= tolerance ? "ok" : "FAILED");
  return worst <= tolerance ? kExitOk : kExitNumeric;
}

int cmd_partition_report(const std::string& path, bool to_stdout) {
  const auto cfg = load(path);
  if (to_stdout) {
    fedssl::harness::partition_report(cfg, std::cout);
    return kExitOk;
  }
  std::filesystem::create_directories(cfg.output_dir);
  const auto out_path = cfg.output_dir / "partition_report.csv";
  std::ofstream out(out_path);
  if (!out) throw fedssl::ConfigError("cannot write " + out_path.string());
  fedssl::harness::partition_report(cfg, out);
  std::cout << out_path.string() << '\n';
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated semi-supervised learning simulator"};
  app.require_subcommand(1);

  std::string path;
  bool quiet = false;
  auto* run = app.add_subcommand("run", "Run one experiment from a TOML config");
  run->add_option("config", path, "Config file")->required()->check(CLI::ExistingFile);
  run->add_flag("-q,--quiet", quiet, "Only print the metrics path");

  auto* sw = app.add_subcommand("sweep", "Run the cross product of a grid file");
  sw->add_option("grid", path, "Grid file")->required()->check(CLI::ExistingFile);
  sw->add_flag("-q,--quiet", quiet, "Only print the sweep table path");

  std::size_t pairs = 20;
  double tolerance = 1e-4;
  auto* gc = app.add_subcommand("gradcheck", "Compare backprop gradients with finite differences");
  gc->add_option("--pairs", pairs, "Random model/batch pairs per loss")->check(CLI::PositiveNumber);
  gc->add_option("--tolerance", tolerance, "Maximum relative error");

  bool to_stdout = false;
  auto* pr = app.add_subcommand("partition-report", "Per-client class histograms and mismatch scores");
  pr->add_option("config", path, "Config file")->required()->check(CLI::ExistingFile);
  pr->add_flag("--stdout", to_stdout, "Print the CSV instead of writing it to the output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (*run) return cmd_run(path, quiet);
    if (*sw) return cmd_sweep(path, quiet);
    if (*gc) return cmd_gradcheck(pairs, tolerance);
    if (*pr) return cmd_partition_report(path, to_stdout);
  } catch (const fedssl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const fedssl::LoadError& e) {
    std::cerr << "load error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const fedssl::NumericError& e) {
    std::cerr << "numeric abort: " << e.what() << '\n';
    return kExitNumeric;
  }
  return kExitOk;
}
