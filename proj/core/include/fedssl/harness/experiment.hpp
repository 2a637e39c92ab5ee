#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "fedssl/data/augment.hpp"
#include "fedssl/data/dataset.hpp"
#include "fedssl/federation/training.hpp"
#include "fedssl/harness/config.hpp"

namespace fedssl::harness {

/// Column order of metrics.csv.
inline constexpr const char* kMetricsHeader =
    "round,test_acc,mean_mismatch,accepted_frac,pseudo_acc,mean_lambda,sup_loss,unsup_ce,unsup_kl";

/// Clients, held-out sets, and the augmenter for one configuration.
struct PreparedData {
  std::vector<data::ClientDataset> clients;
  federation::EvalSet validation;
  federation::EvalSet test;
  data::AugmentConfig augment;
  std::size_t classes = 0;
  std::size_t input_width = 0;
};

/// Loads or generates the pool, splits it 80/5/15 (configurable), and partitions the training
/// share across clients. Every random choice derives from cfg.seed.
PreparedData prepare_data(const ExperimentConfig& cfg);

federation::TrainingOptions training_options(const ExperimentConfig& cfg);

struct RunOutcome {
  std::filesystem::path metrics_path;
  std::vector<federation::RoundMetrics> rounds;
  double final_accuracy = 0.0;
};

/// Runs one experiment and writes metrics.csv, summary.txt, and config.toml (plus
/// decisions.csv when cfg.decision_log is set) under cfg.output_dir.
RunOutcome run_experiment_detailed(const ExperimentConfig& cfg, std::ostream* log = nullptr);
std::filesystem::path run_experiment(const ExperimentConfig& cfg);

/// Writes the rows of metrics.csv (header first).
void write_metrics_csv(std::ostream& out, std::span<const federation::RoundMetrics> rounds);

/// Top-1 accuracy on a dataset.
double evaluate(const nn::ModelParams& params, const data::Dataset& test);

struct SweepRow {
  std::size_t index = 0;
  std::map<std::string, std::string> values;
  std::filesystem::path output_dir;
  double final_accuracy = 0.0;
};

/// One run per element of the cross product of the grid axes, in lexicographic axis order.
/// Writes sweep.csv and summary.txt (runs ranked by final accuracy) under grid.output_dir.
std::vector<SweepRow> sweep(const GridSpec& grid, std::ostream* log = nullptr);

/// Per-client class histograms of both subsets and their mismatch scores, as CSV.
void partition_report(const ExperimentConfig& cfg, std::ostream& out);

struct GradcheckResult {
  std::string loss;
  std::uint64_t seed = 0;
  double max_relative_error = 0.0;
};

/// Finite-difference checks of the CE, CE+KL, and CE+proximal losses over `pairs` seeded
/// random model/batch pairs each.
std::vector<GradcheckResult> gradcheck(std::size_t pairs, std::uint64_t seed = 7);

}  // namespace fedssl::harness
