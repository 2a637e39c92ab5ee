#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "fedssl/data/augment.hpp"
#include "fedssl/data/partition.hpp"
#include "fedssl/federation/protocol.hpp"
#include "fedssl/federation/training.hpp"

namespace fedssl::harness {

enum class DatasetKind { Synthetic, Idx };

struct DatasetSpec {
  DatasetKind kind = DatasetKind::Synthetic;
  std::size_t classes = 10;
  std::size_t dim = 32;
  std::size_t per_class = 600;
  double spread = 1.0;
  std::filesystem::path images;
  std::filesystem::path labels;
  double train_fraction = 0.8;
  double validation_fraction = 0.05;
  double test_fraction = 0.15;
};

/// Everything one run needs. Defaults (the desk-scale recipe) live in this struct's member
/// initializers and in DatasetSpec / PartitionSpec / MethodConfig / AugmentConfig /
/// TrainingOptions; parse_config fills in only what the document overrides.
struct ExperimentConfig {
  std::string name = "run";
  std::uint64_t seed = 1;
  std::filesystem::path output_dir;
  DatasetSpec dataset;
  data::PartitionSpec partition;
  federation::MethodConfig method;
  data::AugmentConfig augment;
  federation::TrainingOptions training;
  /// Write a per-sample pseudo-label audit CSV (FedLabel only).
  bool decision_log = false;
};

/// The desk-scale defaults, for documentation and the `fedssl defaults` listing.
ExperimentConfig default_config();

/// Parses a TOML document. Unknown keys, type mismatches, missing required keys
/// (`output_dir`), and out-of-range values raise ConfigError naming the dotted key.
/// Relative paths resolve against `base_dir`.
ExperimentConfig parse_config_string(std::string_view toml_text, const std::filesystem::path& base_dir = {});
ExperimentConfig parse_config(const std::filesystem::path& path);

/// Applies FEDSSL_SEED from the environment, if set.
void apply_env_overrides(ExperimentConfig& cfg);

/// Canonical TOML rendering of a config (every key, defaults included).
std::string to_toml(const ExperimentConfig& cfg);

/// Full validation of cross-field constraints (fractions sum to 1, paths exist, ...).
void validate(const ExperimentConfig& cfg);

/// Sweep definition: a base config plus dotted-key -> list-of-values axes.
struct GridSpec {
  std::filesystem::path base;
  std::filesystem::path output_dir;
  /// Ordered by key; values kept as TOML source snippets.
  std::map<std::string, std::vector<std::string>> axes;
};

GridSpec parse_grid(const std::filesystem::path& path);
GridSpec parse_grid_string(std::string_view toml_text, const std::filesystem::path& base_dir = {});

/// Parses `base_toml` after replacing each dotted key in `overrides` with the given TOML value.
ExperimentConfig parse_config_with_overrides(std::string_view base_toml, const std::map<std::string, std::string>& overrides,
                                             const std::filesystem::path& base_dir = {});

}  // namespace fedssl::harness
