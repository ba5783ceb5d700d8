// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cfgnn/baselines.hpp"
#include "cfgnn/channel.hpp"
#include "cfgnn/training.hpp"

namespace cfgnn::cli {

struct Grid {
  std::vector<std::size_t> aps;
  std::vector<std::size_t> ues;
  std::vector<std::size_t> antennas;

  std::size_t cells() const { return aps.size() * ues.size() * antennas.size(); }
};

/// Everything a command needs. Precedence: built-in defaults, then the
/// JSON file given by --config, then command-line flags. Unless set
/// explicitly, the pilot length is the largest training N, capped at 10.
struct ExperimentConfig {
  SystemConfig system = [] {
    SystemConfig s;
    s.pilot_length = 10;
    return s;
  }();
  TrainConfig train;
  CentralizedArchitecture centralized;
  Grid train_grid{{20, 30, 40}, {6, 10, 20}, {4}};
  Grid test_grid{{20, 30, 40, 50}, {5, 6, 10, 15, 20}, {4}};
  Grid bench_grid{{8, 16, 32}, {5}, {2}};
  std::size_t train_instances = 100; // per train-grid cell
  std::size_t test_instances = 20;   // per test-grid cell
  std::size_t verify_instances = 10;
  std::size_t verify_samples = 100000;
  double verify_tolerance = 0.01;
  std::size_t bench_repetitions = 200;
  std::size_t pgd_iterations = 200;
  std::filesystem::path out = "out";
  std::uint64_t seed = 1;

  void validate() const;
  std::string to_json() const;
  /// Digest of to_json(), written into every output file.
  std::string digest() const;
};

ExperimentConfig load_experiment_config(const std::filesystem::path& path);
ExperimentConfig parse_experiment_config(const std::string& text);

/// Seed of instance `index` in grid cell (K, N, M) of split `split`.
std::uint64_t instance_seed(std::uint64_t seed, unsigned split, std::size_t k, std::size_t n, std::size_t m,
                            std::size_t index);

std::string instance_name(std::size_t k, std::size_t n, std::size_t m, std::size_t index);

struct NamedInstance {
  std::string id;
  Instance instance;
};

/// Loads every *.json instance in `dir`, sorted by file name.
std::vector<NamedInstance> load_instance_dir(const std::filesystem::path& dir);

}  // namespace cfgnn::cli
