// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cfgnn/gnn.hpp"
#include "cfgnn/rate.hpp"
#include "cfgnn/training.hpp"

namespace cfgnn {

/// P_kn v_kn = 1 / (M N): every UE gets the same share of each AP budget.
Tensor equal_allocation(const ChannelStats& stats);

/// P_kn v_kn = (1/M) sigma_kn / sum_n' sigma_kn'.
Tensor proportional_allocation(const ChannelStats& stats);

/// Per-AP rescaling of q >= 0 onto sum_n q_kn^2 v_kn <= 1/M. Feasible rows are returned unchanged.
Tensor project_amplitudes(const Tensor& amplitude, const ChannelStats& stats);

struct PgdOptions {
  std::size_t iterations = 200;
  double initial_step = 1.0;
  std::size_t max_halvings = 60;
};

struct PgdResult {
  Tensor power;
  double start_objective = 0.0;
  double objective = 0.0;
  std::vector<double> trace; // objective of each accepted iterate, start included
  std::size_t iterations = 0;
  bool all_feasible = true;  // every iterate passed validate_allocation
};

/// Gradient ascent on the sum rate in q = sqrt(P) with projection and
/// backtracking (step halves from `initial_step` until the objective rises).
/// Starts from `start` (proportional allocation if empty).
PgdResult projected_gradient_allocation(const ChannelStats& stats, const PgdOptions& options = {},
                                        const Tensor& start = {});

/// Widths of the bipartite AP/UE comparison network.
struct CentralizedArchitecture {
  std::size_t pilot_length = 6;
  std::size_t width = 32;
  std::size_t layers = 3;

  friend bool operator==(const CentralizedArchitecture&, const CentralizedArchitecture&) = default;
};

/// Message passing over the full AP/UE bipartite graph at the CPU. AP and
/// UE nodes exchange messages along every (k, n) edge carrying the
/// normalized log10 sigma_kn; a per-edge head emits the score behind P_kn.
class CentralizedGnnModel {
 public:
  CentralizedGnnModel() = default;
  explicit CentralizedGnnModel(CentralizedArchitecture arch);

  const CentralizedArchitecture& architecture() const { return arch_; }
  const FeatureNorm& feature_norm() const { return norm_; }
  void set_feature_norm(FeatureNorm norm) { norm_ = norm; }

  std::vector<Tensor>& parameters() { return params_; }
  const std::vector<Tensor>& parameters() const { return params_; }
  std::vector<std::string> parameter_names() const;
  std::size_t parameter_count() const;
  std::size_t max_layer_width() const;
  std::vector<double> flat_parameters() const;
  void set_flat_parameters(std::span<const double> flat);

  friend bool operator==(const CentralizedGnnModel&, const CentralizedGnnModel&) = default;

 private:
  CentralizedArchitecture arch_;
  FeatureNorm norm_;
  std::vector<Tensor> params_;
};

CentralizedGnnModel init_centralized_model(const CentralizedArchitecture& arch, std::uint64_t seed);

/// K x N allocation from the full sigma matrix.
Tensor centralized_predict(const CentralizedGnnModel& model, const Topology& topology, const ChannelStats& stats,
                           const SystemConfig& config);
numerics::Var centralized_predict(const CentralizedGnnModel& model, std::span<const numerics::Var> params,
                                  const Instance& instance, numerics::Tape& tape);

struct CentralizedTrainResult {
  CentralizedGnnModel model;
  TrainLog log;
  ExchangeLedger ledger;
};

/// End-to-end training on full-CSI graphs. Each instance exchange moves
/// K N scalars up (sigma) and K N down (P).
CentralizedTrainResult centralized_train(CentralizedGnnModel model, std::span<const Instance> dataset,
                                         const TrainConfig& config);

double centralized_round_loss(const CentralizedGnnModel& model, std::span<const Instance> batch);
double mean_sum_rate(const CentralizedGnnModel& model, std::span<const Instance> instances);

std::string serialize_centralized_checkpoint(const CentralizedGnnModel& model);
CentralizedGnnModel parse_centralized_checkpoint(std::string_view text);
void save_centralized_checkpoint(const CentralizedGnnModel& model, const std::filesystem::path& path);
CentralizedGnnModel load_centralized_checkpoint(const std::filesystem::path& path);

}  // namespace cfgnn
