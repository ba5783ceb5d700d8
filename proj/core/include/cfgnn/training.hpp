// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cfgnn/gnn.hpp"
#include "cfgnn/rate.hpp"

namespace cfgnn {

enum class DesignationPolicy { kFixed, kRoundRobin, kAll };

std::string to_string(DesignationPolicy policy);
DesignationPolicy policy_from_string(std::string_view name);

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
};

/// One bias-corrected adaptive-moment step; sizes the state on first use.
void optimizer_step(std::span<double> params, std::span<const double> grads, AdamState& state,
                    const AdamConfig& config);

struct TrainConfig {
  std::size_t batch_size = 32;
  std::size_t max_rounds = 2000;
  AdamConfig adam;
  DesignationPolicy policy = DesignationPolicy::kRoundRobin;
  // Stop once the relative drop of the moving-average loss over one window
  // falls below `convergence_tolerance`, but never before `min_rounds`.
  std::size_t convergence_window = 20;
  double convergence_tolerance = 1e-4;
  std::size_t min_rounds = 400;
  std::size_t eval_every = 0; // 0 disables evaluation snapshots
  std::uint64_t seed = 7;

  void validate() const;
};

std::string serialize_train_config(const TrainConfig& config);
TrainConfig parse_train_config(std::string_view text);

/// 16 hex digits of the 64-bit FNV-1a hash of `text`.
std::string digest_hex(std::string_view text);

/// Active AP set of an instance with `aps` APs for one round. APs are 0-based here.
std::vector<std::size_t> designate_aps(DesignationPolicy policy, std::size_t round, std::size_t aps);

enum class Phase { kTraining, kOperating };

struct ExchangeLedger {
  Phase phase = Phase::kTraining;
  std::uint64_t uplink = 0;         // scalars AP -> CPU, per the reference accounting
  std::uint64_t uplink_literal = 0; // DS + PC + UI scalars actually carried
  std::uint64_t downlink = 0;       // scalars CPU -> AP
  std::uint64_t rounds = 0;

  std::string to_json() const;
};

/// Simulated AP <-> CPU link. The CPU-side model is the source of truth;
/// each AP keeps its own replica, refreshed by broadcast().
class MessageBus {
 public:
  explicit MessageBus(Phase phase = Phase::kTraining) { ledger_.phase = phase; }

  /// One AP uplinks its SharedInfo for one instance.
  void uplink(const SharedInfo& info);
  /// Installs the starting model on `aps` APs without counting traffic.
  void deploy(const GnnModel& model, std::size_t aps);
  /// CPU sends the model to every deployed AP.
  void broadcast(const GnnModel& model);
  void end_round() { ++ledger_.rounds; }

  const GnnModel& replica(std::size_t ap) const { return replicas_.at(ap); }
  std::size_t replicas() const { return replicas_.size(); }
  const ExchangeLedger& ledger() const { return ledger_; }

 private:
  ExchangeLedger ledger_;
  std::vector<GnnModel> replicas_;
};

/// Ledger of the distributed operating phase: inference only, nothing exchanged.
ExchangeLedger operating_ledger(std::span<const Instance> workload);

struct RoundRecord {
  std::size_t round = 0;
  double loss = 0.0;
  double wallclock_ms = 0.0;
};

struct EvalSnapshot {
  std::size_t round = 0;
  double mean_sum_rate = 0.0;
};

struct TrainLog {
  std::vector<RoundRecord> rounds;
  std::vector<EvalSnapshot> snapshots;
  std::string stop_reason;
  std::string config_digest;
  double total_ms = 0.0;

  std::string to_csv() const;
  std::string summary_json() const;
};

class TrainingDiverged : public std::runtime_error {
 public:
  TrainingDiverged(std::size_t round, const std::string& what)
      : std::runtime_error("training diverged at round " + std::to_string(round) + ": " + what), round_(round) {}
  std::size_t round() const { return round_; }

 private:
  std::size_t round_;
};

/// Loss -mean_i sum_n R_n over `batch`, every AP running `model`.
double round_loss(const GnnModel& model, std::span<const Instance> batch);

struct LossAndGradient {
  double loss = 0.0;
  std::vector<double> gradient; // flat, parameter order
};

/// Round loss and its gradient when only the forward passes of `active`
/// APs are differentiated; other APs contribute constants. Active indices
/// beyond an instance's K are ignored.
LossAndGradient round_loss_gradient(const GnnModel& model, std::span<const Instance> batch,
                                    std::span<const std::size_t> active);

struct TrainResult {
  GnnModel model;
  TrainLog log;
  ExchangeLedger ledger;
  /// APs whose replica differs bitwise from the CPU model after the last broadcast.
  std::size_t replica_mismatches = 0;
};

/// Distributed training over simulated rounds. The feature normalization
/// is fitted on `dataset` before the first round. `validation`, if given,
/// feeds the evaluation snapshots.
TrainResult train(GnnModel model, std::span<const Instance> dataset, const TrainConfig& config,
                  std::span<const Instance> validation = {});

/// Mean sum rate of the distributed allocation over `instances`.
double mean_sum_rate(const GnnModel& model, std::span<const Instance> instances);

}  // namespace cfgnn
