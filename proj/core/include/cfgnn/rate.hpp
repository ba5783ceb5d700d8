// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "cfgnn/autodiff.hpp"
#include "cfgnn/channel.hpp"

namespace cfgnn {

/// Slack allowed on the per-AP budget sum_n P_kn v_kn <= 1/M.
inline constexpr double kBudgetTolerance = 1e-9;

class InvalidAllocation : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// K x N power-control coefficients P_kn.
struct PowerAllocation {
  Tensor power;
};

/// Throws InvalidAllocation naming the first offending AP (and UE, for a
/// negative or non-finite entry).
void validate_allocation(const Tensor& power, const ChannelStats& stats);

/// Per-AP processed information uplinked during distributed training.
///   ds[n]       = sqrt(rho_d P_kn) v_kn
///   pc(n', n)   = |sqrt(rho_d P_kn') v_kn' sigma_kn / sigma_kn' theta_n'^H theta_n|
///   ui(n, n')   = rho_d P_kn' v_kn' sigma_kn
struct SharedInfo {
  std::vector<double> ds;
  Tensor pc;
  Tensor ui;

  std::size_t ues() const { return ds.size(); }
};

struct RateReport {
  std::vector<double> per_ue; // bits/s/Hz
  double sum = 0.0;
};

/// Closed-form downlink ergodic rate under conjugate beamforming.
RateReport ergodic_rate(const Tensor& power, const ChannelStats& stats);

/// Random feasible allocation: each AP spends a uniform fraction of its
/// budget, split across UEs with uniform weights.
Tensor random_allocation(const ChannelStats& stats, Rng& rng);

SharedInfo shared_info(std::size_t ap, std::span<const double> power_row, const ChannelStats& stats);

/// Rates from the element-wise sums of every AP's SharedInfo. The result is
/// algebraically identical to ergodic_rate.
RateReport rate_from_shared(std::span<const SharedInfo> shared, std::size_t antennas);

/// Per-UE signal-model expectations behind the closed form. For UE n with
/// a_nn' = sqrt(rho_d) sum_k sqrt(P_kn') h_kn^T conj(hhat_kn'):
///   desired_mean       E{a_nn}
///   gain_variance      Var{a_nn}
///   contamination      sum_{n' != n} |E{a_nn'}|^2 |theta_n'^H theta_n|^2
///   interference       sum_{n' != n} Var{a_nn'}
///   noise              E{|xi_n|^2}
struct SinrTerms {
  std::vector<double> desired_mean;
  std::vector<double> gain_variance;
  std::vector<double> contamination;
  std::vector<double> interference;
  std::vector<double> noise;

  /// SINR assembled from the terms.
  std::vector<double> sinr() const;
};

SinrTerms closed_form_terms(const Tensor& power, const ChannelStats& stats);

struct MonteCarloTerms {
  SinrTerms mean;
  SinrTerms standard_error;
  std::size_t samples = 0;
};

/// Sampling oracle: draws channels, pilot noise and MMSE estimates and
/// forms the sample expectations of the terms above.
MonteCarloTerms monte_carlo_sinr_terms(const Tensor& power, const Topology& topology, const SystemConfig& config,
                                       std::size_t samples, Rng& rng);

// Differentiable forms used by the training loops.

/// Sum rate with the amplitudes q_kn = sqrt(P_kn) (K x N) on the tape.
numerics::Var sum_rate(const numerics::Var& amplitude, const ChannelStats& stats);

/// SharedInfo of one AP with its power row (1 x N) on the tape.
struct SharedInfoVar {
  numerics::Var ds; // 1 x N
  numerics::Var pc; // N x N
  numerics::Var ui; // N x N
};

SharedInfoVar shared_info(std::size_t ap, const numerics::Var& power_row, const ChannelStats& stats);

/// Sum rate from the per-AP contributions: `fixed` holds the summed SharedInfo
/// of every AP whose contribution is a constant; `live` are the differentiable ones.
numerics::Var sum_rate_from_shared(numerics::Tape& tape, const SharedInfo& fixed, std::span<const SharedInfoVar> live,
                                   std::size_t antennas);

/// Element-wise sum of SharedInfo blocks (all with the same N).
SharedInfo sum_shared(std::span<const SharedInfo> shared);

// Report rows: {instance_id, method, per_ue_rates[], sum_rate}.
std::string rate_report_json(const std::string& instance_id, const std::string& method, const RateReport& report);
std::string rate_report_csv_header();
std::string rate_report_csv_row(const std::string& instance_id, const std::string& method, const RateReport& report);

}  // namespace cfgnn
