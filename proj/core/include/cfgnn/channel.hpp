// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "cfgnn/tensor.hpp"

namespace cfgnn {

using numerics::Tensor;
using Rng = std::mt19937_64;

/// Three-slope path-loss model, distances in meters, gains linear.
///
/// Below `near_breakpoint` the distance is clamped, so the model is flat there.
/// Between the breakpoints the exponent is `mid_exponent`; beyond
/// `far_breakpoint` it is `far_exponent`. The gain equals `gain_at_far_breakpoint`
/// at `far_breakpoint`, and the curve is continuous.
struct PathLossModel {
  double near_breakpoint = 10.0;
  double far_breakpoint = 50.0;
  double near_exponent = 2.0;
  double mid_exponent = 3.0;
  double far_exponent = 3.5;
  double gain_at_far_breakpoint = 1.0;

  double gain(double distance) const;
};

struct SystemConfig {
  std::size_t aps = 8;          // K
  std::size_t ues = 4;          // N
  std::size_t antennas = 2;     // M, per AP
  std::size_t pilot_length = 6; // tau_p, symbols
  double pilot_snr = 100.0;     // rho_p, linear
  double downlink_snr = 100.0;  // rho_d, linear
  double area_side = 1000.0;    // meters
  PathLossModel pathloss;
  std::uint64_t seed = 1;

  /// Throws std::invalid_argument on a violated invariant.
  void validate() const;
};

/// Orthonormal pilot book (columns are the sequences) plus the per-UE
/// assignment and the resulting |theta_n'^H theta_n|^2 matrix.
struct PilotBook {
  Tensor pilots;                        // tau_p x tau_p, column j = sequence j
  std::vector<std::size_t> pilot_index; // per UE, in [0, tau_p)
  Tensor gram;                          // N x N
};

struct Topology {
  Tensor ap_positions; // K x 2
  Tensor ue_positions; // N x 2
  Tensor sigma;        // K x N large-scale fading, linear
  PilotBook pilots;

  std::size_t aps() const { return sigma.rows(); }
  std::size_t ues() const { return sigma.cols(); }
};

/// Sufficient statistics for the closed-form rate.
struct ChannelStats {
  Tensor v;     // K x N, per-antenna mean-square channel estimate
  Tensor sigma; // K x N
  Tensor gram;  // N x N
  double downlink_snr = 0.0;
  std::size_t antennas = 0;

  std::size_t aps() const { return v.rows(); }
  std::size_t ues() const { return v.cols(); }
};

/// A problem instance: configuration, topology, and the statistics derived from them.
struct Instance {
  SystemConfig config;
  Topology topology;
  ChannelStats stats;
};

/// Minimum-image distance on the square torus of side `side`.
double wraparound_distance(double ax, double ay, double bx, double by, double side);

/// Permutation of distinct pilots when ues <= pilot_length, otherwise
/// independent uniform draws with reuse.
PilotBook assign_pilots(std::size_t ues, std::size_t pilot_length, Rng& rng);
/// Independent uniform pilot indices, reuse allowed regardless of ues.
std::vector<std::size_t> random_pilot_indices(std::size_t ues, std::size_t pilot_length, Rng& rng);
/// Gram matrix for an explicit assignment against the identity pilot book.
Tensor pilot_gram(std::span<const std::size_t> pilot_index);

Topology sample_topology(const SystemConfig& config, Rng& rng);
/// Recomputes sigma from positions (used after deserialization and in tests).
Tensor large_scale_fading(const Tensor& ap_positions, const Tensor& ue_positions, const SystemConfig& config);

ChannelStats compute_v(const Topology& topology, const SystemConfig& config);

/// Seeds a generator from config.seed and builds topology and statistics.
Instance make_instance(const SystemConfig& config);
Instance make_instance(const SystemConfig& config, Topology topology);

/// One small-scale fading draw: h_kn in C^M for every AP/UE pair.
class ChannelRealization {
 public:
  ChannelRealization(std::size_t aps, std::size_t ues, std::size_t antennas);

  std::complex<double>& at(std::size_t k, std::size_t n, std::size_t m) { return h_[(k * ues_ + n) * antennas_ + m]; }
  const std::complex<double>& at(std::size_t k, std::size_t n, std::size_t m) const {
    return h_[(k * ues_ + n) * antennas_ + m];
  }
  std::size_t aps() const { return aps_; }
  std::size_t ues() const { return ues_; }
  std::size_t antennas() const { return antennas_; }

 private:
  std::size_t aps_, ues_, antennas_;
  std::vector<std::complex<double>> h_;
};

/// Additive pilot-phase noise Xi_{p,k} (M x tau_p per AP), i.i.d. CN(0, 1).
class PilotNoise {
 public:
  PilotNoise(std::size_t aps, std::size_t antennas, std::size_t pilot_length);

  std::complex<double>& at(std::size_t k, std::size_t m, std::size_t t) { return xi_[(k * antennas_ + m) * pilot_length_ + t]; }
  const std::complex<double>& at(std::size_t k, std::size_t m, std::size_t t) const {
    return xi_[(k * antennas_ + m) * pilot_length_ + t];
  }

 private:
  std::size_t antennas_, pilot_length_;
  std::vector<std::complex<double>> xi_;
};

/// Draws a circularly-symmetric complex Gaussian with E|z|^2 = variance.
std::complex<double> complex_gaussian(double variance, Rng& rng);

ChannelRealization sample_channels(const Topology& topology, const SystemConfig& config, Rng& rng);
PilotNoise sample_pilot_noise(const SystemConfig& config, Rng& rng);

/// MMSE estimates from the received pilot signal Y_{p,k} = sqrt(tau_p rho_p) sum_n h_kn theta_n^H + Xi_k.
ChannelRealization mmse_estimate(const ChannelRealization& channels, const Topology& topology,
                                 const SystemConfig& config, const PilotNoise& noise);

// Instance files: JSON {config, ap_positions, ue_positions, sigma, pilot_index}.
// Doubles are written in shortest round-trip form, so a load reproduces the
// exact bits.
std::string serialize_instance(const Instance& instance);
Instance parse_instance(std::string_view text);
void save_instance(const Instance& instance, const std::filesystem::path& path);
Instance load_instance(const std::filesystem::path& path);

std::string serialize_config(const SystemConfig& config);
SystemConfig parse_config(std::string_view text);

}  // namespace cfgnn
