// SPDX-License-Identifier: Apache-2.0
#include "cfgnn/channel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace cfgnn {

double PathLossModel::gain(double distance) const {
  const double d = std::max(distance, near_breakpoint);
  if (d >= far_breakpoint) return gain_at_far_breakpoint * std::pow(d / far_breakpoint, -far_exponent);
  return gain_at_far_breakpoint * std::pow(d / far_breakpoint, -mid_exponent);
}

void SystemConfig::validate() const {
  if (aps < 1 || ues < 1 || antennas < 1 || pilot_length < 1) {
    throw std::invalid_argument("SystemConfig: K, N, M and tau_p must all be >= 1");
  }
  if (!(pilot_snr > 0.0) || !(downlink_snr > 0.0)) {
    throw std::invalid_argument("SystemConfig: rho_p and rho_d must be positive");
  }
  if (!(area_side > 0.0)) throw std::invalid_argument("SystemConfig: area_side must be positive");
  if (!(pathloss.near_breakpoint > 0.0) || pathloss.far_breakpoint < pathloss.near_breakpoint) {
    throw std::invalid_argument("SystemConfig: path-loss breakpoints must satisfy 0 < d0 <= d1");
  }
}

double wraparound_distance(double ax, double ay, double bx, double by, double side) {
  double dx = std::fabs(ax - bx);
  double dy = std::fabs(ay - by);
  dx = std::min(dx, side - dx);
  dy = std::min(dy, side - dy);
  return std::hypot(dx, dy);
}

Tensor pilot_gram(std::span<const std::size_t> pilot_index) {
  const std::size_t n = pilot_index.size();
  Tensor gram = Tensor::matrix(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) gram(i, j) = pilot_index[i] == pilot_index[j] ? 1.0 : 0.0;
  return gram;
}

std::vector<std::size_t> random_pilot_indices(std::size_t ues, std::size_t pilot_length, Rng& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, pilot_length - 1);
  std::vector<std::size_t> idx(ues);
  for (auto& i : idx) i = pick(rng);
  return idx;
}

PilotBook assign_pilots(std::size_t ues, std::size_t pilot_length, Rng& rng) {
  if (pilot_length < 1) throw std::invalid_argument("assign_pilots: tau_p must be >= 1");
  PilotBook book;
  book.pilots = Tensor::matrix(pilot_length, pilot_length);
  for (std::size_t i = 0; i < pilot_length; ++i) book.pilots(i, i) = 1.0;

  book.pilot_index.resize(ues);
  if (ues <= pilot_length) {
    std::vector<std::size_t> perm(pilot_length);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    std::copy_n(perm.begin(), ues, book.pilot_index.begin());
  } else {
    book.pilot_index = random_pilot_indices(ues, pilot_length, rng);
  }
  book.gram = pilot_gram(book.pilot_index);
  return book;
}

Tensor large_scale_fading(const Tensor& ap_positions, const Tensor& ue_positions, const SystemConfig& config) {
  const std::size_t k_count = ap_positions.rows();
  const std::size_t n_count = ue_positions.rows();
  Tensor sigma = Tensor::matrix(k_count, n_count);
  for (std::size_t k = 0; k < k_count; ++k)
    for (std::size_t n = 0; n < n_count; ++n) {
      const double d = wraparound_distance(ap_positions(k, 0), ap_positions(k, 1), ue_positions(n, 0),
                                           ue_positions(n, 1), config.area_side);
      sigma(k, n) = config.pathloss.gain(d);
    }
  return sigma;
}

Topology sample_topology(const SystemConfig& config, Rng& rng) {
  config.validate();
  std::uniform_real_distribution<double> coord(0.0, config.area_side);
  Topology topo;
  topo.ap_positions = Tensor::matrix(config.aps, 2);
  topo.ue_positions = Tensor::matrix(config.ues, 2);
  for (double& x : topo.ap_positions.values()) x = coord(rng);
  for (double& x : topo.ue_positions.values()) x = coord(rng);
  topo.sigma = large_scale_fading(topo.ap_positions, topo.ue_positions, config);
  topo.pilots = assign_pilots(config.ues, config.pilot_length, rng);
  return topo;
}

ChannelStats compute_v(const Topology& topology, const SystemConfig& config) {
  const std::size_t k_count = topology.aps();
  const std::size_t n_count = topology.ues();
  const Tensor& sigma = topology.sigma;
  const Tensor& gram = topology.pilots.gram;
  const double tr = static_cast<double>(config.pilot_length) * config.pilot_snr;

  ChannelStats stats;
  stats.v = Tensor::matrix(k_count, n_count);
  stats.sigma = sigma;
  stats.gram = gram;
  stats.downlink_snr = config.downlink_snr;
  stats.antennas = config.antennas;
  for (std::size_t k = 0; k < k_count; ++k)
    for (std::size_t n = 0; n < n_count; ++n) {
      double contamination = 0.0;
      for (std::size_t j = 0; j < n_count; ++j) contamination += sigma(k, j) * gram(n, j);
      stats.v(k, n) = tr * sigma(k, n) * sigma(k, n) / (tr * contamination + 1.0);
    }
  return stats;
}

Instance make_instance(const SystemConfig& config) {
  Rng rng(config.seed);
  return make_instance(config, sample_topology(config, rng));
}

Instance make_instance(const SystemConfig& config, Topology topology) {
  Instance inst;
  inst.config = config;
  inst.config.aps = topology.aps();
  inst.config.ues = topology.ues();
  inst.topology = std::move(topology);
  inst.stats = compute_v(inst.topology, inst.config);
  return inst;
}

ChannelRealization::ChannelRealization(std::size_t aps, std::size_t ues, std::size_t antennas)
    : aps_(aps), ues_(ues), antennas_(antennas), h_(aps * ues * antennas) {}

PilotNoise::PilotNoise(std::size_t aps, std::size_t antennas, std::size_t pilot_length)
    : antennas_(antennas), pilot_length_(pilot_length), xi_(aps * antennas * pilot_length) {}

std::complex<double> complex_gaussian(double variance, Rng& rng) {
  std::normal_distribution<double> normal(0.0, std::sqrt(variance / 2.0));
  const double re = normal(rng);
  const double im = normal(rng);
  return {re, im};
}

ChannelRealization sample_channels(const Topology& topology, const SystemConfig& config, Rng& rng) {
  ChannelRealization h(topology.aps(), topology.ues(), config.antennas);
  for (std::size_t k = 0; k < topology.aps(); ++k)
    for (std::size_t n = 0; n < topology.ues(); ++n)
      for (std::size_t m = 0; m < config.antennas; ++m) h.at(k, n, m) = complex_gaussian(topology.sigma(k, n), rng);
  return h;
}

PilotNoise sample_pilot_noise(const SystemConfig& config, Rng& rng) {
  PilotNoise xi(config.aps, config.antennas, config.pilot_length);
  for (std::size_t k = 0; k < config.aps; ++k)
    for (std::size_t m = 0; m < config.antennas; ++m)
      for (std::size_t t = 0; t < config.pilot_length; ++t) xi.at(k, m, t) = complex_gaussian(1.0, rng);
  return xi;
}

ChannelRealization mmse_estimate(const ChannelRealization& channels, const Topology& topology,
                                 const SystemConfig& config, const PilotNoise& noise) {
  const std::size_t k_count = channels.aps();
  const std::size_t n_count = channels.ues();
  const std::size_t m_count = channels.antennas();
  const std::size_t tau = config.pilot_length;
  const Tensor& book = topology.pilots.pilots;
  const auto& index = topology.pilots.pilot_index;
  const Tensor& gram = topology.pilots.gram;
  const Tensor& sigma = topology.sigma;
  const double tr = static_cast<double>(tau) * config.pilot_snr;
  const double amp = std::sqrt(tr);

  ChannelRealization est(k_count, n_count, m_count);
  std::vector<std::complex<double>> y(m_count * tau);
  for (std::size_t k = 0; k < k_count; ++k) {
    // Y_{p,k} = sqrt(tau_p rho_p) sum_n h_kn theta_n^H + Xi_k   (M x tau_p)
    for (std::size_t m = 0; m < m_count; ++m)
      for (std::size_t t = 0; t < tau; ++t) {
        std::complex<double> acc = noise.at(k, m, t);
        for (std::size_t n = 0; n < n_count; ++n) acc += amp * channels.at(k, n, m) * book(t, index[n]);
        y[m * tau + t] = acc;
      }
    for (std::size_t n = 0; n < n_count; ++n) {
      double contamination = 0.0;
      for (std::size_t j = 0; j < n_count; ++j) contamination += sigma(k, j) * gram(n, j);
      const double coeff = amp * sigma(k, n) / (tr * contamination + 1.0);
      for (std::size_t m = 0; m < m_count; ++m) {
        // y_tilde = Y theta_n (real orthonormal book, so theta^H = theta^T)
        std::complex<double> proj = 0.0;
        for (std::size_t t = 0; t < tau; ++t) proj += y[m * tau + t] * book(t, index[n]);
        est.at(k, n, m) = coeff * proj;
      }
    }
  }
  return est;
}

}  // namespace cfgnn
