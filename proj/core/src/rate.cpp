// SPDX-License-Identifier: Apache-2.0
#include "cfgnn/rate.hpp"

#include <cmath>
#include <complex>
#include <iomanip>
#include <sstream>

#include <json.hpp>

namespace cfgnn {

namespace nx = numerics;

void validate_allocation(const Tensor& power, const ChannelStats& stats) {
  const std::size_t k_count = stats.aps();
  const std::size_t n_count = stats.ues();
  if (power.rank() != 2 || power.rows() != k_count || power.cols() != n_count) {
    throw InvalidAllocation("allocation shape " + power.shape_string() + " does not match K=" +
                            std::to_string(k_count) + ", N=" + std::to_string(n_count));
  }
  const double budget = 1.0 / static_cast<double>(stats.antennas);
  for (std::size_t k = 0; k < k_count; ++k) {
    double load = 0.0;
    for (std::size_t n = 0; n < n_count; ++n) {
      const double p = power(k, n);
      if (!std::isfinite(p) || p < 0.0) {
        throw InvalidAllocation("invalid power coefficient at AP " + std::to_string(k) + ", UE " + std::to_string(n) +
                                ": " + std::to_string(p));
      }
      load += p * stats.v(k, n);
    }
    if (load > budget + kBudgetTolerance) {
      std::ostringstream os;
      os << std::setprecision(17) << "AP " << k << " exceeds its power budget: sum_n P v = " << load
         << " > 1/M = " << budget;
      throw InvalidAllocation(os.str());
    }
  }
}

RateReport ergodic_rate(const Tensor& power, const ChannelStats& stats) {
  validate_allocation(power, stats);
  const std::size_t k_count = stats.aps();
  const std::size_t n_count = stats.ues();
  const double rho = stats.downlink_snr;
  const double m = static_cast<double>(stats.antennas);
  const Tensor& v = stats.v;
  const Tensor& sigma = stats.sigma;

  RateReport report;
  report.per_ue.resize(n_count);
  for (std::size_t n = 0; n < n_count; ++n) {
    double coherent = 0.0;
    for (std::size_t k = 0; k < k_count; ++k) coherent += std::sqrt(power(k, n)) * v(k, n);
    const double numerator = rho * m * m * coherent * coherent;

    double contamination = 0.0;
    double interference = 0.0;
    for (std::size_t j = 0; j < n_count; ++j) {
      double leak = 0.0;
      for (std::size_t k = 0; k < k_count; ++k) {
        interference += power(k, j) * v(k, j) * sigma(k, n);
        if (j != n) leak += std::sqrt(power(k, j)) * v(k, j) * sigma(k, n) / sigma(k, j);
      }
      if (j != n) contamination += leak * leak * stats.gram(j, n);
    }
    const double denominator = rho * m * m * contamination + rho * m * interference + 1.0;
    report.per_ue[n] = std::log2(1.0 + numerator / denominator);
    report.sum += report.per_ue[n];
  }
  return report;
}

SharedInfo shared_info(std::size_t ap, std::span<const double> power_row, const ChannelStats& stats) {
  const std::size_t n_count = stats.ues();
  if (power_row.size() != n_count) throw std::invalid_argument("shared_info: power row length != N");
  const double rho = stats.downlink_snr;
  SharedInfo info;
  info.ds.resize(n_count);
  info.pc = Tensor::matrix(n_count, n_count);
  info.ui = Tensor::matrix(n_count, n_count);
  for (std::size_t j = 0; j < n_count; ++j) {
    const double amp = std::sqrt(rho * power_row[j]) * stats.v(ap, j);
    info.ds[j] = amp;
    for (std::size_t n = 0; n < n_count; ++n) {
      info.pc(j, n) = std::fabs(amp * stats.sigma(ap, n) / stats.sigma(ap, j) * stats.gram(j, n));
      info.ui(n, j) = rho * power_row[j] * stats.v(ap, j) * stats.sigma(ap, n);
    }
  }
  return info;
}

SharedInfo sum_shared(std::span<const SharedInfo> shared) {
  if (shared.empty()) throw std::invalid_argument("sum_shared: no SharedInfo given");
  const std::size_t n_count = shared.front().ues();
  SharedInfo total;
  total.ds.assign(n_count, 0.0);
  total.pc = Tensor::matrix(n_count, n_count);
  total.ui = Tensor::matrix(n_count, n_count);
  for (std::size_t a = 0; a < shared.size(); ++a) {
    const SharedInfo& s = shared[a];
    if (s.ues() != n_count || s.pc.size() != n_count * n_count || s.ui.size() != n_count * n_count) {
      throw std::invalid_argument("SharedInfo from AP " + std::to_string(a) + " has N=" + std::to_string(s.ues()) +
                                  ", expected " + std::to_string(n_count));
    }
    for (std::size_t j = 0; j < n_count; ++j) total.ds[j] += s.ds[j];
    for (std::size_t i = 0; i < n_count * n_count; ++i) {
      total.pc[i] += s.pc[i];
      total.ui[i] += s.ui[i];
    }
  }
  return total;
}

RateReport rate_from_shared(std::span<const SharedInfo> shared, std::size_t antennas) {
  const SharedInfo total = sum_shared(shared);
  const std::size_t n_count = total.ues();
  const double m = static_cast<double>(antennas);
  RateReport report;
  report.per_ue.resize(n_count);
  for (std::size_t n = 0; n < n_count; ++n) {
    double contamination = 0.0;
    double interference = 0.0;
    for (std::size_t j = 0; j < n_count; ++j) {
      if (j != n) contamination += total.pc(j, n) * total.pc(j, n);
      interference += total.ui(n, j);
    }
    const double numerator = m * m * total.ds[n] * total.ds[n];
    const double denominator = m * m * contamination + m * interference + 1.0;
    report.per_ue[n] = std::log2(1.0 + numerator / denominator);
    report.sum += report.per_ue[n];
  }
  return report;
}

std::vector<double> SinrTerms::sinr() const {
  std::vector<double> out(desired_mean.size());
  for (std::size_t n = 0; n < out.size(); ++n) {
    out[n] = desired_mean[n] * desired_mean[n] / (gain_variance[n] + contamination[n] + interference[n] + noise[n]);
  }
  return out;
}

SinrTerms closed_form_terms(const Tensor& power, const ChannelStats& stats) {
  validate_allocation(power, stats);
  const std::size_t k_count = stats.aps();
  const std::size_t n_count = stats.ues();
  const double rho = stats.downlink_snr;
  const double m = static_cast<double>(stats.antennas);
  const Tensor& v = stats.v;
  const Tensor& sigma = stats.sigma;

  SinrTerms terms;
  terms.desired_mean.assign(n_count, 0.0);
  terms.gain_variance.assign(n_count, 0.0);
  terms.contamination.assign(n_count, 0.0);
  terms.interference.assign(n_count, 0.0);
  terms.noise.assign(n_count, 1.0);
  for (std::size_t n = 0; n < n_count; ++n) {
    for (std::size_t k = 0; k < k_count; ++k) {
      terms.desired_mean[n] += std::sqrt(rho * power(k, n)) * m * v(k, n);
      terms.gain_variance[n] += rho * m * power(k, n) * v(k, n) * sigma(k, n);
    }
    for (std::size_t j = 0; j < n_count; ++j) {
      if (j == n) continue;
      double leak = 0.0;
      for (std::size_t k = 0; k < k_count; ++k) {
        leak += std::sqrt(power(k, j)) * v(k, j) * sigma(k, n) / sigma(k, j);
        terms.interference[n] += rho * m * power(k, j) * v(k, j) * sigma(k, n);
      }
      terms.contamination[n] += rho * m * m * leak * leak * stats.gram(j, n);
    }
  }
  return terms;
}

MonteCarloTerms monte_carlo_sinr_terms(const Tensor& power, const Topology& topology, const SystemConfig& config,
                                       std::size_t samples, Rng& rng) {
  if (samples < 1) throw std::invalid_argument("monte_carlo_sinr_terms: need at least one sample");
  const std::size_t k_count = topology.aps();
  const std::size_t n_count = topology.ues();
  const std::size_t m_count = config.antennas;
  const double rho_sqrt = std::sqrt(config.downlink_snr);
  const Tensor& gram = topology.pilots.gram;

  // Running sums per (n, n') of a, |a|^2, |a|^4, plus Re(a_nn)^2 and noise moments.
  const std::size_t nn = n_count * n_count;
  std::vector<std::complex<double>> s1(nn);
  std::vector<double> s2(nn, 0.0), s4(nn, 0.0);
  std::vector<double> re2(n_count, 0.0), noise1(n_count, 0.0), noise2(n_count, 0.0);
  std::vector<std::complex<double>> a(nn);

  for (std::size_t s = 0; s < samples; ++s) {
    const ChannelRealization h = sample_channels(topology, config, rng);
    const PilotNoise xi = sample_pilot_noise(config, rng);
    const ChannelRealization est = mmse_estimate(h, topology, config, xi);
    std::fill(a.begin(), a.end(), std::complex<double>{});
    for (std::size_t k = 0; k < k_count; ++k)
      for (std::size_t j = 0; j < n_count; ++j) {
        const double amp = rho_sqrt * std::sqrt(power(k, j));
        if (amp == 0.0) continue;
        for (std::size_t n = 0; n < n_count; ++n) {
          std::complex<double> inner = 0.0;
          for (std::size_t m = 0; m < m_count; ++m) inner += h.at(k, n, m) * std::conj(est.at(k, j, m));
          a[n * n_count + j] += amp * inner;
        }
      }
    for (std::size_t i = 0; i < nn; ++i) {
      const double p = std::norm(a[i]);
      s1[i] += a[i];
      s2[i] += p;
      s4[i] += p * p;
    }
    for (std::size_t n = 0; n < n_count; ++n) {
      const double r = a[n * n_count + n].real();
      re2[n] += r * r;
      const double w = std::norm(complex_gaussian(1.0, rng));
      noise1[n] += w;
      noise2[n] += w * w;
    }
  }

  const double cnt = static_cast<double>(samples);
  MonteCarloTerms out;
  out.samples = samples;
  auto init = [n_count](SinrTerms& t) {
    for (auto* v : {&t.desired_mean, &t.gain_variance, &t.contamination, &t.interference, &t.noise})
      v->assign(n_count, 0.0);
  };
  init(out.mean);
  init(out.standard_error);
  for (std::size_t n = 0; n < n_count; ++n) {
    double interference_se2 = 0.0;
    double contamination_se = 0.0;
    for (std::size_t j = 0; j < n_count; ++j) {
      const std::size_t i = n * n_count + j;
      const std::complex<double> mu = s1[i] / cnt;
      const double second = s2[i] / cnt;
      const double variance = second - std::norm(mu);
      const double fourth_spread = std::max(s4[i] / cnt - second * second, 0.0);
      if (j == n) {
        out.mean.desired_mean[n] = mu.real();
        out.standard_error.desired_mean[n] = std::sqrt(std::max(re2[n] / cnt - mu.real() * mu.real(), 0.0) / cnt);
        out.mean.gain_variance[n] = variance;
        out.standard_error.gain_variance[n] = std::sqrt(fourth_spread / cnt);
      } else {
        out.mean.interference[n] += variance;
        interference_se2 += fourth_spread / cnt;
        out.mean.contamination[n] += std::norm(mu) * gram(j, n);
        contamination_se += 2.0 * std::abs(mu) * std::sqrt(std::max(variance, 0.0) / cnt) * gram(j, n);
      }
    }
    out.standard_error.interference[n] = std::sqrt(interference_se2);
    out.standard_error.contamination[n] = contamination_se;
    out.mean.noise[n] = noise1[n] / cnt;
    out.standard_error.noise[n] =
        std::sqrt(std::max(noise2[n] / cnt - out.mean.noise[n] * out.mean.noise[n], 0.0) / cnt);
  }
  return out;
}

namespace {

Tensor row_of(const Tensor& m, std::size_t r) {
  return Tensor({1, m.cols()}, std::vector<double>(m.row(r).begin(), m.row(r).end()));
}

Tensor off_diagonal(const Tensor& gram) {
  Tensor mask = gram;
  for (std::size_t i = 0; i < gram.rows(); ++i) mask(i, i) = 0.0;
  return mask;
}

// Rate from summed DS (1xN), PC (NxN, [n', n]) and UI (NxN, [n, n']) blocks.
nx::Var rate_from_totals(nx::Tape& tape, const nx::Var& ds, const nx::Var& pc, const nx::Var& ui, std::size_t n_count,
                         double m) {
  Tensor mask = Tensor::matrix(n_count, n_count, 1.0);
  for (std::size_t i = 0; i < n_count; ++i) mask(i, i) = 0.0;
  const nx::Var numerator = nx::scale(nx::square(ds), m * m);
  const nx::Var contamination =
      nx::scale(nx::reduce(nx::mul(nx::square(pc), tape.constant(mask)), nx::ReduceOp::kSum, 0), m * m);
  const nx::Var interference = nx::scale(nx::reduce(ui, nx::ReduceOp::kSum, 1), m);
  const nx::Var one = tape.constant(Tensor::scalar(1.0));
  const nx::Var denominator =
      nx::add(nx::reshape(nx::add(contamination, interference), {1, n_count}), one);
  return nx::sum_all(nx::log2(nx::add(nx::div(numerator, denominator), one)));
}

}  // namespace

nx::Var sum_rate(const nx::Var& amplitude, const ChannelStats& stats) {
  nx::Tape& tape = *amplitude.tape();
  const std::size_t n_count = stats.ues();
  const double rho = stats.downlink_snr;
  const double m = static_cast<double>(stats.antennas);
  Tensor inv_sigma(stats.sigma.shape());
  for (std::size_t i = 0; i < inv_sigma.size(); ++i) inv_sigma[i] = 1.0 / stats.sigma[i];

  const nx::Var v = tape.constant(stats.v);
  const nx::Var sigma = tape.constant(stats.sigma);
  const nx::Var qv = nx::mul(amplitude, v);
  const nx::Var coherent = nx::reduce(qv, nx::ReduceOp::kSum, 0);
  const nx::Var numerator = nx::scale(nx::square(coherent), rho * m * m);
  // leak(n', n) = sum_k q_kn' v_kn' sigma_kn / sigma_kn'
  const nx::Var leak = nx::matmul(nx::transpose(nx::mul(qv, tape.constant(inv_sigma))), sigma);
  const nx::Var contamination = nx::scale(
      nx::reduce(nx::mul(nx::square(leak), tape.constant(off_diagonal(stats.gram))), nx::ReduceOp::kSum, 0),
      rho * m * m);
  const nx::Var load = nx::reduce(nx::mul(nx::square(amplitude), v), nx::ReduceOp::kSum, 1);  // K
  const nx::Var interference =
      nx::scale(nx::reshape(nx::matmul(nx::transpose(sigma), nx::transpose(load)), {n_count}), rho * m);
  const nx::Var one = tape.constant(Tensor::scalar(1.0));
  const nx::Var denominator = nx::add(nx::add(contamination, interference), one);
  return nx::sum_all(nx::log2(nx::add(nx::div(numerator, denominator), one)));
}

SharedInfoVar shared_info(std::size_t ap, const nx::Var& power_row, const ChannelStats& stats) {
  nx::Tape& tape = *power_row.tape();
  const std::size_t n_count = stats.ues();
  const double rho = stats.downlink_snr;
  const Tensor v_row = row_of(stats.v, ap);
  const Tensor sigma_row = row_of(stats.sigma, ap);
  Tensor inv_sigma_row = sigma_row;
  for (double& x : inv_sigma_row.values()) x = 1.0 / x;

  const nx::Var row = nx::reshape(power_row, {1, n_count});
  const nx::Var v = tape.constant(v_row);
  const nx::Var sigma = tape.constant(sigma_row);
  SharedInfoVar out;
  out.ds = nx::scale(nx::mul(nx::sqrt(row), v), std::sqrt(rho));
  const nx::Var leak = nx::mul(out.ds, tape.constant(inv_sigma_row));
  out.pc = nx::mul(nx::matmul(nx::transpose(leak), sigma), tape.constant(stats.gram));
  out.ui = nx::matmul(nx::transpose(sigma), nx::scale(nx::mul(row, v), rho));
  return out;
}

nx::Var sum_rate_from_shared(nx::Tape& tape, const SharedInfo& fixed, std::span<const SharedInfoVar> live,
                             std::size_t antennas) {
  const std::size_t n_count = fixed.ues();
  nx::Var ds = tape.constant(Tensor({1, n_count}, fixed.ds));
  nx::Var pc = tape.constant(fixed.pc);
  nx::Var ui = tape.constant(fixed.ui);
  for (const SharedInfoVar& s : live) {
    ds = nx::add(ds, s.ds);
    pc = nx::add(pc, s.pc);
    ui = nx::add(ui, s.ui);
  }
  return rate_from_totals(tape, ds, pc, ui, n_count, static_cast<double>(antennas));
}

Tensor random_allocation(const ChannelStats& stats, Rng& rng) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const std::size_t k_count = stats.aps(), n_count = stats.ues();
  const double m = static_cast<double>(stats.antennas);
  Tensor p = Tensor::matrix(k_count, n_count);
  std::vector<double> w(n_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    const double fraction = unit(rng);
    double total = 0.0;
    for (double& x : w) total += (x = unit(rng));
    for (std::size_t n = 0; n < n_count; ++n) p(k, n) = fraction * w[n] / (total * m * stats.v(k, n));
  }
  return p;
}

std::string rate_report_json(const std::string& instance_id, const std::string& method, const RateReport& report) {
  nlohmann::json j{{"instance_id", instance_id}, {"method", method}, {"per_ue_rates", report.per_ue},
                   {"sum_rate", report.sum}};
  return j.dump();
}

std::string rate_report_csv_header() { return "instance_id,method,per_ue_rates,sum_rate"; }

std::string rate_report_csv_row(const std::string& instance_id, const std::string& method, const RateReport& report) {
  std::ostringstream os;
  os << std::setprecision(17) << instance_id << ',' << method << ',';
  for (std::size_t n = 0; n < report.per_ue.size(); ++n) os << (n ? ";" : "") << report.per_ue[n];
  os << ',' << report.sum;
  return os.str();
}

}  // namespace cfgnn
