// SPDX-License-Identifier: Apache-2.0
// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cfgnn/baselines.hpp"
#include "cfgnn/channel.hpp"
#include "cfgnn/gnn.hpp"
#include "cfgnn/rate.hpp"
#include "cfgnn/training.hpp"

using namespace cfgnn;
namespace nx = cfgnn::numerics;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

Instance random_instance(std::size_t k, std::size_t n, std::size_t m, std::uint64_t seed, std::size_t tau) {
  SystemConfig c;
  c.aps = k;
  c.ues = n;
  c.antennas = m;
  c.pilot_length = tau;
  c.seed = seed;
  return make_instance(c);
}

double rel_err(double exact, double est) {
  return exact == 0.0 ? std::abs(est) : std::abs(est - exact) / std::abs(exact);
}

template <typename F>
double median_ms(F&& f, std::size_t samples, std::size_t calls) {
  std::vector<double> t;
  for (std::size_t s = 0; s < samples; ++s) {
    const auto start = std::chrono::steady_clock::now();
    for (std::size_t c = 0; c < calls; ++c) f();
    t.push_back(std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count() /
                static_cast<double>(calls));
  }
  std::nth_element(t.begin(), t.begin() + static_cast<std::ptrdiff_t>(t.size() / 2), t.end());
  return t[t.size() / 2];
}

// 1. Closed-form expectation terms against the sampling oracle. Pilot lengths
// below N are drawn so the contamination term is exercised. The detail also
// reports the largest deviation in units of the sampling standard error.
Verdict closed_form_vs_monte_carlo() {
  Rng rng(101);
  std::uniform_int_distribution<std::size_t> kd(1, 3), nd(1, 3), md(1, 2), td(1, 3);
  double worst = 0.0, worst_z = 0.0;
  std::string worst_term;
  for (int i = 0; i < 10; ++i) {
    const Instance inst = random_instance(kd(rng), nd(rng), md(rng), rng(), td(rng));
    const Tensor p = random_allocation(inst.stats, rng);
    const SinrTerms cf = closed_form_terms(p, inst.stats);
    const MonteCarloTerms mc = monte_carlo_sinr_terms(p, inst.topology, inst.config, 100000, rng);
    using Field = std::vector<double> SinrTerms::*;
    const std::vector<std::pair<const char*, Field>> terms{{"desired_mean", &SinrTerms::desired_mean},
                                                           {"gain_variance", &SinrTerms::gain_variance},
                                                           {"contamination", &SinrTerms::contamination},
                                                           {"interference", &SinrTerms::interference},
                                                           {"noise", &SinrTerms::noise}};
    for (const auto& [name, field] : terms)
      for (std::size_t n = 0; n < (cf.*field).size(); ++n) {
        const double exact = (cf.*field)[n], est = (mc.mean.*field)[n], se = (mc.standard_error.*field)[n];
        const double e = rel_err(exact, est);
        if (se > 0.0) worst_z = std::max(worst_z, std::abs(est - exact) / se);
        if (e > worst) {
          worst = e;
          worst_term = name;
        }
      }
  }
  return {worst < 0.01, "worst relative error " + fmt("%.4g", worst) + " (" + worst_term +
                            "), limit 0.01; largest deviation " + fmt("%.2f", worst_z) + " standard errors"};
}

// 2. Rate from summed SharedInfo against the direct closed form.
Verdict shared_info_equivalence() {
  Rng rng(202);
  std::uniform_int_distribution<std::size_t> kd(1, 8), nd(1, 8), md(1, 4), td(1, 6);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Instance inst = random_instance(kd(rng), nd(rng), md(rng), rng(), td(rng));
    const Tensor p = random_allocation(inst.stats, rng);
    std::vector<SharedInfo> shared;
    for (std::size_t k = 0; k < inst.stats.aps(); ++k) shared.push_back(shared_info(k, p.row(k), inst.stats));
    const RateReport a = ergodic_rate(p, inst.stats), b = rate_from_shared(shared, inst.stats.antennas);
    for (std::size_t n = 0; n < a.per_ue.size(); ++n) worst = std::max(worst, std::abs(a.per_ue[n] - b.per_ue[n]));
  }
  return {worst < 1e-10, "max per-UE difference " + fmt("%.3g", worst) + " over 10000 allocations, limit 1e-10"};
}

// 3. Budget constraint, UE-permutation equivariance and locality of the per-AP model.
Verdict constraint_equivariance_locality() {
  Rng rng(303);
  std::uniform_int_distribution<std::size_t> kd(2, 6), nd(1, 8), md(1, 4);
  double worst_budget = 0.0, worst_equiv = 0.0;
  std::size_t locality_breaks = 0;
  for (int i = 0; i < 10000; ++i) {
    GnnModel model = init_model(GnnArchitecture{}, rng());
    std::normal_distribution<double> nd_mean(-6.0, 1.0);
    model.set_feature_norm({nd_mean(rng), 0.5 + std::uniform_real_distribution<double>(0.0, 2.0)(rng)});
    const Instance inst = random_instance(kd(rng), nd(rng), md(rng), rng(), 6);
    const std::size_t k_count = inst.stats.aps(), n_count = inst.stats.ues();
    const Tensor p = distributed_allocation(model, inst);
    for (std::size_t k = 0; k < k_count; ++k) {
      double used = 0.0;
      for (std::size_t n = 0; n < n_count; ++n) used += p(k, n) * inst.stats.v(k, n);
      worst_budget = std::max(worst_budget, used - 1.0 / static_cast<double>(inst.stats.antennas));
    }

    const std::size_t ap = i % k_count;
    LocalCsi csi = local_csi(ap, inst.topology, inst.stats, inst.config);
    std::vector<std::size_t> perm(n_count);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    LocalCsi moved = csi;
    for (std::size_t n = 0; n < n_count; ++n) {
      moved.sigma[n] = csi.sigma[perm[n]];
      moved.v[n] = csi.v[perm[n]];
      moved.pilot_index[n] = csi.pilot_index[perm[n]];
    }
    const auto base = predict_power(model, csi), permuted = predict_power(model, moved);
    for (std::size_t n = 0; n < n_count; ++n)
      worst_equiv = std::max(worst_equiv, rel_err(base[perm[n]], permuted[n]));

    Topology t = inst.topology;
    std::uniform_real_distribution<double> factor(0.1, 10.0);
    for (std::size_t k = 0; k < k_count; ++k)
      if (k != ap)
        for (std::size_t n = 0; n < n_count; ++n) t.sigma(k, n) *= factor(rng);
    const Tensor other = distributed_allocation(model, make_instance(inst.config, t));
    for (std::size_t n = 0; n < n_count; ++n)
      if (other(ap, n) != p(ap, n)) ++locality_breaks;
  }
  const bool pass = worst_budget <= 1e-9 && worst_equiv <= 1e-12 && locality_breaks == 0;
  return {pass, "budget excess " + fmt("%.3g", std::max(worst_budget, 0.0)) + " (limit 1e-9), equivariance " +
                    fmt("%.3g", worst_equiv) + " (limit 1e-12), locality breaks " +
                    std::to_string(locality_breaks) + " over 10000 pairs"};
}

// 4. Full round-loss gradient against central differences.
Verdict gradient_check() {
  std::vector<Instance> batch{random_instance(2, 2, 1, 404, 6)};
  GnnModel model = init_model(GnnArchitecture{}, 404);
  model.set_feature_norm(fit_feature_norm(batch));
  const std::vector<std::size_t> all{0, 1};
  const LossAndGradient lg = round_loss_gradient(model, batch, all);
  const std::vector<double> base = model.flat_parameters();
  std::vector<double> fd(base.size());
  const double h = 1e-6;
  GnnModel probe = model;
  std::vector<double> w = base;
  for (std::size_t i = 0; i < base.size(); ++i) {
    w[i] = base[i] + h;
    probe.set_flat_parameters(w);
    const double up = round_loss(probe, batch);
    w[i] = base[i] - h;
    probe.set_flat_parameters(w);
    const double down = round_loss(probe, batch);
    w[i] = base[i];
    fd[i] = (up - down) / (2 * h);
  }
  double diff = 0.0, norm = 0.0;
  for (std::size_t i = 0; i < fd.size(); ++i) {
    diff += (lg.gradient[i] - fd[i]) * (lg.gradient[i] - fd[i]);
    norm += fd[i] * fd[i];
  }
  const double err = std::sqrt(diff) / std::max(std::sqrt(norm), 1e-300);
  return {err < 1e-3 && norm > 0.0, "relative gradient error " + fmt("%.3g", err) + " over " +
                                        std::to_string(fd.size()) + " parameters, limit 1e-3"};
}

// 5. Exchange ledger against the closed-form counts.
Verdict exchange_ledger() {
  std::size_t cells = 0, mismatches = 0;
  const GnnModel model = init_model(GnnArchitecture{}, 505);
  const std::uint64_t psi = model.parameter_count();
  TrainConfig cfg;
  cfg.batch_size = 2;
  cfg.max_rounds = 2;
  for (std::size_t k : {4, 8, 16, 20})
    for (std::size_t n : {2, 5, 6, 10}) {
      std::vector<Instance> data{random_instance(k, n, 1, 1000 * k + n, 6), random_instance(k, n, 1, 1000 * k + n + 1, 6)};
      const TrainResult r = train(model, data, cfg);
      const std::uint64_t exchanges = cfg.max_rounds * cfg.batch_size;
      if (r.ledger.uplink != exchanges * k * (n * n + n)) ++mismatches;
      if (r.ledger.downlink != cfg.max_rounds * k * psi) ++mismatches;

      const CentralizedTrainResult c = centralized_train(init_centralized_model(CentralizedArchitecture{}, 1), data, cfg);
      if (c.ledger.uplink != exchanges * k * n || c.ledger.downlink != exchanges * k * n) ++mismatches;

      const ExchangeLedger op = operating_ledger(data);
      if (op.uplink != 0 || op.downlink != 0) ++mismatches;
      ++cells;
    }
  return {mismatches == 0, std::to_string(mismatches) + " mismatches over " + std::to_string(cells) + " (K, N) cells"};
}

// Shared desk-scale experiment behind criteria 6 to 8.
struct DeskRun {
  GnnModel distributed;
  CentralizedGnnModel centralized;
  std::vector<Instance> seen_test;
  std::vector<Instance> unseen_test;
  double train_seconds = 0.0;
  std::string stop_reason;
};

DeskRun& desk_run() {
  static DeskRun run = [] {
    DeskRun r;
    std::vector<Instance> train_set;
    std::uint64_t seed = 600000;
    for (std::size_t k : {8, 12})
      for (std::size_t n : {4, 6})
        for (std::size_t m : {2, 4}) {
          for (int i = 0; i < 250; ++i) train_set.push_back(random_instance(k, n, m, seed++, 6));
          for (int i = 0; i < 25; ++i) r.seen_test.push_back(random_instance(k, n, m, seed++, 6));
        }
    for (std::size_t m : {2, 4})
      for (int i = 0; i < 50; ++i) r.unseen_test.push_back(random_instance(10, 5, m, seed++, 6));

    TrainConfig cfg;
    const auto start = std::chrono::steady_clock::now();
    TrainResult t = train(init_model(GnnArchitecture{}, 61), train_set, cfg);
    r.distributed = std::move(t.model);
    r.stop_reason = t.log.stop_reason;
    r.centralized = centralized_train(init_centralized_model(CentralizedArchitecture{}, 62), train_set, cfg).model;
    r.train_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return r;
  }();
  return run;
}

double mean_rate_of(const std::vector<Instance>& set, const std::function<Tensor(const Instance&)>& alloc) {
  double s = 0.0;
  for (const Instance& inst : set) s += ergodic_rate(alloc(inst), inst.stats).sum;
  return s / static_cast<double>(set.size());
}

// 6. Distributed model against the heuristics on seen and unseen settings.
Verdict desk_scale_trend() {
  const DeskRun& r = desk_run();
  auto ratios = [&](const std::vector<Instance>& set) {
    const double g = mean_rate_of(set, [&](const Instance& i) { return distributed_allocation(r.distributed, i); });
    const double p = mean_rate_of(set, [](const Instance& i) { return proportional_allocation(i.stats); });
    const double e = mean_rate_of(set, [](const Instance& i) { return equal_allocation(i.stats); });
    return std::array<double, 5>{g, p, e, g / p, g / e};
  };
  const auto seen = ratios(r.seen_test), unseen = ratios(r.unseen_test);
  const bool pass = seen[3] >= 1.05 && seen[4] >= 1.25 && unseen[3] >= 1.02 && unseen[4] >= 1.2;
  std::ostringstream os;
  os.precision(4);
  os << "seen: gnn " << seen[0] << ", proportional " << seen[1] << ", equal " << seen[2] << " -> " << seen[3]
     << "x / " << seen[4] << "x (need 1.05 / 1.25); unseen K=10 N=5: " << unseen[3] << "x / " << unseen[4]
     << "x (need 1.02 / 1.2); training " << r.train_seconds << " s, stop " << r.stop_reason;
  return {pass, os.str()};
}

// 7. Distributed against centralized on the same test data.
Verdict distributed_vs_centralized() {
  const DeskRun& r = desk_run();
  std::vector<Instance> all = r.seen_test;
  all.insert(all.end(), r.unseen_test.begin(), r.unseen_test.end());
  const double d = mean_rate_of(all, [&](const Instance& i) { return distributed_allocation(r.distributed, i); });
  const double c = mean_rate_of(all, [&](const Instance& i) {
    return centralized_predict(r.centralized, i.topology, i.stats, i.config);
  });
  return {d >= 0.93 * c, "distributed " + fmt("%.4f", d) + ", centralized " + fmt("%.4f", c) + ", ratio " +
                             fmt("%.4f", d / c) + " (need 0.93)"};
}

// First `k` APs of an instance.
Instance ap_subset(const Instance& inst, std::size_t k) {
  Topology t = inst.topology;
  t.ap_positions = Tensor::matrix(k, 2);
  t.sigma = Tensor::matrix(k, inst.topology.ues());
  for (std::size_t a = 0; a < k; ++a) {
    std::copy(inst.topology.ap_positions.row(a).begin(), inst.topology.ap_positions.row(a).end(),
              t.ap_positions.row(a).begin());
    std::copy(inst.topology.sigma.row(a).begin(), inst.topology.sigma.row(a).end(), t.sigma.row(a).begin());
  }
  return make_instance(inst.config, t);
}

// 8. Sum rate grows with the number of APs.
Verdict monotone_in_aps() {
  const DeskRun& r = desk_run();
  std::array<double, 3> mean{};
  const std::array<std::size_t, 3> ks{8, 10, 12};
  for (int i = 0; i < 50; ++i) {
    const Instance full = random_instance(12, 5, 2, 800000 + i, 6);
    for (std::size_t j = 0; j < 3; ++j) {
      const Instance inst = ap_subset(full, ks[j]);
      mean[j] += ergodic_rate(distributed_allocation(r.distributed, inst), inst.stats).sum / 50.0;
    }
  }
  return {mean[0] < mean[1] && mean[1] < mean[2], "mean sum rate K=8 " + fmt("%.4f", mean[0]) + ", K=10 " +
                                                       fmt("%.4f", mean[1]) + ", K=12 " + fmt("%.4f", mean[2])};
}

// 9. Inference and allocator timing trends.
Verdict runtime_trends() {
  GnnModel model = init_model(GnnArchitecture{}, 909);
  model.set_feature_norm({-6.0, 1.5});
  CentralizedGnnModel central = init_centralized_model(CentralizedArchitecture{}, 909);
  central.set_feature_norm({-6.0, 1.5});
  std::vector<double> per_ap, cent;
  bool order = true;
  std::ostringstream os;
  os.precision(3);
  double sink = 0.0;
  for (std::size_t k : {8, 16, 32}) {
    const Instance inst = random_instance(k, 5, 2, 9000 + k, 6);
    const LocalCsi csi = local_csi(k / 2, inst.topology, inst.stats, inst.config);
    per_ap.push_back(median_ms([&] { sink += predict_power(model, csi)[0]; }, 31, 50));
    cent.push_back(median_ms([&] { sink += centralized_predict(central, inst.topology, inst.stats, inst.config)[0]; },
                             31, 10));
    const double te = median_ms([&] { sink += equal_allocation(inst.stats)[0]; }, 31, 2000);
    const double tp = median_ms([&] { sink += proportional_allocation(inst.stats)[0]; }, 31, 2000);
    const double tg = median_ms([&] { sink += distributed_allocation(model, inst)[0]; }, 15, 5);
    const double tq = median_ms([&] { sink += projected_gradient_allocation(inst.stats).objective; }, 3, 1);
    order = order && te < tp && tp < tg && tg < tq;
    os << "K=" << k << ": per-AP " << per_ap.back() << " ms, centralized " << cent.back() << " ms, equal " << te
       << " < proportional " << tp << " < gnn " << tg << " < pgd " << tq << "; ";
  }
  bool flat = true;
  for (double t : per_ap) flat = flat && std::abs(t / per_ap[0] - 1.0) <= 0.3;
  const bool rising = cent[0] < cent[1] && cent[1] < cent[2];
  os << "per-AP flat " << (flat ? "yes" : "no") << ", centralized rising " << (rising ? "yes" : "no")
     << ", order " << (order ? "yes" : "no");
  if (!std::isfinite(sink)) os << " (non-finite output)";
  return {flat && rising && order && std::isfinite(sink), os.str()};
}

// 10. Projected-gradient ascent never ends below its proportional start.
Verdict projected_gradient() {
  Rng rng(1010);
  std::uniform_int_distribution<std::size_t> kd(2, 12), nd(2, 8), md(1, 4);
  std::size_t worse = 0, infeasible = 0;
  double gain = 0.0;
  for (int i = 0; i < 100; ++i) {
    const Instance inst = random_instance(kd(rng), nd(rng), md(rng), rng(), 6);
    const PgdResult r = projected_gradient_allocation(inst.stats);
    if (r.objective < r.start_objective) ++worse;
    if (!r.all_feasible) ++infeasible;
    gain += r.objective / r.start_objective / 100.0;
  }
  return {worse == 0 && infeasible == 0, std::to_string(worse) + " below start, " + std::to_string(infeasible) +
                                             " with an infeasible iterate, mean gain " + fmt("%.4f", gain) + "x"};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance suite"};
  std::vector<int> only;
  app.add_option("--only", only, "Run only these criteria (1-10)");
  CLI11_PARSE(app, argc, argv);

  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria{
      {"closed form matches Monte-Carlo terms", closed_form_vs_monte_carlo},
      {"SharedInfo rate equals closed form", shared_info_equivalence},
      {"constraint, equivariance, locality", constraint_equivariance_locality},
      {"round-loss gradient", gradient_check},
      {"exchange ledger counts", exchange_ledger},
      {"desk-scale trend vs heuristics", desk_scale_trend},
      {"distributed vs centralized gap", distributed_vs_centralized},
      {"sum rate monotone in K", monotone_in_aps},
      {"runtime trends", runtime_trends},
      {"projected-gradient ascent", projected_gradient},
  };
  const std::set<int> selected(only.begin(), only.end());
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!selected.empty() && !selected.count(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << (v.pass ? "PASS" : "FAIL") << "  criterion " << id << ": " << criteria[i].first << " | "
              << v.detail << " [" << fmt("%.1f", secs) << " s]" << std::endl;
    if (!v.pass) ++failures;
  }
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
