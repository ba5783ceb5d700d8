// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>

#include "cfgnn/baselines.hpp"

using namespace cfgnn;

namespace {

Instance random_instance(std::size_t k, std::size_t n, std::size_t m, std::uint64_t seed, std::size_t tau = 6) {
  SystemConfig c;
  c.aps = k;
  c.ues = n;
  c.antennas = m;
  c.pilot_length = tau;
  c.seed = seed;
  return make_instance(c);
}

ChannelStats one_ap(std::vector<double> v, std::vector<double> sigma, std::size_t m) {
  ChannelStats s;
  s.v = Tensor({1, v.size()}, v);
  s.sigma = Tensor({1, sigma.size()}, sigma);
  s.gram = Tensor::matrix(v.size(), v.size());
  for (std::size_t n = 0; n < v.size(); ++n) s.gram(n, n) = 1.0;
  s.downlink_snr = 100.0;
  s.antennas = m;
  return s;
}

double budget_used(const Tensor& p, const ChannelStats& s, std::size_t k) {
  double used = 0.0;
  for (std::size_t n = 0; n < s.ues(); ++n) used += p(k, n) * s.v(k, n);
  return used;
}

}  // namespace

TEST(Equal, Example) {
  const Tensor p = equal_allocation(one_ap({0.5, 0.25}, {1.0, 1.0}, 1));
  EXPECT_NEAR(p(0, 0), 1.0, 1e-15);
  EXPECT_NEAR(p(0, 1), 2.0, 1e-15);
}

TEST(Proportional, Example) {
  const Tensor p = proportional_allocation(one_ap({0.5, 0.5}, {3.0, 1.0}, 1));
  EXPECT_NEAR(p(0, 0), 1.5, 1e-15);
  EXPECT_NEAR(p(0, 1), 0.5, 1e-15);
}

TEST(Heuristics, BudgetIsTight) {
  for (int i = 0; i < 10; ++i) {
    const Instance inst = random_instance(1 + i % 5, 1 + i % 6, 1 + i % 4, 10 + i);
    for (const Tensor& p : {equal_allocation(inst.stats), proportional_allocation(inst.stats)}) {
      EXPECT_NO_THROW(validate_allocation(p, inst.stats));
      for (std::size_t k = 0; k < inst.stats.aps(); ++k)
        EXPECT_NEAR(budget_used(p, inst.stats, k), 1.0 / inst.stats.antennas, 1e-12);
    }
  }
}

TEST(Projection, IdempotentAndFeasible) {
  const Instance inst = random_instance(3, 4, 2, 1);
  Tensor q = Tensor::matrix(3, 4);
  for (std::size_t i = 0; i < q.size(); ++i) q[i] = (i % 3 == 0 ? -1.0 : 1.0) * (1.0 + double(i));
  const Tensor a = project_amplitudes(q, inst.stats);
  Tensor p = a;
  for (double& x : p.values()) x *= x;
  EXPECT_NO_THROW(validate_allocation(p, inst.stats));
  for (std::size_t i = 0; i < q.size(); ++i)
    if (q[i] < 0) EXPECT_EQ(a[i], 0.0);
  EXPECT_EQ(project_amplitudes(a, inst.stats), a);
}

TEST(Projection, FeasibleRowsUnchanged) {
  const Instance inst = random_instance(2, 3, 1, 2);
  Tensor q = Tensor::matrix(2, 3);
  q(0, 1) = 0.1 / std::sqrt(inst.stats.v(0, 1));
  EXPECT_EQ(project_amplitudes(q, inst.stats), q);
}

TEST(Pgd, SingleLinkUsesFullBudget) {
  const ChannelStats s = one_ap({0.4}, {0.5}, 2);
  const PgdResult r = projected_gradient_allocation(s);
  EXPECT_NEAR(r.power(0, 0) * 0.4, 0.5, 1e-9);
  EXPECT_NEAR(r.objective, ergodic_rate(r.power, s).sum, 1e-12);
}

TEST(Pgd, NeverWorseThanStartAndMonotone) {
  PgdOptions opt;
  opt.iterations = 50;
  for (int i = 0; i < 5; ++i) {
    const Instance inst = random_instance(4, 4, 2, 20 + i, 2);
    const PgdResult r = projected_gradient_allocation(inst.stats, opt);
    EXPECT_NEAR(r.start_objective, ergodic_rate(proportional_allocation(inst.stats), inst.stats).sum, 1e-12);
    EXPECT_GE(r.objective, r.start_objective);
    EXPECT_TRUE(r.all_feasible);
    for (std::size_t t = 1; t < r.trace.size(); ++t) EXPECT_GE(r.trace[t], r.trace[t - 1]);
    EXPECT_NO_THROW(validate_allocation(r.power, inst.stats));
  }
}

TEST(Pgd, ExplicitStartIsUsed) {
  const Instance inst = random_instance(3, 3, 1, 30);
  PgdOptions opt;
  opt.iterations = 0;
  const Tensor eq = equal_allocation(inst.stats);
  const PgdResult r = projected_gradient_allocation(inst.stats, opt, eq);
  EXPECT_NEAR(r.objective, ergodic_rate(eq, inst.stats).sum, 1e-12);
}

TEST(Centralized, ArchitectureWidths) {
  const CentralizedGnnModel m = init_centralized_model(CentralizedArchitecture{}, 1);
  EXPECT_LE(m.max_layer_width(), 76u);
  EXPECT_EQ(m.parameter_names().size(), m.parameters().size());
  EXPECT_EQ(m.flat_parameters().size(), m.parameter_count());
}

TEST(Centralized, FeasibleAndEquivariant) {
  CentralizedGnnModel m = init_centralized_model(CentralizedArchitecture{}, 2);
  m.set_feature_norm({-6.0, 1.5});
  const Instance inst = random_instance(4, 5, 2, 40);
  const Tensor p = centralized_predict(m, inst.topology, inst.stats, inst.config);
  EXPECT_NO_THROW(validate_allocation(p, inst.stats));

  const std::vector<std::size_t> ap_perm{2, 0, 3, 1}, ue_perm{4, 1, 0, 3, 2};
  Topology t = inst.topology;
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t n = 0; n < 5; ++n) t.sigma(k, n) = inst.topology.sigma(ap_perm[k], ue_perm[n]);
  for (std::size_t n = 0; n < 5; ++n) t.pilots.pilot_index[n] = inst.topology.pilots.pilot_index[ue_perm[n]];
  t.pilots.gram = pilot_gram(t.pilots.pilot_index);
  const Instance moved = make_instance(inst.config, t);
  const Tensor q = centralized_predict(m, moved.topology, moved.stats, moved.config);
  for (std::size_t k = 0; k < 4; ++k)
    for (std::size_t n = 0; n < 5; ++n) EXPECT_NEAR(q(k, n), p(ap_perm[k], ue_perm[n]), 1e-12);
}

TEST(Centralized, TapedMatchesPlain) {
  CentralizedGnnModel m = init_centralized_model(CentralizedArchitecture{}, 3);
  const Instance inst = random_instance(3, 4, 1, 50);
  numerics::Tape tape;
  std::vector<numerics::Var> params;
  for (const auto& w : m.parameters()) params.push_back(tape.parameter(w));
  const numerics::Var v = centralized_predict(m, params, inst, tape);
  const Tensor p = centralized_predict(m, inst.topology, inst.stats, inst.config);
  for (std::size_t i = 0; i < p.size(); ++i) EXPECT_NEAR(v.value()[i], p[i], 1e-13);
}

TEST(Centralized, TrainingLedgerAndImprovement) {
  std::vector<Instance> data;
  for (int i = 0; i < 12; ++i) data.push_back(random_instance(3, 2, 1, 60 + i));
  TrainConfig c;
  c.batch_size = 4;
  c.max_rounds = 100;
  c.min_rounds = 100;
  c.adam.learning_rate = 3e-3;
  const CentralizedGnnModel start = init_centralized_model(CentralizedArchitecture{}, 4);
  const CentralizedTrainResult r = centralized_train(start, data, c);
  EXPECT_EQ(r.ledger.rounds, 100u);
  EXPECT_EQ(r.ledger.uplink, 100u * 4u * 3u * 2u);
  EXPECT_EQ(r.ledger.downlink, 100u * 4u * 3u * 2u);
  CentralizedGnnModel normed = start;
  normed.set_feature_norm(r.model.feature_norm());
  EXPECT_LT(centralized_round_loss(r.model, data), centralized_round_loss(normed, data));

  const CentralizedTrainResult again = centralized_train(start, data, c);
  EXPECT_EQ(again.model, r.model);
}

TEST(Centralized, CheckpointRoundTrip) {
  CentralizedGnnModel m = init_centralized_model(CentralizedArchitecture{}, 5);
  m.set_feature_norm({-5.0, 2.0});
  const std::string text = serialize_centralized_checkpoint(m);
  const CentralizedGnnModel back = parse_centralized_checkpoint(text);
  EXPECT_EQ(back, m);
  EXPECT_EQ(serialize_centralized_checkpoint(back), text);
  EXPECT_THROW(parse_centralized_checkpoint("{\"format\":\"other\"}"), CheckpointError);
}
