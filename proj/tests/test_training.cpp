// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "cfgnn/training.hpp"

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

std::vector<Instance> dataset(std::size_t count, std::size_t k, std::size_t n, std::size_t m, std::uint64_t seed,
                              std::size_t tau = 6) {
  std::vector<Instance> out;
  for (std::size_t i = 0; i < count; ++i) out.push_back(random_instance(k, n, m, seed + i, tau));
  return out;
}

// Sum rate when AP `ap` runs `live` and every other AP runs `frozen`.
double mixed_rate(const GnnModel& frozen, const GnnModel& live, std::size_t ap, const Instance& inst) {
  Tensor p = distributed_allocation(frozen, inst);
  const auto row = predict_power(live, ap, inst.topology, inst.stats, inst.config);
  std::copy(row.begin(), row.end(), p.row(ap).begin());
  return ergodic_rate(p, inst.stats).sum;
}

}  // namespace

TEST(Adam, ZeroGradientLeavesParameters) {
  std::vector<double> p{1.0, -2.0, 3.0};
  const std::vector<double> g(3, 0.0);
  AdamState s;
  for (int i = 0; i < 10; ++i) optimizer_step(p, g, s, AdamConfig{});
  EXPECT_EQ(p, (std::vector<double>{1.0, -2.0, 3.0}));
}

TEST(Adam, FirstStepMovesByLearningRate) {
  std::vector<double> p{0.0, 0.0};
  AdamState s;
  optimizer_step(p, std::vector<double>{3.0, -0.5}, s, AdamConfig{});
  EXPECT_NEAR(p[0], -1e-3, 1e-9);
  EXPECT_NEAR(p[1], 1e-3, 1e-9);
}

TEST(Adam, ConvergesOnQuadratic) {
  const std::vector<double> target{1.5, -0.25, 3.0};
  std::vector<double> p(3, 0.0);
  AdamState s;
  AdamConfig cfg;
  cfg.learning_rate = 0.05;
  for (int step = 0; step < 1000; ++step) {
    std::vector<double> g(3);
    for (std::size_t i = 0; i < 3; ++i) g[i] = 2.0 * (p[i] - target[i]);
    optimizer_step(p, g, s, cfg);
  }
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(p[i], target[i], 1e-6);
}

TEST(Adam, SizeMismatchThrows) {
  std::vector<double> p(3);
  AdamState s;
  EXPECT_THROW(optimizer_step(p, std::vector<double>(2), s, AdamConfig{}), std::invalid_argument);
}

TEST(Designation, Policies) {
  EXPECT_EQ(designate_aps(DesignationPolicy::kFixed, 17, 5), (std::vector<std::size_t>{0}));
  EXPECT_EQ(designate_aps(DesignationPolicy::kRoundRobin, 7, 5), (std::vector<std::size_t>{2}));
  EXPECT_EQ(designate_aps(DesignationPolicy::kRoundRobin, 4, 5), (std::vector<std::size_t>{4}));
  EXPECT_EQ(designate_aps(DesignationPolicy::kAll, 0, 3), (std::vector<std::size_t>{0, 1, 2}));
  EXPECT_EQ(policy_from_string("round-robin"), DesignationPolicy::kRoundRobin);
  EXPECT_EQ(to_string(DesignationPolicy::kAll), "all");
  EXPECT_THROW(policy_from_string("sometimes"), std::invalid_argument);
}

TEST(Config, RoundTripAndDigest) {
  TrainConfig c;
  c.batch_size = 8;
  c.adam.learning_rate = 3e-3;
  c.policy = DesignationPolicy::kFixed;
  const std::string text = serialize_train_config(c);
  const TrainConfig back = parse_train_config(text);
  EXPECT_EQ(serialize_train_config(back), text);
  EXPECT_EQ(digest_hex(text).size(), 16u);
  EXPECT_EQ(digest_hex(text), digest_hex(serialize_train_config(back)));
  EXPECT_NE(digest_hex(text), digest_hex(serialize_train_config(TrainConfig{})));
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Ledger, UplinkPerSharedInfo) {
  const Instance inst = random_instance(20, 5, 1, 1);
  MessageBus bus;
  for (std::size_t k = 0; k < 20; ++k) bus.uplink(shared_info(k, std::vector<double>(5, 0.0), inst.stats));
  EXPECT_EQ(bus.ledger().uplink, 600u);
  EXPECT_EQ(bus.ledger().uplink_literal, 20u * (5 + 2 * 25));
}

TEST(Ledger, DownlinkCountsEveryReplica) {
  const GnnModel m = init_model(GnnArchitecture{}, 1);
  MessageBus bus;
  bus.deploy(m, 4);
  EXPECT_EQ(bus.ledger().downlink, 0u);
  bus.broadcast(m);
  bus.end_round();
  EXPECT_EQ(bus.ledger().downlink, 4u * 5877u);
  EXPECT_EQ(bus.ledger().rounds, 1u);
  EXPECT_EQ(bus.replicas(), 4u);
}

TEST(Ledger, OperatingPhaseIsSilent) {
  const auto data = dataset(3, 4, 3, 1, 5);
  const ExchangeLedger l = operating_ledger(data);
  EXPECT_EQ(l.phase, Phase::kOperating);
  EXPECT_EQ(l.uplink, 0u);
  EXPECT_EQ(l.downlink, 0u);
  EXPECT_NE(l.to_json().find("\"operating\""), std::string::npos);
}

TEST(Ledger, TrainingMatchesFormula) {
  const auto data = dataset(6, 5, 3, 1, 9);
  TrainConfig c;
  c.batch_size = 4;
  c.max_rounds = 3;
  const TrainResult r = train(init_model(GnnArchitecture{}, 2), data, c);
  EXPECT_EQ(r.ledger.rounds, 3u);
  EXPECT_EQ(r.ledger.uplink, 3u * 4u * 5u * (9u + 3u));
  EXPECT_EQ(r.ledger.downlink, 3u * 5u * 5877u);
  EXPECT_EQ(r.replica_mismatches, 0u);
}

TEST(Loss, SharedInfoPathMatchesClosedForm) {
  GnnModel m = init_model(GnnArchitecture{}, 3);
  const auto data = dataset(4, 4, 3, 2, 20);
  m.set_feature_norm(fit_feature_norm(data));
  double direct = 0.0;
  for (const Instance& inst : data) direct += ergodic_rate(distributed_allocation(m, inst), inst.stats).sum;
  direct /= -4.0;
  EXPECT_NEAR(round_loss(m, data), direct, 1e-10);
  const std::vector<std::size_t> one{1};
  EXPECT_NEAR(round_loss_gradient(m, data, one).loss, direct, 1e-10);
}

TEST(Loss, DesignatedApGradientMatchesFiniteDifferences) {
  GnnModel m = init_model(GnnArchitecture{}, 4);
  const auto data = dataset(2, 3, 3, 1, 30);
  m.set_feature_norm(fit_feature_norm(data));
  const std::size_t ap = 2;
  const std::vector<std::size_t> active{ap};
  const LossAndGradient lg = round_loss_gradient(m, data, active);
  const std::vector<double> base = m.flat_parameters();
  const double h = 1e-6;
  std::size_t checked = 0;
  for (std::size_t i = 0; i < base.size(); i += 97) {
    auto f = [&](double delta) {
      std::vector<double> w = base;
      w[i] += delta;
      GnnModel live = m;
      live.set_flat_parameters(w);
      double s = 0.0;
      for (const Instance& inst : data) s += mixed_rate(m, live, ap, inst);
      return -s / static_cast<double>(data.size());
    };
    const double fd = (f(h) - f(-h)) / (2 * h);
    EXPECT_NEAR(lg.gradient[i], fd, 1e-3 * std::max(1.0, std::abs(fd))) << "param " << i;
    ++checked;
  }
  EXPECT_GT(checked, 50u);
}

TEST(Loss, AllPolicyGradientMatchesFiniteDifferences) {
  GnnModel m = init_model(GnnArchitecture{}, 5);
  const auto data = dataset(2, 2, 2, 1, 40);
  m.set_feature_norm(fit_feature_norm(data));
  const std::vector<std::size_t> all{0, 1};
  const LossAndGradient lg = round_loss_gradient(m, data, all);
  const std::vector<double> base = m.flat_parameters();
  for (std::size_t i = 0; i < base.size(); i += 131) {
    auto f = [&](double delta) {
      GnnModel t = m;
      std::vector<double> w = base;
      w[i] += delta;
      t.set_flat_parameters(w);
      return round_loss(t, data);
    };
    const double fd = (f(1e-6) - f(-1e-6)) / 2e-6;
    EXPECT_NEAR(lg.gradient[i], fd, 1e-3 * std::max(1.0, std::abs(fd))) << "param " << i;
  }
}

TEST(Loss, EmptyBatchThrows) {
  const GnnModel m = init_model(GnnArchitecture{}, 6);
  EXPECT_THROW(round_loss(m, {}), std::invalid_argument);
}

TEST(Train, ReducesLossOnTinyProblem) {
  const auto data = dataset(16, 3, 2, 1, 50);
  TrainConfig c;
  c.batch_size = 16;
  c.max_rounds = 200;
  c.min_rounds = 200;
  c.adam.learning_rate = 3e-3;
  const TrainResult r = train(init_model(GnnArchitecture{}, 7), data, c);
  EXPECT_LT(round_loss(r.model, data), r.log.rounds.front().loss);
  EXPECT_EQ(r.log.rounds.size(), 200u);
  EXPECT_EQ(r.log.stop_reason, "max_rounds");
  EXPECT_EQ(r.replica_mismatches, 0u);
}

TEST(Train, Deterministic) {
  const auto data = dataset(8, 3, 3, 1, 60);
  TrainConfig c;
  c.batch_size = 4;
  c.max_rounds = 10;
  const TrainResult a = train(init_model(GnnArchitecture{}, 8), data, c);
  const TrainResult b = train(init_model(GnnArchitecture{}, 8), data, c);
  EXPECT_EQ(a.model, b.model);
  for (std::size_t i = 0; i < a.log.rounds.size(); ++i) EXPECT_EQ(a.log.rounds[i].loss, b.log.rounds[i].loss);
}

TEST(Train, AllPolicyCloseToRoundRobin) {
  const auto data = dataset(16, 3, 2, 1, 50);
  TrainConfig c;
  c.batch_size = 16;
  c.adam.learning_rate = 3e-3;
  const TrainResult rr = train(init_model(GnnArchitecture{}, 9), data, c);
  c.policy = DesignationPolicy::kAll;
  const TrainResult all = train(init_model(GnnArchitecture{}, 9), data, c);
  const double a = mean_sum_rate(rr.model, data), b = mean_sum_rate(all.model, data);
  EXPECT_NEAR(a, b, 0.03 * b);
}

TEST(Train, StopsOnConvergence) {
  const auto data = dataset(4, 2, 2, 1, 80);
  TrainConfig c;
  c.batch_size = 4;
  c.max_rounds = 500;
  c.min_rounds = 40;
  c.adam.learning_rate = 1e-12;
  const TrainResult r = train(init_model(GnnArchitecture{}, 10), data, c);
  EXPECT_EQ(r.log.stop_reason, "converged");
  EXPECT_EQ(r.log.rounds.size(), 40u);
}

TEST(Train, NonFiniteParametersReportDivergence) {
  GnnModel m = init_model(GnnArchitecture{}, 11);
  std::vector<double> w = m.flat_parameters();
  w.back() = std::numeric_limits<double>::quiet_NaN();
  m.set_flat_parameters(w);
  const auto data = dataset(2, 2, 2, 1, 90);
  TrainConfig c;
  c.batch_size = 2;
  c.max_rounds = 5;
  try {
    train(m, data, c);
    FAIL();
  } catch (const TrainingDiverged& e) {
    EXPECT_EQ(e.round(), 0u);
  }
}

TEST(Log, CsvAndSummary) {
  TrainLog log;
  log.rounds = {{0, -1.5, 2.0}, {1, -1.75, 4.5}};
  log.stop_reason = "max_rounds";
  log.config_digest = "00ff";
  EXPECT_EQ(log.to_csv(), "round,loss,wallclock_ms\n0,-1.5,2\n1,-1.75,4.5\n");
  EXPECT_NE(log.summary_json().find("\"stop_reason\": \"max_rounds\""), std::string::npos);
}
