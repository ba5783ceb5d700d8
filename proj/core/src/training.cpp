// SPDX-License-Identifier: Apache-2.0
#include "cfgnn/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace cfgnn {

namespace nx = numerics;
using json = nlohmann::json;

std::string to_string(DesignationPolicy policy) {
  switch (policy) {
    case DesignationPolicy::kFixed: return "fixed";
    case DesignationPolicy::kRoundRobin: return "round-robin";
    case DesignationPolicy::kAll: return "all";
  }
  return "round-robin";
}

DesignationPolicy policy_from_string(std::string_view name) {
  if (name == "fixed") return DesignationPolicy::kFixed;
  if (name == "round-robin") return DesignationPolicy::kRoundRobin;
  if (name == "all") return DesignationPolicy::kAll;
  throw std::invalid_argument("unknown designation policy '" + std::string(name) + "'");
}

void optimizer_step(std::span<double> params, std::span<const double> grads, AdamState& state,
                    const AdamConfig& config) {
  if (params.size() != grads.size()) throw std::invalid_argument("optimizer_step: size mismatch");
  if (state.m.empty()) {
    state.m.assign(params.size(), 0.0);
    state.v.assign(params.size(), 0.0);
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(config.beta1, t);
  const double c2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i];
    state.m[i] = config.beta1 * state.m[i] + (1.0 - config.beta1) * g;
    state.v[i] = config.beta2 * state.v[i] + (1.0 - config.beta2) * g * g;
    const double mhat = state.m[i] / c1;
    const double vhat = state.v[i] / c2;
    params[i] -= config.learning_rate * mhat / (std::sqrt(vhat) + config.epsilon);
  }
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (max_rounds == 0) throw std::invalid_argument("max_rounds must be positive");
  if (!(adam.learning_rate > 0.0)) throw std::invalid_argument("learning_rate must be > 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw std::invalid_argument("moment decays must lie in [0, 1)");
  }
  if (convergence_window == 0) throw std::invalid_argument("convergence_window must be positive");
}

std::string serialize_train_config(const TrainConfig& c) {
  json j{{"batch_size", c.batch_size},
         {"max_rounds", c.max_rounds},
         {"learning_rate", c.adam.learning_rate},
         {"beta1", c.adam.beta1},
         {"beta2", c.adam.beta2},
         {"adam_epsilon", c.adam.epsilon},
         {"policy", to_string(c.policy)},
         {"convergence_window", c.convergence_window},
         {"convergence_tolerance", c.convergence_tolerance},
         {"min_rounds", c.min_rounds},
         {"eval_every", c.eval_every},
         {"seed", c.seed}};
  return j.dump();
}

TrainConfig parse_train_config(std::string_view text) {
  const json j = json::parse(text);
  TrainConfig c;
  c.batch_size = j.value("batch_size", c.batch_size);
  c.max_rounds = j.value("max_rounds", c.max_rounds);
  c.adam.learning_rate = j.value("learning_rate", c.adam.learning_rate);
  c.adam.beta1 = j.value("beta1", c.adam.beta1);
  c.adam.beta2 = j.value("beta2", c.adam.beta2);
  c.adam.epsilon = j.value("adam_epsilon", c.adam.epsilon);
  c.policy = policy_from_string(j.value("policy", to_string(c.policy)));
  c.convergence_window = j.value("convergence_window", c.convergence_window);
  c.convergence_tolerance = j.value("convergence_tolerance", c.convergence_tolerance);
  c.min_rounds = j.value("min_rounds", c.min_rounds);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.seed = j.value("seed", c.seed);
  c.validate();
  return c;
}

std::string digest_hex(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::vector<std::size_t> designate_aps(DesignationPolicy policy, std::size_t round, std::size_t aps) {
  if (aps == 0) return {};
  switch (policy) {
    case DesignationPolicy::kFixed: return {0};
    case DesignationPolicy::kRoundRobin: return {round % aps};
    case DesignationPolicy::kAll: {
      std::vector<std::size_t> all(aps);
      std::iota(all.begin(), all.end(), 0);
      return all;
    }
  }
  return {0};
}

std::string ExchangeLedger::to_json() const {
  return json{{"phase", phase == Phase::kTraining ? "training" : "operating"},
              {"uplink", uplink},
              {"uplink_literal", uplink_literal},
              {"downlink", downlink},
              {"rounds", rounds}}
      .dump();
}

void MessageBus::uplink(const SharedInfo& info) {
  const std::uint64_t n = info.ues();
  ledger_.uplink += n * n + n;
  ledger_.uplink_literal += info.ds.size() + info.pc.size() + info.ui.size();
}

void MessageBus::deploy(const GnnModel& model, std::size_t aps) { replicas_.assign(aps, model); }

void MessageBus::broadcast(const GnnModel& model) {
  for (GnnModel& r : replicas_) {
    r = model;
    ledger_.downlink += model.parameter_count();
  }
}

ExchangeLedger operating_ledger(std::span<const Instance>) {
  ExchangeLedger l;
  l.phase = Phase::kOperating;
  return l;
}

std::string TrainLog::to_csv() const {
  std::ostringstream os;
  os.precision(17);
  os << "round,loss,wallclock_ms\n";
  for (const RoundRecord& r : rounds) os << r.round << ',' << r.loss << ',' << r.wallclock_ms << '\n';
  return os.str();
}

std::string TrainLog::summary_json() const {
  json snaps = json::array();
  for (const EvalSnapshot& s : snapshots) snaps.push_back({{"round", s.round}, {"mean_sum_rate", s.mean_sum_rate}});
  return json{{"rounds", rounds.size()},
              {"final_loss", rounds.empty() ? 0.0 : rounds.back().loss},
              {"stop_reason", stop_reason},
              {"config_digest", config_digest},
              {"total_ms", total_ms},
              {"snapshots", snaps}}
      .dump(2);
}

namespace {

// Sum rate of one instance, all rows fixed.
double instance_sum_rate(const GnnModel& model, const Instance& inst) {
  return ergodic_rate(distributed_allocation(model, inst), inst.stats).sum;
}

struct RoundOutcome {
  double loss = 0.0;
  std::vector<double> gradient;
};

// One exchange round. `ap_model(k)` is the model AP k runs; `cpu` is the
// model whose parameters are differentiated for the active APs.
template <typename ApModel, typename ActiveSet>
RoundOutcome run_round(const GnnModel& cpu, ApModel ap_model, std::span<const Instance> batch, ActiveSet active_for,
                       MessageBus* bus) {
  nx::Tape tape;
  std::vector<nx::Var> params;
  params.reserve(cpu.parameters().size());
  for (const Tensor& t : cpu.parameters()) params.push_back(tape.parameter(t));

  nx::Var total = tape.constant(Tensor::scalar(0.0));
  for (const Instance& inst : batch) {
    const std::size_t k_count = inst.topology.aps();
    std::vector<bool> is_active(k_count, false);
    for (std::size_t k : active_for(k_count))
      if (k < k_count) is_active[k] = true;

    std::vector<SharedInfo> fixed;
    std::vector<SharedInfoVar> live;
    for (std::size_t k = 0; k < k_count; ++k) {
      const LocalCsi csi = local_csi(k, inst.topology, inst.stats, inst.config);
      const std::vector<double> row = predict_power(ap_model(k), csi);
      SharedInfo info = shared_info(k, row, inst.stats);
      if (bus) bus->uplink(info);
      if (is_active[k]) {
        live.push_back(shared_info(k, predict_power(cpu, params, csi, tape), inst.stats));
      } else {
        fixed.push_back(std::move(info));
      }
    }
    SharedInfo constant_part;
    if (fixed.empty()) {
      const std::size_t n = inst.topology.ues();
      constant_part.ds.assign(n, 0.0);
      constant_part.pc = Tensor::matrix(n, n);
      constant_part.ui = Tensor::matrix(n, n);
    } else {
      constant_part = sum_shared(fixed);
    }
    total = nx::add(total, sum_rate_from_shared(tape, constant_part, live, inst.stats.antennas));
  }
  const nx::Var loss = nx::scale(total, -1.0 / static_cast<double>(batch.size()));

  RoundOutcome out;
  out.loss = loss.value()[0];
  out.gradient.assign(cpu.parameter_count(), 0.0);
  if (loss.tracked()) {
    tape.backward(loss);
    std::size_t offset = 0;
    for (const nx::Var& p : params) {
      const auto g = p.grad().values();
      std::copy(g.begin(), g.end(), out.gradient.begin() + static_cast<std::ptrdiff_t>(offset));
      offset += g.size();
    }
  }
  return out;
}

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

}  // namespace

double round_loss(const GnnModel& model, std::span<const Instance> batch) {
  if (batch.empty()) throw std::invalid_argument("round_loss: empty batch");
  double sum = 0.0;
  for (const Instance& inst : batch) sum += instance_sum_rate(model, inst);
  return -sum / static_cast<double>(batch.size());
}

LossAndGradient round_loss_gradient(const GnnModel& model, std::span<const Instance> batch,
                                    std::span<const std::size_t> active) {
  if (batch.empty()) throw std::invalid_argument("round_loss_gradient: empty batch");
  const std::vector<std::size_t> chosen(active.begin(), active.end());
  RoundOutcome r = run_round(
      model, [&model](std::size_t) -> const GnnModel& { return model; }, batch,
      [&chosen](std::size_t) { return chosen; }, nullptr);
  return {r.loss, std::move(r.gradient)};
}

double mean_sum_rate(const GnnModel& model, std::span<const Instance> instances) {
  if (instances.empty()) return 0.0;
  double sum = 0.0;
  for (const Instance& inst : instances) sum += instance_sum_rate(model, inst);
  return sum / static_cast<double>(instances.size());
}

TrainResult train(GnnModel model, std::span<const Instance> dataset, const TrainConfig& config,
                  std::span<const Instance> validation) {
  config.validate();
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  const auto start = std::chrono::steady_clock::now();

  model.set_feature_norm(fit_feature_norm(dataset));
  std::size_t max_aps = 0;
  for (const Instance& inst : dataset) max_aps = std::max(max_aps, inst.topology.aps());

  MessageBus bus(Phase::kTraining);
  bus.deploy(model, max_aps);

  TrainResult result;
  result.log.config_digest = digest_hex(serialize_train_config(config));

  Rng rng(config.seed);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;
  const std::size_t batch_size = std::min(config.batch_size, dataset.size());

  AdamState adam;
  std::vector<double> losses;
  std::vector<Instance> batch;
  batch.reserve(batch_size);
  result.log.stop_reason = "max_rounds";

  for (std::size_t round = 0; round < config.max_rounds; ++round) {
    batch.clear();
    for (std::size_t b = 0; b < batch_size; ++b) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      batch.push_back(dataset[order[cursor++]]);
    }

    RoundOutcome outcome;
    try {
      outcome = run_round(
          model, [&bus](std::size_t k) -> const GnnModel& { return bus.replica(k); }, batch,
          [&](std::size_t k_count) { return designate_aps(config.policy, round, k_count); }, &bus);
    } catch (const nx::NumericError& e) {
      throw TrainingDiverged(round, e.what());
    }
    if (!std::isfinite(outcome.loss)) throw TrainingDiverged(round, "non-finite loss");
    for (double g : outcome.gradient)
      if (!std::isfinite(g)) throw TrainingDiverged(round, "non-finite gradient");

    std::vector<double> flat = model.flat_parameters();
    optimizer_step(flat, outcome.gradient, adam, config.adam);
    model.set_flat_parameters(flat);
    bus.broadcast(model);
    bus.end_round();

    losses.push_back(outcome.loss);
    result.log.rounds.push_back({round, outcome.loss, elapsed_ms(start)});
    if (config.eval_every != 0 && !validation.empty() && (round + 1) % config.eval_every == 0) {
      result.log.snapshots.push_back({round, mean_sum_rate(model, validation)});
    }

    const std::size_t w = config.convergence_window;
    if (round + 1 >= config.min_rounds && losses.size() >= 2 * w) {
      const auto end = losses.end();
      const double recent = std::accumulate(end - static_cast<std::ptrdiff_t>(w), end, 0.0) / double(w);
      const double earlier =
          std::accumulate(end - static_cast<std::ptrdiff_t>(2 * w), end - static_cast<std::ptrdiff_t>(w), 0.0) /
          double(w);
      if ((earlier - recent) / std::max(std::abs(earlier), 1e-12) < config.convergence_tolerance) {
        result.log.stop_reason = "converged";
        break;
      }
    }
  }

  for (std::size_t k = 0; k < bus.replicas(); ++k)
    if (!(bus.replica(k) == model)) ++result.replica_mismatches;
  result.log.total_ms = elapsed_ms(start);
  result.ledger = bus.ledger();
  result.model = std::move(model);
  return result;
}

}  // namespace cfgnn
