// SPDX-License-Identifier: Apache-2.0
#include "cfgnn/baselines.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace cfgnn {

namespace nx = numerics;
using json = nlohmann::json;

Tensor equal_allocation(const ChannelStats& stats) {
  const std::size_t k_count = stats.aps(), n_count = stats.ues();
  const double share = 1.0 / (static_cast<double>(stats.antennas) * static_cast<double>(n_count));
  Tensor p = Tensor::matrix(k_count, n_count);
  for (std::size_t k = 0; k < k_count; ++k)
    for (std::size_t n = 0; n < n_count; ++n) p(k, n) = share / stats.v(k, n);
  return p;
}

Tensor proportional_allocation(const ChannelStats& stats) {
  const std::size_t k_count = stats.aps(), n_count = stats.ues();
  const double m = static_cast<double>(stats.antennas);
  Tensor p = Tensor::matrix(k_count, n_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    const auto row = stats.sigma.row(k);
    const double total = std::accumulate(row.begin(), row.end(), 0.0);
    for (std::size_t n = 0; n < n_count; ++n) p(k, n) = row[n] / (m * total * stats.v(k, n));
  }
  return p;
}

Tensor project_amplitudes(const Tensor& amplitude, const ChannelStats& stats) {
  const double budget = 1.0 / static_cast<double>(stats.antennas);
  Tensor q = amplitude;
  for (std::size_t k = 0; k < q.rows(); ++k) {
    double load = 0.0;
    for (std::size_t n = 0; n < q.cols(); ++n) {
      if (q(k, n) < 0.0) q(k, n) = 0.0;
      load += q(k, n) * q(k, n) * stats.v(k, n);
    }
    if (load > budget * (1.0 + 1e-12)) {
      const double s = std::sqrt(budget / load);
      for (std::size_t n = 0; n < q.cols(); ++n) q(k, n) *= s;
    }
  }
  return q;
}

namespace {

Tensor squared(const Tensor& q) {
  Tensor p = q;
  for (double& x : p.values()) x *= x;
  return p;
}

Tensor amplitudes_of(const Tensor& p) {
  Tensor q = p;
  for (double& x : q.values()) x = std::sqrt(std::max(x, 0.0));
  return q;
}

struct ObjectiveAndGradient {
  double value = 0.0;
  Tensor gradient;
};

ObjectiveAndGradient objective_gradient(const Tensor& q, const ChannelStats& stats) {
  nx::Tape tape;
  const nx::Var qv = tape.parameter(q);
  const nx::Var f = sum_rate(qv, stats);
  tape.backward(f);
  return {f.value()[0], qv.grad()};
}

bool feasible(const Tensor& p, const ChannelStats& stats) {
  try {
    validate_allocation(p, stats);
    return true;
  } catch (const InvalidAllocation&) {
    return false;
  }
}

}  // namespace

PgdResult projected_gradient_allocation(const ChannelStats& stats, const PgdOptions& options, const Tensor& start) {
  PgdResult result;
  Tensor q = project_amplitudes(amplitudes_of(start.size() ? start : proportional_allocation(stats)), stats);
  ObjectiveAndGradient cur = objective_gradient(q, stats);
  if (!std::isfinite(cur.value)) throw nx::NumericError("projected gradient: non-finite objective at start");
  result.start_objective = cur.value;
  result.trace.push_back(cur.value);
  result.all_feasible = feasible(squared(q), stats);

  for (std::size_t it = 0; it < options.iterations; ++it) {
    double step = options.initial_step;
    bool accepted = false;
    for (std::size_t h = 0; h <= options.max_halvings; ++h, step *= 0.5) {
      Tensor cand = q;
      for (std::size_t i = 0; i < cand.size(); ++i) cand[i] += step * cur.gradient[i];
      cand = project_amplitudes(cand, stats);
      const double value = ergodic_rate(squared(cand), stats).sum;
      if (!std::isfinite(value)) throw nx::NumericError("projected gradient: non-finite objective");
      if (value > cur.value) {
        q = std::move(cand);
        cur = objective_gradient(q, stats);
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    ++result.iterations;
    result.trace.push_back(cur.value);
    result.all_feasible = result.all_feasible && feasible(squared(q), stats);
  }
  result.objective = cur.value;
  result.power = squared(q);
  return result;
}

// Centralized comparison model.

namespace {

// Dense layer shapes in parameter order for width H and pilot length tau:
//   ue_encoder (tau+1 -> H), ap_encoder (1 -> H),
//   to_ue.0 (H+1 -> H), to_ue.1 (H -> H), to_ap.0 (H+1 -> H), to_ap.1 (H -> H),
//   ue_update (2H -> H), ap_update (2H -> H), head.0 (2H+1 -> H), head.1 (H -> 1)
constexpr std::array<const char*, 10> kLayerNames{"ue_encoder", "ap_encoder", "to_ue.0",   "to_ue.1", "to_ap.0",
                                                  "to_ap.1",    "ue_update",  "ap_update", "head.0",  "head.1"};

std::vector<std::pair<std::size_t, std::size_t>> central_shapes(const CentralizedArchitecture& a) {
  const std::size_t h = a.width;
  return {{a.pilot_length + 1, h}, {1, h}, {h + 1, h}, {h, h}, {h + 1, h},
          {h, h},                  {2 * h, h}, {2 * h, h}, {2 * h + 1, h}, {h, 1}};
}

struct BipartiteInputs {
  Tensor ue_nodes; // N x (tau+1)
  Tensor ap_nodes; // K x 1
  Tensor edges;    // KN x 1, row k*N+n
  std::vector<std::size_t> ap_of, ue_of;
  std::size_t aps = 0, ues = 0;
};

BipartiteInputs bipartite_inputs(const CentralizedGnnModel& model, const Topology& topology,
                                 const ChannelStats& stats, const SystemConfig& config) {
  BipartiteInputs in;
  in.aps = stats.aps();
  in.ues = stats.ues();
  const double snr = std::log10(stats.downlink_snr);
  in.ue_nodes = Tensor::matrix(in.ues, config.pilot_length + 1);
  for (std::size_t n = 0; n < in.ues; ++n) {
    in.ue_nodes(n, topology.pilots.pilot_index[n]) = 1.0;
    in.ue_nodes(n, config.pilot_length) = snr;
  }
  in.ap_nodes = Tensor::matrix(in.aps, 1, snr);
  in.edges = Tensor::matrix(in.aps * in.ues, 1);
  for (std::size_t k = 0; k < in.aps; ++k)
    for (std::size_t n = 0; n < in.ues; ++n) {
      in.edges(k * in.ues + n, 0) = model.feature_norm().apply(stats.sigma(k, n));
      in.ap_of.push_back(k);
      in.ue_of.push_back(n);
    }
  return in;
}

template <typename T, typename MakeConst>
T central_scores(const CentralizedArchitecture& arch, std::span<const T> p, const BipartiteInputs& in,
                 MakeConst constant) {
  using nx::add;
  using nx::concat_cols;
  using nx::gather_rows;
  using nx::group_reduce;
  using nx::matmul;
  using nx::relu;
  auto dense = [&](const T& x, std::size_t layer) { return add(matmul(x, p[2 * layer]), p[2 * layer + 1]); };
  auto cat = [](std::initializer_list<T> parts) {
    const std::vector<T> v(parts);
    return concat_cols(std::span<const T>(v));
  };

  const T e = constant(in.edges);
  T ue = relu(dense(constant(in.ue_nodes), 0));
  T ap = relu(dense(constant(in.ap_nodes), 1));
  for (std::size_t l = 0; l < arch.layers; ++l) {
    const T to_ue = relu(dense(relu(dense(cat({gather_rows(ap, in.ap_of), e}), 2)), 3));
    const T to_ap = relu(dense(relu(dense(cat({gather_rows(ue, in.ue_of), e}), 4)), 5));
    const T m_ue = group_reduce(to_ue, in.ue_of, in.ues, nx::ReduceOp::kMean);
    const T m_ap = group_reduce(to_ap, in.ap_of, in.aps, nx::ReduceOp::kMean);
    ue = relu(dense(cat({ue, m_ue}), 6));
    ap = relu(dense(cat({ap, m_ap}), 7));
  }
  const T hid = relu(dense(cat({gather_rows(ap, in.ap_of), gather_rows(ue, in.ue_of), e}), 8));
  // Squared rather than rectified: a rectified head can go silent on a whole AP and stop learning.
  return nx::square(dense(hid, 9));
}

}  // namespace

CentralizedGnnModel::CentralizedGnnModel(CentralizedArchitecture arch) : arch_(arch) {
  for (const auto& [in, out] : central_shapes(arch_)) {
    params_.push_back(Tensor::matrix(in, out));
    params_.push_back(Tensor({out}));
  }
}

std::vector<std::string> CentralizedGnnModel::parameter_names() const {
  std::vector<std::string> names;
  for (const char* layer : kLayerNames) {
    names.push_back(std::string(layer) + ".weight");
    names.push_back(std::string(layer) + ".bias");
  }
  return names;
}

std::size_t CentralizedGnnModel::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor& t : params_) n += t.size();
  return n;
}

std::size_t CentralizedGnnModel::max_layer_width() const {
  std::size_t w = 0;
  for (const auto& [in, out] : central_shapes(arch_)) w = std::max({w, in, out});
  return w;
}

std::vector<double> CentralizedGnnModel::flat_parameters() const {
  std::vector<double> flat;
  for (const Tensor& t : params_) flat.insert(flat.end(), t.values().begin(), t.values().end());
  return flat;
}

void CentralizedGnnModel::set_flat_parameters(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw std::invalid_argument("set_flat_parameters: size mismatch");
  std::size_t offset = 0;
  for (Tensor& t : params_) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), t.size(), t.values().begin());
    offset += t.size();
  }
}

CentralizedGnnModel init_centralized_model(const CentralizedArchitecture& arch, std::uint64_t seed) {
  CentralizedGnnModel model(arch);
  Rng rng(seed);
  auto& params = model.parameters();
  for (std::size_t i = 0; i < params.size(); i += 2) {
    Tensor& w = params[i];
    const double bound = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (double& x : w.values()) x = dist(rng);
  }
  params.back()[0] = 1.0;
  return model;
}

Tensor centralized_predict(const CentralizedGnnModel& model, const Topology& topology, const ChannelStats& stats,
                           const SystemConfig& config) {
  const BipartiteInputs in = bipartite_inputs(model, topology, stats, config);
  const Tensor x = central_scores<Tensor>(model.architecture(), std::span<const Tensor>(model.parameters()), in,
                                          [](const Tensor& t) { return t; });
  Tensor power = Tensor::matrix(in.aps, in.ues);
  for (std::size_t k = 0; k < in.aps; ++k) {
    const auto row = power_activation(std::span<const double>(x.values().data() + k * in.ues, in.ues),
                                      stats.v.row(k), stats.antennas);
    std::copy(row.begin(), row.end(), power.row(k).begin());
  }
  return power;
}

nx::Var centralized_predict(const CentralizedGnnModel& model, std::span<const nx::Var> params,
                            const Instance& instance, nx::Tape& tape) {
  const BipartiteInputs in = bipartite_inputs(model, instance.topology, instance.stats, instance.config);
  const nx::Var x = central_scores<nx::Var>(model.architecture(), params, in,
                                            [&tape](const Tensor& t) { return tape.constant(t); });
  // Per-AP activation on the transposed N x K score matrix so the load broadcasts as a row.
  const nx::Var xt = nx::transpose(nx::reshape(x, {in.aps, in.ues}));
  const nx::Var v_t = tape.constant(nx::transpose(instance.stats.v));
  const nx::Var load = nx::reduce(nx::mul(xt, v_t), nx::ReduceOp::kSum, 0);
  const nx::Var denom = nx::add(nx::scale(load, static_cast<double>(instance.stats.antennas)),
                                tape.constant(Tensor::scalar(kActivationEpsilon)));
  return nx::transpose(nx::div(xt, denom));
}

double mean_sum_rate(const CentralizedGnnModel& model, std::span<const Instance> instances) {
  if (instances.empty()) return 0.0;
  double sum = 0.0;
  for (const Instance& inst : instances)
    sum += ergodic_rate(centralized_predict(model, inst.topology, inst.stats, inst.config), inst.stats).sum;
  return sum / static_cast<double>(instances.size());
}

double centralized_round_loss(const CentralizedGnnModel& model, std::span<const Instance> batch) {
  return -mean_sum_rate(model, batch);
}

CentralizedTrainResult centralized_train(CentralizedGnnModel model, std::span<const Instance> dataset,
                                         const TrainConfig& config) {
  config.validate();
  if (dataset.empty()) throw std::invalid_argument("centralized_train: empty dataset");
  const auto start = std::chrono::steady_clock::now();
  model.set_feature_norm(fit_feature_norm(dataset));

  CentralizedTrainResult result;
  result.log.config_digest = digest_hex(serialize_train_config(config));
  result.ledger.phase = Phase::kTraining;
  result.log.stop_reason = "max_rounds";

  Rng rng(config.seed);
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;
  const std::size_t batch_size = std::min(config.batch_size, dataset.size());
  AdamState adam;
  std::vector<double> losses;

  for (std::size_t round = 0; round < config.max_rounds; ++round) {
    nx::Tape tape;
    std::vector<nx::Var> params;
    for (const Tensor& t : model.parameters()) params.push_back(tape.parameter(t));
    nx::Var total = tape.constant(Tensor::scalar(0.0));
    try {
      for (std::size_t b = 0; b < batch_size; ++b) {
        if (cursor == order.size()) {
          std::shuffle(order.begin(), order.end(), rng);
          cursor = 0;
        }
        const Instance& inst = dataset[order[cursor++]];
        const std::uint64_t kn = inst.topology.aps() * inst.topology.ues();
        result.ledger.uplink += kn;
        result.ledger.uplink_literal += kn;
        result.ledger.downlink += kn;
        const nx::Var p = centralized_predict(model, params, inst, tape);
        total = nx::add(total, sum_rate(nx::sqrt(p), inst.stats));
      }
    } catch (const nx::NumericError& e) {
      throw TrainingDiverged(round, e.what());
    }
    const nx::Var loss = nx::scale(total, -1.0 / static_cast<double>(batch_size));
    const double value = loss.value()[0];
    if (!std::isfinite(value)) throw TrainingDiverged(round, "non-finite loss");
    tape.backward(loss);
    std::vector<double> grad;
    grad.reserve(model.parameter_count());
    for (const nx::Var& p : params) grad.insert(grad.end(), p.grad().values().begin(), p.grad().values().end());

    std::vector<double> flat = model.flat_parameters();
    optimizer_step(flat, grad, adam, config.adam);
    model.set_flat_parameters(flat);
    ++result.ledger.rounds;

    losses.push_back(value);
    result.log.rounds.push_back(
        {round, value, std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count()});
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
  result.log.total_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  result.model = std::move(model);
  return result;
}

std::string serialize_centralized_checkpoint(const CentralizedGnnModel& model) {
  json params = json::array();
  const auto names = model.parameter_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    const Tensor& t = model.parameters()[i];
    params.push_back({{"name", names[i]},
                      {"shape", t.shape()},
                      {"values", std::vector<double>(t.values().begin(), t.values().end())}});
  }
  const auto& a = model.architecture();
  return json{{"format", "cfgnn-centralized-checkpoint"},
              {"version", kCheckpointVersion},
              {"architecture", {{"pilot_length", a.pilot_length}, {"width", a.width}, {"layers", a.layers}}},
              {"feature_norm",
               {{"log_sigma_mean", model.feature_norm().log_sigma_mean},
                {"log_sigma_std", model.feature_norm().log_sigma_std}}},
              {"parameters", params}}
      .dump();
}

CentralizedGnnModel parse_centralized_checkpoint(std::string_view text) {
  try {
    const json j = json::parse(text);
    if (j.value("format", "") != "cfgnn-centralized-checkpoint") {
      throw CheckpointError("not a centralized checkpoint (missing or wrong 'format' tag)");
    }
    const int version = j.value("version", -1);
    if (version != kCheckpointVersion) {
      throw CheckpointError("centralized checkpoint version " + std::to_string(version) + " is not supported");
    }
    CentralizedArchitecture a;
    a.pilot_length = j.at("architecture").at("pilot_length").get<std::size_t>();
    a.width = j.at("architecture").at("width").get<std::size_t>();
    a.layers = j.at("architecture").at("layers").get<std::size_t>();
    CentralizedGnnModel model(a);
    model.set_feature_norm({j.at("feature_norm").at("log_sigma_mean").get<double>(),
                            j.at("feature_norm").at("log_sigma_std").get<double>()});
    const auto& params = j.at("parameters");
    if (params.size() != model.parameters().size()) throw CheckpointError("centralized checkpoint: tensor count");
    for (std::size_t i = 0; i < params.size(); ++i) {
      Tensor& t = model.parameters()[i];
      const auto values = params[i].at("values").get<std::vector<double>>();
      if (params[i].at("shape").get<std::vector<std::size_t>>() != t.shape() || values.size() != t.size()) {
        throw CheckpointError("centralized checkpoint: shape mismatch at tensor " + std::to_string(i));
      }
      std::copy(values.begin(), values.end(), t.values().begin());
    }
    return model;
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("centralized checkpoint is corrupted: ") + e.what());
  }
}

void save_centralized_checkpoint(const CentralizedGnnModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out << serialize_centralized_checkpoint(model);
}

CentralizedGnnModel load_centralized_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_centralized_checkpoint(buf.str());
}

}  // namespace cfgnn
