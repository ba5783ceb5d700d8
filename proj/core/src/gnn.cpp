// SPDX-License-Identifier: Apache-2.0
#include "cfgnn/gnn.hpp"

#include <array>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace cfgnn {

namespace nx = numerics;

std::string to_string(Aggregation agg) {
  switch (agg) {
    case Aggregation::kMean: return "mean";
    case Aggregation::kSum: return "sum";
    case Aggregation::kMax: return "max";
  }
  return "mean";
}

Aggregation aggregation_from_string(std::string_view name) {
  if (name == "mean") return Aggregation::kMean;
  if (name == "sum") return Aggregation::kSum;
  if (name == "max") return Aggregation::kMax;
  throw std::invalid_argument("unknown aggregation '" + std::string(name) + "'");
}

double FeatureNorm::apply(double sigma) const { return (std::log10(sigma) - log_sigma_mean) / log_sigma_std; }

FeatureNorm fit_feature_norm(std::span<const Instance> instances) {
  double sum = 0.0, sum2 = 0.0;
  std::size_t count = 0;
  for (const Instance& inst : instances)
    for (double s : inst.topology.sigma.values()) {
      const double l = std::log10(s);
      sum += l;
      sum2 += l * l;
      ++count;
    }
  if (count < 2) return {};
  const double mean = sum / static_cast<double>(count);
  const double var = sum2 / static_cast<double>(count) - mean * mean;
  return {mean, var > 0.0 ? std::sqrt(var) : 1.0};
}

LocalCsi local_csi(std::size_t ap, const Topology& topology, const ChannelStats& stats, const SystemConfig& config) {
  LocalCsi csi;
  csi.sigma.assign(stats.sigma.row(ap).begin(), stats.sigma.row(ap).end());
  csi.v.assign(stats.v.row(ap).begin(), stats.v.row(ap).end());
  csi.pilot_index = topology.pilots.pilot_index;
  csi.pilot_length = config.pilot_length;
  csi.downlink_snr = stats.downlink_snr;
  csi.antennas = stats.antennas;
  return csi;
}

ApGraph build_graph(const LocalCsi& csi, const FeatureNorm& norm) {
  const std::size_t n_count = csi.ues();
  const std::size_t width = csi.pilot_length + 2;
  ApGraph g;
  g.nodes = Tensor::matrix(n_count, width);
  g.edges = Tensor({n_count, n_count, 2});
  std::vector<double> feature(n_count);
  for (std::size_t n = 0; n < n_count; ++n) feature[n] = norm.apply(csi.sigma[n]);
  const double snr = std::log10(csi.downlink_snr);
  for (std::size_t n = 0; n < n_count; ++n) {
    g.nodes(n, 0) = feature[n];
    g.nodes(n, 1 + csi.pilot_index[n]) = 1.0;
    g.nodes(n, width - 1) = snr;
    for (std::size_t j = 0; j < n_count; ++j) {
      if (j == n) continue;
      g.edges[(n * n_count + j) * 2 + 0] = feature[n];
      g.edges[(n * n_count + j) * 2 + 1] = feature[j];
    }
  }
  return g;
}

ApGraph build_graph(std::size_t ap, const Topology& topology, const ChannelStats& stats, const SystemConfig& config,
                    const FeatureNorm& norm) {
  return build_graph(local_csi(ap, topology, stats, config), norm);
}

namespace {

struct Layout {
  std::size_t message_first = 2;
  std::size_t message_count = 0;
  std::size_t update_first = 0;
  std::size_t update_count = 0;
  std::size_t head = 0;
};

Layout layout_of(const GnnArchitecture& a) {
  Layout l;
  l.message_count = a.message_hidden.size() + 1;
  l.update_first = l.message_first + 2 * l.message_count;
  l.update_count = a.update_hidden.size() + 1;
  l.head = l.update_first + 2 * l.update_count;
  return l;
}

// (fan_in, fan_out) of every dense layer in parameter order.
std::vector<std::pair<std::size_t, std::size_t>> dense_shapes(const GnnArchitecture& a) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  out.emplace_back(a.node_feature_width(), a.node_width);
  std::size_t in = a.node_width + 2;
  for (std::size_t h : a.message_hidden) {
    out.emplace_back(in, h);
    in = h;
  }
  out.emplace_back(in, a.message_width);
  in = a.node_width + a.message_width;
  for (std::size_t h : a.update_hidden) {
    out.emplace_back(in, h);
    in = h;
  }
  out.emplace_back(in, a.node_width);
  out.emplace_back(a.node_width, 1);
  return out;
}

nx::ReduceOp reduce_op(Aggregation a) {
  switch (a) {
    case Aggregation::kMean: return nx::ReduceOp::kMean;
    case Aggregation::kSum: return nx::ReduceOp::kSum;
    case Aggregation::kMax: return nx::ReduceOp::kMax;
  }
  return nx::ReduceOp::kMean;
}

// Shared by the plain and the taped forward pass; T is Tensor or Var.
template <typename T, typename MakeConst>
T forward_impl(const GnnArchitecture& arch, std::span<const T> p, const ApGraph& g, MakeConst constant) {
  using nx::add;
  using nx::concat_cols;
  using nx::matmul;
  using nx::relu;
  const Layout lay = layout_of(arch);
  const std::size_t n_count = g.ues();

  auto mlp = [&](T x, std::size_t first, std::size_t count) {
    for (std::size_t c = 0; c < count; ++c) x = relu(add(matmul(x, p[first + 2 * c]), p[first + 2 * c + 1]));
    return x;
  };

  // Directed neighbor pairs n' -> n, n' != n.
  std::vector<std::size_t> src, dst;
  src.reserve(n_count * n_count);
  dst.reserve(n_count * n_count);
  for (std::size_t n = 0; n < n_count; ++n)
    for (std::size_t j = 0; j < n_count; ++j)
      if (j != n) {
        src.push_back(j);
        dst.push_back(n);
      }
  Tensor edge_rows = Tensor::matrix(src.size(), 2);
  for (std::size_t e = 0; e < src.size(); ++e) {
    edge_rows(e, 0) = g.edge(src[e], dst[e], 0);
    edge_rows(e, 1) = g.edge(src[e], dst[e], 1);
  }

  T h = mlp(constant(g.nodes), 0, 1);
  const T edge_feat = constant(edge_rows);
  const T no_message = constant(Tensor::matrix(n_count, arch.message_width));
  for (std::size_t layer = 0; layer < arch.layers; ++layer) {
    T agg = no_message;
    if (!src.empty()) {
      const std::array<T, 2> in{nx::gather_rows(h, src), edge_feat};
      agg = nx::group_reduce(mlp(concat_cols(std::span<const T>(in)), lay.message_first, lay.message_count), dst,
                             n_count, reduce_op(arch.aggregation));
    }
    const std::array<T, 2> upd{h, agg};
    h = mlp(concat_cols(std::span<const T>(upd)), lay.update_first, lay.update_count);
  }
  return relu(add(matmul(h, p[lay.head]), p[lay.head + 1]));
}

}  // namespace

GnnModel::GnnModel(GnnArchitecture arch) : arch_(std::move(arch)) {
  for (const auto& [in, out] : dense_shapes(arch_)) {
    params_.push_back(Tensor::matrix(in, out));
    params_.push_back(Tensor({out}));
  }
}

std::vector<std::string> GnnModel::parameter_names() const {
  std::vector<std::string> names;
  auto add_dense = [&](const std::string& prefix) {
    names.push_back(prefix + ".weight");
    names.push_back(prefix + ".bias");
  };
  const Layout lay = layout_of(arch_);
  add_dense("encoder");
  for (std::size_t i = 0; i < lay.message_count; ++i) add_dense("message." + std::to_string(i));
  for (std::size_t i = 0; i < lay.update_count; ++i) add_dense("update." + std::to_string(i));
  add_dense("head");
  return names;
}

std::vector<std::vector<std::size_t>> GnnModel::parameter_shapes() const {
  std::vector<std::vector<std::size_t>> shapes;
  for (const Tensor& t : params_) shapes.push_back(t.shape());
  return shapes;
}

std::size_t GnnModel::parameter_count() const {
  std::size_t n = 0;
  for (const Tensor& t : params_) n += t.size();
  return n;
}

std::vector<double> GnnModel::flat_parameters() const {
  std::vector<double> flat;
  flat.reserve(parameter_count());
  for (const Tensor& t : params_) flat.insert(flat.end(), t.values().begin(), t.values().end());
  return flat;
}

void GnnModel::set_flat_parameters(std::span<const double> flat) {
  if (flat.size() != parameter_count()) throw std::invalid_argument("set_flat_parameters: size mismatch");
  std::size_t offset = 0;
  for (Tensor& t : params_) {
    std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(offset), t.size(), t.values().begin());
    offset += t.size();
  }
}

GnnModel init_model(const GnnArchitecture& arch, std::uint64_t seed) {
  GnnModel model(arch);
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

Tensor mpgnn_forward(const GnnModel& model, const ApGraph& graph) {
  return forward_impl<Tensor>(model.architecture(), std::span<const Tensor>(model.parameters()), graph,
                              [](const Tensor& t) { return t; });
}

nx::Var mpgnn_forward(const GnnModel& model, std::span<const nx::Var> params, const ApGraph& graph, nx::Tape& tape) {
  return forward_impl<nx::Var>(model.architecture(), params, graph,
                               [&tape](const Tensor& t) { return tape.constant(t); });
}

std::vector<double> power_activation(std::span<const double> scores, std::span<const double> v_row,
                                     std::size_t antennas) {
  if (scores.size() != v_row.size()) throw std::invalid_argument("power_activation: length mismatch");
  double load = 0.0;
  for (std::size_t n = 0; n < scores.size(); ++n) load += scores[n] * v_row[n];
  const double denom = static_cast<double>(antennas) * load + kActivationEpsilon;
  std::vector<double> p(scores.size());
  for (std::size_t n = 0; n < scores.size(); ++n) p[n] = scores[n] / denom;
  return p;
}

nx::Var power_activation(const nx::Var& scores, std::span<const double> v_row, std::size_t antennas) {
  nx::Tape& tape = *scores.tape();
  const nx::Var v = tape.constant(Tensor(scores.value().shape(), std::vector<double>(v_row.begin(), v_row.end())));
  const nx::Var load = nx::sum_all(nx::mul(scores, v));
  const nx::Var denom =
      nx::add(nx::scale(load, static_cast<double>(antennas)), tape.constant(Tensor::scalar(kActivationEpsilon)));
  return nx::div(scores, denom);
}

std::vector<double> predict_power(const GnnModel& model, const LocalCsi& csi) {
  const Tensor x = mpgnn_forward(model, build_graph(csi, model.feature_norm()));
  return power_activation(x.values(), csi.v, csi.antennas);
}

std::vector<double> predict_power(const GnnModel& model, std::size_t ap, const Topology& topology,
                                  const ChannelStats& stats, const SystemConfig& config) {
  return predict_power(model, local_csi(ap, topology, stats, config));
}

nx::Var predict_power(const GnnModel& model, std::span<const nx::Var> params, const LocalCsi& csi, nx::Tape& tape) {
  const nx::Var x = mpgnn_forward(model, params, build_graph(csi, model.feature_norm()), tape);
  return power_activation(x, csi.v, csi.antennas);
}

Tensor distributed_allocation(const GnnModel& model, const Instance& instance) {
  const std::size_t k_count = instance.topology.aps();
  const std::size_t n_count = instance.topology.ues();
  Tensor power = Tensor::matrix(k_count, n_count);
  for (std::size_t k = 0; k < k_count; ++k) {
    const auto row = predict_power(model, k, instance.topology, instance.stats, instance.config);
    std::copy(row.begin(), row.end(), power.row(k).begin());
  }
  return power;
}

namespace {

nlohmann::json arch_to_json(const GnnArchitecture& a) {
  return {{"pilot_length", a.pilot_length},   {"node_width", a.node_width},
          {"message_hidden", a.message_hidden}, {"message_width", a.message_width},
          {"update_hidden", a.update_hidden},   {"layers", a.layers},
          {"aggregation", to_string(a.aggregation)}};
}

GnnArchitecture arch_from_json(const nlohmann::json& j) {
  GnnArchitecture a;
  a.pilot_length = j.at("pilot_length").get<std::size_t>();
  a.node_width = j.at("node_width").get<std::size_t>();
  a.message_hidden = j.at("message_hidden").get<std::vector<std::size_t>>();
  a.message_width = j.at("message_width").get<std::size_t>();
  a.update_hidden = j.at("update_hidden").get<std::vector<std::size_t>>();
  a.layers = j.at("layers").get<std::size_t>();
  a.aggregation = aggregation_from_string(j.at("aggregation").get<std::string>());
  return a;
}

}  // namespace

std::string serialize_checkpoint(const GnnModel& model, std::string_view train_config_digest) {
  nlohmann::json params = nlohmann::json::array();
  const auto names = model.parameter_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    const Tensor& t = model.parameters()[i];
    params.push_back({{"name", names[i]},
                      {"shape", t.shape()},
                      {"values", std::vector<double>(t.values().begin(), t.values().end())}});
  }
  nlohmann::json j{{"format", "cfgnn-gnn-checkpoint"},
                   {"version", kCheckpointVersion},
                   {"architecture", arch_to_json(model.architecture())},
                   {"feature_norm",
                    {{"log_sigma_mean", model.feature_norm().log_sigma_mean},
                     {"log_sigma_std", model.feature_norm().log_sigma_std}}},
                   {"train_config_digest", std::string(train_config_digest)},
                   {"parameter_count", model.parameter_count()},
                   {"parameters", params}};
  return j.dump();
}

GnnModel parse_checkpoint(std::string_view text, std::string* train_config_digest) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(std::string("checkpoint is not valid JSON: ") + e.what());
  }
  if (!j.is_object() || j.value("format", "") != "cfgnn-gnn-checkpoint") {
    throw CheckpointError("not a cfgnn GNN checkpoint (missing or wrong 'format' tag)");
  }
  const int version = j.value("version", -1);
  if (version != kCheckpointVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported (this build reads " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  try {
    GnnModel model(arch_from_json(j.at("architecture")));
    model.set_feature_norm({j.at("feature_norm").at("log_sigma_mean").get<double>(),
                            j.at("feature_norm").at("log_sigma_std").get<double>()});
    const auto names = model.parameter_names();
    const auto& params = j.at("parameters");
    if (params.size() != names.size()) {
      throw CheckpointError("checkpoint v" + std::to_string(version) + " holds " + std::to_string(params.size()) +
                            " tensors, architecture needs " + std::to_string(names.size()));
    }
    for (std::size_t i = 0; i < names.size(); ++i) {
      const auto& entry = params.at(i);
      Tensor& t = model.parameters()[i];
      if (entry.at("name").get<std::string>() != names[i] ||
          entry.at("shape").get<std::vector<std::size_t>>() != t.shape()) {
        throw CheckpointError("checkpoint v" + std::to_string(version) + ": tensor " + std::to_string(i) +
                              " does not match expected '" + names[i] + "' " + t.shape_string());
      }
      const auto values = entry.at("values").get<std::vector<double>>();
      if (values.size() != t.size()) throw CheckpointError("checkpoint: value count mismatch for " + names[i]);
      std::copy(values.begin(), values.end(), t.values().begin());
    }
    if (train_config_digest) *train_config_digest = j.value("train_config_digest", "");
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError("checkpoint v" + std::to_string(version) + " is corrupted: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw CheckpointError("checkpoint v" + std::to_string(version) + " is corrupted: " + e.what());
  }
}

void save_checkpoint(const GnnModel& model, const std::filesystem::path& path, std::string_view digest) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write checkpoint " + path.string());
  out << serialize_checkpoint(model, digest);
}

GnnModel load_checkpoint(const std::filesystem::path& path, std::string* digest) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_checkpoint(buf.str(), digest);
}

}  // namespace cfgnn
