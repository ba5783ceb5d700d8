// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cfgnn/autodiff.hpp"
#include "cfgnn/channel.hpp"

namespace cfgnn {

/// Guard added to the power-activation denominator.
inline constexpr double kActivationEpsilon = 1e-12;

enum class Aggregation { kMean, kSum, kMax };

std::string to_string(Aggregation agg);
Aggregation aggregation_from_string(std::string_view name);

/// Layer widths of the per-AP message-passing network.
///
/// Node states have `node_width` entries. The message MLP maps
/// [neighbor state, edge feature] (node_width + 2) through `message_hidden` to
/// `message_width`; the update MLP maps [state, aggregated message] through
/// `update_hidden` back to `node_width`. A scalar head runs after the last layer.
struct GnnArchitecture {
  std::size_t pilot_length = 6;
  std::size_t node_width = 12;
  std::vector<std::size_t> message_hidden{16, 32};
  std::size_t message_width = 64;
  std::vector<std::size_t> update_hidden{32};
  std::size_t layers = 3;
  Aggregation aggregation = Aggregation::kMean;

  std::size_t node_feature_width() const { return pilot_length + 2; }
  friend bool operator==(const GnnArchitecture&, const GnnArchitecture&) = default;
};

/// Standardization of log10 large-scale fading, fitted on training data.
struct FeatureNorm {
  double log_sigma_mean = 0.0;
  double log_sigma_std = 1.0;

  double apply(double sigma) const;
  friend bool operator==(const FeatureNorm&, const FeatureNorm&) = default;
};

FeatureNorm fit_feature_norm(std::span<const Instance> instances);

/// What AP k knows about its own links. Nothing from other APs enters here.
struct LocalCsi {
  std::vector<double> sigma; // sigma_k., length N
  std::vector<double> v;     // v_k., length N
  std::vector<std::size_t> pilot_index;
  std::size_t pilot_length = 0;
  double downlink_snr = 0.0;
  std::size_t antennas = 0;

  std::size_t ues() const { return sigma.size(); }
};

LocalCsi local_csi(std::size_t ap, const Topology& topology, const ChannelStats& stats, const SystemConfig& config);

/// Per-AP graph: one node per AP-UE link, fully connected interference edges.
struct ApGraph {
  Tensor nodes; // N x (tau_p + 2): [norm sigma_kn, theta_n one-hot, log10 rho_d]
  Tensor edges; // {N, N, 2}: (n, n') -> [norm sigma_kn, norm sigma_kn'], zero on the diagonal

  std::size_t ues() const { return nodes.rows(); }
  double edge(std::size_t n, std::size_t np, std::size_t c) const { return edges[(n * ues() + np) * 2 + c]; }
};

ApGraph build_graph(const LocalCsi& csi, const FeatureNorm& norm);
ApGraph build_graph(std::size_t ap, const Topology& topology, const ChannelStats& stats, const SystemConfig& config,
                    const FeatureNorm& norm);

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shared parameter set Psi. Parameters are stored as a flat list of
/// tensors in the order given by parameter_names().
class GnnModel {
 public:
  GnnModel() = default;
  explicit GnnModel(GnnArchitecture arch);

  const GnnArchitecture& architecture() const { return arch_; }
  const FeatureNorm& feature_norm() const { return norm_; }
  void set_feature_norm(FeatureNorm norm) { norm_ = norm; }

  std::vector<Tensor>& parameters() { return params_; }
  const std::vector<Tensor>& parameters() const { return params_; }
  std::vector<std::string> parameter_names() const;
  std::vector<std::vector<std::size_t>> parameter_shapes() const;

  /// |Psi|: total scalar count.
  std::size_t parameter_count() const;
  std::vector<double> flat_parameters() const;
  void set_flat_parameters(std::span<const double> flat);

  friend bool operator==(const GnnModel&, const GnnModel&) = default;

 private:
  GnnArchitecture arch_;
  FeatureNorm norm_;
  std::vector<Tensor> params_;
};

/// Xavier-uniform weights (bound sqrt(6 / (fan_in + fan_out))), zero biases,
/// head bias 1 so the initial scores are positive.
GnnModel init_model(const GnnArchitecture& arch, std::uint64_t seed);

/// Forward pass on plain tensors; returns x (N x 1), x >= 0.
Tensor mpgnn_forward(const GnnModel& model, const ApGraph& graph);
/// Taped forward pass; `params` are tape nodes in parameter_names() order.
numerics::Var mpgnn_forward(const GnnModel& model, std::span<const numerics::Var> params, const ApGraph& graph,
                            numerics::Tape& tape);

/// P_n = x_n / (M sum_n' x_n' v_n' + eps), which keeps sum_n P_n v_n <= 1/M.
std::vector<double> power_activation(std::span<const double> scores, std::span<const double> v_row,
                                     std::size_t antennas);
numerics::Var power_activation(const numerics::Var& scores, std::span<const double> v_row, std::size_t antennas);

std::vector<double> predict_power(const GnnModel& model, const LocalCsi& csi);
std::vector<double> predict_power(const GnnModel& model, std::size_t ap, const Topology& topology,
                                  const ChannelStats& stats, const SystemConfig& config);
/// Taped prediction, returns the power row as an N x 1 node.
numerics::Var predict_power(const GnnModel& model, std::span<const numerics::Var> params, const LocalCsi& csi,
                            numerics::Tape& tape);

/// Every AP runs the shared model on its own CSI; rows stacked into K x N.
Tensor distributed_allocation(const GnnModel& model, const Instance& instance);

// Checkpoint file: JSON document
//   {"format": "cfgnn-gnn-checkpoint", "version": 1, "architecture": {...},
//    "feature_norm": {...}, "train_config_digest": "...",
//    "parameters": [{"name", "shape", "values"}...]}
inline constexpr int kCheckpointVersion = 1;

std::string serialize_checkpoint(const GnnModel& model, std::string_view train_config_digest = "");
GnnModel parse_checkpoint(std::string_view text, std::string* train_config_digest = nullptr);
void save_checkpoint(const GnnModel& model, const std::filesystem::path& path, std::string_view digest = "");
GnnModel load_checkpoint(const std::filesystem::path& path, std::string* digest = nullptr);

}  // namespace cfgnn
