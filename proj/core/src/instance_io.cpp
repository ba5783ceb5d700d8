// SPDX-License-Identifier: Apache-2.0
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "cfgnn/channel.hpp"

namespace cfgnn {

using nlohmann::json;

namespace {

json matrix_to_json(const Tensor& t) {
  json rows = json::array();
  for (std::size_t i = 0; i < t.rows(); ++i) rows.push_back(std::vector<double>(t.row(i).begin(), t.row(i).end()));
  return rows;
}

Tensor matrix_from_json(const json& j, std::size_t cols_expected, const char* field) {
  if (!j.is_array()) throw std::runtime_error(std::string("instance: field '") + field + "' must be an array");
  const std::size_t rows = j.size();
  Tensor t = Tensor::matrix(rows, cols_expected);
  for (std::size_t i = 0; i < rows; ++i) {
    const auto row = j.at(i).get<std::vector<double>>();
    if (row.size() != cols_expected) {
      throw std::runtime_error(std::string("instance: field '") + field + "' row " + std::to_string(i) +
                               " has wrong length");
    }
    std::copy(row.begin(), row.end(), t.row(i).begin());
  }
  return t;
}

json config_to_json(const SystemConfig& c) {
  return json{{"aps", c.aps},
              {"ues", c.ues},
              {"antennas", c.antennas},
              {"pilot_length", c.pilot_length},
              {"pilot_snr", c.pilot_snr},
              {"downlink_snr", c.downlink_snr},
              {"area_side", c.area_side},
              {"pathloss",
               {{"near_breakpoint", c.pathloss.near_breakpoint},
                {"far_breakpoint", c.pathloss.far_breakpoint},
                {"near_exponent", c.pathloss.near_exponent},
                {"mid_exponent", c.pathloss.mid_exponent},
                {"far_exponent", c.pathloss.far_exponent},
                {"gain_at_far_breakpoint", c.pathloss.gain_at_far_breakpoint}}},
              {"seed", c.seed}};
}

// Missing keys keep their defaults so partial config files are accepted.
SystemConfig config_from_json(const json& j) {
  SystemConfig c;
  c.aps = j.value("aps", c.aps);
  c.ues = j.value("ues", c.ues);
  c.antennas = j.value("antennas", c.antennas);
  c.pilot_length = j.value("pilot_length", c.pilot_length);
  c.pilot_snr = j.value("pilot_snr", c.pilot_snr);
  c.downlink_snr = j.value("downlink_snr", c.downlink_snr);
  c.area_side = j.value("area_side", c.area_side);
  c.seed = j.value("seed", c.seed);
  if (j.contains("pathloss")) {
    const json& p = j.at("pathloss");
    c.pathloss.near_breakpoint = p.value("near_breakpoint", c.pathloss.near_breakpoint);
    c.pathloss.far_breakpoint = p.value("far_breakpoint", c.pathloss.far_breakpoint);
    c.pathloss.near_exponent = p.value("near_exponent", c.pathloss.near_exponent);
    c.pathloss.mid_exponent = p.value("mid_exponent", c.pathloss.mid_exponent);
    c.pathloss.far_exponent = p.value("far_exponent", c.pathloss.far_exponent);
    c.pathloss.gain_at_far_breakpoint = p.value("gain_at_far_breakpoint", c.pathloss.gain_at_far_breakpoint);
  }
  c.validate();
  return c;
}

}  // namespace

std::string serialize_config(const SystemConfig& config) { return config_to_json(config).dump(2); }

SystemConfig parse_config(std::string_view text) { return config_from_json(json::parse(text)); }

std::string serialize_instance(const Instance& instance) {
  const Topology& t = instance.topology;
  json j{{"config", config_to_json(instance.config)},
         {"ap_positions", matrix_to_json(t.ap_positions)},
         {"ue_positions", matrix_to_json(t.ue_positions)},
         {"sigma", matrix_to_json(t.sigma)},
         {"pilot_index", t.pilots.pilot_index}};
  return j.dump();
}

Instance parse_instance(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("instance: malformed JSON: ") + e.what());
  }
  for (const char* key : {"config", "ap_positions", "ue_positions", "sigma", "pilot_index"}) {
    if (!j.contains(key)) throw std::runtime_error(std::string("instance: missing field '") + key + "'");
  }
  SystemConfig config = config_from_json(j.at("config"));
  Topology topo;
  topo.ap_positions = matrix_from_json(j.at("ap_positions"), 2, "ap_positions");
  topo.ue_positions = matrix_from_json(j.at("ue_positions"), 2, "ue_positions");
  topo.sigma = matrix_from_json(j.at("sigma"), topo.ue_positions.rows(), "sigma");
  if (topo.sigma.rows() != topo.ap_positions.rows()) throw std::runtime_error("instance: sigma row count != AP count");

  topo.pilots.pilot_index = j.at("pilot_index").get<std::vector<std::size_t>>();
  if (topo.pilots.pilot_index.size() != topo.ues()) throw std::runtime_error("instance: pilot_index length != UE count");
  for (std::size_t idx : topo.pilots.pilot_index) {
    if (idx >= config.pilot_length) throw std::runtime_error("instance: pilot index out of range");
  }
  topo.pilots.pilots = Tensor::matrix(config.pilot_length, config.pilot_length);
  for (std::size_t i = 0; i < config.pilot_length; ++i) topo.pilots.pilots(i, i) = 1.0;
  topo.pilots.gram = pilot_gram(topo.pilots.pilot_index);
  return make_instance(config, std::move(topo));
}

void save_instance(const Instance& instance, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write instance file " + path.string());
  out << serialize_instance(instance) << '\n';
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

Instance load_instance(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read instance file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_instance(buf.str());
}

}  // namespace cfgnn
