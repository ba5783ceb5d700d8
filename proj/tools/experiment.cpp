// SPDX-License-Identifier: Apache-2.0
#include "experiment.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace cfgnn::cli {

using json = nlohmann::json;

namespace {

json grid_to_json(const Grid& g) { return {{"K", g.aps}, {"N", g.ues}, {"M", g.antennas}}; }

Grid grid_from_json(const json& j, Grid fallback) {
  fallback.aps = j.value("K", fallback.aps);
  fallback.ues = j.value("N", fallback.ues);
  fallback.antennas = j.value("M", fallback.antennas);
  return fallback;
}

void check_grid(const Grid& g, const char* name) {
  if (g.aps.empty() || g.ues.empty() || g.antennas.empty()) {
    throw std::invalid_argument(std::string(name) + ": K, N and M lists must be non-empty");
  }
  for (const auto* list : {&g.aps, &g.ues, &g.antennas})
    if (std::find(list->begin(), list->end(), std::size_t{0}) != list->end()) {
      throw std::invalid_argument(std::string(name) + ": grid values must be positive");
    }
}

}  // namespace

void ExperimentConfig::validate() const {
  system.validate();
  train.validate();
  check_grid(train_grid, "train_grid");
  check_grid(test_grid, "test_grid");
  check_grid(bench_grid, "bench_grid");
  if (train_instances == 0 || test_instances == 0) throw std::invalid_argument("instance counts must be positive");
  if (verify_samples < 2) throw std::invalid_argument("verify_samples must be >= 2");
  if (!(verify_tolerance > 0.0)) throw std::invalid_argument("verify_tolerance must be positive");
}

std::string ExperimentConfig::to_json() const {
  json j{{"system", json::parse(serialize_config(system))},
         {"train", json::parse(serialize_train_config(train))},
         {"centralized", {{"width", centralized.width}, {"layers", centralized.layers}}},
         {"train_grid", grid_to_json(train_grid)},
         {"test_grid", grid_to_json(test_grid)},
         {"bench_grid", grid_to_json(bench_grid)},
         {"train_instances", train_instances},
         {"test_instances", test_instances},
         {"verify_instances", verify_instances},
         {"verify_samples", verify_samples},
         {"verify_tolerance", verify_tolerance},
         {"bench_repetitions", bench_repetitions},
         {"pgd_iterations", pgd_iterations},
         {"seed", seed}};
  return j.dump(2);
}

std::string ExperimentConfig::digest() const { return digest_hex(to_json()); }

ExperimentConfig parse_experiment_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("config: malformed JSON: ") + e.what());
  }
  ExperimentConfig c;
  if (j.contains("system")) c.system = parse_config(j.at("system").dump());
  if (j.contains("train")) c.train = parse_train_config(j.at("train").dump());
  if (j.contains("centralized")) {
    c.centralized.width = j["centralized"].value("width", c.centralized.width);
    c.centralized.layers = j["centralized"].value("layers", c.centralized.layers);
  }
  if (j.contains("train_grid")) c.train_grid = grid_from_json(j["train_grid"], c.train_grid);
  if (j.contains("test_grid")) c.test_grid = grid_from_json(j["test_grid"], c.test_grid);
  if (j.contains("bench_grid")) c.bench_grid = grid_from_json(j["bench_grid"], c.bench_grid);
  c.train_instances = j.value("train_instances", c.train_instances);
  c.test_instances = j.value("test_instances", c.test_instances);
  c.verify_instances = j.value("verify_instances", c.verify_instances);
  c.verify_samples = j.value("verify_samples", c.verify_samples);
  c.verify_tolerance = j.value("verify_tolerance", c.verify_tolerance);
  c.bench_repetitions = j.value("bench_repetitions", c.bench_repetitions);
  c.pgd_iterations = j.value("pgd_iterations", c.pgd_iterations);
  c.seed = j.value("seed", c.seed);
  if (!(j.contains("system") && j["system"].contains("pilot_length"))) {
    c.system.pilot_length = std::min<std::size_t>(*std::max_element(c.train_grid.ues.begin(), c.train_grid.ues.end()), 10);
  }
  if (j.contains("out")) c.out = j.at("out").get<std::string>();
  return c;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_experiment_config(buf.str());
}

std::uint64_t instance_seed(std::uint64_t seed, unsigned split, std::size_t k, std::size_t n, std::size_t m,
                            std::size_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), split,
                    static_cast<std::uint32_t>(k), static_cast<std::uint32_t>(n), static_cast<std::uint32_t>(m),
                    static_cast<std::uint32_t>(index)};
  std::uint32_t out[2];
  seq.generate(out, out + 2);
  return (std::uint64_t{out[0]} << 32) | out[1];
}

std::string instance_name(std::size_t k, std::size_t n, std::size_t m, std::size_t index) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "K%03zu_N%03zu_M%zu_%05zu", k, n, m, index);
  return buf;
}

std::vector<NamedInstance> load_instance_dir(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == ".json" && entry.path().stem() != "manifest") {
      files.push_back(entry.path());
    }
  std::sort(files.begin(), files.end());
  std::vector<NamedInstance> out;
  out.reserve(files.size());
  for (const auto& f : files) out.push_back({f.stem().string(), load_instance(f)});
  return out;
}

}  // namespace cfgnn::cli
