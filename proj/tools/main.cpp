// SPDX-License-Identifier: Apache-2.0
// cfgnn: generate instances, train, evaluate, verify the rate model,
// report exchange costs and time inference.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <tuple>

#include <CLI11.hpp>
#include <json.hpp>

#include "cfgnn/baselines.hpp"
#include "cfgnn/gnn.hpp"
#include "cfgnn/rate.hpp"
#include "cfgnn/training.hpp"
#include "experiment.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace cfgnn;
using cli::ExperimentConfig;

namespace {

struct CommonFlags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

ExperimentConfig resolve(const CommonFlags& flags) {
  ExperimentConfig c = flags.config.empty() ? ExperimentConfig{} : cli::load_experiment_config(flags.config);
  if (flags.seed) c.seed = *flags.seed;
  if (flags.out) c.out = *flags.out;
  c.validate();
  return c;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create directory " + dir.string());
}

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

template <typename F>
double median_ms(std::size_t reps, F&& f) {
  std::vector<double> t(std::max<std::size_t>(reps, 1));
  for (double& x : t) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    x = ms_since(t0);
  }
  std::nth_element(t.begin(), t.begin() + static_cast<std::ptrdiff_t>(t.size() / 2), t.end());
  return t[t.size() / 2];
}

std::vector<Instance> instances_of(const std::vector<cli::NamedInstance>& named) {
  std::vector<Instance> out;
  out.reserve(named.size());
  for (const auto& n : named) out.push_back(n.instance);
  return out;
}

// gen-data

int cmd_gen_data(const ExperimentConfig& c) {
  std::size_t files = 0;
  json manifest{{"config_digest", c.digest()}, {"config", json::parse(c.to_json())}};
  for (const auto& [split, grid, count, dir] :
       {std::tuple{0u, c.train_grid, c.train_instances, c.out / "train"},
        std::tuple{1u, c.test_grid, c.test_instances, c.out / "test"}}) {
    ensure_dir(dir);
    for (std::size_t k : grid.aps)
      for (std::size_t n : grid.ues)
        for (std::size_t m : grid.antennas)
          for (std::size_t i = 0; i < count; ++i) {
            SystemConfig sc = c.system;
            sc.aps = k;
            sc.ues = n;
            sc.antennas = m;
            sc.seed = cli::instance_seed(c.seed, split, k, n, m, i);
            save_instance(make_instance(sc), dir / (cli::instance_name(k, n, m, i) + ".json"));
            ++files;
          }
    write_file(dir / "manifest.json", manifest.dump(2));
  }
  std::cout << "wrote " << files << " instance files under " << c.out.string() << " (config " << c.digest()
            << ")\n";
  return 0;
}

// train

int cmd_train(const ExperimentConfig& c, const std::string& data_dir, bool with_centralized) {
  const fs::path data = data_dir.empty() ? c.out / "train" : fs::path(data_dir);
  const auto dataset = instances_of(cli::load_instance_dir(data));
  if (dataset.empty()) throw std::runtime_error("no instances in " + data.string());
  ensure_dir(c.out);

  GnnArchitecture arch;
  arch.pilot_length = c.system.pilot_length;
  TrainResult r = train(init_model(arch, c.seed), dataset, c.train);
  save_checkpoint(r.model, c.out / "checkpoint.json", c.digest());
  write_file(c.out / "train_log.csv", r.log.to_csv());
  json summary = json::parse(r.log.summary_json());
  summary["config_digest"] = c.digest();
  summary["parameter_count"] = r.model.parameter_count();
  summary["instances"] = dataset.size();
  write_file(c.out / "train_summary.json", summary.dump(2));
  json ledger = json::parse(r.ledger.to_json());
  ledger["config_digest"] = c.digest();
  write_file(c.out / "exchange_ledger.json", ledger.dump(2));
  std::cout << "distributed: " << r.log.rounds.size() << " rounds, final loss " << r.log.rounds.back().loss
            << ", stop " << r.log.stop_reason << "\n";

  if (with_centralized) {
    CentralizedArchitecture carch = c.centralized;
    carch.pilot_length = c.system.pilot_length;
    CentralizedTrainResult cr = centralized_train(init_centralized_model(carch, c.seed), dataset, c.train);
    save_centralized_checkpoint(cr.model, c.out / "centralized_checkpoint.json");
    write_file(c.out / "centralized_train_log.csv", cr.log.to_csv());
    json cl = json::parse(cr.ledger.to_json());
    cl["config_digest"] = c.digest();
    write_file(c.out / "centralized_exchange_ledger.json", cl.dump(2));
    std::cout << "centralized: " << cr.log.rounds.size() << " rounds, final loss " << cr.log.rounds.back().loss
              << "\n";
  }
  return 0;
}

// evaluate

int cmd_evaluate(const ExperimentConfig& c, const std::string& checkpoint, const std::string& central_checkpoint,
                 const std::string& data_dir) {
  if (checkpoint.empty()) throw std::runtime_error("evaluate: --checkpoint is required");
  if (!fs::exists(checkpoint)) throw std::runtime_error("evaluate: checkpoint not found: " + checkpoint);
  const GnnModel model = load_checkpoint(checkpoint);
  std::optional<CentralizedGnnModel> central;
  if (!central_checkpoint.empty()) {
    if (!fs::exists(central_checkpoint)) {
      throw std::runtime_error("evaluate: centralized checkpoint not found: " + central_checkpoint);
    }
    central = load_centralized_checkpoint(central_checkpoint);
  }
  const fs::path data = data_dir.empty() ? c.out / "test" : fs::path(data_dir);
  const auto named = cli::load_instance_dir(data);
  ensure_dir(c.out);

  struct Acc {
    double rate = 0.0, ms = 0.0;
    std::size_t count = 0;
  };
  using Key = std::tuple<std::size_t, std::size_t, std::size_t>; // M, N, K
  std::map<Key, std::map<std::string, Acc>> table;
  std::ofstream reports(c.out / "rate_reports.csv");
  reports << rate_report_csv_header() << ",config_digest\n";

  for (const auto& ni : named) {
    const Instance& inst = ni.instance;
    const Key key{inst.stats.antennas, inst.stats.ues(), inst.stats.aps()};
    auto run = [&](const std::string& method, auto&& allocate) {
      const auto t0 = std::chrono::steady_clock::now();
      const Tensor p = allocate();
      const double ms = ms_since(t0);
      const RateReport r = ergodic_rate(p, inst.stats); // re-validates the budget
      Acc& a = table[key][method];
      a.rate += r.sum;
      a.ms += ms;
      ++a.count;
      reports << rate_report_csv_row(ni.id, method, r) << ',' << c.digest() << '\n';
    };
    run("equal", [&] { return equal_allocation(inst.stats); });
    run("proportional", [&] { return proportional_allocation(inst.stats); });
    run("pgd", [&] {
      PgdOptions o;
      o.iterations = c.pgd_iterations;
      return projected_gradient_allocation(inst.stats, o).power;
    });
    run("distributed_gnn", [&] { return distributed_allocation(model, inst); });
    if (central) run("centralized_gnn", [&] { return centralized_predict(*central, inst.topology, inst.stats, inst.config); });
  }

  std::ofstream csv(c.out / "results.csv");
  csv << "M,N,K,method,sum_rate,pct_of_pgd,inference_ms,config_digest\n";
  csv << std::setprecision(10);
  for (const auto& [key, methods] : table) {
    const auto& pgd = methods.at("pgd");
    const double pgd_rate = pgd.rate / static_cast<double>(pgd.count);
    for (const auto& [method, a] : methods) {
      const double rate = a.rate / static_cast<double>(a.count);
      csv << std::get<0>(key) << ',' << std::get<1>(key) << ',' << std::get<2>(key) << ',' << method << ',' << rate
          << ',' << 100.0 * rate / pgd_rate << ',' << a.ms / static_cast<double>(a.count) << ',' << c.digest()
          << '\n';
    }
  }
  std::cout << "evaluated " << named.size() << " instances over " << table.size() << " settings -> "
            << (c.out / "results.csv").string() << "\n";
  return 0;
}

// verify-rate

int cmd_verify_rate(const ExperimentConfig& c) {
  Rng rng(c.seed);
  std::uniform_int_distribution<std::size_t> k_dist(1, 3), n_dist(1, 3), m_dist(1, 2);
  json cases = json::array();
  bool ok = true;
  double worst = 0.0;

  auto check = [&](const std::string& label, const Instance& inst, const Tensor& power) {
    Rng mc_rng(rng());
    const SinrTerms cf = closed_form_terms(power, inst.stats);
    const MonteCarloTerms mc =
        monte_carlo_sinr_terms(power, inst.topology, inst.config, c.verify_samples, mc_rng);
    json terms = json::object();
    auto term = [&](const char* name, const std::vector<double>& exact, const std::vector<double>& est,
                    const std::vector<double>& se) {
      json per_ue = json::array();
      for (std::size_t n = 0; n < exact.size(); ++n) {
        const double err = exact[n] == 0.0 ? std::abs(est[n]) : std::abs(est[n] - exact[n]) / std::abs(exact[n]);
        worst = std::max(worst, err);
        if (!(err < c.verify_tolerance)) ok = false;
        per_ue.push_back({{"closed_form", exact[n]},
                          {"monte_carlo", est[n]},
                          {"relative_error", err},
                          {"ci95_radius", 1.96 * se[n]}});
      }
      terms[name] = per_ue;
    };
    term("desired_mean", cf.desired_mean, mc.mean.desired_mean, mc.standard_error.desired_mean);
    term("gain_variance", cf.gain_variance, mc.mean.gain_variance, mc.standard_error.gain_variance);
    term("contamination", cf.contamination, mc.mean.contamination, mc.standard_error.contamination);
    term("interference", cf.interference, mc.mean.interference, mc.standard_error.interference);
    term("noise", cf.noise, mc.mean.noise, mc.standard_error.noise);
    cases.push_back({{"case", label},
                     {"K", inst.stats.aps()},
                     {"N", inst.stats.ues()},
                     {"M", inst.stats.antennas},
                     {"samples", mc.samples},
                     {"terms", terms}});
  };

  for (std::size_t i = 0; i < c.verify_instances; ++i) {
    SystemConfig sc = c.system;
    sc.aps = k_dist(rng);
    sc.ues = n_dist(rng);
    sc.antennas = m_dist(rng);
    sc.seed = rng();
    const Instance inst = make_instance(sc);
    check("random_" + std::to_string(i), inst, random_allocation(inst.stats, rng));
  }
  {
    SystemConfig sc = c.system;
    sc.aps = 3;
    sc.ues = 2;
    sc.antennas = 2;
    sc.seed = rng();
    const Instance inst = make_instance(sc);
    check("zero_power", inst, Tensor::matrix(3, 2));
  }

  ensure_dir(c.out);
  json report{{"config_digest", c.digest()},
              {"tolerance", c.verify_tolerance},
              {"samples", c.verify_samples},
              {"worst_relative_error", worst},
              {"pass", ok},
              {"cases", cases}};
  write_file(c.out / "verify_rate.json", report.dump(2));
  std::cout << "verify-rate: worst relative error " << worst << " (tolerance " << c.verify_tolerance << ") -> "
            << (ok ? "PASS" : "FAIL") << "\n";
  return ok ? 0 : 2;
}

// exchange-report

int cmd_exchange_report(const ExperimentConfig& c) {
  std::ostringstream csv;
  csv << "scheme,phase,K,N,param_count,uplink,uplink_formula,uplink_literal,downlink,downlink_formula,match,"
         "config_digest\n";
  bool all_match = true;
  GnnArchitecture arch;
  arch.pilot_length = c.system.pilot_length;
  CentralizedArchitecture carch = c.centralized;
  carch.pilot_length = c.system.pilot_length;
  TrainConfig one = c.train;
  one.max_rounds = 1;
  one.batch_size = 1;
  one.min_rounds = 1;

  std::cout << std::left << std::setw(12) << "scheme" << std::setw(10) << "phase" << std::setw(5) << "K"
            << std::setw(5) << "N" << std::setw(12) << "uplink" << std::setw(12) << "formula" << std::setw(12)
            << "downlink" << std::setw(12) << "formula" << "\n";
  auto row = [&](const std::string& scheme, const std::string& phase, std::size_t k, std::size_t n,
                 std::size_t params, std::uint64_t up, std::uint64_t up_f, std::uint64_t lit, std::uint64_t down,
                 std::uint64_t down_f) {
    const bool match = up == up_f && down == down_f;
    all_match = all_match && match;
    csv << scheme << ',' << phase << ',' << k << ',' << n << ',' << params << ',' << up << ',' << up_f << ','
        << lit << ',' << down << ',' << down_f << ',' << (match ? "yes" : "no") << ',' << c.digest() << '\n';
    std::cout << std::left << std::setw(12) << scheme << std::setw(10) << phase << std::setw(5) << k
              << std::setw(5) << n << std::setw(12) << up << std::setw(12) << up_f << std::setw(12) << down
              << std::setw(12) << down_f << "\n";
  };

  for (std::size_t k : c.test_grid.aps)
    for (std::size_t n : c.test_grid.ues) {
      SystemConfig sc = c.system;
      sc.aps = k;
      sc.ues = n;
      sc.antennas = c.test_grid.antennas.front();
      sc.seed = cli::instance_seed(c.seed, 2, k, n, sc.antennas, 0);
      const std::vector<Instance> data{make_instance(sc)};

      const TrainResult r = train(init_model(arch, c.seed), data, one);
      const std::uint64_t psi = r.model.parameter_count();
      row("distributed", "training", k, n, psi, r.ledger.uplink, k * (n * n + n), r.ledger.uplink_literal,
          r.ledger.downlink, k * psi);
      const ExchangeLedger op = operating_ledger(data);
      row("distributed", "operating", k, n, psi, op.uplink, 0, op.uplink_literal, op.downlink, 0);
      const CentralizedTrainResult cr = centralized_train(init_centralized_model(carch, c.seed), data, one);
      row("centralized", "training", k, n, cr.model.parameter_count(), cr.ledger.uplink, k * n,
          cr.ledger.uplink_literal, cr.ledger.downlink, k * n);
    }
  ensure_dir(c.out);
  write_file(c.out / "exchange_report.csv", csv.str());
  std::cout << (all_match ? "all counts match the closed-form expressions\n" : "MISMATCH against closed form\n");
  return all_match ? 0 : 2;
}

// bench-runtime

int cmd_bench_runtime(const ExperimentConfig& c, const std::string& checkpoint) {
  GnnArchitecture arch;
  arch.pilot_length = c.system.pilot_length;
  const GnnModel model = checkpoint.empty() ? init_model(arch, c.seed) : load_checkpoint(checkpoint);
  CentralizedArchitecture carch = c.centralized;
  carch.pilot_length = c.system.pilot_length;
  const CentralizedGnnModel central = init_centralized_model(carch, c.seed);

  std::ostringstream csv;
  csv << "K,N,M,method,median_ms,config_digest\n" << std::setprecision(8);
  const std::size_t reps = c.bench_repetitions;
  for (std::size_t m : c.bench_grid.antennas)
    for (std::size_t n : c.bench_grid.ues)
      for (std::size_t k : c.bench_grid.aps) {
        SystemConfig sc = c.system;
        sc.aps = k;
        sc.ues = n;
        sc.antennas = m;
        sc.seed = cli::instance_seed(c.seed, 3, k, n, m, 0);
        const Instance inst = make_instance(sc);
        double sink = 0.0;
        std::size_t ap = 0;
        const double per_ap = median_ms(reps, [&] {
          const LocalCsi csi = local_csi(ap++ % k, inst.topology, inst.stats, inst.config);
          sink += predict_power(model, csi)[0];
        });
        const double whole = median_ms(reps, [&] {
          sink += centralized_predict(central, inst.topology, inst.stats, inst.config)[0];
        });
        const double eq = median_ms(reps, [&] { sink += equal_allocation(inst.stats)[0]; });
        const double prop = median_ms(reps, [&] { sink += proportional_allocation(inst.stats)[0]; });
        PgdOptions o;
        o.iterations = c.pgd_iterations;
        const double pgd = median_ms(std::max<std::size_t>(reps / 20, 3),
                                     [&] { sink += projected_gradient_allocation(inst.stats, o).power[0]; });
        for (const auto& [method, t] : std::initializer_list<std::pair<const char*, double>>{
                 {"distributed_gnn_per_ap", per_ap},
                 {"centralized_gnn", whole},
                 {"equal", eq},
                 {"proportional", prop},
                 {"pgd", pgd}}) {
          csv << k << ',' << n << ',' << m << ',' << method << ',' << t << ',' << c.digest() << '\n';
        }
        std::cout << "K=" << k << " N=" << n << " M=" << m << "  per-AP gnn " << per_ap << " ms, centralized "
                  << whole << " ms, equal " << eq << " ms, proportional " << prop << " ms, pgd " << pgd << " ms"
                  << "\n";
        volatile double keep = sink;
        (void)keep;
      }
  ensure_dir(c.out);
  write_file(c.out / "runtime.csv", csv.str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Distributed GNN power control for cell-free massive MIMO"};
  app.require_subcommand(1);
  CommonFlags flags;
  auto add_common = [&flags](CLI::App* sub) {
    sub->add_option("--config", flags.config, "Experiment config (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--seed", flags.seed, "Master seed (overrides the config file)");
    sub->add_option("--out", flags.out, "Output directory (overrides the config file)");
  };

  auto* gen = app.add_subcommand("gen-data", "Write seeded train/test instance files");
  add_common(gen);

  std::string data_dir;
  bool with_centralized = false;
  auto* tr = app.add_subcommand("train", "Train the distributed model (optionally the centralized one)");
  add_common(tr);
  tr->add_option("--data", data_dir, "Directory of training instances (default <out>/train)");
  tr->add_flag("--centralized", with_centralized, "Also train the centralized comparison model");

  std::string checkpoint, central_checkpoint;
  auto* ev = app.add_subcommand("evaluate", "Compare allocators on test instances");
  add_common(ev);
  ev->add_option("--checkpoint", checkpoint, "Distributed model checkpoint")->required();
  ev->add_option("--centralized-checkpoint", central_checkpoint, "Centralized model checkpoint");
  ev->add_option("--data", data_dir, "Directory of test instances (default <out>/test)");

  auto* vr = app.add_subcommand("verify-rate", "Check the closed-form rate terms against Monte-Carlo sampling");
  add_common(vr);
  auto* ex = app.add_subcommand("exchange-report", "Measured vs closed-form AP/CPU exchange counts");
  add_common(ex);
  auto* br = app.add_subcommand("bench-runtime", "Inference and allocator timings over the bench grid");
  add_common(br);
  br->add_option("--checkpoint", checkpoint, "Distributed model checkpoint (default: freshly initialized)");

  CLI11_PARSE(app, argc, argv);

  try {
    const ExperimentConfig c = resolve(flags);
    if (*gen) return cmd_gen_data(c);
    if (*tr) return cmd_train(c, data_dir, with_centralized);
    if (*ev) return cmd_evaluate(c, checkpoint, central_checkpoint, data_dir);
    if (*vr) return cmd_verify_rate(c);
    if (*ex) return cmd_exchange_report(c);
    if (*br) return cmd_bench_runtime(c, checkpoint);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
