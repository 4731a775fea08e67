#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "linrl/config.hpp"
#include "linrl/design.hpp"
#include "linrl/harness.hpp"
#include "linrl/io.hpp"
#include "linrl/posterior_check.hpp"

namespace {

using linrl::ConfigError;
using nlohmann::json;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

json load_config_document(const std::string& path,
                          const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  for (const std::string& o : overrides) linrl::apply_override(doc, o);
  return doc;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string short_hash(const json& doc) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a(doc.dump())));
  return std::string(buf).substr(0, 8);
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::size_t pos = 0;
  while (pos < text.size()) {
    auto comma = text.find(',', pos);
    std::string part = text.substr(pos, comma == std::string::npos ? comma : comma - pos);
    auto dash = part.find('-');
    if (dash == std::string::npos) dash = part.find("..");
    if (dash != std::string::npos && dash > 0) {
      const std::uint64_t lo = std::stoull(part.substr(0, dash));
      const std::uint64_t hi =
          std::stoull(part.substr(part[dash] == '.' ? dash + 2 : dash + 1));
      for (std::uint64_t s = lo; s <= hi; ++s) seeds.push_back(s);
    } else {
      seeds.push_back(std::stoull(part));
    }
    if (comma == std::string::npos) break;
    pos = comma + 1;
  }
  if (seeds.empty()) throw ConfigError("empty seed list");
  return seeds;
}

void write_run_artifacts(const linrl::ExperimentConfig& cfg, const linrl::RunResult& run,
                         const std::string& out_dir, const std::string& stem) {
  std::filesystem::create_directories(out_dir);
  const std::string base = out_dir + "/" + stem;
  linrl::write_episode_csv(base + ".csv", run.records);
  std::ofstream summary(base + "_summary.json", std::ios::binary);
  summary << linrl::summary_json(cfg, run).dump(2) << "\n";
}

int run_single(const json& doc, const std::string& out_dir, std::uint64_t seed,
               const std::string& stem) {
  json with_seed = doc;
  with_seed["seed"] = seed;
  const linrl::ExperimentConfig cfg = linrl::config_from_json(with_seed);
  const linrl::RunResult run = linrl::run_experiment(cfg);
  write_run_artifacts(cfg, run, out_dir, stem);
  if (!run.completed) {
    std::cerr << "run aborted after " << run.records.size()
              << " episodes: " << run.error << "\n";
    return kExitRuntime;
  }
  return kExitOk;
}

int cmd_run(const std::string& config_path, const std::string& out_dir,
            std::uint64_t seed, const std::vector<std::string>& overrides) {
  const json doc = load_config_document(config_path, overrides);
  const linrl::ExperimentConfig cfg = linrl::config_from_json(doc);  // validate early
  const std::string stem = cfg.label + "_seed" + std::to_string(seed);
  const int rc = run_single(doc, out_dir, seed, stem);
  if (rc == kExitOk)
    std::cout << "wrote " << out_dir << "/" << stem << ".csv\n";
  return rc;
}

struct SweepJob {
  json doc;
  std::uint64_t seed;
  std::string stem;
};

int cmd_sweep(const std::string& config_path, const std::string& out_dir,
              const std::string& seed_text, int jobs,
              const std::vector<std::string>& overrides,
              std::vector<std::string> grid_specs) {
  const json base = load_config_document(config_path, overrides);
  const linrl::ExperimentConfig base_cfg = linrl::config_from_json(base);

  if (grid_specs.empty()) {
    if (base_cfg.actor != "none") grid_specs.push_back("eta=0.1,1,10,100");
    grid_specs.push_back("zeta_inv=1e-2,1e-3,1e-4,1e-5");
    grid_specs.push_back("critic_lr=1e-2,1e-3,1e-4,1e-5");
  }

  std::vector<json> grid{base};
  for (const std::string& spec : grid_specs) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos) throw ConfigError("bad grid spec: " + spec);
    const std::string key = spec.substr(0, eq);
    std::vector<std::string> values;
    std::string rest = spec.substr(eq + 1);
    std::size_t pos = 0;
    while (pos <= rest.size()) {
      auto comma = rest.find(',', pos);
      values.push_back(rest.substr(pos, comma == std::string::npos ? comma : comma - pos));
      if (comma == std::string::npos) break;
      pos = comma + 1;
    }
    std::vector<json> next;
    for (const json& doc : grid) {
      for (const std::string& v : values) {
        json expanded = doc;
        linrl::apply_override(expanded, key + "=" + v);
        next.push_back(std::move(expanded));
      }
    }
    grid = std::move(next);
  }

  const std::vector<std::uint64_t> seeds = parse_seeds(seed_text);
  if (linrl::deterministic_mode()) jobs = 1;
  if (jobs < 1) jobs = 1;

  std::vector<SweepJob> pending;
  for (const json& doc : grid) {
    const std::string hash = short_hash(doc);
    for (std::uint64_t seed : seeds) {
      const linrl::ExperimentConfig cfg = linrl::config_from_json(doc);
      const std::string stem =
          cfg.label + "_" + hash + "_seed" + std::to_string(seed);
      if (std::filesystem::exists(out_dir + "/" + stem + ".csv")) continue;  // write-once
      pending.push_back({doc, seed, stem});
    }
  }

  std::cout << "sweep: " << grid.size() << " configs x " << seeds.size()
            << " seeds, " << pending.size() << " runs to do\n";
  int failures = 0;
  std::size_t next = 0;
  while (next < pending.size()) {
    std::vector<std::future<int>> batch;
    for (int j = 0; j < jobs && next < pending.size(); ++j, ++next) {
      const SweepJob& job = pending[next];
      batch.push_back(std::async(std::launch::async, [job, &out_dir]() {
        return run_single(job.doc, out_dir, job.seed, job.stem);
      }));
    }
    for (auto& f : batch)
      if (f.get() != kExitOk) ++failures;
  }
  if (failures > 0) {
    std::cerr << failures << " runs failed\n";
    return kExitRuntime;
  }
  return kExitOk;
}

int cmd_design(const std::string& config_path, const std::string& out_file,
               const std::vector<std::string>& overrides) {
  const json doc = load_config_document(config_path, overrides);
  const linrl::ExperimentConfig cfg = linrl::config_from_json(doc);
  const linrl::LinearMdp mdp = linrl::build_environment(cfg.mdp);
  const Eigen::MatrixXd features = linrl::build_actor_features(cfg, mdp);
  const linrl::Coreset coreset =
      linrl::greedy_g_design(features, cfg.design_epsilon, cfg.design_cap);
  const linrl::KwReference kw = linrl::kw_reference(static_cast<int>(features.cols()));

  json j;
  j["points"] = coreset.points;
  j["weights"] = std::vector<double>(coreset.weights.data(),
                                     coreset.weights.data() + coreset.weights.size());
  j["achieved_score"] = coreset.achieved_score;
  j["full_scan_score"] = linrl::coverage_score(coreset, features);
  j["terminated_by_threshold"] = coreset.terminated_by_threshold;
  j["cap_hit"] = coreset.cap_hit;
  j["size"] = coreset.points.size();
  j["kw_design_norm_bound"] = kw.design_norm_bound;
  j["kw_size_bound"] = kw.size_bound;
  std::ofstream out(out_file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + out_file);
  out << j.dump(2) << "\n";
  std::cout << "coreset size " << coreset.points.size() << ", score "
            << coreset.achieved_score << ", wrote " << out_file << "\n";
  return kExitOk;
}

int cmd_validate_posterior(int chains, std::uint64_t seed, double perturb_alpha,
                           bool noise_off) {
  linrl::PosteriorCheckOptions opts;
  opts.chains = chains;
  opts.seed = seed;
  opts.alpha_perturb = perturb_alpha;
  opts.noise = !noise_off;
  const linrl::PosteriorCheckReport report = linrl::run_posterior_check(opts);
  std::printf("%-10s %14s %14s %10s %8s  %s\n", "entry", "observed", "expected", "se",
              "z", "status");
  for (const auto& e : report.entries) {
    std::printf("%-10s %14.8f %14.8f %10.3e %8.3f  %s\n", e.name.c_str(), e.observed,
                e.expected, e.se, e.z, e.pass ? "ok" : "FAIL");
  }
  std::printf("%s (chains=%d, zeta_inv=%g, threshold=4 se)\n",
              report.pass ? "PASS" : "FAIL", report.chains, report.zeta_inv);
  return report.pass ? kExitOk : kExitRuntime;
}

int cmd_plot_data(const std::string& in_dir, const std::string& out_file,
                  const std::string& metric) {
  const std::vector<linrl::CurveRow> rows = linrl::aggregate_curves(in_dir, metric);
  linrl::write_curves_csv(out_file, rows);
  std::cout << "wrote " << rows.size() << " rows to " << out_file << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"linrl: optimistic actor-critic experiments on linear MDPs"};
  app.require_subcommand(1);

  std::string config_path, out_dir = "out", out_file, in_dir, metric = "exact_value";
  std::string seed_text = "0";
  std::uint64_t seed = 0;
  int jobs = 1, chains = 5000;
  double perturb_alpha = 1.0;
  bool noise_off = false;
  std::vector<std::string> overrides, grid_specs;

  CLI::App* run = app.add_subcommand("run", "run one experiment");
  run->add_option("--config", config_path)->required();
  run->add_option("--out", out_dir);
  run->add_option("--seed", seed);
  run->add_option("--set", overrides);

  CLI::App* sweep = app.add_subcommand("sweep", "fan out runs over seeds and a grid");
  sweep->add_option("--config", config_path)->required();
  sweep->add_option("--out", out_dir);
  sweep->add_option("--seeds", seed_text);
  sweep->add_option("--jobs", jobs);
  sweep->add_option("--set", overrides);
  sweep->add_option("--grid", grid_specs);

  CLI::App* design = app.add_subcommand("design", "build and emit a coreset");
  design->add_option("--config", config_path)->required();
  design->add_option("--out", out_file)->required();
  design->add_option("--set", overrides);

  CLI::App* vp = app.add_subcommand("validate-posterior",
                                    "statistical check of the chain law");
  vp->add_option("--chains", chains);
  vp->add_option("--seed", seed);
  vp->add_option("--perturb-alpha", perturb_alpha);
  vp->add_flag("--noise-off", noise_off);

  CLI::App* plot = app.add_subcommand("plot-data", "aggregate seed curves");
  plot->add_option("--in", in_dir)->required();
  plot->add_option("--out", out_file)->required();
  plot->add_option("--metric", metric);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (run->parsed()) return cmd_run(config_path, out_dir, seed, overrides);
    if (sweep->parsed())
      return cmd_sweep(config_path, out_dir, seed_text, jobs, overrides, grid_specs);
    if (design->parsed()) return cmd_design(config_path, out_file, overrides);
    if (vp->parsed())
      return cmd_validate_posterior(chains, seed, perturb_alpha, noise_off);
    if (plot->parsed()) return cmd_plot_data(in_dir, out_file, metric);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitConfig;
}
