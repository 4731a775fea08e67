#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "linrl/harness.hpp"

namespace linrl {

// Locale-independent shortest round-trip formatting.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

// LINRL_DETERMINISTIC=1 canonicalizes outputs: wall-clock columns are zeroed
// so identical (config, seed) invocations produce byte-identical files.
inline bool deterministic_mode() {
  const char* v = std::getenv("LINRL_DETERMINISTIC");
  return v != nullptr && std::string(v) == "1";
}

inline void write_episode_csv(const std::string& path,
                              const std::vector<EpisodeRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write csv: " + path);
  const bool canonical = deterministic_mode();
  out << "episode,exact_value,mixture_value,cum_regret,optimism_violation_rate,"
         "proj_err_max,wall_ms\n";
  for (const EpisodeRecord& r : records) {
    out << r.episode << ',' << format_double(r.exact_value) << ','
        << format_double(r.mixture_value) << ',' << format_double(r.cum_regret) << ','
        << format_double(r.optimism_violation_rate) << ','
        << format_double(r.proj_err_max) << ','
        << format_double(canonical ? 0.0 : r.wall_ms) << '\n';
  }
}

inline nlohmann::json summary_json(const ExperimentConfig& cfg, const RunResult& run) {
  nlohmann::json j;
  j["config"] = config_to_json(cfg);
  j["v_star"] = run.v_star;
  j["completed"] = run.completed;
  if (!run.error.empty()) j["error"] = run.error;
  j["episodes_recorded"] = run.records.size();
  if (!run.records.empty()) {
    const RegretSummary reg = regret_metrics(run.records, run.v_star);
    j["final_exact_value"] = run.records.back().exact_value;
    j["mixture_value"] = reg.mixture_value;
    j["cum_regret"] = reg.cum_regret;
    j["optimality_gap"] = reg.optimality_gap;
    const int tail = std::min<int>(50, static_cast<int>(run.records.size()));
    double tail_sum = 0.0;
    for (int i = static_cast<int>(run.records.size()) - tail;
         i < static_cast<int>(run.records.size()); ++i)
      tail_sum += run.records[i].exact_value;
    j["last50_mean"] = tail_sum / tail;
    double wall = 0.0;
    for (const EpisodeRecord& r : run.records) wall += r.wall_ms;
    j["wall_ms_total"] = deterministic_mode() ? 0.0 : wall;
  }
  j["explicit_param_count"] = run.explicit_param_count;
  j["implicit_param_count"] = run.implicit_param_count;
  j["coreset_size"] = run.coreset_size;
  j["coreset_score"] = run.coreset_score;
  j["phi_bar"] = run.phi_bar;
  j["resolved_zeta_inv"] = run.resolved_zeta_inv;
  j["resolved_chains"] = run.resolved_chains;
  if (!run.final_theta.empty()) {
    nlohmann::json theta = nlohmann::json::array();
    for (const VectorXd& th : run.final_theta)
      theta.push_back(std::vector<double>(th.data(), th.data() + th.size()));
    j["theta"] = std::move(theta);
  }
  return j;
}

struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<double>> rows;

  int column_index(const std::string& name) const {
    for (std::size_t i = 0; i < columns.size(); ++i)
      if (columns[i] == name) return static_cast<int>(i);
    throw std::runtime_error("csv: missing column " + name);
  }
};

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read csv: " + path);
  CsvTable table;
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("csv: empty file " + path);
  std::stringstream header(line);
  std::string cell;
  while (std::getline(header, cell, ',')) table.columns.push_back(cell);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::vector<double> values;
    while (std::getline(row, cell, ',')) values.push_back(std::strtod(cell.c_str(), nullptr));
    table.rows.push_back(std::move(values));
  }
  return table;
}

struct CurveRow {
  int episode;
  std::string algorithm;
  double mean;
  bool has_ci;
  double ci95;
  int seeds;
};

// Merges per-seed run CSVs (named <label>_seed<k>.csv) into a long-format
// mean and 95% confidence-interval table per (episode, algorithm).
inline std::vector<CurveRow> aggregate_curves(const std::string& dir,
                                              const std::string& metric) {
  namespace fs = std::filesystem;
  std::map<std::string, std::vector<CsvTable>> groups;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".csv") continue;
    const std::string stem = entry.path().stem().string();
    const auto pos = stem.rfind("_seed");
    if (pos == std::string::npos) continue;
    groups[stem.substr(0, pos)].push_back(read_csv(entry.path().string()));
  }
  if (groups.empty()) throw std::runtime_error("plot-data: no run csv files in " + dir);

  std::vector<CurveRow> rows;
  for (const auto& [label, tables] : groups) {
    const int metric_col = tables.front().column_index(metric);
    const std::size_t episodes = tables.front().rows.size();
    for (const CsvTable& t : tables)
      if (t.rows.size() != episodes)
        throw std::runtime_error("plot-data: seed curves disagree on length for " + label);
    const int n = static_cast<int>(tables.size());
    for (std::size_t e = 0; e < episodes; ++e) {
      double sum = 0.0;
      for (const CsvTable& t : tables) sum += t.rows[e][metric_col];
      const double mean = sum / n;
      CurveRow row{static_cast<int>(tables.front().rows[e][0]), label, mean, false, 0.0, n};
      if (n > 1) {
        double ss = 0.0;
        for (const CsvTable& t : tables) {
          const double d = t.rows[e][metric_col] - mean;
          ss += d * d;
        }
        row.has_ci = true;
        row.ci95 = 1.96 * std::sqrt(ss / (n - 1)) / std::sqrt(static_cast<double>(n));
      }
      rows.push_back(row);
    }
  }
  return rows;
}

inline void write_curves_csv(const std::string& path, const std::vector<CurveRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write csv: " + path);
  out << "episode,algorithm,mean,ci95,seeds\n";
  for (const CurveRow& r : rows) {
    out << r.episode << ',' << r.algorithm << ',' << format_double(r.mean) << ',';
    if (r.has_ci) out << format_double(r.ci95);
    out << ',' << r.seeds << '\n';
  }
}

}  // namespace linrl
