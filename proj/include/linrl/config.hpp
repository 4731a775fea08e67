#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "linrl/actor.hpp"
#include "linrl/critic.hpp"

namespace linrl {

using nlohmann::json;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MdpSpec {
  std::string kind = "random_mdp";  // random_mdp | deep_sea | file
  std::uint64_t env_seed = 0;
  int d_c = 10;
  int horizon = 20;
  std::string features = "tile";  // tile | one_hot (random_mdp)
  int n = 10;                     // deep_sea grid size
  bool standard_rewards = false;  // deep_sea reward convention flag
  std::string path;               // file kind
};

struct ExperimentConfig {
  MdpSpec mdp;
  std::string mode = "off_policy";  // on_policy | off_policy
  int batch_size = 1;               // N, on-policy only
  int episodes = 100;               // T
  std::string actor = "npg_explicit";  // npg_explicit | npg_implicit | spma_explicit | none
  std::string actor_features = "same"; // same | one_hot | projected
  int actor_dim = 0;                   // projected actor feature dimension
  ActorConfig actor_cfg;
  std::string critic = "lmc";          // lmc | lmc_no_noise | ridge_greedy
  CriticConfig critic_cfg;
  std::string v_policy = "current";    // current | previous
  double design_epsilon = 0.5;
  double design_cap = 0.8;
  std::uint64_t seed = 0;
  double delta = 0.05;
  std::optional<double> c_delta_override;
  double eps_bar = 0.0;
  std::string label = "run";

  void validate() const;
};

namespace detail {

inline void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

template <typename T>
T get_or(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config: bad type for key '") + key + "'");
  }
}

inline std::optional<double> get_lr(const json& j, const char* key) {
  if (!j.contains(key)) return {};
  const json& v = j.at(key);
  if (v.is_string()) {
    if (v.get<std::string>() == "auto") return {};
    throw ConfigError(std::string("config: '") + key + "' must be a number or \"auto\"");
  }
  if (!v.is_number()) throw ConfigError(std::string("config: bad type for key '") + key + "'");
  return v.get<double>();
}

inline void reject_unknown(const json& j, const std::set<std::string>& known,
                           const std::string& scope) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!known.count(it.key()))
      throw ConfigError("config: unknown key '" + scope + it.key() + "'");
}

}  // namespace detail

inline void ExperimentConfig::validate() const {
  using detail::require;
  require(mdp.kind == "random_mdp" || mdp.kind == "deep_sea" || mdp.kind == "file",
          "config: mdp.kind must be random_mdp, deep_sea, or file");
  require(mdp.kind != "file" || !mdp.path.empty(), "config: mdp.path is required for kind=file");
  require(mdp.features == "tile" || mdp.features == "one_hot",
          "config: mdp.features must be tile or one_hot");
  require(mdp.d_c >= 1, "config: mdp.d_c must be >= 1");
  require(mdp.horizon >= 1, "config: mdp.horizon must be >= 1");
  require(mdp.n >= 2, "config: mdp.n must be >= 2");
  require(mode == "on_policy" || mode == "off_policy",
          "config: mode must be on_policy or off_policy");
  require(mode != "on_policy" || batch_size >= 1,
          "config: on_policy mode requires batch_size >= 1");
  require(episodes >= 1, "config: episodes must be >= 1");
  require(actor == "npg_explicit" || actor == "npg_implicit" ||
              actor == "spma_explicit" || actor == "none",
          "config: unknown actor variant");
  require(actor_features == "same" || actor_features == "one_hot" ||
              actor_features == "projected",
          "config: actor_features must be same, one_hot, or projected");
  require(actor_features != "projected" || actor_dim >= 1,
          "config: actor_features=projected requires actor_dim >= 1");
  require(critic == "lmc" || critic == "lmc_no_noise" || critic == "ridge_greedy",
          "config: unknown critic variant");
  require(v_policy == "current" || v_policy == "previous",
          "config: v_policy must be current or previous");
  require(design_epsilon > 0.0, "config: design_epsilon must be positive");
  require(design_cap > 0.0 && design_cap <= 1.0, "config: design_cap must be in (0, 1]");
  require(delta > 0.0 && delta < 1.0, "config: delta must be in (0, 1)");
  require((actor == "spma_explicit") == (actor_cfg.variant == ActorVariant::kSpma),
          "config: actor_variant must be spma exactly when actor is spma_explicit");
  try {
    if (actor != "none") {
      const int h = (mdp.kind == "deep_sea") ? mdp.n : mdp.horizon;
      actor_cfg.validate(h);
    }
    critic_cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
}

inline ExperimentConfig config_from_json(const json& j) {
  using namespace detail;
  if (!j.is_object()) throw ConfigError("config: top-level document must be an object");
  static const std::set<std::string> top_keys = {
      "mdp", "mode", "batch_size", "episodes", "actor", "actor_features", "actor_dim",
      "eta", "actor_steps", "actor_lr", "actor_solver", "actor_variant", "critic",
      "lambda", "zeta_inv", "critic_steps", "critic_lr", "num_chains", "noise",
      "theory_hyperparams", "unified_clip", "v_policy", "design_epsilon", "design_cap",
      "seed", "delta", "c_delta_override", "eps_bar", "label"};
  reject_unknown(j, top_keys, "");

  ExperimentConfig cfg;
  if (j.contains("mdp")) {
    const json& m = j.at("mdp");
    if (!m.is_object()) throw ConfigError("config: mdp must be an object");
    static const std::set<std::string> mdp_keys = {
        "kind", "env_seed", "d_c", "horizon", "features", "n", "standard_rewards", "path"};
    reject_unknown(m, mdp_keys, "mdp.");
    cfg.mdp.kind = get_or<std::string>(m, "kind", cfg.mdp.kind);
    cfg.mdp.env_seed = get_or<std::uint64_t>(m, "env_seed", cfg.mdp.env_seed);
    cfg.mdp.d_c = get_or<int>(m, "d_c", cfg.mdp.d_c);
    cfg.mdp.horizon = get_or<int>(m, "horizon", cfg.mdp.horizon);
    cfg.mdp.features = get_or<std::string>(m, "features", cfg.mdp.features);
    cfg.mdp.n = get_or<int>(m, "n", cfg.mdp.n);
    cfg.mdp.standard_rewards = get_or<bool>(m, "standard_rewards", cfg.mdp.standard_rewards);
    cfg.mdp.path = get_or<std::string>(m, "path", cfg.mdp.path);
  }
  cfg.mode = get_or<std::string>(j, "mode", cfg.mode);
  cfg.batch_size = get_or<int>(j, "batch_size", cfg.batch_size);
  cfg.episodes = get_or<int>(j, "episodes", cfg.episodes);
  cfg.actor = get_or<std::string>(j, "actor", cfg.actor);
  cfg.actor_features = get_or<std::string>(j, "actor_features", cfg.actor_features);
  cfg.actor_dim = get_or<int>(j, "actor_dim", cfg.actor_dim);

  cfg.actor_cfg.eta = get_or<double>(j, "eta", cfg.actor_cfg.eta);
  cfg.actor_cfg.steps = get_or<int>(j, "actor_steps", cfg.actor_cfg.steps);
  cfg.actor_cfg.lr = get_lr(j, "actor_lr");
  const std::string solver = get_or<std::string>(j, "actor_solver", "closed_form");
  if (solver == "closed_form") {
    cfg.actor_cfg.solver = ActorSolverKind::kClosedForm;
  } else if (solver == "gradient_descent") {
    cfg.actor_cfg.solver = ActorSolverKind::kGradientDescent;
  } else {
    throw ConfigError("config: actor_solver must be closed_form or gradient_descent");
  }
  std::string variant = get_or<std::string>(j, "actor_variant", "");
  cfg.actor = get_or<std::string>(j, "actor", cfg.actor);
  if (variant.empty()) variant = (cfg.actor == "spma_explicit") ? "spma" : "npg";
  if (variant == "npg") {
    cfg.actor_cfg.variant = ActorVariant::kNpg;
  } else if (variant == "spma") {
    cfg.actor_cfg.variant = ActorVariant::kSpma;
  } else {
    throw ConfigError("config: actor_variant must be npg or spma");
  }

  cfg.critic = get_or<std::string>(j, "critic", cfg.critic);
  cfg.critic_cfg.lambda = get_or<double>(j, "lambda", cfg.critic_cfg.lambda);
  cfg.critic_cfg.zeta_inv = get_or<double>(j, "zeta_inv", cfg.critic_cfg.zeta_inv);
  cfg.critic_cfg.steps = get_or<int>(j, "critic_steps", cfg.critic_cfg.steps);
  cfg.critic_cfg.lr = get_lr(j, "critic_lr");
  cfg.critic_cfg.chains = get_or<int>(j, "num_chains", cfg.critic_cfg.chains);
  cfg.critic_cfg.noise = get_or<bool>(j, "noise", cfg.critic_cfg.noise);
  cfg.critic_cfg.theory = get_or<bool>(j, "theory_hyperparams", cfg.critic_cfg.theory);
  cfg.critic_cfg.unified_clip = get_or<bool>(j, "unified_clip", cfg.critic_cfg.unified_clip);
  if (cfg.critic == "lmc_no_noise") cfg.critic_cfg.noise = false;
  if (cfg.critic == "ridge_greedy") cfg.critic_cfg.exact_ridge = true;

  cfg.v_policy = get_or<std::string>(j, "v_policy", cfg.v_policy);
  cfg.design_epsilon = get_or<double>(j, "design_epsilon", cfg.design_epsilon);
  cfg.design_cap = get_or<double>(j, "design_cap", cfg.design_cap);
  cfg.seed = get_or<std::uint64_t>(j, "seed", cfg.seed);
  cfg.delta = get_or<double>(j, "delta", cfg.delta);
  if (j.contains("c_delta_override"))
    cfg.c_delta_override = get_or<double>(j, "c_delta_override", 0.0);
  cfg.eps_bar = get_or<double>(j, "eps_bar", cfg.eps_bar);
  cfg.label = get_or<std::string>(j, "label", cfg.label);

  cfg.validate();
  return cfg;
}

inline json config_to_json(const ExperimentConfig& cfg) {
  json j;
  j["mdp"] = {{"kind", cfg.mdp.kind},
              {"env_seed", cfg.mdp.env_seed},
              {"d_c", cfg.mdp.d_c},
              {"horizon", cfg.mdp.horizon},
              {"features", cfg.mdp.features},
              {"n", cfg.mdp.n},
              {"standard_rewards", cfg.mdp.standard_rewards},
              {"path", cfg.mdp.path}};
  j["mode"] = cfg.mode;
  j["batch_size"] = cfg.batch_size;
  j["episodes"] = cfg.episodes;
  j["actor"] = cfg.actor;
  j["actor_features"] = cfg.actor_features;
  j["actor_dim"] = cfg.actor_dim;
  j["eta"] = cfg.actor_cfg.eta;
  j["actor_steps"] = cfg.actor_cfg.steps;
  if (cfg.actor_cfg.lr) j["actor_lr"] = *cfg.actor_cfg.lr; else j["actor_lr"] = "auto";
  j["actor_solver"] = cfg.actor_cfg.solver == ActorSolverKind::kClosedForm
                          ? "closed_form" : "gradient_descent";
  j["actor_variant"] = cfg.actor_cfg.variant == ActorVariant::kSpma ? "spma" : "npg";
  j["critic"] = cfg.critic;
  j["lambda"] = cfg.critic_cfg.lambda;
  j["zeta_inv"] = cfg.critic_cfg.zeta_inv;
  j["critic_steps"] = cfg.critic_cfg.steps;
  if (cfg.critic_cfg.lr) j["critic_lr"] = *cfg.critic_cfg.lr; else j["critic_lr"] = "auto";
  j["num_chains"] = cfg.critic_cfg.chains;
  j["noise"] = cfg.critic_cfg.noise;
  j["theory_hyperparams"] = cfg.critic_cfg.theory;
  j["unified_clip"] = cfg.critic_cfg.unified_clip;
  j["v_policy"] = cfg.v_policy;
  j["design_epsilon"] = cfg.design_epsilon;
  j["design_cap"] = cfg.design_cap;
  j["seed"] = cfg.seed;
  j["delta"] = cfg.delta;
  if (cfg.c_delta_override) j["c_delta_override"] = *cfg.c_delta_override;
  j["eps_bar"] = cfg.eps_bar;
  j["label"] = cfg.label;
  return j;
}

// Applies a dotted key=value override onto the raw JSON document. Values are
// parsed as JSON when possible and fall back to strings.
inline void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override must look like key=value: " + assignment);
  std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::exception&) {
    value = raw;  // unquoted string
  }
  json* node = &doc;
  std::size_t pos = 0;
  while (true) {
    const auto dot = key.find('.', pos);
    const std::string part = key.substr(pos, dot == std::string::npos ? dot : dot - pos);
    if (part.empty()) throw ConfigError("override has an empty key segment: " + assignment);
    if (dot == std::string::npos) {
      (*node)[part] = value;
      break;
    }
    node = &(*node)[part];
    pos = dot + 1;
  }
}

}  // namespace linrl
