#include <catch2/catch_amalgamated.hpp>

#include "linrl/config.hpp"
#include <filesystem>

#include "linrl/harness.hpp"
#include "test_support.hpp"

using namespace linrl;
using namespace linrl_test;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.mdp.kind = "random_mdp";
  cfg.mdp.env_seed = 0;
  cfg.mdp.d_c = 10;
  cfg.mdp.horizon = 5;
  cfg.mode = "off_policy";
  cfg.episodes = 6;
  cfg.actor = "npg_explicit";
  cfg.actor_cfg.eta = 1.0;
  cfg.critic_cfg.zeta_inv = 1e-3;
  cfg.critic_cfg.lr = 1e-2;
  cfg.critic_cfg.steps = 30;
  cfg.critic_cfg.chains = 3;
  cfg.seed = 1;
  return cfg;
}

}  // namespace

TEST_CASE("a single episode evaluates the uniform initial policy", "[harness]") {
  ExperimentConfig cfg = small_config();
  cfg.episodes = 1;
  const RunResult run = run_experiment(cfg);
  REQUIRE(run.completed);
  REQUIRE(run.records.size() == 1);

  const LinearMdp mdp = build_environment(cfg.mdp);
  const double uniform_value =
      exact_policy_value(mdp, uniform_policy(mdp)).v[0][mdp.initial_state];
  REQUIRE(run.records[0].exact_value == Catch::Approx(uniform_value).margin(1e-12));
  REQUIRE(run.records[0].mixture_value == Catch::Approx(uniform_value).margin(1e-12));
}

TEST_CASE("replay mode grows the dataset by one trajectory per episode", "[harness]") {
  ExperimentConfig cfg = small_config();
  cfg.episodes = 5;
  const RunResult run = run_experiment(cfg);
  REQUIRE(run.records.size() == 5);
  for (int t = 0; t < 5; ++t) REQUIRE(run.records[t].dataset_size == t + 1);

  cfg.mode = "on_policy";
  cfg.batch_size = 3;
  const RunResult fresh = run_experiment(cfg);
  for (const EpisodeRecord& rec : fresh.records) REQUIRE(rec.dataset_size == 3);
}

TEST_CASE("regret metrics satisfy their defining identities", "[harness]") {
  std::vector<EpisodeRecord> records(4);
  for (int i = 0; i < 4; ++i) records[i].exact_value = 2.0;  // constant gap of 1
  const RegretSummary reg = regret_metrics(records, 3.0);
  REQUIRE(reg.cum_regret == Catch::Approx(4.0));
  REQUIRE(reg.optimality_gap == Catch::Approx(reg.cum_regret / 4.0).margin(1e-12));
  REQUIRE(reg.mixture_value == Catch::Approx(2.0));

  for (auto& rec : records) rec.exact_value = 3.0;  // every policy optimal
  REQUIRE(regret_metrics(records, 3.0).cum_regret == Catch::Approx(0.0));
  REQUIRE_THROWS_AS(regret_metrics({}, 1.0), std::invalid_argument);
}

TEST_CASE("value difference residual stays at solver precision", "[harness]") {
  RandomStream gen(3);
  LinearMdp mdp = random_tabular_mdp(gen, 5, 3, 4);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    ProbTable pi = random_policy(gen, mdp);
    ProbTable pi_prime = random_policy(gen, mdp);
    std::vector<MatrixXd> q(mdp.horizon, MatrixXd(mdp.state_count, mdp.action_count));
    for (int h = 0; h < mdp.horizon; ++h)
      for (int s = 0; s < mdp.state_count; ++s)
        for (int a = 0; a < mdp.action_count; ++a)
          q[h](s, a) = mdp.horizon * gen.uniform();
    worst = std::max(worst, value_difference_check(mdp, pi, pi_prime, q));
    // The same-policy case reduces to telescoped backup residuals.
    worst = std::max(worst, value_difference_check(mdp, pi, pi, q));
  }
  REQUIRE(worst <= 1e-9);
}

TEST_CASE("identical configurations reproduce identical runs", "[harness]") {
  const ExperimentConfig cfg = small_config();
  const RunResult a = run_experiment(cfg);
  const RunResult b = run_experiment(cfg);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    REQUIRE(a.records[i].exact_value == b.records[i].exact_value);
    REQUIRE(a.records[i].optimism_violation_rate == b.records[i].optimism_violation_rate);
    REQUIRE(a.records[i].proj_err_max == b.records[i].proj_err_max);
  }
}

TEST_CASE("per-episode optimality gap splits into actor and critic terms", "[harness]") {
  ExperimentConfig cfg = small_config();
  cfg.episodes = 8;
  const RunResult run = run_experiment(cfg);
  REQUIRE(run.completed);
  for (const EpisodeRecord& rec : run.records)
    REQUIRE(rec.decomposition_residual <= 1e-8);
}

TEST_CASE("storage counters follow the two policy representations", "[harness]") {
  ExperimentConfig cfg = small_config();
  cfg.episodes = 4;
  const RunResult explicit_run = run_experiment(cfg);
  const LinearMdp mdp = build_environment(cfg.mdp);
  REQUIRE(explicit_run.explicit_param_count ==
          static_cast<std::int64_t>(mdp.horizon) * mdp.critic_dim);

  cfg.actor = "npg_implicit";
  const RunResult implicit_run = run_experiment(cfg);
  REQUIRE(implicit_run.implicit_param_count ==
          static_cast<std::int64_t>(cfg.episodes) * mdp.horizon * mdp.critic_dim *
              cfg.critic_cfg.chains);
}

TEST_CASE("value-based variant runs greedily without an actor", "[harness]") {
  ExperimentConfig cfg = small_config();
  cfg.actor = "none";
  cfg.episodes = 4;
  const RunResult run = run_experiment(cfg);
  REQUIRE(run.completed);
  REQUIRE(run.records.size() == 4);
  REQUIRE(run.explicit_param_count == 0);

  cfg.critic = "ridge_greedy";
  cfg.critic_cfg.exact_ridge = true;
  const RunResult ridge = run_experiment(cfg);
  REQUIRE(ridge.completed);
}

TEST_CASE("spma variant honors its step size limit end to end", "[harness]") {
  ExperimentConfig cfg = small_config();
  cfg.actor = "spma_explicit";
  cfg.actor_cfg.variant = ActorVariant::kSpma;
  cfg.actor_cfg.eta = 1.0;  // above 1/(2H) for H = 5
  REQUIRE_THROWS_AS(cfg.validate(), ConfigError);

  cfg.actor_cfg.eta = 0.05;
  const RunResult run = run_experiment(cfg);
  REQUIRE(run.completed);
  for (const EpisodeRecord& rec : run.records) REQUIRE(std::isfinite(rec.proj_err_max));
}

TEST_CASE("explicit and implicit updates agree on realizable features", "[harness]") {
  ExperimentConfig cfg = small_config();
  cfg.actor_features = "one_hot";
  cfg.design_epsilon = 0.9;
  cfg.design_cap = 1.0;
  cfg.episodes = 10;
  const auto records = npg_agreement_run(cfg);
  REQUIRE(records.size() == 10);
  std::int64_t prev_implicit = 0;
  for (const AgreementRecord& rec : records) {
    REQUIRE(rec.max_prob_diff <= 1e-6);
    REQUIRE(rec.proj_err_max <= 1e-6);
    REQUIRE(rec.implicit_params > prev_implicit);
    prev_implicit = rec.implicit_params;
  }
}

TEST_CASE("projection error obeys the coverage bound off realizability", "[harness]") {
  ExperimentConfig cfg = small_config();
  cfg.actor_features = "projected";
  cfg.actor_dim = 4;
  cfg.design_epsilon = 0.9;
  cfg.design_cap = 1.0;
  cfg.episodes = 10;
  const RunResult run = run_experiment(cfg);
  REQUIRE(run.completed);
  for (const EpisodeRecord& rec : run.records) {
    const double bound = 2.0 * (run.phi_bar + 1.0) * std::sqrt(rec.eps_bias_pointwise) +
                         2.0 * std::sqrt(rec.eps_opt);
    REQUIRE(std::abs(rec.proj_err_max) <= bound + 1e-12);
  }
}

TEST_CASE("config json round trips through the echo", "[harness]") {
  ExperimentConfig cfg = small_config();
  cfg.label = "roundtrip";
  const nlohmann::json echo = config_to_json(cfg);
  const ExperimentConfig back = config_from_json(echo);
  REQUIRE(config_to_json(back) == echo);
}

TEST_CASE("config parsing rejects unknown keys and bad values", "[harness]") {
  nlohmann::json doc = config_to_json(small_config());
  doc["not_a_key"] = 1;
  REQUIRE_THROWS_AS(config_from_json(doc), ConfigError);

  nlohmann::json bad_mode = config_to_json(small_config());
  bad_mode["mode"] = "sideways";
  REQUIRE_THROWS_AS(config_from_json(bad_mode), ConfigError);

  nlohmann::json bad_batch = config_to_json(small_config());
  bad_batch["mode"] = "on_policy";
  bad_batch["batch_size"] = 0;
  REQUIRE_THROWS_AS(config_from_json(bad_batch), ConfigError);

  nlohmann::json lr = config_to_json(small_config());
  lr["critic_lr"] = "auto";
  REQUIRE_FALSE(config_from_json(lr).critic_cfg.lr.has_value());
  lr["critic_lr"] = "fast";
  REQUIRE_THROWS_AS(config_from_json(lr), ConfigError);
}

TEST_CASE("dotted overrides reach nested keys", "[harness]") {
  nlohmann::json doc = config_to_json(small_config());
  apply_override(doc, "mdp.horizon=7");
  apply_override(doc, "eta=2.5");
  apply_override(doc, "label=patched");
  const ExperimentConfig cfg = config_from_json(doc);
  REQUIRE(cfg.mdp.horizon == 7);
  REQUIRE(cfg.actor_cfg.eta == Catch::Approx(2.5));
  REQUIRE(cfg.label == "patched");
  REQUIRE_THROWS_AS(apply_override(doc, "novalue"), ConfigError);
}

TEST_CASE("environments load back from serialized files", "[harness]") {
  const LinearMdp mdp = make_random_mdp(4, 10, 5);
  const std::string path =
      (std::filesystem::temp_directory_path() / "linrl_env.json").string();
  save_mdp(mdp, path);

  ExperimentConfig cfg = small_config();
  cfg.mdp.kind = "file";
  cfg.mdp.path = path;
  cfg.episodes = 2;
  const RunResult run = run_experiment(cfg);
  REQUIRE(run.completed);

  // Same environment through the factory gives the same first-episode value.
  ExperimentConfig direct = small_config();
  direct.mdp.env_seed = 4;
  direct.episodes = 2;
  const RunResult base = run_experiment(direct);
  REQUIRE(run.records[0].exact_value ==
          Catch::Approx(base.records[0].exact_value).margin(1e-12));
}

TEST_CASE("runtime failures abort with partial records", "[harness]") {
  ExperimentConfig cfg = small_config();
  cfg.actor_cfg.solver = ActorSolverKind::kGradientDescent;
  cfg.actor_cfg.lr = 1e6;  // far above 1/L
  const RunResult run = run_experiment(cfg);
  REQUIRE_FALSE(run.completed);
  REQUIRE_FALSE(run.error.empty());
  REQUIRE(run.records.empty());  // first episode aborts before recording
}
