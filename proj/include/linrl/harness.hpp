#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "linrl/actor.hpp"
#include "linrl/config.hpp"
#include "linrl/critic.hpp"
#include "linrl/design.hpp"
#include "linrl/linear_mdp.hpp"
#include "linrl/policy.hpp"
#include "linrl/serialize.hpp"

namespace linrl {

struct EpisodeRecord {
  int episode = 0;           // 1-based
  double exact_value = 0.0;  // V^{pi_t}_1(s_1), stored-reward scale
  double mixture_value = 0.0;
  double cum_regret = 0.0;
  double optimism_violation_rate = 0.0;
  double proj_err_max = 0.0;
  double wall_ms = 0.0;
  int dataset_size = 0;
  double decomposition_residual = 0.0;
  double eps_bias_pointwise = 0.0;
  double eps_opt = 0.0;
};

struct RunResult {
  std::vector<EpisodeRecord> records;
  double v_star = 0.0;
  bool completed = true;
  std::string error;
  std::int64_t explicit_param_count = 0;
  std::int64_t implicit_param_count = 0;
  double phi_bar = 0.0;           // sup over S x A of ||phi_a||_{G^-1}
  double coreset_score = 0.0;
  int coreset_size = 0;
  double resolved_zeta_inv = 0.0; // after theory resolution, if any
  int resolved_chains = 0;
  std::vector<VectorXd> final_theta;  // explicit actors: parameters per step
};

struct RegretSummary {
  double cum_regret = 0.0;
  double optimality_gap = 0.0;  // Reg(T) / T
  double mixture_value = 0.0;   // mean of exact values
};

inline RegretSummary regret_metrics(const std::vector<EpisodeRecord>& records,
                                    double v_star) {
  if (records.empty()) throw std::invalid_argument("regret_metrics: no records");
  RegretSummary out;
  double sum = 0.0;
  for (const EpisodeRecord& r : records) {
    out.cum_regret += v_star - r.exact_value;
    sum += r.exact_value;
  }
  const double t = static_cast<double>(records.size());
  out.optimality_gap = out.cum_regret / t;
  out.mixture_value = sum / t;
  return out;
}

inline LinearMdp build_environment(const MdpSpec& spec) {
  if (spec.kind == "random_mdp") {
    if (spec.features == "one_hot")
      return make_random_mdp_one_hot(spec.env_seed, spec.horizon);
    return make_random_mdp(spec.env_seed, spec.d_c, spec.horizon);
  }
  if (spec.kind == "deep_sea")
    return make_deep_sea(spec.n, spec.d_c, spec.standard_rewards);
  return load_mdp(spec.path);
}

inline MatrixXd build_actor_features(const ExperimentConfig& cfg, const LinearMdp& mdp) {
  if (cfg.actor_features == "one_hot")
    return one_hot_features(mdp.state_count * mdp.action_count);
  if (cfg.actor_features == "projected")
    return projected_features(mdp.state_count * mdp.action_count, cfg.actor_dim);
  return mdp.features;
}

namespace detail {

inline ProbTable greedy_prob_table(const std::vector<VectorXd>& scores, int s_count,
                                   int a_count) {
  ProbTable table(scores.size(), MatrixXd::Zero(s_count, a_count));
  for (std::size_t h = 0; h < scores.size(); ++h) {
    for (int s = 0; s < s_count; ++s) {
      int best = 0;
      double best_score = scores[h][s * a_count];
      for (int a = 1; a < a_count; ++a) {
        const double v = scores[h][s * a_count + a];
        if (v > best_score) {
          best_score = v;
          best = a;
        }
      }
      table[h](s, best) = 1.0;
    }
  }
  return table;
}

// KL(u||p) - KL(u||q) evaluated as sum_i u_i (log q_i - log p_i); entries of
// u may be zero, p and q must be strictly positive.
inline double kl_gap(const VectorXd& u, const VectorXd& p, const VectorXd& q) {
  double out = 0.0;
  for (Eigen::Index i = 0; i < u.size(); ++i)
    if (u[i] > 0.0) out += u[i] * (std::log(q[i]) - std::log(p[i]));
  return out;
}

}  // namespace detail

// Per-episode loop shared by every algorithm variant. Collect with the
// current policy (fresh batch or growing replay), run the critic backward
// pass, then update the policy: logit-matching regression for the explicit
// actors, snapshot accumulation for the implicit one, or greedy selection
// for the value-based baseline.
class ExperimentRunner {
 public:
  explicit ExperimentRunner(const ExperimentConfig& cfg)
      : cfg_(cfg), mdp_(build_environment(cfg.mdp)) {
    cfg_.validate();
    horizon_ = mdp_.horizon;
    optimal_ = optimal_values(mdp_);
    star_occupancy_ = occupancies(mdp_, optimal_.policy);

    explicit_mode_ = cfg_.actor == "npg_explicit" || cfg_.actor == "spma_explicit";
    implicit_mode_ = cfg_.actor == "npg_implicit";
    greedy_mode_ = cfg_.actor == "none" || cfg_.critic == "ridge_greedy";

    actor_features_ = build_actor_features(cfg_, mdp_);
    if (explicit_mode_) {
      coreset_ = greedy_g_design(actor_features_, cfg_.design_epsilon, cfg_.design_cap);
      if (coreset_.points.empty())
        throw std::runtime_error("run: design produced an empty coreset; lower design_epsilon");
      regression_ = ActorRegression(coreset_, actor_features_);
      const MatrixXd design_inv = coreset_.gram_design.inverse();
      for (int i = 0; i < actor_features_.rows(); ++i)
        phi_bar_ = std::max(phi_bar_, std::sqrt(actor_features_.row(i) * design_inv *
                                                actor_features_.row(i).transpose()));
      policy_ = LogLinearPolicy(actor_features_, horizon_);
    }

    critic_cfg_ = cfg_.critic_cfg;
    if (critic_cfg_.theory && !critic_cfg_.exact_ridge) {
      const int data_per_step =
          cfg_.mode == "on_policy" ? cfg_.batch_size : cfg_.episodes;
      const auto mode =
          cfg_.mode == "on_policy" ? DataMode::kOnPolicy : DataMode::kOffPolicy;
      const TheoryStatic ts = theory_static(
          horizon_, cfg_.episodes, data_per_step, cfg_.delta, mdp_.critic_dim,
          static_cast<int>(actor_features_.cols()), mode, cfg_.actor_cfg.eta,
          cfg_.eps_bar, cfg_.c_delta_override);
      critic_cfg_.zeta_inv = 1.0 / ts.zeta;
      critic_cfg_.chains = ts.chains;
    }

    if (implicit_mode_)
      implicit_ = ImplicitNpgPolicy(cfg_.actor_cfg.eta, mdp_.features, horizon_,
                                    mdp_.state_count, mdp_.action_count);

    critic_state_ = CriticState(horizon_, mdp_.critic_dim, critic_cfg_.chains,
                                mix_key(cfg_.seed, 0x637269746963ULL));
    dataset_ = CriticDataset(horizon_, mdp_.critic_dim, critic_cfg_.lambda);
    rollout_stream_ = RandomStream(mix_key(cfg_.seed, 0x726f6c6cULL));

    probs_ = uniform_policy(mdp_);
    prev_probs_ = probs_;
  }

  const LinearMdp& mdp() const { return mdp_; }
  const OptimalSolution& optimal() const { return optimal_; }
  const ProbTable& current_probs() const { return probs_; }
  const CriticConfig& resolved_critic_config() const { return critic_cfg_; }
  const Coreset& coreset() const { return coreset_; }
  double phi_bar() const { return phi_bar_; }

  EpisodeRecord step(int episode_index) {
    const auto t0 = std::chrono::steady_clock::now();
    EpisodeRecord rec;
    rec.episode = episode_index;

    const ValueTable vt = exact_policy_value(mdp_, probs_);
    rec.exact_value = vt.v[0][mdp_.initial_state];

    if (cfg_.mode == "on_policy") {
      dataset_.clear();
      for (int i = 0; i < cfg_.batch_size; ++i)
        dataset_.add(mdp_, rollout(mdp_, probs_, rollout_stream_, episode_index));
    } else {
      dataset_.add(mdp_, rollout(mdp_, probs_, rollout_stream_, episode_index));
    }
    rec.dataset_size = dataset_.trajectories();

    const ProbTable& v_probs = cfg_.v_policy == "previous" ? prev_probs_ : probs_;
    const CriticUpdateResult critic =
        critic_update(mdp_, dataset_, v_probs, critic_state_, critic_cfg_);

    auto iota = model_prediction_error(mdp_, critic.q_critic, critic.v_hat);
    int violations = 0, cells = 0;
    for (int h = 0; h < horizon_; ++h) {
      violations += (iota[h].array() > 1e-9).count();
      cells += static_cast<int>(iota[h].size());
    }
    rec.optimism_violation_rate = static_cast<double>(violations) / cells;
    rec.decomposition_residual = decomposition_residual(vt, critic, iota);

    ProbTable next_probs;
    if (greedy_mode_) {
      next_probs = detail::greedy_prob_table(critic.scores, mdp_.state_count,
                                             mdp_.action_count);
    } else if (implicit_mode_) {
      implicit_.store(make_snapshot());
      next_probs = implicit_.prob_table();
    } else {
      update_explicit_actor(critic, rec);
      next_probs = policy_.prob_table(mdp_.state_count, mdp_.action_count);
      rec.proj_err_max = projection_error_max(critic, next_probs);
    }
    prev_probs_ = probs_;
    probs_ = std::move(next_probs);

    const auto t1 = std::chrono::steady_clock::now();
    rec.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
    return rec;
  }

  // Clip rule the policy updates see: the per-step cap, by construction.
  double actor_cap(int h) const { return static_cast<double>(horizon_ - h); }

  // Current chain parameters plus the clip levels a policy update applies.
  ImplicitNpgPolicy::Snapshot make_snapshot() const {
    ImplicitNpgPolicy::Snapshot snap;
    snap.chains = critic_state_.chains;
    snap.clip_cap.resize(horizon_);
    for (int h = 0; h < horizon_; ++h) snap.clip_cap[h] = actor_cap(h);
    return snap;
  }

  std::int64_t explicit_param_count() const {
    return explicit_mode_ ? policy_.parameter_count() : 0;
  }

  std::vector<VectorXd> final_theta() const {
    std::vector<VectorXd> out;
    if (explicit_mode_)
      for (int h = 0; h < horizon_; ++h) out.push_back(policy_.theta(h));
    return out;
  }
  std::int64_t implicit_param_count() const {
    return implicit_mode_ ? implicit_.stored_parameter_count() : 0;
  }

 private:
  void update_explicit_actor(const CriticUpdateResult& critic, EpisodeRecord& rec) {
    const int rows = mdp_.state_count * mdp_.action_count;
    last_targets_.assign(horizon_, VectorXd(rows));
    for (int h = 0; h < horizon_; ++h) {
      const double cap = actor_cap(h);
      VectorXd prev_logits = actor_features_ * policy_.theta(h);
      VectorXd full_targets(rows);
      for (int s = 0; s < mdp_.state_count; ++s) {
        double policy_value = 0.0;
        if (cfg_.actor_cfg.variant == ActorVariant::kSpma) {
          for (int a = 0; a < mdp_.action_count; ++a) {
            const int r = s * mdp_.action_count + a;
            policy_value += probs_[h](s, a) *
                            std::min(std::max(critic.scores[h][r], 0.0), cap);
          }
        }
        for (int a = 0; a < mdp_.action_count; ++a) {
          const int r = s * mdp_.action_count + a;
          const double q = std::min(std::max(critic.scores[h][r], 0.0), cap);
          full_targets[r] =
              cfg_.actor_cfg.variant == ActorVariant::kSpma
                  ? spma_target(prev_logits[r], q, policy_value, cfg_.actor_cfg.eta)
                  : npg_target(prev_logits[r], q, cfg_.actor_cfg.eta);
        }
      }
      last_targets_[h] = full_targets;

      VectorXd coreset_targets(regression_.size());
      for (int k = 0; k < regression_.size(); ++k)
        coreset_targets[k] = full_targets[coreset_.points[k]];

      ActorDiagnostics diag;
      VectorXd theta =
          regression_.update(cfg_.actor_cfg, policy_.theta(h), coreset_targets, diag);
      if (diag.diverged)
        throw std::runtime_error("actor: gradient descent diverged at step " +
                                 std::to_string(h));
      rec.eps_opt = std::max(rec.eps_opt, diag.eps_opt_estimate);
      policy_.set_theta(h, std::move(theta));

      // Pointwise bias estimate: worst half-squared residual of the solved
      // logits against the targets over the whole table.
      const VectorXd resid = actor_features_ * policy_.theta(h) - full_targets;
      rec.eps_bias_pointwise =
          std::max(rec.eps_bias_pointwise, 0.5 * resid.array().square().maxCoeff());
    }
  }

  double projection_error_max(const CriticUpdateResult& critic,
                              const ProbTable& next_probs) {
    double worst = 0.0;
    for (int h = 0; h < horizon_; ++h) {
      const double cap = actor_cap(h);
      for (int s = 0; s < mdp_.state_count; ++s) {
        VectorXd tilt(mdp_.action_count);
        double policy_value = 0.0;
        if (cfg_.actor_cfg.variant == ActorVariant::kSpma) {
          for (int a = 0; a < mdp_.action_count; ++a) {
            const int r = s * mdp_.action_count + a;
            policy_value += probs_[h](s, a) *
                            std::min(std::max(critic.scores[h][r], 0.0), cap);
          }
        }
        for (int a = 0; a < mdp_.action_count; ++a) {
          const int r = s * mdp_.action_count + a;
          const double q = std::min(std::max(critic.scores[h][r], 0.0), cap);
          tilt[a] = cfg_.actor_cfg.variant == ActorVariant::kSpma
                        ? std::log(1.0 + cfg_.actor_cfg.eta * (q - policy_value))
                        : cfg_.actor_cfg.eta * q;
        }
        const VectorXd half =
            softmax(probs_[h].row(s).transpose().array().log().matrix() + tilt);
        const VectorXd projected = next_probs[h].row(s).transpose();
        const VectorXd u = optimal_.policy[h].row(s).transpose();
        worst = std::max(worst, std::abs(detail::kl_gap(u, projected, half)));
      }
    }
    return worst;
  }

  // Splits the per-episode optimality gap into the policy-improvement term
  // and the evaluation-error term and returns the identity residual.
  double decomposition_residual(const ValueTable& vt, const CriticUpdateResult& critic,
                                const std::vector<MatrixXd>& iota) const {
    const std::vector<VectorXd> mu_t = occupancies(mdp_, probs_);
    double actor_term = 0.0, critic_term = 0.0;
    for (int h = 0; h < horizon_; ++h) {
      for (int s = 0; s < mdp_.state_count; ++s) {
        const double w_star = star_occupancy_[h][s];
        const double w_t = mu_t[h][s];
        if (w_star > 0.0) {
          double gap = 0.0;
          for (int a = 0; a < mdp_.action_count; ++a)
            gap += (optimal_.policy[h](s, a) - probs_[h](s, a)) * critic.q_critic[h](s, a);
          actor_term += w_star * gap;
        }
        for (int a = 0; a < mdp_.action_count; ++a) {
          const double occ_gap = w_star * optimal_.policy[h](s, a) - w_t * probs_[h](s, a);
          critic_term += occ_gap * iota[h](s, a);
        }
      }
    }
    const double gap = optimal_.values.v[0][mdp_.initial_state] -
                       vt.v[0][mdp_.initial_state];
    return std::abs(gap - (actor_term + critic_term));
  }

  ExperimentConfig cfg_;
  LinearMdp mdp_;
  int horizon_ = 0;
  OptimalSolution optimal_;
  std::vector<VectorXd> star_occupancy_;

  bool explicit_mode_ = false;
  bool implicit_mode_ = false;
  bool greedy_mode_ = false;

  MatrixXd actor_features_;
  Coreset coreset_;
  ActorRegression regression_;
  double phi_bar_ = 0.0;
  LogLinearPolicy policy_;
  ImplicitNpgPolicy implicit_;

  CriticConfig critic_cfg_;
  CriticState critic_state_;
  CriticDataset dataset_;
  RandomStream rollout_stream_;

  ProbTable probs_;
  ProbTable prev_probs_;
  std::vector<VectorXd> last_targets_;
};

inline RunResult run_experiment(const ExperimentConfig& cfg) {
  RunResult out;
  ExperimentRunner runner(cfg);
  out.v_star = runner.optimal().values.v[0][runner.mdp().initial_state];
  out.phi_bar = runner.phi_bar();
  out.coreset_score = runner.coreset().achieved_score;
  out.coreset_size = static_cast<int>(runner.coreset().points.size());
  out.resolved_zeta_inv = runner.resolved_critic_config().zeta_inv;
  out.resolved_chains = runner.resolved_critic_config().chains;

  double value_sum = 0.0, regret = 0.0;
  for (int t = 1; t <= cfg.episodes; ++t) {
    EpisodeRecord rec;
    try {
      rec = runner.step(t);
    } catch (const std::exception& e) {
      out.completed = false;
      out.error = e.what();
      break;
    }
    value_sum += rec.exact_value;
    regret += out.v_star - rec.exact_value;
    rec.mixture_value = value_sum / t;
    rec.cum_regret = regret;
    out.records.push_back(rec);
  }
  out.explicit_param_count = runner.explicit_param_count();
  out.implicit_param_count = runner.implicit_param_count();
  out.final_theta = runner.final_theta();
  return out;
}

// Residual of the extended value-difference identity for an arbitrary policy
// pair and Q table, with both sides computed by exact dynamic programming.
inline double value_difference_check(const LinearMdp& mdp, const ProbTable& pi,
                                     const ProbTable& pi_prime,
                                     const std::vector<MatrixXd>& q_hat) {
  const int horizon = mdp.horizon;
  std::vector<VectorXd> v_hat(horizon + 1, VectorXd::Zero(mdp.state_count));
  for (int h = 0; h < horizon; ++h)
    for (int s = 0; s < mdp.state_count; ++s)
      v_hat[h][s] = pi_prime[h].row(s).dot(q_hat[h].row(s));

  const ValueTable vt = exact_policy_value(mdp, pi);
  const double lhs = v_hat[0][mdp.initial_state] - vt.v[0][mdp.initial_state];

  const std::vector<VectorXd> mu = occupancies(mdp, pi);
  double policy_term = 0.0, bellman_term = 0.0;
  for (int h = 0; h < horizon; ++h) {
    for (int s = 0; s < mdp.state_count; ++s) {
      if (mu[h][s] == 0.0) continue;
      double gap = 0.0;
      for (int a = 0; a < mdp.action_count; ++a)
        gap += (pi_prime[h](s, a) - pi[h](s, a)) * q_hat[h](s, a);
      policy_term += mu[h][s] * gap;
      for (int a = 0; a < mdp.action_count; ++a) {
        const double w = mu[h][s] * pi[h](s, a);
        if (w == 0.0) continue;
        const double backup =
            mdp.reward(h, s, a) + mdp.transition_row(h, s, a).dot(v_hat[h + 1]);
        bellman_term += w * (q_hat[h](s, a) - backup);
      }
    }
  }
  return std::abs(lhs - (policy_term + bellman_term));
}

struct AgreementRecord {
  int episode = 0;
  double max_prob_diff = 0.0;  // explicit vs implicit, over all (h, s, a)
  double proj_err_max = 0.0;   // explicit projection error vs the half step
  std::int64_t explicit_params = 0;
  std::int64_t implicit_params = 0;
};

// Runs one data/critic stream and maintains both policy representations from
// the same sequence of critic estimates, so their drift can be compared
// without compounding through the environment.
inline std::vector<AgreementRecord> npg_agreement_run(const ExperimentConfig& cfg) {
  ExperimentConfig shared = cfg;
  shared.actor = "npg_explicit";
  shared.actor_cfg.variant = ActorVariant::kNpg;
  ExperimentRunner runner(shared);
  const LinearMdp& mdp = runner.mdp();
  ImplicitNpgPolicy implicit(cfg.actor_cfg.eta, mdp.features, mdp.horizon,
                             mdp.state_count, mdp.action_count);

  // The implicit policy reconstructs from critic-feature snapshots, so exact
  // agreement requires phi_a = phi one-hot (realizable logits) with a
  // full-coverage coreset.
  std::vector<AgreementRecord> out;
  for (int t = 1; t <= cfg.episodes; ++t) {
    const EpisodeRecord step_rec = runner.step(t);
    implicit.store(runner.make_snapshot());
    const ProbTable implicit_probs = implicit.prob_table();
    const ProbTable& explicit_probs = runner.current_probs();
    AgreementRecord rec;
    rec.episode = t;
    rec.proj_err_max = step_rec.proj_err_max;
    for (int h = 0; h < mdp.horizon; ++h)
      rec.max_prob_diff = std::max(
          rec.max_prob_diff, (explicit_probs[h] - implicit_probs[h]).cwiseAbs().maxCoeff());
    rec.explicit_params = runner.explicit_param_count();
    rec.implicit_params = implicit.stored_parameter_count();
    out.push_back(rec);
  }
  return out;
}

}  // namespace linrl
