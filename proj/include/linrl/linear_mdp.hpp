#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "linrl/rng.hpp"

namespace linrl {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Affine map between the stored reward scale (always [0, 1]) and the raw
// environment scale: raw = scale * stored + offset.
struct RewardAffine {
  double scale = 1.0;
  double offset = 0.0;

  double to_raw(double stored) const { return scale * stored + offset; }
  // Value of a full-horizon return accumulated over `steps` stored rewards.
  double value_to_raw(double stored_value, int steps) const {
    return scale * stored_value + offset * static_cast<double>(steps);
  }
  bool is_identity() const { return scale == 1.0 && offset == 0.0; }
};

// Finite-horizon MDP whose transition kernel and reward are (approximately)
// linear in a known feature map. The tabular kernel is the ground truth used
// for simulation and exact evaluation; the fitted linear representation
// exists for consistency checking and for the critic's feature interface.
struct LinearMdp {
  int horizon = 0;
  int state_count = 0;
  int action_count = 0;
  int critic_dim = 0;

  MatrixXd features;                        // (S*A) x d, row index s*A+a
  std::vector<MatrixXd> next_state_measure; // per h: S x d, row s'
  std::vector<VectorXd> reward_vec;         // per h: d
  std::vector<MatrixXd> transitions;        // per h: (S*A) x S
  std::vector<VectorXd> rewards;            // per h: S*A, stored scale in [0,1]
  int initial_state = 0;

  double fit_tol = 0.0;          // achieved max absolute linear residual
  bool rank_deficient = false;   // normal equations were rank deficient
  double feature_rescale = 1.0;  // factor applied to bring ||phi|| within 1
  RewardAffine reward_affine;

  int sa_index(int s, int a) const { return s * action_count + a; }

  Eigen::Ref<const VectorXd> phi(int s, int a) const {
    return features.row(sa_index(s, a)).transpose();
  }

  double reward(int h, int s, int a) const { return rewards[h][sa_index(s, a)]; }

  Eigen::Ref<const VectorXd> transition_row(int h, int s, int a) const {
    return transitions[h].row(sa_index(s, a)).transpose();
  }

  void validate(double prob_tol = 1e-9) const;
};

struct TrajectoryStep {
  int state = 0;
  int action = 0;
  double reward = 0.0;  // stored scale
  int next_state = 0;
};

struct Trajectory {
  std::vector<TrajectoryStep> steps;
  int episode_index = 0;
  std::uint64_t seed = 0;
};

// Tabular policy: per step h, an S x A matrix of action probabilities.
using ProbTable = std::vector<MatrixXd>;

struct ValueTable {
  std::vector<VectorXd> v;  // H+1 entries, v[H] = 0
  std::vector<MatrixXd> q;  // H entries, S x A
};

struct OptimalSolution {
  ValueTable values;
  std::vector<std::vector<int>> greedy;  // per h, per s: argmax action
  ProbTable policy;                      // deterministic one-hot form
};

inline void LinearMdp::validate(double prob_tol) const {
  if (horizon <= 0 || state_count <= 0 || action_count <= 0 || critic_dim <= 0)
    throw std::invalid_argument("linear mdp: nonpositive dimensions");
  const int rows = state_count * action_count;
  if (features.rows() != rows || features.cols() != critic_dim)
    throw std::invalid_argument("linear mdp: feature table shape mismatch");
  for (int i = 0; i < rows; ++i) {
    if (features.row(i).norm() > 1.0 + 1e-9)
      throw std::invalid_argument("linear mdp: feature norm exceeds 1");
  }
  for (int h = 0; h < horizon; ++h) {
    for (int i = 0; i < rows; ++i) {
      const double sum = transitions[h].row(i).sum();
      if (transitions[h].row(i).minCoeff() < -prob_tol || std::abs(sum - 1.0) > prob_tol)
        throw std::invalid_argument("linear mdp: transition row is not a distribution");
      const double r = rewards[h][i];
      if (r < -prob_tol || r > 1.0 + prob_tol)
        throw std::invalid_argument("linear mdp: stored reward outside [0,1]");
    }
    // Linear consistency against the recorded fit tolerance.
    MatrixXd p_hat = features * next_state_measure[h].transpose();  // (S*A) x S
    VectorXd r_hat = features * reward_vec[h];
    const double resid = std::max((p_hat - transitions[h]).cwiseAbs().maxCoeff(),
                                  (r_hat - rewards[h]).cwiseAbs().maxCoeff());
    if (resid > fit_tol + 1e-12)
      throw std::invalid_argument("linear mdp: linear residual exceeds recorded fit_tol");
  }
}

// Least-squares fit of the signed measures and reward vectors for given
// tabular dynamics and features. Rank-deficient normal equations fall back to
// the minimum-norm solution (complete orthogonal decomposition) and are
// flagged. Feature rows with norm > 1 are rescaled by a recorded factor.
inline LinearMdp fit_linear_mdp(const std::vector<MatrixXd>& tabular_p,
                                const std::vector<VectorXd>& tabular_r,
                                const MatrixXd& phi,
                                int state_count, int action_count,
                                int initial_state = 0,
                                RewardAffine affine = {}) {
  const int horizon = static_cast<int>(tabular_p.size());
  if (horizon == 0 || tabular_r.size() != tabular_p.size())
    throw std::invalid_argument("fit_linear_mdp: empty or inconsistent tables");
  const int rows = state_count * action_count;
  if (phi.rows() != rows)
    throw std::invalid_argument("fit_linear_mdp: feature row count mismatch");
  for (int h = 0; h < horizon; ++h) {
    if (tabular_p[h].rows() != rows || tabular_p[h].cols() != state_count ||
        tabular_r[h].size() != rows)
      throw std::invalid_argument("fit_linear_mdp: table shape mismatch");
  }

  LinearMdp mdp;
  mdp.horizon = horizon;
  mdp.state_count = state_count;
  mdp.action_count = action_count;
  mdp.critic_dim = static_cast<int>(phi.cols());
  mdp.initial_state = initial_state;
  mdp.reward_affine = affine;
  mdp.features = phi;

  double max_norm = 0.0;
  for (int i = 0; i < rows; ++i) max_norm = std::max(max_norm, phi.row(i).norm());
  if (max_norm > 1.0 + 1e-12) {
    mdp.feature_rescale = 1.0 / max_norm;
    mdp.features *= mdp.feature_rescale;
  }

  Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(mdp.features);
  mdp.rank_deficient = cod.rank() < mdp.critic_dim;

  mdp.transitions = tabular_p;
  mdp.rewards = tabular_r;
  mdp.next_state_measure.resize(horizon);
  mdp.reward_vec.resize(horizon);
  double fit_tol = 0.0;
  for (int h = 0; h < horizon; ++h) {
    MatrixXd psi = cod.solve(tabular_p[h]);  // d x S
    VectorXd ups = cod.solve(tabular_r[h]);
    mdp.next_state_measure[h] = psi.transpose();
    mdp.reward_vec[h] = ups;
    fit_tol = std::max(fit_tol,
                       (mdp.features * psi - tabular_p[h]).cwiseAbs().maxCoeff());
    fit_tol = std::max(fit_tol,
                       (mdp.features * ups - tabular_r[h]).cwiseAbs().maxCoeff());
  }
  mdp.fit_tol = fit_tol;
  mdp.validate();
  return mdp;
}

inline MatrixXd one_hot_features(int count) {
  return MatrixXd::Identity(count, count);
}

// Projects indices 0..count-1 uniformly onto [0, dim-1] and tent-encodes the
// fractional position between the two nearest coordinates. Recovers exact
// one-hot vectors when dim == count.
inline MatrixXd projected_features(int count, int dim) {
  if (dim < 1) throw std::invalid_argument("projected_features: dim must be >= 1");
  if (dim > count) throw std::invalid_argument("projected_features: dim exceeds point count");
  MatrixXd out = MatrixXd::Zero(count, dim);
  for (int k = 0; k < count; ++k) {
    const double pos = (count == 1) ? 0.0
                                    : static_cast<double>(k) * (dim - 1) /
                                          static_cast<double>(count - 1);
    const int lo = std::min(static_cast<int>(std::floor(pos)), dim - 1);
    const double frac = pos - lo;
    out(k, lo) = 1.0 - frac;
    if (frac > 0.0 && lo + 1 < dim) out(k, lo + 1) = frac;
  }
  return out;
}

// Random 15-state, 5-action environment, exactly linear by construction.
// Features are tile-coded from uniformly random raw vectors in [0,1],
// normalized onto the simplex, so the transition kernel is a feature-weighted
// mixture of d random row-normalized base distributions and is a valid
// kernel without any projection. Two feature coordinates are reserved for
// the rewards: the start pair (state 0, action 0) and the goal pair (final
// state, action 1) sit on those vertices, which yields a reward of exactly
// 0.1 at the former, 1.0 at the latter, and 0 everywhere else.
inline LinearMdp make_random_mdp(std::uint64_t seed, int critic_dim, int horizon) {
  constexpr int kStates = 15;
  constexpr int kActions = 5;
  if (critic_dim < 3)
    throw std::invalid_argument("make_random_mdp: critic_dim must be >= 3");
  if (horizon < 1) throw std::invalid_argument("make_random_mdp: horizon must be >= 1");

  RandomStream gen(mix_key(seed, 0x6d64705fULL));
  const int rows = kStates * kActions;
  const int goal = (kStates - 1) * kActions + 1;

  MatrixXd phi = MatrixXd::Zero(rows, critic_dim);
  for (int i = 0; i < rows; ++i) {
    double sum = 0.0;
    for (int j = 2; j < critic_dim; ++j) {
      phi(i, j) = gen.uniform();
      sum += phi(i, j);
    }
    phi.row(i) /= sum;
  }
  phi.row(goal).setZero();
  phi(goal, 0) = 1.0;
  phi.row(0).setZero();
  phi(0, 1) = 1.0;

  // d base next-state distributions, uniformly random then row-normalized.
  MatrixXd base(critic_dim, kStates);
  for (int j = 0; j < critic_dim; ++j) {
    double sum = 0.0;
    for (int s = 0; s < kStates; ++s) {
      base(j, s) = gen.uniform();
      sum += base(j, s);
    }
    base.row(j) /= sum;
  }

  VectorXd upsilon = VectorXd::Zero(critic_dim);
  upsilon[0] = 1.0;
  upsilon[1] = 0.1;

  std::vector<MatrixXd> p(horizon, phi * base);
  std::vector<VectorXd> r(horizon, phi * upsilon);
  return fit_linear_mdp(p, r, phi, kStates, kActions, /*initial_state=*/0);
}

// Same dynamics and rewards as make_random_mdp but with exact one-hot
// features, so the linear representation is exact.
inline LinearMdp make_random_mdp_one_hot(std::uint64_t seed, int horizon) {
  LinearMdp tile = make_random_mdp(seed, 10, horizon);
  return fit_linear_mdp(tile.transitions, tile.rewards,
                        one_hot_features(tile.state_count * tile.action_count),
                        tile.state_count, tile.action_count, tile.initial_state);
}

// N x N descend-only grid. Action 0 moves bottom-right, action 1 bottom-left.
// Default rewards follow the convention of 0 for right, -0.01/N for left, and
// 1 for taking action 0 in the bottom-right corner; standard_rewards swaps
// the per-step cost onto the right action. Raw rewards are shifted into
// [0, 1] by a recorded affine map.
inline LinearMdp make_deep_sea(int n, int critic_dim, bool standard_rewards = false) {
  if (n < 2) throw std::invalid_argument("make_deep_sea: n must be >= 2");
  const int states = n * n;
  const int actions = 2;
  const int rows = states * actions;
  if (critic_dim < 1 || critic_dim > rows)
    throw std::invalid_argument("make_deep_sea: critic_dim out of range");

  const double step_cost = -0.01 / static_cast<double>(n);
  auto cell = [&](int row, int col) { return row * n + col; };

  MatrixXd kernel = MatrixXd::Zero(rows, states);
  VectorXd raw_reward(rows);
  for (int row = 0; row < n; ++row) {
    for (int col = 0; col < n; ++col) {
      const int s = cell(row, col);
      const int down = std::min(row + 1, n - 1);
      const int right = cell(down, std::min(col + 1, n - 1));
      const int left = cell(down, std::max(col - 1, 0));
      kernel(s * actions + 0, right) = 1.0;
      kernel(s * actions + 1, left) = 1.0;
      const bool corner = (row == n - 1 && col == n - 1);
      if (standard_rewards) {
        raw_reward[s * actions + 0] = step_cost + (corner ? 1.0 : 0.0);
        raw_reward[s * actions + 1] = 0.0;
      } else {
        raw_reward[s * actions + 0] = corner ? 1.0 : 0.0;
        raw_reward[s * actions + 1] = step_cost;
      }
    }
  }

  const double r_min = raw_reward.minCoeff();
  const double r_max = raw_reward.maxCoeff();
  RewardAffine affine{r_max - r_min, r_min};
  VectorXd stored = (raw_reward.array() - r_min) / (r_max - r_min);

  std::vector<MatrixXd> p(n, kernel);
  std::vector<VectorXd> r(n, stored);
  return fit_linear_mdp(p, r, projected_features(rows, critic_dim),
                        states, actions, cell(0, 0), affine);
}

inline Trajectory rollout(const LinearMdp& mdp, const ProbTable& policy,
                          RandomStream& stream, int episode_index = 0) {
  Trajectory traj;
  traj.episode_index = episode_index;
  traj.seed = stream.key();
  traj.steps.reserve(mdp.horizon);
  int s = mdp.initial_state;
  for (int h = 0; h < mdp.horizon; ++h) {
    const int a = stream.categorical(policy[h].row(s).transpose());
    const int next = stream.categorical(mdp.transition_row(h, s, a));
    traj.steps.push_back({s, a, mdp.reward(h, s, a), next});
    s = next;
  }
  return traj;
}

// Backward dynamic programming over the tabular kernel; also returns Q.
inline ValueTable exact_policy_value(const LinearMdp& mdp, const ProbTable& policy) {
  ValueTable vt;
  vt.v.assign(mdp.horizon + 1, VectorXd::Zero(mdp.state_count));
  vt.q.assign(mdp.horizon, MatrixXd::Zero(mdp.state_count, mdp.action_count));
  for (int h = mdp.horizon - 1; h >= 0; --h) {
    for (int s = 0; s < mdp.state_count; ++s) {
      for (int a = 0; a < mdp.action_count; ++a) {
        vt.q[h](s, a) = mdp.reward(h, s, a) +
                        mdp.transition_row(h, s, a).dot(vt.v[h + 1]);
      }
      vt.v[h][s] = policy[h].row(s).dot(vt.q[h].row(s));
    }
  }
  return vt;
}

// Bellman-optimal values with greedy argmax; ties break to the smallest
// action index.
inline OptimalSolution optimal_values(const LinearMdp& mdp) {
  OptimalSolution sol;
  sol.values.v.assign(mdp.horizon + 1, VectorXd::Zero(mdp.state_count));
  sol.values.q.assign(mdp.horizon, MatrixXd::Zero(mdp.state_count, mdp.action_count));
  sol.greedy.assign(mdp.horizon, std::vector<int>(mdp.state_count, 0));
  sol.policy.assign(mdp.horizon, MatrixXd::Zero(mdp.state_count, mdp.action_count));
  for (int h = mdp.horizon - 1; h >= 0; --h) {
    for (int s = 0; s < mdp.state_count; ++s) {
      int best = 0;
      double best_q = -std::numeric_limits<double>::infinity();
      for (int a = 0; a < mdp.action_count; ++a) {
        const double q = mdp.reward(h, s, a) +
                         mdp.transition_row(h, s, a).dot(sol.values.v[h + 1]);
        sol.values.q[h](s, a) = q;
        if (q > best_q) {
          best_q = q;
          best = a;
        }
      }
      sol.greedy[h][s] = best;
      sol.policy[h](s, best) = 1.0;
      sol.values.v[h][s] = best_q;
    }
  }
  return sol;
}

// State occupancy measures mu_h(s) under a policy, starting from s_1.
inline std::vector<VectorXd> occupancies(const LinearMdp& mdp, const ProbTable& policy) {
  std::vector<VectorXd> mu(mdp.horizon, VectorXd::Zero(mdp.state_count));
  mu[0][mdp.initial_state] = 1.0;
  for (int h = 0; h + 1 < mdp.horizon; ++h) {
    for (int s = 0; s < mdp.state_count; ++s) {
      if (mu[h][s] == 0.0) continue;
      for (int a = 0; a < mdp.action_count; ++a) {
        const double w = mu[h][s] * policy[h](s, a);
        if (w == 0.0) continue;
        mu[h + 1] += w * mdp.transition_row(h, s, a);
      }
    }
  }
  return mu;
}

inline ProbTable uniform_policy(const LinearMdp& mdp) {
  return ProbTable(mdp.horizon,
                   MatrixXd::Constant(mdp.state_count, mdp.action_count,
                                      1.0 / mdp.action_count));
}

}  // namespace linrl
