#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "linrl/linear_mdp.hpp"
#include "linrl/policy.hpp"
#include "linrl/rng.hpp"

namespace linrl {

struct CriticConfig {
  double lambda = 1.0;        // ridge weight
  double zeta_inv = 1e-2;     // reciprocal inverse temperature (0 = no noise)
  int steps = 100;            // J_t when not derived from theory
  std::optional<double> lr;   // alpha_c; empty selects 1/(2 lambda_max)
  int chains = 1;             // M
  bool noise = true;
  bool exact_ridge = false;   // skip the chains and solve the ridge system
  bool theory = false;        // derive steps and lr per episode from the analysis
  bool unified_clip = false;  // clip at H-h+1 inside the critic instead of H

  void validate() const {
    if (lambda <= 0.0) throw std::invalid_argument("critic: lambda must be positive");
    if (zeta_inv < 0.0) throw std::invalid_argument("critic: zeta_inv must be >= 0");
    if (steps < 1 && !theory) throw std::invalid_argument("critic: steps must be >= 1");
    if (chains < 1) throw std::invalid_argument("critic: chains must be >= 1");
    if (lr && *lr <= 0.0) throw std::invalid_argument("critic: lr must be positive");
  }
};

inline VectorXd critic_gradient(const VectorXd& w, const MatrixXd& lambda_mat,
                                const VectorXd& b) {
  if (w.size() != lambda_mat.rows() || b.size() != lambda_mat.rows())
    throw std::invalid_argument("critic_gradient: dimension mismatch");
  return lambda_mat * w - b;
}

inline VectorXd ridge_solve(const MatrixXd& lambda_mat, const VectorXd& b) {
  return lambda_mat.ldlt().solve(b);
}

// One noisy gradient step on the ridge objective. zeta_inv = 0 disables the
// noise term entirely.
inline VectorXd lmc_step(const VectorXd& w, const MatrixXd& lambda_mat,
                         const VectorXd& b, double alpha, double zeta_inv,
                         RandomStream& stream) {
  if (alpha <= 0.0) throw std::invalid_argument("lmc_step: alpha must be positive");
  VectorXd next = w - alpha * (lambda_mat * w - b);
  if (zeta_inv > 0.0) {
    const double scale = std::sqrt(alpha * zeta_inv);
    for (Eigen::Index i = 0; i < next.size(); ++i) next[i] += scale * stream.normal();
  }
  return next;
}

inline double power_iteration_lambda_max(const MatrixXd& m, int iters = 50,
                                         double tol = 1e-10) {
  VectorXd v = VectorXd::Ones(m.rows()).normalized();
  double value = 0.0;
  for (int i = 0; i < iters; ++i) {
    VectorXd next = m * v;
    const double norm = next.norm();
    if (norm == 0.0) return 0.0;
    next /= norm;
    const double est = next.dot(m * next);
    if (std::abs(est - value) <= tol * std::max(1.0, std::abs(est))) return est;
    value = est;
    v = next;
  }
  return value;
}

// Replay of per-step regression samples with an incrementally maintained
// Gram matrix. Appending in arrival order reproduces, operation for
// operation, the sum a full rebuild would compute.
class CriticDataset {
 public:
  struct StepSamples {
    std::vector<int> sa_rows;
    std::vector<int> next_states;
    std::vector<double> rewards;
    int size() const { return static_cast<int>(sa_rows.size()); }
  };

  CriticDataset() = default;
  CriticDataset(int horizon, int dim, double lambda)
      : lambda_(lambda),
        steps_(horizon),
        gram_(horizon, lambda * MatrixXd::Identity(dim, dim)) {}

  void clear() {
    const int dim = static_cast<int>(gram_.front().rows());
    for (auto& s : steps_) s = {};
    for (auto& g : gram_) g = lambda_ * MatrixXd::Identity(dim, dim);
    trajectories_ = 0;
  }

  void add(const LinearMdp& mdp, const Trajectory& traj) {
    for (int h = 0; h < static_cast<int>(steps_.size()); ++h) {
      const TrajectoryStep& st = traj.steps[h];
      const int row = mdp.sa_index(st.state, st.action);
      steps_[h].sa_rows.push_back(row);
      steps_[h].next_states.push_back(st.next_state);
      steps_[h].rewards.push_back(st.reward);
      gram_[h] += mdp.features.row(row).transpose() * mdp.features.row(row);
    }
    ++trajectories_;
  }

  int trajectories() const { return trajectories_; }
  double lambda() const { return lambda_; }
  const StepSamples& samples(int h) const { return steps_[h]; }
  const MatrixXd& gram(int h) const { return gram_[h]; }

 private:
  double lambda_ = 1.0;
  int trajectories_ = 0;
  std::vector<StepSamples> steps_;
  std::vector<MatrixXd> gram_;
};

// Parallel chain parameters with warm starts. Each (h, m) chain owns an
// independent random substream, so results do not depend on update order.
struct CriticState {
  std::vector<MatrixXd> chains;                   // per h: d x M
  std::vector<std::vector<RandomStream>> streams; // per h, per m
  int episode = 0;

  CriticState() = default;
  CriticState(int horizon, int dim, int num_chains, std::uint64_t seed) {
    chains.assign(horizon, MatrixXd::Zero(dim, num_chains));
    streams.resize(horizon);
    for (int h = 0; h < horizon; ++h) {
      streams[h].reserve(num_chains);
      for (int m = 0; m < num_chains; ++m)
        streams[h].emplace_back(mix_key(seed, 0x636861696eULL,
                                        static_cast<std::uint64_t>(h) * 65536 + m));
    }
  }
};

struct CriticUpdateResult {
  std::vector<VectorXd> scores;    // per h: S*A optimistic scores, max over chains
  std::vector<MatrixXd> q_critic;  // per h: S x A, clipped at the critic cap
  std::vector<VectorXd> v_hat;     // per h: S
  std::vector<double> critic_cap;  // per h
  std::vector<double> alpha;       // per h step size actually used
  int steps_used = 0;
  double kappa = 0.0;
  double sigma = 0.0;
};

struct TheoryStep {
  int steps;
  std::vector<double> alpha;  // per h
  double kappa;
  double sigma;
};

// Per-episode step count and step sizes from the convergence analysis:
// alpha = 1/(2 lambda_max), J = ceil(2 kappa log(1/sigma)) with
// sigma = 1 / (4 H (|D| + 1) sqrt(d)).
inline TheoryStep theory_step(const std::vector<MatrixXd>& grams, int horizon, int dim,
                              int data_count) {
  TheoryStep out;
  out.alpha.resize(horizon);
  double kappa = 1.0;
  for (int h = 0; h < horizon; ++h) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(grams[h]);
    const double hi = eig.eigenvalues().maxCoeff();
    const double lo = eig.eigenvalues().minCoeff();
    out.alpha[h] = 1.0 / (2.0 * hi);
    kappa = std::max(kappa, hi / lo);
  }
  out.kappa = kappa;
  out.sigma = 1.0 / (4.0 * horizon * (data_count + 1) * std::sqrt(double(dim)));
  out.steps = static_cast<int>(std::ceil(2.0 * kappa * std::log(1.0 / out.sigma)));
  return out;
}

inline TheoryStep theory_step(const CriticDataset& data, int horizon, int dim) {
  std::vector<MatrixXd> grams(horizon);
  for (int h = 0; h < horizon; ++h) grams[h] = data.gram(h);
  return theory_step(grams, horizon, dim, data.trajectories());
}

struct TheoryStatic {
  double zeta = 1.0;
  double c = 0.0;
  int chains = 1;
  double c_delta = 0.0;
};

enum class DataMode { kOnPolicy, kOffPolicy };

// Chain count and inverse temperature from the optimism analysis. The
// off-policy deviation constant depends on a covering-number bound that in
// turn depends on zeta, so it is resolved by fixed-point iteration; the
// projection-error level eps_bar enters the logit bound and defaults to 0.
inline TheoryStatic theory_static(int horizon, int episodes, int data_per_step,
                                  double delta, int critic_dim, int actor_dim,
                                  DataMode mode, double eta = 1.0,
                                  double eps_bar = 0.0,
                                  std::optional<double> c_delta_override = {}) {
  if (delta <= 0.0 || delta >= 1.0)
    throw std::invalid_argument("theory_static: delta must be in (0,1)");
  TheoryStatic out;
  out.c = 1.0 / (2.0 * std::sqrt(2.0 * M_E * M_PI));
  out.chains = static_cast<int>(std::ceil(
      std::log(static_cast<double>(horizon) * episodes / delta) /
      std::log(1.0 / (1.0 - out.c))));

  const double h = horizon, t = episodes, d_c = critic_dim, d_a = actor_dim;
  auto zeta_from_cdelta = [&](double c_delta) {
    const double root = 2.0 * h * std::sqrt(d_c) * c_delta + 8.0 / 3.0;
    return 1.0 / (root * root);
  };

  if (c_delta_override) {
    out.c_delta = *c_delta_override;
    out.zeta = zeta_from_cdelta(out.c_delta);
    return out;
  }

  if (mode == DataMode::kOnPolicy) {
    out.c_delta = std::sqrt(std::log(static_cast<double>(data_per_step) / delta));
    out.zeta = zeta_from_cdelta(out.c_delta);
    return out;
  }

  const double gap = h / (2.0 * std::sqrt(2.0) * t);
  const double z_bar = (eps_bar + eta * h) * t;
  double zeta = zeta_from_cdelta(std::sqrt(std::log((t + 1.0) / delta)));
  for (int it = 0; it < 50; ++it) {
    const double w_bar = (16.0 / 3.0) * h * std::sqrt(d_c * t) +
                         std::sqrt(2.0 * d_c * d_c * d_c * t / (3.0 * zeta * delta));
    const double cover = d_c * std::log1p((4.0 * w_bar + 4.0 * h * std::sqrt(2.0 * z_bar)) / gap) +
                         d_a * std::log1p(4.0 * h * std::sqrt(2.0 * z_bar) / gap);
    const double c_delta = 3.0 * std::sqrt(0.5 * std::log(t + 1.0) +
                                           std::log(2.0 * std::sqrt(2.0) * t / h) +
                                           std::log(2.0 / delta) + cover);
    const double next = zeta_from_cdelta(c_delta);
    out.c_delta = c_delta;
    if (std::abs(next - zeta) <= 1e-15 * zeta) {
      zeta = next;
      break;
    }
    zeta = next;
  }
  out.zeta = zeta;
  return out;
}

// Backward pass of the noisy-gradient critic: per step, form the ridge
// system against the bootstrapped targets, advance every chain J steps from
// its warm start, and take the chain-max as the optimistic estimate.
inline CriticUpdateResult critic_update(const LinearMdp& mdp, const CriticDataset& data,
                                        const ProbTable& v_policy, CriticState& state,
                                        const CriticConfig& cfg) {
  cfg.validate();
  const int horizon = mdp.horizon;
  const int dim = mdp.critic_dim;
  const int s_count = mdp.state_count;
  const int a_count = mdp.action_count;
  const int m_chains = cfg.exact_ridge ? 1 : cfg.chains;

  CriticUpdateResult out;
  out.scores.resize(horizon);
  out.q_critic.resize(horizon);
  out.v_hat.resize(horizon);
  out.critic_cap.resize(horizon);
  out.alpha.assign(horizon, 0.0);

  TheoryStep theory;
  if (cfg.theory && !cfg.exact_ridge) {
    theory = theory_step(data, horizon, dim);
    out.steps_used = theory.steps;
    out.kappa = theory.kappa;
    out.sigma = theory.sigma;
  } else {
    out.steps_used = cfg.steps;
  }

  VectorXd v_next = VectorXd::Zero(s_count);  // value at step h+1
  for (int h = horizon - 1; h >= 0; --h) {
    const auto& samples = data.samples(h);
    const MatrixXd& lambda_mat = data.gram(h);

    VectorXd b = VectorXd::Zero(dim);
    for (int i = 0; i < samples.size(); ++i) {
      const double y = samples.rewards[i] + v_next[samples.next_states[i]];
      b += y * mdp.features.row(samples.sa_rows[i]).transpose();
    }

    VectorXd score_flat(s_count * a_count);
    if (cfg.exact_ridge) {
      score_flat = mdp.features * ridge_solve(lambda_mat, b);
    } else {
      double alpha;
      if (cfg.theory) {
        alpha = theory.alpha[h];
      } else if (cfg.lr) {
        alpha = *cfg.lr;
      } else {
        alpha = 1.0 / (2.0 * power_iteration_lambda_max(lambda_mat));
      }
      out.alpha[h] = alpha;

      MatrixXd& w = state.chains[h];
      const double noise_scale =
          (cfg.noise && cfg.zeta_inv > 0.0) ? std::sqrt(alpha * cfg.zeta_inv) : 0.0;
      MatrixXd noise(dim, m_chains);
      for (int j = 0; j < out.steps_used; ++j) {
        MatrixXd grad = lambda_mat * w;
        grad.colwise() -= b;
        if (noise_scale > 0.0) {
          for (int m = 0; m < m_chains; ++m)
            state.streams[h][m].fill_normal(noise.col(m));
          w += noise_scale * noise - alpha * grad;
        } else {
          w -= alpha * grad;
        }
      }
      score_flat = (mdp.features * w).rowwise().maxCoeff();
    }

    const double cap =
        cfg.unified_clip ? static_cast<double>(horizon - h) : static_cast<double>(horizon);
    out.critic_cap[h] = cap;
    out.scores[h] = score_flat;
    MatrixXd q(s_count, a_count);
    VectorXd v(s_count);
    for (int s = 0; s < s_count; ++s) {
      for (int a = 0; a < a_count; ++a)
        q(s, a) = std::min(std::max(score_flat[s * a_count + a], 0.0), cap);
      v[s] = v_policy[h].row(s).dot(q.row(s));
    }
    out.q_critic[h] = q;
    out.v_hat[h] = v;
    v_next = v;
  }
  state.episode += 1;
  return out;
}

// Exact model prediction error over the tabular kernel:
// iota = r + P vhat_{h+1} - qhat. Negative values mean the estimate is
// optimistic.
inline std::vector<MatrixXd> model_prediction_error(const LinearMdp& mdp,
                                                    const std::vector<MatrixXd>& q_hat,
                                                    const std::vector<VectorXd>& v_hat) {
  std::vector<MatrixXd> iota(mdp.horizon);
  for (int h = 0; h < mdp.horizon; ++h) {
    iota[h].resize(mdp.state_count, mdp.action_count);
    const bool last = (h + 1 == mdp.horizon);
    for (int s = 0; s < mdp.state_count; ++s) {
      for (int a = 0; a < mdp.action_count; ++a) {
        const double pv = last ? 0.0 : mdp.transition_row(h, s, a).dot(v_hat[h + 1]);
        iota[h](s, a) = mdp.reward(h, s, a) + pv - q_hat[h](s, a);
      }
    }
  }
  return iota;
}

struct PosteriorStage {
  MatrixXd lambda_mat;
  VectorXd b;
  double alpha;
  int steps;
};

struct PosteriorMoments {
  VectorXd mean;
  MatrixXd covariance;
};

// Closed-form Gaussian law of a chain after the given stages of noisy
// gradient descent, starting from w0. All stage matrices share the chain's
// eigenbasis within a stage, so powers are taken spectrally.
inline PosteriorMoments posterior_moments(const std::vector<PosteriorStage>& stages,
                                          double zeta_inv,
                                          const VectorXd& w0) {
  if (stages.empty()) throw std::invalid_argument("posterior_moments: no stages");
  const int dim = static_cast<int>(stages.front().lambda_mat.rows());
  PosteriorMoments out;
  out.mean = w0;
  out.covariance = MatrixXd::Zero(dim, dim);
  for (const PosteriorStage& st : stages) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(st.lambda_mat);
    const VectorXd lam = eig.eigenvalues();
    if (st.alpha * lam.maxCoeff() >= 1.0)
      throw std::invalid_argument("posterior_moments: step size too large");
    if (lam.minCoeff() <= 0.0)
      throw std::invalid_argument("posterior_moments: gram matrix must be positive definite");
    const MatrixXd& u = eig.eigenvectors();

    VectorXd a_pow(dim), a2_pow(dim), noise_diag(dim);
    for (int i = 0; i < dim; ++i) {
      const double a_i = 1.0 - st.alpha * lam[i];
      a_pow[i] = std::pow(a_i, st.steps);
      a2_pow[i] = std::pow(a_i, 2 * st.steps);
      noise_diag[i] = zeta_inv * (1.0 - a2_pow[i]) / (lam[i] * (1.0 + a_i));
    }
    const MatrixXd a_j = u * a_pow.asDiagonal() * u.transpose();
    const VectorXd w_hat = ridge_solve(st.lambda_mat, st.b);
    out.mean = a_j * out.mean + (MatrixXd::Identity(dim, dim) - a_j) * w_hat;
    out.covariance = a_j * out.covariance * a_j +
                     u * noise_diag.asDiagonal() * u.transpose();
  }
  return out;
}

}  // namespace linrl
