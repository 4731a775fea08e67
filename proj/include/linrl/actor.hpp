#pragma once

#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "linrl/design.hpp"
#include "linrl/policy.hpp"

namespace linrl {

enum class ActorSolverKind { kClosedForm, kGradientDescent };
enum class ActorVariant { kNpg, kSpma };

struct ActorConfig {
  double eta = 1.0;                  // policy optimization learning rate
  int steps = 50;                    // K_t, gradient-descent iterations
  std::optional<double> lr;          // alpha_a; empty selects 1/(2 lambda_max(G))
  ActorSolverKind solver = ActorSolverKind::kClosedForm;
  ActorVariant variant = ActorVariant::kNpg;

  void validate(int horizon) const {
    if (eta <= 0.0) throw std::invalid_argument("actor: eta must be positive");
    if (steps < 0) throw std::invalid_argument("actor: steps must be >= 0");
    if (variant == ActorVariant::kSpma && eta > 1.0 / (2.0 * horizon) + 1e-15)
      throw std::invalid_argument("actor: spma requires eta <= 1/(2H)");
  }
};

struct ActorDiagnostics {
  double achieved_loss = 0.0;
  double eps_opt_estimate = 0.0;
  bool diverged = false;
  bool gram_regularized = false;
};

// Weighted logit-matching regression over a fixed coreset. The Gram matrix,
// its factorization, and the gradient-descent step size depend only on the
// coreset, so they are prepared once per run.
class ActorRegression {
 public:
  ActorRegression() = default;
  ActorRegression(const Coreset& coreset, const MatrixXd& actor_features)
      : weights_(coreset.weights),
        gram_(coreset.gram_design),
        gram_regularized_(coreset.design_gram_regularized) {
    const int m = static_cast<int>(coreset.points.size());
    if (m == 0) throw std::invalid_argument("actor: coreset is empty");
    rows_.resize(m, static_cast<int>(actor_features.cols()));
    for (int k = 0; k < m; ++k) rows_.row(k) = actor_features.row(coreset.points[k]);
    ldlt_.compute(gram_);
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(gram_);
    lambda_max_ = eig.eigenvalues().maxCoeff();
  }

  // Builds a regression directly from explicit points and weights (used when
  // a design coreset is absent and buffered pairs stand in with uniform rho).
  static ActorRegression from_points(const std::vector<int>& points,
                                     const MatrixXd& actor_features) {
    Coreset c;
    c.points = points;
    const int m = static_cast<int>(points.size());
    c.weights = VectorXd::Constant(m, 1.0 / m);
    const int d = static_cast<int>(actor_features.cols());
    c.gram_design = MatrixXd::Zero(d, d);
    for (int p : points) {
      c.gram_design +=
          (1.0 / m) * actor_features.row(p).transpose() * actor_features.row(p);
    }
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(c.gram_design);
    if (eig.eigenvalues().minCoeff() <=
        1e-12 * std::max(1.0, eig.eigenvalues().maxCoeff())) {
      c.gram_design += 1e-10 * MatrixXd::Identity(d, d);
      c.design_gram_regularized = true;
    }
    c.gram_alg = MatrixXd::Identity(d, d) + static_cast<double>(m) * c.gram_design;
    return ActorRegression(c, actor_features);
  }

  int size() const { return static_cast<int>(rows_.rows()); }
  const MatrixXd& gram() const { return gram_; }
  double lambda_max() const { return lambda_max_; }
  bool gram_regularized() const { return gram_regularized_; }

  double loss(const VectorXd& theta, const VectorXd& targets) const {
    const VectorXd resid = rows_ * theta - targets;
    return 0.5 * resid.array().square().matrix().dot(weights_);
  }

  VectorXd moment(const VectorXd& targets) const {
    return rows_.transpose() * weights_.cwiseProduct(targets);
  }

  VectorXd gradient(const VectorXd& theta, const VectorXd& targets) const {
    return gram_ * theta - moment(targets);
  }

  VectorXd solve_closed_form(const VectorXd& targets) const {
    return ldlt_.solve(moment(targets));
  }

  VectorXd solve_gd(const VectorXd& theta_prev, const VectorXd& targets, int steps,
                    std::optional<double> lr, ActorDiagnostics* diag = nullptr) const {
    const double alpha = lr.value_or(1.0 / (2.0 * lambda_max_));
    if (alpha >= 1.0 / lambda_max_)
      throw std::invalid_argument("actor: step size at or above 1/L");
    VectorXd theta = theta_prev;
    double prev_loss = loss(theta, targets);
    int rising = 0;
    for (int k = 0; k < steps; ++k) {
      theta -= alpha * gradient(theta, targets);
      const double cur = loss(theta, targets);
      rising = (cur > prev_loss) ? rising + 1 : 0;
      prev_loss = cur;
      if (rising >= 3) {
        if (diag) diag->diverged = true;
        break;
      }
    }
    return theta;
  }

  // Runs the configured solver and fills optimality diagnostics against the
  // closed-form minimizer.
  VectorXd update(const ActorConfig& cfg, const VectorXd& theta_prev,
                  const VectorXd& targets, ActorDiagnostics& diag) const {
    diag = {};
    diag.gram_regularized = gram_regularized_;
    const VectorXd star = solve_closed_form(targets);
    const double star_loss = loss(star, targets);
    VectorXd theta;
    if (cfg.solver == ActorSolverKind::kClosedForm) {
      theta = star;
    } else {
      theta = solve_gd(theta_prev, targets, cfg.steps, cfg.lr, &diag);
    }
    diag.achieved_loss = loss(theta, targets);
    diag.eps_opt_estimate = std::max(0.0, diag.achieved_loss - star_loss);
    return theta;
  }

 private:
  MatrixXd rows_;      // coreset features, one row per point
  VectorXd weights_;   // rho
  MatrixXd gram_;      // sum rho phi phi^T (regularized if singular)
  Eigen::LDLT<MatrixXd> ldlt_;
  double lambda_max_ = 0.0;
  bool gram_regularized_ = false;
};

// Regression target for the multiplicative-weights step in logit space:
// previous logit plus eta * Qhat.
inline double npg_target(double prev_logit, double q_hat, double eta) {
  return prev_logit + eta * q_hat;
}

// Regression target for the softmax policy mirror ascent variant: previous
// logit plus log(1 + eta * advantage). Requires 1 + eta * advantage > 0,
// which eta <= 1/(2H) guarantees for clipped Q.
inline double spma_target(double prev_logit, double q_hat, double policy_value,
                          double eta) {
  const double adv = q_hat - policy_value;
  const double inner = 1.0 + eta * adv;
  if (inner <= 0.0)
    throw std::invalid_argument("spma_target: 1 + eta * advantage must be positive");
  return prev_logit + std::log(inner);
}

// Unprojected multiplicative-weights step: p' proportional to p * exp(eta g).
inline VectorXd npg_half_step(const VectorXd& p, const VectorXd& g, double eta) {
  VectorXd logits = p.array().log() + eta * g.array();
  return softmax(logits);
}

// KL(u || p_projected) - KL(u || p_half): the regret penalty incurred by
// projecting the half step back onto the realizable policy class.
inline double projection_error(const VectorXd& u, const VectorXd& p_projected,
                               const VectorXd& p_half) {
  if (u.minCoeff() <= 0.0 || p_projected.minCoeff() <= 0.0 || p_half.minCoeff() <= 0.0)
    throw std::invalid_argument("projection_error: distributions must be strictly positive");
  double out = 0.0;
  for (Eigen::Index i = 0; i < u.size(); ++i)
    out += u[i] * (std::log(p_half[i]) - std::log(p_projected[i]));
  return out;
}

}  // namespace linrl
