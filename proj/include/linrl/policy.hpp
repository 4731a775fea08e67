#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "linrl/linear_mdp.hpp"
#include "linrl/rng.hpp"

namespace linrl {

inline VectorXd softmax(const VectorXd& logits) {
  VectorXd z = logits.array() - logits.maxCoeff();
  VectorXd e = z.array().exp();
  return e / e.sum();
}

// Clips x into [0, H - h + 1] (h is 1-based within the horizon).
inline double clip_q(double x, int h, int horizon) {
  const double cap = static_cast<double>(horizon - h + 1);
  return std::min(std::max(x, 0.0), cap);
}

// Softmax policy with logits linear in given actor features. Storage is
// O(H * d_a) regardless of how many episodes have been played.
class LogLinearPolicy {
 public:
  LogLinearPolicy() = default;
  LogLinearPolicy(MatrixXd actor_features, int horizon)
      : features_(std::move(actor_features)),
        theta_(horizon, VectorXd::Zero(features_.cols())) {}

  int horizon() const { return static_cast<int>(theta_.size()); }
  int actor_dim() const { return static_cast<int>(features_.cols()); }
  const MatrixXd& actor_features() const { return features_; }

  const VectorXd& theta(int h) const { return theta_[h]; }
  void set_theta(int h, VectorXd value) { theta_[h] = std::move(value); }

  double logit(int h, int sa_row) const { return features_.row(sa_row).dot(theta_[h]); }

  VectorXd action_probs(int h, int s, int action_count) const {
    VectorXd logits(action_count);
    for (int a = 0; a < action_count; ++a) logits[a] = logit(h, s * action_count + a);
    return softmax(logits);
  }

  ProbTable prob_table(int state_count, int action_count) const {
    ProbTable table(horizon(), MatrixXd(state_count, action_count));
    for (int h = 0; h < horizon(); ++h) {
      VectorXd flat = features_ * theta_[h];  // all (s,a) logits at once
      for (int s = 0; s < state_count; ++s) {
        VectorXd row = flat.segment(s * action_count, action_count);
        table[h].row(s) = softmax(row).transpose();
      }
    }
    return table;
  }

  std::int64_t parameter_count() const {
    return static_cast<std::int64_t>(horizon()) * actor_dim();
  }

 private:
  MatrixXd features_;
  std::vector<VectorXd> theta_;
};

// Multiplicative-weights policy realized by storing every past critic
// parameter set and summing clipped Q reconstructions at query time. The sum
// of clipped functions has no succinct parametric form, so storage grows
// linearly with the number of episodes. For a fixed tabular grid the running
// sum is cached incrementally; the cache is bit-identical to recomputing from
// the stored snapshots because both accumulate in episode order.
class ImplicitNpgPolicy {
 public:
  struct Snapshot {
    std::vector<MatrixXd> chains;  // per h: d_c x M
    std::vector<double> clip_cap;  // per h: clip level applied at query time
  };

  ImplicitNpgPolicy() = default;
  ImplicitNpgPolicy(double eta, MatrixXd critic_features, int horizon,
                    int state_count, int action_count)
      : eta_(eta),
        features_(std::move(critic_features)),
        horizon_(horizon),
        state_count_(state_count),
        action_count_(action_count),
        logit_sum_(horizon, MatrixXd::Zero(state_count, action_count)) {}

  double eta() const { return eta_; }
  int episodes_stored() const { return static_cast<int>(snapshots_.size()); }

  void store(Snapshot snapshot) {
    for (int h = 0; h < horizon_; ++h) {
      logit_sum_[h] += clipped_q_table(snapshot, h);
    }
    snapshots_.push_back(std::move(snapshot));
  }

  VectorXd action_probs(int h, int s) const {
    return softmax(eta_ * logit_sum_[h].row(s).transpose());
  }

  ProbTable prob_table() const {
    ProbTable table(horizon_, MatrixXd(state_count_, action_count_));
    for (int h = 0; h < horizon_; ++h)
      for (int s = 0; s < state_count_; ++s)
        table[h].row(s) = action_probs(h, s).transpose();
    return table;
  }

  // Rebuilds the cumulative clipped-Q sum directly from the stored snapshots.
  MatrixXd recompute_logit_sum(int h) const {
    MatrixXd sum = MatrixXd::Zero(state_count_, action_count_);
    for (const Snapshot& snap : snapshots_) sum += clipped_q_table(snap, h);
    return sum;
  }

  std::int64_t stored_parameter_count() const {
    std::int64_t total = 0;
    for (const Snapshot& snap : snapshots_)
      for (const MatrixXd& w : snap.chains) total += w.size();
    return total;
  }

 private:
  MatrixXd clipped_q_table(const Snapshot& snap, int h) const {
    // max over chains of <phi, w>, then the snapshot's clip rule.
    MatrixXd scores = (features_ * snap.chains[h]).rowwise().maxCoeff();
    MatrixXd table(state_count_, action_count_);
    const double cap = snap.clip_cap[h];
    for (int s = 0; s < state_count_; ++s)
      for (int a = 0; a < action_count_; ++a)
        table(s, a) = std::min(std::max(scores(s * action_count_ + a, 0), 0.0), cap);
    return table;
  }

  double eta_ = 1.0;
  MatrixXd features_;
  int horizon_ = 0;
  int state_count_ = 0;
  int action_count_ = 0;
  std::vector<Snapshot> snapshots_;
  std::vector<MatrixXd> logit_sum_;  // per h: S x A, sum of clipped Q tables
};

inline int sample_action(const VectorXd& probs, RandomStream& stream) {
  return stream.categorical(probs);
}

}  // namespace linrl
