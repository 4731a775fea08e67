#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

namespace linrl {

// Weighted state-action subset produced by the greedy design loop. gram_alg
// carries the identity anchor used inside the greedy gain; gram_design is the
// pure weighted second-moment matrix used by the actor regression.
struct Coreset {
  std::vector<int> points;       // row indices with multiplicity
  Eigen::VectorXd weights;       // rho over points, sums to 1 (empty if no points)
  Eigen::MatrixXd gram_alg;      // I + sum phi phi^T over selected points
  Eigen::MatrixXd gram_design;   // sum rho phi phi^T (1e-10 I added if singular)
  double achieved_score = 0.0;   // final full-scan max of ||phi||_{gram_alg^-1}
  bool terminated_by_threshold = false;
  bool cap_hit = false;
  bool design_gram_regularized = false;
};

// Greedy coverage construction: every pass scans all candidates, adds the
// single feature with the highest gain ||phi||_{G^-1}, and rank-one-updates
// G, until the max gain drops to eps. The cap bounds how many distinct
// candidates may enter the coreset (repeat insertions of already-selected
// points only reweight them); cap_fraction = 1 disables it, since a coreset
// may legitimately hold every candidate several times over. An absolute
// entry ceiling guards termination for extreme thresholds.
inline Coreset greedy_g_design(const Eigen::MatrixXd& features, double eps,
                               double cap_fraction = 0.8) {
  if (eps <= 0.0) throw std::invalid_argument("greedy_g_design: eps must be positive");
  if (cap_fraction <= 0.0 || cap_fraction > 1.0)
    throw std::invalid_argument("greedy_g_design: cap_fraction must be in (0, 1]");
  const int n = static_cast<int>(features.rows());
  const int d = static_cast<int>(features.cols());
  const std::size_t distinct_cap =
      cap_fraction < 1.0
          ? static_cast<std::size_t>(std::llround(cap_fraction * static_cast<double>(n)))
          : static_cast<std::size_t>(n) + 1;  // unreachable: cap disabled
  const std::size_t entry_ceiling = 10000u * static_cast<std::size_t>(d);

  Coreset out;
  out.gram_alg = Eigen::MatrixXd::Identity(d, d);
  std::vector<bool> selected(n, false);
  std::size_t distinct = 0;
  while (true) {
    const Eigen::MatrixXd inv = out.gram_alg.inverse();
    double g_max = 0.0;
    int argmax = -1;
    for (int i = 0; i < n; ++i) {
      const double g = std::sqrt(features.row(i) * inv * features.row(i).transpose());
      if (g > g_max) {
        g_max = g;
        argmax = i;
      }
    }
    if (g_max <= eps || argmax < 0) {
      out.achieved_score = g_max;
      out.terminated_by_threshold = true;
      break;
    }
    out.points.push_back(argmax);
    out.gram_alg += features.row(argmax).transpose() * features.row(argmax);
    if (!selected[argmax]) {
      selected[argmax] = true;
      ++distinct;
    }
    if (distinct >= distinct_cap || out.points.size() >= entry_ceiling) {
      out.cap_hit = true;
      const Eigen::MatrixXd final_inv = out.gram_alg.inverse();
      double score = 0.0;
      for (int i = 0; i < n; ++i)
        score = std::max(score, std::sqrt(features.row(i) * final_inv *
                                          features.row(i).transpose()));
      out.achieved_score = score;
      break;
    }
  }

  const std::size_t m = out.points.size();
  out.weights = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(m),
                                          m == 0 ? 0.0 : 1.0 / static_cast<double>(m));
  out.gram_design = Eigen::MatrixXd::Zero(d, d);
  for (std::size_t k = 0; k < m; ++k) {
    const auto row = features.row(out.points[k]);
    out.gram_design += (1.0 / static_cast<double>(m)) * row.transpose() * row;
  }
  if (m > 0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(out.gram_design);
    const double lo = eig.eigenvalues().minCoeff();
    const double hi = eig.eigenvalues().maxCoeff();
    if (lo <= 1e-12 * std::max(1.0, hi)) {
      out.gram_design += 1e-10 * Eigen::MatrixXd::Identity(d, d);
      out.design_gram_regularized = true;
    }
  }
  return out;
}

// Max of ||phi||_{G^-1} over the whole candidate table, with the identity-
// anchored G of the greedy loop.
inline double coverage_score(const Coreset& coreset, const Eigen::MatrixXd& features) {
  const Eigen::MatrixXd inv = coreset.gram_alg.inverse();
  double score = 0.0;
  for (int i = 0; i < features.rows(); ++i)
    score = std::max(score, std::sqrt(features.row(i) * inv * features.row(i).transpose()));
  return score;
}

struct KwReference {
  double design_norm_bound;
  double size_bound;
};

// Existence bounds for an optimal design of the same dimension, reported for
// comparison only; the greedy output is not required to match them.
inline KwReference kw_reference(int actor_dim) {
  if (actor_dim < 1) throw std::invalid_argument("kw_reference: actor_dim must be >= 1");
  const double d = static_cast<double>(actor_dim);
  return {2.0 * d, 4.0 * d * std::log(std::log(d + 4.0)) + 28.0};
}

}  // namespace linrl
