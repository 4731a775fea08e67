#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "linrl/critic.hpp"

namespace linrl {

struct PosteriorCheckOptions {
  int chains = 5000;
  std::uint64_t seed = 0x706f7374ULL;
  double alpha_perturb = 1.0;  // scales the step sizes fed to the analytic law
  bool noise = true;           // false checks the zero-temperature limit
};

struct PosteriorCheckEntry {
  std::string name;
  double observed = 0.0;
  double expected = 0.0;
  double se = 0.0;
  double z = 0.0;
  bool pass = true;
};

struct PosteriorCheckReport {
  std::vector<PosteriorCheckEntry> entries;
  bool pass = true;
  double zeta_inv = 0.0;
  int chains = 0;
};

// Empirically validates the closed-form Gaussian law of the chain iterates:
// a two-episode synthetic regression stream, many independent chains, and a
// per-entry four-standard-error comparison of mean and covariance. Feeding a
// perturbed step size to the analytic side serves as the negative control.
inline PosteriorCheckReport run_posterior_check(const PosteriorCheckOptions& opts) {
  const int dim = 2;
  const double lambda = 1.0;
  const double zeta_inv = opts.noise ? 0.04 : 0.0;

  MatrixXd phi1(3, dim), phi2(2, dim);
  phi1 << 1.0, 0.0, 0.6, 0.8, 0.0, 1.0;
  phi2 << 0.8, -0.6, std::sqrt(0.5), std::sqrt(0.5);
  VectorXd y1(3), y2(2);
  y1 << 1.0, 2.0, 1.5;
  y2 << 0.5, 2.5;

  std::vector<PosteriorStage> stages(2);
  stages[0].lambda_mat = lambda * MatrixXd::Identity(dim, dim) + phi1.transpose() * phi1;
  stages[0].b = phi1.transpose() * y1;
  stages[0].steps = 6;
  stages[1].lambda_mat = stages[0].lambda_mat + phi2.transpose() * phi2;
  stages[1].b = stages[0].b + phi2.transpose() * y2;
  stages[1].steps = 9;
  for (PosteriorStage& st : stages) {
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(st.lambda_mat);
    st.alpha = 1.0 / (2.0 * eig.eigenvalues().maxCoeff());
  }

  std::vector<PosteriorStage> predicted = stages;
  for (PosteriorStage& st : predicted) st.alpha *= opts.alpha_perturb;
  const PosteriorMoments moments =
      posterior_moments(predicted, zeta_inv, VectorXd::Zero(dim));

  const int n = opts.chains;
  MatrixXd finals(dim, n);
  for (int c = 0; c < n; ++c) {
    RandomStream stream(mix_key(opts.seed, 0x636861696eULL, c));
    VectorXd w = VectorXd::Zero(dim);
    for (const PosteriorStage& st : stages)
      for (int j = 0; j < st.steps; ++j)
        w = lmc_step(w, st.lambda_mat, st.b, st.alpha, zeta_inv, stream);
    finals.col(c) = w;
  }

  const VectorXd mean = finals.rowwise().mean();
  MatrixXd centered = finals.colwise() - mean;
  const MatrixXd cov = centered * centered.transpose() / static_cast<double>(n - 1);

  PosteriorCheckReport report;
  report.zeta_inv = zeta_inv;
  report.chains = n;
  auto add = [&report](const std::string& name, double observed, double expected,
                       double se) {
    PosteriorCheckEntry e;
    e.name = name;
    e.observed = observed;
    e.expected = expected;
    e.se = se;
    const double slack = 4.0 * se + 1e-9;
    e.z = se > 0.0 ? std::abs(observed - expected) / se : 0.0;
    e.pass = std::abs(observed - expected) <= slack;
    report.entries.push_back(e);
    report.pass = report.pass && e.pass;
  };

  for (int i = 0; i < dim; ++i) {
    const double se = std::sqrt(moments.covariance(i, i) / n);
    add("mean[" + std::to_string(i) + "]", mean[i], moments.mean[i], se);
  }
  for (int i = 0; i < dim; ++i) {
    for (int j = i; j < dim; ++j) {
      const double var = moments.covariance(i, i) * moments.covariance(j, j) +
                         moments.covariance(i, j) * moments.covariance(i, j);
      const double se = std::sqrt(var / (n - 1));
      add("cov[" + std::to_string(i) + "," + std::to_string(j) + "]", cov(i, j),
          moments.covariance(i, j), se);
    }
  }
  return report;
}

}  // namespace linrl
