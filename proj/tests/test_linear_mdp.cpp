#include <catch2/catch_amalgamated.hpp>

#include "linrl/harness.hpp"
#include "linrl/linear_mdp.hpp"
#include "linrl/serialize.hpp"
#include "test_support.hpp"

using namespace linrl;
using namespace linrl_test;

TEST_CASE("one-hot features recover any tabular dynamics exactly", "[linear_mdp]") {
  RandomStream gen(7);
  LinearMdp mdp = random_tabular_mdp(gen, 4, 3, 5);
  REQUIRE(mdp.fit_tol <= 1e-10);
  REQUIRE_FALSE(mdp.rank_deficient);
}

TEST_CASE("constant kernel is representable by a constant feature", "[linear_mdp]") {
  const int states = 3, actions = 2, horizon = 2;
  MatrixXd row(1, states);
  row << 0.2, 0.5, 0.3;
  std::vector<MatrixXd> p(horizon, row.replicate(states * actions, 1));
  std::vector<VectorXd> r(horizon, VectorXd::Constant(states * actions, 0.4));
  MatrixXd phi = MatrixXd::Ones(states * actions, 1);
  LinearMdp mdp = fit_linear_mdp(p, r, phi, states, actions);
  REQUIRE(mdp.fit_tol <= 1e-12);
}

TEST_CASE("fit rejects inconsistent table shapes", "[linear_mdp]") {
  std::vector<MatrixXd> p(2, MatrixXd::Ones(4, 2) * 0.5);
  std::vector<VectorXd> r(2, VectorXd::Zero(4));
  MatrixXd phi = MatrixXd::Identity(3, 3);  // wrong row count
  REQUIRE_THROWS_AS(fit_linear_mdp(p, r, phi, 2, 2), std::invalid_argument);
}

TEST_CASE("feature rows with norm above one are rescaled and recorded", "[linear_mdp]") {
  std::vector<MatrixXd> p(1, MatrixXd::Ones(2, 1));
  std::vector<VectorXd> r(1, VectorXd::Zero(2));
  MatrixXd phi(2, 2);
  phi << 2.0, 0.0, 0.0, 2.0;
  LinearMdp mdp = fit_linear_mdp(p, r, phi, 1, 2);
  REQUIRE(mdp.feature_rescale == Catch::Approx(0.5));
  REQUIRE(mdp.features.row(0).norm() <= 1.0 + 1e-12);
}

TEST_CASE("random mdp has the documented shape and reward structure", "[linear_mdp]") {
  LinearMdp mdp = make_random_mdp(0, 10, 20);
  REQUIRE(mdp.state_count == 15);
  REQUIRE(mdp.action_count == 5);
  REQUIRE(mdp.critic_dim == 10);
  mdp.validate();

  // Regression ceiling for the recorded fit residual: the mixture
  // construction is linear by design, so only round-off remains.
  REQUIRE(mdp.fit_tol <= 1e-12);

  for (int h = 0; h < mdp.horizon; ++h) {
    int nonzero = 0;
    for (int i = 0; i < 75; ++i)
      if (mdp.rewards[h][i] != 0.0) ++nonzero;
    REQUIRE(nonzero == 2);
    REQUIRE(mdp.reward(h, 0, 0) == Catch::Approx(0.1));
    REQUIRE(mdp.reward(h, 14, 1) == Catch::Approx(1.0));
  }
}

TEST_CASE("random mdp construction is deterministic in the seed", "[linear_mdp]") {
  LinearMdp a = make_random_mdp(3, 10, 6);
  LinearMdp b = make_random_mdp(3, 10, 6);
  REQUIRE(a.features == b.features);
  for (int h = 0; h < a.horizon; ++h) {
    REQUIRE(a.transitions[h] == b.transitions[h]);
    REQUIRE(a.rewards[h] == b.rewards[h]);
  }
  LinearMdp c = make_random_mdp(4, 10, 6);
  REQUIRE(a.transitions[0] != c.transitions[0]);
}

TEST_CASE("deep sea with full dimension has one-hot features", "[linear_mdp]") {
  LinearMdp mdp = make_deep_sea(10, 200);
  REQUIRE(mdp.state_count == 100);
  REQUIRE(mdp.horizon == 10);
  REQUIRE(mdp.fit_tol <= 1e-10);
  REQUIRE(mdp.features.isApprox(MatrixXd::Identity(200, 200)));
}

TEST_CASE("deep sea always-right policy is worth exactly one raw unit", "[linear_mdp]") {
  LinearMdp mdp = make_deep_sea(10, 200);
  ProbTable right(mdp.horizon, MatrixXd::Zero(mdp.state_count, mdp.action_count));
  for (int h = 0; h < mdp.horizon; ++h)
    for (int s = 0; s < mdp.state_count; ++s) right[h](s, 0) = 1.0;
  const ValueTable vt = exact_policy_value(mdp, right);
  const double raw =
      mdp.reward_affine.value_to_raw(vt.v[0][mdp.initial_state], mdp.horizon);
  REQUIRE(raw == Catch::Approx(1.0).margin(1e-12));

  const OptimalSolution opt = optimal_values(mdp);
  const double raw_star =
      mdp.reward_affine.value_to_raw(opt.values.v[0][mdp.initial_state], mdp.horizon);
  REQUIRE(raw_star == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("deep sea minimal size and dimension bounds", "[linear_mdp]") {
  LinearMdp mdp = make_deep_sea(2, 8);
  REQUIRE(mdp.state_count == 4);
  REQUIRE(mdp.horizon == 2);
  mdp.validate();
  REQUIRE_THROWS_AS(make_deep_sea(10, 201), std::invalid_argument);
  REQUIRE_THROWS_AS(make_deep_sea(1, 2), std::invalid_argument);
}

TEST_CASE("rollout of a deterministic chain is the unique trajectory", "[linear_mdp]") {
  LinearMdp mdp = make_deep_sea(4, 32);
  ProbTable right(mdp.horizon, MatrixXd::Zero(mdp.state_count, mdp.action_count));
  for (int h = 0; h < mdp.horizon; ++h)
    for (int s = 0; s < mdp.state_count; ++s) right[h](s, 0) = 1.0;
  RandomStream stream(5);
  Trajectory traj = rollout(mdp, right, stream);
  REQUIRE(traj.steps.size() == 4);
  // Diagonal descent: (0,0) -> (1,1) -> (2,2) -> (3,3).
  REQUIRE(traj.steps[0].state == 0);
  REQUIRE(traj.steps[1].state == 1 * 4 + 1);
  REQUIRE(traj.steps[2].state == 2 * 4 + 2);
  REQUIRE(traj.steps[3].state == 3 * 4 + 3);
}

TEST_CASE("rollout is reproducible under a fixed seed", "[linear_mdp]") {
  LinearMdp mdp = make_random_mdp(0, 10, 3);
  ProbTable uniform = uniform_policy(mdp);
  RandomStream s1(42), s2(42);
  Trajectory a = rollout(mdp, uniform, s1);
  Trajectory b = rollout(mdp, uniform, s2);
  REQUIRE(a.steps.size() == 3);
  for (std::size_t i = 0; i < a.steps.size(); ++i) {
    REQUIRE(a.steps[i].state == b.steps[i].state);
    REQUIRE(a.steps[i].action == b.steps[i].action);
    REQUIRE(a.steps[i].next_state == b.steps[i].next_state);
  }
}

TEST_CASE("single state mdp accumulates its reward over the horizon", "[linear_mdp]") {
  LinearMdp mdp = single_state_mdp(VectorXd::Ones(1), 5);
  const ValueTable vt = exact_policy_value(mdp, uniform_policy(mdp));
  REQUIRE(vt.v[0][0] == Catch::Approx(5.0));
}

TEST_CASE("uniform policy on a two-armed bandit averages the rewards", "[linear_mdp]") {
  VectorXd rewards(2);
  rewards << 1.0, 0.0;
  LinearMdp mdp = single_state_mdp(rewards, 1);
  const ValueTable vt = exact_policy_value(mdp, uniform_policy(mdp));
  REQUIRE(vt.v[0][0] == Catch::Approx(0.5));
}

TEST_CASE("optimal values pick the better arm and dominate any policy", "[linear_mdp]") {
  VectorXd rewards(2);
  rewards << 0.3, 0.7;
  LinearMdp mdp = single_state_mdp(rewards, 1);
  const OptimalSolution opt = optimal_values(mdp);
  REQUIRE(opt.values.v[0][0] == Catch::Approx(0.7));
  REQUIRE(opt.greedy[0][0] == 1);

  RandomStream gen(11);
  LinearMdp big = random_tabular_mdp(gen, 5, 3, 6);
  const OptimalSolution opt_big = optimal_values(big);
  const ValueTable uni = exact_policy_value(big, uniform_policy(big));
  for (int s = 0; s < big.state_count; ++s)
    REQUIRE(opt_big.values.v[0][s] >= uni.v[0][s] - 1e-12);

  // Evaluating the greedy policy reproduces the optimal values entrywise.
  const ValueTable back = exact_policy_value(big, opt_big.policy);
  for (int h = 0; h < big.horizon; ++h)
    for (int s = 0; s < big.state_count; ++s)
      REQUIRE(back.v[h][s] == Catch::Approx(opt_big.values.v[h][s]).margin(1e-12));
}

TEST_CASE("greedy tie-breaking picks the smallest action index", "[linear_mdp]") {
  VectorXd rewards(3);
  rewards << 0.4, 0.4, 0.1;
  LinearMdp mdp = single_state_mdp(rewards, 1);
  REQUIRE(optimal_values(mdp).greedy[0][0] == 0);
}

TEST_CASE("monte carlo returns agree with exact evaluation", "[linear_mdp]") {
  LinearMdp mdp = make_random_mdp(1, 10, 5);
  ProbTable uniform = uniform_policy(mdp);
  const double exact = exact_policy_value(mdp, uniform).v[0][mdp.initial_state];

  RandomStream stream(17);
  const int n = 10000;
  double sum = 0.0, sum_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    Trajectory traj = rollout(mdp, uniform, stream);
    double ret = 0.0;
    for (const TrajectoryStep& st : traj.steps) ret += st.reward;
    sum += ret;
    sum_sq += ret * ret;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum_sq / n - mean * mean) / n);
  REQUIRE(std::abs(mean - exact) <= 4.0 * se);
}

TEST_CASE("value difference identity holds for arbitrary tabular inputs", "[linear_mdp]") {
  RandomStream gen(23);
  LinearMdp mdp = random_tabular_mdp(gen, 4, 3, 5);
  for (int trial = 0; trial < 10; ++trial) {
    ProbTable pi = random_policy(gen, mdp);
    ProbTable pi_prime = random_policy(gen, mdp);
    std::vector<MatrixXd> q(mdp.horizon, MatrixXd(mdp.state_count, mdp.action_count));
    for (int h = 0; h < mdp.horizon; ++h)
      for (int s = 0; s < mdp.state_count; ++s)
        for (int a = 0; a < mdp.action_count; ++a)
          q[h](s, a) = gen.uniform() * mdp.horizon;
    REQUIRE(value_difference_check(mdp, pi, pi_prime, q) <= 1e-9);
  }
}

TEST_CASE("environment json round trip preserves the tables", "[linear_mdp]") {
  LinearMdp mdp = make_random_mdp(2, 10, 4);
  LinearMdp back = mdp_from_json(mdp_to_json(mdp));
  REQUIRE(back.features == mdp.features);
  REQUIRE(back.fit_tol == mdp.fit_tol);
  for (int h = 0; h < mdp.horizon; ++h) {
    REQUIRE(back.transitions[h] == mdp.transitions[h]);
    REQUIRE(back.rewards[h] == mdp.rewards[h]);
    REQUIRE(back.next_state_measure[h] == mdp.next_state_measure[h]);
  }
}
