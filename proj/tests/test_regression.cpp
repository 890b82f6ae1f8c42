// Exact moment propagation for SGD on least squares. The anchor is a two-point
// dataset where one step can be done by hand; beyond that, the t = 0 variance
// is cross-checked against full batch enumeration and structural invariants
// (PSD covariance, deterministic b = n limit, monotonicity in b) are enforced.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "sgdvar/batch_enum.hpp"
#include "sgdvar/cb_poly.hpp"
#include "sgdvar/dataset.hpp"
#include "sgdvar/regression.hpp"
#include "sgdvar/rng.hpp"
#include "sgdvar/schedule.hpp"

using namespace sgdvar;
using namespace sgdvar::regression;

namespace {

// X = [[1],[1]], y = [1,-1]: Gram mean C = 1, target correlation u = 0,
// per-example gradients at w are (w - 1) and (w + 1).
Dataset two_point_dataset() {
  Eigen::MatrixXd X(2, 1);
  X << 1.0, 1.0;
  Eigen::VectorXd y(2);
  y << 1.0, -1.0;
  return Dataset::from_arrays(X, y);
}

}  // namespace

TEST_CASE("one hand-computed step on the two-point dataset") {
  const Dataset ds = two_point_dataset();
  Eigen::VectorXd w0(1);
  w0 << 1.0;
  const auto states = propagate_moments(ds, w0, LearningRateSchedule::constant(0.5), 1);
  REQUIRE(states.size() == 2);

  // Start: E[w_0] = 1, E[w_0 w_0'] = 1 independent of c.
  CHECK(states[0].mean(0) == doctest::Approx(1.0));
  CHECK(states[0].second_moment.eval(0.3)(0, 0) == doctest::Approx(1.0));

  // After one step with alpha = 1/2: E[w_1] = 1 - 0.5*(1*1 - 0) = 0.5 and
  // E[w_1^2] = 0.25 * (1 + c)  (gradient second moments: G_1 = 0, G_2 = 4,
  // Gbar = 1, so the alpha^2 term is 0.25*(2c + (1-c))).
  CHECK(states[1].mean(0) == doctest::Approx(0.5));
  for (double c : {0.0, 0.25, 0.5, 1.0}) {
    CHECK(states[1].second_moment.eval(c)(0, 0) ==
          doctest::Approx(0.25 * (1.0 + c)).epsilon(1e-14));
  }
  CHECK(states[1].second_moment.degree() == 1);
}

TEST_CASE("variance of g_0 on the two-point dataset at w = 0") {
  const Dataset ds = two_point_dataset();
  const Eigen::VectorXd w0 = Eigen::VectorXd::Zero(1);
  const auto states = propagate_moments(ds, w0, LearningRateSchedule::constant(0.1), 0);
  // Per-example gradients are -1 and +1 with zero mean, so Var(g_0) = c(2,b):
  // 1 at b = 1 and 0 at b = 2.
  CHECK(variance_stochastic_gradient(states[0], ds, 1) == doctest::Approx(1.0));
  CHECK(variance_stochastic_gradient(states[0], ds, 2) == doctest::Approx(0.0));
  CHECK(variance_full_gradient(states[0], ds, 1) == doctest::Approx(0.0));
}

TEST_CASE("t = 0 variance agrees with full batch enumeration") {
  RngStream s(31, 0);
  const Dataset ds = synthetic_regression_dataset(s, 8, 3, 0.4);
  const Eigen::VectorXd w0 = gaussian_matrix(s, 3, 1).col(0);
  const auto states = propagate_moments(ds, w0, LearningRateSchedule::constant(0.1), 0);
  const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(3, 3);
  const double full_sq = ds.full_gradient(w0).squaredNorm();
  for (int b = 1; b <= ds.n(); ++b) {
    const double expected = second_moment_enumerated_serial(ds, w0, b, I) - full_sq;
    const double got = variance_stochastic_gradient(states[0], ds, b);
    CHECK(got == doctest::Approx(expected).epsilon(1e-10));
  }
}

TEST_CASE("covariance E[w w'] - E[w]E[w]' stays PSD along the trajectory") {
  RngStream s(53, 0);
  const Dataset ds = synthetic_regression_dataset(s, 10, 4, 0.5);
  const Eigen::VectorXd w0 = gaussian_matrix(s, 4, 1).col(0);
  const auto states = propagate_moments(ds, w0, LearningRateSchedule::constant(0.05), 6);
  for (const MomentState& st : states) {
    for (int b : {1, 2, 5, 10}) {
      const Eigen::MatrixXd cov = st.second_moment.eval(cb_value(ds.n(), b)) -
                                  st.mean * st.mean.transpose();
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
      const double scale = std::max(1.0, eig.eigenvalues().cwiseAbs().maxCoeff());
      CHECK(eig.eigenvalues().minCoeff() > -1e-12 * scale);
    }
  }
}

TEST_CASE("c = 0 reproduces the deterministic full-gradient trajectory") {
  RngStream s(61, 0);
  const Dataset ds = synthetic_regression_dataset(s, 7, 2, 0.3);
  const Eigen::VectorXd w0 = gaussian_matrix(s, 2, 1).col(0);
  const LearningRateSchedule sched = LearningRateSchedule::constant(0.08);
  const auto states = propagate_moments(ds, w0, sched, 5);

  Eigen::VectorXd w = w0;
  for (int t = 0; t <= 5; ++t) {
    CHECK((states[t].mean - w).norm() < 1e-12);
    // At b = n the iterate is deterministic: second moment = outer product.
    const Eigen::MatrixXd S = states[t].second_moment.eval(0.0);
    CHECK((S - w * w.transpose()).norm() < 1e-11 * std::max(1.0, S.norm()));
    // Var(g_t) at b = n vanishes up to cancellation noise.
    const double vg = variance_stochastic_gradient(states[t], ds, ds.n());
    CHECK(std::abs(vg) < 1e-10);
    w -= sched.alpha(t) * ds.full_gradient(w);
  }
}

TEST_CASE("both variances are non-increasing in b on random instances") {
  RngStream s(71, 0);
  for (int inst = 0; inst < 5; ++inst) {
    const int n = 4 + static_cast<int>(s.uniform_below(7));
    const int p = 1 + static_cast<int>(s.uniform_below(4));
    const Dataset ds = synthetic_regression_dataset(s, n, p, 0.5);
    const Eigen::VectorXd w0 = gaussian_matrix(s, p, 1).col(0);
    const auto states =
        propagate_moments(ds, w0, LearningRateSchedule::constant(0.05), 6);
    for (int t = 0; t <= 6; ++t) {
      const MonotonicityTable table = monotonicity_table(states, ds, t);
      CHECK(table.var_g_non_increasing);
      CHECK(table.var_full_non_increasing);
      CHECK(static_cast<int>(table.rows.size()) == n);
      CHECK(table.rows.front().b == 1);
      CHECK(table.rows.back().b == n);
    }
  }
}

TEST_CASE("linear combination second moment matches direct evaluation at t = 0") {
  RngStream s(83, 0);
  const Dataset ds = synthetic_regression_dataset(s, 6, 3, 0.4);
  const Eigen::VectorXd w0 = gaussian_matrix(s, 3, 1).col(0);
  const auto states = propagate_moments(ds, w0, LearningRateSchedule::constant(0.1), 0);

  LinearCombTerm term;
  term.coefficient_matrices[0] = gaussian_matrix(s, 2, 3);
  term.coefficient_matrices[3] = gaussian_matrix(s, 2, 3);
  term.coefficient_matrices[5] = gaussian_matrix(s, 2, 3);
  term.scalar_weight = 1.75;

  // w_0 is deterministic, so the expectation is just the squared norm.
  Eigen::VectorXd comb = Eigen::VectorXd::Zero(2);
  for (const auto& [i, Ai] : term.coefficient_matrices)
    comb += Ai * ds.sample_gradient(i, w0);
  const double expected = 1.75 * comb.squaredNorm();

  for (int b : {1, 2, 4, 6}) {
    CHECK(linear_comb_second_moment(ds, states[0], term, b) ==
          doctest::Approx(expected).epsilon(1e-12));
  }

  LinearCombTerm empty;
  CHECK_THROWS_AS(linear_comb_second_moment(ds, states[0], empty, 1),
                  std::invalid_argument);
}

TEST_CASE("propagation validates its inputs") {
  const Dataset ds = two_point_dataset();
  const Eigen::VectorXd bad_w0 = Eigen::VectorXd::Zero(3);
  CHECK_THROWS_AS(
      propagate_moments(ds, bad_w0, LearningRateSchedule::constant(0.1), 1),
      std::invalid_argument);
  const Eigen::VectorXd w0 = Eigen::VectorXd::Zero(1);
  CHECK_THROWS_AS(propagate_moments(ds, w0, LearningRateSchedule::constant(0.1), -1),
                  std::invalid_argument);
}
