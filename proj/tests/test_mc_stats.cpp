// Monte Carlo estimators and the 1/b polynomial fit. The estimators are
// validated on distributions whose variance is known exactly, the ensembles
// against the exact moment engine at t = 0, and the fit on synthetic data
// that is an exact polynomial in 1/b.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "sgdvar/dataset.hpp"
#include "sgdvar/mc_stats.hpp"
#include "sgdvar/regression.hpp"
#include "sgdvar/rng.hpp"
#include "sgdvar/schedule.hpp"
#include "sgdvar/two_layer.hpp"

using namespace sgdvar;
using namespace sgdvar::mc;

TEST_CASE("identical replicates give exactly zero variance and a point CI") {
  Eigen::MatrixXd samples(50, 3);
  for (int r = 0; r < 50; ++r) samples.row(r) << 1.5, -2.0, 0.25;
  const VarianceEstimate est = empirical_variance(samples, 500, RngStream(1, 0));
  CHECK(est.variance == 0.0);
  CHECK(est.ci_lo == 0.0);
  CHECK(est.ci_hi == 0.0);
  CHECK(est.contains(0.0));
}

TEST_CASE("empirical variance recovers a known Gaussian variance") {
  // Rows iid N(0, diag(1, 4)): total variance 5.
  RngStream s(211, 0);
  const int rows = 4000;
  Eigen::MatrixXd samples(rows, 2);
  for (int r = 0; r < rows; ++r) {
    samples(r, 0) = s.normal();
    samples(r, 1) = 2.0 * s.normal();
  }
  const VarianceEstimate est = empirical_variance(samples, 1000, RngStream(2, 0));
  CHECK(est.contains(5.0));
  CHECK(std::abs(est.variance - 5.0) < 0.4);
  CHECK(est.ci_lo < est.variance);
  CHECK(est.variance < est.ci_hi);

  // Pure function of data and stream.
  const VarianceEstimate again = empirical_variance(samples, 1000, RngStream(2, 0));
  CHECK(again.variance == est.variance);
  CHECK(again.ci_lo == est.ci_lo);
  CHECK(again.ci_hi == est.ci_hi);

  CHECK_THROWS_AS(empirical_variance(Eigen::MatrixXd::Zero(1, 2), 100, RngStream(3, 0)),
                  std::invalid_argument);
}

TEST_CASE("bootstrap interval covers the truth at roughly its nominal rate") {
  // 100 independent datasets of 300 scalar N(0,1) samples; the 99% interval
  // should cover variance 1 in at least 95 of them.
  RngStream s(223, 0);
  int covered = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::MatrixXd samples(300, 1);
    for (int r = 0; r < 300; ++r) samples(r, 0) = s.normal();
    const VarianceEstimate est =
        empirical_variance(samples, 500, RngStream(400 + trial, 0));
    if (est.contains(1.0)) ++covered;
  }
  CHECK(covered >= 95);
}

TEST_CASE("regression ensemble matches the exact engine at t = 0") {
  RngStream s(227, 0);
  const Dataset ds = synthetic_regression_dataset(s, 6, 3, 0.4);
  const Eigen::VectorXd w0 = gaussian_matrix(s, 3, 1).col(0);
  const LearningRateSchedule sched = LearningRateSchedule::constant(0.05);
  const auto states = sgdvar::regression::propagate_moments(ds, w0, sched, 2);

  for (int b : {1, 3, 6}) {
    const RunEnsemble ens = run_regression_ensemble(ds, w0, sched, b, 4000, 2, 99);
    CHECK(ens.model == "regression");
    REQUIRE(ens.grads.size() == 3);
    CHECK(ens.grads[0].rows() == 4000);
    CHECK(ens.grads[0].cols() == 3);

    // g_0 is drawn at the deterministic start, so its variance is exact in
    // the engine; the MC interval must catch it (b = n is deterministic).
    const double exact = sgdvar::regression::variance_stochastic_gradient(states[0], ds, b);
    const VarianceEstimate est = empirical_variance(ens, 0, 1, 800);
    if (b == static_cast<int>(ds.n())) {
      // All runs take the identical full-batch step; the unbiased variance
      // formula leaves only summation rounding (~1e-28), not an exact zero.
      CHECK(std::abs(est.variance) < 1e-20);
      CHECK(std::abs(exact) < 1e-12);
    } else {
      CHECK(est.contains(exact));
    }

    // Determinism across identical calls.
    const RunEnsemble again = run_regression_ensemble(ds, w0, sched, b, 4000, 2, 99);
    CHECK((again.grads[2] - ens.grads[2]).norm() == 0.0);
  }
}

TEST_CASE("two-layer ensemble records conditional variances and gap norms") {
  RngStream init(229, 0);
  const auto st = twolayer::TwoLayerState::random_init(init, 2, 3, 2);
  const RunEnsemble ens =
      run_two_layer_ensemble(st, LearningRateSchedule::constant(0.05), 2, 300, 3, 7);
  CHECK(ens.model == "two_layer");
  REQUIRE(ens.grads.size() == 4);
  REQUIRE(ens.grads2.size() == 4);
  CHECK(ens.grads[0].cols() == 3 * 2);
  CHECK(ens.grads2[0].cols() == 2 * 3);
  REQUIRE(ens.cond_var_g1_mean.size() == 4);
  REQUIRE(ens.mean_gap_norm.size() == 4);

  // At t = 0 every run sits at the same state, so the recorded conditional
  // variance average equals the closed form exactly.
  CHECK(ens.cond_var_g1_mean[0] ==
        doctest::Approx(twolayer::conditional_variance_g1(st, 2)).epsilon(1e-12));
  CHECK(ens.cond_var_g2_mean[0] ==
        doctest::Approx(twolayer::conditional_variance_g2(st, 2)).epsilon(1e-12));
  CHECK(ens.mean_gap_norm[0] == doctest::Approx(st.gap.norm()).epsilon(1e-12));

  // And the t = 0 bootstrap variance must catch that closed form.
  const VarianceEstimate est = empirical_variance(ens, 0, 1, 800);
  CHECK(est.contains(twolayer::conditional_variance_g1(st, 2)));
}

TEST_CASE("grouped estimator agrees with the known variance of a Gaussian") {
  auto sampler = [](RngStream& stream, Eigen::VectorXd& out) {
    out.resize(2);
    out(0) = stream.normal();
    out(1) = 3.0 * stream.normal();  // total variance 10
  };
  const VarianceEstimate est =
      grouped_variance_mc(sampler, 2, 120000, 300, RngStream(233, 0));
  CHECK(std::abs(est.variance - 10.0) < 0.5);
  CHECK(est.contains(10.0));

  const VarianceEstimate again =
      grouped_variance_mc(sampler, 2, 120000, 300, RngStream(233, 0));
  CHECK(again.variance == est.variance);
}

TEST_CASE("exact 1/b polynomial is recovered to rounding accuracy") {
  // v(b) = 3/b with free intercept: beta = (0, 3), zero residual.
  std::vector<std::pair<double, double>> points;
  for (int b : {1, 2, 3, 4, 6, 8}) points.emplace_back(b, 3.0 / b);
  const PolyFit fit = fit_inverse_b_poly(points, 1, false);
  CHECK(std::abs(fit.coefficients(0)) < 1e-12);
  CHECK(fit.coefficients(1) == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(fit.residual_rms < 1e-12);
  CHECK(polyfit_eval(fit, 5.0) == doctest::Approx(0.6).epsilon(1e-10));

  // Same data through the zero-intercept basis.
  const PolyFit through_zero = fit_inverse_b_poly(points, 1, true);
  CHECK(through_zero.coefficients(0) == 0.0);
  CHECK(through_zero.coefficients(1) == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("degree t+1 interpolation predicts the exact variance off the grid") {
  // The engine's variance at iteration t is a degree <= t+1 polynomial in the
  // batch factor, hence in 1/b (c is affine in 1/b). Fit on a subset of batch
  // sizes, then predict all of them.
  RngStream s(239, 0);
  const Dataset ds = synthetic_regression_dataset(s, 20, 4, 0.5);
  const Eigen::VectorXd w0 = gaussian_matrix(s, 4, 1).col(0);
  const auto states =
      sgdvar::regression::propagate_moments(ds, w0, LearningRateSchedule::constant(0.04), 3);

  const int t = 3;
  const std::vector<int> node_b = {1, 2, 4, 9, 20};
  std::vector<std::pair<double, double>> nodes;
  for (int b : node_b)
    nodes.emplace_back(b, sgdvar::regression::variance_stochastic_gradient(states[t], ds, b));
  const PolyFit fit = fit_inverse_b_poly(nodes, t + 1, false);

  // Predict the held-out batch sizes. (At a node like b = n the exact value
  // is pure cancellation residue ~1e-16, so "relative" is only meaningful off
  // the node set, where the variance is bounded away from zero.)
  double max_rel = 0.0;
  for (int b = 1; b <= 20; ++b) {
    if (std::find(node_b.begin(), node_b.end(), b) != node_b.end()) continue;
    const double exact = sgdvar::regression::variance_stochastic_gradient(states[t], ds, b);
    const double pred = polyfit_eval(fit, b);
    max_rel = std::max(max_rel, std::abs(pred - exact) / std::abs(exact));
  }
  CHECK(max_rel < 1e-8);
}

TEST_CASE("fit diagnostics and failure modes") {
  std::vector<std::pair<double, double>> points;
  for (int b : {1, 2, 3}) points.emplace_back(b, 1.0 / b);
  // More coefficients than points.
  CHECK_THROWS_AS(fit_inverse_b_poly(points, 3, false), std::invalid_argument);

  // Exact duplicates are rejected up front...
  std::vector<std::pair<double, double>> dup = {
      {2.0, 0.5}, {3.0, 0.4}, {2.0, 0.5}, {4.0, 0.3}, {5.0, 0.2}};
  CHECK_THROWS_AS(fit_inverse_b_poly(dup, 3, false), std::invalid_argument);

  // ...and merely near-coincident abscissas trip the rank-deficiency check.
  std::vector<std::pair<double, double>> close;
  for (int k = 0; k < 5; ++k) close.emplace_back(2.0 + k * 1e-13, 0.5);
  CHECK_THROWS_AS(fit_inverse_b_poly(close, 3, false), std::runtime_error);

  CHECK_THROWS_AS(fit_inverse_b_poly({{0.0, 1.0}, {1.0, 1.0}}, 1, false),
                  std::invalid_argument);
}

TEST_CASE("sweep grid contains powers of two, the spaced multiples, and n") {
  const std::vector<int> grid = sweep_batch_grid(20);
  // ceil(20/12) = 2: multiples 2,4,...,20; powers 2,4,8,16.
  const std::vector<int> expected = {2, 4, 6, 8, 10, 12, 14, 16, 18, 20};
  CHECK(grid == expected);

  const std::vector<int> small = sweep_batch_grid(5);
  CHECK(small.front() >= 1);
  CHECK(small.back() == 5);
  for (std::size_t k = 0; k + 1 < small.size(); ++k) CHECK(small[k] < small[k + 1]);
  CHECK_THROWS_AS(sweep_batch_grid(1), std::invalid_argument);
}
