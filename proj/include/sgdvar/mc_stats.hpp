#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "sgdvar/dataset.hpp"
#include "sgdvar/rng.hpp"
#include "sgdvar/schedule.hpp"
#include "sgdvar/two_layer.hpp"

namespace sgdvar::mc {

// Variance estimate for a vector-valued statistic with a percentile-bootstrap
// confidence interval (nearest-rank quantiles of the resampled estimates).
struct VarianceEstimate {
  double variance = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  double ci_halfwidth() const { return 0.5 * (ci_hi - ci_lo); }
  bool contains(double v) const { return v >= ci_lo && v <= ci_hi; }
};

// rows = independent replicates, columns = vector components. Point estimate
// is the unbiased total variance sum_j s_j^2 = (1/(R-1)) sum_r ||g_r - gbar||^2.
// The bootstrap resamples rows with replacement (default 1000 resamples, 99%
// interval), one derived substream per resample, so the result is a pure
// function of the data and the stream.
VarianceEstimate empirical_variance(const Eigen::MatrixXd& samples, int resamples,
                                    const RngStream& stream, double level = 0.99);

// Replicated SGD runs from one shared starting point; run r draws every batch
// from stream (master_seed, stream_id = r). grads[t] stores vec(g_t) per run
// as rows; for the two-layer model grads holds g1 and grads2 holds g2, and the
// exact conditional variances at the visited states are averaged per t.
// Runs are OpenMP-parallel with slot-indexed writes and ordered reductions,
// so the ensemble is bit-identical for every thread count.
struct RunEnsemble {
  std::string model;  // "regression" | "two_layer"
  int b = 0;
  int runs = 0;
  int t_max = 0;
  std::uint64_t master_seed = 0;
  std::vector<Eigen::MatrixXd> grads;      // t -> runs x dim
  std::vector<Eigen::MatrixXd> grads2;     // two-layer only
  std::vector<Eigen::VectorXd> mean_iterate;  // regression only: t -> E[w_t] estimate
  std::vector<double> cond_var_g1_mean;    // two-layer only
  std::vector<double> cond_var_g2_mean;    // two-layer only
  std::vector<double> mean_gap_norm;       // two-layer only: t -> mean ||gap||_F
};

RunEnsemble run_regression_ensemble(const Dataset& ds, const Eigen::VectorXd& w0,
                                    const LearningRateSchedule& schedule, int b,
                                    int runs, int t_max, std::uint64_t master_seed);

RunEnsemble run_two_layer_ensemble(const twolayer::TwoLayerState& init,
                                   const LearningRateSchedule& schedule, int b,
                                   int runs, int t_max, std::uint64_t master_seed);

// Bootstrap variance of the recorded gradient at iteration t; estimator picks
// grads (1, the default) or grads2 (2). The bootstrap stream is derived from
// the ensemble's master seed with a purpose tag distinct from run streams.
VarianceEstimate empirical_variance(const RunEnsemble& ensemble, int t,
                                    int estimator = 1, int resamples = 1000);

// Streaming variance estimate for a sampler too large to keep per-sample:
// total_samples are drawn in `groups` equal groups (sampler fills one vector
// per call; group g uses substream g), per-group means are kept, and the CI
// comes from bootstrapping the groups. Used for million-batch checks of the
// closed-form conditional variances.
VarianceEstimate grouped_variance_mc(
    const std::function<void(RngStream&, Eigen::VectorXd&)>& sampler, int sample_dim,
    long long total_samples, int groups, const RngStream& stream, int resamples = 1000,
    double level = 0.99);

// Least-squares fit of points (b, v) to v = sum_k beta_k (1/b)^k for
// k = k0..degree, k0 = 1 when zero_intercept. Columns are scaled to unit norm
// and solved by Householder QR; `condition` reports the scaled basis's
// singular-value ratio, and a rank-deficient basis throws instead of being
// silently regularized. coefficients[k] is beta_k (beta_0 stays 0 when
// zero_intercept).
struct PolyFit {
  int degree = 0;
  bool zero_intercept = false;
  Eigen::VectorXd coefficients;  // size degree+1
  double residual_rms = 0.0;
  double condition = 0.0;
};

PolyFit fit_inverse_b_poly(const std::vector<std::pair<double, double>>& points,
                           int degree, bool zero_intercept);

double polyfit_eval(const PolyFit& fit, double b);

// Batch-size grid for sweep figures: powers of two in [2, n] plus multiples
// of ceil(n/12) and n itself, deduplicated and sorted.
std::vector<int> sweep_batch_grid(int n);

}  // namespace sgdvar::mc
