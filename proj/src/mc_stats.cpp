#include "sgdvar/mc_stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <Eigen/Dense>

#include "sgdvar/cb_poly.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sgdvar::mc {

namespace {

constexpr std::uint64_t kBootstrapTag = 0xB007ull << 48;
constexpr int kRunChunk = 256;
constexpr double kMaxEnsembleDoubles = 2e8;

// Nearest-rank quantile of a sorted vector.
double quantile_sorted(const std::vector<double>& sorted, double q) {
  const std::size_t k = sorted.size();
  const double pos = q * static_cast<double>(k);
  std::size_t idx = pos <= 0.0 ? 0 : static_cast<std::size_t>(std::ceil(pos)) - 1;
  if (idx >= k) idx = k - 1;
  return sorted[idx];
}

VarianceEstimate bootstrap_total_variance(const Eigen::MatrixXd& centered,
                                          const Eigen::VectorXd& norms, int resamples,
                                          const RngStream& stream, double level) {
  const int R = static_cast<int>(centered.rows());
  const double denom = static_cast<double>(R - 1);

  VarianceEstimate out;
  out.variance = norms.sum() / denom;

  std::vector<double> boot(static_cast<std::size_t>(resamples));
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
  for (int k = 0; k < resamples; ++k) {
    RngStream sub = stream.substream(static_cast<std::uint64_t>(k));
    double s = 0.0;
    Eigen::VectorXd m = Eigen::VectorXd::Zero(centered.cols());
    for (int r = 0; r < R; ++r) {
      const int idx = static_cast<int>(sub.uniform_below(static_cast<std::uint64_t>(R)));
      s += norms(idx);
      m += centered.row(idx);
    }
    boot[static_cast<std::size_t>(k)] = (s - m.squaredNorm() / static_cast<double>(R)) / denom;
  }
  std::sort(boot.begin(), boot.end());
  const double q = (1.0 - level) / 2.0;
  out.ci_lo = quantile_sorted(boot, q);
  out.ci_hi = quantile_sorted(boot, 1.0 - q);
  return out;
}

void check_common(int b, int runs, int t_max) {
  if (b < 1) throw std::invalid_argument("run ensemble: batch size must be positive");
  if (runs < 2) throw std::invalid_argument("run ensemble: need runs >= 2");
  if (t_max < 0) throw std::invalid_argument("run ensemble: t_max must be >= 0");
}

}  // namespace

VarianceEstimate empirical_variance(const Eigen::MatrixXd& samples, int resamples,
                                    const RngStream& stream, double level) {
  if (samples.rows() < 2)
    throw std::invalid_argument("empirical_variance: need at least 2 replicates");
  if (resamples < 1)
    throw std::invalid_argument("empirical_variance: need at least 1 resample");
  if (!(level > 0.0 && level < 1.0))
    throw std::invalid_argument("empirical_variance: level must be in (0,1)");

  // Center once by the full-sample mean; the variance is shift-invariant and
  // the centered form keeps the all-identical case exactly zero.
  const Eigen::RowVectorXd mean = samples.colwise().mean();
  const Eigen::MatrixXd centered = samples.rowwise() - mean;
  const Eigen::VectorXd norms = centered.rowwise().squaredNorm();
  return bootstrap_total_variance(centered, norms, resamples, stream, level);
}

RunEnsemble run_regression_ensemble(const Dataset& ds, const Eigen::VectorXd& w0,
                                    const LearningRateSchedule& schedule, int b,
                                    int runs, int t_max, std::uint64_t master_seed) {
  check_common(b, runs, t_max);
  if (b > ds.n()) throw std::invalid_argument("run ensemble: b exceeds n");
  if (w0.size() != ds.p())
    throw std::invalid_argument("run ensemble: w0 size does not match dataset");
  const int p = ds.p();
  const double cells = static_cast<double>(t_max + 1) * runs * p;
  if (cells > kMaxEnsembleDoubles)
    throw std::invalid_argument("run ensemble: requested ensemble exceeds memory guard");

  RunEnsemble e;
  e.model = "regression";
  e.b = b;
  e.runs = runs;
  e.t_max = t_max;
  e.master_seed = master_seed;
  e.grads.assign(static_cast<std::size_t>(t_max + 1), Eigen::MatrixXd(runs, p));

  const int chunks = (runs + kRunChunk - 1) / kRunChunk;
  std::vector<std::vector<Eigen::VectorXd>> chunk_wsum(
      static_cast<std::size_t>(chunks),
      std::vector<Eigen::VectorXd>(static_cast<std::size_t>(t_max + 1),
                                   Eigen::VectorXd::Zero(p)));

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
  for (int c = 0; c < chunks; ++c) {
    auto& wsum = chunk_wsum[static_cast<std::size_t>(c)];
    const int r_end = std::min(runs, (c + 1) * kRunChunk);
    for (int r = c * kRunChunk; r < r_end; ++r) {
      RngStream stream(master_seed, static_cast<std::uint64_t>(r));
      Eigen::VectorXd w = w0;
      for (int t = 0; t <= t_max; ++t) {
        const std::vector<int> batch = sample_without_replacement(stream, ds.n(), b);
        const Eigen::VectorXd g = ds.batch_gradient(batch, w);
        e.grads[static_cast<std::size_t>(t)].row(r) = g.transpose();
        wsum[static_cast<std::size_t>(t)] += w;
        w -= schedule.alpha(t) * g;
      }
    }
  }

  e.mean_iterate.assign(static_cast<std::size_t>(t_max + 1), Eigen::VectorXd::Zero(p));
  for (int c = 0; c < chunks; ++c)
    for (int t = 0; t <= t_max; ++t)
      e.mean_iterate[static_cast<std::size_t>(t)] +=
          chunk_wsum[static_cast<std::size_t>(c)][static_cast<std::size_t>(t)];
  for (int t = 0; t <= t_max; ++t)
    e.mean_iterate[static_cast<std::size_t>(t)] /= static_cast<double>(runs);
  return e;
}

RunEnsemble run_two_layer_ensemble(const twolayer::TwoLayerState& init,
                                   const LearningRateSchedule& schedule, int b,
                                   int runs, int t_max, std::uint64_t master_seed) {
  check_common(b, runs, t_max);
  const int p = init.p(), p1 = init.p1(), p2 = init.p2();
  const int d1 = p1 * p, d2 = p2 * p1;
  const double cells = static_cast<double>(t_max + 1) * runs * (d1 + d2);
  if (cells > kMaxEnsembleDoubles)
    throw std::invalid_argument("run ensemble: requested ensemble exceeds memory guard");

  RunEnsemble e;
  e.model = "two_layer";
  e.b = b;
  e.runs = runs;
  e.t_max = t_max;
  e.master_seed = master_seed;
  e.grads.assign(static_cast<std::size_t>(t_max + 1), Eigen::MatrixXd(runs, d1));
  e.grads2.assign(static_cast<std::size_t>(t_max + 1), Eigen::MatrixXd(runs, d2));

  const int chunks = (runs + kRunChunk - 1) / kRunChunk;
  std::vector<std::vector<double>> chunk_cv1(
      static_cast<std::size_t>(chunks),
      std::vector<double>(static_cast<std::size_t>(t_max + 1), 0.0));
  std::vector<std::vector<double>> chunk_cv2 = chunk_cv1;
  std::vector<std::vector<double>> chunk_gap = chunk_cv1;

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
  for (int c = 0; c < chunks; ++c) {
    auto& cv1 = chunk_cv1[static_cast<std::size_t>(c)];
    auto& cv2 = chunk_cv2[static_cast<std::size_t>(c)];
    auto& gapn = chunk_gap[static_cast<std::size_t>(c)];
    const int r_end = std::min(runs, (c + 1) * kRunChunk);
    for (int r = c * kRunChunk; r < r_end; ++r) {
      RngStream stream(master_seed, static_cast<std::uint64_t>(r));
      twolayer::TwoLayerState state = init;
      for (int t = 0; t <= t_max; ++t) {
        const Eigen::MatrixXd X = gaussian_matrix(stream, b, p);
        const twolayer::GradientPair g = twolayer::gradient_pair(state, X);
        e.grads[static_cast<std::size_t>(t)].row(r) =
            Eigen::Map<const Eigen::VectorXd>(g.g1.data(), d1).transpose();
        e.grads2[static_cast<std::size_t>(t)].row(r) =
            Eigen::Map<const Eigen::VectorXd>(g.g2.data(), d2).transpose();
        cv1[static_cast<std::size_t>(t)] += twolayer::conditional_variance_g1(state, b);
        cv2[static_cast<std::size_t>(t)] += twolayer::conditional_variance_g2(state, b);
        gapn[static_cast<std::size_t>(t)] += state.gap.norm();
        const double a = schedule.alpha(t);
        state = twolayer::TwoLayerState::make(state.W1 - a * g.g1, state.W2 - a * g.g2,
                                              state.W1_star, state.W2_star);
      }
    }
  }

  e.cond_var_g1_mean.assign(static_cast<std::size_t>(t_max + 1), 0.0);
  e.cond_var_g2_mean.assign(static_cast<std::size_t>(t_max + 1), 0.0);
  e.mean_gap_norm.assign(static_cast<std::size_t>(t_max + 1), 0.0);
  for (int c = 0; c < chunks; ++c)
    for (int t = 0; t <= t_max; ++t) {
      e.cond_var_g1_mean[static_cast<std::size_t>(t)] +=
          chunk_cv1[static_cast<std::size_t>(c)][static_cast<std::size_t>(t)];
      e.cond_var_g2_mean[static_cast<std::size_t>(t)] +=
          chunk_cv2[static_cast<std::size_t>(c)][static_cast<std::size_t>(t)];
      e.mean_gap_norm[static_cast<std::size_t>(t)] +=
          chunk_gap[static_cast<std::size_t>(c)][static_cast<std::size_t>(t)];
    }
  for (int t = 0; t <= t_max; ++t) {
    e.cond_var_g1_mean[static_cast<std::size_t>(t)] /= static_cast<double>(runs);
    e.cond_var_g2_mean[static_cast<std::size_t>(t)] /= static_cast<double>(runs);
    e.mean_gap_norm[static_cast<std::size_t>(t)] /= static_cast<double>(runs);
  }
  return e;
}

VarianceEstimate empirical_variance(const RunEnsemble& ensemble, int t, int estimator,
                                    int resamples) {
  if (t < 0 || t > ensemble.t_max)
    throw std::out_of_range("empirical_variance: t out of range");
  if (estimator != 1 && estimator != 2)
    throw std::invalid_argument("empirical_variance: estimator must be 1 or 2");
  if (estimator == 2 && ensemble.grads2.empty())
    throw std::invalid_argument("empirical_variance: ensemble has no second estimator");
  const Eigen::MatrixXd& samples = estimator == 1
                                       ? ensemble.grads[static_cast<std::size_t>(t)]
                                       : ensemble.grads2[static_cast<std::size_t>(t)];
  const RngStream base(ensemble.master_seed, kBootstrapTag);
  const RngStream stream =
      base.substream(static_cast<std::uint64_t>(2 * t + (estimator - 1)));
  return empirical_variance(samples, resamples, stream, 0.99);
}

VarianceEstimate grouped_variance_mc(
    const std::function<void(RngStream&, Eigen::VectorXd&)>& sampler, int sample_dim,
    long long total_samples, int groups, const RngStream& stream, int resamples,
    double level) {
  if (sample_dim < 1) throw std::invalid_argument("grouped_variance_mc: bad dimension");
  if (groups < 2 || total_samples < groups || total_samples % groups != 0)
    throw std::invalid_argument(
        "grouped_variance_mc: total_samples must be a positive multiple of groups");
  const long long per_group = total_samples / groups;

  Eigen::VectorXd group_s(groups);
  Eigen::MatrixXd group_mean(groups, sample_dim);

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
  for (int g = 0; g < groups; ++g) {
    RngStream sub = stream.substream(static_cast<std::uint64_t>(g));
    Eigen::VectorXd v(sample_dim);
    double s = 0.0;
    Eigen::VectorXd m = Eigen::VectorXd::Zero(sample_dim);
    for (long long k = 0; k < per_group; ++k) {
      sampler(sub, v);
      s += v.squaredNorm();
      m += v;
    }
    group_s(g) = s / static_cast<double>(per_group);
    group_mean.row(g) = (m / static_cast<double>(per_group)).transpose();
  }

  VarianceEstimate out;
  const double G = static_cast<double>(groups);
  out.variance = group_s.mean() - (group_mean.colwise().mean()).squaredNorm();

  const RngStream boot_base = stream.substream(kBootstrapTag);
  std::vector<double> boot(static_cast<std::size_t>(resamples));
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
  for (int k = 0; k < resamples; ++k) {
    RngStream sub = boot_base.substream(static_cast<std::uint64_t>(k));
    double s = 0.0;
    Eigen::RowVectorXd m = Eigen::RowVectorXd::Zero(sample_dim);
    for (int g = 0; g < groups; ++g) {
      const int idx = static_cast<int>(sub.uniform_below(static_cast<std::uint64_t>(groups)));
      s += group_s(idx);
      m += group_mean.row(idx);
    }
    boot[static_cast<std::size_t>(k)] = s / G - (m / G).squaredNorm();
  }
  std::sort(boot.begin(), boot.end());
  const double q = (1.0 - level) / 2.0;
  out.ci_lo = quantile_sorted(boot, q);
  out.ci_hi = quantile_sorted(boot, 1.0 - q);
  return out;
}

PolyFit fit_inverse_b_poly(const std::vector<std::pair<double, double>>& points,
                           int degree, bool zero_intercept) {
  if (degree < 1) throw std::invalid_argument("fit_inverse_b_poly: degree must be >= 1");
  const int N = static_cast<int>(points.size());
  if (N < degree + 1)
    throw std::invalid_argument("fit_inverse_b_poly: need at least degree+1 points");
  for (int i = 0; i < N; ++i) {
    if (!(points[static_cast<std::size_t>(i)].first > 0.0))
      throw std::invalid_argument("fit_inverse_b_poly: b values must be positive");
    for (int j = i + 1; j < N; ++j)
      if (points[static_cast<std::size_t>(i)].first ==
          points[static_cast<std::size_t>(j)].first)
        throw std::invalid_argument("fit_inverse_b_poly: duplicate b value");
  }

  const int k0 = zero_intercept ? 1 : 0;
  const int cols = degree - k0 + 1;
  Eigen::MatrixXd X(N, cols);
  Eigen::VectorXd y(N);
  for (int i = 0; i < N; ++i) {
    const double invb = 1.0 / points[static_cast<std::size_t>(i)].first;
    double pw = k0 == 0 ? 1.0 : invb;
    for (int c = 0; c < cols; ++c) {
      X(i, c) = pw;
      pw *= invb;
    }
    y(i) = points[static_cast<std::size_t>(i)].second;
  }

  // Unit-norm column scaling, then QR; condition reported on the scaled basis.
  Eigen::VectorXd scale(cols);
  for (int c = 0; c < cols; ++c) {
    scale(c) = X.col(c).norm();
    if (scale(c) == 0.0)
      throw std::runtime_error("fit_inverse_b_poly: zero basis column");
    X.col(c) /= scale(c);
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(X, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const double smax = svd.singularValues()(0);
  const double smin = svd.singularValues()(svd.singularValues().size() - 1);
  if (!(smin > 1e-12 * smax))
    throw std::runtime_error(
        "fit_inverse_b_poly: rank-deficient basis (b values too close for this degree)");

  const Eigen::VectorXd beta_scaled = X.colPivHouseholderQr().solve(y);

  PolyFit fit;
  fit.degree = degree;
  fit.zero_intercept = zero_intercept;
  fit.coefficients = Eigen::VectorXd::Zero(degree + 1);
  for (int c = 0; c < cols; ++c) fit.coefficients(k0 + c) = beta_scaled(c) / scale(c);
  fit.condition = smax / smin;
  fit.residual_rms = std::sqrt((X * beta_scaled - y).squaredNorm() / static_cast<double>(N));
  return fit;
}

double polyfit_eval(const PolyFit& fit, double b) {
  if (!(b > 0.0)) throw std::invalid_argument("polyfit_eval: b must be positive");
  const double x = 1.0 / b;
  double acc = 0.0;
  for (int k = fit.degree; k >= 0; --k) acc = acc * x + fit.coefficients(k);
  return acc;
}

std::vector<int> sweep_batch_grid(int n) {
  if (n < 2) throw std::invalid_argument("sweep_batch_grid: need n >= 2");
  std::vector<int> grid;
  for (int b = 2; b <= n; b *= 2) grid.push_back(b);
  const int step = (n + 11) / 12;
  for (int b = step; b <= n; b += step)
    if (b >= 2) grid.push_back(b);
  grid.push_back(n);
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  return grid;
}

}  // namespace sgdvar::mc
