#include "sgdvar/two_layer_sweep.hpp"

#include <algorithm>
#include <stdexcept>

#include "sgdvar/mc_stats.hpp"
#include "sgdvar/rng.hpp"
#include "sgdvar/two_layer.hpp"

namespace sgdvar::twolayer {

namespace {

constexpr std::uint64_t kInitTag = 0x1217ull << 48;
constexpr std::uint64_t kSeedTag = 0x5eedull << 48;
constexpr double kMaxSweepWork = 1e9;  // runs * t_max * b guard, per batch size

void validate(const SweepConfig& c) {
  if (c.p < 1 || c.p1 < 1 || c.p2 < 1)
    throw std::invalid_argument("variance_sweep: dimensions must be positive");
  if (c.runs < 100) throw std::invalid_argument("variance_sweep: need runs >= 100");
  if (c.t_max < 0) throw std::invalid_argument("variance_sweep: t_max must be >= 0");
  if (c.batch_sizes.empty())
    throw std::invalid_argument("variance_sweep: batch_sizes must be non-empty");
  if (c.bootstrap_resamples < 1)
    throw std::invalid_argument("variance_sweep: bootstrap_resamples must be >= 1");
  for (int b : c.batch_sizes) {
    if (b < 1) throw std::invalid_argument("variance_sweep: batch sizes must be >= 1");
    const double work = static_cast<double>(c.runs) *
                        static_cast<double>(std::max(c.t_max, 1)) *
                        static_cast<double>(b);
    if (work > kMaxSweepWork)
      throw std::invalid_argument(
          "variance_sweep: runs * t_max * b exceeds the resource guard");
  }
}

}  // namespace

SweepResult variance_sweep(const SweepConfig& config) {
  validate(config);

  SweepResult result;
  result.config = config;
  result.init_seed = kInitTag;

  RngStream init_stream(config.master_seed, kInitTag);
  const TwoLayerState init =
      TwoLayerState::random_init(init_stream, config.p, config.p1, config.p2);

  // Each batch size gets its own ensemble seed so run streams never overlap
  // across columns of the sweep.
  RngStream seed_stream(config.master_seed, kSeedTag);

  for (int b : config.batch_sizes) {
    const std::uint64_t seed_b = seed_stream.next_u64();
    const mc::RunEnsemble ens = mc::run_two_layer_ensemble(
        init, config.schedule, b, config.runs, config.t_max, seed_b);
    for (int t = 0; t <= config.t_max; ++t) {
      const mc::VarianceEstimate v1 =
          mc::empirical_variance(ens, t, 1, config.bootstrap_resamples);
      const mc::VarianceEstimate v2 =
          mc::empirical_variance(ens, t, 2, config.bootstrap_resamples);
      SweepRow row;
      row.t = t;
      row.b = b;
      row.var_g1 = v1.variance;
      row.var_g1_ci_lo = v1.ci_lo;
      row.var_g1_ci_hi = v1.ci_hi;
      row.var_g2 = v2.variance;
      row.var_g2_ci_lo = v2.ci_lo;
      row.var_g2_ci_hi = v2.ci_hi;
      row.cond_var_g1_mean = ens.cond_var_g1_mean[static_cast<std::size_t>(t)];
      row.cond_var_g2_mean = ens.cond_var_g2_mean[static_cast<std::size_t>(t)];
      row.mean_gap_norm = ens.mean_gap_norm[static_cast<std::size_t>(t)];
      result.rows.push_back(row);
      if (t > 0 && row.mean_gap_norm >
                       ens.mean_gap_norm[static_cast<std::size_t>(t - 1)])
        result.gap_norm_nonincreasing = false;
    }
  }
  return result;
}

}  // namespace sgdvar::twolayer
