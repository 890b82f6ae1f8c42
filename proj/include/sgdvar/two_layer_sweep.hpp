#pragma once

#include <cstdint>
#include <vector>

#include "sgdvar/schedule.hpp"

namespace sgdvar::twolayer {

// Variance-versus-batch-size sweep for the two-layer model: for each batch
// size, `runs` replicated online-SGD trajectories are launched from one shared
// random initialization, and at every iteration the empirical variance of each
// layer's stochastic gradient across runs is estimated with a bootstrap CI.
// The exact conditional variances at the visited states are averaged alongside
// as a per-cell reference.
struct SweepConfig {
  int p = 8;
  int p1 = 16;
  int p2 = 8;
  std::uint64_t master_seed = 1;
  LearningRateSchedule schedule = LearningRateSchedule::constant(0.05);
  std::vector<int> batch_sizes;  // each in [1, ...), non-empty
  int t_max = 20;
  int runs = 1000;  // >= 100
  int bootstrap_resamples = 1000;
};

struct SweepRow {
  int t = 0;
  int b = 0;
  double var_g1 = 0.0, var_g1_ci_lo = 0.0, var_g1_ci_hi = 0.0;
  double var_g2 = 0.0, var_g2_ci_lo = 0.0, var_g2_ci_hi = 0.0;
  double cond_var_g1_mean = 0.0;
  double cond_var_g2_mean = 0.0;
  double mean_gap_norm = 0.0;
};

struct SweepResult {
  SweepConfig config;
  std::uint64_t init_seed = 0;  // stream id used for the shared initialization
  std::vector<SweepRow> rows;   // grouped by b in config order, t ascending
  // Descent sanity signal (informational, never asserted): true when the mean
  // gap norm is non-increasing in t for every batch size.
  bool gap_norm_nonincreasing = true;
};

SweepResult variance_sweep(const SweepConfig& config);

}  // namespace sgdvar::twolayer
