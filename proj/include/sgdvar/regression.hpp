#pragma once

#include <map>
#include <vector>

#include <Eigen/Core>

#include "sgdvar/cb_poly.hpp"
#include "sgdvar/dataset.hpp"
#include "sgdvar/schedule.hpp"

namespace sgdvar::regression {

// First and second moments of the SGD iterate w_t, conditional on the start;
// the second moment is a polynomial in the batch factor c with symmetric p x p
// matrix coefficients, so one propagation serves every batch size at once.
struct MomentState {
  int t = 0;
  Eigen::VectorXd mean;          // E[w_t], batch-size independent
  MatrixCbPoly second_moment;    // E[w_t w_t'] as a polynomial in c, degree <= t
};

// Exact moment recursion for SGD on a least-squares dataset:
//   mean_{t+1} = mean_t - alpha_t (C mean_t - u)
//   S_{t+1}    = S_t - alpha_t (S_t C - mean_t u') - alpha_t (C S_t - u mean_t')
//                + alpha_t^2 [ (c/n) sum_i G_i(S_t, mean_t) + (1-c) Gbar(S_t, mean_t) ]
// with G_i(S,m) = C_i S C_i - C_i m (y_i x_i)' - (y_i x_i) m' C_i + y_i^2 C_i and
// Gbar the same built from (C, u). Returns states for t = 0..t_max.
std::vector<MomentState> propagate_moments(const Dataset& ds,
                                           const Eigen::VectorXd& w0,
                                           const LearningRateSchedule& schedule,
                                           int t_max);

// E[g g' | start] as a polynomial in c at the given state:
//   (c/n) sum_i G_i(S_t, mean_t) + (1-c) Gbar(S_t, mean_t).
MatrixCbPoly gradient_second_moment_poly(const Dataset& ds, const MomentState& state);

// Scalar variance polynomials in c (evaluate at c(n,b) for a concrete batch):
//   Var(g_t)      = tr E[g g'] - ||C mean_t - u||^2
//   Var(grad L_t) = tr Gbar(S_t, mean_t) - ||C mean_t - u||^2
ScalarCbPoly variance_stochastic_gradient_poly(const Dataset& ds,
                                               const MomentState& state);
ScalarCbPoly variance_full_gradient_poly(const Dataset& ds, const MomentState& state);

double variance_stochastic_gradient(const MomentState& state, const Dataset& ds, int b);
double variance_full_gradient(const MomentState& state, const Dataset& ds, int b);

// A weighted squared norm of a per-sample linear combination,
//   scalar_weight * E|| sum_i A_i grad_i(w_t) ||^2,
// shared between the moment engine and the recursion-tree oracle. cb_degree
// tracks how many batch-factor powers a tree node has absorbed (bookkeeping;
// the numeric weight already contains them).
struct LinearCombTerm {
  std::map<int, Eigen::MatrixXd> coefficient_matrices;  // i -> A_i (common rows, p cols)
  double scalar_weight = 1.0;
  int cb_degree = 0;
};

// Engine route: with A = sum_i A_i C_i and v = sum_i A_i x_i y_i,
//   E||sum_i A_i grad_i(w_t)||^2 = tr(A' A S_t(c)) - 2 v' A mean_t + ||v||^2.
double linear_comb_second_moment(const Dataset& ds, const MomentState& state,
                                 const LinearCombTerm& term, int b);

// Per-batch-size table of both variances at a fixed iteration, with a
// non-increase verdict per column. Tolerance for the verdict is
// 1e-12 * max|column|; min_gap reports the smallest consecutive decrease
// (negative if the ordering is violated anywhere).
struct MonotonicityRow {
  int b = 0;
  double var_g = 0.0;
  double var_full = 0.0;
};

struct MonotonicityTable {
  int t = 0;
  std::vector<MonotonicityRow> rows;  // b = 1..n
  bool var_g_non_increasing = false;
  bool var_full_non_increasing = false;
  double min_gap_var_g = 0.0;
  double min_gap_var_full = 0.0;
};

MonotonicityTable monotonicity_table(const std::vector<MomentState>& states,
                                     const Dataset& ds, int t);

}  // namespace sgdvar::regression
