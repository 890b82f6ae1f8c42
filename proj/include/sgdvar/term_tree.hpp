#pragma once

#include <Eigen/Core>

#include "sgdvar/dataset.hpp"
#include "sgdvar/regression.hpp"
#include "sgdvar/schedule.hpp"

namespace sgdvar::regression {

// Independent oracle for scalar_weight * E|| sum_i A_i grad_i(w_t) ||^2 under
// mini-batch SGD started at w0, by unrolling the one-step recursion
//
//   E||sum_i A_i grad_i(w_{t+1})||^2
//     = E||sum_i B_i grad_i(w_t)||^2
//       + (alpha_t^2 c / n^2) sum_{k < l} E||sum_i B_i^{kl} grad_i(w_t)||^2,
//
// with A = sum_i A_i C_i, B_i = A_i - (alpha_t / n) A, and B^{kl} supported on
// {k, l} with coefficients (+A, -A). The pair sum runs over unordered pairs:
// the sampling-noise term c ((1/n) sum_i ||D_i||^2 - ||Dbar||^2) with
// D_i = A grad_i expands to (c/n^2) sum_{k<l} ||D_k - D_l||^2 exactly (each
// unordered pair once). Leaves at t = 0 are evaluated directly.
//
// Exponential in t (each node spawns 1 + n(n-1)/2 children), hence the guards
// n <= 5 and t <= 4. This is deliberately a different computation path from
// the moment engine: no iterate moments are formed anywhere.
double term_tree_expectation(const Dataset& ds, const Eigen::VectorXd& w0,
                             const LearningRateSchedule& schedule, int t,
                             const LinearCombTerm& seed, int b);

}  // namespace sgdvar::regression
