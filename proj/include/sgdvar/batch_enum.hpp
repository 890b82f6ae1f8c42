#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Core>

#include "sgdvar/dataset.hpp"

namespace sgdvar::regression {

// Exact binomial coefficient; throws on overflow past 2^63.
std::uint64_t binomial_count(int n, int k);

// Visits every size-b subset of {0,...,n-1} in lexicographic order. This is
// the ground-truth sampling space for a mini-batch draw (uniform over
// subsets), so everything downstream can be checked against full enumeration.
void for_each_combination(int n, int b,
                          const std::function<void(const std::vector<int>&)>& visit);

// E[ ||A g||^2 ] for g the mean gradient over a uniformly drawn size-b batch
// at weights w, computed by enumerating all C(n,b) batches. Enumeration is
// capped at 1e6 subsets. `A` must have p columns.
//
// The serial version is the reference implementation: one pass in
// lexicographic order with compensated accumulation. The parallel version
// splits the subset ranks into fixed-size chunks (OpenMP over chunks, one
// partial sum per chunk, combined in chunk order), so its result is
// bit-identical for every thread count, including one.
double second_moment_enumerated_serial(const Dataset& ds, const Eigen::VectorXd& w,
                                       int b, const Eigen::MatrixXd& A);
double second_moment_enumerated(const Dataset& ds, const Eigen::VectorXd& w, int b,
                                const Eigen::MatrixXd& A);

// Mean of g over all batches (must equal the full gradient; unbiasedness
// oracle for tests).
Eigen::VectorXd enumerated_mean_gradient(const Dataset& ds, const Eigen::VectorXd& w,
                                         int b);

// Closed form for the same quantity:
//   E||A g||^2 = c(n,b) * ( (1/n) sum_i ||A grad_i||^2 - ||A grad||^2 ) + ||A grad||^2.
double second_moment_closed_form(const Dataset& ds, const Eigen::VectorXd& w, int b,
                                 const Eigen::MatrixXd& A);

}  // namespace sgdvar::regression
