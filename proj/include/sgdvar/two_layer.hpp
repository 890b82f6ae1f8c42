#pragma once

#include <Eigen/Core>

#include "sgdvar/rng.hpp"

namespace sgdvar::twolayer {

// Two-layer linear student/teacher model on standard normal inputs:
// student W2 W1, teacher W2* W1*, population loss L = (1/2) E||W2 W1 x -
// W2* W1* x||^2 = (1/2) ||gap||_F^2 with gap = W2 W1 - W2* W1* cached.
// Shapes: W1 is p1 x p, W2 is p2 x p1.
struct TwoLayerState {
  Eigen::MatrixXd W1, W2, W1_star, W2_star;
  Eigen::MatrixXd gap;

  static TwoLayerState make(Eigen::MatrixXd W1, Eigen::MatrixXd W2,
                            Eigen::MatrixXd W1_star, Eigen::MatrixXd W2_star);

  // Student and teacher drawn iid Gaussian with entry scale 1/sqrt(fan_in);
  // draw order W1, W2, W1*, W2*, each row-major.
  static TwoLayerState random_init(RngStream& stream, int p, int p1, int p2);

  int p() const { return static_cast<int>(W1.cols()); }
  int p1() const { return static_cast<int>(W1.rows()); }
  int p2() const { return static_cast<int>(W2.rows()); }
};

double population_loss(const TwoLayerState& state);

// Mini-batch gradients over batch rows X (b x p):
//   g1 = W2' gap Chat,  g2 = gap Chat W1',  Chat = X'X / b.
struct GradientPair {
  Eigen::MatrixXd g1;  // p1 x p
  Eigen::MatrixXd g2;  // p2 x p1
};

GradientPair gradient_pair(const TwoLayerState& state, const Eigen::MatrixXd& batch);

// Simultaneous update of both layers from the same batch (g2 uses the old
// W1); alpha = 0 returns the state unchanged. The gap cache is rebuilt.
TwoLayerState sgd_step(const TwoLayerState& state, const Eigen::MatrixXd& batch,
                       double alpha);

// Exact conditional variances of the batch gradients at a fixed state, for a
// fresh standard normal batch of size b (variance of a matrix estimator M is
// E||vec M||^2 - ||E vec M||^2):
//   Var(g1 | state, b) = ((p+1)/b) ||W2' gap||_F^2
//   Var(g2 | state, b) = (1/b) ( 2 tr(gap' gap W1' W1)
//                                + ||gap||_F^2 ||W1||_F^2 - ||gap W1'||_F^2 ).
double conditional_variance_g1(const TwoLayerState& state, int b);
double conditional_variance_g2(const TwoLayerState& state, int b);

}  // namespace sgdvar::twolayer
