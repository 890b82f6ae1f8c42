#include "sgdvar/two_layer.hpp"

#include <cmath>
#include <stdexcept>

namespace sgdvar::twolayer {

namespace {

void check_batch(const TwoLayerState& state, const Eigen::MatrixXd& batch) {
  if (batch.rows() < 1) throw std::invalid_argument("two_layer: empty batch");
  if (batch.cols() != state.p())
    throw std::invalid_argument("two_layer: batch has wrong feature dimension");
}

void check_b(int b) {
  if (b < 1) throw std::invalid_argument("two_layer: batch size must be positive");
}

}  // namespace

TwoLayerState TwoLayerState::make(Eigen::MatrixXd W1, Eigen::MatrixXd W2,
                                  Eigen::MatrixXd W1_star, Eigen::MatrixXd W2_star) {
  if (W2.cols() != W1.rows())
    throw std::invalid_argument("TwoLayerState: W2 cols must match W1 rows");
  if (W1_star.rows() != W1.rows() || W1_star.cols() != W1.cols() ||
      W2_star.rows() != W2.rows() || W2_star.cols() != W2.cols())
    throw std::invalid_argument("TwoLayerState: teacher shapes must match student");
  TwoLayerState s;
  s.W1 = std::move(W1);
  s.W2 = std::move(W2);
  s.W1_star = std::move(W1_star);
  s.W2_star = std::move(W2_star);
  s.gap = s.W2 * s.W1 - s.W2_star * s.W1_star;
  return s;
}

TwoLayerState TwoLayerState::random_init(RngStream& stream, int p, int p1, int p2) {
  if (p < 1 || p1 < 1 || p2 < 1)
    throw std::invalid_argument("TwoLayerState::random_init: dimensions must be positive");
  const double s1 = 1.0 / std::sqrt(static_cast<double>(p));
  const double s2 = 1.0 / std::sqrt(static_cast<double>(p1));
  Eigen::MatrixXd W1 = s1 * gaussian_matrix(stream, p1, p);
  Eigen::MatrixXd W2 = s2 * gaussian_matrix(stream, p2, p1);
  Eigen::MatrixXd W1s = s1 * gaussian_matrix(stream, p1, p);
  Eigen::MatrixXd W2s = s2 * gaussian_matrix(stream, p2, p1);
  return make(std::move(W1), std::move(W2), std::move(W1s), std::move(W2s));
}

double population_loss(const TwoLayerState& state) {
  return 0.5 * state.gap.squaredNorm();
}

GradientPair gradient_pair(const TwoLayerState& state, const Eigen::MatrixXd& batch) {
  check_batch(state, batch);
  const double inv_b = 1.0 / static_cast<double>(batch.rows());
  const Eigen::MatrixXd chat = inv_b * (batch.transpose() * batch);
  GradientPair g;
  g.g1 = state.W2.transpose() * state.gap * chat;
  g.g2 = state.gap * chat * state.W1.transpose();
  return g;
}

TwoLayerState sgd_step(const TwoLayerState& state, const Eigen::MatrixXd& batch,
                       double alpha) {
  const GradientPair g = gradient_pair(state, batch);
  return TwoLayerState::make(state.W1 - alpha * g.g1, state.W2 - alpha * g.g2,
                             state.W1_star, state.W2_star);
}

double conditional_variance_g1(const TwoLayerState& state, int b) {
  check_b(b);
  const double p = static_cast<double>(state.p());
  return (p + 1.0) / static_cast<double>(b) *
         (state.W2.transpose() * state.gap).squaredNorm();
}

double conditional_variance_g2(const TwoLayerState& state, int b) {
  check_b(b);
  const Eigen::MatrixXd& G = state.gap;
  const Eigen::MatrixXd& W1 = state.W1;
  const double cross = (G.transpose() * G * W1.transpose() * W1).trace();
  const double val = 2.0 * cross + G.squaredNorm() * W1.squaredNorm() -
                     (G * W1.transpose()).squaredNorm();
  return val / static_cast<double>(b);
}

}  // namespace sgdvar::twolayer
