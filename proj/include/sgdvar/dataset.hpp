#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "sgdvar/rng.hpp"

namespace sgdvar {

// Least-squares sample set for L(w) = (1/2n) sum_i (x_i' w - y_i)^2.
//
// Per-sample Gram matrices C_i = x_i x_i', their mean C = (1/n) sum_i C_i and
// the target moment u = (1/n) sum_i y_i x_i are cached at construction; every
// gradient below is expressed through them:
//   grad_i(w) = C_i w - y_i x_i,   grad(w) = C w - u.
class Dataset {
 public:
  static Dataset from_arrays(Eigen::MatrixXd features, Eigen::VectorXd targets);

  int n() const { return static_cast<int>(features_.rows()); }
  int p() const { return static_cast<int>(features_.cols()); }

  const Eigen::MatrixXd& features() const { return features_; }
  const Eigen::VectorXd& targets() const { return targets_; }
  Eigen::VectorXd sample(int i) const { return features_.row(i).transpose(); }

  const Eigen::MatrixXd& gram(int i) const { return gram_per_sample_.at(i); }
  const Eigen::MatrixXd& gram_mean() const { return gram_mean_; }
  const Eigen::VectorXd& target_moment() const { return target_moment_; }

  Eigen::VectorXd sample_gradient(int i, const Eigen::VectorXd& w) const;
  Eigen::VectorXd full_gradient(const Eigen::VectorXd& w) const;

  // Mean gradient over an explicit index set (a mini-batch).
  Eigen::VectorXd batch_gradient(const std::vector<int>& batch,
                                 const Eigen::VectorXd& w) const;

 private:
  Eigen::MatrixXd features_;
  Eigen::VectorXd targets_;
  std::vector<Eigen::MatrixXd> gram_per_sample_;
  Eigen::MatrixXd gram_mean_;
  Eigen::VectorXd target_moment_;
};

// CSV loader. First line is a header; `target_column` names the y column and
// every other column becomes a feature. With `standardize`, feature columns
// are centered and scaled to unit population (1/n) standard deviation;
// exactly-constant columns are centered but left unscaled. With
// `add_intercept`, an all-ones column is appended after standardization (the
// intercept column is never standardized). Rejects a missing file, an unknown
// target column, non-numeric cells, ragged rows, and fewer than 2 data rows.
Dataset load_csv_dataset(const std::string& path, const std::string& target_column,
                         bool standardize, bool add_intercept);

// Standard-normal feature matrix, targets y = X w_star + noise_std * eps with
// w_star and eps drawn from the same stream (order: X row-major, then w_star,
// then eps). Fully determined by the stream state.
Dataset synthetic_regression_dataset(RngStream& stream, int n, int p,
                                     double noise_std);

}  // namespace sgdvar
