#include "sgdvar/dataset.hpp"

#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace sgdvar {

namespace {

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_cell(const std::string& cell, int row, int col) {
  double v = 0.0;
  const char* first = cell.data();
  const char* last = cell.data() + cell.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
    throw std::runtime_error("load_csv_dataset: non-numeric cell '" + cell +
                             "' at data row " + std::to_string(row) + ", column " +
                             std::to_string(col));
  }
  return v;
}

}  // namespace

Dataset Dataset::from_arrays(Eigen::MatrixXd features, Eigen::VectorXd targets) {
  const int n = static_cast<int>(features.rows());
  const int p = static_cast<int>(features.cols());
  if (n < 2) throw std::invalid_argument("Dataset: need at least 2 samples");
  if (p < 1) throw std::invalid_argument("Dataset: need at least 1 feature");
  if (targets.size() != n)
    throw std::invalid_argument("Dataset: targets length does not match sample count");
  if (!features.allFinite() || !targets.allFinite())
    throw std::invalid_argument("Dataset: non-finite entries");

  Dataset ds;
  ds.features_ = std::move(features);
  ds.targets_ = std::move(targets);
  ds.gram_per_sample_.reserve(n);
  Eigen::MatrixXd sum_gram = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd sum_target = Eigen::VectorXd::Zero(p);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd x = ds.features_.row(i).transpose();
    ds.gram_per_sample_.push_back(x * x.transpose());
    sum_gram += ds.gram_per_sample_.back();
    sum_target += ds.targets_(i) * x;
  }
  ds.gram_mean_ = sum_gram / static_cast<double>(n);
  ds.target_moment_ = sum_target / static_cast<double>(n);
  return ds;
}

Eigen::VectorXd Dataset::sample_gradient(int i, const Eigen::VectorXd& w) const {
  if (i < 0 || i >= n()) throw std::out_of_range("sample_gradient: index out of range");
  if (w.size() != p()) throw std::invalid_argument("sample_gradient: bad weight size");
  const Eigen::VectorXd x = features_.row(i).transpose();
  return x * (x.dot(w) - targets_(i));
}

Eigen::VectorXd Dataset::full_gradient(const Eigen::VectorXd& w) const {
  if (w.size() != p()) throw std::invalid_argument("full_gradient: bad weight size");
  return gram_mean_ * w - target_moment_;
}

Eigen::VectorXd Dataset::batch_gradient(const std::vector<int>& batch,
                                        const Eigen::VectorXd& w) const {
  if (batch.empty()) throw std::invalid_argument("batch_gradient: empty batch");
  Eigen::VectorXd g = Eigen::VectorXd::Zero(p());
  for (int i : batch) g += sample_gradient(i, w);
  return g / static_cast<double>(batch.size());
}

Dataset load_csv_dataset(const std::string& path, const std::string& target_column,
                         bool standardize, bool add_intercept) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_csv_dataset: cannot open '" + path + "'");

  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("load_csv_dataset: '" + path + "' is empty");
  const std::vector<std::string> header = split_csv_line(line);

  int target_idx = -1;
  for (std::size_t j = 0; j < header.size(); ++j)
    if (header[j] == target_column) target_idx = static_cast<int>(j);
  if (target_idx < 0)
    throw std::runtime_error("load_csv_dataset: target column '" + target_column +
                             "' not found in header");
  const int cols = static_cast<int>(header.size());
  if (cols < 2)
    throw std::runtime_error("load_csv_dataset: need at least one feature column");

  std::vector<std::vector<double>> rows;
  int row_no = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    ++row_no;
    const std::vector<std::string> cells = split_csv_line(line);
    if (static_cast<int>(cells.size()) != cols)
      throw std::runtime_error("load_csv_dataset: data row " + std::to_string(row_no) +
                               " has " + std::to_string(cells.size()) +
                               " cells, expected " + std::to_string(cols));
    std::vector<double> parsed(cols);
    for (int j = 0; j < cols; ++j) parsed[j] = parse_cell(cells[j], row_no, j);
    rows.push_back(std::move(parsed));
  }
  const int n = static_cast<int>(rows.size());
  if (n < 2) throw std::runtime_error("load_csv_dataset: need at least 2 data rows");

  const int p_raw = cols - 1;
  Eigen::MatrixXd X(n, p_raw);
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) {
    int k = 0;
    for (int j = 0; j < cols; ++j) {
      if (j == target_idx)
        y(i) = rows[i][j];
      else
        X(i, k++) = rows[i][j];
    }
  }

  if (standardize) {
    for (int j = 0; j < p_raw; ++j) {
      const double mean = X.col(j).mean();
      X.col(j).array() -= mean;
      // Population (1/n) standard deviation; exactly-constant columns are
      // centered but not scaled.
      const double sd = std::sqrt(X.col(j).squaredNorm() / static_cast<double>(n));
      if (sd > 0.0) X.col(j) /= sd;
    }
  }

  if (add_intercept) {
    Eigen::MatrixXd Xa(n, p_raw + 1);
    Xa.leftCols(p_raw) = X;
    Xa.col(p_raw).setOnes();
    X = std::move(Xa);
  }

  return Dataset::from_arrays(std::move(X), std::move(y));
}

Dataset synthetic_regression_dataset(RngStream& stream, int n, int p,
                                     double noise_std) {
  if (noise_std < 0.0)
    throw std::invalid_argument("synthetic_regression_dataset: noise_std < 0");
  Eigen::MatrixXd X = gaussian_matrix(stream, n, p);
  Eigen::VectorXd w_star(p);
  for (int j = 0; j < p; ++j) w_star(j) = stream.normal();
  Eigen::VectorXd y = X * w_star;
  for (int i = 0; i < n; ++i) y(i) += noise_std * stream.normal();
  return Dataset::from_arrays(std::move(X), std::move(y));
}

}  // namespace sgdvar
