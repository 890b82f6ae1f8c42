#include "sgdvar/term_tree.hpp"

#include <stdexcept>
#include <vector>

#include "sgdvar/cb_poly.hpp"

namespace sgdvar::regression {

namespace {

struct Node {
  std::map<int, Eigen::MatrixXd> A;
  double weight = 1.0;
  int cb_degree = 0;
};

}  // namespace

double term_tree_expectation(const Dataset& ds, const Eigen::VectorXd& w0,
                             const LearningRateSchedule& schedule, int t,
                             const LinearCombTerm& seed, int b) {
  const int n = ds.n();
  if (n > 5) throw std::invalid_argument("term_tree_expectation: n > 5 (tree blows up)");
  if (t < 0 || t > 4)
    throw std::invalid_argument("term_tree_expectation: need 0 <= t <= 4");
  if (b < 1 || b > n) throw std::invalid_argument("term_tree_expectation: need 1 <= b <= n");
  if (w0.size() != ds.p())
    throw std::invalid_argument("term_tree_expectation: w0 size does not match dataset");
  if (seed.coefficient_matrices.empty())
    throw std::invalid_argument("term_tree_expectation: empty seed term");

  const long rows = seed.coefficient_matrices.begin()->second.rows();
  for (const auto& [i, Ai] : seed.coefficient_matrices) {
    if (i < 0 || i >= n)
      throw std::invalid_argument("term_tree_expectation: sample index out of range");
    if (Ai.rows() != rows || Ai.cols() != ds.p())
      throw std::invalid_argument("term_tree_expectation: coefficient shape mismatch");
  }

  const double c = cb_value(n, b);
  const double inv_n = 1.0 / static_cast<double>(n);

  std::vector<Node> level;
  level.push_back({seed.coefficient_matrices, seed.scalar_weight, seed.cb_degree});

  for (int s = t; s > 0; --s) {
    const double a = schedule.alpha(s - 1);
    const double child_factor = a * a * c * inv_n * inv_n;
    std::vector<Node> next;
    next.reserve(level.size() * (1 + n * (n - 1) / 2));
    for (const Node& node : level) {
      Eigen::MatrixXd A = Eigen::MatrixXd::Zero(rows, ds.p());
      for (const auto& [i, Ai] : node.A) A += Ai * ds.gram(i);

      Node base;
      base.weight = node.weight;
      base.cb_degree = node.cb_degree;
      const Eigen::MatrixXd shift = (a * inv_n) * A;
      for (const auto& [i, Ai] : node.A) base.A.emplace(i, Ai - shift);
      for (int i = 0; i < n; ++i)
        if (!base.A.count(i)) base.A.emplace(i, Eigen::MatrixXd(-shift));
      next.push_back(std::move(base));

      for (int k = 0; k < n; ++k) {
        for (int l = k + 1; l < n; ++l) {
          Node child;
          child.weight = node.weight * child_factor;
          child.cb_degree = node.cb_degree + 1;
          child.A.emplace(k, A);
          child.A.emplace(l, Eigen::MatrixXd(-A));
          next.push_back(std::move(child));
        }
      }
    }
    level = std::move(next);
  }

  double total = 0.0;
  for (const Node& node : level) {
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(rows);
    for (const auto& [i, Ai] : node.A) acc += Ai * ds.sample_gradient(i, w0);
    total += node.weight * acc.squaredNorm();
  }
  return total;
}

}  // namespace sgdvar::regression
