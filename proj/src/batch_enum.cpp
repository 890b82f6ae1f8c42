#include "sgdvar/batch_enum.hpp"

#include <stdexcept>

#include "sgdvar/cb_poly.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sgdvar::regression {

namespace {

constexpr std::uint64_t kEnumerationCap = 1'000'000;
constexpr std::uint64_t kChunk = 4096;

void check_inputs(const Dataset& ds, const Eigen::VectorXd& w, int b,
                  const Eigen::MatrixXd& A) {
  if (b < 1 || b > ds.n())
    throw std::invalid_argument("batch enumeration: need 1 <= b <= n");
  if (w.size() != ds.p())
    throw std::invalid_argument("batch enumeration: bad weight size");
  if (A.cols() != ds.p())
    throw std::invalid_argument("batch enumeration: A must have p columns");
  const std::uint64_t total = binomial_count(ds.n(), b);
  if (total > kEnumerationCap)
    throw std::invalid_argument("batch enumeration: C(n,b) exceeds the 1e6 cap");
}

// Per-sample images A * grad_i(w), so each subset costs b vector adds.
Eigen::MatrixXd mapped_gradients(const Dataset& ds, const Eigen::VectorXd& w,
                                 const Eigen::MatrixXd& A) {
  Eigen::MatrixXd G(A.rows(), ds.n());
  for (int i = 0; i < ds.n(); ++i) G.col(i) = A * ds.sample_gradient(i, w);
  return G;
}

// Combination with lexicographic rank `rank` (combinatorial number system).
std::vector<int> unrank_combination(int n, int b, std::uint64_t rank) {
  std::vector<int> combo(b);
  int start = 0;
  for (int j = 0; j < b; ++j) {
    for (int v = start;; ++v) {
      const std::uint64_t cnt = binomial_count(n - 1 - v, b - 1 - j);
      if (rank < cnt) {
        combo[j] = v;
        start = v + 1;
        break;
      }
      rank -= cnt;
    }
  }
  return combo;
}

// Advances a combination in lexicographic order; returns false after the last.
bool next_combination(std::vector<int>& c, int n) {
  const int b = static_cast<int>(c.size());
  int i = b - 1;
  while (i >= 0 && c[i] == n - b + i) --i;
  if (i < 0) return false;
  ++c[i];
  for (int j = i + 1; j < b; ++j) c[j] = c[j - 1] + 1;
  return true;
}

struct KahanSum {
  double sum = 0.0;
  double comp = 0.0;
  void add(double v) {
    const double y = v - comp;
    const double t = sum + y;
    comp = (t - sum) - y;
    sum = t;
  }
};

double subset_value(const Eigen::MatrixXd& G, const std::vector<int>& combo) {
  Eigen::VectorXd acc = G.col(combo[0]);
  for (std::size_t j = 1; j < combo.size(); ++j) acc += G.col(combo[j]);
  const double inv_b = 1.0 / static_cast<double>(combo.size());
  return (acc * inv_b).squaredNorm();
}

}  // namespace

std::uint64_t binomial_count(int n, int k) {
  if (k < 0 || n < 0 || k > n) return 0;
  if (k > n - k) k = n - k;
  std::uint64_t r = 1;
  for (int i = 1; i <= k; ++i) {
    const std::uint64_t num = static_cast<std::uint64_t>(n - k + i);
    if (r > UINT64_MAX / num)
      throw std::overflow_error("binomial_count: overflow");
    r = r * num / static_cast<std::uint64_t>(i);
  }
  return r;
}

void for_each_combination(int n, int b,
                          const std::function<void(const std::vector<int>&)>& visit) {
  if (b < 1 || b > n) throw std::invalid_argument("for_each_combination: need 1 <= b <= n");
  std::vector<int> combo(b);
  for (int j = 0; j < b; ++j) combo[j] = j;
  do {
    visit(combo);
  } while (next_combination(combo, n));
}

double second_moment_enumerated_serial(const Dataset& ds, const Eigen::VectorXd& w,
                                       int b, const Eigen::MatrixXd& A) {
  check_inputs(ds, w, b, A);
  const Eigen::MatrixXd G = mapped_gradients(ds, w, A);
  const std::uint64_t total = binomial_count(ds.n(), b);
  KahanSum acc;
  std::vector<int> combo(b);
  for (int j = 0; j < b; ++j) combo[j] = j;
  do {
    acc.add(subset_value(G, combo));
  } while (next_combination(combo, ds.n()));
  return acc.sum / static_cast<double>(total);
}

double second_moment_enumerated(const Dataset& ds, const Eigen::VectorXd& w, int b,
                                const Eigen::MatrixXd& A) {
  check_inputs(ds, w, b, A);
  const Eigen::MatrixXd G = mapped_gradients(ds, w, A);
  const std::uint64_t total = binomial_count(ds.n(), b);
  const std::uint64_t chunks = (total + kChunk - 1) / kChunk;
  std::vector<double> partial(chunks, 0.0);

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
  for (std::int64_t c = 0; c < static_cast<std::int64_t>(chunks); ++c) {
    const std::uint64_t begin = static_cast<std::uint64_t>(c) * kChunk;
    const std::uint64_t end = std::min(begin + kChunk, total);
    std::vector<int> combo = unrank_combination(ds.n(), b, begin);
    KahanSum acc;
    for (std::uint64_t r = begin; r < end; ++r) {
      acc.add(subset_value(G, combo));
      next_combination(combo, ds.n());
    }
    partial[static_cast<std::size_t>(c)] = acc.sum;
  }

  KahanSum out;
  for (double v : partial) out.add(v);
  return out.sum / static_cast<double>(total);
}

Eigen::VectorXd enumerated_mean_gradient(const Dataset& ds, const Eigen::VectorXd& w,
                                         int b) {
  const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(ds.p(), ds.p());
  check_inputs(ds, w, b, eye);
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(ds.p());
  for_each_combination(ds.n(), b, [&](const std::vector<int>& combo) {
    sum += ds.batch_gradient(combo, w);
  });
  return sum / static_cast<double>(binomial_count(ds.n(), b));
}

double second_moment_closed_form(const Dataset& ds, const Eigen::VectorXd& w, int b,
                                 const Eigen::MatrixXd& A) {
  if (A.cols() != ds.p())
    throw std::invalid_argument("second_moment_closed_form: A must have p columns");
  const double c = cb_value(ds.n(), b);
  double mean_sq = 0.0;
  for (int i = 0; i < ds.n(); ++i)
    mean_sq += (A * ds.sample_gradient(i, w)).squaredNorm();
  mean_sq /= static_cast<double>(ds.n());
  const double full_sq = (A * ds.full_gradient(w)).squaredNorm();
  return c * (mean_sq - full_sq) + full_sq;
}

}  // namespace sgdvar::regression
