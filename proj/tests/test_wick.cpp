// Gaussian pairing engine: closed-form moments of alternating rank-one /
// fixed-matrix products. Anchors are the classical identities E[xx'] = I and
// E[xx'Axx'] = A + A' + tr(A) I, plus parity, relabeling invariance, and a
// Monte Carlo cross-check on a mixed pattern.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>
#include <stdexcept>

#include <Eigen/Dense>

#include "sgdvar/rng.hpp"
#include "sgdvar/term_algebra.hpp"
#include "sgdvar/wick.hpp"

using namespace sgdvar;
using namespace sgdvar::term;
using namespace sgdvar::wick;

TEST_CASE("m = 1: E[x x'] = I") {
  SymbolTable table;
  MomentPattern pat{3, {}, {0, 0}};
  const TraceProductSum sum = wick_expectation(table, pat);
  std::map<int, Eigen::MatrixXd> bind;
  const Eigen::MatrixXd val = evaluate(table, sum, bind);
  CHECK((val - Eigen::MatrixXd::Identity(3, 3)).norm() == 0.0);
}

TEST_CASE("m = 2 with one shared label: E[x x' A x x'] = A + A' + tr(A) I") {
  SymbolTable table;
  const int a = table.add_constant("A", 2, 2);
  MomentPattern pat{2, {a}, {0, 0, 0, 0}};
  const TraceProductSum sum = wick_expectation(table, pat);

  std::map<int, Eigen::MatrixXd> bind;
  Eigen::MatrixXd A(2, 2);
  A << 1, 2, 3, 4;
  bind[a] = A;
  Eigen::MatrixXd expected(2, 2);
  expected << 7, 5, 5, 13;  // A + A' + tr(A) I with tr(A) = 5
  CHECK((evaluate(table, sum, bind) - expected).norm() < 1e-12);

  // Same closed form for random A, including non-symmetric ones.
  RngStream s(131, 0);
  bind[a] = gaussian_matrix(s, 2, 2);
  const Eigen::MatrixXd ref = bind[a] + bind[a].transpose() +
                              bind[a].trace() * Eigen::MatrixXd::Identity(2, 2);
  CHECK((evaluate(table, sum, bind) - ref).norm() < 1e-12);
}

TEST_CASE("m = 2 with independent labels: E[x x' A y y'] = A") {
  SymbolTable table;
  const int a = table.add_constant("A", 3, 3);
  MomentPattern pat{3, {a}, {0, 0, 1, 1}};
  const TraceProductSum sum = wick_expectation(table, pat);

  RngStream s(137, 0);
  std::map<int, Eigen::MatrixXd> bind;
  bind[a] = gaussian_matrix(s, 3, 3);
  CHECK((evaluate(table, sum, bind) - bind[a]).norm() < 1e-12);
}

TEST_CASE("any label with odd multiplicity annihilates the expectation") {
  SymbolTable table;
  const int a = table.add_constant("A", 2, 2);
  const int b = table.add_constant("B", 2, 2);
  // Label 0 once, label 1 three times: zero sum.
  CHECK(wick_expectation(table, MomentPattern{2, {a}, {0, 1, 1, 1}}).is_zero());
  // Both labels appear three times: still zero.
  MomentPattern odd{2, {a, b}, {0, 0, 0, 1, 1, 1}};
  CHECK(wick_expectation(table, odd).is_zero());
}

TEST_CASE("relabeling the independent vectors does not change the result") {
  SymbolTable table;
  const int a = table.add_constant("A", 2, 2);
  const int b = table.add_constant("B", 2, 2);
  // Same structure with labels {0,1} renamed to {5,2}.
  MomentPattern p1{2, {a, b}, {0, 0, 1, 1, 0, 0}};
  MomentPattern p2{2, {a, b}, {5, 5, 2, 2, 5, 5}};
  const TraceProductSum s1 = wick_expectation(table, p1);
  const TraceProductSum s2 = wick_expectation(table, p2);
  CHECK(s1.terms().size() == s2.terms().size());
  CHECK(s1.to_string(table) == s2.to_string(table));
}

TEST_CASE("trace_of_quartic equals (p+2) tr(A) for any square A") {
  RngStream s(139, 0);
  for (int p : {1, 2, 4, 7}) {
    const Eigen::MatrixXd A = gaussian_matrix(s, p, p);
    CHECK(trace_of_quartic(A) == doctest::Approx((p + 2) * A.trace()).epsilon(1e-13));

    // Also consistent with the m = 2 pairing result traced numerically.
    SymbolTable table;
    const int id = table.add_constant("A", p, p);
    const TraceProductSum sum = wick_expectation(table, MomentPattern{p, {id}, {0, 0, 0, 0}});
    std::map<int, Eigen::MatrixXd> bind{{id, A}};
    CHECK(evaluate(table, sum, bind).trace() ==
          doctest::Approx(trace_of_quartic(A)).epsilon(1e-12));
  }
  CHECK_THROWS_AS(trace_of_quartic(Eigen::MatrixXd::Zero(2, 3)), std::invalid_argument);
}

TEST_CASE("pattern guards") {
  SymbolTable table;
  const int a = table.add_constant("A", 2, 2);
  // Six distinct labels = m = 6 > 5.
  MomentPattern too_deep{2, {a, a, a, a, a}, {0, 0, 1, 1, 2, 2, 3, 3, 4, 4, 5, 5}};
  CHECK_THROWS_AS(wick_expectation(table, too_deep), std::invalid_argument);
  // Interleave count must be m - 1.
  MomentPattern bad_counts{2, {a, a}, {0, 0, 1, 1}};
  CHECK_THROWS_AS(wick_expectation(table, bad_counts), std::invalid_argument);
  // Odd slot count is malformed.
  MomentPattern odd_slots{2, {a}, {0, 0, 1}};
  CHECK_THROWS_AS(wick_expectation(table, odd_slots), std::invalid_argument);
}

TEST_CASE("Monte Carlo estimate brackets the closed form on a mixed pattern") {
  SymbolTable table;
  const int a = table.add_constant("A", 2, 2);
  const int b = table.add_constant("B", 2, 2);
  MomentPattern pat{2, {a, b}, {0, 0, 1, 1, 0, 0}};
  const TraceProductSum sum = wick_expectation(table, pat);

  RngStream s(149, 0);
  std::map<int, Eigen::MatrixXd> bind;
  bind[a] = gaussian_matrix(s, 2, 2);
  bind[b] = gaussian_matrix(s, 2, 2);
  const Eigen::MatrixXd exact = evaluate(table, sum, bind);

  const McMoment mc = mc_moment_estimate(table, pat, bind, 200000, RngStream(777, 0));
  CHECK(mc.samples == 200000);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      const double dev = std::abs(mc.mean(i, j) - exact(i, j));
      CHECK(dev <= 5.0 * mc.stderr_mean(i, j));
    }
  }

  // Chunk-ordered reduction: the estimate is reproducible from equal streams.
  const McMoment again = mc_moment_estimate(table, pat, bind, 200000, RngStream(777, 0));
  CHECK((again.mean - mc.mean).norm() == 0.0);
}
