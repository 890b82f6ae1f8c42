// Polynomials in the batch factor c: the ring operations must commute with
// pointwise evaluation, for scalar and matrix coefficients alike, because the
// moment engine relies on doing one propagation for all batch sizes at once.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <stdexcept>

#include <Eigen/Dense>

#include "sgdvar/cb_poly.hpp"
#include "sgdvar/rng.hpp"

using namespace sgdvar;

namespace {

const double kSampleC[] = {0.0, 0.17, 0.5, 0.83, 1.0};

ScalarCbPoly random_scalar_poly(RngStream& s, int degree) {
  std::vector<double> coeffs;
  for (int k = 0; k <= degree; ++k) coeffs.push_back(s.normal());
  return ScalarCbPoly(std::move(coeffs));
}

MatrixCbPoly random_matrix_poly(RngStream& s, int degree, int dim) {
  std::vector<Eigen::MatrixXd> coeffs;
  for (int k = 0; k <= degree; ++k) coeffs.push_back(gaussian_matrix(s, dim, dim));
  return MatrixCbPoly(std::move(coeffs));
}

}  // namespace

TEST_CASE("batch factor c(n, b) endpoints and monotonicity") {
  CHECK(cb_value(8, 1) == 1.0);
  CHECK(cb_value(8, 8) == 0.0);
  for (int n : {2, 5, 23}) {
    double prev = cb_value(n, 1);
    CHECK(prev == 1.0);
    for (int b = 2; b <= n; ++b) {
      const double cur = cb_value(n, b);
      CHECK(cur < prev);
      prev = cur;
    }
  }
  CHECK(cb_value(5, 2) == doctest::Approx(3.0 / 8.0));
  CHECK_THROWS_AS(cb_value(1, 1), std::invalid_argument);
  CHECK_THROWS_AS(cb_value(5, 0), std::invalid_argument);
  CHECK_THROWS_AS(cb_value(5, 6), std::invalid_argument);
}

TEST_CASE("scalar polynomial arithmetic commutes with evaluation") {
  RngStream s(101, 0);
  const ScalarCbPoly P = random_scalar_poly(s, 3);
  const ScalarCbPoly Q = random_scalar_poly(s, 5);

  for (double c : kSampleC) {
    CHECK((P + Q).eval(c) == doctest::Approx(P.eval(c) + Q.eval(c)).epsilon(1e-13));
    CHECK((P - Q).eval(c) == doctest::Approx(P.eval(c) - Q.eval(c)).epsilon(1e-13));
    CHECK((P * Q).eval(c) == doctest::Approx(P.eval(c) * Q.eval(c)).epsilon(1e-12));
    CHECK((P * 2.5).eval(c) == doctest::Approx(2.5 * P.eval(c)).epsilon(1e-13));
    CHECK(P.shifted(2).eval(c) == doctest::Approx(c * c * P.eval(c)).epsilon(1e-13));
  }
  CHECK((P * Q).degree() == P.degree() + Q.degree());
  CHECK(P.shifted(2).degree() == P.degree() + 2);
}

TEST_CASE("matrix polynomial arithmetic commutes with evaluation") {
  RngStream s(202, 0);
  const int dim = 3;
  const MatrixCbPoly P = random_matrix_poly(s, 2, dim);
  const MatrixCbPoly Q = random_matrix_poly(s, 4, dim);

  for (double c : kSampleC) {
    CHECK(((P + Q).eval(c) - (P.eval(c) + Q.eval(c))).norm() < 1e-13);
    CHECK(((P - Q).eval(c) - (P.eval(c) - Q.eval(c))).norm() < 1e-13);
    // Matrix coefficients do not commute, so the convolution must respect
    // left/right order.
    CHECK(((P * Q).eval(c) - P.eval(c) * Q.eval(c)).norm() < 1e-12);
    CHECK(((P * 0.5).eval(c) - 0.5 * P.eval(c)).norm() < 1e-14);
  }
}

TEST_CASE("eval(0) returns the constant coefficient exactly") {
  RngStream s(303, 0);
  const ScalarCbPoly P = random_scalar_poly(s, 6);
  CHECK(P.eval(0.0) == P[0]);

  const MatrixCbPoly M = random_matrix_poly(s, 4, 2);
  CHECK((M.eval(0.0) - M[0]).norm() == 0.0);
}

TEST_CASE("zero polynomial behaves as the additive identity") {
  RngStream s(404, 0);
  const ScalarCbPoly P = random_scalar_poly(s, 3);
  const ScalarCbPoly zero;
  CHECK(zero.is_zero());
  const ScalarCbPoly sum = P + zero;
  for (double c : kSampleC) CHECK(sum.eval(c) == doctest::Approx(P.eval(c)));
  CHECK_THROWS_AS(zero.eval(0.5), std::logic_error);
}

TEST_CASE("map transforms coefficients and preserves degree") {
  RngStream s(505, 0);
  const MatrixCbPoly M = random_matrix_poly(s, 3, 2);
  const ScalarCbPoly traces =
      M.map([](const Eigen::MatrixXd& A) { return A.trace(); });
  CHECK(traces.degree() == M.degree());
  for (double c : kSampleC)
    CHECK(traces.eval(c) == doctest::Approx(M.eval(c).trace()).epsilon(1e-13));
}
