#pragma once

#include <stdexcept>
#include <type_traits>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace sgdvar {

// Batch factor c(n,b) = (n-b) / (b(n-1)): 1 at b=1, 0 at b=n, strictly
// decreasing in b. It is the single knob through which the batch size enters
// every second-moment recursion, which is why moments are propagated as
// polynomials in it.
struct CbFactor {
  int n = 0;
  int b = 0;
  double value = 0.0;

  CbFactor(int n_, int b_) : n(n_), b(b_) {
    if (n < 2) throw std::invalid_argument("CbFactor: need n >= 2");
    if (b < 1 || b > n) throw std::invalid_argument("CbFactor: need 1 <= b <= n");
    value = static_cast<double>(n - b) /
            (static_cast<double>(b) * static_cast<double>(n - 1));
  }
};

inline double cb_value(int n, int b) { return CbFactor(n, b).value; }

namespace detail {
inline double zero_like(double) { return 0.0; }
inline Eigen::MatrixXd zero_like(const Eigen::MatrixXd& m) {
  return Eigen::MatrixXd::Zero(m.rows(), m.cols());
}
}  // namespace detail

// Dense polynomial in the batch factor c with coefficients in a ring T
// (double or Eigen::MatrixXd here). A default-constructed polynomial is the
// zero element with no shape; anything shaped starts from at least one
// coefficient.
template <class T>
class CbPoly {
 public:
  CbPoly() = default;
  explicit CbPoly(T c0) { coeffs_.push_back(std::move(c0)); }
  explicit CbPoly(std::vector<T> coeffs) : coeffs_(std::move(coeffs)) {}

  bool is_zero() const { return coeffs_.empty(); }
  // Degree of the stored representation (-1 for the empty zero polynomial).
  // Trailing coefficients are kept even if numerically zero.
  int degree() const { return static_cast<int>(coeffs_.size()) - 1; }
  const std::vector<T>& coeffs() const { return coeffs_; }
  const T& operator[](int k) const { return coeffs_.at(k); }

  CbPoly& operator+=(const CbPoly& o) {
    if (o.is_zero()) return *this;
    if (is_zero()) return *this = o;
    const T zero = detail::zero_like(coeffs_.front());
    while (coeffs_.size() < o.coeffs_.size()) coeffs_.push_back(zero);
    for (std::size_t k = 0; k < o.coeffs_.size(); ++k) coeffs_[k] += o.coeffs_[k];
    return *this;
  }

  CbPoly& operator-=(const CbPoly& o) { return *this += o * -1.0; }

  friend CbPoly operator+(CbPoly a, const CbPoly& b) { return a += b; }
  friend CbPoly operator-(CbPoly a, const CbPoly& b) { return a -= b; }

  CbPoly operator*(double s) const {
    CbPoly out(*this);
    for (T& c : out.coeffs_) c = c * s;
    return out;
  }
  friend CbPoly operator*(double s, const CbPoly& p) { return p * s; }

  // Ring product (coefficient convolution); matrix coefficients multiply as
  // matrices, so dimensions must chain.
  CbPoly operator*(const CbPoly& o) const {
    if (is_zero() || o.is_zero()) return CbPoly();
    std::vector<T> out;
    out.reserve(coeffs_.size() + o.coeffs_.size() - 1);
    const T proto = static_cast<T>(coeffs_.front() * o.coeffs_.front());
    for (std::size_t k = 0; k + 1 < coeffs_.size() + o.coeffs_.size(); ++k)
      out.push_back(detail::zero_like(proto));
    for (std::size_t i = 0; i < coeffs_.size(); ++i)
      for (std::size_t j = 0; j < o.coeffs_.size(); ++j)
        out[i + j] += coeffs_[i] * o.coeffs_[j];
    return CbPoly(std::move(out));
  }

  // Multiplication by the monomial c^k.
  CbPoly shifted(int k) const {
    if (k < 0) throw std::invalid_argument("CbPoly::shifted: negative shift");
    if (is_zero() || k == 0) return *this;
    std::vector<T> out;
    out.reserve(coeffs_.size() + k);
    for (int i = 0; i < k; ++i) out.push_back(detail::zero_like(coeffs_.front()));
    for (const T& c : coeffs_) out.push_back(c);
    return CbPoly(std::move(out));
  }

  // Horner evaluation; eval(0) returns the degree-0 coefficient exactly.
  T eval(double c) const {
    if (is_zero()) throw std::logic_error("CbPoly::eval: zero polynomial has no shape");
    T acc = coeffs_.back();
    for (int k = static_cast<int>(coeffs_.size()) - 2; k >= 0; --k)
      acc = static_cast<T>(acc * c + coeffs_[k]);
    return acc;
  }

  template <class F>
  auto map(F&& f) const -> CbPoly<std::decay_t<decltype(f(std::declval<const T&>()))>> {
    using U = std::decay_t<decltype(f(std::declval<const T&>()))>;
    std::vector<U> out;
    out.reserve(coeffs_.size());
    for (const T& c : coeffs_) out.push_back(f(c));
    return CbPoly<U>(std::move(out));
  }

 private:
  std::vector<T> coeffs_;
};

using ScalarCbPoly = CbPoly<double>;
using MatrixCbPoly = CbPoly<Eigen::MatrixXd>;

}  // namespace sgdvar
