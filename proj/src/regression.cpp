#include "sgdvar/regression.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>

namespace sgdvar::regression {

namespace {

MatrixCbPoly map_coeffs(const MatrixCbPoly& S,
                        const std::function<Eigen::MatrixXd(const Eigen::MatrixXd&)>& f) {
  return S.map(f);
}

// G(S, m) for one (Gram, moment-vector) pair: G = K S K - K m q' - q m' K + q q'
// where K is the Gram matrix and q the target vector (y_i x_i, or u for the
// mean version). Affine in S, so it maps coefficient-wise plus a degree-0 part.
MatrixCbPoly gradient_outer(const MatrixCbPoly& S, const Eigen::VectorXd& m,
                            const Eigen::MatrixXd& K, const Eigen::VectorXd& q) {
  MatrixCbPoly out = map_coeffs(S, [&](const Eigen::MatrixXd& c) {
    return Eigen::MatrixXd(K * c * K);
  });
  const Eigen::MatrixXd Km = K * m;
  Eigen::MatrixXd constant = q * q.transpose();
  constant -= Km * q.transpose();
  constant -= q * Km.transpose();
  out += MatrixCbPoly(constant);
  return out;
}

void check_state(const Dataset& ds, const MomentState& state) {
  if (state.mean.size() != ds.p())
    throw std::invalid_argument("MomentState: mean size does not match dataset");
  if (state.second_moment.is_zero())
    throw std::invalid_argument("MomentState: empty second moment");
}

}  // namespace

std::vector<MomentState> propagate_moments(const Dataset& ds,
                                           const Eigen::VectorXd& w0,
                                           const LearningRateSchedule& schedule,
                                           int t_max) {
  if (w0.size() != ds.p())
    throw std::invalid_argument("propagate_moments: w0 size does not match dataset");
  if (t_max < 0) throw std::invalid_argument("propagate_moments: t_max must be >= 0");

  const Eigen::MatrixXd& C = ds.gram_mean();
  const Eigen::VectorXd& u = ds.target_moment();
  const double n = static_cast<double>(ds.n());

  std::vector<MomentState> states;
  states.reserve(t_max + 1);

  Eigen::VectorXd mean = w0;
  MatrixCbPoly S{Eigen::MatrixXd(w0 * w0.transpose())};
  states.push_back({0, mean, S});

  for (int t = 0; t < t_max; ++t) {
    const double a = schedule.alpha(t);

    MatrixCbPoly sum_G;
    for (int i = 0; i < ds.n(); ++i)
      sum_G += gradient_outer(S, mean, ds.gram(i), ds.targets()(i) * ds.sample(i));
    const MatrixCbPoly Gbar = gradient_outer(S, mean, C, u);
    // (c/n) sum_i G_i + (1-c) Gbar
    const MatrixCbPoly second = (sum_G * (1.0 / n)).shifted(1) + Gbar - Gbar.shifted(1);

    const Eigen::MatrixXd mu_ut = mean * u.transpose();
    MatrixCbPoly next = S;
    next -= (map_coeffs(S, [&](const Eigen::MatrixXd& c) { return Eigen::MatrixXd(c * C); })
             - MatrixCbPoly(mu_ut)) * a;
    next -= (map_coeffs(S, [&](const Eigen::MatrixXd& c) { return Eigen::MatrixXd(C * c); })
             - MatrixCbPoly(Eigen::MatrixXd(mu_ut.transpose()))) * a;
    next += second * (a * a);

    mean -= a * (C * mean - u);
    S = std::move(next);
    states.push_back({t + 1, mean, S});
  }
  return states;
}

MatrixCbPoly gradient_second_moment_poly(const Dataset& ds, const MomentState& state) {
  check_state(ds, state);
  const double n = static_cast<double>(ds.n());
  MatrixCbPoly sum_G;
  for (int i = 0; i < ds.n(); ++i)
    sum_G += gradient_outer(state.second_moment, state.mean, ds.gram(i),
                            ds.targets()(i) * ds.sample(i));
  const MatrixCbPoly Gbar =
      gradient_outer(state.second_moment, state.mean, ds.gram_mean(), ds.target_moment());
  return (sum_G * (1.0 / n)).shifted(1) + Gbar - Gbar.shifted(1);
}

ScalarCbPoly variance_stochastic_gradient_poly(const Dataset& ds,
                                               const MomentState& state) {
  const MatrixCbPoly outer = gradient_second_moment_poly(ds, state);
  ScalarCbPoly v = outer.map([](const Eigen::MatrixXd& m) { return m.trace(); });
  const double drift =
      (ds.gram_mean() * state.mean - ds.target_moment()).squaredNorm();
  return v - ScalarCbPoly(drift);
}

ScalarCbPoly variance_full_gradient_poly(const Dataset& ds, const MomentState& state) {
  check_state(ds, state);
  const MatrixCbPoly Gbar =
      gradient_outer(state.second_moment, state.mean, ds.gram_mean(), ds.target_moment());
  ScalarCbPoly v = Gbar.map([](const Eigen::MatrixXd& m) { return m.trace(); });
  const double drift =
      (ds.gram_mean() * state.mean - ds.target_moment()).squaredNorm();
  return v - ScalarCbPoly(drift);
}

double variance_stochastic_gradient(const MomentState& state, const Dataset& ds, int b) {
  return variance_stochastic_gradient_poly(ds, state).eval(cb_value(ds.n(), b));
}

double variance_full_gradient(const MomentState& state, const Dataset& ds, int b) {
  return variance_full_gradient_poly(ds, state).eval(cb_value(ds.n(), b));
}

double linear_comb_second_moment(const Dataset& ds, const MomentState& state,
                                 const LinearCombTerm& term, int b) {
  check_state(ds, state);
  if (term.coefficient_matrices.empty())
    throw std::invalid_argument("linear_comb_second_moment: empty term");
  const long rows = term.coefficient_matrices.begin()->second.rows();
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(rows, ds.p());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(rows);
  for (const auto& [i, Ai] : term.coefficient_matrices) {
    if (i < 0 || i >= ds.n())
      throw std::invalid_argument("linear_comb_second_moment: sample index out of range");
    if (Ai.rows() != rows || Ai.cols() != ds.p())
      throw std::invalid_argument("linear_comb_second_moment: coefficient shape mismatch");
    A += Ai * ds.gram(i);
    v += Ai * ds.sample(i) * ds.targets()(i);
  }
  const Eigen::MatrixXd S = state.second_moment.eval(cb_value(ds.n(), b));
  const double val = (A.transpose() * A * S).trace() - 2.0 * v.dot(A * state.mean) +
                     v.squaredNorm();
  return term.scalar_weight * val;
}

MonotonicityTable monotonicity_table(const std::vector<MomentState>& states,
                                     const Dataset& ds, int t) {
  if (t < 0 || t >= static_cast<int>(states.size()))
    throw std::invalid_argument("monotonicity_table: no state for requested t");
  const MomentState& state = states[static_cast<std::size_t>(t)];
  const ScalarCbPoly vg = variance_stochastic_gradient_poly(ds, state);
  const ScalarCbPoly vf = variance_full_gradient_poly(ds, state);

  MonotonicityTable table;
  table.t = t;
  table.rows.reserve(ds.n());
  double max_g = 0.0, max_f = 0.0;
  for (int b = 1; b <= ds.n(); ++b) {
    const double c = cb_value(ds.n(), b);
    MonotonicityRow row{b, vg.eval(c), vf.eval(c)};
    max_g = std::max(max_g, std::abs(row.var_g));
    max_f = std::max(max_f, std::abs(row.var_full));
    table.rows.push_back(row);
  }

  const double tol_g = 1e-12 * max_g;
  const double tol_f = 1e-12 * max_f;
  table.var_g_non_increasing = true;
  table.var_full_non_increasing = true;
  table.min_gap_var_g = std::numeric_limits<double>::infinity();
  table.min_gap_var_full = std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k < table.rows.size(); ++k) {
    const double gap_g = table.rows[k - 1].var_g - table.rows[k].var_g;
    const double gap_f = table.rows[k - 1].var_full - table.rows[k].var_full;
    table.min_gap_var_g = std::min(table.min_gap_var_g, gap_g);
    table.min_gap_var_full = std::min(table.min_gap_var_full, gap_f);
    if (gap_g < -tol_g) table.var_g_non_increasing = false;
    if (gap_f < -tol_f) table.var_full_non_increasing = false;
  }
  return table;
}

}  // namespace sgdvar::regression
