#pragma once

#include <map>
#include <vector>

#include <Eigen/Core>

#include "sgdvar/rng.hpp"
#include "sgdvar/term_algebra.hpp"

namespace sgdvar::wick {

// Alternating product of rank-one Gaussian outer products and fixed p x p
// symbol matrices,
//   x_{i_1} x_{i_1'}' A_1 x_{i_2} x_{i_2'}' A_2 ... A_{m-1} x_{i_m} x_{i_m'}',
// where each distinct index label names an independent standard normal vector
// and equal labels mean the same vector. `interleave` holds the m-1 symbol
// ids (identity symbols are allowed and meaningful); `index_assignment` holds
// the 2m labels in slot order (i_1, i_1', i_2, i_2', ...).
struct MomentPattern {
  int dim = 0;
  std::vector<int> interleave;
  std::vector<int> index_assignment;

  int m() const { return static_cast<int>(index_assignment.size()) / 2; }
};

// Closed-form expectation of the pattern by Gaussian pairing (Isserlis):
// sum over all ways to pair up slots that carry equal labels; each pairing
// contributes one trace-product term whose factors multiply the interleaved
// symbols along the induced path (open chain) and cycles (traces). Any label
// with an odd number of slots annihilates the whole expectation, giving the
// zero sum. The number of emitted terms depends only on m and the label
// partition, never on any concrete batch size. Guarded to m <= 5.
//
// The result is canonicalized (sorted canonical form, duplicates merged), so
// its printed form is stable and suitable for golden tests.
term::TraceProductSum wick_expectation(const term::SymbolTable& table,
                                       const MomentPattern& pattern);

// tr(E[x x' A x x']) for a standard normal x and any square A; equals
// (p+2) tr(A) because E[x x' A x x'] = A + A' + tr(A) I and tr(A') = tr(A).
double trace_of_quartic(const Eigen::MatrixXd& A);

// Monte Carlo estimate of the same pattern expectation with entrywise
// standard errors. Samples are split into fixed 65536-sample chunks, each on
// its own derived substream (OpenMP across chunks, combined in chunk order),
// so the estimate is bit-identical for every thread count.
struct McMoment {
  Eigen::MatrixXd mean;
  Eigen::MatrixXd stderr_mean;
  long long samples = 0;
};

McMoment mc_moment_estimate(const term::SymbolTable& table, const MomentPattern& pattern,
                            const std::map<int, Eigen::MatrixXd>& bindings,
                            long long sample_count, const RngStream& stream);

}  // namespace sgdvar::wick
