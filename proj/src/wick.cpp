#include "sgdvar/wick.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace sgdvar::wick {

namespace {

void validate_pattern(const term::SymbolTable& table, const MomentPattern& pattern) {
  if (pattern.dim < 1) throw std::invalid_argument("MomentPattern: dim must be positive");
  if (pattern.index_assignment.empty() || pattern.index_assignment.size() % 2 != 0)
    throw std::invalid_argument("MomentPattern: index_assignment must have 2m entries");
  const int m = pattern.m();
  if (static_cast<int>(pattern.interleave.size()) != m - 1)
    throw std::invalid_argument("MomentPattern: need exactly m-1 interleave symbols");
  for (int id : pattern.interleave) {
    const term::SymbolInfo& s = table.info(id);
    if (s.rows != pattern.dim || s.cols != pattern.dim)
      throw std::invalid_argument("MomentPattern: interleave symbol '" + s.name +
                                  "' is not dim x dim");
  }
}

// Slot layout: slot 2(k-1) is the column vector of the k-th outer product,
// slot 2(k-1)+1 the (transposed) row vector. The structural edge between
// slot 2j-1 and slot 2j carries interleave[j-1]. Slots 0 and 2m-1 are the
// open ends of the chain.
struct PairingWalk {
  const MomentPattern* pattern;
  std::vector<char> used;

  // One structural step from `cur`; appends the crossed symbol (transposed
  // when walked right-to-left) and returns the next slot.
  int structural(int cur, std::vector<term::SymbolRef>& factors) const {
    if (cur % 2 == 1) {
      const int j = (cur + 1) / 2;
      factors.push_back({pattern->interleave[static_cast<std::size_t>(j - 1)], false});
      return cur + 1;
    }
    const int j = cur / 2;
    factors.push_back({pattern->interleave[static_cast<std::size_t>(j - 1)], true});
    return cur - 1;
  }
};

void enumerate_pairings_rec(std::vector<std::vector<int>>& classes, std::size_t ci,
                            std::vector<int>& partner,
                            const std::function<void(const std::vector<int>&)>& emit) {
  while (ci < classes.size() && classes[ci].empty()) ++ci;
  if (ci == classes.size()) {
    emit(partner);
    return;
  }
  std::vector<int>& slots = classes[ci];
  const int first = slots.front();
  for (std::size_t k = 1; k < slots.size(); ++k) {
    const int mate = slots[static_cast<std::size_t>(k)];
    std::vector<int> rest;
    rest.reserve(slots.size() - 2);
    for (std::size_t j = 1; j < slots.size(); ++j)
      if (j != k) rest.push_back(slots[j]);
    partner[static_cast<std::size_t>(first)] = mate;
    partner[static_cast<std::size_t>(mate)] = first;
    std::vector<int> saved = std::move(slots);
    slots = std::move(rest);
    enumerate_pairings_rec(classes, ci, partner, emit);
    slots = std::move(saved);
  }
}

}  // namespace

term::TraceProductSum wick_expectation(const term::SymbolTable& table,
                                       const MomentPattern& pattern) {
  validate_pattern(table, pattern);
  const int m = pattern.m();
  if (m > 5) throw std::invalid_argument("wick_expectation: m > 5 (pairing blowup)");
  const int slots = 2 * m;

  term::TraceProductSum sum(pattern.dim, pattern.dim);

  // Group slots by label; any odd-size class kills every pairing.
  std::map<int, std::vector<int>> by_label;
  for (int s = 0; s < slots; ++s)
    by_label[pattern.index_assignment[static_cast<std::size_t>(s)]].push_back(s);
  for (const auto& [label, members] : by_label)
    if (members.size() % 2 != 0) return sum;

  std::vector<std::vector<int>> classes;
  classes.reserve(by_label.size());
  for (auto& [label, members] : by_label) classes.push_back(std::move(members));

  std::vector<int> partner(static_cast<std::size_t>(slots), -1);
  enumerate_pairings_rec(classes, 0, partner, [&](const std::vector<int>& match) {
    PairingWalk walk{&pattern, std::vector<char>(static_cast<std::size_t>(slots), 0)};

    // Open chain from slot 0 to slot 2m-1.
    std::vector<term::SymbolRef> chain;
    int cur = 0;
    walk.used[0] = 1;
    cur = match[0];
    walk.used[static_cast<std::size_t>(cur)] = 1;
    while (cur != slots - 1) {
      cur = walk.structural(cur, chain);
      walk.used[static_cast<std::size_t>(cur)] = 1;
      cur = match[static_cast<std::size_t>(cur)];
      walk.used[static_cast<std::size_t>(cur)] = 1;
    }

    term::TraceProductTerm term_out;
    term_out.coefficient = 1.0;
    term_out.chain = chain.empty()
                         ? term::MultiplicativeTerm::identity(pattern.dim)
                         : term::MultiplicativeTerm(table, std::move(chain));

    // Remaining slots decompose into cycles; each contributes a trace.
    for (int s0 = 1; s0 < slots - 1; ++s0) {
      if (walk.used[static_cast<std::size_t>(s0)]) continue;
      std::vector<term::SymbolRef> cyc;
      walk.used[static_cast<std::size_t>(s0)] = 1;
      int c = match[static_cast<std::size_t>(s0)];
      walk.used[static_cast<std::size_t>(c)] = 1;
      while (true) {
        c = walk.structural(c, cyc);
        if (c == s0) break;
        walk.used[static_cast<std::size_t>(c)] = 1;
        c = match[static_cast<std::size_t>(c)];
        walk.used[static_cast<std::size_t>(c)] = 1;
      }
      term_out.trace_factors.push_back(term::MultiplicativeTerm(table, std::move(cyc)));
    }

    sum.add_term(std::move(term_out));
  });

  sum.canonicalize(table);
  return sum;
}

double trace_of_quartic(const Eigen::MatrixXd& A) {
  if (A.rows() != A.cols()) throw std::invalid_argument("trace_of_quartic: A must be square");
  return (static_cast<double>(A.rows()) + 2.0) * A.trace();
}

McMoment mc_moment_estimate(const term::SymbolTable& table, const MomentPattern& pattern,
                            const std::map<int, Eigen::MatrixXd>& bindings,
                            long long sample_count, const RngStream& stream) {
  validate_pattern(table, pattern);
  if (sample_count < 1)
    throw std::invalid_argument("mc_moment_estimate: sample_count must be positive");
  const int m = pattern.m();
  const int p = pattern.dim;

  // Resolve interleave matrices once.
  std::vector<Eigen::MatrixXd> mats;
  mats.reserve(pattern.interleave.size());
  for (int id : pattern.interleave) {
    const term::SymbolInfo& s = table.info(id);
    if (s.is_identity) {
      mats.push_back(Eigen::MatrixXd::Identity(p, p));
    } else {
      auto it = bindings.find(id);
      if (it == bindings.end())
        throw std::invalid_argument("mc_moment_estimate: unbound symbol '" + s.name + "'");
      if (it->second.rows() != p || it->second.cols() != p)
        throw std::invalid_argument("mc_moment_estimate: binding for '" + s.name +
                                    "' has wrong dimensions");
      mats.push_back(it->second);
    }
  }

  // Distinct labels in sorted order; each draws one vector per sample.
  std::vector<int> labels = pattern.index_assignment;
  std::sort(labels.begin(), labels.end());
  labels.erase(std::unique(labels.begin(), labels.end()), labels.end());
  std::vector<int> slot_vec(static_cast<std::size_t>(2 * m));
  for (int s = 0; s < 2 * m; ++s) {
    const auto it = std::lower_bound(labels.begin(), labels.end(),
                                     pattern.index_assignment[static_cast<std::size_t>(s)]);
    slot_vec[static_cast<std::size_t>(s)] = static_cast<int>(it - labels.begin());
  }
  const int n_vecs = static_cast<int>(labels.size());

  constexpr long long kChunk = 65536;
  const long long chunks = (sample_count + kChunk - 1) / kChunk;
  std::vector<Eigen::MatrixXd> chunk_sum(static_cast<std::size_t>(chunks));
  std::vector<Eigen::MatrixXd> chunk_sumsq(static_cast<std::size_t>(chunks));

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
  for (long long c = 0; c < chunks; ++c) {
    RngStream sub = stream.substream(static_cast<std::uint64_t>(c));
    const long long begin = c * kChunk;
    const long long end = std::min(begin + kChunk, sample_count);
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(p, p);
    Eigen::MatrixXd sumsq = Eigen::MatrixXd::Zero(p, p);
    Eigen::MatrixXd vecs(p, n_vecs);
    for (long long it = begin; it < end; ++it) {
      for (int v = 0; v < n_vecs; ++v)
        for (int r = 0; r < p; ++r) vecs(r, v) = sub.normal();
      // coef = prod_j (w_j' A_j u_{j+1}); sample value = coef * u_1 w_m'.
      double coef = 1.0;
      for (int j = 1; j < m; ++j) {
        const auto w_j = vecs.col(slot_vec[static_cast<std::size_t>(2 * j - 1)]);
        const auto u_next = vecs.col(slot_vec[static_cast<std::size_t>(2 * j)]);
        coef *= w_j.dot(mats[static_cast<std::size_t>(j - 1)] * u_next);
      }
      const auto u1 = vecs.col(slot_vec[0]);
      const auto wm = vecs.col(slot_vec[static_cast<std::size_t>(2 * m - 1)]);
      const Eigen::MatrixXd val = coef * (u1 * wm.transpose());
      sum += val;
      sumsq += val.cwiseProduct(val);
    }
    chunk_sum[static_cast<std::size_t>(c)] = std::move(sum);
    chunk_sumsq[static_cast<std::size_t>(c)] = std::move(sumsq);
  }

  Eigen::MatrixXd total = Eigen::MatrixXd::Zero(p, p);
  Eigen::MatrixXd total_sq = Eigen::MatrixXd::Zero(p, p);
  for (long long c = 0; c < chunks; ++c) {
    total += chunk_sum[static_cast<std::size_t>(c)];
    total_sq += chunk_sumsq[static_cast<std::size_t>(c)];
  }

  McMoment out;
  const double N = static_cast<double>(sample_count);
  out.mean = total / N;
  out.stderr_mean =
      ((total_sq / N - out.mean.cwiseProduct(out.mean)).cwiseMax(0.0) / N).cwiseSqrt();
  out.samples = sample_count;
  return out;
}

}  // namespace sgdvar::wick
