#include "sgdvar/term_algebra.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace sgdvar::term {

namespace {

int ref_rows(const SymbolTable& table, const SymbolRef& r) {
  const SymbolInfo& s = table.info(r.symbol);
  return r.transposed ? s.cols : s.rows;
}

int ref_cols(const SymbolTable& table, const SymbolRef& r) {
  const SymbolInfo& s = table.info(r.symbol);
  return r.transposed ? s.rows : s.cols;
}

std::string ref_string(const SymbolTable& table, const SymbolRef& r) {
  std::string s = table.info(r.symbol).name;
  if (r.transposed) s += "ᵀ";  // superscript T
  return s;
}

std::string coefficient_string(double c) {
  if (c == static_cast<long long>(c) && std::abs(c) < 1e15)
    return std::to_string(static_cast<long long>(c));
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", c);
  return buf;
}

// Canonical representative of a trace factor: lexicographic minimum over all
// rotations of the factor list and of its reversed-transposed variant.
MultiplicativeTerm canonical_trace_factor(const SymbolTable& table,
                                          const MultiplicativeTerm& f) {
  const std::vector<SymbolRef>& v = f.factors();
  if (v.size() <= 1) return f;
  std::vector<SymbolRef> rev(v.rbegin(), v.rend());
  for (SymbolRef& r : rev)
    if (!table.info(r.symbol).is_identity) r.transposed = !r.transposed;

  const std::size_t len = v.size();
  std::vector<SymbolRef> best;
  auto consider = [&](const std::vector<SymbolRef>& base) {
    for (std::size_t s = 0; s < len; ++s) {
      std::vector<SymbolRef> rot;
      rot.reserve(len);
      for (std::size_t k = 0; k < len; ++k) rot.push_back(base[(s + k) % len]);
      if (best.empty() || rot < best) best = std::move(rot);
    }
  };
  consider(v);
  consider(rev);
  return MultiplicativeTerm(table, std::move(best));
}

bool term_less(const TraceProductTerm& a, const TraceProductTerm& b) {
  if (a.trace_factors != b.trace_factors) return a.trace_factors < b.trace_factors;
  return a.chain < b.chain;
}

bool term_equal_structure(const TraceProductTerm& a, const TraceProductTerm& b) {
  return a.trace_factors == b.trace_factors && a.chain == b.chain;
}

}  // namespace

int SymbolTable::add(SymbolInfo info) {
  if (!info.is_identity) {
    if (info.name.empty()) throw std::invalid_argument("SymbolTable: empty name");
    if (by_name_.count(info.name))
      throw std::invalid_argument("SymbolTable: duplicate symbol '" + info.name + "'");
  }
  if (info.rows < 1 || info.cols < 1)
    throw std::invalid_argument("SymbolTable: dimensions must be positive");
  const int id = static_cast<int>(symbols_.size());
  if (!info.is_identity) by_name_[info.name] = id;
  symbols_.push_back(std::move(info));
  return id;
}

int SymbolTable::add_parameter(const std::string& name, int rows, int cols) {
  return add({name, rows, cols, SymbolKind::Parameter, false, false, -1, -1});
}

int SymbolTable::add_constant(const std::string& name, int rows, int cols) {
  return add({name, rows, cols, SymbolKind::Constant, false, false, -1, -1});
}

int SymbolTable::add_rank_one(const std::string& name, int rows, int cols) {
  const int u = add({name + "_u", rows, 1, SymbolKind::Constant, false, false, -1, -1});
  const int v = add({name + "_v", cols, 1, SymbolKind::Constant, false, false, -1, -1});
  SymbolInfo info{name, rows, cols, SymbolKind::Constant, false, true, u, v};
  return add(std::move(info));
}

int SymbolTable::identity(int dim) {
  if (dim < 1) throw std::invalid_argument("SymbolTable::identity: dim must be positive");
  auto it = identity_by_dim_.find(dim);
  if (it != identity_by_dim_.end()) return it->second;
  const int id = add({"I", dim, dim, SymbolKind::Constant, true, false, -1, -1});
  identity_by_dim_[dim] = id;
  return id;
}

int SymbolTable::find(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? -1 : it->second;
}

const SymbolInfo& SymbolTable::info(int id) const {
  if (id < 0 || id >= size())
    throw std::out_of_range("SymbolTable: unknown symbol id " + std::to_string(id));
  return symbols_[static_cast<std::size_t>(id)];
}

MultiplicativeTerm::MultiplicativeTerm(const SymbolTable& table,
                                       std::vector<SymbolRef> factors)
    : factors_(std::move(factors)) {
  if (factors_.empty())
    throw std::invalid_argument(
        "MultiplicativeTerm: empty factor list needs a dimension; use identity(dim)");
  for (SymbolRef& r : factors_) {
    const SymbolInfo& s = table.info(r.symbol);  // validates the id
    if (s.is_identity) r.transposed = false;
  }
  for (std::size_t k = 0; k + 1 < factors_.size(); ++k) {
    if (ref_cols(table, factors_[k]) != ref_rows(table, factors_[k + 1]))
      throw std::invalid_argument("MultiplicativeTerm: dimension mismatch between '" +
                                  ref_string(table, factors_[k]) + "' and '" +
                                  ref_string(table, factors_[k + 1]) + "'");
  }
  rows_ = ref_rows(table, factors_.front());
  cols_ = ref_cols(table, factors_.back());
}

MultiplicativeTerm MultiplicativeTerm::identity(int dim) {
  if (dim < 1)
    throw std::invalid_argument("MultiplicativeTerm::identity: dim must be positive");
  MultiplicativeTerm t;
  t.rows_ = dim;
  t.cols_ = dim;
  return t;
}

MultiplicativeTerm MultiplicativeTerm::normalized(const SymbolTable& table) const {
  std::vector<SymbolRef> kept;
  for (const SymbolRef& r : factors_)
    if (!table.info(r.symbol).is_identity) kept.push_back(r);
  if (kept.empty()) {
    if (!is_square())
      throw std::logic_error("MultiplicativeTerm::normalized: identity-only non-square term");
    return identity(rows_);
  }
  return MultiplicativeTerm(table, std::move(kept));
}

std::string MultiplicativeTerm::to_string(const SymbolTable& table) const {
  if (is_empty()) return "I";
  std::string out;
  for (std::size_t k = 0; k < factors_.size(); ++k) {
    if (k) out += "·";
    out += ref_string(table, factors_[k]);
  }
  return out;
}

int degree(const SymbolTable& table, const MultiplicativeTerm& term, int symbol) {
  table.info(symbol);  // validates
  int d = 0;
  for (const SymbolRef& r : term.factors())
    if (r.symbol == symbol) ++d;
  return d;
}

int parameter_degree(const SymbolTable& table, const MultiplicativeTerm& term) {
  int d = 0;
  for (const SymbolRef& r : term.factors())
    if (table.info(r.symbol).kind == SymbolKind::Parameter) ++d;
  return d;
}

void TraceProductSum::add_term(TraceProductTerm term) {
  for (const MultiplicativeTerm& f : term.trace_factors)
    if (!f.is_square())
      throw std::invalid_argument("TraceProductSum: trace factor is not square");
  if (term.chain.rows() != rows_ || term.chain.cols() != cols_)
    throw std::invalid_argument("TraceProductSum: chain shape does not match the sum");
  terms_.push_back(std::move(term));
}

void TraceProductSum::canonicalize(const SymbolTable& table) {
  for (TraceProductTerm& t : terms_) {
    for (MultiplicativeTerm& f : t.trace_factors) f = canonical_trace_factor(table, f);
    std::sort(t.trace_factors.begin(), t.trace_factors.end());
  }
  std::sort(terms_.begin(), terms_.end(), term_less);

  std::vector<TraceProductTerm> merged;
  for (TraceProductTerm& t : terms_) {
    if (!merged.empty() && term_equal_structure(merged.back(), t))
      merged.back().coefficient += t.coefficient;
    else
      merged.push_back(std::move(t));
  }
  merged.erase(std::remove_if(merged.begin(), merged.end(),
                              [](const TraceProductTerm& t) { return t.coefficient == 0.0; }),
               merged.end());
  terms_ = std::move(merged);
}

std::string TraceProductSum::to_string(const SymbolTable& table) const {
  if (terms_.empty()) return "0";
  std::string out;
  for (std::size_t k = 0; k < terms_.size(); ++k) {
    if (k) out += " + ";
    const TraceProductTerm& t = terms_[k];
    if (t.coefficient != 1.0) out += coefficient_string(t.coefficient) + "·";
    for (const MultiplicativeTerm& f : t.trace_factors)
      out += "tr(" + f.to_string(table) + ")·";
    out += "[" + t.chain.to_string(table) + "]";
  }
  return out;
}

int degree(const SymbolTable& table, const TraceProductSum& sum, int symbol) {
  int best = 0;
  for (const TraceProductTerm& t : sum.terms()) {
    int d = degree(table, t.chain, symbol);
    for (const MultiplicativeTerm& f : t.trace_factors) d += degree(table, f, symbol);
    best = std::max(best, d);
  }
  return best;
}

Eigen::MatrixXd evaluate(const SymbolTable& table, const MultiplicativeTerm& term,
                         const std::map<int, Eigen::MatrixXd>& bindings) {
  Eigen::MatrixXd acc = Eigen::MatrixXd::Identity(term.rows(), term.rows());
  for (const SymbolRef& r : term.factors()) {
    const SymbolInfo& s = table.info(r.symbol);
    Eigen::MatrixXd m;
    if (s.is_identity) {
      m = Eigen::MatrixXd::Identity(s.rows, s.cols);
    } else {
      auto it = bindings.find(r.symbol);
      if (it == bindings.end())
        throw std::invalid_argument("evaluate: unbound symbol '" + s.name + "'");
      if (it->second.rows() != s.rows || it->second.cols() != s.cols)
        throw std::invalid_argument("evaluate: binding for '" + s.name +
                                    "' has wrong dimensions");
      m = it->second;
    }
    if (r.transposed) m.transposeInPlace();
    acc = acc * m;
  }
  return acc;
}

Eigen::MatrixXd evaluate(const SymbolTable& table, const TraceProductSum& sum,
                         const std::map<int, Eigen::MatrixXd>& bindings) {
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(sum.rows(), sum.cols());
  for (const TraceProductTerm& t : sum.terms()) {
    double scale = t.coefficient;
    for (const MultiplicativeTerm& f : t.trace_factors)
      scale *= evaluate(table, f, bindings).trace();
    acc += scale * evaluate(table, t.chain, bindings);
  }
  return acc;
}

RotatedTrace rotate_trace(const SymbolTable& table, const MultiplicativeTerm& term,
                          std::size_t pivot) {
  if (!term.is_square())
    throw std::invalid_argument("rotate_trace: term is not square");
  if (pivot >= term.factors().size())
    throw std::invalid_argument("rotate_trace: pivot index out of range");
  const SymbolRef p = term.factors()[pivot];
  const SymbolInfo& ps = table.info(p.symbol);
  if (!ps.rank_one)
    throw std::invalid_argument("rotate_trace: pivot '" + ps.name +
                                "' is not a rank-one symbol");

  // tr(M1 · u v' · M2) = v' (M2 · M1) u; a transposed pivot is v u', which
  // swaps the outer vectors.
  std::vector<SymbolRef> rotated;
  for (std::size_t k = pivot + 1; k < term.factors().size(); ++k)
    rotated.push_back(term.factors()[k]);
  for (std::size_t k = 0; k < pivot; ++k) rotated.push_back(term.factors()[k]);

  RotatedTrace out;
  out.row_vector = p.transposed ? ps.column_vector : ps.row_vector;
  out.column_vector = p.transposed ? ps.row_vector : ps.column_vector;
  if (rotated.empty()) {
    const int dim = p.transposed ? ps.rows : ps.cols;
    out.rotated = MultiplicativeTerm::identity(dim);
  } else {
    out.rotated = MultiplicativeTerm(table, std::move(rotated));
  }
  return out;
}

}  // namespace sgdvar::term
