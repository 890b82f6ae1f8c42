#pragma once

#include <compare>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace sgdvar::term {

enum class SymbolKind { Parameter, Constant };

struct SymbolInfo {
  std::string name;
  int rows = 0;
  int cols = 0;
  SymbolKind kind = SymbolKind::Parameter;
  bool is_identity = false;
  bool rank_one = false;
  int column_vector = -1;  // u in u v'
  int row_vector = -1;     // v in u v'
};

// Registry of named matrix symbols with dimensions. Identity symbols are
// created on demand per dimension and always display as "I".
class SymbolTable {
 public:
  int add_parameter(const std::string& name, int rows, int cols);
  int add_constant(const std::string& name, int rows, int cols);
  // Rank-one symbol mat = u v' together with its two (constant) vector
  // symbols, named <name>_u and <name>_v.
  int add_rank_one(const std::string& name, int rows, int cols);
  int identity(int dim);

  int find(const std::string& name) const;  // -1 when absent
  const SymbolInfo& info(int id) const;
  int size() const { return static_cast<int>(symbols_.size()); }

 private:
  int add(SymbolInfo info);
  std::vector<SymbolInfo> symbols_;
  std::map<std::string, int> by_name_;
  std::map<int, int> identity_by_dim_;
};

// One factor in a product: a symbol, possibly transposed. Identity factors
// are stored untransposed (I' = I).
struct SymbolRef {
  int symbol = -1;
  bool transposed = false;
  auto operator<=>(const SymbolRef&) const = default;
};

// A (possibly empty) chain of factors with validated dimension chaining. The
// empty product is the identity and carries its dimension explicitly.
class MultiplicativeTerm {
 public:
  MultiplicativeTerm(const SymbolTable& table, std::vector<SymbolRef> factors);
  static MultiplicativeTerm identity(int dim);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool is_square() const { return rows_ == cols_; }
  bool is_empty() const { return factors_.empty(); }
  const std::vector<SymbolRef>& factors() const { return factors_; }

  // Drops identity factors (the empty-product identity stays as is).
  MultiplicativeTerm normalized(const SymbolTable& table) const;

  std::string to_string(const SymbolTable& table) const;

  auto operator<=>(const MultiplicativeTerm& o) const { return factors_ <=> o.factors_; }
  bool operator==(const MultiplicativeTerm& o) const { return factors_ == o.factors_; }

 private:
  MultiplicativeTerm() = default;
  std::vector<SymbolRef> factors_;
  int rows_ = 0;
  int cols_ = 0;
};

// Multiplicity of `symbol` in the term's factor list (transposed occurrences
// count). Throws if the symbol id is not in the table.
int degree(const SymbolTable& table, const MultiplicativeTerm& term, int symbol);

// Total number of parameter-kind factors (constants and identities are free).
int parameter_degree(const SymbolTable& table, const MultiplicativeTerm& term);

// coefficient * tr(f_1) * ... * tr(f_k) * chain
struct TraceProductTerm {
  double coefficient = 1.0;
  std::vector<MultiplicativeTerm> trace_factors;
  MultiplicativeTerm chain = MultiplicativeTerm::identity(1);
};

// Sum of trace-product terms with a common outer shape. canonicalize() puts
// every trace factor into its canonical cyclic representative (trace is
// invariant under rotation and under reversal-with-transposes), sorts, merges
// duplicates, and drops zero coefficients — giving a deterministic, order-
// independent representation suitable for golden tests.
class TraceProductSum {
 public:
  TraceProductSum(int rows, int cols) : rows_(rows), cols_(cols) {}

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool is_zero() const { return terms_.empty(); }
  const std::vector<TraceProductTerm>& terms() const { return terms_; }

  void add_term(TraceProductTerm term);
  void canonicalize(const SymbolTable& table);

  std::string to_string(const SymbolTable& table) const;

 private:
  int rows_;
  int cols_;
  std::vector<TraceProductTerm> terms_;
};

// Max over terms of the total multiplicity of `symbol` (trace factors plus
// chain); 0 for the zero sum.
int degree(const SymbolTable& table, const TraceProductSum& sum, int symbol);

// Numeric evaluation. Bindings map symbol id -> matrix; identity symbols are
// materialized automatically; every other symbol used must be bound with
// matching dimensions.
Eigen::MatrixXd evaluate(const SymbolTable& table, const MultiplicativeTerm& term,
                         const std::map<int, Eigen::MatrixXd>& bindings);
Eigen::MatrixXd evaluate(const SymbolTable& table, const TraceProductSum& sum,
                         const std::map<int, Eigen::MatrixXd>& bindings);

// tr(M) = row_vector' * rotated * column_vector for a square product that
// contains a rank-one factor u v' at `pivot`:
//   tr(M1 · u v' · M2) = v' (M2 · M1) u.
// A transposed pivot swaps the roles of u and v. Rotation preserves the
// degree bookkeeping: deg(pivot; original) = deg(pivot; rotated) + 1.
struct RotatedTrace {
  int row_vector = -1;
  MultiplicativeTerm rotated = MultiplicativeTerm::identity(1);
  int column_vector = -1;
};

RotatedTrace rotate_trace(const SymbolTable& table, const MultiplicativeTerm& term,
                          std::size_t pivot);

}  // namespace sgdvar::term
