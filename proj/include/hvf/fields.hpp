#pragma once

#include "hvf/expr.hpp"
#include "hvf/jet.hpp"

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace hvf {

struct FieldDef {
  std::vector<Expression> coeffs;  // b_i1 .. b_ip
  Smoothness smooth;
};

// Iterated-bracket identifier (i_1, ..., i_k), entries in 0..n where 0 is the drift.
struct MultiIndex {
  std::vector<int> idx;

  MultiIndex() = default;
  MultiIndex(std::initializer_list<int> l) : idx(l) {}
  explicit MultiIndex(std::vector<int> v) : idx(std::move(v)) {}

  int length() const { return static_cast<int>(idx.size()); }
  int weight() const {
    int w = 0;
    for (int i : idx) w += i == 0 ? 2 : 1;
    return w;
  }
  std::string to_string() const;
  auto operator<=>(const MultiIndex&) const = default;
};

MultiIndex parse_multi_index(const std::string& text);

struct TestFunctionDef {
  std::string name;
  Expression expr;
  Smoothness smooth{1, false};
  std::optional<Point> support;  // half-widths R_j: phi vanishes outside |x_j| <= R_j
};

class VectorFieldSystem {
 public:
  // fields[0] is the drift (may be empty); fields[1..n] the weight-one fields.
  VectorFieldSystem(std::string name, int dim, int step, std::vector<std::optional<FieldDef>> fields, Box domain,
                    std::optional<Box> working = std::nullopt);

  const std::string& name() const { return name_; }
  int dim() const { return dim_; }
  int nfields() const { return static_cast<int>(fields_.size()) - 1; }
  int step() const { return step_; }
  bool has_drift() const { return fields_[0].has_value(); }
  bool free_flag() const { return free_; }
  void set_free_flag(bool f) { free_ = f; }
  static int weight(int field) { return field == 0 ? 2 : 1; }

  const FieldDef& field(int i) const;
  bool has_field(int i) const { return i >= 0 && i < static_cast<int>(fields_.size()) && fields_[i].has_value(); }
  // Indices of present fields: drift (0) first if present, then 1..n.
  const std::vector<int>& field_indices() const { return indices_; }

  const Box& domain() const { return domain_; }
  const Box& working() const { return working_; }

  // Checked evaluation (x must lie in the domain).
  Point evaluate_field(int i, const Point& x) const;
  // Unchecked fast evaluation through compiled bytecode.
  void field_fast(int i, const Point& x, Point& out) const;

  // Canonical commutator list: multiindices of weight <= step whose innermost
  // pair is strictly increasing. Other multiindices are zero or differ by sign.
  const std::vector<MultiIndex>& commutators() const { return commutators_; }
  int commutator_position(const MultiIndex& I) const;
  // Compiled symbolic coefficients of X_[I] for I in commutators().
  void commutator_fast(int k, const Point& x, Point& out) const;
  const std::vector<Expression>& commutator_expression(int k) const { return commutator_exprs_[k]; }
  // Smallest declared smoothness over the fields occurring in I.
  Smoothness smoothness_of(const MultiIndex& I) const;

  const std::vector<TestFunctionDef>& functions() const { return functions_; }
  void add_function(TestFunctionDef f) { functions_.push_back(std::move(f)); }
  const TestFunctionDef& function(const std::string& name) const;

 private:
  std::string name_;
  int dim_;
  int step_;
  bool free_ = false;
  std::vector<std::optional<FieldDef>> fields_;
  std::vector<std::vector<CompiledExpr>> compiled_;
  std::vector<int> indices_;
  Box domain_;
  Box working_;
  std::vector<MultiIndex> commutators_;
  std::vector<std::vector<Expression>> commutator_exprs_;
  std::vector<std::vector<CompiledExpr>> commutator_compiled_;
  std::vector<TestFunctionDef> functions_;
};

using SystemPtr = std::shared_ptr<const VectorFieldSystem>;

// Parses the system-definition text format. Throws ParseError.
std::shared_ptr<VectorFieldSystem> parse_system(const std::string& text, const std::string& name = "system");
std::shared_ptr<VectorFieldSystem> load_system_file(const std::string& path);
std::string format_system(const VectorFieldSystem& sys);

// Symbolic bracket [X, Y] = (JY) X - (JX) Y.
std::vector<Expression> bracket_expressions(const std::vector<Expression>& X, const std::vector<Expression>& Y);

// Evaluates X_[I] by jet arithmetic: each bracket consumes one jet order.
class CommutatorEvaluator {
 public:
  CommutatorEvaluator(SystemPtr sys, MultiIndex I);

  const MultiIndex& index() const { return I_; }
  Point operator()(const Point& x) const;
  // Jet of X_[I] of the requested order at x, one vector component per entry.
  std::vector<Jet> jet(const Point& x, int order) const;

 private:
  SystemPtr sys_;
  MultiIndex I_;
};

CommutatorEvaluator commutator(SystemPtr sys, const MultiIndex& I);
// Convenience: X_[I](x) via jets, checking weight and smoothness.
Point commutator_value(const VectorFieldSystem& sys, const MultiIndex& I, const Point& x);

struct BasisFamily {
  std::vector<MultiIndex> members;

  int weight() const {
    int w = 0;
    for (const auto& m : members) w += m.weight();
    return w;
  }
  std::string to_string() const;
  bool operator==(const BasisFamily&) const = default;
};

// Matrix whose columns are X_[I_j](x).
Mat basis_matrix(const VectorFieldSystem& sys, const BasisFamily& eta, const Point& x);
double lambda(const VectorFieldSystem& sys, const BasisFamily& eta, const Point& x);

// All p-subsets of the canonical list with their |det| at x, ordered by
// (weight, lexicographic).
struct FamilyValue {
  BasisFamily eta;
  double det;
};
std::vector<FamilyValue> enumerate_families(const VectorFieldSystem& sys, const Point& x);

struct RankReport {
  int rank = 0;
  BasisFamily best;
  double det = 0.0;
};
RankReport hormander_rank(const VectorFieldSystem& sys, const Point& x);

BasisFamily optimal_basis(const VectorFieldSystem& sys, const Point& x, double rho);

struct TaylorSystem {
  Point base;
  std::shared_ptr<VectorFieldSystem> system;  // polynomial fields
  double validity_radius = 0.0;
};

TaylorSystem taylor_system(const VectorFieldSystem& sys, const Point& x0);
double taylor_remainder(const VectorFieldSystem& sys, const TaylorSystem& ts, const MultiIndex& I, const Point& x);

// Lattice of points covering a box, n per side.
std::vector<Point> grid_points(const Box& box, int per_side);

}  // namespace hvf
