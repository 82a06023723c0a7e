#pragma once

#include "hvf/core.hpp"

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hvf {

enum class Op : unsigned char {
  Const,
  Var,
  Add,
  Sub,
  Mul,
  Div,
  Neg,
  Pow,
  Abs,
  Sign,
  Sin,
  Cos,
  Exp,
  Min,
  Max,
};

struct Node;
using NodePtr = std::shared_ptr<const Node>;

struct Node {
  Op op;
  double value = 0.0;  // Const
  int index = 0;       // Var: 0-based coordinate; Pow: exponent
  NodePtr a;
  NodePtr b;
};

// Immutable expression tree over the coordinates x1..xp.
class Expression {
 public:
  Expression();  // the constant 0
  explicit Expression(NodePtr root) : root_(std::move(root)) {}

  static Expression constant(double v);
  static Expression variable(int index);

  const Node& root() const { return *root_; }
  const NodePtr& ptr() const { return root_; }

  // Highest variable index used plus one.
  int arity() const;
  bool is_constant() const { return root_->op == Op::Const; }
  bool is_zero() const { return is_constant() && root_->value == 0.0; }

  double operator()(std::span<const double> x) const;
  double operator()(const Point& x) const { return (*this)(std::span<const double>(x.data(), x.size())); }

 private:
  NodePtr root_;
};

// Builders with light constant folding.
Expression operator+(const Expression& a, const Expression& b);
Expression operator-(const Expression& a, const Expression& b);
Expression operator*(const Expression& a, const Expression& b);
Expression operator/(const Expression& a, const Expression& b);
Expression operator-(const Expression& a);
Expression pow(const Expression& a, int n);
Expression abs(const Expression& a);
Expression sign(const Expression& a);
Expression sin(const Expression& a);
Expression cos(const Expression& a);
Expression exp(const Expression& a);
Expression min(const Expression& a, const Expression& b);
Expression max(const Expression& a, const Expression& b);

// Parses text with variables x1..x{dim}. Throws ParseError with line and column.
Expression parse_expression(std::string_view text, int dim = kMaxDim);

// Round-trips through parse_expression.
std::string to_string(const Expression& e);

double evaluate(const Expression& e, std::span<const double> x);

// Partial derivative in coordinate `var` (0-based). Almost-everywhere rules:
// sign' = 0, |a|' = sign(a) a', min/max follow the smaller/larger branch and
// average on ties.
Expression differentiate(const Expression& e, int var);

bool structurally_equal(const Expression& a, const Expression& b);

// Stack bytecode for fast repeated evaluation.
class CompiledExpr {
 public:
  CompiledExpr() = default;
  explicit CompiledExpr(const Expression& e);

  double operator()(const double* x) const;
  double operator()(const Point& x) const { return (*this)(x.data()); }
  bool is_zero() const { return zero_; }

 private:
  struct Instr {
    Op op;
    int arg;
    double value;
  };
  void emit(const Node& n, int depth);

  std::vector<Instr> code_;
  int max_depth_ = 0;
  bool zero_ = true;
};

}  // namespace hvf
