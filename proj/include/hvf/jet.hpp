#pragma once

#include "hvf/expr.hpp"

#include <memory>
#include <vector>

namespace hvf {

// Monomial bookkeeping for truncated polynomials in `dim` variables of total
// degree <= `order`. Monomials are graded: degree first, then lexicographic.
struct JetLayout {
  int dim;
  int order;
  std::vector<std::vector<int>> exponents;
  std::vector<int> degree;
  // Products (i, j, k) with exponents[i] + exponents[j] = exponents[k].
  struct Product {
    int i, j, k;
  };
  std::vector<Product> products;

  int index_of(const std::vector<int>& alpha) const;
  int size() const { return static_cast<int>(exponents.size()); }

  static std::shared_ptr<const JetLayout> get(int dim, int order);
};

// Truncated Taylor polynomial sum_alpha c_alpha (x - base)^alpha.
class Jet {
 public:
  Jet() = default;
  Jet(std::shared_ptr<const JetLayout> layout, Point base);

  static Jet constant(std::shared_ptr<const JetLayout> layout, const Point& base, double v);
  static Jet variable(std::shared_ptr<const JetLayout> layout, const Point& base, int var);

  const JetLayout& layout() const { return *layout_; }
  const std::shared_ptr<const JetLayout>& layout_ptr() const { return layout_; }
  const Point& base() const { return base_; }
  int order() const { return layout_->order; }
  int dim() const { return layout_->dim; }

  double value() const { return c_[0]; }
  double coeff(const std::vector<int>& alpha) const { return c_[layout_->index_of(alpha)]; }
  std::vector<double>& coeffs() { return c_; }
  const std::vector<double>& coeffs() const { return c_; }

  // Evaluates the polynomial at x.
  double operator()(const Point& x) const;

  Jet& operator+=(const Jet& o);
  Jet& operator-=(const Jet& o);
  Jet& operator*=(double s);
  friend Jet operator+(Jet a, const Jet& b) { return a += b; }
  friend Jet operator-(Jet a, const Jet& b) { return a -= b; }
  friend Jet operator*(Jet a, double s) { return a *= s; }
  friend Jet operator*(double s, Jet a) { return a *= s; }
  friend Jet operator*(const Jet& a, const Jet& b);
  Jet operator-() const { return (*this) * -1.0; }

  Jet reciprocal() const;
  Jet pow(int n) const;
  // f(this) where derivs[k] = f^(k)(value()).
  Jet compose(const std::vector<double>& derivs) const;
  // Partial derivative, one order lower.
  Jet derivative(int var) const;
  // Same polynomial truncated to a lower order.
  Jet truncate(int order) const;

 private:
  std::shared_ptr<const JetLayout> layout_;
  Point base_;
  std::vector<double> c_;
};

struct Smoothness {
  int k = 0;
  bool lipschitz = false;  // C^{k,1}

  // Highest jet order that is meaningful (almost everywhere for C^{k,1}).
  int max_jet_order() const { return k + (lipschitz ? 1 : 0); }
  std::string to_string() const;
  static Smoothness infinite() { return {1000, false}; }
};

// Taylor jet of e at x0 to the given order. Coefficients equal D^alpha e(x0)/alpha!.
Jet jet_at(const Expression& e, const Point& x0, int order);
// Same, but refuses orders beyond the declared smoothness.
Jet jet_at(const Expression& e, const Point& x0, int order, Smoothness declared);

// Expression for the Taylor polynomial represented by a jet.
Expression jet_to_expression(const Jet& j, double drop_below = 0.0);

// Numerical audit of a declared smoothness: estimates, by divided differences on
// sample points, whether derivatives up to the declared order stay bounded.
struct SmoothnessAudit {
  bool consistent = true;
  int worst_order = 0;
  double worst_ratio = 0.0;  // growth of the difference quotient under step halving
  std::string detail;
};
SmoothnessAudit audit_smoothness(const Expression& e, Smoothness declared, const std::vector<Point>& samples);

}  // namespace hvf
