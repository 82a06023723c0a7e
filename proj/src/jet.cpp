#include "hvf/jet.hpp"

#include <cmath>
#include <map>
#include <mutex>

namespace hvf {

namespace {

void enumerate(int dim, int remaining, int pos, std::vector<int>& cur, std::vector<std::vector<int>>& out) {
  if (pos == dim - 1) {
    cur[pos] = remaining;
    out.push_back(cur);
    return;
  }
  for (int a = remaining; a >= 0; --a) {
    cur[pos] = a;
    enumerate(dim, remaining - a, pos + 1, cur, out);
  }
}

double sgn(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

}  // namespace

std::shared_ptr<const JetLayout> JetLayout::get(int dim, int order) {
  static std::mutex mu;
  static std::map<std::pair<int, int>, std::shared_ptr<const JetLayout>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto key = std::make_pair(dim, order);
  if (auto it = cache.find(key); it != cache.end()) return it->second;

  auto L = std::make_shared<JetLayout>();
  L->dim = dim;
  L->order = order;
  std::vector<int> cur(dim, 0);
  for (int d = 0; d <= order; ++d) {
    if (dim == 0) break;
    enumerate(dim, d, 0, cur, L->exponents);
  }
  if (dim == 0) L->exponents.push_back({});
  for (auto& e : L->exponents) {
    int s = 0;
    for (int v : e) s += v;
    L->degree.push_back(s);
  }
  std::map<std::vector<int>, int> index;
  for (int i = 0; i < L->size(); ++i) index[L->exponents[i]] = i;
  for (int i = 0; i < L->size(); ++i) {
    for (int j = 0; j < L->size(); ++j) {
      if (L->degree[i] + L->degree[j] > order) continue;
      std::vector<int> s(dim);
      for (int m = 0; m < dim; ++m) s[m] = L->exponents[i][m] + L->exponents[j][m];
      L->products.push_back({i, j, index.at(s)});
    }
  }
  cache[key] = L;
  return L;
}

int JetLayout::index_of(const std::vector<int>& alpha) const {
  for (int i = 0; i < size(); ++i) {
    if (exponents[i] == alpha) return i;
  }
  throw Error("monomial not present in jet layout");
}

Jet::Jet(std::shared_ptr<const JetLayout> layout, Point base)
    : layout_(std::move(layout)), base_(std::move(base)), c_(layout_->size(), 0.0) {}

Jet Jet::constant(std::shared_ptr<const JetLayout> layout, const Point& base, double v) {
  Jet j(std::move(layout), base);
  j.c_[0] = v;
  return j;
}

Jet Jet::variable(std::shared_ptr<const JetLayout> layout, const Point& base, int var) {
  Jet j(layout, base);
  j.c_[0] = base[var];
  if (layout->order >= 1) {
    std::vector<int> e(layout->dim, 0);
    e[var] = 1;
    j.c_[layout->index_of(e)] = 1.0;
  }
  return j;
}

double Jet::operator()(const Point& x) const {
  const auto& L = *layout_;
  double s = 0.0;
  for (int i = 0; i < L.size(); ++i) {
    if (c_[i] == 0.0) continue;
    double term = c_[i];
    for (int m = 0; m < L.dim; ++m) {
      for (int k = 0; k < L.exponents[i][m]; ++k) term *= x[m] - base_[m];
    }
    s += term;
  }
  return s;
}

Jet& Jet::operator+=(const Jet& o) {
  for (size_t i = 0; i < c_.size(); ++i) c_[i] += o.c_[i];
  return *this;
}

Jet& Jet::operator-=(const Jet& o) {
  for (size_t i = 0; i < c_.size(); ++i) c_[i] -= o.c_[i];
  return *this;
}

Jet& Jet::operator*=(double s) {
  for (double& v : c_) v *= s;
  return *this;
}

Jet operator*(const Jet& a, const Jet& b) {
  Jet r(a.layout_, a.base_);
  for (const auto& p : a.layout_->products) r.c_[p.k] += a.c_[p.i] * b.c_[p.j];
  return r;
}

Jet Jet::compose(const std::vector<double>& derivs) const {
  // sum_k f^(k)(v)/k! (this - v)^k
  Jet delta = *this;
  delta.c_[0] = 0.0;
  Jet result = Jet::constant(layout_, base_, derivs[0]);
  Jet power = Jet::constant(layout_, base_, 1.0);
  double factorial = 1.0;
  for (int k = 1; k <= order(); ++k) {
    power = power * delta;
    factorial *= k;
    result += power * (derivs[k] / factorial);
  }
  return result;
}

Jet Jet::reciprocal() const {
  double v = value();
  if (v == 0.0) throw DomainError("division by zero in jet");
  std::vector<double> d(order() + 1);
  double f = 1.0 / v;
  for (int k = 0; k <= order(); ++k) {
    d[k] = f;
    f *= -(k + 1) / v;
  }
  return compose(d);
}

Jet Jet::pow(int n) const {
  Jet result = Jet::constant(layout_, base_, 1.0);
  Jet b = *this;
  while (n > 0) {
    if (n & 1) result = result * b;
    n >>= 1;
    if (n) b = b * b;
  }
  return result;
}

Jet Jet::derivative(int var) const {
  const auto& L = *layout_;
  if (L.order == 0) throw Error("cannot differentiate an order-0 jet");
  auto lower = JetLayout::get(L.dim, L.order - 1);
  Jet r(lower, base_);
  for (int i = 0; i < lower->size(); ++i) {
    std::vector<int> e = lower->exponents[i];
    e[var] += 1;
    r.c_[i] = e[var] * c_[L.index_of(e)];
  }
  return r;
}

Jet Jet::truncate(int new_order) const {
  if (new_order > order()) throw Error("cannot raise jet order by truncation");
  auto lower = JetLayout::get(dim(), new_order);
  Jet r(lower, base_);
  // Graded ordering makes the lower layout a prefix.
  for (int i = 0; i < lower->size(); ++i) r.c_[i] = c_[i];
  return r;
}

std::string Smoothness::to_string() const {
  if (k >= 1000) return "Cinf";
  return lipschitz ? "C" + std::to_string(k) + ",1" : "C" + std::to_string(k);
}

namespace {

Jet jet_node(const Node& n, const std::shared_ptr<const JetLayout>& L, const Point& x0) {
  switch (n.op) {
    case Op::Const: return Jet::constant(L, x0, n.value);
    case Op::Var:
      if (n.index >= L->dim) throw DomainError("variable index exceeds point dimension");
      return Jet::variable(L, x0, n.index);
    case Op::Add: return jet_node(*n.a, L, x0) + jet_node(*n.b, L, x0);
    case Op::Sub: return jet_node(*n.a, L, x0) - jet_node(*n.b, L, x0);
    case Op::Mul: return jet_node(*n.a, L, x0) * jet_node(*n.b, L, x0);
    case Op::Div: return jet_node(*n.a, L, x0) * jet_node(*n.b, L, x0).reciprocal();
    case Op::Neg: return -jet_node(*n.a, L, x0);
    case Op::Pow: return jet_node(*n.a, L, x0).pow(n.index);
    case Op::Abs: {
      Jet a = jet_node(*n.a, L, x0);
      return a * sgn(a.value());
    }
    case Op::Sign: return Jet::constant(L, x0, sgn(jet_node(*n.a, L, x0).value()));
    case Op::Sin:
    case Op::Cos:
    case Op::Exp: {
      Jet a = jet_node(*n.a, L, x0);
      double v = a.value();
      std::vector<double> d(L->order + 1);
      for (int k = 0; k <= L->order; ++k) {
        if (n.op == Op::Exp) {
          d[k] = std::exp(v);
        } else {
          // sin^(k)(v) = sin(v + k pi/2), cos^(k)(v) = cos(v + k pi/2)
          int phase = k % 4;
          double s = std::sin(v), c = std::cos(v);
          double sk[4] = {s, c, -s, -c};
          double ck[4] = {c, -s, -c, s};
          d[k] = n.op == Op::Sin ? sk[phase] : ck[phase];
        }
      }
      return a.compose(d);
    }
    case Op::Min:
    case Op::Max: {
      Jet a = jet_node(*n.a, L, x0);
      Jet b = jet_node(*n.b, L, x0);
      double s = sgn(a.value() - b.value());
      Jet avg = (a + b) * 0.5;
      Jet jump = (a - b) * (0.5 * s);
      return n.op == Op::Min ? avg - jump : avg + jump;
    }
  }
  return Jet::constant(L, x0, 0.0);
}

}  // namespace

Jet jet_at(const Expression& e, const Point& x0, int order) {
  if (order < 0) throw Error("negative jet order");
  auto L = JetLayout::get(static_cast<int>(x0.size()), order);
  return jet_node(e.root(), L, x0);
}

Jet jet_at(const Expression& e, const Point& x0, int order, Smoothness declared) {
  if (order > declared.max_jet_order()) {
    throw SmoothnessError("jet of order " + std::to_string(order) + " exceeds declared smoothness " + declared.to_string());
  }
  return jet_at(e, x0, order);
}

Expression jet_to_expression(const Jet& j, double drop_below) {
  const auto& L = j.layout();
  Expression sum = Expression::constant(0.0);
  for (int i = 0; i < L.size(); ++i) {
    double c = j.coeffs()[i];
    if (std::fabs(c) <= drop_below || c == 0.0) continue;
    Expression term = Expression::constant(c);
    for (int m = 0; m < L.dim; ++m) {
      int a = L.exponents[i][m];
      if (a == 0) continue;
      Expression shifted = Expression::variable(m) - Expression::constant(j.base()[m]);
      term = term * pow(shifted, a);
    }
    sum = sum + term;
  }
  return sum;
}

SmoothnessAudit audit_smoothness(const Expression& e, Smoothness declared, const std::vector<Point>& samples) {
  SmoothnessAudit audit;
  if (declared.k >= 1000) return audit;
  // Lipschitz classes: the (k+1)-th difference quotient must stay bounded.
  // Plain C^k: the k-th one-sided quotients must agree in the limit.
  const int m = declared.lipschitz ? declared.k + 1 : declared.k;
  if (m == 0) return audit;
  auto binom = [](int n, int k) {
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
  };
  auto quotient = [&](const Point& x, int dir, double h, int side) {
    double s = 0.0;
    for (int i = 0; i <= m; ++i) {
      Point y = x;
      y[dir] += side * i * h;
      s += ((m - i) % 2 == 0 ? 1.0 : -1.0) * binom(m, i) * e(y);
    }
    if (side < 0 && m % 2 == 1) s = -s;
    return s / std::pow(h, m);
  };
  const double h0 = 0.05;
  const int halvings = m >= 3 ? 4 : 6;
  for (const Point& x : samples) {
    for (int dir = 0; dir < x.size(); ++dir) {
      double qf0 = quotient(x, dir, h0, +1);
      double h = h0 / std::pow(2.0, halvings);
      double qf = quotient(x, dir, h, +1);
      double qb = quotient(x, dir, h, -1);
      double scale = 1.0 + std::fabs(qf0);
      double growth = std::max(std::fabs(qf), std::fabs(qb)) / scale;
      if (growth > audit.worst_ratio) {
        audit.worst_ratio = growth;
        audit.worst_order = m;
      }
      bool bad = growth > 8.0;
      if (!declared.lipschitz && std::fabs(qf - qb) > 0.1 * (1.0 + std::fabs(qf) + std::fabs(qb))) bad = true;
      if (bad && audit.consistent) {
        audit.consistent = false;
        audit.detail = "order-" + std::to_string(m) + " difference quotient misbehaves at " + format_point(x) + " along x" +
                       std::to_string(dir + 1);
      }
    }
  }
  return audit;
}

}  // namespace hvf
