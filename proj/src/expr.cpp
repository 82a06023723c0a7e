#include "hvf/expr.hpp"

#include <charconv>
#include <cmath>
#include <cstdio>
#include <functional>

namespace hvf {

namespace {

NodePtr make_node(Op op, NodePtr a = nullptr, NodePtr b = nullptr) {
  auto n = std::make_shared<Node>();
  n->op = op;
  n->a = std::move(a);
  n->b = std::move(b);
  return n;
}

NodePtr make_const(double v) {
  auto n = std::make_shared<Node>();
  n->op = Op::Const;
  n->value = v;
  return n;
}

NodePtr make_var(int i) {
  auto n = std::make_shared<Node>();
  n->op = Op::Var;
  n->index = i;
  return n;
}

NodePtr make_pow(NodePtr a, int k) {
  auto n = std::make_shared<Node>();
  n->op = Op::Pow;
  n->index = k;
  n->a = std::move(a);
  return n;
}

double sgn(double v) { return v > 0 ? 1.0 : (v < 0 ? -1.0 : 0.0); }

double ipow(double base, int n) {
  double r = 1.0;
  while (n > 0) {
    if (n & 1) r *= base;
    base *= base;
    n >>= 1;
  }
  return r;
}

double eval_node(const Node& n, std::span<const double> x) {
  switch (n.op) {
    case Op::Const: return n.value;
    case Op::Var: return x[n.index];
    case Op::Add: return eval_node(*n.a, x) + eval_node(*n.b, x);
    case Op::Sub: return eval_node(*n.a, x) - eval_node(*n.b, x);
    case Op::Mul: return eval_node(*n.a, x) * eval_node(*n.b, x);
    case Op::Div: return eval_node(*n.a, x) / eval_node(*n.b, x);
    case Op::Neg: return -eval_node(*n.a, x);
    case Op::Pow: return ipow(eval_node(*n.a, x), n.index);
    case Op::Abs: return std::fabs(eval_node(*n.a, x));
    case Op::Sign: return sgn(eval_node(*n.a, x));
    case Op::Sin: return std::sin(eval_node(*n.a, x));
    case Op::Cos: return std::cos(eval_node(*n.a, x));
    case Op::Exp: return std::exp(eval_node(*n.a, x));
    case Op::Min: return std::min(eval_node(*n.a, x), eval_node(*n.b, x));
    case Op::Max: return std::max(eval_node(*n.a, x), eval_node(*n.b, x));
  }
  return 0.0;
}

bool is_const(const Expression& e, double v) { return e.root().op == Op::Const && e.root().value == v; }

// ---------------------------------------------------------------- parser

class Parser {
 public:
  Parser(std::string_view text, int dim) : s_(text), dim_(dim) {}

  Expression parse() {
    skip_ws();
    if (at_end()) fail("empty expression");
    NodePtr e = parse_sum();
    skip_ws();
    if (!at_end()) fail(std::string("unexpected character '") + s_[pos_] + "'");
    return Expression(e);
  }

 private:
  std::string_view s_;
  int dim_;
  size_t pos_ = 0;
  int line_ = 1;
  int col_ = 1;
  const Node* last_literal_ = nullptr;

  bool at_end() const { return pos_ >= s_.size(); }
  char peek() const { return at_end() ? '\0' : s_[pos_]; }
  void advance() {
    if (s_[pos_] == '\n') {
      ++line_;
      col_ = 1;
    } else {
      ++col_;
    }
    ++pos_;
  }
  void skip_ws() {
    while (!at_end() && std::isspace(static_cast<unsigned char>(peek()))) advance();
  }
  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, line_, col_); }
  void expect(char c) {
    skip_ws();
    if (peek() != c) fail(std::string("expected '") + c + "'");
    advance();
  }

  NodePtr parse_sum() {
    NodePtr lhs = parse_product();
    for (;;) {
      skip_ws();
      char c = peek();
      if (c != '+' && c != '-') return lhs;
      advance();
      NodePtr rhs = parse_product();
      lhs = make_node(c == '+' ? Op::Add : Op::Sub, lhs, rhs);
    }
  }

  NodePtr parse_product() {
    NodePtr lhs = parse_unary();
    for (;;) {
      skip_ws();
      char c = peek();
      if (c != '*' && c != '/') return lhs;
      advance();
      NodePtr rhs = parse_unary();
      lhs = make_node(c == '*' ? Op::Mul : Op::Div, lhs, rhs);
    }
  }

  NodePtr parse_unary() {
    skip_ws();
    if (peek() == '-') {
      advance();
      NodePtr operand = parse_unary();
      // A bare numeric literal folds into a negative constant.
      if (operand.get() == last_literal_) return make_const(-operand->value);
      return make_node(Op::Neg, operand);
    }
    if (peek() == '+') {
      advance();
      return parse_unary();
    }
    return parse_power();
  }

  NodePtr parse_power() {
    NodePtr base = parse_primary();
    skip_ws();
    if (peek() != '^') return base;
    advance();
    last_literal_ = nullptr;
    skip_ws();
    if (!std::isdigit(static_cast<unsigned char>(peek()))) fail("exponent must be a non-negative integer literal");
    size_t start = pos_;
    while (std::isdigit(static_cast<unsigned char>(peek()))) advance();
    if (peek() == '.' || peek() == 'e' || peek() == 'E') fail("exponent must be a non-negative integer literal");
    int k = 0;
    auto [ptr, ec] = std::from_chars(s_.data() + start, s_.data() + pos_, k);
    if (ec != std::errc() || k > 64) fail("exponent out of range");
    return make_pow(base, k);
  }

  NodePtr parse_number() {
    size_t start = pos_;
    while (std::isdigit(static_cast<unsigned char>(peek()))) advance();
    if (peek() == '.') {
      advance();
      while (std::isdigit(static_cast<unsigned char>(peek()))) advance();
    }
    if (peek() == 'e' || peek() == 'E') {
      advance();
      if (peek() == '+' || peek() == '-') advance();
      if (!std::isdigit(static_cast<unsigned char>(peek()))) fail("malformed exponent in number");
      while (std::isdigit(static_cast<unsigned char>(peek()))) advance();
    }
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s_.data() + start, s_.data() + pos_, v);
    if (ec != std::errc() || ptr != s_.data() + pos_) fail("malformed number");
    NodePtr n = make_const(v);
    last_literal_ = n.get();
    return n;
  }

  NodePtr parse_primary() {
    skip_ws();
    if (at_end()) fail("unexpected end of expression");
    char c = peek();
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') return parse_number();
    if (c == '(') {
      advance();
      NodePtr e = parse_sum();
      expect(')');
      last_literal_ = nullptr;
      return e;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      int line = line_, col = col_;
      size_t start = pos_;
      while (std::isalnum(static_cast<unsigned char>(peek())) || peek() == '_') advance();
      std::string_view id = s_.substr(start, pos_ - start);
      if (id.size() >= 2 && id[0] == 'x' && std::isdigit(static_cast<unsigned char>(id[1]))) {
        int k = 0;
        auto [ptr, ec] = std::from_chars(id.data() + 1, id.data() + id.size(), k);
        if (ec != std::errc() || ptr != id.data() + id.size()) throw ParseError("bad variable name '" + std::string(id) + "'", line, col);
        if (k < 1 || k > dim_) throw ParseError("variable '" + std::string(id) + "' out of range (dimension " + std::to_string(dim_) + ")", line, col);
        return make_var(k - 1);
      }
      static const std::pair<std::string_view, Op> unary[] = {
          {"abs", Op::Abs}, {"sign", Op::Sign}, {"sin", Op::Sin}, {"cos", Op::Cos}, {"exp", Op::Exp}};
      for (auto& [name, op] : unary) {
        if (id == name) {
          expect('(');
          NodePtr a = parse_sum();
          expect(')');
          return make_node(op, a);
        }
      }
      if (id == "min" || id == "max") {
        expect('(');
        NodePtr a = parse_sum();
        expect(',');
        NodePtr b = parse_sum();
        expect(')');
        return make_node(id == "min" ? Op::Min : Op::Max, a, b);
      }
      throw ParseError("unknown identifier '" + std::string(id) + "'", line, col);
    }
    fail(std::string("unexpected character '") + c + "'");
  }
};

// ---------------------------------------------------------------- printer

int precedence(Op op) {
  switch (op) {
    case Op::Add:
    case Op::Sub: return 1;
    case Op::Mul:
    case Op::Div: return 2;
    case Op::Neg: return 3;
    case Op::Pow: return 4;
    default: return 5;
  }
}

std::string format_double(double v) {
  char buf[64];
  for (int prec = 1; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

void print(const Node& n, std::string& out) {
  auto child = [&](const Node& c, int min_prec) {
    int p = precedence(c.op);
    if (c.op == Op::Const && c.value < 0) p = 3;
    if (p < min_prec) {
      out += '(';
      print(c, out);
      out += ')';
    } else {
      print(c, out);
    }
  };
  switch (n.op) {
    case Op::Const:
      if (n.value < 0) {
        out += '-';
        out += format_double(-n.value);
      } else {
        out += format_double(n.value);
      }
      return;
    case Op::Var: out += "x" + std::to_string(n.index + 1); return;
    case Op::Add:
      child(*n.a, 1);
      out += " + ";
      child(*n.b, 2);
      return;
    case Op::Sub:
      child(*n.a, 1);
      out += " - ";
      child(*n.b, 2);
      return;
    case Op::Mul:
      child(*n.a, 2);
      out += "*";
      child(*n.b, 3);
      return;
    case Op::Div:
      child(*n.a, 2);
      out += "/";
      child(*n.b, 3);
      return;
    case Op::Neg:
      out += "-";
      child(*n.a, n.a->op == Op::Const ? 6 : 4);
      return;
    case Op::Pow:
      child(*n.a, 5);
      out += "^" + std::to_string(n.index);
      return;
    case Op::Min:
    case Op::Max:
      out += n.op == Op::Min ? "min(" : "max(";
      print(*n.a, out);
      out += ", ";
      print(*n.b, out);
      out += ")";
      return;
    default: {
      const char* name = n.op == Op::Abs ? "abs" : n.op == Op::Sign ? "sign" : n.op == Op::Sin ? "sin" : n.op == Op::Cos ? "cos" : "exp";
      out += name;
      out += "(";
      print(*n.a, out);
      out += ")";
    }
  }
}

bool nodes_equal(const Node& a, const Node& b) {
  if (a.op != b.op) return false;
  switch (a.op) {
    case Op::Const: return a.value == b.value;
    case Op::Var: return a.index == b.index;
    case Op::Pow: return a.index == b.index && nodes_equal(*a.a, *b.a);
    default: break;
  }
  if (a.a && !nodes_equal(*a.a, *b.a)) return false;
  if (a.b && !nodes_equal(*a.b, *b.b)) return false;
  return true;
}

int max_var(const Node& n) {
  int m = n.op == Op::Var ? n.index + 1 : 0;
  if (n.a) m = std::max(m, max_var(*n.a));
  if (n.b) m = std::max(m, max_var(*n.b));
  return m;
}

}  // namespace

// ---------------------------------------------------------------- Expression

Expression::Expression() : root_(make_const(0.0)) {}
Expression Expression::constant(double v) { return Expression(make_const(v)); }
Expression Expression::variable(int index) { return Expression(make_var(index)); }
int Expression::arity() const { return max_var(*root_); }
double Expression::operator()(std::span<const double> x) const { return eval_node(*root_, x); }

double evaluate(const Expression& e, std::span<const double> x) { return e(x); }

Expression operator+(const Expression& a, const Expression& b) {
  if (a.is_constant() && b.is_constant()) return Expression::constant(a.root().value + b.root().value);
  if (a.is_zero()) return b;
  if (b.is_zero()) return a;
  return Expression(make_node(Op::Add, a.ptr(), b.ptr()));
}

Expression operator-(const Expression& a, const Expression& b) {
  if (a.is_constant() && b.is_constant()) return Expression::constant(a.root().value - b.root().value);
  if (b.is_zero()) return a;
  if (a.is_zero()) return -b;
  return Expression(make_node(Op::Sub, a.ptr(), b.ptr()));
}

Expression operator*(const Expression& a, const Expression& b) {
  if (a.is_constant() && b.is_constant()) return Expression::constant(a.root().value * b.root().value);
  if (a.is_zero() || b.is_zero()) return Expression::constant(0.0);
  if (is_const(a, 1.0)) return b;
  if (is_const(b, 1.0)) return a;
  if (is_const(a, -1.0)) return -b;
  if (is_const(b, -1.0)) return -a;
  return Expression(make_node(Op::Mul, a.ptr(), b.ptr()));
}

Expression operator/(const Expression& a, const Expression& b) {
  if (a.is_constant() && b.is_constant() && b.root().value != 0.0) return Expression::constant(a.root().value / b.root().value);
  if (a.is_zero()) return Expression::constant(0.0);
  if (is_const(b, 1.0)) return a;
  return Expression(make_node(Op::Div, a.ptr(), b.ptr()));
}

Expression operator-(const Expression& a) {
  if (a.is_constant()) return Expression::constant(-a.root().value);
  if (a.root().op == Op::Neg) return Expression(a.root().a);
  return Expression(make_node(Op::Neg, a.ptr()));
}

Expression pow(const Expression& a, int n) {
  if (n == 0) return Expression::constant(1.0);
  if (n == 1) return a;
  if (a.is_constant()) return Expression::constant(ipow(a.root().value, n));
  return Expression(make_pow(a.ptr(), n));
}

namespace {
Expression unary(Op op, const Expression& a, double (*f)(double)) {
  if (a.is_constant()) return Expression::constant(f(a.root().value));
  return Expression(make_node(op, a.ptr()));
}
}  // namespace

Expression abs(const Expression& a) { return unary(Op::Abs, a, [](double v) { return std::fabs(v); }); }
Expression sign(const Expression& a) { return unary(Op::Sign, a, [](double v) { return sgn(v); }); }
Expression sin(const Expression& a) { return unary(Op::Sin, a, [](double v) { return std::sin(v); }); }
Expression cos(const Expression& a) { return unary(Op::Cos, a, [](double v) { return std::cos(v); }); }
Expression exp(const Expression& a) { return unary(Op::Exp, a, [](double v) { return std::exp(v); }); }

Expression min(const Expression& a, const Expression& b) {
  if (a.is_constant() && b.is_constant()) return Expression::constant(std::min(a.root().value, b.root().value));
  return Expression(make_node(Op::Min, a.ptr(), b.ptr()));
}

Expression max(const Expression& a, const Expression& b) {
  if (a.is_constant() && b.is_constant()) return Expression::constant(std::max(a.root().value, b.root().value));
  return Expression(make_node(Op::Max, a.ptr(), b.ptr()));
}

Expression parse_expression(std::string_view text, int dim) { return Parser(text, dim).parse(); }

std::string to_string(const Expression& e) {
  std::string out;
  print(e.root(), out);
  return out;
}

bool structurally_equal(const Expression& a, const Expression& b) { return nodes_equal(a.root(), b.root()); }

Expression differentiate(const Expression& e, int var) {
  const Node& n = e.root();
  auto A = [&] { return Expression(n.a); };
  auto B = [&] { return Expression(n.b); };
  auto dA = [&] { return differentiate(A(), var); };
  auto dB = [&] { return differentiate(B(), var); };
  switch (n.op) {
    case Op::Const: return Expression::constant(0.0);
    case Op::Var: return Expression::constant(n.index == var ? 1.0 : 0.0);
    case Op::Add: return dA() + dB();
    case Op::Sub: return dA() - dB();
    case Op::Mul: return dA() * B() + A() * dB();
    case Op::Div: return (dA() * B() - A() * dB()) / pow(B(), 2);
    case Op::Neg: return -dA();
    case Op::Pow: return Expression::constant(n.index) * pow(A(), n.index - 1) * dA();
    case Op::Abs: return sign(A()) * dA();
    case Op::Sign: return Expression::constant(0.0);
    case Op::Sin: return cos(A()) * dA();
    case Op::Cos: return -(sin(A()) * dA());
    case Op::Exp: return exp(A()) * dA();
    case Op::Min:
    case Op::Max: {
      Expression da = dA(), db = dB();
      if (da.is_zero() && db.is_zero()) return Expression::constant(0.0);
      Expression avg = Expression::constant(0.5) * (da + db);
      Expression jump = Expression::constant(0.5) * sign(A() - B()) * (da - db);
      return n.op == Op::Min ? avg - jump : avg + jump;
    }
  }
  return Expression::constant(0.0);
}

// ---------------------------------------------------------------- compiled

CompiledExpr::CompiledExpr(const Expression& e) {
  zero_ = e.is_zero();
  emit(e.root(), 1);
}

void CompiledExpr::emit(const Node& n, int depth) {
  max_depth_ = std::max(max_depth_, depth);
  switch (n.op) {
    case Op::Const: code_.push_back({Op::Const, 0, n.value}); return;
    case Op::Var: code_.push_back({Op::Var, n.index, 0.0}); return;
    default: break;
  }
  emit(*n.a, depth);
  if (n.b) emit(*n.b, depth + 1);
  code_.push_back({n.op, n.index, 0.0});
}

double CompiledExpr::operator()(const double* x) const {
  double stack[64];
  std::vector<double> heap;
  double* st = stack;
  if (max_depth_ > 64) {
    heap.resize(max_depth_);
    st = heap.data();
  }
  int top = -1;
  for (const Instr& in : code_) {
    switch (in.op) {
      case Op::Const: st[++top] = in.value; break;
      case Op::Var: st[++top] = x[in.arg]; break;
      case Op::Add: st[top - 1] += st[top]; --top; break;
      case Op::Sub: st[top - 1] -= st[top]; --top; break;
      case Op::Mul: st[top - 1] *= st[top]; --top; break;
      case Op::Div: st[top - 1] /= st[top]; --top; break;
      case Op::Min: st[top - 1] = std::min(st[top - 1], st[top]); --top; break;
      case Op::Max: st[top - 1] = std::max(st[top - 1], st[top]); --top; break;
      case Op::Neg: st[top] = -st[top]; break;
      case Op::Pow: st[top] = ipow(st[top], in.arg); break;
      case Op::Abs: st[top] = std::fabs(st[top]); break;
      case Op::Sign: st[top] = sgn(st[top]); break;
      case Op::Sin: st[top] = std::sin(st[top]); break;
      case Op::Cos: st[top] = std::cos(st[top]); break;
      case Op::Exp: st[top] = std::exp(st[top]); break;
    }
  }
  return top == 0 ? st[0] : 0.0;
}

}  // namespace hvf
