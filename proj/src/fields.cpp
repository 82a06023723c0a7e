#include "hvf/fields.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace hvf {

std::string MultiIndex::to_string() const {
  std::string s = "(";
  for (size_t k = 0; k < idx.size(); ++k) {
    if (k) s += ",";
    s += std::to_string(idx[k]);
  }
  return s + ")";
}

MultiIndex parse_multi_index(const std::string& text) {
  MultiIndex I;
  std::string cur;
  for (char c : text) {
    if (std::isdigit(static_cast<unsigned char>(c))) {
      cur += c;
    } else if (c == ',' || c == ' ' || c == '(' || c == ')') {
      if (!cur.empty()) I.idx.push_back(std::stoi(cur));
      cur.clear();
    } else {
      throw Error("malformed multiindex '" + text + "'");
    }
  }
  if (!cur.empty()) I.idx.push_back(std::stoi(cur));
  if (I.idx.empty()) throw Error("empty multiindex '" + text + "'");
  return I;
}

std::string BasisFamily::to_string() const {
  std::string s = "{";
  for (size_t k = 0; k < members.size(); ++k) {
    if (k) s += ",";
    s += members[k].to_string();
  }
  return s + "}";
}

std::vector<Expression> bracket_expressions(const std::vector<Expression>& X, const std::vector<Expression>& Y) {
  const int p = static_cast<int>(X.size());
  std::vector<Expression> out(p);
  for (int m = 0; m < p; ++m) {
    Expression s = Expression::constant(0.0);
    for (int l = 0; l < p; ++l) {
      s = s + X[l] * differentiate(Y[m], l);
      s = s - Y[l] * differentiate(X[m], l);
    }
    out[m] = s;
  }
  return out;
}

VectorFieldSystem::VectorFieldSystem(std::string name, int dim, int step, std::vector<std::optional<FieldDef>> fields,
                                     Box domain, std::optional<Box> working)
    : name_(std::move(name)), dim_(dim), step_(step), fields_(std::move(fields)), domain_(std::move(domain)) {
  if (dim < 1 || dim > kMaxDim) throw Error("dimension must be in 1.." + std::to_string(kMaxDim));
  if (step < 1) throw Error("step must be at least 1");
  if (fields_.size() < 2) throw Error("at least one field is required");
  if (domain_.dim() != dim) throw Error("domain dimension mismatch");
  for (int i = 0; i < dim; ++i) {
    if (!(domain_.lo[i] < domain_.hi[i])) throw Error("empty domain box");
  }
  if (working) {
    working_ = *working;
    if (working_.dim() != dim) throw Error("working box dimension mismatch");
    for (int i = 0; i < dim; ++i) {
      if (!(working_.lo[i] > domain_.lo[i] && working_.hi[i] < domain_.hi[i]))
        throw Error("working box must lie strictly inside the domain");
    }
  } else {
    Point c = domain_.center();
    Point half = 0.5 * (domain_.hi - domain_.lo);
    working_ = {c - 0.5 * half, c + 0.5 * half};
  }
  compiled_.resize(fields_.size());
  for (size_t i = 0; i < fields_.size(); ++i) {
    if (!fields_[i]) {
      if (i > 0) throw Error("field " + std::to_string(i) + " is missing");
      continue;
    }
    if (static_cast<int>(fields_[i]->coeffs.size()) != dim) throw Error("field " + std::to_string(i) + " has wrong component count");
    for (const auto& e : fields_[i]->coeffs) {
      if (e.arity() > dim) throw Error("field " + std::to_string(i) + " uses a variable beyond the dimension");
      compiled_[i].emplace_back(e);
    }
    indices_.push_back(static_cast<int>(i));
  }

  // Canonical commutator list, ordered by (weight, lexicographic).
  std::vector<MultiIndex> all;
  std::function<void(MultiIndex&, int)> grow = [&](MultiIndex& cur, int w) {
    if (!cur.idx.empty()) all.push_back(cur);
    for (int i : indices_) {
      int nw = w + weight(i);
      if (nw > step_) continue;
      cur.idx.push_back(i);
      grow(cur, nw);
      cur.idx.pop_back();
    }
  };
  MultiIndex start;
  grow(start, 0);
  for (auto& I : all) {
    int L = I.length();
    if (L >= 2 && !(I.idx[L - 2] < I.idx[L - 1])) continue;
    commutators_.push_back(I);
  }
  std::stable_sort(commutators_.begin(), commutators_.end(), [](const MultiIndex& a, const MultiIndex& b) {
    if (a.weight() != b.weight()) return a.weight() < b.weight();
    return a < b;
  });
  std::map<MultiIndex, std::vector<Expression>> cache;
  std::function<const std::vector<Expression>&(const MultiIndex&)> expr_of = [&](const MultiIndex& I) -> const std::vector<Expression>& {
    if (auto it = cache.find(I); it != cache.end()) return it->second;
    std::vector<Expression> v;
    if (I.length() == 1) {
      v = fields_[I.idx[0]]->coeffs;
    } else {
      MultiIndex tail(std::vector<int>(I.idx.begin() + 1, I.idx.end()));
      v = bracket_expressions(fields_[I.idx[0]]->coeffs, expr_of(tail));
    }
    return cache.emplace(I, std::move(v)).first->second;
  };
  for (const auto& I : commutators_) {
    commutator_exprs_.push_back(expr_of(I));
    std::vector<CompiledExpr> c;
    for (const auto& e : commutator_exprs_.back()) c.emplace_back(e);
    commutator_compiled_.push_back(std::move(c));
  }
}

const FieldDef& VectorFieldSystem::field(int i) const {
  if (!has_field(i)) throw Error("no field with index " + std::to_string(i));
  return *fields_[i];
}

Point VectorFieldSystem::evaluate_field(int i, const Point& x) const {
  if (x.size() != dim_) throw DomainError("point has wrong dimension");
  if (!domain_.contains(x)) throw DomainError("point " + format_point(x) + " outside the domain");
  Point out;
  field(i);
  field_fast(i, x, out);
  return out;
}

void VectorFieldSystem::field_fast(int i, const Point& x, Point& out) const {
  out.resize(dim_);
  const auto& c = compiled_[i];
  for (int m = 0; m < dim_; ++m) out[m] = c[m](x.data());
}

int VectorFieldSystem::commutator_position(const MultiIndex& I) const {
  for (size_t k = 0; k < commutators_.size(); ++k) {
    if (commutators_[k] == I) return static_cast<int>(k);
  }
  return -1;
}

void VectorFieldSystem::commutator_fast(int k, const Point& x, Point& out) const {
  out.resize(dim_);
  const auto& c = commutator_compiled_[k];
  for (int m = 0; m < dim_; ++m) out[m] = c[m](x.data());
}

Smoothness VectorFieldSystem::smoothness_of(const MultiIndex& I) const {
  Smoothness s = Smoothness::infinite();
  for (int i : I.idx) {
    const Smoothness& f = field(i).smooth;
    if (f.max_jet_order() < s.max_jet_order()) s = f;
  }
  return s;
}

const TestFunctionDef& VectorFieldSystem::function(const std::string& name) const {
  for (const auto& f : functions_) {
    if (f.name == name) return f;
  }
  throw Error("no function named '" + name + "' in system " + name_);
}

// ---------------------------------------------------------------- jets

namespace {

using JetField = std::vector<Jet>;

JetField field_jet(const VectorFieldSystem& sys, int i, const Point& x, int order) {
  JetField v;
  for (const auto& e : sys.field(i).coeffs) v.push_back(jet_at(e, x, order));
  return v;
}

// [X, Y] for order-q jets, giving order q-1.
JetField bracket_jets(const JetField& X, const JetField& Y) {
  const int p = static_cast<int>(X.size());
  const int q = X[0].order();
  JetField out;
  std::vector<Jet> Xt, Yt;
  for (int l = 0; l < p; ++l) {
    Xt.push_back(X[l].truncate(q - 1));
    Yt.push_back(Y[l].truncate(q - 1));
  }
  for (int m = 0; m < p; ++m) {
    Jet s = Jet::constant(Xt[0].layout_ptr(), X[0].base(), 0.0);
    for (int l = 0; l < p; ++l) {
      s += Xt[l] * Y[m].derivative(l);
      s -= Yt[l] * X[m].derivative(l);
    }
    out.push_back(std::move(s));
  }
  return out;
}

void check_index(const VectorFieldSystem& sys, const MultiIndex& I) {
  if (I.idx.empty()) throw Error("empty multiindex");
  for (int i : I.idx) {
    if (!sys.has_field(i)) throw Error("multiindex " + I.to_string() + " refers to a missing field");
  }
  if (I.weight() > sys.step()) {
    throw Error("multiindex " + I.to_string() + " has weight " + std::to_string(I.weight()) + " above the step " +
                std::to_string(sys.step()));
  }
}

std::vector<Jet> commutator_jet(const VectorFieldSystem& sys, const MultiIndex& I, const Point& x, int order) {
  check_index(sys, I);
  const int L = I.length();
  const int base_order = order + L - 1;
  for (int i : I.idx) {
    const Smoothness& s = sys.field(i).smooth;
    if (base_order > s.max_jet_order()) {
      throw SmoothnessError("commutator " + I.to_string() + " needs order-" + std::to_string(base_order) + " jets of field " +
                            std::to_string(i) + " declared " + s.to_string());
    }
  }
  JetField V = field_jet(sys, I.idx[L - 1], x, base_order);
  for (int k = L - 2; k >= 0; --k) {
    int q = V[0].order();
    V = bracket_jets(field_jet(sys, I.idx[k], x, q), V);
  }
  return V;
}

}  // namespace

CommutatorEvaluator::CommutatorEvaluator(SystemPtr sys, MultiIndex I) : sys_(std::move(sys)), I_(std::move(I)) {
  check_index(*sys_, I_);
}

Point CommutatorEvaluator::operator()(const Point& x) const { return commutator_value(*sys_, I_, x); }

std::vector<Jet> CommutatorEvaluator::jet(const Point& x, int order) const { return commutator_jet(*sys_, I_, x, order); }

CommutatorEvaluator commutator(SystemPtr sys, const MultiIndex& I) { return CommutatorEvaluator(std::move(sys), I); }

Point commutator_value(const VectorFieldSystem& sys, const MultiIndex& I, const Point& x) {
  if (x.size() != sys.dim()) throw DomainError("point has wrong dimension");
  auto V = commutator_jet(sys, I, x, 0);
  Point out(sys.dim());
  for (int m = 0; m < sys.dim(); ++m) out[m] = V[m].value();
  return out;
}

// ---------------------------------------------------------------- bases

Mat basis_matrix(const VectorFieldSystem& sys, const BasisFamily& eta, const Point& x) {
  Mat M(sys.dim(), static_cast<int>(eta.members.size()));
  Point v;
  for (size_t j = 0; j < eta.members.size(); ++j) {
    int k = sys.commutator_position(eta.members[j]);
    if (k >= 0) {
      sys.commutator_fast(k, x, v);
    } else {
      v = commutator_value(sys, eta.members[j], x);
    }
    M.col(static_cast<int>(j)) = v;
  }
  return M;
}

double lambda(const VectorFieldSystem& sys, const BasisFamily& eta, const Point& x) {
  if (static_cast<int>(eta.members.size()) != sys.dim()) throw Error("basis family must have p members");
  return basis_matrix(sys, eta, x).determinant();
}

namespace {

void for_each_subset(int M, int p, const std::function<void(const std::vector<int>&)>& f) {
  if (p > M) return;
  std::vector<int> c(p);
  std::iota(c.begin(), c.end(), 0);
  for (;;) {
    f(c);
    int i = p - 1;
    while (i >= 0 && c[i] == M - p + i) --i;
    if (i < 0) return;
    ++c[i];
    for (int j = i + 1; j < p; ++j) c[j] = c[j - 1] + 1;
  }
}

}  // namespace

std::vector<FamilyValue> enumerate_families(const VectorFieldSystem& sys, const Point& x) {
  const auto& list = sys.commutators();
  const int M = static_cast<int>(list.size());
  const int p = sys.dim();
  Mat all(p, M);
  Point v;
  for (int k = 0; k < M; ++k) {
    sys.commutator_fast(k, x, v);
    all.col(k) = v;
  }
  std::vector<FamilyValue> out;
  Mat sub(p, p);
  for_each_subset(M, p, [&](const std::vector<int>& c) {
    BasisFamily eta;
    for (int j = 0; j < p; ++j) {
      sub.col(j) = all.col(c[j]);
      eta.members.push_back(list[c[j]]);
    }
    out.push_back({std::move(eta), std::fabs(sub.determinant())});
  });
  std::stable_sort(out.begin(), out.end(), [](const FamilyValue& a, const FamilyValue& b) {
    if (a.eta.weight() != b.eta.weight()) return a.eta.weight() < b.eta.weight();
    return a.eta.members < b.eta.members;
  });
  return out;
}

RankReport hormander_rank(const VectorFieldSystem& sys, const Point& x) {
  const auto& list = sys.commutators();
  const int M = static_cast<int>(list.size());
  Mat all(sys.dim(), M);
  Point v;
  for (int k = 0; k < M; ++k) {
    sys.commutator_fast(k, x, v);
    all.col(k) = v;
  }
  Eigen::MatrixXd dense = all;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(dense);
  const auto& s = svd.singularValues();
  RankReport r;
  double smax = s.size() ? s[0] : 0.0;
  for (int i = 0; i < s.size(); ++i) {
    if (s[i] > 1e-10 * std::max(1.0, smax)) ++r.rank;
  }
  for (const auto& fv : enumerate_families(sys, x)) {
    if (fv.det > r.det * (1.0 + 1e-12) && fv.det > 0.0) {
      r.det = fv.det;
      r.best = fv.eta;
    }
  }
  return r;
}

BasisFamily optimal_basis(const VectorFieldSystem& sys, const Point& x, double rho) {
  if (!(rho > 0.0)) throw Error("optimal_basis needs a positive radius");
  auto fams = enumerate_families(sys, x);
  double best = 0.0;
  for (const auto& fv : fams) best = std::max(best, fv.det * std::pow(rho, fv.eta.weight()));
  if (!(best > 0.0)) throw RankError("rank deficient at " + format_point(x));
  for (const auto& fv : fams) {
    if (fv.det * std::pow(rho, fv.eta.weight()) > 0.5 * best) return fv.eta;
  }
  throw RankError("no family passes the threshold at " + format_point(x));
}

// ---------------------------------------------------------------- Taylor systems

namespace {

double max_det(const VectorFieldSystem& sys, const Point& x) {
  double m = 0.0;
  for (const auto& fv : enumerate_families(sys, x)) m = std::max(m, fv.det);
  return m;
}

}  // namespace

TaylorSystem taylor_system(const VectorFieldSystem& sys, const Point& x0) {
  if (!sys.working().contains(x0)) throw DomainError("Taylor base point " + format_point(x0) + " outside the working box");
  const int r = sys.step();
  std::vector<std::optional<FieldDef>> fields(sys.nfields() + 1);
  for (int i : sys.field_indices()) {
    const auto& f = sys.field(i);
    int order = r - VectorFieldSystem::weight(i);
    FieldDef S;
    S.smooth = Smoothness::infinite();
    for (const auto& e : f.coeffs) S.coeffs.push_back(jet_to_expression(jet_at(e, x0, order, f.smooth)));
    fields[i] = std::move(S);
  }
  TaylorSystem ts;
  ts.base = x0;
  ts.system = std::make_shared<VectorFieldSystem>(sys.name() + "_taylor", sys.dim(), r, std::move(fields), sys.domain(), sys.working());

  double d0 = max_det(sys, x0);
  if (!(d0 > 0.0)) throw RankError("rank deficient at " + format_point(x0));
  const double cap = sys.working().distance_to_boundary(x0);
  const int p = sys.dim();
  std::vector<Point> dirs;
  for (int m = 0; m < p; ++m) {
    for (int s : {-1, 1}) {
      Point d = Point::Zero(p);
      d[m] = s;
      dirs.push_back(d);
    }
  }
  if (p <= 6) {
    for (int mask = 0; mask < (1 << p); ++mask) {
      Point d(p);
      for (int m = 0; m < p; ++m) d[m] = (mask >> m & 1) ? 1.0 : -1.0;
      dirs.push_back(d / std::sqrt(double(p)));
    }
  }
  ts.validity_radius = 0.0;
  for (int k = 0; k <= 40; ++k) {
    double delta = cap * std::pow(0.5, k);
    bool ok = true;
    for (const auto& d : dirs) {
      if (max_det(*ts.system, x0 + delta * d) < 0.5 * d0) {
        ok = false;
        break;
      }
    }
    if (ok) {
      ts.validity_radius = delta;
      break;
    }
  }
  return ts;
}

double taylor_remainder(const VectorFieldSystem& sys, const TaylorSystem& ts, const MultiIndex& I, const Point& x) {
  double dist = (x - ts.base).norm();
  if (dist > ts.validity_radius * (1.0 + 1e-12)) {
    throw DomainError("point " + format_point(x) + " outside the Taylor validity radius " + std::to_string(ts.validity_radius));
  }
  Point diff = commutator_value(sys, I, x) - commutator_value(*ts.system, I, x);
  double num = diff.norm();
  int e = sys.step() - I.weight();
  if (dist == 0.0) return e == 0 ? num : (num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
  return num / std::pow(dist, e);
}

std::vector<Point> grid_points(const Box& box, int per_side) {
  const int p = box.dim();
  std::vector<Point> out;
  std::vector<int> c(p, 0);
  for (;;) {
    Point x(p);
    for (int m = 0; m < p; ++m) {
      double t = per_side == 1 ? 0.5 : double(c[m]) / (per_side - 1);
      x[m] = box.lo[m] + t * (box.hi[m] - box.lo[m]);
    }
    out.push_back(x);
    int m = 0;
    while (m < p && ++c[m] == per_side) c[m++] = 0;
    if (m == p) break;
  }
  return out;
}

}  // namespace hvf
