#include "hvf/graph.hpp"

#include "hvf/ode.hpp"

#include <cmath>
#include <queue>

namespace hvf {

namespace {
constexpr int kBias = 32768;
}

ControlGraph::ControlGraph(const VectorFieldSystem& sys, GraphConfig cfg) : sys_(sys), cfg_(std::move(cfg)) {
  p_ = static_cast<int>(cfg_.origin.size());
  if (p_ > 8) throw Error("graph search supports dimension <= 8");
  if (static_cast<int>(cfg_.cell.size()) != p_) throw Error("one cell size per coordinate is required");
  Eigen::FullPivLU<Mat> lu(cfg_.hash_basis);
  if (!lu.isInvertible()) throw RankError("singular hash basis at " + format_point(cfg_.origin));
  inv_ = lu.inverse();
  for (const auto& g : cfg_.generators) {
    if (g.length() == 1) {
      gen_kind_.push_back(0);
      gen_pos_.push_back(g.idx[0]);
    } else if (int pos = sys_.commutator_position(g); pos >= 0) {
      gen_kind_.push_back(1);
      gen_pos_.push_back(pos);
    } else {
      gen_kind_.push_back(2);
      gen_pos_.push_back(0);
    }
  }
}

void ControlGraph::velocity(const Point& c, const Point& z, Point& out, Point& tmp) const {
  out.setZero(p_);
  for (size_t k = 0; k < gen_kind_.size(); ++k) {
    if (c[k] == 0.0) continue;
    switch (gen_kind_[k]) {
      case 0:
        sys_.field_fast(gen_pos_[k], z, tmp);
        break;
      case 1:
        sys_.commutator_fast(gen_pos_[k], z, tmp);
        break;
      default:
        tmp = commutator_value(sys_, cfg_.generators[k], z);
    }
    out += c[k] * tmp;
  }
}

bool ControlGraph::key_of_coords(const Point& h, CellKey& key) const {
  key = CellKey{};
  for (int j = 0; j < p_; ++j) {
    double q = std::floor(h[j] / cfg_.cell[j]);
    // Margin keeps neighbor offsets from carrying across packed fields.
    if (!(q > -kBias + 64 && q < kBias - 64)) return false;
    uint64_t v = static_cast<uint64_t>(static_cast<int64_t>(q) + kBias);
    if (j < 4) {
      key.lo |= v << (16 * j);
    } else {
      key.hi |= v << (16 * (j - 4));
    }
  }
  return true;
}

bool ControlGraph::key_of(const Point& z, CellKey& key) const { return key_of_coords(hash_coords(z), key); }

std::vector<int> ControlGraph::unpack(const CellKey& key) const {
  std::vector<int> c(p_);
  for (int j = 0; j < p_; ++j) {
    uint64_t w = j < 4 ? key.lo >> (16 * j) : key.hi >> (16 * (j - 4));
    c[j] = static_cast<int>(w & 0xFFFF) - kBias;
  }
  return c;
}

CellKey ControlGraph::pack(const std::vector<int>& c) const {
  CellKey key;
  for (int j = 0; j < p_; ++j) {
    uint64_t v = static_cast<uint64_t>(c[j] + kBias) & 0xFFFF;
    if (j < 4) {
      key.lo |= v << (16 * j);
    } else {
      key.hi |= v << (16 * (j - 4));
    }
  }
  return key;
}

Point ControlGraph::cell_center(const CellKey& key) const {
  std::vector<int> c = unpack(key);
  Point h(p_);
  for (int j = 0; j < p_; ++j) h[j] = (c[j] + 0.5) * cfg_.cell[j];
  return cfg_.origin + cfg_.hash_basis * h;
}

std::vector<CellKey> ControlGraph::neighbor_offsets(int radius) const {
  std::vector<CellKey> out;
  std::vector<int> off(p_, -radius);
  for (;;) {
    CellKey d;
    for (int j = 0; j < p_; ++j) {
      uint64_t v = static_cast<uint64_t>(static_cast<int64_t>(off[j]));
      if (j < 4) {
        d.lo += v << (16 * j);
      } else {
        d.hi += v << (16 * (j - 4));
      }
    }
    out.push_back(d);
    int j = 0;
    while (j < p_ && off[j] == radius) off[j++] = -radius;
    if (j == p_) break;
    ++off[j];
  }
  return out;
}

int ControlGraph::settled_index(const CellKey& key) const {
  int i = index_.find(key);
  if (i < 0 || !cells_[i].settled) return -1;
  return i;
}

void ControlGraph::run(double limit, const std::function<bool(const Point&, double)>& visit) {
  using Entry = std::pair<double, int>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> queue;
  auto insert = [&](const Point& z, double cost) {
    CellKey key;
    Point h = hash_coords(z);
    if (!key_of_coords(h, key)) return;
    const double prog = cfg_.progress ? cfg_.progress(z) : 0.0;
    int id = index_.find(key);
    if (id < 0) {
      if (static_cast<long>(cells_.size()) >= cfg_.max_cells)
        throw BudgetError("graph search exceeded " + std::to_string(cfg_.max_cells) + " cells");
      id = index_.insert(key, static_cast<int>(cells_.size()));
      cells_.push_back({key, cost, false, prog});
      points_.insert(points_.end(), z.data(), z.data() + p_);
      hpoints_.insert(hpoints_.end(), h.data(), h.data() + p_);
    } else {
      Cell& c = cells_[id];
      if (c.settled || cost > c.cost || (cost == c.cost && prog <= c.progress)) return;
      const bool same = cost == c.cost;
      c.cost = cost;
      c.progress = prog;
      std::copy(z.data(), z.data() + p_, points_.begin() + static_cast<size_t>(id) * p_);
      std::copy(h.data(), h.data() + p_, hpoints_.begin() + static_cast<size_t>(id) * p_);
      if (same) return;
    }
    queue.push({cost, id});
  };
  insert(cfg_.origin, 0.0);

  OdeOptions ode;
  ode.abs_tol = cfg_.tol;
  ode.rel_tol = cfg_.tol;
  Point tmp(p_);
  const Box& dom = sys_.domain();
  while (!queue.empty()) {
    auto [cost, id] = queue.top();
    queue.pop();
    Cell& c = cells_[id];
    if (c.settled || cost != c.cost) continue;
    if (cost > limit) break;
    c.settled = true;
    ++settled_;
    Point z = point(id);
    if (!visit(z, cost)) break;
    const double next = cost + cfg_.step_time;
    for (const auto& u : cfg_.controls) {
      auto f = [&](const Point& y, Point& out) { velocity(u, y, out, tmp); };
      Point w;
      try {
        w = integrate_dp45(f, z, cfg_.step_time, ode).end;
      } catch (const IntegrationError&) {
        continue;
      }
      if (!dom.contains(w)) continue;
      insert(w, next);
    }
  }
}

}  // namespace hvf
