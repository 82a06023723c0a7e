#pragma once

#include "hvf/fields.hpp"

#include <cstdint>
#include <functional>
#include <vector>

namespace hvf {

// Integer cell coordinates packed 16 bits each; up to 8 hash coordinates.
struct CellKey {
  uint64_t lo = 0;
  uint64_t hi = 0;
  bool operator==(const CellKey&) const = default;
};

struct CellKeyHash {
  size_t operator()(const CellKey& k) const {
    uint64_t h = k.lo * 0x9E3779B97F4A7C15ull;
    h ^= (k.hi + 0x632BE59BD9B4E019ull) * 0xC2B2AE3D27D4EB4Full;
    h ^= h >> 31;
    h *= 0xBF58476D1CE4E5B9ull;
    return static_cast<size_t>(h ^ (h >> 29));
  }
};

// Open-addressing map from cell keys to cell indices. Linear probing, no erase.
class CellIndex {
 public:
  CellIndex() { slots_.resize(1024); }
  // Index stored for key, or -1.
  int find(const CellKey& k) const {
    size_t mask = slots_.size() - 1;
    for (size_t i = CellKeyHash{}(k) & mask;; i = (i + 1) & mask) {
      const Slot& s = slots_[i];
      if (s.value < 0) return -1;
      if (s.key == k) return s.value;
    }
  }
  // Inserts (k, value) unless k is present; returns the stored index.
  int insert(const CellKey& k, int value) {
    if (2 * (size_ + 1) > slots_.size()) grow();
    size_t mask = slots_.size() - 1;
    for (size_t i = CellKeyHash{}(k) & mask;; i = (i + 1) & mask) {
      Slot& s = slots_[i];
      if (s.value < 0) {
        s = {k, value};
        ++size_;
        return value;
      }
      if (s.key == k) return s.value;
    }
  }
  size_t size() const { return size_; }

 private:
  struct Slot {
    CellKey key;
    int value = -1;
  };
  void grow() {
    std::vector<Slot> old(slots_.size() * 2);
    old.swap(slots_);
    size_ = 0;
    for (const Slot& s : old)
      if (s.value >= 0) insert(s.key, s.value);
  }
  std::vector<Slot> slots_;
  size_t size_ = 0;
};

struct GraphConfig {
  Point origin;
  Mat hash_basis;                    // columns; hash coordinates h = hash_basis^{-1} (z - origin)
  std::vector<double> cell;          // edge length per hash coordinate
  std::vector<MultiIndex> generators;
  std::vector<Point> controls;       // coefficients over the generators, one per move
  double step_time = 0.0;            // duration (and cost) of one move
  long max_cells = 4000000;
  double tol = 1e-9;
  // Among equal-cost points of a cell the one with the larger progress is kept.
  std::function<double(const Point&)> progress;
};

// Dijkstra over piecewise-constant controls: from each settled point, every
// control is applied for step_time. One representative point is kept per hash
// cell (the cheapest seen, then the one with most progress); queue ties are
// broken by cell id.
class ControlGraph {
 public:
  struct Cell {
    CellKey key;
    double cost;
    bool settled;
    double progress;
  };

  ControlGraph(const VectorFieldSystem& sys, GraphConfig cfg);

  // Settles cells in nondecreasing cost order until the queue is empty, the
  // next cost exceeds `limit`, or visit returns false. Throws BudgetError when
  // more than max_cells cells are created.
  void run(double limit, const std::function<bool(const Point&, double)>& visit);

  int dim() const { return p_; }
  const GraphConfig& config() const { return cfg_; }
  const Mat& hash_inverse() const { return inv_; }

  Point hash_coords(const Point& z) const { return inv_ * (z - cfg_.origin); }
  bool key_of(const Point& z, CellKey& key) const;
  bool key_of_coords(const Point& h, CellKey& key) const;
  std::vector<int> unpack(const CellKey& key) const;
  CellKey pack(const std::vector<int>& c) const;
  Point cell_center(const CellKey& key) const;  // in ambient coordinates

  // Settled cell lookup; returns -1 when absent or not settled.
  int settled_index(const CellKey& key) const;
  const Cell& cell(int i) const { return cells_[i]; }
  Point point(int i) const { return Point::Map(points_.data() + static_cast<size_t>(i) * p_, p_); }
  size_t cell_count() const { return cells_.size(); }
  size_t settled_count() const { return settled_; }

  // Packed-key deltas of the (2 radius + 1)^p block around a cell.
  std::vector<CellKey> neighbor_offsets(int radius) const;

  // Calls f(index) for every settled cell of the block `offsets` around y's cell.
  template <class F>
  void for_each_neighbor(const Point& h, const std::vector<CellKey>& offsets, F&& f) const {
    CellKey k;
    if (!key_of_coords(h, k)) return;
    for (const CellKey& d : offsets) {
      int idx = settled_index(CellKey{k.lo + d.lo, k.hi + d.hi});
      if (idx >= 0) f(idx);
    }
  }
  // Hash coordinates of the representative point of cell i.
  const double* hash_point(int i) const { return hpoints_.data() + static_cast<size_t>(i) * p_; }

 private:
  void velocity(const Point& c, const Point& z, Point& out, Point& tmp) const;

  const VectorFieldSystem& sys_;
  GraphConfig cfg_;
  int p_;
  Mat inv_;
  std::vector<int> gen_kind_;  // 0 base field, 1 canonical commutator, 2 generic
  std::vector<int> gen_pos_;
  std::vector<Cell> cells_;
  std::vector<double> points_;
  std::vector<double> hpoints_;
  CellIndex index_;
  size_t settled_ = 0;
};

}  // namespace hvf
