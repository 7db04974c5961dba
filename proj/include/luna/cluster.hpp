#pragma once

// Order-independent single-linkage clustering: the transitive closure of a
// symmetric pairwise "belongs together" predicate. Used for reader-annotation
// merging and candidate merging.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <unordered_map>
#include <vector>

#include "luna/image.hpp"

namespace luna {

class DisjointSets {
 public:
  explicit DisjointSets(std::size_t n) : parent_(n), rank_(n, 0) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (rank_[a] < rank_[b]) std::swap(a, b);
    parent_[b] = a;
    if (rank_[a] == rank_[b]) ++rank_[a];
  }

  /// Groups of member indices. Groups are ordered by their smallest member,
  /// members ascending, so the result is independent of union order.
  std::vector<std::vector<std::size_t>> groups() {
    std::vector<std::vector<std::size_t>> out;
    std::vector<std::size_t> slot(parent_.size(), SIZE_MAX);
    for (std::size_t i = 0; i < parent_.size(); ++i) {
      const std::size_t root = find(i);
      if (slot[root] == SIZE_MAX) {
        slot[root] = out.size();
        out.emplace_back();
      }
      out[slot[root]].push_back(i);
    }
    return out;
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> rank_;
};

/// Clusters points under `linked(a, b)`, a symmetric predicate that can only
/// hold when distance(points[a], points[b]) < reach. A uniform hash grid with
/// cell size `reach` limits the pairs tested.
template <class Linked>
std::vector<std::vector<std::size_t>> cluster_points(std::span<const WorldPoint> points, double reach,
                                                     Linked&& linked) {
  DisjointSets sets(points.size());
  if (points.size() < 2 || !(reach > 0.0)) return sets.groups();

  auto cell_of = [reach](double v) { return static_cast<std::int64_t>(std::floor(v / reach)); };
  auto key = [](std::int64_t x, std::int64_t y, std::int64_t z) {
    const auto h = [](std::int64_t v) { return static_cast<std::uint64_t>(v) * 0x9e3779b97f4a7c15ULL; };
    return h(x) ^ (h(y) >> 1) ^ (h(z) << 1) ^ static_cast<std::uint64_t>(z);
  };
  struct Cell {
    std::int64_t x, y, z;
    std::vector<std::size_t> members;
  };
  std::unordered_map<std::uint64_t, std::vector<Cell>> grid;
  std::vector<std::array<std::int64_t, 3>> cell_index(points.size());
  for (std::size_t n = 0; n < points.size(); ++n) {
    const std::int64_t cx = cell_of(points[n].x), cy = cell_of(points[n].y), cz = cell_of(points[n].z);
    cell_index[n] = {cx, cy, cz};
    auto& bucket = grid[key(cx, cy, cz)];
    Cell* cell = nullptr;
    for (auto& c : bucket)
      if (c.x == cx && c.y == cy && c.z == cz) cell = &c;
    if (!cell) {
      bucket.push_back({cx, cy, cz, {}});
      cell = &bucket.back();
    }
    cell->members.push_back(n);
  }

  for (std::size_t a = 0; a < points.size(); ++a) {
    const auto [cx, cy, cz] = cell_index[a];
    for (std::int64_t dz = -1; dz <= 1; ++dz)
      for (std::int64_t dy = -1; dy <= 1; ++dy)
        for (std::int64_t dx = -1; dx <= 1; ++dx) {
          const auto it = grid.find(key(cx + dx, cy + dy, cz + dz));
          if (it == grid.end()) continue;
          for (const auto& cell : it->second) {
            if (cell.x != cx + dx || cell.y != cy + dy || cell.z != cz + dz) continue;
            for (std::size_t b : cell.members)
              if (b > a && linked(a, b)) sets.unite(a, b);
          }
        }
  }
  return sets.groups();
}

inline WorldPoint centroid(std::span<const WorldPoint> points, std::span<const std::size_t> members) {
  WorldPoint c{};
  for (std::size_t m : members) {
    c.x += points[m].x;
    c.y += points[m].y;
    c.z += points[m].z;
  }
  const double n = static_cast<double>(members.size());
  return {c.x / n, c.y / n, c.z / n};
}

}  // namespace luna
