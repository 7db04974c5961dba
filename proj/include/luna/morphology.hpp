#pragma once

// Binary morphology, 26-connected component labelling and the Euclidean
// distance transform on Image<uint8_t> masks (nonzero = foreground).

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <vector>

#include "luna/error.hpp"
#include "luna/filters.hpp"
#include "luna/image.hpp"
#include "luna/parallel.hpp"

namespace luna {

using Mask = Image<std::uint8_t>;

struct Offset3 {
  std::ptrdiff_t di, dj, dk;
};

/// Voxel offsets d with |d| <= radius (in voxels). A ball of diameter D
/// voxels is ball_element(D / 2.0).
inline std::vector<Offset3> ball_element(double radius) {
  if (!(radius >= 0.0)) throw ValidationError("structuring element radius must be non-negative");
  const auto r = static_cast<std::ptrdiff_t>(std::floor(radius));
  std::vector<Offset3> out;
  for (std::ptrdiff_t k = -r; k <= r; ++k)
    for (std::ptrdiff_t j = -r; j <= r; ++j)
      for (std::ptrdiff_t i = -r; i <= r; ++i)
        if (double(i * i + j * j + k * k) <= radius * radius + 1e-9) out.push_back({i, j, k});
  return out;
}

namespace detail {

/// Dilation (any neighbour set) or erosion (all neighbours set) with mirror
/// padding at the borders.
inline Mask morph(const Mask& in, const std::vector<Offset3>& element, bool dilate) {
  const Geometry& g = in.geometry();
  const std::size_t nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];
  Mask out(g);
  parallel_for(nz, [&](std::size_t k) {
    for (std::size_t j = 0; j < ny; ++j)
      for (std::size_t i = 0; i < nx; ++i) {
        bool result = !dilate;
        for (const auto& d : element) {
          const bool v = in[g.offset(mirror_index(std::ptrdiff_t(i) + d.di, nx),
                                     mirror_index(std::ptrdiff_t(j) + d.dj, ny),
                                     mirror_index(std::ptrdiff_t(k) + d.dk, nz))] != 0;
          if (dilate && v) {
            result = true;
            break;
          }
          if (!dilate && !v) {
            result = false;
            break;
          }
        }
        out[g.offset(i, j, k)] = result ? 1 : 0;
      }
  });
  return out;
}

}  // namespace detail

inline Mask dilate(const Mask& in, const std::vector<Offset3>& element) { return detail::morph(in, element, true); }
inline Mask erode(const Mask& in, const std::vector<Offset3>& element) { return detail::morph(in, element, false); }
inline Mask open(const Mask& in, const std::vector<Offset3>& element) { return dilate(erode(in, element), element); }
inline Mask close(const Mask& in, const std::vector<Offset3>& element) { return erode(dilate(in, element), element); }

struct Component {
  std::size_t voxels = 0;
  VoxelCoord centroid;  // mean voxel index
};

struct Labeling {
  Image<std::int32_t> labels;  // 0 = background, components numbered from 1
  std::vector<Component> components;  // components[label - 1]
};

/// 26-connected components, numbered in raster order of their first voxel.
inline Labeling label_components(const Mask& in) {
  const Geometry& g = in.geometry();
  const auto nx = std::ptrdiff_t(g.dims[0]), ny = std::ptrdiff_t(g.dims[1]), nz = std::ptrdiff_t(g.dims[2]);
  Labeling out{Image<std::int32_t>(g), {}};
  std::vector<std::size_t> stack;
  for (std::size_t seed = 0; seed < in.size(); ++seed) {
    if (!in[seed] || out.labels[seed]) continue;
    const auto label = static_cast<std::int32_t>(out.components.size() + 1);
    double si = 0, sj = 0, sk = 0;
    std::size_t count = 0;
    out.labels[seed] = label;
    stack.push_back(seed);
    while (!stack.empty()) {
      const std::size_t n = stack.back();
      stack.pop_back();
      const VoxelIndex v = g.index_of(n);
      si += double(v.i);
      sj += double(v.j);
      sk += double(v.k);
      ++count;
      for (std::ptrdiff_t dk = -1; dk <= 1; ++dk)
        for (std::ptrdiff_t dj = -1; dj <= 1; ++dj)
          for (std::ptrdiff_t di = -1; di <= 1; ++di) {
            const std::ptrdiff_t i = std::ptrdiff_t(v.i) + di, j = std::ptrdiff_t(v.j) + dj,
                                 k = std::ptrdiff_t(v.k) + dk;
            if (i < 0 || j < 0 || k < 0 || i >= nx || j >= ny || k >= nz) continue;
            const std::size_t m = g.offset(std::size_t(i), std::size_t(j), std::size_t(k));
            if (in[m] && !out.labels[m]) {
              out.labels[m] = label;
              stack.push_back(m);
            }
          }
    }
    const double c = double(count);
    out.components.push_back({count, {si / c, sj / c, sk / c}});
  }
  return out;
}

namespace detail {

/// Exact 1D squared distance transform (lower envelope of parabolas) with
/// sample spacing h. f[p] is 0 at sites and +inf elsewhere on first use.
inline void distance_1d(std::vector<double>& f, double h, std::vector<double>& d, std::vector<std::size_t>& v,
                        std::vector<double>& z) {
  const std::size_t n = f.size();
  constexpr double inf = std::numeric_limits<double>::infinity();
  d.assign(n, inf);
  v.assign(n, 0);
  z.assign(n + 1, 0.0);
  std::size_t k = 0;
  std::size_t first = n;
  for (std::size_t q = 0; q < n; ++q)
    if (f[q] < inf) {
      first = q;
      break;
    }
  if (first == n) return;  // no sites on this line
  v[0] = first;
  z[0] = -inf;
  z[1] = inf;
  for (std::size_t q = first + 1; q < n; ++q) {
    if (!(f[q] < inf)) continue;
    const double xq = double(q) * h;
    for (;;) {
      const double xv = double(v[k]) * h;
      const double s = ((f[q] + xq * xq) - (f[v[k]] + xv * xv)) / (2.0 * (xq - xv));
      if (s <= z[k]) {
        if (k == 0) {
          v[0] = q;
          z[0] = -inf;
          z[1] = inf;
          break;
        }
        --k;
        continue;
      }
      ++k;
      v[k] = q;
      z[k] = s;
      z[k + 1] = inf;
      break;
    }
  }
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    const double xq = double(q) * h;
    while (z[k + 1] < xq) ++k;
    const double dx = xq - double(v[k]) * h;
    d[q] = dx * dx + f[v[k]];
  }
}

}  // namespace detail

/// Euclidean distance in millimetres from every voxel centre to the nearest
/// foreground voxel centre (0 inside the mask). +inf when the mask is empty.
inline Image<double> distance_to_mask(const Mask& mask) {
  const Geometry& g = mask.geometry();
  Image<double> dist(g, std::numeric_limits<double>::infinity());
  for (std::size_t n = 0; n < mask.size(); ++n)
    if (mask[n]) dist[n] = 0.0;
  const std::size_t nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];
  for (int axis = 0; axis < 3; ++axis) {
    const std::size_t len = g.dims[axis];
    const std::size_t stride = axis == 0 ? 1 : axis == 1 ? nx : nx * ny;
    const std::size_t tasks = axis == 2 ? ny : nz;
    parallel_for(tasks, [&](std::size_t task) {
      std::vector<double> f(len), d, z;
      std::vector<std::size_t> v;
      auto run = [&](std::size_t base) {
        for (std::size_t p = 0; p < len; ++p) f[p] = dist[base + p * stride];
        detail::distance_1d(f, g.spacing[axis], d, v, z);
        for (std::size_t p = 0; p < len; ++p) dist[base + p * stride] = d[p];
      };
      if (axis == 0) {
        for (std::size_t j = 0; j < ny; ++j) run(g.offset(0, j, task));
      } else if (axis == 1) {
        for (std::size_t i = 0; i < nx; ++i) run(g.offset(i, 0, task));
      } else {
        for (std::size_t i = 0; i < nx; ++i) run(g.offset(i, task, 0));
      }
    });
  }
  for (std::size_t n = 0; n < dist.size(); ++n) dist[n] = std::sqrt(dist[n]);
  return dist;
}

/// Nonzero voxels of any volume as a mask.
template <class T>
Mask to_mask(const Image<T>& img) {
  Mask out(img.geometry());
  for (std::size_t n = 0; n < img.size(); ++n) out[n] = img[n] != T{} ? 1 : 0;
  return out;
}

}  // namespace luna
