#pragma once

// Scale-space filtering on Image<T> (T = float or double).
//
// Borders are handled by mirror padding (half-sample symmetric: index -1
// reads index 0). Convolution is out(x) = sum_i k[i] * f(x - i) with kernel
// offsets i in [-radius, radius]. All derivatives are in voxel units.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "luna/error.hpp"
#include "luna/image.hpp"
#include "luna/parallel.hpp"

namespace luna {

/// Maps any integer index into [0, n) by mirror reflection.
inline std::size_t mirror_index(std::ptrdiff_t p, std::size_t n) {
  const auto period = static_cast<std::ptrdiff_t>(2 * n);
  p %= period;
  if (p < 0) p += period;
  if (p >= static_cast<std::ptrdiff_t>(n)) p = period - 1 - p;
  return static_cast<std::size_t>(p);
}

/// A sampled 1D kernel; taps[radius + i] holds the weight of offset i.
struct Kernel1D {
  std::vector<double> taps;

  std::ptrdiff_t radius() const { return static_cast<std::ptrdiff_t>(taps.size() / 2); }
  double operator()(std::ptrdiff_t offset) const { return taps[static_cast<std::size_t>(offset + radius())]; }
};

enum class DerivativeOrder { Zero, First, Second };

/// Sampled Gaussian (derivative) kernel truncated at ceil(4 sigma).
/// Normalised so that it acts exactly on polynomials up to degree 2: the
/// smoothing kernel sums to 1, the first-derivative kernel maps x to 1 and
/// the second-derivative kernel maps x^2 to 2 while annihilating 1 and x.
inline Kernel1D gaussian_kernel(double sigma, DerivativeOrder order) {
  if (!(sigma > 0.0)) throw ValidationError("Gaussian sigma must be positive");
  const auto radius = static_cast<std::ptrdiff_t>(std::ceil(4.0 * sigma));
  Kernel1D g;
  for (std::ptrdiff_t i = -radius; i <= radius; ++i)
    g.taps.push_back(std::exp(-0.5 * double(i * i) / (sigma * sigma)));
  double sum = 0.0;
  for (double t : g.taps) sum += t;
  for (double& t : g.taps) t /= sum;
  if (order == DerivativeOrder::Zero) return g;

  Kernel1D k = g;
  const double s2 = sigma * sigma;
  if (order == DerivativeOrder::First) {
    double moment = 0.0;
    for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
      k.taps[std::size_t(i + radius)] = -double(i) / s2 * g(i);
      moment += double(i) * k(i);
    }
    for (double& t : k.taps) t /= -moment;
    return k;
  }
  double total = 0.0;
  for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
    k.taps[std::size_t(i + radius)] = (double(i * i) / (s2 * s2) - 1.0 / s2) * g(i);
    total += k(i);
  }
  double moment2 = 0.0;
  for (std::ptrdiff_t i = -radius; i <= radius; ++i) {
    k.taps[std::size_t(i + radius)] -= total * g(i);
    moment2 += double(i * i) * k(i);
  }
  for (double& t : k.taps) t *= 2.0 / moment2;
  return k;
}

/// Convolves along one axis (0 = x, 1 = y, 2 = z) with mirror padding.
template <class T>
Image<T> convolve_axis(const Image<T>& in, const Kernel1D& kernel, int axis) {
  const Geometry& g = in.geometry();
  const std::size_t nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];
  const std::size_t n_axis = g.dims[axis];
  const std::size_t stride = axis == 0 ? 1 : axis == 1 ? nx : nx * ny;
  const std::ptrdiff_t r = kernel.radius();
  Image<T> out(g);
  // One task per z-slice (or y-row when convolving along z).
  const std::size_t tasks = axis == 2 ? ny : nz;
  parallel_for(tasks, [&](std::size_t task) {
    std::vector<double> line(n_axis);
    auto process = [&](std::size_t base) {
      for (std::size_t p = 0; p < n_axis; ++p) line[p] = static_cast<double>(in[base + p * stride]);
      for (std::size_t p = 0; p < n_axis; ++p) {
        double acc = 0.0;
        const auto pp = static_cast<std::ptrdiff_t>(p);
        if (pp - r >= 0 && pp + r < static_cast<std::ptrdiff_t>(n_axis)) {
          for (std::ptrdiff_t i = -r; i <= r; ++i) acc += kernel(i) * line[std::size_t(pp - i)];
        } else {
          for (std::ptrdiff_t i = -r; i <= r; ++i) acc += kernel(i) * line[mirror_index(pp - i, n_axis)];
        }
        out[base + p * stride] = static_cast<T>(acc);
      }
    };
    if (axis == 0) {
      for (std::size_t j = 0; j < ny; ++j) process(g.offset(0, j, task));
    } else if (axis == 1) {
      for (std::size_t i = 0; i < nx; ++i) process(g.offset(i, 0, task));
    } else {
      for (std::size_t i = 0; i < nx; ++i) process(g.offset(i, task, 0));
    }
  });
  return out;
}

template <class T>
Image<T> convolve_separable(const Image<T>& in, const Kernel1D& kx, const Kernel1D& ky, const Kernel1D& kz) {
  return convolve_axis(convolve_axis(convolve_axis(in, kx, 0), ky, 1), kz, 2);
}

template <class T>
Image<T> gaussian_smooth(const Image<T>& in, double sigma) {
  const Kernel1D g = gaussian_kernel(sigma, DerivativeOrder::Zero);
  return convolve_separable(in, g, g, g);
}

/// Second derivatives of the Gaussian-smoothed image.
template <class T>
struct Hessian {
  Image<T> xx, yy, zz, xy, xz, yz;
};

template <class T>
Hessian<T> gaussian_hessian(const Image<T>& in, double sigma) {
  const Kernel1D g0 = gaussian_kernel(sigma, DerivativeOrder::Zero);
  const Kernel1D g1 = gaussian_kernel(sigma, DerivativeOrder::First);
  const Kernel1D g2 = gaussian_kernel(sigma, DerivativeOrder::Second);
  const Image<T> x0 = convolve_axis(in, g0, 0);
  const Image<T> x1 = convolve_axis(in, g1, 0);
  const Image<T> x2 = convolve_axis(in, g2, 0);
  const Image<T> x0y0 = convolve_axis(x0, g0, 1);
  const Image<T> x1y0 = convolve_axis(x1, g0, 1);
  const Image<T> x0y1 = convolve_axis(x0, g1, 1);
  return Hessian<T>{
      convolve_axis(convolve_axis(x2, g0, 1), g0, 2),
      convolve_axis(convolve_axis(x0, g2, 1), g0, 2),
      convolve_axis(x0y0, g2, 2),
      convolve_axis(convolve_axis(x1, g1, 1), g0, 2),
      convolve_axis(x1y0, g1, 2),
      convolve_axis(x0y1, g1, 2),
  };
}

/// Eigenvalues of a symmetric 3x3 matrix, ascending, by cyclic Jacobi
/// rotations. `m` is {a00, a11, a22, a01, a02, a12}.
inline std::array<double, 3> symmetric_eigenvalues(const std::array<double, 6>& m) {
  double a[3][3] = {{m[0], m[3], m[4]}, {m[3], m[1], m[5]}, {m[4], m[5], m[2]}};
  for (int sweep = 0; sweep < 50; ++sweep) {
    const double off = a[0][1] * a[0][1] + a[0][2] * a[0][2] + a[1][2] * a[1][2];
    const double diag = a[0][0] * a[0][0] + a[1][1] * a[1][1] + a[2][2] * a[2][2];
    if (off <= 1e-30 * diag || off == 0.0) break;
    for (int p = 0; p < 2; ++p)
      for (int q = p + 1; q < 3; ++q) {
        if (a[p][q] == 0.0) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < 3; ++k) {  // A <- A J
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (int k = 0; k < 3; ++k) {  // A <- J^T A
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
        a[p][q] = a[q][p] = 0.0;
      }
  }
  std::array<double, 3> e{a[0][0], a[1][1], a[2][2]};
  std::sort(e.begin(), e.end());
  return e;
}

/// Principal curvatures of the intensity landscape at one voxel, k1 >= k2.
/// With Hessian eigenvalues l1 <= l2 <= l3, k1 = -l2 and k2 = -l3: bright
/// blobs have k1, k2 > 0, bright tubes k1 > 0 = k2, dark holes k1, k2 < 0.
struct PrincipalCurvatures {
  double k1 = 0.0;
  double k2 = 0.0;
};

inline PrincipalCurvatures principal_curvatures(const std::array<double, 6>& hessian) {
  const auto e = symmetric_eigenvalues(hessian);
  return {-e[1], -e[2]};
}

struct ShapeDescriptor {
  double shape_index = 0.0;  // in [-1, 1]
  double curvedness = 0.0;   // >= 0
  bool undefined = false;    // k1 == k2 == 0
};

/// SI = (2/pi) atan((k1 + k2) / (k1 - k2)), CV = sqrt(k1^2 + k2^2). At
/// k1 == k2 != 0 SI takes its limit sign(k1); at k1 == k2 == 0 it is
/// reported as 0 and flagged.
inline ShapeDescriptor shape_descriptor(const PrincipalCurvatures& k) {
  ShapeDescriptor d;
  d.curvedness = std::sqrt(k.k1 * k.k1 + k.k2 * k.k2);
  if (k.k1 == 0.0 && k.k2 == 0.0) {
    d.undefined = true;
    return d;
  }
  // k1 >= k2 so the denominator is >= 0 and atan2 stays in [-pi/2, pi/2].
  d.shape_index = std::clamp(2.0 / std::numbers::pi * std::atan2(k.k1 + k.k2, k.k1 - k.k2), -1.0, 1.0);
  return d;
}

struct PrincipalCurvatureField {
  Image<float> k1, k2;
};

struct ShapeIndexField {
  Image<float> shape_index;
  Image<float> curvedness;
  Image<std::uint8_t> undefined;
};

template <class T>
PrincipalCurvatureField principal_curvature_field(const Image<T>& in, double sigma) {
  const Hessian<T> h = gaussian_hessian(in, sigma);
  PrincipalCurvatureField f{Image<float>(in.geometry()), Image<float>(in.geometry())};
  parallel_for(in.dims()[2], [&](std::size_t k) {
    const std::size_t slab = in.dims()[0] * in.dims()[1];
    for (std::size_t n = k * slab; n < (k + 1) * slab; ++n) {
      const auto c = principal_curvatures({double(h.xx[n]), double(h.yy[n]), double(h.zz[n]), double(h.xy[n]),
                                           double(h.xz[n]), double(h.yz[n])});
      f.k1[n] = static_cast<float>(c.k1);
      f.k2[n] = static_cast<float>(c.k2);
    }
  });
  return f;
}

template <class T>
ShapeIndexField shape_index(const Image<T>& in, double sigma) {
  const Hessian<T> h = gaussian_hessian(in, sigma);
  ShapeIndexField f{Image<float>(in.geometry()), Image<float>(in.geometry()), Image<std::uint8_t>(in.geometry())};
  parallel_for(in.dims()[2], [&](std::size_t k) {
    const std::size_t slab = in.dims()[0] * in.dims()[1];
    for (std::size_t n = k * slab; n < (k + 1) * slab; ++n) {
      const auto d = shape_descriptor(principal_curvatures(
          {double(h.xx[n]), double(h.yy[n]), double(h.zz[n]), double(h.xy[n]), double(h.xz[n]), double(h.yz[n])}));
      f.shape_index[n] = static_cast<float>(d.shape_index);
      f.curvedness[n] = static_cast<float>(d.curvedness);
      f.undefined[n] = d.undefined ? 1 : 0;
    }
  });
  return f;
}

/// Divergence of the normalised gradient, k = div(grad L / |grad L|), of the
/// Gaussian-smoothed image L, using central differences. Where |grad L| <
/// epsilon the unit vector is taken as 0. A bright blob's gradient converges
/// on its centre, so k is negative there (about -2/r at radius r voxels).
template <class T>
Image<T> dng(const Image<T>& in, double sigma, double epsilon = 1e-6) {
  const Image<T> smooth = gaussian_smooth(in, sigma);
  const Geometry& g = in.geometry();
  const std::size_t nx = g.dims[0], ny = g.dims[1], nz = g.dims[2];
  auto at = [&](const Image<T>& img, std::ptrdiff_t i, std::ptrdiff_t j, std::ptrdiff_t k) {
    return static_cast<double>(img[g.offset(mirror_index(i, nx), mirror_index(j, ny), mirror_index(k, nz))]);
  };
  std::array<Image<T>, 3> w{Image<T>(g), Image<T>(g), Image<T>(g)};
  parallel_for(nz, [&](std::size_t k) {
    for (std::size_t j = 0; j < ny; ++j)
      for (std::size_t i = 0; i < nx; ++i) {
        const auto pi = std::ptrdiff_t(i), pj = std::ptrdiff_t(j), pk = std::ptrdiff_t(k);
        const double gx = 0.5 * (at(smooth, pi + 1, pj, pk) - at(smooth, pi - 1, pj, pk));
        const double gy = 0.5 * (at(smooth, pi, pj + 1, pk) - at(smooth, pi, pj - 1, pk));
        const double gz = 0.5 * (at(smooth, pi, pj, pk + 1) - at(smooth, pi, pj, pk - 1));
        const double norm = std::sqrt(gx * gx + gy * gy + gz * gz);
        const std::size_t n = g.offset(i, j, k);
        if (norm < epsilon) continue;
        w[0][n] = static_cast<T>(gx / norm);
        w[1][n] = static_cast<T>(gy / norm);
        w[2][n] = static_cast<T>(gz / norm);
      }
  });
  Image<T> out(g);
  parallel_for(nz, [&](std::size_t k) {
    for (std::size_t j = 0; j < ny; ++j)
      for (std::size_t i = 0; i < nx; ++i) {
        const auto pi = std::ptrdiff_t(i), pj = std::ptrdiff_t(j), pk = std::ptrdiff_t(k);
        const double div = 0.5 * (at(w[0], pi + 1, pj, pk) - at(w[0], pi - 1, pj, pk)) +
                           0.5 * (at(w[1], pi, pj + 1, pk) - at(w[1], pi, pj - 1, pk)) +
                           0.5 * (at(w[2], pi, pj, pk + 1) - at(w[2], pi, pj, pk - 1));
        out[g.offset(i, j, k)] = static_cast<T>(div);
      }
  });
  return out;
}

/// Trilinear sample at continuous voxel coordinates, clamped to the grid.
template <class T>
double sample_trilinear(const Image<T>& img, const VoxelCoord& c) {
  const Geometry& g = img.geometry();
  const double p[3] = {c.i, c.j, c.k};
  std::size_t lo[3], hi[3];
  double t[3];
  for (int a = 0; a < 3; ++a) {
    const double maxc = static_cast<double>(g.dims[a] - 1);
    const double v = std::clamp(p[a], 0.0, maxc);
    const double f = std::floor(v);
    lo[a] = static_cast<std::size_t>(f);
    hi[a] = std::min(lo[a] + 1, g.dims[a] - 1);
    t[a] = v - f;
  }
  double acc = 0.0;
  for (int corner = 0; corner < 8; ++corner) {
    double w = 1.0;
    std::size_t idx[3];
    for (int a = 0; a < 3; ++a) {
      const bool upper = (corner >> a) & 1;
      w *= upper ? t[a] : 1.0 - t[a];
      idx[a] = upper ? hi[a] : lo[a];
    }
    if (w != 0.0) acc += w * static_cast<double>(img[g.offset(idx[0], idx[1], idx[2])]);
  }
  return acc;
}

/// Geometry of the isotropic grid spanning the same world extent.
inline Geometry isotropic_geometry(const Geometry& g, double target_spacing) {
  if (!(target_spacing > 0.0)) throw ValidationError("target spacing must be positive");
  g.validate();
  Geometry out;
  out.origin = g.origin;
  out.spacing = {target_spacing, target_spacing, target_spacing};
  for (int a = 0; a < 3; ++a) {
    const double extent = static_cast<double>(g.dims[a] - 1) * g.spacing[a];
    out.dims[a] = static_cast<std::size_t>(std::floor(extent / target_spacing + 1e-9)) + 1;
  }
  return out;
}

/// Trilinear resampling onto an isotropic grid with the same origin.
template <class T>
Image<float> resample_isotropic(const Image<T>& in, double target_spacing) {
  const Geometry out_geometry = isotropic_geometry(in.geometry(), target_spacing);
  Image<float> out(out_geometry);
  parallel_for(out_geometry.dims[2], [&](std::size_t k) {
    for (std::size_t j = 0; j < out_geometry.dims[1]; ++j)
      for (std::size_t i = 0; i < out_geometry.dims[0]; ++i) {
        const WorldPoint p = out_geometry.voxel_to_world(VoxelIndex{i, j, k});
        out[out_geometry.offset(i, j, k)] =
            static_cast<float>(sample_trilinear(in, in.geometry().world_to_voxel(p)));
      }
  });
  return out;
}

/// Nearest-neighbour resampling of a mask onto another grid; voxels that
/// map outside the source are 0.
inline Image<std::uint8_t> resample_mask(const Image<std::uint8_t>& mask, const Geometry& target) {
  Image<std::uint8_t> out(target);
  for (std::size_t n = 0; n < out.size(); ++n) {
    const auto v = mask.geometry().nearest_voxel(target.voxel_to_world(target.index_of(n)));
    out[n] = v && mask.at(*v) ? 1 : 0;
  }
  return out;
}

}  // namespace luna
