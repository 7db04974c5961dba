#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "luna/filters.hpp"
#include "oracles.hpp"

using namespace luna;

namespace {

template <class F>
Image<double> sampled(const Geometry& g, F&& f) {
  Image<double> img(g);
  for (std::size_t n = 0; n < img.size(); ++n) img[n] = f(g.voxel_to_world(g.index_of(n)));
  return img;
}

Image<float> gaussian_blob(std::size_t size, WorldPoint c, double s, double amplitude = 1000.0) {
  const Geometry g{{size, size, size}, {1, 1, 1}, {0, 0, 0}};
  Image<float> img(g);
  for (std::size_t n = 0; n < img.size(); ++n) {
    const double r2 = squared_distance(g.voxel_to_world(g.index_of(n)), c);
    img[n] = static_cast<float>(amplitude * std::exp(-0.5 * r2 / (s * s)));
  }
  return img;
}

}  // namespace

TEST(Kernel, SmoothingSumsToOne) {
  for (double sigma : {0.5, 1.0, 2.3}) {
    const Kernel1D k = gaussian_kernel(sigma, DerivativeOrder::Zero);
    EXPECT_EQ(k.radius(), std::ptrdiff_t(std::ceil(4 * sigma)));
    double sum = 0.0;
    for (double t : k.taps) sum += t;
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
  EXPECT_THROW(gaussian_kernel(0.0, DerivativeOrder::Zero), ValidationError);
}

TEST(Kernel, HessianExactOnQuadratics) {
  const Geometry g{{24, 24, 24}, {1, 1, 1}, {0, 0, 0}};
  // f = 0.3x^2 - 0.2y^2 + 0.1z^2 + 0.5xy - 0.4xz + 0.25yz + x - 2y + 7
  const Image<double> f = sampled(g, [](const WorldPoint& p) {
    return 0.3 * p.x * p.x - 0.2 * p.y * p.y + 0.1 * p.z * p.z + 0.5 * p.x * p.y - 0.4 * p.x * p.z +
           0.25 * p.y * p.z + p.x - 2 * p.y + 7;
  });
  for (double sigma : {1.0, 1.5}) {
    const Hessian<double> h = gaussian_hessian(f, sigma);
    const std::size_t n = g.offset(12, 11, 12);
    EXPECT_NEAR(h.xx[n], 0.6, 1e-4);
    EXPECT_NEAR(h.yy[n], -0.4, 1e-4);
    EXPECT_NEAR(h.zz[n], 0.2, 1e-4);
    EXPECT_NEAR(h.xy[n], 0.5, 1e-4);
    EXPECT_NEAR(h.xz[n], -0.4, 1e-4);
    EXPECT_NEAR(h.yz[n], 0.25, 1e-4);
  }
}

TEST(Kernel, FirstDerivativeExactOnQuadratic) {
  const Geometry g{{30, 3, 3}, {1, 1, 1}, {0, 0, 0}};
  const Image<double> f = sampled(g, [](const WorldPoint& p) { return 2.0 + 3.0 * p.x - 0.5 * p.x * p.x; });
  const Image<double> d = convolve_axis(f, gaussian_kernel(1.2, DerivativeOrder::First), 0);
  for (std::size_t i = 8; i < 22; ++i) EXPECT_NEAR(d.at(i, 1, 1), 3.0 - double(i), 1e-9);
}

TEST(Eigen, MatchesCharacteristicPolynomial) {
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 2000; ++t) {
    const std::array<double, 6> m{u(rng), u(rng), u(rng), u(rng), u(rng), u(rng)};
    const auto got = symmetric_eigenvalues(m);
    const auto want = oracle::char_poly_eigenvalues(m);
    for (int a = 0; a < 3; ++a) EXPECT_NEAR(got[a], want[a], 1e-8);
  }
}

TEST(Eigen, DiagonalAndRepeated) {
  const auto e = symmetric_eigenvalues({3, -1, 2, 0, 0, 0});
  EXPECT_EQ(e[0], -1);
  EXPECT_EQ(e[1], 2);
  EXPECT_EQ(e[2], 3);
  const auto r = symmetric_eigenvalues({2, 2, 2, 0, 0, 0});
  for (double v : r) EXPECT_EQ(v, 2);
}

TEST(ShapeIndex, UmbilicLimit) {
  const ShapeDescriptor d = shape_descriptor({0.2, 0.2});
  EXPECT_DOUBLE_EQ(d.shape_index, 1.0);
  EXPECT_NEAR(d.curvedness, 0.2 * std::numbers::sqrt2, 1e-15);
  EXPECT_DOUBLE_EQ(shape_descriptor({-0.2, -0.2}).shape_index, -1.0);
}

TEST(ShapeIndex, Saddle) {
  const ShapeDescriptor d = shape_descriptor({0.3, -0.3});
  EXPECT_DOUBLE_EQ(d.shape_index, 0.0);
  EXPECT_NEAR(d.curvedness, 0.3 * std::numbers::sqrt2, 1e-15);
}

TEST(ShapeIndex, FlatIsFlagged) {
  const ShapeDescriptor d = shape_descriptor({0.0, 0.0});
  EXPECT_TRUE(d.undefined);
  EXPECT_EQ(d.curvedness, 0.0);
}

TEST(ShapeIndex, BrightBlobAndTube) {
  // Bright blob: all Hessian eigenvalues negative and equal -> cap.
  EXPECT_NEAR(shape_descriptor(principal_curvatures({-1, -1, -1, 0, 0, 0})).shape_index, 1.0, 1e-12);
  // Bright tube along z: two negative eigenvalues, one zero -> ridge (0.5).
  EXPECT_NEAR(shape_descriptor(principal_curvatures({-1, -1, 0, 0, 0, 0})).shape_index, 0.5, 1e-12);
}

TEST(ShapeIndex, GaussianBlobCentre) {
  const Image<float> blob = gaussian_blob(33, {16, 16, 16}, 3.0);
  const ShapeIndexField f = shape_index(blob, 1.0);
  EXPECT_NEAR(f.shape_index.at(16, 16, 16), 1.0, 0.05);
  EXPECT_GT(f.curvedness.at(16, 16, 16), 0.0);
}

TEST(ShapeIndex, RangesOnNoise) {
  std::mt19937_64 rng(1);
  std::normal_distribution<float> noise(0.0f, 100.0f);
  Image<float> img(Geometry{{20, 18, 16}, {1, 1, 1}, {0, 0, 0}});
  for (auto& v : img.data()) v = noise(rng);
  const ShapeIndexField f = shape_index(img, 1.0);
  for (std::size_t n = 0; n < img.size(); ++n) {
    ASSERT_GE(f.shape_index[n], -1.0f);
    ASSERT_LE(f.shape_index[n], 1.0f);
    ASSERT_GE(f.curvedness[n], 0.0f);
  }
}

TEST(Resample, IdentityAtNativeSpacing) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<float> u(-1000, 1000);
  Image<float> img(Geometry{{9, 7, 5}, {1, 1, 1}, {-3, 2, 10}});
  for (auto& v : img.data()) v = u(rng);
  const Image<float> out = resample_isotropic(img, 1.0);
  EXPECT_EQ(out, img);
}

TEST(Resample, ConstantStaysConstant) {
  const Image<std::int16_t> img(Geometry{{10, 10, 4}, {0.7, 0.7, 2.5}, {0, 0, 0}}, -850);
  const Image<float> out = resample_isotropic(img, 1.0);
  EXPECT_EQ(out.dims(), (Dims{7, 7, 8}));
  for (float v : out.data()) EXPECT_EQ(v, -850.0f);
}

TEST(Resample, LinearRampIsExact) {
  const Geometry g{{6, 6, 3}, {0.7, 0.7, 2.5}, {0, 0, 0}};
  auto f = [](const WorldPoint& p) { return 0.5 * p.x + 0.2 * p.y - 0.1 * p.z; };
  const Image<double> img = sampled(g, f);
  const Image<float> out = resample_isotropic(img, 1.0);
  for (std::size_t n = 0; n < out.size(); ++n)
    EXPECT_NEAR(out[n], f(out.geometry().voxel_to_world(out.geometry().index_of(n))), 1e-6);
}

TEST(Dng, ConstantIsZero) {
  const Image<float> img(Geometry{{12, 12, 12}}, 5.0f);
  for (float v : dng(img, 1.0).data()) EXPECT_EQ(v, 0.0f);
}

TEST(Dng, RampInteriorIsZero) {
  const Geometry g{{16, 16, 16}, {1, 1, 1}, {0, 0, 0}};
  const Image<double> img = sampled(g, [](const WorldPoint& p) { return 3.0 * p.x + p.y; });
  const Image<double> k = dng(img, 1.0);
  for (std::size_t z = 6; z < 10; ++z)
    for (std::size_t y = 6; y < 10; ++y)
      for (std::size_t x = 6; x < 10; ++x) EXPECT_NEAR(k.at(x, y, z), 0.0, 1e-9);
}

TEST(Dng, BlobCentreIsNegativeMinimum) {
  const Image<float> blob = gaussian_blob(33, {16, 16, 16}, 4.0);
  const Image<float> k = dng(blob, 1.0);
  const float centre = k.at(16, 16, 16);
  EXPECT_LT(centre, 0.0f);
  for (std::size_t z = 12; z <= 20; ++z)
    for (std::size_t y = 12; y <= 20; ++y)
      for (std::size_t x = 12; x <= 20; ++x) EXPECT_LE(centre, k.at(x, y, z));
  // Radial unit field: div(-r_hat) = -2 / r.
  EXPECT_NEAR(k.at(21, 16, 16), -2.0 / 5.0, 0.08);
}
