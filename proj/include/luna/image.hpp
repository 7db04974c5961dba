#pragma once

// Volumetric images with world geometry.
//
// World coordinates are millimetres in the frame of the MetaImage header:
//   world = origin + index * spacing   (componentwise, no direction matrix)
// Voxel data is stored x-fastest: offset = i + dims[0] * (j + dims[1] * k).

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <type_traits>
#include <utility>
#include <variant>
#include <vector>

#include "luna/error.hpp"

namespace luna {

struct WorldPoint {
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;

  friend bool operator==(const WorldPoint&, const WorldPoint&) = default;
};

inline double distance(const WorldPoint& a, const WorldPoint& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dz = a.z - b.z;
  return std::sqrt(dx * dx + dy * dy + dz * dz);
}

inline double squared_distance(const WorldPoint& a, const WorldPoint& b) {
  const double dx = a.x - b.x;
  const double dy = a.y - b.y;
  const double dz = a.z - b.z;
  return dx * dx + dy * dy + dz * dz;
}

inline bool is_finite(const WorldPoint& p) {
  return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z);
}

/// Continuous (fractional) voxel coordinates.
struct VoxelCoord {
  double i = 0.0;
  double j = 0.0;
  double k = 0.0;
};

struct VoxelIndex {
  std::size_t i = 0;
  std::size_t j = 0;
  std::size_t k = 0;

  friend bool operator==(const VoxelIndex&, const VoxelIndex&) = default;
};

using Dims = std::array<std::size_t, 3>;
using Spacing = std::array<double, 3>;

/// Grid layout shared by an image and everything derived from it.
struct Geometry {
  Dims dims{1, 1, 1};
  Spacing spacing{1.0, 1.0, 1.0};
  WorldPoint origin{};

  std::size_t voxel_count() const { return dims[0] * dims[1] * dims[2]; }

  double voxel_volume() const { return spacing[0] * spacing[1] * spacing[2]; }

  std::size_t offset(std::size_t i, std::size_t j, std::size_t k) const {
    return i + dims[0] * (j + dims[1] * k);
  }

  VoxelIndex index_of(std::size_t offset) const {
    const std::size_t i = offset % dims[0];
    const std::size_t rest = offset / dims[0];
    return {i, rest % dims[1], rest / dims[1]};
  }

  bool contains(const VoxelIndex& v) const {
    return v.i < dims[0] && v.j < dims[1] && v.k < dims[2];
  }

  VoxelCoord world_to_voxel(const WorldPoint& p) const {
    return {(p.x - origin.x) / spacing[0], (p.y - origin.y) / spacing[1],
            (p.z - origin.z) / spacing[2]};
  }

  WorldPoint voxel_to_world(const VoxelCoord& c) const {
    return {origin.x + c.i * spacing[0], origin.y + c.j * spacing[1],
            origin.z + c.k * spacing[2]};
  }

  WorldPoint voxel_to_world(const VoxelIndex& v) const {
    return voxel_to_world(VoxelCoord{static_cast<double>(v.i), static_cast<double>(v.j),
                                     static_cast<double>(v.k)});
  }

  /// Nearest voxel to a world point, or nothing when it falls outside the grid.
  std::optional<VoxelIndex> nearest_voxel(const WorldPoint& p) const;

  /// Throws ValidationError unless dims and spacing are usable.
  void validate() const {
    for (int a = 0; a < 3; ++a) {
      if (dims[a] == 0) throw ValidationError("image dimension must be positive");
      if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a]))
        throw ValidationError("image spacing must be positive and finite");
    }
    if (!is_finite(origin)) throw ValidationError("image origin must be finite");
  }

  friend bool operator==(const Geometry&, const Geometry&) = default;
};

inline bool same_grid(const Geometry& a, const Geometry& b, double tol = 1e-6) {
  if (a.dims != b.dims) return false;
  for (int d = 0; d < 3; ++d)
    if (std::abs(a.spacing[d] - b.spacing[d]) > tol) return false;
  return distance(a.origin, b.origin) <= tol;
}

inline std::optional<VoxelIndex> Geometry::nearest_voxel(const WorldPoint& p) const {
  const VoxelCoord c = world_to_voxel(p);
  const double r[3] = {std::round(c.i), std::round(c.j), std::round(c.k)};
  for (int a = 0; a < 3; ++a)
    if (!(r[a] >= 0.0) || r[a] > static_cast<double>(dims[a] - 1)) return std::nullopt;
  return VoxelIndex{static_cast<std::size_t>(r[0]), static_cast<std::size_t>(r[1]),
                    static_cast<std::size_t>(r[2])};
}

enum class ElementKind { Int16, UInt8, Float32 };

template <class T>
struct element_kind_of;
template <>
struct element_kind_of<std::int16_t> : std::integral_constant<ElementKind, ElementKind::Int16> {};
template <>
struct element_kind_of<std::uint8_t> : std::integral_constant<ElementKind, ElementKind::UInt8> {};
template <>
struct element_kind_of<float> : std::integral_constant<ElementKind, ElementKind::Float32> {};

inline std::size_t element_size(ElementKind kind) {
  switch (kind) {
    case ElementKind::Int16: return 2;
    case ElementKind::UInt8: return 1;
    case ElementKind::Float32: return 4;
  }
  return 0;
}

/// A dense 3D scalar image. Data length always equals the voxel count.
template <class T>
class Image {
 public:
  using value_type = T;

  Image() = default;

  explicit Image(const Geometry& geometry, T fill = T{})
      : geometry_(geometry), data_((geometry.validate(), geometry.voxel_count()), fill) {}

  Image(const Geometry& geometry, std::vector<T> data) : geometry_(geometry), data_(std::move(data)) {
    geometry_.validate();
    if (data_.size() != geometry_.voxel_count())
      throw ValidationError("image data length " + std::to_string(data_.size()) +
                            " does not match voxel count " +
                            std::to_string(geometry_.voxel_count()));
  }

  const Geometry& geometry() const { return geometry_; }
  const Dims& dims() const { return geometry_.dims; }
  const Spacing& spacing() const { return geometry_.spacing; }
  const WorldPoint& origin() const { return geometry_.origin; }
  std::size_t size() const { return data_.size(); }

  const T& at(std::size_t i, std::size_t j, std::size_t k) const { return data_[checked(i, j, k)]; }
  T& at(std::size_t i, std::size_t j, std::size_t k) { return data_[checked(i, j, k)]; }
  const T& at(const VoxelIndex& v) const { return at(v.i, v.j, v.k); }
  T& at(const VoxelIndex& v) { return at(v.i, v.j, v.k); }

  /// Linear access; `offset` must be < size().
  const T& operator[](std::size_t offset) const { return data_[offset]; }
  T& operator[](std::size_t offset) { return data_[offset]; }

  const std::vector<T>& data() const { return data_; }
  std::vector<T>& data() { return data_; }

  friend bool operator==(const Image&, const Image&) = default;

 private:
  std::size_t checked(std::size_t i, std::size_t j, std::size_t k) const {
    if (i >= geometry_.dims[0] || j >= geometry_.dims[1] || k >= geometry_.dims[2])
      throw ValidationError("voxel index (" + std::to_string(i) + "," + std::to_string(j) + "," +
                            std::to_string(k) + ") out of bounds");
    return geometry_.offset(i, j, k);
  }

  Geometry geometry_{};
  std::vector<T> data_;
};

/// A volume as stored on disk: one of the supported element kinds.
using Volume = std::variant<Image<std::int16_t>, Image<std::uint8_t>, Image<float>>;

inline const Geometry& geometry_of(const Volume& v) {
  return std::visit([](const auto& img) -> const Geometry& { return img.geometry(); }, v);
}

inline ElementKind kind_of(const Volume& v) {
  return std::visit(
      [](const auto& img) {
        using T = typename std::decay_t<decltype(img)>::value_type;
        return element_kind_of<T>::value;
      },
      v);
}

/// Elementwise conversion with rounding and saturation for integral targets.
template <class To, class From>
Image<To> image_cast(const Image<From>& src) {
  if constexpr (std::is_same_v<To, From>) {
    return src;
  } else {
    std::vector<To> out(src.size());
    for (std::size_t n = 0; n < src.size(); ++n) {
      if constexpr (std::is_integral_v<To>) {
        double value = std::round(static_cast<double>(src[n]));
        constexpr double lo = static_cast<double>(std::numeric_limits<To>::lowest());
        constexpr double hi = static_cast<double>(std::numeric_limits<To>::max());
        if (!(value >= lo)) value = lo;
        if (value > hi) value = hi;
        out[n] = static_cast<To>(value);
      } else {
        out[n] = static_cast<To>(src[n]);
      }
    }
    return Image<To>(src.geometry(), std::move(out));
  }
}

template <class To>
Image<To> volume_cast(const Volume& v) {
  return std::visit([](const auto& img) { return image_cast<To>(img); }, v);
}

}  // namespace luna
