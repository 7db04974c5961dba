#pragma once

// Synthetic CT-like phantoms with known ground truth.
//
// Objects are composited in order over a constant background: each voxel
// becomes value * (1 - t) + object_hu * t, where t is 1 inside the object
// shrunk by its edge softness, falls linearly to 0 across that shell, and is
// 0 outside. i.i.d. Gaussian noise is added last and the result is rounded
// to signed 16-bit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "luna/csv.hpp"
#include "luna/error.hpp"
#include "luna/image.hpp"
#include "luna/random.hpp"

namespace luna {

struct PhantomNodule {
  WorldPoint center;
  double diameter_mm = 10.0;
  double peak_hu = -50.0;
  double edge_softness_mm = 1.0;
};

/// An infinite cylinder emulating a vessel.
struct PhantomVessel {
  WorldPoint point;               // any point on the axis
  WorldPoint direction{0, 0, 1};  // need not be normalised
  double radius_mm = 2.0;
  double hu = -50.0;
  double edge_softness_mm = 1.0;
};

struct PhantomSpec {
  std::string scan_id = "phantom";
  Geometry geometry{{64, 64, 64}, {1.0, 1.0, 1.0}, {0.0, 0.0, 0.0}};
  double background_hu = -850.0;
  double noise_sigma_hu = 0.0;
  double lung_margin_mm = 4.0;  // lung box = volume extent shrunk by this much
  std::vector<PhantomNodule> nodules;
  std::vector<PhantomVessel> vessels;
  std::optional<std::uint64_t> seed;  // noise stream; 0 when unset
};

struct Phantom {
  Image<std::int16_t> volume;
  std::vector<MarkRow> annotations;  // annotations schema, one row per nodule
  Image<std::uint8_t> lung_mask;
};

namespace detail {

inline double edge_weight(double depth_mm, double softness_mm) {
  // depth = distance inside the object's surface (negative outside)
  if (depth_mm <= 0.0) return 0.0;
  if (softness_mm <= 0.0 || depth_mm >= softness_mm) return 1.0;
  return depth_mm / softness_mm;
}

inline void validate(const PhantomSpec& spec) {
  spec.geometry.validate();
  const Geometry& g = spec.geometry;
  const WorldPoint lo = g.origin;
  const WorldPoint hi = g.voxel_to_world(VoxelIndex{g.dims[0] - 1, g.dims[1] - 1, g.dims[2] - 1});
  for (std::size_t n = 0; n < spec.nodules.size(); ++n) {
    const auto& nod = spec.nodules[n];
    const std::string which = "phantom nodule " + std::to_string(n);
    if (!(nod.diameter_mm > 0.0)) throw ValidationError(which + ": diameter must be positive");
    if (nod.edge_softness_mm < 0.0) throw ValidationError(which + ": edge softness must be non-negative");
    const double r = nod.diameter_mm / 2.0;
    const WorldPoint c = nod.center;
    if (c.x - r < lo.x || c.y - r < lo.y || c.z - r < lo.z || c.x + r > hi.x || c.y + r > hi.y || c.z + r > hi.z)
      throw ValidationError(which + ": sphere is not fully inside the volume");
  }
  for (const auto& v : spec.vessels) {
    const double len = std::sqrt(v.direction.x * v.direction.x + v.direction.y * v.direction.y +
                                 v.direction.z * v.direction.z);
    if (!(len > 0.0)) throw ValidationError("phantom vessel: direction must be non-zero");
    if (!(v.radius_mm > 0.0)) throw ValidationError("phantom vessel: radius must be positive");
  }
  if (spec.noise_sigma_hu < 0.0) throw ValidationError("phantom noise sigma must be non-negative");
}

}  // namespace detail

inline Phantom generate_phantom(const PhantomSpec& spec) {
  detail::validate(spec);
  const Geometry& g = spec.geometry;
  std::vector<double> value(g.voxel_count(), spec.background_hu);

  // Each object only touches voxels within its bounding box.
  auto composite = [&](WorldPoint lo, WorldPoint hi, double hu, auto&& weight_at) {
    const VoxelCoord a = g.world_to_voxel(lo), b = g.world_to_voxel(hi);
    auto range = [](double from, double to, std::size_t n) {
      const double f = std::max(0.0, std::floor(std::min(from, to)));
      const double t = std::min(double(n - 1), std::ceil(std::max(from, to)));
      return std::pair<std::size_t, std::size_t>{std::size_t(f), t < f ? std::size_t(f) : std::size_t(t)};
    };
    const auto [i0, i1] = range(a.i, b.i, g.dims[0]);
    const auto [j0, j1] = range(a.j, b.j, g.dims[1]);
    const auto [k0, k1] = range(a.k, b.k, g.dims[2]);
    for (std::size_t k = k0; k <= k1; ++k)
      for (std::size_t j = j0; j <= j1; ++j)
        for (std::size_t i = i0; i <= i1; ++i) {
          const double t = weight_at(g.voxel_to_world(VoxelIndex{i, j, k}));
          if (t <= 0.0) continue;
          double& v = value[g.offset(i, j, k)];
          v = v * (1.0 - t) + hu * t;
        }
  };

  const WorldPoint vol_lo = g.origin;
  const WorldPoint vol_hi = g.voxel_to_world(VoxelIndex{g.dims[0] - 1, g.dims[1] - 1, g.dims[2] - 1});
  for (const auto& v : spec.vessels) {
    const double len = std::sqrt(v.direction.x * v.direction.x + v.direction.y * v.direction.y +
                                 v.direction.z * v.direction.z);
    const WorldPoint u{v.direction.x / len, v.direction.y / len, v.direction.z / len};
    composite(vol_lo, vol_hi, v.hu, [&](const WorldPoint& p) {
      const WorldPoint d{p.x - v.point.x, p.y - v.point.y, p.z - v.point.z};
      const double along = d.x * u.x + d.y * u.y + d.z * u.z;
      const WorldPoint perp{d.x - along * u.x, d.y - along * u.y, d.z - along * u.z};
      const double radial = std::sqrt(perp.x * perp.x + perp.y * perp.y + perp.z * perp.z);
      return detail::edge_weight(v.radius_mm - radial, v.edge_softness_mm);
    });
  }
  for (const auto& n : spec.nodules) {
    const double r = n.diameter_mm / 2.0;
    composite({n.center.x - r, n.center.y - r, n.center.z - r}, {n.center.x + r, n.center.y + r, n.center.z + r},
              n.peak_hu, [&](const WorldPoint& p) {
                return detail::edge_weight(r - distance(p, n.center), n.edge_softness_mm);
              });
  }

  if (spec.noise_sigma_hu > 0.0) {
    auto rng = make_rng(spec.seed.value_or(0), "phantom-noise");
    std::normal_distribution<double> noise(0.0, spec.noise_sigma_hu);
    for (double& v : value) v += noise(rng);
  }

  Phantom out;
  std::vector<std::int16_t> data(value.size());
  for (std::size_t n = 0; n < value.size(); ++n)
    data[n] = static_cast<std::int16_t>(std::clamp(std::round(value[n]), -32768.0, 32767.0));
  out.volume = Image<std::int16_t>(g, std::move(data));

  out.lung_mask = Image<std::uint8_t>(g);
  const double m = spec.lung_margin_mm;
  for (std::size_t n = 0; n < out.lung_mask.size(); ++n) {
    const WorldPoint p = g.voxel_to_world(g.index_of(n));
    const bool inside = p.x >= vol_lo.x + m && p.x <= vol_hi.x - m && p.y >= vol_lo.y + m && p.y <= vol_hi.y - m &&
                        p.z >= vol_lo.z + m && p.z <= vol_hi.z - m;
    out.lung_mask[n] = inside ? 1 : 0;
  }

  for (const auto& n : spec.nodules)
    out.annotations.push_back({spec.scan_id, n.center, n.diameter_mm, std::nullopt, {}});
  return out;
}

// ---- Text format ------------------------------------------------------------
//
//   # comment
//   scan_id = phantom001
//   dims = 128 128 128
//   spacing = 1 1 1
//   origin = 0 0 0
//   background = -850
//   noise_sigma = 20
//   lung_margin = 4
//   seed = 7
//   nodule = x y z diameter_mm peak_hu [edge_softness_mm]
//   vessel = px py pz dx dy dz radius_mm hu [edge_softness_mm]

inline PhantomSpec parse_phantom_spec(std::istream& in, const std::string& source = "<phantom spec>") {
  PhantomSpec spec;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& msg) -> void {
    throw ValidationError(source + ":" + std::to_string(line_no) + ": " + msg);
  };
  auto numbers = [&](const std::string& text, std::size_t min_count, std::size_t max_count) {
    std::istringstream s(text);
    std::vector<double> v;
    std::string tok;
    while (s >> tok) {
      try {
        std::size_t used = 0;
        v.push_back(std::stod(tok, &used));
        if (used != tok.size()) fail("non-numeric value '" + tok + "'");
      } catch (const std::logic_error&) {
        fail("non-numeric value '" + tok + "'");
      }
    }
    if (v.size() < min_count || v.size() > max_count)
      fail("expected " + std::to_string(min_count) + (min_count == max_count ? "" : "-" + std::to_string(max_count)) +
           " numbers, got " + std::to_string(v.size()));
    return v;
  };
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (eq == std::string::npos) fail("expected 'key = value'");
    auto trim = [](std::string s) {
      const auto a = s.find_first_not_of(" \t\r");
      if (a == std::string::npos) return std::string{};
      return s.substr(a, s.find_last_not_of(" \t\r") - a + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key == "scan_id") {
      if (value.empty()) fail("empty scan_id");
      spec.scan_id = value;
    } else if (key == "dims") {
      const auto v = numbers(value, 3, 3);
      for (int a = 0; a < 3; ++a) {
        if (!(v[a] >= 1.0) || v[a] != std::floor(v[a])) fail("dims must be positive integers");
        spec.geometry.dims[a] = std::size_t(v[a]);
      }
    } else if (key == "spacing") {
      const auto v = numbers(value, 3, 3);
      spec.geometry.spacing = {v[0], v[1], v[2]};
    } else if (key == "origin") {
      const auto v = numbers(value, 3, 3);
      spec.geometry.origin = {v[0], v[1], v[2]};
    } else if (key == "background") {
      spec.background_hu = numbers(value, 1, 1)[0];
    } else if (key == "noise_sigma") {
      spec.noise_sigma_hu = numbers(value, 1, 1)[0];
    } else if (key == "lung_margin") {
      spec.lung_margin_mm = numbers(value, 1, 1)[0];
    } else if (key == "seed") {
      const auto v = numbers(value, 1, 1)[0];
      if (v < 0 || v != std::floor(v)) fail("seed must be a non-negative integer");
      spec.seed = static_cast<std::uint64_t>(v);
    } else if (key == "nodule") {
      const auto v = numbers(value, 5, 6);
      spec.nodules.push_back({{v[0], v[1], v[2]}, v[3], v[4], v.size() > 5 ? v[5] : 1.0});
    } else if (key == "vessel") {
      const auto v = numbers(value, 8, 9);
      spec.vessels.push_back({{v[0], v[1], v[2]}, {v[3], v[4], v[5]}, v[6], v[7], v.size() > 8 ? v[8] : 1.0});
    } else {
      fail("unknown key '" + key + "'");
    }
  }
  detail::validate(spec);
  return spec;
}

inline PhantomSpec read_phantom_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return parse_phantom_spec(in, path.string());
}

}  // namespace luna
