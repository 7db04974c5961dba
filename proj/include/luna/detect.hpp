#pragma once

// Classical nodule-candidate detectors.
//
//   isicad    shape index / curvedness seeds, hysteresis growth, recursive
//             merging of nearby clusters, centre of mass per cluster
//   subsolid  [-750, -300] HU band inside the lung mask, spherical opening,
//             connected components of at least 34 mm^3
//   large     >= -300 HU inside the lung mask, closing + opening, components
//             with equivalent diameter (6V/pi)^(1/3) in [8, 40] mm
//
// Threshold defaults of isicad are calibration knobs, not published values.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "luna/cluster.hpp"
#include "luna/csv.hpp"
#include "luna/error.hpp"
#include "luna/filters.hpp"
#include "luna/image.hpp"
#include "luna/morphology.hpp"

namespace luna {

struct Candidate {
  std::string scan_id;
  WorldPoint center;
  std::string detector;
  std::optional<std::size_t> cluster_voxels;
};

namespace detail {

inline void require_same_grid(const Geometry& a, const Geometry& b) {
  if (!same_grid(a, b)) throw ValidationError("lung mask grid does not match the volume grid");
}

inline bool inside_mask(const Mask* mask, const WorldPoint& p) {
  if (!mask) return true;
  const auto v = mask->geometry().nearest_voxel(p);
  return v && mask->at(*v);
}

/// Candidates from labelled components passing `keep`, centroid inside mask.
template <class Keep>
std::vector<Candidate> component_candidates(const Labeling& labeling, const Geometry& g, const Mask* mask,
                                            const std::string& tag, Keep&& keep) {
  std::vector<Candidate> out;
  for (const auto& c : labeling.components) {
    if (!keep(c)) continue;
    const WorldPoint center = g.voxel_to_world(c.centroid);
    if (!inside_mask(mask, center)) continue;
    out.push_back({{}, center, tag, c.voxels});
  }
  return out;
}

}  // namespace detail

struct IsicadParams {
  double target_spacing_mm = 1.0;
  double sigma_voxels = 1.0;
  double seed_si_min = 0.9;
  double seed_cv_min = 30.0;
  double seed_cv_max = std::numeric_limits<double>::infinity();
  double grow_si_min = 0.8;
  double grow_cv_min = 15.0;
  double merge_radius_voxels = 3.0;
  std::size_t min_cluster_voxels = 1;
};

/// Merges clusters (labels 1..count in `labels`) whose closest members are
/// less than `radius` voxels apart, repeatedly until no pair qualifies.
/// Returns, per input label, the merged group id (0-based, by first label).
inline std::vector<std::size_t> merge_nearby_clusters(const Image<std::int32_t>& labels, std::size_t count,
                                                      double radius) {
  DisjointSets sets(count);
  const Geometry& g = labels.geometry();
  const auto r = static_cast<std::ptrdiff_t>(std::ceil(radius));
  std::vector<Offset3> window;
  for (std::ptrdiff_t k = -r; k <= r; ++k)
    for (std::ptrdiff_t j = -r; j <= r; ++j)
      for (std::ptrdiff_t i = -r; i <= r; ++i)
        if (double(i * i + j * j + k * k) < radius * radius) window.push_back({i, j, k});
  const auto nx = std::ptrdiff_t(g.dims[0]), ny = std::ptrdiff_t(g.dims[1]), nz = std::ptrdiff_t(g.dims[2]);
  for (std::size_t n = 0; n < labels.size(); ++n) {
    const std::int32_t a = labels[n];
    if (a <= 0) continue;
    const VoxelIndex v = g.index_of(n);
    for (const auto& d : window) {
      const std::ptrdiff_t i = std::ptrdiff_t(v.i) + d.di, j = std::ptrdiff_t(v.j) + d.dj,
                           k = std::ptrdiff_t(v.k) + d.dk;
      if (i < 0 || j < 0 || k < 0 || i >= nx || j >= ny || k >= nz) continue;
      const std::int32_t b = labels[g.offset(std::size_t(i), std::size_t(j), std::size_t(k))];
      if (b > 0 && b != a) sets.unite(std::size_t(a - 1), std::size_t(b - 1));
    }
  }
  std::vector<std::size_t> group_of(count);
  const auto groups = sets.groups();
  for (std::size_t g_id = 0; g_id < groups.size(); ++g_id)
    for (std::size_t member : groups[g_id]) group_of[member] = g_id;
  return group_of;
}

/// Shape-index detector on an already isotropic volume.
template <class T>
std::vector<Candidate> detect_isicad_isotropic(const Image<T>& volume, const IsicadParams& p,
                                               const Mask* mask = nullptr) {
  if (mask) detail::require_same_grid(volume.geometry(), mask->geometry());
  const Geometry& g = volume.geometry();
  const ShapeIndexField f = shape_index(volume, p.sigma_voxels);

  Mask grow(g), seeds(g);
  for (std::size_t n = 0; n < volume.size(); ++n) {
    if (mask && !(*mask)[n]) continue;
    const double si = f.shape_index[n], cv = f.curvedness[n];
    if (f.undefined[n]) continue;
    grow[n] = si >= p.grow_si_min && cv >= p.grow_cv_min;
    seeds[n] = si >= p.seed_si_min && cv >= p.seed_cv_min && cv <= p.seed_cv_max;
  }
  // Grown regions are the components of the relaxed mask that contain a seed.
  for (std::size_t n = 0; n < volume.size(); ++n)
    if (seeds[n]) grow[n] = 1;
  Labeling regions = label_components(grow);
  std::vector<char> seeded(regions.components.size(), 0);
  for (std::size_t n = 0; n < volume.size(); ++n)
    if (seeds[n]) seeded[std::size_t(regions.labels[n] - 1)] = 1;

  std::vector<std::int32_t> relabel(regions.components.size() + 1, 0);
  std::size_t kept = 0;
  for (std::size_t c = 0; c < regions.components.size(); ++c)
    if (seeded[c]) relabel[c + 1] = static_cast<std::int32_t>(++kept);
  for (std::size_t n = 0; n < volume.size(); ++n) regions.labels[n] = relabel[std::size_t(regions.labels[n])];

  const auto group_of = merge_nearby_clusters(regions.labels, kept, p.merge_radius_voxels);
  std::size_t groups = 0;
  for (auto gid : group_of) groups = std::max(groups, gid + 1);
  std::vector<double> si(groups, 0.0), sj(groups, 0.0), sk(groups, 0.0);
  std::vector<std::size_t> count(groups, 0);
  for (std::size_t n = 0; n < volume.size(); ++n) {
    if (regions.labels[n] <= 0) continue;
    const std::size_t gid = group_of[std::size_t(regions.labels[n] - 1)];
    const VoxelIndex v = g.index_of(n);
    si[gid] += double(v.i);
    sj[gid] += double(v.j);
    sk[gid] += double(v.k);
    ++count[gid];
  }
  std::vector<Candidate> out;
  for (std::size_t gid = 0; gid < groups; ++gid) {
    if (count[gid] < p.min_cluster_voxels) continue;
    const double c = double(count[gid]);
    const WorldPoint center = g.voxel_to_world(VoxelCoord{si[gid] / c, sj[gid] / c, sk[gid] / c});
    if (!detail::inside_mask(mask, center)) continue;
    out.push_back({{}, center, "isicad", count[gid]});
  }
  return out;
}

/// Shape-index detector: resamples to isotropic spacing first.
template <class T>
std::vector<Candidate> detect_isicad(const Image<T>& volume, const IsicadParams& p = {},
                                     const Mask* mask = nullptr) {
  if (mask) detail::require_same_grid(volume.geometry(), mask->geometry());
  const Image<float> iso = resample_isotropic(volume, p.target_spacing_mm);
  std::optional<Mask> iso_mask;
  if (mask) iso_mask = resample_mask(*mask, iso.geometry());
  auto out = detect_isicad_isotropic(iso, p, iso_mask ? &*iso_mask : nullptr);
  std::erase_if(out, [&](const Candidate& c) { return !detail::inside_mask(mask, c.center); });
  return out;
}

struct SubsolidParams {
  double lower_hu = -750.0;
  double upper_hu = -300.0;
  double element_diameter_voxels = 3.0;
  double min_volume_mm3 = 34.0;
};

template <class T>
std::vector<Candidate> detect_subsolid(const Image<T>& volume, const Mask* mask, const SubsolidParams& p = {}) {
  if (mask) detail::require_same_grid(volume.geometry(), mask->geometry());
  const Geometry& g = volume.geometry();
  Mask band(g);
  for (std::size_t n = 0; n < volume.size(); ++n) {
    const double hu = static_cast<double>(volume[n]);
    band[n] = hu >= p.lower_hu && hu <= p.upper_hu && (!mask || (*mask)[n]);
  }
  const Mask opened = open(band, ball_element(p.element_diameter_voxels / 2.0));
  const Labeling labeling = label_components(opened);
  return detail::component_candidates(labeling, g, mask, "subsolid", [&](const Component& c) {
    return double(c.voxels) * g.voxel_volume() >= p.min_volume_mm3;
  });
}

struct LargeParams {
  double threshold_hu = -300.0;
  double closing_radius_voxels = 1.0;  // 0 disables
  double opening_radius_voxels = 1.0;  // 0 disables
  double min_diameter_mm = 8.0;
  double max_diameter_mm = 40.0;
};

inline double equivalent_diameter(double volume_mm3) {
  return std::cbrt(6.0 * volume_mm3 / std::numbers::pi);
}

template <class T>
std::vector<Candidate> detect_large(const Image<T>& volume, const Mask* mask, const LargeParams& p = {}) {
  if (mask) detail::require_same_grid(volume.geometry(), mask->geometry());
  const Geometry& g = volume.geometry();
  Mask dense(g);
  for (std::size_t n = 0; n < volume.size(); ++n)
    dense[n] = static_cast<double>(volume[n]) >= p.threshold_hu && (!mask || (*mask)[n]);
  if (p.closing_radius_voxels > 0.0) dense = close(dense, ball_element(p.closing_radius_voxels));
  if (p.opening_radius_voxels > 0.0) dense = open(dense, ball_element(p.opening_radius_voxels));
  if (mask)
    for (std::size_t n = 0; n < dense.size(); ++n) dense[n] = dense[n] && (*mask)[n];
  const Labeling labeling = label_components(dense);
  return detail::component_candidates(labeling, g, mask, "large", [&](const Component& c) {
    const double d = equivalent_diameter(double(c.voxels) * g.voxel_volume());
    return d >= p.min_diameter_mm && d <= p.max_diameter_mm;
  });
}

// ---- CSV ------------------------------------------------------------------

/// Candidates schema with a trailing `detector` column.
inline void write_candidates_csv(const std::filesystem::path& path, std::span<const Candidate> candidates) {
  CsvWriter w(path, {"seriesuid", "coordX", "coordY", "coordZ", "detector"});
  for (const auto& c : candidates)
    w.row({c.scan_id, format_fixed(c.center.x), format_fixed(c.center.y), format_fixed(c.center.z), c.detector});
  w.close();
}

inline std::vector<Candidate> read_candidates_csv(const std::filesystem::path& path) {
  std::vector<Candidate> out;
  for (auto& row : read_marks_csv(path, MarkKind::Candidates))
    out.push_back({std::move(row.scan_id), row.center, std::move(row.detector), std::nullopt});
  return out;
}

}  // namespace luna
