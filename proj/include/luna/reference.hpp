#pragma once

// Construction of the evaluation reference from per-reader annotations.
//
// Nodule (>= 3 mm) annotations are clustered per scan: two annotations are
// linked when their centres are closer than the sum of their radii, and
// clusters are the transitive closure of that relation over the original
// annotations. A cluster's centre and diameter are member means; its
// agreement level is the number of distinct readers among its members.
// Clusters reaching the agreement threshold become positives; everything
// else (weaker clusters, small nodules, non-nodules) becomes an irrelevant
// finding.

#include <algorithm>
#include <span>
#include <cstddef>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "luna/cluster.hpp"
#include "luna/csv.hpp"
#include "luna/error.hpp"
#include "luna/image.hpp"

namespace luna {

enum class AnnotationKind { NoduleGeq3, NoduleLt3, NonNodule };

inline std::string_view to_string(AnnotationKind kind) {
  switch (kind) {
    case AnnotationKind::NoduleGeq3: return "nodule_geq3";
    case AnnotationKind::NoduleLt3: return "nodule_lt3";
    case AnnotationKind::NonNodule: return "non_nodule";
  }
  return "";
}

inline std::optional<AnnotationKind> parse_annotation_kind(std::string_view s) {
  if (s == "nodule_geq3") return AnnotationKind::NoduleGeq3;
  if (s == "nodule_lt3") return AnnotationKind::NoduleLt3;
  if (s == "non_nodule") return AnnotationKind::NonNodule;
  return std::nullopt;
}

struct ReaderAnnotation {
  std::string scan_id;
  int reader = 0;
  AnnotationKind kind = AnnotationKind::NoduleGeq3;
  WorldPoint center;
  std::optional<double> diameter_mm;  // present iff kind == NoduleGeq3
};

struct ReferenceNodule {
  std::string scan_id;
  WorldPoint center;
  double diameter_mm = 0.0;
  int agreement = 0;  // 0 when loaded from a file that does not record it
  std::vector<std::size_t> members;

  double radius() const { return diameter_mm / 2.0; }
};

enum class FindingSource { LowAgreementNodule, NoduleLt3, NonNodule, Listed };

struct IrrelevantFinding {
  std::string scan_id;
  WorldPoint center;
  double radius_mm = 0.0;
  FindingSource source = FindingSource::Listed;
};

struct ReferenceStandard {
  std::vector<ReferenceNodule> positives;
  std::vector<IrrelevantFinding> irrelevant;
};

/// Radius given to irrelevant findings that carry no diameter.
inline constexpr double kDefaultIrrelevantRadiusMm = 1.5;

/// Clusters the nodule >= 3 mm annotations of `rows`; other kinds are
/// skipped. Member ids index into `rows`. Output is grouped by scan in order
/// of first appearance.
inline std::vector<ReferenceNodule> merge_reader_annotations(std::span<const ReaderAnnotation> rows) {
  std::vector<std::string> scan_order;
  std::map<std::string, std::vector<std::size_t>> by_scan;
  for (std::size_t n = 0; n < rows.size(); ++n) {
    if (rows[n].kind != AnnotationKind::NoduleGeq3) continue;
    if (!rows[n].diameter_mm || !(*rows[n].diameter_mm > 0.0))
      throw ValidationError("nodule annotation " + std::to_string(n) + " in scan " + rows[n].scan_id +
                            " needs a positive diameter");
    auto [it, inserted] = by_scan.try_emplace(rows[n].scan_id);
    if (inserted) scan_order.push_back(rows[n].scan_id);
    it->second.push_back(n);
  }

  std::vector<ReferenceNodule> out;
  for (const auto& scan : scan_order) {
    const auto& ids = by_scan[scan];
    std::vector<WorldPoint> centers;
    std::vector<double> radii;
    double max_radius = 0.0;
    for (std::size_t id : ids) {
      centers.push_back(rows[id].center);
      radii.push_back(*rows[id].diameter_mm / 2.0);
      max_radius = std::max(max_radius, radii.back());
    }
    const auto groups = cluster_points(centers, 2.0 * max_radius, [&](std::size_t a, std::size_t b) {
      return distance(centers[a], centers[b]) < radii[a] + radii[b];
    });
    for (const auto& group : groups) {
      ReferenceNodule nodule;
      nodule.scan_id = scan;
      nodule.center = centroid(centers, group);
      std::set<int> readers;
      double diameter_sum = 0.0;
      for (std::size_t g : group) {
        diameter_sum += 2.0 * radii[g];
        readers.insert(rows[ids[g]].reader);
        nodule.members.push_back(ids[g]);
      }
      nodule.diameter_mm = diameter_sum / static_cast<double>(group.size());
      nodule.agreement = static_cast<int>(readers.size());
      out.push_back(std::move(nodule));
    }
  }
  return out;
}

inline ReferenceStandard build_reference(std::span<const ReaderAnnotation> rows, int min_agreement = 3,
                                         double default_radius_mm = kDefaultIrrelevantRadiusMm) {
  if (min_agreement < 1 || min_agreement > 4)
    throw ValidationError("minimum agreement must be in 1..4, got " + std::to_string(min_agreement));
  if (!(default_radius_mm > 0.0)) throw ValidationError("default irrelevant radius must be positive");

  ReferenceStandard ref;
  for (auto& nodule : merge_reader_annotations(rows)) {
    if (nodule.agreement >= min_agreement) {
      ref.positives.push_back(std::move(nodule));
    } else {
      ref.irrelevant.push_back(
          {nodule.scan_id, nodule.center, nodule.radius(), FindingSource::LowAgreementNodule});
    }
  }
  for (const auto& row : rows) {
    if (row.kind == AnnotationKind::NoduleGeq3) continue;
    const double radius =
        row.diameter_mm && *row.diameter_mm > 0.0 ? *row.diameter_mm / 2.0 : default_radius_mm;
    ref.irrelevant.push_back({row.scan_id, row.center, radius,
                              row.kind == AnnotationKind::NoduleLt3 ? FindingSource::NoduleLt3
                                                                    : FindingSource::NonNodule});
  }
  return ref;
}

// ---- CSV ------------------------------------------------------------------

/// Per-reader annotations: the annotations schema plus `reader` and `kind`.
/// `diameter_mm` may be empty for diameterless kinds.
inline std::vector<ReaderAnnotation> read_reader_annotations_csv(const std::filesystem::path& path) {
  const CsvTable t = CsvTable::read(path);
  const std::size_t c_id = t.column("seriesuid"), c_x = t.column("coordX"), c_y = t.column("coordY"),
                    c_z = t.column("coordZ"), c_d = t.column("diameter_mm"), c_reader = t.column("reader"),
                    c_kind = t.column("kind");
  std::vector<ReaderAnnotation> rows;
  for (std::size_t r = 0; r < t.row_count(); ++r) {
    ReaderAnnotation a;
    a.scan_id = t.text(r, c_id);
    if (a.scan_id.empty()) t.fail(r, "empty seriesuid");
    a.reader = static_cast<int>(t.integer(r, c_reader));
    const auto kind = parse_annotation_kind(t.text(r, c_kind));
    if (!kind) t.fail(r, "unknown annotation kind '" + t.text(r, c_kind) + "'");
    a.kind = *kind;
    a.center = {t.real(r, c_x), t.real(r, c_y), t.real(r, c_z)};
    if (!t.text(r, c_d).empty()) {
      const double d = t.real(r, c_d);
      if (d > 0.0) a.diameter_mm = d;
    }
    if (a.kind == AnnotationKind::NoduleGeq3 && !a.diameter_mm)
      t.fail(r, "nodule_geq3 annotation needs a positive diameter_mm");
    rows.push_back(std::move(a));
  }
  return rows;
}

inline void write_reader_annotations_csv(const std::filesystem::path& path,
                                         std::span<const ReaderAnnotation> rows) {
  CsvWriter w(path, {"seriesuid", "coordX", "coordY", "coordZ", "diameter_mm", "reader", "kind"});
  for (const auto& a : rows)
    w.row({a.scan_id, format_fixed(a.center.x), format_fixed(a.center.y), format_fixed(a.center.z),
           a.diameter_mm ? format_fixed(*a.diameter_mm) : std::string{}, std::to_string(a.reader),
           std::string(to_string(a.kind))});
  w.close();
}

/// Positives in the annotations schema.
inline void write_positives_csv(const std::filesystem::path& path, std::span<const ReferenceNodule> nodules) {
  CsvWriter w(path, {"seriesuid", "coordX", "coordY", "coordZ", "diameter_mm"});
  for (const auto& n : nodules)
    w.row({n.scan_id, format_fixed(n.center.x), format_fixed(n.center.y), format_fixed(n.center.z),
           format_fixed(n.diameter_mm)});
  w.close();
}

/// Every merged cluster with its agreement level and member count.
inline void write_merged_csv(const std::filesystem::path& path, std::span<const ReferenceNodule> nodules) {
  CsvWriter w(path, {"seriesuid", "coordX", "coordY", "coordZ", "diameter_mm", "agreement", "members"});
  for (const auto& n : nodules)
    w.row({n.scan_id, format_fixed(n.center.x), format_fixed(n.center.y), format_fixed(n.center.z),
           format_fixed(n.diameter_mm), std::to_string(n.agreement), std::to_string(n.members.size())});
  w.close();
}

/// Irrelevant findings in the annotations schema (diameter = 2 * radius).
inline void write_irrelevant_csv(const std::filesystem::path& path,
                                 std::span<const IrrelevantFinding> findings) {
  CsvWriter w(path, {"seriesuid", "coordX", "coordY", "coordZ", "diameter_mm"});
  for (const auto& f : findings)
    w.row({f.scan_id, format_fixed(f.center.x), format_fixed(f.center.y), format_fixed(f.center.z),
           format_fixed(2.0 * f.radius_mm)});
  w.close();
}

/// Reads positives from the annotations schema. An optional `agreement`
/// column is honoured.
inline std::vector<ReferenceNodule> read_positives_csv(const std::filesystem::path& path) {
  const CsvTable t = CsvTable::read(path);
  const auto c_agreement = t.find_column("agreement");
  const auto rows = read_marks_csv(path, MarkKind::Annotations);
  std::vector<ReferenceNodule> out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (!(*rows[r].diameter_mm > 0.0)) t.fail(r, "reference nodule needs a positive diameter_mm");
    ReferenceNodule n;
    n.scan_id = rows[r].scan_id;
    n.center = rows[r].center;
    n.diameter_mm = *rows[r].diameter_mm;
    if (c_agreement) n.agreement = static_cast<int>(t.integer(r, *c_agreement));
    out.push_back(std::move(n));
  }
  return out;
}

/// Reads irrelevant findings from the annotations schema; rows with a
/// non-positive diameter get `default_radius_mm`.
inline std::vector<IrrelevantFinding> read_irrelevant_csv(const std::filesystem::path& path,
                                                          double default_radius_mm = kDefaultIrrelevantRadiusMm) {
  std::vector<IrrelevantFinding> out;
  for (const auto& row : read_marks_csv(path, MarkKind::Annotations)) {
    const double d = *row.diameter_mm;
    out.push_back({row.scan_id, row.center, d > 0.0 ? d / 2.0 : default_radius_mm, FindingSource::Listed});
  }
  return out;
}

}  // namespace luna
