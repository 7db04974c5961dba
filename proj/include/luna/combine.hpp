#pragma once

// Merging candidate lists from several detectors and the all-subsets
// sensitivity sweep.

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "luna/cluster.hpp"
#include "luna/csv.hpp"
#include "luna/detect.hpp"
#include "luna/error.hpp"
#include "luna/morphology.hpp"
#include "luna/parallel.hpp"
#include "luna/reference.hpp"

namespace luna {

struct CandidateList {
  std::string source;
  std::vector<Candidate> candidates;
};

/// Per-scan distance (mm) to the lung mask, used for the slack border.
class LungRegions {
 public:
  void add(const std::string& scan_id, const Mask& mask) { distance_.insert_or_assign(scan_id, distance_to_mask(mask)); }

  bool empty() const { return distance_.empty(); }

  /// True when the scan has no mask, or the point lies inside the scan's
  /// grid within `slack_mm` of the mask.
  bool admits(const std::string& scan_id, const WorldPoint& p, double slack_mm) const {
    const auto it = distance_.find(scan_id);
    if (it == distance_.end()) return true;
    const auto v = it->second.geometry().nearest_voxel(p);
    return v && it->second.at(*v) <= slack_mm;
  }

 private:
  std::unordered_map<std::string, Image<double>> distance_;
};

struct MergeOptions {
  double merge_distance_mm = 5.0;
  double slack_mm = 10.0;
};

/// Concatenates the lists, clusters each scan's candidates transitively under
/// distance < merge distance, and replaces each cluster by its centroid.
/// Candidates beyond the slack border of the scan's lung mask are dropped
/// before clustering. Output scans appear in order of first appearance.
inline CandidateList merge_candidates(std::span<const CandidateList> lists, const MergeOptions& options = {},
                                      const LungRegions* regions = nullptr) {
  if (!(options.merge_distance_mm > 0.0)) throw ValidationError("merge distance must be positive");
  if (!(options.slack_mm >= 0.0)) throw ValidationError("slack must be non-negative");

  std::vector<std::string> scan_order;
  std::unordered_map<std::string, std::vector<WorldPoint>> by_scan;
  std::string name;
  for (const auto& list : lists) {
    name += (name.empty() ? "" : "+") + list.source;
    for (const auto& c : list.candidates) {
      if (regions && !regions->admits(c.scan_id, c.center, options.slack_mm)) continue;
      auto [it, inserted] = by_scan.try_emplace(c.scan_id);
      if (inserted) scan_order.push_back(c.scan_id);
      it->second.push_back(c.center);
    }
  }

  std::vector<std::vector<Candidate>> merged(scan_order.size());
  parallel_for(scan_order.size(), [&](std::size_t s) {
    const auto& points = by_scan.at(scan_order[s]);
    const double d = options.merge_distance_mm;
    const auto groups = cluster_points(points, d, [&](std::size_t a, std::size_t b) {
      return squared_distance(points[a], points[b]) < d * d;
    });
    for (const auto& group : groups)
      merged[s].push_back({scan_order[s], centroid(points, group), "merged", group.size()});
  });

  CandidateList out{name, {}};
  for (auto& scan : merged)
    for (auto& c : scan) out.candidates.push_back(std::move(c));
  return out;
}

/// Number of positives with at least one candidate within their radius.
inline std::size_t count_detected(std::span<const Candidate> candidates, std::span<const ReferenceNodule> positives) {
  std::unordered_map<std::string, std::vector<const Candidate*>> by_scan;
  for (const auto& c : candidates) by_scan[c.scan_id].push_back(&c);
  std::size_t detected = 0;
  for (const auto& n : positives) {
    const auto it = by_scan.find(n.scan_id);
    if (it == by_scan.end()) continue;
    const double r2 = n.radius() * n.radius();
    for (const Candidate* c : it->second)
      if (squared_distance(c->center, n.center) <= r2) {
        ++detected;
        break;
      }
  }
  return detected;
}

struct CombinationReport {
  std::uint32_t sources = 0;  // bit s set when list s is included
  std::vector<std::string> source_names;
  double sensitivity = 0.0;
  std::size_t detected = 0;
  std::size_t total_candidates = 0;
  double average_per_scan = 0.0;
  double best_single_sensitivity = 0.0;  // among included sources
  double difference = 0.0;               // sensitivity - best single; 0 for singletons

  bool single() const { return std::popcount(sources) == 1; }
};

/// Evaluates every non-empty subset of `lists`, ordered by subset size then
/// by bitmask (lowest list index first).
inline std::vector<CombinationReport> combination_sweep(std::span<const CandidateList> lists,
                                                        std::span<const ReferenceNodule> positives,
                                                        std::size_t scan_count, const MergeOptions& options = {},
                                                        const LungRegions* regions = nullptr) {
  if (lists.empty() || lists.size() > 10) throw ValidationError("combination sweep needs 1..10 candidate lists");
  if (scan_count < 1) throw ValidationError("combination sweep needs at least one scan");
  if (positives.empty()) throw ValidationError("combination sweep needs at least one reference nodule");

  std::vector<std::uint32_t> subsets;
  for (std::uint32_t m = 1; m < (1u << lists.size()); ++m) subsets.push_back(m);
  std::stable_sort(subsets.begin(), subsets.end(),
                   [](std::uint32_t a, std::uint32_t b) { return std::popcount(a) < std::popcount(b); });

  std::vector<CombinationReport> out(subsets.size());
  parallel_for(subsets.size(), [&](std::size_t n) {
    CombinationReport& r = out[n];
    r.sources = subsets[n];
    std::vector<CandidateList> chosen;
    for (std::size_t s = 0; s < lists.size(); ++s)
      if (r.sources & (1u << s)) {
        chosen.push_back(lists[s]);
        r.source_names.push_back(lists[s].source);
      }
    const CandidateList merged = merge_candidates(chosen, options, regions);
    r.total_candidates = merged.candidates.size();
    r.detected = count_detected(merged.candidates, positives);
    r.sensitivity = double(r.detected) / double(positives.size());
    r.average_per_scan = double(r.total_candidates) / double(scan_count);
  });

  std::vector<double> single(lists.size(), 0.0);
  for (const auto& r : out)
    if (r.single()) single[std::size_t(std::countr_zero(r.sources))] = r.sensitivity;
  for (auto& r : out) {
    for (std::size_t s = 0; s < lists.size(); ++s)
      if (r.sources & (1u << s)) r.best_single_sensitivity = std::max(r.best_single_sensitivity, single[s]);
    r.difference = r.single() ? 0.0 : r.sensitivity - r.best_single_sensitivity;
  }
  return out;
}

/// Membership string such as "10110": character s is '1' when list s is in.
inline std::string membership(std::uint32_t sources, std::size_t list_count) {
  std::string s(list_count, '0');
  for (std::size_t n = 0; n < list_count; ++n)
    if (sources & (1u << n)) s[n] = '1';
  return s;
}

inline void write_combination_csv(const std::filesystem::path& path, std::span<const CombinationReport> reports,
                                  std::size_t list_count) {
  CsvWriter w(path, {"combination", "systems", "sensitivity", "best_single_sensitivity", "difference",
                     "detected", "total_candidates", "average_candidates_per_scan"});
  for (const auto& r : reports) {
    std::string names;
    for (const auto& s : r.source_names) names += (names.empty() ? "" : "+") + s;
    w.row({membership(r.sources, list_count), names, format_fixed(r.sensitivity, 3),
           r.single() ? std::string{} : format_fixed(r.best_single_sensitivity, 3),
           r.single() ? std::string{} : format_fixed(r.difference, 3), std::to_string(r.detected),
           std::to_string(r.total_candidates), format_fixed(r.average_per_scan, 1)});
  }
  w.close();
}

}  // namespace luna
