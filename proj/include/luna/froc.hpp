#pragma once

// FROC scoring of CAD marks against a reference standard.
//
// Pipeline: cap_marks -> assign_hits -> froc -> cpm, with bootstrap_band and
// compare_systems resampling scans on top of the per-scan hit assignment.
//
// Hit rule: a mark hits a nodule when its world distance to the nodule
// centre is <= the nodule radius. Each nodule keeps its highest-scoring hit
// (true positive); other marks hitting that nodule are ignored. Marks that
// hit no nodule but fall within an irrelevant finding are ignored. The rest
// are false positives.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "luna/error.hpp"
#include "luna/image.hpp"
#include "luna/parallel.hpp"
#include "luna/random.hpp"
#include "luna/reference.hpp"

namespace luna {

struct CadMark {
  std::string scan_id;
  WorldPoint center;
  double score = 0.0;
};

enum class MarkLabel { TruePositive, FalsePositive, Ignored };

inline constexpr std::size_t kDefaultMarkLimit = 100;
inline constexpr std::array<double, 7> kCpmRates{0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0};

/// Keeps, per scan, the `limit` highest-scoring marks. Among equal scores
/// the earlier mark wins. Survivors keep their input order.
inline std::vector<CadMark> cap_marks(std::span<const CadMark> marks, std::size_t limit = kDefaultMarkLimit) {
  if (limit < 1) throw ValidationError("mark limit must be at least 1");
  std::unordered_map<std::string, std::vector<std::size_t>> by_scan;
  for (std::size_t n = 0; n < marks.size(); ++n) by_scan[marks[n].scan_id].push_back(n);

  std::vector<char> keep(marks.size(), 0);
  for (auto& [scan, ids] : by_scan) {
    if (ids.size() > limit) {
      std::stable_sort(ids.begin(), ids.end(),
                       [&](std::size_t a, std::size_t b) { return marks[a].score > marks[b].score; });
      ids.resize(limit);
    }
    for (std::size_t id : ids) keep[id] = 1;
  }
  std::vector<CadMark> out;
  out.reserve(marks.size());
  for (std::size_t n = 0; n < marks.size(); ++n)
    if (keep[n]) out.push_back(marks[n]);
  return out;
}

struct HitOptions {
  /// When false (default) a mark inside several nodules counts for the one
  /// with the smallest distance/radius ratio only. When true it may be the
  /// selected hit of every nodule it lies in.
  bool mark_may_hit_several_nodules = false;
};

struct HitAssignment {
  std::vector<MarkLabel> labels;                     // per mark
  std::vector<double> scores;                        // per mark
  std::vector<std::optional<std::size_t>> matched;   // per nodule: index of its TP mark

  std::size_t count(MarkLabel label) const {
    return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), label));
  }
  std::size_t nodule_count() const { return matched.size(); }
};

inline HitAssignment assign_hits(std::span<const CadMark> marks, std::span<const ReferenceNodule> positives,
                                 std::span<const IrrelevantFinding> irrelevant, const HitOptions& options = {}) {
  std::unordered_map<std::string, std::vector<std::size_t>> nodules_in, findings_in;
  for (std::size_t n = 0; n < positives.size(); ++n) nodules_in[positives[n].scan_id].push_back(n);
  for (std::size_t n = 0; n < irrelevant.size(); ++n) findings_in[irrelevant[n].scan_id].push_back(n);

  HitAssignment out;
  out.labels.assign(marks.size(), MarkLabel::FalsePositive);
  out.scores.resize(marks.size());
  out.matched.assign(positives.size(), std::nullopt);

  // Each nodule keeps its best-scoring hit; ties go to the earlier mark.
  auto offer = [&](std::size_t nodule, std::size_t mark) {
    auto& best = out.matched[nodule];
    if (!best || marks[mark].score > marks[*best].score) best = mark;
  };

  std::vector<char> hits_something(marks.size(), 0);
  for (std::size_t m = 0; m < marks.size(); ++m) {
    if (!std::isfinite(marks[m].score)) throw ValidationError("CAD mark score must be finite");
    out.scores[m] = marks[m].score;
    const auto it = nodules_in.find(marks[m].scan_id);
    if (it == nodules_in.end()) continue;
    std::optional<std::size_t> nearest;
    double nearest_ratio = std::numeric_limits<double>::infinity();
    for (std::size_t n : it->second) {
      const double d = distance(marks[m].center, positives[n].center);
      const double r = positives[n].radius();
      if (d > r) continue;
      hits_something[m] = 1;
      if (options.mark_may_hit_several_nodules) {
        offer(n, m);
      } else if (const double ratio = r > 0.0 ? d / r : 0.0; ratio < nearest_ratio) {
        nearest_ratio = ratio;
        nearest = n;
      }
    }
    if (nearest) offer(*nearest, m);
  }

  for (std::size_t m = 0; m < marks.size(); ++m) {
    if (hits_something[m]) {
      out.labels[m] = MarkLabel::Ignored;  // provisional: duplicate hit
      continue;
    }
    const auto it = findings_in.find(marks[m].scan_id);
    if (it == findings_in.end()) continue;
    for (std::size_t f : it->second)
      if (distance(marks[m].center, irrelevant[f].center) <= irrelevant[f].radius_mm) {
        out.labels[m] = MarkLabel::Ignored;
        break;
      }
  }
  for (const auto& best : out.matched)
    if (best) out.labels[*best] = MarkLabel::TruePositive;
  return out;
}

struct OperatingPoint {
  double threshold = 0.0;  // marks with score >= threshold are counted
  double fps_per_scan = 0.0;
  double sensitivity = 0.0;

  friend bool operator==(const OperatingPoint&, const OperatingPoint&) = default;
};

/// Operating points ordered by descending threshold, so both coordinates
/// are non-decreasing along the vector.
struct FrocCurve {
  std::vector<OperatingPoint> points;
  std::size_t scan_count = 0;
  std::size_t nodule_count = 0;
  std::size_t true_positives = 0;   // at the lowest threshold
  std::size_t false_positives = 0;  // at the lowest threshold
};

namespace detail {

struct ScoredEvent {
  double score;
  bool true_positive;
  double weight;
};

/// Sweeps events sorted by descending score and emits one point per
/// distinct score. Returns {(0,0)} when there are no events.
inline std::vector<OperatingPoint> sweep(std::span<const ScoredEvent> sorted, double nodules, double scans) {
  std::vector<OperatingPoint> points;
  double tp = 0.0, fp = 0.0;
  for (std::size_t n = 0; n < sorted.size();) {
    const double t = sorted[n].score;
    for (; n < sorted.size() && sorted[n].score == t; ++n) (sorted[n].true_positive ? tp : fp) += sorted[n].weight;
    points.push_back({t, fp / scans, tp / nodules});
  }
  if (points.empty()) points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  return points;
}

}  // namespace detail

inline FrocCurve froc(const HitAssignment& assignment, std::size_t scan_count) {
  if (scan_count < 1) throw ValidationError("FROC needs at least one scan");
  if (assignment.nodule_count() == 0) throw ValidationError("FROC needs at least one reference nodule");

  std::vector<detail::ScoredEvent> events;
  FrocCurve curve;
  curve.scan_count = scan_count;
  curve.nodule_count = assignment.nodule_count();
  for (const auto& best : assignment.matched)
    if (best) {
      events.push_back({assignment.scores[*best], true, 1.0});
      ++curve.true_positives;
    }
  for (std::size_t m = 0; m < assignment.labels.size(); ++m)
    if (assignment.labels[m] == MarkLabel::FalsePositive) {
      events.push_back({assignment.scores[m], false, 1.0});
      ++curve.false_positives;
    }
  std::stable_sort(events.begin(), events.end(),
                   [](const auto& a, const auto& b) { return a.score > b.score; });
  curve.points = detail::sweep(events, static_cast<double>(curve.nodule_count), static_cast<double>(scan_count));
  return curve;
}

/// Sensitivity at an arbitrary FP rate. Each distinct FP rate on the curve
/// is represented by its highest sensitivity; between those the curve is
/// linear in FPs/scan; outside the achieved range the nearest end is held.
inline double sensitivity_at(std::span<const OperatingPoint> points, double fps_per_scan) {
  if (points.empty()) throw ValidationError("empty FROC curve");
  // points are sorted with non-decreasing fps; keep the last of each run.
  auto knot = [&](std::size_t n) { return points[n]; };
  std::size_t prev = SIZE_MAX;
  for (std::size_t n = 0; n < points.size(); ++n) {
    if (n + 1 < points.size() && points[n + 1].fps_per_scan == points[n].fps_per_scan) continue;
    const OperatingPoint p = knot(n);
    if (fps_per_scan <= p.fps_per_scan) {
      if (prev == SIZE_MAX || fps_per_scan == p.fps_per_scan) return p.sensitivity;
      const OperatingPoint q = knot(prev);
      const double t = (fps_per_scan - q.fps_per_scan) / (p.fps_per_scan - q.fps_per_scan);
      return q.sensitivity + t * (p.sensitivity - q.sensitivity);
    }
    prev = n;
  }
  return points.back().sensitivity;
}

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

struct CpmReport {
  std::vector<double> rates;
  std::vector<double> sensitivities;
  double cpm = 0.0;
  std::optional<std::vector<Interval>> sensitivity_bands;  // 95% per rate
  std::optional<Interval> cpm_band;                        // 95%
  std::optional<double> p_value;                           // vs a reference system
};

inline double mean_sensitivity(std::span<const double> sensitivities) {
  if (sensitivities.empty()) throw ValidationError("no sensitivities to average");
  return std::accumulate(sensitivities.begin(), sensitivities.end(), 0.0) /
         static_cast<double>(sensitivities.size());
}

inline CpmReport cpm(const FrocCurve& curve, std::span<const double> rates = kCpmRates) {
  CpmReport report;
  report.rates.assign(rates.begin(), rates.end());
  for (double rate : rates) report.sensitivities.push_back(sensitivity_at(curve.points, rate));
  report.cpm = mean_sensitivity(report.sensitivities);
  return report;
}

// ---- Bootstrap ------------------------------------------------------------

/// Marks and nodules of an evaluation, grouped by scan, ready for resampling.
class ScanOutcomes {
 public:
  ScanOutcomes(std::span<const CadMark> capped_marks, std::span<const ReferenceNodule> positives,
               std::span<const IrrelevantFinding> irrelevant, std::span<const std::string> scan_ids,
               const HitOptions& options = {}) {
    std::unordered_map<std::string, std::size_t> index;
    for (std::size_t s = 0; s < scan_ids.size(); ++s)
      if (!index.emplace(scan_ids[s], s).second) throw ValidationError("duplicate scan id " + scan_ids[s]);
    auto scan_of = [&](const std::string& id, const char* what) {
      const auto it = index.find(id);
      if (it == index.end()) throw ValidationError(std::string(what) + " references scan " + id + " outside the scan set");
      return it->second;
    };
    nodules_.assign(scan_ids.size(), 0);
    for (const auto& n : positives) ++nodules_[scan_of(n.scan_id, "reference nodule")];
    for (const auto& m : capped_marks) scan_of(m.scan_id, "CAD mark");

    const HitAssignment a = assign_hits(capped_marks, positives, irrelevant, options);
    for (const auto& best : a.matched)
      if (best) events_.push_back({a.scores[*best], true, scan_of(capped_marks[*best].scan_id, "")});
    for (std::size_t m = 0; m < a.labels.size(); ++m)
      if (a.labels[m] == MarkLabel::FalsePositive)
        events_.push_back({a.scores[m], false, scan_of(capped_marks[m].scan_id, "")});
    std::stable_sort(events_.begin(), events_.end(),
                     [](const auto& x, const auto& y) { return x.score > y.score; });
  }

  std::size_t scan_count() const { return nodules_.size(); }

  /// Operating points for a resample where scan s appears weight[s] times.
  /// Empty when the resample contains no nodules.
  std::vector<OperatingPoint> curve(std::span<const std::uint32_t> weight) const {
    double nodules = 0.0, scans = 0.0;
    for (std::size_t s = 0; s < weight.size(); ++s) {
      nodules += static_cast<double>(weight[s]) * static_cast<double>(nodules_[s]);
      scans += weight[s];
    }
    if (nodules == 0.0) return {};
    std::vector<detail::ScoredEvent> events;
    events.reserve(events_.size());
    for (const auto& e : events_)
      if (weight[e.scan]) events.push_back({e.score, e.true_positive, static_cast<double>(weight[e.scan])});
    return detail::sweep(events, nodules, scans);
  }

 private:
  struct Event {
    double score;
    bool true_positive;
    std::size_t scan;
  };
  std::vector<std::size_t> nodules_;
  std::vector<Event> events_;
};

/// Linear-interpolated percentile (q in [0,1]) of a sample.
inline double percentile(std::vector<double> sample, double q) {
  if (sample.empty()) throw ValidationError("percentile of an empty sample");
  std::sort(sample.begin(), sample.end());
  const double pos = q * static_cast<double>(sample.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sample.size() - 1);
  return sample[lo] + (pos - static_cast<double>(lo)) * (sample[hi] - sample[lo]);
}

inline std::vector<std::uint32_t> resample_weights(std::size_t scans, std::uint64_t seed, std::uint64_t replicate) {
  auto rng = make_rng(seed, "bootstrap", replicate);
  std::uniform_int_distribution<std::size_t> pick(0, scans - 1);
  std::vector<std::uint32_t> weight(scans, 0);
  for (std::size_t n = 0; n < scans; ++n) ++weight[pick(rng)];
  return weight;
}

struct BootstrapBand {
  std::vector<double> rates;
  std::vector<Interval> sensitivity;  // per rate
  Interval cpm;
  std::vector<double> curve_rates;     // dense FP grid for plotting
  std::vector<Interval> curve;         // per curve rate
  std::size_t replicates_used = 0;     // resamples without nodules are skipped
};

inline constexpr std::size_t kDefaultBootstraps = 1000;

/// Percentile bootstrap over scans. Replicate r draws its scans from stream
/// ("bootstrap", r) of `seed`, so the result does not depend on threading.
inline BootstrapBand bootstrap_band(const ScanOutcomes& outcomes, std::size_t n_boot, std::uint64_t seed,
                                    std::span<const double> rates = kCpmRates, std::size_t curve_samples = 49) {
  if (n_boot < 1) throw ValidationError("bootstrap needs at least one replicate");
  if (outcomes.scan_count() == 0) throw ValidationError("bootstrap needs at least one scan");

  BootstrapBand band;
  band.rates.assign(rates.begin(), rates.end());
  for (std::size_t n = 0; n < curve_samples; ++n)
    band.curve_rates.push_back(0.125 * std::pow(64.0, curve_samples > 1 ? double(n) / double(curve_samples - 1) : 0.0));

  const std::size_t columns = rates.size() + 1 + band.curve_rates.size();
  std::vector<std::vector<double>> per_replicate(n_boot);
  parallel_for(n_boot, [&](std::size_t r) {
    const auto points = outcomes.curve(resample_weights(outcomes.scan_count(), seed, r));
    if (points.empty()) return;
    std::vector<double> row;
    row.reserve(columns);
    for (double rate : rates) row.push_back(sensitivity_at(points, rate));
    row.push_back(mean_sensitivity(row));
    for (double rate : band.curve_rates) row.push_back(sensitivity_at(points, rate));
    per_replicate[r] = std::move(row);
  });

  std::vector<std::vector<double>> samples(columns);
  for (const auto& row : per_replicate) {
    if (row.empty()) continue;
    ++band.replicates_used;
    for (std::size_t c = 0; c < columns; ++c) samples[c].push_back(row[c]);
  }
  if (band.replicates_used == 0) throw ValidationError("every bootstrap resample was free of nodules");

  auto interval = [&](std::size_t c) { return Interval{percentile(samples[c], 0.025), percentile(samples[c], 0.975)}; };
  for (std::size_t c = 0; c < rates.size(); ++c) band.sensitivity.push_back(interval(c));
  band.cpm = interval(rates.size());
  for (std::size_t c = 0; c < band.curve_rates.size(); ++c) band.curve.push_back(interval(rates.size() + 1 + c));
  return band;
}

/// Paired bootstrap p-value for CPM(A) vs CPM(B): every replicate resamples
/// the scans once and scores both systems on it.
/// p = 2 * min(P(CPM_A >= CPM_B), P(CPM_A <= CPM_B)), clamped to [1/n_boot, 1].
inline double compare_systems(const ScanOutcomes& a, const ScanOutcomes& b, std::size_t n_boot, std::uint64_t seed) {
  if (n_boot < 1) throw ValidationError("bootstrap needs at least one replicate");
  if (a.scan_count() != b.scan_count()) throw ValidationError("systems were evaluated on different scan sets");
  if (a.scan_count() == 0) throw ValidationError("comparison needs at least one scan");

  // 0: no nodules in resample, 1: A > B, 2: A < B, 3: tie
  std::vector<std::uint8_t> outcome(n_boot, 0);
  parallel_for(n_boot, [&](std::size_t r) {
    const auto weight = resample_weights(a.scan_count(), seed, r);
    const auto pa = a.curve(weight);
    if (pa.empty()) return;
    const auto pb = b.curve(weight);
    std::vector<double> sa, sb;
    for (double rate : kCpmRates) {
      sa.push_back(sensitivity_at(pa, rate));
      sb.push_back(sensitivity_at(pb, rate));
    }
    const double ca = mean_sensitivity(sa), cb = mean_sensitivity(sb);
    outcome[r] = ca > cb ? 1 : ca < cb ? 2 : 3;
  });

  std::size_t used = 0, a_geq = 0, a_leq = 0;
  for (auto o : outcome) {
    if (o == 0) continue;
    ++used;
    if (o != 2) ++a_geq;
    if (o != 1) ++a_leq;
  }
  if (used == 0) return 1.0;
  const double p = 2.0 * std::min(double(a_geq), double(a_leq)) / double(used);
  return std::clamp(p, 1.0 / double(n_boot), 1.0);
}

// ---- One-call evaluation --------------------------------------------------

struct EvaluationOptions {
  std::size_t mark_limit = kDefaultMarkLimit;
  std::size_t bootstraps = kDefaultBootstraps;  // 0 disables the bands
  std::uint64_t seed = 0;
  std::vector<double> rates{kCpmRates.begin(), kCpmRates.end()};
  HitOptions hits;
};

struct Evaluation {
  std::vector<CadMark> capped;
  HitAssignment assignment;
  FrocCurve curve;
  CpmReport report;
  std::optional<BootstrapBand> band;
};

inline Evaluation evaluate(std::span<const CadMark> marks, std::span<const ReferenceNodule> positives,
                           std::span<const IrrelevantFinding> irrelevant, std::span<const std::string> scan_ids,
                           const EvaluationOptions& options = {}) {
  Evaluation e;
  e.capped = cap_marks(marks, options.mark_limit);
  const ScanOutcomes outcomes(e.capped, positives, irrelevant, scan_ids, options.hits);
  e.assignment = assign_hits(e.capped, positives, irrelevant, options.hits);
  e.curve = froc(e.assignment, scan_ids.size());
  e.report = cpm(e.curve, options.rates);
  if (options.bootstraps > 0) {
    e.band = bootstrap_band(outcomes, options.bootstraps, options.seed, options.rates);
    // A percentile interval need not contain the point estimate; widen it so
    // the reported band always does.
    std::vector<Interval> bands = e.band->sensitivity;
    for (std::size_t n = 0; n < bands.size(); ++n) {
      bands[n].lower = std::min(bands[n].lower, e.report.sensitivities[n]);
      bands[n].upper = std::max(bands[n].upper, e.report.sensitivities[n]);
    }
    e.report.sensitivity_bands = std::move(bands);
    e.report.cpm_band = Interval{std::min(e.band->cpm.lower, e.report.cpm), std::max(e.band->cpm.upper, e.report.cpm)};
  }
  return e;
}

// ---- CSV ------------------------------------------------------------------

inline std::vector<CadMark> read_predictions_csv(const std::filesystem::path& path) {
  std::vector<CadMark> marks;
  for (auto& row : read_marks_csv(path, MarkKind::Predictions))
    marks.push_back({std::move(row.scan_id), row.center, *row.probability});
  return marks;
}

inline void write_predictions_csv(const std::filesystem::path& path, std::span<const CadMark> marks) {
  CsvWriter w(path, {"seriesuid", "coordX", "coordY", "coordZ", "probability"});
  for (const auto& m : marks)
    w.row({m.scan_id, format_fixed(m.center.x), format_fixed(m.center.y), format_fixed(m.center.z),
           format_fixed(m.score)});
  w.close();
}

inline void write_froc_csv(const std::filesystem::path& path, const FrocCurve& curve) {
  CsvWriter w(path, {"threshold", "fps_per_scan", "sensitivity"});
  for (const auto& p : curve.points)
    w.row({std::isfinite(p.threshold) ? format_fixed(p.threshold) : std::string("inf"), format_fixed(p.fps_per_scan),
           format_fixed(p.sensitivity)});
  w.close();
}

}  // namespace luna
