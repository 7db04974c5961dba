#pragma once

// Probability averaging across false-positive-reduction systems that scored
// a shared candidate list.

#include <algorithm>
#include <bit>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "luna/csv.hpp"
#include "luna/error.hpp"
#include "luna/froc.hpp"

namespace luna {

struct PredictionSet {
  std::string system;
  std::vector<CadMark> predictions;  // score = probability in [0, 1]
};

struct AlignedRow {
  std::string scan_id;
  WorldPoint center;                          // position in the first system
  std::vector<std::optional<double>> scores;  // one per system
};

struct UnmatchedCandidate {
  std::size_t system = 0;
  std::string scan_id;
  WorldPoint center;
};

/// Candidates keyed by the first system's list; every other system's
/// candidates are matched to it within a tolerance.
struct AlignedTable {
  std::vector<std::string> systems;
  std::vector<AlignedRow> rows;
  /// Candidates a system scored that the first system lacks, and rows of the
  /// first system that a system did not score.
  std::vector<UnmatchedCandidate> unmatched;

  bool complete() const { return unmatched.empty(); }
};

inline constexpr double kDefaultAlignTolerance = 0.01;

inline AlignedTable align_candidates(std::span<const PredictionSet> sets, double tolerance_mm = kDefaultAlignTolerance) {
  if (sets.empty()) throw ValidationError("no prediction sets to align");
  if (!(tolerance_mm >= 0.0)) throw ValidationError("alignment tolerance must be non-negative");
  AlignedTable table;
  for (const auto& s : sets) {
    table.systems.push_back(s.system);
    for (const auto& p : s.predictions)
      if (!(p.score >= 0.0 && p.score <= 1.0))
        throw ValidationError("system " + s.system + ": probability outside [0,1]");
  }

  std::unordered_map<std::string, std::vector<std::size_t>> base_rows;  // by scan, sorted by x
  for (const auto& p : sets[0].predictions) {
    base_rows[p.scan_id].push_back(table.rows.size());
    table.rows.push_back({p.scan_id, p.center, std::vector<std::optional<double>>(sets.size())});
    table.rows.back().scores[0] = p.score;
  }
  auto by_x = [&](std::vector<std::size_t>& ids, auto&& x_of) {
    std::sort(ids.begin(), ids.end(), [&](std::size_t a, std::size_t b) { return x_of(a) < x_of(b); });
  };
  for (auto& [scan, ids] : base_rows) by_x(ids, [&](std::size_t r) { return table.rows[r].center.x; });

  // Indices of `ids` (sorted by x) within tolerance of p.
  auto neighbours = [&](const std::vector<std::size_t>& ids, auto&& center_of, const WorldPoint& p) {
    std::vector<std::size_t> out;
    auto lo = std::lower_bound(ids.begin(), ids.end(), p.x - tolerance_mm,
                               [&](std::size_t id, double x) { return center_of(id).x < x; });
    for (auto it = lo; it != ids.end() && center_of(*it).x <= p.x + tolerance_mm; ++it)
      if (distance(center_of(*it), p) <= tolerance_mm) out.push_back(*it);
    return out;
  };

  for (std::size_t s = 1; s < sets.size(); ++s) {
    const auto& preds = sets[s].predictions;
    std::unordered_map<std::string, std::vector<std::size_t>> own;
    for (std::size_t n = 0; n < preds.size(); ++n) own[preds[n].scan_id].push_back(n);
    for (auto& [scan, ids] : own) by_x(ids, [&](std::size_t n) { return preds[n].center.x; });

    for (std::size_t n = 0; n < preds.size(); ++n) {
      const auto it = base_rows.find(preds[n].scan_id);
      std::vector<std::size_t> hits;
      if (it != base_rows.end())
        hits = neighbours(it->second, [&](std::size_t r) -> const WorldPoint& { return table.rows[r].center; },
                          preds[n].center);
      if (hits.size() > 1)
        throw ValidationError("ambiguous alignment: a candidate of " + sets[s].system + " in scan " +
                              preds[n].scan_id + " lies within tolerance of several candidates of " + sets[0].system);
      if (hits.empty()) {
        table.unmatched.push_back({s, preds[n].scan_id, preds[n].center});
        continue;
      }
      const auto back = neighbours(own[preds[n].scan_id],
                                   [&](std::size_t m) -> const WorldPoint& { return preds[m].center; },
                                   table.rows[hits[0]].center);
      if (back.size() > 1)
        throw ValidationError("ambiguous alignment: several candidates of " + sets[s].system + " in scan " +
                              preds[n].scan_id + " lie within tolerance of one candidate of " + sets[0].system);
      table.rows[hits[0]].scores[s] = preds[n].score;
    }
    for (const auto& row : table.rows)
      if (!row.scores[s]) table.unmatched.push_back({s, row.scan_id, row.center});
  }
  return table;
}

/// Restricts a table to the rows every system scored.
inline AlignedTable drop_incomplete_rows(AlignedTable table) {
  std::erase_if(table.rows, [](const AlignedRow& r) {
    return std::any_of(r.scores.begin(), r.scores.end(), [](const auto& s) { return !s.has_value(); });
  });
  table.unmatched.clear();
  return table;
}

/// Arithmetic mean of the member systems' probabilities per candidate.
inline PredictionSet average_predictions(const AlignedTable& table, std::uint32_t subset) {
  if (subset == 0) throw ValidationError("empty system subset");
  if (subset >> table.systems.size()) throw ValidationError("system subset references unknown systems");
  PredictionSet out;
  for (std::size_t s = 0; s < table.systems.size(); ++s)
    if (subset & (1u << s)) out.system += (out.system.empty() ? "" : "+") + table.systems[s];
  const double members = double(std::popcount(subset));
  out.predictions.reserve(table.rows.size());
  for (const auto& row : table.rows) {
    double sum = 0.0;
    for (std::size_t s = 0; s < table.systems.size(); ++s) {
      if (!(subset & (1u << s))) continue;
      if (!row.scores[s])
        throw ValidationError("system " + table.systems[s] + " did not score a candidate in scan " + row.scan_id);
      sum += *row.scores[s];
    }
    out.predictions.push_back({row.scan_id, row.center, std::clamp(sum / members, 0.0, 1.0)});
  }
  return out;
}

struct EnsembleRow {
  std::uint32_t systems = 0;
  std::string name;
  CpmReport report;
  double best_single_cpm = 0.0;            // among members
  double difference = 0.0;                 // cpm - best single; 0 for singletons
  std::optional<double> p_value;           // vs the best single member
};

struct EnsembleOptions {
  std::size_t mark_limit = kDefaultMarkLimit;
  std::size_t bootstraps = 0;  // > 0 enables p-values
  std::uint64_t seed = 0;
  HitOptions hits;
};

/// Evaluates the average of every non-empty subset of systems, ordered by
/// subset size then bitmask.
inline std::vector<EnsembleRow> ensemble_sweep(const AlignedTable& table, std::span<const ReferenceNodule> positives,
                                               std::span<const IrrelevantFinding> irrelevant,
                                               std::span<const std::string> scan_ids,
                                               const EnsembleOptions& options = {}) {
  const std::size_t n = table.systems.size();
  if (n < 1 || n > 10) throw ValidationError("ensemble sweep needs 1..10 systems");
  std::vector<std::uint32_t> subsets;
  for (std::uint32_t m = 1; m < (1u << n); ++m) subsets.push_back(m);
  std::stable_sort(subsets.begin(), subsets.end(),
                   [](std::uint32_t a, std::uint32_t b) { return std::popcount(a) < std::popcount(b); });

  std::vector<EnsembleRow> rows(subsets.size());
  std::vector<std::optional<ScanOutcomes>> outcomes(subsets.size());
  for (std::size_t r = 0; r < subsets.size(); ++r) {
    const PredictionSet averaged = average_predictions(table, subsets[r]);
    const auto capped = cap_marks(averaged.predictions, options.mark_limit);
    rows[r].systems = subsets[r];
    rows[r].name = averaged.system;
    rows[r].report = cpm(froc(assign_hits(capped, positives, irrelevant, options.hits), scan_ids.size()));
    if (options.bootstraps > 0) outcomes[r].emplace(capped, positives, irrelevant, scan_ids, options.hits);
  }

  std::vector<std::size_t> single_row(n, 0);
  for (std::size_t r = 0; r < rows.size(); ++r)
    if (std::popcount(rows[r].systems) == 1) single_row[std::size_t(std::countr_zero(rows[r].systems))] = r;
  for (auto& row : rows) {
    std::optional<std::size_t> best;
    for (std::size_t s = 0; s < n; ++s)
      if ((row.systems & (1u << s)) &&
          (!best || rows[single_row[s]].report.cpm > rows[*best].report.cpm))
        best = single_row[s];
    row.best_single_cpm = rows[*best].report.cpm;
    if (std::popcount(row.systems) == 1) continue;
    row.difference = row.report.cpm - row.best_single_cpm;
    if (options.bootstraps > 0) {
      const std::size_t self = static_cast<std::size_t>(&row - rows.data());
      row.p_value = compare_systems(*outcomes[self], *outcomes[*best], options.bootstraps, options.seed);
      row.report.p_value = row.p_value;
    }
  }
  return rows;
}

inline void write_ensemble_csv(const std::filesystem::path& path, std::span<const EnsembleRow> rows,
                               std::size_t system_count) {
  std::vector<std::string> header{"combination", "systems"};
  for (double rate : kCpmRates) header.push_back("sens_" + format_fixed(rate, 3));
  for (const char* c : {"cpm", "p_value", "best_single_cpm", "difference"}) header.emplace_back(c);
  CsvWriter w(path, header);
  for (const auto& row : rows) {
    std::string bits(system_count, '0');
    for (std::size_t s = 0; s < system_count; ++s)
      if (row.systems & (1u << s)) bits[s] = '1';
    std::vector<std::string> cells{bits, row.name};
    for (double s : row.report.sensitivities) cells.push_back(format_fixed(s, 3));
    cells.push_back(format_fixed(row.report.cpm, 3));
    const bool single = std::popcount(row.systems) == 1;
    cells.push_back(row.p_value ? format_fixed(*row.p_value, 4) : std::string{});
    cells.push_back(single ? std::string{} : format_fixed(row.best_single_cpm, 3));
    cells.push_back(single ? std::string{} : format_fixed(row.difference, 3));
    w.row(cells);
  }
  w.close();
}

inline PredictionSet read_prediction_set(const std::filesystem::path& path, std::string system = {}) {
  if (system.empty()) system = path.stem().string();
  return {std::move(system), read_predictions_csv(path)};
}

}  // namespace luna
