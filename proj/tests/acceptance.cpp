// Acceptance checks. Prints one line per criterion; exits nonzero on any FAIL.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>

#include "luna/luna.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace luna;
namespace fs = std::filesystem;

namespace {

enum class Verdict { Pass, Fail, Skip };

struct Outcome {
  Verdict verdict;
  std::string detail;
};

Outcome pass(std::string d) { return {Verdict::Pass, std::move(d)}; }
Outcome fail(std::string d) { return {Verdict::Fail, std::move(d)}; }

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream s;
  s.precision(digits);
  s << std::fixed << v;
  return s.str();
}

std::string scientific(double v) {
  std::ostringstream s;
  s.precision(2);
  s << std::scientific << v;
  return s.str();
}

std::vector<std::string> scan_ids(std::size_t n) {
  std::vector<std::string> ids;
  for (std::size_t s = 0; s < n; ++s) ids.push_back(testing_support::scan_name(s));
  return ids;
}

FrocCurve curve_of(const testing_support::FrocInstance& f, bool several = false) {
  return froc(assign_hits(f.marks, f.positives, f.irrelevant, {several}), f.scans.size());
}

// ---------------------------------------------------------------------------

Outcome cpm_rows() {
  struct Row {
    std::array<double, 7> s;
    double cpm;
  };
  const std::vector<Row> rows{
      {{0.677, 0.834, 0.927, 0.972, 0.981, 0.983, 0.983}, 0.908},
      {{0.809, 0.901, 0.962, 0.976, 0.981, 0.981, 0.982}, 0.942},
      {{0.831, 0.917, 0.965, 0.979, 0.981, 0.981, 0.981}, 0.948},
      {{0.859, 0.937, 0.958, 0.969, 0.976, 0.982, 0.982}, 0.952},
      {{0.836, 0.896, 0.940, 0.965, 0.976, 0.981, 0.982}, 0.939},
  };
  for (const auto& r : rows) {
    // A curve whose knots sit exactly on the CPM rates.
    FrocCurve c;
    c.scan_count = 1;
    c.nodule_count = 1;
    for (std::size_t n = 0; n < 7; ++n) c.points.push_back({double(7 - n), kCpmRates[n], r.s[n]});
    const double got = cpm(c).cpm;
    const double direct = mean_sensitivity(r.s);
    if (std::fabs(got - r.cpm) > 5e-4 || got != direct)
      return fail("expected " + fixed(r.cpm, 3) + ", got " + fixed(got, 6));
  }
  return pass(std::to_string(rows.size()) + " rows within 5e-4");
}

Outcome froc_equivalence() {
  const auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2024);
  for (int t = 0; t < 200; ++t) {
    const auto f = testing_support::random_froc_instance(rng, 20, 50, 10, t % 2 == 1);
    auto got = curve_of(f).points;
    auto want = oracle::froc_points(f.marks, f.positives, f.irrelevant, f.scans.size());
    auto key = [](const OperatingPoint& a, const OperatingPoint& b) {
      return std::tie(a.threshold, a.fps_per_scan, a.sensitivity) < std::tie(b.threshold, b.fps_per_scan, b.sensitivity);
    };
    std::sort(got.begin(), got.end(), key);
    std::sort(want.begin(), want.end(), key);
    if (got != want) return fail("instance " + std::to_string(t) + " differs from enumeration");
  }
  const double elapsed = seconds_since(t0);
  if (elapsed >= 10.0) return fail("took " + fixed(elapsed, 2) + " s");
  return pass("200 instances identical in " + fixed(elapsed, 3) + " s");
}

Outcome hit_boundaries() {
  const double eps = 1e-6;
  for (double d : {3.0, 10.0, 30.0}) {
    const std::vector<ReferenceNodule> ref{{"s", {10, 20, 30}, d, 3, {}}};
    const double r = d / 2.0;
    for (const WorldPoint dir : {WorldPoint{1, 0, 0}, WorldPoint{0, -1, 0}, WorldPoint{0, 0, 1}}) {
      const std::vector<CadMark> inside{{"s", {10 + dir.x * (r - eps), 20 + dir.y * (r - eps), 30 + dir.z * (r - eps)}, 1}};
      const std::vector<CadMark> outside{
          {"s", {10 + dir.x * (r + eps), 20 + dir.y * (r + eps), 30 + dir.z * (r + eps)}, 1}};
      if (assign_hits(inside, ref, {}).labels[0] != MarkLabel::TruePositive)
        return fail("r-eps not a hit for d=" + fixed(d, 0));
      if (assign_hits(outside, ref, {}).labels[0] != MarkLabel::FalsePositive)
        return fail("r+eps counted for d=" + fixed(d, 0));
    }
  }
  std::mt19937_64 rng(77);
  for (int t = 0; t < 500; ++t) {
    const auto f = testing_support::random_froc_instance(rng, 20, 50, 10, t % 3 == 0);
    const auto capped = cap_marks(f.marks, 1 + t % 7);
    for (bool several : {false, true}) {
      const auto a = assign_hits(capped, f.positives, f.irrelevant, {several});
      const std::size_t total =
          a.count(MarkLabel::TruePositive) + a.count(MarkLabel::FalsePositive) + a.count(MarkLabel::Ignored);
      if (total != capped.size()) return fail("instance " + std::to_string(t) + " loses marks");
    }
  }
  return pass("diameters 3/10/30 at r-/+1e-6; 1000 conservation checks");
}

Outcome rank_invariance() {
  std::mt19937_64 rng(31);
  for (int t = 0; t < 50; ++t) {
    const auto f = testing_support::random_froc_instance(rng, 20, 50, 10, t % 2 == 0);
    auto g = f;
    for (auto& m : g.marks) m.score = m.score * m.score * m.score + 1.0;
    const auto a = curve_of(f), b = curve_of(g);
    if (a.points.size() != b.points.size()) return fail("point count changed on set " + std::to_string(t));
    for (std::size_t n = 0; n < a.points.size(); ++n)
      if (a.points[n].fps_per_scan != b.points[n].fps_per_scan || a.points[n].sensitivity != b.points[n].sensitivity)
        return fail("curve changed on set " + std::to_string(t));
    if (cpm(a).cpm != cpm(b).cpm) return fail("CPM changed on set " + std::to_string(t));
  }
  return pass("50 sets bit-identical");
}

Outcome reference_merge() {
  std::mt19937_64 rng(55);
  for (int t = 0; t < 100; ++t) {
    const auto rows = testing_support::random_reader_annotations(rng, 300);
    auto got = merge_reader_annotations(rows);
    auto want = oracle::reference_clusters(rows);
    for (auto& g : got) std::sort(g.members.begin(), g.members.end());
    if (got.size() != want.size()) return fail("cluster count differs on set " + std::to_string(t));
    std::sort(got.begin(), got.end(), [](const auto& a, const auto& b) { return a.members < b.members; });
    std::sort(want.begin(), want.end(), [](const auto& a, const auto& b) { return a.members < b.members; });
    for (std::size_t n = 0; n < got.size(); ++n) {
      if (got[n].members != want[n].members || got[n].agreement != want[n].agreement ||
          std::fabs(got[n].diameter_mm - want[n].diameter_mm) > 1e-9 ||
          oracle::dist(got[n].center, want[n].center) > 1e-9)
        return fail("cluster mismatch on set " + std::to_string(t));
    }
    for (int k = 1; k <= 4; ++k) {
      std::size_t expected = 0;
      for (const auto& c : want) expected += c.agreement >= k;
      if (build_reference(rows, k).positives.size() != expected)
        return fail("positive count at agreement " + std::to_string(k) + " on set " + std::to_string(t));
    }
    for (int k = 1; k < 4; ++k) {
      const auto wide = build_reference(rows, k).positives, narrow = build_reference(rows, k + 1).positives;
      for (const auto& n : narrow)
        if (std::none_of(wide.begin(), wide.end(), [&](const auto& w) { return w.members == n.members; }))
          return fail("Positives(" + std::to_string(k + 1) + ") not nested on set " + std::to_string(t));
    }
  }
  return pass("100 sets match the closure oracle; positives nested");
}

Outcome candidate_merge() {
  auto pair_at = [](double gap) {
    const std::vector<CandidateList> lists{{"a", {{"s", {0, 0, 0}, "t", {}}}}, {"b", {{"s", {gap, 0, 0}, "t", {}}}}};
    return merge_candidates(lists).candidates.size();
  };
  if (pair_at(4.9) != 1) return fail("4.9 mm pair not merged");
  if (pair_at(5.1) != 2) return fail("5.1 mm pair merged");
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 50.0);
  for (int t = 0; t < 100; ++t) {
    std::vector<CandidateList> lists(1 + t % 5);
    std::map<std::string, std::vector<WorldPoint>> by_scan;
    const int count = 20 + t * 3;
    for (int n = 0; n < count; ++n) {
      const Candidate c{"s" + std::to_string(n % 4), {u(rng), u(rng), u(rng)}, "t", {}};
      lists[n % lists.size()].candidates.push_back(c);
      by_scan[c.scan_id].push_back(c.center);
    }
    std::size_t expected = 0;
    for (const auto& [scan, points] : by_scan) expected += oracle::closure_count(points, 5.0);
    if (merge_candidates(lists).candidates.size() != expected)
      return fail("merged count differs on instance " + std::to_string(t));
  }
  return pass("4.9/5.1 boundary; 100 instances match closure");
}

Outcome phantom_end_to_end() {
  std::mt19937_64 rng(404);
  std::size_t solid_total = 0, solid_found = 0, candidates = 0;
  std::size_t sub_total = 0, sub_found = 0;
  double worst = 0.0;
  auto found = [](const std::vector<Candidate>& c, const PhantomNodule& n) {
    return std::any_of(c.begin(), c.end(),
                       [&](const Candidate& x) { return distance(x.center, n.center) <= n.diameter_mm / 2.0; });
  };
  for (std::size_t p = 0; p < 20; ++p) {
    const auto solid = testing_support::random_phantom(rng, p, -50.0, 10.0, 30.0);
    const Phantom a = generate_phantom(solid.spec);
    const auto t0 = std::chrono::steady_clock::now();
    const auto c = detect_large(a.volume, &a.lung_mask);
    worst = std::max(worst, seconds_since(t0));
    candidates += c.size();
    for (const auto& n : solid.solid) {
      ++solid_total;
      solid_found += found(c, n);
    }

    const auto sub = testing_support::random_phantom(rng, 100 + p, -500.0, 6.0, 20.0);
    const Phantom b = generate_phantom(sub.spec);
    const auto t1 = std::chrono::steady_clock::now();
    const auto s = detect_subsolid(b.volume, &b.lung_mask);
    worst = std::max(worst, seconds_since(t1));
    for (const auto& n : sub.solid) {
      ++sub_total;
      sub_found += found(s, n);
    }
  }
  const double large_sens = double(solid_found) / double(solid_total);
  const double per_scan = double(candidates) / 20.0;
  const double sub_sens = double(sub_found) / double(sub_total);
  const std::string detail = "large " + fixed(large_sens, 3) + " at " + fixed(per_scan, 2) + "/scan, subsolid " +
                             fixed(sub_sens, 3) + ", slowest volume " + fixed(worst, 2) + " s";
  if (large_sens < 0.95 || per_scan > 10.0 || sub_sens < 0.9 || worst >= 60.0) return fail(detail);
  return pass(detail);
}

Outcome bootstrap_sanity() {
  const std::vector<std::string> one{"s"};
  const std::vector<ReferenceNodule> ref1{{"s", {0, 0, 0}, 10, 3, {}}, {"s", {40, 0, 0}, 10, 3, {}}};
  const std::vector<CadMark> marks1{{"s", {0, 0, 0}, 0.9}, {"s", {20, 20, 20}, 0.5}, {"s", {40, 0, 1}, 0.3}};
  const BootstrapBand single = bootstrap_band(ScanOutcomes(marks1, ref1, {}, one), 200, 1);
  if (single.cpm.lower != single.cpm.upper) return fail("singleton CPM interval has width");
  for (const auto& i : single.sensitivity)
    if (i.lower != i.upper) return fail("singleton sensitivity interval has width");

  std::mt19937_64 rng(123);
  std::uniform_real_distribution<double> u(0, 1);
  std::vector<ReferenceNodule> ref;
  std::vector<CadMark> marks;
  for (std::size_t s = 0; s < 10; ++s) {
    const std::string id = testing_support::scan_name(s);
    for (int n = 0; n < 3; ++n) {
      ref.push_back({id, {50.0 * n, 0, 0}, 10, 3, {}});
      if (u(rng) < 0.8) marks.push_back({id, {50.0 * n, 0, 0}, u(rng)});
    }
    for (int n = 0; n < 10; ++n) marks.push_back({id, {0, 100, 10.0 * n}, u(rng)});
  }
  const auto ids = scan_ids(10);
  const ScanOutcomes o(marks, ref, {}, ids);
  const BootstrapBand a = bootstrap_band(o, 1000, 1), b = bootstrap_band(o, 1000, 2);
  const double dl = std::fabs(a.cpm.lower - b.cpm.lower), du = std::fabs(a.cpm.upper - b.cpm.upper);
  if (dl >= 0.02 || du >= 0.02) return fail("seed endpoints differ by " + fixed(std::max(dl, du)));
  const double p = compare_systems(o, o, 1000, 3);
  if (p != 1.0) return fail("p(A,A) = " + fixed(p, 6));
  return pass("zero-width singleton; seed gap " + fixed(std::max(dl, du)) + "; p(A,A) = 1");
}

Outcome shape_index_analytics() {
  // Gaussian blob of standard deviation 3 voxels centred on a voxel.
  const Geometry g{{33, 33, 33}};
  Image<double> blob(g);
  for (std::size_t n = 0; n < blob.size(); ++n) {
    const auto v = g.index_of(n);
    const double r2 = (v.i - 16) * (v.i - 16) + (v.j - 16) * (v.j - 16) + (v.k - 16) * (v.k - 16);
    blob[n] = 1000.0 * std::exp(-r2 / (2.0 * 9.0));
  }
  const auto f = shape_index(blob, 1.0);
  const double centre = f.shape_index.at(16, 16, 16);
  if (std::fabs(centre - 1.0) > 0.05) return fail("blob centre SI " + fixed(centre));

  std::mt19937_64 rng(17);
  std::normal_distribution<double> noise(0.0, 100.0);
  for (int t = 0; t < 3; ++t) {
    Image<float> vol(Geometry{{24, 20, 16}});
    for (auto& v : vol.data()) v = static_cast<float>(noise(rng));
    const auto h = shape_index(vol, 1.0 + 0.5 * t);
    for (std::size_t n = 0; n < vol.size(); ++n) {
      if (!(h.shape_index[n] >= -1.0f && h.shape_index[n] <= 1.0f)) return fail("SI outside [-1,1]");
      if (!(h.curvedness[n] >= 0.0f)) return fail("negative curvedness");
    }
  }

  std::uniform_real_distribution<double> u(-10.0, 10.0);
  double worst = 0.0;
  for (int t = 0; t < 5000; ++t) {
    const std::array<double, 6> m{u(rng), u(rng), u(rng), u(rng), u(rng), u(rng)};
    const auto got = symmetric_eigenvalues(m);
    const auto want = oracle::char_poly_eigenvalues(m);
    for (int e = 0; e < 3; ++e) worst = std::max(worst, std::fabs(got[e] - want[e]));
  }
  if (worst > 1e-8) return fail("eigenvalue error " + scientific(worst));
  return pass("blob centre SI " + fixed(centre) + "; ranges hold; eigen error " + scientific(worst));
}

Outcome public_data() {
  const char* root = std::getenv("LUNA16_DATA_DIR");
  if (!root || !*root) return {Verdict::Skip, "set LUNA16_DATA_DIR to run"};
  const fs::path dir(root);
  std::vector<std::string> notes;
  bool ok = true, ran = false;

  if (fs::exists(dir / "reader_annotations.csv")) {
    ran = true;
    const auto rows = read_reader_annotations_csv(dir / "reader_annotations.csv");
    const std::array<std::size_t, 4> want{2290, 1602, 1186, 777};
    std::string counts;
    for (int k = 1; k <= 4; ++k) {
      const std::size_t got = build_reference(rows, k).positives.size();
      counts += (k > 1 ? "/" : "") + std::to_string(got);
      ok = ok && got == want[k - 1];
    }
    notes.push_back("positives " + counts);
  }

  std::vector<CandidateList> lists;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("candidates_", 0) == 0 && entry.path().extension() == ".csv")
      lists.push_back({entry.path().stem().string(), read_candidates_csv(entry.path())});
  }
  std::sort(lists.begin(), lists.end(), [](const auto& a, const auto& b) { return a.source < b.source; });
  if (lists.size() == 5 && fs::exists(dir / "annotations.csv")) {
    ran = true;
    std::vector<ReferenceNodule> ref;
    for (const auto& r : read_marks_csv(dir / "annotations.csv", MarkKind::Annotations))
      ref.push_back({r.scan_id, r.center, *r.diameter_mm, 0, {}});
    std::size_t scans = 888;
    if (fs::exists(dir / "seriesuids.csv")) scans = read_scan_list(dir / "seriesuids.csv").size();
    const auto reports = combination_sweep(lists, ref, scans);
    const auto& all = reports.back();
    ok = ok && std::fabs(all.sensitivity - 0.983) <= 0.001 && all.total_candidates == 754975;
    notes.push_back("all five: sensitivity " + fixed(all.sensitivity, 3) + ", " +
                    std::to_string(all.total_candidates) + " candidates, " + fixed(all.average_per_scan, 1) + "/scan");
  }
  if (!ran) return {Verdict::Skip, "no reader_annotations.csv or five candidates_*.csv with annotations.csv"};
  std::string detail;
  for (const auto& n : notes) detail += (detail.empty() ? "" : "; ") + n;
  return ok ? pass(detail) : fail(detail);
}

}  // namespace

int main() {
  const std::vector<std::pair<int, std::function<Outcome()>>> criteria{
      {1, cpm_rows},        {2, froc_equivalence}, {3, hit_boundaries},   {4, rank_invariance},
      {5, reference_merge}, {6, candidate_merge},  {7, phantom_end_to_end}, {8, bootstrap_sanity},
      {9, shape_index_analytics}, {10, public_data},
  };
  int failures = 0;
  for (const auto& [id, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = fail(std::string("exception: ") + e.what());
    }
    const char* word = o.verdict == Verdict::Pass ? "PASS" : o.verdict == Verdict::Fail ? "FAIL" : "SKIP";
    failures += o.verdict == Verdict::Fail;
    std::cout << "criterion " << id << ": " << word << "  " << o.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
