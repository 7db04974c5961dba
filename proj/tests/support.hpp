#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "luna/luna.hpp"

namespace testing_support {

namespace fs = std::filesystem;

/// A scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "luna") {
    std::random_device rd;
    path_ = fs::temp_directory_path() / (tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::string scan_name(std::size_t s) { return "scan" + std::to_string(s); }

/// A small randomized evaluation problem: marks clustered around nodules so
/// hits, duplicates and near-misses all occur.
struct FrocInstance {
  std::vector<std::string> scans;
  std::vector<luna::ReferenceNodule> positives;
  std::vector<luna::IrrelevantFinding> irrelevant;
  std::vector<luna::CadMark> marks;
};

inline FrocInstance random_froc_instance(std::mt19937_64& rng, std::size_t max_scans = 20, std::size_t max_marks = 50,
                                         std::size_t max_nodules = 10, bool coarse_scores = false) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  FrocInstance f;
  const std::size_t scans = pick(1, max_scans);
  for (std::size_t s = 0; s < scans; ++s) f.scans.push_back(scan_name(s));
  const std::size_t nodules = pick(1, max_nodules);
  for (std::size_t n = 0; n < nodules; ++n) {
    luna::ReferenceNodule r;
    r.scan_id = f.scans[pick(0, scans - 1)];
    r.center = {unit(rng) * 40.0, unit(rng) * 40.0, unit(rng) * 40.0};
    r.diameter_mm = 3.0 + unit(rng) * 17.0;
    f.positives.push_back(r);
  }
  const std::size_t findings = pick(0, 4);
  for (std::size_t n = 0; n < findings; ++n)
    f.irrelevant.push_back({f.scans[pick(0, scans - 1)], {unit(rng) * 40.0, unit(rng) * 40.0, unit(rng) * 40.0},
                            1.0 + unit(rng) * 5.0, luna::FindingSource::Listed});
  const std::size_t marks = pick(0, max_marks);
  for (std::size_t m = 0; m < marks; ++m) {
    luna::CadMark c;
    const double roll = unit(rng);
    if (roll < 0.5) {
      const auto& n = f.positives[pick(0, nodules - 1)];
      const double spread = n.diameter_mm * 0.7;
      c.scan_id = n.scan_id;
      c.center = {n.center.x + (unit(rng) - 0.5) * spread, n.center.y + (unit(rng) - 0.5) * spread,
                  n.center.z + (unit(rng) - 0.5) * spread};
    } else if (roll < 0.6 && !f.irrelevant.empty()) {
      const auto& g = f.irrelevant[pick(0, f.irrelevant.size() - 1)];
      c.scan_id = g.scan_id;
      c.center = {g.center.x + unit(rng) - 0.5, g.center.y + unit(rng) - 0.5, g.center.z + unit(rng) - 0.5};
    } else {
      c.scan_id = f.scans[pick(0, scans - 1)];
      c.center = {unit(rng) * 40.0, unit(rng) * 40.0, unit(rng) * 40.0};
    }
    c.score = coarse_scores ? double(pick(0, 9)) / 10.0 : unit(rng);
    f.marks.push_back(c);
  }
  return f;
}

/// Random multi-reader annotations: a few true lesions per scan, each
/// annotated by a random subset of four readers with jitter, plus noise.
inline std::vector<luna::ReaderAnnotation> random_reader_annotations(std::mt19937_64& rng, std::size_t max_rows = 300) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto pick = [&](std::size_t lo, std::size_t hi) { return std::uniform_int_distribution<std::size_t>(lo, hi)(rng); };
  std::vector<luna::ReaderAnnotation> rows;
  const std::size_t scans = pick(1, 8);
  const std::size_t target = pick(1, max_rows);
  while (rows.size() < target) {
    const std::string scan = scan_name(pick(0, scans - 1));
    const luna::WorldPoint c{unit(rng) * 100.0, unit(rng) * 100.0, unit(rng) * 100.0};
    const double d = 3.0 + unit(rng) * 20.0;
    for (int reader = 1; reader <= 4 && rows.size() < target; ++reader) {
      if (unit(rng) < 0.3) continue;
      const double kind_roll = unit(rng);
      luna::ReaderAnnotation a;
      a.scan_id = scan;
      a.reader = reader;
      a.center = {c.x + (unit(rng) - 0.5) * d * 0.6, c.y + (unit(rng) - 0.5) * d * 0.6,
                  c.z + (unit(rng) - 0.5) * d * 0.6};
      if (kind_roll < 0.75) {
        a.kind = luna::AnnotationKind::NoduleGeq3;
        a.diameter_mm = d * (0.8 + 0.4 * unit(rng));
      } else if (kind_roll < 0.9) {
        a.kind = luna::AnnotationKind::NoduleLt3;
        if (unit(rng) < 0.5) a.diameter_mm = 1.0 + unit(rng) * 2.0;
      } else {
        a.kind = luna::AnnotationKind::NonNodule;
      }
      rows.push_back(a);
    }
  }
  return rows;
}

/// Phantom with solid nodules away from straight vessels, as used by the
/// end-to-end detector checks.
struct PhantomCase {
  luna::PhantomSpec spec;
  std::vector<luna::PhantomNodule> solid;
};

inline bool clear_of(const luna::WorldPoint& p, double radius, const std::vector<luna::PhantomNodule>& nodules,
                     const std::vector<luna::PhantomVessel>& vessels, double gap) {
  for (const auto& n : nodules)
    if (luna::distance(p, n.center) < radius + n.diameter_mm / 2.0 + gap) return false;
  for (const auto& v : vessels) {
    // vessels run along z here
    const double dx = p.x - v.point.x, dy = p.y - v.point.y;
    if (std::sqrt(dx * dx + dy * dy) < radius + v.radius_mm + gap) return false;
  }
  return true;
}

inline PhantomCase random_phantom(std::mt19937_64& rng, std::size_t index, double peak_hu, double min_d, double max_d,
                                  std::size_t size = 128) {
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  PhantomCase pc;
  luna::PhantomSpec& s = pc.spec;
  s.scan_id = "phantom" + std::to_string(index);
  s.geometry = {{size, size, size}, {1.0, 1.0, 1.0}, {0.0, 0.0, 0.0}};
  s.noise_sigma_hu = 20.0;
  s.seed = index + 1;
  const double extent = double(size - 1), margin = s.lung_margin_mm + 2.0;
  for (int v = 0; v < 3; ++v) {
    luna::PhantomVessel vessel;
    vessel.radius_mm = 1.5 + unit(rng) * 1.5;
    for (int tries = 0; tries < 100; ++tries) {
      vessel.point = {margin + unit(rng) * (extent - 2 * margin), margin + unit(rng) * (extent - 2 * margin), 0.0};
      if (clear_of(vessel.point, vessel.radius_mm, {}, s.vessels, 6.0)) break;
    }
    vessel.direction = {0.0, 0.0, 1.0};
    s.vessels.push_back(vessel);
  }
  const std::size_t count = 1 + std::uniform_int_distribution<std::size_t>(0, 2)(rng);
  for (std::size_t n = 0; n < count; ++n) {
    luna::PhantomNodule nodule;
    nodule.diameter_mm = min_d + unit(rng) * (max_d - min_d);
    nodule.peak_hu = peak_hu;
    const double r = nodule.diameter_mm / 2.0, lo = margin + r, span = extent - 2 * (margin + r);
    bool placed = false;
    for (int tries = 0; tries < 500 && !placed; ++tries) {
      nodule.center = {lo + unit(rng) * span, lo + unit(rng) * span, lo + unit(rng) * span};
      placed = clear_of(nodule.center, r, s.nodules, s.vessels, 4.0);
    }
    if (!placed) continue;
    s.nodules.push_back(nodule);
    pc.solid.push_back(nodule);
  }
  return pc;
}

}  // namespace testing_support
