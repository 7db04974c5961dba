#pragma once

// Command-line front end. run() never exits the process; it returns
//   0  success
//   1  usage or validation error
//   2  I/O error

#include <algorithm>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "luna/luna.hpp"

namespace luna::cli {

namespace fs = std::filesystem;

struct Globals {
  unsigned threads = 0;
  std::uint64_t seed = 0;
};

inline std::string join(const std::vector<std::string>& items, const std::string& sep = ",") {
  std::string out;
  for (const auto& s : items) out += (out.empty() ? "" : sep) + s;
  return out;
}

inline std::string join(const std::vector<double>& items) {
  std::vector<std::string> text;
  for (double v : items) text.push_back(format_fixed(v));
  return join(text);
}

inline void prepare_out_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw IoError("cannot create output directory " + dir.string());
}

inline RunConfig base_config(const std::string& subcommand, const Globals& g) {
  RunConfig c;
  c.subcommand = subcommand;
  c.set("threads", std::to_string(g.threads));
  c.set("seed", std::to_string(g.seed));
  return c;
}

inline void finish(const RunConfig& config, const fs::path& out_dir) {
  config.write(out_dir / "effective_config.txt");
}

/// Scan ids from a list file, or else the union of ids seen in the inputs.
inline std::vector<std::string> scan_set(const std::string& list_path, std::span<const ReferenceNodule> positives,
                                         std::span<const IrrelevantFinding> irrelevant,
                                         const std::vector<std::vector<CadMark>*>& mark_sets) {
  if (!list_path.empty()) return read_scan_list(list_path);
  std::vector<std::string> ids;
  std::set<std::string> seen;
  auto add = [&](const std::string& id) {
    if (seen.insert(id).second) ids.push_back(id);
  };
  for (const auto& n : positives) add(n.scan_id);
  for (const auto& f : irrelevant) add(f.scan_id);
  for (const auto* marks : mark_sets)
    for (const auto& m : *marks) add(m.scan_id);
  return ids;
}

inline std::vector<CadMark> candidates_as_marks(const std::string& path) {
  std::vector<CadMark> marks;
  for (auto& row : read_marks_csv(path, MarkKind::Candidates)) marks.push_back({std::move(row.scan_id), row.center, 1.0});
  return marks;
}

/// Volumes given directly or found in a directory; "*_mask.mhd" are masks.
inline std::vector<fs::path> collect_volumes(const std::vector<std::string>& volumes, const std::string& dir) {
  std::vector<fs::path> out(volumes.begin(), volumes.end());
  if (!dir.empty()) {
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
    std::vector<fs::path> found;
    for (const auto& e : fs::directory_iterator(dir)) {
      const auto p = e.path();
      if (p.extension() == ".mhd" && !p.stem().string().ends_with("_mask")) found.push_back(p);
    }
    std::sort(found.begin(), found.end());
    out.insert(out.end(), found.begin(), found.end());
  }
  if (out.empty()) throw ValidationError("no input volumes (use --volume or --scans-dir)");
  return out;
}

inline fs::path sibling_mask(const fs::path& volume) {
  return volume.parent_path() / (volume.stem().string() + "_mask.mhd");
}

inline void write_cpm_csv(const fs::path& path, const CpmReport& r) {
  CsvWriter w(path, {"fps_per_scan", "sensitivity", "lower", "upper"});
  for (std::size_t n = 0; n < r.rates.size(); ++n) {
    const auto band = r.sensitivity_bands ? std::optional((*r.sensitivity_bands)[n]) : std::nullopt;
    w.row({format_fixed(r.rates[n], 3), format_fixed(r.sensitivities[n]), band ? format_fixed(band->lower) : "",
           band ? format_fixed(band->upper) : ""});
  }
  w.row({"cpm", format_fixed(r.cpm), r.cpm_band ? format_fixed(r.cpm_band->lower) : "",
         r.cpm_band ? format_fixed(r.cpm_band->upper) : ""});
  w.close();
}

inline void write_band_csv(const fs::path& path, const BootstrapBand& band) {
  CsvWriter w(path, {"fps_per_scan", "lower", "upper"});
  for (std::size_t n = 0; n < band.curve_rates.size(); ++n)
    w.row({format_fixed(band.curve_rates[n]), format_fixed(band.curve[n].lower), format_fixed(band.curve[n].upper)});
  w.close();
}

inline void write_labels_csv(const fs::path& path, const Evaluation& e) {
  CsvWriter w(path, {"seriesuid", "coordX", "coordY", "coordZ", "probability", "label"});
  for (std::size_t m = 0; m < e.capped.size(); ++m) {
    const auto& c = e.capped[m];
    const MarkLabel l = e.assignment.labels[m];
    w.row({c.scan_id, format_fixed(c.center.x), format_fixed(c.center.y), format_fixed(c.center.z),
           format_fixed(c.score), l == MarkLabel::TruePositive ? "TP" : l == MarkLabel::FalsePositive ? "FP" : "ignored"});
  }
  w.close();
}

// ---- Subcommands ------------------------------------------------------------

struct PhantomArgs {
  std::vector<std::string> specs;
  std::string out;
};

inline void run_phantom(const PhantomArgs& a, const Globals& g) {
  prepare_out_dir(a.out);
  RunConfig config = base_config("phantom", g);
  config.set("spec", join(a.specs));
  config.set("out", a.out);
  std::vector<MarkRow> annotations;
  std::vector<ReaderAnnotation> reader_rows;
  std::set<std::string> ids;
  for (const auto& path : a.specs) {
    PhantomSpec spec = read_phantom_spec(path);
    if (!ids.insert(spec.scan_id).second) throw ValidationError("duplicate phantom scan_id " + spec.scan_id);
    if (!spec.seed) spec.seed = derive_seed(g.seed, "phantom:" + spec.scan_id);
    config.set("phantom_seed." + spec.scan_id, std::to_string(*spec.seed));
    const Phantom p = generate_phantom(spec);
    write_metaimage(p.volume, fs::path(a.out) / (spec.scan_id + ".mhd"));
    write_metaimage(p.lung_mask, fs::path(a.out) / (spec.scan_id + "_mask.mhd"));
    for (const auto& row : p.annotations) {
      annotations.push_back(row);
      // Four readers agreeing exactly, so build-reference can be exercised too.
      for (int reader = 1; reader <= 4; ++reader)
        reader_rows.push_back({row.scan_id, reader, AnnotationKind::NoduleGeq3, row.center, row.diameter_mm});
    }
    std::cout << "phantom " << spec.scan_id << ": " << p.annotations.size() << " nodules\n";
  }
  write_marks_csv(fs::path(a.out) / "annotations.csv", MarkKind::Annotations, annotations, false);
  write_reader_annotations_csv(fs::path(a.out) / "reader_annotations.csv", reader_rows);
  {
    std::ofstream list(fs::path(a.out) / "scans.txt");
    for (const auto& id : ids) list << id << "\n";
    if (!list) throw IoError("cannot write " + (fs::path(a.out) / "scans.txt").string());
  }
  finish(config, a.out);
}

struct BuildReferenceArgs {
  std::string annotations;
  std::string out;
  int min_agreement = 3;
  double irrelevant_radius = kDefaultIrrelevantRadiusMm;
};

inline void run_build_reference(const BuildReferenceArgs& a, const Globals& g) {
  const auto rows = read_reader_annotations_csv(a.annotations);
  const ReferenceStandard ref = build_reference(rows, a.min_agreement, a.irrelevant_radius);
  prepare_out_dir(a.out);
  const fs::path out(a.out);
  write_positives_csv(out / "reference.csv", ref.positives);
  write_irrelevant_csv(out / "irrelevant.csv", ref.irrelevant);
  write_merged_csv(out / "merged.csv", merge_reader_annotations(rows));
  std::cout << ref.positives.size() << " positives, " << ref.irrelevant.size() << " irrelevant findings\n";

  RunConfig config = base_config("build-reference", g);
  config.set("annotations", a.annotations);
  config.set("out", a.out);
  config.set("min_agreement", std::to_string(a.min_agreement));
  config.set("irrelevant_radius_mm", format_fixed(a.irrelevant_radius));
  finish(config, a.out);
}

struct DetectArgs {
  std::vector<std::string> volumes;
  std::string scans_dir;
  std::string mask;
  bool no_mask = false;
  std::vector<std::string> detectors{"isicad", "subsolid", "large"};
  std::string out;
  IsicadParams isicad;
  SubsolidParams subsolid;
  LargeParams large;
};

inline void run_detect(const DetectArgs& a, const Globals& g) {
  const auto volumes = collect_volumes(a.volumes, a.scans_dir);
  if (!a.mask.empty() && volumes.size() != 1) throw ValidationError("--mask needs exactly one volume");
  for (const auto& d : a.detectors)
    if (d != "isicad" && d != "subsolid" && d != "large") throw ValidationError("unknown detector '" + d + "'");
  prepare_out_dir(a.out);

  std::map<std::string, std::vector<Candidate>> found;
  std::set<std::string> ids;
  for (const auto& path : volumes) {
    const std::string scan = path.stem().string();
    if (!ids.insert(scan).second) throw ValidationError("duplicate scan id " + scan);
    const Image<float> volume = volume_cast<float>(read_metaimage(path));
    std::optional<Mask> mask;
    if (!a.no_mask) {
      const fs::path mask_path = a.mask.empty() ? sibling_mask(path) : fs::path(a.mask);
      if (!a.mask.empty() || fs::exists(mask_path)) mask = to_mask(volume_cast<std::uint8_t>(read_metaimage(mask_path)));
    }
    const Mask* m = mask ? &*mask : nullptr;
    for (const auto& d : a.detectors) {
      std::vector<Candidate> c = d == "isicad"     ? detect_isicad(volume, a.isicad, m)
                                 : d == "subsolid" ? detect_subsolid(volume, m, a.subsolid)
                                                   : detect_large(volume, m, a.large);
      for (auto& x : c) x.scan_id = scan;
      std::cout << scan << " " << d << ": " << c.size() << " candidates\n";
      auto& all = found[d];
      all.insert(all.end(), c.begin(), c.end());
    }
  }
  for (const auto& d : a.detectors) write_candidates_csv(fs::path(a.out) / ("candidates_" + d + ".csv"), found[d]);

  RunConfig config = base_config("detect", g);
  std::vector<std::string> names;
  for (const auto& p : volumes) names.push_back(p.string());
  config.set("volumes", join(names));
  config.set("mask", a.no_mask ? "none" : a.mask.empty() ? "sibling" : a.mask);
  config.set("detectors", join(a.detectors));
  config.set("out", a.out);
  config.set("isicad.target_spacing_mm", format_fixed(a.isicad.target_spacing_mm));
  config.set("isicad.sigma_voxels", format_fixed(a.isicad.sigma_voxels));
  config.set("isicad.seed_si_min", format_fixed(a.isicad.seed_si_min));
  config.set("isicad.seed_cv_min", format_fixed(a.isicad.seed_cv_min));
  config.set("isicad.grow_si_min", format_fixed(a.isicad.grow_si_min));
  config.set("isicad.grow_cv_min", format_fixed(a.isicad.grow_cv_min));
  config.set("isicad.merge_radius_voxels", format_fixed(a.isicad.merge_radius_voxels));
  config.set("isicad.min_cluster_voxels", std::to_string(a.isicad.min_cluster_voxels));
  config.set("subsolid.lower_hu", format_fixed(a.subsolid.lower_hu));
  config.set("subsolid.upper_hu", format_fixed(a.subsolid.upper_hu));
  config.set("subsolid.element_diameter_voxels", format_fixed(a.subsolid.element_diameter_voxels));
  config.set("subsolid.min_volume_mm3", format_fixed(a.subsolid.min_volume_mm3));
  config.set("large.threshold_hu", format_fixed(a.large.threshold_hu));
  config.set("large.closing_radius_voxels", format_fixed(a.large.closing_radius_voxels));
  config.set("large.opening_radius_voxels", format_fixed(a.large.opening_radius_voxels));
  config.set("large.min_diameter_mm", format_fixed(a.large.min_diameter_mm));
  config.set("large.max_diameter_mm", format_fixed(a.large.max_diameter_mm));
  finish(config, a.out);
}

struct CombineArgs {
  std::vector<std::string> candidates;  // [name=]path
  std::string reference;
  std::string scans;
  std::string masks_dir;
  std::string out;
  MergeOptions merge;
};

inline std::pair<std::string, std::string> named_path(const std::string& arg) {
  const auto eq = arg.find('=');
  if (eq == std::string::npos) return {fs::path(arg).stem().string(), arg};
  return {arg.substr(0, eq), arg.substr(eq + 1)};
}

inline void run_combine(const CombineArgs& a, const Globals& g) {
  std::vector<CandidateList> lists;
  for (const auto& arg : a.candidates) {
    auto [name, path] = named_path(arg);
    lists.push_back({name, read_candidates_csv(path)});
  }
  const auto positives = read_positives_csv(a.reference);
  const auto scans = scan_set(a.scans, positives, {}, {});
  std::set<std::string> known(scans.begin(), scans.end());
  if (!a.scans.empty())
    for (const auto& l : lists)
      for (const auto& c : l.candidates)
        if (!known.count(c.scan_id)) throw ValidationError("candidate references scan " + c.scan_id + " outside the scan set");
  std::size_t scan_count = scans.size();
  if (a.scans.empty()) {
    for (const auto& l : lists)
      for (const auto& c : l.candidates) known.insert(c.scan_id);
    scan_count = known.size();
  }

  LungRegions regions;
  if (!a.masks_dir.empty())
    for (const auto& id : known) {
      const fs::path p = fs::path(a.masks_dir) / (id + "_mask.mhd");
      if (fs::exists(p)) regions.add(id, to_mask(volume_cast<std::uint8_t>(read_metaimage(p))));
    }
  const LungRegions* r = regions.empty() ? nullptr : &regions;

  const auto reports = combination_sweep(lists, positives, scan_count, a.merge, r);
  prepare_out_dir(a.out);
  write_combination_csv(fs::path(a.out) / "combinations.csv", reports, lists.size());
  const CandidateList all = merge_candidates(lists, a.merge, r);
  write_candidates_csv(fs::path(a.out) / "merged_candidates.csv", all.candidates);
  const auto& full = reports.back();
  std::cout << "all lists: sensitivity " << format_fixed(full.sensitivity, 3) << ", " << full.total_candidates
            << " candidates, " << format_fixed(full.average_per_scan, 1) << " per scan\n";

  RunConfig config = base_config("combine-candidates", g);
  config.set("candidates", join(a.candidates));
  config.set("reference", a.reference);
  config.set("scans", a.scans.empty() ? "derived" : a.scans);
  config.set("scan_count", std::to_string(scan_count));
  config.set("masks_dir", a.masks_dir);
  config.set("merge_distance_mm", format_fixed(a.merge.merge_distance_mm));
  config.set("slack_mm", format_fixed(a.merge.slack_mm));
  config.set("out", a.out);
  finish(config, a.out);
}

struct EvalArgs {
  std::string predictions;
  std::string candidates;
  std::string reference;
  std::string irrelevant;
  std::string scans;
  std::string out;
  std::size_t cap = kDefaultMarkLimit;
  std::size_t bootstraps = kDefaultBootstraps;
  std::vector<double> rates{kCpmRates.begin(), kCpmRates.end()};
  bool multi_hit = false;
  bool no_plot = false;
};

inline void set_eval_config(RunConfig& c, const EvalArgs& a) {
  c.set("reference", a.reference);
  c.set("irrelevant", a.irrelevant);
  c.set("scans", a.scans.empty() ? "derived" : a.scans);
  c.set("cap", std::to_string(a.cap));
  c.set("bootstraps", std::to_string(a.bootstraps));
  c.set("rates", join(a.rates));
  c.set("mark_may_hit_several_nodules", a.multi_hit ? "true" : "false");
  c.set("out", a.out);
}

inline void run_evaluate(const EvalArgs& a, const Globals& g) {
  if (a.predictions.empty() == a.candidates.empty())
    throw ValidationError("give exactly one of --predictions or --candidates");
  std::vector<CadMark> marks = a.predictions.empty() ? candidates_as_marks(a.candidates) : read_predictions_csv(a.predictions);
  const auto positives = read_positives_csv(a.reference);
  const auto irrelevant = a.irrelevant.empty() ? std::vector<IrrelevantFinding>{} : read_irrelevant_csv(a.irrelevant);
  const auto scans = scan_set(a.scans, positives, irrelevant, {&marks});

  EvaluationOptions options;
  options.mark_limit = a.cap;
  options.bootstraps = a.bootstraps;
  options.seed = derive_seed(g.seed, "evaluate");
  options.rates = a.rates;
  options.hits.mark_may_hit_several_nodules = a.multi_hit;
  const Evaluation e = evaluate(marks, positives, irrelevant, scans, options);

  prepare_out_dir(a.out);
  const fs::path out(a.out);
  write_cpm_csv(out / "cpm.csv", e.report);
  write_froc_csv(out / "froc.csv", e.curve);
  write_labels_csv(out / "marks.csv", e);
  if (e.band) write_band_csv(out / "froc_band.csv", *e.band);
  if (!a.no_plot) {
    const std::string label = fs::path(a.predictions.empty() ? a.candidates : a.predictions).stem().string();
    write_froc_svg(out / "froc.svg", {{label, &e.curve, e.band ? &*e.band : nullptr}});
  }

  std::cout << "scans " << scans.size() << ", nodules " << e.curve.nodule_count << ", TP " << e.curve.true_positives
            << ", FP " << e.curve.false_positives << "\n";
  for (std::size_t n = 0; n < e.report.rates.size(); ++n)
    std::cout << "  sensitivity @ " << format_fixed(e.report.rates[n], 3) << " FP/scan: "
              << format_fixed(e.report.sensitivities[n], 3) << "\n";
  std::cout << "CPM " << format_fixed(e.report.cpm, 3);
  if (e.report.cpm_band)
    std::cout << " [" << format_fixed(e.report.cpm_band->lower, 3) << ", " << format_fixed(e.report.cpm_band->upper, 3)
              << "]";
  std::cout << "\n";

  RunConfig config = base_config("evaluate", g);
  config.set(a.predictions.empty() ? "candidates" : "predictions", a.predictions.empty() ? a.candidates : a.predictions);
  set_eval_config(config, a);
  finish(config, a.out);
}

struct CompareArgs {
  EvalArgs eval;
  std::string other;
};

inline void run_compare(const CompareArgs& c, const Globals& g) {
  const EvalArgs& a = c.eval;
  auto marks_a = read_predictions_csv(a.predictions);
  auto marks_b = read_predictions_csv(c.other);
  const auto positives = read_positives_csv(a.reference);
  const auto irrelevant = a.irrelevant.empty() ? std::vector<IrrelevantFinding>{} : read_irrelevant_csv(a.irrelevant);
  const auto scans = scan_set(a.scans, positives, irrelevant, {&marks_a, &marks_b});
  if (a.bootstraps < 1) throw ValidationError("compare needs --bootstraps >= 1");

  HitOptions hits;
  hits.mark_may_hit_several_nodules = a.multi_hit;
  const auto capped_a = cap_marks(marks_a, a.cap), capped_b = cap_marks(marks_b, a.cap);
  const ScanOutcomes oa(capped_a, positives, irrelevant, scans, hits), ob(capped_b, positives, irrelevant, scans, hits);
  const auto ra = cpm(froc(assign_hits(capped_a, positives, irrelevant, hits), scans.size()), a.rates);
  const auto rb = cpm(froc(assign_hits(capped_b, positives, irrelevant, hits), scans.size()), a.rates);
  const double p = compare_systems(oa, ob, a.bootstraps, derive_seed(g.seed, "compare"));

  prepare_out_dir(a.out);
  CsvWriter w(fs::path(a.out) / "comparison.csv", {"system_a", "system_b", "cpm_a", "cpm_b", "difference", "p_value"});
  const std::string name_a = fs::path(a.predictions).stem().string(), name_b = fs::path(c.other).stem().string();
  w.row({name_a, name_b, format_fixed(ra.cpm), format_fixed(rb.cpm), format_fixed(ra.cpm - rb.cpm), format_fixed(p)});
  w.close();
  std::cout << name_a << " CPM " << format_fixed(ra.cpm, 3) << ", " << name_b << " CPM " << format_fixed(rb.cpm, 3)
            << ", p = " << format_fixed(p, 4) << "\n";

  RunConfig config = base_config("compare", g);
  config.set("predictions", a.predictions);
  config.set("other", c.other);
  set_eval_config(config, a);
  finish(config, a.out);
}

struct EnsembleArgs {
  std::vector<std::string> predictions;  // [name=]path
  std::string reference;
  std::string irrelevant;
  std::string scans;
  std::string out;
  std::size_t cap = kDefaultMarkLimit;
  std::size_t bootstraps = kDefaultBootstraps;
  double tolerance = kDefaultAlignTolerance;
  bool drop_incomplete = false;
  bool multi_hit = false;
};

inline void run_ensemble(const EnsembleArgs& a, const Globals& g) {
  std::vector<PredictionSet> sets;
  for (const auto& arg : a.predictions) {
    auto [name, path] = named_path(arg);
    sets.push_back(read_prediction_set(path, name));
  }
  const auto positives = read_positives_csv(a.reference);
  const auto irrelevant = a.irrelevant.empty() ? std::vector<IrrelevantFinding>{} : read_irrelevant_csv(a.irrelevant);
  std::vector<std::vector<CadMark>*> mark_sets;
  for (auto& s : sets) mark_sets.push_back(&s.predictions);
  const auto scans = scan_set(a.scans, positives, irrelevant, mark_sets);

  AlignedTable table = align_candidates(sets, a.tolerance);
  if (!table.complete()) {
    if (!a.drop_incomplete)
      throw ValidationError(std::to_string(table.unmatched.size()) +
                            " candidates are not scored by every system (use --drop-incomplete to skip them)");
    std::cerr << "dropping " << table.unmatched.size() << " unmatched candidate entries\n";
    table = drop_incomplete_rows(std::move(table));
  }
  EnsembleOptions options;
  options.mark_limit = a.cap;
  options.bootstraps = a.bootstraps;
  options.seed = derive_seed(g.seed, "ensemble");
  options.hits.mark_may_hit_several_nodules = a.multi_hit;
  const auto rows = ensemble_sweep(table, positives, irrelevant, scans, options);

  prepare_out_dir(a.out);
  write_ensemble_csv(fs::path(a.out) / "ensemble.csv", rows, sets.size());
  for (const auto& r : rows) std::cout << r.name << ": CPM " << format_fixed(r.report.cpm, 3) << "\n";

  RunConfig config = base_config("ensemble", g);
  config.set("predictions", join(a.predictions));
  config.set("reference", a.reference);
  config.set("irrelevant", a.irrelevant);
  config.set("scans", a.scans.empty() ? "derived" : a.scans);
  config.set("cap", std::to_string(a.cap));
  config.set("bootstraps", std::to_string(a.bootstraps));
  config.set("tolerance_mm", format_fixed(a.tolerance));
  config.set("drop_incomplete", a.drop_incomplete ? "true" : "false");
  config.set("mark_may_hit_several_nodules", a.multi_hit ? "true" : "false");
  config.set("out", a.out);
  finish(config, a.out);
}

// ---- Entry point ------------------------------------------------------------

inline void add_reference_options(CLI::App* sub, std::string& reference, std::string& irrelevant, std::string& scans) {
  sub->add_option("--reference", reference, "Reference nodules CSV (annotations schema)")
      ->required()
      ->envname("LUNA_REFERENCE");
  sub->add_option("--irrelevant", irrelevant, "Irrelevant findings CSV (annotations schema)")->envname("LUNA_IRRELEVANT");
  sub->add_option("--scans", scans, "Scan list (one id per line or CSV with seriesuid)")->envname("LUNA_SCANS");
}

inline int run(int argc, const char* const* argv, std::ostream& err = std::cerr) {
  CLI::App app{"LUNA-style nodule detection evaluation toolkit", "luna"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--threads", g.threads, "Worker threads (0 = all cores)");
  app.add_option("--seed", g.seed, "Root seed for every random stream");

  PhantomArgs phantom;
  auto* s_phantom = app.add_subcommand("phantom", "Generate synthetic volumes with known nodules");
  s_phantom->add_option("--spec", phantom.specs, "Phantom spec file (repeatable)")->required();
  s_phantom->add_option("--out", phantom.out, "Output directory")->required();

  BuildReferenceArgs build;
  auto* s_build = app.add_subcommand("build-reference", "Merge reader annotations into a reference standard");
  s_build->add_option("--annotations", build.annotations, "Reader annotations CSV")->required();
  s_build->add_option("--out", build.out, "Output directory")->required();
  s_build->add_option("--min-agreement", build.min_agreement, "Readers needed for a positive")
      ->check(CLI::Range(1, 4))
      ->capture_default_str();
  s_build->add_option("--irrelevant-radius", build.irrelevant_radius, "Radius for findings without a diameter (mm)")
      ->capture_default_str();

  DetectArgs detect;
  auto* s_detect = app.add_subcommand("detect", "Run candidate detectors on volumes");
  s_detect->add_option("--volume", detect.volumes, "Input .mhd volume (repeatable)");
  s_detect->add_option("--scans-dir", detect.scans_dir, "Directory of .mhd volumes")->envname("LUNA_SCANS_DIR");
  s_detect->add_option("--mask", detect.mask, "Lung mask for a single volume");
  s_detect->add_flag("--no-mask", detect.no_mask, "Ignore <scan>_mask.mhd next to volumes");
  s_detect->add_option("--detector", detect.detectors, "isicad, subsolid or large (repeatable)")->capture_default_str();
  s_detect->add_option("--out", detect.out, "Output directory")->required();
  s_detect->add_option("--isicad-spacing", detect.isicad.target_spacing_mm)->capture_default_str();
  s_detect->add_option("--isicad-sigma", detect.isicad.sigma_voxels)->capture_default_str();
  s_detect->add_option("--isicad-seed-si", detect.isicad.seed_si_min)->capture_default_str();
  s_detect->add_option("--isicad-seed-cv", detect.isicad.seed_cv_min)->capture_default_str();
  s_detect->add_option("--isicad-grow-si", detect.isicad.grow_si_min)->capture_default_str();
  s_detect->add_option("--isicad-grow-cv", detect.isicad.grow_cv_min)->capture_default_str();
  s_detect->add_option("--isicad-merge-radius", detect.isicad.merge_radius_voxels)->capture_default_str();
  s_detect->add_option("--isicad-min-voxels", detect.isicad.min_cluster_voxels)->capture_default_str();
  s_detect->add_option("--subsolid-lower", detect.subsolid.lower_hu)->capture_default_str();
  s_detect->add_option("--subsolid-upper", detect.subsolid.upper_hu)->capture_default_str();
  s_detect->add_option("--subsolid-element", detect.subsolid.element_diameter_voxels)->capture_default_str();
  s_detect->add_option("--subsolid-min-volume", detect.subsolid.min_volume_mm3)->capture_default_str();
  s_detect->add_option("--large-threshold", detect.large.threshold_hu)->capture_default_str();
  s_detect->add_option("--large-closing", detect.large.closing_radius_voxels)->capture_default_str();
  s_detect->add_option("--large-opening", detect.large.opening_radius_voxels)->capture_default_str();
  s_detect->add_option("--large-min-diameter", detect.large.min_diameter_mm)->capture_default_str();
  s_detect->add_option("--large-max-diameter", detect.large.max_diameter_mm)->capture_default_str();

  CombineArgs combine;
  auto* s_combine = app.add_subcommand("combine-candidates", "Merge candidate lists and sweep all subsets");
  s_combine->add_option("--candidates", combine.candidates, "[name=]candidates CSV (repeatable)")->required();
  s_combine->add_option("--reference", combine.reference, "Reference nodules CSV")->required()->envname("LUNA_REFERENCE");
  s_combine->add_option("--scans", combine.scans, "Scan list")->envname("LUNA_SCANS");
  s_combine->add_option("--masks-dir", combine.masks_dir, "Directory with <scan>_mask.mhd lung masks");
  s_combine->add_option("--merge-distance", combine.merge.merge_distance_mm)->capture_default_str();
  s_combine->add_option("--slack", combine.merge.slack_mm, "Allowed distance outside the lung mask (mm)")
      ->capture_default_str();
  s_combine->add_option("--out", combine.out, "Output directory")->required();

  auto eval_options = [](CLI::App* sub, EvalArgs& e) {
    add_reference_options(sub, e.reference, e.irrelevant, e.scans);
    sub->add_option("--out", e.out, "Output directory")->required();
    sub->add_option("--cap", e.cap, "Marks kept per scan")->check(CLI::PositiveNumber)->capture_default_str();
    sub->add_option("--bootstraps", e.bootstraps, "Bootstrap replicates (0 disables)")->capture_default_str();
    sub->add_option("--rates", e.rates, "FP/scan rates averaged into the CPM")->delimiter(',')->capture_default_str();
    sub->add_flag("--multi-hit", e.multi_hit, "Let one mark hit several nodules");
  };

  EvalArgs eval;
  auto* s_eval = app.add_subcommand("evaluate", "FROC and CPM of one prediction set");
  s_eval->add_option("--predictions", eval.predictions, "Predictions CSV");
  s_eval->add_option("--candidates", eval.candidates, "Candidates CSV (every mark scored 1)");
  s_eval->add_flag("--no-plot", eval.no_plot, "Skip the SVG plot");
  eval_options(s_eval, eval);

  CompareArgs compare;
  auto* s_compare = app.add_subcommand("compare", "Paired bootstrap test of two prediction sets");
  s_compare->add_option("--predictions", compare.eval.predictions, "Predictions CSV of system A")->required();
  s_compare->add_option("--other", compare.other, "Predictions CSV of system B")->required();
  eval_options(s_compare, compare.eval);

  EnsembleArgs ens;
  auto* s_ens = app.add_subcommand("ensemble", "Average probabilities over every subset of systems");
  s_ens->add_option("--predictions", ens.predictions, "[name=]predictions CSV (repeatable)")->required();
  add_reference_options(s_ens, ens.reference, ens.irrelevant, ens.scans);
  s_ens->add_option("--out", ens.out, "Output directory")->required();
  s_ens->add_option("--cap", ens.cap)->check(CLI::PositiveNumber)->capture_default_str();
  s_ens->add_option("--bootstraps", ens.bootstraps, "Replicates for p-values (0 disables)")->capture_default_str();
  s_ens->add_option("--tolerance", ens.tolerance, "Alignment tolerance (mm)")->capture_default_str();
  s_ens->add_flag("--drop-incomplete", ens.drop_incomplete, "Skip candidates some system did not score");
  s_ens->add_flag("--multi-hit", ens.multi_hit, "Let one mark hit several nodules");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, std::cout, err);
    return code == 0 ? 0 : 1;
  }

  try {
    set_max_threads(g.threads);
    if (*s_phantom) run_phantom(phantom, g);
    else if (*s_build) run_build_reference(build, g);
    else if (*s_detect) run_detect(detect, g);
    else if (*s_combine) run_combine(combine, g);
    else if (*s_eval) run_evaluate(eval, g);
    else if (*s_compare) run_compare(compare, g);
    else if (*s_ens) run_ensemble(ens, g);
    return 0;
  } catch (const IoError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace luna::cli
