#pragma once

// Self-contained SVG rendering of FROC curves: log2 FP axis from 1/8 to 8,
// sensitivity axis 0..1, optional dashed 95% band.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "luna/error.hpp"
#include "luna/froc.hpp"

namespace luna {

struct PlotSeries {
  std::string label;
  const FrocCurve* curve = nullptr;
  const BootstrapBand* band = nullptr;
};

inline std::string froc_svg(const std::vector<PlotSeries>& series, const std::string& title = "FROC") {
  constexpr double width = 640, height = 480, left = 70, right = 20, top = 40, bottom = 60;
  constexpr double fp_min = 0.125, fp_max = 8.0;
  const double pw = width - left - right, ph = height - top - bottom;
  auto sx = [&](double fp) {
    const double c = std::clamp(fp, fp_min, fp_max);
    return left + pw * (std::log2(c) - std::log2(fp_min)) / (std::log2(fp_max) - std::log2(fp_min));
  };
  auto sy = [&](double s) { return top + ph * (1.0 - std::clamp(s, 0.0, 1.0)); };
  auto num = [](double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.2f", v);
    return std::string(b);
  };
  static const char* colours[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b"};

  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
    << "\" font-family=\"sans-serif\" font-size=\"12\">\n"
    << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    << "<text x=\"" << width / 2 << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
  for (double fp : kCpmRates) {
    s << "<line x1=\"" << num(sx(fp)) << "\" y1=\"" << top << "\" x2=\"" << num(sx(fp)) << "\" y2=\"" << top + ph
      << "\" stroke=\"#ddd\"/>\n"
      << "<text x=\"" << num(sx(fp)) << "\" y=\"" << top + ph + 18 << "\" text-anchor=\"middle\">"
      << (fp < 1 ? "1/" + std::to_string(int(std::lround(1 / fp))) : std::to_string(int(fp))) << "</text>\n";
  }
  for (int t = 0; t <= 10; ++t) {
    const double v = t / 10.0;
    s << "<line x1=\"" << left << "\" y1=\"" << num(sy(v)) << "\" x2=\"" << left + pw << "\" y2=\"" << num(sy(v))
      << "\" stroke=\"#eee\"/>\n"
      << "<text x=\"" << left - 8 << "\" y=\"" << num(sy(v) + 4) << "\" text-anchor=\"end\">" << num(v).substr(0, 3)
      << "</text>\n";
  }
  s << "<rect x=\"" << left << "\" y=\"" << top << "\" width=\"" << pw << "\" height=\"" << ph
    << "\" fill=\"none\" stroke=\"black\"/>\n"
    << "<text x=\"" << left + pw / 2 << "\" y=\"" << height - 16 << "\" text-anchor=\"middle\">"
    << "Average number of false positives per scan</text>\n"
    << "<text transform=\"translate(18," << top + ph / 2 << ") rotate(-90)\" text-anchor=\"middle\">Sensitivity</text>\n";

  for (std::size_t n = 0; n < series.size(); ++n) {
    const char* colour = colours[n % std::size(colours)];
    const auto& sr = series[n];
    if (sr.curve) {
      // Plot the interpolated curve on a dense grid so it matches the CPM rule.
      std::string path;
      for (int t = 0; t <= 200; ++t) {
        const double fp = fp_min * std::pow(fp_max / fp_min, t / 200.0);
        path += (t ? " L" : "M") + num(sx(fp)) + "," + num(sy(sensitivity_at(sr.curve->points, fp)));
      }
      s << "<path d=\"" << path << "\" fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\"/>\n";
    }
    if (sr.band) {
      for (int side = 0; side < 2; ++side) {
        std::string path;
        for (std::size_t t = 0; t < sr.band->curve_rates.size(); ++t) {
          const double v = side ? sr.band->curve[t].upper : sr.band->curve[t].lower;
          path += (t ? " L" : "M") + num(sx(sr.band->curve_rates[t])) + "," + num(sy(v));
        }
        s << "<path d=\"" << path << "\" fill=\"none\" stroke=\"" << colour
          << "\" stroke-width=\"1\" stroke-dasharray=\"5,4\"/>\n";
      }
    }
    s << "<text x=\"" << left + pw - 10 << "\" y=\"" << top + ph - 12 - 16.0 * double(series.size() - 1 - n)
      << "\" text-anchor=\"end\" fill=\"" << colour << "\">" << sr.label << "</text>\n";
  }
  s << "</svg>\n";
  return s.str();
}

inline void write_froc_svg(const std::filesystem::path& path, const std::vector<PlotSeries>& series,
                           const std::string& title = "FROC") {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << froc_svg(series, title);
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace luna
