#pragma once

// The three mark CSV schemas plus a small table reader used by every other
// CSV format in the toolkit. Errors carry "file:line:" context.
//
//   annotations  seriesuid,coordX,coordY,coordZ,diameter_mm
//   candidates   seriesuid,coordX,coordY,coordZ
//   predictions  seriesuid,coordX,coordY,coordZ,probability
//
// Extra columns are tolerated on read. Coordinates are world millimetres.

#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "luna/error.hpp"
#include "luna/image.hpp"

namespace luna {

/// A parsed CSV file: header names and raw string cells.
class CsvTable {
 public:
  static CsvTable read(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    CsvTable table;
    table.path_ = path.string();
    std::string line;
    std::size_t line_no = 0;
    bool have_header = false;
    while (std::getline(in, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (line.find_first_not_of(" \t") == std::string::npos) continue;
      auto cells = split(line);
      if (!have_header) {
        table.header_ = std::move(cells);
        have_header = true;
        continue;
      }
      if (cells.size() < table.header_.size())
        throw ValidationError(table.path_ + ":" + std::to_string(line_no) + ": expected " +
                              std::to_string(table.header_.size()) + " fields, got " +
                              std::to_string(cells.size()));
      table.rows_.push_back(std::move(cells));
      table.line_numbers_.push_back(line_no);
    }
    if (in.bad()) throw IoError("failed reading " + path.string());
    if (!have_header) throw ValidationError(path.string() + ": missing header row");
    return table;
  }

  const std::string& path() const { return path_; }
  const std::vector<std::string>& header() const { return header_; }
  std::size_t row_count() const { return rows_.size(); }

  std::optional<std::size_t> find_column(std::string_view name) const {
    for (std::size_t c = 0; c < header_.size(); ++c)
      if (header_[c] == name) return c;
    return std::nullopt;
  }

  std::size_t column(std::string_view name) const {
    if (auto c = find_column(name)) return *c;
    throw ValidationError(path_ + ":1: missing column '" + std::string(name) + "'");
  }

  const std::string& text(std::size_t row, std::size_t col) const { return rows_[row][col]; }

  double real(std::size_t row, std::size_t col) const {
    const std::string& cell = rows_[row][col];
    double x = 0.0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), x);
    if (cell.empty() || ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(x))
      fail(row, "non-numeric value '" + cell + "' in column '" + header_[col] + "'");
    return x;
  }

  long long integer(std::size_t row, std::size_t col) const {
    const std::string& cell = rows_[row][col];
    long long x = 0;
    const auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), x);
    if (cell.empty() || ec != std::errc{} || ptr != cell.data() + cell.size())
      fail(row, "non-integer value '" + cell + "' in column '" + header_[col] + "'");
    return x;
  }

  [[noreturn]] void fail(std::size_t row, const std::string& message) const {
    throw ValidationError(path_ + ":" + std::to_string(line_numbers_[row]) + ": " + message);
  }

 private:
  static std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    bool quoted = false;
    for (std::size_t n = 0; n < line.size(); ++n) {
      const char c = line[n];
      if (quoted) {
        if (c == '"' && n + 1 < line.size() && line[n + 1] == '"') {
          cell += '"';
          ++n;
        } else if (c == '"') {
          quoted = false;
        } else {
          cell += c;
        }
      } else if (c == '"') {
        quoted = true;
      } else if (c == ',') {
        cells.push_back(trimmed(cell));
        cell.clear();
      } else {
        cell += c;
      }
    }
    cells.push_back(trimmed(cell));
    return cells;
  }

  static std::string trimmed(const std::string& s) {
    const auto first = s.find_first_not_of(" \t");
    if (first == std::string::npos) return {};
    return s.substr(first, s.find_last_not_of(" \t") - first + 1);
  }

  std::string path_;
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
  std::vector<std::size_t> line_numbers_;
};

/// Fixed 6-decimal formatting used for every real written to CSV.
inline std::string format_fixed(double x, int decimals = 6) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, x);
  return buf;
}

/// Quotes a cell only when it would otherwise break the row.
inline std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

/// Buffered CSV writer; throws IoError if the file cannot be written.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
      : path_(path), out_(path, std::ios::trunc) {
    if (!out_) throw IoError("cannot write " + path.string());
    row(header);
  }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t n = 0; n < cells.size(); ++n) {
      if (n) out_ << ',';
      out_ << csv_cell(cells[n]);
    }
    out_ << '\n';
    if (!out_) throw IoError("failed writing " + path_.string());
  }

  void close() {
    out_.close();
    if (!out_) throw IoError("failed writing " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

enum class MarkKind { Annotations, Candidates, Predictions };

/// One row of any mark schema. `diameter_mm` is set for annotations,
/// `probability` for predictions, `detector` when the column is present.
struct MarkRow {
  std::string scan_id;
  WorldPoint center;
  std::optional<double> diameter_mm;
  std::optional<double> probability;
  std::string detector;
};

inline std::vector<MarkRow> read_marks_csv(const std::filesystem::path& path, MarkKind kind) {
  const CsvTable t = CsvTable::read(path);
  const std::size_t c_id = t.column("seriesuid");
  const std::size_t c_x = t.column("coordX");
  const std::size_t c_y = t.column("coordY");
  const std::size_t c_z = t.column("coordZ");
  std::optional<std::size_t> c_extra;
  if (kind == MarkKind::Annotations) c_extra = t.column("diameter_mm");
  if (kind == MarkKind::Predictions) c_extra = t.column("probability");
  const auto c_detector = t.find_column("detector");

  std::vector<MarkRow> rows;
  rows.reserve(t.row_count());
  for (std::size_t r = 0; r < t.row_count(); ++r) {
    MarkRow row;
    row.scan_id = t.text(r, c_id);
    if (row.scan_id.empty()) t.fail(r, "empty seriesuid");
    row.center = {t.real(r, c_x), t.real(r, c_y), t.real(r, c_z)};
    if (kind == MarkKind::Annotations) row.diameter_mm = t.real(r, *c_extra);
    if (kind == MarkKind::Predictions) {
      const double p = t.real(r, *c_extra);
      if (p < 0.0 || p > 1.0) t.fail(r, "probability " + t.text(r, *c_extra) + " outside [0,1]");
      row.probability = p;
    }
    if (c_detector) row.detector = t.text(r, *c_detector);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline void write_marks_csv(const std::filesystem::path& path, MarkKind kind,
                            const std::vector<MarkRow>& rows, bool with_detector = false) {
  std::vector<std::string> header{"seriesuid", "coordX", "coordY", "coordZ"};
  if (kind == MarkKind::Annotations) header.emplace_back("diameter_mm");
  if (kind == MarkKind::Predictions) header.emplace_back("probability");
  if (with_detector) header.emplace_back("detector");
  CsvWriter w(path, header);
  for (const auto& row : rows) {
    std::vector<std::string> cells{row.scan_id, format_fixed(row.center.x), format_fixed(row.center.y),
                                   format_fixed(row.center.z)};
    if (kind == MarkKind::Annotations) cells.push_back(format_fixed(row.diameter_mm.value_or(0.0)));
    if (kind == MarkKind::Predictions) cells.push_back(format_fixed(row.probability.value_or(0.0)));
    if (with_detector) cells.push_back(row.detector);
    w.row(cells);
  }
  w.close();
}

/// Reads a scan list: either one id per line, or a CSV with a seriesuid column.
inline std::vector<std::string> read_scan_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::string first;
  while (std::getline(in, first) && first.find_first_not_of(" \t\r") == std::string::npos) {
  }
  in.close();
  if (first.find(',') != std::string::npos || first.rfind("seriesuid", 0) == 0) {
    const CsvTable t = CsvTable::read(path);
    const std::size_t c = t.column("seriesuid");
    std::vector<std::string> ids;
    for (std::size_t r = 0; r < t.row_count(); ++r) ids.push_back(t.text(r, c));
    return ids;
  }
  std::ifstream again(path);
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(again, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto a = line.find_first_not_of(" \t");
    if (a == std::string::npos) continue;
    ids.push_back(line.substr(a, line.find_last_not_of(" \t") - a + 1));
  }
  return ids;
}

}  // namespace luna
