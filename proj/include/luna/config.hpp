#pragma once

// Plain-text key = value run configuration, written next to every output so
// a run can be repeated exactly.

#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "luna/error.hpp"

namespace luna {

struct RunConfig {
  std::string subcommand;
  std::map<std::string, std::string> values;  // sorted, so the file is stable

  void set(const std::string& key, const std::string& value) { values[key] = value; }

  std::string to_text() const {
    std::string out = "subcommand = " + subcommand + "\n";
    for (const auto& [k, v] : values) out += k + " = " + v + "\n";
    return out;
  }

  static RunConfig parse(const std::string& text) {
    RunConfig c;
    std::size_t pos = 0;
    while (pos < text.size()) {
      std::size_t eol = text.find('\n', pos);
      if (eol == std::string::npos) eol = text.size();
      const std::string line = text.substr(pos, eol - pos);
      pos = eol + 1;
      const auto eq = line.find(" = ");
      if (eq == std::string::npos) continue;
      const std::string key = line.substr(0, eq), value = line.substr(eq + 3);
      if (key == "subcommand") c.subcommand = value;
      else c.values[key] = value;
    }
    return c;
  }

  void write(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << to_text();
    if (!out) throw IoError("failed writing " + path.string());
  }
};

}  // namespace luna
