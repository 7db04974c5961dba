#pragma once

// MetaImage (.mhd + .raw) reading and writing.
//
// Supported subset: NDims = 3, one channel, uncompressed, little-endian,
// identity (or absent) TransformMatrix, ElementType in {MET_SHORT, MET_UCHAR,
// MET_FLOAT}. The payload is either a separate file named by ElementDataFile
// or appended to the header (ElementDataFile = LOCAL). Anything else raises
// ValidationError.

#include <algorithm>
#include <bit>
#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "luna/error.hpp"
#include "luna/image.hpp"

namespace luna {

static_assert(std::endian::native == std::endian::little,
              "MetaImage payloads are decoded assuming a little-endian host");

/// Header keys that carry no meaning for this toolkit, kept verbatim so a
/// read/write cycle does not drop them.
using HeaderKeys = std::vector<std::pair<std::string, std::string>>;

struct MetaImage {
  Volume volume;
  HeaderKeys extra_keys;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(first, last - first + 1));
}

inline std::vector<double> parse_reals(const std::string& key, const std::string& value) {
  std::vector<double> out;
  std::istringstream in(value);
  std::string token;
  while (in >> token) {
    double x = 0.0;
    const auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), x);
    if (ec != std::errc{} || ptr != token.data() + token.size())
      throw ValidationError("MetaImage key " + key + ": non-numeric value '" + token + "'");
    out.push_back(x);
  }
  return out;
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  std::string v = value;
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ValidationError("MetaImage key " + key + ": expected True/False, got '" + value + "'");
}

inline std::string format_real(double x) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, ptr);
}

inline const char* element_type_name(ElementKind kind) {
  switch (kind) {
    case ElementKind::Int16: return "MET_SHORT";
    case ElementKind::UInt8: return "MET_UCHAR";
    case ElementKind::Float32: return "MET_FLOAT";
  }
  return "";
}

template <class T>
Image<T> decode_payload(const Geometry& geometry, const char* bytes, std::size_t length) {
  std::vector<T> data(geometry.voxel_count());
  if (length != data.size() * sizeof(T))
    throw ValidationError("MetaImage payload has " + std::to_string(length) + " bytes, expected " +
                          std::to_string(data.size() * sizeof(T)));
  std::memcpy(data.data(), bytes, length);
  return Image<T>(geometry, std::move(data));
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("failed reading " + path.string());
  return std::move(buf).str();
}

}  // namespace detail

inline MetaImage read_metaimage_with_header(const std::filesystem::path& header_path) {
  const std::string text = detail::read_file(header_path);

  HeaderKeys extra;
  std::optional<std::vector<double>> dim_size, spacing, offset;
  std::optional<ElementKind> kind;
  std::string data_file;
  std::size_t payload_start = std::string::npos;
  int ndims = 0;
  int channels = 1;

  std::size_t pos = 0;
  while (pos < text.size()) {
    std::size_t eol = text.find('\n', pos);
    if (eol == std::string::npos) eol = text.size();
    const std::string line = detail::trim(std::string_view(text).substr(pos, eol - pos));
    pos = eol + 1;
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ValidationError(header_path.string() + ": malformed header line '" + line + "'");
    const std::string key = detail::trim(std::string_view(line).substr(0, eq));
    const std::string value = detail::trim(std::string_view(line).substr(eq + 1));

    if (key == "NDims") {
      const auto v = detail::parse_reals(key, value);
      ndims = v.size() == 1 ? static_cast<int>(v[0]) : -1;
    } else if (key == "DimSize") {
      dim_size = detail::parse_reals(key, value);
    } else if (key == "ElementSpacing") {
      spacing = detail::parse_reals(key, value);
    } else if (key == "Offset" || key == "Origin" || key == "Position") {
      offset = detail::parse_reals(key, value);
    } else if (key == "ElementType") {
      if (value == "MET_SHORT") kind = ElementKind::Int16;
      else if (value == "MET_UCHAR") kind = ElementKind::UInt8;
      else if (value == "MET_FLOAT") kind = ElementKind::Float32;
      else throw ValidationError(header_path.string() + ": unsupported ElementType " + value);
    } else if (key == "CompressedData") {
      if (detail::parse_bool(key, value))
        throw ValidationError(header_path.string() + ": compressed MetaImage is not supported");
    } else if (key == "BinaryDataByteOrderMSB" || key == "ElementByteOrderMSB") {
      if (detail::parse_bool(key, value))
        throw ValidationError(header_path.string() + ": big-endian payloads are not supported");
    } else if (key == "TransformMatrix" || key == "Rotation" || key == "Orientation") {
      const auto m = detail::parse_reals(key, value);
      const double identity[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};
      bool ok = m.size() == 9;
      for (std::size_t n = 0; ok && n < 9; ++n) ok = std::abs(m[n] - identity[n]) <= 1e-9;
      if (!ok) throw ValidationError(header_path.string() + ": non-identity " + key + " is not supported");
    } else if (key == "ObjectType" || key == "BinaryData") {
      // implied by the subset we read
    } else if (key == "ElementNumberOfChannels") {
      const auto v = detail::parse_reals(key, value);
      channels = v.size() == 1 ? static_cast<int>(v[0]) : -1;
    } else if (key == "ElementDataFile") {
      data_file = value;
      payload_start = pos;
      break;  // must be the last key
    } else {
      extra.emplace_back(key, value);
    }
  }

  const std::string where = header_path.string() + ": ";
  if (ndims != 3) throw ValidationError(where + "only NDims = 3 is supported");
  if (channels != 1) throw ValidationError(where + "only single-channel images are supported");
  if (!dim_size || dim_size->size() != 3) throw ValidationError(where + "DimSize must have 3 entries");
  if (!kind) throw ValidationError(where + "missing ElementType");
  if (data_file.empty()) throw ValidationError(where + "missing ElementDataFile");

  Geometry g;
  for (int a = 0; a < 3; ++a) {
    const double d = (*dim_size)[a];
    if (!(d >= 1.0) || d != std::floor(d)) throw ValidationError(where + "DimSize must be positive integers");
    g.dims[a] = static_cast<std::size_t>(d);
  }
  if (spacing) {
    if (spacing->size() != 3) throw ValidationError(where + "ElementSpacing must have 3 entries");
    g.spacing = {(*spacing)[0], (*spacing)[1], (*spacing)[2]};
  }
  if (offset) {
    if (offset->size() != 3) throw ValidationError(where + "Offset must have 3 entries");
    g.origin = {(*offset)[0], (*offset)[1], (*offset)[2]};
  }
  try {
    g.validate();
  } catch (const ValidationError& e) {
    throw ValidationError(where + e.what());
  }

  std::string payload_owner;
  const char* bytes = nullptr;
  std::size_t length = 0;
  if (data_file == "LOCAL") {
    bytes = text.data() + std::min(payload_start, text.size());
    length = text.size() - std::min(payload_start, text.size());
  } else {
    std::filesystem::path raw = data_file;
    if (raw.is_relative()) raw = header_path.parent_path() / raw;
    if (!std::filesystem::exists(raw)) throw IoError(where + "payload file " + raw.string() + " not found");
    payload_owner = detail::read_file(raw);
    bytes = payload_owner.data();
    length = payload_owner.size();
  }

  MetaImage out{Image<float>{}, std::move(extra)};
  try {
    switch (*kind) {
      case ElementKind::Int16: out.volume = detail::decode_payload<std::int16_t>(g, bytes, length); break;
      case ElementKind::UInt8: out.volume = detail::decode_payload<std::uint8_t>(g, bytes, length); break;
      case ElementKind::Float32: out.volume = detail::decode_payload<float>(g, bytes, length); break;
    }
  } catch (const ValidationError& e) {
    throw ValidationError(where + e.what());
  }
  return out;
}

inline Volume read_metaimage(const std::filesystem::path& header_path) {
  return read_metaimage_with_header(header_path).volume;
}

/// Writes `<stem>.mhd` + `<stem>.raw` side by side. `extra_keys` are emitted
/// before the geometry keys; keys this writer owns are skipped.
inline void write_metaimage(const Volume& volume, const std::filesystem::path& header_path,
                            const HeaderKeys& extra_keys = {}) {
  const Geometry& g = geometry_of(volume);
  std::filesystem::path raw_path = header_path;
  raw_path.replace_extension(".raw");

  static const char* owned[] = {"ObjectType", "NDims", "BinaryData", "BinaryDataByteOrderMSB",
                                "CompressedData", "TransformMatrix", "Offset", "ElementSpacing",
                                "DimSize", "ElementType", "ElementDataFile"};
  std::ostringstream h;
  h << "ObjectType = Image\n"
    << "NDims = 3\n"
    << "BinaryData = True\n"
    << "BinaryDataByteOrderMSB = False\n"
    << "CompressedData = False\n"
    << "TransformMatrix = 1 0 0 0 1 0 0 0 1\n";
  for (const auto& [key, value] : extra_keys) {
    if (std::find(std::begin(owned), std::end(owned), key) != std::end(owned)) continue;
    h << key << " = " << value << "\n";
  }
  h << "Offset = " << detail::format_real(g.origin.x) << ' ' << detail::format_real(g.origin.y) << ' '
    << detail::format_real(g.origin.z) << "\n"
    << "ElementSpacing = " << detail::format_real(g.spacing[0]) << ' '
    << detail::format_real(g.spacing[1]) << ' ' << detail::format_real(g.spacing[2]) << "\n"
    << "DimSize = " << g.dims[0] << ' ' << g.dims[1] << ' ' << g.dims[2] << "\n"
    << "ElementType = " << detail::element_type_name(kind_of(volume)) << "\n"
    << "ElementDataFile = " << raw_path.filename().string() << "\n";

  {
    std::ofstream out(header_path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + header_path.string());
    out << h.str();
    if (!out) throw IoError("failed writing " + header_path.string());
  }
  std::ofstream out(raw_path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + raw_path.string());
  std::visit(
      [&](const auto& img) {
        using T = typename std::decay_t<decltype(img)>::value_type;
        out.write(reinterpret_cast<const char*>(img.data().data()),
                  static_cast<std::streamsize>(img.size() * sizeof(T)));
      },
      volume);
  if (!out) throw IoError("failed writing " + raw_path.string());
}

}  // namespace luna
