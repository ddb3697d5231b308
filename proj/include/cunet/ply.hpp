// Copyright 2026 The cunet Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "cunet/common.hpp"
#include "cunet/point_cloud.hpp"

namespace cunet {

// PLY ingestion and emission. Reading accepts ascii and
// binary_little_endian files with x, y, z vertex properties and optional
// red, green, blue colors; all other elements and properties are skipped.
// Writing always emits binary_little_endian with float positions and 8-bit
// colors, plus a "comment voxel_extent S" line carrying the grid extent.

struct RawPly {
  std::vector<std::array<double, 3>> xyz;
  std::optional<std::vector<Rgb>> rgb;
};

namespace plydetail {

enum class Scalar {
  kInt8,
  kUInt8,
  kInt16,
  kUInt16,
  kInt32,
  kUInt32,
  kFloat32,
  kFloat64
};

inline std::optional<Scalar> scalar_from_name(const std::string& s) {
  if (s == "char" || s == "int8") return Scalar::kInt8;
  if (s == "uchar" || s == "uint8") return Scalar::kUInt8;
  if (s == "short" || s == "int16") return Scalar::kInt16;
  if (s == "ushort" || s == "uint16") return Scalar::kUInt16;
  if (s == "int" || s == "int32") return Scalar::kInt32;
  if (s == "uint" || s == "uint32") return Scalar::kUInt32;
  if (s == "float" || s == "float32") return Scalar::kFloat32;
  if (s == "double" || s == "float64") return Scalar::kFloat64;
  return std::nullopt;
}

inline std::size_t scalar_size(Scalar s) {
  switch (s) {
    case Scalar::kInt8:
    case Scalar::kUInt8:
      return 1;
    case Scalar::kInt16:
    case Scalar::kUInt16:
      return 2;
    case Scalar::kInt32:
    case Scalar::kUInt32:
    case Scalar::kFloat32:
      return 4;
    case Scalar::kFloat64:
      return 8;
  }
  return 0;
}

inline double decode_scalar(Scalar type, const unsigned char* p) {
  switch (type) {
    case Scalar::kInt8:
      return static_cast<double>(static_cast<std::int8_t>(p[0]));
    case Scalar::kUInt8:
      return static_cast<double>(p[0]);
    case Scalar::kInt16: {
      std::int16_t v;
      std::memcpy(&v, p, 2);
      return static_cast<double>(v);
    }
    case Scalar::kUInt16: {
      std::uint16_t v;
      std::memcpy(&v, p, 2);
      return static_cast<double>(v);
    }
    case Scalar::kInt32: {
      std::int32_t v;
      std::memcpy(&v, p, 4);
      return static_cast<double>(v);
    }
    case Scalar::kUInt32: {
      std::uint32_t v;
      std::memcpy(&v, p, 4);
      return static_cast<double>(v);
    }
    case Scalar::kFloat32: {
      float v;
      std::memcpy(&v, p, 4);
      return static_cast<double>(v);
    }
    case Scalar::kFloat64: {
      double v;
      std::memcpy(&v, p, 8);
      return v;
    }
  }
  return 0.0;
}

// Color channels are normalized to [0, 1] by the source type's range;
// floating-point channels are taken as already normalized.
inline double color_scale(Scalar type) {
  switch (type) {
    case Scalar::kUInt8:
      return 255.0;
    case Scalar::kUInt16:
      return 65535.0;
    default:
      return 1.0;
  }
}

struct Property {
  std::string name;
  Scalar type = Scalar::kFloat32;
  bool is_list = false;
  Scalar count_type = Scalar::kUInt8;
};

struct Element {
  std::string name;
  std::size_t count = 0;
  std::vector<Property> properties;
};

struct Header {
  bool binary = false;
  std::vector<Element> elements;
  std::vector<std::string> comments;
  std::size_t header_lines = 0;
};

inline Header parse_header(std::istream& in, const std::string& path) {
  Header header;
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) {
    throw ParseError(path + ":" + std::to_string(line_no) + ": " + what);
  };
  auto read_line = [&]() {
    if (!std::getline(in, line)) fail("unexpected end of header");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    ++line_no;
  };

  read_line();
  if (line != "ply") fail("missing 'ply' magic");
  bool have_format = false;
  for (;;) {
    read_line();
    std::istringstream ls(line);
    std::string keyword;
    ls >> keyword;
    if (keyword == "end_header") break;
    if (keyword == "comment" || keyword == "obj_info") {
      header.comments.push_back(line);
      continue;
    }
    if (keyword == "format") {
      std::string kind, version;
      ls >> kind >> version;
      if (kind == "ascii") {
        header.binary = false;
      } else if (kind == "binary_little_endian") {
        header.binary = true;
      } else if (kind == "binary_big_endian") {
        fail("big-endian PLY files are not supported");
      } else {
        fail("unknown format '" + kind + "'");
      }
      have_format = true;
      continue;
    }
    if (keyword == "element") {
      Element el;
      long long count = -1;
      ls >> el.name >> count;
      if (el.name.empty() || count < 0 || ls.fail()) fail("malformed element line");
      el.count = static_cast<std::size_t>(count);
      header.elements.push_back(std::move(el));
      continue;
    }
    if (keyword == "property") {
      if (header.elements.empty()) fail("property before any element");
      Property prop;
      std::string type_name;
      ls >> type_name;
      if (type_name == "list") {
        std::string count_name, elem_name;
        ls >> count_name >> elem_name >> prop.name;
        auto ct = scalar_from_name(count_name);
        auto et = scalar_from_name(elem_name);
        if (!ct || !et || prop.name.empty() || ls.fail()) {
          fail("malformed list property");
        }
        prop.is_list = true;
        prop.count_type = *ct;
        prop.type = *et;
      } else {
        auto t = scalar_from_name(type_name);
        ls >> prop.name;
        if (!t || prop.name.empty() || ls.fail()) {
          fail("unknown property type '" + type_name + "'");
        }
        prop.type = *t;
      }
      header.elements.back().properties.push_back(std::move(prop));
      continue;
    }
    fail("unknown header keyword '" + keyword + "'");
  }
  if (!have_format) {
    throw ParseError(path + ": header has no format line");
  }
  header.header_lines = line_no;
  return header;
}

}  // namespace plydetail

inline RawPly read_ply_raw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open PLY file: " + path);
  const plydetail::Header header = plydetail::parse_header(in, path);

  RawPly out;
  for (const auto& element : header.elements) {
    const bool is_vertex = element.name == "vertex";
    int ix = -1, iy = -1, iz = -1, ir = -1, ig = -1, ib = -1;
    if (is_vertex) {
      for (std::size_t p = 0; p < element.properties.size(); ++p) {
        const auto& prop = element.properties[p];
        if (prop.is_list) continue;
        if (prop.name == "x") ix = static_cast<int>(p);
        if (prop.name == "y") iy = static_cast<int>(p);
        if (prop.name == "z") iz = static_cast<int>(p);
        if (prop.name == "red") ir = static_cast<int>(p);
        if (prop.name == "green") ig = static_cast<int>(p);
        if (prop.name == "blue") ib = static_cast<int>(p);
      }
      if (ix < 0 || iy < 0 || iz < 0) {
        throw ParseError(path + ": vertex element lacks x/y/z properties");
      }
      out.xyz.reserve(element.count);
      if (ir >= 0 && ig >= 0 && ib >= 0) {
        out.rgb.emplace();
        out.rgb->reserve(element.count);
      }
    }

    std::vector<double> row(element.properties.size());
    std::vector<unsigned char> buf(8);
    for (std::size_t r = 0; r < element.count; ++r) {
      for (std::size_t p = 0; p < element.properties.size(); ++p) {
        const auto& prop = element.properties[p];
        std::size_t list_len = 1;
        if (prop.is_list) {
          double count_value;
          if (header.binary) {
            in.read(reinterpret_cast<char*>(buf.data()),
                    static_cast<std::streamsize>(plydetail::scalar_size(prop.count_type)));
            if (!in) throw ParseError(path + ": unexpected end of binary payload");
            count_value = plydetail::decode_scalar(prop.count_type, buf.data());
          } else {
            if (!(in >> count_value)) {
              throw ParseError(path + ": unexpected end of ascii payload");
            }
          }
          if (count_value < 0) throw ParseError(path + ": negative list length");
          list_len = static_cast<std::size_t>(count_value);
        }
        double value = 0.0;
        for (std::size_t item = 0; item < list_len; ++item) {
          if (header.binary) {
            in.read(reinterpret_cast<char*>(buf.data()),
                    static_cast<std::streamsize>(plydetail::scalar_size(prop.type)));
            if (!in) throw ParseError(path + ": unexpected end of binary payload");
            value = plydetail::decode_scalar(prop.type, buf.data());
          } else {
            if (!(in >> value)) {
              throw ParseError(path + ": unexpected end of ascii payload");
            }
          }
        }
        if (is_vertex && !prop.is_list) row[p] = value;
      }
      if (is_vertex) {
        out.xyz.push_back({row[static_cast<std::size_t>(ix)],
                           row[static_cast<std::size_t>(iy)],
                           row[static_cast<std::size_t>(iz)]});
        if (out.rgb) {
          const auto& props = element.properties;
          Rgb c;
          c[0] = row[static_cast<std::size_t>(ir)] /
                 plydetail::color_scale(props[static_cast<std::size_t>(ir)].type);
          c[1] = row[static_cast<std::size_t>(ig)] /
                 plydetail::color_scale(props[static_cast<std::size_t>(ig)].type);
          c[2] = row[static_cast<std::size_t>(ib)] /
                 plydetail::color_scale(props[static_cast<std::size_t>(ib)].type);
          out.rgb->push_back(c);
        }
      }
    }
  }
  return out;
}

// Extent recorded by write_ply, when present.
inline std::optional<std::int32_t> ply_extent_comment(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open PLY file: " + path);
  const plydetail::Header header = plydetail::parse_header(in, path);
  for (const auto& c : header.comments) {
    std::istringstream ls(c);
    std::string kw, name;
    long long value = -1;
    ls >> kw >> name >> value;
    if (kw == "comment" && name == "voxel_extent" && value > 0) {
      return static_cast<std::int32_t>(value);
    }
  }
  return std::nullopt;
}

namespace plydetail {

struct IngestResult {
  PointCloud cloud;
  std::array<std::int64_t, 3> shift{0, 0, 0};  // applied to raw coordinates
};

// Rounds to the integer grid, min-shifts so coordinates start at the given
// origin, merges duplicate voxels by color mean, first-seen order.
inline IngestResult ingest(const RawPly& raw, const std::array<std::int64_t, 3>& shift,
                           std::optional<std::int32_t> extent_hint) {
  IngestResult result;
  result.shift = shift;
  auto& cloud = result.cloud;
  const std::size_t n = raw.xyz.size();
  if (n == 0) throw EmptyCloudError("PLY file contains no vertices");

  std::unordered_map<Coord3, std::int32_t, detail::Coord3Hash> first;
  first.reserve(n * 2);
  std::vector<Rgb> sums;
  std::vector<std::int64_t> counts;
  std::int32_t max_c = 0;
  for (std::size_t i = 0; i < n; ++i) {
    Coord3 c;
    for (int a = 0; a < 3; ++a) {
      const std::int64_t q = std::llround(raw.xyz[i][a]) - shift[a];
      if (q < 0 || q > std::numeric_limits<std::int32_t>::max()) {
        throw ParseError("coordinate out of range after shift");
      }
      c[a] = static_cast<std::int32_t>(q);
      max_c = std::max(max_c, c[a]);
    }
    auto [it, inserted] = first.try_emplace(c, static_cast<std::int32_t>(cloud.coords.size()));
    if (inserted) {
      cloud.coords.push_back(c);
      if (raw.rgb) {
        sums.push_back((*raw.rgb)[i]);
        counts.push_back(1);
      }
    } else if (raw.rgb) {
      const std::size_t slot = static_cast<std::size_t>(it->second);
      for (int a = 0; a < 3; ++a) sums[slot][a] += (*raw.rgb)[i][a];
      ++counts[slot];
    }
  }
  if (raw.rgb) {
    for (std::size_t i = 0; i < sums.size(); ++i) {
      for (int a = 0; a < 3; ++a) {
        sums[i][a] /= static_cast<double>(counts[i]);
        sums[i][a] = std::clamp(sums[i][a], 0.0, 1.0);
      }
    }
    cloud.colors = std::move(sums);
  }
  cloud.extent = max_c + 1;
  if (extent_hint && *extent_hint > max_c) cloud.extent = *extent_hint;
  return result;
}

inline std::array<std::int64_t, 3> min_rounded(const RawPly& raw) {
  std::array<std::int64_t, 3> mins{0, 0, 0};
  for (int a = 0; a < 3; ++a) {
    std::int64_t m = std::numeric_limits<std::int64_t>::max();
    for (const auto& p : raw.xyz) {
      m = std::min<std::int64_t>(m, std::llround(p[a]));
    }
    mins[static_cast<std::size_t>(a)] = m;
  }
  return mins;
}

}  // namespace plydetail

// Reads one cloud: coordinates rounded to the integer grid, duplicates
// merged by color mean. A file that carries a voxel_extent comment and
// already fits the grid is read back verbatim (so write_ply round trips
// exactly); anything else is re-centered by a per-axis min shift with the
// extent set to max coordinate + 1.
inline PointCloud read_ply(const std::string& path, bool require_colors = false) {
  const RawPly raw = read_ply_raw(path);
  if (raw.xyz.empty()) throw EmptyCloudError("PLY file contains no vertices: " + path);
  const auto hint = ply_extent_comment(path);
  std::array<std::int64_t, 3> shift{0, 0, 0};
  bool in_grid = false;
  if (hint) {
    in_grid = true;
    for (const auto& p : raw.xyz) {
      for (int a = 0; a < 3; ++a) {
        const std::int64_t q = std::llround(p[static_cast<std::size_t>(a)]);
        if (q < 0 || q >= *hint) {
          in_grid = false;
          break;
        }
      }
      if (!in_grid) break;
    }
  }
  if (!in_grid) shift = plydetail::min_rounded(raw);
  auto result =
      plydetail::ingest(raw, shift, in_grid ? hint : std::nullopt);
  if (require_colors && !result.cloud.has_colors()) {
    throw AttributeError("PLY file has no red/green/blue properties: " + path);
  }
  validate(result.cloud);
  return result.cloud;
}

// Reads an (LR, HR) pair keeping voxel alignment. Clouds already at
// non-negative coordinates are read verbatim; negative coordinates are
// shifted by a multiple of v on the HR side (that value divided by v on the
// LR side), so floor(hr / v) still lands on the shifted LR coordinates.
struct PlyPair {
  PointCloud lr;
  PointCloud hr;
};

inline PlyPair read_ply_pair(const std::string& lr_path, const std::string& hr_path,
                             std::int32_t v) {
  if (v < 2) throw InvalidRatioError("upsampling ratio must be an integer >= 2");
  const RawPly raw_lr = read_ply_raw(lr_path);
  const RawPly raw_hr = read_ply_raw(hr_path);
  if (raw_hr.xyz.empty()) throw EmptyCloudError("HR PLY contains no vertices");
  if (raw_lr.xyz.empty()) throw EmptyCloudError("LR PLY contains no vertices");

  const auto hr_min = plydetail::min_rounded(raw_hr);
  const auto lr_min = plydetail::min_rounded(raw_lr);
  std::array<std::int64_t, 3> hr_shift{0, 0, 0}, lr_shift{0, 0, 0};
  for (int a = 0; a < 3; ++a) {
    const std::int64_t m =
        std::min(hr_min[static_cast<std::size_t>(a)],
                 v * lr_min[static_cast<std::size_t>(a)]);
    if (m >= 0) continue;  // already inside [0, S); keep the frame
    // Floor division keeps the shift a multiple of v for negative minima.
    std::int64_t q = m / v;
    if (m % v != 0) --q;
    hr_shift[static_cast<std::size_t>(a)] = q * v;
    lr_shift[static_cast<std::size_t>(a)] = q;
  }

  PlyPair pair;
  pair.hr = plydetail::ingest(raw_hr, hr_shift, std::nullopt).cloud;
  pair.lr = plydetail::ingest(raw_lr, lr_shift, std::nullopt).cloud;
  // The LR grid must cover every HR voxel.
  pair.lr.extent = std::max(pair.lr.extent, (pair.hr.extent + v - 1) / v);
  validate(pair.hr);
  validate(pair.lr);
  return pair;
}

// Binary little-endian writer: float positions, 8-bit colors
// (round(c * 255)), plus the voxel_extent comment used on re-ingestion.
inline void write_ply(const PointCloud& cloud, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write PLY file: " + path);
  out << "ply\nformat binary_little_endian 1.0\n";
  out << "comment voxel_extent " << cloud.extent << "\n";
  out << "element vertex " << cloud.size() << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  if (cloud.has_colors()) {
    out << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  }
  out << "end_header\n";
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    float xyz[3];
    for (int a = 0; a < 3; ++a) xyz[a] = static_cast<float>(cloud.coords[i][a]);
    out.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
    if (cloud.has_colors()) {
      unsigned char rgb[3];
      for (int a = 0; a < 3; ++a) {
        const double c = std::clamp((*cloud.colors)[i][a], 0.0, 1.0);
        rgb[a] = static_cast<unsigned char>(std::lround(c * 255.0));
      }
      out.write(reinterpret_cast<const char*>(rgb), sizeof(rgb));
    }
  }
  if (!out) throw IoError("failed writing PLY file: " + path);
}

}  // namespace cunet
