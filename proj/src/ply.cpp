// SPDX-License-Identifier: Apache-2.0
#include "gsvo/ply.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "gsvo/error.hpp"
#include "gsvo/trajectory.hpp"

static_assert(std::endian::native == std::endian::little, "PLY IO assumes a little-endian host");

namespace gsvo {

namespace {

enum class Scalar { kInt8, kUInt8, kInt16, kUInt16, kInt32, kUInt32, kFloat32, kFloat64 };

size_t scalar_size(Scalar s) {
  switch (s) {
    case Scalar::kInt8:
    case Scalar::kUInt8: return 1;
    case Scalar::kInt16:
    case Scalar::kUInt16: return 2;
    case Scalar::kInt32:
    case Scalar::kUInt32:
    case Scalar::kFloat32: return 4;
    case Scalar::kFloat64: return 8;
  }
  return 0;
}

std::optional<Scalar> parse_scalar(const std::string& name) {
  static const std::map<std::string, Scalar> table = {
      {"char", Scalar::kInt8},     {"int8", Scalar::kInt8},      {"uchar", Scalar::kUInt8},
      {"uint8", Scalar::kUInt8},   {"short", Scalar::kInt16},    {"int16", Scalar::kInt16},
      {"ushort", Scalar::kUInt16}, {"uint16", Scalar::kUInt16},  {"int", Scalar::kInt32},
      {"int32", Scalar::kInt32},   {"uint", Scalar::kUInt32},    {"uint32", Scalar::kUInt32},
      {"float", Scalar::kFloat32}, {"float32", Scalar::kFloat32}, {"double", Scalar::kFloat64},
      {"float64", Scalar::kFloat64}};
  auto it = table.find(name);
  if (it == table.end()) return std::nullopt;
  return it->second;
}

double decode(Scalar s, const char* p) {
  switch (s) {
    case Scalar::kInt8: { int8_t v; std::memcpy(&v, p, 1); return v; }
    case Scalar::kUInt8: { uint8_t v; std::memcpy(&v, p, 1); return v; }
    case Scalar::kInt16: { int16_t v; std::memcpy(&v, p, 2); return v; }
    case Scalar::kUInt16: { uint16_t v; std::memcpy(&v, p, 2); return v; }
    case Scalar::kInt32: { int32_t v; std::memcpy(&v, p, 4); return v; }
    case Scalar::kUInt32: { uint32_t v; std::memcpy(&v, p, 4); return v; }
    case Scalar::kFloat32: { float v; std::memcpy(&v, p, 4); return v; }
    case Scalar::kFloat64: { double v; std::memcpy(&v, p, 8); return v; }
  }
  return 0.0;
}

struct Property {
  std::string name;
  Scalar type = Scalar::kFloat32;
  // List properties (faces etc.) are only skipped, never read as data.
  bool is_list = false;
  Scalar count_type = Scalar::kUInt8;
};

struct Element {
  std::string name;
  size_t count = 0;
  std::vector<Property> properties;
};

struct Header {
  bool binary = false;
  std::vector<Element> elements;
  size_t body_offset = 0;
};

[[noreturn]] void bad_header(const std::filesystem::path& path, const std::string& what) {
  throw Error(ErrorCode::kMalformedHeader, fmt::format("{}: {}", path.string(), what));
}

Header parse_header(const std::string& bytes, const std::filesystem::path& path) {
  Header h;
  size_t pos = 0;
  int line_no = 0;
  bool saw_format = false;
  auto next_line = [&](std::string& line) {
    if (pos >= bytes.size()) return false;
    size_t end = bytes.find('\n', pos);
    if (end == std::string::npos) end = bytes.size();
    line = bytes.substr(pos, end - pos);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    pos = std::min(end + 1, bytes.size());
    ++line_no;
    return true;
  };
  std::string line;
  if (!next_line(line) || line != "ply") bad_header(path, "missing 'ply' magic");
  while (true) {
    if (!next_line(line)) bad_header(path, "missing end_header");
    std::istringstream in(line);
    std::string kw;
    in >> kw;
    if (kw.empty() || kw == "comment" || kw == "obj_info") continue;
    if (kw == "end_header") break;
    if (kw == "format") {
      std::string fmt_name;
      std::string version;
      in >> fmt_name >> version;
      if (fmt_name == "ascii") {
        h.binary = false;
      } else if (fmt_name == "binary_little_endian") {
        h.binary = true;
      } else {
        bad_header(path, fmt::format("line {}: unsupported format '{}'", line_no, fmt_name));
      }
      saw_format = true;
    } else if (kw == "element") {
      Element e;
      long long count = -1;
      if (!(in >> e.name >> count) || count < 0) {
        bad_header(path, fmt::format("line {}: bad element declaration", line_no));
      }
      e.count = static_cast<size_t>(count);
      h.elements.push_back(std::move(e));
    } else if (kw == "property") {
      if (h.elements.empty()) {
        bad_header(path, fmt::format("line {}: property before element", line_no));
      }
      Property p;
      std::string type;
      in >> type;
      if (type == "list") {
        std::string ct;
        std::string it;
        in >> ct >> it >> p.name;
        auto c = parse_scalar(ct);
        auto i = parse_scalar(it);
        if (!c || !i || p.name.empty()) {
          bad_header(path, fmt::format("line {}: bad list property", line_no));
        }
        p.is_list = true;
        p.count_type = *c;
        p.type = *i;
      } else {
        auto t = parse_scalar(type);
        in >> p.name;
        if (!t || p.name.empty()) {
          bad_header(path, fmt::format("line {}: bad property '{}'", line_no, line));
        }
        p.type = *t;
      }
      h.elements.back().properties.push_back(std::move(p));
    } else {
      bad_header(path, fmt::format("line {}: unknown keyword '{}'", line_no, kw));
    }
  }
  if (!saw_format) bad_header(path, "missing format line");
  h.body_offset = pos;
  return h;
}

// Vertex table as rows of doubles, one column per scalar vertex property.
struct VertexTable {
  std::vector<std::string> names;
  std::vector<double> values;
  size_t count = 0;

  int column(const std::string& name) const {
    auto it = std::find(names.begin(), names.end(), name);
    return it == names.end() ? -1 : static_cast<int>(it - names.begin());
  }
  double at(size_t row, int col) const { return values[row * names.size() + col]; }
};

[[noreturn]] void truncated(const std::filesystem::path& path, const std::string& what) {
  throw Error(ErrorCode::kTruncatedBody, fmt::format("{}: {}", path.string(), what));
}

VertexTable read_vertices(const std::string& bytes, const Header& h,
                          const std::filesystem::path& path) {
  VertexTable table;
  const Element* vertex = nullptr;
  for (const auto& e : h.elements) {
    if (e.name == "vertex") {
      vertex = &e;
      break;
    }
  }
  if (vertex == nullptr) throw Error(ErrorCode::kUnknownSchema, path.string() + ": no vertex element");
  for (const auto& p : vertex->properties) {
    if (!p.is_list) table.names.push_back(p.name);
  }
  table.count = vertex->count;
  table.values.reserve(vertex->count * table.names.size());

  if (h.binary) {
    size_t pos = h.body_offset;
    auto need = [&](size_t n, const std::string& elem, size_t row) {
      if (pos + n > bytes.size()) {
        truncated(path, fmt::format("element '{}' ends at row {} of {}", elem, row,
                                    elem == "vertex" ? vertex->count : 0));
      }
    };
    for (const auto& e : h.elements) {
      const bool is_vertex = &e == vertex;
      for (size_t r = 0; r < e.count; ++r) {
        for (const auto& p : e.properties) {
          if (p.is_list) {
            need(scalar_size(p.count_type), e.name, r);
            const auto n = static_cast<size_t>(decode(p.count_type, bytes.data() + pos));
            pos += scalar_size(p.count_type);
            need(n * scalar_size(p.type), e.name, r);
            pos += n * scalar_size(p.type);
          } else {
            need(scalar_size(p.type), e.name, r);
            if (is_vertex) table.values.push_back(decode(p.type, bytes.data() + pos));
            pos += scalar_size(p.type);
          }
        }
      }
      if (is_vertex) break;
    }
    return table;
  }

  std::istringstream in(bytes.substr(h.body_offset));
  for (const auto& e : h.elements) {
    const bool is_vertex = &e == vertex;
    for (size_t r = 0; r < e.count; ++r) {
      std::string line;
      do {
        if (!std::getline(in, line)) {
          truncated(path, fmt::format("element '{}' has {} of {} rows", e.name, r, e.count));
        }
      } while (line.find_first_not_of(" \t\r") == std::string::npos);
      std::istringstream fields(line);
      for (const auto& p : e.properties) {
        double v = 0.0;
        if (!(fields >> v)) {
          truncated(path, fmt::format("element '{}' row {} is short", e.name, r));
        }
        if (p.is_list) {
          for (long k = 0; k < static_cast<long>(v); ++k) {
            double skip;
            if (!(fields >> skip)) truncated(path, fmt::format("element '{}' row {} is short", e.name, r));
          }
        } else if (is_vertex) {
          table.values.push_back(v);
        }
      }
    }
    if (is_vertex) break;
  }
  return table;
}

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kMissingFile, path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* const kGaussianProps[] = {"x",     "y",     "z",     "scale_0", "scale_1",
                                      "scale_2", "rot_0", "rot_1", "rot_2",   "rot_3",
                                      "opacity", "red",   "green", "blue"};

void append_f32(std::string& out, double v) {
  const float f = static_cast<float>(v);
  char buf[4];
  std::memcpy(buf, &f, 4);
  out.append(buf, 4);
}

// float32 value nearest to v that still lies in [lo, hi].
float f32_within(double v, double lo, double hi) {
  float f = static_cast<float>(v);
  if (f < lo) {
    f = static_cast<float>(lo);
    if (f < lo) f = std::nextafter(f, HUGE_VALF);
  }
  if (f > hi) {
    f = static_cast<float>(hi);
    if (f > hi) f = std::nextafter(f, -HUGE_VALF);
  }
  return f;
}

}  // namespace

PlyContent load_ply(const std::filesystem::path& path) {
  const std::string bytes = read_all(path);
  const Header h = parse_header(bytes, path);
  const VertexTable t = read_vertices(bytes, h, path);

  int cols[14];
  bool gaussian = true;
  for (int i = 0; i < 14; ++i) {
    cols[i] = t.column(kGaussianProps[i]);
    gaussian = gaussian && cols[i] >= 0;
  }
  if (gaussian) {
    GaussianMap map;
    map.gaussians.reserve(t.count);
    for (size_t r = 0; r < t.count; ++r) {
      Gaussian3D g;
      g.position = Vec3(t.at(r, cols[0]), t.at(r, cols[1]), t.at(r, cols[2]));
      g.scale = Vec3(t.at(r, cols[3]), t.at(r, cols[4]), t.at(r, cols[5]));
      g.rotation = Eigen::Quaterniond(t.at(r, cols[6]), t.at(r, cols[7]), t.at(r, cols[8]),
                                      t.at(r, cols[9]));
      const double qn = g.rotation.norm();
      if (!(qn > 0.0) || !std::isfinite(qn)) {
        throw Error(ErrorCode::kUnknownSchema,
                    fmt::format("{}: vertex {} has a degenerate quaternion", path.string(), r));
      }
      // float32 storage leaves the norm off by ~1e-7; exact unit quaternions stay untouched.
      if (qn != 1.0) g.rotation.normalize();
      g.opacity = t.at(r, cols[10]);
      g.color = Vec3(t.at(r, cols[11]), t.at(r, cols[12]), t.at(r, cols[13]));
      map.gaussians.push_back(g);
    }
    try {
      map.validate();
    } catch (const Error& e) {
      throw Error(ErrorCode::kUnknownSchema, fmt::format("{}: {}", path.string(), e.what()));
    }
    return map;
  }

  if (cols[0] < 0 || cols[1] < 0 || cols[2] < 0) {
    throw Error(ErrorCode::kUnknownSchema,
                path.string() + ": vertex element lacks x/y/z properties");
  }
  const int cr = t.column("red");
  const int cg = t.column("green");
  const int cb = t.column("blue");
  const bool has_color = cr >= 0 && cg >= 0 && cb >= 0;
  double color_scale = 1.0;
  if (has_color) {
    const Element* vertex = nullptr;
    for (const auto& e : h.elements) {
      if (e.name == "vertex") vertex = &e;
    }
    for (const auto& p : vertex->properties) {
      if (p.name == "red" && p.type != Scalar::kFloat32 && p.type != Scalar::kFloat64) {
        color_scale = p.type == Scalar::kUInt16 ? 1.0 / 65535.0 : 1.0 / 255.0;
      }
    }
  }
  PointCloud cloud;
  cloud.reserve(t.count);
  for (size_t r = 0; r < t.count; ++r) {
    PointSample s;
    s.position = Vec3(t.at(r, cols[0]), t.at(r, cols[1]), t.at(r, cols[2]));
    if (has_color) {
      s.color = Vec3(t.at(r, cr), t.at(r, cg), t.at(r, cb)) * color_scale;
    }
    cloud.push_back(s);
  }
  return cloud;
}

GaussianMap load_gaussian_map(const std::filesystem::path& path) {
  auto content = load_ply(path);
  if (auto* m = std::get_if<GaussianMap>(&content)) return std::move(*m);
  throw Error(ErrorCode::kUnknownSchema, path.string() + ": expected the Gaussian map schema");
}

PointCloud load_point_cloud(const std::filesystem::path& path) {
  auto content = load_ply(path);
  if (auto* c = std::get_if<PointCloud>(&content)) return std::move(*c);
  // Gaussian centers are a valid cloud too.
  PointCloud cloud;
  for (const auto& g : std::get<GaussianMap>(content).gaussians) {
    cloud.push_back({g.position, g.color});
  }
  return cloud;
}

void write_gaussian_ply(const std::filesystem::path& path, const GaussianMap& map) {
  std::string out = fmt::format("ply\nformat binary_little_endian 1.0\nelement vertex {}\n",
                                map.size());
  for (const char* name : kGaussianProps) out += fmt::format("property float {}\n", name);
  out += "end_header\n";
  out.reserve(out.size() + map.size() * 14 * 4);
  for (const auto& g : map.gaussians) {
    for (int i = 0; i < 3; ++i) append_f32(out, g.position[i]);
    for (int i = 0; i < 3; ++i) append_f32(out, f32_within(g.scale[i], kMinScale, kMaxScale));
    append_f32(out, g.rotation.w());
    append_f32(out, g.rotation.x());
    append_f32(out, g.rotation.y());
    append_f32(out, g.rotation.z());
    append_f32(out, f32_within(g.opacity, std::numeric_limits<float>::denorm_min(),
                                std::nextafter(1.0f, 0.0f)));
    for (int i = 0; i < 3; ++i) append_f32(out, g.color[i]);
  }
  write_file_atomic(path, out);
}

void write_point_cloud_ply(const std::filesystem::path& path, const PointCloud& cloud,
                           bool binary) {
  const bool color = !cloud.empty() && std::all_of(cloud.begin(), cloud.end(),
                                                   [](const PointSample& s) { return s.color.has_value(); });
  std::string out = fmt::format("ply\nformat {} 1.0\nelement vertex {}\n",
                                binary ? "binary_little_endian" : "ascii", cloud.size());
  out += "property float x\nproperty float y\nproperty float z\n";
  if (color) out += "property uchar red\nproperty uchar green\nproperty uchar blue\n";
  out += "end_header\n";
  auto to_byte = [](double c) {
    return static_cast<uint8_t>(std::lround(std::clamp(c, 0.0, 1.0) * 255.0));
  };
  for (const auto& s : cloud) {
    if (binary) {
      for (int i = 0; i < 3; ++i) append_f32(out, s.position[i]);
      if (color) {
        for (int i = 0; i < 3; ++i) out.push_back(static_cast<char>(to_byte((*s.color)[i])));
      }
    } else {
      out += fmt::format("{} {} {}", static_cast<float>(s.position.x()),
                         static_cast<float>(s.position.y()), static_cast<float>(s.position.z()));
      if (color) {
        out += fmt::format(" {} {} {}", to_byte((*s.color)[0]), to_byte((*s.color)[1]),
                           to_byte((*s.color)[2]));
      }
      out += "\n";
    }
  }
  write_file_atomic(path, out);
}

}  // namespace gsvo
