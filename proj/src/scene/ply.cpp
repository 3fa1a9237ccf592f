// Copyright Contributors to the fvsplat project
// SPDX-License-Identifier: Apache-2.0
#include "fvs/scene/ply.hpp"

#include "fvs/error.hpp"

#include <fmt/format.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

namespace fvs {
namespace {

enum class PlyType { Int8, UInt8, Int16, UInt16, Int32, UInt32, Float32, Float64 };

std::optional<PlyType> parse_type(const std::string& name) {
  static const std::unordered_map<std::string, PlyType> table{
      {"char", PlyType::Int8},     {"int8", PlyType::Int8},      {"uchar", PlyType::UInt8},
      {"uint8", PlyType::UInt8},   {"short", PlyType::Int16},    {"int16", PlyType::Int16},
      {"ushort", PlyType::UInt16}, {"uint16", PlyType::UInt16},  {"int", PlyType::Int32},
      {"int32", PlyType::Int32},   {"uint", PlyType::UInt32},    {"uint32", PlyType::UInt32},
      {"float", PlyType::Float32}, {"float32", PlyType::Float32}, {"double", PlyType::Float64},
      {"float64", PlyType::Float64}};
  const auto it = table.find(name);
  if (it == table.end()) return std::nullopt;
  return it->second;
}

std::size_t type_size(PlyType t) {
  switch (t) {
  case PlyType::Int8:
  case PlyType::UInt8: return 1;
  case PlyType::Int16:
  case PlyType::UInt16: return 2;
  case PlyType::Int32:
  case PlyType::UInt32:
  case PlyType::Float32: return 4;
  case PlyType::Float64: return 8;
  }
  return 0;
}

struct PlyProperty {
  std::string name;
  PlyType type;
  std::size_t offset;
};

struct PlyElement {
  std::string name;
  std::size_t count = 0;
  std::size_t stride = 0;
  bool has_list = false;
  std::vector<PlyProperty> properties;
};

/// Vertex block of a binary little-endian PLY, loaded into memory.
class VertexTable {
public:
  explicit VertexTable(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open PLY file: " + path.string());

    std::string line;
    if (!std::getline(in, line) || strip(line) != "ply") throw ParseError("missing 'ply' magic in " + path.string());

    std::vector<PlyElement> elements;
    bool format_ok = false;
    bool header_done = false;
    while (std::getline(in, line)) {
      line = strip(line);
      std::istringstream ss(line);
      std::string keyword;
      ss >> keyword;
      if (keyword == "end_header") {
        header_done = true;
        break;
      }
      if (keyword == "format") {
        std::string fmt_name;
        ss >> fmt_name;
        if (fmt_name != "binary_little_endian")
          throw ParseError("unsupported PLY format '" + fmt_name + "', expected binary_little_endian");
        format_ok = true;
      } else if (keyword == "element") {
        PlyElement e;
        ss >> e.name >> e.count;
        if (!ss) throw ParseError("malformed element line: " + line);
        elements.push_back(std::move(e));
      } else if (keyword == "property") {
        if (elements.empty()) throw ParseError("property before any element: " + line);
        std::string type_name;
        ss >> type_name;
        auto& e = elements.back();
        if (type_name == "list") {
          e.has_list = true;
          continue;
        }
        std::string prop_name;
        ss >> prop_name;
        const auto type = parse_type(type_name);
        if (!type) throw ParseError("unknown PLY property type '" + type_name + "'");
        e.properties.push_back({prop_name, *type, e.stride});
        e.stride += type_size(*type);
      }
      // comment / obj_info lines are ignored
    }
    if (!header_done) throw ParseError("PLY header is missing end_header");
    if (!format_ok) throw ParseError("PLY header is missing the format line");

    std::size_t skip = 0;
    const PlyElement* vertex = nullptr;
    for (const auto& e : elements) {
      if (e.name == "vertex") {
        vertex = &e;
        break;
      }
      if (e.has_list) throw ParseError("list properties before the vertex element are not supported");
      skip += e.count * e.stride;
    }
    if (vertex == nullptr) throw ParseError("PLY file has no vertex element");
    if (vertex->has_list) throw ParseError("list properties in the vertex element are not supported");
    element_ = *vertex;
    for (const auto& p : element_.properties) by_name_.emplace(p.name, &p - element_.properties.data());

    in.seekg(static_cast<std::streamoff>(skip), std::ios::cur);
    bytes_.resize(element_.count * element_.stride);
    in.read(reinterpret_cast<char*>(bytes_.data()), static_cast<std::streamsize>(bytes_.size()));
    if (static_cast<std::size_t>(in.gcount()) != bytes_.size())
      throw ParseError(fmt::format("truncated vertex data: expected {} bytes", bytes_.size()));
  }

  std::size_t count() const { return element_.count; }
  bool has(const std::string& name) const { return by_name_.count(name) != 0; }

  /// Column index of a property; ParseError naming the field when absent.
  std::size_t require(const std::string& name) const {
    const auto it = by_name_.find(name);
    if (it == by_name_.end()) throw ParseError("PLY vertex element is missing required field '" + name + "'");
    return it->second;
  }

  float get(std::size_t record, std::size_t column) const {
    const auto& p = element_.properties[column];
    const unsigned char* src = bytes_.data() + record * element_.stride + p.offset;
    switch (p.type) {
    case PlyType::Int8: return static_cast<float>(read<std::int8_t>(src));
    case PlyType::UInt8: return static_cast<float>(read<std::uint8_t>(src));
    case PlyType::Int16: return static_cast<float>(read<std::int16_t>(src));
    case PlyType::UInt16: return static_cast<float>(read<std::uint16_t>(src));
    case PlyType::Int32: return static_cast<float>(read<std::int32_t>(src));
    case PlyType::UInt32: return static_cast<float>(read<std::uint32_t>(src));
    case PlyType::Float32: return read<float>(src);
    case PlyType::Float64: return static_cast<float>(read<double>(src));
    }
    return 0.0f;
  }

private:
  template <class T> static T read(const unsigned char* src) {
    T v;
    std::memcpy(&v, src, sizeof(T));
    return v;
  }

  static std::string strip(std::string s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
    return s;
  }

  PlyElement element_;
  std::unordered_map<std::string, std::size_t> by_name_;
  std::vector<unsigned char> bytes_;
};

class PlyWriter {
public:
  PlyWriter(const std::filesystem::path& path, std::size_t count, const std::vector<std::string>& properties)
      : out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot open for writing: " + path.string());
    out_ << "ply\nformat binary_little_endian 1.0\nelement vertex " << count << "\n";
    for (const auto& p : properties) out_ << "property float " << p << "\n";
    out_ << "end_header\n";
  }

  void put(float v) { out_.write(reinterpret_cast<const char*>(&v), sizeof(float)); }

  void finish() {
    out_.flush();
    if (!out_) throw std::runtime_error("failed writing PLY payload");
  }

private:
  std::ofstream out_;
};

void require_finite(float v, const char* field, std::size_t record) {
  if (!std::isfinite(v)) throw DataError(fmt::format("non-finite value in field '{}'", field), record);
}

} // namespace

float sigmoid(float x) { return static_cast<float>(1.0 / (1.0 + std::exp(-static_cast<double>(x)))); }

float quantize_opacity(float opacity) { return sigmoid(opacity_to_logit(opacity)); }

float opacity_to_logit(float opacity) {
  if (!(opacity > 0.0f)) return -200.0f;
  if (!(opacity < 1.0f)) return 200.0f;
  const double o = opacity;
  float x = static_cast<float>(std::log(o / (1.0 - o)));
  if (sigmoid(x) == opacity) return x;
  float best = x;
  float best_err = std::abs(sigmoid(x) - opacity);
  float up = x;
  float down = x;
  for (int i = 0; i < 512; ++i) {
    up = std::nextafter(up, std::numeric_limits<float>::infinity());
    down = std::nextafter(down, -std::numeric_limits<float>::infinity());
    for (float c : {up, down}) {
      const float err = std::abs(sigmoid(c) - opacity);
      if (err == 0.0f) return c;
      if (err < best_err) {
        best_err = err;
        best = c;
      }
    }
  }
  return best;
}

GaussianSet load_gaussians(const std::filesystem::path& path) {
  const VertexTable table(path);

  const std::size_t cx = table.require("x"), cy = table.require("y"), cz = table.require("z");
  const std::size_t dc[3] = {table.require("f_dc_0"), table.require("f_dc_1"), table.require("f_dc_2")};
  const std::size_t col_opacity = table.require("opacity");
  const std::size_t col_scale[3] = {table.require("scale_0"), table.require("scale_1"), table.require("scale_2")};
  const std::size_t col_rot[4] = {table.require("rot_0"), table.require("rot_1"), table.require("rot_2"),
                                  table.require("rot_3")};

  int rest = 0;
  while (table.has("f_rest_" + std::to_string(rest))) ++rest;
  int degree = -1;
  for (int d = 0; d <= kMaxShDegree; ++d)
    if (rest == 3 * (sh_coeff_count(d) - 1)) degree = d;
  if (degree < 0)
    throw ParseError(fmt::format("PLY has {} f_rest_* fields; expected 0, 9, 24 or 45", rest));
  std::vector<std::size_t> col_rest(static_cast<std::size_t>(rest));
  for (int i = 0; i < rest; ++i) col_rest[static_cast<std::size_t>(i)] = table.require("f_rest_" + std::to_string(i));
  const int rest_per_channel = sh_coeff_count(degree) - 1;

  GaussianSet set;
  set.sh_degree = degree;
  set.gaussians.resize(table.count());
  for (std::size_t r = 0; r < table.count(); ++r) {
    Gaussian& g = set.gaussians[r];
    g.position = {table.get(r, cx), table.get(r, cy), table.get(r, cz)};
    require_finite(g.position.x(), "x", r);
    require_finite(g.position.y(), "y", r);
    require_finite(g.position.z(), "z", r);
    for (int c = 0; c < 3; ++c) {
      g.sh[static_cast<std::size_t>(c)] = table.get(r, dc[c]);
      require_finite(g.sh[static_cast<std::size_t>(c)], "f_dc", r);
      for (int k = 1; k <= rest_per_channel; ++k) {
        const float v = table.get(r, col_rest[static_cast<std::size_t>(c * rest_per_channel + k - 1)]);
        require_finite(v, "f_rest", r);
        g.sh[static_cast<std::size_t>(3 * k + c)] = v;
      }
      g.log_scale[c] = table.get(r, col_scale[c]);
      require_finite(g.log_scale[c], "scale", r);
    }
    const float raw_opacity = table.get(r, col_opacity);
    require_finite(raw_opacity, "opacity", r);
    g.opacity = sigmoid(raw_opacity);

    Eigen::Vector4f q;
    for (int i = 0; i < 4; ++i) {
      q[i] = table.get(r, col_rot[i]);
      require_finite(q[i], "rot", r);
    }
    const float n = q.norm();
    if (!(n > 0.0f) || !std::isfinite(n)) throw DataError("degenerate rotation quaternion", r);
    // Re-normalizing an already unit quaternion can perturb its last bit; only
    // fix the ones that are actually off.
    if (std::abs(n - 1.0f) > 1e-6f) q /= n;
    g.rotation = q;
    if (!std::isfinite(g.scale().x()) || !std::isfinite(g.scale().y()) || !std::isfinite(g.scale().z()))
      throw DataError("scale overflows after exp", r);
  }
  return set;
}

void write_gaussians(const std::filesystem::path& path, const GaussianSet& set) {
  std::vector<std::string> names{"x", "y", "z", "nx", "ny", "nz", "f_dc_0", "f_dc_1", "f_dc_2"};
  const int rest_per_channel = sh_coeff_count(set.sh_degree) - 1;
  for (int i = 0; i < 3 * rest_per_channel; ++i) names.push_back("f_rest_" + std::to_string(i));
  for (const char* n : {"opacity", "scale_0", "scale_1", "scale_2", "rot_0", "rot_1", "rot_2", "rot_3"})
    names.emplace_back(n);

  PlyWriter w(path, set.size(), names);
  for (const Gaussian& g : set.gaussians) {
    w.put(g.position.x());
    w.put(g.position.y());
    w.put(g.position.z());
    w.put(0.0f);
    w.put(0.0f);
    w.put(0.0f);
    for (int c = 0; c < 3; ++c) w.put(g.sh[static_cast<std::size_t>(c)]);
    for (int c = 0; c < 3; ++c)
      for (int k = 1; k <= rest_per_channel; ++k) w.put(g.sh[static_cast<std::size_t>(3 * k + c)]);
    w.put(opacity_to_logit(g.opacity));
    for (int c = 0; c < 3; ++c) w.put(g.log_scale[c]);
    for (int i = 0; i < 4; ++i) w.put(g.rotation[i]);
  }
  w.finish();
}

NeuralPointCloud load_points(const std::filesystem::path& path) {
  const VertexTable table(path);
  const std::size_t cx = table.require("x"), cy = table.require("y"), cz = table.require("z");
  const std::size_t col_size = table.require("size");
  const std::size_t col_opacity = table.require("opacity");
  int dim = 0;
  while (table.has("feat_" + std::to_string(dim))) ++dim;
  if (dim == 0) table.require("feat_0");
  std::vector<std::size_t> col_feat(static_cast<std::size_t>(dim));
  for (int i = 0; i < dim; ++i) col_feat[static_cast<std::size_t>(i)] = table.require("feat_" + std::to_string(i));

  NeuralPointCloud cloud(dim);
  cloud.reserve(table.count());
  NeuralPoint p;
  p.features.resize(static_cast<std::size_t>(dim));
  for (std::size_t r = 0; r < table.count(); ++r) {
    p.position = {table.get(r, cx), table.get(r, cy), table.get(r, cz)};
    require_finite(p.position.x(), "x", r);
    require_finite(p.position.y(), "y", r);
    require_finite(p.position.z(), "z", r);
    p.size = table.get(r, col_size);
    if (!(p.size > 0.0f) || !std::isfinite(p.size)) throw DataError("point size must be positive and finite", r);
    p.opacity = table.get(r, col_opacity);
    if (!(p.opacity >= 0.0f && p.opacity <= 1.0f)) throw DataError("point opacity outside [0, 1]", r);
    for (int i = 0; i < dim; ++i) {
      const float v = table.get(r, col_feat[static_cast<std::size_t>(i)]);
      require_finite(v, "feat", r);
      p.features[static_cast<std::size_t>(i)] = v;
    }
    cloud.push_back(p);
  }
  return cloud;
}

void write_points(const std::filesystem::path& path, const NeuralPointCloud& cloud) {
  std::vector<std::string> names{"x", "y", "z", "size", "opacity"};
  for (int i = 0; i < cloud.feature_dim(); ++i) names.push_back("feat_" + std::to_string(i));
  PlyWriter w(path, cloud.size(), names);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const auto& pos = cloud.position(i);
    w.put(pos.x());
    w.put(pos.y());
    w.put(pos.z());
    w.put(cloud.point_size(i));
    w.put(cloud.opacity(i));
    for (float f : cloud.features(i)) w.put(f);
  }
  w.finish();
}

} // namespace fvs
