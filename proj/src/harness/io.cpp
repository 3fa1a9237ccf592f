// Copyright Contributors to the fvsplat project
// SPDX-License-Identifier: Apache-2.0
#include "fvs/harness/io.hpp"

#include "fvs/error.hpp"

#include <fmt/format.h>
#include <json.hpp>
#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

namespace fvs {
namespace {

png_uint_32 png_format(int channels) {
  switch (channels) {
  case 1: return PNG_FORMAT_GRAY;
  case 3: return PNG_FORMAT_RGB;
  case 4: return PNG_FORMAT_RGBA;
  default: throw ShapeError(fmt::format("PNG needs 1, 3 or 4 channels, got {}", channels));
  }
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t\r");
  const auto last = s.find_last_not_of(" \t\r");
  return first == std::string::npos ? std::string() : s.substr(first, last - first + 1);
}

} // namespace

std::vector<std::uint8_t> quantize_8bit(const Image& image) {
  std::vector<std::uint8_t> out(image.data.size());
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = static_cast<std::uint8_t>(std::lround(std::clamp(image.data[i], 0.0f, 1.0f) * 255.0f));
  return out;
}

void write_png(const std::filesystem::path& path, const Image& image) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = png_format(image.channels);
  const auto bytes = quantize_8bit(image);
  if (!png_image_write_to_file(&img, path.string().c_str(), 0, bytes.data(), 0, nullptr))
    throw std::runtime_error(fmt::format("writing {} failed: {}", path.string(), img.message));
}

Image read_png(const std::filesystem::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str()))
    throw ParseError(fmt::format("cannot read PNG {}: {}", path.string(), img.message));
  const bool alpha = (img.format & PNG_FORMAT_FLAG_ALPHA) != 0;
  const bool colour = (img.format & PNG_FORMAT_FLAG_COLOR) != 0;
  const int channels = colour ? (alpha ? 4 : 3) : (alpha ? 4 : 1);
  img.format = channels == 1 ? PNG_FORMAT_GRAY : channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_RGBA;
  std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, bytes.data(), 0, nullptr))
    throw ParseError(fmt::format("cannot decode PNG {}: {}", path.string(), img.message));
  Image out(static_cast<int>(img.width), static_cast<int>(img.height), channels);
  for (std::size_t i = 0; i < bytes.size(); ++i) out.data[i] = bytes[i] / 255.0f;
  return out;
}

void write_pfm(const std::filesystem::path& path, const Image& image) {
  if (image.channels != 1 && image.channels != 3) throw ShapeError("PFM holds 1 or 3 channels");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << (image.channels == 3 ? "PF" : "Pf") << '\n' << image.width << ' ' << image.height << "\n-1.0\n";
  static_assert(std::endian::native == std::endian::little);
  const std::size_t row = static_cast<std::size_t>(image.width) * image.channels;
  for (int y = image.height - 1; y >= 0; --y)
    out.write(reinterpret_cast<const char*>(image.data.data() + y * row), static_cast<std::streamsize>(row * sizeof(float)));
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Image read_pfm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open PFM: " + path.string());
  std::string magic;
  int w = 0, h = 0;
  double scale = 0.0;
  in >> magic >> w >> h >> scale;
  in.get();
  if ((magic != "PF" && magic != "Pf") || w <= 0 || h <= 0 || !in) throw ParseError("bad PFM header: " + path.string());
  if (scale > 0.0) throw ParseError("big-endian PFM is not supported");
  Image img(w, h, magic == "PF" ? 3 : 1);
  const std::size_t row = static_cast<std::size_t>(w) * img.channels;
  for (int y = h - 1; y >= 0; --y)
    if (!in.read(reinterpret_cast<char*>(img.data.data() + y * row), static_cast<std::streamsize>(row * sizeof(float))))
      throw ParseError("truncated PFM: " + path.string());
  return img;
}

std::vector<CameraView> load_cameras(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open cameras file: " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(fmt::format("{}: {}", path.string(), e.what()));
  }
  if (!doc.is_array()) throw ParseError("cameras file must hold a JSON array");
  std::vector<CameraView> cams;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const auto& j = doc[i];
    try {
      CameraView c;
      c.width = j.at("width").get<int>();
      c.height = j.at("height").get<int>();
      c.intrinsics = {j.at("fx").get<float>(), j.at("fy").get<float>(), j.at("cx").get<float>(), j.at("cy").get<float>()};
      const auto r = j.at("rotation").get<std::vector<float>>();
      const auto t = j.at("translation").get<std::vector<float>>();
      if (r.size() != 9 || t.size() != 3) throw DataError("rotation needs 9 and translation 3 values", i);
      for (int k = 0; k < 9; ++k) c.pose.rotation(k / 3, k % 3) = r[k];
      c.pose.translation = {t[0], t[1], t[2]};
      c.near = j.value("near", c.near);
      c.far = j.value("far", c.far);
      c.exposure = j.value("exposure", c.exposure);
      c.gamma = j.value("gamma", c.gamma);
      try {
        c.validate();
      } catch (const ContractViolation& e) {
        throw DataError(e.what(), i);
      }
      cams.push_back(c);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(e.what(), i);
    }
  }
  return cams;
}

void write_cameras(const std::filesystem::path& path, const std::vector<CameraView>& cameras) {
  nlohmann::json doc = nlohmann::json::array();
  for (const CameraView& c : cameras) {
    std::vector<float> r(9);
    for (int k = 0; k < 9; ++k) r[k] = c.pose.rotation(k / 3, k % 3);
    doc.push_back({{"width", c.width},
                   {"height", c.height},
                   {"fx", c.intrinsics.fx},
                   {"fy", c.intrinsics.fy},
                   {"cx", c.intrinsics.cx},
                   {"cy", c.intrinsics.cy},
                   {"rotation", r},
                   {"translation", {c.pose.translation.x(), c.pose.translation.y(), c.pose.translation.z()}},
                   {"near", c.near},
                   {"far", c.far},
                   {"exposure", c.exposure},
                   {"gamma", c.gamma}});
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << doc.dump(2) << '\n';
}

void GazeTrace::validate(int width, int height) const {
  std::vector<double> last;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const GazeSample& s = samples[i];
    if (s.eye < 0) throw DataError("negative eye id", i);
    if (static_cast<std::size_t>(s.eye) >= last.size()) last.resize(s.eye + 1, -INFINITY);
    if (s.t_ms < last[s.eye]) throw DataError("gaze timestamps decrease", i);
    last[s.eye] = s.t_ms;
    if (s.valid && !(s.u >= 0.0f && s.u < static_cast<float>(width) && s.v >= 0.0f && s.v < static_cast<float>(height)))
      throw DataError("valid gaze sample outside the image", i);
  }
}

std::optional<Eigen::Vector2f> GazeTrace::latest(double t, int eye) const {
  std::optional<Eigen::Vector2f> out;
  for (const GazeSample& s : samples) {
    if (s.eye != eye) continue;
    if (s.t_ms > t) break;
    if (s.valid) out = Eigen::Vector2f(s.u, s.v);
  }
  return out;
}

GazeTrace parse_gaze_trace(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || trim(line) != "t_ms,eye,u,v,valid")
    throw ParseError("gaze trace must start with header t_ms,eye,u,v,valid");
  GazeTrace trace;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) cells.push_back(trim(cell));
    if (cells.size() != 5) throw DataError("gaze row needs 5 fields", row);
    try {
      GazeSample s;
      s.t_ms = std::stod(cells[0]);
      s.eye = std::stoi(cells[1]);
      s.u = std::stof(cells[2]);
      s.v = std::stof(cells[3]);
      if (cells[4] == "1" || cells[4] == "true")
        s.valid = true;
      else if (cells[4] == "0" || cells[4] == "false")
        s.valid = false;
      else
        throw DataError("valid flag must be 0/1 or true/false", row);
      trace.samples.push_back(s);
    } catch (const std::logic_error&) {
      throw DataError("unparsable number in gaze row", row);
    }
    ++row;
  }
  return trace;
}

GazeTrace load_gaze_trace(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open gaze trace: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_gaze_trace(ss.str());
}

void write_gaze_trace(const std::filesystem::path& path, const GazeTrace& trace) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << "t_ms,eye,u,v,valid\n";
  for (const GazeSample& s : trace.samples) out << fmt::format("{},{},{},{},{}\n", s.t_ms, s.eye, s.u, s.v, s.valid ? 1 : 0);
}

} // namespace fvs
