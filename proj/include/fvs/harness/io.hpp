// Copyright Contributors to the fvsplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fvs/image.hpp"
#include "fvs/scene/types.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace fvs {

/// 8-bit values round(clamp(x, 0, 1) * 255); 1, 3 or 4 channels.
std::vector<std::uint8_t> quantize_8bit(const Image& image);

/// 8-bit PNG (grey, RGB or RGBA by channel count).
void write_png(const std::filesystem::path& path, const Image& image);
/// Returns values in [0, 1] with the file's channel count (palette and
/// 16-bit inputs are expanded/stripped to 8-bit first).
Image read_png(const std::filesystem::path& path);

/// Portable float map ("PF" colour, "Pf" grey), little-endian, bottom row first.
void write_pfm(const std::filesystem::path& path, const Image& image);
Image read_pfm(const std::filesystem::path& path);

/// cameras.json: array of objects with width, height, fx, fy, cx, cy,
/// rotation (9 values, row-major world-to-camera), translation (3),
/// and optional near, far, exposure, gamma.
std::vector<CameraView> load_cameras(const std::filesystem::path& path);
void write_cameras(const std::filesystem::path& path, const std::vector<CameraView>& cameras);

struct GazeSample {
  double t_ms = 0.0;
  int eye = 0;
  float u = 0.0f;
  float v = 0.0f;
  bool valid = true;
};

struct GazeTrace {
  std::vector<GazeSample> samples;

  /// Throws DataError (row index) when timestamps decrease for an eye or a
  /// valid sample lies outside width x height.
  void validate(int width, int height) const;

  /// Newest valid sample of `eye` with t_ms <= t, if any.
  std::optional<Eigen::Vector2f> latest(double t, int eye = 0) const;
};

/// CSV with header t_ms,eye,u,v,valid.
GazeTrace load_gaze_trace(const std::filesystem::path& path);
GazeTrace parse_gaze_trace(const std::string& text);
void write_gaze_trace(const std::filesystem::path& path, const GazeTrace& trace);

} // namespace fvs
