// Copyright Contributors to the fvsplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace fvs {

/// Interleaved float image, row-major, `channels` values per pixel.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<float> data;

  Image() = default;
  Image(int w, int h, int c, float fill = 0.0f);

  std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(width) * height; }
  bool empty() const noexcept { return data.empty(); }

  std::size_t index(int x, int y, int c = 0) const noexcept {
    return (static_cast<std::size_t>(y) * width + x) * channels + c;
  }
  float& at(int x, int y, int c = 0) noexcept { return data[index(x, y, c)]; }
  float at(int x, int y, int c = 0) const noexcept { return data[index(x, y, c)]; }

  bool same_shape(const Image& other) const noexcept {
    return width == other.width && height == other.height && channels == other.channels;
  }

  /// Copy of the window [x0, x0+w) x [y0, y0+h); throws ShapeError if out of bounds.
  Image crop(int x0, int y0, int w, int h) const;

  /// Channels [first, first+count) as a new image.
  Image channel_slice(int first, int count) const;

  friend bool operator==(const Image&, const Image&) = default;
};

/// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a64(const void* bytes, std::size_t size,
                      std::uint64_t seed = 0xcbf29ce484222325ull) noexcept;

/// Bitwise hash of an image's shape and float payload.
std::uint64_t image_hash(const Image& image) noexcept;

} // namespace fvs
