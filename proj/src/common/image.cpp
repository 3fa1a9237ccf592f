// Copyright Contributors to the fvsplat project
// SPDX-License-Identifier: Apache-2.0
#include "fvs/image.hpp"

#include "fvs/error.hpp"

#include <algorithm>
#include <array>

namespace fvs {

Image::Image(int w, int h, int c, float fill)
    : width(w), height(h), channels(c),
      data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * static_cast<std::size_t>(c), fill) {
  if (w < 0 || h < 0 || c < 0) throw ShapeError("negative image dimension");
}

Image Image::crop(int x0, int y0, int w, int h) const {
  if (x0 < 0 || y0 < 0 || w < 0 || h < 0 || x0 + w > width || y0 + h > height)
    throw ShapeError("crop window outside image");
  Image out(w, h, channels);
  for (int y = 0; y < h; ++y) {
    const float* src = &data[index(x0, y0 + y)];
    std::copy(src, src + static_cast<std::size_t>(w) * channels, &out.data[out.index(0, y)]);
  }
  return out;
}

Image Image::channel_slice(int first, int count) const {
  if (first < 0 || count < 0 || first + count > channels) throw ShapeError("channel slice out of range");
  Image out(width, height, count);
  const std::size_t n = pixel_count();
  for (std::size_t p = 0; p < n; ++p)
    for (int c = 0; c < count; ++c) out.data[p * count + c] = data[p * channels + first + c];
  return out;
}

std::uint64_t fnv1a64(const void* bytes, std::size_t size, std::uint64_t seed) noexcept {
  const auto* p = static_cast<const unsigned char*>(bytes);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t image_hash(const Image& image) noexcept {
  const std::array<int, 3> shape{image.width, image.height, image.channels};
  std::uint64_t h = fnv1a64(shape.data(), sizeof(shape));
  return fnv1a64(image.data.data(), image.data.size() * sizeof(float), h);
}

} // namespace fvs
