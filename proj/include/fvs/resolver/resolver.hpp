// Copyright Contributors to the fvsplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fvs/fovea/fovea.hpp"
#include "fvs/image.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

namespace fvs {

enum class Activation : std::uint32_t { Elu = 0 };

/// Decoder layout. `filters` is ordered fine to coarse (index = pyramid level).
struct ResolverArch {
  int feature_dim = 4;
  std::vector<int> filters{8, 16, 32, 32};
  int kernel = 3;
  Activation activation = Activation::Elu;
  /// Level 0 runs at full width (same count as level 1) instead of half.
  bool full_width_level0 = false;

  int levels() const noexcept { return static_cast<int>(filters.size()); }
  /// Channels entering the first convolution of level l.
  int input_channels(int level) const;
  /// Throws ShapeError when the layout is inconsistent.
  void validate() const;

  /// Default layout; `full_width` widens level 0 to the level-1 count.
  static ResolverArch standard(int feature_dim = 4, bool full_width = false);
};

struct ConvLayer {
  int in = 0;
  int out = 0;
  int kernel = 1;
  std::vector<float> weight; // [out][in][ky][kx]
  std::vector<float> bias;   // [out]
};

struct ResolverWeights {
  ResolverArch arch;
  std::vector<std::array<ConvLayer, 2>> convs; // per level, fine to coarse
  ConvLayer project;                           // 1x1 to RGB

  /// Throws ShapeError when tensor shapes disagree with `arch`.
  void validate() const;
  friend bool operator==(const ResolverWeights& a, const ResolverWeights& b);
};

inline constexpr char kWeightsMagic[6] = {'F', 'V', 'S', 'P', 'W', '1'};

/// Weights file: magic "FVSPW1"; u32 feature_dim, levels, filters[levels],
/// kernel, activation, full-width flag, tensor count; per tensor u32 rank,
/// u32 dims[rank], f32 data; trailing u64 FNV-1a of every preceding byte.
/// Tensors run coarsest level first (conv1 w, b, conv2 w, b), then the 1x1
/// projection w, b. All little-endian.
ResolverWeights load_weights(const std::filesystem::path& path);
void write_weights(const std::filesystem::path& path, const ResolverWeights& weights);

/// Weights whose only live path copies the peripheral crop to the output.
ResolverWeights identity_weights(const ResolverArch& arch = ResolverArch::standard());
/// He-normal weights and small biases, deterministic in `seed`.
ResolverWeights random_weights(const ResolverArch& arch, std::uint64_t seed);

/// Decoder pass from the coarsest level to the finest: upsample the previous
/// output (bilinear x2), concatenate the level's pyramid layer (and at level 0
/// the RGB crop), two 3x3 convolutions with ELU, then a 1x1 projection.
Image resolve(const FramePyramid& pyramid, const Image& crop_rgb, const ResolverWeights& weights);

/// Weight-free stand-in: fills alpha = 0 holes from coarser layers, then mixes
/// alpha-normalized feature colour (first three channels) over the crop.
Image bypass_resolve(const FramePyramid& pyramid, const Image& crop_rgb);

/// Bilinear resize with half-pixel centres and clamped borders.
Image resize_bilinear(const Image& src, int width, int height);

} // namespace fvs
