// Copyright Contributors to the fvsplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fvs/image.hpp"
#include "fvs/scene/types.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <span>
#include <vector>

namespace fvs {

inline constexpr int kPyramidLayers = 4;
inline constexpr int kFragmentsPerPixel = 16;
inline constexpr float kOcclusionEpsilon = 0.05f;
inline constexpr float kOcclusionAlpha = 0.9f;

/// Square gaze-centred window of a base camera, with an off-centre
/// perspective projection that maps it to its own pixel grid.
struct Subfrustum {
  CameraView base;
  Eigen::Vector2f gaze_px = Eigen::Vector2f::Zero();
  Eigen::Vector2i crop_origin = Eigen::Vector2i::Zero();
  int crop_size = 0;
  /// Camera space -> clip space; crop pixel = (ndc + 1) / 2 * crop_size.
  Eigen::Matrix4d projection = Eigen::Matrix4d::Identity();

  /// Crop-window pixel coordinates of a world point via `projection`.
  Eigen::Vector2d project(const Eigen::Vector3f& world) const;

  /// Pinhole camera for the crop window (principal point shifted by the origin).
  CameraView crop_camera() const;
};

/// Window of side 2 * d_f (at most the smaller image side) centred on the
/// gaze and clamped inside the image.
Subfrustum make_subfrustum(const CameraView& camera, const Eigen::Vector2f& gaze_px, float d_f);

/// Fovea radius in pixels: the visual-angle footprint rounded up to a power of
/// two window size, halved.
int fovea_radius_px(const FoveaConfig& cfg);

struct CullOptions {
  float eps_rel = kOcclusionEpsilon;
  float alpha_occl = kOcclusionAlpha;
  bool occlusion = true;
};

struct CullResult {
  std::vector<std::uint32_t> indices; // ascending
  std::size_t in_frustum = 0;
  std::size_t occluded = 0;
};

/// Keeps points whose centre projects inside the crop window with depth in
/// (near, far), then drops those behind a near-opaque peripheral surface:
/// alpha >= alpha_occl and depth > periphery_depth * (1 + eps_rel).
/// `periphery_depth` and `periphery_alpha` are single-channel base-resolution maps.
CullResult cull_points(const NeuralPointCloud& cloud, const Subfrustum& sub, const Image& periphery_depth,
                       const Image& periphery_alpha, const CullOptions& options = {});

/// Multi-resolution feature image. Layer l has ceil(crop_size / 2^l) pixels a
/// side and feature_dim + 1 channels: premultiplied features, then alpha.
struct FramePyramid {
  int crop_size = 0;
  int feature_dim = 0;
  std::vector<Image> layers;
  std::vector<std::size_t> fragment_counts; // fragments written per layer, before the K cap

  static FramePyramid zeros(int crop_size, int feature_dim, int levels = kPyramidLayers);
  int levels() const noexcept { return static_cast<int>(layers.size()); }
};

struct SplatOptions {
  int levels = kPyramidLayers;
  int max_fragments = kFragmentsPerPixel;
};

/// Projected-size layer coordinate: clamp(log2(max(s_px, 1)), 0, levels - 1).
float pyramid_level(float size_px, int levels) noexcept;

/// Splats points into the pyramid of the crop window. Each point writes a
/// bilinear 2x2 footprint into layers floor(l) and ceil(l) weighted by
/// (1 - frac(l), frac(l)); every pixel keeps its K nearest fragments by
/// (depth, point index) and blends them front to back. All layers share one
/// count / prefix-sum / fill pass.
FramePyramid splat_pyramid(const NeuralPointCloud& cloud, std::span<const std::uint32_t> indices, const Subfrustum& sub,
                           const SplatOptions& options = {});

} // namespace fvs
