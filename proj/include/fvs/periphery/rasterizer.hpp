// Copyright Contributors to the fvsplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fvs/image.hpp"
#include "fvs/scene/types.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fvs {

inline constexpr float kLowPassDilation = 0.3f;
/// Jacobian clamp margin beyond each screen edge, as a fraction of the half extent.
inline constexpr double kJacobianGuardBand = 0.3;
inline constexpr float kAlphaCutoff = 1.0f / 255.0f;
inline constexpr double kTransmittanceEpsilon = 1e-4;
inline constexpr double kMinCovDeterminant = 1e-12;
inline constexpr int kTileSize = 16;
inline constexpr int kResortWindow = 16;

enum class SortMode { Global, PerPixelExact, Hierarchical };

SortMode parse_sort_mode(const std::string& name);
std::string to_string(SortMode mode);

/// Screen-space footprint of one Gaussian.
struct Splat2D {
  Eigen::Vector2f mean2d = Eigen::Vector2f::Zero();
  Eigen::Matrix2f cov2d = Eigen::Matrix2f::Identity(); // after low-pass dilation
  Eigen::Vector3f conic = Eigen::Vector3f::Zero();     // (a, b, c) of cov2d^-1
  float depth = 0.0f;                                  // camera-space z of the center
  float opacity = 0.0f;
  Eigen::Vector3f color = Eigen::Vector3f::Zero();
  std::uint32_t index = 0;

  // Fragment depth along a pixel ray is the peak of the 3D Gaussian on that
  // ray: t* = d^T Q mu / d^T Q d with Q the camera-space precision matrix.
  std::array<double, 6> precision{}; // xx, xy, xz, yy, yz, zz
  std::array<double, 3> precision_mean{};

  // Inclusive-exclusive pixel bounds that contain every fragment with
  // alpha >= kAlphaCutoff.
  int x_min = 0, x_max = 0, y_min = 0, y_max = 0;
};

/// EWA projection with low-pass dilation. Returns nullopt when the Gaussian
/// is culled: center depth <= near, degenerate footprint, opacity too low to
/// ever pass the fragment cutoff, or bounds outside the screen.
std::optional<Splat2D> project_gaussian(const Gaussian& g, int sh_degree, const CameraView& camera,
                                        std::uint32_t index = 0);

/// All retained splats of a set, in input order.
std::vector<Splat2D> project_gaussians(const GaussianSet& set, const CameraView& camera);

/// alpha' = opacity * exp(-1/2 delta^T cov2d^-1 delta) at pixel position (px, py).
float fragment_alpha(const Splat2D& s, float px, float py) noexcept;

/// Camera-space depth of the fragment on the ray through pixel position
/// (px, py).
float fragment_depth(const Splat2D& s, const Intrinsics& k, float px, float py) noexcept;

/// Front-to-back compositing state of one pixel. Colors, alpha and depth are
/// accumulated in double; the caller stops feeding fragments once add()
/// returns false.
struct BlendAccumulator {
  double transmittance = 1.0;
  double r = 0.0, g = 0.0, b = 0.0;
  double alpha = 0.0;
  double depth = 0.0;

  bool add(const Eigen::Vector3f& color, float a, float d) noexcept {
    const double w = static_cast<double>(a) * transmittance;
    r += static_cast<double>(color.x()) * w;
    g += static_cast<double>(color.y()) * w;
    b += static_cast<double>(color.z()) * w;
    alpha += w;
    depth += static_cast<double>(d) * w;
    transmittance *= 1.0 - static_cast<double>(a);
    return transmittance >= kTransmittanceEpsilon;
  }
};

struct PeripheryFrame {
  Image color;                             // 3 channels, linear
  Image alpha;                             // 1 channel
  Image depth;                             // 1 channel, accumulated (not alpha-normalized)
  std::vector<std::uint32_t> fragment_count; // fragments blended per pixel
};

enum class TileSchedule { Parallel, Forward, Reverse, Shuffled };

struct RasterOptions {
  SortMode sort_mode = SortMode::Hierarchical;
  int resort_window = kResortWindow;
  TileSchedule schedule = TileSchedule::Parallel;
  std::uint64_t shuffle_seed = 0;
  int max_threads = 0; // 0: scheduler default
};

PeripheryFrame render_periphery(const GaussianSet& set, const CameraView& camera, SortMode mode);
PeripheryFrame render_periphery(const GaussianSet& set, const CameraView& camera, const RasterOptions& options);

/// Rasterize already projected splats.
PeripheryFrame rasterize_splats(std::span<const Splat2D> splats, const CameraView& camera,
                                const RasterOptions& options);

/// Mean absolute color difference between renders from two cameras.
double popping_score(const GaussianSet& set, const CameraView& camera_a, const CameraView& camera_b, SortMode mode);

} // namespace fvs
