// Copyright Contributors to the fvsplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <cstddef>
#include <span>
#include <vector>

namespace fvs {

inline constexpr int kMaxShDegree = 3;
inline constexpr int kMaxShCoeffs = (kMaxShDegree + 1) * (kMaxShDegree + 1);

constexpr int sh_coeff_count(int degree) noexcept { return (degree + 1) * (degree + 1); }

/// Anisotropic 3D Gaussian of the peripheral representation.
///
/// Scale is kept in log space (the on-disk convention); opacity is already
/// activated. SH coefficients are coefficient-major: sh[3 * k + channel].
struct Gaussian {
  Eigen::Vector3f position = Eigen::Vector3f::Zero();
  Eigen::Vector3f log_scale = Eigen::Vector3f::Zero();
  Eigen::Vector4f rotation{1.0f, 0.0f, 0.0f, 0.0f}; // (w, x, y, z)
  float opacity = 1.0f;
  std::array<float, 3 * kMaxShCoeffs> sh{};

  Eigen::Vector3f scale() const { return log_scale.array().exp(); }
  Eigen::Matrix3f rotation_matrix() const;
  /// World-space covariance R S S^T R^T.
  Eigen::Matrix3f covariance() const;
};

struct GaussianSet {
  int sh_degree = 0;
  std::vector<Gaussian> gaussians;

  std::size_t size() const noexcept { return gaussians.size(); }
  bool empty() const noexcept { return gaussians.empty(); }
};

/// One neural point as a value; the cloud itself is stored column-wise.
struct NeuralPoint {
  Eigen::Vector3f position = Eigen::Vector3f::Zero();
  float size = 0.0f;
  std::vector<float> features;
  float opacity = 1.0f;
};

class NeuralPointCloud {
public:
  explicit NeuralPointCloud(int feature_dim = 4);

  int feature_dim() const noexcept { return feature_dim_; }
  std::size_t size() const noexcept { return positions_.size(); }
  bool empty() const noexcept { return positions_.empty(); }
  void reserve(std::size_t n);

  /// Throws ShapeError when the descriptor length differs from feature_dim().
  void push_back(const NeuralPoint& p);

  const Eigen::Vector3f& position(std::size_t i) const { return positions_[i]; }
  float point_size(std::size_t i) const { return sizes_[i]; }
  float opacity(std::size_t i) const { return opacities_[i]; }
  std::span<const float> features(std::size_t i) const {
    return {features_.data() + i * static_cast<std::size_t>(feature_dim_), static_cast<std::size_t>(feature_dim_)};
  }
  NeuralPoint at(std::size_t i) const;

  friend bool operator==(const NeuralPointCloud&, const NeuralPointCloud&) = default;

private:
  int feature_dim_;
  std::vector<Eigen::Vector3f> positions_;
  std::vector<float> sizes_;
  std::vector<float> opacities_;
  std::vector<float> features_;
};

struct Intrinsics {
  float fx = 1.0f;
  float fy = 1.0f;
  float cx = 0.0f;
  float cy = 0.0f;
};

/// Rigid world-to-camera transform: x_cam = rotation * x_world + translation.
/// Camera axes: +x right, +y down, +z forward.
struct RigidPose {
  Eigen::Matrix3f rotation = Eigen::Matrix3f::Identity();
  Eigen::Vector3f translation = Eigen::Vector3f::Zero();

  Eigen::Vector3f apply(const Eigen::Vector3f& world) const { return rotation * world + translation; }
  Eigen::Vector3f camera_center() const { return -(rotation.transpose() * translation); }

  static RigidPose look_at(const Eigen::Vector3f& eye, const Eigen::Vector3f& target,
                           const Eigen::Vector3f& up = Eigen::Vector3f(0.0f, -1.0f, 0.0f));
};

struct CameraView {
  Intrinsics intrinsics;
  RigidPose pose;
  int width = 1;
  int height = 1;
  float near = 0.01f;
  float far = 100.0f;
  float exposure = 0.0f;
  float gamma = 1.0f;

  /// Throws ContractViolation when an invariant does not hold.
  void validate() const;

  /// Pixel coordinates of a camera-space point (pixel centers sit at integer + 0.5).
  Eigen::Vector2f project_camera(const Eigen::Vector3f& cam) const {
    return {intrinsics.fx * cam.x() / cam.z() + intrinsics.cx, intrinsics.fy * cam.y() / cam.z() + intrinsics.cy};
  }

  /// Pinhole camera with a symmetric horizontal field of view.
  static CameraView from_fov(int width, int height, float horizontal_fov_deg, const RigidPose& pose);
};

struct FoveaConfig {
  float d_f = 256.0f;           ///< fovea radius in pixels
  float m = 0.75f;              ///< normalized radius where blending starts
  float gamma_edge = 0.2f;      ///< weight of the Sobel edge term
  float pixels_per_degree = 15.7f;
  float fovea_degrees = 17.0f;
  float resolution_scale = 1.4f;

  void validate() const;
};

} // namespace fvs
