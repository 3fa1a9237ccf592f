// Copyright Contributors to the fvsplat project
// SPDX-License-Identifier: Apache-2.0
#include "fvs/scene/types.hpp"

#include "fvs/error.hpp"

#include <cmath>

namespace fvs {

Eigen::Matrix3f Gaussian::rotation_matrix() const {
  const Eigen::Quaternionf q(rotation[0], rotation[1], rotation[2], rotation[3]);
  return q.toRotationMatrix();
}

Eigen::Matrix3f Gaussian::covariance() const {
  const Eigen::Matrix3f m = rotation_matrix() * scale().asDiagonal();
  return m * m.transpose();
}

NeuralPointCloud::NeuralPointCloud(int feature_dim) : feature_dim_(feature_dim) {
  if (feature_dim <= 0) throw ShapeError("feature dimension must be positive");
}

void NeuralPointCloud::reserve(std::size_t n) {
  positions_.reserve(n);
  sizes_.reserve(n);
  opacities_.reserve(n);
  features_.reserve(n * static_cast<std::size_t>(feature_dim_));
}

void NeuralPointCloud::push_back(const NeuralPoint& p) {
  if (static_cast<int>(p.features.size()) != feature_dim_)
    throw ShapeError("neural point descriptor has " + std::to_string(p.features.size()) + " channels, cloud expects " +
                     std::to_string(feature_dim_));
  positions_.push_back(p.position);
  sizes_.push_back(p.size);
  opacities_.push_back(p.opacity);
  features_.insert(features_.end(), p.features.begin(), p.features.end());
}

NeuralPoint NeuralPointCloud::at(std::size_t i) const {
  const auto f = features(i);
  return NeuralPoint{positions_[i], sizes_[i], std::vector<float>(f.begin(), f.end()), opacities_[i]};
}

RigidPose RigidPose::look_at(const Eigen::Vector3f& eye, const Eigen::Vector3f& target, const Eigen::Vector3f& up) {
  const Eigen::Vector3f forward = (target - eye).normalized();
  // up points along -y in camera space, so +y (down) is -up projected.
  const Eigen::Vector3f right = up.cross(forward).normalized() * -1.0f;
  const Eigen::Vector3f down = forward.cross(right).normalized();
  RigidPose pose;
  pose.rotation.row(0) = right.transpose();
  pose.rotation.row(1) = down.transpose();
  pose.rotation.row(2) = forward.transpose();
  pose.translation = -(pose.rotation * eye);
  return pose;
}

void CameraView::validate() const {
  if (!(near > 0.0f) || !(near < far)) throw ContractViolation("camera requires 0 < near < far");
  if (width <= 0 || height <= 0) throw ContractViolation("camera resolution must be positive");
  if (!(intrinsics.fx > 0.0f) || !(intrinsics.fy > 0.0f)) throw ContractViolation("focal lengths must be positive");
  if (!(gamma > 0.0f)) throw ContractViolation("gamma must be positive");
}

CameraView CameraView::from_fov(int width, int height, float horizontal_fov_deg, const RigidPose& pose) {
  CameraView cam;
  const float half = 0.5f * horizontal_fov_deg * static_cast<float>(M_PI) / 180.0f;
  const float f = 0.5f * static_cast<float>(width) / std::tan(half);
  cam.intrinsics = Intrinsics{f, f, 0.5f * static_cast<float>(width), 0.5f * static_cast<float>(height)};
  cam.pose = pose;
  cam.width = width;
  cam.height = height;
  return cam;
}

void FoveaConfig::validate() const {
  if (!(d_f > 0.0f)) throw ContractViolation("fovea radius must be positive");
  if (!(m >= 0.0f && m < 1.0f)) throw ContractViolation("blend start m must lie in [0, 1)");
  if (!(gamma_edge >= 0.0f)) throw ContractViolation("edge weight must be non-negative");
}

} // namespace fvs
