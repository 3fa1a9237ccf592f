// Copyright Contributors to the fvsplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Core>

#include <span>

namespace fvs {

inline constexpr float kShC0 = 0.28209479177387814f;

/// View-dependent color from real SH coefficients (coefficient-major, three
/// channels each), offset by 0.5 and clamped at zero.
///
/// `view_dir` must be unit length (ContractViolation otherwise).
Eigen::Vector3f sh_to_color(std::span<const float> coeffs, int degree, const Eigen::Vector3f& view_dir);

} // namespace fvs
