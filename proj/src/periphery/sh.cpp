// Copyright Contributors to the fvsplat project
// SPDX-License-Identifier: Apache-2.0
#include "fvs/periphery/sh.hpp"

#include "fvs/error.hpp"
#include "fvs/scene/types.hpp"

#include <cmath>

namespace fvs {
namespace {

constexpr float kC1 = 0.4886025119029199f;
constexpr float kC2[5] = {1.0925484305920792f, -1.0925484305920792f, 0.31539156525252005f, -1.0925484305920792f,
                          0.5462742152960396f};
constexpr float kC3[7] = {-0.5900435899266435f, 2.890611442640554f, -0.4570457994644658f, 0.3731763325901154f,
                          -0.4570457994644658f, 1.445305721320277f, -0.5900435899266435f};

} // namespace

Eigen::Vector3f sh_to_color(std::span<const float> coeffs, int degree, const Eigen::Vector3f& view_dir) {
  if (degree < 0 || degree > kMaxShDegree) throw ContractViolation("SH degree must be in [0, 3]");
  if (coeffs.size() < static_cast<std::size_t>(3 * sh_coeff_count(degree)))
    throw ContractViolation("too few SH coefficients for degree");
  if (std::abs(view_dir.squaredNorm() - 1.0f) > 1e-4f) throw ContractViolation("SH view direction must be unit length");

  auto c = [&](int k) { return Eigen::Vector3f(coeffs[3 * k], coeffs[3 * k + 1], coeffs[3 * k + 2]); };
  Eigen::Vector3f result = kShC0 * c(0);
  if (degree > 0) {
    const float x = view_dir.x(), y = view_dir.y(), z = view_dir.z();
    result += -kC1 * y * c(1) + kC1 * z * c(2) - kC1 * x * c(3);
    if (degree > 1) {
      const float xx = x * x, yy = y * y, zz = z * z;
      const float xy = x * y, yz = y * z, xz = x * z;
      result += kC2[0] * xy * c(4) + kC2[1] * yz * c(5) + kC2[2] * (2.0f * zz - xx - yy) * c(6) +
                kC2[3] * xz * c(7) + kC2[4] * (xx - yy) * c(8);
      if (degree > 2) {
        result += kC3[0] * y * (3.0f * xx - yy) * c(9) + kC3[1] * xy * z * c(10) +
                  kC3[2] * y * (4.0f * zz - xx - yy) * c(11) + kC3[3] * z * (2.0f * zz - 3.0f * xx - 3.0f * yy) * c(12) +
                  kC3[4] * x * (4.0f * zz - xx - yy) * c(13) + kC3[5] * z * (xx - yy) * c(14) +
                  kC3[6] * x * (xx - 3.0f * yy) * c(15);
      }
    }
  }
  result.array() += 0.5f;
  return result.cwiseMax(0.0f);
}

} // namespace fvs
