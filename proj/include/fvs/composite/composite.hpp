// Copyright Contributors to the fvsplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fvs/image.hpp"

#include <Eigen/Core>

namespace fvs {

inline constexpr double kBlendStart = 0.75;
inline constexpr double kEdgeGamma = 0.2;

/// 6x^5 - 15x^4 + 10x^3 without clamping.
double smootherstep_poly(double x) noexcept;
/// Polynomial on clamp(x, 0, 1).
double smootherstep(double x) noexcept;

/// clamp(|(u, v) - gaze| / d_f, 0, 1).
double radial_norm(double u, double v, const Eigen::Vector2d& gaze, double d_f);
/// (r_norm - m) / (1 - m); negative inside r_norm < m.
double radial_factor(double u, double v, const Eigen::Vector2d& gaze, double d_f, double m = kBlendStart);

/// Single-channel f_p over a w x h window whose top-left pixel sits at
/// `origin` in the full image. Pixel (x, y) is sampled at its centre.
Image radial_factor_map(int width, int height, const Eigen::Vector2i& origin, const Eigen::Vector2d& gaze,
                        double d_f, double m = kBlendStart);

/// Luminance of an RGB image (0.299, 0.587, 0.114), single channel.
Image luminance(const Image& rgb);

/// Sobel gradient magnitude of the luminance, replicate border, kernels not
/// normalized (a unit step yields 4).
Image edge_factor(const Image& rgb);

struct BlendMask {
  Image c;   // 1 = foveal, 0 = peripheral
  Image f_p;
  Image f_e;
};

/// c = 1 - S2(clamp(f_p + gamma * f_e, 0, 1)). Throws ShapeError when the maps differ.
BlendMask blend_mask(const Image& f_p, const Image& f_e, double gamma = kEdgeGamma);

struct CompositeParams {
  double d_f = 256.0;
  double m = kBlendStart;
  double gamma_edge = kEdgeGamma;
  bool edge_term = true;
};

/// Mask for a foveal image F placed at `origin`.
BlendMask foveal_mask(const Image& F, const Eigen::Vector2i& origin, const Eigen::Vector2d& gaze,
                      const CompositeParams& params);

/// (1 - c) p + c f inside the window at `origin`, p elsewhere. Throws
/// ShapeError when the window leaves P or F / c disagree in size.
Image compose(const Image& P, const Image& F, const Image& c, const Eigen::Vector2i& origin);

/// clamp(2^exposure * x, 0, 1)^(1 / gamma) per channel. Throws
/// ContractViolation for gamma <= 0.
Image tonemap(const Image& image, double exposure, double gamma);

} // namespace fvs
