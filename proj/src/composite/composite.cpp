// Copyright Contributors to the fvsplat project
// SPDX-License-Identifier: Apache-2.0
#include "fvs/composite/composite.hpp"

#include "fvs/error.hpp"

#include <algorithm>
#include <cmath>

namespace fvs {

double smootherstep_poly(double x) noexcept { return x * x * x * (x * (6.0 * x - 15.0) + 10.0); }

double smootherstep(double x) noexcept { return smootherstep_poly(std::clamp(x, 0.0, 1.0)); }

double radial_norm(double u, double v, const Eigen::Vector2d& gaze, double d_f) {
  if (!(d_f > 0.0)) throw ContractViolation("fovea radius must be positive");
  return std::clamp(std::hypot(u - gaze.x(), v - gaze.y()) / d_f, 0.0, 1.0);
}

double radial_factor(double u, double v, const Eigen::Vector2d& gaze, double d_f, double m) {
  if (!(m >= 0.0 && m < 1.0)) throw ContractViolation("blend start m must lie in [0, 1)");
  return (radial_norm(u, v, gaze, d_f) - m) / (1.0 - m);
}

Image radial_factor_map(int width, int height, const Eigen::Vector2i& origin, const Eigen::Vector2d& gaze, double d_f,
                        double m) {
  Image out(width, height, 1);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      out.at(x, y) = static_cast<float>(radial_factor(origin.x() + x + 0.5, origin.y() + y + 0.5, gaze, d_f, m));
  return out;
}

Image luminance(const Image& rgb) {
  if (rgb.channels < 3) throw ShapeError("luminance needs an RGB image");
  Image out(rgb.width, rgb.height, 1);
  for (std::size_t i = 0; i < out.pixel_count(); ++i) {
    const float* p = rgb.data.data() + i * rgb.channels;
    out.data[i] = static_cast<float>(0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]);
  }
  return out;
}

Image edge_factor(const Image& rgb) {
  const Image lum = luminance(rgb);
  const int w = lum.width, h = lum.height;
  Image out(w, h, 1);
  auto at = [&](int x, int y) -> double { return lum.at(std::clamp(x, 0, w - 1), std::clamp(y, 0, h - 1)); };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double gx = (at(x + 1, y - 1) + 2 * at(x + 1, y) + at(x + 1, y + 1)) -
                        (at(x - 1, y - 1) + 2 * at(x - 1, y) + at(x - 1, y + 1));
      const double gy = (at(x - 1, y + 1) + 2 * at(x, y + 1) + at(x + 1, y + 1)) -
                        (at(x - 1, y - 1) + 2 * at(x, y - 1) + at(x + 1, y - 1));
      out.at(x, y) = static_cast<float>(std::sqrt(gx * gx + gy * gy));
    }
  return out;
}

BlendMask blend_mask(const Image& f_p, const Image& f_e, double gamma) {
  if (!f_p.same_shape(f_e) || f_p.channels != 1) throw ShapeError("f_p and f_e must be single-channel maps of one size");
  BlendMask mask{Image(f_p.width, f_p.height, 1), f_p, f_e};
  for (std::size_t i = 0; i < f_p.data.size(); ++i)
    mask.c.data[i] = static_cast<float>(1.0 - smootherstep(f_p.data[i] + gamma * f_e.data[i]));
  return mask;
}

BlendMask foveal_mask(const Image& F, const Eigen::Vector2i& origin, const Eigen::Vector2d& gaze,
                      const CompositeParams& params) {
  const Image f_p = radial_factor_map(F.width, F.height, origin, gaze, params.d_f, params.m);
  const Image f_e = params.edge_term ? edge_factor(F) : Image(F.width, F.height, 1);
  return blend_mask(f_p, f_e, params.gamma_edge);
}

Image compose(const Image& P, const Image& F, const Image& c, const Eigen::Vector2i& origin) {
  if (F.channels != P.channels) throw ShapeError("foveal and peripheral images differ in channel count");
  if (c.channels != 1 || c.width != F.width || c.height != F.height) throw ShapeError("blend mask does not match F");
  if (origin.x() < 0 || origin.y() < 0 || origin.x() + F.width > P.width || origin.y() + F.height > P.height)
    throw ShapeError("foveal window leaves the peripheral image");
  Image out = P;
  for (int y = 0; y < F.height; ++y)
    for (int x = 0; x < F.width; ++x) {
      const float w = c.at(x, y);
      for (int ch = 0; ch < P.channels; ++ch) {
        float& o = out.at(origin.x() + x, origin.y() + y, ch);
        o = std::lerp(o, F.at(x, y, ch), w);
      }
    }
  return out;
}

Image tonemap(const Image& image, double exposure, double gamma) {
  if (!(gamma > 0.0)) throw ContractViolation("tone-map gamma must be positive");
  const double scale = std::exp2(exposure);
  Image out = image;
  for (float& v : out.data) {
    const double x = std::clamp(scale * v, 0.0, 1.0);
    v = static_cast<float>(gamma == 1.0 ? x : std::pow(x, 1.0 / gamma));
  }
  return out;
}

} // namespace fvs
