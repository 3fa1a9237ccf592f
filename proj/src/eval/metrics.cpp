// Copyright Contributors to the fvsplat project
// SPDX-License-Identifier: Apache-2.0
#include "fvs/eval/metrics.hpp"

#include "fvs/error.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <ostream>

namespace fvs {
namespace {

void require_same(const Image& a, const Image& b) {
  if (!a.same_shape(b) || a.empty()) throw ShapeError("metric inputs must be non-empty and of equal shape");
}

constexpr int kWindow = 11;

std::array<double, kWindow> gaussian_window() {
  std::array<double, kWindow> g{};
  double sum = 0.0;
  for (int i = 0; i < kWindow; ++i) {
    const double d = i - kWindow / 2;
    g[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
    sum += g[i];
  }
  for (double& v : g) v /= sum;
  return g;
}

// Separable Gaussian filter of one plane, zero padding, same size.
std::vector<double> blur(const std::vector<double>& src, int w, int h) {
  static const auto g = gaussian_window();
  const int r = kWindow / 2;
  std::vector<double> tmp(src.size(), 0.0), out(src.size(), 0.0);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -r; k <= r; ++k)
        if (x + k >= 0 && x + k < w) acc += g[k + r] * src[static_cast<std::size_t>(y) * w + x + k];
      tmp[static_cast<std::size_t>(y) * w + x] = acc;
    }
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int k = -r; k <= r; ++k)
        if (y + k >= 0 && y + k < h) acc += g[k + r] * tmp[static_cast<std::size_t>(y + k) * w + x];
      out[static_cast<std::size_t>(y) * w + x] = acc;
    }
  return out;
}

} // namespace

double l1(const Image& a, const Image& b) {
  require_same(a, b);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) sum += std::abs(static_cast<double>(a.data[i]) - b.data[i]);
  return sum / static_cast<double>(a.data.size());
}

double mse(const Image& a, const Image& b) {
  require_same(a, b);
  double sum = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) {
    const double d = static_cast<double>(a.data[i]) - b.data[i];
    sum += d * d;
  }
  return sum / static_cast<double>(a.data.size());
}

double psnr(const Image& a, const Image& b) {
  const double e = mse(a, b);
  if (e == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, -10.0 * std::log10(e));
}

double ssim(const Image& a, const Image& b) {
  require_same(a, b);
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  const int w = a.width, h = a.height;
  const std::size_t n = a.pixel_count();
  double total = 0.0;
  for (int c = 0; c < a.channels; ++c) {
    std::vector<double> x(n), y(n), xx(n), yy(n), xy(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = a.data[i * a.channels + c];
      y[i] = b.data[i * b.channels + c];
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = blur(x, w, h), my = blur(y, w, h);
    const auto sxx = blur(xx, w, h), syy = blur(yy, w, h), sxy = blur(xy, w, h);
    for (std::size_t i = 0; i < n; ++i) {
      const double vx = sxx[i] - mx[i] * mx[i];
      const double vy = syy[i] - my[i] * my[i];
      const double cov = sxy[i] - mx[i] * my[i];
      total += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) /
               ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
  }
  return total / static_cast<double>(n * a.channels);
}

double dssim(const Image& a, const Image& b) { return (1.0 - ssim(a, b)) / 2.0; }

double regularizer_R(const Image& F, const Image& P, const FovealRegion& region) {
  if (F.channels != P.channels) throw ShapeError("F and P differ in channel count");
  const int x0 = region.origin.x(), y0 = region.origin.y();
  if (x0 < 0 || y0 < 0 || x0 + F.width > P.width || y0 + F.height > P.height)
    throw ShapeError("foveal window leaves the peripheral image");
  double sum_f = 0.0, sum_p = 0.0;
  std::size_t count = 0;
  for (int y = 0; y < F.height; ++y)
    for (int x = 0; x < F.width; ++x) {
      if (region.mode == RegionMode::Disk &&
          std::hypot(x0 + x + 0.5 - region.gaze.x(), y0 + y + 0.5 - region.gaze.y()) > region.d_f)
        continue;
      for (int c = 0; c < F.channels; ++c) {
        sum_f += F.at(x, y, c);
        sum_p += P.at(x0 + x, y0 + y, c);
      }
      ++count;
    }
  if (count == 0) throw ContractViolation("regularizer region is empty");
  const double denom = static_cast<double>(count) * F.channels;
  return std::abs(sum_f / denom - sum_p / denom);
}

void LossWeights::validate() const {
  if (!(lambda >= 0.0 && lambda <= 1.0 && mu >= 0.0 && beta >= 0.0))
    throw ContractViolation("loss weights must be non-negative with lambda <= 1");
}

LossBreakdown total_loss(const Image& render, const Image& gt, const Image& F, const Image& P,
                         const FovealRegion& region, const LossWeights& weights) {
  weights.validate();
  LossBreakdown out;
  out.l1 = l1(render, gt);
  out.dssim = dssim(render, gt);
  out.R = regularizer_R(F, P, region);
  out.total = (1.0 - weights.lambda) * out.l1 + weights.lambda * out.dssim + weights.beta * out.R;
  return out;
}

MetricRow evaluate_view(const std::string& view_id, const Image& render, const Image& gt, const Image& F,
                        const Image& P, const FovealRegion& region) {
  MetricRow row;
  row.view_id = view_id;
  row.l1 = l1(render, gt);
  row.psnr = psnr(render, gt);
  row.ssim = ssim(render, gt);
  row.dssim = (1.0 - row.ssim) / 2.0;
  row.R = regularizer_R(F, P, region);
  return row;
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows) {
  out << "view_id,l1,psnr,ssim,dssim,R\n";
  for (const MetricRow& r : rows)
    fmt::print(out, "{},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g}\n", r.view_id, r.l1, r.psnr, r.ssim, r.dssim, r.R);
}

} // namespace fvs
