// Copyright Contributors to the fvsplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fvs/image.hpp"

#include <Eigen/Core>

#include <iosfwd>
#include <string>
#include <vector>

namespace fvs {

inline constexpr double kPsnrCap = 99.0;

/// Mean absolute difference over every channel. Throws ShapeError on mismatch.
double l1(const Image& a, const Image& b);
double mse(const Image& a, const Image& b);
/// Peak 1.0; identical images (or anything above the cap) report kPsnrCap.
double psnr(const Image& a, const Image& b);
/// 11x11 Gaussian window (sigma 1.5), k1 = 0.01, k2 = 0.03, zero padding,
/// averaged over pixels and channels.
double ssim(const Image& a, const Image& b);
double dssim(const Image& a, const Image& b);

enum class RegionMode { Disk, Square };

/// Foveal window geometry in full-image pixels.
struct FovealRegion {
  Eigen::Vector2i origin = Eigen::Vector2i::Zero();
  Eigen::Vector2d gaze = Eigen::Vector2d::Zero();
  double d_f = 256.0;
  RegionMode mode = RegionMode::Disk;
};

/// |mean(F) - mean(P restricted to the window)| over region pixels, channel
/// averaged. Disk keeps pixel centres within d_f of the gaze; Square keeps
/// the whole window. Throws ContractViolation when the region is empty.
double regularizer_R(const Image& F, const Image& P, const FovealRegion& region);

struct LossWeights {
  double lambda = 0.2;
  double mu = 0.001;
  double beta = 1e-5;

  /// Throws ContractViolation unless all weights are >= 0 and lambda <= 1.
  void validate() const;
};

struct LossBreakdown {
  double l1 = 0.0;
  double dssim = 0.0;
  double vgg = 0.0;          // not evaluated
  bool vgg_excluded = true;  // the perceptual term is always reported as missing
  double R = 0.0;
  double total = 0.0;
};

/// (1 - lambda) L1 + lambda D-SSIM + beta R; the perceptual term contributes 0.
LossBreakdown total_loss(const Image& render, const Image& gt, const Image& F, const Image& P,
                         const FovealRegion& region, const LossWeights& weights = {});

struct MetricRow {
  std::string view_id;
  double l1 = 0.0;
  double psnr = 0.0;
  double ssim = 0.0;
  double dssim = 0.0;
  double R = 0.0;
};

MetricRow evaluate_view(const std::string& view_id, const Image& render, const Image& gt, const Image& F,
                        const Image& P, const FovealRegion& region);

/// Header "view_id,l1,psnr,ssim,dssim,R" then one line per row.
void write_metrics_csv(std::ostream& out, const std::vector<MetricRow>& rows);

} // namespace fvs
