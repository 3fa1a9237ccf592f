// Copyright Contributors to the fvsplat project
// SPDX-License-Identifier: Apache-2.0
#include "fvs/fovea/fovea.hpp"

#include "fvs/error.hpp"

#include <tbb/blocked_range.h>
#include <tbb/parallel_for.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>

namespace fvs {
namespace {

constexpr std::uint32_t kNoPixel = std::numeric_limits<std::uint32_t>::max();
constexpr int kMaxFootprint = 8; // two layers x 2x2 bilinear taps

struct PointFragment {
  std::uint32_t pixel = kNoPixel; // index into the concatenation of all layers
  float alpha = 0.0f;
  float depth = 0.0f;
  std::uint32_t point = 0;
};

bool nearer(const PointFragment& a, const PointFragment& b) noexcept {
  return a.depth < b.depth || (a.depth == b.depth && a.point < b.point);
}

int layer_side(int crop_size, int level) { return (crop_size + (1 << level) - 1) >> level; }

} // namespace

Eigen::Vector2d Subfrustum::project(const Eigen::Vector3f& world) const {
  const Eigen::Vector3d cam = base.pose.apply(world).cast<double>();
  const Eigen::Vector4d clip = projection * cam.homogeneous();
  const double n = static_cast<double>(crop_size);
  return {(clip.x() / clip.w() + 1.0) * 0.5 * n, (clip.y() / clip.w() + 1.0) * 0.5 * n};
}

CameraView Subfrustum::crop_camera() const {
  CameraView cam = base;
  cam.width = cam.height = crop_size;
  cam.intrinsics.cx = base.intrinsics.cx - static_cast<float>(crop_origin.x());
  cam.intrinsics.cy = base.intrinsics.cy - static_cast<float>(crop_origin.y());
  return cam;
}

Subfrustum make_subfrustum(const CameraView& camera, const Eigen::Vector2f& gaze_px, float d_f) {
  camera.validate();
  if (!(d_f > 0.0f)) throw ContractViolation("fovea radius must be positive");
  if (!(gaze_px.x() >= 0.0f && gaze_px.x() <= static_cast<float>(camera.width) && gaze_px.y() >= 0.0f &&
        gaze_px.y() <= static_cast<float>(camera.height)))
    throw ContractViolation("gaze must lie inside the image");

  Subfrustum sub;
  sub.base = camera;
  sub.gaze_px = gaze_px;
  sub.crop_size = std::min({static_cast<int>(std::lround(2.0f * d_f)), camera.width, camera.height});
  const float half = 0.5f * static_cast<float>(sub.crop_size);
  sub.crop_origin.x() = std::clamp(static_cast<int>(std::lround(gaze_px.x() - half)), 0, camera.width - sub.crop_size);
  sub.crop_origin.y() = std::clamp(static_cast<int>(std::lround(gaze_px.y() - half)), 0, camera.height - sub.crop_size);

  // Off-centre frustum through the crop window on the near plane.
  const Intrinsics& k = camera.intrinsics;
  const double n = camera.near, f = camera.far;
  const double left = (sub.crop_origin.x() - static_cast<double>(k.cx)) * n / k.fx;
  const double right = (sub.crop_origin.x() + sub.crop_size - static_cast<double>(k.cx)) * n / k.fx;
  const double top = (sub.crop_origin.y() - static_cast<double>(k.cy)) * n / k.fy;
  const double bottom = (sub.crop_origin.y() + sub.crop_size - static_cast<double>(k.cy)) * n / k.fy;
  Eigen::Matrix4d p = Eigen::Matrix4d::Zero();
  p(0, 0) = 2.0 * n / (right - left);
  p(0, 2) = -(right + left) / (right - left);
  p(1, 1) = 2.0 * n / (bottom - top);
  p(1, 2) = -(bottom + top) / (bottom - top);
  p(2, 2) = (f + n) / (f - n);
  p(2, 3) = -2.0 * f * n / (f - n);
  p(3, 2) = 1.0;
  sub.projection = p;
  return sub;
}

int fovea_radius_px(const FoveaConfig& cfg) {
  if (!(cfg.pixels_per_degree > 0.0f && cfg.fovea_degrees > 0.0f && cfg.resolution_scale > 0.0f))
    throw ContractViolation("fovea size parameters must be positive");
  const double raw = static_cast<double>(cfg.pixels_per_degree) * cfg.fovea_degrees * cfg.resolution_scale;
  const auto size = std::bit_ceil(static_cast<std::uint64_t>(std::ceil(raw)));
  return static_cast<int>(size / 2);
}

CullResult cull_points(const NeuralPointCloud& cloud, const Subfrustum& sub, const Image& periphery_depth,
                       const Image& periphery_alpha, const CullOptions& options) {
  const CameraView& cam = sub.base;
  if (periphery_depth.width != cam.width || periphery_depth.height != cam.height || periphery_depth.channels != 1 ||
      !periphery_alpha.same_shape(periphery_depth))
    throw ShapeError("periphery depth/alpha must be single-channel maps at base resolution");

  enum : std::uint8_t { kOutside = 0, kKept = 1, kOccluded = 2 };
  std::vector<std::uint8_t> state(cloud.size(), kOutside);
  const float x0 = static_cast<float>(sub.crop_origin.x()), y0 = static_cast<float>(sub.crop_origin.y());
  const float x1 = x0 + static_cast<float>(sub.crop_size), y1 = y0 + static_cast<float>(sub.crop_size);

  tbb::parallel_for(tbb::blocked_range<std::size_t>(0, cloud.size(), 4096), [&](const auto& r) {
    for (std::size_t i = r.begin(); i < r.end(); ++i) {
      const Eigen::Vector3f c = cam.pose.apply(cloud.position(i));
      if (!(c.z() > cam.near && c.z() < cam.far)) continue;
      const Eigen::Vector2f px = cam.project_camera(c);
      if (!(px.x() >= x0 && px.x() < x1 && px.y() >= y0 && px.y() < y1)) continue;
      if (options.occlusion) {
        const int bx = std::min(static_cast<int>(std::floor(px.x())), cam.width - 1);
        const int by = std::min(static_cast<int>(std::floor(px.y())), cam.height - 1);
        if (periphery_alpha.at(bx, by) >= options.alpha_occl &&
            c.z() > periphery_depth.at(bx, by) * (1.0f + options.eps_rel)) {
          state[i] = kOccluded;
          continue;
        }
      }
      state[i] = kKept;
    }
  });

  CullResult result;
  for (std::size_t i = 0; i < state.size(); ++i) {
    if (state[i] == kOutside) continue;
    ++result.in_frustum;
    if (state[i] == kOccluded) {
      ++result.occluded;
      continue;
    }
    result.indices.push_back(static_cast<std::uint32_t>(i));
  }
  return result;
}

FramePyramid FramePyramid::zeros(int crop_size, int feature_dim, int levels) {
  if (crop_size <= 0 || feature_dim <= 0 || levels <= 0) throw ContractViolation("pyramid dimensions must be positive");
  FramePyramid p;
  p.crop_size = crop_size;
  p.feature_dim = feature_dim;
  for (int l = 0; l < levels; ++l) {
    const int side = layer_side(crop_size, l);
    p.layers.emplace_back(side, side, feature_dim + 1);
  }
  p.fragment_counts.assign(static_cast<std::size_t>(levels), 0);
  return p;
}

float pyramid_level(float size_px, int levels) noexcept {
  const float l = std::log2(std::max(size_px, 1.0f));
  return std::clamp(l, 0.0f, static_cast<float>(levels - 1));
}

FramePyramid splat_pyramid(const NeuralPointCloud& cloud, std::span<const std::uint32_t> indices, const Subfrustum& sub,
                           const SplatOptions& options) {
  if (options.levels <= 0 || options.max_fragments <= 0) throw ContractViolation("pyramid options must be positive");
  const int dim = cloud.feature_dim();
  FramePyramid pyramid = FramePyramid::zeros(sub.crop_size, dim, options.levels);
  const CameraView cam = sub.crop_camera();

  std::vector<std::size_t> layer_offset(static_cast<std::size_t>(options.levels) + 1, 0);
  for (int l = 0; l < options.levels; ++l)
    layer_offset[l + 1] = layer_offset[l] + pyramid.layers[l].pixel_count();
  const std::size_t total_pixels = layer_offset.back();
  if (total_pixels >= kNoPixel) throw ContractViolation("pyramid too large");

  // Footprints of every point, all layers at once.
  std::vector<PointFragment> footprint(indices.size() * kMaxFootprint);
  tbb::parallel_for(tbb::blocked_range<std::size_t>(0, indices.size(), 2048), [&](const auto& r) {
    for (std::size_t j = r.begin(); j < r.end(); ++j) {
      const std::uint32_t i = indices[j];
      if (i >= cloud.size()) continue;
      const Eigen::Vector3f c = cam.pose.apply(cloud.position(i));
      if (!(c.z() > 0.0f)) continue;
      const Eigen::Vector2f uv = cam.project_camera(c);
      const float level = pyramid_level(cloud.point_size(i) * cam.intrinsics.fx / c.z(), options.levels);
      const int l0 = static_cast<int>(std::floor(level));
      const float frac = level - static_cast<float>(l0);
      PointFragment* out = footprint.data() + j * kMaxFootprint;
      for (int side = 0; side < 2; ++side) {
        const int l = l0 + side;
        const float w_layer = side == 0 ? 1.0f - frac : frac;
        if (!(w_layer > 0.0f) || l >= options.levels) continue;
        const Image& layer = pyramid.layers[l];
        const float inv = 1.0f / static_cast<float>(1 << l);
        const float gx = uv.x() * inv - 0.5f;
        const float gy = uv.y() * inv - 0.5f;
        const float fx0 = std::floor(gx), fy0 = std::floor(gy);
        const float tx = gx - fx0, ty = gy - fy0;
        const int x0 = static_cast<int>(fx0), y0 = static_cast<int>(fy0);
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const int x = x0 + dx, y = y0 + dy;
            const float w = (dx ? tx : 1.0f - tx) * (dy ? ty : 1.0f - ty);
            const float a = cloud.opacity(i) * w_layer * w;
            if (!(a > 0.0f) || x < 0 || y < 0 || x >= layer.width || y >= layer.height) continue;
            out[side * 4 + dy * 2 + dx] = PointFragment{
                static_cast<std::uint32_t>(layer_offset[l] + static_cast<std::size_t>(y) * layer.width + x), a, c.z(), i};
          }
      }
    }
  });

  // Single count / prefix / fill over the concatenated layers.
  std::vector<std::uint32_t> start(total_pixels + 1, 0);
  for (const PointFragment& f : footprint)
    if (f.pixel != kNoPixel) ++start[f.pixel + 1];
  std::partial_sum(start.begin(), start.end(), start.begin());
  std::vector<PointFragment> lists(start.back());
  {
    std::vector<std::uint32_t> cursor(start.begin(), start.end() - 1);
    for (const PointFragment& f : footprint)
      if (f.pixel != kNoPixel) lists[cursor[f.pixel]++] = f;
  }
  for (int l = 0; l < options.levels; ++l)
    pyramid.fragment_counts[l] = start[layer_offset[l + 1]] - start[layer_offset[l]];

  const std::size_t k = static_cast<std::size_t>(options.max_fragments);
  tbb::parallel_for(tbb::blocked_range<std::size_t>(0, total_pixels, 1024), [&](const auto& r) {
    std::vector<double> acc(static_cast<std::size_t>(dim));
    for (std::size_t p = r.begin(); p < r.end(); ++p) {
      auto first = lists.begin() + start[p];
      auto last = lists.begin() + start[p + 1];
      if (first == last) continue;
      const std::size_t n = static_cast<std::size_t>(last - first);
      const auto keep = first + static_cast<std::ptrdiff_t>(std::min(n, k));
      std::partial_sort(first, keep, last, nearer);

      std::fill(acc.begin(), acc.end(), 0.0);
      double alpha = 0.0, transmittance = 1.0;
      for (auto it = first; it != keep; ++it) {
        const double w = static_cast<double>(it->alpha) * transmittance;
        const auto feat = cloud.features(it->point);
        for (int c = 0; c < dim; ++c) acc[c] += static_cast<double>(feat[c]) * w;
        alpha += w;
        transmittance *= 1.0 - static_cast<double>(it->alpha);
      }
      const int l = static_cast<int>(std::upper_bound(layer_offset.begin(), layer_offset.end(), p) - layer_offset.begin()) - 1;
      Image& layer = pyramid.layers[l];
      float* px = layer.data.data() + (p - layer_offset[l]) * static_cast<std::size_t>(dim + 1);
      for (int c = 0; c < dim; ++c) px[c] = static_cast<float>(acc[c]);
      px[dim] = static_cast<float>(std::min(alpha, 1.0));
    }
  });
  return pyramid;
}

} // namespace fvs
