// Copyright Contributors to the fvsplat project
// SPDX-License-Identifier: Apache-2.0
#include "fvs/periphery/rasterizer.hpp"

#include "fvs/error.hpp"
#include "fvs/periphery/sh.hpp"

#include <tbb/blocked_range.h>
#include <tbb/info.h>
#include <tbb/parallel_for.h>
#include <tbb/task_arena.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace fvs {
namespace {

struct Fragment {
  float depth;
  std::uint32_t index;
  float alpha;
  std::uint32_t slot;
};

bool fragment_before(const Fragment& a, const Fragment& b) noexcept {
  return a.depth < b.depth || (a.depth == b.depth && a.index < b.index);
}

int clamp_to_int(double v, int lo, int hi) {
  if (!(v > lo)) return lo; // also catches NaN
  if (v > hi) return hi;
  return static_cast<int>(v);
}

struct TileBins {
  int tiles_x = 0;
  int tiles_y = 0;
  std::vector<std::size_t> offsets; // tiles_x * tiles_y + 1
  std::vector<std::uint32_t> slots; // splat slots, sorted by (center depth, index) within each tile
};

TileBins bin_splats(std::span<const Splat2D> splats, int width, int height) {
  TileBins bins;
  bins.tiles_x = (width + kTileSize - 1) / kTileSize;
  bins.tiles_y = (height + kTileSize - 1) / kTileSize;
  const std::size_t n_tiles = static_cast<std::size_t>(bins.tiles_x) * bins.tiles_y;

  std::vector<std::uint32_t> order(splats.size());
  std::iota(order.begin(), order.end(), 0u);
  std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    const Splat2D& sa = splats[a];
    const Splat2D& sb = splats[b];
    return sa.depth < sb.depth || (sa.depth == sb.depth && sa.index < sb.index);
  });

  std::vector<std::size_t> counts(n_tiles + 1, 0);
  auto for_tiles = [&](const Splat2D& s, auto&& fn) {
    const int tx0 = s.x_min / kTileSize, tx1 = (s.x_max - 1) / kTileSize;
    const int ty0 = s.y_min / kTileSize, ty1 = (s.y_max - 1) / kTileSize;
    for (int ty = ty0; ty <= ty1; ++ty)
      for (int tx = tx0; tx <= tx1; ++tx) fn(static_cast<std::size_t>(ty) * bins.tiles_x + tx);
  };
  for (std::uint32_t slot : order) for_tiles(splats[slot], [&](std::size_t t) { ++counts[t + 1]; });
  std::partial_sum(counts.begin(), counts.end(), counts.begin());
  bins.offsets = counts;
  bins.slots.resize(bins.offsets.back());
  std::vector<std::size_t> cursor(bins.offsets.begin(), bins.offsets.end() - 1);
  for (std::uint32_t slot : order) for_tiles(splats[slot], [&](std::size_t t) { bins.slots[cursor[t]++] = slot; });
  return bins;
}

class TileRenderer {
public:
  TileRenderer(std::span<const Splat2D> splats, const CameraView& camera, const TileBins& bins,
               const RasterOptions& options, PeripheryFrame& frame)
      : splats_(splats), camera_(camera), bins_(bins), options_(options), frame_(frame) {}

  void render(std::size_t tile) const {
    const int tx = static_cast<int>(tile % bins_.tiles_x);
    const int ty = static_cast<int>(tile / bins_.tiles_x);
    const std::span<const std::uint32_t> list(bins_.slots.data() + bins_.offsets[tile],
                                              bins_.offsets[tile + 1] - bins_.offsets[tile]);
    std::vector<Fragment> scratch;
    const int x_end = std::min(camera_.width, (tx + 1) * kTileSize);
    const int y_end = std::min(camera_.height, (ty + 1) * kTileSize);
    for (int y = ty * kTileSize; y < y_end; ++y)
      for (int x = tx * kTileSize; x < x_end; ++x) render_pixel(x, y, list, scratch);
  }

private:
  void render_pixel(int x, int y, std::span<const std::uint32_t> list, std::vector<Fragment>& scratch) const {
    const float px = static_cast<float>(x) + 0.5f;
    const float py = static_cast<float>(y) + 0.5f;
    BlendAccumulator acc;
    std::uint32_t blended = 0;

    auto blend = [&](const Fragment& f) {
      ++blended;
      return acc.add(splats_[f.slot].color, f.alpha, f.depth);
    };
    auto make_fragment = [&](std::uint32_t slot, float alpha) {
      const Splat2D& s = splats_[slot];
      return Fragment{fragment_depth(s, camera_.intrinsics, px, py), s.index, alpha, slot};
    };

    switch (options_.sort_mode) {
    case SortMode::Global:
      for (std::uint32_t slot : list) {
        const float a = fragment_alpha(splats_[slot], px, py);
        if (a < kAlphaCutoff) continue;
        if (!blend(make_fragment(slot, a))) break;
      }
      break;
    case SortMode::PerPixelExact:
      scratch.clear();
      for (std::uint32_t slot : list) {
        const float a = fragment_alpha(splats_[slot], px, py);
        if (a < kAlphaCutoff) continue;
        scratch.push_back(make_fragment(slot, a));
      }
      std::sort(scratch.begin(), scratch.end(), fragment_before);
      for (const Fragment& f : scratch)
        if (!blend(f)) break;
      break;
    case SortMode::Hierarchical: {
      // Sliding resort window: fragments arrive in tile order and leave the
      // window in per-pixel depth order.
      const std::size_t k = static_cast<std::size_t>(std::max(1, options_.resort_window));
      scratch.clear();
      bool open = true;
      for (std::uint32_t slot : list) {
        const float a = fragment_alpha(splats_[slot], px, py);
        if (a < kAlphaCutoff) continue;
        const Fragment f = make_fragment(slot, a);
        if (scratch.size() == k) {
          if (fragment_before(f, scratch.front())) {
            open = blend(f);
          } else {
            open = blend(scratch.front());
            scratch.erase(scratch.begin());
            scratch.insert(std::upper_bound(scratch.begin(), scratch.end(), f, fragment_before), f);
          }
          if (!open) break;
        } else {
          scratch.insert(std::upper_bound(scratch.begin(), scratch.end(), f, fragment_before), f);
        }
      }
      if (open)
        for (const Fragment& f : scratch)
          if (!blend(f)) break;
      break;
    }
    }

    const std::size_t p = static_cast<std::size_t>(y) * camera_.width + x;
    frame_.color.data[3 * p + 0] = static_cast<float>(acc.r);
    frame_.color.data[3 * p + 1] = static_cast<float>(acc.g);
    frame_.color.data[3 * p + 2] = static_cast<float>(acc.b);
    frame_.alpha.data[p] = static_cast<float>(std::min(acc.alpha, 1.0));
    frame_.depth.data[p] = static_cast<float>(acc.depth);
    frame_.fragment_count[p] = blended;
  }

  std::span<const Splat2D> splats_;
  const CameraView& camera_;
  const TileBins& bins_;
  const RasterOptions& options_;
  PeripheryFrame& frame_;
};

} // namespace

SortMode parse_sort_mode(const std::string& name) {
  if (name == "global") return SortMode::Global;
  if (name == "per_pixel_exact") return SortMode::PerPixelExact;
  if (name == "hierarchical") return SortMode::Hierarchical;
  throw ContractViolation("unknown sort mode '" + name + "'");
}

std::string to_string(SortMode mode) {
  switch (mode) {
  case SortMode::Global: return "global";
  case SortMode::PerPixelExact: return "per_pixel_exact";
  case SortMode::Hierarchical: return "hierarchical";
  }
  return "unknown";
}

std::optional<Splat2D> project_gaussian(const Gaussian& g, int sh_degree, const CameraView& camera,
                                        std::uint32_t index) {
  const Eigen::Vector3f cam = camera.pose.apply(g.position);
  if (!(cam.z() > camera.near)) return std::nullopt;
  if (!(g.opacity >= kAlphaCutoff)) return std::nullopt;

  const Intrinsics& k = camera.intrinsics;
  const double z = cam.z();
  // Jacobian evaluated at the view direction clamped to a guard band around
  // the screen, so off-screen Gaussians near the camera stay bounded.
  const double gx = kJacobianGuardBand * 0.5 * camera.width / k.fx;
  const double gy = kJacobianGuardBand * 0.5 * camera.height / k.fy;
  const double tx = std::clamp(cam.x() / z, -k.cx / k.fx - gx, (camera.width - k.cx) / k.fx + gx) * z;
  const double ty = std::clamp(cam.y() / z, -k.cy / k.fy - gy, (camera.height - k.cy) / k.fy + gy) * z;
  Eigen::Matrix<double, 2, 3> jac;
  jac << k.fx / z, 0.0, -k.fx * tx / (z * z), 0.0, k.fy / z, -k.fy * ty / (z * z);

  const Eigen::Matrix3d rot = camera.pose.rotation.cast<double>() * g.rotation_matrix().cast<double>();
  const Eigen::Vector3d scale = g.log_scale.cast<double>().array().exp();
  const Eigen::Matrix3d cov_cam = rot * scale.array().square().matrix().asDiagonal() * rot.transpose();
  const Eigen::Matrix3d precision = rot * scale.array().square().inverse().matrix().asDiagonal() * rot.transpose();

  Eigen::Matrix2d cov = jac * cov_cam * jac.transpose();
  cov(0, 0) += kLowPassDilation;
  cov(1, 1) += kLowPassDilation;
  cov(0, 1) = cov(1, 0) = 0.5 * (cov(0, 1) + cov(1, 0));
  const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(0, 1);
  if (!(det > kMinCovDeterminant)) return std::nullopt;

  Splat2D s;
  s.mean2d = camera.project_camera(cam);
  s.cov2d = cov.cast<float>();
  s.conic = Eigen::Vector3f(static_cast<float>(cov(1, 1) / det), static_cast<float>(-cov(0, 1) / det),
                            static_cast<float>(cov(0, 0) / det));
  s.depth = cam.z();
  s.opacity = g.opacity;
  s.index = index;
  s.precision = {precision(0, 0), precision(0, 1), precision(0, 2), precision(1, 1), precision(1, 2), precision(2, 2)};
  const Eigen::Vector3d qm = precision * cam.cast<double>();
  s.precision_mean = {qm.x(), qm.y(), qm.z()};

  // Mahalanobis radius at which alpha' falls to the cutoff, plus a pixel of
  // slack for rounding in the per-pixel evaluation.
  const double r2 = 2.0 * std::log(255.0 * static_cast<double>(g.opacity)) + 1e-3;
  const double hx = std::sqrt(std::max(r2, 0.0) * cov(0, 0)) + 1.0;
  const double hy = std::sqrt(std::max(r2, 0.0) * cov(1, 1)) + 1.0;
  s.x_min = clamp_to_int(std::floor(s.mean2d.x() - hx), 0, camera.width);
  s.x_max = clamp_to_int(std::ceil(s.mean2d.x() + hx), 0, camera.width);
  s.y_min = clamp_to_int(std::floor(s.mean2d.y() - hy), 0, camera.height);
  s.y_max = clamp_to_int(std::ceil(s.mean2d.y() + hy), 0, camera.height);
  if (s.x_min >= s.x_max || s.y_min >= s.y_max) return std::nullopt;

  const Eigen::Vector3f dir = (g.position - camera.pose.camera_center()).normalized();
  s.color = sh_to_color(std::span<const float>(g.sh.data(), 3 * static_cast<std::size_t>(sh_coeff_count(sh_degree))),
                        sh_degree, dir);
  return s;
}

std::vector<Splat2D> project_gaussians(const GaussianSet& set, const CameraView& camera) {
  camera.validate();
  std::vector<std::optional<Splat2D>> projected(set.size());
  tbb::parallel_for(tbb::blocked_range<std::size_t>(0, set.size(), 1024), [&](const auto& r) {
    for (std::size_t i = r.begin(); i < r.end(); ++i)
      projected[i] = project_gaussian(set.gaussians[i], set.sh_degree, camera, static_cast<std::uint32_t>(i));
  });
  std::vector<Splat2D> out;
  out.reserve(set.size());
  for (auto& p : projected)
    if (p) out.push_back(*p);
  return out;
}

float fragment_alpha(const Splat2D& s, float px, float py) noexcept {
  const float dx = s.mean2d.x() - px;
  const float dy = s.mean2d.y() - py;
  float power = -0.5f * (s.conic.x() * dx * dx + s.conic.z() * dy * dy) - s.conic.y() * dx * dy;
  power = std::min(power, 0.0f);
  return s.opacity * std::exp(power);
}

float fragment_depth(const Splat2D& s, const Intrinsics& k, float px, float py) noexcept {
  const double dx = (static_cast<double>(px) - k.cx) / k.fx;
  const double dy = (static_cast<double>(py) - k.cy) / k.fy;
  const auto& q = s.precision;
  const double num = dx * s.precision_mean[0] + dy * s.precision_mean[1] + s.precision_mean[2];
  const double den = q[0] * dx * dx + 2.0 * q[1] * dx * dy + 2.0 * q[2] * dx + q[3] * dy * dy + 2.0 * q[4] * dy + q[5];
  if (!(den > 0.0)) return s.depth;
  return static_cast<float>(num / den);
}

PeripheryFrame rasterize_splats(std::span<const Splat2D> splats, const CameraView& camera,
                                const RasterOptions& options) {
  camera.validate();
  PeripheryFrame frame;
  frame.color = Image(camera.width, camera.height, 3);
  frame.alpha = Image(camera.width, camera.height, 1);
  frame.depth = Image(camera.width, camera.height, 1);
  frame.fragment_count.assign(frame.alpha.pixel_count(), 0);
  if (splats.empty()) return frame;

  const TileBins bins = bin_splats(splats, camera.width, camera.height);
  const TileRenderer renderer(splats, camera, bins, options, frame);
  const std::size_t n_tiles = static_cast<std::size_t>(bins.tiles_x) * bins.tiles_y;

  switch (options.schedule) {
  case TileSchedule::Parallel: {
    auto run = [&] {
      tbb::parallel_for(tbb::blocked_range<std::size_t>(0, n_tiles, 1), [&](const auto& r) {
        for (std::size_t t = r.begin(); t < r.end(); ++t) renderer.render(t);
      });
    };
    if (options.max_threads > 0) {
      // More slots than hardware threads only produces scheduler warnings.
      tbb::task_arena arena(std::min(options.max_threads, tbb::info::default_concurrency()));
      arena.execute(run);
    } else {
      run();
    }
    break;
  }
  case TileSchedule::Forward:
    for (std::size_t t = 0; t < n_tiles; ++t) renderer.render(t);
    break;
  case TileSchedule::Reverse:
    for (std::size_t t = n_tiles; t-- > 0;) renderer.render(t);
    break;
  case TileSchedule::Shuffled: {
    std::vector<std::size_t> order(n_tiles);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(options.shuffle_seed);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t t : order) renderer.render(t);
    break;
  }
  }
  return frame;
}

PeripheryFrame render_periphery(const GaussianSet& set, const CameraView& camera, const RasterOptions& options) {
  const std::vector<Splat2D> splats = project_gaussians(set, camera);
  return rasterize_splats(splats, camera, options);
}

PeripheryFrame render_periphery(const GaussianSet& set, const CameraView& camera, SortMode mode) {
  RasterOptions options;
  options.sort_mode = mode;
  return render_periphery(set, camera, options);
}

double popping_score(const GaussianSet& set, const CameraView& camera_a, const CameraView& camera_b, SortMode mode) {
  const PeripheryFrame a = render_periphery(set, camera_a, mode);
  const PeripheryFrame b = render_periphery(set, camera_b, mode);
  if (!a.color.same_shape(b.color)) throw ShapeError("popping_score needs cameras of equal resolution");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.color.data.size(); ++i)
    sum += std::abs(static_cast<double>(a.color.data[i]) - static_cast<double>(b.color.data[i]));
  return a.color.data.empty() ? 0.0 : sum / static_cast<double>(a.color.data.size());
}

} // namespace fvs
