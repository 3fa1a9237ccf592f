// Copyright Contributors to the fvsplat project
// SPDX-License-Identifier: Apache-2.0
#include "fvs/harness/pipeline.hpp"

#include "fvs/error.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

namespace fvs {
namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

Eigen::Vector2f clamp_gaze(Eigen::Vector2f g, const CameraView& cam) {
  if (!std::isfinite(g.x()) || !std::isfinite(g.y())) return {0.5f * cam.width, 0.5f * cam.height};
  return {std::clamp(g.x(), 0.0f, static_cast<float>(cam.width)), std::clamp(g.y(), 0.0f, static_cast<float>(cam.height))};
}

} // namespace

ResolverKind parse_resolver_kind(const std::string& name) {
  if (name == "weights") return ResolverKind::Weights;
  if (name == "bypass") return ResolverKind::Bypass;
  throw ContractViolation("unknown resolver '" + name + "' (expected weights or bypass)");
}

std::string to_string(ResolverKind kind) { return kind == ResolverKind::Weights ? "weights" : "bypass"; }

RenderMode parse_render_mode(const std::string& name) {
  if (name == "foveated") return RenderMode::Foveated;
  if (name == "full-gs") return RenderMode::FullGS;
  if (name == "mask-debug") return RenderMode::MaskDebug;
  throw ContractViolation("unknown render mode '" + name + "' (expected foveated, full-gs or mask-debug)");
}

std::string to_string(RenderMode mode) {
  switch (mode) {
  case RenderMode::Foveated: return "foveated";
  case RenderMode::FullGS: return "full-gs";
  case RenderMode::MaskDebug: return "mask-debug";
  }
  return "?";
}

Pipeline::Pipeline(const GaussianSet& gaussians, const NeuralPointCloud& points, std::optional<ResolverWeights> weights,
                   PipelineOptions options)
    : gaussians_(&gaussians), points_(&points),
      weights_(weights ? std::move(*weights) : identity_weights(ResolverArch::standard(points.feature_dim()))),
      options_(options) {
  weights_.validate();
}

FrameResult Pipeline::render(const CameraView& camera, const Eigen::Vector2f& gaze) const {
  return render(camera, [gaze] { return gaze; });
}

FrameResult Pipeline::render(const CameraView& camera, const GazeLatch& latch) const {
  camera.validate();
  FrameResult r;
  RasterOptions raster;
  raster.sort_mode = options_.popping_fix ? options_.sort_mode : SortMode::Global;
  raster.max_threads = options_.max_threads;

  auto t0 = Clock::now();
  r.periphery = render_periphery(*gaussians_, camera, raster);
  r.timings.periphery_ms = ms_since(t0);

  // Gaze is read only now, after the peripheral pass.
  r.gaze = clamp_gaze(latch(), camera);
  r.sub = make_subfrustum(camera, r.gaze, options_.fovea_px);
  const Eigen::Vector2i origin = r.sub.crop_origin;
  const int side = r.sub.crop_size;
  const Image crop_rgb = r.periphery.color.crop(origin.x(), origin.y(), side, side);

  CompositeParams cp;
  cp.d_f = 0.5 * side;
  cp.m = options_.m;
  cp.gamma_edge = options_.gamma_edge;
  cp.edge_term = options_.edge_term;
  const Eigen::Vector2d gaze_d = r.gaze.cast<double>();

  if (options_.mode == RenderMode::FullGS) {
    r.F = crop_rgb;
    r.mask = {Image(side, side, 1), Image(side, side, 1), Image(side, side, 1)};
    r.linear = r.periphery.color;
  } else {
    t0 = Clock::now();
    CullOptions cull;
    cull.occlusion = options_.depth_cull;
    r.cull = cull_points(*points_, r.sub, r.periphery.depth, r.periphery.alpha, cull);
    const FramePyramid pyramid = splat_pyramid(*points_, r.cull.indices, r.sub);
    for (std::size_t n : pyramid.fragment_counts) r.pyramid_fragments += n;
    r.timings.fovea_points_ms = ms_since(t0);

    t0 = Clock::now();
    r.F = options_.resolver == ResolverKind::Weights ? resolve(pyramid, crop_rgb, weights_) : bypass_resolve(pyramid, crop_rgb);
    r.timings.resolver_ms = ms_since(t0);

    t0 = Clock::now();
    r.mask = foveal_mask(r.F, origin, gaze_d, cp);
    if (options_.mode == RenderMode::MaskDebug) {
      Image debug(camera.width, camera.height, 3);
      for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x)
          for (int c = 0; c < 3; ++c) debug.at(origin.x() + x, origin.y() + y, c) = r.mask.c.at(x, y);
      r.linear = std::move(debug);
    } else {
      r.linear = compose(r.periphery.color, r.F, r.mask.c, origin);
    }
    r.timings.combine_ms = ms_since(t0);
  }

  t0 = Clock::now();
  r.display = options_.mode == RenderMode::MaskDebug ? tonemap(r.linear, 0.0, 1.0)
                                                     : tonemap(r.linear, camera.exposure, camera.gamma);
  r.timings.tonemap_ms = ms_since(t0);
  return r;
}

} // namespace fvs
