// Copyright Contributors to the fvsplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fvs/composite/composite.hpp"
#include "fvs/fovea/fovea.hpp"
#include "fvs/periphery/rasterizer.hpp"
#include "fvs/resolver/resolver.hpp"

#include <Eigen/Core>

#include <functional>
#include <optional>
#include <string>

namespace fvs {

enum class ResolverKind { Weights, Bypass };
enum class RenderMode { Foveated, FullGS, MaskDebug };

ResolverKind parse_resolver_kind(const std::string& name); // "weights" | "bypass"
std::string to_string(ResolverKind kind);
RenderMode parse_render_mode(const std::string& name); // "foveated" | "full-gs" | "mask-debug"
std::string to_string(RenderMode mode);

struct PipelineOptions {
  SortMode sort_mode = SortMode::Hierarchical;
  int max_threads = 0;
  ResolverKind resolver = ResolverKind::Weights;
  RenderMode mode = RenderMode::Foveated;
  float fovea_px = 256.0f; // fovea radius d_f
  double m = kBlendStart;
  double gamma_edge = kEdgeGamma;
  bool depth_cull = true;
  bool edge_term = true;
  bool popping_fix = true; // false forces the global sort
};

struct StageTimings {
  double periphery_ms = 0.0;
  double fovea_points_ms = 0.0;
  double resolver_ms = 0.0;
  double combine_ms = 0.0;
  double tonemap_ms = 0.0;

  double total_ms() const noexcept { return periphery_ms + fovea_points_ms + resolver_ms + combine_ms + tonemap_ms; }
};

struct FrameResult {
  Image display; // tone-mapped RGB in [0, 1]
  Image linear;  // composited RGB before tone mapping
  PeripheryFrame periphery;
  Subfrustum sub;
  Image F;
  BlendMask mask;
  CullResult cull;
  std::size_t pyramid_fragments = 0;
  Eigen::Vector2f gaze = Eigen::Vector2f::Zero();
  StageTimings timings;
};

/// Called between the peripheral and foveal passes; returns the gaze to use.
using GazeLatch = std::function<Eigen::Vector2f()>;

/// One frame: periphery, late-latched gaze, subfrustum, point culling and
/// splatting, resolver, blend mask, composite, tone map. The scene objects
/// are borrowed and must outlive the pipeline. Without explicit weights the
/// Weights resolver runs identity weights.
class Pipeline {
public:
  Pipeline(const GaussianSet& gaussians, const NeuralPointCloud& points, std::optional<ResolverWeights> weights,
           PipelineOptions options = {});

  FrameResult render(const CameraView& camera, const GazeLatch& latch) const;
  FrameResult render(const CameraView& camera, const Eigen::Vector2f& gaze) const;

  const PipelineOptions& options() const noexcept { return options_; }
  PipelineOptions& options() noexcept { return options_; }
  const ResolverWeights& weights() const noexcept { return weights_; }

private:
  const GaussianSet* gaussians_;
  const NeuralPointCloud* points_;
  ResolverWeights weights_;
  PipelineOptions options_;
};

} // namespace fvs
