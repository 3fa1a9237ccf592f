// Copyright Contributors to the fvsplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fvs/eval/metrics.hpp"
#include "fvs/harness/io.hpp"
#include "fvs/harness/pipeline.hpp"
#include "fvs/scene/synthetic.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fvs {

/// On-disk scene: gaussians.ply, points.ply, cameras.json and, when present,
/// gt/view_NNNN.pfm reference images (one per camera).
struct SceneBundle {
  GaussianSet gaussians;
  NeuralPointCloud points;
  std::vector<CameraView> cameras;
  std::vector<Image> ground_truth;
};

void write_scene_dir(const std::filesystem::path& dir, const SyntheticScene& scene);
/// Missing point cloud loads as an empty cloud; missing gt/ as no references.
SceneBundle load_scene_dir(const std::filesystem::path& dir);

struct SequenceOptions {
  PipelineOptions pipeline;
  std::filesystem::path out_dir;
  bool write_pfm = false;
  int eye = 0;
  double frame_rate_hz = 90.0;
  /// Gaze for frame i is sampled at i * 1000 / frame_rate_hz + latch_offset_ms.
  double latch_offset_ms = 5.0;
};

struct SequenceResult {
  std::vector<std::filesystem::path> images;
  std::vector<MetricRow> metrics; // empty without ground truth
  std::vector<Eigen::Vector2f> gazes;
  std::vector<std::uint64_t> hashes; // image_hash of each display image
  std::vector<StageTimings> timings;
};

/// Renders every camera, writing frame_NNNN.png (and .pfm of the linear
/// composite when requested) plus metrics.csv when `ground_truth` is given.
/// Invalid or missing gaze samples fall back to the previous frame's gaze,
/// then to the image centre.
SequenceResult render_sequence(const Pipeline& pipeline, std::span<const CameraView> cameras, const GazeTrace& trace,
                               const SequenceOptions& options, std::span<const Image> ground_truth = {});

/// Spearman rank correlation (average ranks for ties); 0 for constant input.
double spearman(std::span<const double> x, std::span<const double> y);

struct SweepSpec {
  SceneSpec base;
  std::vector<std::size_t> gaussian_counts;
  std::vector<int> crop_sizes;
  int warmup = 2;
  int repeats = 5;
  PipelineOptions options;
};

struct BenchRow {
  std::string sweep; // "gaussians" or "crop"
  std::string mode;
  std::size_t gaussians = 0;
  std::size_t points = 0;
  int crop = 0;
  StageTimings median;     // per-stage medians over the repeats
  double total_ms = 0.0;   // sum of the stage medians
  std::uint64_t image_hash = 0;
  bool hashes_stable = true;
};

struct BenchReport {
  std::vector<BenchRow> rows;
  double spearman_gaussians = 0.0; // Gaussian count vs periphery time
  double spearman_crop = 0.0;      // crop size vs fovea + resolver time
};

/// Synthetic scenes from `base` at each Gaussian count (periphery sweep) and
/// the base scene at each crop size (fovea sweep), gaze at the image centre.
BenchReport bench_sweep(const SweepSpec& spec);

/// Columns: sweep,mode,gaussians,points,crop,periphery_ms,fovea_points_ms,
/// resolver_ms,combine_ms,tonemap_ms,total_ms,image_hash,hashes_stable.
void write_bench_csv(std::ostream& out, const BenchReport& report);

struct CompareRow {
  std::string mode; // full-gs, foveated, bypass-foveated
  MetricRow metrics;
};

/// For each camera (gaze at the centre) and mode, metrics of the foveal
/// window of the composite against the same window of the ground truth.
std::vector<CompareRow> compare_modes(const GaussianSet& gaussians, const NeuralPointCloud& points,
                                      std::optional<ResolverWeights> weights, std::span<const CameraView> cameras,
                                      std::span<const Image> ground_truth, const PipelineOptions& base = {});

/// Header "mode,view_id,l1,psnr,ssim,dssim,R".
void write_compare_csv(std::ostream& out, const std::vector<CompareRow>& rows);

} // namespace fvs
