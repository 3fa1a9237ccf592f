// Copyright Contributors to the fvsplat project
// SPDX-License-Identifier: Apache-2.0
#include "fvs/harness/runner.hpp"

#include "fvs/error.hpp"
#include "fvs/scene/ply.hpp"

#include <fmt/format.h>
#include <fmt/ostream.h>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <ostream>

namespace fvs {
namespace {

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  const double hi = v[mid];
  if (v.size() % 2 == 1) return hi;
  return 0.5 * (hi + *std::max_element(v.begin(), v.begin() + mid));
}

std::vector<double> ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[order[k]] = avg;
    i = j + 1;
  }
  return r;
}

struct Timed {
  StageTimings median;
  std::uint64_t hash = 0;
  bool stable = true;
  int crop = 0;
};

Timed time_frames(const Pipeline& pipeline, const CameraView& camera, int warmup, int repeats) {
  const Eigen::Vector2f centre(0.5f * camera.width, 0.5f * camera.height);
  Timed out;
  for (int i = 0; i < warmup; ++i) pipeline.render(camera, centre);
  std::vector<double> p, f, r, c, t;
  for (int i = 0; i < std::max(repeats, 1); ++i) {
    const FrameResult frame = pipeline.render(camera, centre);
    const std::uint64_t h = image_hash(frame.display);
    if (i == 0) {
      out.hash = h;
      out.crop = frame.sub.crop_size;
    } else if (h != out.hash) {
      out.stable = false;
    }
    p.push_back(frame.timings.periphery_ms);
    f.push_back(frame.timings.fovea_points_ms);
    r.push_back(frame.timings.resolver_ms);
    c.push_back(frame.timings.combine_ms);
    t.push_back(frame.timings.tonemap_ms);
  }
  out.median = {median(p), median(f), median(r), median(c), median(t)};
  return out;
}

} // namespace

void write_scene_dir(const std::filesystem::path& dir, const SyntheticScene& scene) {
  std::filesystem::create_directories(dir / "gt");
  write_gaussians(dir / "gaussians.ply", scene.gaussians);
  write_points(dir / "points.ply", scene.points);
  std::vector<CameraView> cams;
  for (std::size_t i = 0; i < scene.views.size(); ++i) {
    cams.push_back(scene.views[i].camera);
    const std::string stem = fmt::format("view_{:04d}", i);
    write_pfm(dir / "gt" / (stem + ".pfm"), scene.views[i].reference);
    write_png(dir / "gt" / (stem + ".png"), scene.views[i].reference);
  }
  write_cameras(dir / "cameras.json", cams);
}

SceneBundle load_scene_dir(const std::filesystem::path& dir) {
  SceneBundle b;
  b.gaussians = load_gaussians(dir / "gaussians.ply");
  if (std::filesystem::exists(dir / "points.ply")) b.points = load_points(dir / "points.ply");
  b.cameras = load_cameras(dir / "cameras.json");
  for (std::size_t i = 0; i < b.cameras.size(); ++i) {
    const auto path = dir / "gt" / fmt::format("view_{:04d}.pfm", i);
    if (!std::filesystem::exists(path)) {
      b.ground_truth.clear();
      break;
    }
    b.ground_truth.push_back(read_pfm(path));
  }
  return b;
}

SequenceResult render_sequence(const Pipeline& pipeline, std::span<const CameraView> cameras, const GazeTrace& trace,
                               const SequenceOptions& options, std::span<const Image> ground_truth) {
  if (!ground_truth.empty() && ground_truth.size() != cameras.size())
    throw ShapeError("ground truth count differs from the camera count");
  if (!options.out_dir.empty()) std::filesystem::create_directories(options.out_dir);

  SequenceResult result;
  std::optional<Eigen::Vector2f> previous;
  for (std::size_t i = 0; i < cameras.size(); ++i) {
    const CameraView& cam = cameras[i];
    const double latch_t = static_cast<double>(i) * 1000.0 / options.frame_rate_hz + options.latch_offset_ms;
    const GazeLatch latch = [&]() -> Eigen::Vector2f {
      if (auto g = trace.latest(latch_t, options.eye)) return *g;
      if (previous) return *previous;
      return {0.5f * cam.width, 0.5f * cam.height};
    };
    const FrameResult frame = pipeline.render(cam, latch);
    previous = frame.gaze;
    result.gazes.push_back(frame.gaze);
    result.hashes.push_back(image_hash(frame.display));
    result.timings.push_back(frame.timings);

    const std::string id = fmt::format("frame_{:04d}", i);
    if (!options.out_dir.empty()) {
      const auto png = options.out_dir / (id + ".png");
      write_png(png, frame.display);
      result.images.push_back(png);
      if (options.write_pfm) write_pfm(options.out_dir / (id + ".pfm"), frame.linear);
    }
    if (!ground_truth.empty()) {
      FovealRegion region;
      region.origin = frame.sub.crop_origin;
      region.gaze = frame.gaze.cast<double>();
      region.d_f = 0.5 * frame.sub.crop_size;
      result.metrics.push_back(evaluate_view(id, frame.linear, ground_truth[i], frame.F, frame.periphery.color, region));
    }
  }
  if (!ground_truth.empty() && !options.out_dir.empty()) {
    std::ofstream csv(options.out_dir / "metrics.csv");
    write_metrics_csv(csv, result.metrics);
  }
  return result;
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ShapeError("spearman inputs differ in length");
  if (x.size() < 2) return 0.0;
  const auto rx = ranks(x), ry = ranks(y);
  const double n = static_cast<double>(x.size());
  const double mean = (n + 1.0) / 2.0;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mean) * (ry[i] - mean);
    sxx += (rx[i] - mean) * (rx[i] - mean);
    syy += (ry[i] - mean) * (ry[i] - mean);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

BenchReport bench_sweep(const SweepSpec& spec) {
  BenchReport report;
  const std::string mode = to_string(spec.options.mode);
  std::vector<double> counts, periphery;
  for (std::size_t n : spec.gaussian_counts) {
    SceneSpec s = spec.base;
    s.n_gaussians = n;
    s.n_views = 1;
    const SyntheticScene scene = generate_synthetic(s);
    const Pipeline pipeline(scene.gaussians, scene.points, std::nullopt, spec.options);
    const Timed t = time_frames(pipeline, scene.views.front().camera, spec.warmup, spec.repeats);
    report.rows.push_back({"gaussians", mode, scene.gaussians.size(), scene.points.size(), t.crop, t.median,
                           t.median.total_ms(), t.hash, t.stable});
    counts.push_back(static_cast<double>(n));
    periphery.push_back(t.median.periphery_ms);
  }
  report.spearman_gaussians = spearman(counts, periphery);

  if (!spec.crop_sizes.empty()) {
    SceneSpec s = spec.base;
    s.n_views = 1;
    const SyntheticScene scene = generate_synthetic(s);
    std::vector<double> crops, fovea;
    for (int crop : spec.crop_sizes) {
      PipelineOptions o = spec.options;
      o.fovea_px = 0.5f * static_cast<float>(crop);
      const Pipeline pipeline(scene.gaussians, scene.points, std::nullopt, o);
      const Timed t = time_frames(pipeline, scene.views.front().camera, spec.warmup, spec.repeats);
      report.rows.push_back({"crop", mode, scene.gaussians.size(), scene.points.size(), t.crop, t.median,
                             t.median.total_ms(), t.hash, t.stable});
      crops.push_back(static_cast<double>(t.crop));
      fovea.push_back(t.median.fovea_points_ms + t.median.resolver_ms);
    }
    report.spearman_crop = spearman(crops, fovea);
  }
  return report;
}

void write_bench_csv(std::ostream& out, const BenchReport& report) {
  out << "sweep,mode,gaussians,points,crop,periphery_ms,fovea_points_ms,resolver_ms,combine_ms,tonemap_ms,total_ms,"
         "image_hash,hashes_stable\n";
  for (const BenchRow& r : report.rows)
    fmt::print(out, "{},{},{},{},{},{:.4f},{:.4f},{:.4f},{:.4f},{:.4f},{:.4f},{:016x},{}\n", r.sweep, r.mode, r.gaussians,
               r.points, r.crop, r.median.periphery_ms, r.median.fovea_points_ms, r.median.resolver_ms,
               r.median.combine_ms, r.median.tonemap_ms, r.total_ms, r.image_hash, r.hashes_stable ? 1 : 0);
}

std::vector<CompareRow> compare_modes(const GaussianSet& gaussians, const NeuralPointCloud& points,
                                      std::optional<ResolverWeights> weights, std::span<const CameraView> cameras,
                                      std::span<const Image> ground_truth, const PipelineOptions& base) {
  if (ground_truth.size() != cameras.size()) throw ShapeError("ground truth count differs from the camera count");
  struct Mode {
    const char* name;
    RenderMode render;
    ResolverKind resolver;
  };
  const Mode modes[] = {{"full-gs", RenderMode::FullGS, ResolverKind::Weights},
                        {"foveated", RenderMode::Foveated, ResolverKind::Weights},
                        {"bypass-foveated", RenderMode::Foveated, ResolverKind::Bypass}};
  std::vector<CompareRow> rows;
  for (const Mode& m : modes) {
    PipelineOptions o = base;
    o.mode = m.render;
    o.resolver = m.resolver;
    const Pipeline pipeline(gaussians, points, weights, o);
    for (std::size_t i = 0; i < cameras.size(); ++i) {
      const CameraView& cam = cameras[i];
      const Image& gt = ground_truth[i];
      if (gt.width != cam.width || gt.height != cam.height || gt.channels != 3)
        throw ShapeError(fmt::format("ground truth {} does not match its camera resolution", i));
      const FrameResult frame = pipeline.render(cam, Eigen::Vector2f(0.5f * cam.width, 0.5f * cam.height));
      const Eigen::Vector2i o2 = frame.sub.crop_origin;
      const int side = frame.sub.crop_size;
      FovealRegion region;
      region.origin = o2;
      region.gaze = frame.gaze.cast<double>();
      region.d_f = 0.5 * side;
      const Image out_crop = frame.linear.crop(o2.x(), o2.y(), side, side);
      const Image gt_crop = gt.crop(o2.x(), o2.y(), side, side);
      MetricRow row = evaluate_view(fmt::format("view_{:04d}", i), out_crop, gt_crop, frame.F, frame.periphery.color, region);
      rows.push_back({m.name, row});
    }
  }
  return rows;
}

void write_compare_csv(std::ostream& out, const std::vector<CompareRow>& rows) {
  out << "mode,view_id,l1,psnr,ssim,dssim,R\n";
  for (const CompareRow& r : rows)
    fmt::print(out, "{},{},{:.9g},{:.9g},{:.9g},{:.9g},{:.9g}\n", r.mode, r.metrics.view_id, r.metrics.l1, r.metrics.psnr,
               r.metrics.ssim, r.metrics.dssim, r.metrics.R);
}

} // namespace fvs
