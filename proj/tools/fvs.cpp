// Copyright Contributors to the fvsplat project
// SPDX-License-Identifier: Apache-2.0
#include "fvs/harness/runner.hpp"
#include "fvs/scene/ply.hpp"
#include "fvs/scene/prune.hpp"
#include "fvs/service/service.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <fstream>
#include <iostream>

using namespace fvs;

namespace {

struct RenderFlags {
  std::string sort_mode = "hierarchical";
  std::string resolver = "weights";
  std::string mode = "foveated";
  std::string weights;
  float fovea_px = 256.0f;
  double m = kBlendStart;
  double gamma_edge = kEdgeGamma;
  bool no_depth_cull = false;
  bool no_edge_term = false;
  bool no_popping_fix = false;
  int threads = 0;

  void add_to(CLI::App& app) {
    app.add_option("--sort-mode", sort_mode, "global | per_pixel_exact | hierarchical")->capture_default_str();
    app.add_option("--resolver", resolver, "weights | bypass")->capture_default_str();
    app.add_option("--mode", mode, "foveated | full-gs | mask-debug")->capture_default_str();
    app.add_option("--weights", weights, "resolver weights file (identity weights when omitted)");
    app.add_option("--fovea-px", fovea_px, "fovea radius in pixels")->capture_default_str();
    app.add_option("--m", m, "normalized radius where blending starts")->capture_default_str();
    app.add_option("--gamma-edge", gamma_edge, "edge term weight")->capture_default_str();
    app.add_flag("--no-depth-cull", no_depth_cull, "disable occlusion culling of foveal points");
    app.add_flag("--no-edge-term", no_edge_term, "drop the Sobel term from the blend mask");
    app.add_flag("--no-popping-fix", no_popping_fix, "use the global sort for the periphery");
    app.add_option("--threads", threads, "worker thread cap (0 = default)");
  }

  PipelineOptions options() const {
    PipelineOptions o;
    o.sort_mode = parse_sort_mode(sort_mode);
    o.resolver = parse_resolver_kind(resolver);
    o.mode = parse_render_mode(mode);
    o.fovea_px = fovea_px;
    o.m = m;
    o.gamma_edge = gamma_edge;
    o.depth_cull = !no_depth_cull;
    o.edge_term = !no_edge_term;
    o.popping_fix = !no_popping_fix;
    o.max_threads = threads;
    return o;
  }

  std::optional<ResolverWeights> load() const {
    if (weights.empty()) return std::nullopt;
    return load_weights(weights);
  }
};

std::vector<std::size_t> parse_counts(const std::string& csv) {
  std::vector<std::size_t> out;
  std::stringstream ss(csv);
  for (std::string cell; std::getline(ss, cell, ',');)
    if (!cell.empty()) out.push_back(static_cast<std::size_t>(std::stoull(cell)));
  return out;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Foveated hybrid Gaussian / neural-point renderer"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic scene directory");
  std::string synth_spec, synth_kind = "checkerboard_room", synth_out;
  std::uint64_t seed = 0;
  bool seed_set = false;
  SceneSpec spec;
  synth->add_option("--spec", synth_spec, "YAML scene spec");
  synth->add_option("--kind", synth_kind, "textured_quads | colored_spheres | checkerboard_room");
  synth->add_option("--gaussians", spec.n_gaussians);
  synth->add_option("--points", spec.n_points);
  synth->add_option("--views", spec.n_views);
  synth->add_option("--width", spec.width);
  synth->add_option("--height", spec.height);
  synth->add_option("--point-size-scale", spec.point_size_scale, "point size as a multiple of the sampling spacing");
  synth->add_option("--seed", seed)->each([&](const std::string&) { seed_set = true; });
  synth->add_option("--out", synth_out, "output directory")->required();

  // prune
  auto* prune = app.add_subcommand("prune", "drop primitives below an opacity threshold");
  std::string prune_in, prune_out;
  float prune_threshold = 0.005f;
  bool prune_points = false;
  prune->add_option("--in", prune_in)->required();
  prune->add_option("--threshold", prune_threshold)->capture_default_str();
  prune->add_flag("--points", prune_points, "input is a neural point cloud");
  prune->add_option("--out", prune_out)->required();

  // render
  auto* render = app.add_subcommand("render", "render a camera trajectory with a gaze trace");
  RenderFlags render_flags;
  render_flags.add_to(*render);
  std::string render_scene, render_gaze, render_out;
  bool render_pfm = false;
  render->add_option("--scene", render_scene, "scene directory")->required();
  render->add_option("--gaze", render_gaze, "gaze trace CSV (t_ms,eye,u,v,valid)");
  render->add_flag("--pfm", render_pfm, "also write float dumps of the linear composite");
  render->add_option("--seed", seed, "unused by rendering; accepted for uniform invocations");
  render->add_option("--out", render_out, "output directory")->required();

  // bench
  auto* bench = app.add_subcommand("bench", "timing sweeps over Gaussian counts and crop sizes");
  RenderFlags bench_flags;
  bench_flags.add_to(*bench);
  std::string bench_spec, bench_counts = "50000,100000,200000,400000", bench_crops = "128,256,512", bench_out;
  int warmup = 2, repeats = 5;
  bench->add_option("--spec", bench_spec, "YAML base scene spec");
  bench->add_option("--counts", bench_counts)->capture_default_str();
  bench->add_option("--crops", bench_crops)->capture_default_str();
  bench->add_option("--warmup", warmup)->capture_default_str();
  bench->add_option("--repeats", repeats)->capture_default_str();
  bench->add_option("--seed", seed);
  bench->add_option("--out", bench_out, "CSV path (stdout when omitted)");

  // compare
  auto* compare = app.add_subcommand("compare", "foveal-window metrics for full-GS, foveated and bypass modes");
  RenderFlags compare_flags;
  compare_flags.add_to(*compare);
  std::string compare_scene, compare_out;
  compare->add_option("--scene", compare_scene)->required();
  compare->add_option("--out", compare_out, "CSV path (stdout when omitted)");

  // serve
  auto* serve = app.add_subcommand("serve", "WebSocket frame service for the viewer");
  RenderFlags serve_flags;
  serve_flags.add_to(*serve);
  std::string serve_scene, serve_address = "127.0.0.1";
  unsigned short serve_port = 8765;
  double serve_hz = 0.0;
  serve->add_option("--scene", serve_scene)->required();
  serve->add_option("--address", serve_address)->capture_default_str();
  serve->add_option("--port", serve_port)->capture_default_str();
  serve->add_option("--tick-hz", serve_hz, "stream frames at this rate (0 = on request)")->capture_default_str();

  // make-weights
  auto* make_weights = app.add_subcommand("make-weights", "write identity or random resolver weights");
  std::string weights_kind = "identity", weights_out;
  int feature_dim = 4;
  bool full_width = false;
  make_weights->add_option("--kind", weights_kind, "identity | random")->capture_default_str();
  make_weights->add_option("--feature-dim", feature_dim)->capture_default_str();
  make_weights->add_flag("--full-width", full_width, "level 0 keeps the level-1 filter count");
  make_weights->add_option("--seed", seed);
  make_weights->add_option("--out", weights_out)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      if (!synth_spec.empty()) {
        const SceneSpec file = load_scene_spec(synth_spec);
        spec = file;
      } else {
        spec.kind = parse_scene_kind(synth_kind);
      }
      if (seed_set) spec.seed = seed;
      const SyntheticScene scene = generate_synthetic(spec);
      write_scene_dir(synth_out, scene);
      fmt::print("{}: {} gaussians, {} points, {} views\n", synth_out, scene.gaussians.size(), scene.points.size(),
                 scene.views.size());
    } else if (prune->parsed()) {
      if (prune_points) {
        const auto before = load_points(prune_in);
        const auto after = prune_by_opacity(before, prune_threshold);
        write_points(prune_out, after);
        fmt::print("kept {} of {} points\n", after.size(), before.size());
      } else {
        const auto before = load_gaussians(prune_in);
        const auto after = prune_by_opacity(before, prune_threshold);
        write_gaussians(prune_out, after);
        fmt::print("kept {} of {} gaussians\n", after.size(), before.size());
      }
    } else if (render->parsed()) {
      const SceneBundle scene = load_scene_dir(render_scene);
      const GazeTrace trace = render_gaze.empty() ? GazeTrace{} : load_gaze_trace(render_gaze);
      if (!scene.cameras.empty()) trace.validate(scene.cameras.front().width, scene.cameras.front().height);
      const Pipeline pipeline(scene.gaussians, scene.points, render_flags.load(), render_flags.options());
      SequenceOptions so;
      so.pipeline = render_flags.options();
      so.out_dir = render_out;
      so.write_pfm = render_pfm;
      const SequenceResult r = render_sequence(pipeline, scene.cameras, trace, so, scene.ground_truth);
      for (std::size_t i = 0; i < r.images.size(); ++i)
        fmt::print("{} gaze=({:.1f},{:.1f}) hash={:016x} total={:.1f} ms\n", r.images[i].string(), r.gazes[i].x(),
                   r.gazes[i].y(), r.hashes[i], r.timings[i].total_ms());
    } else if (bench->parsed()) {
      SweepSpec sweep;
      if (!bench_spec.empty()) sweep.base = load_scene_spec(bench_spec);
      if (bench->count("--seed")) sweep.base.seed = seed;
      sweep.gaussian_counts = parse_counts(bench_counts);
      for (std::size_t c : parse_counts(bench_crops)) sweep.crop_sizes.push_back(static_cast<int>(c));
      sweep.warmup = warmup;
      sweep.repeats = repeats;
      sweep.options = bench_flags.options();
      const BenchReport report = bench_sweep(sweep);
      if (bench_out.empty()) {
        write_bench_csv(std::cout, report);
      } else {
        std::ofstream out(bench_out);
        write_bench_csv(out, report);
      }
      fmt::print(stderr, "spearman(gaussians, periphery) = {:.3f}; spearman(crop, fovea+resolver) = {:.3f}\n",
                 report.spearman_gaussians, report.spearman_crop);
    } else if (compare->parsed()) {
      const SceneBundle scene = load_scene_dir(compare_scene);
      if (scene.ground_truth.empty()) throw std::runtime_error("compare needs gt/ reference images in the scene directory");
      const auto rows = compare_modes(scene.gaussians, scene.points, compare_flags.load(), scene.cameras,
                                      scene.ground_truth, compare_flags.options());
      if (compare_out.empty()) {
        write_compare_csv(std::cout, rows);
      } else {
        std::ofstream out(compare_out);
        write_compare_csv(out, rows);
      }
    } else if (serve->parsed()) {
      const SceneBundle scene = load_scene_dir(serve_scene);
      if (scene.cameras.empty()) throw std::runtime_error("scene has no cameras");
      SessionState state(scene.cameras.front(), serve_flags.fovea_px);
      state.set_mode(parse_render_mode(serve_flags.mode));
      FrameRenderer renderer(scene.gaussians, scene.points, serve_flags.load(), serve_flags.options(), state);
      FrameServer server(renderer, {serve_address, serve_port, serve_hz});
      fmt::print("listening on ws://{}:{}\n", serve_address, server.port());
      std::fflush(stdout);
      server.run();
    } else if (make_weights->parsed()) {
      const ResolverArch arch = ResolverArch::standard(feature_dim, full_width);
      ResolverWeights w;
      if (weights_kind == "identity")
        w = identity_weights(arch);
      else if (weights_kind == "random")
        w = random_weights(arch, seed);
      else
        throw std::runtime_error("unknown weights kind '" + weights_kind + "'");
      write_weights(weights_out, w);
      fmt::print("wrote {} ({} weights)\n", weights_out, weights_kind);
    }
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 1;
  }
  return 0;
}
