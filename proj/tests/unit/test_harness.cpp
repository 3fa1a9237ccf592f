// Copyright Contributors to the fvsplat project
// SPDX-License-Identifier: Apache-2.0
#include "fvs/error.hpp"
#include "fvs/harness/runner.hpp"

#include "pipeline_checks.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

using namespace fvs;
using namespace fvs::testing;

namespace {

SceneSpec small_spec(std::size_t views = 3) {
  SceneSpec s;
  s.kind = SceneKind::CheckerboardRoom;
  s.seed = 5;
  s.n_gaussians = 6000;
  s.n_points = 20000;
  s.n_views = views;
  s.width = 96;
  s.height = 80;
  return s;
}

const SyntheticScene& small_scene() {
  static const SyntheticScene scene = generate_synthetic(small_spec());
  return scene;
}

std::vector<CameraView> cameras_of(const SyntheticScene& s) {
  std::vector<CameraView> c;
  for (const auto& v : s.views) c.push_back(v.camera);
  return c;
}

std::vector<Image> references_of(const SyntheticScene& s) {
  std::vector<Image> r;
  for (const auto& v : s.views) r.push_back(v.reference);
  return r;
}

PipelineOptions small_options() {
  PipelineOptions o;
  o.fovea_px = 24.0f;
  return o;
}

} // namespace

TEST_CASE("png and pfm round trips") {
  TempDir dir("harness_io");
  Rng rng(1);
  Image rgb(7, 5, 3);
  for (float& v : rgb.data) v = static_cast<float>(rng.uniform(-0.2, 1.2));
  write_png(dir / "a.png", rgb);
  const Image back = read_png(dir / "a.png");
  REQUIRE(back.same_shape(rgb));
  for (std::size_t i = 0; i < rgb.data.size(); ++i)
    CHECK(back.data[i] == std::round(std::clamp(rgb.data[i], 0.0f, 1.0f) * 255.0f) / 255.0f);

  write_pfm(dir / "a.pfm", rgb);
  CHECK(read_pfm(dir / "a.pfm") == rgb);
  Image grey(3, 4, 1);
  for (float& v : grey.data) v = static_cast<float>(rng.normal());
  write_pfm(dir / "g.pfm", grey);
  CHECK(read_pfm(dir / "g.pfm") == grey);
  CHECK_THROWS_AS(write_pfm(dir / "x.pfm", Image(2, 2, 4)), ShapeError);
  CHECK_THROWS_AS(read_png(dir / "missing.png"), ParseError);
}

TEST_CASE("cameras json round trip") {
  TempDir dir("harness_cams");
  const auto cams = cameras_of(small_scene());
  write_cameras(dir / "cameras.json", cams);
  const auto back = load_cameras(dir / "cameras.json");
  REQUIRE(back.size() == cams.size());
  for (std::size_t i = 0; i < cams.size(); ++i) {
    CHECK(back[i].pose.rotation == cams[i].pose.rotation);
    CHECK(back[i].pose.translation == cams[i].pose.translation);
    CHECK(back[i].intrinsics.fx == cams[i].intrinsics.fx);
    CHECK(back[i].intrinsics.cy == cams[i].intrinsics.cy);
    CHECK(back[i].width == cams[i].width);
    CHECK(back[i].far == cams[i].far);
  }
  std::ofstream(dir / "bad.json") << R"([{"width": 4}])";
  CHECK_THROWS_AS(load_cameras(dir / "bad.json"), DataError);
}

TEST_CASE("gaze trace parsing and validation") {
  const GazeTrace t = parse_gaze_trace("t_ms,eye,u,v,valid\n0,0,10,20,1\n5,1,3,4,1\n11,0,0,0,0\n20,0,30,40,true\n");
  REQUIRE(t.samples.size() == 4);
  CHECK_NOTHROW(t.validate(64, 64));
  CHECK(*t.latest(0.0) == Eigen::Vector2f(10, 20));
  CHECK(*t.latest(15.0) == Eigen::Vector2f(10, 20)); // invalid row skipped
  CHECK(*t.latest(25.0) == Eigen::Vector2f(30, 40));
  CHECK(*t.latest(6.0, 1) == Eigen::Vector2f(3, 4));
  CHECK_FALSE(t.latest(-1.0).has_value());

  CHECK_THROWS_AS(parse_gaze_trace("time,eye,u,v,valid\n"), ParseError);
  CHECK_THROWS_AS(parse_gaze_trace("t_ms,eye,u,v,valid\n0,0,1,2\n"), DataError);
  CHECK_THROWS_AS(parse_gaze_trace("t_ms,eye,u,v,valid\n0,0,1,2,maybe\n"), DataError);
  CHECK_THROWS_AS(parse_gaze_trace("t_ms,eye,u,v,valid\n5,0,1,2,1\n4,0,1,2,1\n").validate(64, 64), DataError);
  CHECK_THROWS_AS(parse_gaze_trace("t_ms,eye,u,v,valid\n5,0,100,2,1\n").validate(64, 64), DataError);
  CHECK_NOTHROW(parse_gaze_trace("t_ms,eye,u,v,valid\n5,0,100,2,0\n").validate(64, 64));

  TempDir dir("harness_gaze");
  write_gaze_trace(dir / "g.csv", t);
  const GazeTrace back = load_gaze_trace(dir / "g.csv");
  REQUIRE(back.samples.size() == 4);
  CHECK(back.samples[3].u == 30.0f);
  CHECK_FALSE(back.samples[2].valid);
}

TEST_CASE("render_sequence writes images and metrics") {
  TempDir dir("harness_seq");
  const SyntheticScene& scene = small_scene();
  const Pipeline pipeline(scene.gaussians, scene.points, std::nullopt, small_options());
  const auto cams = cameras_of(scene);
  const auto refs = references_of(scene);
  SequenceOptions so;
  so.pipeline = small_options();
  so.out_dir = dir.path();
  so.write_pfm = true;
  const SequenceResult r = render_sequence(pipeline, cams, GazeTrace{}, so, refs);
  CHECK(r.images.size() == 3);
  CHECK(r.metrics.size() == 3);
  for (const auto& p : r.images) CHECK(std::filesystem::exists(p));
  CHECK(std::filesystem::exists(dir / "frame_0002.pfm"));
  for (const auto& g : r.gazes) CHECK(g == Eigen::Vector2f(48.0f, 40.0f));

  std::ifstream csv(dir / "metrics.csv");
  std::string line;
  int lines = 0;
  while (std::getline(csv, line)) ++lines;
  CHECK(lines == 4);

  SequenceOptions again = so;
  again.out_dir.clear();
  CHECK(render_sequence(pipeline, cams, GazeTrace{}, again).hashes == r.hashes);
}

TEST_CASE("gaze latch follows the trace and holds the last valid sample") {
  const SyntheticScene& scene = small_scene();
  const Pipeline pipeline(scene.gaussians, scene.points, std::nullopt, small_options());
  const auto cams = cameras_of(scene);
  // Frame i latches at i * 11.11 + 5 ms.
  const GazeTrace trace =
      parse_gaze_trace("t_ms,eye,u,v,valid\n0,0,30,20,1\n4,0,31,21,1\n6,0,50,60,1\n14,0,1,1,0\n20,0,70,10,0\n");
  SequenceOptions so;
  const SequenceResult r = render_sequence(pipeline, cams, trace, so);
  CHECK(r.gazes[0] == Eigen::Vector2f(31, 21)); // sample at 6 ms is after the 5 ms latch
  CHECK(r.gazes[1] == Eigen::Vector2f(50, 60));
  CHECK(r.gazes[2] == Eigen::Vector2f(50, 60)); // invalid rows fall back
}

TEST_CASE("identity resolver leaves the peripheral render untouched") {
  const SyntheticScene& scene = small_scene();
  const NeuralPointCloud no_points(4);
  for (const NeuralPointCloud* points : {&no_points, &scene.points}) {
    const Pipeline pipeline(scene.gaussians, *points, identity_weights(), small_options());
    const FrameResult f = pipeline.render(scene.views[0].camera, Eigen::Vector2f(40.0f, 35.0f));
    CHECK(f.linear == f.periphery.color);
    CHECK(f.F == f.periphery.color.crop(f.sub.crop_origin.x(), f.sub.crop_origin.y(), f.sub.crop_size, f.sub.crop_size));
  }
}

TEST_CASE("render modes") {
  const SyntheticScene& scene = small_scene();
  PipelineOptions o = small_options();
  o.mode = RenderMode::FullGS;
  const Pipeline full(scene.gaussians, scene.points, std::nullopt, o);
  const FrameResult a = full.render(scene.views[0].camera, Eigen::Vector2f(40.0f, 35.0f));
  CHECK(a.linear == a.periphery.color);
  for (float c : a.mask.c.data) CHECK(c == 0.0f);
  CHECK(a.timings.fovea_points_ms == 0.0);

  o.mode = RenderMode::MaskDebug;
  const Pipeline debug(scene.gaussians, scene.points, std::nullopt, o);
  const FrameResult b = debug.render(scene.views[0].camera, Eigen::Vector2f(40.0f, 35.0f));
  CHECK(b.linear.at(40, 35, 0) == 1.0f);
  CHECK(b.linear.at(0, 0, 0) == 0.0f);
  CHECK(b.linear.at(40 + 24, 35, 0) == 0.0f);

  CHECK(parse_render_mode(to_string(RenderMode::MaskDebug)) == RenderMode::MaskDebug);
  CHECK(parse_resolver_kind("bypass") == ResolverKind::Bypass);
  CHECK_THROWS_AS(parse_render_mode("nope"), ContractViolation);
}

TEST_CASE("occlusion culling is conservative on an opaque scene") {
  const SyntheticScene scene = generate_synthetic(opaque_room_spec(128, 96, 400000, 2));
  PipelineOptions o;
  o.resolver = ResolverKind::Bypass;
  o.fovea_px = 32.0f;
  const CullCheck check = cull_conservativeness(scene, o);
  MESSAGE("max mean |diff| " << check.max_diff() << ", behind-wall culled " << check.behind_culled_fraction()
                             << ", visible culled " << check.visible_culled << "/" << check.visible);
  CHECK(check.max_diff() < 2.0 / 255.0);
  CHECK(check.behind_culled_fraction() >= 0.3);
  CHECK(check.behind_wall > 1000);
}

TEST_CASE("ablation flags") {
  const SyntheticScene& scene = small_scene();
  PipelineOptions o = small_options();
  o.resolver = ResolverKind::Bypass;
  const Pipeline base(scene.gaussians, scene.points, std::nullopt, o);
  const CameraView& cam = scene.views[1].camera;
  const Eigen::Vector2f gaze(48.0f, 40.0f);
  const FrameResult ref = base.render(cam, gaze);

  o.edge_term = false;
  const FrameResult no_edge = Pipeline(scene.gaussians, scene.points, std::nullopt, o).render(cam, gaze);
  CHECK(no_edge.periphery.color == ref.periphery.color);
  for (float v : no_edge.mask.f_e.data) CHECK(v == 0.0f);

  o = small_options();
  o.resolver = ResolverKind::Bypass;
  o.popping_fix = false;
  const FrameResult global = Pipeline(scene.gaussians, scene.points, std::nullopt, o).render(cam, gaze);
  RasterOptions ro;
  ro.sort_mode = SortMode::Global;
  CHECK(global.periphery.color == render_periphery(scene.gaussians, cam, ro).color);
}

TEST_CASE("spearman") {
  const std::vector<double> x{1, 2, 3, 4}, up{10, 20, 25, 90}, down{4, 3, 2, 1}, tied{1, 1, 2, 2};
  CHECK(spearman(x, up) == doctest::Approx(1.0));
  CHECK(spearman(x, down) == doctest::Approx(-1.0));
  CHECK(spearman(x, tied) == doctest::Approx(0.894427191));
  CHECK(spearman(x, std::vector<double>{5, 5, 5, 5}) == 0.0);
  CHECK_THROWS_AS(spearman(x, std::vector<double>{1}), ShapeError);
}

TEST_CASE("bench sweep rows and hashes") {
  SweepSpec sweep;
  sweep.base = small_spec(1);
  sweep.gaussian_counts = {1000, 4000};
  sweep.crop_sizes = {32, 64};
  sweep.warmup = 0;
  sweep.repeats = 2;
  sweep.options = small_options();
  const BenchReport r = bench_sweep(sweep);
  REQUIRE(r.rows.size() == 4);
  for (const BenchRow& row : r.rows) {
    CHECK(row.hashes_stable);
    CHECK(row.total_ms == doctest::Approx(row.median.total_ms()));
  }
  CHECK(r.rows[0].gaussians == 1000);
  CHECK(r.rows[2].crop == 32);
  CHECK(r.rows[3].crop == 64);

  std::ostringstream csv;
  write_bench_csv(csv, r);
  CHECK(csv.str().rfind("sweep,mode,gaussians,points,crop,periphery_ms", 0) == 0);
}

TEST_CASE("compare modes on foveal windows") {
  const SyntheticScene& scene = small_scene();
  const auto cams = cameras_of(scene);
  PipelineOptions o = small_options();
  std::vector<Image> gt;
  for (const auto& c : cams) {
    PipelineOptions full = o;
    full.mode = RenderMode::FullGS;
    gt.push_back(Pipeline(scene.gaussians, scene.points, std::nullopt, full).render(c, Eigen::Vector2f(48, 40)).linear);
  }
  const auto rows = compare_modes(scene.gaussians, scene.points, random_weights(ResolverArch::standard(), 3), cams, gt, o);
  REQUIRE(rows.size() == 9);
  CHECK(rows[0].mode == "full-gs");
  CHECK(rows[0].metrics.psnr == kPsnrCap);
  CHECK(rows[3].mode == "foveated");
  CHECK(rows[6].mode == "bypass-foveated");
  CHECK(rows[3].metrics.l1 != rows[6].metrics.l1);

  // Window metrics equal metrics of hand-cropped images.
  PipelineOptions bypass = o;
  bypass.resolver = ResolverKind::Bypass;
  const FrameResult f = Pipeline(scene.gaussians, scene.points, std::nullopt, bypass).render(cams[0], Eigen::Vector2f(48, 40));
  const auto [x0, y0] = std::pair(f.sub.crop_origin.x(), f.sub.crop_origin.y());
  const int side = f.sub.crop_size;
  CHECK(rows[6].metrics.psnr == psnr(f.linear.crop(x0, y0, side, side), gt[0].crop(x0, y0, side, side)));
  CHECK(rows[6].metrics.ssim == ssim(f.linear.crop(x0, y0, side, side), gt[0].crop(x0, y0, side, side)));

  std::vector<Image> wrong{Image(10, 10, 3), gt[1], gt[2]};
  CHECK_THROWS_AS(compare_modes(scene.gaussians, scene.points, std::nullopt, cams, wrong, o), ShapeError);
}

TEST_CASE("scene directory round trip") {
  TempDir dir("harness_scene");
  const SyntheticScene& scene = small_scene();
  write_scene_dir(dir.path(), scene);
  const SceneBundle b = load_scene_dir(dir.path());
  CHECK(b.gaussians.size() == scene.gaussians.size());
  CHECK(b.points == scene.points);
  REQUIRE(b.ground_truth.size() == 3);
  CHECK(b.ground_truth[2] == scene.views[2].reference);
  const Pipeline a(scene.gaussians, scene.points, std::nullopt, small_options());
  const Pipeline c(b.gaussians, b.points, std::nullopt, small_options());
  CHECK(image_hash(a.render(scene.views[0].camera, Eigen::Vector2f(48, 40)).display) ==
        image_hash(c.render(b.cameras[0], Eigen::Vector2f(48, 40)).display));
}
