// Copyright Contributors to the fvsplat project
// SPDX-License-Identifier: Apache-2.0
#include "fvs/error.hpp"
#include "fvs/fovea/fovea.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

using namespace fvs;
using namespace fvs::testing;

namespace {

NeuralPointCloud random_cloud(Rng& rng, std::size_t n, const CameraView& cam, float size_lo, float size_hi) {
  NeuralPointCloud cloud(4);
  const Eigen::Matrix3f to_world = cam.pose.rotation.transpose();
  for (std::size_t i = 0; i < n; ++i) {
    const float z = static_cast<float>(rng.uniform(1.0, 8.0));
    const float u = static_cast<float>(rng.uniform(-0.1, cam.width + 0.1));
    const float v = static_cast<float>(rng.uniform(-0.1, cam.height + 0.1));
    const Eigen::Vector3f c((u - cam.intrinsics.cx) / cam.intrinsics.fx * z, (v - cam.intrinsics.cy) / cam.intrinsics.fy * z, z);
    NeuralPoint p;
    p.position = to_world * (c - cam.pose.translation);
    p.size = static_cast<float>(rng.uniform(size_lo, size_hi));
    p.opacity = static_cast<float>(rng.uniform(0.1, 1.0));
    for (int k = 0; k < 4; ++k) p.features.push_back(static_cast<float>(rng.uniform(-1.0, 1.0)));
    cloud.push_back(p);
  }
  return cloud;
}

// Naive reference: each layer separately, counting pass then filling pass,
// full sort, first K blended.
FramePyramid oracle_pyramid(const NeuralPointCloud& cloud, const std::vector<std::uint32_t>& indices, const Subfrustum& sub,
                            int levels, int k) {
  FramePyramid out = FramePyramid::zeros(sub.crop_size, cloud.feature_dim(), levels);
  const CameraView cam = sub.crop_camera();
  struct Frag {
    float depth;
    std::uint32_t point;
    float alpha;
  };
  for (int l = 0; l < levels; ++l) {
    Image& layer = out.layers[l];
    std::vector<std::vector<Frag>> per_pixel(layer.pixel_count());
    for (int pass = 0; pass < 2; ++pass) {
      std::vector<std::size_t> count(layer.pixel_count(), 0);
      for (std::uint32_t i : indices) {
        const Eigen::Vector3f c = cam.pose.apply(cloud.position(i));
        if (!(c.z() > 0.0f)) continue;
        const Eigen::Vector2f uv = cam.project_camera(c);
        const float level = pyramid_level(cloud.point_size(i) * cam.intrinsics.fx / c.z(), levels);
        const int l0 = static_cast<int>(std::floor(level));
        const float frac = level - static_cast<float>(l0);
        float w_layer = 0.0f;
        if (l == l0) w_layer = 1.0f - frac;
        else if (l == l0 + 1) w_layer = frac;
        if (!(w_layer > 0.0f)) continue;
        const float inv = 1.0f / static_cast<float>(1 << l);
        const float gx = uv.x() * inv - 0.5f, gy = uv.y() * inv - 0.5f;
        const float fx0 = std::floor(gx), fy0 = std::floor(gy);
        const float tx = gx - fx0, ty = gy - fy0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const int x = static_cast<int>(fx0) + dx, y = static_cast<int>(fy0) + dy;
            const float w = (dx ? tx : 1.0f - tx) * (dy ? ty : 1.0f - ty);
            const float a = cloud.opacity(i) * w_layer * w;
            if (!(a > 0.0f) || x < 0 || y < 0 || x >= layer.width || y >= layer.height) continue;
            const std::size_t p = static_cast<std::size_t>(y) * layer.width + x;
            if (pass == 0) ++count[p];
            else per_pixel[p].push_back({c.z(), i, a});
          }
      }
      if (pass == 0)
        for (std::size_t p = 0; p < count.size(); ++p) per_pixel[p].reserve(count[p]);
    }
    for (std::size_t p = 0; p < per_pixel.size(); ++p) {
      auto& list = per_pixel[p];
      out.fragment_counts[l] += list.size();
      std::sort(list.begin(), list.end(), [](const Frag& a, const Frag& b) {
        return a.depth < b.depth || (a.depth == b.depth && a.point < b.point);
      });
      std::vector<double> acc(cloud.feature_dim(), 0.0);
      double alpha = 0.0, t = 1.0;
      for (std::size_t j = 0; j < list.size() && j < static_cast<std::size_t>(k); ++j) {
        const double w = static_cast<double>(list[j].alpha) * t;
        for (int c = 0; c < cloud.feature_dim(); ++c) acc[c] += static_cast<double>(cloud.features(list[j].point)[c]) * w;
        alpha += w;
        t *= 1.0 - static_cast<double>(list[j].alpha);
      }
      if (list.empty()) continue;
      for (int c = 0; c < cloud.feature_dim(); ++c) layer.data[p * (cloud.feature_dim() + 1) + c] = static_cast<float>(acc[c]);
      layer.data[p * (cloud.feature_dim() + 1) + cloud.feature_dim()] = static_cast<float>(std::min(alpha, 1.0));
    }
  }
  return out;
}

bool pyramids_equal(const FramePyramid& a, const FramePyramid& b) {
  if (a.levels() != b.levels() || a.fragment_counts != b.fragment_counts) return false;
  for (int l = 0; l < a.levels(); ++l)
    if (!(a.layers[l] == b.layers[l])) return false;
  return true;
}

CameraView simple_camera(int w, int h) {
  CameraView cam;
  cam.width = w;
  cam.height = h;
  cam.intrinsics = {100.0f, 100.0f, w / 2.0f, h / 2.0f};
  cam.near = 0.1f;
  cam.far = 50.0f;
  return cam;
}

std::vector<std::uint32_t> all_indices(std::size_t n) {
  std::vector<std::uint32_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0u);
  return idx;
}

} // namespace

TEST_CASE("fovea radius from visual angle") {
  FoveaConfig cfg;
  CHECK(fovea_radius_px(cfg) == 256);
  cfg.pixels_per_degree = 10;
  cfg.fovea_degrees = 10;
  cfg.resolution_scale = 1.0f;
  CHECK(fovea_radius_px(cfg) == 64);
  cfg.pixels_per_degree = 15.7f;
  cfg.fovea_degrees = 7.5f;
  CHECK(fovea_radius_px(cfg) == 64);
  cfg.pixels_per_degree = 0.0f;
  CHECK_THROWS_AS(fovea_radius_px(cfg), ContractViolation);
}

TEST_CASE("subfrustum window placement") {
  const CameraView cam = simple_camera(1024, 768);
  const Subfrustum centred = make_subfrustum(cam, Eigen::Vector2f(cam.intrinsics.cx, cam.intrinsics.cy), 256.0f);
  CHECK(centred.crop_size == 512);
  CHECK(centred.crop_origin == Eigen::Vector2i(512 - 256, 384 - 256));
  const Subfrustum corner = make_subfrustum(cam, Eigen::Vector2f(0, 0), 256.0f);
  CHECK(corner.crop_origin == Eigen::Vector2i(0, 0));
  const Subfrustum far_corner = make_subfrustum(cam, Eigen::Vector2f(1024, 768), 256.0f);
  CHECK(far_corner.crop_origin == Eigen::Vector2i(512, 256));
  const Subfrustum huge = make_subfrustum(cam, Eigen::Vector2f(500, 300), 1000.0f);
  CHECK(huge.crop_size == 768);
  CHECK(huge.crop_origin == Eigen::Vector2i(500 - 384, 0));
  CHECK_THROWS_AS(make_subfrustum(cam, Eigen::Vector2f(-5, 3), 64.0f), ContractViolation);

  const CameraView crop = centred.crop_camera();
  CHECK(crop.width == 512);
  CHECK(crop.intrinsics.cx == cam.intrinsics.cx - 256.0f);
}

TEST_CASE("subfrustum projection equals base projection minus origin") {
  Rng rng(2);
  for (int trial = 0; trial < 5; ++trial) {
    const CameraView cam = look_camera(640, 480, static_cast<float>(rng.uniform(40, 90)),
                                       Eigen::Vector3f(static_cast<float>(rng.uniform(-2, 2)), static_cast<float>(rng.uniform(-2, 2)), -5),
                                       Eigen::Vector3f::Zero());
    const Eigen::Vector2f gaze(static_cast<float>(rng.uniform(0, 640)), static_cast<float>(rng.uniform(0, 480)));
    const Subfrustum sub = make_subfrustum(cam, gaze, 128.0f);
    for (int i = 0; i < 2000; ++i) {
      const Eigen::Vector3f w(static_cast<float>(rng.uniform(-3, 3)), static_cast<float>(rng.uniform(-3, 3)),
                              static_cast<float>(rng.uniform(-3, 3)));
      const Eigen::Vector3f c = cam.pose.apply(w);
      if (c.z() <= cam.near) continue;
      const Eigen::Vector2d base(cam.intrinsics.fx * double(c.x()) / c.z() + cam.intrinsics.cx,
                                 cam.intrinsics.fy * double(c.y()) / c.z() + cam.intrinsics.cy);
      const Eigen::Vector2d via = sub.project(w);
      CHECK((via - (base - sub.crop_origin.cast<double>())).cwiseAbs().maxCoeff() <= 1e-4);
    }
  }
}

TEST_CASE("occlusion culling against a wall") {
  CameraView cam = simple_camera(64, 64);
  const Subfrustum sub = make_subfrustum(cam, Eigen::Vector2f(32, 32), 32.0f);
  Image depth(64, 64, 1, 1.0f), alpha(64, 64, 1, 1.0f);
  NeuralPointCloud cloud(4);
  cloud.push_back({Eigen::Vector3f(0, 0, 2.0f), 0.01f, {0, 0, 0, 0}, 1.0f}); // behind
  cloud.push_back({Eigen::Vector3f(0, 0, 0.5f), 0.01f, {0, 0, 0, 0}, 1.0f}); // in front
  cloud.push_back({Eigen::Vector3f(0, 0, 1.04f), 0.01f, {0, 0, 0, 0}, 1.0f}); // within epsilon
  cloud.push_back({Eigen::Vector3f(0, 0, 60.0f), 0.01f, {0, 0, 0, 0}, 1.0f}); // beyond far
  cloud.push_back({Eigen::Vector3f(100, 0, 1.0f), 0.01f, {0, 0, 0, 0}, 1.0f}); // off screen
  const CullResult r = cull_points(cloud, sub, depth, alpha);
  CHECK(r.indices == std::vector<std::uint32_t>{1, 2});
  CHECK(r.in_frustum == 3);
  CHECK(r.occluded == 1);

  CullOptions off;
  off.occlusion = false;
  CHECK(cull_points(cloud, sub, depth, alpha, off).indices == std::vector<std::uint32_t>{0, 1, 2});

  Image thin(64, 64, 1, 0.89f);
  CHECK(cull_points(cloud, sub, depth, thin).indices == std::vector<std::uint32_t>{0, 1, 2});
  CHECK_THROWS_AS(cull_points(cloud, sub, Image(32, 32, 1), alpha), ShapeError);
}

TEST_CASE("translucent periphery reduces to frustum culling") {
  Rng rng(6);
  const CameraView cam = look_camera(128, 96, 60.0f, Eigen::Vector3f(0, 0, -4), Eigen::Vector3f::Zero());
  const NeuralPointCloud cloud = random_cloud(rng, 5000, cam, 0.005f, 0.05f);
  const Subfrustum sub = make_subfrustum(cam, Eigen::Vector2f(40, 60), 24.0f);
  Image depth(128, 96, 1), alpha(128, 96, 1);
  for (float& d : depth.data) d = static_cast<float>(rng.uniform(0.1, 2.0));
  for (float& a : alpha.data) a = static_cast<float>(rng.uniform(0.0, 0.899));
  const CullResult r = cull_points(cloud, sub, depth, alpha);
  // Frustum-only reference.
  std::vector<std::uint32_t> want;
  for (std::uint32_t i = 0; i < cloud.size(); ++i) {
    const Eigen::Vector3f c = cam.pose.apply(cloud.position(i));
    if (!(c.z() > cam.near && c.z() < cam.far)) continue;
    const Eigen::Vector2f p = cam.project_camera(c);
    if (p.x() >= sub.crop_origin.x() && p.x() < sub.crop_origin.x() + sub.crop_size && p.y() >= sub.crop_origin.y() &&
        p.y() < sub.crop_origin.y() + sub.crop_size)
      want.push_back(i);
  }
  CHECK(r.indices == want);
  CHECK(r.occluded == 0);
  CHECK(want.size() > 100);
}

TEST_CASE("single point weights land where expected") {
  CameraView cam = simple_camera(32, 32);
  const Subfrustum sub = make_subfrustum(cam, Eigen::Vector2f(16, 16), 16.0f);
  // Pixel (5, 7) centre at depth 4; size chosen so s_px = 1.
  const float z = 4.0f;
  auto point_at = [&](float u, float v, float s_px) {
    NeuralPointCloud cloud(4);
    cloud.push_back({Eigen::Vector3f((u - 16.0f) / 100.0f * z, (v - 16.0f) / 100.0f * z, z), s_px * z / 100.0f,
                     {0.25f, 0.5f, 0.75f, 1.0f}, 0.6f});
    return splat_pyramid(cloud, all_indices(1), sub);
  };
  const FramePyramid one = point_at(5.5f, 7.5f, 1.0f);
  CHECK(one.layers[0].at(5, 7, 4) == doctest::Approx(0.6f));
  CHECK(one.layers[0].at(5, 7, 1) == doctest::Approx(0.3f));
  CHECK(one.fragment_counts[0] == 1);
  CHECK(one.fragment_counts[1] == 0);

  const FramePyramid two = point_at(5.0f, 7.0f, 2.0f);
  CHECK(two.fragment_counts[0] == 0);
  CHECK(two.fragment_counts[1] == 1); // layer-1 pixel (2, 3) centre is at crop (5, 7)
  CHECK(two.layers[1].at(2, 3, 4) == doctest::Approx(0.6f));

  const FramePyramid big = point_at(16.0f, 16.0f, 1000.0f);
  CHECK(big.fragment_counts[3] > 0);
  CHECK(big.fragment_counts[2] == 0);

  // Between pixel centres: four equal bilinear taps.
  const FramePyramid mid = point_at(6.0f, 8.0f, 1.0f);
  float sum = 0.0f;
  for (int y = 7; y <= 8; ++y)
    for (int x = 5; x <= 6; ++x) {
      CHECK(mid.layers[0].at(x, y, 4) == doctest::Approx(0.15f));
      sum += mid.layers[0].at(x, y, 4);
    }
  CHECK(sum == doctest::Approx(0.6f));
}

TEST_CASE("pyramid level coordinate") {
  CHECK(pyramid_level(0.3f, 4) == 0.0f);
  CHECK(pyramid_level(1.0f, 4) == 0.0f);
  CHECK(pyramid_level(2.0f, 4) == 1.0f);
  CHECK(pyramid_level(std::sqrt(8.0f), 4) == doctest::Approx(1.5f));
  CHECK(pyramid_level(64.0f, 4) == 3.0f);
}

TEST_CASE("combined-layer splatting equals the naive per-layer oracle") {
  Rng rng(19);
  for (int trial = 0; trial < 4; ++trial) {
    const CameraView cam = look_camera(160, 120, 60.0f, Eigen::Vector3f(0, 0, -4), Eigen::Vector3f::Zero());
    const NeuralPointCloud cloud = random_cloud(rng, 30000, cam, 0.001f, 0.2f);
    const Subfrustum sub = make_subfrustum(cam, Eigen::Vector2f(80, 60), 50.0f);
    std::vector<std::uint32_t> idx;
    for (std::uint32_t i = 0; i < cloud.size(); ++i)
      if (rng.uniform() < 0.8) idx.push_back(i);
    const FramePyramid got = splat_pyramid(cloud, idx, sub);
    const FramePyramid want = oracle_pyramid(cloud, idx, sub, kPyramidLayers, kFragmentsPerPixel);
    CHECK(pyramids_equal(got, want));
    // Order independence.
    std::shuffle(idx.begin(), idx.end(), std::mt19937_64(trial));
    CHECK(pyramids_equal(splat_pyramid(cloud, idx, sub), got));
    // Layer sizes and alpha range.
    for (int l = 0; l < got.levels(); ++l) {
      CHECK(got.layers[l].width == (100 + (1 << l) - 1) / (1 << l));
      for (std::size_t p = 0; p < got.layers[l].pixel_count(); ++p) {
        const float a = got.layers[l].data[p * 5 + 4];
        CHECK(a >= 0.0f);
        CHECK(a <= 1.0f);
      }
    }
  }
}

TEST_CASE("the K cap keeps the nearest fragments") {
  CameraView cam = simple_camera(16, 16);
  const Subfrustum sub = make_subfrustum(cam, Eigen::Vector2f(8, 8), 8.0f);
  NeuralPointCloud cloud(4);
  // 20 points on the centre of pixel (8, 8), far ones first in the input.
  for (int i = 0; i < 20; ++i) {
    const float z = 10.0f - 0.25f * static_cast<float>(i);
    const float u = 8.5f, v = 8.5f;
    cloud.push_back({Eigen::Vector3f((u - 8) / 100 * z, (v - 8) / 100 * z, z), 0.5f * z / 100.0f,
                     {static_cast<float>(i), 0, 0, 0}, 0.1f});
  }
  SplatOptions opt;
  opt.max_fragments = 4;
  const FramePyramid p = splat_pyramid(cloud, all_indices(20), sub, opt);
  // Nearest four are i = 19, 18, 17, 16.
  double feat = 0.0, t = 1.0;
  for (int i = 19; i >= 16; --i) {
    feat += i * 0.1 * t;
    t *= 0.9;
  }
  CHECK(p.layers[0].at(8, 8, 0) == doctest::Approx(feat));
  CHECK(p.layers[0].at(8, 8, 4) == doctest::Approx(1.0 - t));
  CHECK(p.fragment_counts[0] == 20);
}
