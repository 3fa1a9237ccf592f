// Copyright Contributors to the fvsplat project
// SPDX-License-Identifier: Apache-2.0
#include "pipeline_checks.hpp"

#include "test_support.hpp"

#include <algorithm>

namespace fvs::testing {

SceneSpec opaque_room_spec(int width, int height, std::size_t n_points, std::size_t views) {
  SceneSpec s;
  s.kind = SceneKind::CheckerboardRoom;
  s.seed = 5;
  s.n_gaussians = 20000;
  s.n_points = n_points;
  s.n_views = views;
  s.width = width;
  s.height = height;
  s.point_size_scale = 0.05f;
  return s;
}

double CullCheck::max_diff() const {
  return mean_abs_diff.empty() ? 0.0 : *std::max_element(mean_abs_diff.begin(), mean_abs_diff.end());
}

double CullCheck::behind_culled_fraction() const {
  return behind_wall == 0 ? 0.0 : static_cast<double>(behind_wall_culled) / static_cast<double>(behind_wall);
}

CullCheck cull_conservativeness(const SyntheticScene& scene, PipelineOptions options) {
  options.depth_cull = true;
  const Pipeline culled(scene.gaussians, scene.points, std::nullopt, options);
  options.depth_cull = false;
  const Pipeline all(scene.gaussians, scene.points, std::nullopt, options);

  CullCheck out;
  for (const ReferenceView& view : scene.views) {
    const CameraView& cam = view.camera;
    const Eigen::Vector2f gaze(0.5f * static_cast<float>(cam.width), 0.5f * static_cast<float>(cam.height));
    const FrameResult a = culled.render(cam, gaze);
    const FrameResult b = all.render(cam, gaze);
    out.mean_abs_diff.push_back(testing::mean_abs_diff(a.linear, b.linear));

    std::vector<char> kept(scene.points.size(), 0);
    for (std::uint32_t i : a.cull.indices) kept[i] = 1;
    const Eigen::Vector3f eye = cam.pose.camera_center();
    // The unculled run keeps exactly the crop-window points.
    for (std::uint32_t i : b.cull.indices) {
      const Eigen::Vector3f to = scene.points.position(i) - eye;
      const float dist = to.norm();
      const auto hit = first_hit(scene.surfaces, eye, to / dist);
      const bool behind = hit && hit->t < 0.95f * dist;
      if (behind) {
        ++out.behind_wall;
        out.behind_wall_culled += kept[i] ? 0 : 1;
      } else {
        ++out.visible;
        out.visible_culled += kept[i] ? 0 : 1;
      }
    }
  }
  return out;
}

} // namespace fvs::testing
