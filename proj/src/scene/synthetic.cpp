// Copyright Contributors to the fvsplat project
// SPDX-License-Identifier: Apache-2.0
#include "fvs/scene/synthetic.hpp"

#include "fvs/error.hpp"
#include "fvs/scene/ply.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <numeric>

namespace fvs {
namespace {

constexpr float kShC0 = 0.28209479177387814f;
constexpr double kPlastic = 1.32471795724474602596; // R2 low-discrepancy generator
constexpr double kGoldenAngle = 2.39996322972865332;

using Vec3 = Eigen::Vector3f;

struct SurfaceSample {
  Vec3 position;
  Vec3 tangent_u;
  Vec3 tangent_v;
  Vec3 normal;
  Vec3 color;
};

Vec3 random_color(Rng& rng) {
  return Vec3(static_cast<float>(rng.uniform(0.1, 0.95)), static_cast<float>(rng.uniform(0.1, 0.95)),
              static_cast<float>(rng.uniform(0.1, 0.95)));
}

Surface make_quad(const Vec3& center, const Vec3& u, const Vec3& v, Texture tex, const Vec3& a, const Vec3& b,
                  float cell) {
  Surface s;
  s.shape = Surface::Shape::Quad;
  s.center = center;
  s.axis_u = u;
  s.axis_v = v;
  s.texture = tex;
  s.color_a = a;
  s.color_b = b;
  s.cell = cell;
  return s;
}

Surface make_sphere(const Vec3& center, float radius, const Vec3& color) {
  Surface s;
  s.shape = Surface::Shape::Sphere;
  s.center = center;
  s.radius = radius;
  s.texture = Texture::Flat;
  s.color_a = color;
  s.color_b = color;
  return s;
}

void orthonormal_frame(const Vec3& n, Vec3& u, Vec3& v) {
  const Vec3 helper = std::abs(n.x()) < 0.9f ? Vec3::UnitX() : Vec3::UnitY();
  u = helper.cross(n).normalized();
  v = n.cross(u);
}

/// Exactly `count` well-spread samples over the surface.
std::vector<SurfaceSample> sample_surface(const Surface& s, std::size_t count, Rng& rng) {
  std::vector<SurfaceSample> out;
  out.reserve(count);
  const double off_a = rng.uniform();
  const double off_b = rng.uniform();
  if (s.shape == Surface::Shape::Quad) {
    const float lu = s.axis_u.norm();
    const float lv = s.axis_v.norm();
    const Vec3 du = s.axis_u / lu;
    const Vec3 dv = s.axis_v / lv;
    const Vec3 n = du.cross(dv).normalized();
    for (std::size_t i = 0; i < count; ++i) {
      const double fa = std::fmod(off_a + static_cast<double>(i + 1) / kPlastic, 1.0);
      const double fb = std::fmod(off_b + static_cast<double>(i + 1) / (kPlastic * kPlastic), 1.0);
      const float a = static_cast<float>(2.0 * fa - 1.0);
      const float b = static_cast<float>(2.0 * fb - 1.0);
      SurfaceSample smp;
      smp.position = s.center + a * s.axis_u + b * s.axis_v;
      smp.tangent_u = du;
      smp.tangent_v = n.cross(du);
      smp.normal = n;
      smp.color = s.color_at(a * lu, b * lv);
      out.push_back(smp);
    }
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      const double z = 1.0 - 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(count);
      const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
      const double phi = static_cast<double>(i) * kGoldenAngle + off_a * 2.0 * M_PI;
      const Vec3 n(static_cast<float>(r * std::cos(phi)), static_cast<float>(r * std::sin(phi)), static_cast<float>(z));
      SurfaceSample smp;
      smp.normal = n.normalized();
      smp.position = s.center + s.radius * smp.normal;
      orthonormal_frame(smp.normal, smp.tangent_u, smp.tangent_v);
      smp.color = s.color_at(0.0f, 0.0f);
      out.push_back(smp);
    }
  }
  return out;
}

/// Largest-remainder split of `total` proportional to surface area.
std::vector<std::size_t> allocate_by_area(const std::vector<Surface>& surfaces, std::size_t total) {
  std::vector<double> areas;
  for (const auto& s : surfaces) areas.push_back(s.area());
  const double sum = std::accumulate(areas.begin(), areas.end(), 0.0);
  std::vector<std::size_t> counts(surfaces.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < surfaces.size(); ++i) {
    const double exact = static_cast<double>(total) * areas[i] / sum;
    counts[i] = static_cast<std::size_t>(std::floor(exact));
    assigned += counts[i];
    remainders.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t k = 0; assigned < total; ++k, ++assigned) ++counts[remainders[k % remainders.size()].second];
  return counts;
}

Eigen::Vector4f frame_quaternion(const Vec3& u, const Vec3& v, const Vec3& n) {
  Eigen::Matrix3f r;
  r.col(0) = u;
  r.col(1) = v;
  r.col(2) = n;
  Eigen::Quaternionf q(r);
  q.normalize();
  return {q.w(), q.x(), q.y(), q.z()};
}

GaussianSet gaussians_from_surfaces(const std::vector<Surface>& surfaces, std::size_t total, Rng& rng) {
  GaussianSet set;
  set.sh_degree = 0;
  set.gaussians.reserve(total);
  const auto counts = allocate_by_area(surfaces, total);
  const float opacity = quantize_opacity(0.95f);
  for (std::size_t si = 0; si < surfaces.size(); ++si) {
    if (counts[si] == 0) continue;
    const float spacing = std::sqrt(surfaces[si].area() / static_cast<float>(counts[si]));
    const float tangential = 0.8f * spacing;
    const float normal = std::max(0.02f * spacing, 1e-4f);
    for (const SurfaceSample& smp : sample_surface(surfaces[si], counts[si], rng)) {
      Gaussian g;
      g.position = smp.position;
      g.log_scale = Vec3(std::log(tangential), std::log(tangential), std::log(normal));
      g.rotation = frame_quaternion(smp.tangent_u, smp.tangent_v, smp.normal);
      g.opacity = opacity;
      for (int c = 0; c < 3; ++c) g.sh[static_cast<std::size_t>(c)] = (smp.color[c] - 0.5f) / kShC0;
      set.gaussians.push_back(g);
    }
  }
  return set;
}

NeuralPointCloud points_from_surfaces(const std::vector<Surface>& surfaces, std::size_t total, int dim, float size_scale,
                                       Rng& rng) {
  NeuralPointCloud cloud(dim);
  cloud.reserve(total);
  const auto counts = allocate_by_area(surfaces, total);
  NeuralPoint p;
  p.features.assign(static_cast<std::size_t>(dim), 0.0f);
  for (std::size_t si = 0; si < surfaces.size(); ++si) {
    if (counts[si] == 0) continue;
    const float spacing = std::sqrt(surfaces[si].area() / static_cast<float>(counts[si]));
    for (const SurfaceSample& smp : sample_surface(surfaces[si], counts[si], rng)) {
      p.position = smp.position;
      p.size = size_scale * spacing;
      p.opacity = 1.0f;
      for (int c = 0; c < std::min(dim, 3); ++c) p.features[static_cast<std::size_t>(c)] = smp.color[c];
      if (dim > 3) p.features[3] = 1.0f;
      cloud.push_back(p);
    }
  }
  return cloud;
}

std::vector<Surface> room_surfaces(Rng& rng) {
  std::vector<Surface> s;
  auto pair = [&] { return std::make_pair(random_color(rng), random_color(rng)); };
  const float hx = 4.0f, hy = 2.0f, hz = 4.0f;
  // y points down: floor at +hy
  auto [f0, f1] = pair();
  s.push_back(make_quad({0, hy, 0}, {hx, 0, 0}, {0, 0, hz}, Texture::Checker, f0, f1, 1.0f));
  auto [c0, c1] = pair();
  s.push_back(make_quad({0, -hy, 0}, {0, 0, hz}, {hx, 0, 0}, Texture::Checker, c0, c1, 1.0f));
  auto [w0, w1] = pair();
  s.push_back(make_quad({0, 0, hz}, {0, hy, 0}, {hx, 0, 0}, Texture::Checker, w0, w1, 0.8f));
  auto [w2, w3] = pair();
  s.push_back(make_quad({0, 0, -hz}, {hx, 0, 0}, {0, hy, 0}, Texture::Checker, w2, w3, 0.8f));
  auto [w4, w5] = pair();
  s.push_back(make_quad({hx, 0, 0}, {0, 0, hz}, {0, hy, 0}, Texture::Checker, w4, w5, 0.8f));
  auto [w6, w7] = pair();
  s.push_back(make_quad({-hx, 0, 0}, {0, hy, 0}, {0, 0, hz}, Texture::Checker, w6, w7, 0.8f));
  // Free-standing block on the floor; it occludes part of the far wall from every view.
  const float b = 0.7f;
  const Vec3 bc(0.0f, hy - b, 0.0f);
  auto [b0, b1] = pair();
  const Vec3 ex(b, 0, 0), ey(0, b, 0), ez(0, 0, b);
  s.push_back(make_quad(bc + ez, ex, ey, Texture::Checker, b0, b1, 0.35f));
  s.push_back(make_quad(bc - ez, ey, ex, Texture::Checker, b0, b1, 0.35f));
  s.push_back(make_quad(bc + ex, ey, ez, Texture::Checker, b1, b0, 0.35f));
  s.push_back(make_quad(bc - ex, ez, ey, Texture::Checker, b1, b0, 0.35f));
  s.push_back(make_quad(bc - ey, ez, ex, Texture::Checker, b0, b1, 0.35f));
  return s;
}

Surface backdrop(Rng& rng, Texture tex) {
  return make_quad({0, 0, 9.0f}, {9.0f, 0, 0}, {0, 9.0f, 0}, tex, random_color(rng), random_color(rng), 0.9f);
}

Vec3 tilted(const Vec3& axis, float yaw, float pitch) {
  const Eigen::Matrix3f r =
      (Eigen::AngleAxisf(yaw, Vec3::UnitY()) * Eigen::AngleAxisf(pitch, Vec3::UnitX())).toRotationMatrix();
  return r * axis;
}

std::vector<Surface> quad_surfaces(Rng& rng) {
  std::vector<Surface> s{backdrop(rng, Texture::Stripes)};
  for (int i = 0; i < 6; ++i) {
    const Vec3 c(static_cast<float>(rng.uniform(-2.0, 2.0)), static_cast<float>(rng.uniform(-1.6, 1.6)),
                 static_cast<float>(rng.uniform(3.0, 6.5)));
    const float hu = static_cast<float>(rng.uniform(0.6, 1.6));
    const float hv = static_cast<float>(rng.uniform(0.6, 1.6));
    const float yaw = static_cast<float>(rng.uniform(-0.26, 0.26));
    const float pitch = static_cast<float>(rng.uniform(-0.26, 0.26));
    const Texture tex = rng.uniform() < 0.5 ? Texture::Checker : Texture::Stripes;
    s.push_back(make_quad(c, tilted({hu, 0, 0}, yaw, pitch), tilted({0, hv, 0}, yaw, pitch), tex, random_color(rng),
                          random_color(rng), static_cast<float>(rng.uniform(0.15, 0.5))));
  }
  return s;
}

std::vector<Surface> sphere_surfaces(Rng& rng) {
  std::vector<Surface> s{backdrop(rng, Texture::Checker)};
  for (int i = 0; i < 8; ++i) {
    const Vec3 c(static_cast<float>(rng.uniform(-2.5, 2.5)), static_cast<float>(rng.uniform(-2.0, 2.0)),
                 static_cast<float>(rng.uniform(3.5, 7.0)));
    s.push_back(make_sphere(c, static_cast<float>(rng.uniform(0.4, 1.0)), random_color(rng)));
  }
  return s;
}

std::vector<CameraView> make_cameras(const SceneSpec& spec, Rng& rng) {
  std::vector<CameraView> cams;
  for (std::size_t i = 0; i < spec.n_views; ++i) {
    RigidPose pose;
    if (spec.kind == SceneKind::CheckerboardRoom) {
      const double theta = 2.0 * M_PI * static_cast<double>(i) / static_cast<double>(spec.n_views) + rng.uniform(-0.2, 0.2);
      const Vec3 eye(static_cast<float>(3.0 * std::cos(theta)), 0.0f, static_cast<float>(3.0 * std::sin(theta)));
      pose = RigidPose::look_at(eye, Vec3(0.0f, 0.6f, 0.0f));
    } else {
      const Vec3 eye(static_cast<float>(rng.uniform(-0.3, 0.3)), static_cast<float>(rng.uniform(-0.2, 0.2)), 0.0f);
      pose = RigidPose::look_at(eye, Vec3(0.0f, 0.0f, 6.0f));
    }
    CameraView cam = CameraView::from_fov(spec.width, spec.height, spec.fov_deg, pose);
    cam.near = 0.05f;
    cam.far = 50.0f;
    cams.push_back(cam);
  }
  return cams;
}

} // namespace

double Rng::normal() {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

SceneKind parse_scene_kind(const std::string& name) {
  if (name == "textured_quads") return SceneKind::TexturedQuads;
  if (name == "colored_spheres") return SceneKind::ColoredSpheres;
  if (name == "checkerboard_room") return SceneKind::CheckerboardRoom;
  throw ParseError("unknown scene kind '" + name + "'");
}

std::string to_string(SceneKind kind) {
  switch (kind) {
  case SceneKind::TexturedQuads: return "textured_quads";
  case SceneKind::ColoredSpheres: return "colored_spheres";
  case SceneKind::CheckerboardRoom: return "checkerboard_room";
  }
  return "unknown";
}

SceneSpec parse_scene_spec(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw ParseError(std::string("scene spec: ") + e.what());
  }
  if (!root.IsMap()) throw ParseError("scene spec must be a key-value map");
  SceneSpec spec;
  try {
    if (root["kind"]) spec.kind = parse_scene_kind(root["kind"].as<std::string>());
    if (root["seed"]) spec.seed = root["seed"].as<std::uint64_t>();
    if (root["n_gaussians"]) spec.n_gaussians = root["n_gaussians"].as<std::size_t>();
    if (root["n_points"]) spec.n_points = root["n_points"].as<std::size_t>();
    if (root["n_views"]) spec.n_views = root["n_views"].as<std::size_t>();
    if (root["feature_dim"]) spec.feature_dim = root["feature_dim"].as<int>();
    if (root["fov_deg"]) spec.fov_deg = root["fov_deg"].as<float>();
    if (root["point_size_scale"]) spec.point_size_scale = root["point_size_scale"].as<float>();
    if (const auto res = root["resolution"]) {
      if (res.IsSequence()) {
        if (res.size() != 2) throw ParseError("resolution must be an int or [width, height]");
        spec.width = res[0].as<int>();
        spec.height = res[1].as<int>();
      } else {
        spec.width = spec.height = res.as<int>();
      }
    }
  } catch (const YAML::Exception& e) {
    throw ParseError(std::string("scene spec: ") + e.what());
  }
  if (spec.width <= 0 || spec.height <= 0) throw ParseError("scene spec resolution must be positive");
  return spec;
}

SceneSpec load_scene_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open scene spec: " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scene_spec(ss.str());
}

float Surface::area() const {
  if (shape == Shape::Quad) return 4.0f * axis_u.norm() * axis_v.norm();
  return 4.0f * static_cast<float>(M_PI) * radius * radius;
}

Eigen::Vector3f Surface::color_at(float s, float t) const {
  switch (texture) {
  case Texture::Flat: return color_a;
  case Texture::Checker: {
    const long parity = static_cast<long>(std::floor(s / cell)) + static_cast<long>(std::floor(t / cell));
    return (parity & 1L) ? color_b : color_a;
  }
  case Texture::Stripes: {
    const float w = 0.5f + 0.5f * std::sin(2.0f * static_cast<float>(M_PI) * (s + 0.5f * t) / cell);
    return color_a * w + color_b * (1.0f - w);
  }
  }
  return color_a;
}

std::optional<SurfaceHit> first_hit(const std::vector<Surface>& surfaces, const Eigen::Vector3f& origin,
                                    const Eigen::Vector3f& dir, float t_min) {
  std::optional<SurfaceHit> best;
  for (std::size_t i = 0; i < surfaces.size(); ++i) {
    const Surface& s = surfaces[i];
    if (s.shape == Surface::Shape::Quad) {
      const Vec3 n = s.axis_u.cross(s.axis_v);
      const float denom = n.dot(dir);
      if (std::abs(denom) < 1e-12f) continue;
      const float t = n.dot(s.center - origin) / denom;
      if (!(t > t_min) || (best && t >= best->t)) continue;
      const Vec3 rel = origin + t * dir - s.center;
      const float a = rel.dot(s.axis_u) / s.axis_u.squaredNorm();
      const float b = rel.dot(s.axis_v) / s.axis_v.squaredNorm();
      if (std::abs(a) > 1.0f || std::abs(b) > 1.0f) continue;
      best = SurfaceHit{t, s.color_at(a * s.axis_u.norm(), b * s.axis_v.norm()), i};
    } else {
      const Vec3 oc = origin - s.center;
      const float qa = dir.squaredNorm();
      const float qb = oc.dot(dir);
      const float qc = oc.squaredNorm() - s.radius * s.radius;
      const float disc = qb * qb - qa * qc;
      if (disc < 0.0f) continue;
      const float root = std::sqrt(disc);
      float t = (-qb - root) / qa;
      if (!(t > t_min)) t = (-qb + root) / qa;
      if (!(t > t_min) || (best && t >= best->t)) continue;
      best = SurfaceHit{t, s.color_at(0.0f, 0.0f), i};
    }
  }
  return best;
}

Image render_reference(const std::vector<Surface>& surfaces, const CameraView& camera) {
  Image img(camera.width, camera.height, 3);
  const Eigen::Matrix3f cam_to_world = camera.pose.rotation.transpose();
  const Vec3 origin = camera.pose.camera_center();
  const auto& k = camera.intrinsics;
  for (int y = 0; y < camera.height; ++y) {
    for (int x = 0; x < camera.width; ++x) {
      const Vec3 d_cam((static_cast<float>(x) + 0.5f - k.cx) / k.fx, (static_cast<float>(y) + 0.5f - k.cy) / k.fy, 1.0f);
      // t along an unnormalized ray with unit camera-z is the view depth.
      const auto hit = first_hit(surfaces, origin, cam_to_world * d_cam, camera.near);
      if (!hit) continue;
      for (int c = 0; c < 3; ++c) img.at(x, y, c) = hit->color[c];
    }
  }
  return img;
}

SyntheticScene generate_synthetic(const SceneSpec& spec) {
  if (spec.n_gaussians == 0 && spec.n_points == 0) throw EmptySceneError("scene spec requests zero primitives");
  if (spec.width <= 0 || spec.height <= 0) throw ContractViolation("scene resolution must be positive");
  if (!(spec.point_size_scale > 0.0f)) throw ContractViolation("point size scale must be positive");
  Rng rng(spec.seed);
  SyntheticScene scene{spec, {}, {}, NeuralPointCloud(spec.feature_dim), {}};
  switch (spec.kind) {
  case SceneKind::CheckerboardRoom: scene.surfaces = room_surfaces(rng); break;
  case SceneKind::TexturedQuads: scene.surfaces = quad_surfaces(rng); break;
  case SceneKind::ColoredSpheres: scene.surfaces = sphere_surfaces(rng); break;
  }
  Rng gaussian_rng(rng.next_u64());
  Rng point_rng(rng.next_u64());
  scene.gaussians = gaussians_from_surfaces(scene.surfaces, spec.n_gaussians, gaussian_rng);
  scene.points = points_from_surfaces(scene.surfaces, spec.n_points, spec.feature_dim, spec.point_size_scale, point_rng);
  for (const CameraView& cam : make_cameras(spec, rng))
    scene.views.push_back(ReferenceView{cam, render_reference(scene.surfaces, cam)});
  return scene;
}

} // namespace fvs
