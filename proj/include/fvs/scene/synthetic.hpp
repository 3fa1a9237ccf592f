// Copyright Contributors to the fvsplat project
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "fvs/image.hpp"
#include "fvs/scene/types.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <vector>

namespace fvs {

enum class SceneKind { TexturedQuads, ColoredSpheres, CheckerboardRoom };

SceneKind parse_scene_kind(const std::string& name);
std::string to_string(SceneKind kind);

struct SceneSpec {
  SceneKind kind = SceneKind::CheckerboardRoom;
  std::uint64_t seed = 0;
  std::size_t n_gaussians = 20000;
  std::size_t n_points = 100000;
  std::size_t n_views = 3;
  int width = 512;
  int height = 512;
  int feature_dim = 4;
  float fov_deg = 60.0f;
  /// Point contribution size as a multiple of the surface sampling spacing.
  float point_size_scale = 1.0f;
};

/// YAML key-value file with keys kind, seed, n_gaussians, n_points, n_views,
/// resolution (int or [w, h]) and optionally feature_dim, fov_deg,
/// point_size_scale.
SceneSpec load_scene_spec(const std::filesystem::path& path);
SceneSpec parse_scene_spec(const std::string& yaml_text);

enum class Texture { Flat, Checker, Stripes };

/// Analytic opaque surface. Quads span center + a*axis_u + b*axis_v for
/// a, b in [-1, 1]; spheres use center and radius.
struct Surface {
  enum class Shape { Quad, Sphere };

  Shape shape = Shape::Quad;
  Eigen::Vector3f center = Eigen::Vector3f::Zero();
  Eigen::Vector3f axis_u = Eigen::Vector3f::UnitX();
  Eigen::Vector3f axis_v = Eigen::Vector3f::UnitY();
  float radius = 1.0f;
  Texture texture = Texture::Flat;
  Eigen::Vector3f color_a = Eigen::Vector3f::Constant(0.5f);
  Eigen::Vector3f color_b = Eigen::Vector3f::Constant(0.5f);
  float cell = 1.0f;

  float area() const;
  /// Color at surface coordinates measured in world units.
  Eigen::Vector3f color_at(float s, float t) const;
};

struct SurfaceHit {
  float t = 0.0f;
  Eigen::Vector3f color = Eigen::Vector3f::Zero();
  std::size_t surface = 0;
};

/// Nearest intersection with t > t_min along origin + t * dir.
std::optional<SurfaceHit> first_hit(const std::vector<Surface>& surfaces, const Eigen::Vector3f& origin,
                                    const Eigen::Vector3f& dir, float t_min = 1e-4f);

/// Flat-shaded image of the surfaces: every pixel takes the color of the
/// nearest surface along its center ray; background is black.
Image render_reference(const std::vector<Surface>& surfaces, const CameraView& camera);

struct ReferenceView {
  CameraView camera;
  Image reference;
};

struct SyntheticScene {
  SceneSpec spec;
  std::vector<Surface> surfaces;
  GaussianSet gaussians;
  NeuralPointCloud points;
  std::vector<ReferenceView> views;
};

/// Deterministic scene: analytic surfaces sampled into Gaussians and neural
/// points, plus reference images. Throws EmptySceneError when no primitives
/// are requested.
SyntheticScene generate_synthetic(const SceneSpec& spec);

/// mt19937_64 with distributions derived from its raw output, so sequences do
/// not depend on the standard library's distribution implementations.
class Rng {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller.
  double normal();

private:
  std::mt19937_64 engine_;
};

} // namespace fvs
