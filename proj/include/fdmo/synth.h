#pragma once

#include <limits>
#include <vector>

#include "fdmo/geometry.h"
#include "fdmo/image.h"
#include "fdmo/rng.h"

namespace fdmo {

/// A textured square landmark: Lambertian, two-sided, with a smooth random
/// albedo grid sampled bilinearly. Intensity is view-independent, so rendered
/// sequences satisfy brightness constancy exactly (up to sensor noise).
struct TexturedPatch {
  Vec3 center;
  Vec3 u_dir, v_dir, normal;  // orthonormal in-plane axes and plane normal
  double half_size = 0.5;
  int tex_size = 24;
  std::vector<float> texture;

  float sample(double a, double b) const;  // a, b in [-1, 1] patch coords
};

struct SyntheticScene {
  PinholeCamera cam;
  std::vector<TexturedPatch> patches;
  float background = 40.f;
  double noise_sigma = 0.0;  // gray levels
  uint64_t seed = 1;
};

/// Camera pose (world-to-camera) at center `c` looking toward `target`.
Pose look_at(const Vec3& c, const Vec3& target, const Vec3& up = Vec3(0, 1, 0));

/// Smooth closed-loop camera path: a circular orbit of `radius` around
/// `target` with optional vertical bobbing. pose(0) == pose(1).
struct OrbitPath {
  Vec3 target = Vec3::Zero();
  double radius = 4.5;
  double height = 0.0;
  double height_amplitude = 0.0;
  double start_angle = 0.0;
  double span = 2.0 * M_PI;  // radians swept over t in [0, 1]

  Pose pose(double t) const;
};

/// Randomized patch cloud inside a shoebox volume around the origin.
SyntheticScene make_scene(int n_patches, uint64_t seed, const PinholeCamera& cam,
                          double cloud_radius = 2.0, double patch_half_size = 0.55);

/// Non-overlapping camera-facing patches on a shell around the origin:
/// every feature's appearance is fully shared between nearby views, which is
/// what fixtures with known correspondences need.
SyntheticScene make_facing_scene(int n_patches, uint64_t seed, const PinholeCamera& cam,
                                 double shell_radius = 2.0, double patch_half_size = 0.35);

/// Rasterizes the patch cloud through the pinhole model with z-buffering and
/// bilinear texture lookup, then adds Gaussian intensity noise. Deterministic
/// for a fixed (scene, pose, seed).
Image render_frame(const SyntheticScene& scene, const Pose& T_cw);
Image render_frame(const SyntheticScene& scene, const Pose& T_cw, uint64_t noise_seed);

struct RenderedFrame {
  Image image;
  std::vector<float> depth;  // z in camera frame; +inf on background

  float depth_at(int x, int y, int width) const { return depth[size_t(y) * width + x]; }
};

/// Render with a depth buffer; ground truth for depth-dependent oracles.
RenderedFrame render_frame_depth(const SyntheticScene& scene, const Pose& T_cw,
                                 uint64_t noise_seed);

/// Exact depth of the closest patch along the ray of `px`, +inf if none.
double scene_depth(const SyntheticScene& scene, const Pose& T_cw, const Vec2& px);

struct SurfaceHit {
  double depth = 0.0;       // z in camera frame
  Vec3 normal_world = Vec3::Zero();
  double cos_incidence = 0.0;  // |normal . ray|, 1 = frontal
  int patch = -1;
};

/// Ray-cast with surface information; false if the ray hits nothing.
bool scene_hit(const SyntheticScene& scene, const Pose& T_cw, const Vec2& px, SurfaceHit& hit);

}  // namespace fdmo
