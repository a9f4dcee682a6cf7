#include "fdmo/synth.h"

#include <algorithm>
#include <cmath>

namespace fdmo {

float TexturedPatch::sample(double a, double b) const {
  const double u = 0.5 * (a + 1.0) * (tex_size - 1);
  const double v = 0.5 * (b + 1.0) * (tex_size - 1);
  const int x0 = std::clamp(int(u), 0, tex_size - 2);
  const int y0 = std::clamp(int(v), 0, tex_size - 2);
  const double fu = std::clamp(u - x0, 0.0, 1.0);
  const double fv = std::clamp(v - y0, 0.0, 1.0);
  const auto at = [&](int x, int y) { return texture[size_t(y) * tex_size + x]; };
  return float((1 - fu) * (1 - fv) * at(x0, y0) + fu * (1 - fv) * at(x0 + 1, y0) +
               (1 - fu) * fv * at(x0, y0 + 1) + fu * fv * at(x0 + 1, y0 + 1));
}

Pose look_at(const Vec3& c, const Vec3& target, const Vec3& up) {
  Vec3 z = (target - c).normalized();
  Vec3 x = up.cross(z);
  if (x.norm() < 1e-9) x = Vec3(1, 0, 0);  // looking straight along up
  x.normalize();
  const Vec3 y = z.cross(x);
  Mat3 r_wc;
  r_wc.col(0) = x;
  r_wc.col(1) = y;
  r_wc.col(2) = z;
  const Mat3 r_cw = r_wc.transpose();
  return Pose(r_cw, -(r_cw * c));
}

Pose OrbitPath::pose(double t) const {
  const double theta = start_angle + span * t;
  const Vec3 c = target + Vec3(radius * std::cos(theta),
                               height + height_amplitude * std::sin(2.0 * M_PI * t),
                               radius * std::sin(theta));
  return look_at(c, target);
}

SyntheticScene make_scene(int n_patches, uint64_t seed, const PinholeCamera& cam,
                          double cloud_radius, double patch_half_size) {
  SyntheticScene scene;
  scene.cam = cam;
  scene.seed = seed;
  Rng rng(seed);
  scene.patches.reserve(size_t(n_patches));
  for (int i = 0; i < n_patches; ++i) {
    TexturedPatch p;
    p.center = Vec3(rng.uniform(-cloud_radius, cloud_radius),
                    rng.uniform(-cloud_radius, cloud_radius),
                    rng.uniform(-cloud_radius, cloud_radius));
    // random orientation biased toward facing outward, so an orbiting camera
    // sees the patch at a reasonable angle
    Vec3 n = p.center.normalized() + Vec3(rng.normal(), rng.normal(), rng.normal()) * 0.18;
    if (n.norm() < 1e-6) n = Vec3(0, 0, 1);
    p.normal = n.normalized();
    Vec3 seed_axis = std::abs(p.normal.z()) < 0.9 ? Vec3(0, 0, 1) : Vec3(1, 0, 0);
    p.u_dir = seed_axis.cross(p.normal).normalized();
    p.v_dir = p.normal.cross(p.u_dir);
    p.half_size = patch_half_size * rng.uniform(0.7, 1.3);

    p.tex_size = 24;
    std::vector<float> noise(size_t(p.tex_size) * p.tex_size);
    for (auto& v : noise) v = float(rng.uniform(0.0, 1.0));
    // two smoothing passes keep the texture bilinear-friendly (low resampling
    // error between views) while leaving usable gradients and corners
    std::vector<float> tmp(noise.size());
    const auto blur = [&](const std::vector<float>& src, std::vector<float>& dst) {
      for (int y = 0; y < p.tex_size; ++y) {
        for (int x = 0; x < p.tex_size; ++x) {
          float acc = 0.f;
          int cnt = 0;
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              const int xx = x + dx, yy = y + dy;
              if (xx < 0 || yy < 0 || xx >= p.tex_size || yy >= p.tex_size) continue;
              acc += src[size_t(yy) * p.tex_size + xx];
              ++cnt;
            }
          dst[size_t(y) * p.tex_size + x] = acc / float(cnt);
        }
      }
    };
    blur(noise, tmp);
    blur(tmp, noise);
    float lo = 1e9f, hi = -1e9f;
    for (float v : noise) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    p.texture.assign(noise.size(), 0.f);
    for (size_t i = 0; i < noise.size(); ++i) {
      const float v = (noise[i] - lo) / std::max(hi - lo, 1e-6f);
      // blend in a posterized copy: the level-set ridges give crisp corners
      // and decisive descriptor comparisons, the smooth part keeps the
      // photometric objective well-behaved
      const float steps = std::floor(v * 3.f) / 2.f;
      p.texture[i] = 30.f + 190.f * (0.55f * v + 0.45f * std::min(steps, 1.f));
    }
    scene.patches.push_back(std::move(p));
  }
  return scene;
}

SyntheticScene make_facing_scene(int n_patches, uint64_t seed, const PinholeCamera& cam,
                                 double shell_radius, double patch_half_size) {
  SyntheticScene scene = make_scene(n_patches, seed, cam, shell_radius, patch_half_size);
  Rng rng(seed ^ 0xfacedull);
  // re-place the patches at separated directions and varied radii: no patch
  // overlaps another from the ring viewpoints, and the depth spread keeps
  // pose estimation well conditioned
  std::vector<Vec3> dirs;
  for (auto& p : scene.patches) {
    Vec3 d;
    for (int attempt = 0; attempt < 200; ++attempt) {
      d = Vec3(rng.normal(), rng.normal(), rng.normal());
      if (d.norm() < 1e-6) continue;
      d.normalize();
      bool clear = true;
      const double min_sep = 2.6 * patch_half_size / shell_radius;
      for (const Vec3& other : dirs) {
        if ((d - other).norm() < min_sep) {
          clear = false;
          break;
        }
      }
      if (clear) break;
    }
    dirs.push_back(d);
    const double radius = shell_radius * rng.uniform(0.55, 1.35);
    p.center = radius * d;
    p.normal = d;  // faces the surrounding camera ring
    const Vec3 seed_axis = std::abs(d.z()) < 0.9 ? Vec3(0, 0, 1) : Vec3(1, 0, 0);
    p.u_dir = seed_axis.cross(p.normal).normalized();
    p.v_dir = p.normal.cross(p.u_dir);
    p.half_size = patch_half_size;
  }
  return scene;
}

namespace {

struct PatchCam {
  Vec3 center, u_dir, v_dir, normal;
};

}  // namespace

RenderedFrame render_frame_depth(const SyntheticScene& scene, const Pose& T_cw,
                                 uint64_t noise_seed) {
  const PinholeCamera& cam = scene.cam;
  RenderedFrame out;
  out.image = Image(cam.width, cam.height, scene.background);
  out.depth.assign(size_t(cam.width) * cam.height, std::numeric_limits<float>::infinity());

  const Mat3 R = T_cw.rotation_matrix();
  for (const TexturedPatch& patch : scene.patches) {
    PatchCam pc;
    pc.center = T_cw * patch.center;
    pc.u_dir = R * patch.u_dir;
    pc.v_dir = R * patch.v_dir;
    pc.normal = R * patch.normal;

    // conservative screen bounding box from the projected corners
    double min_u = 1e18, max_u = -1e18, min_v = 1e18, max_v = -1e18;
    bool any_front = false;
    for (int sx = -1; sx <= 1; sx += 2) {
      for (int sy = -1; sy <= 1; sy += 2) {
        const Vec3 corner = pc.center + patch.half_size * (sx * pc.u_dir + sy * pc.v_dir);
        if (corner.z() < 0.05) continue;
        any_front = true;
        const double u = cam.fx * corner.x() / corner.z() + cam.cx;
        const double v = cam.fy * corner.y() / corner.z() + cam.cy;
        min_u = std::min(min_u, u);
        max_u = std::max(max_u, u);
        min_v = std::min(min_v, v);
        max_v = std::max(max_v, v);
      }
    }
    if (!any_front) continue;
    const int x0 = std::max(0, int(std::floor(min_u)));
    const int x1 = std::min(cam.width - 1, int(std::ceil(max_u)));
    const int y0 = std::max(0, int(std::floor(min_v)));
    const int y1 = std::min(cam.height - 1, int(std::ceil(max_v)));
    if (x0 > x1 || y0 > y1) continue;

    const double ndc = pc.normal.dot(pc.center);
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        const Vec3 dir((x - cam.cx) / cam.fx, (y - cam.cy) / cam.fy, 1.0);
        const double denom = pc.normal.dot(dir);
        if (std::abs(denom) < 1e-12) continue;
        const double t = ndc / denom;  // z of the intersection (dir.z == 1)
        if (t <= 0.05) continue;
        const size_t idx = size_t(y) * cam.width + x;
        if (t >= out.depth[idx]) continue;
        const Vec3 p = t * dir - pc.center;
        const double a = p.dot(pc.u_dir) / patch.half_size;
        const double b = p.dot(pc.v_dir) / patch.half_size;
        if (std::abs(a) > 1.0 || std::abs(b) > 1.0) continue;
        out.depth[idx] = float(t);
        out.image.at(x, y) = patch.sample(a, b);
      }
    }
  }

  if (scene.noise_sigma > 0.0) {
    Rng rng(noise_seed);
    for (float& v : out.image.data) {
      v = std::clamp(v + float(rng.normal(0.0, scene.noise_sigma)), 0.f, 255.f);
    }
  }
  return out;
}

Image render_frame(const SyntheticScene& scene, const Pose& T_cw) {
  return render_frame_depth(scene, T_cw, scene.seed).image;
}

Image render_frame(const SyntheticScene& scene, const Pose& T_cw, uint64_t noise_seed) {
  return render_frame_depth(scene, T_cw, noise_seed).image;
}

bool scene_hit(const SyntheticScene& scene, const Pose& T_cw, const Vec2& px, SurfaceHit& hit) {
  const PinholeCamera& cam = scene.cam;
  const Vec3 dir((px.x() - cam.cx) / cam.fx, (px.y() - cam.cy) / cam.fy, 1.0);
  const Mat3 R = T_cw.rotation_matrix();
  double best = std::numeric_limits<double>::infinity();
  int best_patch = -1;
  for (int i = 0; i < int(scene.patches.size()); ++i) {
    const TexturedPatch& patch = scene.patches[size_t(i)];
    const Vec3 center = T_cw * patch.center;
    const Vec3 normal = R * patch.normal;
    const double denom = normal.dot(dir);
    if (std::abs(denom) < 1e-12) continue;
    const double t = normal.dot(center) / denom;
    if (t <= 0.05 || t >= best) continue;
    const Vec3 p = t * dir - center;
    if (std::abs(p.dot(R * patch.u_dir)) > patch.half_size) continue;
    if (std::abs(p.dot(R * patch.v_dir)) > patch.half_size) continue;
    best = t;
    best_patch = i;
  }
  if (best_patch < 0) return false;
  hit.depth = best;
  hit.patch = best_patch;
  hit.normal_world = scene.patches[size_t(best_patch)].normal;
  const Vec3 normal_cam = R * hit.normal_world;
  hit.cos_incidence = std::abs(normal_cam.dot(dir.normalized()));
  return true;
}

double scene_depth(const SyntheticScene& scene, const Pose& T_cw, const Vec2& px) {
  const PinholeCamera& cam = scene.cam;
  const Vec3 dir((px.x() - cam.cx) / cam.fx, (px.y() - cam.cy) / cam.fy, 1.0);
  const Mat3 R = T_cw.rotation_matrix();
  double best = std::numeric_limits<double>::infinity();
  for (const TexturedPatch& patch : scene.patches) {
    const Vec3 center = T_cw * patch.center;
    const Vec3 normal = R * patch.normal;
    const double denom = normal.dot(dir);
    if (std::abs(denom) < 1e-12) continue;
    const double t = normal.dot(center) / denom;
    if (t <= 0.05 || t >= best) continue;
    const Vec3 p = t * dir - center;
    if (std::abs(p.dot(R * patch.u_dir)) > patch.half_size) continue;
    if (std::abs(p.dot(R * patch.v_dir)) > patch.half_size) continue;
    best = t;
  }
  return best;
}

}  // namespace fdmo
