#pragma once

#include <memory>

#include "fdmo/config.h"
#include "fdmo/direct.h"
#include "fdmo/geometry.h"
#include "fdmo/image.h"
#include "fdmo/rng.h"
#include "fdmo/synth.h"

namespace fdmo::test {

inline Twist random_twist(Rng& rng, double trans_scale = 1.0, double max_angle = 2.5) {
  Twist xi;
  for (int i = 0; i < 3; ++i) xi[i] = rng.uniform(-trans_scale, trans_scale);
  Vec3 axis(rng.normal(), rng.normal(), rng.normal());
  if (axis.norm() < 1e-12) axis = Vec3(0, 0, 1);
  axis.normalize();
  xi.tail<3>() = axis * rng.uniform(0.0, max_angle);
  return xi;
}

inline Pose random_pose(Rng& rng, double trans_scale = 1.0, double max_angle = 2.5) {
  return se3_exp(random_twist(rng, trans_scale, max_angle));
}

inline PinholeCamera test_camera(int w = 424, int h = 320) {
  return PinholeCamera(300.0, 300.0, w / 2.0 - 0.5, h / 2.0 - 0.5, w, h);
}

// Numerically stable rotation difference for equality checks. The paper's
// geodesic formula bottoms out around 3e-8 because of the acos; use this for
// tolerances tighter than that.
inline double rotation_error(const Pose& a, const Pose& b) {
  return a.rotation.angularDistance(b.rotation);
}

inline double translation_error(const Pose& a, const Pose& b) {
  return (a.translation - b.translation).norm();
}

// Direct keyframe rendered from the scene, points seeded with exact ray-cast
// depths (optionally perturbed), all active. The workhorse oracle fixture.
inline std::shared_ptr<DirectKeyframe> make_scene_keyframe(
    const SyntheticScene& scene, const Pose& T_cw, const Config& cfg, int id = 0,
    double depth_perturbation = 0.0, Rng* rng = nullptr, bool as_candidates = false) {
  const Image img = render_frame(scene, T_cw, scene.seed + uint64_t(id) * 977);
  Pyramid pyr = build_pyramid(img, scene.cam, cfg.pyramid_levels);
  auto kf = create_direct_keyframe(id, std::move(pyr), T_cw, cfg);

  std::vector<DirectPoint> kept;
  for (DirectPoint& p : kf->points) {
    SurfaceHit hit;
    if (!scene_hit(scene, T_cw, p.uv, hit)) continue;
    // grazing views alias the texture; the engine's depth filter would never
    // converge on such points either
    if (hit.cos_incidence < 0.5) continue;
    const double z = hit.depth;
    // the whole residual pattern must lie on one surface patch; points
    // straddling a discontinuity would never pass the engine's depth filter
    bool continuous = true;
    for (const auto& off : kPattern) {
      SurfaceHit hk;
      if (!scene_hit(scene, T_cw, p.uv + Vec2(off[0] * 1.5, off[1] * 1.5), hk) ||
          hk.patch != hit.patch) {
        continuous = false;
        break;
      }
    }
    if (!continuous) continue;
    double rho = 1.0 / z;
    if (depth_perturbation > 0.0 && rng) {
      rho *= 1.0 + depth_perturbation * (2.0 * rng->uniform() - 1.0);
    }
    p.inv_depth = rho;
    if (as_candidates) {
      p.status = PointStatus::kCandidate;
      p.variance = (0.4 * rho) * (0.4 * rho);
    } else {
      p.status = PointStatus::kActive;
      p.variance = (0.05 * rho) * (0.05 * rho);
    }
    kept.push_back(p);
  }
  kf->points = std::move(kept);
  return kf;
}

// Smoothed random noise image; dense gradients everywhere.
inline Image textured_image(int w, int h, uint64_t seed) {
  Rng rng(seed);
  Image noise(w, h);
  for (auto& v : noise.data) v = float(rng.uniform(0.0, 255.0));
  Image out(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float acc = 0.f;
      int cnt = 0;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int xx = x + dx, yy = y + dy;
          if (xx < 0 || yy < 0 || xx >= w || yy >= h) continue;
          acc += noise.at(xx, yy);
          ++cnt;
        }
      out.at(x, y) = acc / float(cnt);
    }
  }
  return out;
}

}  // namespace fdmo::test
