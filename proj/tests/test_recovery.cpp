#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fdmo/recovery.h"
#include "fdmo/synth.h"
#include "test_util.h"

#include <cmath>
#include <map>

using namespace fdmo;

namespace {

// random pose observing points in front of the camera
Pose observer_pose(Rng& rng) {
  const Vec3 c(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-4.5, -3.5));
  return look_at(c, Vec3(rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3), 0));
}

}  // namespace

TEST_CASE("epnp recovers the generating pose from noise-free points") {
  Rng rng(71);
  const PinholeCamera cam = test::test_camera();
  int done = 0;
  while (done < 100) {
    const Pose T = observer_pose(rng);
    std::vector<Vec3> pts;
    std::vector<Vec2> px;
    for (int i = 0; i < 6; ++i) {
      pts.push_back(Vec3(rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5)));
    }
    bool ok = true;
    for (const Vec3& X : pts) {
      Vec2 u;
      double depth;
      if (!project_checked(cam, T * X, u, depth) || !cam.in_image(u, 2.0)) {
        ok = false;
        break;
      }
      px.push_back(u);
    }
    if (!ok) continue;
    const Pose est = epnp(pts, px, cam);
    CHECK(rotation_geodesic(est.rotation, T.rotation) < 1e-6);
    CHECK((est.translation - T.translation).norm() < 1e-6);
    ++done;
  }
}

TEST_CASE("epnp handles planar point sets with 3 control points") {
  Rng rng(72);
  const PinholeCamera cam = test::test_camera();
  int done = 0;
  while (done < 30) {
    const Pose T = observer_pose(rng);
    std::vector<Vec3> pts;
    std::vector<Vec2> px;
    // points on the z=0.3 plane
    for (int i = 0; i < 8; ++i) {
      pts.push_back(Vec3(rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), 0.3));
    }
    bool ok = true;
    for (const Vec3& X : pts) {
      Vec2 u;
      double depth;
      if (!project_checked(cam, T * X, u, depth) || !cam.in_image(u, 2.0)) {
        ok = false;
        break;
      }
      px.push_back(u);
    }
    if (!ok) continue;
    const Pose est = epnp(pts, px, cam);
    CHECK(rotation_geodesic(est.rotation, T.rotation) < 1e-5);
    CHECK((est.translation - T.translation).norm() < 1e-5);
    ++done;
  }
}

TEST_CASE("epnp rejects too few correspondences") {
  const PinholeCamera cam = test::test_camera();
  std::vector<Vec3> pts{{0, 0, 2}, {1, 0, 2}, {0, 1, 2}};
  std::vector<Vec2> px{{100, 100}, {150, 100}, {100, 150}};
  CHECK_THROWS_AS(epnp(pts, px, cam), TooFewCorrespondences);
}

TEST_CASE("epnp rejects collinear points") {
  const PinholeCamera cam = test::test_camera();
  std::vector<Vec3> pts;
  std::vector<Vec2> px;
  for (int i = 0; i < 6; ++i) {
    pts.push_back(Vec3(0.2 * i, 0.1 * i, 2.0 + 0.3 * i));  // a 3D line
    px.push_back(Vec2(100 + 5 * i, 100 + 3 * i));
  }
  CHECK_THROWS_AS(epnp(pts, px, cam), DegenerateConfiguration);
}

TEST_CASE("refine_pose_geometric is a fixed point on noise-free matches") {
  Rng rng(73);
  const Config cfg;
  const PinholeCamera cam = test::test_camera();
  const Pose T = observer_pose(rng);
  std::vector<std::pair<Vec3, Vec2>> matches;
  while (matches.size() < 50) {
    const Vec3 X(rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5));
    Vec2 u;
    double depth;
    if (!project_checked(cam, T * X, u, depth) || !cam.in_image(u, 2.0)) continue;
    matches.push_back({X, u});
  }
  const Pose out = refine_pose_geometric(matches, T, cam, cfg);
  CHECK(test::rotation_error(out, T) < 1e-9);
  CHECK(test::translation_error(out, T) < 1e-9);
}

TEST_CASE("refine_pose_geometric recovers a perturbed pose") {
  Rng rng(74);
  const Config cfg;
  const PinholeCamera cam = test::test_camera();
  const Pose T = observer_pose(rng);
  std::vector<std::pair<Vec3, Vec2>> matches;
  while (matches.size() < 50) {
    const Vec3 X(rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5), rng.uniform(-1.5, 1.5));
    Vec2 u;
    double depth;
    if (!project_checked(cam, T * X, u, depth) || !cam.in_image(u, 2.0)) continue;
    matches.push_back({X, u});
  }
  // 5 degrees / 5% translation off
  Twist xi = Twist::Zero();
  xi.head<3>() = 0.05 * T.translation.norm() * Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
  xi.tail<3>() = (5.0 * M_PI / 180.0) * Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
  const Pose T_init = se3_exp(xi) * T;

  const Pose out = refine_pose_geometric(matches, T_init, cam, cfg, 20);
  CHECK(test::rotation_error(out, T) < 1e-4);
  CHECK(test::translation_error(out, T) < 1e-4);
}

TEST_CASE("refine_pose_geometric requires six matches") {
  const Config cfg;
  std::vector<std::pair<Vec3, Vec2>> five(5, {Vec3(0, 0, 2), Vec2(100, 100)});
  CHECK_THROWS_AS(refine_pose_geometric(five, Pose(), test::test_camera(), cfg),
                  Underconstrained);
}

TEST_CASE("seed_direct_realignment composition identities") {
  Rng rng(75);
  const Pose kf = test::random_pose(rng);
  CHECK(test::rotation_error(seed_direct_realignment(kf, kf), Pose()) < 1e-12);
  CHECK(seed_direct_realignment(kf, kf).translation.norm() < 1e-12);

  const Pose rec = test::random_pose(rng);
  const Pose rel = seed_direct_realignment(rec, kf);
  const Pose back = rel * kf;
  CHECK(test::rotation_error(back, rec) < 1e-9);
  CHECK(test::translation_error(back, rec) < 1e-9);
}

// ---------------------------------------------------------------------------
// full recovery pipeline on a mapped synthetic scene

namespace {

struct MappedScene {
  SyntheticScene scene;
  FeatureMap map;
  Vocabulary vocab;
  std::vector<double> kf_ts;
  int last_kf_id = -1;

  explicit MappedScene(const Config& cfg) : map(cfg) {}
};

// Build a feature map from ground-truth geometry: detect in each keyframe,
// ray-cast to 3D, cluster across keyframes into map points.
MappedScene build_mapped_scene(const Config& cfg, uint64_t seed) {
  MappedScene ms(cfg);
  ms.scene = make_facing_scene(140, seed, test::test_camera(), 2.2, 0.40);
  OrbitPath orbit;
  ms.kf_ts = {0.060, 0.070, 0.080, 0.090, 0.100};

  struct Obs {
    int kf;
    int feat;
    Vec3 x_world;
    Descriptor desc;
  };
  std::vector<std::vector<Obs>> clusters;

  for (int k = 0; k < int(ms.kf_ts.size()); ++k) {
    const Pose T = orbit.pose(ms.kf_ts[size_t(k)]);
    const Image img = render_frame(ms.scene, T, 10 + uint64_t(k));
    auto feats = detect_and_describe(img, 1200);
    ms.map.add_keyframe(k, T, feats);
    for (int f = 0; f < int(feats.size()); ++f) {
      SurfaceHit hit;
      if (!scene_hit(ms.scene, T, feats[size_t(f)].px, hit)) continue;
      const Vec3 dir = T.rotation.conjugate() * ms.scene.cam.ray(feats[size_t(f)].px);
      const Vec3 x_world = T.center() + hit.depth * dir;
      bool merged = false;
      for (auto& cl : clusters) {
        if ((cl.front().x_world - x_world).norm() < 0.05) {
          cl.push_back(Obs{k, f, x_world, feats[size_t(f)].descriptor});
          merged = true;
          break;
        }
      }
      if (!merged) clusters.push_back({Obs{k, f, x_world, feats[size_t(f)].descriptor}});
    }
  }

  for (const auto& cl : clusters) {
    if (cl.size() < 2) continue;
    std::vector<std::pair<int, int>> obs;
    std::map<int, bool> seen_kf;
    Vec3 mean = Vec3::Zero();
    for (const Obs& o : cl) {
      if (seen_kf.count(o.kf)) continue;
      seen_kf[o.kf] = true;
      obs.push_back({o.kf, o.feat});
      mean += o.x_world;
    }
    if (obs.size() < 2) continue;
    mean /= double(obs.size());
    (void)mean;
    // anchor at the first observation's exact surface point
    ms.map.add_point(cl.front().x_world, cl.front().desc, obs);
  }

  ms.last_kf_id = int(ms.kf_ts.size()) - 1;

  // small vocabulary trained on the map's own descriptors
  std::vector<Descriptor> corpus;
  for (const auto& [id, kf] : ms.map.keyframes()) {
    for (const auto& f : kf.features) corpus.push_back(f.descriptor);
  }
  ms.vocab = train_vocabulary(corpus, 8, 2, cfg.vocab_seed);
  return ms;
}

}  // namespace

TEST_CASE("recover_pose relocalizes a frame one unit from the last keyframe") {
  Config cfg;
  MappedScene ms = build_mapped_scene(cfg, 77);
  const RecoveryContext ctx = make_recovery_context(ms.map, ms.last_kf_id, cfg);
  REQUIRE(!ctx.points.empty());

  OrbitPath orbit;
  const double arc = 1.0 / (2.0 * M_PI * orbit.radius);  // one unit of travel
  Twist yaw = Twist::Zero();
  yaw[4] = 0.10;  // erratic attitude change on top of the jump
  const Pose T_true = se3_exp(yaw) * orbit.pose(ms.kf_ts.back() + arc);
  const Image img = render_frame(ms.scene, T_true, 99);
  const auto feats = detect_and_describe(img, 1200);

  const uint64_t hash_before = ms.map.state_hash();
  const RecoveryResult res = recover_pose(feats, ctx, ms.vocab, ms.scene.cam, cfg);
  CHECK(ms.map.state_hash() == hash_before);  // read-only on the snapshot

  CHECK((res.T_cw.translation - T_true.translation).norm() < 0.01);
  CHECK(rotation_geodesic(res.T_cw.rotation, T_true.rotation) < 0.5 * M_PI / 180.0);
  CHECK(int(res.inliers.size()) >= cfg.min_recovery_inliers);

  // the refinement must not be worse than its seed on the final inlier set
  std::map<int, Vec3> pos;
  for (const auto& sp : ctx.points) pos[sp.id] = sp.position;
  const auto rms_of = [&](const Pose& T) {
    double acc = 0;
    int n = 0;
    for (const auto& [pid, feat] : res.inliers) {
      Vec2 u;
      double depth;
      if (!project_checked(ms.scene.cam, T * pos.at(pid), u, depth)) continue;
      acc += (u - feats[size_t(feat)].px).squaredNorm();
      ++n;
    }
    return std::sqrt(acc / std::max(1, n));
  };
  CHECK(rms_of(res.T_cw) <= rms_of(res.T_initial) + 1e-9);
}

TEST_CASE("recover_pose is deterministic under a fixed seed") {
  Config cfg;
  MappedScene ms = build_mapped_scene(cfg, 78);
  const RecoveryContext ctx = make_recovery_context(ms.map, ms.last_kf_id, cfg);
  OrbitPath orbit;
  const Pose T_true = orbit.pose(ms.kf_ts.back() + 0.02);
  const Image img = render_frame(ms.scene, T_true, 98);
  const auto feats = detect_and_describe(img, 1200);

  const RecoveryResult a = recover_pose(feats, ctx, ms.vocab, ms.scene.cam, cfg);
  const RecoveryResult b = recover_pose(feats, ctx, ms.vocab, ms.scene.cam, cfg);
  CHECK(a.T_cw.translation == b.T_cw.translation);
  CHECK(a.T_cw.rotation.coeffs() == b.T_cw.rotation.coeffs());
  REQUIRE(a.inliers.size() == b.inliers.size());
  for (size_t i = 0; i < a.inliers.size(); ++i) {
    CHECK(a.inliers[i] == b.inliers[i]);
  }
}

TEST_CASE("recover_pose fails on a blank frame") {
  Config cfg;
  MappedScene ms = build_mapped_scene(cfg, 79);
  const RecoveryContext ctx = make_recovery_context(ms.map, ms.last_kf_id, cfg);
  const std::vector<Feature> none;
  CHECK_THROWS_AS(recover_pose(none, ctx, ms.vocab, ms.scene.cam, cfg), RecoveryFailed);
}

TEST_CASE("recover_pose fails on an unmapped scene") {
  Config cfg;
  MappedScene ms = build_mapped_scene(cfg, 80);
  const RecoveryContext ctx = make_recovery_context(ms.map, ms.last_kf_id, cfg);
  // a different scene entirely: no 3D-associated matches can form
  const SyntheticScene other = make_facing_scene(140, 12345, test::test_camera(), 2.2, 0.40);
  const Image img = render_frame(other, OrbitPath{}.pose(0.5), 97);
  const auto feats = detect_and_describe(img, 1200);
  CHECK_THROWS_AS(recover_pose(feats, ctx, ms.vocab, other.cam, cfg), RecoveryFailed);
}

TEST_CASE("skipping the EPnP stage loses the large-baseline case") {
  // seeding the guided window from the stale keyframe pose cannot bridge a
  // one-unit jump with the default window
  Config cfg;
  MappedScene ms = build_mapped_scene(cfg, 81);
  const RecoveryContext ctx = make_recovery_context(ms.map, ms.last_kf_id, cfg);
  OrbitPath orbit;
  const double arc = 1.0 / (2.0 * M_PI * orbit.radius);
  Twist yaw = Twist::Zero();
  yaw[4] = 0.10;
  const Pose T_true = se3_exp(yaw) * orbit.pose(ms.kf_ts.back() + arc);
  const Image img = render_frame(ms.scene, T_true, 96);
  const auto feats = detect_and_describe(img, 1200);

  const RecoveryResult with_epnp = recover_pose(feats, ctx, ms.vocab, ms.scene.cam, cfg);
  const double err_full = (with_epnp.T_cw.translation - T_true.translation).norm();
  CHECK(err_full < 0.01);

  // the ablation either starves outright or latches onto a spurious pose;
  // both outcomes document why the initial estimate matters
  bool failed = false;
  double err_ablated = 0.0;
  try {
    const RecoveryResult r = recover_pose_no_epnp(feats, ctx, ms.scene.cam, cfg);
    err_ablated = (r.T_cw.translation - T_true.translation).norm();
  } catch (const RecoveryFailed&) {
    failed = true;
  }
  CHECK((failed || err_ablated > 5.0 * err_full));
}
