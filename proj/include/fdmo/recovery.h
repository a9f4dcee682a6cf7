#pragma once

#include <map>
#include <vector>

#include "fdmo/config.h"
#include "fdmo/feature_map.h"
#include "fdmo/features.h"
#include "fdmo/geometry.h"

namespace fdmo {

/// Closed-form EPnP: pose from >= 4 3D-2D correspondences via 4 control
/// points and barycentric coordinates (3 control points for planar sets).
/// Throws TooFewCorrespondences / DegenerateConfiguration.
Pose epnp(const std::vector<Vec3>& points3d, const std::vector<Vec2>& points2d,
          const PinholeCamera& cam);

/// Gauss-Newton on the Huber-weighted reprojection error over the 6-DoF pose,
/// poses of points fixed. Throws Underconstrained (< 6 matches) or
/// NumericalFailure.
Pose refine_pose_geometric(const std::vector<std::pair<Vec3, Vec2>>& matches, const Pose& T_init,
                           const PinholeCamera& cam, const Config& cfg, int max_iters = 10);

/// Everything recovery may read: a snapshot of the neighborhood of the last
/// successfully added keyframe. Holding it keeps recovery read-only on the
/// live map.
struct RecoveryContext {
  int last_kf_id = -1;
  Pose last_kf_pose;
  std::vector<int> neighbor_ids;  // <= 10, from the covisibility graph

  struct SnapshotPoint {
    int id;
    Vec3 position;
    Descriptor descriptor;
  };
  std::vector<SnapshotPoint> points;                 // union over the neighbors
  std::map<int, std::vector<Descriptor>> kf_descriptors;  // 3D-associated features
  std::map<int, std::vector<int>> kf_point_ids;            // parallel point ids
};

RecoveryContext make_recovery_context(const FeatureMap& map, int last_kf_id, const Config& cfg);

struct RecoveryResult {
  Pose T_cw;
  Pose T_initial;  // the pose the guided stage started from (diagnostics)
  std::vector<std::pair<int, int>> inliers;  // (map point id, frame feature index)
};

/// Feature-based tracking recovery: blind vocabulary matching against the
/// neighbor keyframes, RANSAC-EPnP on the pooled 3D-2D pairs, guided
/// re-matching of all snapshot points through the estimated pose, geometric
/// refinement. Throws RecoveryFailed when any stage starves.
RecoveryResult recover_pose(const std::vector<Feature>& frame_features,
                            const RecoveryContext& ctx, const Vocabulary& vocab,
                            const PinholeCamera& cam, const Config& cfg);

/// Ablated variant used by the regression test: skip EPnP and seed the guided
/// window from the last keyframe pose directly.
RecoveryResult recover_pose_no_epnp(const std::vector<Feature>& frame_features,
                                    const RecoveryContext& ctx, const PinholeCamera& cam,
                                    const Config& cfg);

/// Relative transform handed to the direct tracker as its seed:
/// applying it to the last keyframe pose reproduces the recovered pose.
Pose seed_direct_realignment(const Pose& T_recovered, const Pose& last_kf_pose);

}  // namespace fdmo
