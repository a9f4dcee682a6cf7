#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <vector>

#include "fdmo/config.h"
#include "fdmo/features.h"
#include "fdmo/geometry.h"

namespace fdmo {

struct FeatureKeyframe {
  int id = 0;
  int seq = 0;   // insertion order, drives the survival window
  Pose T_cw;     // inherited from the direct twin after its window BA
  std::vector<Feature> features;
  std::vector<int> observations;  // feature index -> map point id, -1 if none

  int observation_count() const;
};

struct MapPoint {
  int id = 0;
  Vec3 position = Vec3::Zero();
  Descriptor descriptor{};                // representative (first observation)
  std::map<int, int> observations;        // keyframe id -> feature index
  int first_seq = 0;                      // seq of the first observing keyframe
  bool outlier = false;
  bool survival_checked = false;          // 4-of-7 window already evaluated
};

/// Symmetric covisibility weights: shared map point counts per keyframe pair.
class CovisibilityGraph {
 public:
  void add_shared(int kf_a, int kf_b, int delta);
  void remove_keyframe(int kf);
  int weight(int kf_a, int kf_b) const;
  /// Top-n neighbors by weight, ties broken newest-id-first.
  std::vector<int> neighbors(int kf, int n) const;
  bool symmetric() const;

 private:
  std::map<int, std::map<int, int>> adj_;
};

/// Feature pairs consistent with the epipolar geometry of the two views:
/// candidates within `band_px` of the epipolar line, Hamming-ratio matched,
/// checked against both line directions. Empty for degenerate baselines.
std::vector<Match> epipolar_search_match(const FeatureKeyframe& kf1, const FeatureKeyframe& kf2,
                                         const PinholeCamera& cam, const Config& cfg,
                                         const std::vector<bool>* kf1_used = nullptr,
                                         const std::vector<bool>* kf2_used = nullptr);

/// Two-view triangulation by the midpoint of the common perpendicular.
/// Throws InsufficientParallax when baseline / median_scene_depth < gate,
/// RaysDiverge for negative ray parameters, BehindCamera when the point
/// falls behind either camera.
Vec3 triangulate(const Vec2& x1, const Vec2& x2, const Pose& T1_cw, const Pose& T2_cw,
                 const PinholeCamera& cam, double median_scene_depth,
                 double parallax_gate = 0.02);

/// The feature-based map: keyframes, points, covisibility, maintenance.
class FeatureMap {
 public:
  explicit FeatureMap(const Config& cfg) : cfg_(cfg) {}

  /// Insert a keyframe shell (features already extracted). The id is shared
  /// with the direct twin. Returns the assigned insertion sequence number.
  int add_keyframe(int id, const Pose& T_cw, std::vector<Feature> features);

  /// Create a new triangulated point observed by (kf, feature) pairs.
  int add_point(const Vec3& position, const Descriptor& descriptor,
                const std::vector<std::pair<int, int>>& obs);

  /// Record that keyframe `kf` sees `point` at feature index `feat`.
  void add_observation(int kf, int feat, int point);

  /// Structure-only bundle adjustment over the given keyframes' points.
  /// Poses are never touched. Points whose mean reprojection error exceeds
  /// the outlier threshold after optimization are flagged.
  void structure_only_ba(const std::vector<int>& kf_ids, const PinholeCamera& cam,
                         int max_iters = 10);

  /// Map maintenance: survival rule, grace window, redundant-keyframe cull.
  /// `marginalized_twins` are direct keyframe ids already marginalized from
  /// the direct window (feature keyframes share ids with their twins).
  void maintain(const std::set<int>& marginalized_twins);

  std::vector<int> covisible_neighbors(int kf, int n) const;

  const std::map<int, FeatureKeyframe>& keyframes() const { return keyframes_; }
  const std::map<int, MapPoint>& points() const { return points_; }
  const CovisibilityGraph& graph() const { return graph_; }
  FeatureKeyframe& keyframe(int id) { return keyframes_.at(id); }
  const FeatureKeyframe& keyframe(int id) const { return keyframes_.at(id); }
  const MapPoint& point(int id) const { return points_.at(id); }
  MapPoint& point(int id) { return points_.at(id); }
  bool has_keyframe(int id) const { return keyframes_.count(id) > 0; }

  /// Median depth of kf's observed points in its camera frame (parallax
  /// proxy for the triangulation gate). Empty optional if no points.
  std::optional<double> median_observed_depth(int kf) const;

  /// Referential integrity: observations point at live entities, triangulated
  /// points hold >= 2 observations, the graph is symmetric.
  bool check_integrity() const;

  /// FNV-1a over poses, positions and observation lists; recovery must not
  /// change this.
  uint64_t state_hash() const;

  /// "POINT id x y z n_obs" / "KF id tx ty tz qx qy qz qw n_feat" lines.
  void dump(std::ostream& os) const;

 private:
  void remove_point(int id);
  void remove_keyframe_internal(int id);

  Config cfg_;
  std::map<int, FeatureKeyframe> keyframes_;
  std::map<int, MapPoint> points_;
  CovisibilityGraph graph_;
  int next_point_id_ = 0;
  int next_seq_ = 0;
};

}  // namespace fdmo
