#pragma once

#include <atomic>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <set>
#include <thread>
#include <vector>

#include "fdmo/config.h"
#include "fdmo/direct.h"
#include "fdmo/feature_map.h"
#include "fdmo/features.h"
#include "fdmo/geometry.h"
#include "fdmo/image.h"
#include "fdmo/recovery.h"

namespace fdmo {

enum class TrackerMode { kUninitialized, kTrackingDirect, kRecovering, kLost };

char mode_char(TrackerMode mode);

struct TrajectoryEntry {
  double timestamp = 0.0;
  Pose T_cw;
  TrackerMode mode = TrackerMode::kUninitialized;
};

/// One line per frame: "timestamp tx ty tz qx qy qz qw mode", camera-in-world
/// convention, fixed 9-decimal precision with trailing zeros trimmed.
void export_trajectory(const std::vector<TrajectoryEntry>& record, std::ostream& os);
std::vector<TrajectoryEntry> parse_trajectory(std::istream& is);

/// Two-view bootstrap: descriptor matching, essential-matrix RANSAC,
/// cheirality-checked decomposition, triangulation scaled to median depth 1.
/// Empty optional while parallax or matches are insufficient.
struct TwoViewInit {
  Pose T_21;                                 // second-frame pose, world = first frame
  std::vector<Vec3> points;                  // triangulated, median depth 1
  std::vector<std::pair<int, int>> matches;  // indices into (f1, f2)
};
std::optional<TwoViewInit> try_two_view_init(const std::vector<Feature>& f1,
                                             const std::vector<Feature>& f2,
                                             const PinholeCamera& cam, const Config& cfg);

struct PipelineStats {
  std::atomic<int> feature_extractions{0};  // counted after initialization
  std::atomic<int> keyframe_insertions{0};
  std::atomic<int> recovery_invocations{0};
  std::atomic<int> recovery_failures{0};
  std::atomic<int> divergences{0};
};

/// The frame-by-frame odometry orchestrator: constant-velocity seeding,
/// direct alignment, divergence detection, feature-based recovery, dual
/// keyframe insertion. Single-threaded unless parallel_mapping is set, in
/// which case the feature-side keyframe work runs on a worker thread (joined
/// before anything reads or writes the feature map).
class Pipeline {
 public:
  Pipeline(const PinholeCamera& cam, const Config& cfg);
  ~Pipeline();

  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  struct FrameResult {
    Pose T_cw;
    TrackerMode mode;
  };
  FrameResult process_frame(const Image& img, double timestamp);

  bool initialized() const { return mode_ != TrackerMode::kUninitialized; }
  bool lost() const { return mode_ == TrackerMode::kLost; }
  TrackerMode mode() const { return mode_; }

  const std::vector<TrajectoryEntry>& trajectory() const { return trajectory_; }
  const PipelineStats& stats() const { return stats_; }
  const Config& config() const { return cfg_; }

  /// Joins any outstanding feature-side work before exposing the map.
  const FeatureMap& feature_map();
  const DirectWindow& window() const { return window_; }
  Pose cvmm_velocity() const { return velocity_; }

 private:
  void finish_feature_work();
  bool try_initialize(const Image& img, double timestamp, Pyramid&& pyramid);
  void seed_maps(const TwoViewInit& init, const std::vector<Feature>& f1,
                 const std::vector<Feature>& f2, Pyramid&& pyr_anchor, Pyramid&& pyr_current);
  void insert_keyframe(Pyramid&& pyramid, const Image& image, const Pose& T_cw);
  void feature_side_insert(int kf_id, Pose T_cw, std::shared_ptr<const Image> image,
                           std::set<int> marginalized_snapshot);
  void transfer_depth_priors(DirectKeyframe& kf) const;
  std::vector<Feature> extract_features(const Image& img);

  PinholeCamera cam_;
  Config cfg_;
  Vocabulary vocab_;

  TrackerMode mode_ = TrackerMode::kUninitialized;
  Pose velocity_;          // relative transform between consecutive frames
  Pose T_last_;            // pose of the last successfully tracked frame
  int consecutive_recovery_failures_ = 0;
  int low_quality_streak_ = 0;

  DirectWindow window_;
  std::shared_ptr<DirectKeyframe> tracking_ref_;
  FeatureMap fmap_;
  std::set<int> marginalized_twins_;
  int next_kf_id_ = 0;

  // initialization state
  struct Anchor {
    Pyramid pyramid;
    std::vector<Feature> features;
    double timestamp = 0.0;
    int age = 0;
  };
  std::optional<Anchor> anchor_;

  std::vector<TrajectoryEntry> trajectory_;
  PipelineStats stats_;

  std::thread worker_;
  bool worker_active_ = false;
};

}  // namespace fdmo
