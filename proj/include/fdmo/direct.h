#pragma once

#include <array>
#include <iosfwd>
#include <memory>
#include <vector>

#include "fdmo/config.h"
#include "fdmo/geometry.h"
#include "fdmo/image.h"

namespace fdmo {

enum class PointStatus { kCandidate, kActive, kMarginalized, kOutlier };

/// Residual pattern offsets around a host pixel, in level-l pixel units.
constexpr int kPatternSize = 8;
constexpr std::array<std::array<int, 2>, kPatternSize> kPattern = {
    {{0, 0}, {1, 0}, {-1, 0}, {0, 1}, {0, -1}, {2, 0}, {-2, 0}, {0, -2}}};

struct DirectPoint {
  Vec2 uv;            // host pixel, level-0 coordinates
  int level = 0;      // selection level
  double inv_depth = 0.1;
  double variance = 1.0;
  std::array<double, kPatternSize> pattern{};  // host intensities at level 0
  PointStatus status = PointStatus::kCandidate;
  int miss_count = 0;
};

struct DirectKeyframe {
  int id = 0;
  Pose T_cw;           // world-to-camera
  Pyramid pyramid;
  double a = 0.0, b = 0.0;  // affine brightness
  std::vector<DirectPoint> points;

  int count(PointStatus s) const;
};

using DirectWindow = std::vector<std::shared_ptr<DirectKeyframe>>;

struct AlignmentReport {
  Pose T_frame_kf;            // optimized frame-from-keyframe transform
  double rmse_before = 0.0;   // gray levels, finest level, at T_init
  double rmse_after = 0.0;    // gray levels, finest level, at the optimum
  double inlier_fraction = 0.0;
  bool diverged = false;
  double a = 0.0, b = 0.0;    // affine brightness relative to the keyframe
  double mean_flow_px = 0.0;  // mean |warped - host| of valid points, level 0
  int n_valid = 0;
};

/// RMSE-ratio divergence test: true iff rmse_after / rmse_before > 1 + eps.
/// A zero rmse_before cannot meaningfully worsen and reports false (logged).
bool detect_divergence(double rmse_before, double rmse_after, double epsilon);

/// One pattern sample of the photometric residual between a host point's
/// cached intensity and a target keyframe, with analytic Jacobians w.r.t.
/// both poses (left-multiplied twist), both affine pairs and the host
/// inverse depth. Returns false when the warp leaves the target image.
struct PhotoSample {
  double r = 0.0;
  Eigen::Matrix<double, 8, 1> j_target = Eigen::Matrix<double, 8, 1>::Zero();  // twist, a, b
  Eigen::Matrix<double, 8, 1> j_host = Eigen::Matrix<double, 8, 1>::Zero();
  double j_rho = 0.0;
};
bool photometric_sample(const DirectKeyframe& host, int point_index, int pattern_index,
                        const DirectKeyframe& target, bool with_jacobians, PhotoSample& out);

/// Coarse-to-fine Gauss-Newton photometric alignment of `frame` against a
/// reference keyframe, Huber-weighted, with affine brightness as nuisance
/// parameters. The pose is returned even when the diverged flag is set.
/// Throws TooFewPoints / NumericalFailure.
AlignmentReport track_frame(const Pyramid& frame, const DirectKeyframe& ref, const Pose& T_init,
                            const Config& cfg);

/// Discrete epipolar-line search within +-2 sigma of each candidate point's
/// inverse depth, followed by a Gaussian fusion of the observation. Points
/// that miss repeatedly are flagged outliers. (a, b) are the frame's affine
/// brightness parameters relative to the keyframe.
void update_depth_filters(DirectKeyframe& kf, const Pyramid& frame, const Pose& T_frame_kf,
                          const Config& cfg, double a = 0.0, double b = 0.0);

struct BaReport {
  double initial_cost = 0.0;
  double final_cost = 0.0;
  int iterations = 0;
  std::vector<double> accepted_costs;  // after each accepted step
};

/// Windowed photometric bundle adjustment (joint poses, affine pairs and
/// inverse depths). The first keyframe and the mean inverse depth are held
/// fixed. Throws NumericalFailure on a rank-deficient system; the window is
/// left untouched in that case.
BaReport photometric_bundle_adjust(DirectWindow& window, const Config& cfg);

/// Keyframe-need rule: mean flow, inlier fraction or brightness change.
bool need_new_keyframe(const AlignmentReport& report, double mean_flow_px,
                       double brightness_change, const Config& cfg);

/// Removes the keyframe whose removal maximizes the pairwise pose spread of
/// the remainder (latest two always kept). Its points become marginalized.
/// No-op returning -1 while the window is within its bound.
int marginalize_keyframe(DirectWindow& window, const Config& cfg);

/// Promote converged candidates to active until the map-wide cap is filled.
void activate_points(DirectWindow& window, const Config& cfg);

/// Tracking reference for the newest keyframe: every active point of the
/// window re-anchored (projected and re-sampled) in the newest keyframe's
/// image. Frame-to-frame alignment runs against this, so the tracker sees
/// the whole window's structure regardless of which keyframe hosts it.
std::shared_ptr<DirectKeyframe> build_tracking_reference(const DirectWindow& window,
                                                         const Config& cfg);

/// Build a keyframe: select candidates, cache pattern intensities. Inverse
/// depths start at `prior_inv_depth` with a weak prior variance.
std::shared_ptr<DirectKeyframe> create_direct_keyframe(int id, Pyramid pyramid, const Pose& T_cw,
                                                       const Config& cfg,
                                                       double prior_inv_depth = 0.5);

int total_active_points(const DirectWindow& window);

/// Diagnostic dump: one line per point "host-kf u v inv_depth variance status".
void dump_window(const DirectWindow& window, std::ostream& os);

}  // namespace fdmo
