#include "fdmo/pipeline.h"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "fdmo/errors.h"
#include "fdmo/log.h"
#include "fdmo/rng.h"

namespace fdmo {

char mode_char(TrackerMode mode) {
  switch (mode) {
    case TrackerMode::kUninitialized: return 'U';
    case TrackerMode::kTrackingDirect: return 'T';
    case TrackerMode::kRecovering: return 'R';
    case TrackerMode::kLost: return 'L';
  }
  return '?';
}

namespace {

TrackerMode mode_from_char(char c) {
  switch (c) {
    case 'U': return TrackerMode::kUninitialized;
    case 'T': return TrackerMode::kTrackingDirect;
    case 'R': return TrackerMode::kRecovering;
    case 'L': return TrackerMode::kLost;
  }
  throw FdmoError(std::string("parse_trajectory: unknown mode flag '") + c + "'");
}

// fixed 9-decimal, trailing zeros trimmed ("0.000000000" -> "0")
std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9f", v);
  std::string s(buf);
  if (s.find('.') != std::string::npos) {
    while (s.back() == '0') s.pop_back();
    if (s.back() == '.') s.pop_back();
  }
  if (s == "-0") s = "0";
  return s;
}

}  // namespace

void export_trajectory(const std::vector<TrajectoryEntry>& record, std::ostream& os) {
  char ts[64];
  for (const TrajectoryEntry& e : record) {
    std::snprintf(ts, sizeof(ts), "%.9f", e.timestamp);
    const Pose T_wc = e.T_cw.inverse();
    const Quat& q = T_wc.rotation;
    os << ts << " " << format_value(T_wc.translation.x()) << " "
       << format_value(T_wc.translation.y()) << " " << format_value(T_wc.translation.z()) << " "
       << format_value(q.x()) << " " << format_value(q.y()) << " " << format_value(q.z()) << " "
       << format_value(q.w()) << " " << mode_char(e.mode) << "\n";
  }
}

std::vector<TrajectoryEntry> parse_trajectory(std::istream& is) {
  std::vector<TrajectoryEntry> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ss(line);
    double t, tx, ty, tz, qx, qy, qz, qw;
    char mode;
    if (!(ss >> t >> tx >> ty >> tz >> qx >> qy >> qz >> qw >> mode)) {
      throw FdmoError("parse_trajectory: malformed line: " + line);
    }
    TrajectoryEntry e;
    e.timestamp = t;
    const Pose T_wc(Quat(qw, qx, qy, qz), Vec3(tx, ty, tz));
    e.T_cw = T_wc.inverse();
    e.mode = mode_from_char(mode);
    out.push_back(e);
  }
  return out;
}

// ---------------------------------------------------------------------------
// two-view initialization

namespace {

Mat3 essential_from_eight(const std::vector<Vec3>& x1, const std::vector<Vec3>& x2,
                          const std::vector<int>& idx) {
  Eigen::Matrix<double, Eigen::Dynamic, 9> A(idx.size(), 9);
  for (size_t r = 0; r < idx.size(); ++r) {
    const Vec3& a = x1[size_t(idx[r])];
    const Vec3& b = x2[size_t(idx[r])];
    A.row(long(r)) << b.x() * a.x(), b.x() * a.y(), b.x(), b.y() * a.x(), b.y() * a.y(), b.y(),
        a.x(), a.y(), 1.0;
  }
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(A, Eigen::ComputeFullV);
  const Eigen::Matrix<double, 9, 1> e = svd.matrixV().col(8);
  Mat3 E;
  E << e[0], e[1], e[2], e[3], e[4], e[5], e[6], e[7], e[8];
  // project onto the essential manifold
  Eigen::JacobiSVD<Mat3> esvd(E, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Vec3 s = esvd.singularValues();
  const double m = 0.5 * (s[0] + s[1]);
  return esvd.matrixU() * Eigen::DiagonalMatrix<double, 3>(m, m, 0.0) *
         esvd.matrixV().transpose();
}

double sampson_error(const Mat3& E, const Vec3& x1, const Vec3& x2) {
  const Vec3 Ex1 = E * x1;
  const Vec3 Etx2 = E.transpose() * x2;
  const double num = x2.dot(Ex1);
  const double den = Ex1.head<2>().squaredNorm() + Etx2.head<2>().squaredNorm();
  return den > 1e-18 ? num * num / den : 1e18;
}

// midpoint triangulation in the first camera's frame; T_21 maps 1 -> 2
bool midpoint_depths(const Vec3& x1, const Vec3& x2, const Pose& T_21, Vec3& X, double& z1,
                     double& z2) {
  const Vec3 c2 = -(T_21.rotation.conjugate() * T_21.translation);
  const Vec3 w1 = x1;
  const Vec3 w2 = T_21.rotation.conjugate() * x2;
  const double a = w1.dot(w1), b = w1.dot(w2), c = w2.dot(w2);
  const double d = w1.dot(c2), e = w2.dot(c2);
  const double denom = a * c - b * b;
  if (denom < 1e-12 * a * c) return false;
  const double s = (c * d - b * e) / denom;
  const double t = (b * d - a * e) / denom;
  if (s <= 0 || t <= 0) return false;
  X = 0.5 * (s * w1 + c2 + t * w2);
  z1 = X.z();
  z2 = (T_21 * X).z();
  return z1 > kDefaultDepthMin && z2 > kDefaultDepthMin;
}

}  // namespace

std::optional<TwoViewInit> try_two_view_init(const std::vector<Feature>& f1,
                                             const std::vector<Feature>& f2,
                                             const PinholeCamera& cam, const Config& cfg) {
  const auto matches = match_descriptors(descriptors_of(f1), descriptors_of(f2),
                                         cfg.match_max_distance, cfg.match_ratio);
  if (int(matches.size()) < cfg.init_min_matches) return std::nullopt;

  double displacement = 0.0;
  for (const Match& m : matches) {
    displacement += (f1[size_t(m.a)].px - f2[size_t(m.b)].px).norm();
  }
  displacement /= double(matches.size());
  if (displacement < cfg.init_min_displacement_px) return std::nullopt;

  std::vector<Vec3> x1, x2;
  for (const Match& m : matches) {
    x1.push_back(cam.ray(f1[size_t(m.a)].px));
    x2.push_back(cam.ray(f2[size_t(m.b)].px));
  }
  const int n = int(matches.size());
  const double thresh = 1.5 / cam.fx;  // ~1.5 px in normalized units
  const double thresh2 = thresh * thresh;

  Rng rng(cfg.ransac_seed ^ 0x7177ull);
  Mat3 best_E;
  std::vector<int> best_inliers;
  for (int iter = 0; iter < 200; ++iter) {
    std::vector<int> sample;
    while (int(sample.size()) < 8) {
      const int k = int(rng.uniform_int(uint64_t(n)));
      if (std::find(sample.begin(), sample.end(), k) == sample.end()) sample.push_back(k);
    }
    const Mat3 E = essential_from_eight(x1, x2, sample);
    std::vector<int> inliers;
    for (int i = 0; i < n; ++i) {
      if (sampson_error(E, x1[size_t(i)], x2[size_t(i)]) < thresh2) inliers.push_back(i);
    }
    if (inliers.size() > best_inliers.size()) {
      best_inliers = std::move(inliers);
      best_E = E;
      if (double(best_inliers.size()) > 0.9 * double(n)) break;
    }
  }
  if (int(best_inliers.size()) < cfg.init_min_matches) return std::nullopt;

  // refit on the consensus and decompose
  best_E = essential_from_eight(x1, x2, best_inliers);
  Eigen::JacobiSVD<Mat3> svd(best_E, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 U = svd.matrixU();
  Mat3 V = svd.matrixV();
  if (U.determinant() < 0) U.col(2) *= -1;
  if (V.determinant() < 0) V.col(2) *= -1;
  Mat3 W;
  W << 0, -1, 0, 1, 0, 0, 0, 0, 1;
  const Mat3 R1 = U * W * V.transpose();
  const Mat3 R2 = U * W.transpose() * V.transpose();
  const Vec3 t = U.col(2).normalized();

  const Pose candidates[4] = {Pose(R1, t), Pose(R1, -t), Pose(R2, t), Pose(R2, -t)};
  int best_cand = -1;
  int best_count = 0;
  for (int c = 0; c < 4; ++c) {
    int count = 0;
    for (int i : best_inliers) {
      Vec3 X;
      double z1, z2;
      if (midpoint_depths(x1[size_t(i)], x2[size_t(i)], candidates[c], X, z1, z2)) ++count;
    }
    if (count > best_count) {
      best_count = count;
      best_cand = c;
    }
  }
  if (best_cand < 0 || double(best_count) < 0.8 * double(best_inliers.size()) ||
      best_count < cfg.init_min_matches) {
    return std::nullopt;
  }

  TwoViewInit init;
  init.T_21 = candidates[best_cand];
  std::vector<double> depths;
  for (int i : best_inliers) {
    Vec3 X;
    double z1, z2;
    if (!midpoint_depths(x1[size_t(i)], x2[size_t(i)], init.T_21, X, z1, z2)) continue;
    init.points.push_back(X);
    init.matches.push_back({matches[size_t(i)].a, matches[size_t(i)].b});
    depths.push_back(z1);
  }
  if (int(init.points.size()) < cfg.init_min_matches) return std::nullopt;

  // monocular gauge: median depth = 1
  std::vector<double> sorted = depths;
  auto mid = sorted.begin() + long(sorted.size() / 2);
  std::nth_element(sorted.begin(), mid, sorted.end());
  const double scale = *mid;
  for (Vec3& X : init.points) X /= scale;
  init.T_21.translation /= scale;
  return init;
}

// ---------------------------------------------------------------------------
// pipeline

Pipeline::Pipeline(const PinholeCamera& cam, const Config& cfg)
    : cam_(cam), cfg_(cfg), fmap_(cfg) {
  if (!cfg_.vocabulary_path.empty()) {
    vocab_ = Vocabulary::load(cfg_.vocabulary_path);
  } else {
    log_info("pipeline: no vocabulary configured, blind matching falls back to brute force");
  }
}

Pipeline::~Pipeline() { finish_feature_work(); }

void Pipeline::finish_feature_work() {
  if (worker_active_) {
    worker_.join();
    worker_active_ = false;
  }
}

const FeatureMap& Pipeline::feature_map() {
  finish_feature_work();
  return fmap_;
}

std::vector<Feature> Pipeline::extract_features(const Image& img) {
  stats_.feature_extractions.fetch_add(1);
  DetectorParams params;
  params.threshold = cfg_.fast_threshold;
  params.arc_length = cfg_.fast_arc_length;
  params.octaves = cfg_.feature_octaves;
  params.scale_factor = cfg_.feature_scale_factor;
  return detect_and_describe(img, cfg_.n_features, params);
}

void Pipeline::transfer_depth_priors(DirectKeyframe& kf) const {
  // project the window's active points into the new keyframe and hand each
  // candidate the inverse depth of its nearest projected neighbor
  struct Transfer {
    Vec2 px;
    double inv_depth;
  };
  std::vector<Transfer> transfers;
  std::vector<double> inv_depths;
  for (const auto& host : window_) {
    const Pose T_rel = kf.T_cw * host->T_cw.inverse();
    for (const DirectPoint& p : host->points) {
      if (p.status != PointStatus::kActive) continue;
      const Vec3 p_new = T_rel * backproject(cam_, p.uv, p.inv_depth);
      Vec2 u;
      double depth;
      if (!project_checked(cam_, p_new, u, depth)) continue;
      if (!cam_.in_image(u, 2.0)) continue;
      transfers.push_back(Transfer{u, 1.0 / depth});
      inv_depths.push_back(1.0 / depth);
    }
  }
  double median_rho = 0.5;
  if (!inv_depths.empty()) {
    auto mid = inv_depths.begin() + long(inv_depths.size() / 2);
    std::nth_element(inv_depths.begin(), mid, inv_depths.end());
    median_rho = *mid;
  }

  for (DirectPoint& p : kf.points) {
    double best_d = 20.0;
    const Transfer* best = nullptr;
    for (const Transfer& t : transfers) {
      const double d = (t.px - p.uv).norm();
      if (d < best_d) {
        best_d = d;
        best = &t;
      }
    }
    if (best) {
      p.inv_depth = best->inv_depth;
      p.variance = (0.35 * p.inv_depth) * (0.35 * p.inv_depth);
    } else {
      p.inv_depth = median_rho;
      p.variance = (0.75 * p.inv_depth) * (0.75 * p.inv_depth);
    }
  }
}

bool Pipeline::try_initialize(const Image& img, double timestamp, Pyramid&& pyramid) {
  if (!anchor_) {
    Anchor a;
    a.features = extract_features(img);
    a.pyramid = std::move(pyramid);
    a.timestamp = timestamp;
    anchor_ = std::move(a);
    return false;
  }
  anchor_->age += 1;
  std::vector<Feature> features = extract_features(img);
  const auto init = try_two_view_init(anchor_->features, features, cam_, cfg_);
  if (!init) {
    if (anchor_->age > 30) {
      // stale anchor: restart from the current frame
      Anchor a;
      a.features = std::move(features);
      a.pyramid = std::move(pyramid);
      a.timestamp = timestamp;
      anchor_ = std::move(a);
    }
    return false;
  }
  seed_maps(*init, anchor_->features, features, std::move(anchor_->pyramid),
            std::move(pyramid));
  anchor_.reset();
  return true;
}

void Pipeline::seed_maps(const TwoViewInit& init, const std::vector<Feature>& f1,
                         const std::vector<Feature>& f2, Pyramid&& pyr_anchor,
                         Pyramid&& pyr_current) {
  auto kf0 = create_direct_keyframe(next_kf_id_++, std::move(pyr_anchor), Pose(), cfg_);
  auto kf1 = create_direct_keyframe(next_kf_id_++, std::move(pyr_current), init.T_21, cfg_);

  // depth priors from the triangulated features (nearest within 20 px)
  const auto seed_depths = [&](DirectKeyframe& kf, bool second) {
    std::vector<double> rhos;
    for (DirectPoint& p : kf.points) {
      double best_d = 20.0;
      double rho = -1.0;
      for (size_t m = 0; m < init.points.size(); ++m) {
        const Vec2& px = second ? f2[size_t(init.matches[m].second)].px
                                : f1[size_t(init.matches[m].first)].px;
        const double d = (px - p.uv).norm();
        if (d < best_d) {
          const double z = second ? (init.T_21 * init.points[m]).z() : init.points[m].z();
          if (z > kDefaultDepthMin) {
            best_d = d;
            rho = 1.0 / z;
          }
        }
      }
      if (rho > 0) {
        p.inv_depth = rho;
        p.variance = (0.25 * rho) * (0.25 * rho);
        rhos.push_back(rho);
      } else {
        p.inv_depth = -1.0;  // fill from the median below
      }
    }
    double median = 1.0;
    if (!rhos.empty()) {
      auto mid = rhos.begin() + long(rhos.size() / 2);
      std::nth_element(rhos.begin(), mid, rhos.end());
      median = *mid;
    }
    for (DirectPoint& p : kf.points) {
      if (p.inv_depth <= 0) {
        p.inv_depth = median;
        p.variance = (0.75 * median) * (0.75 * median);
      }
    }
  };
  seed_depths(*kf0, false);
  seed_depths(*kf1, true);

  window_.push_back(kf0);
  window_.push_back(kf1);
  activate_points(window_, cfg_);
  try {
    photometric_bundle_adjust(window_, cfg_);
  } catch (const NumericalFailure&) {
    log_warn("pipeline: initialization bundle adjustment failed, keeping raw two-view result");
  }

  // feature keyframes inherit the optimized poses
  fmap_.add_keyframe(kf0->id, kf0->T_cw, f1);
  fmap_.add_keyframe(kf1->id, kf1->T_cw, f2);
  for (size_t m = 0; m < init.points.size(); ++m) {
    fmap_.add_point(init.points[m], f1[size_t(init.matches[m].first)].descriptor,
                    {{kf0->id, init.matches[m].first}, {kf1->id, init.matches[m].second}});
  }
  fmap_.structure_only_ba({kf0->id, kf1->id}, cam_, cfg_.soba_iterations);

  T_last_ = kf1->T_cw;
  velocity_ = Pose();
  mode_ = TrackerMode::kTrackingDirect;
  tracking_ref_ = build_tracking_reference(window_, cfg_);

  // frame-rate efficiency accounting starts once the system is live
  stats_.feature_extractions.store(0);
  stats_.keyframe_insertions.store(0);
  stats_.recovery_invocations.store(0);
}

void Pipeline::feature_side_insert(int kf_id, Pose T_cw, std::shared_ptr<const Image> image,
                                   std::set<int> marginalized_snapshot) {
  std::vector<Feature> features = extract_features(*image);
  const int prev_kf = kf_id - 1;
  std::vector<int> local;  // kappa'_f: previous keyframe plus its covisible set
  if (fmap_.has_keyframe(prev_kf)) {
    local.push_back(prev_kf);
    for (int n : fmap_.covisible_neighbors(prev_kf, cfg_.covisible_neighbors)) {
      if (fmap_.has_keyframe(n)) local.push_back(n);
    }
  }
  fmap_.add_keyframe(kf_id, T_cw, std::move(features));
  FeatureKeyframe& kf = fmap_.keyframe(kf_id);

  std::vector<bool> used_new(kf.features.size(), false);
  struct TriCandidate {
    int feat_new;
    int other_kf;
    int feat_other;
  };
  std::vector<TriCandidate> tri;

  for (int other_id : local) {
    const FeatureKeyframe& other = fmap_.keyframe(other_id);
    const auto matches = epipolar_search_match(kf, other, cam_, cfg_, &used_new, nullptr);
    for (const Match& m : matches) {
      if (used_new[size_t(m.a)]) continue;
      const int pid = other.observations[size_t(m.b)];
      if (pid >= 0 && !fmap_.point(pid).outlier) {
        fmap_.add_observation(kf_id, m.a, pid);
        used_new[size_t(m.a)] = true;
      } else if (pid < 0) {
        tri.push_back(TriCandidate{m.a, other_id, m.b});
        used_new[size_t(m.a)] = true;
      }
    }
  }

  // triangulate fresh candidates against their matched keyframes
  for (const TriCandidate& c : tri) {
    const FeatureKeyframe& other = fmap_.keyframe(c.other_kf);
    if (other.observations[size_t(c.feat_other)] >= 0) continue;
    if (kf.observations[size_t(c.feat_new)] >= 0) continue;
    auto median = fmap_.median_observed_depth(c.other_kf);
    if (!median) median = fmap_.median_observed_depth(kf_id);
    if (!median) continue;
    try {
      const Vec3 X = triangulate(kf.features[size_t(c.feat_new)].px,
                                 other.features[size_t(c.feat_other)].px, kf.T_cw, other.T_cw,
                                 cam_, *median, cfg_.parallax_gate);
      const Vec2 r1 = project(cam_, kf.T_cw, X).px;
      const Vec2 r2 = project(cam_, other.T_cw, X).px;
      if ((r1 - kf.features[size_t(c.feat_new)].px).norm() > 2.0) continue;
      if ((r2 - other.features[size_t(c.feat_other)].px).norm() > 2.0) continue;
      fmap_.add_point(X, kf.features[size_t(c.feat_new)].descriptor,
                      {{kf_id, c.feat_new}, {c.other_kf, c.feat_other}});
    } catch (const FdmoError&) {
      continue;
    }
  }

  std::vector<int> soba_set{kf_id};
  for (int id : local) soba_set.push_back(id);
  fmap_.structure_only_ba(soba_set, cam_, cfg_.soba_iterations);
  fmap_.maintain(marginalized_snapshot);
}

void Pipeline::insert_keyframe(Pyramid&& pyramid, const Image& image, const Pose& T_cw) {
  finish_feature_work();

  auto kf = create_direct_keyframe(next_kf_id_++, std::move(pyramid), T_cw, cfg_);
  transfer_depth_priors(*kf);
  window_.push_back(kf);
  activate_points(window_, cfg_);
  try {
    photometric_bundle_adjust(window_, cfg_);
  } catch (const NumericalFailure&) {
    log_warn("pipeline: window bundle adjustment failed, keeping pre-step state");
  }
  T_last_ = kf->T_cw;  // the tracked frame is this keyframe

  auto image_copy = std::make_shared<const Image>(image);
  std::set<int> marg_snapshot = marginalized_twins_;
  const int kf_id = kf->id;
  const Pose kf_pose = kf->T_cw;

  if (cfg_.parallel_mapping && !cfg_.deterministic) {
    worker_ = std::thread([this, kf_id, kf_pose, image_copy, marg_snapshot] {
      feature_side_insert(kf_id, kf_pose, image_copy, marg_snapshot);
    });
    worker_active_ = true;
  } else {
    feature_side_insert(kf_id, kf_pose, image_copy, marg_snapshot);
  }

  const int removed = marginalize_keyframe(window_, cfg_);
  if (removed >= 0) marginalized_twins_.insert(removed);
  tracking_ref_ = build_tracking_reference(window_, cfg_);
  stats_.keyframe_insertions.fetch_add(1);
}

Pipeline::FrameResult Pipeline::process_frame(const Image& img, double timestamp) {
  if (mode_ == TrackerMode::kLost) {
    trajectory_.push_back({timestamp, T_last_, TrackerMode::kLost});
    return {T_last_, TrackerMode::kLost};
  }

  Pyramid pyramid = build_pyramid(img, cam_, cfg_.pyramid_levels);

  if (mode_ == TrackerMode::kUninitialized) {
    const bool done = try_initialize(img, timestamp, std::move(pyramid));
    const Pose pose = done ? T_last_ : Pose();
    const TrackerMode mode = done ? TrackerMode::kTrackingDirect : TrackerMode::kUninitialized;
    trajectory_.push_back({timestamp, pose, mode});
    return {pose, mode};
  }

  DirectKeyframe& ref = *tracking_ref_;
  const Pose T_pred = velocity_ * T_last_;
  const Pose seed_rel = T_pred * ref.T_cw.inverse();

  AlignmentReport report;
  bool track_failed = false;
  try {
    report = track_frame(pyramid, ref, seed_rel, cfg_);
  } catch (const FdmoError& e) {
    log_warn(std::string("pipeline: tracking failed outright: ") + e.what());
    track_failed = true;
    report.diverged = true;
  }

  // the RMSE-ratio test catches a worsening optimization; a frame the
  // tracker cannot explain at all (noise, total occlusion) keeps its ratio
  // near one, so treat a collapsed inlier fraction as failure too
  const bool tracking_failure = report.diverged || report.inlier_fraction < 0.25;

  bool recovered_this_frame = false;
  if (tracking_failure) {
    stats_.divergences.fetch_add(1);
    if (cfg_.enable_recovery) {
      finish_feature_work();
      stats_.recovery_invocations.fetch_add(1);
      const int last_kf_id = window_.back()->id;
      bool ok = false;
      try {
        const std::vector<Feature> features = extract_features(img);
        const RecoveryContext ctx = make_recovery_context(fmap_, last_kf_id, cfg_);
        const RecoveryResult res = recover_pose(features, ctx, vocab_, cam_, cfg_);
        const Pose re_seed = seed_direct_realignment(res.T_cw, ref.T_cw);
        AlignmentReport retry = track_frame(pyramid, ref, re_seed, cfg_);
        if (!retry.diverged) {
          report = retry;
          ok = true;
        }
      } catch (const FdmoError&) {
        ok = false;
      }
      if (ok) {
        recovered_this_frame = true;
      } else {
        stats_.recovery_failures.fetch_add(1);
        if (++consecutive_recovery_failures_ >= cfg_.lost_after_failures) {
          mode_ = TrackerMode::kLost;
          log_warn("pipeline: recovery failed repeatedly, tracking is lost");
        } else {
          mode_ = TrackerMode::kRecovering;
        }
        trajectory_.push_back({timestamp, T_pred, mode_});
        return {T_pred, mode_};
      }
    } else if (track_failed) {
      // direct-only operation with an unusable frame: predict through it
      if (++low_quality_streak_ >= cfg_.lost_after_failures) mode_ = TrackerMode::kLost;
      const TrackerMode mode =
          mode_ == TrackerMode::kLost ? TrackerMode::kLost : TrackerMode::kTrackingDirect;
      trajectory_.push_back({timestamp, T_pred, mode});
      return {T_pred, mode};
    }
    // without recovery the diverged estimate is used as-is, the way a pure
    // direct system would; the map degrades from here on its own
  }

  if (!tracking_failure || !cfg_.enable_recovery) {
    if (report.inlier_fraction < 0.2) {
      if (++low_quality_streak_ >= cfg_.lost_after_failures) {
        mode_ = TrackerMode::kLost;
        log_warn("pipeline: tracking quality collapsed, lost");
        trajectory_.push_back({timestamp, T_pred, TrackerMode::kLost});
        return {T_pred, TrackerMode::kLost};
      }
    } else {
      low_quality_streak_ = 0;
    }
  }

  const Pose T_cur = report.T_frame_kf * ref.T_cw;
  velocity_ = recovered_this_frame ? Pose() : T_cur * T_last_.inverse();
  T_last_ = T_cur;
  consecutive_recovery_failures_ = 0;
  mode_ = TrackerMode::kTrackingDirect;

  // the real newest keyframe owns the candidates the filters refine
  update_depth_filters(*window_.back(), pyramid, report.T_frame_kf, cfg_, report.a, report.b);

  if (need_new_keyframe(report, report.mean_flow_px, report.a, cfg_)) {
    insert_keyframe(std::move(pyramid), img, T_cur);
  }

  const TrackerMode frame_mode =
      recovered_this_frame ? TrackerMode::kRecovering : TrackerMode::kTrackingDirect;
  trajectory_.push_back({timestamp, T_last_, frame_mode});
  return {T_last_, frame_mode};
}

}  // namespace fdmo
