#include "fdmo/direct.h"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include "fdmo/errors.h"
#include "fdmo/log.h"

namespace fdmo {

namespace {

constexpr double kWarpBorder = 3.0;  // pattern radius + bilinear support

inline double huber_weight(double r, double k) {
  const double a = std::abs(r);
  return a <= k ? 1.0 : k / a;
}

inline double huber_cost(double r, double k) {
  const double a = std::abs(r);
  return a <= k ? 0.5 * r * r : k * (a - 0.5 * k);
}

}  // namespace

int DirectKeyframe::count(PointStatus s) const {
  int n = 0;
  for (const DirectPoint& p : points) n += (p.status == s) ? 1 : 0;
  return n;
}

int total_active_points(const DirectWindow& window) {
  int n = 0;
  for (const auto& kf : window) n += kf->count(PointStatus::kActive);
  return n;
}

bool detect_divergence(double rmse_before, double rmse_after, double epsilon) {
  if (rmse_before <= 0.0) {
    log_warn("detect_divergence: rmse_before is zero, treating as non-divergent");
    return false;
  }
  return rmse_after / rmse_before > 1.0 + epsilon;
}

// ---------------------------------------------------------------------------
// tracking

namespace {

struct TrackEval {
  double cost = 0.0;
  double sum_sq = 0.0;
  int n = 0;
};

// Photometric residuals of the reference keyframe's active points against
// `frame` at pyramid level `lvl`. Optionally accumulates Gauss-Newton normal
// equations over [twist, a, b].
TrackEval evaluate_level(const Pyramid& frame, const DirectKeyframe& ref, int lvl, const Pose& T,
                         double a, double b, double huber_k,
                         Eigen::Matrix<double, 8, 8>* H = nullptr,
                         Eigen::Matrix<double, 8, 1>* g = nullptr) {
  TrackEval ev;
  const PinholeCamera& cam = frame.cameras[size_t(lvl)];
  const Image& target = frame.levels[size_t(lvl)];
  const Image& host = ref.pyramid.levels[size_t(lvl)];
  const double scale = 1.0 / double(1 << lvl);
  const double ea = std::exp(a);

  for (const DirectPoint& pt : ref.points) {
    if (pt.status != PointStatus::kActive) continue;
    if (!(pt.inv_depth > 0.0)) continue;
    const Vec2 uv_l = pt.uv * scale;
    for (int k = 0; k < kPatternSize; ++k) {
      const Vec2 x(uv_l.x() + kPattern[size_t(k)][0], uv_l.y() + kPattern[size_t(k)][1]);
      double ih;
      if (lvl == 0) {
        ih = pt.pattern[size_t(k)];
      } else {
        IntensityGradient hs;
        if (!sample_bilinear_checked(host, x.x(), x.y(), hs)) continue;
        ih = hs.intensity;
      }
      const Vec3 p_cam = T * (cam.ray(x) / pt.inv_depth);
      Vec2 u;
      double depth;
      if (!project_checked(cam, p_cam, u, depth)) continue;
      if (!cam.in_image(u, kWarpBorder)) continue;
      IntensityGradient ts;
      if (!sample_surface_checked(target, u.x(), u.y(), ts)) continue;

      const double r = ts.intensity - ea * ih - b;
      ev.cost += huber_cost(r, huber_k);
      ev.sum_sq += r * r;
      ev.n += 1;

      if (H) {
        const double w = huber_weight(r, huber_k);
        Eigen::Matrix<double, 8, 1> J;
        J.head<6>() = (ts.gradient.transpose() * warp_pose_jacobian(cam, p_cam)).transpose();
        J[6] = -ea * ih;
        J[7] = -1.0;
        H->noalias() += w * J * J.transpose();
        g->noalias() += w * J * r;
      }
    }
  }
  return ev;
}

struct PointStats {
  double flow_sum = 0.0;
  int flow_n = 0;
  int inliers = 0;
  int valid_points = 0;
};

PointStats point_statistics(const Pyramid& frame, const DirectKeyframe& ref, const Pose& T,
                            double a, double b, double huber_k) {
  PointStats st;
  const PinholeCamera& cam = frame.cameras[0];
  const Image& target = frame.levels[0];
  const double ea = std::exp(a);
  for (const DirectPoint& pt : ref.points) {
    if (pt.status != PointStatus::kActive) continue;
    Vec2 u;
    if (!warp_point_checked(cam, pt.uv, pt.inv_depth, T, u, kWarpBorder)) continue;
    double abs_sum = 0.0;
    int n = 0;
    for (int k = 0; k < kPatternSize; ++k) {
      const Vec2 x(pt.uv.x() + kPattern[size_t(k)][0], pt.uv.y() + kPattern[size_t(k)][1]);
      Vec2 ux;
      if (!warp_point_checked(cam, x, pt.inv_depth, T, ux, kWarpBorder)) continue;
      IntensityGradient ts;
      if (!sample_bilinear_checked(target, ux.x(), ux.y(), ts)) continue;
      abs_sum += std::abs(ts.intensity - ea * pt.pattern[size_t(k)] - b);
      ++n;
    }
    if (n == 0) continue;
    st.valid_points += 1;
    st.flow_sum += (u - pt.uv).norm();
    st.flow_n += 1;
    if (abs_sum / n <= 2.0 * huber_k) st.inliers += 1;
  }
  return st;
}

}  // namespace

AlignmentReport track_frame(const Pyramid& frame, const DirectKeyframe& ref, const Pose& T_init,
                            const Config& cfg) {
  if (ref.count(PointStatus::kActive) < cfg.min_tracking_points) {
    throw TooFewPoints("track_frame: reference keyframe has too few active points");
  }
  if (!T_init.translation.allFinite()) {
    throw NumericalFailure("track_frame: non-finite initial pose");
  }

  AlignmentReport rep;
  const TrackEval before = evaluate_level(frame, ref, 0, T_init, 0.0, 0.0, cfg.huber_photo);
  rep.rmse_before = before.n > 0 ? std::sqrt(before.sum_sq / before.n) : 0.0;

  Pose T = T_init;
  double a = 0.0, b = 0.0;
  const int top = std::min(cfg.pyramid_levels, frame.num_levels()) - 1;

  for (int lvl = top; lvl >= 0; --lvl) {
    TrackEval cur = evaluate_level(frame, ref, lvl, T, a, b, cfg.huber_photo);
    if (cur.n < 10 * kPatternSize && lvl > 0) continue;  // too small to constrain

    for (int iter = 0; iter < cfg.tracker_iterations_per_level; ++iter) {
      Eigen::Matrix<double, 8, 8> H = Eigen::Matrix<double, 8, 8>::Zero();
      Eigen::Matrix<double, 8, 1> g = Eigen::Matrix<double, 8, 1>::Zero();
      cur = evaluate_level(frame, ref, lvl, T, a, b, cfg.huber_photo, &H, &g);
      if (cur.n < 8) break;
      if (!H.allFinite() || !g.allFinite()) {
        throw NumericalFailure("track_frame: non-finite normal equations");
      }
      H.diagonal().array() += 1e-8;
      const Eigen::Matrix<double, 8, 1> delta = H.ldlt().solve(-g);
      if (!delta.allFinite()) {
        throw NumericalFailure("track_frame: singular normal equations");
      }

      bool accepted = false;
      double step = 1.0;
      Pose T_new = T;
      double a_new = a, b_new = b;
      TrackEval cand;
      for (int halving = 0; halving < 10; ++halving) {
        const Eigen::Matrix<double, 8, 1> d = step * delta;
        T_new = se3_exp(d.head<6>()) * T;
        a_new = a + d[6];
        b_new = b + d[7];
        cand = evaluate_level(frame, ref, lvl, T_new, a_new, b_new, cfg.huber_photo);
        if (cand.n >= 8 && cand.cost < cur.cost) {
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) break;
      const double rel = (cur.cost - cand.cost) / std::max(cur.cost, 1e-12);
      T = T_new;
      a = a_new;
      b = b_new;
      cur = cand;
      if (rel < 1e-6 || delta.norm() < 1e-10) break;
    }
  }

  const TrackEval after = evaluate_level(frame, ref, 0, T, a, b, cfg.huber_photo);
  rep.T_frame_kf = T;
  rep.a = a;
  rep.b = b;
  rep.rmse_after = after.n > 0 ? std::sqrt(after.sum_sq / after.n) : rep.rmse_before * 10.0;
  rep.n_valid = after.n / kPatternSize;

  const PointStats st = point_statistics(frame, ref, T, a, b, cfg.huber_photo);
  rep.mean_flow_px = st.flow_n > 0 ? st.flow_sum / st.flow_n : 0.0;
  rep.inlier_fraction = st.valid_points > 0 ? double(st.inliers) / double(st.valid_points) : 0.0;

  rep.diverged = detect_divergence(rep.rmse_before, rep.rmse_after, cfg.epsilon);
  // a pose that throws most of the points out of view is a failure even if
  // the surviving samples happen to agree
  if (after.n < before.n / 2) rep.diverged = true;
  return rep;
}

// ---------------------------------------------------------------------------
// depth filters

void update_depth_filters(DirectKeyframe& kf, const Pyramid& frame, const Pose& T_frame_kf,
                          const Config& cfg, double a, double b) {
  const PinholeCamera& cam = frame.cameras[0];
  const Image& target = frame.levels[0];
  const double ea = std::exp(a);

  for (DirectPoint& pt : kf.points) {
    if (pt.status != PointStatus::kCandidate) continue;
    const double sigma = std::sqrt(pt.variance);
    const double lo = std::max(pt.inv_depth - 2.0 * sigma, 1e-4);
    const double hi = pt.inv_depth + 2.0 * sigma;
    if (!(hi > lo)) continue;

    Vec2 px_lo, px_hi;
    const bool lo_ok = warp_point_checked(cam, pt.uv, lo, T_frame_kf, px_lo, kWarpBorder);
    const bool hi_ok = warp_point_checked(cam, pt.uv, hi, T_frame_kf, px_hi, kWarpBorder);
    if (!lo_ok && !hi_ok) continue;  // segment fully out of view: no evidence
    const double seg_len = (lo_ok && hi_ok) ? (px_hi - px_lo).norm() : 10.0;
    if (seg_len < 0.3) continue;  // degenerate epipolar geometry (tiny baseline)

    const int steps =
        std::clamp(int(seg_len / 0.7) + 2, 3, std::max(3, cfg.depth_search_steps_max));
    std::vector<double> ssd(size_t(steps), std::numeric_limits<double>::infinity());
    std::vector<double> rho_at(size_t(steps), 0.0);
    int best = -1;
    for (int s = 0; s < steps; ++s) {
      const double rho = lo + (hi - lo) * double(s) / double(steps - 1);
      rho_at[size_t(s)] = rho;
      double acc = 0.0;
      int n = 0;
      for (int k = 0; k < kPatternSize; ++k) {
        const Vec2 x(pt.uv.x() + kPattern[size_t(k)][0], pt.uv.y() + kPattern[size_t(k)][1]);
        Vec2 u;
        if (!warp_point_checked(cam, x, rho, T_frame_kf, u, kWarpBorder)) continue;
        IntensityGradient ts;
        if (!sample_bilinear_checked(target, u.x(), u.y(), ts)) continue;
        const double r = ts.intensity - ea * pt.pattern[size_t(k)] - b;
        acc += r * r;
        ++n;
      }
      if (n < kPatternSize - 2) continue;
      ssd[size_t(s)] = acc / n;
      if (best < 0 || ssd[size_t(s)] < ssd[size_t(best)]) best = s;
    }

    if (best < 0 || std::sqrt(ssd[size_t(best)]) > cfg.depth_ssd_accept) {
      if (++pt.miss_count >= cfg.depth_max_misses) pt.status = PointStatus::kOutlier;
      continue;
    }

    // sub-step refinement: parabola through the best sample and neighbors
    double rho_obs = rho_at[size_t(best)];
    if (best > 0 && best < steps - 1 && std::isfinite(ssd[size_t(best) - 1]) &&
        std::isfinite(ssd[size_t(best) + 1])) {
      const double denom = ssd[size_t(best) - 1] - 2.0 * ssd[size_t(best)] + ssd[size_t(best) + 1];
      if (denom > 1e-12) {
        const double offset = 0.5 * (ssd[size_t(best) - 1] - ssd[size_t(best) + 1]) / denom;
        const double step_rho = rho_at[1] - rho_at[0];
        rho_obs += std::clamp(offset, -1.0, 1.0) * step_rho;
      }
    }

    // one-pixel localization noise mapped into inverse-depth units
    const double slope = (hi - lo) / std::max(seg_len, 1e-6);
    const double var_obs = std::max(slope * slope, 1e-12);

    const double var_prior = pt.variance;
    pt.inv_depth =
        std::max((pt.inv_depth * var_obs + rho_obs * var_prior) / (var_prior + var_obs), 1e-4);
    pt.variance = var_prior * var_obs / (var_prior + var_obs);
    pt.miss_count = 0;
  }
}

// ---------------------------------------------------------------------------
// photometric bundle adjustment

namespace {

struct BaObs {
  int host;     // window index
  int point;    // index into host->points
  int target;   // window index
  double cost;  // huber cost of this observation at the current state
};

struct BaState {
  std::vector<Pose> poses;
  std::vector<double> a, b;
  std::vector<std::vector<double>> depths;

  static BaState capture(const DirectWindow& w) {
    BaState s;
    for (const auto& kf : w) {
      s.poses.push_back(kf->T_cw);
      s.a.push_back(kf->a);
      s.b.push_back(kf->b);
      std::vector<double> d;
      for (const auto& p : kf->points) d.push_back(p.inv_depth);
      s.depths.push_back(std::move(d));
    }
    return s;
  }

  void restore(DirectWindow& w) const {
    for (size_t i = 0; i < w.size(); ++i) {
      w[i]->T_cw = poses[i];
      w[i]->a = a[i];
      w[i]->b = b[i];
      for (size_t j = 0; j < w[i]->points.size(); ++j) {
        w[i]->points[j].inv_depth = depths[i][j];
      }
    }
  }
};

}  // namespace

bool photometric_sample(const DirectKeyframe& host, int point_index, int pattern_index,
                        const DirectKeyframe& target, bool with_jacobians, PhotoSample& out) {
  const DirectPoint& pt = host.points[size_t(point_index)];
  const PinholeCamera& cam = host.pyramid.cameras[0];

  if (!(pt.inv_depth > 0.0)) return false;
  const int k = pattern_index;
  const Vec2 x(pt.uv.x() + kPattern[size_t(k)][0], pt.uv.y() + kPattern[size_t(k)][1]);
  const Pose T_rel = target.T_cw * host.T_cw.inverse();
  const Vec3 X_host = cam.ray(x) / pt.inv_depth;
  const Vec3 p_cam = T_rel * X_host;
  Vec2 u;
  double depth;
  if (!project_checked(cam, p_cam, u, depth)) return false;
  if (!cam.in_image(u, kWarpBorder)) return false;
  IntensityGradient ts;
  if (!sample_surface_checked(target.pyramid.levels[0], u.x(), u.y(), ts)) return false;

  const double eda = std::exp(target.a - host.a);
  const double ih = pt.pattern[size_t(k)];
  out.r = (ts.intensity - target.b) - eda * (ih - host.b);

  if (with_jacobians) {
    const Eigen::Matrix<double, 1, 2> grad = ts.gradient.transpose();
    const Mat23 dproj = projection_jacobian(cam, p_cam);
    // target pose: left-multiplied increment on T_target
    Mat36 dp_t;
    dp_t.leftCols<3>() = Mat3::Identity();
    dp_t.rightCols<3>() = -skew(p_cam);
    out.j_target.head<6>() = (grad * dproj * dp_t).transpose();
    out.j_target[6] = -eda * (ih - host.b);
    out.j_target[7] = -1.0;

    // host pose: T_host <- exp(d) T_host shifts the host-frame point by
    // -(v + w x X) before the relative rotation
    const Mat3 R_rel = T_rel.rotation_matrix();
    Mat36 dp_h;
    dp_h.leftCols<3>() = Mat3::Identity();
    dp_h.rightCols<3>() = -skew(X_host);
    out.j_host.head<6>() = -(grad * dproj * R_rel * dp_h).transpose();
    out.j_host[6] = eda * (ih - host.b);
    out.j_host[7] = eda;

    const Vec3 dp_rho = -(p_cam - T_rel.translation) / pt.inv_depth;
    out.j_rho = (grad * dproj * dp_rho)(0, 0);
  }
  return true;
}

namespace {

using SampleJac = PhotoSample;

inline bool eval_sample(const DirectWindow& w, int host, int point, int target, int k,
                        bool with_jac, SampleJac& out) {
  return photometric_sample(*w[size_t(host)], point, k, *w[size_t(target)], with_jac, out);
}

}  // namespace

BaReport photometric_bundle_adjust(DirectWindow& window, const Config& cfg) {
  BaReport rep;
  const int n = int(window.size());
  if (n < 2) return rep;

  const BaState backup = BaState::capture(window);

  // depth parameter index per (kf, point); active points only
  std::vector<std::vector<int>> depth_param(window.size());
  int n_depths = 0;
  double mean_rho_init = 0.0;
  for (int i = 0; i < n; ++i) {
    depth_param[size_t(i)].assign(window[size_t(i)]->points.size(), -1);
    for (size_t j = 0; j < window[size_t(i)]->points.size(); ++j) {
      if (window[size_t(i)]->points[j].status == PointStatus::kActive) {
        depth_param[size_t(i)][j] = n_depths++;
        mean_rho_init += window[size_t(i)]->points[j].inv_depth;
      }
    }
  }
  if (n_depths == 0) return rep;
  mean_rho_init /= n_depths;

  const int nb = n - 1;  // keyframe 0 anchors the gauge
  const int dim = 8 * nb;

  const auto renormalize_gauge = [&] {
    double mean = 0.0;
    for (int i = 0; i < n; ++i) {
      for (size_t j = 0; j < window[size_t(i)]->points.size(); ++j) {
        if (depth_param[size_t(i)][j] >= 0) mean += window[size_t(i)]->points[j].inv_depth;
      }
    }
    mean /= n_depths;
    const double s = mean / mean_rho_init;
    if (std::abs(s - 1.0) < 1e-14) return;
    const Vec3 c0 = window[0]->T_cw.center();
    for (int i = 0; i < n; ++i) {
      for (size_t j = 0; j < window[size_t(i)]->points.size(); ++j) {
        if (depth_param[size_t(i)][j] >= 0) window[size_t(i)]->points[j].inv_depth /= s;
      }
      if (i > 0) {
        // scale the scene about the anchor camera center
        Pose& T = window[size_t(i)]->T_cw;
        const Vec3 c = T.center();
        const Vec3 c_new = c0 + s * (c - c0);
        T.translation = -(T.rotation * c_new);
      }
    }
  };

  const auto build_obs = [&](std::vector<BaObs>& obs) {
    obs.clear();
    double total = 0.0;
    for (int host = 0; host < n; ++host) {
      for (size_t pi = 0; pi < window[size_t(host)]->points.size(); ++pi) {
        if (depth_param[size_t(host)][pi] < 0) continue;
        for (int target = 0; target < n; ++target) {
          if (target == host) continue;
          double cost = 0.0;
          int valid = 0;
          SampleJac sj;
          for (int k = 0; k < kPatternSize; ++k) {
            if (eval_sample(window, host, int(pi), target, k, false, sj)) {
              cost += huber_cost(sj.r, cfg.huber_photo);
              ++valid;
            }
          }
          if (valid < kPatternSize - 2) continue;
          obs.push_back(BaObs{host, int(pi), target, cost});
          total += cost;
        }
      }
    }
    return total;
  };

  const auto eval_obs_cost = [&](const std::vector<BaObs>& obs) {
    double total = 0.0;
    for (const BaObs& o : obs) {
      double cost = 0.0;
      int valid = 0;
      SampleJac sj;
      for (int k = 0; k < kPatternSize; ++k) {
        if (eval_sample(window, o.host, o.point, o.target, k, false, sj)) {
          cost += huber_cost(sj.r, cfg.huber_photo);
          ++valid;
        }
      }
      // a sample that leaves the view under the trial step cannot claim an
      // improvement; keep its previous cost in the comparison
      total += (valid >= kPatternSize - 2) ? cost : o.cost;
    }
    return total;
  };

  std::vector<BaObs> obs;
  double current_cost = build_obs(obs);
  rep.initial_cost = current_cost;

  Eigen::MatrixXd Hpp(dim, dim);
  Eigen::VectorXd gp(dim);
  std::vector<double> h_d(static_cast<size_t>(n_depths));
  std::vector<double> g_d(static_cast<size_t>(n_depths));
  Eigen::MatrixXd W(dim, n_depths);

  for (int iter = 0; iter < cfg.ba_iterations; ++iter) {
    Hpp.setZero();
    gp.setZero();
    std::fill(h_d.begin(), h_d.end(), 0.0);
    std::fill(g_d.begin(), g_d.end(), 0.0);
    W.setZero();

    for (const BaObs& o : obs) {
      const int bh = o.host - 1;  // parameter block; -1 means gauge-fixed
      const int bt = o.target - 1;
      const int dp = depth_param[size_t(o.host)][size_t(o.point)];
      SampleJac sj;
      for (int k = 0; k < kPatternSize; ++k) {
        if (!eval_sample(window, o.host, o.point, o.target, k, true, sj)) continue;
        const double w = huber_weight(sj.r, cfg.huber_photo);
        if (bt >= 0) {
          Hpp.block<8, 8>(8 * bt, 8 * bt).noalias() += w * sj.j_target * sj.j_target.transpose();
          gp.segment<8>(8 * bt).noalias() += w * sj.j_target * sj.r;
          W.block<8, 1>(8 * bt, dp).noalias() += w * sj.j_target * sj.j_rho;
        }
        if (bh >= 0) {
          Hpp.block<8, 8>(8 * bh, 8 * bh).noalias() += w * sj.j_host * sj.j_host.transpose();
          gp.segment<8>(8 * bh).noalias() += w * sj.j_host * sj.r;
          W.block<8, 1>(8 * bh, dp).noalias() += w * sj.j_host * sj.j_rho;
        }
        if (bt >= 0 && bh >= 0) {
          Hpp.block<8, 8>(8 * bt, 8 * bh).noalias() += w * sj.j_target * sj.j_host.transpose();
          Hpp.block<8, 8>(8 * bh, 8 * bt).noalias() += w * sj.j_host * sj.j_target.transpose();
        }
        h_d[size_t(dp)] += w * sj.j_rho * sj.j_rho;
        g_d[size_t(dp)] += w * sj.j_rho * sj.r;
      }
    }

    if (!Hpp.allFinite() || !gp.allFinite()) {
      backup.restore(window);
      throw NumericalFailure("photometric_bundle_adjust: non-finite normal equations");
    }

    // Schur complement over the scalar depth blocks
    Eigen::MatrixXd Hs = Hpp;
    Eigen::VectorXd bs = -gp;
    for (int d = 0; d < n_depths; ++d) {
      const double h = h_d[size_t(d)] + 1e-10;
      Hs.noalias() -= (W.col(d) / h) * W.col(d).transpose();
      bs.noalias() += W.col(d) * (g_d[size_t(d)] / h);
    }
    Hs.diagonal().array() += 1e-8;
    const Eigen::VectorXd delta_p = Hs.ldlt().solve(bs);
    if (!delta_p.allFinite()) {
      backup.restore(window);
      throw NumericalFailure("photometric_bundle_adjust: rank-deficient reduced system");
    }
    Eigen::VectorXd delta_d(n_depths);
    for (int d = 0; d < n_depths; ++d) {
      const double h = h_d[size_t(d)] + 1e-10;
      delta_d[d] = (-g_d[size_t(d)] - W.col(d).dot(delta_p)) / h;
    }

    const BaState pre_step = BaState::capture(window);
    bool accepted = false;
    double new_cost = current_cost;
    double step = 1.0;
    for (int halving = 0; halving < 10; ++halving) {
      pre_step.restore(window);
      for (int i = 1; i < n; ++i) {
        const Eigen::Matrix<double, 8, 1> d = delta_p.segment<8>(8 * (i - 1)) * step;
        window[size_t(i)]->T_cw = se3_exp(d.head<6>()) * window[size_t(i)]->T_cw;
        window[size_t(i)]->a += d[6];
        window[size_t(i)]->b += d[7];
      }
      for (int i = 0; i < n; ++i) {
        for (size_t j = 0; j < window[size_t(i)]->points.size(); ++j) {
          const int dp = depth_param[size_t(i)][j];
          if (dp < 0) continue;
          DirectPoint& pt = window[size_t(i)]->points[j];
          pt.inv_depth = std::max(pt.inv_depth + step * delta_d[dp], 0.2 * pt.inv_depth);
        }
      }
      new_cost = eval_obs_cost(obs);
      if (new_cost < current_cost) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }

    if (!accepted) {
      pre_step.restore(window);
      break;
    }

    renormalize_gauge();
    rep.iterations = iter + 1;
    rep.accepted_costs.push_back(new_cost);
    const double rel = (current_cost - new_cost) / std::max(current_cost, 1e-12);
    current_cost = build_obs(obs);  // refresh validity for the next round
    if (rel < cfg.ba_min_rel_decrease) break;
  }

  rep.final_cost = current_cost;
  return rep;
}

// ---------------------------------------------------------------------------
// window management

bool need_new_keyframe(const AlignmentReport& report, double mean_flow_px,
                       double brightness_change, const Config& cfg) {
  if (mean_flow_px > cfg.kf_flow_px) return true;
  if (report.inlier_fraction < cfg.kf_min_inlier_fraction) return true;
  if (std::abs(brightness_change) > cfg.kf_brightness_change) return true;
  return false;
}

int marginalize_keyframe(DirectWindow& window, const Config& cfg) {
  if (int(window.size()) <= cfg.max_direct_keyframes) return -1;

  // never drop the two most recent keyframes
  std::vector<size_t> candidates;
  for (size_t i = 0; i + 2 < window.size(); ++i) candidates.push_back(i);
  if (candidates.empty()) return -1;

  const auto spread_without = [&](size_t skip) {
    double s = 0.0;
    for (size_t i = 0; i < window.size(); ++i) {
      if (i == skip) continue;
      for (size_t j = i + 1; j < window.size(); ++j) {
        if (j == skip) continue;
        s += (window[i]->T_cw.center() - window[j]->T_cw.center()).norm();
      }
    }
    return s;
  };

  size_t drop = candidates.front();
  double best = -1.0;
  for (size_t c : candidates) {
    const double s = spread_without(c);
    if (s > best + 1e-12) {
      best = s;
      drop = c;
    }
  }

  const int removed = window[drop]->id;
  for (DirectPoint& p : window[drop]->points) {
    if (p.status == PointStatus::kActive || p.status == PointStatus::kCandidate) {
      p.status = PointStatus::kMarginalized;
    }
  }
  window.erase(window.begin() + long(drop));
  return removed;
}

void activate_points(DirectWindow& window, const Config& cfg) {
  int active = total_active_points(window);
  if (active >= cfg.max_active_points) return;

  struct Cand {
    double rel_std;
    DirectPoint* pt;
  };
  std::vector<Cand> cands;
  for (const auto& kf : window) {
    for (DirectPoint& p : kf->points) {
      if (p.status != PointStatus::kCandidate) continue;
      const double rel = std::sqrt(p.variance) / std::max(p.inv_depth, 1e-12);
      if (rel < 0.3) cands.push_back(Cand{rel, &p});
    }
  }
  std::sort(cands.begin(), cands.end(),
            [](const Cand& a, const Cand& b) { return a.rel_std < b.rel_std; });
  for (const Cand& c : cands) {
    if (active >= cfg.max_active_points) break;
    c.pt->status = PointStatus::kActive;
    ++active;
  }
}

std::shared_ptr<DirectKeyframe> build_tracking_reference(const DirectWindow& window,
                                                         const Config& cfg) {
  auto ref = std::make_shared<DirectKeyframe>();
  if (window.empty()) return ref;
  const DirectKeyframe& newest = *window.back();
  ref->id = newest.id;
  ref->T_cw = newest.T_cw;
  ref->pyramid = newest.pyramid;
  ref->a = newest.a;
  ref->b = newest.b;

  const PinholeCamera& cam = newest.pyramid.cameras[0];
  const Image& base = newest.pyramid.levels[0];
  for (const auto& host : window) {
    const Pose T_rel = newest.T_cw * host->T_cw.inverse();
    for (const DirectPoint& p : host->points) {
      if (p.status != PointStatus::kActive) continue;
      if (int(ref->points.size()) >= cfg.max_active_points) break;
      const Vec3 p_new = T_rel * (cam.ray(p.uv) / p.inv_depth);
      Vec2 u;
      double depth;
      if (!project_checked(cam, p_new, u, depth)) continue;
      if (!cam.in_image(u, 4.0)) continue;
      DirectPoint q;
      q.uv = u;
      q.level = p.level;
      q.inv_depth = 1.0 / depth;
      q.variance = p.variance;
      q.status = PointStatus::kActive;
      bool ok = true;
      for (int k = 0; k < kPatternSize && ok; ++k) {
        IntensityGradient s;
        ok = sample_bilinear_checked(base, u.x() + kPattern[size_t(k)][0],
                                     u.y() + kPattern[size_t(k)][1], s);
        if (ok) q.pattern[size_t(k)] = s.intensity;
      }
      if (ok) ref->points.push_back(q);
    }
  }
  return ref;
}

std::shared_ptr<DirectKeyframe> create_direct_keyframe(int id, Pyramid pyramid, const Pose& T_cw,
                                                       const Config& cfg,
                                                       double prior_inv_depth) {
  auto kf = std::make_shared<DirectKeyframe>();
  kf->id = id;
  kf->T_cw = T_cw;
  kf->pyramid = std::move(pyramid);

  const auto cands = select_candidate_points(kf->pyramid, cfg.max_active_points,
                                             cfg.candidate_block_px, cfg.gradient_offset);
  const Image& base = kf->pyramid.levels[0];
  kf->points.reserve(cands.size());
  for (const CandidatePoint& c : cands) {
    DirectPoint p;
    p.uv = c.px;
    p.level = c.level;
    p.inv_depth = prior_inv_depth;
    p.variance = (0.75 * prior_inv_depth) * (0.75 * prior_inv_depth);
    bool ok = true;
    for (int k = 0; k < kPatternSize && ok; ++k) {
      IntensityGradient s;
      ok = sample_bilinear_checked(base, c.px.x() + kPattern[size_t(k)][0],
                                   c.px.y() + kPattern[size_t(k)][1], s);
      if (ok) p.pattern[size_t(k)] = s.intensity;
    }
    if (ok) kf->points.push_back(p);
  }
  return kf;
}

void dump_window(const DirectWindow& window, std::ostream& os) {
  const auto status_char = [](PointStatus s) {
    switch (s) {
      case PointStatus::kCandidate: return 'C';
      case PointStatus::kActive: return 'A';
      case PointStatus::kMarginalized: return 'M';
      case PointStatus::kOutlier: return 'O';
    }
    return '?';
  };
  for (const auto& kf : window) {
    for (const DirectPoint& p : kf->points) {
      os << kf->id << " " << p.uv.x() << " " << p.uv.y() << " " << p.inv_depth << " "
         << p.variance << " " << status_char(p.status) << "\n";
    }
  }
}

}  // namespace fdmo
