#include "fdmo/recovery.h"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <set>

#include "fdmo/errors.h"
#include "fdmo/rng.h"

namespace fdmo {

namespace {

// rigid Procrustes: R, t with cam_i ~ R * world_i + t
Pose rigid_align(const std::vector<Vec3>& world, const std::vector<Vec3>& cam) {
  Vec3 cw = Vec3::Zero(), cc = Vec3::Zero();
  const double n = double(world.size());
  for (const Vec3& p : world) cw += p;
  for (const Vec3& p : cam) cc += p;
  cw /= n;
  cc /= n;
  Mat3 H = Mat3::Zero();
  for (size_t i = 0; i < world.size(); ++i) {
    H += (world[i] - cw) * (cam[i] - cc).transpose();
  }
  Eigen::JacobiSVD<Mat3> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 R = svd.matrixV() * svd.matrixU().transpose();
  if (R.determinant() < 0) {
    Mat3 V = svd.matrixV();
    V.col(2) *= -1.0;
    R = V * svd.matrixU().transpose();
  }
  return Pose(R, cc - R * cw);
}

double reprojection_rms(const Pose& T, const std::vector<Vec3>& pts, const std::vector<Vec2>& px,
                        const PinholeCamera& cam) {
  double acc = 0.0;
  int n = 0;
  for (size_t i = 0; i < pts.size(); ++i) {
    const Vec3 p = T * pts[i];
    if (p.z() <= kDefaultDepthMin) {
      acc += 1e6;
      ++n;
      continue;
    }
    const Vec2 u(cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy);
    acc += (u - px[i]).squaredNorm();
    ++n;
  }
  return n ? std::sqrt(acc / n) : 1e9;
}

// distance-constraint system for the beta refinement
struct ControlDistances {
  std::vector<std::pair<int, int>> pairs;
  std::vector<double> d2;  // squared world distances
};

// one Gauss-Newton pass over betas on f = |x_i-x_j|^2 - d_ij^2
template <int N>
void refine_betas(const std::vector<Eigen::VectorXd>& basis, const ControlDistances& cd,
                  int n_ctrl, Eigen::Matrix<double, N, 1>& betas) {
  for (int iter = 0; iter < 8; ++iter) {
    Eigen::Matrix<double, Eigen::Dynamic, N> J(cd.pairs.size(), N);
    Eigen::VectorXd r(cd.pairs.size());
    for (size_t k = 0; k < cd.pairs.size(); ++k) {
      const auto [i, j] = cd.pairs[k];
      Vec3 diff = Vec3::Zero();
      std::array<Vec3, N> basis_diff;
      for (int b = 0; b < N; ++b) {
        basis_diff[size_t(b)] = basis[size_t(b)].segment<3>(3 * i) - basis[size_t(b)].segment<3>(3 * j);
        diff += betas[b] * basis_diff[size_t(b)];
      }
      r[long(k)] = diff.squaredNorm() - cd.d2[k];
      for (int b = 0; b < N; ++b) J(long(k), b) = 2.0 * diff.dot(basis_diff[size_t(b)]);
    }
    const Eigen::Matrix<double, N, N> H = J.transpose() * J;
    const Eigen::Matrix<double, N, 1> g = J.transpose() * r;
    const Eigen::Matrix<double, N, 1> delta = (H + 1e-12 * Eigen::Matrix<double, N, N>::Identity())
                                                  .ldlt()
                                                  .solve(-g);
    if (!delta.allFinite()) break;
    betas += delta;
    if (delta.norm() < 1e-14) break;
  }
  (void)n_ctrl;
}

}  // namespace

Pose epnp(const std::vector<Vec3>& points3d, const std::vector<Vec2>& points2d,
          const PinholeCamera& cam) {
  const int n = int(points3d.size());
  if (n < 4 || points2d.size() != points3d.size()) {
    throw TooFewCorrespondences("epnp: need at least 4 correspondences");
  }

  // control points from the principal axes of the point set
  Vec3 c0 = Vec3::Zero();
  for (const Vec3& p : points3d) c0 += p;
  c0 /= double(n);
  Mat3 cov = Mat3::Zero();
  for (const Vec3& p : points3d) cov += (p - c0) * (p - c0).transpose();
  cov /= double(n);
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  const Vec3 lambda = eig.eigenvalues();  // ascending
  const Mat3 axes = eig.eigenvectors();

  if (lambda[2] < 1e-12) {
    throw DegenerateConfiguration("epnp: all points coincide");
  }
  if (lambda[1] < 1e-8 * lambda[2]) {
    throw DegenerateConfiguration("epnp: collinear points");
  }
  const bool planar = lambda[0] < 1e-8 * lambda[2];
  const int m = planar ? 3 : 4;

  std::vector<Vec3> ctrl_w;
  ctrl_w.push_back(c0);
  ctrl_w.push_back(c0 + std::sqrt(lambda[2]) * axes.col(2));
  ctrl_w.push_back(c0 + std::sqrt(lambda[1]) * axes.col(1));
  if (!planar) ctrl_w.push_back(c0 + std::sqrt(lambda[0]) * axes.col(0));

  // barycentric coordinates
  Eigen::MatrixXd basis_w(3, m - 1);
  for (int j = 1; j < m; ++j) basis_w.col(j - 1) = ctrl_w[size_t(j)] - c0;
  const Eigen::MatrixXd pinv =
      (basis_w.transpose() * basis_w).ldlt().solve(basis_w.transpose());

  Eigen::MatrixXd alphas(n, m);
  for (int i = 0; i < n; ++i) {
    const Eigen::VectorXd beta = pinv * (points3d[size_t(i)] - c0);
    alphas(i, 0) = 1.0 - beta.sum();
    for (int j = 1; j < m; ++j) alphas(i, j) = beta[j - 1];
  }

  // M matrix of the projective constraints
  Eigen::MatrixXd M(2 * n, 3 * m);
  M.setZero();
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) {
      const double a = alphas(i, j);
      M(2 * i, 3 * j) = a * cam.fx;
      M(2 * i, 3 * j + 2) = a * (cam.cx - points2d[size_t(i)].x());
      M(2 * i + 1, 3 * j + 1) = a * cam.fy;
      M(2 * i + 1, 3 * j + 2) = a * (cam.cy - points2d[size_t(i)].y());
    }
  }
  const Eigen::MatrixXd MtM = M.transpose() * M;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> esolver(MtM);

  // null-space basis (smallest eigenvectors first)
  std::vector<Eigen::VectorXd> basis;
  for (int k = 0; k < 4 && k < 3 * m; ++k) basis.push_back(esolver.eigenvectors().col(k));

  ControlDistances cd;
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) {
      cd.pairs.push_back({i, j});
      cd.d2.push_back((ctrl_w[size_t(i)] - ctrl_w[size_t(j)]).squaredNorm());
    }
  }

  const auto evaluate = [&](const Eigen::VectorXd& x) -> std::pair<double, Pose> {
    std::vector<Vec3> ctrl_c(static_cast<size_t>(m));
    for (int j = 0; j < m; ++j) ctrl_c[size_t(j)] = x.segment<3>(3 * j);
    // resolve the global sign with the cheirality of the reconstruction
    double zsum = 0.0;
    for (int i = 0; i < n; ++i) {
      Vec3 p = Vec3::Zero();
      for (int j = 0; j < m; ++j) p += alphas(i, j) * ctrl_c[size_t(j)];
      zsum += p.z();
    }
    if (zsum < 0) {
      for (Vec3& c : ctrl_c) c = -c;
    }
    std::vector<Vec3> cam_pts(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      Vec3 p = Vec3::Zero();
      for (int j = 0; j < m; ++j) p += alphas(i, j) * ctrl_c[size_t(j)];
      cam_pts[size_t(i)] = p;
    }
    const Pose T = rigid_align(ctrl_w, ctrl_c);
    return {reprojection_rms(T, points3d, points2d, cam), T};
  };

  double best_err = std::numeric_limits<double>::infinity();
  Pose best_pose;

  // case N=1
  {
    double num = 0.0, den = 0.0;
    for (size_t k = 0; k < cd.pairs.size(); ++k) {
      const auto [i, j] = cd.pairs[k];
      const double dv = (basis[0].segment<3>(3 * i) - basis[0].segment<3>(3 * j)).norm();
      num += dv * std::sqrt(cd.d2[k]);
      den += dv * dv;
    }
    Eigen::Matrix<double, 1, 1> betas;
    betas[0] = den > 1e-15 ? num / den : 0.0;
    refine_betas<1>(basis, cd, m, betas);
    const auto [err, pose] = evaluate(basis[0] * betas[0]);
    if (err < best_err) {
      best_err = err;
      best_pose = pose;
    }
  }

  // case N=2
  if (basis.size() >= 2) {
    Eigen::MatrixXd L(cd.pairs.size(), 3);
    Eigen::VectorXd rho(cd.pairs.size());
    for (size_t k = 0; k < cd.pairs.size(); ++k) {
      const auto [i, j] = cd.pairs[k];
      const Vec3 dv1 = basis[0].segment<3>(3 * i) - basis[0].segment<3>(3 * j);
      const Vec3 dv2 = basis[1].segment<3>(3 * i) - basis[1].segment<3>(3 * j);
      L(long(k), 0) = dv1.squaredNorm();
      L(long(k), 1) = 2.0 * dv1.dot(dv2);
      L(long(k), 2) = dv2.squaredNorm();
      rho[long(k)] = cd.d2[k];
    }
    const Eigen::Vector3d y =
        (L.transpose() * L + 1e-15 * Mat3::Identity()).ldlt().solve(L.transpose() * rho);
    Eigen::Matrix<double, 2, 1> betas;
    betas[0] = std::sqrt(std::abs(y[0]));
    betas[1] = std::abs(y[2]) > 1e-15 ? std::sqrt(std::abs(y[2])) * (y[1] < 0 ? -1.0 : 1.0)
                                      : 0.0;
    refine_betas<2>(basis, cd, m, betas);
    const auto [err, pose] = evaluate(basis[0] * betas[0] + basis[1] * betas[1]);
    if (err < best_err) {
      best_err = err;
      best_pose = pose;
    }
  }

  return best_pose;
}

Pose refine_pose_geometric(const std::vector<std::pair<Vec3, Vec2>>& matches, const Pose& T_init,
                           const PinholeCamera& cam, const Config& cfg, int max_iters) {
  if (int(matches.size()) < 6) {
    throw Underconstrained("refine_pose_geometric: need at least 6 matches");
  }
  const double k = cfg.huber_reproj;

  const auto eval = [&](const Pose& T, Eigen::Matrix<double, 6, 6>* H,
                        Vec6* g) {
    double cost = 0.0;
    int n = 0;
    for (const auto& [X, px] : matches) {
      const Vec3 p = T * X;
      Vec2 u;
      double depth;
      if (!project_checked(cam, p, u, depth)) continue;
      const Vec2 r = px - u;
      const double norm = r.norm();
      const double w = norm <= k ? 1.0 : k / norm;
      cost += norm <= k ? 0.5 * norm * norm : k * (norm - 0.5 * k);
      ++n;
      if (H) {
        Mat36 dp;
        dp.leftCols<3>() = Mat3::Identity();
        dp.rightCols<3>() = -skew(p);
        const Mat26 J = -projection_jacobian(cam, p) * dp;
        H->noalias() += w * J.transpose() * J;
        g->noalias() += w * J.transpose() * r;
      }
    }
    return n >= 3 ? cost : std::numeric_limits<double>::infinity();
  };

  Pose T = T_init;
  double cost = eval(T, nullptr, nullptr);
  if (!std::isfinite(cost)) throw NumericalFailure("refine_pose_geometric: no valid matches");

  for (int iter = 0; iter < max_iters; ++iter) {
    Eigen::Matrix<double, 6, 6> H = Eigen::Matrix<double, 6, 6>::Zero();
    Vec6 g = Vec6::Zero();
    cost = eval(T, &H, &g);
    if (!H.allFinite() || !g.allFinite()) {
      throw NumericalFailure("refine_pose_geometric: non-finite normal equations");
    }
    H.diagonal().array() += 1e-10;
    const Vec6 delta = H.ldlt().solve(-g);
    if (!delta.allFinite()) throw NumericalFailure("refine_pose_geometric: singular system");

    bool accepted = false;
    bool converged = false;
    double step = 1.0;
    for (int halving = 0; halving < 10; ++halving) {
      const Pose T_new = se3_exp(step * delta) * T;
      const double cand = eval(T_new, nullptr, nullptr);
      if (cand < cost) {
        converged = (cost - cand) / std::max(cost, 1e-12) < 1e-9;
        T = T_new;
        cost = cand;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted || converged) break;
  }
  return T;
}

RecoveryContext make_recovery_context(const FeatureMap& map, int last_kf_id, const Config& cfg) {
  RecoveryContext ctx;
  ctx.last_kf_id = last_kf_id;
  if (!map.has_keyframe(last_kf_id)) return ctx;
  ctx.last_kf_pose = map.keyframe(last_kf_id).T_cw;
  ctx.neighbor_ids = map.covisible_neighbors(last_kf_id, cfg.covisible_neighbors);

  std::set<int> seen;
  for (int kf_id : ctx.neighbor_ids) {
    const FeatureKeyframe& kf = map.keyframe(kf_id);
    auto& descs = ctx.kf_descriptors[kf_id];
    auto& pids = ctx.kf_point_ids[kf_id];
    for (int feat = 0; feat < int(kf.observations.size()); ++feat) {
      const int pid = kf.observations[size_t(feat)];
      if (pid < 0) continue;
      const MapPoint& p = map.point(pid);
      if (p.outlier) continue;
      descs.push_back(kf.features[size_t(feat)].descriptor);
      pids.push_back(pid);
      if (seen.insert(pid).second) {
        ctx.points.push_back(RecoveryContext::SnapshotPoint{pid, p.position, p.descriptor});
      }
    }
  }
  return ctx;
}

namespace {

struct BlindMatches {
  std::vector<Vec3> pts;
  std::vector<Vec2> px;
  std::vector<int> point_ids;
  std::vector<int> feat_idx;
};

BlindMatches pool_blind_matches(const std::vector<Feature>& frame_features,
                                const RecoveryContext& ctx, const Vocabulary& vocab,
                                const Config& cfg) {
  std::vector<Descriptor> query = descriptors_of(frame_features);
  std::map<int, Vec3> position_of;
  for (const auto& sp : ctx.points) position_of[sp.id] = sp.position;

  // one best (feature -> point) pair per feature across all neighbor keyframes
  std::map<int, std::pair<int, int>> best_for_feature;  // feat -> (dist, point)
  for (const auto& [kf_id, descs] : ctx.kf_descriptors) {
    const auto matches =
        vocab_blind_match(query, descs, vocab, cfg.match_max_distance, cfg.match_ratio);
    const auto& pids = ctx.kf_point_ids.at(kf_id);
    for (const Match& m : matches) {
      const int pid = pids[size_t(m.b)];
      auto it = best_for_feature.find(m.a);
      if (it == best_for_feature.end() || m.distance < it->second.first) {
        best_for_feature[m.a] = {m.distance, pid};
      }
    }
  }

  // a map point may be claimed by several features; keep the best claim
  std::map<int, std::pair<int, int>> best_for_point;  // point -> (dist, feat)
  for (const auto& [feat, dp] : best_for_feature) {
    auto it = best_for_point.find(dp.second);
    if (it == best_for_point.end() || dp.first < it->second.first) {
      best_for_point[dp.second] = {dp.first, feat};
    }
  }

  struct Entry {
    int dist, feat, point;
  };
  std::vector<Entry> entries;
  for (const auto& [pid, df] : best_for_point) entries.push_back({df.first, df.second, pid});
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.dist != b.dist) return a.dist < b.dist;
    return a.feat < b.feat;
  });

  BlindMatches out;
  for (const Entry& e : entries) {
    out.pts.push_back(position_of.at(e.point));
    out.px.push_back(frame_features[size_t(e.feat)].px);
    out.point_ids.push_back(e.point);
    out.feat_idx.push_back(e.feat);
  }
  return out;
}

struct GuidedMatches {
  std::vector<std::pair<Vec3, Vec2>> matches;
  std::vector<std::pair<int, int>> pairs;  // (point id, feature idx)
};

GuidedMatches match_by_projection(const Pose& T, const std::vector<Feature>& frame_features,
                                  const RecoveryContext& ctx, const PinholeCamera& cam,
                                  const Config& cfg, double window_px,
                                  bool prefer_nearest = false) {
  struct Claim {
    int dist;
    int point_idx;
  };
  std::map<int, Claim> claimed;  // frame feature -> best claim
  for (int pi = 0; pi < int(ctx.points.size()); ++pi) {
    const auto& sp = ctx.points[size_t(pi)];
    const Vec3 p = T * sp.position;
    Vec2 u;
    double depth;
    if (!project_checked(cam, p, u, depth)) continue;
    if (!cam.in_image(u, 1.0)) continue;
    // far from the truth, appearance is the only usable signal; once the
    // pose is trustworthy the nearest gated feature is the right claim
    int best = cfg.match_max_distance + 1, pick = -1;
    double best_px = window_px + 1.0;
    for (int f = 0; f < int(frame_features.size()); ++f) {
      const double dpx = (frame_features[size_t(f)].px - u).norm();
      if (dpx > window_px) continue;
      const int d = hamming_distance(sp.descriptor, frame_features[size_t(f)].descriptor);
      if (prefer_nearest) {
        if (d <= cfg.match_max_distance && dpx < best_px) {
          best_px = dpx;
          best = d;
          pick = f;
        }
      } else if (d < best) {
        best = d;
        pick = f;
      }
    }
    if (pick < 0 || best > cfg.match_max_distance) continue;
    auto it = claimed.find(pick);
    if (it == claimed.end() || best < it->second.dist) claimed[pick] = Claim{best, pi};
  }

  GuidedMatches out;
  for (const auto& [feat, claim] : claimed) {
    out.matches.push_back({ctx.points[size_t(claim.point_idx)].position,
                           frame_features[size_t(feat)].px});
    out.pairs.push_back({ctx.points[size_t(claim.point_idx)].id, feat});
  }
  return out;
}

RecoveryResult guided_refine(const Pose& T_guess, const std::vector<Feature>& frame_features,
                             const RecoveryContext& ctx, const PinholeCamera& cam,
                             const Config& cfg, double window_px) {
  // a wide window lets coherent mismatches through, and re-matching around a
  // biased pose would just re-select them; instead trim by residual on the
  // fixed association set, then re-match once narrowly when unbiased
  Pose T = T_guess;
  GuidedMatches gm = match_by_projection(T, frame_features, ctx, cam, cfg, window_px);
  const auto refine_or_fail = [&] {
    if (int(gm.matches.size()) < cfg.min_recovery_inliers) {
      throw RecoveryFailed("recover_pose: too few guided matches");
    }
    try {
      T = refine_pose_geometric(gm.matches, T, cam, cfg);
    } catch (const FdmoError&) {
      throw RecoveryFailed("recover_pose: geometric refinement failed");
    }
  };
  refine_or_fail();
  for (double cut : {4.0, 2.0}) {
    GuidedMatches trimmed;
    for (size_t i = 0; i < gm.matches.size(); ++i) {
      const Vec3 p = T * gm.matches[i].first;
      Vec2 u;
      double depth;
      if (!project_checked(cam, p, u, depth)) continue;
      if ((u - gm.matches[i].second).norm() >= cut) continue;
      trimmed.matches.push_back(gm.matches[i]);
      trimmed.pairs.push_back(gm.pairs[i]);
    }
    if (int(trimmed.matches.size()) < cfg.min_recovery_inliers) break;
    gm = std::move(trimmed);
    refine_or_fail();
  }
  gm = match_by_projection(T, frame_features, ctx, cam, cfg, 2.0, true);
  refine_or_fail();

  RecoveryResult result;
  result.T_cw = T;
  result.T_initial = T_guess;
  for (size_t i = 0; i < gm.matches.size(); ++i) {
    const Vec3 p = T * gm.matches[i].first;
    Vec2 u;
    double depth;
    if (!project_checked(cam, p, u, depth)) continue;
    if ((u - gm.matches[i].second).norm() < cfg.ransac_inlier_px) {
      result.inliers.push_back(gm.pairs[i]);
    }
  }
  if (int(result.inliers.size()) < cfg.min_recovery_inliers) {
    throw RecoveryFailed("recover_pose: not enough refined inliers");
  }
  return result;
}

}  // namespace

RecoveryResult recover_pose(const std::vector<Feature>& frame_features,
                            const RecoveryContext& ctx, const Vocabulary& vocab,
                            const PinholeCamera& cam, const Config& cfg) {
  if (ctx.points.empty()) throw RecoveryFailed("recover_pose: empty recovery context");
  const BlindMatches bm = pool_blind_matches(frame_features, ctx, vocab, cfg);
  if (int(bm.pts.size()) < cfg.min_blind_matches) {
    throw RecoveryFailed("recover_pose: not enough blind matches");
  }

  // RANSAC around EPnP: the blind matches carry outliers. Six-point samples
  // keep the null space of the minimal problem one-dimensional; drawing from
  // a growing best-distance prefix front-loads the trustworthy matches.
  Rng rng(cfg.ransac_seed);
  const int n = int(bm.pts.size());
  const int sample_size = std::min(6, n);
  std::vector<int> best_inliers;
  Pose best_pose;
  for (int iter = 0; iter < cfg.ransac_iterations; ++iter) {
    const int prefix = std::max(
        sample_size + 2,
        std::min(n, sample_size + 2 + iter * (n - sample_size - 2) / cfg.ransac_iterations));
    int idx[6];
    for (int k = 0; k < sample_size; ++k) {
      bool fresh;
      do {
        idx[k] = int(rng.uniform_int(uint64_t(prefix)));
        fresh = true;
        for (int j = 0; j < k; ++j) fresh &= idx[j] != idx[k];
      } while (!fresh);
    }
    std::vector<Vec3> p3;
    std::vector<Vec2> p2;
    for (int k = 0; k < sample_size; ++k) {
      p3.push_back(bm.pts[size_t(idx[k])]);
      p2.push_back(bm.px[size_t(idx[k])]);
    }
    Pose T;
    try {
      T = epnp(p3, p2, cam);
    } catch (const FdmoError&) {
      continue;
    }
    std::vector<int> inliers;
    for (int i = 0; i < n; ++i) {
      const Vec3 p = T * bm.pts[size_t(i)];
      Vec2 u;
      double depth;
      if (!project_checked(cam, p, u, depth)) continue;
      if ((u - bm.px[size_t(i)]).norm() < cfg.ransac_inlier_px) inliers.push_back(i);
    }
    if (inliers.size() > best_inliers.size()) {
      best_inliers = std::move(inliers);
      best_pose = T;
      if (double(best_inliers.size()) >= cfg.ransac_early_exit_fraction * double(n)) break;
    }
  }
  if (int(best_inliers.size()) < cfg.min_recovery_inliers) {
    throw RecoveryFailed("recover_pose: RANSAC consensus too small");
  }

  // refit on the consensus set
  if (best_inliers.size() >= 4) {
    std::vector<Vec3> p3;
    std::vector<Vec2> p2;
    for (int i : best_inliers) {
      p3.push_back(bm.pts[size_t(i)]);
      p2.push_back(bm.px[size_t(i)]);
    }
    try {
      const Pose T = epnp(p3, p2, cam);
      if (reprojection_rms(T, p3, p2, cam) <= reprojection_rms(best_pose, p3, p2, cam)) {
        best_pose = T;
      }
    } catch (const FdmoError&) {
    }
  }

  return guided_refine(best_pose, frame_features, ctx, cam, cfg, cfg.guided_window_px);
}

RecoveryResult recover_pose_no_epnp(const std::vector<Feature>& frame_features,
                                    const RecoveryContext& ctx, const PinholeCamera& cam,
                                    const Config& cfg) {
  if (ctx.points.empty()) throw RecoveryFailed("recover_pose: empty recovery context");
  return guided_refine(ctx.last_kf_pose, frame_features, ctx, cam, cfg, cfg.guided_window_px);
}

Pose seed_direct_realignment(const Pose& T_recovered, const Pose& last_kf_pose) {
  return T_recovered * last_kf_pose.inverse();
}

}  // namespace fdmo
