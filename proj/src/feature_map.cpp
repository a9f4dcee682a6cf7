#include "fdmo/feature_map.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <ostream>

#include "fdmo/errors.h"

namespace fdmo {

int FeatureKeyframe::observation_count() const {
  int n = 0;
  for (int o : observations) n += o >= 0 ? 1 : 0;
  return n;
}

// ---------------------------------------------------------------------------
// covisibility graph

void CovisibilityGraph::add_shared(int kf_a, int kf_b, int delta) {
  if (kf_a == kf_b) return;
  int& w1 = adj_[kf_a][kf_b];
  int& w2 = adj_[kf_b][kf_a];
  w1 += delta;
  w2 += delta;
  if (w1 <= 0) {
    adj_[kf_a].erase(kf_b);
    adj_[kf_b].erase(kf_a);
  }
}

void CovisibilityGraph::remove_keyframe(int kf) {
  auto it = adj_.find(kf);
  if (it == adj_.end()) return;
  for (const auto& [other, w] : it->second) adj_[other].erase(kf);
  adj_.erase(it);
}

int CovisibilityGraph::weight(int kf_a, int kf_b) const {
  auto it = adj_.find(kf_a);
  if (it == adj_.end()) return 0;
  auto jt = it->second.find(kf_b);
  return jt == it->second.end() ? 0 : jt->second;
}

std::vector<int> CovisibilityGraph::neighbors(int kf, int n) const {
  std::vector<int> out;
  auto it = adj_.find(kf);
  if (it == adj_.end()) return out;
  std::vector<std::pair<int, int>> entries(it->second.begin(), it->second.end());
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first > b.first;  // ties: newer keyframe first
  });
  for (const auto& [id, w] : entries) {
    if (int(out.size()) >= n) break;
    out.push_back(id);
  }
  return out;
}

bool CovisibilityGraph::symmetric() const {
  for (const auto& [a, row] : adj_) {
    for (const auto& [b, w] : row) {
      if (w <= 0) return false;
      auto it = adj_.find(b);
      if (it == adj_.end()) return false;
      auto jt = it->second.find(a);
      if (jt == it->second.end() || jt->second != w) return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// epipolar matching and triangulation

std::vector<Match> epipolar_search_match(const FeatureKeyframe& kf1, const FeatureKeyframe& kf2,
                                         const PinholeCamera& cam, const Config& cfg,
                                         const std::vector<bool>* kf1_used,
                                         const std::vector<bool>* kf2_used) {
  std::vector<Match> out;
  const Vec3 c1 = kf1.T_cw.center();
  const Vec3 c2 = kf2.T_cw.center();
  if ((c2 - c1).norm() < 1e-9) return out;  // degenerate epipolar geometry

  const Pose T_21 = kf2.T_cw * kf1.T_cw.inverse();
  const Mat3 E = skew(T_21.translation) * T_21.rotation_matrix();
  const Mat3 k_inv = cam.k_matrix().inverse();
  const Mat3 F = k_inv.transpose() * E * k_inv;

  const auto line_distance = [](const Vec3& line, const Vec2& px) {
    const double n = std::hypot(line.x(), line.y());
    if (n < 1e-12) return 1e9;
    return std::abs(line.x() * px.x() + line.y() * px.y() + line.z()) / n;
  };

  struct Tentative {
    int i, j, dist;
  };
  std::vector<Tentative> tentative;

  for (int i = 0; i < int(kf1.features.size()); ++i) {
    if (kf1_used && (*kf1_used)[size_t(i)]) continue;
    const Feature& f1 = kf1.features[size_t(i)];
    if (!f1.has_descriptor) continue;
    const Vec3 x1h(f1.px.x(), f1.px.y(), 1.0);
    const Vec3 l2 = F * x1h;

    int best = 1 << 20, second = 1 << 20, pick = -1;
    for (int j = 0; j < int(kf2.features.size()); ++j) {
      if (kf2_used && (*kf2_used)[size_t(j)]) continue;
      const Feature& f2 = kf2.features[size_t(j)];
      if (!f2.has_descriptor) continue;
      if (line_distance(l2, f2.px) > cfg.epipolar_band_px) continue;
      // symmetric constraint: f1 must also lie on the line induced by f2
      const Vec3 l1 = F.transpose() * Vec3(f2.px.x(), f2.px.y(), 1.0);
      if (line_distance(l1, f1.px) > cfg.epipolar_band_px) continue;

      const int dist = hamming_distance(f1.descriptor, f2.descriptor);
      if (dist < best) {
        second = best;
        best = dist;
        pick = j;
      } else if (dist < second) {
        second = dist;
      }
    }
    if (pick < 0 || best > cfg.match_max_distance) continue;
    if (second < (1 << 20) && !(double(best) < cfg.match_ratio * double(second))) continue;
    tentative.push_back(Tentative{i, pick, best});
  }

  // enforce injectivity on the kf2 side: best distance wins
  std::map<int, Tentative> by_j;
  for (const Tentative& t : tentative) {
    auto it = by_j.find(t.j);
    if (it == by_j.end() || t.dist < it->second.dist) by_j[t.j] = t;
  }
  for (const auto& [j, t] : by_j) out.push_back(Match{t.i, t.j, t.dist});
  std::sort(out.begin(), out.end(), [](const Match& a, const Match& b) { return a.a < b.a; });
  return out;
}

Vec3 triangulate(const Vec2& x1, const Vec2& x2, const Pose& T1_cw, const Pose& T2_cw,
                 const PinholeCamera& cam, double median_scene_depth, double parallax_gate) {
  const Vec3 c1 = T1_cw.center();
  const Vec3 c2 = T2_cw.center();
  const double baseline = (c2 - c1).norm();
  if (!(median_scene_depth > 0.0) || baseline / median_scene_depth < parallax_gate) {
    throw InsufficientParallax("triangulate: baseline/depth below the parallax gate");
  }

  const Vec3 w1 = T1_cw.rotation.conjugate() * cam.ray(x1);
  const Vec3 w2 = T2_cw.rotation.conjugate() * cam.ray(x2);
  const Vec3 dc = c2 - c1;
  const double a = w1.dot(w1), b = w1.dot(w2), c = w2.dot(w2);
  const double d = w1.dot(dc), e = w2.dot(dc);
  const double denom = a * c - b * b;
  if (denom < 1e-12 * a * c) {
    throw RaysDiverge("triangulate: rays are parallel");
  }
  const double s = (c * d - b * e) / denom;
  const double t = (b * d - a * e) / denom;
  if (s <= 0.0 || t <= 0.0) {
    throw RaysDiverge("triangulate: intersection behind a camera (negative ray parameter)");
  }
  const Vec3 X = 0.5 * (c1 + s * w1 + c2 + t * w2);
  if ((T1_cw * X).z() <= kDefaultDepthMin || (T2_cw * X).z() <= kDefaultDepthMin) {
    throw BehindCamera("triangulate: midpoint behind a camera");
  }
  return X;
}

// ---------------------------------------------------------------------------
// feature map

int FeatureMap::add_keyframe(int id, const Pose& T_cw, std::vector<Feature> features) {
  FeatureKeyframe kf;
  kf.id = id;
  kf.seq = next_seq_++;
  kf.T_cw = T_cw;
  kf.observations.assign(features.size(), -1);
  kf.features = std::move(features);
  keyframes_[id] = std::move(kf);
  return keyframes_[id].seq;
}

int FeatureMap::add_point(const Vec3& position, const Descriptor& descriptor,
                          const std::vector<std::pair<int, int>>& obs) {
  if (obs.size() < 2) throw FdmoError("add_point: triangulated points need >= 2 observations");
  MapPoint p;
  p.id = next_point_id_++;
  p.position = position;
  p.descriptor = descriptor;
  int min_seq = 1 << 30;
  for (const auto& [kf_id, feat] : obs) {
    FeatureKeyframe& kf = keyframes_.at(kf_id);
    if (kf.observations[size_t(feat)] >= 0) continue;  // feature already bound
    kf.observations[size_t(feat)] = p.id;
    p.observations[kf_id] = feat;
    min_seq = std::min(min_seq, kf.seq);
  }
  if (int(p.observations.size()) < 2) {
    // roll back: the requested features were already taken
    for (const auto& [kf_id, feat] : p.observations) {
      keyframes_.at(kf_id).observations[size_t(feat)] = -1;
    }
    return -1;
  }
  p.first_seq = min_seq;
  for (auto it = p.observations.begin(); it != p.observations.end(); ++it) {
    for (auto jt = std::next(it); jt != p.observations.end(); ++jt) {
      graph_.add_shared(it->first, jt->first, 1);
    }
  }
  const int id = p.id;
  points_[id] = std::move(p);
  return id;
}

void FeatureMap::add_observation(int kf_id, int feat, int point_id) {
  FeatureKeyframe& kf = keyframes_.at(kf_id);
  MapPoint& p = points_.at(point_id);
  if (kf.observations[size_t(feat)] >= 0) return;
  if (p.observations.count(kf_id)) return;  // one observation per keyframe
  kf.observations[size_t(feat)] = point_id;
  for (const auto& [other, of] : p.observations) graph_.add_shared(kf_id, other, 1);
  p.observations[kf_id] = feat;
}

void FeatureMap::remove_point(int id) {
  auto it = points_.find(id);
  if (it == points_.end()) return;
  MapPoint& p = it->second;
  for (auto ot = p.observations.begin(); ot != p.observations.end(); ++ot) {
    auto kf = keyframes_.find(ot->first);
    if (kf != keyframes_.end()) kf->second.observations[size_t(ot->second)] = -1;
    for (auto jt = std::next(ot); jt != p.observations.end(); ++jt) {
      graph_.add_shared(ot->first, jt->first, -1);
    }
  }
  points_.erase(it);
}

void FeatureMap::remove_keyframe_internal(int id) {
  auto it = keyframes_.find(id);
  if (it == keyframes_.end()) return;
  // detach this keyframe's observations from its points
  std::vector<int> dead_points;
  for (int feat = 0; feat < int(it->second.observations.size()); ++feat) {
    const int pid = it->second.observations[size_t(feat)];
    if (pid < 0) continue;
    MapPoint& p = points_.at(pid);
    p.observations.erase(id);
    for (const auto& [other, of] : p.observations) graph_.add_shared(id, other, -1);
    if (int(p.observations.size()) < 2) dead_points.push_back(pid);
  }
  graph_.remove_keyframe(id);
  keyframes_.erase(it);
  for (int pid : dead_points) remove_point(pid);
}

void FeatureMap::structure_only_ba(const std::vector<int>& kf_ids, const PinholeCamera& cam,
                                   int max_iters) {
  const double huber_k = cfg_.huber_reproj;
  std::set<int> kf_set(kf_ids.begin(), kf_ids.end());

  // points with >= 2 observations among the given keyframes
  std::set<int> point_ids;
  for (int kf_id : kf_ids) {
    auto it = keyframes_.find(kf_id);
    if (it == keyframes_.end()) continue;
    for (int pid : it->second.observations) {
      if (pid < 0 || point_ids.count(pid)) continue;
      int n = 0;
      for (const auto& [okf, of] : points_.at(pid).observations) n += kf_set.count(okf);
      if (n >= 2) point_ids.insert(pid);
    }
  }

  for (int pid : point_ids) {
    MapPoint& p = points_.at(pid);
    struct Ob {
      const Pose* T;
      Vec2 px;
    };
    std::vector<Ob> obs;
    for (const auto& [kf_id, feat] : p.observations) {
      if (!kf_set.count(kf_id)) continue;
      const FeatureKeyframe& kf = keyframes_.at(kf_id);
      obs.push_back(Ob{&kf.T_cw, kf.features[size_t(feat)].px});
    }

    const auto eval = [&](const Vec3& X, Mat3* H, Vec3* g) {
      double cost = 0.0;
      int n = 0;
      for (const Ob& o : obs) {
        const Vec3 pc = (*o.T) * X;
        Vec2 u;
        double depth;
        if (!project_checked(cam, pc, u, depth)) continue;
        const Vec2 r = o.px - u;
        const double norm = r.norm();
        const double w = norm <= huber_k ? 1.0 : huber_k / norm;
        cost += norm <= huber_k ? 0.5 * norm * norm : huber_k * (norm - 0.5 * huber_k);
        ++n;
        if (H) {
          const Mat23 J = -projection_jacobian(cam, pc) * o.T->rotation_matrix();
          H->noalias() += w * J.transpose() * J;
          g->noalias() += w * J.transpose() * r;
        }
      }
      return n >= 2 ? cost : std::numeric_limits<double>::infinity();
    };

    Vec3 X = p.position;
    double cost = eval(X, nullptr, nullptr);
    if (!std::isfinite(cost)) continue;
    for (int iter = 0; iter < max_iters; ++iter) {
      Mat3 H = Mat3::Zero();
      Vec3 g = Vec3::Zero();
      cost = eval(X, &H, &g);
      if (!std::isfinite(cost)) break;
      H.diagonal().array() += 1e-10;
      const Vec3 delta = H.ldlt().solve(-g);
      if (!delta.allFinite()) break;
      bool accepted = false;
      bool converged = false;
      double step = 1.0;
      for (int halving = 0; halving < 10; ++halving) {
        const double cand = eval(X + step * delta, nullptr, nullptr);
        if (cand < cost) {
          X += step * delta;
          converged = (cost - cand) / std::max(cost, 1e-12) < 1e-6;
          cost = cand;
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted || converged) break;
    }
    p.position = X;

    // outlier flag on the post-optimization mean reprojection error
    double err_sum = 0.0;
    int err_n = 0;
    for (const Ob& o : obs) {
      const Vec3 pc = (*o.T) * X;
      Vec2 u;
      double depth;
      if (!project_checked(cam, pc, u, depth)) {
        err_sum += 2.0 * cfg_.soba_outlier_px;
        ++err_n;
        continue;
      }
      err_sum += (o.px - u).norm();
      ++err_n;
    }
    if (err_n > 0 && err_sum / err_n > cfg_.soba_outlier_px) p.outlier = true;
  }
}

void FeatureMap::maintain(const std::set<int>& marginalized_twins) {
  // outliers flagged by the structure-only optimization are dropped first
  {
    std::vector<int> flagged;
    for (const auto& [id, p] : points_) {
      if (p.outlier) flagged.push_back(id);
    }
    for (int id : flagged) remove_point(id);
  }

  // survival rule: once the window of subsequent keyframes has closed, a
  // point must have been re-found in enough of them
  const int latest_seq = next_seq_ - 1;
  {
    std::vector<int> doomed;
    for (auto& [id, p] : points_) {
      if (p.survival_checked) continue;
      if (latest_seq - p.first_seq < cfg_.survival_window) continue;  // grace
      int found = 0;
      for (const auto& [kf_id, feat] : p.observations) {
        const int seq = keyframes_.at(kf_id).seq;
        if (seq > p.first_seq && seq <= p.first_seq + cfg_.survival_window) ++found;
      }
      p.survival_checked = true;
      if (found < cfg_.survival_required) doomed.push_back(id);
    }
    for (int id : doomed) remove_point(id);
  }

  // redundant keyframes: only once their direct twin is marginalized
  {
    std::vector<int> cull;
    for (const auto& [id, kf] : keyframes_) {
      if (!marginalized_twins.count(id)) continue;
      int obs = 0, shared = 0;
      for (int pid : kf.observations) {
        if (pid < 0) continue;
        ++obs;
        // shared = the point outlives this keyframe's removal
        if (points_.at(pid).observations.size() >= 3) ++shared;
      }
      if (obs > 0 && double(shared) / double(obs) >= cfg_.kf_cull_shared_fraction) {
        cull.push_back(id);
      }
    }
    for (int id : cull) remove_keyframe_internal(id);
  }

  // referential integrity: triangulated points keep >= 2 live observations
  {
    std::vector<int> dead;
    for (const auto& [id, p] : points_) {
      if (int(p.observations.size()) < 2) dead.push_back(id);
    }
    for (int id : dead) remove_point(id);
  }
}

std::vector<int> FeatureMap::covisible_neighbors(int kf, int n) const {
  if (!keyframes_.count(kf)) throw UnknownKeyframe("covisible_neighbors: unknown keyframe");
  return graph_.neighbors(kf, n);
}

std::optional<double> FeatureMap::median_observed_depth(int kf_id) const {
  auto it = keyframes_.find(kf_id);
  if (it == keyframes_.end()) return std::nullopt;
  std::vector<double> depths;
  for (int pid : it->second.observations) {
    if (pid < 0) continue;
    const double z = (it->second.T_cw * points_.at(pid).position).z();
    if (z > 0) depths.push_back(z);
  }
  if (depths.empty()) return std::nullopt;
  auto mid = depths.begin() + long(depths.size() / 2);
  std::nth_element(depths.begin(), mid, depths.end());
  return *mid;
}

bool FeatureMap::check_integrity() const {
  if (!graph_.symmetric()) return false;
  for (const auto& [id, p] : points_) {
    if (p.observations.size() < 2) return false;
    if (!p.position.allFinite()) return false;
    for (const auto& [kf_id, feat] : p.observations) {
      auto it = keyframes_.find(kf_id);
      if (it == keyframes_.end()) return false;
      if (feat < 0 || feat >= int(it->second.observations.size())) return false;
      if (it->second.observations[size_t(feat)] != id) return false;
    }
  }
  for (const auto& [kf_id, kf] : keyframes_) {
    for (int pid : kf.observations) {
      if (pid >= 0 && !points_.count(pid)) return false;
    }
  }
  return true;
}

uint64_t FeatureMap::state_hash() const {
  uint64_t h = 1469598103934665603ull;
  const auto mix = [&h](uint64_t v) {
    h ^= v;
    h *= 1099511628211ull;
  };
  const auto mix_double = [&](double d) {
    uint64_t bits;
    static_assert(sizeof(bits) == sizeof(d));
    std::memcpy(&bits, &d, sizeof(bits));
    mix(bits);
  };
  for (const auto& [id, kf] : keyframes_) {
    mix(uint64_t(id));
    mix_double(kf.T_cw.translation.x());
    mix_double(kf.T_cw.translation.y());
    mix_double(kf.T_cw.translation.z());
    mix_double(kf.T_cw.rotation.x());
    mix_double(kf.T_cw.rotation.y());
    mix_double(kf.T_cw.rotation.z());
    mix_double(kf.T_cw.rotation.w());
    for (int o : kf.observations) mix(uint64_t(uint32_t(o + 1)));
  }
  for (const auto& [id, p] : points_) {
    mix(uint64_t(id));
    mix_double(p.position.x());
    mix_double(p.position.y());
    mix_double(p.position.z());
    for (const auto& [kf, feat] : p.observations) {
      mix(uint64_t(kf));
      mix(uint64_t(feat));
    }
  }
  return h;
}

void FeatureMap::dump(std::ostream& os) const {
  for (const auto& [id, p] : points_) {
    os << "POINT " << id << " " << p.position.x() << " " << p.position.y() << " "
       << p.position.z() << " " << p.observations.size() << "\n";
  }
  for (const auto& [id, kf] : keyframes_) {
    const Quat& q = kf.T_cw.rotation;
    os << "KF " << id << " " << kf.T_cw.translation.x() << " " << kf.T_cw.translation.y() << " "
       << kf.T_cw.translation.z() << " " << q.x() << " " << q.y() << " " << q.z() << " " << q.w()
       << " " << kf.features.size() << "\n";
  }
}

}  // namespace fdmo
