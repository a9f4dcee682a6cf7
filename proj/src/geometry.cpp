#include "fdmo/geometry.h"

#include <cmath>
#include <fstream>
#include <sstream>

namespace fdmo {

Mat3 skew(const Vec3& w) {
  Mat3 m;
  m << 0, -w.z(), w.y(), w.z(), 0, -w.x(), -w.y(), w.x(), 0;
  return m;
}

Pose se3_exp(const Twist& xi) {
  const Vec3 v = xi.head<3>();
  const Vec3 w = xi.tail<3>();
  const double theta2 = w.squaredNorm();
  const double theta = std::sqrt(theta2);

  Mat3 wx = skew(w);
  Mat3 R, V;
  if (theta < 1e-8) {
    // second-order Taylor expansion
    R = Mat3::Identity() + wx + 0.5 * wx * wx;
    V = Mat3::Identity() + 0.5 * wx + (1.0 / 6.0) * wx * wx;
  } else {
    const double s = std::sin(theta);
    const double c = std::cos(theta);
    R = Mat3::Identity() + (s / theta) * wx + ((1.0 - c) / theta2) * wx * wx;
    V = Mat3::Identity() + ((1.0 - c) / theta2) * wx + ((theta - s) / (theta2 * theta)) * wx * wx;
  }
  return Pose(R, V * v);
}

Twist se3_log(const Pose& pose) {
  const Mat3 R = pose.rotation_matrix();
  const double tr = std::min(3.0, std::max(-1.0, R.trace()));
  const double cos_theta = 0.5 * (tr - 1.0);
  const double theta = std::acos(std::min(1.0, std::max(-1.0, cos_theta)));
  if (theta >= M_PI - 1e-6) {
    throw AngleNearPi("se3_log: rotation angle too close to pi");
  }

  Vec3 w;
  if (theta < 1e-8) {
    // R ~ I + wx
    w = Vec3(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1)) * 0.5;
  } else {
    w = Vec3(R(2, 1) - R(1, 2), R(0, 2) - R(2, 0), R(1, 0) - R(0, 1)) *
        (theta / (2.0 * std::sin(theta)));
  }

  const double theta2 = theta * theta;
  const Mat3 wx = skew(w);
  Mat3 V_inv;
  if (theta < 1e-8) {
    V_inv = Mat3::Identity() - 0.5 * wx + (1.0 / 12.0) * wx * wx;
  } else {
    const double half = 0.5 * theta;
    const double cot_half = std::cos(half) / std::sin(half);
    V_inv = Mat3::Identity() - 0.5 * wx + ((1.0 - half * cot_half) / theta2) * wx * wx;
  }

  Twist xi;
  xi.head<3>() = V_inv * pose.translation;
  xi.tail<3>() = w;
  return xi;
}

double rotation_geodesic(const Quat& q1, const Quat& q2) {
  const double d = std::abs(q1.dot(q2));
  // 2|q1.q2|^2 - 1 clamped to [-1, 1]; numerically-1 dots otherwise yield NaN
  const double arg = std::min(1.0, std::max(-1.0, 2.0 * d * d - 1.0));
  return std::acos(arg);
}

Projection project(const PinholeCamera& cam, const Pose& T, const Vec3& X, double depth_min) {
  const Vec3 p = T * X;
  if (p.z() <= depth_min) {
    throw BehindCamera("project: point behind camera (z=" + std::to_string(p.z()) + ")");
  }
  const double iz = 1.0 / p.z();
  return Projection{Vec2(cam.fx * p.x() * iz + cam.cx, cam.fy * p.y() * iz + cam.cy), p.z()};
}

bool project_checked(const PinholeCamera& cam, const Vec3& p_cam, Vec2& px, double& depth,
                     double depth_min) {
  if (p_cam.z() <= depth_min) return false;
  const double iz = 1.0 / p_cam.z();
  px = Vec2(cam.fx * p_cam.x() * iz + cam.cx, cam.fy * p_cam.y() * iz + cam.cy);
  depth = p_cam.z();
  return true;
}

Vec3 backproject(const PinholeCamera& cam, const Vec2& px, double inv_depth) {
  if (!(inv_depth > 0.0)) {
    throw NonPositiveInverseDepth("backproject: inverse depth must be positive");
  }
  return cam.ray(px) / inv_depth;
}

Vec2 warp_point(const PinholeCamera& cam, const Vec2& px, double inv_depth, const Pose& T,
                double border) {
  if (!(inv_depth > 0.0)) {
    throw NonPositiveInverseDepth("warp_point: inverse depth must be positive");
  }
  const Vec3 p = T * (cam.ray(px) / inv_depth);
  if (p.z() <= kDefaultDepthMin) throw BehindCamera("warp_point: target behind camera");
  const double iz = 1.0 / p.z();
  const Vec2 out(cam.fx * p.x() * iz + cam.cx, cam.fy * p.y() * iz + cam.cy);
  if (!cam.in_image(out, border)) throw OutOfImage("warp_point: target pixel outside image");
  return out;
}

bool warp_point_checked(const PinholeCamera& cam, const Vec2& px, double inv_depth,
                        const Pose& T, Vec2& out, double border) {
  if (!(inv_depth > 0.0)) return false;
  const Vec3 p = T * (cam.ray(px) / inv_depth);
  if (p.z() <= kDefaultDepthMin) return false;
  const double iz = 1.0 / p.z();
  out = Vec2(cam.fx * p.x() * iz + cam.cx, cam.fy * p.y() * iz + cam.cy);
  return cam.in_image(out, border);
}

Mat23 projection_jacobian(const PinholeCamera& cam, const Vec3& p) {
  const double iz = 1.0 / p.z();
  const double iz2 = iz * iz;
  Mat23 j;
  j << cam.fx * iz, 0, -cam.fx * p.x() * iz2, 0, cam.fy * iz, -cam.fy * p.y() * iz2;
  return j;
}

Mat26 warp_pose_jacobian(const PinholeCamera& cam, const Vec3& p_cam) {
  // left increment: p' = exp(delta) p ~ p + v + w x p
  Mat36 dp;
  dp.leftCols<3>() = Mat3::Identity();
  dp.rightCols<3>() = -skew(p_cam);
  return projection_jacobian(cam, p_cam) * dp;
}

Vec3 warp_point_ddepth(const Vec3& p_cam, const Vec3& t, double inv_depth) {
  // p = R ray / rho + t  =>  dp/drho = -(p - t) / rho
  return -(p_cam - t) / inv_depth;
}

PinholeCamera load_camera_intrinsics(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw BadCalibration("cannot open intrinsics file: " + path);
  PinholeCamera cam;
  if (!(in >> cam.fx >> cam.fy >> cam.cx >> cam.cy >> cam.width >> cam.height)) {
    throw BadCalibration("malformed intrinsics file: " + path);
  }
  if (cam.fx <= 0 || cam.fy <= 0 || cam.cx < 0 || cam.cx >= cam.width || cam.cy < 0 ||
      cam.cy >= cam.height) {
    throw BadCalibration("invalid intrinsics values in: " + path);
  }
  return cam;
}

void save_camera_intrinsics(const PinholeCamera& cam, const std::string& path) {
  std::ofstream out(path);
  out.precision(12);
  out << cam.fx << " " << cam.fy << " " << cam.cx << " " << cam.cy << " " << cam.width << " "
      << cam.height << "\n";
}

}  // namespace fdmo
