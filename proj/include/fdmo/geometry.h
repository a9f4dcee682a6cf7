#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <string>

#include "fdmo/errors.h"

namespace fdmo {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using Mat23 = Eigen::Matrix<double, 2, 3>;
using Mat26 = Eigen::Matrix<double, 2, 6>;
using Mat36 = Eigen::Matrix<double, 3, 6>;
using Quat = Eigen::Quaterniond;

/// Twist coordinates of se(3): translational part first, rotational second.
using Twist = Vec6;

/// Rigid transform. Applies as y = R x + t. Keyframe poses are stored as
/// world-to-camera transforms (T_cw), matching x_cam = T_cw * x_world.
struct Pose {
  Quat rotation = Quat::Identity();
  Vec3 translation = Vec3::Zero();

  Pose() = default;
  Pose(const Quat& q, const Vec3& t) : rotation(q.normalized()), translation(t) {}
  Pose(const Mat3& r, const Vec3& t) : rotation(Quat(r).normalized()), translation(t) {}

  static Pose identity() { return Pose(); }

  Vec3 operator*(const Vec3& x) const { return rotation * x + translation; }

  Pose operator*(const Pose& rhs) const {
    return Pose(rotation * rhs.rotation, rotation * rhs.translation + translation);
  }

  Pose inverse() const {
    const Quat qi = rotation.conjugate();
    return Pose(qi, -(qi * translation));
  }

  Mat3 rotation_matrix() const { return rotation.toRotationMatrix(); }

  /// Camera center in the source frame: the point mapped to the origin.
  Vec3 center() const { return -(rotation.conjugate() * translation); }

  Mat4 matrix() const {
    Mat4 m = Mat4::Identity();
    m.topLeftCorner<3, 3>() = rotation_matrix();
    m.topRightCorner<3, 1>() = translation;
    return m;
  }
};

Mat3 skew(const Vec3& w);

/// Closed-form exponential map se(3) -> SE(3) with Taylor fallback near zero.
Pose se3_exp(const Twist& xi);

/// Inverse of se3_exp. Throws AngleNearPi for rotation angles >= pi - 1e-6.
Twist se3_log(const Pose& pose);

/// Geodesic distance between two unit quaternions in [0, pi], sign-invariant.
double rotation_geodesic(const Quat& q1, const Quat& q2);

struct PinholeCamera {
  double fx = 0, fy = 0, cx = 0, cy = 0;
  int width = 0, height = 0;

  PinholeCamera() = default;
  PinholeCamera(double fx_, double fy_, double cx_, double cy_, int w, int h)
      : fx(fx_), fy(fy_), cx(cx_), cy(cy_), width(w), height(h) {}

  Mat3 k_matrix() const {
    Mat3 k = Mat3::Identity();
    k(0, 0) = fx;
    k(1, 1) = fy;
    k(0, 2) = cx;
    k(1, 2) = cy;
    return k;
  }

  /// Intrinsics at pyramid level l (all four parameters halved per level).
  PinholeCamera level(int l) const {
    const double s = 1.0 / double(1 << l);
    return PinholeCamera(fx * s, fy * s, cx * s, cy * s, width >> l, height >> l);
  }

  bool in_image(const Vec2& px, double border = 0.0) const {
    return px.x() >= border && px.y() >= border && px.x() < double(width) - border &&
           px.y() < double(height) - border;
  }

  /// Normalized ray (x/z, y/z, 1) for a pixel.
  Vec3 ray(const Vec2& px) const {
    return Vec3((px.x() - cx) / fx, (px.y() - cy) / fy, 1.0);
  }
};

struct Projection {
  Vec2 px;
  double depth;
};

constexpr double kDefaultDepthMin = 1e-3;

/// Pixel coordinates and depth of T*X. Throws BehindCamera for z <= depth_min.
Projection project(const PinholeCamera& cam, const Pose& T, const Vec3& X,
                   double depth_min = kDefaultDepthMin);

/// Non-throwing projection kernel for inner loops. Returns false when the
/// point is behind the camera; px/depth are untouched in that case.
bool project_checked(const PinholeCamera& cam, const Vec3& p_cam, Vec2& px, double& depth,
                     double depth_min = kDefaultDepthMin);

/// 3D point on the pixel ray at inverse depth `inv_depth` (camera frame).
Vec3 backproject(const PinholeCamera& cam, const Vec2& px, double inv_depth);

/// pi(T * pi^-1(x, 1/inv_depth)). Throws BehindCamera / OutOfImage.
Vec2 warp_point(const PinholeCamera& cam, const Vec2& px, double inv_depth, const Pose& T,
                double border = 0.0);

/// Kernel version used by the optimizers; returns false instead of throwing.
bool warp_point_checked(const PinholeCamera& cam, const Vec2& px, double inv_depth,
                        const Pose& T, Vec2& out, double border = 0.0);

/// d(pixel)/d(camera point) for p in front of the camera.
Mat23 projection_jacobian(const PinholeCamera& cam, const Vec3& p_cam);

/// Jacobian of the warped pixel w.r.t. a left-multiplied twist increment on T
/// (convention: T <- se3_exp(delta) * T). `p_cam` is T * pi^-1(x, d).
Mat26 warp_pose_jacobian(const PinholeCamera& cam, const Vec3& p_cam);

/// Derivative of the warped camera point w.r.t. the host inverse depth.
/// `p_cam` as above, `t` the translation of T.
Vec3 warp_point_ddepth(const Vec3& p_cam, const Vec3& t, double inv_depth);

/// Plain-text intrinsics file: one line "fx fy cx cy width height".
PinholeCamera load_camera_intrinsics(const std::string& path);
void save_camera_intrinsics(const PinholeCamera& cam, const std::string& path);

}  // namespace fdmo
