#pragma once

#include <cmath>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "rmflow/error.hpp"
#include "rmflow/geometry.hpp"

namespace rmflow {

using Vector6d = Eigen::Matrix<double, 6, 1>;

// se(3) tangent element, linear velocity first, angular second.
struct Twist {
  Eigen::Vector3d v = Eigen::Vector3d::Zero();
  Eigen::Vector3d w = Eigen::Vector3d::Zero();

  Vector6d coeffs() const {
    Vector6d c;
    c << v, w;
    return c;
  }

  static Twist from_coeffs(const Vector6d& c) {
    return Twist{c.head<3>(), c.tail<3>()};
  }

  double norm() const { return coeffs().norm(); }
  bool is_zero() const { return v.isZero(0.0) && w.isZero(0.0); }
};

struct RigidMotion {
  Eigen::Matrix3d r = Eigen::Matrix3d::Identity();
  Eigen::Vector3d t = Eigen::Vector3d::Zero();

  static RigidMotion identity() { return RigidMotion{}; }
};

inline Eigen::Matrix3d skew(const Eigen::Vector3d& a) {
  Eigen::Matrix3d s;
  s << 0.0, -a.z(), a.y(), a.z(), 0.0, -a.x(), -a.y(), a.x(), 0.0;
  return s;
}

// Angles below this use the series branches of exp/log; the closed forms
// divide by theta^2 and lose precision there.
inline constexpr double kSmallAngle = 1e-8;
// Below this angle log() switches its V^-1 coefficient to a series; the
// closed form subtracts two nearly equal ratios and its error grows like
// eps/theta^2, crossing the series truncation error near 0.1 rad.
inline constexpr double kCoeffSeriesAngle = 0.1;
// log() refuses angles this close to pi, where the axis is ill-conditioned.
inline constexpr double kBranchMargin = 1e-6;

inline RigidMotion exp(const Twist& twist) {
  const Eigen::Matrix3d omega = skew(twist.w);
  const Eigen::Matrix3d omega2 = omega * omega;
  const double theta = twist.w.norm();

  double a, b, c;  // coefficients of omega, omega^2 in R and V
  if (theta < kSmallAngle) {
    a = 1.0;        // sin(t)/t
    b = 0.5;        // (1-cos(t))/t^2
    c = 1.0 / 6.0;  // (t-sin(t))/t^3
  } else {
    const double theta2 = theta * theta;
    const double half_sin = std::sin(0.5 * theta);
    a = std::sin(theta) / theta;
    // 1 - cos(t) cancels for small t; 2*sin^2(t/2) is the same value
    // without the subtraction.
    b = 2.0 * half_sin * half_sin / theta2;
    c = (theta - std::sin(theta)) / (theta2 * theta);
  }

  RigidMotion m;
  m.r = Eigen::Matrix3d::Identity() + a * omega + b * omega2;
  const Eigen::Matrix3d v_mat =
      Eigen::Matrix3d::Identity() + b * omega + c * omega2;
  m.t = v_mat * twist.v;
  return m;
}

inline Twist log(const RigidMotion& motion) {
  const double cos_theta =
      std::clamp((motion.r.trace() - 1.0) * 0.5, -1.0, 1.0);

  Eigen::Vector3d half_vee(motion.r(2, 1) - motion.r(1, 2),
                           motion.r(0, 2) - motion.r(2, 0),
                           motion.r(1, 0) - motion.r(0, 1));
  half_vee *= 0.5;  // = sin(theta) * axis
  const double sin_theta = half_vee.norm();

  // Recovering the angle from both the symmetric part (trace -> cos) and the
  // antisymmetric part (vee -> sin) keeps the scale factor theta / sin(theta)
  // consistent with half_vee; acos(cos_theta) alone amplifies trace rounding
  // by theta / sin(theta)^2 as the angle approaches pi.
  const double theta = std::atan2(sin_theta, cos_theta);
  if (theta >= M_PI - kBranchMargin) {
    throw Error(ErrorKind::branch,
                "rotation angle " + std::to_string(theta) +
                    " is outside the principal branch");
  }

  Twist twist;
  if (theta < kSmallAngle) {
    twist.w = half_vee;
  } else {
    twist.w = (theta / sin_theta) * half_vee;
  }

  const Eigen::Matrix3d omega = skew(twist.w);
  const Eigen::Matrix3d omega2 = omega * omega;
  double d;  // coefficient of omega^2 in V^-1
  if (theta < kCoeffSeriesAngle) {
    // 1/theta^2 * (1 - theta*sin/(2*(1-cos))) cancels almost completely for
    // small angles, so the closed form is unusable there; the series is
    // accurate to ~theta^6/1.2e6 at the crossover.
    const double theta2 = theta * theta;
    d = 1.0 / 12.0 + theta2 / 720.0 + theta2 * theta2 / 30240.0;
  } else {
    d = (1.0 - theta * sin_theta / (2.0 * (1.0 - cos_theta))) /
        (theta * theta);
  }
  const Eigen::Matrix3d v_inv =
      Eigen::Matrix3d::Identity() - 0.5 * omega + d * omega2;
  twist.v = v_inv * motion.t;
  return twist;
}

// compose(a, b): apply b first, then a.
inline RigidMotion compose(const RigidMotion& a, const RigidMotion& b) {
  RigidMotion m;
  m.r = a.r * b.r;
  m.t = a.r * b.t + a.t;
  return m;
}

inline Point3 apply(const RigidMotion& motion, const Point3& point) {
  return motion.r * point + motion.t;
}

inline RigidMotion inverse(const RigidMotion& motion) {
  RigidMotion m;
  m.r = motion.r.transpose();
  m.t = -(m.r * motion.t);
  return m;
}

}  // namespace rmflow
