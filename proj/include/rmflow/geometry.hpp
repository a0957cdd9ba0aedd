#pragma once

#include <cmath>
#include <string>

#include <Eigen/Core>

#include "rmflow/error.hpp"

namespace rmflow {

using Pixel = Eigen::Vector2d;
using Point3 = Eigen::Vector3d;

// Rectified stereo rig: shared intrinsics, right camera displaced by
// `baseline` metres along +X. Disparity is signed left-to-right matching
// displacement, so physical (in-front) disparities are negative; zero is
// reserved for "invalid".
struct CameraRig {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  double baseline = 0.0;

  Eigen::Matrix3d intrinsics() const {
    Eigen::Matrix3d k = Eigen::Matrix3d::Identity();
    k(0, 0) = fx;
    k(1, 1) = fy;
    k(0, 2) = cx;
    k(1, 2) = cy;
    return k;
  }

  void validate() const {
    if (!(fx > 0.0) || !(fy > 0.0)) {
      throw Error(ErrorKind::parameter, "focal lengths must be positive");
    }
    if (!(baseline > 0.0)) {
      throw Error(ErrorKind::parameter, "baseline must be positive");
    }
    if (!std::isfinite(cx) || !std::isfinite(cy)) {
      throw Error(ErrorKind::parameter, "principal point must be finite");
    }
  }
};

// Z = fx * b / |d|. Sign-insensitive so external (positive) disparities
// triangulate the same way; d == 0 has no depth.
inline double disparity_to_depth(double disparity, const CameraRig& rig) {
  if (disparity == 0.0 || !std::isfinite(disparity)) {
    throw Error(ErrorKind::invalid_depth,
                "disparity " + std::to_string(disparity) + " has no depth");
  }
  return rig.fx * rig.baseline / std::abs(disparity);
}

inline double depth_to_disparity(double depth, const CameraRig& rig) {
  if (!(depth > 0.0) || !std::isfinite(depth)) {
    throw Error(ErrorKind::invalid_depth,
                "depth " + std::to_string(depth) + " has no disparity");
  }
  return -rig.fx * rig.baseline / depth;
}

// Back-projects pixel (x, y) at depth Z to camera coordinates Z * K^-1 [x y 1].
inline Point3 unproject(const Pixel& pixel, double depth, const CameraRig& rig) {
  if (!(depth > 0.0) || !std::isfinite(depth)) {
    throw Error(ErrorKind::invalid_depth,
                "cannot unproject at depth " + std::to_string(depth));
  }
  return Point3(depth * (pixel.x() - rig.cx) / rig.fx,
                depth * (pixel.y() - rig.cy) / rig.fy, depth);
}

struct Projection {
  Pixel pixel;
  double depth = 0.0;
};

inline Projection project(const Point3& point, const CameraRig& rig) {
  if (!(point.z() > 0.0)) {
    throw Error(ErrorKind::behind_camera,
                "point at Z = " + std::to_string(point.z()) +
                    " does not project");
  }
  return Projection{Pixel(rig.fx * point.x() / point.z() + rig.cx,
                          rig.fy * point.y() / point.z() + rig.cy),
                    point.z()};
}

}  // namespace rmflow
