#include "rmflow/motion_field.hpp"

#include <cmath>

#include <Eigen/Eigenvalues>

#include "rmflow/parallel.hpp"

namespace rmflow {

ReconstructionOutput reconstruct_flow(const Field& disparity,
                                      const Field& motion,
                                      const CameraRig& rig, int threads) {
  rig.validate();
  require_same_shape(disparity, motion, "reconstruct_flow");
  require_channels(disparity, 1, "reconstruct_flow disparity");
  require_channels(motion, 6, "reconstruct_flow motion");

  const int h = disparity.height();
  const int w = disparity.width();
  ReconstructionOutput out{Field(h, w, 2, FieldTag::flow, 0.0),
                           Field(h, w, 1, FieldTag::depth, 0.0),
                           make_mask(h, w, 0.0)};

  parallel_for_rows(h, threads, [&](int y) {
    for (int x = 0; x < w; ++x) {
      const double d = disparity.at(y, x);
      if (!(d < 0.0)) continue;  // 0 marks invalid; positives never stored
      const double z = rig.fx * rig.baseline / -d;
      const Point3 p = unproject(Pixel(x, y), z, rig);
      Twist xi;
      xi.v = Eigen::Vector3d(motion.at(y, x, 0), motion.at(y, x, 1),
                             motion.at(y, x, 2));
      xi.w = Eigen::Vector3d(motion.at(y, x, 3), motion.at(y, x, 4),
                             motion.at(y, x, 5));
      const Point3 moved = apply(exp(xi), p);
      if (!(moved.z() > 0.0)) continue;  // moved behind the camera
      const Projection proj = project(moved, rig);
      out.flow.at(y, x, 0) = proj.pixel.x() - x;
      out.flow.at(y, x, 1) = proj.pixel.y() - y;
      out.new_depth.at(y, x) = proj.depth;
      out.valid.at(y, x) = 1.0;
    }
  });
  return out;
}

DisparityChange disparity_change(const Field& disp1, const Field& disp2,
                                 const Field& flow, const CameraRig& rig) {
  rig.validate();
  require_same_shape(disp1, disp2, "disparity_change");
  require_same_shape(disp1, flow, "disparity_change");
  require_channels(disp1, 1, "disparity_change disp1");
  require_channels(disp2, 1, "disparity_change disp2");
  require_channels(flow, 2, "disparity_change flow");

  const int h = disp1.height();
  const int w = disp1.width();
  DisparityChange out{Field(h, w, 1, FieldTag::scalar, 0.0),
                      make_mask(h, w, 0.0)};

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!(disp1.at(y, x) < 0.0)) continue;
      const double px = x + flow.at(y, x, 0);
      const double py = y + flow.at(y, x, 1);
      if (!(px >= 0.0) || !(px <= w - 1.0) || !(py >= 0.0) ||
          !(py <= h - 1.0)) {
        continue;
      }
      int x0 = static_cast<int>(std::floor(px));
      int y0 = static_cast<int>(std::floor(py));
      if (x0 > w - 2) x0 = w > 1 ? w - 2 : 0;
      if (y0 > h - 2) y0 = h > 1 ? h - 2 : 0;
      const int x1 = w > 1 ? x0 + 1 : x0;
      const int y1 = h > 1 ? y0 + 1 : y0;
      const double fx = px - x0;
      const double fy = py - y0;
      const double w00 = (1.0 - fx) * (1.0 - fy);
      const double w10 = fx * (1.0 - fy);
      const double w01 = (1.0 - fx) * fy;
      const double w11 = fx * fy;

      // Every corner that contributes weight must itself hold a valid
      // disparity, otherwise the blend would leak the invalid marker 0.
      bool corners_ok = true;
      const double d00 = disp2.at(y0, x0);
      const double d10 = disp2.at(y0, x1);
      const double d01 = disp2.at(y1, x0);
      const double d11 = disp2.at(y1, x1);
      if (w00 > 0.0 && !(d00 < 0.0)) corners_ok = false;
      if (w10 > 0.0 && !(d10 < 0.0)) corners_ok = false;
      if (w01 > 0.0 && !(d01 < 0.0)) corners_ok = false;
      if (w11 > 0.0 && !(d11 < 0.0)) corners_ok = false;
      if (!corners_ok) continue;

      const double warped = w00 * d00 + w10 * d10 + w01 * d01 + w11 * d11;
      out.zeta.at(y, x) = warped - disp1.at(y, x);
      out.valid.at(y, x) = 1.0;
    }
  }
  return out;
}

double twist_smoothness(const Field& motion, const Field* valid) {
  require_channels(motion, 6, "twist_smoothness");
  if (valid) {
    require_same_shape(motion, *valid, "twist_smoothness");
    require_channels(*valid, 1, "twist_smoothness valid");
  }

  const int h = motion.height();
  const int w = motion.width();
  auto is_valid = [&](int y, int x) {
    return !valid || valid->at(y, x) != 0.0;
  };

  double total = 0.0;
  long pairs = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!is_valid(y, x)) continue;
      if (x + 1 < w && is_valid(y, x + 1)) {
        for (int c = 0; c < 6; ++c) {
          total += std::abs(motion.at(y, x, c) - motion.at(y, x + 1, c));
        }
        ++pairs;
      }
      if (y + 1 < h && is_valid(y + 1, x)) {
        for (int c = 0; c < 6; ++c) {
          total += std::abs(motion.at(y, x, c) - motion.at(y + 1, x, c));
        }
        ++pairs;
      }
    }
  }
  return pairs > 0 ? total / pairs : 0.0;
}

PcaProjection pca_project(const Field& motion, const Field* valid) {
  require_channels(motion, 6, "pca_project");
  if (valid) {
    require_same_shape(motion, *valid, "pca_project");
    require_channels(*valid, 1, "pca_project valid");
  }

  const int h = motion.height();
  const int w = motion.width();
  auto is_valid = [&](int y, int x) {
    return !valid || valid->at(y, x) != 0.0;
  };

  Vector6d mean = Vector6d::Zero();
  long n = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!is_valid(y, x)) continue;
      for (int c = 0; c < 6; ++c) mean[c] += motion.at(y, x, c);
      ++n;
    }
  }

  PcaProjection out;
  out.coords = Field(h, w, 3, FieldTag::scalar, 0.0);
  out.eigenvalues.setZero();
  out.directions.setZero();
  if (n == 0) return out;
  mean /= static_cast<double>(n);

  Eigen::Matrix<double, 6, 6> cov = Eigen::Matrix<double, 6, 6>::Zero();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!is_valid(y, x)) continue;
      Vector6d d;
      for (int c = 0; c < 6; ++c) d[c] = motion.at(y, x, c) - mean[c];
      cov.noalias() += d * d.transpose();
    }
  }
  cov /= static_cast<double>(n);

  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 6, 6>> solver(cov);
  // Solver returns ascending order; take the top three, largest first.
  const double lambda_max = std::max(solver.eigenvalues()(5), 0.0);
  for (int k = 0; k < 3; ++k) {
    const int src = 5 - k;
    double lambda = std::max(solver.eigenvalues()(src), 0.0);
    Vector6d dir = solver.eigenvectors().col(src);
    // Deterministic sign: largest-magnitude entry positive, first on ties.
    int pivot = 0;
    double best = -1.0;
    for (int c = 0; c < 6; ++c) {
      if (std::abs(dir[c]) > best) {
        best = std::abs(dir[c]);
        pivot = c;
      }
    }
    if (dir[pivot] < 0.0) dir = -dir;
    out.eigenvalues[k] = lambda;
    out.directions.col(k) = dir;
    if (lambda_max > 0.0 && lambda > 1e-12 * lambda_max) out.rank = k + 1;
  }

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!is_valid(y, x)) continue;
      Vector6d d;
      for (int c = 0; c < 6; ++c) d[c] = motion.at(y, x, c) - mean[c];
      for (int k = 0; k < 3; ++k) {
        out.coords.at(y, x, k) = out.directions.col(k).dot(d);
      }
    }
  }
  return out;
}

Field pca_visualize(const Field& motion, PcaMode mode, const Field* valid) {
  const PcaProjection proj = pca_project(motion, valid);
  const int h = motion.height();
  const int w = motion.width();
  auto is_valid = [&](int y, int x) {
    return !valid || valid->at(y, x) != 0.0;
  };

  Field rgb(h, w, 3, FieldTag::rgb, 0.5);

  bool degenerate[3];
  for (int k = 0; k < 3; ++k) degenerate[k] = k >= proj.rank;

  double lo[3], hi[3];
  for (int k = 0; k < 3; ++k) {
    lo[k] = std::numeric_limits<double>::infinity();
    hi[k] = -std::numeric_limits<double>::infinity();
  }
  bool any = false;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!is_valid(y, x)) continue;
      any = true;
      for (int k = 0; k < 3; ++k) {
        const double v = proj.coords.at(y, x, k);
        lo[k] = std::min(lo[k], v);
        hi[k] = std::max(hi[k], v);
      }
    }
  }
  if (!any) return rgb;

  if (mode == PcaMode::joint) {
    double jlo = std::numeric_limits<double>::infinity();
    double jhi = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < 3; ++k) {
      if (degenerate[k]) continue;
      jlo = std::min(jlo, lo[k]);
      jhi = std::max(jhi, hi[k]);
    }
    for (int k = 0; k < 3; ++k) {
      if (!degenerate[k]) {
        lo[k] = jlo;
        hi[k] = jhi;
      }
    }
  }

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!is_valid(y, x)) continue;
      for (int k = 0; k < 3; ++k) {
        if (degenerate[k] || !(hi[k] > lo[k])) {
          rgb.at(y, x, k) = 0.5;
        } else {
          rgb.at(y, x, k) = (proj.coords.at(y, x, k) - lo[k]) / (hi[k] - lo[k]);
        }
      }
    }
  }
  return rgb;
}

}  // namespace rmflow
