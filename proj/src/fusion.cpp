#include "rmflow/fusion.hpp"

#include <cmath>

#include <Eigen/SVD>

#include "rmflow/se3.hpp"

namespace rmflow {

FusionResult fuse_flows(const Field& flow_first, const Field& occ_first,
                        const Field& flow_second, const Field& occ_disparity) {
  require_same_shape(flow_first, occ_first, "fuse_flows");
  require_same_shape(flow_first, flow_second, "fuse_flows");
  require_same_shape(flow_first, occ_disparity, "fuse_flows");
  require_channels(flow_first, 2, "fuse_flows flow_first");
  require_channels(flow_second, 2, "fuse_flows flow_second");
  require_channels(occ_first, 1, "fuse_flows occ_first");
  require_channels(occ_disparity, 1, "fuse_flows occ_disparity");

  const int h = flow_first.height();
  const int w = flow_first.width();
  FusionResult out{Field(h, w, 2, FieldTag::flow, 0.0),
                   Field(h, w, 1, FieldTag::label, 0.0)};

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const bool first_ok = occ_first.at(y, x) == 0.0;
      const bool second_ok = occ_disparity.at(y, x) == 0.0;
      double u, v;
      int source;
      if (first_ok && second_ok) {
        u = 0.5 * (flow_first.at(y, x, 0) + flow_second.at(y, x, 0));
        v = 0.5 * (flow_first.at(y, x, 1) + flow_second.at(y, x, 1));
        source = fusion_average;
      } else if (first_ok) {
        u = flow_first.at(y, x, 0);
        v = flow_first.at(y, x, 1);
        source = fusion_first;
      } else if (second_ok) {
        u = flow_second.at(y, x, 0);
        v = flow_second.at(y, x, 1);
        source = fusion_second;
      } else {
        u = flow_second.at(y, x, 0);
        v = flow_second.at(y, x, 1);
        source = fusion_second_fallback;
      }
      out.flow.at(y, x, 0) = u;
      out.flow.at(y, x, 1) = v;
      out.provenance.at(y, x) = source;
    }
  }
  return out;
}

bool condition_guard(const Eigen::Matrix<double, 3, 2>& b, double threshold) {
  const Eigen::JacobiSVD<Eigen::Matrix<double, 3, 2>> svd(b);
  const double sigma_max = svd.singularValues()(0);
  const double sigma_min = svd.singularValues()(1);
  if (!(sigma_min > 1e-12)) return true;
  return sigma_max / sigma_min > threshold;
}

RefineResult refine_disparity(const Field& disp1, const Field& disp2,
                              const Field& flow, const Field& motion,
                              const CameraRig& rig,
                              const RefineParams& params) {
  rig.validate();
  if (!(params.cond_threshold > 0.0) || !(params.max_delta > 0.0)) {
    throw Error(ErrorKind::parameter, "refine thresholds must be positive");
  }
  require_same_shape(disp1, disp2, "refine_disparity");
  require_same_shape(disp1, flow, "refine_disparity");
  require_same_shape(disp1, motion, "refine_disparity");
  require_channels(disp1, 1, "refine_disparity disp1");
  require_channels(disp2, 1, "refine_disparity disp2");
  require_channels(flow, 2, "refine_disparity flow");
  require_channels(motion, 6, "refine_disparity motion");

  const int h = disp1.height();
  const int w = disp1.width();
  RefineResult out{Field(h, w, 1, FieldTag::scalar, 0.0),
                   Field(h, w, 1, FieldTag::scalar, 0.0),
                   make_mask(h, w, 0.0)};

  const double fxb = rig.fx * rig.baseline;

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double d1 = disp1.at(y, x);
      const double d2 = disp2.at(y, x);
      if (!(d1 < 0.0) || !(d2 < 0.0)) continue;

      Twist xi;
      xi.v = Eigen::Vector3d(motion.at(y, x, 0), motion.at(y, x, 1),
                             motion.at(y, x, 2));
      xi.w = Eigen::Vector3d(motion.at(y, x, 3), motion.at(y, x, 4),
                             motion.at(y, x, 5));
      if (!xi.coeffs().allFinite()) continue;
      const RigidMotion m = exp(xi);

      const double u = flow.at(y, x, 0);
      const double v = flow.at(y, x, 1);
      if (!std::isfinite(u) || !std::isfinite(v)) continue;

      // Rays of the two observations: a1 for the first frame rotated into
      // the second, a2 for the matched pixel. The rigid consistency
      // constraint is t/(fx*b) + a1/D1 + a2/D2 = 0 at the true disparities.
      const Eigen::Vector3d ray1((x - rig.cx) / rig.fx, (y - rig.cy) / rig.fy,
                                 1.0);
      const Eigen::Vector3d ray2((x + u - rig.cx) / rig.fx,
                                 (y + v - rig.cy) / rig.fy, 1.0);
      const Eigen::Vector3d a1 = -(m.r * ray1);
      const Eigen::Vector3d a2 = ray2;

      Eigen::Matrix<double, 3, 2> b;
      b.col(0) = a1 / (d1 * d1);
      b.col(1) = a2 / (d2 * d2);
      if (condition_guard(b, params.cond_threshold)) continue;

      const Eigen::Vector3d gamma = m.t / fxb + a1 / d1 + a2 / d2;
      const Eigen::JacobiSVD<Eigen::Matrix<double, 3, 2>> svd(
          b, Eigen::ComputeThinU | Eigen::ComputeThinV);
      Eigen::Vector2d delta = svd.solve(gamma);
      if (!delta.allFinite()) continue;

      delta.x() = std::clamp(delta.x(), -params.max_delta, params.max_delta);
      delta.y() = std::clamp(delta.y(), -params.max_delta, params.max_delta);

      // The corrected disparities must stay on the valid (negative) side.
      if (!(d1 + delta.x() < 0.0) || !(d2 + delta.y() < 0.0)) continue;

      out.delta1.at(y, x) = delta.x();
      out.delta2.at(y, x) = delta.y();
      out.applied.at(y, x) = 1.0;
    }
  }
  return out;
}

}  // namespace rmflow
