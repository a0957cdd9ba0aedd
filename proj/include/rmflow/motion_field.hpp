#pragma once

#include <Eigen/Core>

#include "rmflow/field.hpp"
#include "rmflow/geometry.hpp"
#include "rmflow/se3.hpp"

namespace rmflow {

struct ReconstructionOutput {
  Field flow;       // 2ch, px
  Field new_depth;  // 1ch, metres; depth of the moved point, 0 where invalid
  Field valid;      // mask; 0 where disparity invalid or point moved behind camera
};

// Lifts each pixel with valid (negative) disparity to 3D, moves it by the
// pixel's rigid motion exp(xi), and reprojects. Per-pixel work is
// independent, so the result is identical for every thread count.
ReconstructionOutput reconstruct_flow(const Field& disparity,
                                      const Field& motion,
                                      const CameraRig& rig, int threads = 1);

struct DisparityChange {
  Field zeta;   // 1ch scalar: disp2 sampled at x + flow, minus disp1
  Field valid;  // mask; needs disp1 valid and an all-valid bilinear footprint
};

// Pseudo-label for disparity change across a flow: warp the second disparity
// map by the flow and subtract the first. The rig is validated only; the
// quantity itself is a pure pixel-space difference.
DisparityChange disparity_change(const Field& disp1, const Field& disp2,
                                 const Field& flow, const CameraRig& rig);

// Mean L1 difference of twist coefficients over adjacent (horizontal and
// vertical) pixel pairs whose two endpoints are both valid. No valid pair
// yields 0. Sequential row-major reduction, thread-count independent.
double twist_smoothness(const Field& motion, const Field* valid = nullptr);

enum class PcaMode { joint, per_channel };

struct PcaProjection {
  Field coords;                         // 3ch: projections on the top modes
  Eigen::Vector3d eigenvalues;          // descending, zero-padded
  Eigen::Matrix<double, 6, 3> directions;  // columns, sign-fixed
  int rank = 0;                         // number of usable modes (<= 3)
};

// Projects each pixel's twist (minus the mean) onto the top three principal
// directions of the 6x6 sample covariance. Eigenvector sign is fixed by
// making the entry of largest magnitude positive (lowest index on ties).
PcaProjection pca_project(const Field& motion, const Field* valid = nullptr);

// Maps the projections to an RGB field in [0, 1]. joint mode normalizes all
// three channels with one shared min/max so relative magnitudes survive;
// per_channel stretches each channel independently, which separates three
// distinct motions into three distinct colors. Degenerate channels
// (eigenvalue ~ 0) and zero ranges flatten to 0.5.
Field pca_visualize(const Field& motion, PcaMode mode,
                    const Field* valid = nullptr);

}  // namespace rmflow
