#pragma once

#include <Eigen/Core>

#include "rmflow/field.hpp"
#include "rmflow/geometry.hpp"

namespace rmflow {

// Provenance labels written by fuse_flows.
enum FusionSource : int {
  fusion_average = 0,      // both inputs reliable
  fusion_first = 1,        // only the matched flow reliable
  fusion_second = 2,       // only the reconstructed flow reliable
  fusion_second_fallback = 3,  // neither reliable; reconstructed flow kept
};

struct FusionResult {
  Field flow;        // 2ch fused flow
  Field provenance;  // 1ch label field holding FusionSource values
};

// Pointwise merge of the matched flow (reliable where its occlusion mask is
// 0) and the reconstructed flow (reliable where the disparity occlusion mask
// is 0): average when both are reliable, copy the reliable one when exactly
// one is, keep the reconstructed flow when neither is.
FusionResult fuse_flows(const Field& flow_first, const Field& occ_first,
                        const Field& flow_second, const Field& occ_disparity);

struct RefineParams {
  double cond_threshold = 1e4;  // singular value ratio above this rejects
  double max_delta = 3.0;       // per-disparity correction clamp, px
};

struct RefineResult {
  Field delta1;   // correction to the first disparity map, px
  Field delta2;   // correction to the second (warped) disparity map, px
  Field applied;  // 1 where a correction was solved, guarded and kept
};

// True when the 3x2 system is too ill-conditioned to invert: smallest
// singular value near zero or singular value ratio above the threshold.
// Near-parallel columns arise when the motion runs along the camera axis.
bool condition_guard(const Eigen::Matrix<double, 3, 2>& b, double threshold);

// Closed-form least-squares correction of the two disparities against the
// rigid-motion consistency constraint, linearized at the current estimates.
// disp2 must already be sampled at x + flow (the second disparity of the
// first frame's point). Pixels rejected by the condition guard, with invalid
// inputs, or whose corrected disparity would cross zero keep delta 0 and
// applied 0. Deltas are clamped to max_delta before the sign check.
RefineResult refine_disparity(const Field& disp1, const Field& disp2,
                              const Field& flow, const Field& motion,
                              const CameraRig& rig,
                              const RefineParams& params = {});

}  // namespace rmflow
