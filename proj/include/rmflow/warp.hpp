#pragma once

#include <vector>

#include "rmflow/field.hpp"

namespace rmflow {

struct WarpResult {
  Field value;  // same channel count as the source, zeros where masked out
  Field mask;   // 1 where the sampled position was inside the image
};

// Samples src at x + flow(x) with bilinear weights. A position is in bounds
// iff it lies in [0, W-1] x [0, H-1]; exact right/bottom edges sample the
// last interior cell with fraction 1, so zero flow reproduces src exactly.
WarpResult bilinear_warp(const Field& src, const Field& flow);

struct OcclusionParams {
  double alpha1 = 0.01;  // relative mismatch tolerance
  double alpha2 = 0.5;   // absolute mismatch tolerance, px^2
  // The consistency test as published reads backwards; the default flags a
  // pixel occluded when |F_f + F_b|^2 >= alpha1 * (|F_f|^2 + |F_b|^2) + alpha2.
  // Set flip_inequality to reproduce the literal (inverted) form.
  bool flip_inequality = false;
};

// Forward-backward occlusion mask: 1 where the round trip through the
// backward flow disagrees with the forward flow, or where x + forward(x)
// falls outside the image.
Field fb_occlusion(const Field& forward, const Field& backward,
                   const OcclusionParams& params = {});

// Pointwise OR of masks; requires at least one input.
Field mask_union(const std::vector<const Field*>& masks);

// Pointwise complement: reliability is the complement of occlusion.
Field mask_not(const Field& mask);

}  // namespace rmflow
