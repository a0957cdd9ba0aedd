#pragma once

#include <vector>

#include <Eigen/Core>

#include "rmflow/field.hpp"
#include "rmflow/geometry.hpp"
#include "rmflow/se3.hpp"

namespace rmflow {

using Matrix26 = Eigen::Matrix<double, 2, 6>;

// Derivative of the reconstructed flow at `pixel` with respect to a
// right-multiplicative increment exp(delta) * exp(xi), evaluated at delta = 0.
// Columns are ordered like Twist: linear velocity, then angular.
Matrix26 jacobian_reprojection(const Twist& xi, const Pixel& pixel,
                               double depth, const CameraRig& rig);

struct FitterParams {
  // Smoothing strength. The median step weights a pixel's own value by
  // 1/lambda_smooth against weight-1 neighbours, so larger values smooth
  // harder; 0 disables the step entirely.
  double lambda_smooth = 0.1;
  int outer_iters = 30;
  int gn_iters = 3;          // Gauss-Newton steps per pixel per outer iteration
  double damping = 1e-4;     // initial Levenberg diagonal boost, x10 on reject, /2 on accept
  int window_radius = 2;     // residuals aggregate over (2r+1)^2 windows
  double convergence_tol = 1e-4;  // stop when the history improves less than this
  bool warm_start_global = false; // seed all pixels with the single global fit
  int threads = 1;

  void validate() const;
};

struct FitReport {
  Field motion;     // twist6 per pixel
  Field supported;  // 1 where the window held >= 3 reliable pixels (>= 6 equations)
  // Mean over supported pixels of the per-pixel RMS flow residual (px) after
  // each outer iteration's data step. Non-increasing by construction: a pixel
  // only ever adopts a data step that matches or beats its best residual so
  // far, and reverts to that best iterate otherwise.
  std::vector<double> residual_history;
  bool converged = false;
};

// Per-pixel damped Gauss-Newton on window-aggregated reprojection residuals,
// alternated with a channel-wise weighted-median smoothing step that also
// propagates motion into unsupported pixels. Deterministic for every thread
// count. Throws empty_fit when no pixel has a usable window.
FitReport fit_rigid_field(const Field& target_flow, const Field& depth,
                          const Field& reliable, const CameraRig& rig,
                          const FitterParams& params = {});

// Single rigid motion over all reliable pixels; returns the best iterate.
// Throws empty_fit with zero usable pixels, under_constrained below six.
RigidMotion fit_global_rigid(const Field& target_flow, const Field& depth,
                             const Field& reliable, const CameraRig& rig);

}  // namespace rmflow
