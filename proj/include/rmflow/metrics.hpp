#pragma once

#include <optional>
#include <string>

#include "rmflow/field.hpp"

namespace rmflow {

// A pixel counts as a flow outlier when its endpoint error exceeds 3 px AND
// 5% of the ground-truth magnitude; disparity outliers use the same rule on
// absolute disparity error. Splits with no pixels are reported absent, never
// as zero. Rates are percentages in [0, 100], delta accuracies fractions in
// [0, 1]. All reductions are sequential row-major.

struct FlowMetrics {
  std::optional<double> epe_all, epe_noc, epe_occ;      // px
  std::optional<double> fl_all, fl_noc, fl_bg, fl_fg;   // percent
  long n_all = 0, n_noc = 0, n_occ = 0, n_bg = 0, n_fg = 0;
};

struct DepthMetrics {
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double rmse = 0.0;      // metres
  double rmse_log = 0.0;  // natural log
  double delta1 = 0.0;    // max(p/g, g/p) < 1.25
  double delta2 = 0.0;    //                < 1.25^2
  double delta3 = 0.0;    //                < 1.25^3
  long n = 0;
};

struct SceneFlowSplit {
  std::optional<double> d1, d2, fl, sf;  // percent outliers; sf is the union
  long n = 0;
};

struct SceneFlowMetrics {
  SceneFlowSplit all, bg, fg;
};

struct EvalReport {
  std::optional<FlowMetrics> flow;
  std::optional<DepthMetrics> depth;
  std::optional<SceneFlowMetrics> scene_flow;
};

bool flow_outlier(double pred_u, double pred_v, double gt_u, double gt_v);
bool disparity_outlier(double pred, double gt);

// occ splits the valid domain into non-occluded/occluded; fg into
// background/foreground. Either may be null, dropping those splits.
FlowMetrics eval_flow(const Field& pred, const Field& gt, const Field& valid,
                      const Field* occ = nullptr, const Field* fg = nullptr);

// Ground truths outside (0, cap] are excluded; predictions are clamped to
// [1e-3, cap] before comparison. Empty domain yields nullopt.
std::optional<DepthMetrics> eval_depth(const Field& pred, const Field& gt,
                                       const Field& valid, double cap = 80.0);

// disp2 inputs are the second disparities of first-frame points (already
// warped to first-frame pixels), matching the refinement convention.
SceneFlowMetrics eval_scene_flow(const Field& d1_pred, const Field& d1_gt,
                                 const Field& d2_pred, const Field& d2_gt,
                                 const Field& flow_pred, const Field& flow_gt,
                                 const Field& valid, const Field* fg = nullptr);

// Flat "key: value" lines, absent metrics skipped.
std::string report_text(const EvalReport& report);
// The same report as a JSON object string.
std::string report_json(const EvalReport& report);

}  // namespace rmflow
