#include "rmflow/fitter.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>

#include <Eigen/Cholesky>

#include "rmflow/parallel.hpp"

namespace rmflow {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kMinDamping = 1e-12;
constexpr double kMaxDamping = 1e12;

Matrix26 flow_jacobian_at(const Point3& y, const CameraRig& rig) {
  const double z = y.z();
  Eigen::Matrix<double, 2, 3> proj;
  proj << rig.fx / z, 0.0, -rig.fx * y.x() / (z * z),
          0.0, rig.fy / z, -rig.fy * y.y() / (z * z);
  Eigen::Matrix<double, 3, 6> gen;
  gen.leftCols<3>() = Eigen::Matrix3d::Identity();
  gen.rightCols<3>() = -skew(y);
  return proj * gen;
}

// One pixel's fitting inputs, shared by the field and global fitters.
struct SampleGrid {
  int h = 0;
  int w = 0;
  std::vector<char> usable;              // reliable and positive depth
  std::vector<Eigen::Vector3d> point;    // unprojected 3D point
  std::vector<Eigen::Vector2d> target;   // pixel + target flow
};

SampleGrid build_samples(const Field& target_flow, const Field& depth,
                         const Field& reliable, const CameraRig& rig) {
  SampleGrid grid;
  grid.h = target_flow.height();
  grid.w = target_flow.width();
  const std::size_t n = static_cast<std::size_t>(grid.h) * grid.w;
  grid.usable.assign(n, 0);
  grid.point.assign(n, Eigen::Vector3d::Zero());
  grid.target.assign(n, Eigen::Vector2d::Zero());
  for (int y = 0; y < grid.h; ++y) {
    for (int x = 0; x < grid.w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * grid.w + x;
      const double z = depth.at(y, x);
      if (reliable.at(y, x) == 0.0 || !(z > 0.0) || !std::isfinite(z)) continue;
      grid.usable[i] = 1;
      grid.point[i] = unproject(Pixel(x, y), z, rig);
      grid.target[i] =
          Eigen::Vector2d(x + target_flow.at(y, x, 0), y + target_flow.at(y, x, 1));
    }
  }
  return grid;
}

// Sum of squared flow residuals over the usable window samples; +inf when the
// candidate motion pushes any sample behind the camera.
double window_sse(const SampleGrid& grid, const CameraRig& rig,
                  const RigidMotion& m, int cy, int cx, int radius) {
  double sse = 0.0;
  for (int y = std::max(0, cy - radius); y <= std::min(grid.h - 1, cy + radius); ++y) {
    for (int x = std::max(0, cx - radius); x <= std::min(grid.w - 1, cx + radius); ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * grid.w + x;
      if (!grid.usable[i]) continue;
      const Eigen::Vector3d p = m.r * grid.point[i] + m.t;
      if (!(p.z() > 0.0)) return kInf;
      const double u = rig.fx * p.x() / p.z() + rig.cx - grid.target[i].x();
      const double v = rig.fy * p.y() / p.z() + rig.cy - grid.target[i].y();
      sse += u * u + v * v;
    }
  }
  return sse;
}

struct Normal {
  Eigen::Matrix<double, 6, 6> a = Eigen::Matrix<double, 6, 6>::Zero();
  Vector6d g = Vector6d::Zero();
};

void accumulate_normal(const SampleGrid& grid, const CameraRig& rig,
                       const RigidMotion& m, std::size_t i, Normal* normal) {
  const Eigen::Vector3d p = m.r * grid.point[i] + m.t;
  const Matrix26 jac = flow_jacobian_at(p, rig);
  Eigen::Vector2d resid(rig.fx * p.x() / p.z() + rig.cx - grid.target[i].x(),
                        rig.fy * p.y() / p.z() + rig.cy - grid.target[i].y());
  normal->a.noalias() += jac.transpose() * jac;
  normal->g.noalias() += jac.transpose() * resid;
}

bool solve_step(const Normal& normal, double damping, Vector6d* delta) {
  Eigen::Matrix<double, 6, 6> m = normal.a;
  for (int k = 0; k < 6; ++k) {
    m(k, k) += damping * (normal.a(k, k) + 1e-9);
  }
  const Eigen::LDLT<Eigen::Matrix<double, 6, 6>> ldlt(m);
  if (ldlt.info() != Eigen::Success) return false;
  *delta = ldlt.solve(-normal.g);
  return delta->allFinite();
}

// Right-multiplicative composition in coordinates; empty on a branch cut.
bool compose_coeffs(const Vector6d& delta, const Vector6d& xi, Vector6d* out) {
  const RigidMotion m = compose(exp(Twist::from_coeffs(delta)),
                                exp(Twist::from_coeffs(xi)));
  try {
    *out = log(m).coeffs();
  } catch (const Error&) {
    return false;
  }
  return true;
}

// Damped Gauss-Newton on one pixel's window. sse must hold the finite
// residual at *xi on entry; both are updated in place, rejected steps raise
// the damping tenfold, accepted steps halve it.
void refine_pixel(const SampleGrid& grid, const CameraRig& rig, int cy, int cx,
                  int radius, int iters, Vector6d* xi, double* sse,
                  double* damping) {
  for (int it = 0; it < iters; ++it) {
    const RigidMotion m = exp(Twist::from_coeffs(*xi));
    Normal normal;
    for (int y = std::max(0, cy - radius); y <= std::min(grid.h - 1, cy + radius); ++y) {
      for (int x = std::max(0, cx - radius); x <= std::min(grid.w - 1, cx + radius); ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * grid.w + x;
        if (grid.usable[i]) accumulate_normal(grid, rig, m, i, &normal);
      }
    }
    Vector6d delta;
    Vector6d candidate;
    bool ok = solve_step(normal, *damping, &delta) &&
              compose_coeffs(delta, *xi, &candidate);
    double sse_candidate = kInf;
    if (ok) {
      sse_candidate = window_sse(grid, rig, exp(Twist::from_coeffs(candidate)),
                                 cy, cx, radius);
    }
    if (sse_candidate <= *sse) {
      *xi = candidate;
      *sse = sse_candidate;
      *damping = std::max(*damping * 0.5, kMinDamping);
    } else {
      *damping = std::min(*damping * 10.0, kMaxDamping);
    }
  }
}

double weighted_median(std::vector<std::pair<double, double>>* items) {
  std::sort(items->begin(), items->end());
  double total = 0.0;
  for (const auto& [value, weight] : *items) total += weight;
  const double half = 0.5 * total;
  double cum = 0.0;
  for (const auto& [value, weight] : *items) {
    cum += weight;
    if (cum >= half) return value;
  }
  return items->back().first;
}

}  // namespace

void FitterParams::validate() const {
  if (!(lambda_smooth >= 0.0)) {
    throw Error(ErrorKind::parameter, "lambda_smooth must be >= 0");
  }
  if (outer_iters < 1 || gn_iters < 1) {
    throw Error(ErrorKind::parameter, "iteration counts must be >= 1");
  }
  if (!(damping > 0.0)) {
    throw Error(ErrorKind::parameter, "damping must be > 0");
  }
  if (window_radius < 0) {
    throw Error(ErrorKind::parameter, "window_radius must be >= 0");
  }
  if (!(convergence_tol >= 0.0)) {
    throw Error(ErrorKind::parameter, "convergence_tol must be >= 0");
  }
  if (threads < 1) {
    throw Error(ErrorKind::parameter, "threads must be >= 1");
  }
}

Matrix26 jacobian_reprojection(const Twist& xi, const Pixel& pixel,
                               double depth, const CameraRig& rig) {
  rig.validate();
  const Point3 point = unproject(pixel, depth, rig);
  const Point3 moved = apply(exp(xi), point);
  if (!(moved.z() > 0.0)) {
    throw Error(ErrorKind::behind_camera,
                "motion moves the point behind the camera");
  }
  return flow_jacobian_at(moved, rig);
}

FitReport fit_rigid_field(const Field& target_flow, const Field& depth,
                          const Field& reliable, const CameraRig& rig,
                          const FitterParams& params) {
  rig.validate();
  params.validate();
  require_same_shape(target_flow, depth, "fit_rigid_field");
  require_same_shape(target_flow, reliable, "fit_rigid_field");
  require_channels(target_flow, 2, "fit_rigid_field flow");
  require_channels(depth, 1, "fit_rigid_field depth");
  require_channels(reliable, 1, "fit_rigid_field reliable");

  const SampleGrid grid = build_samples(target_flow, depth, reliable, rig);
  const int h = grid.h;
  const int w = grid.w;
  const int radius = params.window_radius;
  const std::size_t n = static_cast<std::size_t>(h) * w;

  // A pixel is anchored when its window offers at least three usable samples
  // (six equations for six unknowns); only anchored pixels see data.
  std::vector<int> window_count(n, 0);
  std::vector<char> anchored(n, 0);
  long anchored_total = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      int count = 0;
      for (int yy = std::max(0, y - radius); yy <= std::min(h - 1, y + radius); ++yy) {
        for (int xx = std::max(0, x - radius); xx <= std::min(w - 1, x + radius); ++xx) {
          if (grid.usable[static_cast<std::size_t>(yy) * w + xx]) ++count;
        }
      }
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      window_count[i] = count;
      if (count >= 3) {
        anchored[i] = 1;
        ++anchored_total;
      }
    }
  }
  if (anchored_total == 0) {
    throw Error(ErrorKind::empty_fit, "no pixel has a usable fitting window");
  }

  std::vector<Vector6d> cur(n, Vector6d::Zero());
  if (params.warm_start_global) {
    const RigidMotion global =
        fit_global_rigid(target_flow, depth, reliable, rig);
    const Vector6d seed = log(global).coeffs();
    std::fill(cur.begin(), cur.end(), seed);
  }
  std::vector<Vector6d> next(n, Vector6d::Zero());
  std::vector<Vector6d> best_xi = cur;
  std::vector<double> best_sse(n, kInf);
  std::vector<double> cur_sse(n, kInf);
  std::vector<double> damping(n, params.damping);
  std::vector<char> assigned = anchored;

  FitReport report;
  report.residual_history.reserve(params.outer_iters);

  for (int outer = 0; outer < params.outer_iters; ++outer) {
    // Data step. Each anchored pixel may only keep a result that matches or
    // beats its best recorded residual; otherwise it reverts to that iterate.
    parallel_for_rows(h, params.threads, [&](int y) {
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        if (!anchored[i]) {
          next[i] = cur[i];
          continue;
        }
        Vector6d xi = cur[i];
        double sse = window_sse(grid, rig, exp(Twist::from_coeffs(xi)), y, x, radius);
        if (!(sse < kInf)) {
          xi = best_xi[i];
          sse = best_sse[i] < kInf
                    ? window_sse(grid, rig, exp(Twist::from_coeffs(xi)), y, x, radius)
                    : window_sse(grid, rig, RigidMotion::identity(), y, x, radius);
          if (!(sse < kInf)) {
            xi.setZero();
            sse = window_sse(grid, rig, RigidMotion::identity(), y, x, radius);
          }
        }
        refine_pixel(grid, rig, y, x, radius, params.gn_iters, &xi, &sse,
                     &damping[i]);
        if (sse <= best_sse[i]) {
          best_sse[i] = sse;
          best_xi[i] = xi;
          next[i] = xi;
          cur_sse[i] = sse;
        } else {
          next[i] = best_xi[i];
          cur_sse[i] = best_sse[i];
        }
      }
    });
    cur.swap(next);

    // Sequential reduction keeps the history thread-count independent.
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (anchored[i]) total += std::sqrt(best_sse[i] / window_count[i]);
    }
    report.residual_history.push_back(total / static_cast<double>(anchored_total));

    const std::size_t k = report.residual_history.size();
    if (k >= 2 && std::abs(report.residual_history[k - 2] -
                           report.residual_history[k - 1]) <
                      params.convergence_tol) {
      report.converged = true;
      break;
    }

    if (params.lambda_smooth <= 0.0 || outer + 1 == params.outer_iters) continue;

    // Smoothing step: channel-wise weighted median. Anchored pixels weight
    // themselves by 1/lambda and only move if their data residual survives;
    // unanchored pixels take the plain median of already-assigned neighbours,
    // which walks motion into unsupported regions one radius per iteration.
    std::vector<char> newly_assigned(n, 0);
    parallel_for_rows(h, params.threads, [&](int y) {
      std::vector<std::pair<double, double>> items;
      std::vector<std::size_t> neighbours;
      for (int x = 0; x < w; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * w + x;
        neighbours.clear();
        const bool center_anchored = anchored[i] != 0;
        for (int yy = std::max(0, y - radius); yy <= std::min(h - 1, y + radius); ++yy) {
          for (int xx = std::max(0, x - radius); xx <= std::min(w - 1, x + radius); ++xx) {
            const std::size_t j = static_cast<std::size_t>(yy) * w + xx;
            if (center_anchored ? anchored[j] != 0 : assigned[j] != 0) {
              neighbours.push_back(j);
            }
          }
        }
        if (!center_anchored && neighbours.empty()) {
          next[i] = cur[i];
          continue;
        }
        Vector6d median;
        for (int c = 0; c < 6; ++c) {
          items.clear();
          for (std::size_t j : neighbours) items.emplace_back(cur[j][c], 1.0);
          if (center_anchored) {
            items.emplace_back(cur[i][c], 1.0 / params.lambda_smooth);
          }
          median[c] = weighted_median(&items);
        }
        if (center_anchored) {
          const double sse_median = window_sse(
              grid, rig, exp(Twist::from_coeffs(median)), y, x, radius);
          if (sse_median <= cur_sse[i] * (1.0 + 1e-6) + 1e-30) {
            next[i] = median;
            cur_sse[i] = sse_median;
          } else {
            next[i] = cur[i];
          }
        } else {
          next[i] = median;
          newly_assigned[i] = 1;
        }
      }
    });
    cur.swap(next);
    for (std::size_t i = 0; i < n; ++i) {
      if (newly_assigned[i]) assigned[i] = 1;
    }
  }

  report.motion = Field(h, w, 6, FieldTag::twist6, 0.0);
  report.supported = make_mask(h, w, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t i = static_cast<std::size_t>(y) * w + x;
      for (int c = 0; c < 6; ++c) report.motion.at(y, x, c) = cur[i][c];
      report.supported.at(y, x) = anchored[i] ? 1.0 : 0.0;
    }
  }
  return report;
}

RigidMotion fit_global_rigid(const Field& target_flow, const Field& depth,
                             const Field& reliable, const CameraRig& rig) {
  rig.validate();
  require_same_shape(target_flow, depth, "fit_global_rigid");
  require_same_shape(target_flow, reliable, "fit_global_rigid");
  require_channels(target_flow, 2, "fit_global_rigid flow");
  require_channels(depth, 1, "fit_global_rigid depth");
  require_channels(reliable, 1, "fit_global_rigid reliable");

  const SampleGrid grid = build_samples(target_flow, depth, reliable, rig);
  const std::size_t n = grid.usable.size();
  std::vector<std::size_t> samples;
  for (std::size_t i = 0; i < n; ++i) {
    if (grid.usable[i]) samples.push_back(i);
  }
  if (samples.empty()) {
    throw Error(ErrorKind::empty_fit, "no reliable pixels to fit");
  }
  if (samples.size() < 6) {
    throw Error(ErrorKind::under_constrained,
                "need at least 6 reliable pixels, got " +
                    std::to_string(samples.size()));
  }

  auto total_sse = [&](const RigidMotion& m) {
    double sse = 0.0;
    for (std::size_t i : samples) {
      const Eigen::Vector3d p = m.r * grid.point[i] + m.t;
      if (!(p.z() > 0.0)) return kInf;
      const double u = rig.fx * p.x() / p.z() + rig.cx - grid.target[i].x();
      const double v = rig.fy * p.y() / p.z() + rig.cy - grid.target[i].y();
      sse += u * u + v * v;
    }
    return sse;
  };

  Vector6d xi = Vector6d::Zero();
  double sse = total_sse(RigidMotion::identity());
  Vector6d best_xi = xi;
  double best_sse = sse;
  double damping = 1e-4;

  for (int iter = 0; iter < 100; ++iter) {
    const RigidMotion m = exp(Twist::from_coeffs(xi));
    Normal normal;
    for (std::size_t i : samples) accumulate_normal(grid, rig, m, i, &normal);
    Vector6d delta;
    Vector6d candidate;
    bool ok = solve_step(normal, damping, &delta) &&
              compose_coeffs(delta, xi, &candidate);
    double sse_candidate = kInf;
    if (ok) sse_candidate = total_sse(exp(Twist::from_coeffs(candidate)));
    if (sse_candidate <= sse) {
      xi = candidate;
      sse = sse_candidate;
      damping = std::max(damping * 0.5, kMinDamping);
      if (sse < best_sse) {
        best_sse = sse;
        best_xi = xi;
      }
      if (delta.norm() < 1e-12) break;
    } else {
      damping = std::min(damping * 10.0, kMaxDamping);
      if (damping >= kMaxDamping) break;
    }
  }
  return exp(Twist::from_coeffs(best_xi));
}

}  // namespace rmflow
