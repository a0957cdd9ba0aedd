#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "rmflow/field.hpp"
#include "rmflow/geometry.hpp"
#include "rmflow/io_formats.hpp"
#include "rmflow/se3.hpp"

namespace rmflow {

enum class ShapeKind { ground_plane, box, billboard };

const char* shape_kind_name(ShapeKind kind);
ShapeKind shape_kind_from_name(const std::string& name);  // throws parse

// Placement written directly: rotation is the exponential of the axis-angle
// vector alone, translation is applied as-is (no se(3) coupling), so
// hand-authored scene files mean what they say.
struct PoseSpec {
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();
  Eigen::Vector3d axis_angle = Eigen::Vector3d::Zero();

  RigidMotion transform() const;
};

struct ObjectSpec {
  ShapeKind shape = ShapeKind::box;
  PoseSpec pose;
  // box: full extents; billboard: extents in its local xy plane (z unused);
  // ground_plane: unused (infinite plane y = 0 in local coordinates).
  Eigen::Vector3d size = Eigen::Vector3d::Ones();
  Twist motion;  // world-frame motion between the two frames
};

struct NoiseSpec {
  double flow_sigma = 0.0;  // px, per component
  double disp_sigma = 0.0;  // px
};

struct SceneSpec {
  int width = 0;
  int height = 0;
  CameraRig rig;
  Twist camera_motion;  // camera pose change between frames, world frame
  double z_min = 0.5;
  double z_max = 80.0;
  std::uint64_t seed = 0;
  NoiseSpec noise;
  std::vector<ObjectSpec> objects;

  void validate() const;
};

SceneSpec load_scene_spec(const std::string& path);
void save_scene_spec(const std::string& path, const SceneSpec& spec);

// Analytic ground truth for one rectified stereo pair over two frames. The
// world frame coincides with the first left camera. Every pixel quantity is
// an exact ray-cast evaluation (no rasterization), a pure function of the
// scene description; the seed only drives perturb(). Pixels whose ray hits
// nothing inside
// [z_min, z_max] are globally invalid (valid = 0, disparities 0).
struct SceneBundle {
  CameraRig rig;
  Field depth1;        // first-frame depth
  Field depth2;        // second-frame depth (second-frame pixels)
  Field disp1;         // first-frame disparity, negative, 0 invalid
  Field disp2;         // second-frame disparity (second-frame pixels)
  Field disp2_warped;  // second disparity of each first-frame point
  Field flow;          // first -> second
  Field flow_back;     // second -> first
  Field motion;        // per-pixel twist log(cam2^-1 * object_motion)
  Field occ_flow;      // z-buffer occlusion of the forward flow
  Field occ_flow_back; // z-buffer occlusion of the backward flow
  Field occ_disp;      // z-buffer occlusion seen from the right camera
  Field object_id;     // 0 none, else object index + 1
  Field fg;            // pixels of objects with nonzero motion
  Field valid;         // surface hit in frame one within the depth range
  Field flow_noisy;    // empty unless perturbed
  Field disp1_noisy;
  Field disp2_noisy;
};

SceneBundle generate(const SceneSpec& spec, int threads = 1);

// Adds Gaussian noise to copies of flow/disp1/disp2 (originals untouched).
// Zero sigma copies exactly; invalid pixels stay invalid; noisy disparities
// are kept strictly negative. Deterministic in (bundle, noise, seed).
void perturb(SceneBundle* bundle, const NoiseSpec& noise, std::uint64_t seed);

// Serializes every non-empty field plus the rig under fixed names.
Bundle to_bundle(const SceneBundle& scene);

}  // namespace rmflow
