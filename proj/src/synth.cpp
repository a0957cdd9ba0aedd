#include "rmflow/synth.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <optional>
#include <random>
#include <sstream>

#include <json.hpp>

#include "rmflow/parallel.hpp"

namespace rmflow {

namespace {

constexpr double kOcclusionMargin = 0.01;  // metres of z clearance
constexpr double kRayEps = 1e-12;

std::optional<double> intersect_plane_y0(const Eigen::Vector3d& o,
                                         const Eigen::Vector3d& d) {
  if (std::abs(d.y()) < 1e-15) return std::nullopt;
  const double s = -o.y() / d.y();
  if (!(s > kRayEps)) return std::nullopt;
  return s;
}

std::optional<double> intersect_billboard(const Eigen::Vector3d& o,
                                          const Eigen::Vector3d& d,
                                          const Eigen::Vector3d& size) {
  if (std::abs(d.z()) < 1e-15) return std::nullopt;
  const double s = -o.z() / d.z();
  if (!(s > kRayEps)) return std::nullopt;
  const double px = o.x() + s * d.x();
  const double py = o.y() + s * d.y();
  if (std::abs(px) > 0.5 * size.x() || std::abs(py) > 0.5 * size.y()) {
    return std::nullopt;
  }
  return s;
}

std::optional<double> intersect_box(const Eigen::Vector3d& o,
                                    const Eigen::Vector3d& d,
                                    const Eigen::Vector3d& size) {
  double t0 = -std::numeric_limits<double>::infinity();
  double t1 = std::numeric_limits<double>::infinity();
  for (int a = 0; a < 3; ++a) {
    const double lo = -0.5 * size[a];
    const double hi = 0.5 * size[a];
    if (std::abs(d[a]) < 1e-15) {
      if (o[a] < lo || o[a] > hi) return std::nullopt;
      continue;
    }
    double ta = (lo - o[a]) / d[a];
    double tb = (hi - o[a]) / d[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return std::nullopt;
  }
  if (!(t0 > kRayEps)) return std::nullopt;  // origin inside or behind
  return t0;
}

// One scene object fixed in a particular camera view and frame.
struct PlacedObject {
  ShapeKind shape;
  Eigen::Vector3d size;
  RigidMotion local_from_cam;
};

struct Hit {
  double s = std::numeric_limits<double>::infinity();
  int object = -1;
};

// Rays leave the camera origin with direction (dx, dy, 1), so the hit
// parameter s equals camera-space depth; the clip range applies directly.
Hit cast(const std::vector<PlacedObject>& objects, const Eigen::Vector3d& dir,
         double z_min, double z_max) {
  Hit best;
  for (std::size_t k = 0; k < objects.size(); ++k) {
    const PlacedObject& obj = objects[k];
    const Eigen::Vector3d o = obj.local_from_cam.t;
    const Eigen::Vector3d d = obj.local_from_cam.r * dir;
    std::optional<double> s;
    switch (obj.shape) {
      case ShapeKind::ground_plane: s = intersect_plane_y0(o, d); break;
      case ShapeKind::billboard: s = intersect_billboard(o, d, obj.size); break;
      case ShapeKind::box: s = intersect_box(o, d, obj.size); break;
    }
    if (!s || *s < z_min || *s > z_max) continue;
    if (*s < best.s) {
      best.s = *s;
      best.object = static_cast<int>(k);
    }
  }
  return best;
}

// Box-Muller pairs over a 64-bit engine; one fixed draw order.
class GaussStream {
 public:
  explicit GaussStream(std::uint64_t seed) : rng_(seed) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = (static_cast<double>(rng_() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    spare_ = r * std::sin(2.0 * M_PI * u2);
    has_spare_ = true;
    return r * std::cos(2.0 * M_PI * u2);
  }

 private:
  std::mt19937_64 rng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

using nlohmann::json;

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) {
      if (key == a) {
        ok = true;
        break;
      }
    }
    if (!ok) {
      throw Error(ErrorKind::parse,
                  where + ": unknown key '" + key + "'");
    }
  }
}

Eigen::Vector3d vec3_from(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 3) {
    throw Error(ErrorKind::parse, where + ": expected 3 numbers");
  }
  return Eigen::Vector3d(j[0].get<double>(), j[1].get<double>(),
                         j[2].get<double>());
}

Twist twist_from(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 6) {
    throw Error(ErrorKind::parse, where + ": expected 6 numbers");
  }
  Twist t;
  for (int i = 0; i < 3; ++i) t.v[i] = j[i].get<double>();
  for (int i = 0; i < 3; ++i) t.w[i] = j[3 + i].get<double>();
  return t;
}

json twist_to(const Twist& t) {
  return json::array({t.v.x(), t.v.y(), t.v.z(), t.w.x(), t.w.y(), t.w.z()});
}

}  // namespace

const char* shape_kind_name(ShapeKind kind) {
  switch (kind) {
    case ShapeKind::ground_plane: return "ground_plane";
    case ShapeKind::box: return "box";
    case ShapeKind::billboard: return "billboard";
  }
  return "box";
}

ShapeKind shape_kind_from_name(const std::string& name) {
  for (ShapeKind kind :
       {ShapeKind::ground_plane, ShapeKind::box, ShapeKind::billboard}) {
    if (name == shape_kind_name(kind)) return kind;
  }
  throw Error(ErrorKind::parse, "unknown shape '" + name + "'");
}

RigidMotion PoseSpec::transform() const {
  RigidMotion m;
  m.r = exp(Twist{Eigen::Vector3d::Zero(), axis_angle}).r;
  m.t = translation;
  return m;
}

void SceneSpec::validate() const {
  if (width <= 0 || height <= 0) {
    throw Error(ErrorKind::spec, "scene dimensions must be positive");
  }
  try {
    rig.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::spec, std::string("scene rig: ") + e.what());
  }
  if (!(z_min > 0.0) || !(z_max > z_min)) {
    throw Error(ErrorKind::spec, "need 0 < z_min < z_max");
  }
  if (objects.empty()) {
    throw Error(ErrorKind::spec, "scene has no objects");
  }
  if (!(noise.flow_sigma >= 0.0) || !(noise.disp_sigma >= 0.0)) {
    throw Error(ErrorKind::spec, "noise sigmas must be >= 0");
  }
  if (!camera_motion.coeffs().allFinite()) {
    throw Error(ErrorKind::spec, "camera motion must be finite");
  }
  for (std::size_t i = 0; i < objects.size(); ++i) {
    const ObjectSpec& obj = objects[i];
    const std::string where = "object " + std::to_string(i);
    if (!obj.motion.coeffs().allFinite() ||
        !obj.pose.translation.allFinite() || !obj.pose.axis_angle.allFinite()) {
      throw Error(ErrorKind::spec, where + ": values must be finite");
    }
    if (obj.shape == ShapeKind::box &&
        !(obj.size.x() > 0.0 && obj.size.y() > 0.0 && obj.size.z() > 0.0)) {
      throw Error(ErrorKind::spec, where + ": box extents must be positive");
    }
    if (obj.shape == ShapeKind::billboard &&
        !(obj.size.x() > 0.0 && obj.size.y() > 0.0)) {
      throw Error(ErrorKind::spec,
                  where + ": billboard extents must be positive");
    }
  }
}

SceneSpec load_scene_spec(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorKind::parse, "cannot open '" + path + "'");
  }
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, "'" + path + "': " + e.what());
  }

  SceneSpec spec;
  try {
    check_keys(j,
               {"width", "height", "rig", "camera_motion", "z_min", "z_max",
                "seed", "noise", "objects"},
               "'" + path + "'");
    spec.width = j.at("width").get<int>();
    spec.height = j.at("height").get<int>();
    const json& jr = j.at("rig");
    check_keys(jr, {"fx", "fy", "cx", "cy", "baseline"}, "rig");
    spec.rig.fx = jr.at("fx").get<double>();
    spec.rig.fy = jr.at("fy").get<double>();
    spec.rig.cx = jr.at("cx").get<double>();
    spec.rig.cy = jr.at("cy").get<double>();
    spec.rig.baseline = jr.at("baseline").get<double>();
    if (j.contains("camera_motion")) {
      spec.camera_motion = twist_from(j["camera_motion"], "camera_motion");
    }
    if (j.contains("z_min")) spec.z_min = j["z_min"].get<double>();
    if (j.contains("z_max")) spec.z_max = j["z_max"].get<double>();
    if (j.contains("seed")) spec.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("noise")) {
      const json& jn = j["noise"];
      check_keys(jn, {"flow_sigma", "disp_sigma"}, "noise");
      if (jn.contains("flow_sigma")) {
        spec.noise.flow_sigma = jn["flow_sigma"].get<double>();
      }
      if (jn.contains("disp_sigma")) {
        spec.noise.disp_sigma = jn["disp_sigma"].get<double>();
      }
    }
    const json& jo = j.at("objects");
    if (!jo.is_array()) {
      throw Error(ErrorKind::parse, "'objects' must be an array");
    }
    for (std::size_t i = 0; i < jo.size(); ++i) {
      const json& je = jo[i];
      const std::string where = "object " + std::to_string(i);
      check_keys(je, {"shape", "pose", "size", "motion"}, where);
      ObjectSpec obj;
      obj.shape = shape_kind_from_name(je.at("shape").get<std::string>());
      if (je.contains("pose")) {
        const json& jp = je["pose"];
        check_keys(jp, {"translation", "axis_angle"}, where + " pose");
        if (jp.contains("translation")) {
          obj.pose.translation =
              vec3_from(jp["translation"], where + " translation");
        }
        if (jp.contains("axis_angle")) {
          obj.pose.axis_angle =
              vec3_from(jp["axis_angle"], where + " axis_angle");
        }
      }
      if (je.contains("size")) obj.size = vec3_from(je["size"], where + " size");
      if (je.contains("motion")) {
        obj.motion = twist_from(je["motion"], where + " motion");
      }
      spec.objects.push_back(obj);
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, "'" + path + "': " + e.what());
  }
  spec.validate();
  return spec;
}

void save_scene_spec(const std::string& path, const SceneSpec& spec) {
  spec.validate();
  json jo = json::array();
  for (const ObjectSpec& obj : spec.objects) {
    json je = {{"shape", shape_kind_name(obj.shape)},
               {"pose",
                {{"translation",
                  {obj.pose.translation.x(), obj.pose.translation.y(),
                   obj.pose.translation.z()}},
                 {"axis_angle",
                  {obj.pose.axis_angle.x(), obj.pose.axis_angle.y(),
                   obj.pose.axis_angle.z()}}}},
               {"size", {obj.size.x(), obj.size.y(), obj.size.z()}},
               {"motion", twist_to(obj.motion)}};
    jo.push_back(je);
  }
  const json j = {{"width", spec.width},
                  {"height", spec.height},
                  {"rig",
                   {{"fx", spec.rig.fx},
                    {"fy", spec.rig.fy},
                    {"cx", spec.rig.cx},
                    {"cy", spec.rig.cy},
                    {"baseline", spec.rig.baseline}}},
                  {"camera_motion", twist_to(spec.camera_motion)},
                  {"z_min", spec.z_min},
                  {"z_max", spec.z_max},
                  {"seed", spec.seed},
                  {"noise",
                   {{"flow_sigma", spec.noise.flow_sigma},
                    {"disp_sigma", spec.noise.disp_sigma}}},
                  {"objects", jo}};
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error(ErrorKind::format, "cannot create '" + path + "'");
  }
  out << j.dump(2) << "\n";
}

SceneBundle generate(const SceneSpec& spec, int threads) {
  spec.validate();
  const int h = spec.height;
  const int w = spec.width;
  const CameraRig& rig = spec.rig;
  const double fxb = rig.fx * rig.baseline;

  // World frame = first left camera. Right cameras sit at +baseline on X, the
  // second-frame camera at exp(camera_motion).
  const RigidMotion cam2_pose = exp(spec.camera_motion);
  const RigidMotion cam2_from_world = inverse(cam2_pose);
  RigidMotion right_from_world;
  right_from_world.t = Eigen::Vector3d(-rig.baseline, 0.0, 0.0);

  const std::size_t n_obj = spec.objects.size();
  std::vector<RigidMotion> pose1(n_obj), pose2(n_obj);
  std::vector<RigidMotion> pixel_motion(n_obj), pixel_motion_inv(n_obj);
  std::vector<Vector6d> pixel_twist(n_obj);
  std::vector<char> moving(n_obj, 0);
  for (std::size_t k = 0; k < n_obj; ++k) {
    const ObjectSpec& obj = spec.objects[k];
    pose1[k] = obj.pose.transform();
    pose2[k] = compose(exp(obj.motion), pose1[k]);
    pixel_motion[k] = compose(cam2_from_world, exp(obj.motion));
    pixel_motion_inv[k] = inverse(pixel_motion[k]);
    try {
      pixel_twist[k] = log(pixel_motion[k]).coeffs();
    } catch (const Error& e) {
      throw Error(ErrorKind::spec,
                  "object " + std::to_string(k) +
                      ": relative motion is outside the principal branch");
    }
    moving[k] = obj.motion.is_zero() ? 0 : 1;
  }

  auto place = [&](const RigidMotion& cam_from_world, bool second_frame) {
    std::vector<PlacedObject> placed(n_obj);
    for (std::size_t k = 0; k < n_obj; ++k) {
      placed[k].shape = spec.objects[k].shape;
      placed[k].size = spec.objects[k].size;
      placed[k].local_from_cam = inverse(
          compose(cam_from_world, second_frame ? pose2[k] : pose1[k]));
    }
    return placed;
  };

  const std::vector<PlacedObject> view_l1 = place(RigidMotion::identity(), false);
  const std::vector<PlacedObject> view_r1 = place(right_from_world, false);
  const std::vector<PlacedObject> view_l2 = place(cam2_from_world, true);

  auto ray_dir = [&](double px, double py) {
    return Eigen::Vector3d((px - rig.cx) / rig.fx, (py - rig.cy) / rig.fy, 1.0);
  };
  auto in_frame = [&](double px, double py) {
    return px >= 0.0 && px <= w - 1.0 && py >= 0.0 && py <= h - 1.0;
  };

  SceneBundle out;
  out.rig = rig;
  out.depth1 = Field(h, w, 1, FieldTag::depth, 0.0);
  out.depth2 = Field(h, w, 1, FieldTag::depth, 0.0);
  out.disp1 = Field(h, w, 1, FieldTag::disparity, 0.0);
  out.disp2 = Field(h, w, 1, FieldTag::disparity, 0.0);
  out.disp2_warped = Field(h, w, 1, FieldTag::scalar, 0.0);
  out.flow = Field(h, w, 2, FieldTag::flow, 0.0);
  out.flow_back = Field(h, w, 2, FieldTag::flow, 0.0);
  out.motion = Field(h, w, 6, FieldTag::twist6, 0.0);
  out.occ_flow = make_mask(h, w, 0.0);
  out.occ_flow_back = make_mask(h, w, 0.0);
  out.occ_disp = make_mask(h, w, 0.0);
  out.object_id = Field(h, w, 1, FieldTag::label, 0.0);
  out.fg = make_mask(h, w, 0.0);
  out.valid = make_mask(h, w, 0.0);

  parallel_for_rows(h, threads, [&](int y) {
    for (int x = 0; x < w; ++x) {
      const Eigen::Vector3d dir = ray_dir(x, y);
      const Hit hit = cast(view_l1, dir, spec.z_min, spec.z_max);
      if (hit.object < 0) {
        out.occ_flow.at(y, x) = 1.0;
        out.occ_disp.at(y, x) = 1.0;
        continue;
      }
      const int k = hit.object;
      const Eigen::Vector3d x1 = hit.s * dir;
      const Eigen::Vector3d x2 = apply(pixel_motion[k], x1);
      if (!(x2.z() > 0.0)) {  // moved behind the camera: no defined flow
        out.occ_flow.at(y, x) = 1.0;
        out.occ_disp.at(y, x) = 1.0;
        continue;
      }

      out.valid.at(y, x) = 1.0;
      out.depth1.at(y, x) = hit.s;
      out.disp1.at(y, x) = -fxb / hit.s;
      out.object_id.at(y, x) = k + 1;
      out.fg.at(y, x) = moving[k] ? 1.0 : 0.0;
      for (int c = 0; c < 6; ++c) out.motion.at(y, x, c) = pixel_twist[k][c];

      // Flow as a difference of projections: the projection of x1 is the
      // pixel itself up to rounding, and subtracting it (rather than the
      // integer pixel) cancels that rounding, so identity motion yields
      // exactly zero flow.
      const double px1_self = rig.fx * x1.x() / x1.z() + rig.cx;
      const double py1_self = rig.fy * x1.y() / x1.z() + rig.cy;
      const double px2 = rig.fx * x2.x() / x2.z() + rig.cx;
      const double py2 = rig.fy * x2.y() / x2.z() + rig.cy;
      out.flow.at(y, x, 0) = px2 - px1_self;
      out.flow.at(y, x, 1) = py2 - py1_self;
      out.disp2_warped.at(y, x) = -fxb / x2.z();

      if (!in_frame(px2, py2)) {
        out.occ_flow.at(y, x) = 1.0;
      } else {
        const Hit hit2 =
            cast(view_l2, ray_dir(px2, py2), spec.z_min, spec.z_max);
        if (hit2.object >= 0 && hit2.s < x2.z() - kOcclusionMargin) {
          out.occ_flow.at(y, x) = 1.0;
        }
      }

      const Eigen::Vector3d xr = x1 - Eigen::Vector3d(rig.baseline, 0.0, 0.0);
      const double pxr = rig.fx * xr.x() / xr.z() + rig.cx;
      const double pyr = rig.fy * xr.y() / xr.z() + rig.cy;
      if (!in_frame(pxr, pyr)) {
        out.occ_disp.at(y, x) = 1.0;
      } else {
        const Hit hit_r =
            cast(view_r1, ray_dir(pxr, pyr), spec.z_min, spec.z_max);
        if (hit_r.object >= 0 && hit_r.s < xr.z() - kOcclusionMargin) {
          out.occ_disp.at(y, x) = 1.0;
        }
      }
    }
  });

  parallel_for_rows(h, threads, [&](int y) {
    for (int x = 0; x < w; ++x) {
      const Eigen::Vector3d dir = ray_dir(x, y);
      const Hit hit = cast(view_l2, dir, spec.z_min, spec.z_max);
      if (hit.object < 0) {
        out.occ_flow_back.at(y, x) = 1.0;
        continue;
      }
      const int k = hit.object;
      out.depth2.at(y, x) = hit.s;
      out.disp2.at(y, x) = -fxb / hit.s;
      const Eigen::Vector3d x2 = hit.s * dir;
      const Eigen::Vector3d x1 = apply(pixel_motion_inv[k], x2);
      if (!(x1.z() > 0.0)) {
        out.occ_flow_back.at(y, x) = 1.0;
        continue;
      }
      const double px2_self = rig.fx * x2.x() / x2.z() + rig.cx;
      const double py2_self = rig.fy * x2.y() / x2.z() + rig.cy;
      const double px1 = rig.fx * x1.x() / x1.z() + rig.cx;
      const double py1 = rig.fy * x1.y() / x1.z() + rig.cy;
      out.flow_back.at(y, x, 0) = px1 - px2_self;
      out.flow_back.at(y, x, 1) = py1 - py2_self;
      if (!in_frame(px1, py1)) {
        out.occ_flow_back.at(y, x) = 1.0;
      } else {
        const Hit hit1 =
            cast(view_l1, ray_dir(px1, py1), spec.z_min, spec.z_max);
        if (hit1.object >= 0 && hit1.s < x1.z() - kOcclusionMargin) {
          out.occ_flow_back.at(y, x) = 1.0;
        }
      }
    }
  });

  long invalid = 0;
  for (double v : out.valid.values()) {
    if (v == 0.0) ++invalid;
  }
  if (2 * invalid > static_cast<long>(out.valid.size())) {
    throw Error(ErrorKind::spec,
                "scene leaves " + std::to_string(invalid) + " of " +
                    std::to_string(out.valid.size()) +
                    " pixels without a surface");
  }
  return out;
}

void perturb(SceneBundle* bundle, const NoiseSpec& noise, std::uint64_t seed) {
  if (!(noise.flow_sigma >= 0.0) || !(noise.disp_sigma >= 0.0)) {
    throw Error(ErrorKind::parameter, "noise sigmas must be >= 0");
  }
  bundle->flow_noisy = bundle->flow;
  bundle->disp1_noisy = bundle->disp1;
  bundle->disp2_noisy = bundle->disp2;

  GaussStream gauss(seed);
  const int h = bundle->flow.height();
  const int w = bundle->flow.width();

  if (noise.flow_sigma > 0.0) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (bundle->valid.at(y, x) == 0.0) continue;
        bundle->flow_noisy.at(y, x, 0) += noise.flow_sigma * gauss.next();
        bundle->flow_noisy.at(y, x, 1) += noise.flow_sigma * gauss.next();
      }
    }
  }
  if (noise.disp_sigma > 0.0) {
    for (Field* disp : {&bundle->disp1_noisy, &bundle->disp2_noisy}) {
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          double& d = disp->at(y, x);
          if (!(d < 0.0)) continue;  // invalid pixels stay invalid
          d += noise.disp_sigma * gauss.next();
          if (!(d < 0.0)) d = -1e-3;  // keep the valid sign
        }
      }
    }
  }
}

Bundle to_bundle(const SceneBundle& scene) {
  Bundle bundle;
  bundle.rig = scene.rig;
  auto put = [&](const char* name, const Field& field) {
    if (!field.empty()) bundle.fields.emplace(name, field);
  };
  put("depth1", scene.depth1);
  put("depth2", scene.depth2);
  put("disp1", scene.disp1);
  put("disp2", scene.disp2);
  put("disp2_warped", scene.disp2_warped);
  put("flow", scene.flow);
  put("flow_back", scene.flow_back);
  put("motion", scene.motion);
  put("occ_flow", scene.occ_flow);
  put("occ_flow_back", scene.occ_flow_back);
  put("occ_disp", scene.occ_disp);
  put("object_id", scene.object_id);
  put("fg", scene.fg);
  put("valid", scene.valid);
  put("flow_noisy", scene.flow_noisy);
  put("disp1_noisy", scene.disp1_noisy);
  put("disp2_noisy", scene.disp2_noisy);
  return bundle;
}

}  // namespace rmflow
