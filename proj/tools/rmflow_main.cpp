// Command-line front end: scene synthesis, flow reconstruction, rigid-motion
// fitting, fusion, disparity refinement, evaluation and rendering. Every
// subcommand is a thin wrapper over the library; all container handling goes
// through the serialization layer.

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "rmflow/error.hpp"
#include "rmflow/field.hpp"
#include "rmflow/fitter.hpp"
#include "rmflow/fusion.hpp"
#include "rmflow/geometry.hpp"
#include "rmflow/io_formats.hpp"
#include "rmflow/metrics.hpp"
#include "rmflow/motion_field.hpp"
#include "rmflow/synth.hpp"
#include "rmflow/viz.hpp"
#include "rmflow/warp.hpp"

namespace {

using namespace rmflow;

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::usage:
      return 2;
    case ErrorKind::format:
    case ErrorKind::parse:
    case ErrorKind::integrity:
      return 3;
    case ErrorKind::dimension:
      return 4;
    default:
      return 5;  // numerical / domain failures
  }
}

int resolve_threads(int flag_value) {
  if (flag_value > 0) return flag_value;
  if (const char* env = std::getenv("RMFLOW_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  return 1;
}

bool ends_with(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() &&
         s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

// A field reference is "PATH" or "PATH:FIELD"; PATH is a bundle directory or,
// where a PNG format exists for the role, a .png file.
struct FieldRef {
  std::string path;
  std::string field;
  bool is_png = false;
};

FieldRef parse_ref(const std::string& ref, const std::string& default_field) {
  FieldRef out;
  const auto colon = ref.rfind(':');
  if (colon != std::string::npos && !ends_with(ref.substr(0, colon), ".png")) {
    out.path = ref.substr(0, colon);
    out.field = ref.substr(colon + 1);
    if (out.path.empty() || out.field.empty()) {
      throw Error(ErrorKind::usage, "bad field reference '" + ref + "'");
    }
  } else {
    out.path = ref;
    out.field = default_field;
  }
  out.is_png = ends_with(out.path, ".png");
  return out;
}

struct LoadedField {
  Field field;
  std::optional<Field> valid;     // only PNG containers carry one
  std::optional<CameraRig> rig;   // only bundles carry one
};

LoadedField load_from_bundle(const FieldRef& ref) {
  Bundle bundle = read_bundle(ref.path);
  const auto it = bundle.fields.find(ref.field);
  if (it == bundle.fields.end()) {
    throw Error(ErrorKind::usage,
                "bundle '" + ref.path + "' has no field '" + ref.field + "'");
  }
  LoadedField out;
  out.field = std::move(it->second);
  out.rig = bundle.rig;
  return out;
}

LoadedField load_flow_ref(const std::string& ref) {
  const FieldRef r = parse_ref(ref, "flow");
  if (r.is_png) {
    FlowPng png = read_flow_png(r.path);
    return LoadedField{std::move(png.flow), std::move(png.valid), std::nullopt};
  }
  return load_from_bundle(r);
}

LoadedField load_disparity_ref(const std::string& ref,
                               const std::string& default_field) {
  const FieldRef r = parse_ref(ref, default_field);
  if (r.is_png) {
    DisparityPng png = read_disparity_png(r.path);
    return LoadedField{std::move(png.disparity), std::move(png.valid),
                       std::nullopt};
  }
  return load_from_bundle(r);
}

LoadedField load_plain_ref(const std::string& ref,
                           const std::string& default_field) {
  const FieldRef r = parse_ref(ref, default_field);
  if (r.is_png) {
    throw Error(ErrorKind::usage,
                "'" + ref + "': this input has no PNG form, use a bundle");
  }
  return load_from_bundle(r);
}

// Rig precedence: inline flags, rig file, calibration file, then whatever a
// bundle input carried.
struct RigOptions {
  std::string rig_path;
  std::string calib_path;
  double fx = 0, fy = 0, cx = 0, cy = 0, baseline = 0;
  int inline_count = 0;

  void add_flags(CLI::App* cmd) {
    cmd->add_option("--rig", rig_path, "rig key-value file");
    cmd->add_option("--calib", calib_path,
                    "projection-matrix calibration file");
    cmd->add_option("--fx", fx, "focal length x (px)")
        ->each([this](const std::string&) { ++inline_count; });
    cmd->add_option("--fy", fy, "focal length y (px)")
        ->each([this](const std::string&) { ++inline_count; });
    cmd->add_option("--cx", cx, "principal point x (px)")
        ->each([this](const std::string&) { ++inline_count; });
    cmd->add_option("--cy", cy, "principal point y (px)")
        ->each([this](const std::string&) { ++inline_count; });
    cmd->add_option("--baseline", baseline, "stereo baseline (m)")
        ->each([this](const std::string&) { ++inline_count; });
  }

  CameraRig resolve(const std::optional<CameraRig>& from_bundle) const {
    if (inline_count > 0) {
      if (inline_count != 5) {
        throw Error(ErrorKind::usage,
                    "inline rig needs all of --fx --fy --cx --cy --baseline");
      }
      CameraRig rig{fx, fy, cx, cy, baseline};
      rig.validate();
      return rig;
    }
    if (!rig_path.empty()) return read_rig(rig_path);
    if (!calib_path.empty()) return read_calibration(calib_path);
    if (from_bundle) return *from_bundle;
    throw Error(ErrorKind::usage,
                "no rig available: pass --rig, --calib, inline intrinsics, or "
                "a bundle input that carries one");
  }
};

Field depth_from_disparity(const Field& disparity, const CameraRig& rig) {
  Field depth(disparity.height(), disparity.width(), 1, FieldTag::depth, 0.0);
  for (int y = 0; y < disparity.height(); ++y) {
    for (int x = 0; x < disparity.width(); ++x) {
      const double d = disparity.at(y, x);
      if (d < 0.0) depth.at(y, x) = rig.fx * rig.baseline / -d;
    }
  }
  return depth;
}

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error(ErrorKind::format, "cannot create '" + path + "'");
  }
  out << text;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---- synth ----------------------------------------------------------------

struct SynthArgs {
  std::string spec_path;
  std::string out_dir;
  bool do_perturb = false;
  std::optional<std::uint64_t> seed;
  int threads = 0;
};

void run_synth(const SynthArgs& args) {
  const SceneSpec spec = load_scene_spec(args.spec_path);
  SceneBundle scene = generate(spec, resolve_threads(args.threads));
  if (args.do_perturb) {
    perturb(&scene, spec.noise, args.seed ? *args.seed : spec.seed);
  }
  const Bundle bundle = to_bundle(scene);
  write_bundle(args.out_dir, bundle);
  long valid = 0;
  for (double v : scene.valid.values()) valid += v != 0.0;
  std::cout << "wrote " << bundle.fields.size() << " fields ("
            << scene.valid.size() << " px, " << valid << " valid) to "
            << args.out_dir << "\n";
}

// ---- reconstruct ----------------------------------------------------------

struct ReconstructArgs {
  std::string disparity_ref;
  std::string motion_ref;
  RigOptions rig;
  std::string out_dir;
  std::string flow_png;
  int threads = 0;
};

void run_reconstruct(const ReconstructArgs& args) {
  LoadedField disp = load_disparity_ref(args.disparity_ref, "disp1");
  LoadedField motion = load_plain_ref(args.motion_ref, "motion");
  const CameraRig rig = args.rig.resolve(disp.rig ? disp.rig : motion.rig);
  const ReconstructionOutput out = reconstruct_flow(
      disp.field, motion.field, rig, resolve_threads(args.threads));
  Bundle bundle;
  bundle.rig = rig;
  bundle.fields.emplace("flow", out.flow);
  bundle.fields.emplace("new_depth", out.new_depth);
  bundle.fields.emplace("valid", out.valid);
  write_bundle(args.out_dir, bundle);
  if (!args.flow_png.empty()) {
    write_flow_png(args.flow_png, out.flow, out.valid);
  }
  std::cout << "reconstructed flow written to " << args.out_dir << "\n";
}

// ---- fit ------------------------------------------------------------------

struct FitArgs {
  std::string flow_ref;
  std::string depth_ref;
  std::string disparity_ref;
  std::string reliable_ref;
  RigOptions rig;
  FitterParams params;
  std::string out_dir;
  bool json = false;
  int threads = 0;
};

void run_fit(const FitArgs& args) {
  LoadedField flow = load_flow_ref(args.flow_ref);
  std::optional<CameraRig> bundle_rig = flow.rig;

  Field depth;
  if (!args.depth_ref.empty() && !args.disparity_ref.empty()) {
    throw Error(ErrorKind::usage, "pass --depth or --disparity, not both");
  }
  if (!args.depth_ref.empty()) {
    LoadedField d = load_plain_ref(args.depth_ref, "depth1");
    if (!bundle_rig) bundle_rig = d.rig;
    depth = std::move(d.field);
  } else if (!args.disparity_ref.empty()) {
    LoadedField d = load_disparity_ref(args.disparity_ref, "disp1");
    if (!bundle_rig) bundle_rig = d.rig;
    const CameraRig rig = args.rig.resolve(bundle_rig);
    depth = depth_from_disparity(d.field, rig);
  } else {
    throw Error(ErrorKind::usage, "fit needs --depth or --disparity");
  }
  const CameraRig rig = args.rig.resolve(bundle_rig);

  Field reliable;
  if (!args.reliable_ref.empty()) {
    reliable = load_plain_ref(args.reliable_ref, "valid").field;
  } else if (flow.valid) {
    reliable = *flow.valid;
  } else {
    reliable = make_mask(flow.field.height(), flow.field.width(), 1.0);
  }

  FitterParams params = args.params;
  params.threads = resolve_threads(args.threads);
  const FitReport report =
      fit_rigid_field(flow.field, depth, reliable, rig, params);

  Bundle bundle;
  bundle.rig = rig;
  bundle.fields.emplace("motion", report.motion);
  bundle.fields.emplace("supported", report.supported);
  write_bundle(args.out_dir, bundle);

  if (args.json) {
    std::cout << "{\n  \"converged\": " << (report.converged ? "true" : "false")
              << ",\n  \"residual_history\": [";
    for (std::size_t i = 0; i < report.residual_history.size(); ++i) {
      std::cout << (i ? ", " : "") << format_double(report.residual_history[i]);
    }
    std::cout << "]\n}\n";
  } else {
    std::cout << "fit " << (report.converged ? "converged" : "ran") << " over "
              << report.residual_history.size() << " iterations, residual "
              << (report.residual_history.empty()
                      ? std::string("n/a")
                      : format_double(report.residual_history.back()))
              << " px, motion written to " << args.out_dir << "\n";
  }
}

// ---- fuse -----------------------------------------------------------------

struct FuseArgs {
  std::string flow_s1_ref;
  std::string occ_s1_ref;
  std::string flow_s2_ref;
  std::string occ_disp_ref;
  std::string out_dir;
};

void run_fuse(const FuseArgs& args) {
  LoadedField s1 = load_flow_ref(args.flow_s1_ref);
  LoadedField occ1 = load_plain_ref(args.occ_s1_ref, "occ_flow");
  LoadedField s2 = load_flow_ref(args.flow_s2_ref);
  LoadedField occd = load_plain_ref(args.occ_disp_ref, "occ_disp");
  const FusionResult out =
      fuse_flows(s1.field, occ1.field, s2.field, occd.field);
  Bundle bundle;
  bundle.fields.emplace("flow", out.flow);
  bundle.fields.emplace("provenance", out.provenance);
  write_bundle(args.out_dir, bundle);
  std::cout << "fused flow written to " << args.out_dir << "\n";
}

// ---- refine ---------------------------------------------------------------

struct RefineArgs {
  std::string d1_ref;
  std::string d2_ref;
  std::string flow_ref;
  std::string motion_ref;
  RigOptions rig;
  RefineParams params;
  bool warp_d2 = false;
  std::string out_dir;
};

void run_refine(const RefineArgs& args) {
  LoadedField d1 = load_disparity_ref(args.d1_ref, "disp1");
  LoadedField d2 = load_disparity_ref(args.d2_ref,
                                      args.warp_d2 ? "disp2" : "disp2_warped");
  LoadedField flow = load_flow_ref(args.flow_ref);
  LoadedField motion = load_plain_ref(args.motion_ref, "motion");
  const CameraRig rig =
      args.rig.resolve(d1.rig ? d1.rig : (motion.rig ? motion.rig : flow.rig));

  Field d2_field = std::move(d2.field);
  if (args.warp_d2) {
    // Sample the raw second-frame disparity at x + flow; a footprint touching
    // any invalid corner gives an invalid (0) sample.
    DisparityChange change =
        disparity_change(d1.field, d2_field, flow.field, rig);
    Field warped(d2_field.height(), d2_field.width(), 1, FieldTag::disparity,
                 0.0);
    for (int y = 0; y < warped.height(); ++y) {
      for (int x = 0; x < warped.width(); ++x) {
        if (change.valid.at(y, x) != 0.0) {
          warped.at(y, x) = d1.field.at(y, x) + change.zeta.at(y, x);
        }
      }
    }
    d2_field = std::move(warped);
  }

  const RefineResult out = refine_disparity(d1.field, d2_field, flow.field,
                                            motion.field, rig, args.params);

  Field d1_refined = d1.field;
  Field d2_refined = d2_field;
  long applied = 0;
  for (int y = 0; y < out.applied.height(); ++y) {
    for (int x = 0; x < out.applied.width(); ++x) {
      if (out.applied.at(y, x) == 0.0) continue;
      d1_refined.at(y, x) += out.delta1.at(y, x);
      d2_refined.at(y, x) += out.delta2.at(y, x);
      ++applied;
    }
  }

  Bundle bundle;
  bundle.rig = rig;
  bundle.fields.emplace("delta1", out.delta1);
  bundle.fields.emplace("delta2", out.delta2);
  bundle.fields.emplace("applied", out.applied);
  bundle.fields.emplace("disp1_refined", d1_refined);
  bundle.fields.emplace("disp2_refined", d2_refined);
  write_bundle(args.out_dir, bundle);
  std::cout << "refined " << applied << " px, written to " << args.out_dir
            << "\n";
}

// ---- eval -----------------------------------------------------------------

struct EvalArgs {
  std::string flow_pred_ref, flow_gt_ref;
  std::string depth_pred_ref, depth_gt_ref;
  double depth_cap = 80.0;
  std::string d1_pred_ref, d1_gt_ref, d2_pred_ref, d2_gt_ref;
  std::string valid_ref, occ_ref, fg_ref;
  std::string out_path;
  bool json = false;
};

void run_eval(const EvalArgs& args) {
  EvalReport report;

  std::optional<LoadedField> flow_pred, flow_gt;
  if (args.flow_pred_ref.empty() != args.flow_gt_ref.empty()) {
    throw Error(ErrorKind::usage, "--flow-pred and --flow-gt come as a pair");
  }
  if (!args.flow_pred_ref.empty()) {
    flow_pred = load_flow_ref(args.flow_pred_ref);
    flow_gt = load_flow_ref(args.flow_gt_ref);
  }

  auto make_valid = [&](const Field& shape_like) {
    if (!args.valid_ref.empty()) {
      return load_plain_ref(args.valid_ref, "valid").field;
    }
    // Intersection of whatever validity the containers provided.
    Field valid = make_mask(shape_like.height(), shape_like.width(), 1.0);
    auto intersect = [&](const std::optional<Field>& mask) {
      if (!mask) return;
      require_same_shape(valid, *mask, "eval valid");
      for (std::size_t i = 0; i < valid.size(); ++i) {
        if (mask->values()[i] == 0.0) valid.values()[i] = 0.0;
      }
    };
    if (flow_pred) intersect(flow_pred->valid);
    if (flow_gt) intersect(flow_gt->valid);
    return valid;
  };

  std::optional<Field> occ, fg;
  if (!args.occ_ref.empty()) occ = load_plain_ref(args.occ_ref, "occ_flow").field;
  if (!args.fg_ref.empty()) fg = load_plain_ref(args.fg_ref, "fg").field;

  if (flow_pred) {
    const Field valid = make_valid(flow_pred->field);
    report.flow = eval_flow(flow_pred->field, flow_gt->field, valid,
                            occ ? &*occ : nullptr, fg ? &*fg : nullptr);
  }

  if (args.depth_pred_ref.empty() != args.depth_gt_ref.empty()) {
    throw Error(ErrorKind::usage, "--depth-pred and --depth-gt come as a pair");
  }
  if (!args.depth_pred_ref.empty()) {
    LoadedField pred = load_plain_ref(args.depth_pred_ref, "depth1");
    LoadedField gt = load_plain_ref(args.depth_gt_ref, "depth1");
    const Field valid = make_valid(pred.field);
    report.depth = eval_depth(pred.field, gt.field, valid, args.depth_cap);
  }

  const bool any_sf = !args.d1_pred_ref.empty() || !args.d1_gt_ref.empty() ||
                      !args.d2_pred_ref.empty() || !args.d2_gt_ref.empty();
  if (any_sf) {
    if (args.d1_pred_ref.empty() || args.d1_gt_ref.empty() ||
        args.d2_pred_ref.empty() || args.d2_gt_ref.empty() || !flow_pred) {
      throw Error(ErrorKind::usage,
                  "scene-flow evaluation needs --d1-pred/--d1-gt/--d2-pred/"
                  "--d2-gt and the flow pair");
    }
    LoadedField d1p = load_disparity_ref(args.d1_pred_ref, "disp1");
    LoadedField d1g = load_disparity_ref(args.d1_gt_ref, "disp1");
    LoadedField d2p = load_disparity_ref(args.d2_pred_ref, "disp2_warped");
    LoadedField d2g = load_disparity_ref(args.d2_gt_ref, "disp2_warped");
    const Field valid = make_valid(d1p.field);
    report.scene_flow = eval_scene_flow(d1p.field, d1g.field, d2p.field,
                                        d2g.field, flow_pred->field,
                                        flow_gt->field, valid,
                                        fg ? &*fg : nullptr);
  }

  if (!report.flow && !report.depth && !report.scene_flow) {
    throw Error(ErrorKind::usage, "eval: nothing to evaluate");
  }

  const std::string text = args.json ? report_json(report) : report_text(report);
  std::cout << text;
  if (!args.out_path.empty()) write_text_file(args.out_path, text);
}

// ---- viz ------------------------------------------------------------------

struct VizArgs {
  std::string input_ref;
  std::string type;  // empty: infer from the field tag
  std::string valid_ref;
  double max_flow = 0.0;
  std::string pca_mode = "joint";
  std::string out_path;
};

void run_viz(const VizArgs& args) {
  LoadedField input;
  if (parse_ref(args.input_ref, "flow").is_png) {
    // A bare PNG is either a flow or a disparity container.
    if (args.type == "disparity") {
      input = load_disparity_ref(args.input_ref, "disp1");
    } else if (args.type.empty() || args.type == "flow") {
      input = load_flow_ref(args.input_ref);
    } else {
      throw Error(ErrorKind::usage,
                  "PNG inputs only exist for flow and disparity");
    }
  } else {
    input = load_plain_ref(args.input_ref, "flow");
  }

  std::string type = args.type;
  if (type.empty()) {
    switch (input.field.tag()) {
      case FieldTag::flow: type = "flow"; break;
      case FieldTag::twist6: type = "motion"; break;
      case FieldTag::disparity: type = "disparity"; break;
      case FieldTag::depth: type = "depth"; break;
      case FieldTag::mask: type = "mask"; break;
      default: type = "scalar"; break;
    }
  }

  std::optional<Field> valid;
  if (!args.valid_ref.empty()) {
    valid = load_plain_ref(args.valid_ref, "valid").field;
  } else if (input.valid) {
    valid = input.valid;
  }

  std::vector<std::pair<std::string, std::string>> text;
  Field rgb;
  if (type == "flow") {
    double norm = args.max_flow;
    rgb = colorize_flow(input.field, valid ? &*valid : nullptr, &norm);
    text.emplace_back("max_flow", format_double(norm));
  } else if (type == "motion") {
    PcaMode mode;
    if (args.pca_mode == "joint") {
      mode = PcaMode::joint;
    } else if (args.pca_mode == "per-channel") {
      mode = PcaMode::per_channel;
    } else {
      throw Error(ErrorKind::usage,
                  "--pca-mode must be joint or per-channel");
    }
    rgb = pca_visualize(input.field, mode, valid ? &*valid : nullptr);
  } else if (type == "disparity" || type == "depth" || type == "mask" ||
             type == "scalar" || type == "label") {
    std::optional<Field> derived;
    if (!valid && (type == "disparity" || type == "depth")) {
      derived = make_mask(input.field.height(), input.field.width(), 0.0);
      for (int y = 0; y < input.field.height(); ++y) {
        for (int x = 0; x < input.field.width(); ++x) {
          const double v = input.field.at(y, x);
          derived->at(y, x) =
              (type == "disparity" ? v < 0.0 : v > 0.0) ? 1.0 : 0.0;
        }
      }
      valid = derived;
    }
    rgb = colorize_scalar(input.field, valid ? &*valid : nullptr);
  } else {
    throw Error(ErrorKind::usage, "unknown render type '" + type + "'");
  }
  write_png8(args.out_path, rgb, text);
  std::cout << "rendered " << type << " to " << args.out_path << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"rigid-motion flow and depth toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "rmflow 1.0.0");

  SynthArgs synth_args;
  auto* synth_cmd = app.add_subcommand(
      "synth", "generate a piecewise-rigid scene bundle from a scene file");
  synth_cmd->set_config("--config");
  synth_cmd->add_option("--spec", synth_args.spec_path, "scene JSON file")
      ->required()
      ->check(CLI::ExistingFile);
  synth_cmd->add_option("--out", synth_args.out_dir, "output bundle directory")
      ->required();
  synth_cmd->add_flag("--perturb", synth_args.do_perturb,
                      "add the scene's noise to copies of flow/disparities");
  std::uint64_t seed_value = 0;
  auto* seed_opt = synth_cmd->add_option(
      "--seed", seed_value, "override the scene seed for --perturb");
  synth_cmd->add_option("--threads", synth_args.threads,
                        "worker threads (default RMFLOW_THREADS or 1)");
  synth_cmd->callback([&] {
    if (*seed_opt) synth_args.seed = seed_value;
    run_synth(synth_args);
  });

  ReconstructArgs rec_args;
  auto* rec_cmd = app.add_subcommand(
      "reconstruct", "turn disparity plus a dense motion field into flow");
  rec_cmd->set_config("--config");
  rec_cmd->add_option("--disparity", rec_args.disparity_ref,
                      "disparity input (bundle[:field] or .png)")
      ->required();
  rec_cmd->add_option("--motion", rec_args.motion_ref,
                      "motion field input (bundle[:field])")
      ->required();
  rec_cmd->add_option("--out", rec_args.out_dir, "output bundle directory")
      ->required();
  rec_cmd->add_option("--flow-png", rec_args.flow_png,
                      "also export the flow as a 16-bit PNG");
  rec_cmd->add_option("--threads", rec_args.threads, "worker threads");
  rec_args.rig.add_flags(rec_cmd);
  rec_cmd->callback([&] { run_reconstruct(rec_args); });

  FitArgs fit_args;
  auto* fit_cmd = app.add_subcommand(
      "fit", "fit a dense rigid-motion field to flow and depth");
  fit_cmd->set_config("--config");
  fit_cmd->add_option("--flow", fit_args.flow_ref, "target flow input")
      ->required();
  fit_cmd->add_option("--depth", fit_args.depth_ref, "depth input");
  fit_cmd->add_option("--disparity", fit_args.disparity_ref,
                      "disparity input (converted to depth)");
  fit_cmd->add_option("--reliable", fit_args.reliable_ref,
                      "reliability mask input");
  fit_cmd->add_option("--out", fit_args.out_dir, "output bundle directory")
      ->required();
  fit_cmd->add_option("--lambda-smooth", fit_args.params.lambda_smooth,
                      "smoothing strength (0 disables)");
  fit_cmd->add_option("--outer-iters", fit_args.params.outer_iters,
                      "outer iterations");
  fit_cmd->add_option("--gn-iters", fit_args.params.gn_iters,
                      "Gauss-Newton steps per outer iteration");
  fit_cmd->add_option("--damping", fit_args.params.damping,
                      "initial Levenberg damping");
  fit_cmd->add_option("--window-radius", fit_args.params.window_radius,
                      "residual aggregation window radius");
  fit_cmd->add_option("--convergence-tol", fit_args.params.convergence_tol,
                      "stop when the residual improves less than this");
  fit_cmd->add_flag("--warm-start-global", fit_args.params.warm_start_global,
                    "seed every pixel with the global rigid fit");
  fit_cmd->add_flag("--json", fit_args.json, "print the fit report as JSON");
  fit_cmd->add_option("--threads", fit_args.threads, "worker threads");
  fit_args.rig.add_flags(fit_cmd);
  fit_cmd->callback([&] { run_fit(fit_args); });

  FuseArgs fuse_args;
  auto* fuse_cmd = app.add_subcommand(
      "fuse", "merge a matched flow with a reconstructed flow");
  fuse_cmd->set_config("--config");
  fuse_cmd->add_option("--flow-s1", fuse_args.flow_s1_ref,
                       "matched flow input")
      ->required();
  fuse_cmd->add_option("--occ-s1", fuse_args.occ_s1_ref,
                       "occlusion mask of the matched flow")
      ->required();
  fuse_cmd->add_option("--flow-s2", fuse_args.flow_s2_ref,
                       "reconstructed flow input")
      ->required();
  fuse_cmd->add_option("--occ-disp", fuse_args.occ_disp_ref,
                       "disparity occlusion mask")
      ->required();
  fuse_cmd->add_option("--out", fuse_args.out_dir, "output bundle directory")
      ->required();
  fuse_cmd->callback([&] { run_fuse(fuse_args); });

  RefineArgs refine_args;
  auto* refine_cmd = app.add_subcommand(
      "refine", "closed-form disparity correction from flow and motion");
  refine_cmd->set_config("--config");
  refine_cmd->add_option("--d1", refine_args.d1_ref, "first disparity input")
      ->required();
  refine_cmd->add_option("--d2", refine_args.d2_ref,
                         "second disparity of first-frame points (see --warp-d2)")
      ->required();
  refine_cmd->add_option("--flow", refine_args.flow_ref, "flow input")
      ->required();
  refine_cmd->add_option("--motion", refine_args.motion_ref,
                         "motion field input")
      ->required();
  refine_cmd->add_option("--out", refine_args.out_dir,
                         "output bundle directory")
      ->required();
  refine_cmd->add_flag("--warp-d2", refine_args.warp_d2,
                       "treat --d2 as a raw second-frame map and warp it by "
                       "the flow first");
  refine_cmd->add_option("--cond-threshold", refine_args.params.cond_threshold,
                         "condition-number rejection threshold");
  refine_cmd->add_option("--max-delta", refine_args.params.max_delta,
                         "correction clamp (px)");
  refine_args.rig.add_flags(refine_cmd);
  refine_cmd->callback([&] { run_refine(refine_args); });

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "error metrics against ground truth");
  eval_cmd->set_config("--config");
  eval_cmd->add_option("--flow-pred", eval_args.flow_pred_ref, "predicted flow");
  eval_cmd->add_option("--flow-gt", eval_args.flow_gt_ref, "ground-truth flow");
  eval_cmd->add_option("--depth-pred", eval_args.depth_pred_ref,
                       "predicted depth");
  eval_cmd->add_option("--depth-gt", eval_args.depth_gt_ref,
                       "ground-truth depth");
  eval_cmd->add_option("--depth-cap", eval_args.depth_cap,
                       "depth evaluation cap (m)");
  eval_cmd->add_option("--d1-pred", eval_args.d1_pred_ref, "predicted disp1");
  eval_cmd->add_option("--d1-gt", eval_args.d1_gt_ref, "ground-truth disp1");
  eval_cmd->add_option("--d2-pred", eval_args.d2_pred_ref, "predicted disp2");
  eval_cmd->add_option("--d2-gt", eval_args.d2_gt_ref, "ground-truth disp2");
  eval_cmd->add_option("--valid", eval_args.valid_ref, "evaluation mask");
  eval_cmd->add_option("--occ", eval_args.occ_ref, "occlusion mask for splits");
  eval_cmd->add_option("--fg", eval_args.fg_ref, "foreground mask for splits");
  eval_cmd->add_option("--out", eval_args.out_path, "also write the report here");
  eval_cmd->add_flag("--json", eval_args.json, "emit JSON instead of text");
  eval_cmd->callback([&] { run_eval(eval_args); });

  VizArgs viz_args;
  auto* viz_cmd = app.add_subcommand("viz", "render a field to an 8-bit PNG");
  viz_cmd->set_config("--config");
  viz_cmd->add_option("--input", viz_args.input_ref, "field input")->required();
  viz_cmd->add_option("--type", viz_args.type,
                      "flow|motion|disparity|depth|mask|scalar|label "
                      "(default: from the field tag)");
  viz_cmd->add_option("--valid", viz_args.valid_ref, "validity mask");
  viz_cmd->add_option("--max-flow", viz_args.max_flow,
                      "fixed flow normalization (px)");
  viz_cmd->add_option("--pca-mode", viz_args.pca_mode,
                      "motion rendering: joint or per-channel");
  viz_cmd->add_option("--out", viz_args.out_path, "output PNG path")
      ->required();
  viz_cmd->callback([&] { run_viz(viz_args); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const rmflow::Error& e) {
    std::cerr << "error (" << error_kind_name(e.kind()) << "): " << e.what()
              << "\n";
    return exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
