#pragma once

#include <map>
#include <optional>
#include <string>

#include "rmflow/field.hpp"
#include "rmflow/geometry.hpp"

namespace rmflow {

// Byte-level layouts live in FORMATS.md. All disparity sign conversion
// between the internal (negative) and on-disk (positive) conventions happens
// here and nowhere else.

struct FlowPng {
  Field flow;   // 2ch px
  Field valid;  // mask
};

// 16-bit RGB PNG, channels (u, v, valid), u/v encoded as value * 64 + 2^15.
// Values outside the representable range or non-finite throw format errors.
FlowPng read_flow_png(const std::string& path);
void write_flow_png(const std::string& path, const Field& flow,
                    const Field& valid);

struct DisparityPng {
  Field disparity;  // 1ch, internal negative convention
  Field valid;      // mask
};

// 16-bit grayscale PNG, magnitude * 256, 0 reserved for invalid.
DisparityPng read_disparity_png(const std::string& path);
void write_disparity_png(const std::string& path, const Field& disparity,
                         const Field& valid);

// Projection-matrix calibration text: "P_left:" and "P_right:" each followed
// by 12 row-major numbers. Intrinsics come from the left matrix, the
// baseline from the horizontal offset difference divided by fx.
CameraRig read_calibration(const std::string& path);

// Key-value rig serialization (fx/fy/cx/cy/baseline), full precision.
CameraRig read_rig(const std::string& path);
void write_rig(const std::string& path, const CameraRig& rig);

// A bundle is a directory: manifest.json describing every field plus one raw
// little-endian float64 file per field. Round trips are byte-exact.
struct Bundle {
  std::map<std::string, Field> fields;
  std::optional<CameraRig> rig;
};

void write_bundle(const std::string& dir, const Bundle& bundle);
Bundle read_bundle(const std::string& dir);

}  // namespace rmflow
