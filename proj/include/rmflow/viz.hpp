#pragma once

#include <string>
#include <utility>
#include <vector>

#include "rmflow/field.hpp"

namespace rmflow {

// Classic optical-flow color wheel: hue from direction, saturation from
// magnitude. max_flow > 0 fixes the normalization; otherwise the maximum
// valid magnitude is used and written back so callers can record it.
// Invalid pixels render black.
Field colorize_flow(const Field& flow, const Field* valid, double* max_flow);

// Grayscale ramp over valid magnitudes (min to max); invalid pixels black.
Field colorize_scalar(const Field& scalar, const Field* valid);

// Writes an rgb field (values clamped to [0, 1]) as an 8-bit PNG; text pairs
// become tEXt chunks, e.g. the normalization constant of a flow rendering.
void write_png8(const std::string& path, const Field& rgb,
                const std::vector<std::pair<std::string, std::string>>& text = {});

}  // namespace rmflow
