#include "rmflow/viz.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <vector>

#include <png.h>

namespace rmflow {

namespace {

// Piecewise-linear color wheel with the traditional sector sizes.
std::vector<std::array<double, 3>> make_color_wheel() {
  const int ry = 15, yg = 6, gc = 4, cb = 11, bm = 13, mr = 6;
  std::vector<std::array<double, 3>> wheel;
  wheel.reserve(ry + yg + gc + cb + bm + mr);
  auto ramp = [&](int n, int from, int to, bool up) {
    for (int i = 0; i < n; ++i) {
      const double f = static_cast<double>(i) / n;
      std::array<double, 3> c{0.0, 0.0, 0.0};
      c[from] = up ? 1.0 : 1.0 - f;
      c[to] = up ? f : 1.0;
      wheel.push_back(c);
    }
  };
  ramp(ry, 0, 1, true);   // red to yellow
  ramp(yg, 0, 1, false);  // yellow to green
  ramp(gc, 1, 2, true);   // green to cyan
  ramp(cb, 1, 2, false);  // cyan to blue
  ramp(bm, 2, 0, true);   // blue to magenta
  ramp(mr, 2, 0, false);  // magenta to red
  return wheel;
}

struct PngWriteCloser {
  png_structp png = nullptr;
  png_infop info = nullptr;
  FILE* file = nullptr;
  ~PngWriteCloser() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (file) std::fclose(file);
  }
};

}  // namespace

Field colorize_flow(const Field& flow, const Field* valid, double* max_flow) {
  require_channels(flow, 2, "colorize_flow");
  if (valid) {
    require_same_shape(flow, *valid, "colorize_flow");
    require_channels(*valid, 1, "colorize_flow valid");
  }
  const int h = flow.height();
  const int w = flow.width();
  auto is_valid = [&](int y, int x) { return !valid || valid->at(y, x) != 0.0; };

  double norm = max_flow ? *max_flow : 0.0;
  if (!(norm > 0.0)) {
    norm = 0.0;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (!is_valid(y, x)) continue;
        norm = std::max(norm, std::hypot(flow.at(y, x, 0), flow.at(y, x, 1)));
      }
    }
    if (!(norm > 0.0)) norm = 1.0;
    if (max_flow) *max_flow = norm;
  }

  static const std::vector<std::array<double, 3>> wheel = make_color_wheel();
  const int ncols = static_cast<int>(wheel.size());

  Field rgb(h, w, 3, FieldTag::rgb, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!is_valid(y, x)) continue;
      const double u = flow.at(y, x, 0) / norm;
      const double v = flow.at(y, x, 1) / norm;
      const double rad = std::min(std::hypot(u, v), 1.0);
      const double angle = std::atan2(-v, -u) / M_PI;  // [-1, 1]
      const double fk = (angle + 1.0) / 2.0 * (ncols - 1);
      const int k0 = static_cast<int>(std::floor(fk));
      const int k1 = (k0 + 1) % ncols;
      const double f = fk - k0;
      for (int c = 0; c < 3; ++c) {
        double col = (1.0 - f) * wheel[k0][c] + f * wheel[k1][c];
        col = 1.0 - rad * (1.0 - col);  // desaturate toward white at zero
        rgb.at(y, x, c) = col;
      }
    }
  }
  return rgb;
}

Field colorize_scalar(const Field& scalar, const Field* valid) {
  require_channels(scalar, 1, "colorize_scalar");
  if (valid) {
    require_same_shape(scalar, *valid, "colorize_scalar");
    require_channels(*valid, 1, "colorize_scalar valid");
  }
  const int h = scalar.height();
  const int w = scalar.width();
  auto is_valid = [&](int y, int x) { return !valid || valid->at(y, x) != 0.0; };

  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!is_valid(y, x)) continue;
      lo = std::min(lo, scalar.at(y, x));
      hi = std::max(hi, scalar.at(y, x));
    }
  }

  Field rgb(h, w, 3, FieldTag::rgb, 0.0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!is_valid(y, x)) continue;
      const double g =
          hi > lo ? (scalar.at(y, x) - lo) / (hi - lo) : 0.5;
      for (int c = 0; c < 3; ++c) rgb.at(y, x, c) = g;
    }
  }
  return rgb;
}

void write_png8(const std::string& path, const Field& rgb,
                const std::vector<std::pair<std::string, std::string>>& text) {
  require_channels(rgb, 3, "write_png8");
  PngWriteCloser ctx;
  ctx.file = std::fopen(path.c_str(), "wb");
  if (!ctx.file) {
    throw Error(ErrorKind::format, "cannot create '" + path + "'");
  }
  ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                    nullptr);
  ctx.info = ctx.png ? png_create_info_struct(ctx.png) : nullptr;
  if (!ctx.png || !ctx.info) {
    throw Error(ErrorKind::format, "png encoder init failed");
  }
  if (setjmp(png_jmpbuf(ctx.png))) {
    throw Error(ErrorKind::format, "'" + path + "' failed to encode");
  }
  png_init_io(ctx.png, ctx.file);
  png_set_compression_level(ctx.png, 6);
  png_set_IHDR(ctx.png, ctx.info, rgb.width(), rgb.height(), 8,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);

  std::vector<png_text> chunks(text.size());
  std::vector<std::string> keys, values;
  keys.reserve(text.size());
  values.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    keys.push_back(text[i].first);
    values.push_back(text[i].second);
    chunks[i] = png_text{};
    chunks[i].compression = PNG_TEXT_COMPRESSION_NONE;
    chunks[i].key = keys.back().data();
    chunks[i].text = values.back().data();
    chunks[i].text_length = values.back().size();
  }
  if (!chunks.empty()) {
    png_set_text(ctx.png, ctx.info, chunks.data(),
                 static_cast<int>(chunks.size()));
  }
  png_write_info(ctx.png, ctx.info);

  std::vector<png_byte> row(static_cast<std::size_t>(rgb.width()) * 3);
  for (int y = 0; y < rgb.height(); ++y) {
    for (int x = 0; x < rgb.width(); ++x) {
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(rgb.at(y, x, c), 0.0, 1.0);
        row[static_cast<std::size_t>(x) * 3 + c] =
            static_cast<png_byte>(std::lround(v * 255.0));
      }
    }
    png_write_row(ctx.png, row.data());
  }
  png_write_end(ctx.png, ctx.info);
}

}  // namespace rmflow
