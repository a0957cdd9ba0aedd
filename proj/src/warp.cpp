#include "rmflow/warp.hpp"

#include <cmath>

namespace rmflow {

namespace {

struct BilinearCell {
  int x0, y0, x1, y1;
  double wx, wy;  // fraction toward (x1, y1)
};

bool locate(double px, double py, int width, int height, BilinearCell* cell) {
  if (!(px >= 0.0) || !(px <= width - 1.0) || !(py >= 0.0) ||
      !(py <= height - 1.0)) {
    return false;  // also rejects NaN
  }
  int x0 = static_cast<int>(std::floor(px));
  int y0 = static_cast<int>(std::floor(py));
  if (x0 > width - 2) x0 = width > 1 ? width - 2 : 0;
  if (y0 > height - 2) y0 = height > 1 ? height - 2 : 0;
  cell->x0 = x0;
  cell->y0 = y0;
  cell->x1 = width > 1 ? x0 + 1 : x0;
  cell->y1 = height > 1 ? y0 + 1 : y0;
  cell->wx = px - x0;
  cell->wy = py - y0;
  return true;
}

}  // namespace

WarpResult bilinear_warp(const Field& src, const Field& flow) {
  require_same_shape(src, flow, "bilinear_warp");
  require_channels(flow, 2, "bilinear_warp flow");

  const int h = src.height();
  const int w = src.width();
  const int ch = src.channels();
  WarpResult out{Field(h, w, ch, src.tag(), 0.0), make_mask(h, w, 0.0)};

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double px = x + flow.at(y, x, 0);
      const double py = y + flow.at(y, x, 1);
      BilinearCell cell;
      if (!locate(px, py, w, h, &cell)) continue;
      const double w00 = (1.0 - cell.wx) * (1.0 - cell.wy);
      const double w10 = cell.wx * (1.0 - cell.wy);
      const double w01 = (1.0 - cell.wx) * cell.wy;
      const double w11 = cell.wx * cell.wy;
      for (int c = 0; c < ch; ++c) {
        out.value.at(y, x, c) = w00 * src.at(cell.y0, cell.x0, c) +
                                w10 * src.at(cell.y0, cell.x1, c) +
                                w01 * src.at(cell.y1, cell.x0, c) +
                                w11 * src.at(cell.y1, cell.x1, c);
      }
      out.mask.at(y, x) = 1.0;
    }
  }
  return out;
}

Field fb_occlusion(const Field& forward, const Field& backward,
                   const OcclusionParams& params) {
  require_same_shape(forward, backward, "fb_occlusion");
  require_channels(forward, 2, "fb_occlusion forward");
  require_channels(backward, 2, "fb_occlusion backward");
  if (!(params.alpha1 >= 0.0) || !(params.alpha2 >= 0.0)) {
    throw Error(ErrorKind::parameter, "occlusion tolerances must be >= 0");
  }

  const int h = forward.height();
  const int w = forward.width();
  Field occ = make_mask(h, w, 0.0);

  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double fu = forward.at(y, x, 0);
      const double fv = forward.at(y, x, 1);
      const double px = x + fu;
      const double py = y + fv;
      BilinearCell cell;
      if (!locate(px, py, w, h, &cell)) {
        occ.at(y, x) = 1.0;  // left the frame: nothing to verify against
        continue;
      }
      const double w00 = (1.0 - cell.wx) * (1.0 - cell.wy);
      const double w10 = cell.wx * (1.0 - cell.wy);
      const double w01 = (1.0 - cell.wx) * cell.wy;
      const double w11 = cell.wx * cell.wy;
      const double bu = w00 * backward.at(cell.y0, cell.x0, 0) +
                        w10 * backward.at(cell.y0, cell.x1, 0) +
                        w01 * backward.at(cell.y1, cell.x0, 0) +
                        w11 * backward.at(cell.y1, cell.x1, 0);
      const double bv = w00 * backward.at(cell.y0, cell.x0, 1) +
                        w10 * backward.at(cell.y0, cell.x1, 1) +
                        w01 * backward.at(cell.y1, cell.x0, 1) +
                        w11 * backward.at(cell.y1, cell.x1, 1);

      const double lhs = (fu + bu) * (fu + bu) + (fv + bv) * (fv + bv);
      const double rhs =
          params.alpha1 * (fu * fu + fv * fv + bu * bu + bv * bv) +
          params.alpha2;
      const bool consistent = lhs < rhs;
      const bool occluded = params.flip_inequality ? consistent : !consistent;
      occ.at(y, x) = occluded ? 1.0 : 0.0;
    }
  }
  return occ;
}

Field mask_union(const std::vector<const Field*>& masks) {
  if (masks.empty()) {
    throw Error(ErrorKind::parameter, "mask_union needs at least one mask");
  }
  const Field& first = *masks.front();
  require_channels(first, 1, "mask_union");
  Field out = make_mask(first.height(), first.width(), 0.0);
  for (const Field* mask : masks) {
    require_same_shape(first, *mask, "mask_union");
    require_channels(*mask, 1, "mask_union");
    for (std::size_t i = 0; i < out.size(); ++i) {
      if (mask->values()[i] != 0.0) out.values()[i] = 1.0;
    }
  }
  return out;
}

Field mask_not(const Field& mask) {
  require_channels(mask, 1, "mask_not");
  Field out = make_mask(mask.height(), mask.width(), 0.0);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out.values()[i] = mask.values()[i] != 0.0 ? 0.0 : 1.0;
  }
  return out;
}

}  // namespace rmflow
