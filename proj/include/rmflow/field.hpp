#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "rmflow/error.hpp"

namespace rmflow {

// What a field's channels mean. Tags gate conversions and serialization:
//   flow      2ch, px displacement (u, v)
//   disparity 1ch, px; valid values are strictly negative, 0 marks invalid
//   depth     1ch, metres; valid values are strictly positive, 0 marks invalid
//   twist6    6ch, se(3) coordinates, linear velocity first
//   mask      1ch, values in {0, 1}
//   rgb       3ch, values in [0, 1]
//   scalar    1ch, unconstrained (e.g. disparity change, signed)
//   label     1ch, small non-negative integers (e.g. object ids)
enum class FieldTag { flow, disparity, depth, twist6, mask, rgb, scalar, label };

const char* field_tag_name(FieldTag tag);
FieldTag field_tag_from_name(const std::string& name);  // throws parse

// Dense H x W x C grid of doubles, row-major, channels interleaved.
class Field {
 public:
  Field() = default;
  Field(int height, int width, int channels, FieldTag tag, double fill = 0.0);

  int height() const { return height_; }
  int width() const { return width_; }
  int channels() const { return channels_; }
  FieldTag tag() const { return tag_; }
  void set_tag(FieldTag tag) { tag_ = tag; }

  bool empty() const { return values_.empty(); }
  std::size_t size() const { return values_.size(); }

  double& at(int y, int x, int c = 0) { return values_[index(y, x, c)]; }
  double at(int y, int x, int c = 0) const { return values_[index(y, x, c)]; }

  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  bool same_shape(const Field& other) const {
    return height_ == other.height_ && width_ == other.width_;
  }
  bool same_layout(const Field& other) const {
    return same_shape(other) && channels_ == other.channels_;
  }

 private:
  std::size_t index(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * width_ + x) * channels_ + c;
  }

  int height_ = 0;
  int width_ = 0;
  int channels_ = 0;
  FieldTag tag_ = FieldTag::scalar;
  std::vector<double> values_;
};

// Shape/channel preconditions shared by every multi-field op.
void require_same_shape(const Field& a, const Field& b, const std::string& what);
void require_channels(const Field& f, int channels, const std::string& what);

Field make_mask(int height, int width, double fill = 0.0);

}  // namespace rmflow
