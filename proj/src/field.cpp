#include "rmflow/field.hpp"

namespace rmflow {

namespace {

bool valid_channel_count(int channels) {
  return channels == 1 || channels == 2 || channels == 3 || channels == 6;
}

}  // namespace

Field::Field(int height, int width, int channels, FieldTag tag, double fill)
    : height_(height), width_(width), channels_(channels), tag_(tag) {
  if (height <= 0 || width <= 0) {
    throw Error(ErrorKind::parameter,
                "field dimensions must be positive, got " +
                    std::to_string(height) + "x" + std::to_string(width));
  }
  if (!valid_channel_count(channels)) {
    throw Error(ErrorKind::parameter,
                "field channel count must be one of {1,2,3,6}, got " +
                    std::to_string(channels));
  }
  values_.assign(static_cast<std::size_t>(height) * width * channels, fill);
}

const char* field_tag_name(FieldTag tag) {
  switch (tag) {
    case FieldTag::flow: return "flow";
    case FieldTag::disparity: return "disparity";
    case FieldTag::depth: return "depth";
    case FieldTag::twist6: return "twist6";
    case FieldTag::mask: return "mask";
    case FieldTag::rgb: return "rgb";
    case FieldTag::scalar: return "scalar";
    case FieldTag::label: return "label";
  }
  return "scalar";
}

FieldTag field_tag_from_name(const std::string& name) {
  for (FieldTag tag : {FieldTag::flow, FieldTag::disparity, FieldTag::depth,
                       FieldTag::twist6, FieldTag::mask, FieldTag::rgb,
                       FieldTag::scalar, FieldTag::label}) {
    if (name == field_tag_name(tag)) return tag;
  }
  throw Error(ErrorKind::parse, "unknown field tag '" + name + "'");
}

void require_same_shape(const Field& a, const Field& b, const std::string& what) {
  if (!a.same_shape(b)) {
    throw Error(ErrorKind::dimension,
                what + ": shape mismatch, " + std::to_string(a.height()) + "x" +
                    std::to_string(a.width()) + " vs " +
                    std::to_string(b.height()) + "x" +
                    std::to_string(b.width()));
  }
}

void require_channels(const Field& f, int channels, const std::string& what) {
  if (f.channels() != channels) {
    throw Error(ErrorKind::dimension,
                what + ": expected " + std::to_string(channels) +
                    " channel(s), got " + std::to_string(f.channels()));
  }
}

Field make_mask(int height, int width, double fill) {
  return Field(height, width, 1, FieldTag::mask, fill);
}

}  // namespace rmflow
