#include "rmflow/io_formats.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include <json.hpp>
#include <png.h>

namespace rmflow {

static_assert(std::endian::native == std::endian::little,
              "raw field files assume a little-endian host");

namespace {

constexpr double kFlowScale = 64.0;
constexpr double kFlowOffset = 32768.0;
constexpr double kDisparityScale = 256.0;

struct PngReadCloser {
  png_structp png = nullptr;
  png_infop info = nullptr;
  FILE* file = nullptr;
  ~PngReadCloser() {
    if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    if (file) std::fclose(file);
  }
};

struct PngWriteCloser {
  png_structp png = nullptr;
  png_infop info = nullptr;
  FILE* file = nullptr;
  ~PngWriteCloser() {
    if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
    if (file) std::fclose(file);
  }
};

// Decoded 16-bit PNG as big-endian byte rows, plus geometry.
struct Png16 {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint16_t> samples;  // interleaved, host order

  std::uint16_t at(int y, int x, int c) const {
    return samples[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

Png16 read_png16(const std::string& path, int expect_channels) {
  PngReadCloser ctx;
  ctx.file = std::fopen(path.c_str(), "rb");
  if (!ctx.file) {
    throw Error(ErrorKind::format, "cannot open '" + path + "'");
  }
  unsigned char header[8];
  if (std::fread(header, 1, 8, ctx.file) != 8 ||
      png_sig_cmp(header, 0, 8) != 0) {
    throw Error(ErrorKind::format, "'" + path + "' is not a PNG file");
  }
  ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr,
                                   nullptr);
  ctx.info = ctx.png ? png_create_info_struct(ctx.png) : nullptr;
  if (!ctx.png || !ctx.info) {
    throw Error(ErrorKind::format, "png decoder init failed");
  }
  if (setjmp(png_jmpbuf(ctx.png))) {
    throw Error(ErrorKind::format, "'" + path + "' failed to decode");
  }
  png_init_io(ctx.png, ctx.file);
  png_set_sig_bytes(ctx.png, 8);
  png_read_info(ctx.png, ctx.info);

  const int bit_depth = png_get_bit_depth(ctx.png, ctx.info);
  const int channels = png_get_channels(ctx.png, ctx.info);
  const int color_type = png_get_color_type(ctx.png, ctx.info);
  if (bit_depth != 16) {
    throw Error(ErrorKind::format,
                "'" + path + "' must be 16-bit, got " +
                    std::to_string(bit_depth) + "-bit");
  }
  if (channels != expect_channels ||
      (expect_channels == 3 && color_type != PNG_COLOR_TYPE_RGB) ||
      (expect_channels == 1 && color_type != PNG_COLOR_TYPE_GRAY)) {
    throw Error(ErrorKind::format,
                "'" + path + "' must have " + std::to_string(expect_channels) +
                    " channel(s), got " + std::to_string(channels));
  }

  Png16 out;
  out.width = static_cast<int>(png_get_image_width(ctx.png, ctx.info));
  out.height = static_cast<int>(png_get_image_height(ctx.png, ctx.info));
  out.channels = channels;
  if (out.width <= 0 || out.height <= 0) {
    throw Error(ErrorKind::format, "'" + path + "' has empty dimensions");
  }

  const std::size_t row_samples =
      static_cast<std::size_t>(out.width) * channels;
  std::vector<std::vector<png_byte>> rows(
      out.height, std::vector<png_byte>(row_samples * 2));
  std::vector<png_bytep> row_ptrs(out.height);
  for (int y = 0; y < out.height; ++y) row_ptrs[y] = rows[y].data();
  png_read_image(ctx.png, row_ptrs.data());
  png_read_end(ctx.png, nullptr);

  out.samples.resize(static_cast<std::size_t>(out.height) * row_samples);
  for (int y = 0; y < out.height; ++y) {
    for (std::size_t s = 0; s < row_samples; ++s) {
      // PNG stores samples big-endian.
      out.samples[static_cast<std::size_t>(y) * row_samples + s] =
          static_cast<std::uint16_t>((rows[y][2 * s] << 8) | rows[y][2 * s + 1]);
    }
  }
  return out;
}

void write_png16(const std::string& path, int width, int height, int channels,
                 const std::vector<std::uint16_t>& samples) {
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
  png_set_IHDR(ctx.png, ctx.info, width, height, 16,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(ctx.png, ctx.info);

  const std::size_t row_samples = static_cast<std::size_t>(width) * channels;
  std::vector<png_byte> row(row_samples * 2);
  for (int y = 0; y < height; ++y) {
    for (std::size_t s = 0; s < row_samples; ++s) {
      const std::uint16_t v =
          samples[static_cast<std::size_t>(y) * row_samples + s];
      row[2 * s] = static_cast<png_byte>(v >> 8);
      row[2 * s + 1] = static_cast<png_byte>(v & 0xff);
    }
    png_write_row(ctx.png, row.data());
  }
  png_write_end(ctx.png, ctx.info);
}

std::uint16_t encode_flow_component(double value, const std::string& path) {
  if (!std::isfinite(value)) {
    throw Error(ErrorKind::format,
                "non-finite flow value cannot be written to '" + path + "'");
  }
  const double enc = std::nearbyint(value * kFlowScale + kFlowOffset);
  if (enc < 0.0 || enc > 65535.0) {
    throw Error(ErrorKind::format,
                "flow value " + std::to_string(value) +
                    " px is outside the representable range of '" + path + "'");
  }
  return static_cast<std::uint16_t>(enc);
}

bool valid_field_name(const std::string& name) {
  if (name.empty() || name.size() > 64) return false;
  for (char c : name) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_')) return false;
  }
  return true;
}

}  // namespace

FlowPng read_flow_png(const std::string& path) {
  const Png16 png = read_png16(path, 3);
  FlowPng out{Field(png.height, png.width, 2, FieldTag::flow, 0.0),
              make_mask(png.height, png.width, 0.0)};
  for (int y = 0; y < png.height; ++y) {
    for (int x = 0; x < png.width; ++x) {
      if (png.at(y, x, 2) == 0) continue;
      out.valid.at(y, x) = 1.0;
      out.flow.at(y, x, 0) = (png.at(y, x, 0) - kFlowOffset) / kFlowScale;
      out.flow.at(y, x, 1) = (png.at(y, x, 1) - kFlowOffset) / kFlowScale;
    }
  }
  return out;
}

void write_flow_png(const std::string& path, const Field& flow,
                    const Field& valid) {
  require_same_shape(flow, valid, "write_flow_png");
  require_channels(flow, 2, "write_flow_png flow");
  require_channels(valid, 1, "write_flow_png valid");
  const int h = flow.height();
  const int w = flow.width();
  std::vector<std::uint16_t> samples(static_cast<std::size_t>(h) * w * 3, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (valid.at(y, x) == 0.0) continue;
      const std::size_t s = (static_cast<std::size_t>(y) * w + x) * 3;
      samples[s] = encode_flow_component(flow.at(y, x, 0), path);
      samples[s + 1] = encode_flow_component(flow.at(y, x, 1), path);
      samples[s + 2] = 1;
    }
  }
  write_png16(path, w, h, 3, samples);
}

DisparityPng read_disparity_png(const std::string& path) {
  const Png16 png = read_png16(path, 1);
  DisparityPng out{Field(png.height, png.width, 1, FieldTag::disparity, 0.0),
                   make_mask(png.height, png.width, 0.0)};
  for (int y = 0; y < png.height; ++y) {
    for (int x = 0; x < png.width; ++x) {
      const std::uint16_t enc = png.at(y, x, 0);
      if (enc == 0) continue;  // invalid marker
      out.disparity.at(y, x) = -static_cast<double>(enc) / kDisparityScale;
      out.valid.at(y, x) = 1.0;
    }
  }
  return out;
}

void write_disparity_png(const std::string& path, const Field& disparity,
                         const Field& valid) {
  require_same_shape(disparity, valid, "write_disparity_png");
  require_channels(disparity, 1, "write_disparity_png disparity");
  require_channels(valid, 1, "write_disparity_png valid");
  const int h = disparity.height();
  const int w = disparity.width();
  std::vector<std::uint16_t> samples(static_cast<std::size_t>(h) * w, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (valid.at(y, x) == 0.0) continue;
      const double d = disparity.at(y, x);
      if (!(d < 0.0) || !std::isfinite(d)) {
        throw Error(ErrorKind::format,
                    "valid disparity must be negative, got " +
                        std::to_string(d) + " writing '" + path + "'");
      }
      const double enc = std::nearbyint(-d * kDisparityScale);
      if (enc < 1.0 || enc > 65535.0) {
        throw Error(ErrorKind::format,
                    "disparity " + std::to_string(d) +
                        " px is outside the representable range of '" + path +
                        "'");
      }
      samples[static_cast<std::size_t>(y) * w + x] =
          static_cast<std::uint16_t>(enc);
    }
  }
  write_png16(path, w, h, 1, samples);
}

namespace {

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorKind::parse, "cannot open '" + path + "'");
  }
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

CameraRig read_calibration(const std::string& path) {
  const std::string text = read_text_file(path);
  std::istringstream in(text);
  std::string line;
  std::optional<std::array<double, 12>> left, right;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) {
      throw Error(ErrorKind::parse, "'" + path + "' line " +
                                        std::to_string(lineno) +
                                        ": expected 'key: values'");
    }
    const std::string key = line.substr(first, colon - first);
    if (key != "P_left" && key != "P_right") continue;  // foreign keys pass
    std::istringstream vals(line.substr(colon + 1));
    std::array<double, 12> p{};
    for (int i = 0; i < 12; ++i) {
      if (!(vals >> p[i])) {
        throw Error(ErrorKind::parse,
                    "'" + path + "': " + key + " needs 12 numbers");
      }
    }
    double extra;
    if (vals >> extra) {
      throw Error(ErrorKind::parse,
                  "'" + path + "': " + key + " has more than 12 numbers");
    }
    (key == "P_left" ? left : right) = p;
  }
  if (!left) {
    throw Error(ErrorKind::parse, "'" + path + "': missing key P_left");
  }
  if (!right) {
    throw Error(ErrorKind::parse, "'" + path + "': missing key P_right");
  }

  CameraRig rig;
  rig.fx = (*left)[0];
  rig.fy = (*left)[5];
  rig.cx = (*left)[2];
  rig.cy = (*left)[6];
  if (!(rig.fx > 0.0)) {
    throw Error(ErrorKind::parse, "'" + path + "': fx must be positive");
  }
  rig.baseline = ((*left)[3] - (*right)[3]) / rig.fx;
  try {
    rig.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::parse, "'" + path + "': " + e.what());
  }
  return rig;
}

CameraRig read_rig(const std::string& path) {
  const std::string text = read_text_file(path);
  std::istringstream in(text);
  std::string line;
  std::map<std::string, double> entries;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos) {
      throw Error(ErrorKind::parse, "'" + path + "' line " +
                                        std::to_string(lineno) +
                                        ": expected 'key: value'");
    }
    const std::string key = line.substr(first, colon - first);
    std::istringstream vals(line.substr(colon + 1));
    double value;
    if (!(vals >> value)) {
      throw Error(ErrorKind::parse,
                  "'" + path + "': value for '" + key + "' is not a number");
    }
    if (!entries.emplace(key, value).second) {
      throw Error(ErrorKind::parse, "'" + path + "': duplicate key '" + key + "'");
    }
  }
  CameraRig rig;
  auto take = [&](const char* key) {
    const auto it = entries.find(key);
    if (it == entries.end()) {
      throw Error(ErrorKind::parse,
                  "'" + path + "': missing key '" + std::string(key) + "'");
    }
    const double v = it->second;
    entries.erase(it);
    return v;
  };
  rig.fx = take("fx");
  rig.fy = take("fy");
  rig.cx = take("cx");
  rig.cy = take("cy");
  rig.baseline = take("baseline");
  if (!entries.empty()) {
    throw Error(ErrorKind::parse,
                "'" + path + "': unknown key '" + entries.begin()->first + "'");
  }
  try {
    rig.validate();
  } catch (const Error& e) {
    throw Error(ErrorKind::parse, "'" + path + "': " + e.what());
  }
  return rig;
}

void write_rig(const std::string& path, const CameraRig& rig) {
  rig.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw Error(ErrorKind::format, "cannot create '" + path + "'");
  }
  char buf[64];
  auto line = [&](const char* key, double value) {
    std::snprintf(buf, sizeof(buf), "%.17g", value);
    out << key << ": " << buf << "\n";
  };
  line("fx", rig.fx);
  line("fy", rig.fy);
  line("cx", rig.cx);
  line("cy", rig.cy);
  line("baseline", rig.baseline);
}

void write_bundle(const std::string& dir, const Bundle& bundle) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  nlohmann::json fields = nlohmann::json::object();
  for (const auto& [name, field] : bundle.fields) {
    if (!valid_field_name(name)) {
      throw Error(ErrorKind::format,
                  "field name '" + name + "' is not storable");
    }
    if (field.empty()) {
      throw Error(ErrorKind::format, "field '" + name + "' is empty");
    }
    fields[name] = {{"tag", field_tag_name(field.tag())},
                    {"height", field.height()},
                    {"width", field.width()},
                    {"channels", field.channels()},
                    {"encoding", "f64le"},
                    {"file", name + ".f64"}};
    const fs::path file = fs::path(dir) / (name + ".f64");
    std::ofstream out(file, std::ios::binary);
    if (!out) {
      throw Error(ErrorKind::format, "cannot create '" + file.string() + "'");
    }
    out.write(reinterpret_cast<const char*>(field.data()),
              static_cast<std::streamsize>(field.size() * sizeof(double)));
    if (!out) {
      throw Error(ErrorKind::format, "short write to '" + file.string() + "'");
    }
  }

  nlohmann::json manifest = {{"version", 1}, {"fields", fields}};
  if (bundle.rig) {
    bundle.rig->validate();
    manifest["rig"] = {{"fx", bundle.rig->fx},
                       {"fy", bundle.rig->fy},
                       {"cx", bundle.rig->cx},
                       {"cy", bundle.rig->cy},
                       {"baseline", bundle.rig->baseline}};
  }
  std::ofstream out(fs::path(dir) / "manifest.json", std::ios::binary);
  if (!out) {
    throw Error(ErrorKind::format,
                "cannot create manifest in '" + dir + "'");
  }
  out << manifest.dump(2) << "\n";
}

Bundle read_bundle(const std::string& dir) {
  namespace fs = std::filesystem;
  const fs::path manifest_path = fs::path(dir) / "manifest.json";
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) {
    throw Error(ErrorKind::format,
                "'" + dir + "' is not a bundle (no manifest.json)");
  }
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse,
                "'" + manifest_path.string() + "': " + e.what());
  }

  Bundle bundle;
  try {
    if (manifest.at("version").get<int>() != 1) {
      throw Error(ErrorKind::integrity,
                  "unsupported bundle version in '" + dir + "'");
    }
    if (manifest.contains("rig")) {
      const auto& jr = manifest["rig"];
      CameraRig rig;
      rig.fx = jr.at("fx").get<double>();
      rig.fy = jr.at("fy").get<double>();
      rig.cx = jr.at("cx").get<double>();
      rig.cy = jr.at("cy").get<double>();
      rig.baseline = jr.at("baseline").get<double>();
      rig.validate();
      bundle.rig = rig;
    }
    for (const auto& [name, jf] : manifest.at("fields").items()) {
      if (!valid_field_name(name)) {
        throw Error(ErrorKind::integrity,
                    "illegal field name '" + name + "' in '" + dir + "'");
      }
      const int height = jf.at("height").get<int>();
      const int width = jf.at("width").get<int>();
      const int channels = jf.at("channels").get<int>();
      const FieldTag tag = field_tag_from_name(jf.at("tag").get<std::string>());
      if (jf.at("encoding").get<std::string>() != "f64le") {
        throw Error(ErrorKind::integrity,
                    "unknown encoding for field '" + name + "'");
      }
      Field field;
      try {
        field = Field(height, width, channels, tag, 0.0);
      } catch (const Error& e) {
        throw Error(ErrorKind::integrity,
                    "field '" + name + "': " + e.what());
      }
      const fs::path file = fs::path(dir) / jf.at("file").get<std::string>();
      std::ifstream data(file, std::ios::binary);
      if (!data) {
        throw Error(ErrorKind::integrity,
                    "missing data file '" + file.string() + "'");
      }
      data.seekg(0, std::ios::end);
      const auto bytes = static_cast<std::size_t>(data.tellg());
      if (bytes != field.size() * sizeof(double)) {
        throw Error(ErrorKind::integrity,
                    "'" + file.string() + "' holds " + std::to_string(bytes) +
                        " bytes, manifest expects " +
                        std::to_string(field.size() * sizeof(double)));
      }
      data.seekg(0);
      data.read(reinterpret_cast<char*>(field.data()),
                static_cast<std::streamsize>(bytes));
      if (!data) {
        throw Error(ErrorKind::integrity,
                    "short read from '" + file.string() + "'");
      }
      bundle.fields.emplace(name, std::move(field));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::parse,
                "'" + manifest_path.string() + "': " + e.what());
  }
  return bundle;
}

}  // namespace rmflow
