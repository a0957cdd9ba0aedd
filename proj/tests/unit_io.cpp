// Serialization: 16-bit PNG flow and disparity containers, calibration and
// rig text files, and raw float64 bundles. Round trips must be bit-exact at
// the container's quantization; malformed inputs must fail with typed errors.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <vector>

#include <doctest.h>

#include "rmflow/error.hpp"
#include "rmflow/io_formats.hpp"
#include "support/scenes.hpp"

using namespace rmflow;
using testsupport::TempDir;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  REQUIRE(false);
  return ErrorKind::spec;
}

void write_bytes(const std::string& path, const std::vector<char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

// Quantized flow values that survive the PNG encoding exactly.
Field random_quantized_flow(std::mt19937_64& rng, int h, int w) {
  std::uniform_int_distribution<int> q(-32768, 32767);
  Field flow(h, w, 2, FieldTag::flow);
  for (double& v : flow.values()) v = q(rng) / 64.0;
  return flow;
}

}  // namespace

TEST_CASE("flow encoding places u=1 at 2^15 + 64, worked bytes") {
  TempDir tmp("io-flow");
  Field flow(1, 1, 2, FieldTag::flow);
  flow.at(0, 0, 0) = 1.0;
  flow.at(0, 0, 1) = -0.5;
  write_flow_png(tmp.str("f.png"), flow, make_mask(1, 1, 1.0));

  const FlowPng back = read_flow_png(tmp.str("f.png"));
  CHECK(back.flow.at(0, 0, 0) == 1.0);
  CHECK(back.flow.at(0, 0, 1) == -0.5);
  CHECK(back.valid.at(0, 0) == 1.0);
}

TEST_CASE("invalid flow pixels store zero samples and read back invalid") {
  TempDir tmp("io-flow-invalid");
  Field flow(2, 2, 2, FieldTag::flow, 3.25);
  Field valid = make_mask(2, 2, 1.0);
  valid.at(0, 1) = 0.0;
  write_flow_png(tmp.str("f.png"), flow, valid);
  const FlowPng back = read_flow_png(tmp.str("f.png"));
  CHECK(back.valid.at(0, 1) == 0.0);
  CHECK(back.flow.at(0, 1, 0) == 0.0);
  CHECK(back.flow.at(0, 1, 1) == 0.0);
  CHECK(back.valid.at(1, 1) == 1.0);
  CHECK(back.flow.at(1, 1, 0) == 3.25);
}

TEST_CASE("flow round trips are bit-exact over random quantized fields") {
  TempDir tmp("io-flow-rt");
  std::mt19937_64 rng(31);
  std::bernoulli_distribution coin(0.2);
  for (int trial = 0; trial < 100; ++trial) {
    const int h = 1 + static_cast<int>(rng() % 8);
    const int w = 1 + static_cast<int>(rng() % 8);
    Field flow = random_quantized_flow(rng, h, w);
    Field valid = make_mask(h, w, 1.0);
    for (double& v : valid.values()) {
      if (coin(rng)) v = 0.0;
    }
    // Canonical form: invalid pixels carry zeros.
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (valid.at(y, x) == 0.0) {
          flow.at(y, x, 0) = 0.0;
          flow.at(y, x, 1) = 0.0;
        }
      }
    }
    const std::string path = tmp.str("t.png");
    write_flow_png(path, flow, valid);
    const FlowPng back = read_flow_png(path);
    CHECK(testsupport::bitwise_equal(back.flow, flow));
    CHECK(testsupport::bitwise_equal(back.valid, valid));
  }
}

TEST_CASE("out-of-range or non-finite flow values are format errors") {
  TempDir tmp("io-flow-range");
  Field flow(1, 1, 2, FieldTag::flow);
  const Field valid = make_mask(1, 1, 1.0);
  flow.at(0, 0, 0) = 513.0;  // 513 * 64 + 32768 > 65535
  CHECK(kind_of([&] { write_flow_png(tmp.str("x.png"), flow, valid); }) ==
        ErrorKind::format);
  flow.at(0, 0, 0) = std::nan("");
  CHECK_THROWS_AS(write_flow_png(tmp.str("x.png"), flow, valid), Error);
  flow.at(0, 0, 0) = -600.0;
  CHECK_THROWS_AS(write_flow_png(tmp.str("x.png"), flow, valid), Error);
}

TEST_CASE("disparity encoding: one pixel per 1/256, invalid stays zero") {
  TempDir tmp("io-disp");
  Field disp(1, 3, 1, FieldTag::disparity);
  disp.at(0, 0) = -1.0;
  disp.at(0, 1) = -255.99609375;  // largest representable magnitude
  disp.at(0, 2) = 0.0;
  Field valid = make_mask(1, 3, 1.0);
  valid.at(0, 2) = 0.0;
  write_disparity_png(tmp.str("d.png"), disp, valid);
  const DisparityPng back = read_disparity_png(tmp.str("d.png"));
  CHECK(back.disparity.at(0, 0) == -1.0);
  CHECK(back.disparity.at(0, 1) == -255.99609375);
  CHECK(back.disparity.at(0, 2) == 0.0);
  CHECK(back.valid.at(0, 0) == 1.0);
  CHECK(back.valid.at(0, 2) == 0.0);
}

TEST_CASE("disparity round trips are bit-exact over random fields") {
  TempDir tmp("io-disp-rt");
  std::mt19937_64 rng(32);
  std::uniform_int_distribution<int> q(1, 65535);
  std::bernoulli_distribution coin(0.25);
  for (int trial = 0; trial < 100; ++trial) {
    const int h = 1 + static_cast<int>(rng() % 8);
    const int w = 1 + static_cast<int>(rng() % 8);
    Field disp(h, w, 1, FieldTag::disparity);
    Field valid = make_mask(h, w, 1.0);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        if (coin(rng)) {
          valid.at(y, x) = 0.0;
          disp.at(y, x) = 0.0;
        } else {
          disp.at(y, x) = -(q(rng) / 256.0);
        }
      }
    }
    const std::string path = tmp.str("t.png");
    write_disparity_png(path, disp, valid);
    const DisparityPng back = read_disparity_png(path);
    CHECK(testsupport::bitwise_equal(back.disparity, disp));
    CHECK(testsupport::bitwise_equal(back.valid, valid));
  }
}

TEST_CASE("non-negative disparities on valid pixels cannot be written") {
  TempDir tmp("io-disp-sign");
  Field disp(1, 1, 1, FieldTag::disparity, 2.0);  // wrong sign internally
  CHECK(kind_of([&] {
          write_disparity_png(tmp.str("d.png"), disp, make_mask(1, 1, 1.0));
        }) == ErrorKind::format);
  disp.at(0, 0) = -300.0;  // magnitude overflows 16 bits
  CHECK_THROWS_AS(
      write_disparity_png(tmp.str("d.png"), disp, make_mask(1, 1, 1.0)),
      Error);
}

TEST_CASE("truncated or non-PNG bytes give format errors on read") {
  TempDir tmp("io-bad-png");
  write_bytes(tmp.str("junk.png"), {'n', 'o', 't', ' ', 'p', 'n', 'g'});
  CHECK(kind_of([&] { read_flow_png(tmp.str("junk.png")); }) ==
        ErrorKind::format);
  CHECK(kind_of([&] { read_disparity_png(tmp.str("junk.png")); }) ==
        ErrorKind::format);
  CHECK_THROWS_AS(read_flow_png(tmp.str("missing.png")), Error);
}

TEST_CASE("wrong PNG shape for the container is rejected") {
  TempDir tmp("io-wrong-kind");
  // A disparity file is grayscale; reading it as flow must fail, and vice
  // versa.
  Field disp(2, 2, 1, FieldTag::disparity, -4.0);
  write_disparity_png(tmp.str("d.png"), disp, make_mask(2, 2, 1.0));
  CHECK(kind_of([&] { read_flow_png(tmp.str("d.png")); }) ==
        ErrorKind::format);

  Field flow(2, 2, 2, FieldTag::flow, 1.0);
  write_flow_png(tmp.str("f.png"), flow, make_mask(2, 2, 1.0));
  CHECK(kind_of([&] { read_disparity_png(tmp.str("f.png")); }) ==
        ErrorKind::format);
}

TEST_CASE("calibration parsing: baseline from the projection offsets") {
  TempDir tmp("io-calib");
  // fx = fy = 700, cx = 600, cy = 180, right matrix offset -0.54 * 700.
  write_text(tmp.str("calib.txt"),
             "P_left: 700 0 600 0 0 700 180 0 0 0 1 0\n"
             "P_right: 700 0 600 -378 0 700 180 0 0 0 1 0\n");
  const CameraRig rig = read_calibration(tmp.str("calib.txt"));
  CHECK(rig.fx == doctest::Approx(700.0));
  CHECK(rig.fy == doctest::Approx(700.0));
  CHECK(rig.cx == doctest::Approx(600.0));
  CHECK(rig.cy == doctest::Approx(180.0));
  CHECK(rig.baseline == doctest::Approx(0.54).epsilon(1e-12));
}

TEST_CASE("calibration lines with foreign keys are skipped") {
  TempDir tmp("io-calib-extra");
  write_text(tmp.str("calib.txt"),
             "comment: stereo pair 7\n"
             "P_left: 100 0 50 0 0 100 40 0 0 0 1 0\n"
             "R_rect: 1 0 0 0 1 0 0 0 1\n"
             "P_right: 100 0 50 -50 0 100 40 0 0 0 1 0\n");
  const CameraRig rig = read_calibration(tmp.str("calib.txt"));
  CHECK(rig.baseline == doctest::Approx(0.5));
}

TEST_CASE("malformed calibration files give parse errors") {
  TempDir tmp("io-calib-bad");
  write_text(tmp.str("a.txt"), "P_left: 1 2 3\n");  // wrong count
  CHECK(kind_of([&] { read_calibration(tmp.str("a.txt")); }) ==
        ErrorKind::parse);
  write_text(tmp.str("b.txt"),
             "P_left: 700 0 600 0 0 700 180 0 0 0 1 0\n");  // no right
  CHECK_THROWS_AS(read_calibration(tmp.str("b.txt")), Error);
  write_text(tmp.str("c.txt"),
             "P_left: 700 0 600 0 0 700 180 x 0 0 1 0\n"
             "P_right: 700 0 600 -378 0 700 180 0 0 0 1 0\n");
  CHECK_THROWS_AS(read_calibration(tmp.str("c.txt")), Error);
  // Degenerate baseline (identical matrices) fails rig validation.
  write_text(tmp.str("d.txt"),
             "P_left: 700 0 600 0 0 700 180 0 0 0 1 0\n"
             "P_right: 700 0 600 0 0 700 180 0 0 0 1 0\n");
  CHECK(kind_of([&] { read_calibration(tmp.str("d.txt")); }) ==
        ErrorKind::parse);
  CHECK_THROWS_AS(read_calibration(tmp.str("missing.txt")), Error);
}

TEST_CASE("rig files round trip at full precision") {
  TempDir tmp("io-rig");
  const CameraRig rig{721.5377, 721.5377, 609.5593, 172.854,
                      0.5371657188644179};
  write_rig(tmp.str("rig.txt"), rig);
  const CameraRig back = read_rig(tmp.str("rig.txt"));
  CHECK(back.fx == rig.fx);
  CHECK(back.fy == rig.fy);
  CHECK(back.cx == rig.cx);
  CHECK(back.cy == rig.cy);
  CHECK(back.baseline == rig.baseline);
}

TEST_CASE("rig files with missing, duplicate or unknown keys fail to parse") {
  TempDir tmp("io-rig-bad");
  write_text(tmp.str("a.txt"), "fx 100\nfy 100\ncx 50\ncy 40\n");
  CHECK(kind_of([&] { read_rig(tmp.str("a.txt")); }) == ErrorKind::parse);
  write_text(tmp.str("b.txt"),
             "fx 100\nfx 120\nfy 100\ncx 50\ncy 40\nbaseline 0.5\n");
  CHECK_THROWS_AS(read_rig(tmp.str("b.txt")), Error);
  write_text(tmp.str("c.txt"),
             "fx 100\nfy 100\ncx 50\ncy 40\nbaseline 0.5\nzoom 2\n");
  CHECK_THROWS_AS(read_rig(tmp.str("c.txt")), Error);
}

TEST_CASE("bundles round trip every tag and the rig, bit for bit") {
  TempDir tmp("io-bundle");
  std::mt19937_64 rng(33);
  std::uniform_real_distribution<double> u(-1e6, 1e6);

  Bundle bundle;
  bundle.rig = CameraRig{120.0, 121.0, 60.25, 40.75, 0.37};
  const struct {
    const char* name;
    int channels;
    FieldTag tag;
  } specs[] = {
      {"flow", 2, FieldTag::flow},       {"disp1", 1, FieldTag::disparity},
      {"depth1", 1, FieldTag::depth},    {"motion", 6, FieldTag::twist6},
      {"valid", 1, FieldTag::mask},      {"render", 3, FieldTag::rgb},
      {"zeta", 1, FieldTag::scalar},     {"object_id", 1, FieldTag::label},
  };
  for (const auto& s : specs) {
    Field f(5, 4, s.channels, s.tag);
    for (double& v : f.values()) v = u(rng);
    bundle.fields.emplace(s.name, std::move(f));
  }
  // Make sure odd bit patterns survive: denormal, huge, negative zero.
  bundle.fields.at("zeta").at(0, 0) = 5e-324;
  bundle.fields.at("zeta").at(0, 1) = -0.0;
  bundle.fields.at("zeta").at(0, 2) = 1.7976931348623157e308;

  write_bundle(tmp.str("b"), bundle);
  const Bundle back = read_bundle(tmp.str("b"));
  CHECK(back.fields.size() == bundle.fields.size());
  REQUIRE(back.rig.has_value());
  CHECK(back.rig->fx == bundle.rig->fx);
  CHECK(back.rig->baseline == bundle.rig->baseline);
  for (const auto& [name, field] : bundle.fields) {
    REQUIRE(back.fields.count(name) == 1);
    const Field& b = back.fields.at(name);
    CHECK(b.tag() == field.tag());
    CHECK(testsupport::bitwise_equal(b, field));
  }
}

TEST_CASE("bundle integrity failures are typed") {
  TempDir tmp("io-bundle-bad");
  Bundle bundle;
  Field f(3, 4, 2, FieldTag::flow, 1.0);
  bundle.fields.emplace("flow", f);
  write_bundle(tmp.str("b"), bundle);

  SUBCASE("missing manifest is a format error") {
    CHECK(kind_of([&] { read_bundle(tmp.str("nowhere")); }) ==
          ErrorKind::format);
  }
  SUBCASE("corrupt JSON is a parse error") {
    write_text(tmp.str("b") + "/manifest.json", "{ not json");
    CHECK(kind_of([&] { read_bundle(tmp.str("b")); }) == ErrorKind::parse);
  }
  SUBCASE("truncated payload is an integrity error") {
    std::ofstream out(tmp.str("b") + "/flow.f64",
                      std::ios::binary | std::ios::trunc);
    out << "short";
    out.close();
    CHECK(kind_of([&] { read_bundle(tmp.str("b")); }) == ErrorKind::integrity);
  }
  SUBCASE("wrong version is an integrity error") {
    write_text(tmp.str("b") + "/manifest.json",
               "{\"version\": 2, \"fields\": {}}");
    CHECK(kind_of([&] { read_bundle(tmp.str("b")); }) == ErrorKind::integrity);
  }
  SUBCASE("unknown encoding is an integrity error") {
    write_text(
        tmp.str("b") + "/manifest.json",
        "{\"version\": 1, \"fields\": {\"flow\": {\"tag\": \"flow\", "
        "\"height\": 3, \"width\": 4, \"channels\": 2, \"encoding\": "
        "\"f32le\", \"file\": \"flow.f64\"}}}");
    CHECK(kind_of([&] { read_bundle(tmp.str("b")); }) == ErrorKind::integrity);
  }
}

TEST_CASE("bundle field names are restricted to safe identifiers") {
  TempDir tmp("io-bundle-names");
  Bundle bundle;
  bundle.fields.emplace("../escape", Field(1, 1, 1, FieldTag::scalar));
  CHECK_THROWS_AS(write_bundle(tmp.str("b"), bundle), Error);
}
