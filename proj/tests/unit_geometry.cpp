// Camera model: disparity/depth conversion, projection, and their round
// trips. Worked values are checked against hand arithmetic; the round-trip
// properties run over randomized samples.

#include <cmath>
#include <random>

#include <doctest.h>

#include "rmflow/error.hpp"
#include "rmflow/geometry.hpp"

using namespace rmflow;

namespace {

CameraRig simple_rig() { return CameraRig{100.0, 100.0, 50.0, 40.0, 0.5}; }

}  // namespace

TEST_CASE("disparity and depth convert by fx*baseline over magnitude") {
  const CameraRig rig = simple_rig();
  // fx*b = 50; a 50 px (internally negative) disparity is one metre away.
  CHECK(disparity_to_depth(-50.0, rig) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(depth_to_disparity(1.0, rig) == doctest::Approx(-50.0).epsilon(1e-15));
  CHECK(disparity_to_depth(-25.0, rig) == doctest::Approx(2.0).epsilon(1e-15));
  // Positive (externally encoded) magnitudes convert by absolute value.
  CHECK(disparity_to_depth(50.0, rig) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("zero or non-finite disparity is rejected as invalid depth") {
  const CameraRig rig = simple_rig();
  CHECK_THROWS_AS(disparity_to_depth(0.0, rig), Error);
  try {
    disparity_to_depth(0.0, rig);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::invalid_depth);
  }
  CHECK_THROWS_AS(disparity_to_depth(std::nan(""), rig), Error);
  CHECK_THROWS_AS(
      disparity_to_depth(std::numeric_limits<double>::infinity(), rig), Error);
  CHECK_THROWS_AS(depth_to_disparity(0.0, rig), Error);
  CHECK_THROWS_AS(depth_to_disparity(-2.0, rig), Error);
}

TEST_CASE("unprojection puts the principal point on the optical axis") {
  const CameraRig rig = simple_rig();
  const Point3 p = unproject(Pixel(50.0, 40.0), 3.0, rig);
  CHECK(p.x() == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(p.y() == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(p.z() == doctest::Approx(3.0).epsilon(1e-15));

  // One hundred pixels right of centre at fx=100 is one unit per unit depth.
  const Point3 q = unproject(Pixel(150.0, 40.0), 2.0, rig);
  CHECK(q.x() == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(q.y() == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("projection rejects points at or behind the camera") {
  const CameraRig rig = simple_rig();
  CHECK_THROWS_AS(project(Point3(0.0, 0.0, 0.0), rig), Error);
  try {
    project(Point3(0.1, 0.2, -1.0), rig);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::behind_camera);
  }
}

TEST_CASE("a lateral camera shift of t produces flow fx*t/Z") {
  // Point at depth 1 with fx=100 shifted by 0.1 in x moves 10 px. This is the
  // classic small-translation sanity value.
  const CameraRig rig = simple_rig();
  const Point3 p = unproject(Pixel(50.0, 40.0), 1.0, rig);
  const Point3 moved = p + Point3(0.1, 0.0, 0.0);
  const Projection proj = project(moved, rig);
  CHECK(proj.pixel.x() - 50.0 == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(proj.pixel.y() - 40.0 == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("project/unproject round trip holds to 1e-9 over random samples") {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> fpix(80.0, 900.0);
  std::uniform_real_distribution<double> cpix(100.0, 500.0);
  std::uniform_real_distribution<double> base(0.05, 1.2);
  std::uniform_real_distribution<double> px(-200.0, 1200.0);
  std::uniform_real_distribution<double> depth(0.3, 120.0);

  double worst_pixel = 0.0, worst_depth = 0.0, worst_disp = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const CameraRig rig{fpix(rng), fpix(rng), cpix(rng), cpix(rng), base(rng)};
    const Pixel x(px(rng), px(rng));
    const double z = depth(rng);

    const Projection back = project(unproject(x, z, rig), rig);
    worst_pixel = std::max(worst_pixel, (back.pixel - x).norm());
    worst_depth = std::max(worst_depth, std::abs(back.depth - z));

    const double d = depth_to_disparity(z, rig);
    CHECK(d < 0.0);
    worst_disp = std::max(worst_disp, std::abs(disparity_to_depth(d, rig) - z));
  }
  CHECK(worst_pixel < 1e-9);
  CHECK(worst_depth < 1e-9);
  CHECK(worst_disp < 1e-9);
}

TEST_CASE("rig validation rejects non-positive and non-finite parameters") {
  CameraRig rig = simple_rig();
  CHECK_NOTHROW(rig.validate());
  rig.fx = 0.0;
  CHECK_THROWS_AS(rig.validate(), Error);
  rig = simple_rig();
  rig.baseline = -0.5;
  CHECK_THROWS_AS(rig.validate(), Error);
  rig = simple_rig();
  rig.cy = std::nan("");
  CHECK_THROWS_AS(rig.validate(), Error);
}
