#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "splidar/math.hpp"
#include "splidar/quadrature.hpp"
#include "splidar/scene.hpp"
#include "test_helpers.hpp"

using namespace splidar;
using Catch::Matchers::WithinRel;

TEST_CASE("polynomials integrate to closed form") {
  const auto cubic = [](double x) { return x * x * x - 2.0 * x + 1.0; };
  const QuadratureResult r = integrate(cubic, -1.0, 3.0);
  CHECK(r.converged);
  CHECK_THAT(r.value, WithinRel(20.0 - 8.0 + 4.0, 1e-14));
}

TEST_CASE("narrow gaussian on a wide interval") {
  const PulseShape p{0.02, 0.2};
  const auto f = [&](double t) { return pulse_value(p, t - 4.0); };
  const QuadratureResult r = integrate(f, 0.0, 10.0, {1e-16, 1e-12, 8000});
  CHECK(r.converged);
  CHECK_THAT(r.value, WithinRel(0.02, 1e-12));
  // Conservative error estimate: never below the actual deviation.
  CHECK(r.error_estimate >= std::abs(r.value - 0.02));
}

TEST_CASE("agrees with the simpson oracle on a peaked rational") {
  const PixelScene scene = test::table_scene(1.0);
  const auto f = [&](double t) {
    const double s = pulse_value(scene.pulse, t - scene.delay);
    return s * s / (scene.reflectivity * s + scene.background_rate);
  };
  const QuadratureResult r = integrate(f, 0.0, 10.0, {1e-16, 1e-11, 8000});
  const double oracle = test::integrate_simpson(f, 0.0, 10.0, 1e-13);
  CHECK(r.converged);
  CHECK_THAT(r.value, WithinRel(oracle, 1e-9));
}

TEST_CASE("budget exhaustion is reported") {
  const auto wiggly = [](double x) { return std::sin(300.0 * x) * x + x; };
  QuadratureConfig cfg;
  cfg.rel_tol = 1e-13;
  cfg.max_subdivisions = 3;
  const QuadratureResult r = integrate(wiggly, 0.0, 20.0, cfg);
  CHECK_FALSE(r.converged);
  CHECK(r.subdivisions == 3);
}

TEST_CASE("degenerate interval") {
  const QuadratureResult r = integrate([](double) { return 1.0; }, 2.0, 2.0);
  CHECK(r.converged);
  CHECK(r.value == 0.0);
}
