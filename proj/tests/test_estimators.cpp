#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <span>
#include <vector>

#include "splidar/estimators.hpp"
#include "splidar/rng.hpp"
#include "splidar/simulator.hpp"
#include "test_helpers.hpp"

using namespace splidar;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

PixelScene random_scene(Rng& rng) {
  return scene_from_constraints(rng.uniform(6.0, 20.0), rng.uniform(0.4, 8.0),
                                rng.uniform(0.2, 1.5), rng.uniform(2.5, 7.5),
                                AcquisitionConfig{10.0, 1000, 1.0}, 0.2);
}

std::vector<double> nonempty_draw(const PixelScene& scene, Rng& rng) {
  std::vector<double> ts;
  while (ts.empty()) ts = sample_detections(scene, rng).timestamps;
  return ts;
}

// Enumerates every zero crossing of d loglik / d tau on a dense grid.
std::vector<double> enumerate_crossings(std::span<const double> ts,
                                        double alpha,
                                        const PixelScene& scene) {
  std::vector<double> roots;
  const int n = 200000;
  double prev_tau = 1e-9;
  double prev = dloglik_dtau(ts, alpha, prev_tau, scene);
  for (int i = 1; i <= n; ++i) {
    const double tau = 10.0 * i / (n + 1);
    const double value = dloglik_dtau(ts, alpha, tau, scene);
    if ((prev > 0.0 && value < 0.0) || (prev < 0.0 && value > 0.0)) {
      // Linear interpolation of the crossing.
      roots.push_back(prev_tau + (tau - prev_tau) * prev / (prev - value));
    }
    prev = value;
    prev_tau = tau;
  }
  return roots;
}

}  // namespace

TEST_CASE("loglik") {
  const PixelScene scene = test::table_scene(1.0);

  SECTION("empty sum") {
    const std::vector<double> none;
    CHECK_THAT(loglik(none, 0.5, 4.0, scene), WithinRel(-5.0, 1e-12));
  }
  SECTION("single timestamp at the delay (hand evaluation)") {
    const std::vector<double> ts{4.0};
    CHECK_THAT(loglik(ts, 0.5, 4.0, scene),
               WithinRel(-9.558901578268284, 1e-12));
  }
  SECTION("permutation invariance") {
    const std::vector<double> a{3.1, 4.2, 5.3, 4.0};
    const std::vector<double> b{4.0, 5.3, 3.1, 4.2};
    CHECK(loglik(a, 0.7, 4.1, scene) == loglik(b, 0.7, 4.1, scene));
  }
  SECTION("zero flux with observations rejected") {
    PixelScene clean = test::noiseless_scene();
    const std::vector<double> ts{4.0};
    CHECK_THROWS_AS(loglik(ts, 0.0, 4.0, clean), std::invalid_argument);
    CHECK_THROWS_AS(loglik(ts, -0.1, 4.0, clean), std::invalid_argument);
    CHECK_THROWS_AS(loglik(ts, 0.5, 11.0, clean), std::invalid_argument);
  }
  SECTION("noiseless log domain survives far tails") {
    const PixelScene clean = test::noiseless_scene();
    const std::vector<double> ts{9.9};  // ~30 sigma from tau = 4
    CHECK(std::isfinite(loglik(ts, 0.5, 4.0, clean)));
  }
}

TEST_CASE("depth derivative") {
  SECTION("noiseless zero at the sample mean") {
    const PixelScene clean = test::noiseless_scene();
    const std::vector<double> ts{3.7, 4.1, 4.6};
    const double mean = (3.7 + 4.1 + 4.6) / 3.0;
    CHECK_THAT(dloglik_dtau(ts, 0.5, mean, clean), WithinAbs(0.0, 1e-9));
    CHECK(dloglik_dtau(ts, 0.5, mean - 0.1, clean) > 0.0);
    CHECK(dloglik_dtau(ts, 0.5, mean + 0.1, clean) < 0.0);
  }
  SECTION("symmetric timestamps cancel") {
    const PixelScene scene = test::table_scene(1.0);
    const std::vector<double> ts{3.6, 4.4};
    CHECK_THAT(dloglik_dtau(ts, 0.5, 4.0, scene), WithinAbs(0.0, 1e-12));
  }
  SECTION("matches central finite differences") {
    Rng rng = Rng::stream(101, StreamTag::kInstance);
    for (int i = 0; i < 100; ++i) {
      const PixelScene scene = random_scene(rng);
      const std::vector<double> ts = nonempty_draw(scene, rng);
      const double alpha = rng.uniform(0.05, 2.5);
      const double tau = scene.delay + rng.uniform(-0.3, 0.3);
      const double h = 1e-6 * scene.acq.repetition_period;
      const double fd = (loglik(ts, alpha, tau + h, scene) -
                         loglik(ts, alpha, tau - h, scene)) /
                        (2.0 * h);
      const double an = dloglik_dtau(ts, alpha, tau, scene);
      CHECK_THAT(fd, WithinRel(an, 1e-5) || WithinAbs(an, 1e-7));
    }
  }
}

TEST_CASE("reflectivity derivative") {
  const PixelScene scene = test::table_scene(1.0);

  SECTION("empty sum is the negative energy slope") {
    const std::vector<double> none;
    CHECK_THAT(dloglik_dalpha(none, 0.5, 4.0, scene), WithinRel(-10.0, 1e-12));
  }
  SECTION("noiseless closed form m/alpha - N eta S") {
    const PixelScene clean = test::noiseless_scene();
    const std::vector<double> ts{3.9, 4.0, 4.1};
    const double expected = 3.0 / 0.7 - 1000.0 * 0.02;
    CHECK_THAT(dloglik_dalpha(ts, 0.7, 4.0, clean), WithinRel(expected, 1e-12));
    const double root = 3.0 / (1000.0 * 0.02);
    CHECK_THAT(dloglik_dalpha(ts, root, 4.0, clean), WithinAbs(0.0, 1e-9));
  }
  SECTION("matches central finite differences") {
    Rng rng = Rng::stream(102, StreamTag::kInstance);
    for (int i = 0; i < 100; ++i) {
      const PixelScene s = random_scene(rng);
      const std::vector<double> ts = nonempty_draw(s, rng);
      const double alpha = rng.uniform(0.05, 2.5);
      const double tau = s.delay + rng.uniform(-0.3, 0.3);
      const double h = 1e-6 * std::max(1.0, alpha);
      const double fd = (loglik(ts, alpha + h, tau, s) -
                         loglik(ts, alpha - h, tau, s)) /
                        (2.0 * h);
      const double an = dloglik_dalpha(ts, alpha, tau, s);
      CHECK_THAT(fd, WithinRel(an, 1e-5) || WithinAbs(an, 1e-7));
    }
  }
  SECTION("strictly decreasing in alpha") {
    Rng rng = Rng::stream(103, StreamTag::kInstance);
    for (int i = 0; i < 100; ++i) {
      const PixelScene s = random_scene(rng);
      const std::vector<double> ts = nonempty_draw(s, rng);
      double prev = kInf;
      for (int step = 0; step <= 50; ++step) {
        const double value = dloglik_dalpha(ts, 0.1 * step, s.delay, s);
        REQUIRE(value < prev);
        prev = value;
      }
    }
  }
}

TEST_CASE("depth sample mean") {
  const PixelScene scene = test::table_scene(1.0);
  SECTION("symmetric values") {
    const std::vector<double> ts{3.8, 4.0, 4.2};
    CHECK_THAT(depth_sample_mean(ts, scene).value, WithinRel(4.0, 1e-15));
  }
  SECTION("single timestamp") {
    const std::vector<double> ts{6.25};
    CHECK(depth_sample_mean(ts, scene).value == 6.25);
  }
  SECTION("no data") {
    const std::vector<double> none;
    const EstimateReport r = depth_sample_mean(none, scene);
    CHECK(r.status == SolverStatus::kNoData);
    CHECK_FALSE(r.converged);
  }
  SECTION("noiseless monte carlo concentrates at the delay") {
    const PixelScene clean = test::noiseless_scene();
    Rng rng = Rng::stream(104, StreamTag::kTimestamps);
    const TimestampDraw draw = sample_timestamps(clean, 10000, rng);
    const double est = depth_sample_mean(draw.timestamps, clean).value;
    CHECK_THAT(est, WithinAbs(4.0, 0.01));
  }
}

TEST_CASE("count-based reflectivity") {
  const PixelScene scene = test::table_scene(1.0);  // eta S = 0.01, B = 0.005
  SECTION("hand evaluation") {
    const EstimateReport r = reflectivity_count_mle(10, scene);
    CHECK_THAT(r.value, WithinRel(0.5, 1e-12));
    CHECK_FALSE(r.clamped);
  }
  SECTION("clamped when counts run low") {
    const EstimateReport r = reflectivity_count_mle(2, scene);
    CHECK(r.value == 0.0);
    CHECK(r.clamped);
  }
  SECTION("noiseless never clamps") {
    const PixelScene clean = test::noiseless_scene();
    for (std::size_t m : {0u, 1u, 7u}) {
      const EstimateReport r = reflectivity_count_mle(m, clean);
      CHECK_THAT(r.value,
                 WithinAbs(static_cast<double>(m) / (1000.0 * 0.02), 1e-15));
      CHECK_FALSE(r.clamped);
    }
  }
}

TEST_CASE("depth solver with known reflectivity") {
  SECTION("noiseless case returns the sample mean") {
    const PixelScene clean = test::noiseless_scene();
    const std::vector<double> ts{3.5, 4.1, 4.3, 4.9};
    const EstimateReport r = depth_mle_known_alpha(ts, 0.5, clean, 4.0);
    CHECK(r.converged);
    CHECK_THAT(r.value, WithinAbs(4.2, 1e-8));
  }
  SECTION("picks the crossing nearest the initial guess") {
    // One outlier far from the truth creates a second cluster of roots.
    const PixelScene scene = test::table_scene(2.0);
    const std::vector<double> ts{3.95, 4.0, 4.05, 8.0};
    const EstimateReport r = depth_mle_known_alpha(ts, 0.5, scene, 4.0);
    REQUIRE(r.status == SolverStatus::kOk);

    const std::vector<double> roots = enumerate_crossings(ts, 0.5, scene);
    REQUIRE(roots.size() >= 2);  // the outlier really does add crossings
    double nearest = roots.front();
    for (double root : roots)
      if (std::abs(root - 4.0) < std::abs(nearest - 4.0)) nearest = root;
    CHECK_THAT(r.value, WithinAbs(nearest, 1e-4));
    CHECK(std::abs(r.value - 8.0) > 3.0);
  }
  SECTION("bracket failure is reported, not patched") {
    const PixelScene scene = test::table_scene(1.0);
    const std::vector<double> ts{4.0};
    SolverConfig cfg;
    cfg.max_bracket_steps = 2;  // too small to reach the crossing from afar
    const EstimateReport r = depth_mle_known_alpha(ts, 0.5, scene, 9.0, cfg);
    CHECK(r.status == SolverStatus::kBracketNotFound);
    CHECK_FALSE(r.converged);
    CHECK(std::isnan(r.value));
  }
  SECTION("no data") {
    const std::vector<double> none;
    CHECK(depth_mle_known_alpha(none, 0.5, test::table_scene(1.0), 4.0).status ==
          SolverStatus::kNoData);
  }
  SECTION("beats the sample mean at sbr 10") {
    const PixelScene scene = test::table_scene(10.0);
    double mse_solver = 0.0, mse_mean = 0.0;
    int n = 0;
    for (int trial = 0; trial < 300; ++trial) {
      Rng rng = Rng::stream(105, StreamTag::kTrial, trial);
      const TimestampDraw draw = sample_detections(scene, rng);
      if (draw.timestamps.empty()) continue;
      const EstimateReport with = depth_mle_known_alpha(
          draw.timestamps, scene.reflectivity, scene, scene.delay);
      if (with.status != SolverStatus::kOk) continue;
      const double mean = depth_sample_mean(draw.timestamps, scene).value;
      mse_solver += (with.value - 4.0) * (with.value - 4.0);
      mse_mean += (mean - 4.0) * (mean - 4.0);
      ++n;
    }
    REQUIRE(n > 250);
    CHECK(mse_solver < mse_mean);
  }
}

TEST_CASE("reflectivity solver with known depth") {
  SECTION("no detections clamp to zero") {
    const std::vector<double> none;
    const EstimateReport r =
        reflectivity_mle_known_tau(none, 4.0, test::table_scene(1.0));
    CHECK(r.value == 0.0);
    CHECK(r.clamped);
    CHECK(r.converged);
  }
  SECTION("vanishing background recovers the count closed form") {
    PixelScene scene = test::noiseless_scene();
    scene.background_rate = 1e-9;
    Rng rng = Rng::stream(106, StreamTag::kTimestamps);
    const TimestampDraw draw = sample_timestamps(scene, 12, rng);
    const EstimateReport r =
        reflectivity_mle_known_tau(draw.timestamps, 4.0, scene);
    const double closed = 12.0 / (1000.0 * 0.02);
    CHECK_THAT(r.value, WithinRel(closed, 1e-3));
  }
  SECTION("unique positive root: derivative vanishes at the estimate") {
    Rng rng = Rng::stream(107, StreamTag::kInstance);
    for (int i = 0; i < 20; ++i) {
      const PixelScene scene = random_scene(rng);
      const std::vector<double> ts = nonempty_draw(scene, rng);
      const EstimateReport r =
          reflectivity_mle_known_tau(ts, scene.delay, scene);
      REQUIRE(r.status == SolverStatus::kOk);
      if (!r.clamped)
        CHECK_THAT(dloglik_dalpha(ts, r.value, scene.delay, scene),
                   WithinAbs(0.0, 1e-5));
    }
  }
  SECTION("beats the count estimator at sbr 0.5") {
    const PixelScene scene = test::table_scene(0.5);
    double mse_with = 0.0, mse_without = 0.0;
    for (int trial = 0; trial < 300; ++trial) {
      Rng rng = Rng::stream(108, StreamTag::kTrial, trial);
      const TimestampDraw draw = sample_detections(scene, rng);
      const EstimateReport with =
          reflectivity_mle_known_tau(draw.timestamps, scene.delay, scene);
      const EstimateReport without =
          reflectivity_count_mle(draw.count(), scene);
      mse_with += (with.value - 0.5) * (with.value - 0.5);
      mse_without += (without.value - 0.5) * (without.value - 0.5);
    }
    CHECK(mse_with < mse_without);
  }
}

TEST_CASE("unconstrained reflectivity root") {
  const PixelScene scene = test::table_scene(0.5);
  Rng rng = Rng::stream(109, StreamTag::kTrial);
  int negatives_seen = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const TimestampDraw draw = sample_detections(scene, rng);
    if (draw.timestamps.empty()) continue;
    const std::span<const double> ts(draw.timestamps);
    const EstimateReport constrained =
        reflectivity_mle_known_tau(ts, scene.delay, scene);
    const double root =
        reflectivity_root_unconstrained(ts, scene.delay, scene);
    if (!constrained.clamped) {
      CHECK_THAT(root, WithinRel(constrained.value, 1e-6));
      continue;
    }
    if (std::isnan(root)) continue;  // root below the domain boundary
    ++negatives_seen;
    CHECK(root < 0.0);
    // Definitional check: the extended derivative vanishes at the root.
    const double eta = scene.acq.quantum_efficiency;
    double deriv = -scene.acq.repetitions * eta * scene.pulse.energy;
    for (double t : draw.timestamps) {
      const double pulse = eta * pulse_value(scene.pulse, t - scene.delay);
      deriv += pulse / (root * pulse + scene.background_rate);
    }
    CHECK_THAT(deriv, WithinAbs(0.0, 1e-4));
  }
  CHECK(negatives_seen > 0);
}

TEST_CASE("joint estimation") {
  SECTION("separable noiseless case matches the closed forms") {
    const PixelScene clean = test::noiseless_scene();
    for (int trial = 0; trial < 25; ++trial) {
      Rng rng = Rng::stream(110, StreamTag::kTrial, trial);
      const TimestampDraw draw = sample_detections(clean, rng);
      if (draw.timestamps.empty()) continue;
      const std::span<const double> ts(draw.timestamps);
      const JointEstimate joint =
          joint_mle(ts, clean, coarse_init_delay(ts, clean),
                    reflectivity_count_mle(draw.count(), clean).value);
      CHECK_THAT(joint.depth.value,
                 WithinAbs(depth_sample_mean(ts, clean).value, 1e-6));
      CHECK_THAT(joint.reflectivity.value,
                 WithinAbs(reflectivity_count_mle(draw.count(), clean).value,
                           1e-6));
    }
  }
  SECTION("objective never decreases across outer passes") {
    const PixelScene scene = test::table_scene(10.0);
    for (int trial = 0; trial < 100; ++trial) {
      Rng rng = Rng::stream(111, StreamTag::kTrial, trial);
      const TimestampDraw draw = sample_detections(scene, rng);
      if (draw.timestamps.empty()) continue;
      const JointEstimate joint = joint_mle(
          draw.timestamps, scene, scene.delay, scene.reflectivity);
      for (std::size_t i = 1; i < joint.objective_trace.size(); ++i)
        CHECK(joint.objective_trace[i] >=
              joint.objective_trace[i - 1] -
                  1e-9 * (1.0 + std::abs(joint.objective_trace[i - 1])));
    }
  }
  SECTION("fixed point near the single-parameter oracle estimates") {
    const PixelScene scene = test::table_scene(10.0);
    int close = 0, total = 0;
    for (int trial = 0; trial < 300; ++trial) {
      Rng rng = Rng::stream(112, StreamTag::kTrial, trial);
      const TimestampDraw draw = sample_detections(scene, rng);
      if (draw.timestamps.empty()) continue;
      const std::span<const double> ts(draw.timestamps);
      const JointEstimate joint =
          joint_mle(ts, scene, scene.delay, scene.reflectivity);
      if (joint.depth.status != SolverStatus::kOk) continue;
      ++total;
      const EstimateReport depth_oracle = depth_mle_known_alpha(
          ts, scene.reflectivity, scene, scene.delay);
      const EstimateReport refl_oracle =
          reflectivity_mle_known_tau(ts, scene.delay, scene);
      const bool near_depth = std::abs(joint.depth.value - depth_oracle.value) <
                              5.0 * scene.pulse.width;
      const bool near_refl =
          std::abs(joint.reflectivity.value - refl_oracle.value) < 0.5;
      close += near_depth && near_refl;
    }
    REQUIRE(total > 250);
    CHECK(close >= (total * 9) / 10);
  }
  SECTION("empty input rejected") {
    const std::vector<double> none;
    CHECK_THROWS_AS(joint_mle(none, test::table_scene(1.0), 4.0, 0.5),
                    std::invalid_argument);
  }
}

TEST_CASE("constraint satisfaction") {
  Rng rng = Rng::stream(113, StreamTag::kInstance);
  for (int i = 0; i < 50; ++i) {
    const PixelScene scene = random_scene(rng);
    const std::vector<double> ts = nonempty_draw(scene, rng);
    const double t_r = scene.acq.repetition_period;

    const EstimateReport refl =
        reflectivity_mle_known_tau(ts, scene.delay, scene);
    CHECK(refl.value >= 0.0);
    const EstimateReport depth = depth_mle_known_alpha(
        ts, scene.reflectivity, scene, scene.delay);
    if (depth.status == SolverStatus::kOk) {
      CHECK(depth.value > 0.0);
      CHECK(depth.value < t_r);
    }
    const EstimateReport mean = depth_sample_mean(ts, scene);
    CHECK(mean.value > 0.0);
    CHECK(mean.value < t_r);
  }
}

TEST_CASE("coarse initialization") {
  const PixelScene scene = test::table_scene(5.0);
  const std::vector<double> ts{3.9, 4.05, 4.1, 7.2, 1.0};
  const double init = coarse_init_delay(ts, scene);
  CHECK_THAT(init, WithinAbs(4.0, 0.3));
}

TEST_CASE("mixture-weight reflectivity for censored counts") {
  const PixelScene scene = test::table_scene(5.0);

  SECTION("recovers the truth from a large pool") {
    Rng rng = Rng::stream(114, StreamTag::kTimestamps);
    const TimestampDraw draw = sample_timestamps(scene, 5000, rng);
    const EstimateReport r =
        reflectivity_mixture_mle(draw.timestamps, scene.delay, scene, 10.0);
    CHECK_FALSE(r.clamped);
    CHECK_THAT(r.value, WithinAbs(scene.reflectivity, 0.1));
  }
  SECTION("all-uniform pools clamp to zero") {
    std::vector<double> ts;
    Rng rng = Rng::stream(115, StreamTag::kTimestamps);
    for (int i = 0; i < 50; ++i) ts.push_back(rng.uniform(0.0, 10.0));
    PixelScene noise_only = scene;
    noise_only.delay = 0.5;  // far from any uniform cluster density bump
    const EstimateReport r =
        reflectivity_mixture_mle(ts, 0.5, noise_only, 10.0);
    CHECK(r.value <= 0.2);
  }
  SECTION("signal-saturated pools clamp at the cap") {
    std::vector<double> ts{4.0, 4.01, 3.99, 4.0};
    const EstimateReport r = reflectivity_mixture_mle(ts, 4.0, scene, 10.0);
    CHECK(r.clamped);
    CHECK(r.value == 10.0);
  }
  SECTION("empty pool reports no data") {
    const std::vector<double> none;
    const EstimateReport r = reflectivity_mixture_mle(none, 4.0, scene, 10.0);
    CHECK(r.status == SolverStatus::kNoData);
    CHECK(r.value == 0.0);
  }
  SECTION("requires background") {
    const std::vector<double> ts{4.0};
    CHECK_THROWS_AS(
        reflectivity_mixture_mle(ts, 4.0, test::noiseless_scene(), 10.0),
        std::invalid_argument);
  }
}
