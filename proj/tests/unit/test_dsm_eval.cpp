#include <doctest.h>

#include <cmath>

#include "satstereo/dsm_eval.hpp"
#include "satstereo/errors.hpp"
#include "satstereo/random.hpp"
#include "satstereo/synthetic.hpp"

using namespace satstereo;

namespace {

const GridSpec kSpec{-30.0, -30.0, 0.5, 120, 120};

synth::Terrain hills() {
  synth::Terrain t;
  t.base = 20.0;
  t.slope_east = 0.1;
  t.slope_north = -0.04;
  t.hills = {{5.0, -4.0, 8.0, 6.0}, {-10.0, 12.0, 5.0, 5.0}, {14.0, 10.0, -3.0, 4.0}};
  return t;
}

// generated(x, y) = terrain(x - dx, y - dy) - dz, so the registering shift is (dx, dy, dz).
DsmGrid shifted(const synth::Terrain& t, const GridSpec& spec, double dx, double dy, double dz) {
  DsmGrid g(spec);
  for (int r = 0; r < spec.height; ++r)
    for (int c = 0; c < spec.width; ++c)
      g.at(c, r) = t.height(spec.center_x(c) - dx, spec.center_y(r) - dy) - dz;
  return g;
}

DsmGrid constant(const GridSpec& spec, double z) { return DsmGrid(spec, z); }

}  // namespace

TEST_CASE("injected shift is recovered") {
  const auto t = hills();
  const DsmGrid truth = synth::truth_dsm(t, kSpec);
  const DsmGrid gen = shifted(t, kSpec, 1.0, -0.5, 2.0);
  const Coregistration c = coregister(gen, truth);
  CHECK(c.shift.dx == doctest::Approx(1.0).epsilon(0.05));
  CHECK(c.shift.dy == doctest::Approx(-0.5).epsilon(0.1));
  CHECK(c.shift.dz == doctest::Approx(2.0).epsilon(0.025));
  CHECK(std::abs(c.shift.dx - 1.0) < 0.05);
  CHECK(std::abs(c.shift.dy + 0.5) < 0.05);
  CHECK(std::abs(c.shift.dz - 2.0) < 0.05);
  CHECK_FALSE(c.horizontal_degenerate);
  CHECK(c.post_rmse < 0.05);
  CHECK(c.post_rmse <= c.pre_rmse + 1e-9);

  const DsmScores s = evaluate_dsm(gen, truth);
  CHECK(s.registered);
  CHECK(s.rmse < 0.05);
  CHECK(s.completeness > 95.0);
}

TEST_CASE("identical surfaces need no shift") {
  const DsmGrid truth = synth::truth_dsm(hills(), kSpec);
  const Coregistration c = coregister(truth, truth);
  CHECK(std::abs(c.shift.dx) < 1e-6);
  CHECK(std::abs(c.shift.dy) < 1e-6);
  CHECK(std::abs(c.shift.dz) < 1e-6);
  CHECK(c.post_rmse < 1e-6);
}

TEST_CASE("flat planes only register vertically") {
  const Coregistration c = coregister(constant(kSpec, 7.0), constant(kSpec, 10.0));
  CHECK(c.horizontal_degenerate);
  CHECK(c.shift.dx == 0.0);
  CHECK(c.shift.dy == 0.0);
  CHECK(c.shift.dz == doctest::Approx(3.0).epsilon(1e-9));
}

TEST_CASE("coregistration errors") {
  const GridSpec tiny{0.0, 0.0, 1.0, 8, 8};
  CHECK_THROWS_AS(coregister(constant(tiny, 1.0), constant(tiny, 1.0)), InsufficientDataError);
  const GridSpec far{1000.0, 1000.0, 0.5, 120, 120};
  CHECK_THROWS_AS(coregister(constant(far, 1.0), constant(kSpec, 1.0)), InsufficientDataError);
}

TEST_CASE("coregistration never increases RMSE") {
  const auto t = hills();
  const DsmGrid truth = synth::truth_dsm(t, kSpec);
  DsmGrid noisy = shifted(t, kSpec, 0.3, 0.2, -0.4);
  Rng rng(3);
  for (int r = 0; r < kSpec.height; ++r)
    for (int c = 0; c < kSpec.width; ++c) noisy.at(c, r) += rng.uniform(-1.5, 1.5);
  const Coregistration c = coregister(noisy, truth);
  CHECK(c.post_rmse <= c.pre_rmse + 1e-9);
}

TEST_CASE("resampling keeps holes") {
  DsmGrid g = constant(kSpec, 5.0);
  g.at(10, 10) = std::nan("");
  const DsmGrid r = resample_to(g, kSpec, {0.25, 0.0, 1.0});
  CHECK(r.at(50, 50) == doctest::Approx(6.0));
  CHECK_FALSE(r.valid(10, 10));
  CHECK_FALSE(r.valid(9, 10));
  CHECK(r.valid(8, 10));
  CHECK_FALSE(r.valid(kSpec.width - 1, 5));  // shifted past the last center
}

TEST_CASE("completeness cases") {
  const GridSpec spec{0.0, 0.0, 1.0, 10, 10};
  const DsmGrid truth = constant(spec, 1.0);
  CHECK(completeness(constant(spec, 2.0), truth) == 100.0);
  DsmGrid half = constant(spec, 2.0);
  for (int r = 0; r < 5; ++r)
    for (int c = 0; c < 10; ++c) half.at(c, r) = std::nan("");
  CHECK(completeness(half, truth) == 50.0);
  CHECK(completeness(DsmGrid(spec), truth) == 0.0);
  CHECK_THROWS_AS(completeness(half, DsmGrid(spec)), UndefinedMetricError);
  CHECK_THROWS_AS(completeness(half, constant(GridSpec{0, 0, 1.0, 9, 10}, 1.0)), ValidationError);

  // Growing the valid mask never lowers completeness.
  DsmGrid grow(spec);
  double last = 0.0;
  for (int i = 0; i < 100; i += 7) {
    grow.at(i % 10, i / 10) = 1.0;
    const double now = completeness(grow, truth);
    CHECK(now >= last);
    CHECK(now <= 100.0);
    last = now;
  }
}

TEST_CASE("rmse cases") {
  const GridSpec spec{0.0, 0.0, 1.0, 2, 1};
  DsmGrid a(spec), b(spec);
  a.at(0, 0) = 3.0;
  a.at(1, 0) = 1.0;
  b.at(0, 0) = 2.0;
  b.at(1, 0) = 2.0;
  CHECK(dsm_rmse(a, b) == 1.0);
  CHECK(dsm_rmse(a, a) == 0.0);
  CHECK(dsm_rmse(a, b) == dsm_rmse(b, a));
  CHECK_THROWS_AS(dsm_rmse(DsmGrid(spec), b), UndefinedMetricError);

  const DsmGrid truth = synth::truth_dsm(hills(), kSpec);
  const DsmGrid up = shifted(hills(), kSpec, 0.0, 0.0, -2.0);
  CHECK(dsm_rmse(up, truth) == doctest::Approx(2.0).epsilon(1e-12));
  const DsmScores s = evaluate_dsm(up, truth);
  CHECK(s.rmse < 0.01);
}

TEST_CASE("relative change") {
  CHECK(relative_change(101.0, 100.0) == doctest::Approx(1.0).epsilon(1e-12));
  for (double x : {-3.5, 0.2, 42.0}) CHECK(relative_change(x, x) == 0.0);
  CHECK_THROWS_AS(relative_change(1.0, 0.0), UndefinedMetricError);
  for (auto [a, b] : {std::pair{3.0, 7.0}, std::pair{0.61, 0.87}, std::pair{-2.0, 5.0}})
    CHECK(relative_change(a, b) == doctest::Approx(-relative_change(b, a) * a / b).epsilon(1e-12));
}

TEST_CASE("report JSON round trip") {
  EvalReport r;
  r.pair_id = "a__b";
  r.method = "baseline_lsm";
  r.success = true;
  r.inlier_ratio = 0.5;
  r.epipolar_rms = 0.25;
  r.inliers = 10;
  r.matches = 20;
  r.completeness = 97.0;
  r.rmse = 0.4;
  r.shift = {0.1, -0.2, 0.3};
  r.dsm = true;
  const EvalReport back = report_from_json(report_to_json(r));
  CHECK(back.pair_id == r.pair_id);
  CHECK(back.method == r.method);
  CHECK(back.rmse == r.rmse);
  CHECK(back.shift.dy == r.shift.dy);
  CHECK(back.dsm);

  EvalReport failed;
  failed.pair_id = "x";
  failed.method = "m";
  failed.failure = "fewer than 5 inliers";
  const auto j = report_to_json(failed);
  CHECK(j["rmse"].is_null());
  const EvalReport f = report_from_json(j);
  CHECK(std::isnan(f.rmse));
  CHECK(f.failure == failed.failure);
}
