#include <doctest.h>

#include <cmath>

#include "bias_scene.hpp"
#include "fixtures.hpp"
#include "satstereo/errors.hpp"
#include "satstereo/orientation.hpp"

using namespace satstereo;

namespace {

Match consistent(const RpcModel& m1, const RpcModel& m2, double e, double n, double h) {
  const auto g = LocalFrame(fixtures::kCenter).to_ground({e, n, h});
  return {project(m1, g), project(m2, g), std::nullopt};
}

MatchSet as_set(std::vector<Match> m) {
  MatchSet s;
  s.pair_id = "gate";
  s.size_a = s.size_b = {1024, 1024};
  s.matches = std::move(m);
  return s;
}

}  // namespace

TEST_CASE("epipolar error of consistent and displaced matches") {
  const RpcModel m1 = fixtures::view(15.0, 90.0), m2 = fixtures::view(15.0, 270.0);
  const Match m = consistent(m1, m2, 30.0, -20.0, 40.0);
  CHECK(epipolar_error(m1, m2, BiasCorrection::identity(), m) < 1e-6);

  const auto [h0, h1] = epipolar_height_range(m1);
  const Polyline curve = epipolar_curve(m1, m2, m.p1, h0, h1);
  const double ds = curve.back().sample - curve.front().sample;
  const double dl = curve.back().line - curve.front().line;
  const double len = std::hypot(ds, dl);
  Match moved = m;
  moved.p2.sample += -3.0 * dl / len;
  moved.p2.line += 3.0 * ds / len;
  CHECK(epipolar_error(m1, m2, BiasCorrection::identity(), moved) == doctest::Approx(3.0).epsilon(0.003));

  Match shifted = m;
  shifted.p2.sample += 4.0;
  CHECK(epipolar_error(m1, m2, BiasCorrection::translation(4.0, 0.0), shifted) < 1e-6);
}

TEST_CASE("bias inversion") {
  const BiasCorrection b = fixtures::rotation_bias(3.0, -2.0, 0.3);
  const ImagePoint p{123.4, 567.8};
  const ImagePoint q = b.invert(b.apply(p));
  CHECK(q.sample == doctest::Approx(p.sample).epsilon(1e-12));
  CHECK(q.line == doctest::Approx(p.line).epsilon(1e-12));
  CHECK(b.plausible());
  CHECK_FALSE(BiasCorrection{{0, 3.0, 0, 0, 0, 1.0}}.plausible());
}

TEST_CASE("RANSAC recovers an injected affine bias among outliers") {
  const auto sc = fixtures::bias_scene(21, 100, 40, fixtures::rotation_bias(5.0, 0.0, 0.2));
  OrientationConfig cfg;
  cfg.seed = 4;
  const Orientation o = ransac_bias(sc.m1, sc.m2, sc.matches, cfg);
  CHECK(fixtures::bias_error_rms(sc, BiasCorrection::identity()) > 1.0);
  CHECK(fixtures::bias_error_rms(sc, o.bias) < 0.1);
  for (std::size_t i = 0; i < sc.true_matches; ++i) CHECK(o.inlier_mask[i]);
  CHECK(o.success);
  CHECK(o.inlier_ratio == doctest::Approx(double(o.inliers) / 140.0));

  const Orientation again = ransac_bias(sc.m1, sc.m2, sc.matches, cfg);
  CHECK(again.bias.a == o.bias.a);
  CHECK(again.inlier_mask == o.inlier_mask);
}

TEST_CASE("RANSAC needs three matches and gates on five inliers") {
  const auto sc = fixtures::bias_scene(3, 4, 0, BiasCorrection::identity());
  const Orientation o = ransac_bias(sc.m1, sc.m2, sc.matches, {});
  CHECK(o.inliers == 4);
  CHECK_FALSE(o.success);

  MatchSet two = sc.matches;
  two.matches.resize(2);
  CHECK_THROWS_AS(ransac_bias(sc.m1, sc.m2, two, {}), InsufficientDataError);
}

TEST_CASE("success gate by construction") {
  const OrientationConfig cfg;
  CHECK_FALSE(orientation_gate(4, 0.1, cfg));
  CHECK_FALSE(orientation_gate(100, 5.1, cfg));
  CHECK(orientation_gate(5, 4.9, cfg));
  CHECK(orientation_gate(5, 5.0, cfg));

  // Matches displaced by exactly r px across the epipolar line give rms r.
  const RpcModel m1 = fixtures::view(15.0, 90.0), m2 = fixtures::view(15.0, 270.0);
  const auto displaced = [&](std::size_t count, double r) {
    std::vector<Match> out;
    for (std::size_t i = 0; i < count; ++i) {
      Match m = consistent(m1, m2, -100.0 + 40.0 * i, 15.0 * i, 10.0 * i);
      const auto [h0, h1] = epipolar_height_range(m1);
      const Polyline c = epipolar_curve(m1, m2, m.p1, h0, h1);
      const double ds = c.back().sample - c.front().sample, dl = c.back().line - c.front().line;
      const double len = std::hypot(ds, dl);
      m.p2.sample += -r * dl / len;
      m.p2.line += r * ds / len;
      out.push_back(m);
    }
    return as_set(out);
  };
  OrientationConfig wide;
  wide.ransac_threshold = 10.0;
  const Orientation four = evaluate_bias(m1, m2, {}, displaced(4, 1.0), wide);
  CHECK(four.inliers == 4);
  CHECK_FALSE(four.success);
  const Orientation high = evaluate_bias(m1, m2, {}, displaced(6, 5.1), wide);
  CHECK(high.epipolar_rms == doctest::Approx(5.1).epsilon(1e-4));
  CHECK_FALSE(high.success);
  const Orientation pass = evaluate_bias(m1, m2, {}, displaced(5, 4.9), wide);
  CHECK(pass.inliers == 5);
  CHECK(pass.epipolar_rms == doctest::Approx(4.9).epsilon(1e-4));
  CHECK(pass.success);
}

TEST_CASE("reported rms ignores an excluded outlier") {
  auto sc = fixtures::bias_scene(8, 60, 10, fixtures::rotation_bias(2.0, -1.0, 0.1), 0.3);
  OrientationConfig cfg;
  cfg.seed = 11;
  const Orientation before = ransac_bias(sc.m1, sc.m2, sc.matches, cfg);
  sc.matches.matches.push_back({{10.0, 10.0}, {1000.0, 20.0}, std::nullopt});
  const Orientation after = ransac_bias(sc.m1, sc.m2, sc.matches, cfg);
  REQUIRE_FALSE(after.inlier_mask.back());
  CHECK(after.inliers == before.inliers);
  CHECK(after.epipolar_rms == doctest::Approx(before.epipolar_rms).epsilon(1e-6));
}

TEST_CASE("orientation config validation and JSON") {
  OrientationConfig bad;
  bad.max_epipolar_rms = 0.0;
  CHECK_THROWS_AS(validate(bad), ValidationError);
  bad = {};
  bad.ransac_threshold = -1.0;
  CHECK_THROWS_AS(validate(bad), ValidationError);

  const auto sc = fixtures::bias_scene(5, 20, 5, BiasCorrection::translation(1.0, 0.5));
  const Orientation o = ransac_bias(sc.m1, sc.m2, sc.matches, {});
  const Orientation back = orientation_from_json(orientation_to_json(o, {}));
  CHECK(back.bias.a == o.bias.a);
  CHECK(back.inlier_mask == o.inlier_mask);
  CHECK(back.success == o.success);
  CHECK(back.epipolar_rms == o.epipolar_rms);
}
