#include <doctest.h>

#include <cmath>
#include <cstring>
#include <random>

#include <Eigen/Dense>

#include "dense_scene.hpp"
#include "fixtures.hpp"
#include "satstereo/dense.hpp"
#include "satstereo/errors.hpp"

using namespace satstereo;

namespace {

double fraction_within(const DisparityMap& d, double truth, double tol) {
  std::size_t valid = 0, good = 0;
  for (float v : d.values) {
    if (std::isnan(v)) continue;
    ++valid;
    if (std::abs(v - truth) <= tol) ++good;
  }
  return valid ? double(good) / double(valid) : 0.0;
}

}  // namespace

TEST_CASE("rectification removes vertical parallax of control matches") {
  const RpcModel m1 = fixtures::view(15.0, 90.0), m2 = fixtures::view(15.0, 270.0);
  const BiasCorrection bias = BiasCorrection::translation(1.5, 2.0);
  const GroundRect roi = synth::roi_around(fixtures::kCenter, 150.0, 0.0, 100.0);
  const RectificationMap map = build_rectification(m1, m2, bias, roi, {1024, 1024}, {1024, 1024});
  CHECK(map.width > 0);
  CHECK(map.height > 0);
  CHECK(map.d_min < map.d_max);

  std::mt19937_64 gen(12);
  std::uniform_real_distribution<double> en(-150.0, 150.0), hh(0.0, 100.0);
  const LocalFrame frame(fixtures::kCenter);
  double worst = 0.0;
  for (int i = 0; i < 200; ++i) {
    const auto g = frame.to_ground({en(gen), en(gen), hh(gen)});
    const ImagePoint r1 = map.to_rect_1(project(m1, g));
    const ImagePoint r2 = map.to_rect_2(bias.apply(project(m2, g)));
    worst = std::max(worst, std::abs(r1.line - r2.line));
    const double d = r1.sample - r2.sample;
    CHECK(d >= map.d_min);
    CHECK(d <= map.d_max);
  }
  CHECK(worst < 0.05);

  // Round trip between source and rectified frames.
  const ImagePoint s = map.to_source_1(map.to_rect_1({300.25, 700.5}));
  CHECK(s.sample == doctest::Approx(300.25));
  CHECK(s.line == doctest::Approx(700.5));
}

TEST_CASE("rectification failures") {
  const RpcModel m1 = fixtures::view(15.0, 90.0);
  const GroundRect roi = synth::roi_around(fixtures::kCenter, 100.0, 0.0, 100.0);
  CHECK_THROWS_AS(build_rectification(m1, m1, {}, roi, {1024, 1024}, {1024, 1024}),
                  RectificationError);
  const GroundPoint far{fixtures::kCenter.lat + 0.5, fixtures::kCenter.lon, 0.0};
  const GroundRect away = synth::roi_around(far, 100.0, 0.0, 100.0);
  CHECK_THROWS_AS(build_rectification(m1, fixtures::view(15.0, 270.0), {}, away, {1024, 1024},
                                      {1024, 1024}),
                  RectificationError);
}

TEST_CASE("census signature") {
  GrayImage img(5, 5);
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x) img.at(x, y) = float(y * 5 + x);
  const auto c = census_transform(img);
  // Centre pixel 12: the 12 neighbours before it in raster order are darker.
  const std::uint32_t centre = c[12];
  CHECK(__builtin_popcount(centre) == 12);
  CHECK(census_transform(GrayImage(8, 8, 3.0f))[20] == 0u);
}

TEST_CASE("SGM on a constant-disparity random-dot stereogram") {
  const GrayImage left = synth::random_dots(160, 96, 1);
  const GrayImage right = synth::shift_left(left, 10, 2);
  const DisparityMap d = sgm(left, right, 0, 20);
  CHECK(d.valid_count() > d.values.size() / 2);
  CHECK(fraction_within(d, 10.0, 1.0) >= 0.95);
  for (float v : d.values) {
    if (std::isnan(v)) continue;
    CHECK(v >= 0.0f);
    CHECK(v <= 20.0f);
  }
}

TEST_CASE("SGM on identical images") {
  const GrayImage img = synth::random_dots(120, 80, 3);
  const DisparityMap d = sgm(img, img, -2, 2);
  CHECK(fraction_within(d, 0.0, 0.5) >= 0.99);
}

TEST_CASE("SGM invalidates an occluded strip") {
  const int w = 160;
  const auto scene = synth::two_plane_scene(w, 80, 4, 12, 60, 110, 5);
  const DisparityMap d = sgm(scene.left, scene.right, 0, 16);
  // The census window blurs a one-pixel boundary; the strip interior must be
  // rejected outright.
  std::size_t occluded = 0, interior = 0, invalid = 0, interior_invalid = 0;
  std::size_t visible = 0, correct = 0;
  for (std::size_t i = 0; i < d.values.size(); ++i) {
    const int x = int(i % w);
    if (x < 20 || x >= 140) continue;
    const bool nan = std::isnan(d.values[i]);
    if (scene.occluded[i]) {
      ++occluded;
      invalid += nan;
      if (scene.occluded[i - 1] && scene.occluded[i + 1]) {
        ++interior;
        interior_invalid += nan;
      }
    } else {
      ++visible;
      if (!nan && std::abs(d.values[i] - scene.truth[i]) <= 1.0) ++correct;
    }
  }
  REQUIRE(interior > 0);
  CHECK(double(interior_invalid) / double(interior) >= 0.98);
  CHECK(double(invalid) / double(occluded) >= 0.8);
  CHECK(double(correct) / double(visible) >= 0.9);
}

TEST_CASE("SGM output is identical for any worker count") {
  const auto scene = synth::two_plane_scene(140, 90, 3, 9, 40, 90, 8);
  SgmConfig cfg;
  const DisparityMap one = sgm(scene.left, scene.right, -2, 12, cfg);
  for (int w : {2, 3, 8}) {
    cfg.workers = w;
    const DisparityMap many = sgm(scene.left, scene.right, -2, 12, cfg);
    REQUIRE(many.values.size() == one.values.size());
    CHECK(std::memcmp(many.values.data(), one.values.data(), one.values.size() * sizeof(float)) == 0);
  }
}

TEST_CASE("SGM input validation") {
  const GrayImage a(40, 40, 1.0f), b(41, 40, 1.0f);
  CHECK_THROWS_AS(sgm(a, b, 0, 4), ValidationError);
  CHECK_THROWS_AS(sgm(a, a, 4, 0), ValidationError);
  SgmConfig cfg;
  cfg.p2 = 5;
  CHECK_THROWS_AS(sgm(a, a, 0, 4, cfg), ValidationError);
  cfg = {};
  cfg.p2 = 9000;
  CHECK_THROWS_AS(sgm(a, a, 0, 4, cfg), ValidationError);
  cfg = {};
  cfg.workers = 0;
  CHECK_THROWS_AS(sgm(a, a, 0, 4, cfg), ValidationError);
}

TEST_CASE("gridding takes the per-cell median") {
  const GridSpec spec{0.0, 0.0, 1.0, 2, 2};
  const DsmGrid even = grid_points({{0.2, 1.5, 10.0}, {0.7, 1.2, 12.0}}, spec);
  CHECK(even.at(0, 0) == 11.0);
  CHECK_FALSE(even.valid(1, 1));
  const DsmGrid odd = grid_points({{1.5, 0.5, 3.0}, {1.5, 0.5, 9.0}, {1.5, 0.5, 4.0}, {5.0, 5.0, 1.0}}, spec);
  CHECK(odd.at(1, 1) == 4.0);
  CHECK(odd.valid_count() == 1);
  CHECK_THROWS_AS(grid_for_roi(synth::roi_around(fixtures::kCenter, 10.0, 0, 1), 0.0), ValidationError);
}

TEST_CASE("all-invalid disparity gives an empty DSM") {
  const auto p = fixtures::rendered_pair(synth::Terrain{100.0, 0.0, 0.0, {}}, 128, 0.4, 20.0);
  const RectifiedPair rect = rectify(p.img1, p.img2, p.m1, p.m2, p.bias, p.roi);
  DisparityMap d;
  d.width = rect.left.width();
  d.height = rect.left.height();
  d.d_min = rect.map.d_min;
  d.d_max = rect.map.d_max;
  d.values.assign(std::size_t(d.width) * d.height, std::nanf(""));
  const DsmGrid dsm = dsm_from_disparity(d, rect.map, p.m1, p.m2, p.bias, p.grid);
  CHECK(dsm.valid_count() == 0);
  CHECK(dsm.spec() == p.grid.spec);
}

TEST_CASE("flat scene at 100 m") {
  const auto p = fixtures::rendered_pair(synth::Terrain{100.0, 0.0, 0.0, {}});
  DsmBuildStats stats;
  const DsmGrid dsm = fixtures::reconstruct(p, &stats);
  CHECK(stats.triangulated > 0);
  std::size_t valid = 0, good = 0;
  for (double z : dsm.values()) {
    if (std::isnan(z)) continue;
    ++valid;
    if (std::abs(z - 100.0) <= 0.2) ++good;
  }
  CHECK(double(valid) / double(dsm.values().size()) > 0.8);
  CHECK(double(good) / double(valid) >= 0.95);
}

TEST_CASE("ramp slope is reconstructed") {
  const auto p = fixtures::rendered_pair(synth::Terrain{20.0, 0.15, -0.05, {}});
  const DsmGrid dsm = fixtures::reconstruct(p);
  const GridSpec& s = dsm.spec();
  std::vector<Eigen::Vector3d> rows;
  for (int r = 0; r < s.height; ++r)
    for (int c = 0; c < s.width; ++c)
      if (dsm.valid(c, r)) rows.emplace_back(s.center_x(c), s.center_y(r), dsm.at(c, r));
  REQUIRE(rows.size() > 1000);
  Eigen::MatrixXd a(rows.size(), 3);
  Eigen::VectorXd z(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    a.row(Eigen::Index(i)) << rows[i].x(), rows[i].y(), 1.0;
    z[Eigen::Index(i)] = rows[i].z();
  }
  const Eigen::Vector3d plane = a.colPivHouseholderQr().solve(z);
  CHECK(plane[0] == doctest::Approx(0.15).epsilon(0.05));
  CHECK(plane[1] == doctest::Approx(-0.05).epsilon(0.05));
}
