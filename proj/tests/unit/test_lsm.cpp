#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "satstereo/errors.hpp"
#include "satstereo/lsm.hpp"

using namespace satstereo;

TEST_CASE("aligned patch stays put") {
  const GrayImage img = fixtures::textured(96, 96, 2);
  const LsmResult r = lsm_refine(img, img, {48, 48}, {48, 48});
  CHECK(r.converged);
  CHECK(r.status == LsmStatus::Converged);
  CHECK(std::hypot(r.p2.sample - 48.0, r.p2.line - 48.0) < 1e-3);
}

TEST_CASE("sub-pixel shift is recovered") {
  const GrayImage a = fixtures::textured(128, 128, 5);
  const GrayImage b = fixtures::textured(128, 128, 5, -0.3, 0.0);  // b(x) = a(x - 0.3)
  int good = 0, total = 0;
  for (int y = 20; y <= 100; y += 20) {
    for (int x = 20; x <= 100; x += 20) {
      const LsmResult r = lsm_refine(a, b, {double(x), double(y)}, {double(x), double(y)});
      ++total;
      if (r.converged && std::abs(r.p2.sample - x - 0.3) < 0.05 && std::abs(r.p2.line - y) < 0.05) ++good;
    }
  }
  CHECK(good >= total - 1);
}

TEST_CASE("affine-warped patch recovers its translation") {
  // b(x, y) = a(A^-1 (x - c) + c - t): a 2 percent scale and slight shear about (64, 64).
  const GrayImage a = fixtures::textured(128, 128, 6);
  const synth::Texture tex(6, 1.5);
  GrayImage b(128, 128);
  for (int y = 0; y < 128; ++y) {
    for (int x = 0; x < 128; ++x) {
      const double u = x - 64.0 - 0.4, v = y - 64.0 + 0.25;
      const double sx = 64.0 + u / 1.02 - 0.01 * v, sy = 64.0 + v / 0.99;
      b.at(x, y) = static_cast<float>(20.0 + 215.0 * tex(sx * 0.5, sy * 0.5));
    }
  }
  const LsmResult r = lsm_refine(a, b, {64, 64}, {64, 64});
  REQUIRE(r.converged);
  CHECK(r.p2.sample == doctest::Approx(64.4).epsilon(0.05 / 64.4));
  CHECK(r.p2.line == doctest::Approx(63.75).epsilon(0.05 / 63.75));
}

TEST_CASE("textureless and out-of-bounds patches are rejected") {
  const GrayImage flat(80, 80, 120.0f);
  const LsmResult r = lsm_refine(flat, flat, {40, 40}, {40, 40});
  CHECK_FALSE(r.converged);
  CHECK(r.status == LsmStatus::Textureless);
  CHECK(r.p2 == ImagePoint{40, 40});

  const GrayImage img = fixtures::textured(80, 80, 1);
  const LsmResult edge = lsm_refine(img, img, {3, 40}, {3, 40});
  CHECK(edge.status == LsmStatus::OutOfBounds);
  CHECK_THROWS_AS(lsm_refine(img, img, {40, 40}, {40, 40}, LsmConfig{20}), ValidationError);
}

TEST_CASE("a wrong seed far off diverges and keeps the original point") {
  const GrayImage a = fixtures::textured(128, 128, 7);
  const GrayImage b = fixtures::textured(128, 128, 70);
  const LsmResult r = lsm_refine(a, b, {64, 64}, {64, 64});
  if (!r.converged) CHECK(r.p2 == ImagePoint{64, 64});
}

TEST_CASE("match set refinement") {
  const GrayImage a = fixtures::textured(160, 160, 8);
  const GrayImage b = fixtures::textured(160, 160, 8, -0.3, 0.0);
  MatchSet set;
  set.size_a = set.size_b = {160, 160};
  for (int y = 30; y <= 130; y += 25)
    for (int x = 30; x <= 130; x += 25)
      set.matches.push_back({{double(x), double(y)}, {x + 0.3 + 0.4, double(y)}, std::nullopt});
  set.matches.push_back({{2, 2}, {2, 2}, 0.5});

  const RefinedMatches out = refine_matchset(a, b, set);
  REQUIRE(out.matches.size() == set.size());
  CHECK(out.counts.refined + out.counts.kept + out.counts.rejected == set.size());
  CHECK(out.counts.rejected == 1);
  CHECK(out.matches.matches.back().p2 == ImagePoint{2, 2});
  CHECK(*out.matches.matches.back().score == 0.5);
  double sum = 0.0;
  for (std::size_t i = 0; i + 1 < set.size(); ++i) {
    const auto& m = out.matches.matches[i];
    sum += std::hypot(m.p2.sample - m.p1.sample - 0.3, m.p2.line - m.p1.line);
  }
  CHECK(sum / double(set.size() - 1) < 0.05);

  // Already consistent matches barely move: an integer offset between
  // copies of one raster, where resampling is exact.
  GrayImage c(160, 160);
  for (int y = 0; y < 160; ++y)
    for (int x = 0; x < 160; ++x) c.at(x, y) = a.at(std::min(159, x + 2), std::max(0, y - 1));
  MatchSet exact = set;
  exact.matches.pop_back();
  for (auto& m : exact.matches) m.p2 = {m.p1.sample - 2.0, m.p1.line + 1.0};
  const RefinedMatches same = refine_matchset(a, c, exact);
  for (std::size_t i = 0; i < exact.size(); ++i) {
    CHECK(std::abs(same.matches.matches[i].p2.sample - exact.matches[i].p2.sample) < 1e-2);
    CHECK(std::abs(same.matches.matches[i].p2.line - exact.matches[i].p2.line) < 1e-2);
  }

  CHECK(refine_matchset(a, b, MatchSet{}).matches.empty());
}
