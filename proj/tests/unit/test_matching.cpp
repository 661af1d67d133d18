#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <set>

#include "fixtures.hpp"
#include "satstereo/errors.hpp"
#include "satstereo/features.hpp"
#include "satstereo/matches.hpp"

using namespace satstereo;

namespace {

Descriptor unit(std::size_t k) {
  Descriptor d{};
  d[k] = 1.0f;
  return d;
}

double dist(const Descriptor& a, const Descriptor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (double(a[i]) - b[i]) * (double(a[i]) - b[i]);
  return std::sqrt(s);
}

// Exhaustive all-pairs ratio test.
std::set<std::pair<std::size_t, std::size_t>> brute_ratio(const std::vector<Descriptor>& a,
                                                          const std::vector<Descriptor>& b,
                                                          double ratio) {
  std::set<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    std::vector<std::pair<double, std::size_t>> d;
    for (std::size_t j = 0; j < b.size(); ++j) d.emplace_back(dist(a[i], b[j]), j);
    std::sort(d.begin(), d.end());
    if (d[0].first < ratio * d[1].first) out.emplace(i, d[0].second);
  }
  return out;
}

std::set<std::pair<std::size_t, std::size_t>> pairs_of(const RatioTestResult& r, bool swap = false) {
  std::set<std::pair<std::size_t, std::size_t>> out;
  for (const auto& m : r.matches) out.emplace(swap ? m.train : m.query, swap ? m.query : m.train);
  return out;
}

std::vector<Descriptor> random_descriptors(std::size_t n, unsigned seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  std::vector<Descriptor> out(n);
  for (auto& d : out)
    for (auto& v : d) v = u(gen);
  return out;
}

// Sum of random Gaussian blobs; pixel (x, y) shows scene point (x + dx, y).
GrayImage blobs(int width, int height, unsigned seed, double dx = 0.0) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> px(-20.0, width + 20.0), py(-20.0, height + 20.0);
  std::uniform_real_distribution<double> sig(1.5, 4.0), amp(90.0, 130.0);
  std::bernoulli_distribution sign(0.5);
  struct Blob { double x, y, s, a; };
  std::vector<Blob> list;
  const int n = width * height / 400;
  for (int i = 0; i < n; ++i) {
    const double x = px(gen), y = py(gen), s = sig(gen), a = amp(gen);
    list.push_back({x, y, s, sign(gen) ? a : -a});
  }
  GrayImage img(width, height, 128.0f);
  for (const auto& b : list)
    for (int y = std::max(0, int(b.y - 4 * b.s)); y < std::min(height, int(b.y + 4 * b.s) + 1); ++y)
      for (int x = 0; x < width; ++x) {
        const double ex = x + dx - b.x, ey = y - b.y;
        if (std::abs(ex) > 4 * b.s) continue;
        img.at(x, y) += static_cast<float>(b.a * std::exp(-(ex * ex + ey * ey) / (2 * b.s * b.s)));
      }
  return img;
}

}  // namespace

TEST_CASE("constant image has no keypoints") {
  CHECK(detect_and_describe(GrayImage(128, 128, 100.0f)).empty());
}

TEST_CASE("detector rejects small or non-finite images") {
  CHECK_THROWS_AS(detect_and_describe(GrayImage(63, 128)), ValidationError);
  GrayImage img(64, 64, 10.0f);
  img.at(5, 5) = std::nanf("");
  CHECK_THROWS_AS(detect_and_describe(img), ValidationError);
}

TEST_CASE("detections follow a 10 px translation") {
  const GrayImage a = blobs(256, 256, 3);
  const GrayImage b = blobs(256, 256, 3, -10.0);  // b(x) = a(x - 10)
  const auto ka = detect_and_describe(a);
  const auto kb = detect_and_describe(b);
  REQUIRE(ka.size() > 50);
  std::size_t interior = 0, found = 0;
  for (const auto& k : ka) {
    const double x = k.position.sample + 10.0, y = k.position.line;
    if (x < 32 || y < 32 || x > 256 - 32 || y > 256 - 32) continue;
    ++interior;
    for (const auto& o : kb) {
      if (std::hypot(o.position.sample - x, o.position.line - y) < 0.5) {
        ++found;
        break;
      }
    }
  }
  REQUIRE(interior > 30);
  CHECK(double(found) / double(interior) >= 0.9);
}

TEST_CASE("detection is deterministic and descriptors are unit length") {
  const GrayImage a = fixtures::textured(160, 140, 9);
  const auto k1 = detect_and_describe(a);
  const auto k2 = detect_and_describe(a);
  REQUIRE(k1.size() == k2.size());
  REQUIRE_FALSE(k1.empty());
  for (std::size_t i = 0; i < k1.size(); ++i) {
    CHECK(k1[i].position.sample == k2[i].position.sample);
    CHECK(k1[i].position.line == k2[i].position.line);
    CHECK(k1[i].descriptor == k2[i].descriptor);
    double n = 0.0;
    for (float v : k1[i].descriptor) n += double(v) * v;
    CHECK(std::sqrt(n) == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("identical descriptor sets match themselves") {
  const auto a = random_descriptors(30, 1);
  const auto r = match_descriptors(a, a, 0.01);
  REQUIRE(r.matches.size() == 30);
  for (const auto& m : r.matches) {
    CHECK(m.query == m.train);
    CHECK(m.d1 == 0.0);
  }
}

TEST_CASE("ratio just above the threshold is rejected") {
  std::vector<Descriptor> a{Descriptor{}};
  Descriptor near = unit(0), far = unit(1);
  near[0] = 0.96f;
  std::vector<Descriptor> b{near, far};
  CHECK(ratio_test(a, b, 0.95).matches.empty());
  CHECK(ratio_test(a, b, 0.97).matches.size() == 1);
}

TEST_CASE("ratio test agrees with the exhaustive oracle") {
  // Query i sits on the segment between b[i] and b[i+1]; t sets its ratio t / (1 - t).
  const double t[10] = {0.2, 0.49, 0.3, 0.495, 0.5, 0.4, 0.499, 0.4875, 0.498, 0.492};
  std::vector<Descriptor> a(10), b(11);
  for (std::size_t i = 0; i < 11; ++i) b[i] = unit(i);
  for (std::size_t i = 0; i < 10; ++i) {
    a[i] = Descriptor{};
    a[i][i] = static_cast<float>(1.0 - t[i]);
    a[i][i + 1] = static_cast<float>(t[i]);
  }
  const auto oracle = brute_ratio(a, b, 0.95);
  REQUIRE(oracle.size() == 3);
  CHECK(pairs_of(ratio_test(a, b, 0.95)) == oracle);

  const auto ra = random_descriptors(60, 2), rb = random_descriptors(45, 3);
  for (double ratio : {0.8, 0.9, 0.95, 1.0})
    CHECK(pairs_of(ratio_test(ra, rb, ratio)) == brute_ratio(ra, rb, ratio));
}

TEST_CASE("single train descriptor drops every query") {
  const auto a = random_descriptors(5, 4), b = random_descriptors(1, 5);
  const auto r = ratio_test(a, b, 0.95);
  CHECK(r.matches.empty());
  CHECK(r.dropped_queries == 5);
}

TEST_CASE("cross-check is symmetric and ratio is monotone") {
  auto a = random_descriptors(80, 6);
  auto b = random_descriptors(70, 7);
  std::mt19937 gen(8);
  std::normal_distribution<float> noise(0.0f, 0.05f);
  for (std::size_t i = 0; i < 40; ++i)
    for (std::size_t k = 0; k < kDescriptorSize; ++k) b[i][k] = a[2 * i][k] + noise(gen);
  const auto ab = match_descriptors(a, b, 0.95, true);
  const auto ba = match_descriptors(b, a, 0.95, true);
  CHECK(ab.matches.size() >= 30);
  CHECK(pairs_of(ab) == pairs_of(ba, true));

  std::set<std::pair<std::size_t, std::size_t>> previous;
  for (double ratio : {0.3, 0.5, 0.7, 0.8, 0.9, 0.95, 1.0}) {
    const auto cur = pairs_of(match_descriptors(a, b, ratio, false));
    CHECK(std::includes(cur.begin(), cur.end(), previous.begin(), previous.end()));
    previous = cur;
  }
}

TEST_CASE("ratio outside (0, 1] is rejected") {
  const auto a = random_descriptors(3, 9);
  CHECK_THROWS_AS(ratio_test(a, a, 0.0), ValidationError);
  CHECK_THROWS_AS(ratio_test(a, a, 1.5), ValidationError);
}

TEST_CASE("baseline matching recovers a translation") {
  const GrayImage a = fixtures::textured(256, 256, 11);
  const GrayImage b = fixtures::textured(256, 256, 11, 6.0, -4.0);  // b(x, y) = a(x + 6, y - 4)
  const MatchSet m = baseline_match(a, b, {}, "p");
  REQUIRE(m.size() > 30);
  std::size_t good = 0;
  for (const auto& x : m.matches)
    if (std::hypot(x.p1.sample - 6.0 - x.p2.sample, x.p1.line + 4.0 - x.p2.line) < 1.0) ++good;
  CHECK(double(good) / double(m.size()) > 0.9);
  CHECK(m.method == "baseline");
}

TEST_CASE("match CSV wire format") {
  const ImageSize size{100, 80};
  const std::string text =
      "x1,y1,x2,y2,score\n"
      "1.5,2.25,3,4,0.9\n"
      "10,20,30,40,1\n"
      "5,6,7,8,0\n";
  const auto r = parse_matches(text, "p", "ext", size, size);
  REQUIRE(r.set.size() == 3);
  CHECK(r.rejected.empty());
  CHECK(r.set.matches[0].p1.sample == 1.5);
  CHECK(r.set.matches[0].p1.line == 2.25);
  CHECK(*r.set.matches[0].score == 0.9);

  const auto back = parse_matches(format_matches(r.set), "p", "ext", size, size);
  REQUIRE(back.set.size() == 3);
  CHECK(back.set.matches[2].p2.line == 8.0);

  const auto nos = parse_matches("x1,y1,x2,y2\n1,2,3,4\n", "p", "ext", size, size);
  REQUIRE(nos.set.size() == 1);
  CHECK_FALSE(nos.set.matches[0].score.has_value());
}

TEST_CASE("match CSV bounds, duplicates and errors") {
  const ImageSize size{100, 80};
  const auto r = parse_matches("x1,y1,x2,y2\n1,2,3,4\n100,2,3,4\n1,2,3,4\n5,5,5,80\n", "p", "ext",
                               size, size);
  CHECK(r.set.size() == 1);
  REQUIRE(r.rejected.size() == 2);
  CHECK(r.rejected[0].line == 3);
  CHECK(r.rejected[1].line == 5);
  CHECK(r.duplicates == 1);

  const auto score = parse_matches("x1,y1,x2,y2,score\n1,2,3,4,1.5\n", "p", "ext", size, size);
  CHECK(score.set.empty());
  CHECK(score.rejected.size() == 1);

  try {
    parse_matches("x1,y1,x2,y2\n1,2,3,4\n1,2,abc,4\n", "p", "ext", size, size);
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
  CHECK_THROWS_AS(parse_matches("x1,y1,x2,y2\n1,2,3\n", "p", "ext", size, size), ParseError);
  CHECK_THROWS_AS(parse_matches("a,b,c,d\n1,2,3,4\n", "p", "ext", size, size), ParseError);
  CHECK(parse_matches("", "p", "ext", size, size).set.empty());
  CHECK(parse_matches("x1,y1,x2,y2\n", "p", "ext", size, size).set.empty());
}

TEST_CASE("match files load from disk") {
  const auto dir = fixtures::temp_dir("matches");
  std::ofstream(dir / "m.csv") << "x1,y1,x2,y2\n1,2,3,4\n";
  const auto r = load_matches(dir / "m.csv", "p", "ext", {10, 10}, {10, 10});
  CHECK(r.set.size() == 1);
  CHECK(r.set.pair_id == "p");
  CHECK_THROWS_AS(load_matches(dir / "none.csv", "p", "ext", {10, 10}, {10, 10}), IoError);
}
