#include <doctest.h>

#include <algorithm>
#include <numeric>

#include "dualface/random.hpp"
#include "dualface/shadow.hpp"

using namespace dualface;

namespace {

ContourSketch random_contour(Rng& rng, int w, int h) {
  ContourSketch c(w, h, 0);
  for (auto& v : c.cells()) v = rng.below(4) == 0;
  return c;
}

}  // namespace

TEST_CASE("a single contour blends to itself") {
  Rng rng(1);
  const ContourSketch c = random_contour(rng, 40, 30);
  const std::vector<ContourSketch> one{c};
  const ShadowImage s = blend_shadow(one);
  for (int y = 0; y < 30; ++y) {
    for (int x = 0; x < 40; ++x) CHECK(s.at(x, y) == double(c.at(x, y)));
  }
}

TEST_CASE("disjoint halves blend to one half each") {
  ContourSketch a(10, 10, 0), b(10, 10, 0);
  for (int y = 0; y < 10; ++y) {
    for (int x = 0; x < 10; ++x) (x < 5 ? a : b).at(x, y) = 1;
  }
  const std::vector<ContourSketch> both{a, b};
  const ShadowImage s = blend_shadow(both);
  for (double v : s.cells()) CHECK(v == doctest::Approx(0.5));
}

TEST_CASE("blend equals a brute-force weighted mean and ignores input order") {
  Rng rng(7);
  for (int trial = 0; trial < 30; ++trial) {
    const std::size_t n = 1 + rng.below(5);
    std::vector<ContourSketch> cs;
    std::vector<double> w;
    for (std::size_t i = 0; i < n; ++i) {
      cs.push_back(random_contour(rng, 24, 24));
      w.push_back(rng.uniform(0.1, 2.0));
    }
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    const ShadowImage s = blend_shadow(cs, std::span<const double>(w));
    for (int y = 0; y < 24; ++y) {
      for (int x = 0; x < 24; ++x) {
        double expected = 0;
        for (std::size_t i = 0; i < n; ++i) expected += w[i] / total * cs[i].at(x, y);
        REQUIRE(s.at(x, y) == doctest::Approx(expected).epsilon(1e-12));
        REQUIRE((s.at(x, y) >= 0.0 && s.at(x, y) <= 1.0));
      }
    }

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::reverse(perm.begin(), perm.end());
    std::vector<ContourSketch> pc;
    std::vector<double> pw;
    for (auto i : perm) pc.push_back(cs[i]), pw.push_back(w[i]);
    const ShadowImage p = blend_shadow(pc, std::span<const double>(pw));
    for (std::size_t i = 0; i < s.cells().size(); ++i) REQUIRE(p.cells()[i] == doctest::Approx(s.cells()[i]).epsilon(1e-12));
  }
}

TEST_CASE("three equal contours with one shared pixel") {
  std::vector<ContourSketch> cs(3, ContourSketch(8, 8, 0));
  for (int i = 0; i < 3; ++i) {
    cs[i].at(4, 4) = 1;
    cs[i].at(i, 0) = 1;
  }
  const ShadowImage s = blend_shadow(cs);
  CHECK(s.at(4, 4) == doctest::Approx(1.0));
  CHECK(s.at(0, 0) == doctest::Approx(1.0 / 3));
  CHECK(s.at(7, 7) == 0.0);
  CHECK(shadow_to_gray8(s).at(0, 0) == 85);
  CHECK(shadow_to_gray8(s).at(4, 4) == 255);
}

TEST_CASE("weights from retrieval results") {
  const std::vector<RetrievalResult> r{{"a", 0.9, 1}, {"b", 0.3, 2}};
  CHECK(shadow_weights(r, ShadowWeighting::kEqual) == std::vector<double>{1, 1});
  CHECK(shadow_weights(r, ShadowWeighting::kSimilarity) == std::vector<double>{0.9, 0.3});
  const std::vector<RetrievalResult> zero{{"a", 0, 1}, {"b", 0, 2}};
  CHECK(shadow_weights(zero, ShadowWeighting::kSimilarity) == std::vector<double>{1, 1});
}

TEST_CASE("bad blend inputs are rejected") {
  CHECK_THROWS_AS(blend_shadow(std::vector<ContourSketch>{}), ValidationError);
  const std::vector<ContourSketch> mixed{ContourSketch(4, 4), ContourSketch(5, 4)};
  CHECK_THROWS_AS(blend_shadow(mixed), ValidationError);
  const std::vector<ContourSketch> two{ContourSketch(4, 4), ContourSketch(4, 4)};
  const std::vector<double> neg{1, -1}, zeros{0, 0}, short_w{1};
  CHECK_THROWS_AS(blend_shadow(two, std::span<const double>(neg)), ValidationError);
  CHECK_THROWS_AS(blend_shadow(two, std::span<const double>(zeros)), ValidationError);
  CHECK_THROWS_AS(blend_shadow(two, std::span<const double>(short_w)), ValidationError);
}
