#include <cmath>
#include <sstream>

#include "doctest.h"
#include "hspline/error.hpp"
#include "hspline/sites.hpp"

using namespace hspline;

namespace {

// Second, independent evaluation of the Franke surface written with pow().
double franke_oracle(double x, double y) {
  return 0.75 * std::exp(-0.25 * (std::pow(9 * x - 2, 2) + std::pow(9 * y - 2, 2))) +
         0.75 * std::exp(-std::pow(9 * x + 1, 2) / 49.0 - std::pow(9 * y + 1, 2) / 10.0) +
         0.5 * std::exp(-0.25 * (std::pow(9 * x - 7, 2) + std::pow(9 * y - 3, 2))) -
         0.5 * std::exp(-0.2 * (std::pow(9 * x - 4, 2) + std::pow(9 * y - 7, 2)));
}

}  // namespace

TEST_CASE("uniform_random_sites") {
  SUBCASE("contained in the box") {
    const SiteSet s = uniform_random_sites(4, 7);
    CHECK(s.size() == 4);
    for (const auto& p : s) {
      CHECK(p.x1 >= 0.0);
      CHECK(p.x1 < 1.0);
      CHECK(p.x2 >= 0.0);
      CHECK(p.x2 < 1.0);
    }
  }
  SUBCASE("6400 distinct sites") {
    const SiteSet s = uniform_random_sites(6400, 1);
    CHECK(s.size() == 6400);
    CHECK_FALSE(s.has_duplicates());
  }
  SUBCASE("deterministic per seed") {
    const SiteSet a = uniform_random_sites(100, 42);
    const SiteSet b = uniform_random_sites(100, 42);
    const SiteSet c = uniform_random_sites(100, 43);
    CHECK(std::equal(a.begin(), a.end(), b.begin()));
    CHECK_FALSE(std::equal(a.begin(), a.end(), c.begin()));
  }
  SUBCASE("frozen first draw") {
    // Pins the generator so CSV outputs stay comparable across platforms.
    const SiteSet s = uniform_random_sites(1, 7);
    std::ostringstream os;
    os << format_double(s[0].x1) << ' ' << format_double(s[0].x2);
    CHECK(os.str() == "0.75438530415285798 0.94930120289264419");
  }
  SUBCASE("custom box") {
    const SiteSet s = uniform_random_sites(50, 3, Box{2.0, 3.0, -1.0, 0.0});
    for (const auto& p : s) {
      CHECK(p.x1 >= 2.0);
      CHECK(p.x1 < 3.0);
      CHECK(p.x2 >= -1.0);
      CHECK(p.x2 < 0.0);
    }
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(uniform_random_sites(0, 1), InvalidArgument);
    CHECK_THROWS_AS(uniform_random_sites(5, 1, Box{0.0, 0.0, 0.0, 1.0}), InvalidArgument);
  }
}

TEST_CASE("structured_grid") {
  const SiteSet corners = structured_grid(2);
  REQUIRE(corners.size() == 4);
  CHECK(corners[0] == Point2{0, 0});
  CHECK(corners[1] == Point2{0, 1});
  CHECK(corners[2] == Point2{1, 0});
  CHECK(corners[3] == Point2{1, 1});

  CHECK(structured_grid(40).size() == 1600);

  const SiteSet g3 = structured_grid(3, Box{0, 2, 0, 2});
  CHECK(g3[1].x2 - g3[0].x2 == 1.0);
  CHECK(g3[3].x1 - g3[0].x1 == 1.0);

  CHECK_THROWS_AS(structured_grid(1), InvalidArgument);
}

TEST_CASE("franke") {
  // Reference values from an arbitrary-precision evaluation (mpmath, 30 digits).
  CHECK(franke({0.5, 0.5}) == doctest::Approx(-0.0239536094918084233).epsilon(1e-14));
  CHECK(franke({0.0, 0.0}) == doctest::Approx(0.766419461120219642).epsilon(1e-14));
  CHECK(franke({0.25, 0.75}) == doctest::Approx(-0.263467000488210763).epsilon(1e-14));

  const double far = franke({10.0, 10.0});
  CHECK(std::isfinite(far));
  CHECK(std::abs(far) < 1e-6);

  const SiteSet s = uniform_random_sites(200, 5);
  for (const auto& p : s) {
    const double a = franke(p);
    const double b = franke_oracle(p.x1, p.x2);
    CHECK(std::abs(a - b) <= 1e-15 * std::max(1.0, std::abs(b)));
  }
}

TEST_CASE("synthesize_observations") {
  const SiteSet s = uniform_random_sites(400, 9);
  SUBCASE("zero noise is exact") {
    const ObservationSet obs = synthesize_observations(s, 0.0, 1);
    for (std::size_t i = 0; i < s.size(); ++i) CHECK(obs.y[i] == franke(s[i]));
  }
  SUBCASE("unit noise has unit spread") {
    const ObservationSet obs = synthesize_observations(s, 1.0, 1);
    double mean = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) mean += obs.y[i] - franke(s[i]);
    mean /= 400.0;
    double var = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) var += std::pow(obs.y[i] - franke(s[i]) - mean, 2);
    const double sd = std::sqrt(var / 399.0);
    CHECK(sd == doctest::Approx(1.0).epsilon(0.15));
  }
  SUBCASE("seeds give different noise") {
    const ObservationSet a = synthesize_observations(s, 1.0, 1);
    const ObservationSet b = synthesize_observations(s, 1.0, 2);
    CHECK(a.y != b.y);
    CHECK(a.y == synthesize_observations(s, 1.0, 1).y);
  }
  CHECK_THROWS_AS(synthesize_observations(s, -1.0, 1), InvalidArgument);
}

TEST_CASE("is_collinear") {
  CHECK(is_collinear({0, 0}, {1, 1}, {2, 2}, 1e-12));
  CHECK_FALSE(is_collinear({0, 0}, {1, 0}, {0, 1}, 1e-12));
  CHECK(is_collinear({0, 0}, {1, 0}, {2, 1e-16}, 1e-12));

  SUBCASE("symmetric under permutation") {
    std::vector<std::array<Point2, 3>> triples{{{{0, 0}, {1, 0}, {2, 1e-11}}},
                                               {{{0.1, 0.2}, {0.3, 0.4}, {0.5, 0.6000001}}},
                                               {{{5, 5}, {6, 7}, {7, 9}}},
                                               {{{0, 0}, {1, 0}, {0, 1}}}};
    for (const auto& t : triples) {
      const bool ref = is_collinear(t[0], t[1], t[2]);
      CHECK(is_collinear(t[0], t[2], t[1]) == ref);
      CHECK(is_collinear(t[1], t[0], t[2]) == ref);
      CHECK(is_collinear(t[1], t[2], t[0]) == ref);
      CHECK(is_collinear(t[2], t[0], t[1]) == ref);
      CHECK(is_collinear(t[2], t[1], t[0]) == ref);
    }
  }
}

TEST_CASE("SiteSet validation") {
  CHECK_THROWS_AS(SiteSet({{0, 0}, {0, 0}}), InvalidArgument);
  CHECK_NOTHROW(SiteSet({{0, 0}, {0, 0}}, SiteSet::Duplicates::kAllow));
  CHECK_THROWS_AS(SiteSet({{0, std::nan("")}}), InvalidArgument);
  CHECK_THROWS_AS(SiteSet({{INFINITY, 0}}), InvalidArgument);
}

TEST_CASE("CSV round trip is lossless") {
  const SiteSet s = uniform_random_sites(50, 11);
  const ObservationSet obs = synthesize_observations(s, 0.3, 4);
  std::stringstream ss;
  write_observations_csv(ss, obs);
  const ObservationSet back = read_observations_csv(ss);
  REQUIRE(back.size() == obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) {
    CHECK(back.sites[i] == obs.sites[i]);
    CHECK(back.y[i] == obs.y[i]);
  }

  std::stringstream sites_only;
  write_sites_csv(sites_only, s);
  CHECK(sites_only.str().rfind("x1,x2\n", 0) == 0);
  const ObservationSet no_y = read_observations_csv(sites_only);
  CHECK(no_y.y.empty());
  CHECK(no_y.size() == 50);

  std::stringstream bad("a,b\n1,2\n");
  CHECK_THROWS_AS(read_observations_csv(bad), InvalidArgument);
  std::stringstream bad_num("x1,x2\n1,zz\n");
  CHECK_THROWS_AS(read_observations_csv(bad_num), InvalidArgument);
}
