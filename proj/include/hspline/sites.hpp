#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace hspline {

struct Point2 {
  double x1 = 0.0;
  double x2 = 0.0;

  friend bool operator==(const Point2&, const Point2&) = default;
};

/// Axis-aligned rectangle [x1_lo, x1_hi] x [x2_lo, x2_hi].
struct Box {
  double x1_lo = 0.0;
  double x1_hi = 1.0;
  double x2_lo = 0.0;
  double x2_hi = 1.0;

  static Box unit() { return {}; }
};

/// Ordered set of distinct, finite 2-D sites. Index i of the set is the
/// position of the site in the sequence.
class SiteSet {
 public:
  enum class Duplicates { kReject, kAllow };

  SiteSet() = default;
  /// Throws InvalidArgument on non-finite coordinates, and on exactly repeated
  /// sites unless `duplicates == kAllow`.
  explicit SiteSet(std::vector<Point2> points, Duplicates duplicates = Duplicates::kReject);

  std::size_t size() const noexcept { return points_.size(); }
  bool empty() const noexcept { return points_.empty(); }
  const Point2& operator[](std::size_t i) const { return points_[i]; }
  std::span<const Point2> points() const noexcept { return points_; }
  auto begin() const noexcept { return points_.begin(); }
  auto end() const noexcept { return points_.end(); }

  /// Sites in the order given by `order` (each entry an index into this set).
  SiteSet permuted(std::span<const std::size_t> order) const;
  /// Sites [first, first + count).
  SiteSet slice(std::size_t first, std::size_t count) const;

  /// True when at least two sites coincide exactly.
  bool has_duplicates() const;

 private:
  std::vector<Point2> points_;
};

/// Observed responses y_i at the sites of a SiteSet.
struct Observation {
  Point2 site;
  double y = 0.0;
};

struct ObservationSet {
  SiteSet sites;
  std::vector<double> y;

  std::size_t size() const noexcept { return sites.size(); }
  Observation operator[](std::size_t i) const { return {sites[i], y[i]}; }
};

/// n sites drawn i.i.d. uniformly from `box`; bit-reproducible per seed.
SiteSet uniform_random_sites(std::size_t n, std::uint64_t seed, const Box& box = Box::unit());

/// m x m lattice including the box corners, x2 varying fastest.
SiteSet structured_grid(std::size_t m, const Box& box = Box::unit());

/// Franke's bivariate test function, with the coefficients used in the
/// simulation study:
///   3/4 exp(-(1/4)((9x-2)^2 + (9y-2)^2))
/// + 3/4 exp(-(1/49)(9x+1)^2 - (1/10)(9y+1)^2)
/// + 1/2 exp(-(1/4)((9x-7)^2 + (9y-3)^2))
/// - 1/2 exp(-(1/5)((9x-4)^2 + (9y-7)^2))
double franke(const Point2& p);

std::vector<double> franke(const SiteSet& sites);

/// y_i = franke(x_i) + N(0, sigma^2) noise.
ObservationSet synthesize_observations(const SiteSet& sites, double sigma, std::uint64_t seed);

inline constexpr double kDefaultCollinearTol = 1e-10;

/// |det(b - a, c - a)| <= tol * max(1, scale^2), scale being the largest
/// coordinate magnitude of the three points.
bool is_collinear(const Point2& a, const Point2& b, const Point2& c,
                  double tol = kDefaultCollinearTol);

// CSV: header `x1,x2` or `x1,x2,y`, 17 significant digits.
void write_sites_csv(std::ostream& out, const SiteSet& sites);
void write_observations_csv(std::ostream& out, const ObservationSet& obs);
/// Reads either layout. A missing y column yields an empty `y`.
ObservationSet read_observations_csv(std::istream& in);

/// 17 significant digits, enough to round-trip any double.
std::string format_double(double value);

}  // namespace hspline
