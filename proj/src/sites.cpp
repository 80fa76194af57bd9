#include "hspline/sites.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>

#include "hspline/error.hpp"
#include "hspline/rng.hpp"

namespace hspline {

namespace {

bool finite(const Point2& p) { return std::isfinite(p.x1) && std::isfinite(p.x2); }

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream ss(line);
  while (std::getline(ss, field, ',')) {
    // tolerate CRLF input and stray blanks
    field.erase(std::remove_if(field.begin(), field.end(),
                               [](char ch) { return ch == '\r' || ch == ' ' || ch == '\t'; }),
                field.end());
    fields.push_back(field);
  }
  return fields;
}

double parse_double(const std::string& text, std::size_t line_no) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size())
    throw InvalidArgument("line " + std::to_string(line_no) + ": cannot parse number '" + text + "'");
  return value;
}

}  // namespace

SiteSet::SiteSet(std::vector<Point2> points, Duplicates duplicates) : points_(std::move(points)) {
  for (std::size_t i = 0; i < points_.size(); ++i) {
    if (!finite(points_[i]))
      throw InvalidArgument("site " + std::to_string(i) + " has a non-finite coordinate");
  }
  if (duplicates == Duplicates::kReject && has_duplicates())
    throw InvalidArgument("site set contains identical sites");
}

bool SiteSet::has_duplicates() const {
  std::vector<Point2> sorted = points_;
  std::sort(sorted.begin(), sorted.end(), [](const Point2& a, const Point2& b) {
    return a.x1 < b.x1 || (a.x1 == b.x1 && a.x2 < b.x2);
  });
  return std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end();
}

SiteSet SiteSet::permuted(std::span<const std::size_t> order) const {
  std::vector<Point2> out;
  out.reserve(order.size());
  for (std::size_t idx : order) {
    if (idx >= points_.size()) throw InvalidArgument("permutation index out of range");
    out.push_back(points_[idx]);
  }
  return SiteSet(std::move(out), Duplicates::kAllow);
}

SiteSet SiteSet::slice(std::size_t first, std::size_t count) const {
  if (first + count > points_.size()) throw InvalidArgument("slice out of range");
  return SiteSet(std::vector<Point2>(points_.begin() + static_cast<std::ptrdiff_t>(first),
                                     points_.begin() + static_cast<std::ptrdiff_t>(first + count)),
                 Duplicates::kAllow);
}

SiteSet uniform_random_sites(std::size_t n, std::uint64_t seed, const Box& box) {
  if (n == 0) throw InvalidArgument("uniform_random_sites: n must be positive");
  if (!(box.x1_hi > box.x1_lo) || !(box.x2_hi > box.x2_lo))
    throw InvalidArgument("uniform_random_sites: box must have positive area");
  Rng rng(seed);
  std::vector<Point2> points(n);
  for (auto& p : points) {
    p.x1 = rng.uniform(box.x1_lo, box.x1_hi);
    p.x2 = rng.uniform(box.x2_lo, box.x2_hi);
  }
  // 53-bit draws make a collision practically impossible; the constructor
  // still rejects one if it ever happens.
  return SiteSet(std::move(points));
}

SiteSet structured_grid(std::size_t m, const Box& box) {
  if (m < 2) throw InvalidArgument("structured_grid: need at least 2 points per axis");
  const double h1 = (box.x1_hi - box.x1_lo) / static_cast<double>(m - 1);
  const double h2 = (box.x2_hi - box.x2_lo) / static_cast<double>(m - 1);
  std::vector<Point2> points;
  points.reserve(m * m);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      points.push_back({box.x1_lo + h1 * static_cast<double>(i), box.x2_lo + h2 * static_cast<double>(j)});
    }
  }
  return SiteSet(std::move(points));
}

double franke(const Point2& p) {
  const double x = 9.0 * p.x1;
  const double y = 9.0 * p.x2;
  const auto sq = [](double v) { return v * v; };
  return 0.75 * std::exp(-0.25 * (sq(x - 2.0) + sq(y - 2.0))) +
         0.75 * std::exp(-sq(x + 1.0) / 49.0 - 0.1 * sq(y + 1.0)) +
         0.5 * std::exp(-0.25 * (sq(x - 7.0) + sq(y - 3.0))) -
         0.5 * std::exp(-0.2 * (sq(x - 4.0) + sq(y - 7.0)));
}

std::vector<double> franke(const SiteSet& sites) {
  std::vector<double> out;
  out.reserve(sites.size());
  for (const auto& p : sites) out.push_back(franke(p));
  return out;
}

ObservationSet synthesize_observations(const SiteSet& sites, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0) || !std::isfinite(sigma))
    throw InvalidArgument("synthesize_observations: sigma must be a finite non-negative number");
  ObservationSet obs{sites, franke(sites)};
  if (sigma > 0.0) {
    Rng rng(seed);
    for (auto& y : obs.y) y += sigma * rng.normal();
  }
  return obs;
}

bool is_collinear(const Point2& a, const Point2& b, const Point2& c, double tol) {
  const double area = (b.x1 - a.x1) * (c.x2 - a.x2) - (b.x2 - a.x2) * (c.x1 - a.x1);
  const double scale = std::max({std::abs(a.x1), std::abs(a.x2), std::abs(b.x1), std::abs(b.x2),
                                 std::abs(c.x1), std::abs(c.x2)});
  return std::abs(area) <= tol * std::max(1.0, scale * scale);
}

std::string format_double(double value) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", value);
  return buf;
}

void write_sites_csv(std::ostream& out, const SiteSet& sites) {
  out << "x1,x2\n";
  for (const auto& p : sites) out << format_double(p.x1) << ',' << format_double(p.x2) << '\n';
}

void write_observations_csv(std::ostream& out, const ObservationSet& obs) {
  if (obs.y.size() != obs.sites.size()) throw InvalidArgument("observation count mismatch");
  out << "x1,x2,y\n";
  for (std::size_t i = 0; i < obs.size(); ++i) {
    out << format_double(obs.sites[i].x1) << ',' << format_double(obs.sites[i].x2) << ','
        << format_double(obs.y[i]) << '\n';
  }
}

ObservationSet read_observations_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument("CSV input is empty");
  const auto header = split_csv_line(line);
  const bool with_y = header == std::vector<std::string>{"x1", "x2", "y"};
  if (!with_y && header != std::vector<std::string>{"x1", "x2"})
    throw InvalidArgument("CSV header must be 'x1,x2' or 'x1,x2,y'");

  std::vector<Point2> points;
  std::vector<double> y;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    const auto fields = split_csv_line(line);
    if (fields.size() != header.size())
      throw InvalidArgument("line " + std::to_string(line_no) + ": expected " +
                            std::to_string(header.size()) + " fields");
    points.push_back({parse_double(fields[0], line_no), parse_double(fields[1], line_no)});
    if (with_y) {
      y.push_back(parse_double(fields[2], line_no));
      if (!std::isfinite(y.back()))
        throw InvalidArgument("line " + std::to_string(line_no) + ": response is not finite");
    }
  }
  return {SiteSet(std::move(points)), std::move(y)};
}

}  // namespace hspline
