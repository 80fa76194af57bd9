#pragma once

#include <iosfwd>
#include <span>

#include "hspline/solver.hpp"

namespace hspline {

struct FitRequest {
  ObservationSet observations;
  double lambda = 1.0;
  Method method = Method::kM1;
  HMatrixParams hmatrix;  // M3 only
  CgConfig cg;            // M2 and M3
};

/// A fitted smoothing thin plate spline.
struct StpsModel {
  SplineCoefficients coeffs;
  SiteSet fit_sites;
  double lambda = 1.0;
  SolveReport report;
};

StpsModel fit(const FitRequest& req);

Vector interpolate(const StpsModel& model, const SiteSet& query);

/// |f_ref - f|_2, not normalized.
double comp_err(std::span<const double> f_ref, std::span<const double> f);
/// sqrt(mean((f_real - f)^2)).
double rmse(std::span<const double> f_real, std::span<const double> f);

inline std::span<const double> as_span(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

/// Text format:
///   hspline-model n=<n> lambda=<lambda> method=<m1|m2|m3>
///   c_1 .. c_n            (one per line)
///   d_1 d_2 d_3           (one per line)
///   x1,x2                 (CSV of the fit sites)
/// All numbers at 17 significant digits, so save/load is lossless.
void save_model(std::ostream& out, const StpsModel& model);
StpsModel load_model(std::istream& in);

}  // namespace hspline
