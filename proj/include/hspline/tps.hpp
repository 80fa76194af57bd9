#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <iosfwd>

#include "hspline/sites.hpp"

namespace hspline {

using DenseMatrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
/// n x 3 polynomial basis evaluated at the sites, columns (1, x1, x2).
using PolyBasisMatrix = Eigen::Matrix<double, Eigen::Dynamic, 3>;

struct SplineCoefficients {
  Vector c;                               // kernel weights, one per fit site
  Eigen::Vector3d d = Eigen::Vector3d::Zero();  // intercept, x1, x2
};

/// Thin plate kernel r^2 ln r, continuously extended by 0 at r = 0.
/// Throws InvalidArgument for negative or non-finite r.
double tps_kernel(double r);

/// Kernel value between two points without argument checks; the squared
/// distance form avoids a sqrt: r^2 ln r = 0.5 * r^2 ln(r^2).
inline double tps_kernel_unchecked(const Point2& a, const Point2& b) {
  const double dx = a.x1 - b.x1;
  const double dy = a.x2 - b.x2;
  const double r2 = dx * dx + dy * dy;
  return r2 > 0.0 ? 0.5 * r2 * std::log(r2) : 0.0;
}

struct AssemblyDiagnostics {
  /// Off-diagonal pairs (j < i) at distance zero.
  std::size_t coincident_pairs = 0;
};

/// Dense kernel matrix E(j, i) = tps_kernel(|x_i - x_j|); exactly symmetric,
/// zero diagonal.
DenseMatrix assemble_E(const SiteSet& sites, AssemblyDiagnostics* diagnostics = nullptr);

/// Kernel matrix between two site sets: K(j, i) = Phi(|rows_j - cols_i|).
DenseMatrix assemble_kernel(const SiteSet& rows, const SiteSet& cols);

PolyBasisMatrix assemble_P(const SiteSet& sites);

/// g(x) = sum_i c_i Phi(|x - x_i|) + d_1 + d_2 x1 + d_3 x2 at every query site.
Vector evaluate_spline(const SplineCoefficients& coeffs, const SiteSet& fit_sites, const SiteSet& query);

inline constexpr Eigen::Index kMaxDumpDim = 2000;

/// One matrix row per line, comma separated. Refuses matrices larger than
/// kMaxDumpDim in either dimension.
void dump_matrix_csv(std::ostream& out, const DenseMatrix& m);

}  // namespace hspline
