#include "hspline/tps.hpp"

#include <ostream>

#include "hspline/error.hpp"

namespace hspline {

double tps_kernel(double r) {
  if (!std::isfinite(r) || r < 0.0) throw InvalidArgument("tps_kernel: distance must be finite and >= 0");
  return r > 0.0 ? r * r * std::log(r) : 0.0;
}

DenseMatrix assemble_E(const SiteSet& sites, AssemblyDiagnostics* diagnostics) {
  const auto n = static_cast<Eigen::Index>(sites.size());
  DenseMatrix e(n, n);
  std::size_t coincident = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    e(i, i) = 0.0;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const auto& a = sites[static_cast<std::size_t>(i)];
      const auto& b = sites[static_cast<std::size_t>(j)];
      if (a == b) ++coincident;
      const double v = tps_kernel_unchecked(a, b);
      e(j, i) = v;
      e(i, j) = v;
    }
  }
  if (diagnostics) diagnostics->coincident_pairs = coincident;
  return e;
}

DenseMatrix assemble_kernel(const SiteSet& rows, const SiteSet& cols) {
  const auto nr = static_cast<Eigen::Index>(rows.size());
  const auto nc = static_cast<Eigen::Index>(cols.size());
  DenseMatrix k(nr, nc);
  for (Eigen::Index i = 0; i < nc; ++i) {
    for (Eigen::Index j = 0; j < nr; ++j) {
      k(j, i) = tps_kernel_unchecked(rows[static_cast<std::size_t>(j)], cols[static_cast<std::size_t>(i)]);
    }
  }
  return k;
}

PolyBasisMatrix assemble_P(const SiteSet& sites) {
  PolyBasisMatrix p(static_cast<Eigen::Index>(sites.size()), 3);
  for (std::size_t j = 0; j < sites.size(); ++j) {
    const auto row = static_cast<Eigen::Index>(j);
    p(row, 0) = 1.0;
    p(row, 1) = sites[j].x1;
    p(row, 2) = sites[j].x2;
  }
  return p;
}

Vector evaluate_spline(const SplineCoefficients& coeffs, const SiteSet& fit_sites, const SiteSet& query) {
  if (static_cast<std::size_t>(coeffs.c.size()) != fit_sites.size())
    throw InvalidArgument("evaluate_spline: coefficient count does not match fit sites");
  Vector g(static_cast<Eigen::Index>(query.size()));
  for (std::size_t q = 0; q < query.size(); ++q) {
    const auto& x = query[q];
    double sum = coeffs.d(0) + coeffs.d(1) * x.x1 + coeffs.d(2) * x.x2;
    for (std::size_t i = 0; i < fit_sites.size(); ++i) {
      sum += coeffs.c(static_cast<Eigen::Index>(i)) * tps_kernel_unchecked(x, fit_sites[i]);
    }
    g(static_cast<Eigen::Index>(q)) = sum;
  }
  return g;
}

void dump_matrix_csv(std::ostream& out, const DenseMatrix& m) {
  if (m.rows() > kMaxDumpDim || m.cols() > kMaxDumpDim)
    throw InvalidArgument("dump_matrix_csv: matrix exceeds the 2000 x 2000 dump limit");
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (c) out << ',';
      out << format_double(m(r, c));
    }
    out << '\n';
  }
}

}  // namespace hspline
