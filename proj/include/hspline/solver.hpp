#pragma once

#include <array>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hspline/hmatrix.hpp"
#include "hspline/sites.hpp"
#include "hspline/tps.hpp"
#include "json.hpp"

namespace hspline {

/// M1: dense direct solve of the augmented system.
/// M2: Schur complement + CG, dense E11.
/// M3: Schur complement + CG, H-matrix E11.
enum class Method { kM1, kM2, kM3 };

std::string to_string(Method m);
/// Accepts "m1"/"M1" etc. Throws InvalidArgument otherwise.
Method parse_method(const std::string& text);

/// The smoothing system
///   [E + lambda I  P] [c]   [y]
///   [P^T           0] [d] = [0]
/// described by its sites, responses and lambda. Matrices are built on demand
/// by each solver so that M3 never forms the dense kernel matrix.
struct AugmentedSystem {
  SiteSet sites;
  Vector y;
  double lambda = 1.0;

  /// Throws InvalidArgument on shape mismatch, n < 4, negative or
  /// non-finite lambda, or non-finite responses.
  void validate() const;
};

/// Explicit (n+3) x (n+3) matrix of the system.
DenseMatrix augmented_matrix(const AugmentedSystem& sys);

/// |A (c; d) - (y; 0)|_2 / |y|_2 (absolute when y = 0). Kernel entries are
/// evaluated row by row, so memory stays O(n).
double augmented_residual(const AugmentedSystem& sys, const SplineCoefficients& coeffs);

struct Timings {
  double assemble_s = 0.0;
  double compress_s = 0.0;
  double solve_s = 0.0;
  double total_s = 0.0;
};

struct SolveReport {
  Method method = Method::kM1;
  std::size_t iterations = 0;
  double final_residual = 0.0;
  Timings timings;
  std::optional<CompressionStats> compression;
  std::vector<double> residual_history;
  std::vector<std::string> warnings;
};

void to_json(nlohmann::json& j, const SolveReport& r);
void to_json(nlohmann::json& j, const CompressionStats& s);

/// `iter,residual` rows, relative residual norms.
void write_residual_history_csv(std::ostream& out, const std::vector<double>& history);

struct SolveResult {
  SplineCoefficients coeffs;
  SolveReport report;
};

SolveResult solve_direct(const AugmentedSystem& sys);

/// Site order whose last three entries form a non-collinear triple. Tries the
/// current tail first, then keeps the last site and scans earlier pairs from
/// the back. Throws CollinearSitesError when every triple is collinear.
std::vector<std::size_t> choose_tail_triple(const SiteSet& sites, double tol = kDefaultCollinearTol);

struct CgConfig {
  double rel_tol = 1e-8;
  /// 0 means 10 * n.
  std::size_t max_iter = 0;
  bool record_residuals = true;
};

using LinearOperator = std::function<Vector(const Vector&)>;

struct CgResult {
  Vector x;
  std::size_t iterations = 0;
  double relative_residual = 0.0;
  /// |r_k| / |rhs| for k = 0..iterations when recorded.
  std::vector<double> residual_history;
};

/// Plain conjugate gradient from x0 = 0, stopping at |r_k| <= rel_tol |rhs|.
/// Throws NonConvergenceError when max_iter is exhausted.
CgResult cg_solve(const LinearOperator& apply, const Vector& rhs, const CgConfig& cfg);

/// How E11 is applied inside the Schur operator.
struct E11Mode {
  bool use_hmatrix = false;
  HMatrixParams hmatrix;

  static E11Mode dense() { return {}; }
  static E11Mode compressed(const HMatrixParams& p) { return {true, p}; }
};

/// The reduced operator
///   M = E11 + lambda I - W K^{-1} W^T,   W = [E12 P1],
///   K = [E22 + lambda I  P2; P2^T  0],
/// acting on kernel weights of the first n - 3 sites (in split order).
class SchurOperator {
 public:
  static SchurOperator build(const AugmentedSystem& sys, const E11Mode& mode, Timings* timings = nullptr);

  std::size_t size() const noexcept { return static_cast<std::size_t>(w_.rows()); }
  /// order()[k] is the original index of the k-th site in split order.
  const std::vector<std::size_t>& order() const noexcept { return order_; }
  double lambda() const noexcept { return lambda_; }
  const HMatrix* hmatrix() const noexcept { return h11_ ? &*h11_ : nullptr; }

  Vector apply(const Vector& c1) const;
  Vector apply_e11(const Vector& v) const;

  /// y1 - W K^{-1} (y2; 0), with y in split order.
  Vector reduced_rhs(const Vector& y_split) const;

  /// Solves K (c2; d) = (y2; 0) - W^T c1 for the tail weights and the
  /// polynomial part.
  std::pair<Eigen::Vector3d, Eigen::Vector3d> recover_tail(const Vector& c1, const Vector& y_split) const;

 private:
  std::vector<std::size_t> order_;
  double lambda_ = 0.0;
  std::optional<DenseMatrix> e11_;
  std::optional<HMatrix> h11_;
  Eigen::Matrix<double, Eigen::Dynamic, 6> w_;
  Eigen::Matrix<double, 6, 6> k_inv_;
};

SolveResult solve_schur_cg(const AugmentedSystem& sys, const E11Mode& mode, const CgConfig& cfg);

}  // namespace hspline
