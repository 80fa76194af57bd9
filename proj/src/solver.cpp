#include "hspline/solver.hpp"

#include <chrono>
#include <cmath>
#include <ostream>

#include "hspline/error.hpp"

namespace hspline {

namespace {

class Stopwatch {
 public:
  Stopwatch() : start_(std::chrono::steady_clock::now()) {}
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  std::chrono::steady_clock::time_point start_;
};

Eigen::Index idx(std::size_t i) { return static_cast<Eigen::Index>(i); }

}  // namespace

std::string to_string(Method m) {
  switch (m) {
    case Method::kM1: return "m1";
    case Method::kM2: return "m2";
    case Method::kM3: return "m3";
  }
  return "?";
}

Method parse_method(const std::string& text) {
  if (text == "m1" || text == "M1") return Method::kM1;
  if (text == "m2" || text == "M2") return Method::kM2;
  if (text == "m3" || text == "M3") return Method::kM3;
  throw InvalidArgument("unknown method '" + text + "' (expected m1, m2 or m3)");
}

void AugmentedSystem::validate() const {
  if (sites.size() < 4) throw InvalidArgument("at least 4 sites are required, got " + std::to_string(sites.size()));
  if (static_cast<std::size_t>(y.size()) != sites.size())
    throw InvalidArgument("response vector length does not match the number of sites");
  if (!std::isfinite(lambda) || lambda < 0.0) throw InvalidArgument("lambda must be finite and >= 0");
  if (!y.allFinite()) throw InvalidArgument("responses must be finite");
}

DenseMatrix augmented_matrix(const AugmentedSystem& sys) {
  const auto n = idx(sys.sites.size());
  DenseMatrix a = DenseMatrix::Zero(n + 3, n + 3);
  a.topLeftCorner(n, n) = assemble_E(sys.sites);
  a.topLeftCorner(n, n).diagonal().array() += sys.lambda;
  const PolyBasisMatrix p = assemble_P(sys.sites);
  a.topRightCorner(n, 3) = p;
  a.bottomLeftCorner(3, n) = p.transpose();
  return a;
}

double augmented_residual(const AugmentedSystem& sys, const SplineCoefficients& coeffs) {
  const std::size_t n = sys.sites.size();
  if (static_cast<std::size_t>(coeffs.c.size()) != n) throw InvalidArgument("coefficient length mismatch");
  double sq = 0.0;
  Eigen::Vector3d ptc = Eigen::Vector3d::Zero();
  for (std::size_t j = 0; j < n; ++j) {
    const Point2& xj = sys.sites[j];
    double row = sys.lambda * coeffs.c(idx(j)) + coeffs.d(0) + coeffs.d(1) * xj.x1 + coeffs.d(2) * xj.x2;
    for (std::size_t i = 0; i < n; ++i) row += tps_kernel_unchecked(xj, sys.sites[i]) * coeffs.c(idx(i));
    const double diff = row - sys.y(idx(j));
    sq += diff * diff;
    ptc += coeffs.c(idx(j)) * Eigen::Vector3d(1.0, xj.x1, xj.x2);
  }
  sq += ptc.squaredNorm();
  const double ynorm = sys.y.norm();
  return ynorm > 0.0 ? std::sqrt(sq) / ynorm : std::sqrt(sq);
}

void to_json(nlohmann::json& j, const CompressionStats& s) {
  nlohmann::json hist = nlohmann::json::object();
  for (const auto& [rank, count] : s.rank_histogram) hist[std::to_string(rank)] = count;
  j = nlohmann::json{{"stored_entries", s.stored_entries},
                     {"dense_entries", s.dense_entries},
                     {"ratio", s.ratio},
                     {"max_rank", s.max_rank},
                     {"far_blocks", s.far_blocks},
                     {"near_blocks", s.near_blocks},
                     {"truncated_blocks", s.truncated_blocks},
                     {"block_rank_histogram", hist}};
}

void to_json(nlohmann::json& j, const SolveReport& r) {
  j = nlohmann::json{{"method", to_string(r.method)},
                     {"iterations", r.iterations},
                     {"final_residual", r.final_residual},
                     {"assemble_s", r.timings.assemble_s},
                     {"compress_s", r.timings.compress_s},
                     {"solve_s", r.timings.solve_s},
                     {"total_s", r.timings.total_s},
                     {"warnings", r.warnings}};
  j["compression"] = r.compression ? nlohmann::json(*r.compression) : nlohmann::json(nullptr);
}

void write_residual_history_csv(std::ostream& out, const std::vector<double>& history) {
  out << "iter,residual\n";
  for (std::size_t k = 0; k < history.size(); ++k) out << k << ',' << format_double(history[k]) << '\n';
}

// ---------------------------------------------------------------------------
// M1

SolveResult solve_direct(const AugmentedSystem& sys) {
  const Stopwatch total;
  sys.validate();
  (void)choose_tail_triple(sys.sites);  // rejects all-collinear site sets

  SolveResult result;
  result.report.method = Method::kM1;
  if (sys.lambda == 0.0) result.report.warnings.push_back("lambda = 0: pure interpolation, system may be ill-conditioned");

  const auto n = idx(sys.sites.size());
  Stopwatch phase;
  const DenseMatrix a = augmented_matrix(sys);
  Vector b = Vector::Zero(n + 3);
  b.head(n) = sys.y;
  result.report.timings.assemble_s = phase.seconds();

  phase = Stopwatch();
  const Eigen::PartialPivLU<DenseMatrix> lu(a);
  const Vector x = lu.solve(b);
  result.report.timings.solve_s = phase.seconds();

  if (!x.allFinite()) {
    throw NumericalError("direct solve produced non-finite coefficients (reciprocal condition estimate " +
                         std::to_string(lu.rcond()) + ")");
  }
  const double bnorm = b.norm();
  result.report.final_residual = (a * x - b).norm() / (bnorm > 0.0 ? bnorm : 1.0);
  if (!(result.report.final_residual <= 1e-6)) {
    throw NumericalError("direct solve residual " + std::to_string(result.report.final_residual) +
                         " too large (reciprocal condition estimate " + std::to_string(lu.rcond()) + ")");
  }
  result.coeffs.c = x.head(n);
  result.coeffs.d = x.tail<3>();
  result.report.timings.total_s = total.seconds();
  return result;
}

// ---------------------------------------------------------------------------
// Schur complement

std::vector<std::size_t> choose_tail_triple(const SiteSet& sites, double tol) {
  const std::size_t n = sites.size();
  if (n < 4) throw InvalidArgument("choose_tail_triple: at least 4 sites are required");
  std::vector<std::size_t> order(n);
  for (std::size_t k = 0; k < n; ++k) order[k] = k;

  const std::size_t last = n - 1;
  if (!is_collinear(sites[n - 3], sites[n - 2], sites[last], tol)) return order;

  for (std::size_t i = n - 2; i >= 1; --i) {
    for (std::size_t j = i; j-- > 0;) {
      if (!is_collinear(sites[j], sites[i], sites[last], tol)) {
        std::swap(order[i], order[n - 2]);
        std::swap(order[j], order[n - 3]);
        return order;
      }
    }
  }
  throw CollinearSitesError("all sites are collinear; the smoothing system has no unique solution");
}

SchurOperator SchurOperator::build(const AugmentedSystem& sys, const E11Mode& mode, Timings* timings) {
  sys.validate();
  SchurOperator op;
  op.order_ = choose_tail_triple(sys.sites);
  op.lambda_ = sys.lambda;

  const SiteSet split = sys.sites.permuted(op.order_);
  const std::size_t n = split.size();
  const std::size_t m = n - 3;
  const SiteSet head = split.slice(0, m);
  const SiteSet tail = split.slice(m, 3);

  Stopwatch phase;
  const DenseMatrix e12 = assemble_kernel(head, tail);
  const DenseMatrix e22 = assemble_kernel(tail, tail);
  const PolyBasisMatrix p1 = assemble_P(head);
  const PolyBasisMatrix p2 = assemble_P(tail);

  op.w_.resize(idx(m), 6);
  op.w_.leftCols<3>() = e12;
  op.w_.rightCols<3>() = p1;

  Eigen::Matrix<double, 6, 6> k = Eigen::Matrix<double, 6, 6>::Zero();
  k.topLeftCorner<3, 3>() = e22;
  k.topLeftCorner<3, 3>().diagonal().array() += sys.lambda;
  k.topRightCorner<3, 3>() = p2;
  k.bottomLeftCorner<3, 3>() = p2.transpose();
  const Eigen::FullPivLU<Eigen::Matrix<double, 6, 6>> k_lu(k);
  if (!k_lu.isInvertible()) throw NumericalError("tail block of the Schur split is singular");
  op.k_inv_ = k_lu.inverse();

  if (!mode.use_hmatrix) {
    op.e11_ = assemble_E(head);
    if (timings) timings->assemble_s += phase.seconds();
  } else {
    if (timings) timings->assemble_s += phase.seconds();
    phase = Stopwatch();
    op.h11_ = HMatrix::assemble(head, mode.hmatrix);
    if (timings) timings->compress_s += phase.seconds();
  }
  return op;
}

Vector SchurOperator::apply_e11(const Vector& v) const {
  if (static_cast<std::size_t>(v.size()) != size()) throw InvalidArgument("Schur operator: vector length mismatch");
  if (e11_) {
    Vector out(v.size());
    out.noalias() = e11_->selfadjointView<Eigen::Lower>() * v;
    return out;
  }
  return h11_->apply(v);
}

Vector SchurOperator::apply(const Vector& c1) const {
  Vector out = apply_e11(c1);
  out += lambda_ * c1;
  const Eigen::Matrix<double, 6, 1> t = k_inv_ * (w_.transpose() * c1);
  out.noalias() -= w_ * t;
  return out;
}

Vector SchurOperator::reduced_rhs(const Vector& y_split) const {
  const Eigen::Index m = w_.rows();
  if (y_split.size() != m + 3) throw InvalidArgument("reduced_rhs: response length mismatch");
  Eigen::Matrix<double, 6, 1> tail_rhs = Eigen::Matrix<double, 6, 1>::Zero();
  tail_rhs.head<3>() = y_split.tail<3>();
  return y_split.head(m) - w_ * (k_inv_ * tail_rhs);
}

std::pair<Eigen::Vector3d, Eigen::Vector3d> SchurOperator::recover_tail(const Vector& c1, const Vector& y_split) const {
  if (c1.size() != w_.rows() || y_split.size() != w_.rows() + 3)
    throw InvalidArgument("recover_tail: vector length mismatch");
  Eigen::Matrix<double, 6, 1> rhs = Eigen::Matrix<double, 6, 1>::Zero();
  rhs.head<3>() = y_split.tail<3>();
  rhs -= w_.transpose() * c1;
  const Eigen::Matrix<double, 6, 1> sol = k_inv_ * rhs;
  return {sol.head<3>(), sol.tail<3>()};
}

// ---------------------------------------------------------------------------
// CG

CgResult cg_solve(const LinearOperator& apply, const Vector& rhs, const CgConfig& cfg) {
  if (!(cfg.rel_tol > 0.0)) throw InvalidArgument("cg_solve: rel_tol must be positive");
  const std::size_t max_iter = cfg.max_iter ? cfg.max_iter : 10 * static_cast<std::size_t>(rhs.size());

  CgResult res;
  res.x = Vector::Zero(rhs.size());
  const double rhs_norm = rhs.norm();
  if (rhs_norm == 0.0) {
    if (cfg.record_residuals) res.residual_history.push_back(0.0);
    return res;
  }
  Vector r = rhs;
  Vector p = r;
  double rr = r.squaredNorm();
  const double stop = cfg.rel_tol * rhs_norm;
  if (cfg.record_residuals) res.residual_history.push_back(1.0);

  while (std::sqrt(rr) > stop) {
    if (res.iterations >= max_iter) {
      throw NonConvergenceError("conjugate gradient did not reach relative residual " + format_double(cfg.rel_tol) +
                                    " within " + std::to_string(max_iter) + " iterations",
                                std::move(res.residual_history));
    }
    const Vector ap = apply(p);
    const double pap = p.dot(ap);
    if (!(pap > 0.0) || !std::isfinite(pap)) {
      throw NonConvergenceError("conjugate gradient breakdown: operator is not positive definite along a search direction",
                                std::move(res.residual_history));
    }
    const double alpha = rr / pap;
    res.x.noalias() += alpha * p;
    r.noalias() -= alpha * ap;
    const double rr_next = r.squaredNorm();
    p = r + (rr_next / rr) * p;
    rr = rr_next;
    ++res.iterations;
    if (cfg.record_residuals) res.residual_history.push_back(std::sqrt(rr) / rhs_norm);
  }
  res.relative_residual = std::sqrt(rr) / rhs_norm;
  return res;
}

// ---------------------------------------------------------------------------
// M2 / M3

SolveResult solve_schur_cg(const AugmentedSystem& sys, const E11Mode& mode, const CgConfig& cfg) {
  const Stopwatch total;
  SolveResult result;
  result.report.method = mode.use_hmatrix ? Method::kM3 : Method::kM2;
  if (sys.lambda == 0.0) result.report.warnings.push_back("lambda = 0: pure interpolation, system may be ill-conditioned");

  const SchurOperator op = SchurOperator::build(sys, mode, &result.report.timings);
  if (op.hmatrix()) {
    result.report.compression = op.hmatrix()->stats();
    if (result.report.compression->truncated_blocks > 0) {
      result.report.warnings.push_back(std::to_string(result.report.compression->truncated_blocks) +
                                       " far-field blocks hit the rank cap before reaching eps");
    }
  }

  const Stopwatch phase;
  const std::size_t n = sys.sites.size();
  Vector y_split(idx(n));
  for (std::size_t k = 0; k < n; ++k) y_split(idx(k)) = sys.y(idx(op.order()[k]));

  const Vector rhs = op.reduced_rhs(y_split);
  CgResult cg = cg_solve([&op](const Vector& v) { return op.apply(v); }, rhs, cfg);
  const auto [c2, d] = op.recover_tail(cg.x, y_split);

  result.coeffs.c.resize(idx(n));
  for (std::size_t k = 0; k + 3 < n; ++k) result.coeffs.c(idx(op.order()[k])) = cg.x(idx(k));
  for (std::size_t t = 0; t < 3; ++t) result.coeffs.c(idx(op.order()[n - 3 + t])) = c2(idx(t));
  result.coeffs.d = d;
  result.report.timings.solve_s = phase.seconds();

  if (!result.coeffs.c.allFinite() || !result.coeffs.d.allFinite())
    throw NumericalError("Schur/CG solve produced non-finite coefficients");

  result.report.iterations = cg.iterations;
  result.report.final_residual = cg.relative_residual;
  result.report.residual_history = std::move(cg.residual_history);
  result.report.timings.total_s = total.seconds();
  return result;
}

}  // namespace hspline
