#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "hspline/error.hpp"
#include "hspline/solver.hpp"
#include "test_support.hpp"

using namespace hspline;

namespace {

AugmentedSystem random_system(std::size_t n, double lambda, std::mt19937_64& gen) {
  AugmentedSystem sys{test::random_sites(n, gen), Vector(n), lambda};
  for (std::size_t i = 0; i < n; ++i) sys.y(static_cast<Eigen::Index>(i)) = franke(sys.sites[i]);
  sys.y += 0.05 * test::random_vector(static_cast<Eigen::Index>(n), gen);
  return sys;
}

Vector stacked(const SplineCoefficients& k) {
  Vector v(k.c.size() + 3);
  v << k.c, k.d;
  return v;
}

// Explicit Schur complement in the operator's split order, built from the
// dense oracle kernel matrix.
Eigen::MatrixXd explicit_schur(const AugmentedSystem& sys, const std::vector<std::size_t>& order) {
  std::vector<Point2> pts;
  for (std::size_t k : order) pts.push_back(sys.sites[k]);
  const SiteSet s(pts);
  const Eigen::Index n = static_cast<Eigen::Index>(s.size());
  const Eigen::Index m = n - 3;
  const Eigen::MatrixXd e = test::dense_kernel_oracle(s, s);
  Eigen::MatrixXd p(n, 3);
  for (Eigen::Index i = 0; i < n; ++i) p.row(i) << 1.0, s[static_cast<std::size_t>(i)].x1, s[static_cast<std::size_t>(i)].x2;

  Eigen::MatrixXd k = Eigen::MatrixXd::Zero(6, 6);
  k.topLeftCorner(3, 3) = e.bottomRightCorner(3, 3) + sys.lambda * Eigen::MatrixXd::Identity(3, 3);
  k.topRightCorner(3, 3) = p.bottomRows(3);
  k.bottomLeftCorner(3, 3) = p.bottomRows(3).transpose();
  Eigen::MatrixXd w(m, 6);
  w << e.topRightCorner(m, 3), p.topRows(m);
  return e.topLeftCorner(m, m) + sys.lambda * Eigen::MatrixXd::Identity(m, m) - w * k.inverse() * w.transpose();
}

}  // namespace

TEST_CASE("method names") {
  CHECK(to_string(Method::kM1) == "m1");
  CHECK(to_string(Method::kM3) == "m3");
  CHECK(parse_method("M2") == Method::kM2);
  CHECK(parse_method("m3") == Method::kM3);
  CHECK_THROWS_AS(parse_method("m4"), InvalidArgument);
}

TEST_CASE("system validation") {
  std::mt19937_64 gen(1);
  AugmentedSystem sys = random_system(10, 1.0, gen);
  CHECK_NOTHROW(sys.validate());
  AugmentedSystem bad = sys;
  bad.lambda = -1;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = sys;
  bad.lambda = std::nan("");
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = sys;
  bad.y(3) = INFINITY;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  bad = sys;
  bad.y = Vector::Zero(9);
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
  const AugmentedSystem tiny{SiteSet({{0, 0}, {1, 0}, {0, 1}}), Vector::Ones(3), 1.0};
  CHECK_THROWS_AS(tiny.validate(), InvalidArgument);
  CHECK_THROWS_AS(solve_direct(tiny), InvalidArgument);
}

TEST_CASE("augmented residual matches the explicit matrix") {
  std::mt19937_64 gen(2);
  const AugmentedSystem sys = random_system(60, 0.7, gen);
  const SplineCoefficients k{test::random_vector(60, gen), {0.1, 0.2, 0.3}};
  const DenseMatrix a = augmented_matrix(sys);
  CHECK(a.rows() == 63);
  CHECK(a == a.transpose());
  Vector rhs = Vector::Zero(63);
  rhs.head(60) = sys.y;
  const double ref = (a * stacked(k) - rhs).norm() / sys.y.norm();
  CHECK(augmented_residual(sys, k) == doctest::Approx(ref).epsilon(1e-12));
}

TEST_CASE("solve_direct") {
  SUBCASE("unit square corners") {
    const AugmentedSystem sys{SiteSet({{0, 0}, {1, 0}, {0, 1}, {1, 1}}), Vector::Ones(4), 1.0};
    const SolveResult r = solve_direct(sys);
    const PolyBasisMatrix p = assemble_P(sys.sites);
    CHECK((p.transpose() * r.coeffs.c).norm() <= 1e-10);
    CHECK(r.report.final_residual <= 1e-10);
    CHECK(r.report.iterations == 0);
    CHECK(r.report.method == Method::kM1);
  }
  SUBCASE("constant data lies in the null space") {
    std::mt19937_64 gen(3);
    for (double lambda : {0.0, 1.0, 50.0}) {
      AugmentedSystem sys{test::random_sites(40, gen), Vector::Constant(40, 5.0), lambda};
      const SolveResult r = solve_direct(sys);
      CHECK(r.coeffs.c.cwiseAbs().maxCoeff() <= 1e-9);
      CHECK((r.coeffs.d - Eigen::Vector3d(5, 0, 0)).norm() <= 1e-9);
    }
  }
  SUBCASE("both block equations hold") {
    std::mt19937_64 gen(4);
    const AugmentedSystem sys = random_system(400, 1.0, gen);
    const SolveResult r = solve_direct(sys);
    const Eigen::MatrixXd e = test::dense_kernel_oracle(sys.sites, sys.sites);
    const Eigen::MatrixXd p = assemble_P(sys.sites);
    const Vector top = e * r.coeffs.c + sys.lambda * r.coeffs.c + p * r.coeffs.d - sys.y;
    CHECK(top.norm() <= 1e-9 * sys.y.norm());
    CHECK((p.transpose() * r.coeffs.c).norm() <= 1e-9 * r.coeffs.c.norm());
    CHECK(r.report.final_residual <= 1e-10);
  }
  SUBCASE("lambda zero interpolates with a warning") {
    std::mt19937_64 gen(5);
    const AugmentedSystem sys = random_system(50, 0.0, gen);
    const SolveResult r = solve_direct(sys);
    CHECK_FALSE(r.report.warnings.empty());
    CHECK((evaluate_spline(r.coeffs, sys.sites, sys.sites) - sys.y).cwiseAbs().maxCoeff() <= 1e-8);
  }
  SUBCASE("collinear sites") {
    std::vector<Point2> line;
    for (int i = 0; i < 8; ++i) line.push_back({0.1 * i, 0.1 * i});
    const AugmentedSystem sys{SiteSet(line), Vector::Ones(8), 1.0};
    CHECK_THROWS_AS(solve_direct(sys), CollinearSitesError);
    CHECK_THROWS_AS(solve_schur_cg(sys, E11Mode::dense(), {}), CollinearSitesError);
  }
  SUBCASE("deterministic") {
    std::mt19937_64 gen(6);
    const AugmentedSystem sys = random_system(120, 1.0, gen);
    const SolveResult a = solve_direct(sys);
    const SolveResult b = solve_direct(sys);
    CHECK(a.coeffs.c == b.coeffs.c);
    CHECK(a.coeffs.d == b.coeffs.d);
  }
}

TEST_CASE("choose_tail_triple") {
  SUBCASE("identity when the tail is fine") {
    const SiteSet s({{0.5, 0.5}, {0, 0}, {1, 0}, {0, 1}});
    const auto order = choose_tail_triple(s);
    CHECK(order == std::vector<std::size_t>{0, 1, 2, 3});
  }
  SUBCASE("collinear tail is replaced") {
    // Last four sites on the x axis, the first two off it.
    const SiteSet s({{0.3, 0.9}, {0.7, 0.4}, {0, 0}, {0.25, 0}, {0.5, 0}, {0.75, 0}});
    REQUIRE(is_collinear(s[3], s[4], s[5]));
    const auto order = choose_tail_triple(s);
    CHECK(order != std::vector<std::size_t>{0, 1, 2, 3, 4, 5});
    std::vector<std::size_t> sorted = order;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<std::size_t>{0, 1, 2, 3, 4, 5});
    CHECK(order.back() == 5);
    CHECK_FALSE(is_collinear(s[order[3]], s[order[4]], s[order[5]]));
  }
  SUBCASE("all on a line") {
    std::vector<Point2> pts;
    for (int i = 0; i < 6; ++i) pts.push_back({0.2 * i, 0.2 * i});
    CHECK_THROWS_AS(choose_tail_triple(SiteSet(pts)), CollinearSitesError);
  }
}

TEST_CASE("cg_solve") {
  SUBCASE("identity") {
    const Vector b = Vector::LinSpaced(7, 1, 7);
    const CgResult r = cg_solve([](const Vector& v) { return v; }, b, {});
    CHECK(r.iterations == 1);
    CHECK((r.x - b).norm() <= 1e-14 * b.norm());
  }
  SUBCASE("diagonal") {
    const Vector d = Vector::LinSpaced(10, 1, 10);
    CgConfig cfg;
    cfg.rel_tol = 1e-10;
    const CgResult r = cg_solve([&](const Vector& v) { return Vector(d.cwiseProduct(v)); }, Vector::Ones(10), cfg);
    const Vector ref = d.cwiseInverse();
    CHECK((r.x - ref).norm() <= 1e-9 * ref.norm());
    CHECK(r.iterations <= 10);
    CHECK(r.relative_residual <= cfg.rel_tol);
    CHECK(r.residual_history.size() == r.iterations + 1);
    CHECK(r.residual_history.front() == 1.0);
  }
  SUBCASE("random SPD against a direct solve") {
    std::mt19937_64 gen(7);
    Eigen::MatrixXd a(50, 50);
    for (Eigen::Index j = 0; j < 50; ++j) a.col(j) = test::random_vector(50, gen);
    const Eigen::MatrixXd spd = a.transpose() * a + Eigen::MatrixXd::Identity(50, 50);
    const Vector b = test::random_vector(50, gen);
    CgConfig cfg;
    cfg.rel_tol = 1e-12;
    const CgResult r = cg_solve([&](const Vector& v) { return Vector(spd * v); }, b, cfg);
    const Vector ref = spd.ldlt().solve(b);
    CHECK((r.x - ref).norm() <= 1e-6);
  }
  SUBCASE("zero rhs") {
    const CgResult r = cg_solve([](const Vector& v) { return v; }, Vector::Zero(5), {});
    CHECK(r.iterations == 0);
    CHECK(r.x.isZero(0.0));
  }
  SUBCASE("iteration cap") {
    const Vector d = Vector::LinSpaced(100, 1, 1e4);
    CgConfig cfg;
    cfg.max_iter = 3;
    try {
      cg_solve([&](const Vector& v) { return Vector(d.cwiseProduct(v)); }, Vector::Ones(100), cfg);
      FAIL("expected NonConvergenceError");
    } catch (const NonConvergenceError& e) {
      CHECK(e.residual_history().size() == 4);
    }
  }
  SUBCASE("indefinite operator breaks down") {
    Vector d = Vector::Ones(6);
    d(0) = -1;
    d(1) = -1;
    CHECK_THROWS_AS(cg_solve([&](const Vector& v) { return Vector(d.cwiseProduct(v)); }, Vector::Ones(6), {}),
                    NonConvergenceError);
  }
  SUBCASE("bad tolerance") {
    CgConfig cfg;
    cfg.rel_tol = 0;
    CHECK_THROWS_AS(cg_solve([](const Vector& v) { return v; }, Vector::Ones(3), cfg), InvalidArgument);
  }
}

TEST_CASE("schur operator") {
  std::mt19937_64 gen(8);

  SUBCASE("matches the explicit complement at n = 10") {
    const AugmentedSystem sys = random_system(10, 1.3, gen);
    const SchurOperator op = SchurOperator::build(sys, E11Mode::dense());
    REQUIRE(op.size() == 7);
    const Eigen::MatrixXd m = explicit_schur(sys, op.order());
    for (int k = 0; k < 10; ++k) {
      const Vector v = test::random_vector(7, gen);
      const Vector ref = m * v;
      CHECK((op.apply(v) - ref).norm() <= 1e-12 * std::max(1.0, ref.norm()));
    }
  }
  SUBCASE("explicit complement with a reordered tail") {
    std::vector<Point2> pts;
    for (int i = 0; i < 6; ++i) pts.push_back({0.13 * i + 0.05, 0.7 - 0.09 * i * i / 5.0});
    for (int i = 0; i < 4; ++i) pts.push_back({0.2 * i, 0.2});
    const AugmentedSystem sys{SiteSet(pts), Vector::LinSpaced(10, 0, 1), 0.5};
    const SchurOperator op = SchurOperator::build(sys, E11Mode::dense());
    CHECK(op.order() != choose_tail_triple(SiteSet({{0, 0}, {1, 0}, {0, 1}, {1, 1}})));
    const Eigen::MatrixXd m = explicit_schur(sys, op.order());
    for (Eigen::Index j = 0; j < 7; ++j) {
      const Vector e = Vector::Unit(7, j);
      CHECK((op.apply(e) - m.col(j)).norm() <= 1e-12 * std::max(1.0, m.col(j).norm()));
    }
  }
  SUBCASE("compressed mode below the leaf size equals dense mode") {
    const AugmentedSystem sys = random_system(30, 1.0, gen);
    const SchurOperator dense = SchurOperator::build(sys, E11Mode::dense());
    const SchurOperator comp = SchurOperator::build(sys, E11Mode::compressed({}));
    REQUIRE(comp.hmatrix() != nullptr);
    CHECK(dense.hmatrix() == nullptr);
    for (int k = 0; k < 5; ++k) {
      const Vector v = test::random_vector(27, gen);
      const Vector a = dense.apply(v);
      CHECK((comp.apply(v) - a).norm() <= 1e-12 * a.norm());
    }
  }
  SUBCASE("positive definite and symmetric") {
    for (std::size_t n : {50u, 400u}) {
      const AugmentedSystem sys = random_system(n, 1.0, gen);
      const SchurOperator op = SchurOperator::build(sys, E11Mode::dense());
      for (int k = 0; k < 100; ++k) {
        const Vector v = test::random_vector(static_cast<Eigen::Index>(op.size()), gen);
        const Vector w = test::random_vector(static_cast<Eigen::Index>(op.size()), gen);
        CHECK(v.dot(op.apply(v)) > 0.0);
        const Vector mv = op.apply(v);
        const Vector mw = op.apply(w);
        CHECK(std::abs(v.dot(mw) - w.dot(mv)) <= 1e-10 * v.norm() * w.norm());
      }
    }
  }
  SUBCASE("compressed mode stays nearly positive") {
    const AugmentedSystem sys = random_system(1500, 1.0, gen);
    const SchurOperator op = SchurOperator::build(sys, E11Mode::compressed({}));
    const double eps = 1e-4;
    for (int k = 0; k < 20; ++k) {
      const Vector v = test::random_vector(static_cast<Eigen::Index>(op.size()), gen);
      CHECK(v.dot(op.apply(v)) > -100 * eps * v.squaredNorm());
    }
  }
  SUBCASE("length checks") {
    const AugmentedSystem sys = random_system(12, 1.0, gen);
    const SchurOperator op = SchurOperator::build(sys, E11Mode::dense());
    CHECK_THROWS_AS(op.apply(Vector::Zero(12)), InvalidArgument);
    CHECK_THROWS_AS(op.reduced_rhs(Vector::Zero(11)), InvalidArgument);
    CHECK_THROWS_AS(op.recover_tail(Vector::Zero(8), Vector::Zero(12)), InvalidArgument);
  }
}

TEST_CASE("solve_schur_cg") {
  std::mt19937_64 gen(9);
  CgConfig cfg;

  SUBCASE("M2 agrees with M1") {
    for (std::size_t n : {100u, 400u, 1600u}) {
      const AugmentedSystem sys = random_system(n, 1.0, gen);
      const SolveResult m1 = solve_direct(sys);
      const SolveResult m2 = solve_schur_cg(sys, E11Mode::dense(), cfg);
      CHECK(m2.report.method == Method::kM2);
      CHECK(m2.report.iterations > 0);
      CHECK(m2.report.final_residual <= 10 * cfg.rel_tol);
      CHECK(augmented_residual(sys, m2.coeffs) <= 10 * cfg.rel_tol);
      CHECK((stacked(m2.coeffs) - stacked(m1.coeffs)).norm() <= 1e-5);
      const PolyBasisMatrix p = assemble_P(sys.sites);
      CHECK((p.transpose() * m2.coeffs.c).cwiseAbs().maxCoeff() <= 10 * cfg.rel_tol * m2.coeffs.c.norm());
    }
  }
  SUBCASE("M3 agrees with M1 on evaluations") {
    const AugmentedSystem sys = random_system(1600, 1.0, gen);
    const SolveResult m1 = solve_direct(sys);
    const SolveResult m3 = solve_schur_cg(sys, E11Mode::compressed({}), cfg);
    CHECK(m3.report.method == Method::kM3);
    REQUIRE(m3.report.compression.has_value());
    CHECK(m3.report.compression->ratio < 1.0);
    const Vector f1 = evaluate_spline(m1.coeffs, sys.sites, sys.sites);
    const Vector f3 = evaluate_spline(m3.coeffs, sys.sites, sys.sites);
    CHECK((f1 - f3).norm() <= 0.1);
    const PolyBasisMatrix p = assemble_P(sys.sites);
    CHECK((p.transpose() * m3.coeffs.c).cwiseAbs().maxCoeff() <= 10 * cfg.rel_tol * m3.coeffs.c.norm());
  }
  SUBCASE("linear data is reproduced by every method") {
    for (double lambda : {0.0, 1.0, 100.0}) {
      AugmentedSystem sys{test::random_sites(300, gen), Vector(300), lambda};
      for (std::size_t i = 0; i < 300; ++i) sys.y(static_cast<Eigen::Index>(i)) = 2.0 - 3.0 * sys.sites[i].x1 + 0.5 * sys.sites[i].x2;
      const Eigen::Vector3d d_ref(2.0, -3.0, 0.5);
      const SolveResult m1 = solve_direct(sys);
      const SolveResult m2 = solve_schur_cg(sys, E11Mode::dense(), cfg);
      const SolveResult m3 = solve_schur_cg(sys, E11Mode::compressed({}), cfg);
      for (const SolveResult* r : {&m1, &m2, &m3}) {
        CHECK(r->coeffs.c.cwiseAbs().maxCoeff() <= 1e-7);
        CHECK((r->coeffs.d - d_ref).norm() <= 1e-7);
      }
    }
  }
  SUBCASE("residual history contracts") {
    // Plain CG minimizes the energy norm of the error, so single steps of the
    // residual 2-norm may go up; over a window of iterations it must drop.
    for (std::size_t n : {400u, 1600u}) {
      const AugmentedSystem sys = random_system(n, 1.0, gen);
      const SolveResult r = solve_schur_cg(sys, E11Mode::dense(), cfg);
      const auto& h = r.report.residual_history;
      REQUIRE(h.size() == r.report.iterations + 1);
      const std::size_t window = 10;
      double worst = 0.0;
      for (std::size_t k = 0; k + window < h.size(); ++k) worst = std::max(worst, h[k + window] / h[k]);
      CHECK(worst < 1.0);
      CHECK(h.back() <= cfg.rel_tol);
    }
  }
  SUBCASE("iteration cap surfaces as non-convergence") {
    const AugmentedSystem sys = random_system(200, 1.0, gen);
    CgConfig tight;
    tight.max_iter = 2;
    CHECK_THROWS_AS(solve_schur_cg(sys, E11Mode::dense(), tight), NonConvergenceError);
  }
}

TEST_CASE("report serialization") {
  std::mt19937_64 gen(10);
  const AugmentedSystem sys = random_system(300, 1.0, gen);
  const SolveResult r = solve_schur_cg(sys, E11Mode::compressed({}), {});
  const nlohmann::json j = r.report;
  CHECK(j.at("method") == "m3");
  CHECK(j.at("iterations") == r.report.iterations);
  CHECK(j.at("final_residual").get<double>() == r.report.final_residual);
  CHECK(j.at("solve_s").get<double>() == r.report.timings.solve_s);
  CHECK(j.at("compression").at("stored_entries") == r.report.compression->stored_entries);

  std::ostringstream os;
  write_residual_history_csv(os, {1.0, 0.5});
  CHECK(os.str() == "iter,residual\n0,1\n1,0.5\n");
}
