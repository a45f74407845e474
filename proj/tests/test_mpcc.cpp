#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "sweepds/mpcc.hpp"

using namespace sweepds;
using sweepds::expr::Expr;

namespace {

// min (z1-1)^2 + (z2-1)^2  s.t.  0 <= z1  perp  z2 >= 0, via raw callbacks.
MpccProblem branch_mpcc_callbacks() {
  MpccProblem m;
  m.n = 2;
  m.z0 = (VectorXd(2) << 0.6, 0.4).finished();
  m.objective = [](const VectorXd& z) {
    return (z[0] - 1) * (z[0] - 1) + (z[1] - 1) * (z[1] - 1);
  };
  m.grad_objective = [](const VectorXd& z) {
    return (VectorXd(2) << 2 * (z[0] - 1), 2 * (z[1] - 1)).finished();
  };
  m.m_comp = 1;
  m.comp_g = [](const VectorXd& z) { return VectorXd::Constant(1, z[0]).eval(); };
  m.comp_h = [](const VectorXd& z) { return VectorXd::Constant(1, z[1]).eval(); };
  m.jac_comp_g = [](const VectorXd&) {
    return (MatrixXd(1, 2) << 1.0, 0.0).finished();
  };
  m.jac_comp_h = [](const VectorXd&) {
    return (MatrixXd(1, 2) << 0.0, 1.0).finished();
  };
  return m;
}

SymbolicMpcc branch_mpcc_symbolic() {
  SymbolicMpcc s;
  int z1 = s.new_var(0.6), z2 = s.new_var(0.4);
  Expr e1 = Expr::var(z1), e2 = Expr::var(z2);
  s.objective = square(e1 - 1.0) + square(e2 - 1.0);
  s.comp.emplace_back(e1, e2);
  return s;
}

}  // namespace

TEST_CASE("scholtes relaxation widens the L-shaped set") {
  MpccProblem m = branch_mpcc_callbacks();
  Nlp r1 = scholtes_relax(m, 1.0);
  VectorXd z(2);
  z << 1.0, 1.0;
  CHECK(r1.g_in(z).minCoeff() >= 0.0);  // product boundary at sigma = 1

  Nlp r2 = scholtes_relax(m, 1e-8);
  z << 1.0, 0.5;
  CHECK(r2.g_in(z).minCoeff() < 0.0);  // interior of the quadrant is cut away
  z << 1.0, 1e-9;
  CHECK(r2.g_in(z).minCoeff() >= 0.0);  // the L remains feasible
  CHECK_THROWS_AS(scholtes_relax(m, 0.0), AssemblyError);
}

TEST_CASE("branch MPCC solves to one of the two branch points") {
  for (bool symbolic : {false, true}) {
    INFO("symbolic route: " << symbolic);
    MpccProblem m =
        symbolic ? finalize(branch_mpcc_symbolic()) : branch_mpcc_callbacks();
    auto sol = homotopy_solve(m);
    REQUIRE(sol.status == MpccStatus::Success);
    CHECK(sol.comp_residual <= 1e-10);
    CHECK(sol.objective == Catch::Approx(1.0).margin(1e-6));
    const bool at_10 = std::abs(sol.z[0] - 1) < 1e-5 && std::abs(sol.z[1]) < 1e-5;
    const bool at_01 = std::abs(sol.z[1] - 1) < 1e-5 && std::abs(sol.z[0]) < 1e-5;
    CHECK((at_10 || at_01));

    // sigma decreases strictly by the schedule factor.
    for (std::size_t k = 1; k < sol.log.size(); ++k)
      CHECK(sol.log[k].sigma == Catch::Approx(0.1 * sol.log[k - 1].sigma));
  }
}

TEST_CASE("an MPCC without pairs is a single NLP solve") {
  SymbolicMpcc s;
  int a = s.new_var(0.0), b = s.new_var(0.0);
  s.objective = square(Expr::var(a) - 2.0) + square(Expr::var(b) + 1.0);
  s.eq.push_back(Expr::var(a) + Expr::var(b) - 1.0);
  MpccProblem m = finalize(s);
  auto sol = homotopy_solve(m);
  REQUIRE(sol.status == MpccStatus::Success);
  CHECK(sol.log.size() == 1);
  CHECK(sol.z[0] == Catch::Approx(2.0));
  CHECK(sol.z[1] == Catch::Approx(-1.0));
  CHECK(sol.comp_residual == 0.0);
}

TEST_CASE("compiled derivatives agree with finite differences") {
  SymbolicMpcc s;
  int x = s.new_var(0.3), y = s.new_var(-0.2), w = s.new_var(1.1);
  Expr ex = Expr::var(x), ey = Expr::var(y), ew = Expr::var(w);
  s.objective = square(ex - 1.0) + ex * ey + expr::cos(ew) * ey;
  s.eq.push_back(ex * ey * ew - 0.5);
  s.eq.push_back(ex + square(ey) - ew);
  s.ineq.push_back(ew - ex * ex);
  s.comp.emplace_back(ex * ew, ey + 2.0);

  MpccProblem m = finalize(s);
  CHECK_NOTHROW(validate_mpcc(m));

  // Hessian of the Lagrangian vs finite differences of its gradient.
  auto comp = m.compiled;
  const double sigma = 0.37;
  VectorXd z = (VectorXd(3) << 0.4, -0.3, 0.9).finished();
  VectorXd y_eq = (VectorXd(2) << 0.7, -1.3).finished();
  VectorXd y_in(comp->m_in());
  for (int i = 0; i < comp->m_in(); ++i) y_in[i] = 0.3 * (i + 1);

  auto grad_lag = [&](const VectorXd& zz) {
    VectorXd g;
    MatrixXd je, ji;
    comp->derivatives(zz, sigma, g, je, ji);
    return VectorXd(g - je.transpose() * y_eq - ji.transpose() * y_in);
  };
  MatrixXd W = comp->lagrangian_hessian(z, sigma, 1.0, y_eq, y_in);
  for (int j = 0; j < 3; ++j) {
    VectorXd zp = z, zm = z;
    zp[j] += 1e-6;
    zm[j] -= 1e-6;
    VectorXd fd = (grad_lag(zp) - grad_lag(zm)) / 2e-6;
    CHECK((fd - W.col(j)).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("validation rejects wrong jacobians") {
  MpccProblem m = branch_mpcc_callbacks();
  m.jac_comp_g = [](const VectorXd&) {
    return (MatrixXd(1, 2) << 0.5, 0.0).finished();  // wrong by 2x
  };
  CHECK_THROWS_AS(validate_mpcc(m), AssemblyError);
}

TEST_CASE("schedule validation") {
  HomotopySchedule s;
  s.kappa = 1.5;
  CHECK_THROWS_AS(s.validate(), AssemblyError);
  s = {};
  s.comp_tol = -1.0;
  CHECK_THROWS_AS(s.validate(), AssemblyError);
  s = {};
  s.sigma0 = 1e-12;
  CHECK_THROWS_AS(s.validate(), AssemblyError);
}

TEST_CASE("pair sides that are plain variables become bounds") {
  SymbolicMpcc s = branch_mpcc_symbolic();
  MpccProblem m = finalize(s);
  REQUIRE(m.lb.size() == 2);
  CHECK(m.lb[0] == 0.0);
  CHECK(m.lb[1] == 0.0);
  // Only the product row remains a general inequality.
  CHECK(m.compiled->m_in() == 1);
}

TEST_CASE("warm-start iteration counts are tracked") {
  // Asymmetric variant so the homotopy path is nondegenerate.
  SymbolicMpcc s;
  int z1 = s.new_var(0.6), z2 = s.new_var(0.4);
  Expr e1 = Expr::var(z1), e2 = Expr::var(z2);
  s.objective = square(e1 - 2.0) + square(e2 - 1.0) + 0.5 * e1 * e2;
  s.comp.emplace_back(e1, e2);
  MpccProblem m = finalize(s);

  HomotopyOptions warm, cold;
  cold.warm_start = false;
  auto a = homotopy_solve(m, {}, warm);
  auto b = homotopy_solve(m, {}, cold);
  REQUIRE(a.status == MpccStatus::Success);
  REQUIRE(b.status == MpccStatus::Success);
  CHECK((a.z - b.z).cwiseAbs().maxCoeff() <= 1e-6);
  // Tracked, not hard-failed: report the totals in the test output.
  WARN("newton iterations: warm=" << a.total_nlp_iters
                                  << " cold=" << b.total_nlp_iters);
}
