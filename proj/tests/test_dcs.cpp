#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "sweepds/dcs.hpp"

using namespace sweepds;
using sweepds::expr::Expr;

namespace {

FoswpProblem example1() {
  return make_foswp(1, 0, {"-1"}, {"x1 - t"}, VectorXd::Constant(1, 2.0));
}

std::mt19937_64 rng(123);

// A finitely defined set of quadratic constraints with `n_active` of them
// active at x_star (gradients checked for LICQ by the caller).
TimeVaryingSet random_quadratic_set(const VectorXd& x_star, int n_c, int n_active) {
  const int n = static_cast<int>(x_star.size());
  std::normal_distribution<double> dn(0.0, 1.0);
  std::uniform_real_distribution<double> du(0.3, 1.5);
  std::vector<Expr> cs;
  for (int i = 0; i < n_c; ++i) {
    Expr e(0.0);
    double at_star = 0.0;
    for (int j = 0; j < n; ++j) {
      double q = du(rng), a = dn(rng);
      e = e + Expr(q) * square(Expr::var(j) - Expr(a));
      at_star += q * (x_star[j] - a) * (x_star[j] - a);
    }
    double offset = (i < n_active) ? at_star : at_star - du(rng);
    cs.push_back(e - Expr(offset));
  }
  return make_set_exprs(n, std::move(cs));
}

}  // namespace

TEST_CASE("tutorial system: interior flow") {
  DcsProblem lifted = lift_clock(example1());
  VectorXd y(2);
  y << 2.0, 0.0;
  auto ev = eval_rhs(lifted, y, VectorXd(), 0.0);
  CHECK(ev.xdot[0] == Catch::Approx(-1.0));
  CHECK(ev.xdot[1] == Catch::Approx(1.0));
  CHECK(ev.lambda[0] == 0.0);
  CHECK(ev.active.indices.empty());
  CHECK(ev.kkt_residual <= 1e-10);
}

TEST_CASE("tutorial system: sliding on the moving boundary") {
  DcsProblem lifted = lift_clock(example1());
  VectorXd y(2);
  y << 1.0, 1.0;
  auto ev = eval_rhs(lifted, y, VectorXd(), 0.0);
  CHECK(ev.xdot[0] == Catch::Approx(1.0));
  CHECK(ev.xdot[1] == Catch::Approx(1.0));
  CHECK(ev.lambda[0] == Catch::Approx(2.0));
  CHECK(ev.active.indices == std::vector<int>{0});
  CHECK(ev.licq_ok);
  CHECK(ev.kkt_residual <= 1e-10);
}

TEST_CASE("sweeping-process wrapper strips the clock") {
  FoswpProblem p = example1();
  auto a = foswp_rhs(p, VectorXd::Constant(1, 2.0), VectorXd(), 0.0);
  CHECK(a.xdot.size() == 1);
  CHECK(a.xdot[0] == Catch::Approx(-1.0));
  CHECK(a.lambda[0] == 0.0);

  auto b = foswp_rhs(p, VectorXd::Constant(1, 1.0), VectorXd(), 1.0);
  CHECK(b.xdot[0] == Catch::Approx(1.0));
  CHECK(b.lambda[0] == Catch::Approx(2.0));
}

TEST_CASE("interior points flow with the plain dynamics") {
  VectorXd x_star = VectorXd::Zero(3);
  TimeVaryingSet set = random_quadratic_set(x_star, 3, 0);
  auto f = [](const VectorXd&, const VectorXd&) {
    return (VectorXd(3) << 1.0, -2.0, 0.5).finished();
  };
  DcsProblem p = make_dcs(set, SubspaceBasis::full(3), f);
  auto ev = eval_rhs(p, x_star, VectorXd(), 0.0);
  CHECK((ev.xdot - f(x_star, VectorXd())).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(ev.lambda.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("random boundary points satisfy the complementarity system") {
  std::normal_distribution<double> dn(0.0, 1.0);
  int done = 0;
  while (done < 25) {
    VectorXd x_star(3);
    for (int i = 0; i < 3; ++i) x_star[i] = dn(rng);
    int n_active = 1 + static_cast<int>(rng() % 2);
    TimeVaryingSet set = random_quadratic_set(x_star, 3, n_active);
    auto act = active_set(set, x_star, 0.0, 1e-9);
    if (act.size() != n_active) continue;
    if (!licq_holds(set, x_star, 0.0, act)) continue;
    ++done;

    VectorXd fv(3);
    for (int i = 0; i < 3; ++i) fv[i] = dn(rng);
    const VectorXd fv_c = fv;
    DcsProblem p = make_dcs(set, SubspaceBasis::full(3),
                            [fv_c](const VectorXd&, const VectorXd&) { return fv_c; });
    auto ev = eval_rhs(p, x_star, VectorXd(), 0.0);

    // Stationarity of the complementarity system.
    MatrixXd g = set.eval_grad(x_star, 0.0);
    VectorXd resid = ev.xdot - fv - g * ev.lambda;
    CHECK(resid.cwiseAbs().maxCoeff() <= 1e-9);

    // Forward invariance of active constraints and complementarity.
    VectorXd cv = set.eval_c(x_star, 0.0);
    for (int i : ev.active.indices)
      CHECK(g.col(i).dot(ev.xdot) >= -1e-9);
    for (int i = 0; i < set.n_c; ++i) {
      CHECK(std::min(ev.lambda[i], std::max(cv[i], 0.0)) <= 1e-9);
      CHECK(ev.lambda[i] >= 0.0);
    }

    // Same answer as the projection of f onto the tangent cone.
    PolyhedralCone cone = PolyhedralCone::from_active_gradients(g, ev.active);
    auto proj = project_cone(cone, fv);
    CHECK((ev.xdot - proj.w).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("drift below tolerance is treated as active") {
  DcsProblem lifted = lift_clock(example1());
  VectorXd y(2);
  y << 1.0 - 5e-8, 1.0;  // x slightly outside C
  auto ev = eval_rhs(lifted, y, VectorXd(), 0.0);
  CHECK(ev.active.indices == std::vector<int>{0});
  CHECK(ev.xdot[0] == Catch::Approx(1.0));
}

TEST_CASE("far-outside states are rejected") {
  DcsProblem lifted = lift_clock(example1());
  VectorXd y(2);
  y << 0.5, 1.0;
  CHECK_THROWS_AS(eval_rhs(lifted, y, VectorXd(), 0.0), StateOutsideSet);
}
