#include <catch2/catch_amalgamated.hpp>

#include <Eigen/QR>
#include <random>

#include "oracles.hpp"
#include "sweepds/projection.hpp"

using namespace sweepds;

namespace {

std::mt19937_64 rng(42);

VectorXd random_vec(int n, double scale = 2.0) {
  std::normal_distribution<double> d(0.0, scale);
  VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = d(rng);
  return v;
}

PolyhedralCone random_cone(int n, int m) {
  PolyhedralCone c;
  c.normals.resize(n, m);
  for (int j = 0; j < m; ++j) c.normals.col(j) = random_vec(n, 1.0);
  return c;
}

SubspaceBasis random_basis(int n, int np) {
  MatrixXd m(n, n);
  for (int i = 0; i < n; ++i) m.row(i) = random_vec(n, 1.0).transpose();
  Eigen::HouseholderQR<MatrixXd> qr(m);
  MatrixXd q = qr.householderQ();
  SubspaceBasis b;
  b.E = q.leftCols(np);
  b.E_perp = q.rightCols(n - np);
  return b;
}

PolyhedralCone halfplane_a_ge_b() {
  PolyhedralCone c;
  c.normals.resize(2, 1);
  c.normals << 1.0, -1.0;
  return c;
}

}  // namespace

TEST_CASE("euclidean projection onto the tutorial halfplane") {
  PolyhedralCone cone = halfplane_a_ge_b();
  VectorXd v(2);
  v << -1.0, 1.0;
  auto r = project_cone(cone, v);
  CHECK(r.w[0] == Catch::Approx(0.0).margin(1e-12));
  CHECK(r.w[1] == Catch::Approx(0.0).margin(1e-12));
  CHECK(r.lambda[0] == Catch::Approx(1.0));  // w - v = lambda * g
  CHECK(r.active == std::vector<int>{0});
  CHECK(r.stationarity_residual <= 1e-10);
}

TEST_CASE("interior points project to themselves") {
  PolyhedralCone cone = random_cone(3, 3);
  // A point in the interior: average the normals (each n_i' w > 0 likely);
  // retry until strictly interior.
  VectorXd v;
  for (;;) {
    v = random_vec(3);
    if (((cone.normals.transpose() * v).array() > 0.1).all()) break;
  }
  auto r = project_cone(cone, v);
  CHECK((r.w - v).cwiseAbs().maxCoeff() <= 1e-12);
  CHECK(r.lambda.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("trivial cone with no halfspaces") {
  PolyhedralCone cone;
  cone.normals = MatrixXd(3, 0);
  VectorXd v = random_vec(3);
  CHECK((project_cone(cone, v).w - v).cwiseAbs().maxCoeff() == 0.0);
  SubspaceBasis b = random_basis(3, 2);
  CHECK((project_extended(cone, b, v).w - v).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("random cones match the enumeration oracle") {
  for (int rep = 0; rep < 100; ++rep) {
    int m = 1 + static_cast<int>(rng() % 3);
    PolyhedralCone cone = random_cone(3, m);
    VectorXd v = random_vec(3);
    auto r = project_cone(cone, v);
    auto ref = oracles::least_distance(v, cone.normals, VectorXd::Zero(m),
                                       MatrixXd(3, 0), VectorXd());
    REQUIRE(ref.has_value());
    CHECK((r.w - *ref).cwiseAbs().maxCoeff() <= 1e-7);
    CHECK(r.lambda.minCoeff() >= -1e-12);
    // complementary slackness
    for (int i = 0; i < m; ++i)
      CHECK(std::abs(r.lambda[i] * cone.normals.col(i).dot(r.w)) <= 1e-8);
  }
}

TEST_CASE("degenerate cones still produce the right point") {
  // Duplicated + opposing normals force degenerate multipliers.
  PolyhedralCone cone;
  cone.normals.resize(2, 3);
  cone.normals.col(0) << 1.0, 0.0;
  cone.normals.col(1) << 1.0, 0.0;
  cone.normals.col(2) << 0.0, 1.0;
  VectorXd v(2);
  v << -2.0, -3.0;
  auto r = project_cone(cone, v);
  CHECK(r.w.cwiseAbs().maxCoeff() <= 1e-10);
  CHECK(r.lambda.minCoeff() >= -1e-12);
  CHECK(r.stationarity_residual <= 1e-10);
}

TEST_CASE("extended projection of the tutorial example") {
  PolyhedralCone cone = halfplane_a_ge_b();
  SubspaceBasis basis = SubspaceBasis::selection(2, {0});
  VectorXd v(2);
  v << -1.0, 1.0;
  auto r = project_extended(cone, basis, v);
  CHECK(r.w[0] == Catch::Approx(1.0));
  CHECK(r.w[1] == Catch::Approx(1.0));
  CHECK(r.lambda[0] == Catch::Approx(2.0));

  auto rr = project_extended_reduced(cone, basis, v);
  CHECK((r.w - rr.w).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("full subspace recovers the euclidean projection") {
  for (int rep = 0; rep < 20; ++rep) {
    PolyhedralCone cone = random_cone(3, 2);
    VectorXd v = random_vec(3);
    SubspaceBasis full = SubspaceBasis::full(3);
    auto a = project_cone(cone, v);
    auto b = project_extended(cone, full, v);
    auto c = project_extended_reduced(cone, full, v);
    CHECK((a.w - b.w).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK((a.w - c.w).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("subspace equivalence on random instances") {
  int done = 0;
  while (done < 50) {
    int n = 4;
    int m = 1 + static_cast<int>(rng() % 4);
    int np = 1 + static_cast<int>(rng() % 4);
    PolyhedralCone cone = random_cone(n, m);
    SubspaceBasis basis = random_basis(n, np);
    VectorXd v = random_vec(n);

    auto ref = oracles::least_distance(v, cone.normals, VectorXd::Zero(m),
                                       basis.E_perp,
                                       VectorXd(basis.E_perp.transpose() * v));
    if (!ref.has_value()) continue;  // skip infeasible intersections
    ++done;

    auto a = project_extended(cone, basis, v);
    auto b = project_extended_reduced(cone, basis, v);
    CHECK((a.w - b.w).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK((a.w - *ref).cwiseAbs().maxCoeff() <= 1e-7);

    // The step away from v stays inside the subspace.
    if (basis.E_perp.cols() > 0)
      CHECK((basis.E_perp.transpose() * (a.w - v)).cwiseAbs().maxCoeff() <= 1e-10);

    // Multiplier consistency: w = v + sum lambda_i E E' g_i.
    VectorXd recon = v + basis.projector() * (cone.normals * a.lambda);
    CHECK((a.w - recon).cwiseAbs().maxCoeff() <= 1e-8);
  }
}

TEST_CASE("infeasible intersections are reported") {
  PolyhedralCone cone;
  cone.normals.resize(2, 1);
  cone.normals << 1.0, 0.0;  // w1 >= 0
  SubspaceBasis basis = SubspaceBasis::selection(2, {1});
  VectorXd v(2);
  v << -1.0, 0.0;  // v + span(e2) never reaches w1 >= 0
  CHECK_THROWS_AS(project_extended(cone, basis, v), InfeasibleProjection);
  CHECK_THROWS_AS(project_extended_reduced(cone, basis, v), InfeasibleProjection);
}

TEST_CASE("idempotence and nonexpansiveness") {
  for (int rep = 0; rep < 30; ++rep) {
    PolyhedralCone cone = random_cone(3, 3);
    VectorXd v1 = random_vec(3), v2 = random_vec(3);
    auto p1 = project_cone(cone, v1);
    auto p2 = project_cone(cone, v2);
    auto pp = project_cone(cone, p1.w);
    CHECK((pp.w - p1.w).cwiseAbs().maxCoeff() <= 1e-9);
    CHECK((p1.w - p2.w).norm() <= (v1 - v2).norm() + 1e-12);
  }
}
