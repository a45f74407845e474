#pragma once

// Independent brute-force references used by the test suites. These stay
// deliberately naive (subset enumeration, dense linear solves) so they cannot
// share a failure mode with the production code paths they check.

#include <Eigen/Dense>
#include <limits>
#include <optional>
#include <vector>

namespace oracles {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// min 1/2 ||w - q||^2 s.t. N' w + o >= 0, A' w = r, by enumerating every
// subset of halfspaces as the candidate active set. Returns nullopt when no
// candidate is feasible (infeasible problem).
inline std::optional<VectorXd> least_distance(const VectorXd& q, const MatrixXd& N,
                                              const VectorXd& o, const MatrixXd& A,
                                              const VectorXd& r,
                                              double tol = 1e-9) {
  const int m = static_cast<int>(N.cols());
  const int k = static_cast<int>(A.cols());
  double best = std::numeric_limits<double>::infinity();
  std::optional<VectorXd> best_w;
  for (unsigned mask = 0; mask < (1u << m); ++mask) {
    int ns = 0;
    for (int i = 0; i < m; ++i)
      if (mask & (1u << i)) ++ns;
    MatrixXd M(q.size(), k + ns);
    VectorXd d(k + ns);
    if (k > 0) {
      M.leftCols(k) = A;
      d.head(k) = r;
    }
    int col = k;
    for (int i = 0; i < m; ++i) {
      if (mask & (1u << i)) {
        M.col(col) = N.col(i);
        d[col] = -o[i];
        ++col;
      }
    }
    VectorXd w = q;
    if (col > 0) {
      Eigen::CompleteOrthogonalDecomposition<MatrixXd> gram(
          MatrixXd(M.transpose() * M));
      w = q + M * gram.solve(d - M.transpose() * q);
      if ((M.transpose() * w - d).cwiseAbs().maxCoeff() > tol) continue;
    }
    bool feasible = true;
    for (int i = 0; i < m && feasible; ++i)
      if (N.col(i).dot(w) + o[i] < -tol) feasible = false;
    if (!feasible) continue;
    double obj = (w - q).squaredNorm();
    if (obj < best - 1e-14) {
      best = obj;
      best_w = w;
    }
  }
  return best_w;
}

// Convex QP min 1/2 z'Qz + q'z s.t. G z >= g by active-set enumeration.
// Q must be positive definite. Returns nullopt if infeasible.
inline std::optional<VectorXd> convex_qp(const MatrixXd& Q, const VectorXd& q,
                                         const MatrixXd& G, const VectorXd& g,
                                         double tol = 1e-8) {
  const int n = static_cast<int>(Q.rows());
  const int m = static_cast<int>(G.rows());
  double best = std::numeric_limits<double>::infinity();
  std::optional<VectorXd> best_z;
  for (unsigned mask = 0; mask < (1u << m); ++mask) {
    std::vector<int> act;
    for (int i = 0; i < m; ++i)
      if (mask & (1u << i)) act.push_back(i);
    const int na = static_cast<int>(act.size());
    MatrixXd K(n + na, n + na);
    K.setZero();
    K.topLeftCorner(n, n) = Q;
    VectorXd rhs(n + na);
    rhs.head(n) = -q;
    for (int a = 0; a < na; ++a) {
      K.block(n + a, 0, 1, n) = G.row(act[static_cast<std::size_t>(a)]);
      K.block(0, n + a, n, 1) = G.row(act[static_cast<std::size_t>(a)]).transpose();
      rhs[n + a] = g[act[static_cast<std::size_t>(a)]];
    }
    Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(K);
    VectorXd sol = cod.solve(rhs);
    if ((K * sol - rhs).cwiseAbs().maxCoeff() > tol) continue;
    VectorXd z = sol.head(n);
    bool feasible = true;
    for (int i = 0; i < m && feasible; ++i)
      if (G.row(i).dot(z) - g[i] < -tol) feasible = false;
    if (!feasible) continue;
    double obj = 0.5 * z.dot(Q * z) + q.dot(z);
    if (obj < best - 1e-12) {
      best = obj;
      best_z = z;
    }
  }
  return best_z;
}

}  // namespace oracles
