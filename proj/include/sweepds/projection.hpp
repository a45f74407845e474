#pragma once

// Euclidean and subspace-constrained projections onto polyhedral cones.
// The workhorse is a dense dual active-set method for least-distance QPs
//
//     min 1/2 ||w - q||^2   s.t.  n_i' w + o_i >= 0,  A' w = r,
//
// which starts from the equality-projected unconstrained minimizer and adds
// violated halfspaces one at a time (lowest index first, Bland-style), taking
// dual steps that drop blocking constraints as needed. Multipliers come out
// exactly complementary; infeasibility surfaces as a Farkas certificate.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "sweepds/errors.hpp"
#include "sweepds/geometry.hpp"

namespace sweepds {

struct PolyhedralCone {
  MatrixXd normals;  // n x m; cone is {v : normals.col(i)' v >= 0 for all i}

  int dim() const { return static_cast<int>(normals.rows()); }
  int halfspaces() const { return static_cast<int>(normals.cols()); }

  static PolyhedralCone from_active_gradients(const MatrixXd& grad,
                                              const ActiveSet& active) {
    PolyhedralCone c;
    c.normals.resize(grad.rows(), active.size());
    for (int k = 0; k < active.size(); ++k)
      c.normals.col(k) = grad.col(active.indices[static_cast<std::size_t>(k)]);
    return c;
  }
};

struct ProjectionResult {
  VectorXd w;
  VectorXd lambda;          // one multiplier per cone halfspace
  std::vector<int> active;  // halfspaces with n_i' w + o_i = 0 at the solution
  bool feasible = true;
  double stationarity_residual = 0.0;
};

namespace detail {

struct LeastDistanceProblem {
  VectorXd q;      // target
  MatrixXd N;      // n x m inequality normals
  VectorXd o;      // m offsets
  MatrixXd A;      // n x k equality normals (orthonormal columns in our uses)
  VectorXd r;      // k equality right-hand sides
};

struct LeastDistanceResult {
  VectorXd w;
  VectorXd lambda;  // m, >= 0
  VectorXd mu;      // k equality multipliers
  bool feasible = true;
  VectorXd farkas;  // certificate when infeasible (over inequality indices)
};

inline LeastDistanceResult solve_least_distance(const LeastDistanceProblem& p) {
  const int n = static_cast<int>(p.q.size());
  const int m = static_cast<int>(p.N.cols());
  const int k = static_cast<int>(p.A.cols());

  LeastDistanceResult res;
  res.lambda = VectorXd::Zero(m);
  res.mu = VectorXd::Zero(k);

  const double scale = std::max({1.0, p.q.size() > 0 ? p.q.cwiseAbs().maxCoeff() : 0.0,
                                 m > 0 ? p.o.cwiseAbs().maxCoeff() : 0.0});
  const double tol_feas = 1e-11 * scale;
  const double tol_z = 1e-12;

  // Start at the minimum-norm correction onto the equality manifold.
  VectorXd w = p.q;
  if (k > 0) {
    // w = q + A xi with A' (q + A xi) = r; for orthonormal A, xi = r - A'q.
    Eigen::CompleteOrthogonalDecomposition<MatrixXd> codAtA(
        MatrixXd(p.A.transpose() * p.A));
    VectorXd xi = codAtA.solve(p.r - p.A.transpose() * p.q);
    w = p.q + p.A * xi;
    if ((p.A.transpose() * w - p.r).cwiseAbs().maxCoeff() > 1e-9 * scale) {
      res.feasible = false;  // inconsistent equalities
      res.w = w;
      return res;
    }
  }

  std::vector<int> work;  // active inequality set, kept sorted
  const int max_iter = 60 * (m + 2);
  int iter = 0;

  auto lowest_violated = [&]() -> int {
    for (int i = 0; i < m; ++i) {
      double v = p.N.col(i).dot(w) + p.o[i];
      if (v < -tol_feas && !std::binary_search(work.begin(), work.end(), i))
        return i;
    }
    return -1;
  };

  for (;;) {
    if (++iter > max_iter)
      throw QpError("least-distance QP: iteration limit reached");
    int pidx = lowest_violated();
    if (pidx < 0) break;
    const VectorXd np = p.N.col(pidx);

    for (;;) {
      if (++iter > max_iter)
        throw QpError("least-distance QP: iteration limit reached");
      const int nw = static_cast<int>(work.size());
      MatrixXd M(n, k + nw);
      if (k > 0) M.leftCols(k) = p.A;
      for (int j = 0; j < nw; ++j)
        M.col(k + j) = p.N.col(work[static_cast<std::size_t>(j)]);

      VectorXd mu_dir;
      VectorXd z;
      if (k + nw > 0) {
        Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(M);
        mu_dir = cod.solve(np);  // min-norm least-squares: M mu ~ np
        z = np - M * mu_dir;
      } else {
        mu_dir = VectorXd();
        z = np;
      }
      const double z2 = z.squaredNorm();
      const bool z_zero = z2 <= tol_z * std::max(1.0, np.squaredNorm());

      double t2 = std::numeric_limits<double>::infinity();
      if (!z_zero) {
        const double viol = np.dot(w) + p.o[pidx];  // < 0
        t2 = -viol / z2;
      }

      double t1 = std::numeric_limits<double>::infinity();
      int drop = -1;
      for (int j = 0; j < nw; ++j) {
        const double rj = mu_dir[k + j];
        if (rj > 1e-12) {
          const double cand = res.lambda[work[static_cast<std::size_t>(j)]] / rj;
          if (cand < t1 - 1e-15) {
            t1 = cand;
            drop = j;
          }
        }
      }

      if (!std::isfinite(t1) && !std::isfinite(t2)) {
        // Dual ray: np = M mu with mu (inequality part) <= 0 proves the
        // system infeasible.
        res.feasible = false;
        res.farkas = VectorXd::Zero(m);
        res.farkas[pidx] = 1.0;
        for (int j = 0; j < nw; ++j)
          res.farkas[work[static_cast<std::size_t>(j)]] = -mu_dir[k + j];
        res.w = w;
        return res;
      }

      const double t = std::min(t1, t2);
      if (!z_zero) w += t * z;
      for (int j = 0; j < nw; ++j)
        res.lambda[work[static_cast<std::size_t>(j)]] -= t * mu_dir[k + j];
      res.lambda[pidx] += t;

      if (t == t2 && t2 <= t1) {
        work.insert(std::upper_bound(work.begin(), work.end(), pidx), pidx);
        break;
      }
      res.lambda[work[static_cast<std::size_t>(drop)]] = 0.0;
      work.erase(work.begin() + drop);
    }
  }

  // Equality multipliers and a minimum-norm polish of the multipliers for
  // the final working set (ties broken toward the least-norm certificate).
  {
    const int nw = static_cast<int>(work.size());
    if (k + nw > 0) {
      MatrixXd M(n, k + nw);
      if (k > 0) M.leftCols(k) = p.A;
      for (int j = 0; j < nw; ++j)
        M.col(k + j) = p.N.col(work[static_cast<std::size_t>(j)]);
      Eigen::CompleteOrthogonalDecomposition<MatrixXd> cod(M);
      VectorXd xi = cod.solve(w - p.q);
      bool sign_ok = true;
      for (int j = 0; j < nw; ++j)
        if (xi[k + j] < -1e-10 * scale) sign_ok = false;
      if (sign_ok && (M * xi - (w - p.q)).cwiseAbs().maxCoeff() <= 1e-9 * scale) {
        res.mu = xi.head(k);
        for (int j = 0; j < nw; ++j)
          res.lambda[work[static_cast<std::size_t>(j)]] = std::max(0.0, xi[k + j]);
      } else if (k > 0) {
        Eigen::CompleteOrthogonalDecomposition<MatrixXd> codA(p.A);
        res.mu = codA.solve(w - p.q - p.N * res.lambda);
      }
    }
  }

  res.w = w;
  return res;
}

inline double stationarity_residual(const LeastDistanceProblem& p,
                                    const LeastDistanceResult& r) {
  VectorXd resid = r.w - p.q;
  if (p.N.cols() > 0) resid -= p.N * r.lambda;
  if (p.A.cols() > 0) resid -= p.A * r.mu;
  return resid.size() > 0 ? resid.cwiseAbs().maxCoeff() : 0.0;
}

inline ProjectionResult finish(const LeastDistanceProblem& p,
                               const LeastDistanceResult& r) {
  ProjectionResult out;
  out.w = r.w;
  out.lambda = r.lambda;
  out.feasible = r.feasible;
  if (!r.feasible) return out;
  out.stationarity_residual = stationarity_residual(p, r);
  const double scale = std::max(1.0, r.w.size() > 0 ? r.w.cwiseAbs().maxCoeff() : 0.0);
  for (int i = 0; i < p.N.cols(); ++i)
    if (std::abs(p.N.col(i).dot(r.w) + p.o[i]) <= 1e-9 * scale)
      out.active.push_back(i);
  return out;
}

}  // namespace detail

// Euclidean projection of v onto the cone.
inline ProjectionResult project_cone(const PolyhedralCone& cone, const VectorXd& v) {
  detail::LeastDistanceProblem p;
  p.q = v;
  p.N = cone.normals;
  p.o = VectorXd::Zero(cone.halfspaces());
  p.A = MatrixXd(v.size(), 0);
  p.r = VectorXd();
  auto r = detail::solve_least_distance(p);
  return detail::finish(p, r);
}

// Extended projection: min ||w - v|| s.t. w in cone, w - v in span(E).
// Solved as a QP in the ambient space with the complement directions pinned.
inline ProjectionResult project_extended(const PolyhedralCone& cone,
                                         const SubspaceBasis& basis,
                                         const VectorXd& v) {
  detail::LeastDistanceProblem p;
  p.q = v;
  p.N = cone.normals;
  p.o = VectorXd::Zero(cone.halfspaces());
  p.A = basis.E_perp;
  p.r = basis.E_perp.transpose() * v;
  auto r = detail::solve_least_distance(p);
  if (!r.feasible)
    throw InfeasibleProjection(
        "extended projection: cone does not meet v + span(E)");
  return detail::finish(p, r);
}

// Same projection computed through the reduced subspace problem: project
// E'v in R^{n'} subject to the cone constraints evaluated at
// E w_tilde + E_perp E_perp' v. The two routes must agree.
inline ProjectionResult project_extended_reduced(const PolyhedralCone& cone,
                                                 const SubspaceBasis& basis,
                                                 const VectorXd& v) {
  const int np = basis.dim();
  const VectorXd v_perp_full =
      basis.E_perp.cols() > 0
          ? VectorXd(basis.E_perp * (basis.E_perp.transpose() * v))
          : VectorXd(VectorXd::Zero(v.size()));

  detail::LeastDistanceProblem p;
  p.q = basis.E.transpose() * v;
  p.N = basis.E.transpose() * cone.normals;
  p.o = cone.normals.transpose() * v_perp_full;
  p.A = MatrixXd(np, 0);
  p.r = VectorXd();

  ProjectionResult out;
  if (np == 0) {
    // Nothing to optimize; feasibility of the offsets decides.
    if (cone.halfspaces() > 0 && (p.o.array() < -1e-11).any())
      throw InfeasibleProjection(
          "extended projection: cone does not meet v + span(E)");
    out.w = v_perp_full;
    out.lambda = VectorXd::Zero(cone.halfspaces());
    for (int i = 0; i < cone.halfspaces(); ++i)
      if (std::abs(p.o[i]) <= 1e-9) out.active.push_back(i);
    return out;
  }

  auto r = detail::solve_least_distance(p);
  if (!r.feasible)
    throw InfeasibleProjection(
        "extended projection: cone does not meet v + span(E)");
  ProjectionResult red = detail::finish(p, r);
  out.w = basis.E * red.w + v_perp_full;
  out.lambda = red.lambda;
  out.active = red.active;
  out.feasible = true;
  // Stationarity of the assembled point w.r.t. the full QP.
  VectorXd resid = out.w - v;
  if (cone.halfspaces() > 0) resid -= cone.normals * out.lambda;
  if (basis.E_perp.cols() > 0)
    resid -= basis.E_perp * (basis.E_perp.transpose() * resid);
  out.stationarity_residual = resid.cwiseAbs().maxCoeff();
  return out;
}

}  // namespace sweepds
