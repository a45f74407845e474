#pragma once

// Pointwise right-hand-side evaluation of the complementarity system that is
// equivalent to the projected dynamics: xdot = f + E E' grad_c(x) lambda with
// 0 <= lambda  perp  c(x) >= 0. The multiplier comes from the extended
// projection of f onto the tangent cone at x.

#include <Eigen/Dense>
#include <algorithm>
#include <string>

#include "sweepds/errors.hpp"
#include "sweepds/geometry.hpp"
#include "sweepds/projection.hpp"

namespace sweepds {

struct DcsOptions {
  double eps_active = 1e-9;
  double drift_tol = 1e-7;   // pass slightly-outside states as active
  double licq_rank_tol = 1e-8;
};

struct DcsEvaluation {
  VectorXd xdot;
  VectorXd lambda;  // full n_c vector, zeros off the active set
  ActiveSet active;
  double kkt_residual = 0.0;
  bool licq_ok = true;
};

inline DcsEvaluation eval_rhs(const DcsProblem& p, const VectorXd& x,
                              const VectorXd& u, double t,
                              const DcsOptions& opts = {}) {
  DcsEvaluation out;
  const VectorXd cv = p.set.eval_c(x, t);
  for (int i = 0; i < p.set.n_c; ++i) {
    if (cv[i] < -opts.drift_tol)
      throw StateOutsideSet("state violates constraint " + std::to_string(i) +
                            " by " + std::to_string(-cv[i]));
  }
  out.active.tolerance = opts.eps_active;
  for (int i = 0; i < p.set.n_c; ++i)
    if (cv[i] <= opts.eps_active) out.active.indices.push_back(i);

  out.licq_ok = licq_holds(p.set, x, t, out.active, opts.licq_rank_tol);

  const VectorXd fv = p.f(x, u);
  if (!fv.allFinite())
    throw EvaluationError("dynamics evaluated to a non-finite value");

  const MatrixXd grad = p.set.n_c > 0 ? p.set.eval_grad(x, t) : MatrixXd(p.n_x, 0);
  PolyhedralCone cone = PolyhedralCone::from_active_gradients(grad, out.active);

  ProjectionResult proj = project_extended(cone, p.basis, fv);
  out.xdot = proj.w;
  out.lambda = VectorXd::Zero(p.set.n_c);
  for (int k = 0; k < out.active.size(); ++k)
    out.lambda[out.active.indices[static_cast<std::size_t>(k)]] = proj.lambda[k];

  // Residual of the complementarity-system equations at this point.
  VectorXd stat = out.xdot - fv;
  if (p.set.n_c > 0)
    stat -= p.basis.projector() * (grad * out.lambda);
  double res = stat.size() > 0 ? stat.cwiseAbs().maxCoeff() : 0.0;
  for (int i = 0; i < p.set.n_c; ++i) {
    res = std::max(res, std::abs(std::min(out.lambda[i], std::max(cv[i], 0.0))));
    res = std::max(res, -out.lambda[i]);
  }
  out.kkt_residual = res;
  return out;
}

// Convenience wrapper for sweeping processes: lifts with the clock state,
// evaluates, and strips the clock component again.
inline DcsEvaluation foswp_rhs(const FoswpProblem& p, const VectorXd& x,
                               const VectorXd& u, double t,
                               const DcsOptions& opts = {}) {
  DcsProblem lifted = lift_clock(p);
  VectorXd y(p.n_x + 1);
  y.head(p.n_x) = x;
  y[p.n_x] = t;
  DcsEvaluation ev = eval_rhs(lifted, y, u, 0.0, opts);
  DcsEvaluation out;
  out.xdot = ev.xdot.head(p.n_x);
  out.lambda = ev.lambda;
  out.active = ev.active;
  out.kkt_residual = ev.kkt_residual;
  out.licq_ok = ev.licq_ok;
  return out;
}

}  // namespace sweepds
