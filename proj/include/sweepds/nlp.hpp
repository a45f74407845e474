#pragma once

// Dense primal-dual interior-point solver for smooth NLPs of the form
//
//   min f(z)   s.t.  g_eq(z) = 0,  g_in(z) >= 0,  lb <= z <= ub.
//
// Inequalities get slacks (g_in(z) - s = 0, s >= 0); slack and simple bounds
// are handled by a log barrier with parameter mu driven toward mu_min. Each
// barrier problem is solved by Newton steps on the primal-dual system,
// condensed onto (dz, dy_eq):
//
//   [ W + Sigma + J_in' (Y/S) J_in + dw*I    J_eq' ] [ dz    ]   [ rhs ]
//   [ J_eq                                  -dc*I  ] [ -dy_eq] = [ -g_eq ]
//
// solved by a Cholesky factorization of the (regularized) top-left block and
// a Schur complement on the equality rows. Inertia problems are handled by
// escalating the primal regularization dw. Steps are clipped by the
// fraction-to-boundary rule and accepted by an Armijo test on an l1-penalty
// merit function.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "sweepds/errors.hpp"

namespace sweepds {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Nlp {
  int n = 0;
  VectorXd z0;
  VectorXd lb, ub;  // +-inf entries allowed; empty means unbounded
  std::function<double(const VectorXd&)> f;
  std::function<VectorXd(const VectorXd&)> grad;
  int m_eq = 0, m_in = 0;
  std::function<VectorXd(const VectorXd&)> g_eq;
  std::function<VectorXd(const VectorXd&)> g_in;
  std::function<MatrixXd(const VectorXd&)> J_eq;
  std::function<MatrixXd(const VectorXd&)> J_in;
  // Hessian of w_f * f(z) - y_eq' g_eq(z) - y_in' g_in(z); optional, finite
  // differences of the Lagrangian gradient are used when absent.
  std::function<MatrixXd(const VectorXd&, double, const VectorXd&, const VectorXd&)>
      lag_hess;
};

enum class NlpStatus { Success, MaxIter, Singular };

inline const char* to_string(NlpStatus s) {
  switch (s) {
    case NlpStatus::Success: return "success";
    case NlpStatus::MaxIter: return "max_iter";
    case NlpStatus::Singular: return "singular";
  }
  return "?";
}

struct NlpOptions {
  double tol = 1e-9;
  double mu_init = 1e-1;
  double mu_min = 1e-11;
  int max_iter = 300;
  double delta_w_max = 1e6;
  double delta_c = 1e-12;
  // Distance the starting point is pushed off its bounds; < 0 picks a value
  // proportional to mu_init so warm starts near bounds survive.
  double bound_push = -1.0;
  bool verbose = false;
};

struct NlpResult {
  VectorXd z;
  VectorXd s;
  VectorXd y_eq, y_in, z_lb, z_ub;
  double f = 0.0;
  double kkt_residual = std::numeric_limits<double>::infinity();
  double constraint_violation = std::numeric_limits<double>::infinity();
  NlpStatus status = NlpStatus::MaxIter;
  int iters = 0;
  std::string message;
};

namespace detail {

constexpr double kInf = std::numeric_limits<double>::infinity();

inline MatrixXd fd_lagrangian_hessian(const Nlp& nlp, const VectorXd& z,
                                      const VectorXd& y_eq, const VectorXd& y_in) {
  const int n = nlp.n;
  auto grad_lag = [&](const VectorXd& zz) {
    VectorXd g = nlp.grad(zz);
    if (nlp.m_eq > 0) g -= nlp.J_eq(zz).transpose() * y_eq;
    if (nlp.m_in > 0) g -= nlp.J_in(zz).transpose() * y_in;
    return g;
  };
  const VectorXd g0 = grad_lag(z);
  MatrixXd W(n, n);
  VectorXd zp = z;
  for (int j = 0; j < n; ++j) {
    const double h = 1e-7 * std::max(1.0, std::abs(z[j]));
    zp[j] = z[j] + h;
    W.col(j) = (grad_lag(zp) - g0) / h;
    zp[j] = z[j];
  }
  return 0.5 * (W + W.transpose());
}

}  // namespace detail

inline NlpResult solve_nlp(const Nlp& nlp, const VectorXd& z_init,
                           const NlpOptions& opts = {}) {
  using detail::kInf;
  const int n = nlp.n;
  const int me = nlp.m_eq;
  const int mi = nlp.m_in;

  NlpResult res;
  res.status = NlpStatus::MaxIter;

  VectorXd lb = nlp.lb.size() == n ? nlp.lb : VectorXd::Constant(n, -kInf);
  VectorXd ub = nlp.ub.size() == n ? nlp.ub : VectorXd::Constant(n, kInf);

  // --- initial point: push strictly inside the bounds -----------------------
  const double push =
      opts.bound_push >= 0.0
          ? opts.bound_push
          : std::min(1e-2, std::max(1e-9, 1e-2 * opts.mu_init));
  VectorXd z = z_init.size() == n ? z_init : nlp.z0;
  for (int i = 0; i < n; ++i) {
    if (std::isfinite(lb[i]) && std::isfinite(ub[i])) {
      const double pad = std::min(push * std::max(1.0, std::abs(lb[i])),
                                  1e-2 * (ub[i] - lb[i]));
      z[i] = std::min(std::max(z[i], lb[i] + pad), ub[i] - pad);
    } else if (std::isfinite(lb[i])) {
      z[i] = std::max(z[i], lb[i] + push * std::max(1.0, std::abs(lb[i])));
    } else if (std::isfinite(ub[i])) {
      z[i] = std::min(z[i], ub[i] - push * std::max(1.0, std::abs(ub[i])));
    }
  }

  double mu = opts.mu_init;

  VectorXd g_in = mi > 0 ? nlp.g_in(z) : VectorXd();
  if (mi > 0 && !g_in.allFinite()) {
    res.message = "inequalities non-finite at the initial point";
    return res;
  }
  VectorXd s(mi);
  for (int i = 0; i < mi; ++i) s[i] = std::max(g_in[i], push);

  VectorXd y_eq = VectorXd::Zero(me);
  VectorXd y_in(mi);
  for (int i = 0; i < mi; ++i) y_in[i] = mu / s[i];
  VectorXd zL = VectorXd::Zero(n), zU = VectorXd::Zero(n);
  for (int i = 0; i < n; ++i) {
    if (std::isfinite(lb[i])) zL[i] = mu / (z[i] - lb[i]);
    if (std::isfinite(ub[i])) zU[i] = mu / (ub[i] - z[i]);
  }

  double delta_w_last = 0.0;
  double rho = 1.0;  // l1 penalty weight in the merit function
  int consecutive_ls_failures = 0;

  const double kappa_sigma = 1e10;
  const double kappa_eps = 10.0;

  auto barrier_phi = [&](const VectorXd& zz, const VectorXd& ss,
                         double& theta_out) -> double {
    double fv = nlp.f(zz);
    double phi = fv;
    for (int i = 0; i < n; ++i) {
      if (std::isfinite(lb[i])) {
        const double d = zz[i] - lb[i];
        if (d <= 0.0) return kInf;
        phi -= mu * std::log(d);
      }
      if (std::isfinite(ub[i])) {
        const double d = ub[i] - zz[i];
        if (d <= 0.0) return kInf;
        phi -= mu * std::log(d);
      }
    }
    for (int i = 0; i < mi; ++i) {
      if (ss[i] <= 0.0) return kInf;
      phi -= mu * std::log(ss[i]);
    }
    double theta = 0.0;
    if (me > 0) theta += nlp.g_eq(zz).cwiseAbs().sum();
    if (mi > 0) theta += (nlp.g_in(zz) - ss).cwiseAbs().sum();
    theta_out = theta;
    if (!std::isfinite(phi) || !std::isfinite(theta)) return kInf;
    return phi + rho * theta;
  };

  for (int iter = 0; iter < opts.max_iter; ++iter) {
    res.iters = iter + 1;

    const double fv = nlp.f(z);
    VectorXd grad = nlp.grad(z);
    VectorXd geq = me > 0 ? nlp.g_eq(z) : VectorXd();
    g_in = mi > 0 ? nlp.g_in(z) : VectorXd();
    MatrixXd Jeq = me > 0 ? nlp.J_eq(z) : MatrixXd(0, n);
    MatrixXd Jin = mi > 0 ? nlp.J_in(z) : MatrixXd(0, n);
    if (!grad.allFinite() || (me > 0 && !(geq.allFinite() && Jeq.allFinite())) ||
        (mi > 0 && !(g_in.allFinite() && Jin.allFinite()))) {
      res.message = "non-finite derivatives";
      res.status = NlpStatus::Singular;
      break;
    }

    // --- residuals ---------------------------------------------------------
    VectorXd r_d = grad - zL + zU;
    if (me > 0) r_d -= Jeq.transpose() * y_eq;
    if (mi > 0) r_d -= Jin.transpose() * y_in;
    VectorXd r_pI = mi > 0 ? VectorXd(g_in - s) : VectorXd();

    double mult_sum = y_eq.cwiseAbs().sum() + y_in.cwiseAbs().sum() +
                      zL.cwiseAbs().sum() + zU.cwiseAbs().sum();
    int mult_cnt = me + mi + 2 * n;
    const double s_max = 100.0;
    const double sd = std::max(s_max, mult_sum / std::max(1, mult_cnt)) / s_max;

    auto comp_err = [&](double mu_ref) {
      double e = 0.0;
      for (int i = 0; i < mi; ++i) e = std::max(e, std::abs(s[i] * y_in[i] - mu_ref));
      for (int i = 0; i < n; ++i) {
        if (std::isfinite(lb[i]))
          e = std::max(e, std::abs((z[i] - lb[i]) * zL[i] - mu_ref));
        if (std::isfinite(ub[i]))
          e = std::max(e, std::abs((ub[i] - z[i]) * zU[i] - mu_ref));
      }
      return e;
    };

    const double feas = std::max(me > 0 ? geq.cwiseAbs().maxCoeff() : 0.0,
                                 mi > 0 ? r_pI.cwiseAbs().maxCoeff() : 0.0);
    const double e0 = std::max({r_d.cwiseAbs().maxCoeff() / sd, feas, comp_err(0.0) / sd});
    const double emu = std::max({r_d.cwiseAbs().maxCoeff() / sd, feas, comp_err(mu) / sd});

    res.kkt_residual = e0;
    res.constraint_violation = feas;
    if (opts.verbose)
      std::printf("  nlp it %3d  mu %8.1e  E0 %9.2e  Emu %9.2e  f %12.5e\n", iter,
                  mu, e0, emu, fv);

    if (e0 <= opts.tol) {
      res.status = NlpStatus::Success;
      break;
    }
    if (emu <= kappa_eps * mu && mu > opts.mu_min) {
      mu = std::max(opts.mu_min, std::min(0.2 * mu, std::pow(mu, 1.5)));
      // Keep the duals compatible with the new barrier parameter.
      for (int i = 0; i < mi; ++i)
        y_in[i] = std::min(std::max(y_in[i], mu / (kappa_sigma * s[i])),
                           kappa_sigma * mu / s[i]);
      for (int i = 0; i < n; ++i) {
        if (std::isfinite(lb[i]))
          zL[i] = std::min(std::max(zL[i], mu / (kappa_sigma * (z[i] - lb[i]))),
                           kappa_sigma * mu / (z[i] - lb[i]));
        if (std::isfinite(ub[i]))
          zU[i] = std::min(std::max(zU[i], mu / (kappa_sigma * (ub[i] - z[i]))),
                           kappa_sigma * mu / (ub[i] - z[i]));
      }
      continue;
    }

    // --- Hessian of the Lagrangian ------------------------------------------
    MatrixXd W = nlp.lag_hess ? nlp.lag_hess(z, 1.0, y_eq, y_in)
                              : detail::fd_lagrangian_hessian(nlp, z, y_eq, y_in);
    if (!W.allFinite()) {
      res.message = "non-finite Hessian";
      res.status = NlpStatus::Singular;
      break;
    }

    VectorXd sigma_b = VectorXd::Zero(n);  // bound-barrier curvature
    VectorXd mu_over_dL = VectorXd::Zero(n), mu_over_dU = VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
      if (std::isfinite(lb[i])) {
        const double d = z[i] - lb[i];
        sigma_b[i] += zL[i] / d;
        mu_over_dL[i] = mu / d;
      }
      if (std::isfinite(ub[i])) {
        const double d = ub[i] - z[i];
        sigma_b[i] += zU[i] / d;
        mu_over_dU[i] = mu / d;
      }
    }
    VectorXd sigma_s(mi);
    for (int i = 0; i < mi; ++i) sigma_s[i] = y_in[i] / s[i];

    // rhs of the condensed system (see header comment):
    //   -(grad - Jeq' y_eq + Jin'(-mu/s + sigma_s .* r_pI) - mu/dL + mu/dU)
    VectorXd rhs1 = grad - mu_over_dL + mu_over_dU;
    if (me > 0) rhs1 -= Jeq.transpose() * y_eq;
    if (mi > 0) {
      VectorXd tmp(mi);
      for (int i = 0; i < mi; ++i) tmp[i] = -mu / s[i] + sigma_s[i] * r_pI[i];
      rhs1 += Jin.transpose() * tmp;
    }
    rhs1 = -rhs1;

    // --- factor with escalating regularization ------------------------------
    VectorXd dz(n), dy_eq(me);
    double delta_w = 0.0;
    bool factored = false;
    for (int attempt = 0; attempt < 40 && !factored; ++attempt) {
      MatrixXd H = W;
      H.diagonal() += sigma_b;
      if (mi > 0) H += Jin.transpose() * sigma_s.asDiagonal() * Jin;
      if (delta_w > 0.0) H.diagonal().array() += delta_w;

      Eigen::LLT<MatrixXd> llt(H);
      bool ok = llt.info() == Eigen::Success;
      if (ok) {
        if (me > 0) {
          MatrixXd HiJt = llt.solve(Jeq.transpose());
          MatrixXd K = Jeq * HiJt;
          K.diagonal().array() += opts.delta_c;
          Eigen::LLT<MatrixXd> lltK(K);
          if (lltK.info() == Eigen::Success) {
            dy_eq = lltK.solve(-geq - HiJt.transpose() * rhs1);
            dz = llt.solve(rhs1 + Jeq.transpose() * dy_eq);
          } else {
            ok = false;
          }
        } else {
          dz = llt.solve(rhs1);
        }
        if (ok && !dz.allFinite()) ok = false;
      }
      if (ok) {
        factored = true;
      } else {
        delta_w = delta_w == 0.0 ? std::max(1e-8, delta_w_last * 0.1)
                                 : delta_w * 10.0;
        if (delta_w > opts.delta_w_max) {
          res.message = "KKT factorization failed at maximum regularization";
          res.status = NlpStatus::Singular;
          res.z = z;
          res.f = nlp.f(z);
          return res;
        }
      }
    }
    if (!factored) {
      res.message = "KKT factorization failed";
      res.status = NlpStatus::Singular;
      break;
    }
    delta_w_last = delta_w;

    VectorXd ds, dy_in;
    if (mi > 0) {
      ds = Jin * dz + r_pI;
      dy_in.resize(mi);
      for (int i = 0; i < mi; ++i)
        dy_in[i] = mu / s[i] - y_in[i] - sigma_s[i] * ds[i];
    }
    VectorXd dzL = VectorXd::Zero(n), dzU = VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
      if (std::isfinite(lb[i])) {
        const double d = z[i] - lb[i];
        dzL[i] = mu / d - zL[i] - zL[i] / d * dz[i];
      }
      if (std::isfinite(ub[i])) {
        const double d = ub[i] - z[i];
        dzU[i] = mu / d - zU[i] + zU[i] / d * dz[i];
      }
    }

    // --- fraction to boundary ------------------------------------------------
    const double tau = std::max(0.99, 1.0 - mu);
    double a_pr = 1.0, a_du = 1.0;
    for (int i = 0; i < mi; ++i)
      if (ds[i] < 0.0) a_pr = std::min(a_pr, -tau * s[i] / ds[i]);
    for (int i = 0; i < n; ++i) {
      if (std::isfinite(lb[i]) && dz[i] < 0.0)
        a_pr = std::min(a_pr, -tau * (z[i] - lb[i]) / dz[i]);
      if (std::isfinite(ub[i]) && dz[i] > 0.0)
        a_pr = std::min(a_pr, tau * (ub[i] - z[i]) / dz[i]);
    }
    for (int i = 0; i < mi; ++i)
      if (dy_in[i] < 0.0) a_du = std::min(a_du, -tau * y_in[i] / dy_in[i]);
    for (int i = 0; i < n; ++i) {
      if (std::isfinite(lb[i]) && dzL[i] < 0.0)
        a_du = std::min(a_du, -tau * zL[i] / dzL[i]);
      if (std::isfinite(ub[i]) && dzU[i] < 0.0)
        a_du = std::min(a_du, -tau * zU[i] / dzU[i]);
    }

    // --- merit line search ----------------------------------------------------
    double theta0 = 0.0;
    const double phi0 = barrier_phi(z, s, theta0);
    double dd_barrier = grad.dot(dz);
    for (int i = 0; i < n; ++i) {
      if (std::isfinite(lb[i])) dd_barrier -= mu / (z[i] - lb[i]) * dz[i];
      if (std::isfinite(ub[i])) dd_barrier += mu / (ub[i] - z[i]) * dz[i];
    }
    for (int i = 0; i < mi; ++i) dd_barrier -= mu / s[i] * ds[i];
    if (theta0 > 1e-14)
      rho = std::min(1e10, std::max(rho, 2.0 * std::abs(dd_barrier) / theta0 + 1e-6));
    const double dd = dd_barrier - rho * theta0;

    double alpha = a_pr;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      VectorXd z_try = z + alpha * dz;
      VectorXd s_try = mi > 0 ? VectorXd(s + alpha * ds) : s;
      double theta_try = 0.0;
      const double phi_try = barrier_phi(z_try, s_try, theta_try);
      if (std::isfinite(phi_try) &&
          (phi_try <= phi0 + 1e-4 * alpha * std::min(dd, 0.0) ||
           (dd >= 0.0 && phi_try <= phi0 + 1e-12 * std::abs(phi0)))) {
        z = z_try;
        s = s_try;
        accepted = true;
        break;
      }
      alpha *= 0.5;
      if (alpha < 1e-12) break;
    }

    if (!accepted) {
      ++consecutive_ls_failures;
      if (consecutive_ls_failures >= 3) {
        res.message = "line search stalled";
        break;  // MaxIter-style exit with best point so far
      }
      delta_w_last = std::max(10.0 * std::max(delta_w_last, 1e-8), 1e-4);
      continue;  // recompute direction with stronger regularization
    }
    consecutive_ls_failures = 0;

    y_eq += alpha * dy_eq;
    if (mi > 0) y_in += a_du * dy_in;
    zL += a_du * dzL;
    zU += a_du * dzU;

    // Safeguard: keep bound duals within a large window of mu/d.
    for (int i = 0; i < mi; ++i)
      y_in[i] = std::min(std::max(y_in[i], mu / (kappa_sigma * s[i])),
                         kappa_sigma * mu / s[i]);
    for (int i = 0; i < n; ++i) {
      if (std::isfinite(lb[i])) {
        const double d = z[i] - lb[i];
        zL[i] = std::min(std::max(zL[i], mu / (kappa_sigma * d)), kappa_sigma * mu / d);
      }
      if (std::isfinite(ub[i])) {
        const double d = ub[i] - z[i];
        zU[i] = std::min(std::max(zU[i], mu / (kappa_sigma * d)), kappa_sigma * mu / d);
      }
    }
  }

  res.z = z;
  res.s = s;
  res.y_eq = y_eq;
  res.y_in = y_in;
  res.z_lb = zL;
  res.z_ub = zU;
  res.f = nlp.f(z);
  if (res.status != NlpStatus::Success && res.message.empty())
    res.message = "iteration limit reached";
  return res;
}

}  // namespace sweepds
