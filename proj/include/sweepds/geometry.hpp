#pragma once

// Finitely defined time-varying sets C(t) = {x : c(x,t) >= 0}, active sets,
// LICQ tests, orthonormal subspace bases, and the clock-state lifting that
// turns a sweeping process with moving set into an autonomous projected
// system.

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "sweepds/errors.hpp"
#include "sweepds/expr.hpp"

namespace sweepds {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Variable id layout shared by all expression-backed callbacks:
// state x -> ids 0..n_x-1, time t -> id n_x, controls u -> ids n_x+1..n_x+n_u.
inline int time_var_id(int n_x) { return n_x; }
inline int control_var_id(int n_x, int j) { return n_x + 1 + j; }

struct ActiveSet {
  std::vector<int> indices;  // 0-based, strictly increasing
  double tolerance = 1e-9;

  bool contains(int i) const {
    return std::binary_search(indices.begin(), indices.end(), i);
  }
  int size() const { return static_cast<int>(indices.size()); }
  bool operator==(const ActiveSet& o) const { return indices == o.indices; }
};

// ---------------------------------------------------------------------------

struct TimeVaryingSet {
  int n_x = 0;
  int n_c = 0;
  std::function<VectorXd(const VectorXd&, double)> c;
  std::function<MatrixXd(const VectorXd&, double)> grad_x_c;  // n_x x n_c
  std::function<VectorXd(const VectorXd&, double)> dt_c;

  // Present when the set was built from expressions; required by the FESD
  // assembly, which substitutes stage variables into these.
  std::vector<expr::Expr> c_sym;

  bool symbolic() const { return !c_sym.empty() || n_c == 0; }

  VectorXd eval_c(const VectorXd& x, double t) const {
    VectorXd v = c(x, t);
    if (!v.allFinite())
      throw EvaluationError("constraint function evaluated to a non-finite value");
    return v;
  }
  MatrixXd eval_grad(const VectorXd& x, double t) const {
    MatrixXd g = grad_x_c(x, t);
    if (!g.allFinite())
      throw EvaluationError("constraint Jacobian evaluated to a non-finite value");
    return g;
  }
  VectorXd eval_dt(const VectorXd& x, double t) const {
    VectorXd v = dt_c(x, t);
    if (!v.allFinite())
      throw EvaluationError("constraint time derivative evaluated to a non-finite value");
    return v;
  }
};

// Builds a set from constraint expressions over [x(0..n_x-1), t(n_x)].
inline TimeVaryingSet make_set_exprs(int n_x, std::vector<expr::Expr> c_exprs) {
  TimeVaryingSet s;
  s.n_x = n_x;
  s.n_c = static_cast<int>(c_exprs.size());
  s.c_sym = std::move(c_exprs);

  const int n_in = n_x + 1;
  std::vector<expr::Expr> grads;  // column-major: grad of c_j wrt x_i
  std::vector<expr::Expr> dts;
  for (const auto& e : s.c_sym) {
    for (int i = 0; i < n_x; ++i) grads.push_back(expr::diff(e, i));
    dts.push_back(expr::diff(e, time_var_id(n_x)));
  }
  auto tape_c = std::make_shared<expr::Tape>(expr::Tape::compile(s.c_sym, n_in));
  auto tape_g = std::make_shared<expr::Tape>(expr::Tape::compile(grads, n_in));
  auto tape_dt = std::make_shared<expr::Tape>(expr::Tape::compile(dts, n_in));

  const int n_c = s.n_c;
  s.c = [tape_c, n_x, n_c](const VectorXd& x, double t) {
    std::vector<double> in(static_cast<std::size_t>(n_x) + 1);
    Eigen::Map<VectorXd>(in.data(), n_x) = x;
    in[static_cast<std::size_t>(n_x)] = t;
    VectorXd out(n_c);
    std::vector<double> work;
    tape_c->eval(in, {out.data(), static_cast<std::size_t>(n_c)}, work);
    return out;
  };
  s.grad_x_c = [tape_g, n_x, n_c](const VectorXd& x, double t) {
    std::vector<double> in(static_cast<std::size_t>(n_x) + 1);
    Eigen::Map<VectorXd>(in.data(), n_x) = x;
    in[static_cast<std::size_t>(n_x)] = t;
    VectorXd flat(static_cast<Eigen::Index>(n_x) * n_c);
    std::vector<double> work;
    tape_g->eval(in, {flat.data(), static_cast<std::size_t>(flat.size())}, work);
    MatrixXd g(n_x, n_c);
    for (int j = 0; j < n_c; ++j)
      g.col(j) = flat.segment(static_cast<Eigen::Index>(j) * n_x, n_x);
    return g;
  };
  s.dt_c = [tape_dt, n_x, n_c](const VectorXd& x, double t) {
    std::vector<double> in(static_cast<std::size_t>(n_x) + 1);
    Eigen::Map<VectorXd>(in.data(), n_x) = x;
    in[static_cast<std::size_t>(n_x)] = t;
    VectorXd out(n_c);
    std::vector<double> work;
    tape_dt->eval(in, {out.data(), static_cast<std::size_t>(n_c)}, work);
    return out;
  };
  return s;
}

inline TimeVaryingSet make_set(int n_x, const std::vector<std::string>& c_strs) {
  std::vector<expr::Expr> exprs;
  exprs.reserve(c_strs.size());
  auto names = expr::standard_names(n_x, /*allow_t=*/true, /*n_u=*/0);
  for (const auto& s : c_strs) exprs.push_back(expr::parse(s, names));
  return make_set_exprs(n_x, std::move(exprs));
}

// Checks a user-supplied analytic Jacobian against central differences at the
// given points. Relative tolerance 1e-5.
inline void validate_set_jacobians(const TimeVaryingSet& set,
                                   const std::vector<std::pair<VectorXd, double>>& pts,
                                   double rel_tol = 1e-5) {
  for (const auto& [x, t] : pts) {
    MatrixXd g = set.eval_grad(x, t);
    for (int i = 0; i < set.n_x; ++i) {
      double h = 1e-6 * std::max(1.0, std::abs(x[i]));
      VectorXd xp = x, xm = x;
      xp[i] += h;
      xm[i] -= h;
      VectorXd fd = (set.eval_c(xp, t) - set.eval_c(xm, t)) / (2.0 * h);
      for (int j = 0; j < set.n_c; ++j) {
        double ref = std::max({1.0, std::abs(fd[j]), std::abs(g(i, j))});
        if (std::abs(fd[j] - g(i, j)) > rel_tol * ref)
          throw EvaluationError(
              "constraint Jacobian disagrees with finite differences (entry " +
              std::to_string(i) + "," + std::to_string(j) + ")");
      }
    }
    double ht = 1e-6 * std::max(1.0, std::abs(t));
    VectorXd fd_t = (set.eval_c(x, t + ht) - set.eval_c(x, t - ht)) / (2.0 * ht);
    VectorXd dt = set.eval_dt(x, t);
    for (int j = 0; j < set.n_c; ++j) {
      double ref = std::max({1.0, std::abs(fd_t[j]), std::abs(dt[j])});
      if (std::abs(fd_t[j] - dt[j]) > rel_tol * ref)
        throw EvaluationError("constraint time derivative disagrees with finite differences");
    }
  }
}

// ---------------------------------------------------------------------------

struct SubspaceBasis {
  MatrixXd E;       // n x n'
  MatrixXd E_perp;  // n x (n - n')

  int n() const { return static_cast<int>(E.rows()); }
  int dim() const { return static_cast<int>(E.cols()); }

  static SubspaceBasis full(int n) {
    SubspaceBasis b;
    b.E = MatrixXd::Identity(n, n);
    b.E_perp = MatrixXd(n, 0);
    return b;
  }

  static SubspaceBasis selection(int n, const std::vector<int>& idx) {
    SubspaceBasis b;
    b.E = MatrixXd::Zero(n, static_cast<Eigen::Index>(idx.size()));
    std::vector<bool> in(static_cast<std::size_t>(n), false);
    for (std::size_t k = 0; k < idx.size(); ++k) {
      b.E(idx[k], static_cast<Eigen::Index>(k)) = 1.0;
      in[static_cast<std::size_t>(idx[k])] = true;
    }
    b.E_perp = MatrixXd::Zero(n, n - static_cast<Eigen::Index>(idx.size()));
    Eigen::Index col = 0;
    for (int i = 0; i < n; ++i)
      if (!in[static_cast<std::size_t>(i)]) b.E_perp(i, col++) = 1.0;
    return b;
  }

  // Basis of Theorem-2 form: span of the first n_x canonical vectors of
  // R^{n_x+1}; the complement is the clock direction.
  static SubspaceBasis clock_lift(int n_x) {
    std::vector<int> idx(static_cast<std::size_t>(n_x));
    for (int i = 0; i < n_x; ++i) idx[static_cast<std::size_t>(i)] = i;
    return selection(n_x + 1, idx);
  }

  void validate(double tol = 1e-12) const {
    const Eigen::Index np = E.cols();
    const Eigen::Index nq = E_perp.cols();
    if (E.rows() != E_perp.rows() || np + nq != E.rows())
      throw Error("SubspaceBasis: inconsistent dimensions");
    if ((E.transpose() * E - MatrixXd::Identity(np, np)).cwiseAbs().maxCoeff() > tol)
      throw Error("SubspaceBasis: E columns not orthonormal");
    if (nq > 0) {
      if ((E_perp.transpose() * E_perp - MatrixXd::Identity(nq, nq)).cwiseAbs().maxCoeff() > tol)
        throw Error("SubspaceBasis: E_perp columns not orthonormal");
      if (np > 0 && (E.transpose() * E_perp).cwiseAbs().maxCoeff() > tol)
        throw Error("SubspaceBasis: E and E_perp not orthogonal");
    }
  }

  MatrixXd projector() const { return E * E.transpose(); }
};

// ---------------------------------------------------------------------------

struct FoswpProblem {
  int n_x = 0;
  int n_u = 0;
  std::function<VectorXd(const VectorXd&, const VectorXd&)> f;
  std::function<MatrixXd(const VectorXd&, const VectorXd&)> jac_x_f;  // n_x x n_x
  std::function<MatrixXd(const VectorXd&, const VectorXd&)> jac_u_f;  // n_x x n_u
  TimeVaryingSet set;
  VectorXd x0;
  std::vector<expr::Expr> f_sym;  // over [x, t(unused), u] ids
  std::vector<std::string> warnings;

  bool symbolic() const { return !f_sym.empty() && set.symbolic(); }
};

namespace detail {

// Compiles dynamics callbacks from expressions over [x, t, u] layout.
inline void attach_dynamics_callbacks(int n_x, int n_u,
                                      const std::vector<expr::Expr>& f_sym,
                                      std::function<VectorXd(const VectorXd&, const VectorXd&)>& f,
                                      std::function<MatrixXd(const VectorXd&, const VectorXd&)>& jx,
                                      std::function<MatrixXd(const VectorXd&, const VectorXd&)>& ju) {
  const int n_in = n_x + 1 + n_u;
  std::vector<expr::Expr> jx_entries, ju_entries;
  for (const auto& e : f_sym) {
    for (int i = 0; i < n_x; ++i) jx_entries.push_back(expr::diff(e, i));
    for (int j = 0; j < n_u; ++j)
      ju_entries.push_back(expr::diff(e, control_var_id(n_x, j)));
  }
  auto tf = std::make_shared<expr::Tape>(expr::Tape::compile(f_sym, n_in));
  auto tjx = std::make_shared<expr::Tape>(expr::Tape::compile(jx_entries, n_in));
  auto tju = std::make_shared<expr::Tape>(expr::Tape::compile(ju_entries, n_in));

  auto pack = [n_x, n_u](const VectorXd& x, const VectorXd& u) {
    std::vector<double> in(static_cast<std::size_t>(n_x + 1 + n_u), 0.0);
    Eigen::Map<VectorXd>(in.data(), n_x) = x;
    if (n_u > 0) Eigen::Map<VectorXd>(in.data() + n_x + 1, n_u) = u;
    return in;
  };

  f = [tf, pack, n_x](const VectorXd& x, const VectorXd& u) {
    auto in = pack(x, u);
    VectorXd out(n_x);
    std::vector<double> work;
    tf->eval(in, {out.data(), static_cast<std::size_t>(n_x)}, work);
    return out;
  };
  jx = [tjx, pack, n_x](const VectorXd& x, const VectorXd& u) {
    auto in = pack(x, u);
    VectorXd flat(static_cast<Eigen::Index>(n_x) * n_x);
    std::vector<double> work;
    tjx->eval(in, {flat.data(), static_cast<std::size_t>(flat.size())}, work);
    MatrixXd g(n_x, n_x);
    for (int r = 0; r < n_x; ++r) g.row(r) = flat.segment(static_cast<Eigen::Index>(r) * n_x, n_x).transpose();
    return g;
  };
  ju = [tju, pack, n_x, n_u](const VectorXd& x, const VectorXd& u) {
    auto in = pack(x, u);
    MatrixXd g(n_x, n_u);
    if (n_u > 0) {
      VectorXd flat(static_cast<Eigen::Index>(n_x) * n_u);
      std::vector<double> work;
      tju->eval(in, {flat.data(), static_cast<std::size_t>(flat.size())}, work);
      for (int r = 0; r < n_x; ++r)
        g.row(r) = flat.segment(static_cast<Eigen::Index>(r) * n_u, n_u).transpose();
    }
    return g;
  };
}

}  // namespace detail

// Builds a sweeping-process problem from expression strings.
inline FoswpProblem make_foswp(int n_x, int n_u,
                               const std::vector<std::string>& f_strs,
                               const std::vector<std::string>& c_strs,
                               const VectorXd& x0, double eps_act = 1e-9) {
  if (static_cast<int>(f_strs.size()) != n_x)
    throw AssemblyError("make_foswp: need n_x dynamics expressions");
  FoswpProblem p;
  p.n_x = n_x;
  p.n_u = n_u;
  auto fnames = expr::standard_names(n_x, /*allow_t=*/false, n_u);
  for (const auto& s : f_strs) p.f_sym.push_back(expr::parse(s, fnames));
  detail::attach_dynamics_callbacks(n_x, n_u, p.f_sym, p.f, p.jac_x_f, p.jac_u_f);
  p.set = make_set(n_x, c_strs);
  p.x0 = x0;
  if (p.set.n_c > 0) {
    VectorXd c0 = p.set.eval_c(x0, 0.0);
    if ((c0.array() < -eps_act).any())
      p.warnings.push_back("initial state violates c(x0,0) >= 0 by " +
                           std::to_string(-c0.minCoeff()));
  }
  return p;
}

// ---------------------------------------------------------------------------
// Operations.

inline ActiveSet active_set(const TimeVaryingSet& set, const VectorXd& x, double t,
                            double eps) {
  ActiveSet a;
  a.tolerance = eps;
  VectorXd cv = set.eval_c(x, t);
  for (int i = 0; i < set.n_c; ++i)
    if (cv[i] <= eps) a.indices.push_back(i);
  return a;
}

inline bool licq_holds(const TimeVaryingSet& set, const VectorXd& x, double t,
                       const ActiveSet& active, double rank_tol = 1e-8) {
  if (active.indices.empty()) return true;
  MatrixXd g = set.eval_grad(x, t);
  MatrixXd ga(set.n_x, active.size());
  for (int k = 0; k < active.size(); ++k)
    ga.col(k) = g.col(active.indices[static_cast<std::size_t>(k)]);
  Eigen::JacobiSVD<MatrixXd> svd(ga);
  const auto& sv = svd.singularValues();
  if (sv.size() < active.size()) return false;  // more constraints than dims
  return sv(sv.size() - 1) > rank_tol * sv(0);
}

// ---------------------------------------------------------------------------
// Clock-state lifting (moving set -> autonomous system on y = (x, tau)).

struct DcsProblem {
  int n_x = 0;  // state dimension (lifted when `lifted`)
  int n_u = 0;
  std::function<VectorXd(const VectorXd&, const VectorXd&)> f;
  std::function<MatrixXd(const VectorXd&, const VectorXd&)> jac_x_f;
  std::function<MatrixXd(const VectorXd&, const VectorXd&)> jac_u_f;
  TimeVaryingSet set;  // over the (possibly lifted) state
  SubspaceBasis basis;
  VectorXd x0;
  std::vector<expr::Expr> f_sym;
  bool lifted = false;
  int physical_nx = 0;  // original state dimension when lifted

  bool symbolic() const { return !f_sym.empty() && set.symbolic(); }
};

// Wraps a time-independent projected system directly (no lifting).
inline DcsProblem make_dcs(const TimeVaryingSet& set, SubspaceBasis basis,
                           std::function<VectorXd(const VectorXd&, const VectorXd&)> f,
                           int n_u = 0, VectorXd x0 = VectorXd()) {
  DcsProblem p;
  p.n_x = set.n_x;
  p.n_u = n_u;
  p.f = std::move(f);
  p.set = set;
  p.basis = std::move(basis);
  p.x0 = std::move(x0);
  p.physical_nx = p.n_x;
  p.basis.validate(1e-10);
  return p;
}

inline DcsProblem lift_clock(const FoswpProblem& p) {
  DcsProblem q;
  q.lifted = true;
  q.physical_nx = p.n_x;
  q.n_x = p.n_x + 1;
  q.n_u = p.n_u;
  q.basis = SubspaceBasis::clock_lift(p.n_x);

  // The lifted constraint \hat c(y) = c(x, tau) reuses the original
  // expressions unchanged: under the [x, t, u] id layout the time slot of the
  // original set is exactly the clock coordinate of the lifted state.
  TimeVaryingSet& s = q.set;
  s.n_x = q.n_x;
  s.n_c = p.set.n_c;
  s.c_sym = p.set.c_sym;
  const TimeVaryingSet base = p.set;
  const int nx = p.n_x;
  s.c = [base, nx](const VectorXd& y, double) {
    return base.c(y.head(nx), y[nx]);
  };
  s.grad_x_c = [base, nx](const VectorXd& y, double) {
    MatrixXd g(nx + 1, base.n_c);
    g.topRows(nx) = base.grad_x_c(y.head(nx), y[nx]);
    g.row(nx) = base.dt_c(y.head(nx), y[nx]).transpose();
    return g;
  };
  const int ncc = p.set.n_c;
  s.dt_c = [ncc](const VectorXd&, double) { return VectorXd::Zero(ncc).eval(); };

  // Lifted dynamics (f(x,u), 1). Control ids shift by one because the lifted
  // state claims one more slot.
  if (!p.f_sym.empty()) {
    for (const auto& e : p.f_sym) {
      q.f_sym.push_back(expr::substitute(e, [nx](int id) {
        return expr::Expr::var(id >= nx + 1 ? id + 1 : id);
      }));
    }
    q.f_sym.push_back(expr::Expr(1.0));
  }
  const auto f0 = p.f;
  q.f = [f0, nx](const VectorXd& y, const VectorXd& u) {
    VectorXd out(nx + 1);
    out.head(nx) = f0(y.head(nx), u);
    out[nx] = 1.0;
    return out;
  };
  if (p.jac_x_f) {
    const auto jx0 = p.jac_x_f;
    q.jac_x_f = [jx0, nx](const VectorXd& y, const VectorXd& u) {
      MatrixXd j = MatrixXd::Zero(nx + 1, nx + 1);
      j.topLeftCorner(nx, nx) = jx0(y.head(nx), u);
      return j;
    };
  }
  if (p.jac_u_f) {
    const auto ju0 = p.jac_u_f;
    const int nu = p.n_u;
    q.jac_u_f = [ju0, nx, nu](const VectorXd& y, const VectorXd& u) {
      MatrixXd j = MatrixXd::Zero(nx + 1, nu);
      j.topRows(nx) = ju0(y.head(nx), u);
      return j;
    };
  }

  q.x0 = VectorXd(q.n_x);
  if (p.x0.size() == p.n_x) {
    q.x0.head(p.n_x) = p.x0;
    q.x0[p.n_x] = 0.0;
  }
  return q;
}

}  // namespace sweepds
