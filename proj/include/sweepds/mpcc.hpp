#pragma once

// Mathematical programs with complementarity constraints, their Scholtes
// relaxation, and the homotopy loop that drives the relaxation parameter to
// the complementarity tolerance.
//
// Problems are carried in two coupled forms. MpccProblem is the callback
// contract (dense Jacobians, plain std::function). When a problem is
// assembled symbolically (SymbolicMpcc), a compiled bundle of evaluation
// tapes backs those callbacks and additionally provides the exact Lagrangian
// Hessian, which the interior-point solver needs on anything but toy sizes.

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "sweepds/errors.hpp"
#include "sweepds/expr.hpp"
#include "sweepds/nlp.hpp"

namespace sweepds {

struct HomotopySchedule {
  double sigma0 = 1.0;
  double kappa = 0.1;
  double comp_tol = 1e-10;
  int max_outer = 12;

  void validate() const {
    if (!(kappa > 0.0 && kappa < 1.0))
      throw AssemblyError("homotopy schedule: kappa must lie in (0,1)");
    if (!(comp_tol > 0.0)) throw AssemblyError("homotopy schedule: comp_tol must be positive");
    if (!(sigma0 >= comp_tol))
      throw AssemblyError("homotopy schedule: sigma0 must be >= comp_tol");
    if (max_outer < 1) throw AssemblyError("homotopy schedule: max_outer must be >= 1");
  }
};

// ---------------------------------------------------------------------------

struct SymbolicMpcc {
  int n = 0;  // decision variables are expr ids 0..n-1; id n is sigma
  expr::Expr objective{0.0};
  std::vector<expr::Expr> eq;
  std::vector<expr::Expr> ineq;  // >= 0
  std::vector<std::pair<expr::Expr, expr::Expr>> comp;
  VectorXd z0, lb, ub;

  int sigma_id() const { return n; }
  expr::Expr sigma() const { return expr::Expr::var(n); }

  int new_var(double guess, double lo = -std::numeric_limits<double>::infinity(),
              double hi = std::numeric_limits<double>::infinity()) {
    const int id = n++;
    append(z0, guess);
    append(lb, lo);
    append(ub, hi);
    return id;
  }

 private:
  static void append(VectorXd& v, double x) {
    v.conservativeResize(v.size() + 1);
    v[v.size() - 1] = x;
  }
};

// ---------------------------------------------------------------------------
// Compiled evaluation bundle for a symbolic MPCC. Rows are ordered
// [objective, eq..., ineq_ext...] where ineq_ext is the Scholtes-relaxed
// inequality block: user inequalities, the non-variable pair sides (>= 0),
// and the products sigma - G_i H_i >= 0. Pair sides that are plain decision
// variables become simple lower bounds instead of rows.

class CompiledMpcc {
 public:
  explicit CompiledMpcc(const SymbolicMpcc& m) : n_(m.n), m_comp_((int)m.comp.size()) {
    lb_ = m.lb;
    ub_ = m.ub;

    std::vector<expr::Expr> rows;
    rows.push_back(m.objective);
    for (const auto& e : m.eq) rows.push_back(e);
    m_eq_ = static_cast<int>(m.eq.size());

    std::vector<expr::Expr> ineq_rows = m.ineq;
    std::unordered_map<const expr::Node*, bool> added;
    auto add_side = [&](const expr::Expr& e) {
      if (e.op() == expr::Op::Var && e.node()->var < n_) {
        double& lo = lb_[e.node()->var];
        lo = std::max(lo, 0.0);
        return;
      }
      if (e.is_const()) return;  // constant sides need no row
      if (added.emplace(e.node().get(), true).second) ineq_rows.push_back(e);
    };
    for (const auto& [g, h] : m.comp) {
      add_side(g);
      add_side(h);
    }
    for (const auto& [g, h] : m.comp) ineq_rows.push_back(m.sigma() - g * h);
    m_in_ = static_cast<int>(ineq_rows.size());
    for (const auto& e : ineq_rows) rows.push_back(e);

    const int n_in = n_ + 1;
    val_tape_ = expr::Tape::compile(rows, n_in);

    // Sparse gradients per row.
    std::vector<expr::Expr> grad_entries;
    row_var_.resize(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) {
      for (int v : expr::variables(rows[r])) {
        if (v >= n_) continue;  // sigma column is not a decision variable
        expr::Expr d = expr::diff(rows[r], v);
        if (d.is_const(0.0)) continue;
        row_var_[r].push_back(v);
        grad_entries.push_back(d);
      }
    }
    jac_tape_ = expr::Tape::compile(grad_entries, n_in);

    // Hessian atoms per row (upper triangle of each row's variable set).
    std::vector<expr::Expr> hess_entries;
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto& vars = row_var_[r];
      for (std::size_t a = 0; a < vars.size(); ++a) {
        expr::Expr da = expr::diff(rows[r], vars[a]);
        for (std::size_t b = a; b < vars.size(); ++b) {
          expr::Expr dab = expr::diff(da, vars[b]);
          if (dab.is_const(0.0)) continue;
          hess_rows_.push_back(static_cast<int>(r));
          hess_i_.push_back(vars[a]);
          hess_j_.push_back(vars[b]);
          hess_entries.push_back(dab);
        }
      }
    }
    hess_tape_ = expr::Tape::compile(hess_entries, n_in);

    // Complementarity pair tapes (for residual reporting).
    std::vector<expr::Expr> pair_exprs;
    for (const auto& [g, h] : m.comp) pair_exprs.push_back(g);
    for (const auto& [g, h] : m.comp) pair_exprs.push_back(h);
    pair_tape_ = expr::Tape::compile(pair_exprs, n_in);

    z0_ = m.z0;
  }

  int n() const { return n_; }
  int m_eq() const { return m_eq_; }
  int m_in() const { return m_in_; }
  int m_comp() const { return m_comp_; }
  const VectorXd& z0() const { return z0_; }
  const VectorXd& lb() const { return lb_; }
  const VectorXd& ub() const { return ub_; }

  struct Values {
    double obj = 0.0;
    VectorXd eq, in;
  };

  Values values(const VectorXd& z, double sigma) const {
    std::vector<double> in = pack(z, sigma);
    VectorXd out(1 + m_eq_ + m_in_);
    std::vector<double> work;
    val_tape_.eval(in, {out.data(), static_cast<std::size_t>(out.size())}, work);
    Values v;
    v.obj = out[0];
    v.eq = out.segment(1, m_eq_);
    v.in = out.segment(1 + m_eq_, m_in_);
    return v;
  }

  // Dense gradient of the objective and Jacobians of both constraint blocks.
  void derivatives(const VectorXd& z, double sigma, VectorXd& grad, MatrixXd& Jeq,
                   MatrixXd& Jin) const {
    std::vector<double> in = pack(z, sigma);
    VectorXd flat(static_cast<Eigen::Index>(jac_tape_.n_outputs()));
    std::vector<double> work;
    jac_tape_.eval(in, {flat.data(), static_cast<std::size_t>(flat.size())}, work);
    grad = VectorXd::Zero(n_);
    Jeq = MatrixXd::Zero(m_eq_, n_);
    Jin = MatrixXd::Zero(m_in_, n_);
    Eigen::Index k = 0;
    for (std::size_t r = 0; r < row_var_.size(); ++r) {
      for (int v : row_var_[r]) {
        const double val = flat[k++];
        if (r == 0)
          grad[v] = val;
        else if (static_cast<int>(r) <= m_eq_)
          Jeq(static_cast<Eigen::Index>(r) - 1, v) = val;
        else
          Jin(static_cast<Eigen::Index>(r) - 1 - m_eq_, v) = val;
      }
    }
  }

  // W = w_f H(obj) - sum y_eq_k H(eq_k) - sum y_in_k H(in_k).
  MatrixXd lagrangian_hessian(const VectorXd& z, double sigma, double w_f,
                              const VectorXd& y_eq, const VectorXd& y_in) const {
    std::vector<double> in = pack(z, sigma);
    VectorXd flat(static_cast<Eigen::Index>(hess_tape_.n_outputs()));
    std::vector<double> work;
    hess_tape_.eval(in, {flat.data(), static_cast<std::size_t>(flat.size())}, work);
    MatrixXd W = MatrixXd::Zero(n_, n_);
    for (std::size_t k = 0; k < hess_rows_.size(); ++k) {
      const int r = hess_rows_[k];
      double wgt;
      if (r == 0)
        wgt = w_f;
      else if (r <= m_eq_)
        wgt = -y_eq[r - 1];
      else
        wgt = -y_in[r - 1 - m_eq_];
      const double v = wgt * flat[static_cast<Eigen::Index>(k)];
      W(hess_i_[k], hess_j_[k]) += v;
      if (hess_i_[k] != hess_j_[k]) W(hess_j_[k], hess_i_[k]) += v;
    }
    return W;
  }

  void pair_values(const VectorXd& z, VectorXd& g, VectorXd& h) const {
    std::vector<double> in = pack(z, 0.0);
    VectorXd out(2 * m_comp_);
    std::vector<double> work;
    if (m_comp_ > 0)
      pair_tape_.eval(in, {out.data(), static_cast<std::size_t>(out.size())}, work);
    g = out.head(m_comp_);
    h = out.tail(m_comp_);
  }

 private:
  std::vector<double> pack(const VectorXd& z, double sigma) const {
    std::vector<double> in(static_cast<std::size_t>(n_) + 1);
    Eigen::Map<VectorXd>(in.data(), n_) = z;
    in[static_cast<std::size_t>(n_)] = sigma;
    return in;
  }

  int n_ = 0, m_eq_ = 0, m_in_ = 0, m_comp_ = 0;
  expr::Tape val_tape_, jac_tape_, hess_tape_, pair_tape_;
  std::vector<std::vector<int>> row_var_;
  std::vector<int> hess_rows_, hess_i_, hess_j_;
  VectorXd z0_, lb_, ub_;
};

// ---------------------------------------------------------------------------

struct MpccProblem {
  int n = 0;
  VectorXd z0, lb, ub;
  std::function<double(const VectorXd&)> objective;
  std::function<VectorXd(const VectorXd&)> grad_objective;
  int m_eq = 0, m_ineq = 0, m_comp = 0;
  std::function<VectorXd(const VectorXd&)> eq;      // = 0
  std::function<VectorXd(const VectorXd&)> ineq;    // >= 0
  std::function<MatrixXd(const VectorXd&)> jac_eq, jac_ineq;
  std::function<VectorXd(const VectorXd&)> comp_g, comp_h;
  std::function<MatrixXd(const VectorXd&)> jac_comp_g, jac_comp_h;

  std::shared_ptr<const CompiledMpcc> compiled;  // set for symbolic problems
};

// Builds the callback view over a symbolic MPCC. Values/Jacobians evaluated
// at sigma = 0 (sigma only enters the relaxed product rows, which are not
// part of the MPCC contract itself).
inline MpccProblem finalize(const SymbolicMpcc& m) {
  MpccProblem p;
  auto comp = std::make_shared<CompiledMpcc>(m);
  p.compiled = comp;
  p.n = m.n;
  p.z0 = m.z0;
  p.lb = comp->lb();
  p.ub = comp->ub();
  p.m_eq = static_cast<int>(m.eq.size());
  p.m_comp = static_cast<int>(m.comp.size());
  p.m_ineq = static_cast<int>(m.ineq.size());

  p.objective = [comp](const VectorXd& z) { return comp->values(z, 0.0).obj; };
  p.grad_objective = [comp](const VectorXd& z) {
    VectorXd g;
    MatrixXd je, ji;
    comp->derivatives(z, 0.0, g, je, ji);
    return g;
  };
  p.eq = [comp](const VectorXd& z) { return comp->values(z, 0.0).eq; };
  p.jac_eq = [comp](const VectorXd& z) {
    VectorXd g;
    MatrixXd je, ji;
    comp->derivatives(z, 0.0, g, je, ji);
    return je;
  };
  const int m_user_ineq = p.m_ineq;
  p.ineq = [comp, m_user_ineq](const VectorXd& z) {
    return VectorXd(comp->values(z, 0.0).in.head(m_user_ineq));
  };
  p.jac_ineq = [comp, m_user_ineq](const VectorXd& z) {
    VectorXd g;
    MatrixXd je, ji;
    comp->derivatives(z, 0.0, g, je, ji);
    return MatrixXd(ji.topRows(m_user_ineq));
  };
  p.comp_g = [comp](const VectorXd& z) {
    VectorXd g, h;
    comp->pair_values(z, g, h);
    return g;
  };
  p.comp_h = [comp](const VectorXd& z) {
    VectorXd g, h;
    comp->pair_values(z, g, h);
    return h;
  };
  return p;
}

// ---------------------------------------------------------------------------
// Scholtes relaxation: G >= 0, H >= 0 kept, products bounded by sigma.

inline Nlp scholtes_relax(const MpccProblem& m, double sigma) {
  if (!(sigma > 0.0)) throw AssemblyError("scholtes_relax: sigma must be positive");
  Nlp nlp;
  nlp.n = m.n;
  nlp.z0 = m.z0;
  nlp.lb = m.lb;
  nlp.ub = m.ub;

  if (m.compiled) {
    auto comp = m.compiled;
    nlp.m_eq = comp->m_eq();
    nlp.m_in = comp->m_in();
    // Small per-problem cache: the merit line search evaluates f, g_eq and
    // g_in at the same point back to back.
    struct Cache {
      std::mutex mtx;
      VectorXd z;
      CompiledMpcc::Values vals;
      bool valid = false;
    };
    auto cache = std::make_shared<Cache>();
    auto values_at = [comp, cache, sigma](const VectorXd& z) {
      std::lock_guard<std::mutex> lock(cache->mtx);
      if (!cache->valid || cache->z.size() != z.size() ||
          !(cache->z.array() == z.array()).all()) {
        cache->vals = comp->values(z, sigma);
        cache->z = z;
        cache->valid = true;
      }
      return cache->vals;
    };
    nlp.f = [values_at](const VectorXd& z) { return values_at(z).obj; };
    nlp.g_eq = [values_at](const VectorXd& z) { return values_at(z).eq; };
    nlp.g_in = [values_at](const VectorXd& z) { return values_at(z).in; };

    struct JacCache {
      std::mutex mtx;
      VectorXd z;
      VectorXd grad;
      MatrixXd je, ji;
      bool valid = false;
    };
    auto jcache = std::make_shared<JacCache>();
    auto derivs_at = [comp, jcache, sigma](const VectorXd& z) {
      std::lock_guard<std::mutex> lock(jcache->mtx);
      if (!jcache->valid || jcache->z.size() != z.size() ||
          !(jcache->z.array() == z.array()).all()) {
        comp->derivatives(z, sigma, jcache->grad, jcache->je, jcache->ji);
        jcache->z = z;
        jcache->valid = true;
      }
      return std::make_tuple(jcache->grad, jcache->je, jcache->ji);
    };
    nlp.grad = [derivs_at](const VectorXd& z) { return std::get<0>(derivs_at(z)); };
    nlp.J_eq = [derivs_at](const VectorXd& z) { return std::get<1>(derivs_at(z)); };
    nlp.J_in = [derivs_at](const VectorXd& z) { return std::get<2>(derivs_at(z)); };
    nlp.lag_hess = [comp, sigma](const VectorXd& z, double w_f, const VectorXd& y_eq,
                                 const VectorXd& y_in) {
      return comp->lagrangian_hessian(z, sigma, w_f, y_eq, y_in);
    };
    return nlp;
  }

  // Callback route: append G >= 0, H >= 0 and sigma - G.*H >= 0 to the
  // general inequalities.
  nlp.m_eq = m.m_eq;
  nlp.m_in = m.m_ineq + 3 * m.m_comp;
  nlp.f = m.objective;
  nlp.grad = m.grad_objective;
  if (m.m_eq > 0) {
    nlp.g_eq = m.eq;
    nlp.J_eq = m.jac_eq;
  }
  const int mi = m.m_ineq, mc = m.m_comp;
  if (nlp.m_in > 0) {
    nlp.g_in = [m, mi, mc, sigma](const VectorXd& z) {
      VectorXd out(mi + 3 * mc);
      if (mi > 0) out.head(mi) = m.ineq(z);
      if (mc > 0) {
        VectorXd g = m.comp_g(z), h = m.comp_h(z);
        out.segment(mi, mc) = g;
        out.segment(mi + mc, mc) = h;
        out.segment(mi + 2 * mc, mc) =
            VectorXd::Constant(mc, sigma) - g.cwiseProduct(h);
      }
      return out;
    };
    nlp.J_in = [m, mi, mc](const VectorXd& z) {
      MatrixXd out(mi + 3 * mc, m.n);
      if (mi > 0) out.topRows(mi) = m.jac_ineq(z);
      if (mc > 0) {
        VectorXd g = m.comp_g(z), h = m.comp_h(z);
        MatrixXd jg = m.jac_comp_g(z), jh = m.jac_comp_h(z);
        out.middleRows(mi, mc) = jg;
        out.middleRows(mi + mc, mc) = jh;
        out.middleRows(mi + 2 * mc, mc) =
            -(h.asDiagonal() * jg + g.asDiagonal() * jh);
      }
      return out;
    };
  }
  return nlp;
}

// ---------------------------------------------------------------------------

struct HomotopyLogEntry {
  int outer_iter = 0;
  double sigma = 0.0;
  int nlp_iters = 0;
  double comp_residual = 0.0;
  double objective = 0.0;
  std::string status;
};

enum class MpccStatus { Success, Stalled, Failed };

inline const char* to_string(MpccStatus s) {
  switch (s) {
    case MpccStatus::Success: return "success";
    case MpccStatus::Stalled: return "homotopy_stalled";
    case MpccStatus::Failed: return "failed";
  }
  return "?";
}

struct MpccSolution {
  VectorXd z;
  VectorXd y_eq, y_in;
  double objective = 0.0;
  double comp_residual = std::numeric_limits<double>::infinity();
  double eq_residual = 0.0;
  double ineq_violation = 0.0;
  MpccStatus status = MpccStatus::Failed;
  int total_nlp_iters = 0;
  std::vector<HomotopyLogEntry> log;
  std::string message;
};

struct HomotopyOptions {
  NlpOptions nlp;
  bool warm_start = true;
  bool validate = true;
  std::function<void(const HomotopyLogEntry&)> log_sink;
};

// Directional finite-difference check of all callback Jacobians at z0.
inline void validate_mpcc(const MpccProblem& m, double rel_tol = 1e-5) {
  if (m.z0.size() != m.n)
    throw AssemblyError("mpcc: initial guess has wrong dimension");
  std::mt19937_64 rng(12345);
  std::normal_distribution<double> dn(0.0, 1.0);
  VectorXd z = m.z0;
  const double h = 1e-6;
  for (int rep = 0; rep < 3; ++rep) {
    VectorXd d(m.n);
    for (int i = 0; i < m.n; ++i) d[i] = dn(rng);
    d /= std::max(1.0, d.norm());
    auto check = [&](const std::function<VectorXd(const VectorXd&)>& fn,
                     const std::function<MatrixXd(const VectorXd&)>& jac,
                     const char* what) {
      if (!fn || !jac || fn(z).size() == 0) return;
      VectorXd fd = (fn(z + h * d) - fn(z - h * d)) / (2.0 * h);
      VectorXd jd = jac(z) * d;
      const double err = (fd - jd).cwiseAbs().maxCoeff();
      const double ref = std::max(1.0, jd.cwiseAbs().maxCoeff());
      if (err > rel_tol * ref)
        throw AssemblyError(std::string("mpcc: ") + what +
                            " Jacobian disagrees with finite differences");
    };
    check(m.eq, m.jac_eq, "equality");
    check(m.ineq, m.jac_ineq, "inequality");
    check(m.comp_g, m.jac_comp_g, "pair-G");
    check(m.comp_h, m.jac_comp_h, "pair-H");
    if (m.objective && m.grad_objective) {
      double fd = (m.objective(z + h * d) - m.objective(z - h * d)) / (2.0 * h);
      double gd = m.grad_objective(z).dot(d);
      if (std::abs(fd - gd) > rel_tol * std::max(1.0, std::abs(gd)))
        throw AssemblyError("mpcc: objective gradient disagrees with finite differences");
    }
  }
}

inline double comp_residual_at(const MpccProblem& m, const VectorXd& z) {
  if (m.m_comp == 0) return 0.0;
  VectorXd g = m.comp_g(z), h = m.comp_h(z);
  double r = 0.0;
  for (int i = 0; i < m.m_comp; ++i)
    r = std::max(r, std::min(std::abs(g[i]), std::abs(h[i])));
  return r;
}

inline MpccSolution homotopy_solve(const MpccProblem& m,
                                   const HomotopySchedule& sched = {},
                                   const HomotopyOptions& opts = {}) {
  sched.validate();
  if (opts.validate) validate_mpcc(m);

  MpccSolution best;
  MpccSolution cur;
  VectorXd z = m.z0;

  for (int k = 0; k < sched.max_outer; ++k) {
    const double sigma = sched.sigma0 * std::pow(sched.kappa, k);
    Nlp nlp = scholtes_relax(m, sigma);
    NlpOptions nopts = opts.nlp;
    nopts.mu_init = std::max(sigma * 1e-1, 1e-11);
    NlpResult r = solve_nlp(nlp, opts.warm_start ? z : m.z0, nopts);

    if (r.z.size() == m.n) z = r.z;
    cur.z = z;
    cur.y_eq = r.y_eq;
    cur.y_in = r.y_in;
    cur.objective = m.objective ? m.objective(z) : r.f;
    cur.comp_residual = comp_residual_at(m, z);
    cur.eq_residual = m.m_eq > 0 ? m.eq(z).cwiseAbs().maxCoeff() : 0.0;
    double viol = 0.0;
    if (m.m_ineq > 0) viol = std::max(viol, -std::min(0.0, m.ineq(z).minCoeff()));
    if (m.m_comp > 0) {
      viol = std::max(viol, -std::min(0.0, m.comp_g(z).minCoeff()));
      viol = std::max(viol, -std::min(0.0, m.comp_h(z).minCoeff()));
    }
    cur.ineq_violation = viol;
    cur.total_nlp_iters += r.iters;
    best.total_nlp_iters = cur.total_nlp_iters;

    HomotopyLogEntry entry;
    entry.outer_iter = k;
    entry.sigma = sigma;
    entry.nlp_iters = r.iters;
    entry.comp_residual = cur.comp_residual;
    entry.objective = cur.objective;
    entry.status = to_string(r.status);
    cur.log.push_back(entry);
    if (opts.log_sink) opts.log_sink(entry);

    const bool feas_ok = cur.eq_residual <= 1e-8 && cur.ineq_violation <= 1e-8;
    if (r.status == NlpStatus::Success && feas_ok &&
        cur.comp_residual <= sched.comp_tol) {
      cur.status = MpccStatus::Success;
      return cur;
    }
    // Track the best iterate seen in case the homotopy stalls.
    if (best.z.size() == 0 ||
        std::make_pair(cur.comp_residual, cur.eq_residual) <
            std::make_pair(best.comp_residual, best.eq_residual)) {
      best = cur;
    }
    if (m.m_comp == 0) break;  // plain NLP; further outer iterations are moot
  }

  best.log = cur.log;
  best.status = MpccStatus::Stalled;
  best.message = "homotopy exhausted its schedule before reaching comp_tol";
  return best;
}

}  // namespace sweepds
