#pragma once

// Radau IIA collocation tableaus for 1..4 stages, built from the collocation
// nodes: a_ij = integral of the j-th Lagrange basis polynomial over [0, c_i],
// b_j over [0, 1]. The family is stiffly accurate (last row of a equals b)
// and has order 2*n_s - 1.

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include "sweepds/errors.hpp"

namespace sweepds {

struct ButcherTableau {
  int n_s = 0;
  Eigen::MatrixXd a;
  Eigen::VectorXd b;
  Eigen::VectorXd c;
  std::string name;
};

namespace detail {

// Coefficients (ascending powers) of the Lagrange basis polynomial through
// the given nodes that is 1 at node j.
inline std::vector<double> lagrange_coeffs(const Eigen::VectorXd& nodes, int j) {
  std::vector<double> poly{1.0};
  double denom = 1.0;
  for (int k = 0; k < nodes.size(); ++k) {
    if (k == j) continue;
    // multiply by (tau - c_k)
    std::vector<double> next(poly.size() + 1, 0.0);
    for (std::size_t d = 0; d < poly.size(); ++d) {
      next[d] += poly[d] * (-nodes[k]);
      next[d + 1] += poly[d];
    }
    poly = std::move(next);
    denom *= nodes[j] - nodes[k];
  }
  for (double& v : poly) v /= denom;
  return poly;
}

inline double integrate_poly(const std::vector<double>& coeffs, double upper) {
  double s = 0.0;
  double tp = upper;
  for (std::size_t d = 0; d < coeffs.size(); ++d) {
    s += coeffs[d] * tp / static_cast<double>(d + 1);
    tp *= upper;
  }
  return s;
}

inline double polish_root(double t, double c3, double c2, double c1, double c0) {
  // Newton iterations on c3 t^3 + c2 t^2 + c1 t + c0.
  for (int it = 0; it < 8; ++it) {
    double f = ((c3 * t + c2) * t + c1) * t + c0;
    double df = (3.0 * c3 * t + 2.0 * c2) * t + c1;
    t -= f / df;
  }
  return t;
}

}  // namespace detail

inline ButcherTableau radau_iia(int n_s) {
  ButcherTableau tab;
  tab.n_s = n_s;
  tab.name = "radau-iia-" + std::to_string(n_s);
  switch (n_s) {
    case 1:
      tab.c = Eigen::VectorXd::Constant(1, 1.0);
      break;
    case 2: {
      tab.c = Eigen::VectorXd(2);
      tab.c << 1.0 / 3.0, 1.0;
      break;
    }
    case 3: {
      const double s6 = std::sqrt(6.0);
      tab.c = Eigen::VectorXd(3);
      tab.c << (4.0 - s6) / 10.0, (4.0 + s6) / 10.0, 1.0;
      break;
    }
    case 4: {
      // Interior nodes are the roots of 35 t^3 - 45 t^2 + 15 t - 1.
      tab.c = Eigen::VectorXd(4);
      tab.c << detail::polish_root(0.0886, 35.0, -45.0, 15.0, -1.0),
          detail::polish_root(0.4095, 35.0, -45.0, 15.0, -1.0),
          detail::polish_root(0.7877, 35.0, -45.0, 15.0, -1.0), 1.0;
      break;
    }
    default:
      throw UnsupportedTableau("radau_iia: stage count must be in {1,2,3,4}");
  }

  tab.a.resize(n_s, n_s);
  tab.b.resize(n_s);
  for (int j = 0; j < n_s; ++j) {
    auto lj = detail::lagrange_coeffs(tab.c, j);
    for (int i = 0; i < n_s; ++i)
      tab.a(i, j) = detail::integrate_poly(lj, tab.c[i]);
    tab.b[j] = detail::integrate_poly(lj, 1.0);
  }
  return tab;
}

// Integral of each Lagrange basis polynomial over [0, theta]; used for the
// collocation interpolant x(t0 + theta h) = x0 + h * sum_j w_j(theta) v_j.
inline Eigen::VectorXd stage_integral_weights(const ButcherTableau& tab,
                                              double theta) {
  Eigen::VectorXd w(tab.n_s);
  for (int j = 0; j < tab.n_s; ++j)
    w[j] = detail::integrate_poly(detail::lagrange_coeffs(tab.c, j), theta);
  return w;
}

}  // namespace sweepds
