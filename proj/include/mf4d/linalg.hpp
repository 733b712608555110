#pragma once

// Matrix-free linear algebra used by the discretizations: symmetric
// tridiagonal solves for the radial operators, conjugate gradients for the
// grid Poisson problems, restarted GMRES for Newton steps driven by
// finite-difference operator actions, and a cyclic Jacobi eigensolver for
// the small projected matrices produced by subspace iteration.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "mf4d/errors.hpp"

namespace mf4d {

using Vec = std::vector<double>;
using LinOp = std::function<void(const Vec&, Vec&)>;  // y = A x

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm2(const Vec& a) { return std::sqrt(dot(a, a)); }

inline void axpy(double alpha, const Vec& x, Vec& y) {
  for (size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline void scal(double alpha, Vec& x) {
  for (double& v : x) v *= alpha;
}

// LDL^T solve for a symmetric positive definite tridiagonal system.
// diag has n entries, off has n-1 (entry i couples rows i and i+1).
inline Vec tridiag_solve_spd(const Vec& diag, const Vec& off, Vec rhs) {
  const size_t n = diag.size();
  if (n == 0) return rhs;
  Vec d(n), l(n > 1 ? n - 1 : 0);
  d[0] = diag[0];
  if (!(d[0] > 0.0)) throw SolverError("tridiag_solve_spd: not positive definite");
  for (size_t i = 0; i + 1 < n; ++i) {
    l[i] = off[i] / d[i];
    d[i + 1] = diag[i + 1] - off[i] * l[i];
    if (!(d[i + 1] > 0.0))
      throw SolverError("tridiag_solve_spd: not positive definite");
  }
  for (size_t i = 1; i < n; ++i) rhs[i] -= l[i - 1] * rhs[i - 1];
  for (size_t i = 0; i < n; ++i) rhs[i] /= d[i];
  for (size_t i = n; i-- > 1;) rhs[i - 1] -= l[i - 1] * rhs[i];
  return rhs;
}

struct CgResult {
  Vec x;
  int iters = 0;
  double resid = 0.0;
};

// Plain CG for SPD operators. Converges on ||r|| <= rtol ||b|| + atol.
inline CgResult cg_solve(const LinOp& apply, const Vec& b, double rtol = 1e-12,
                         int maxit = 20000, const Vec* x0 = nullptr,
                         double atol = 0.0) {
  const size_t n = b.size();
  CgResult out;
  out.x = x0 ? *x0 : Vec(n, 0.0);
  Vec r = b, ap(n);
  if (x0) {
    apply(out.x, ap);
    for (size_t i = 0; i < n; ++i) r[i] -= ap[i];
  }
  const double target = rtol * norm2(b) + atol;
  double rr = dot(r, r);
  if (std::sqrt(rr) <= target || n == 0) {
    out.resid = std::sqrt(rr);
    return out;
  }
  Vec p = r;
  for (int it = 1; it <= maxit; ++it) {
    apply(p, ap);
    const double pap = dot(p, ap);
    if (!(pap > 0.0)) throw SolverError("cg_solve: operator not positive definite");
    const double alpha = rr / pap;
    axpy(alpha, p, out.x);
    axpy(-alpha, ap, r);
    const double rr_new = dot(r, r);
    if (std::sqrt(rr_new) <= target) {
      out.iters = it;
      out.resid = std::sqrt(rr_new);
      return out;
    }
    const double beta = rr_new / rr;
    rr = rr_new;
    for (size_t i = 0; i < n; ++i) p[i] = r[i] + beta * p[i];
  }
  throw SolverError("cg_solve: no convergence in " + std::to_string(maxit) +
                    " iterations");
}

struct GmresResult {
  Vec x;
  int iters = 0;
  double resid = 0.0;
  bool converged = false;
};

// Restarted GMRES with modified Gram-Schmidt and Givens rotations. The
// operator need not be symmetric; actions may be finite-difference
// approximations. Residual target is rtol * ||b|| + atol.
inline GmresResult gmres_solve(const LinOp& apply, const Vec& b, int restart = 40,
                               int maxit = 400, double rtol = 1e-8,
                               const Vec* x0 = nullptr, double atol = 0.0) {
  const size_t n = b.size();
  GmresResult out;
  out.x = x0 ? *x0 : Vec(n, 0.0);
  const double target = rtol * norm2(b) + atol;
  Vec r(n), w(n);
  int total = 0;
  while (total < maxit) {
    apply(out.x, r);
    for (size_t i = 0; i < n; ++i) r[i] = b[i] - r[i];
    double beta = norm2(r);
    out.resid = beta;
    if (beta <= target) {
      out.converged = true;
      return out;
    }
    const int m = std::min(restart, maxit - total);
    std::vector<Vec> v;
    v.reserve(m + 1);
    v.push_back(r);
    scal(1.0 / beta, v[0]);
    std::vector<Vec> h(m, Vec(m + 1, 0.0));  // h[j][i]: column j
    Vec cs(m, 0.0), sn(m, 0.0), g(m + 1, 0.0);
    g[0] = beta;
    int j = 0;
    for (; j < m; ++j) {
      apply(v[j], w);
      for (int i = 0; i <= j; ++i) {
        h[j][i] = dot(w, v[i]);
        axpy(-h[j][i], v[i], w);
      }
      const double hnext = norm2(w);
      h[j][j + 1] = hnext;
      for (int i = 0; i < j; ++i) {
        const double t = cs[i] * h[j][i] + sn[i] * h[j][i + 1];
        h[j][i + 1] = -sn[i] * h[j][i] + cs[i] * h[j][i + 1];
        h[j][i] = t;
      }
      const double denom = std::hypot(h[j][j], h[j][j + 1]);
      if (denom == 0.0) throw SolverError("gmres_solve: breakdown");
      cs[j] = h[j][j] / denom;
      sn[j] = h[j][j + 1] / denom;
      h[j][j] = denom;
      h[j][j + 1] = 0.0;
      g[j + 1] = -sn[j] * g[j];
      g[j] = cs[j] * g[j];
      ++total;
      if (std::abs(g[j + 1]) <= target || hnext == 0.0) {
        ++j;
        break;
      }
      if (j + 1 < m) {
        v.push_back(w);
        scal(1.0 / hnext, v.back());
      }
    }
    // back substitution on the j x j triangular system
    Vec y(j, 0.0);
    for (int i = j - 1; i >= 0; --i) {
      double s = g[i];
      for (int l = i + 1; l < j; ++l) s -= h[l][i] * y[l];
      y[i] = s / h[i][i];
    }
    for (int i = 0; i < j; ++i) axpy(y[i], v[i], out.x);
    apply(out.x, r);
    for (size_t i = 0; i < n; ++i) r[i] = b[i] - r[i];
    out.resid = norm2(r);
    out.iters = total;
    if (out.resid <= target) {
      out.converged = true;
      return out;
    }
  }
  return out;
}

struct SymEig {
  Vec values;   // ascending
  Vec vectors;  // column j (vectors[i * n + j]) is the eigenvector of values[j]
};

// Cyclic Jacobi for small dense symmetric matrices (row-major input).
inline SymEig jacobi_eigensymm(Vec a, int n) {
  SymEig out;
  Vec v(static_cast<size_t>(n) * n, 0.0);
  for (int i = 0; i < n; ++i) v[static_cast<size_t>(i) * n + i] = 1.0;
  auto off_norm = [&]() {
    double s = 0.0;
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) s += a[static_cast<size_t>(p) * n + q] * a[static_cast<size_t>(p) * n + q];
    return std::sqrt(s);
  };
  double scale = 0.0;
  for (int i = 0; i < n * n; ++i) scale = std::max(scale, std::abs(a[i]));
  const double tol = 1e-15 * std::max(scale, 1e-300);
  for (int sweep = 0; sweep < 100 && off_norm() > tol * n; ++sweep) {
    for (int p = 0; p < n; ++p)
      for (int q = p + 1; q < n; ++q) {
        const double apq = a[static_cast<size_t>(p) * n + q];
        if (std::abs(apq) <= tol) continue;
        const double app = a[static_cast<size_t>(p) * n + p];
        const double aqq = a[static_cast<size_t>(q) * n + q];
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int i = 0; i < n; ++i) {
          const double aip = a[static_cast<size_t>(i) * n + p];
          const double aiq = a[static_cast<size_t>(i) * n + q];
          a[static_cast<size_t>(i) * n + p] = c * aip - s * aiq;
          a[static_cast<size_t>(i) * n + q] = s * aip + c * aiq;
        }
        for (int i = 0; i < n; ++i) {
          const double api = a[static_cast<size_t>(p) * n + i];
          const double aqi = a[static_cast<size_t>(q) * n + i];
          a[static_cast<size_t>(p) * n + i] = c * api - s * aqi;
          a[static_cast<size_t>(q) * n + i] = s * api + c * aqi;
        }
        for (int i = 0; i < n; ++i) {
          const double vip = v[static_cast<size_t>(i) * n + p];
          const double viq = v[static_cast<size_t>(i) * n + q];
          v[static_cast<size_t>(i) * n + p] = c * vip - s * viq;
          v[static_cast<size_t>(i) * n + q] = s * vip + c * viq;
        }
      }
  }
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int i, int j) {
    return a[static_cast<size_t>(i) * n + i] < a[static_cast<size_t>(j) * n + j];
  });
  out.values.resize(n);
  out.vectors.assign(static_cast<size_t>(n) * n, 0.0);
  for (int j = 0; j < n; ++j) {
    out.values[j] = a[static_cast<size_t>(order[j]) * n + order[j]];
    for (int i = 0; i < n; ++i)
      out.vectors[static_cast<size_t>(i) * n + j] = v[static_cast<size_t>(i) * n + order[j]];
  }
  return out;
}

}  // namespace mf4d
