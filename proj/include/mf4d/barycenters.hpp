#pragma once

// Formal barycenters sum t_i delta_{x_i} as data, the interaction function
// F*, a multistart critical-point census, the weak (C^1-dual) distance and
// the density -> barycenter projection used by the recovery checks.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mf4d/domain.hpp"
#include "mf4d/linalg.hpp"
#include "mf4d/pointcloud.hpp"

namespace mf4d {

struct FormalBarycenter {
  struct Atom {
    double t = 0.0;
    Vec4 x{};
  };
  std::vector<Atom> atoms;
  size_t size() const { return atoms.size(); }
};

// Canonical representative: zero weights dropped, atoms within merge_radius
// merged (weights added, positions weight-averaged), weights renormalized,
// atoms sorted lexicographically. Idempotent.
inline FormalBarycenter canonicalize(std::vector<FormalBarycenter::Atom> raw, double merge_radius) {
  if (!(merge_radius >= 0.0)) throw std::invalid_argument("canonicalize: merge_radius must be >= 0");
  double sum = 0.0;
  for (const auto& a : raw) {
    if (!(a.t >= -1e-12) || !std::isfinite(a.t))
      throw std::invalid_argument("canonicalize: weights must be nonnegative");
    sum += a.t;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("canonicalize: weights must sum to 1");
  std::vector<FormalBarycenter::Atom> atoms;
  for (const auto& a : raw)
    if (a.t > 0.0) atoms.push_back(a);
  if (atoms.empty()) throw std::invalid_argument("canonicalize: no atoms with positive weight");
  // merge closest pairs until none sit within merge_radius
  for (;;) {
    double best = merge_radius;
    int bi = -1, bj = -1;
    for (size_t i = 0; i < atoms.size(); ++i)
      for (size_t j = i + 1; j < atoms.size(); ++j) {
        const double d = dist(atoms[i].x, atoms[j].x);
        if (d <= best) {
          best = d;
          bi = static_cast<int>(i);
          bj = static_cast<int>(j);
        }
      }
    if (bi < 0) break;
    FormalBarycenter::Atom merged;
    merged.t = atoms[bi].t + atoms[bj].t;
    for (int a = 0; a < 4; ++a)
      merged.x[a] = (atoms[bi].t * atoms[bi].x[a] + atoms[bj].t * atoms[bj].x[a]) / merged.t;
    atoms[bi] = merged;
    atoms.erase(atoms.begin() + bj);
  }
  double tot = 0.0;
  for (const auto& a : atoms) tot += a.t;
  for (auto& a : atoms) a.t /= tot;
  std::sort(atoms.begin(), atoms.end(), [](const auto& a, const auto& b) {
    if (a.x != b.x) return a.x < b.x;
    return a.t < b.t;
  });
  return FormalBarycenter{std::move(atoms)};
}

inline FormalBarycenter canonicalize(const FormalBarycenter& b, double merge_radius) {
  return canonicalize(b.atoms, merge_radius);
}

// Greatest atom-wise mismatch between two barycenters under the best atom
// matching (exhaustive over permutations; atom counts differ -> +inf).
inline double barycenter_mismatch(const FormalBarycenter& a, const FormalBarycenter& b) {
  if (a.size() != b.size()) return std::numeric_limits<double>::infinity();
  std::vector<int> perm(a.size());
  for (size_t i = 0; i < perm.size(); ++i) perm[i] = static_cast<int>(i);
  double best = std::numeric_limits<double>::infinity();
  do {
    double worst = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
      const auto& p = a.atoms[i];
      const auto& q = b.atoms[perm[i]];
      worst = std::max(worst, dist(p.x, q.x) + std::abs(p.t - q.t));
    }
    best = std::min(best, worst);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

// Non-increasing interaction kernel: 1/t on (0, eta], the constant 1/(2 eta)
// past 2 eta, and the monotone cubic Hermite bridge between. The bridge's
// derivative is 2*Delta*(1-s)/eta, so G' < 0 strictly below 2 eta and the
// junction at 2 eta is C^1.
struct GCutoff {
  double eta = 0.1;

  explicit GCutoff(double e) : eta(e) {
    if (!(e > 0.0)) throw std::invalid_argument("GCutoff: eta must be > 0");
  }
  double value(double t) const {
    if (!(t > 0.0)) return std::numeric_limits<double>::infinity();
    if (t <= eta) return 1.0 / t;
    if (t >= 2.0 * eta) return 0.5 / eta;
    const double s = (t - eta) / eta;
    const double h00 = (1.0 + 2.0 * s) * (1.0 - s) * (1.0 - s);
    const double h10 = s * (1.0 - s) * (1.0 - s);
    const double h01 = s * s * (3.0 - 2.0 * s);
    const double h11 = s * s * (s - 1.0);
    return (1.0 / eta) * h00 + eta * (-1.0 / (eta * eta)) * h10 + (0.5 / eta) * h01 + 0.0 * h11;
  }
  double deriv(double t) const {
    if (t <= 0.0) return 0.0;
    if (t <= eta) return -1.0 / (t * t);
    if (t >= 2.0 * eta) return 0.0;
    const double s = (t - eta) / eta;
    const double delta = -0.5 / eta;  // (value(2eta) - value(eta)) / eta
    return 2.0 * delta * (1.0 - s) / eta;
  }
};

// F*(sigma) = -sum_{i != j} G(d(x_i, x_j)) - sum_i 1/(t_i (1 - t_i)), the
// i != j sum over ordered pairs. Defined away from Sigma_{k-1}, so k = 1 is
// a domain error (t = 1 is singular).
inline double f_star(const FormalBarycenter& sigma, const GCutoff& g) {
  const size_t k = sigma.size();
  if (k < 2) throw std::domain_error("f_star: needs at least 2 atoms");
  double s = 0.0;
  for (size_t i = 0; i < k; ++i)
    for (size_t j = 0; j < k; ++j)
      if (i != j) s -= g.value(dist(sigma.atoms[i].x, sigma.atoms[j].x));
  for (const auto& a : sigma.atoms) {
    const double t = a.t;
    if (!(t > 0.0) || !(t < 1.0)) return -std::numeric_limits<double>::infinity();
    s -= 1.0 / (t * (1.0 - t));
  }
  return s;
}

inline bool domain_contains(const DomainSpec& dom, const Vec4& x) {
  switch (dom.kind) {
    case DomainKind::ball: return norm4(x) < dom.radius;
    case DomainKind::shell: {
      const double r = norm4(x);
      return r > dom.r0 && r < dom.r1;
    }
    case DomainKind::box4d:
      for (int a = 0; a < 4; ++a)
        if (!(x[a] > 0.0) || !(x[a] < dom.extent[a])) return false;
      return !dom.mask || dom.mask(x);
  }
  return false;
}

inline Vec4 sample_domain_point(const DomainSpec& dom, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int tries = 0; tries < 4096; ++tries) {
    Vec4 x{};
    if (dom.kind == DomainKind::box4d) {
      for (int a = 0; a < 4; ++a) x[a] = unif(rng) * dom.extent[a];
    } else {
      Vec4 d{gauss(rng), gauss(rng), gauss(rng), gauss(rng)};
      const double n = norm4(d);
      if (n < 1e-12) continue;
      const double lo = dom.kind == DomainKind::ball ? 0.0 : dom.r0;
      const double hi = dom.kind == DomainKind::ball ? dom.radius : dom.r1;
      const double r = std::pow(std::pow(lo, 4) + unif(rng) * (std::pow(hi, 4) - std::pow(lo, 4)), 0.25);
      for (int a = 0; a < 4; ++a) x[a] = r * d[a] / n;
    }
    if (domain_contains(dom, x)) return x;
  }
  throw std::invalid_argument("sample_domain_point: domain rejects every sample");
}

struct CensusConfig {
  long long nstarts = 10000;
  uint64_t seed = 1;
  int max_iters = 200;
  double grad_tol = 1e-8;          // infinity norm of the coordinate gradient
  double merge_tol = 1e-3;         // relative to the domain diameter
  double degenerate_band = 1e-6;   // relative to the largest |eigenvalue|
  double weight_floor = 1e-4;      // iterates must keep t_i above this
};

struct CensusEntry {
  FormalBarycenter sigma;
  int morse_index = 0;
  double value = 0.0;
  long long hits = 0;
};

struct CensusReport {
  std::vector<CensusEntry> entries;
  std::vector<long long> counts;  // c_i indexed by Morse index
  long long starts = 0;
  long long converged = 0;
  long long unconverged = 0;
  long long degenerate_excluded = 0;
  long long plain_sum = 0;
  long long alternating_sum = 0;
  bool incomplete = false;
  std::vector<std::string> warnings;
};

namespace detail {

// Coordinates z = (x_1..x_k, t_1..t_{k-1}) with t_k = 1 - sum. Value and
// analytic gradient of F* in these coordinates.
struct FstarCoords {
  const DomainSpec* dom;
  const GCutoff* g;
  int k;

  int dim() const { return 5 * k - 1; }

  bool unpack(const Vec& z, std::vector<Vec4>& xs, std::vector<double>& ts,
              double weight_floor) const {
    xs.resize(k);
    ts.resize(k);
    for (int i = 0; i < k; ++i)
      for (int a = 0; a < 4; ++a) xs[i][a] = z[4 * i + a];
    double tk = 1.0;
    for (int i = 0; i + 1 < k; ++i) {
      ts[i] = z[4 * k + i];
      tk -= ts[i];
    }
    ts[k - 1] = tk;
    for (int i = 0; i < k; ++i) {
      if (!(ts[i] > weight_floor) || !(ts[i] < 1.0 - weight_floor)) return false;
      if (!domain_contains(*dom, xs[i])) return false;
    }
    return true;
  }

  double value(const std::vector<Vec4>& xs, const std::vector<double>& ts) const {
    double s = 0.0;
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j)
        if (i != j) s -= g->value(dist(xs[i], xs[j]));
    for (int i = 0; i < k; ++i) s -= 1.0 / (ts[i] * (1.0 - ts[i]));
    return s;
  }

  void gradient(const std::vector<Vec4>& xs, const std::vector<double>& ts, Vec& grad) const {
    grad.assign(dim(), 0.0);
    for (int i = 0; i < k; ++i)
      for (int j = 0; j < k; ++j) {
        if (i == j) continue;
        const double d = dist(xs[i], xs[j]);
        const double gp = g->deriv(d);
        if (gp == 0.0 || d == 0.0) continue;
        for (int a = 0; a < 4; ++a)
          grad[4 * i + a] -= 2.0 * gp * (xs[i][a] - xs[j][a]) / d;
      }
    auto beta_prime = [](double t) {
      const double u = t * (1.0 - t);
      return -(1.0 - 2.0 * t) / (u * u);
    };
    for (int i = 0; i + 1 < k; ++i)
      grad[4 * k + i] = -beta_prime(ts[i]) + beta_prime(ts[k - 1]);
  }
};

}  // namespace detail

// Multistart search for critical points of F* in (positions, free weights)
// coordinates: Levenberg steps on the squared gradient, finite-difference
// Hessians for the Morse index, duplicates merged up to atom permutation.
// Near-singular Hessians (or indices unstable under halving the FD step)
// are excluded from the counts and flagged.
inline CensusReport f_star_critical_census(const DomainSpec& dom, int k, const GCutoff& g,
                                           const CensusConfig& cfg = CensusConfig{}) {
  if (k < 2 || k > 3) throw std::invalid_argument("f_star_critical_census: k must be 2 or 3");
  detail::FstarCoords F{&dom, &g, k};
  const int n = F.dim();
  const double diam = dom.diameter();
  std::mt19937_64 rng(cfg.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  CensusReport rep;
  rep.starts = cfg.nstarts;
  std::vector<Vec4> xs;
  std::vector<double> ts;

  auto eval_value = [&](const Vec& z, double& out) {
    if (!F.unpack(z, xs, ts, cfg.weight_floor)) return false;
    out = F.value(xs, ts);
    return true;
  };
  auto eval_grad = [&](const Vec& z, Vec& grad) {
    if (!F.unpack(z, xs, ts, cfg.weight_floor)) return false;
    F.gradient(xs, ts, grad);
    return true;
  };
  // symmetric FD Hessian of F at z with per-coordinate step h
  auto hessian = [&](const Vec& z, double h, std::vector<double>& H) -> bool {
    H.assign(static_cast<size_t>(n) * n, 0.0);
    double f0;
    if (!eval_value(z, f0)) return false;
    Vec zp = z;
    for (int i = 0; i < n; ++i) {
      double fp, fm;
      zp = z;
      zp[i] = z[i] + h;
      if (!eval_value(zp, fp)) return false;
      zp[i] = z[i] - h;
      if (!eval_value(zp, fm)) return false;
      H[static_cast<size_t>(i) * n + i] = (fp - 2.0 * f0 + fm) / (h * h);
      for (int j = i + 1; j < n; ++j) {
        double fpp, fpm, fmp, fmm;
        zp = z;
        zp[i] = z[i] + h;
        zp[j] = z[j] + h;
        if (!eval_value(zp, fpp)) return false;
        zp[j] = z[j] - h;
        if (!eval_value(zp, fpm)) return false;
        zp[i] = z[i] - h;
        zp[j] = z[j] + h;
        if (!eval_value(zp, fmp)) return false;
        zp[j] = z[j] - h;
        if (!eval_value(zp, fmm)) return false;
        const double hij = (fpp - fpm - fmp + fmm) / (4.0 * h * h);
        H[static_cast<size_t>(i) * n + j] = hij;
        H[static_cast<size_t>(j) * n + i] = hij;
      }
    }
    return true;
  };
  // Morse index (negative eigenvalue count); -1 flags degeneracy
  auto classify = [&](const std::vector<double>& H) -> int {
    SymEig eig = jacobi_eigensymm(H, n);
    double scale = 0.0;
    for (double ev : eig.values) scale = std::max(scale, std::abs(ev));
    if (scale == 0.0) return -1;
    int idx = 0;
    for (double ev : eig.values) {
      if (std::abs(ev) < cfg.degenerate_band * scale) return -1;
      if (ev < 0.0) ++idx;
    }
    return idx;
  };

  for (long long s = 0; s < cfg.nstarts; ++s) {
    Vec z(n);
    for (int i = 0; i < k; ++i) {
      const Vec4 p = sample_domain_point(dom, rng);
      for (int a = 0; a < 4; ++a) z[4 * i + a] = p[a];
    }
    {  // interior Dirichlet-style weight sample
      std::vector<double> e(k);
      double tot = 0.0;
      for (int i = 0; i < k; ++i) {
        e[i] = -std::log(1.0 - unif(rng));
        tot += e[i];
      }
      for (int i = 0; i + 1 < k; ++i) z[4 * k + i] = 0.05 + 0.9 * e[i] / tot;
    }
    Vec grad(n);
    if (!eval_grad(z, grad)) {
      ++rep.unconverged;
      continue;
    }
    double mu = 1e-3;
    bool converged = false;
    std::vector<double> H;
    const double hstep = 1e-5 * std::max(1.0, diam);
    for (int it = 0; it < cfg.max_iters; ++it) {
      double gn = 0.0;
      for (double t : grad) gn = std::max(gn, std::abs(t));
      if (gn < cfg.grad_tol) {
        converged = true;
        break;
      }
      if (!hessian(z, hstep, H)) break;
      bool stepped = false;
      for (int tries = 0; tries < 24; ++tries) {
        // solve (H^T H + mu I) s = -H^T grad via the normal equations of the
        // Gauss-Newton model for (1/2)||grad||^2
        std::vector<double> A(static_cast<size_t>(n) * n, 0.0);
        Vec rhs(n, 0.0);
        for (int i = 0; i < n; ++i) {
          for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int l = 0; l < n; ++l)
              acc += H[static_cast<size_t>(l) * n + i] * H[static_cast<size_t>(l) * n + j];
            A[static_cast<size_t>(i) * n + j] = acc;
          }
          A[static_cast<size_t>(i) * n + i] += mu;
          double acc = 0.0;
          for (int l = 0; l < n; ++l) acc += H[static_cast<size_t>(l) * n + i] * grad[l];
          rhs[i] = -acc;
        }
        // dense Cholesky on the damped normal matrix
        std::vector<double> L = A;
        bool ok = true;
        for (int i = 0; i < n && ok; ++i) {
          for (int j = 0; j <= i; ++j) {
            double acc = L[static_cast<size_t>(i) * n + j];
            for (int l = 0; l < j; ++l)
              acc -= L[static_cast<size_t>(i) * n + l] * L[static_cast<size_t>(j) * n + l];
            if (i == j) {
              if (!(acc > 0.0)) {
                ok = false;
                break;
              }
              L[static_cast<size_t>(i) * n + i] = std::sqrt(acc);
            } else {
              L[static_cast<size_t>(i) * n + j] = acc / L[static_cast<size_t>(j) * n + j];
            }
          }
        }
        if (!ok) {
          mu *= 10.0;
          continue;
        }
        Vec step(n);
        for (int i = 0; i < n; ++i) {
          double acc = rhs[i];
          for (int l = 0; l < i; ++l) acc -= L[static_cast<size_t>(i) * n + l] * step[l];
          step[i] = acc / L[static_cast<size_t>(i) * n + i];
        }
        for (int i = n - 1; i >= 0; --i) {
          double acc = step[i];
          for (int l = i + 1; l < n; ++l) acc -= L[static_cast<size_t>(l) * n + i] * step[l];
          step[i] = acc / L[static_cast<size_t>(i) * n + i];
        }
        Vec znew = z;
        for (int i = 0; i < n; ++i) znew[i] += step[i];
        Vec gnew(n);
        if (eval_grad(znew, gnew)) {
          double gn_old = 0.0, gn_new = 0.0;
          for (double t : grad) gn_old += t * t;
          for (double t : gnew) gn_new += t * t;
          if (gn_new < gn_old) {
            z = std::move(znew);
            grad = std::move(gnew);
            mu = std::max(mu * 0.3, 1e-12);
            stepped = true;
            break;
          }
        }
        mu *= 10.0;
      }
      if (!stepped) break;
    }
    if (!converged) {
      ++rep.unconverged;
      continue;
    }
    ++rep.converged;
    if (!hessian(z, hstep, H)) {
      ++rep.unconverged;
      --rep.converged;
      continue;
    }
    const int idx = classify(H);
    int idx_half = idx;
    if (idx >= 0) {
      std::vector<double> H2;
      idx_half = hessian(z, 0.5 * hstep, H2) ? classify(H2) : -1;
    }
    if (idx < 0 || idx_half != idx) {
      ++rep.degenerate_excluded;
      continue;
    }
    F.unpack(z, xs, ts, 0.0);
    std::vector<FormalBarycenter::Atom> atoms(k);
    for (int i = 0; i < k; ++i) atoms[i] = {ts[i], xs[i]};
    FormalBarycenter sigma = canonicalize(atoms, 0.0);
    const double val = F.value(xs, ts);
    bool merged = false;
    for (auto& e : rep.entries)
      if (e.morse_index == idx &&
          barycenter_mismatch(e.sigma, sigma) < cfg.merge_tol * std::max(1.0, diam)) {
        ++e.hits;
        merged = true;
        break;
      }
    if (!merged) rep.entries.push_back(CensusEntry{std::move(sigma), idx, val, 1});
  }

  int max_idx = 0;
  for (const auto& e : rep.entries) max_idx = std::max(max_idx, e.morse_index);
  rep.counts.assign(max_idx + 1, 0);
  for (const auto& e : rep.entries) ++rep.counts[e.morse_index];
  for (size_t i = 0; i < rep.counts.size(); ++i) {
    rep.plain_sum += rep.counts[i];
    rep.alternating_sum += (i % 2 == 0 ? 1 : -1) * rep.counts[i];
  }
  rep.incomplete = rep.unconverged > 0 || rep.degenerate_excluded > 0;
  if (rep.degenerate_excluded > 0)
    rep.warnings.push_back("degenerate critical points excluded: " +
                           std::to_string(rep.degenerate_excluded));
  if (rep.unconverged > 0)
    rep.warnings.push_back("unconverged starts: " + std::to_string(rep.unconverged));
  return rep;
}

struct WeakDistanceConfig {
  std::vector<double> cone_scales;  // empty -> geometric defaults
  int hotspots = 8;                 // extra cone centers at cloud mass peaks
};

// Certified lower bound of sup_{||psi||_C1 <= 1} |<f, psi> - <sigma, psi>|
// over a dictionary of clamped cones max(0, c - d(y,p)) (scaled to unit C^1
// norm) and the constant 1. f is normalized internally.
inline double weak_distance(const Field& f, const FormalBarycenter& sigma,
                            const WeakDistanceConfig& cfg = WeakDistanceConfig{}) {
  MassCloud cloud = mass_cloud(f);
  if (!(cloud.total > 0.0)) throw std::invalid_argument("weak_distance: density carries no mass");
  std::vector<double> mass = cloud.mass;
  for (double& t : mass) t /= cloud.total;
  const Mesh& m = *f.mesh;
  std::vector<double> scales = cfg.cone_scales;
  if (scales.empty()) {
    const double eta = m.dom.eta_value();
    scales = {eta, 2.0 * eta, 0.5 * m.dom.inradius(), m.dom.inradius(), m.dom.diameter()};
  }
  std::vector<Vec4> centers;
  for (const auto& a : sigma.atoms) centers.push_back(a.x);
  {  // largest cloud masses as extra centers
    std::vector<int> order(cloud.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return mass[a] > mass[b]; });
    for (int i = 0; i < cfg.hotspots && i < static_cast<int>(order.size()); ++i)
      centers.push_back(cloud.pts[order[i]]);
  }
  double best = 0.0;  // the constant test function pairs to |1 - 1| = 0
  for (const Vec4& p : centers)
    for (double c : scales) {
      const double scale = 1.0 / std::max(1.0, c);
      double pf = 0.0;
      for (size_t i = 0; i < cloud.size(); ++i) {
        const double v = c - dist(cloud.pts[i], p);
        if (v > 0.0) pf += mass[i] * v * scale;
      }
      double ps = 0.0;
      for (const auto& a : sigma.atoms) {
        const double v = c - dist(a.x, p);
        if (v > 0.0) ps += a.t * v * scale;
      }
      best = std::max(best, std::abs(pf - ps));
    }
  return best;
}

struct NearestOpts {
  int iters = 100;
  double merge_radius = -1.0;  // <= 0: the mesh spacing
};

// Weighted Lloyd clustering of the density into at most k atoms, then
// canonicalize. Deterministic: greedy mass * distance^2 seeding, ties by
// lowest cloud index.
inline FormalBarycenter nearest_barycenter(const Field& f, int k, const NearestOpts& opts = NearestOpts{}) {
  if (k < 1) throw std::invalid_argument("nearest_barycenter: k must be >= 1");
  MassCloud cloud = mass_cloud(f);
  if (!(cloud.total > 0.0))
    throw std::invalid_argument("nearest_barycenter: density carries no mass");
  std::vector<double> mass = cloud.mass;
  for (double& t : mass) t /= cloud.total;
  const size_t npts = cloud.size();

  std::vector<Vec4> centers;
  {  // greedy seeding
    size_t first = 0;
    for (size_t i = 1; i < npts; ++i)
      if (mass[i] > mass[first]) first = i;
    centers.push_back(cloud.pts[first]);
    std::vector<double> d2(npts);
    for (size_t i = 0; i < npts; ++i) {
      const double d = dist(cloud.pts[i], centers[0]);
      d2[i] = d * d;
    }
    while (centers.size() < static_cast<size_t>(k)) {
      size_t pick = 0;
      double bestscore = -1.0;
      for (size_t i = 0; i < npts; ++i) {
        const double score = mass[i] * d2[i];
        if (score > bestscore) {
          bestscore = score;
          pick = i;
        }
      }
      if (!(bestscore > 0.0)) break;  // all mass already on chosen points
      centers.push_back(cloud.pts[pick]);
      for (size_t i = 0; i < npts; ++i) {
        const double d = dist(cloud.pts[i], centers.back());
        d2[i] = std::min(d2[i], d * d);
      }
    }
  }

  std::vector<int> assign(npts, 0);
  std::vector<double> cmass(centers.size(), 0.0);
  for (int it = 0; it < opts.iters; ++it) {
    bool changed = it == 0;
    for (size_t i = 0; i < npts; ++i) {
      int bestc = 0;
      double bestd = std::numeric_limits<double>::infinity();
      for (size_t c = 0; c < centers.size(); ++c) {
        const double d = dist(cloud.pts[i], centers[c]);
        if (d < bestd) {
          bestd = d;
          bestc = static_cast<int>(c);
        }
      }
      if (assign[i] != bestc) {
        assign[i] = bestc;
        changed = true;
      }
    }
    if (!changed) break;
    std::vector<Vec4> nc(centers.size(), Vec4{0, 0, 0, 0});
    cmass.assign(centers.size(), 0.0);
    for (size_t i = 0; i < npts; ++i) {
      cmass[assign[i]] += mass[i];
      for (int a = 0; a < 4; ++a) nc[assign[i]][a] += mass[i] * cloud.pts[i][a];
    }
    for (size_t c = 0; c < centers.size(); ++c)
      if (cmass[c] > 0.0)
        for (int a = 0; a < 4; ++a) centers[c][a] = nc[c][a] / cmass[c];
  }
  cmass.assign(centers.size(), 0.0);
  for (size_t i = 0; i < npts; ++i) cmass[assign[i]] += mass[i];

  std::vector<FormalBarycenter::Atom> atoms;
  for (size_t c = 0; c < centers.size(); ++c)
    if (cmass[c] > 0.0) atoms.push_back({cmass[c], centers[c]});
  const double mr = opts.merge_radius > 0.0 ? opts.merge_radius : f.mesh->hmin;
  return canonicalize(atoms, mr);
}

}  // namespace mf4d
