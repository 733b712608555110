#pragma once

// The variational layer on top of the discretization: the exponential
// functionals J and I_tau, the compact solution operator T_tau, gradients
// in the H = H^2 cap H^1_0 inner product, and the executable forms of the
// Moser-Trudinger material (gap scan, improved split bound, covering and
// concentration checks).
//
// Everything here leans on the discrete adjointness of the Navier solve:
// h_inner(biharmonic_solve_navier(g), v) equals the quadrature pairing of g
// with v to rounding, so grad_I is the exact gradient of the discrete I_tau
// rather than an O(h^2) approximation of the continuum one.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mf4d/combinatorics.hpp"
#include "mf4d/domain.hpp"
#include "mf4d/errors.hpp"
#include "mf4d/pointcloud.hpp"

namespace mf4d {

// Positive weight h of the problem; stored as log h for overflow-safe
// exponentials. Default is h == 1.
struct WeightH {
  Field logh;
  bool unit = true;

  static WeightH one(const MeshPtr& m) { return WeightH{make_field(m, 0.0), true}; }
  static WeightH from_values(const Field& h) {
    WeightH w{make_field(h.mesh), false};
    for (size_t i = 0; i < h.v.size(); ++i) {
      if (!(h.v[i] > 0.0)) throw std::invalid_argument("WeightH: h must be positive everywhere");
      w.logh.v[i] = std::log(h.v[i]);
    }
    return w;
  }
  double sup_log() const {
    double s = 0.0;
    if (!unit)
      for (double t : logh.v) s = std::max(s, t);
    return s;
  }
};

struct EnergyBreakdown {
  double quadratic = 0.0;  // (1/2) ||u||^2
  double j_term = 0.0;     // J(u)
  double total = 0.0;      // quadratic - tau * j_term
  double tau = 0.0;
};

inline double h_norm_sq(const Field& u) { return h_inner(u, u); }

// J(u) = log( (1/|Omega|) integral h e^u ), max-shifted.
inline double J(const Field& u, const WeightH& h) {
  return log_integral_exp(u, h.unit ? nullptr : &h.logh) - std::log(volume(*u.mesh));
}

inline double J(const Field& u) { return log_integral_exp(u) - std::log(volume(*u.mesh)); }

inline EnergyBreakdown I_tau(const Field& u, double tau, const WeightH& h) {
  if (!(tau > 0.0)) throw std::invalid_argument("I_tau: tau must be > 0");
  EnergyBreakdown e;
  e.tau = tau;
  e.quadratic = 0.5 * h_norm_sq(u);
  e.j_term = J(u, h);
  e.total = e.quadratic - tau * e.j_term;
  return e;
}

// h e^u / integral h e^u; integrates to 1 against the quadrature weights.
inline Field density_rho(const Field& u, const WeightH& h) {
  const Field* lh = h.unit ? nullptr : &h.logh;
  const double lz = log_integral_exp(u, lh);
  Field rho = make_field(u.mesh);
  for (size_t i = 0; i < u.v.size(); ++i)
    rho.v[i] = std::exp(u.v[i] + (lh ? lh->v[i] : 0.0) - lz);
  return rho;
}

// T_tau(u) = tau * Delta^{-2}( h e^u / integral h e^u ), Navier conditions.
inline Field T_tau(const Field& u, double tau, const WeightH& h) {
  if (!(tau > 0.0)) throw std::invalid_argument("T_tau: tau must be > 0");
  return tau * biharmonic_solve_navier(density_rho(u, h));
}

// Riesz representative of dJ(u) in the H inner product.
inline Field grad_J(const Field& u, const WeightH& h) {
  return biharmonic_solve_navier(density_rho(u, h));
}

inline Field grad_I(const Field& u, double tau, const WeightH& h) {
  return u - T_tau(u, tau, h);
}

// Moser-Trudinger slack: log((1/|Omega|) integral e^{u - ubar}) minus
// ||u - ubar||^2 / (128 pi^2). Both sides are functions of u - ubar only,
// so mean shifts cancel up to rounding.
inline double mt_gap(const Field& u) {
  const double ubar = integrate(u) / volume(*u.mesh);
  Field v = u;
  for (double& t : v.v) t -= ubar;
  const double lhs = log_integral_exp(v) - std::log(volume(*u.mesh));
  return lhs - h_norm_sq(v) / (128.0 * pi * pi);
}

// Sub-regions for the improved inequality: metric balls or radial annuli
// about the origin.
struct Region {
  bool is_ball = true;
  Vec4 center{};
  double radius = 0.0;
  double rlo = 0.0, rhi = 0.0;

  static Region ball(const Vec4& c, double r) {
    if (!(r > 0.0)) throw std::invalid_argument("Region: ball radius must be > 0");
    Region g;
    g.is_ball = true;
    g.center = c;
    g.radius = r;
    return g;
  }
  static Region annulus(double lo, double hi) {
    if (!(lo >= 0.0) || !(hi > lo)) throw std::invalid_argument("Region: annulus needs 0 <= rlo < rhi");
    Region g;
    g.is_ball = false;
    g.rlo = lo;
    g.rhi = hi;
    return g;
  }
  bool contains(const Vec4& p) const {
    if (is_ball) return dist(p, center) <= radius;
    const double r = norm4(p);
    return r >= rlo && r <= rhi;
  }
};

// Lower bound for the distance between two regions (0 when they may touch).
inline double region_gap(const Region& a, const Region& b) {
  if (a.is_ball && b.is_ball) return dist(a.center, b.center) - a.radius - b.radius;
  if (!a.is_ball && !b.is_ball) return std::max(a.rlo - b.rhi, b.rlo - a.rhi);
  const Region& bl = a.is_ball ? a : b;
  const Region& an = a.is_ball ? b : a;
  const double rc = norm4(bl.center);
  return std::max(an.rlo - (rc + bl.radius), (rc - bl.radius) - an.rhi);
}

struct ImprovedMtReport {
  bool applicable = false;
  double lhs = 0.0;
  double slope_bound = 0.0;          // ||u||^2 / (128 (l+1) pi^2 - eps_tilde)
  std::vector<double> region_mass;   // relative e^u mass per region
};

// Hypothesis check plus bound bookkeeping for the "divided by (l+1)"
// inequality; regions must be pairwise separated by at least delta0.
inline ImprovedMtReport improved_mt_check(const Field& u, const std::vector<Region>& regions,
                                          double gamma0, double eps_tilde, double delta0) {
  const size_t lp1 = regions.size();
  if (lp1 < 2) throw std::invalid_argument("improved_mt_check: need at least 2 regions");
  if (!(delta0 > 0.0)) throw std::invalid_argument("improved_mt_check: delta0 must be > 0");
  for (size_t i = 0; i < lp1; ++i)
    for (size_t j = i + 1; j < lp1; ++j)
      if (region_gap(regions[i], regions[j]) < delta0)
        throw std::invalid_argument("improved_mt_check: regions overlap or sit closer than delta0");
  if (!(gamma0 > 0.0) || !(gamma0 < 1.0 / static_cast<double>(lp1)))
    throw std::invalid_argument("improved_mt_check: gamma0 must lie in (0, 1/(l+1))");
  const double denom = 128.0 * static_cast<double>(lp1) * pi * pi - eps_tilde;
  if (!(eps_tilde > 0.0) || !(denom > 0.0))
    throw std::invalid_argument("improved_mt_check: eps_tilde out of range");

  // relative e^u masses via the direction-expanded cloud (max-shifted)
  double mx = u.v.empty() ? 0.0 : u.v[0];
  for (double t : u.v) mx = std::max(mx, t);
  Field eu = make_field(u.mesh);
  for (size_t i = 0; i < u.v.size(); ++i) eu.v[i] = std::exp(u.v[i] - mx);
  MassCloud cloud = mass_cloud(eu);
  ImprovedMtReport rep;
  rep.region_mass.assign(lp1, 0.0);
  for (size_t i = 0; i < cloud.size(); ++i)
    for (size_t g = 0; g < lp1; ++g)
      if (regions[g].contains(cloud.pts[i])) {
        rep.region_mass[g] += cloud.mass[i];
        break;
      }
  rep.applicable = cloud.total > 0.0;
  for (double& mgi : rep.region_mass) {
    mgi = cloud.total > 0.0 ? mgi / cloud.total : 0.0;
    if (!(mgi >= gamma0)) rep.applicable = false;
  }
  const double ubar = integrate(u) / volume(*u.mesh);
  Field v = u;
  for (double& t : v.v) t -= ubar;
  rep.lhs = log_integral_exp(v) - std::log(volume(*u.mesh));
  rep.slope_bound = h_norm_sq(u) / denom;
  return rep;
}

struct CoveringResult {
  bool concentrated = false;
  std::vector<Vec4> centers;  // l centers, or l+1 in the spread case
  double radius = 0.0;        // r, or the reduced r_bar
  double captured = 0.0;      // union mass of the l balls (concentrated case)
  double eps_bar = 0.0;       // spread case: min single-ball mass
};

namespace detail {

inline double ball_mass(const MassCloud& cloud, const std::vector<double>& mass,
                        const CloudBins& bins, const Vec4& c, double r) {
  double s = 0.0;
  bins.visit(c, [&](int i) {
    if (mass[i] > 0.0 && dist(cloud.pts[i], c) <= r) s += mass[i];
  });
  return s;
}

// Best ball of radius r against the current (possibly depleted) masses:
// greedy over a candidate set, then mean-shift refinement. Ties keep the
// lowest cloud index.
inline std::pair<Vec4, double> best_ball(const MassCloud& cloud, const std::vector<double>& mass,
                                         const CloudBins& bins, double r, int topk) {
  std::vector<int> order(cloud.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return mass[a] > mass[b]; });
  std::vector<int> cand;
  cand.reserve(topk + 256);
  for (int i = 0; i < static_cast<int>(order.size()) && i < topk; ++i)
    if (mass[order[i]] > 0.0) cand.push_back(order[i]);
  // one representative per occupied bin keeps sparse far regions reachable
  for (const auto& kv : bins.bins) {
    int best = -1;
    for (int i : kv.second)
      if (mass[i] > 0.0 && (best < 0 || mass[i] > mass[best])) best = i;
    if (best >= 0) cand.push_back(best);
  }
  Vec4 bc{};
  double bm = -1.0;
  for (int i : cand) {
    const double s = ball_mass(cloud, mass, bins, cloud.pts[i], r);
    if (s > bm) {
      bm = s;
      bc = cloud.pts[i];
    }
  }
  // remaining-mass centroid as an extra seed (helps symmetric densities)
  {
    Vec4 cm{0.0, 0.0, 0.0, 0.0};
    double tot = 0.0;
    for (size_t i = 0; i < cloud.size(); ++i) {
      tot += mass[i];
      for (int a = 0; a < 4; ++a) cm[a] += mass[i] * cloud.pts[i][a];
    }
    if (tot > 0.0) {
      for (int a = 0; a < 4; ++a) cm[a] /= tot;
      const double s = ball_mass(cloud, mass, bins, cm, r);
      if (s > bm) {
        bm = s;
        bc = cm;
      }
    }
  }
  for (int pass = 0; pass < 8; ++pass) {
    Vec4 cm{0.0, 0.0, 0.0, 0.0};
    double tot = 0.0;
    bins.visit(bc, [&](int i) {
      if (mass[i] > 0.0 && dist(cloud.pts[i], bc) <= r) {
        tot += mass[i];
        for (int a = 0; a < 4; ++a) cm[a] += mass[i] * cloud.pts[i][a];
      }
    });
    if (tot <= 0.0) break;
    for (int a = 0; a < 4; ++a) cm[a] /= tot;
    const double s = ball_mass(cloud, mass, bins, cm, r);
    if (s > bm + 1e-15 * (1.0 + bm)) {
      bm = s;
      bc = cm;
    } else {
      break;
    }
  }
  return {bc, bm};
}

}  // namespace detail

// Greedy covering search from the covering lemma: either l balls of radius
// r capture >= 1-eps of the mass, or l+1 well-separated smaller balls each
// hold eps_bar of it. Budget exhaustion is an InconclusiveError, not a
// silent answer.
inline CoveringResult covering_select(const Field& f, int l, double eps, double r,
                                      int topk = 4096, double eps_bar_floor = 1e-4) {
  if (l < 1) throw std::invalid_argument("covering_select: l must be positive");
  if (!(eps > 0.0) || !(eps < 1.0)) throw std::invalid_argument("covering_select: eps must be in (0,1)");
  if (!(r > 0.0)) throw std::invalid_argument("covering_select: r must be > 0");
  MassCloud cloud = mass_cloud(f);
  if (!(cloud.total > 0.0)) throw std::invalid_argument("covering_select: density carries no mass");
  std::vector<double> mass = cloud.mass;
  for (double& mm : mass) mm /= cloud.total;

  detail::CloudBins bins;
  bins.build(cloud, r);
  CoveringResult res;
  res.radius = r;
  double captured = 0.0;
  for (int pick = 0; pick < l; ++pick) {
    auto [c, s] = detail::best_ball(cloud, mass, bins, r, topk);
    if (s <= 0.0) break;
    res.centers.push_back(c);
    captured += s;
    for (size_t i = 0; i < cloud.size(); ++i)
      if (mass[i] > 0.0 && dist(cloud.pts[i], c) <= r) mass[i] = 0.0;
  }
  res.captured = captured;
  if (captured >= 1.0 - eps) {
    res.concentrated = true;
    return res;
  }

  // spread phase: l+1 balls of radius r_bar with disjoint 2 r_bar-balls
  for (double rbar : {0.5 * r, 0.25 * r, 0.125 * r}) {
    std::vector<double> m2 = cloud.mass;
    for (double& mm : m2) mm /= cloud.total;
    detail::CloudBins b2;
    b2.build(cloud, rbar);
    std::vector<Vec4> centers;
    double worst = 1.0;
    for (int pick = 0; pick <= l; ++pick) {
      auto [c, s] = detail::best_ball(cloud, m2, b2, rbar, topk);
      if (s <= 0.0) break;
      centers.push_back(c);
      worst = std::min(worst, s);
      // depleting a 5 r_bar neighborhood keeps later centers > 4 r_bar away
      for (size_t i = 0; i < cloud.size(); ++i)
        if (m2[i] > 0.0 && dist(cloud.pts[i], c) <= 5.0 * rbar) m2[i] = 0.0;
    }
    bool separated = centers.size() == static_cast<size_t>(l) + 1;
    for (size_t i = 0; separated && i < centers.size(); ++i)
      for (size_t j = i + 1; j < centers.size(); ++j)
        if (!(dist(centers[i], centers[j]) > 4.0 * rbar)) separated = false;
    if (separated && worst >= eps_bar_floor) {
      CoveringResult sp;
      sp.concentrated = false;
      sp.centers = std::move(centers);
      sp.radius = rbar;
      sp.eps_bar = worst;
      sp.captured = captured;
      return sp;
    }
  }
  throw InconclusiveError("covering_select: no certified configuration within the search budget");
}

struct ConcentrationReport {
  double I_value = 0.0;       // I_tau at the normalized field
  int k = 0;                  // window index of tau
  bool concentrated = false;  // k balls of radius r hold >= 1 - eps
  double residual_mass = 0.0;
  std::vector<Vec4> points;   // centers when concentrated
};

// Lemma-2.4-shaped check: normalize (1/|Omega|) integral e^u = 1, run the
// covering search with l = k balls, report alongside the energy.
inline ConcentrationReport concentration_check(const Field& u, double tau, double eps, double r) {
  const long long k = window_of_tau(tau);
  if (k < 1)
    throw std::invalid_argument("concentration_check: tau must lie above the first threshold");
  ConcentrationReport rep;
  rep.k = static_cast<int>(k);
  Field v = u;
  const double shift = J(u);
  for (double& t : v.v) t -= shift;
  rep.I_value = I_tau(v, tau, WeightH::one(u.mesh)).total;
  Field dens = make_field(u.mesh);
  for (size_t i = 0; i < v.v.size(); ++i) dens.v[i] = std::exp(v.v[i]);
  CoveringResult cov = covering_select(dens, rep.k, eps, r);
  rep.concentrated = cov.concentrated;
  rep.residual_mass = cov.concentrated ? 1.0 - cov.captured : 1.0;
  if (cov.concentrated) rep.points = cov.centers;
  return rep;
}

}  // namespace mf4d
