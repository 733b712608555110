#pragma once

// Pseudogradient dynamics and Newton continuation for the fixed point map
// T_tau, plus the spectral bookkeeping that turns a solution set into an
// index sum comparable with the degree formula.
//
// The descent fields follow the compensated construction: Z pairs the two
// gradients so that <Z, grad I> <= 0 everywhere, W throttles the raw
// gradient through the ratio |grad I| / |grad K|, and W~ interpolates back
// to -grad I inside a ball where no compensation is needed. All cutoffs are
// C^2 quintics, so the fields inherit two derivatives from the functionals.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "mf4d/combinatorics.hpp"
#include "mf4d/domain.hpp"
#include "mf4d/errors.hpp"
#include "mf4d/functional.hpp"
#include "mf4d/linalg.hpp"

namespace mf4d {

namespace detail {

// C^2 ramp: 0 below 0, 1 above 1, s^3 (10 - 15 s + 6 s^2) between.
inline double smoothstep(double s) {
  if (s <= 0.0) return 0.0;
  if (s >= 1.0) return 1.0;
  return s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
}

// max |d smoothstep| = 30/16 at s = 1/2; the shell gradient bound uses it.
inline double smoothstep_deriv(double s) {
  if (s <= 0.0 || s >= 1.0) return 0.0;
  return 30.0 * s * s * (1.0 - s) * (1.0 - s);
}

}  // namespace detail

struct FlowConfig {
  double eps = 1e-3;  // ramp threshold on the ratio |grad I| / |grad K|
  double R = 10.0;    // cutoff radius of theta in the H norm
  std::array<double, 2> lambda_window{0.0, 0.0};  // tau window the run refers to
  double max_time = 200.0;
  double dt_init = 1e-2;
  double dt_min = 1e-12;
  double rtol = 1e-7;     // per-step error control, H norm
  double stat_tol = 1e-6;  // stationarity stop on ||W~||
  int max_steps = 200000;
  bool keep_states = false;

  void validate() const {
    if (!(eps > 0.0) || !(R > 0.0)) throw std::invalid_argument("FlowConfig: eps, R must be > 0");
    if (!(dt_init > 0.0) || !(dt_min > 0.0) || dt_min > dt_init)
      throw std::invalid_argument("FlowConfig: need 0 < dt_min <= dt_init");
    if (!(rtol > 0.0) || !(stat_tol > 0.0) || !(max_time > 0.0) || max_steps < 1)
      throw std::invalid_argument("FlowConfig: bad step controls");
  }
};

// Containment radius from a bound on the solution norms: theta must be
// identically one on everything the flow is meant to retract onto.
inline FlowConfig default_flow_config(double solution_norm_bound) {
  FlowConfig c;
  c.R = std::max(1.0, 4.0 * solution_norm_bound);
  return c;
}

inline Field field_Z(const Field& u, double tau, const WeightH& h) {
  Field gi = grad_I(u, tau, h);
  Field gk = grad_J(u, h);
  return (-h_norm(gk)) * gi + (-h_norm(gi)) * gk;
}

inline Field field_Z(const Field& u, double tau) {
  return field_Z(u, tau, WeightH::one(u.mesh));
}

inline Field field_W(const Field& u, double tau, double eps, const WeightH& h) {
  if (!(eps > 0.0)) throw std::invalid_argument("field_W: eps must be > 0");
  Field gi = grad_I(u, tau, h);
  Field gk = grad_J(u, h);
  const double ni = h_norm(gi), nk = h_norm(gk);
  const double zeta = nk == 0.0 ? 1.0 : ni / nk;
  const double om = detail::smoothstep(zeta / eps - 1.0);
  // W = -omega grad I + Z, assembled in one pass
  return (-(om + nk)) * gi + (-ni) * gk;
}

inline Field field_W(const Field& u, double tau, double eps) {
  return field_W(u, tau, eps, WeightH::one(u.mesh));
}

namespace detail {

struct VectorFieldEval {
  Field w;
  double grad_i_norm = 0.0;
  double u_norm = 0.0;
};

inline VectorFieldEval eval_w_tilde(const Field& u, double tau, const FlowConfig& cfg,
                                    const WeightH& h) {
  VectorFieldEval ev;
  ev.u_norm = h_norm(u);
  Field gi = grad_I(u, tau, h);
  ev.grad_i_norm = h_norm(gi);
  if (ev.u_norm <= cfg.R) {  // theta == 1: exactly the negative gradient
    ev.w = -1.0 * gi;
    return ev;
  }
  Field gk = grad_J(u, h);
  const double nk = h_norm(gk);
  const double zeta = nk == 0.0 ? 1.0 : ev.grad_i_norm / nk;
  const double om = smoothstep(zeta / cfg.eps - 1.0);
  const double theta = 1.0 - smoothstep(ev.u_norm / cfg.R - 1.0);
  // W~ = -theta grad I + (1 - theta) W
  const double ci = -(theta + (1.0 - theta) * (om + nk));
  const double ck = -(1.0 - theta) * ev.grad_i_norm;
  ev.w = ci * gi + ck * gk;
  return ev;
}

}  // namespace detail

inline Field field_W_tilde(const Field& u, double tau, const FlowConfig& cfg,
                           const WeightH& h) {
  return detail::eval_w_tilde(u, tau, cfg, h).w;
}

inline Field field_W_tilde(const Field& u, double tau, const FlowConfig& cfg) {
  return field_W_tilde(u, tau, cfg, WeightH::one(u.mesh));
}

enum class FlowStop { stationary, sublevel, time_limit, step_limit };

struct FlowSample {
  double t = 0.0;
  double i_value = 0.0;
  double u_norm = 0.0;
  double grad_norm = 0.0;
};

struct Trajectory {
  std::vector<FlowSample> samples;
  std::vector<Field> states;  // filled only when FlowConfig::keep_states
  Field u_final;
  double t_final = 0.0;
  FlowStop reason = FlowStop::time_limit;
  // first hitting time of the target sublevel, linearly interpolated inside
  // the crossing step; NaN when no target was given or it was never hit
  double sublevel_time = std::numeric_limits<double>::quiet_NaN();
  int steps_accepted = 0;
  int steps_rejected = 0;
};

// Step size underflow, carrying the last reached state for the report.
struct FlowStall : FlowStallError {
  Field last_state;
  double t = 0.0;
  double grad_norm = 0.0;
  FlowStall(const std::string& msg, Field u, double t_, double g)
      : FlowStallError(msg), last_state(std::move(u)), t(t_), grad_norm(g) {}
};

inline void write_trajectory_csv(std::ostream& os, const Trajectory& tr) {
  os << "t,i_value,h_norm,grad_norm\n";
  const auto prec = os.precision(17);
  for (const FlowSample& s : tr.samples)
    os << s.t << ',' << s.i_value << ',' << s.u_norm << ',' << s.grad_norm << '\n';
  os.precision(prec);
}

// Explicit Bogacki-Shampine 3(2) integration of u' = W~(u). Steps are
// accepted on the embedded H-norm error test and on descent of I; either
// failure shrinks the step, and underflow below dt_min raises FlowStall.
inline Trajectory flow_integrate(const Field& u0, double tau, const FlowConfig& cfg,
                                 std::optional<double> sublevel = std::nullopt) {
  cfg.validate();
  if (!(tau > 0.0)) throw std::invalid_argument("flow_integrate: tau must be > 0");
  const WeightH h = WeightH::one(u0.mesh);
  Trajectory tr;
  Field u = u0;
  double t = 0.0;
  double dt = cfg.dt_init;
  double ivalue = I_tau(u, tau, h).total;
  detail::VectorFieldEval k1 = detail::eval_w_tilde(u, tau, cfg, h);

  auto push = [&](double tt, double ii, const detail::VectorFieldEval& ev) {
    tr.samples.push_back({tt, ii, ev.u_norm, ev.grad_i_norm});
    if (cfg.keep_states) tr.states.push_back(u);
  };
  push(0.0, ivalue, k1);

  bool done = false;
  if (sublevel && ivalue <= *sublevel) {
    tr.reason = FlowStop::sublevel;
    tr.sublevel_time = 0.0;
    done = true;
  }

  while (!done) {
    if (h_norm(k1.w) < cfg.stat_tol) {
      tr.reason = FlowStop::stationary;
      break;
    }
    if (t >= cfg.max_time * (1.0 - 1e-15)) {
      tr.reason = FlowStop::time_limit;
      break;
    }
    if (tr.steps_accepted + tr.steps_rejected >= cfg.max_steps) {
      tr.reason = FlowStop::step_limit;
      break;
    }
    dt = std::min(dt, cfg.max_time - t);

    if (dt < cfg.dt_min)
      throw FlowStall("flow stall: step underflow at t = " + std::to_string(t), u, t,
                      k1.grad_i_norm);
    Field u2 = u + (0.5 * dt) * k1.w;
    detail::VectorFieldEval k2 = detail::eval_w_tilde(u2, tau, cfg, h);
    Field u3 = u + (0.75 * dt) * k2.w;
    detail::VectorFieldEval k3 = detail::eval_w_tilde(u3, tau, cfg, h);
    Field unew = u + (dt * 2.0 / 9.0) * k1.w + (dt / 3.0) * k2.w + (dt * 4.0 / 9.0) * k3.w;
    detail::VectorFieldEval k4 = detail::eval_w_tilde(unew, tau, cfg, h);
    Field ef = (-5.0 / 72.0) * k1.w + (1.0 / 12.0) * k2.w + (1.0 / 9.0) * k3.w +
               (-1.0 / 8.0) * k4.w;
    const double errn = dt * h_norm(ef);
    const double tol = cfg.rtol * (1.0 + k4.u_norm);
    const double inew = I_tau(unew, tau, h).total;
    const bool descent_ok =
        std::isfinite(inew) && inew <= ivalue + 1e-9 * (1.0 + std::abs(ivalue));

    if (errn <= tol && descent_ok) {
      const double iprev = ivalue;
      t += dt;
      u = std::move(unew);
      ivalue = inew;
      k1 = std::move(k4);  // first-same-as-last
      ++tr.steps_accepted;
      push(t, ivalue, k1);
      if (sublevel && ivalue <= *sublevel) {
        const double drop = iprev - ivalue;
        tr.sublevel_time = drop > 0.0 ? t - dt + dt * (iprev - *sublevel) / drop : t;
        tr.reason = FlowStop::sublevel;
        done = true;
      }
      const double grow = errn > 0.0 ? 0.9 * std::cbrt(tol / errn) : 5.0;
      dt *= std::clamp(grow, 0.2, 5.0);
    } else {
      ++tr.steps_rejected;
      const double shrink =
          errn > tol ? std::clamp(0.9 * std::cbrt(tol / errn), 0.1, 0.7) : 0.5;
      dt *= shrink;
    }
  }

  tr.u_final = std::move(u);
  tr.t_final = t;
  return tr;
}

struct RetractionRecord {
  bool hit = false;
  double t_a = 0.0;  // first hitting time of the level, 0 if already below
  Field u_final;
  double grad_norm = 0.0;
  double level = 0.0;
  std::string note;  // nonempty on any failure to reach the level
  Trajectory traj;
};

inline RetractionRecord retract_to_sublevel(const Field& u0, double tau, double level_a,
                                            const FlowConfig& cfg) {
  RetractionRecord rec;
  rec.level = level_a;
  const WeightH h = WeightH::one(u0.mesh);
  if (I_tau(u0, tau, h).total <= level_a) {
    rec.hit = true;
    rec.u_final = u0;
    rec.grad_norm = h_norm(grad_I(u0, tau, h));
    return rec;
  }
  try {
    Trajectory tr = flow_integrate(u0, tau, cfg, level_a);
    rec.u_final = tr.u_final;
    rec.grad_norm = tr.samples.empty() ? 0.0 : tr.samples.back().grad_norm;
    if (tr.reason == FlowStop::sublevel) {
      rec.hit = true;
      rec.t_a = tr.sublevel_time;
    } else if (tr.reason == FlowStop::stationary) {
      rec.note = "stationary point above the target level";
    } else {
      rec.note = "flow budget exhausted above the target level";
    }
    rec.traj = std::move(tr);
  } catch (const FlowStall& st) {
    rec.u_final = st.last_state;
    rec.grad_norm = st.grad_norm;
    rec.note = std::string("retraction failure: ") + st.what();
  }
  return rec;
}

// ---------------------------------------------------------------------------
// Spectrum of the linearization DT_tau(u) v = tau Delta^{-2}(rho (v - int rho v))

struct EigOpts {
  int block = 8;    // subspace dimension per sector
  int iters = 40;   // power iterations before Rayleigh-Ritz
  long long max_sector = 12;
  double stop_margin = 1e-6;  // sweep stops once a sector tops out below 1 - margin
  uint64_t seed = 90210;
};

struct SectorSpectrum {
  long long sector = -1;  // angular momentum; -1 means the full grid space
  int multiplicity = 1;   // (l+1)^2 spherical harmonics per radial eigenvalue
  std::vector<double> eigs;  // descending
};

// Top eigenvalues of DT_tau(u), largest first per sector. Radial meshes are
// swept sector by sector: the radial reduction of Delta^{-2} on the band of
// degree-l harmonics is two sector solves, the rho-mean correction lives in
// l = 0 only (rho is radial, so int rho v = 0 for l >= 1). Each block is
// kept B-orthonormal in the inner product <x,z> = int rho x z minus the
// rank-one mean term, which is exactly the one making the action self
// adjoint, so a symmetric Ritz projection is legitimate. The sweep stops at
// the first sector whose top eigenvalue falls below 1 - stop_margin; the
// tops decrease in l (the centrifugal term only stiffens the solves), so
// deeper sectors cannot contribute instabilities or degeneracies.
inline std::vector<SectorSpectrum> dt_spectrum(const Field& u, double tau, const WeightH& h,
                                               const EigOpts& opts = {}) {
  if (!(tau > 0.0)) throw std::invalid_argument("dt_spectrum: tau must be > 0");
  if (opts.block < 1 || opts.iters < 1) throw std::invalid_argument("dt_spectrum: bad opts");
  const Mesh& m = *u.mesh;
  const Field rho = density_rho(u, h);
  std::mt19937_64 rng(opts.seed);

  auto rho_dot = [&](const Vec& x, const Vec& z) {
    double s = 0.0;
    for (size_t i = 0; i < x.size(); ++i) s += m.w[i] * rho.v[i] * x[i] * z[i];
    return s;
  };
  auto rho_sum = [&](const Vec& x) {
    double s = 0.0;
    for (size_t i = 0; i < x.size(); ++i) s += m.w[i] * rho.v[i] * x[i];
    return s;
  };

  const bool radial = m.mode == MeshMode::radial;
  const long long lmax = radial ? opts.max_sector : 0;
  std::vector<SectorSpectrum> out;

  for (long long l = 0; l <= lmax; ++l) {
    const bool mean_correct = !radial || l == 0;
    auto binner = [&](const Vec& x, const Vec& z) {
      double s = rho_dot(x, z);
      if (mean_correct) s -= rho_sum(x) * rho_sum(z);
      return s;
    };
    auto apply = [&](const Vec& x) {
      Field y = make_field(u.mesh);
      const double c = mean_correct ? rho_sum(x) : 0.0;
      for (size_t i = 0; i < x.size(); ++i) y.v[i] = rho.v[i] * (x[i] - c);
      Field g = radial ? sector_poisson_zero(sector_poisson_zero(y, l), l)
                       : biharmonic_solve_navier(y);
      for (double& t : g.v) t *= tau;
      return std::move(g.v);
    };
    // land the block in the range of the operator before orthonormalizing,
    // so the l = 0 mean kernel never pollutes the basis
    std::vector<Vec> X;
    X.reserve(opts.block);
    for (int i = 0; i < opts.block; ++i) X.push_back(apply(random_field(u.mesh, rng()).v));

    double nscale = 0.0;
    auto orthonormalize = [&](std::vector<Vec>& B) {
      size_t kept = 0;
      for (size_t i = 0; i < B.size(); ++i) {
        Vec& x = B[i];
        for (int pass = 0; pass < 2; ++pass)
          for (size_t j = 0; j < kept; ++j) axpy(-binner(x, B[j]), B[j], x);
        const double nb = binner(x, x);
        nscale = std::max(nscale, nb);
        if (nb > 1e-24 * std::max(nscale, 1e-300)) {
          scal(1.0 / std::sqrt(nb), x);
          if (kept != i) B[kept] = std::move(x);
          ++kept;
        }
      }
      B.resize(kept);
    };

    for (int it = 0; it < opts.iters; ++it) {
      orthonormalize(X);
      if (X.empty()) break;
      for (Vec& x : X) x = apply(x);
    }
    orthonormalize(X);

    SectorSpectrum ss;
    ss.sector = radial ? l : -1;
    ss.multiplicity = radial ? static_cast<int>((l + 1) * (l + 1)) : 1;
    if (!X.empty()) {
      const int q = static_cast<int>(X.size());
      std::vector<Vec> ax(q);
      for (int i = 0; i < q; ++i) ax[i] = apply(X[i]);
      Vec a(static_cast<size_t>(q) * q);
      for (int i = 0; i < q; ++i)
        for (int j = 0; j <= i; ++j) {
          const double v = 0.5 * (binner(ax[i], X[j]) + binner(ax[j], X[i]));
          a[static_cast<size_t>(i) * q + j] = v;
          a[static_cast<size_t>(j) * q + i] = v;
        }
      SymEig e = jacobi_eigensymm(std::move(a), q);
      ss.eigs.assign(e.values.rbegin(), e.values.rend());
    }
    out.push_back(std::move(ss));
    if (!radial) break;
    if (l >= 1 && !out.back().eigs.empty() &&
        out.back().eigs.front() < 1.0 - opts.stop_margin)
      break;
  }
  return out;
}

struct StabilityReport {
  int unstable_count = 0;  // eigenvalues of DT above 1, with multiplicity
  bool degenerate = false;
  double nearest_to_one = std::numeric_limits<double>::infinity();
  double top_eigenvalue = -std::numeric_limits<double>::infinity();
  std::vector<SectorSpectrum> spectrum;
  std::vector<std::string> notes;

  int index() const {
    if (degenerate) return 0;
    return unstable_count % 2 == 0 ? 1 : -1;
  }
};

inline StabilityReport stability_report(const Field& u, double tau, const WeightH& h,
                                        double band = 1e-6, const EigOpts& opts = {}) {
  StabilityReport rep;
  rep.spectrum = dt_spectrum(u, tau, h, opts);
  for (const SectorSpectrum& ss : rep.spectrum) {
    size_t above = 0;
    for (double mu : ss.eigs) {
      rep.top_eigenvalue = std::max(rep.top_eigenvalue, mu);
      rep.nearest_to_one = std::min(rep.nearest_to_one, std::abs(mu - 1.0));
      if (std::abs(mu - 1.0) <= band) {
        rep.degenerate = true;
        rep.notes.push_back("eigenvalue " + std::to_string(mu) + " within " +
                            std::to_string(band) + " of 1 in sector " +
                            std::to_string(ss.sector));
      } else if (mu > 1.0) {
        rep.unstable_count += ss.multiplicity;
        ++above;
      }
    }
    if (!ss.eigs.empty() && above == ss.eigs.size()) {
      rep.degenerate = true;
      rep.notes.push_back("unstable block saturated in sector " + std::to_string(ss.sector) +
                          "; the count is only a lower bound");
    }
  }
  const SectorSpectrum& last = rep.spectrum.back();
  if (u.mesh->mode == MeshMode::radial && last.sector == opts.max_sector &&
      !last.eigs.empty() && last.eigs.front() >= 1.0 - band) {
    rep.degenerate = true;
    rep.notes.push_back("sector sweep capped before the spectrum fell below 1");
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Newton solves and continuation

struct NewtonOpts {
  int max_iters = 40;
  double tol_rel = 1e-9;  // accept at ||u - T(u)|| < tol_rel (1 + ||u||)
  int gmres_restart = 30;
  int gmres_maxit = 150;
  double fd_eps = 1e-6;  // relative size of the directional difference step
  bool compute_index = true;
  double degeneracy_band = 1e-6;
  EigOpts eig;
};

struct ContinuationRecord {
  double tau = 0.0;
  Field u;
  double residual = std::numeric_limits<double>::infinity();  // ||u - T(u)|| in H
  int index = 0;            // (-1)^unstable_count; 0 when degenerate or unknown
  int unstable_count = -1;  // -1: not computed
  double h_norm_u = 0.0;
  bool converged = false;
  bool degenerate = false;
  int iters = 0;
  std::vector<std::string> notes;
};

namespace detail {

// Damped Newton on F(u) = u - T_tau(u) + shift. Jacobian actions are central
// differences of T in the step direction (never an assembled matrix); the
// difference step is scaled so the probe has H norm fd_eps (1 + ||u||).
inline ContinuationRecord newton_core(double tau, const Field& u_init, const WeightH& h,
                                      const Field* shift, const NewtonOpts& opts) {
  if (!(tau > 0.0)) throw std::invalid_argument("newton: tau must be > 0");
  ContinuationRecord rec;
  rec.tau = tau;
  rec.u = u_init;

  auto F_of = [&](const Field& x) {
    Field f = grad_I(x, tau, h);
    if (shift) f = f + *shift;
    return f;
  };

  Field F = F_of(rec.u);
  double r = h_norm(F);
  for (int it = 0; it < opts.max_iters; ++it) {
    const double un = h_norm(rec.u);
    if (r < opts.tol_rel * (1.0 + un)) break;
    const double eta = std::clamp(std::sqrt(r / (1.0 + un)), 1e-5, 0.5);
    LinOp applyJ = [&](const Vec& x, Vec& y) {
      Field vx{rec.u.mesh, x};
      const double nv = h_norm(vx);
      y = x;
      if (nv == 0.0) return;
      const double e = opts.fd_eps * (1.0 + un) / nv;
      Field tp = T_tau(rec.u + e * vx, tau, h);
      Field tm = T_tau(rec.u + (-e) * vx, tau, h);
      for (size_t i = 0; i < y.size(); ++i) y[i] -= (tp.v[i] - tm.v[i]) / (2.0 * e);
    };
    Vec b(F.v.size());
    for (size_t i = 0; i < b.size(); ++i) b[i] = -F.v[i];
    GmresResult gm = gmres_solve(applyJ, b, opts.gmres_restart, opts.gmres_maxit, eta);
    Field s{rec.u.mesh, std::move(gm.x)};

    bool moved = false;
    double alpha = 1.0;
    for (int ls = 0; ls < 12; ++ls, alpha *= 0.5) {
      Field utry = rec.u + alpha * s;
      Field ftry = F_of(utry);
      const double rtry = h_norm(ftry);
      if (std::isfinite(rtry) && rtry <= (1.0 - 1e-4 * alpha) * r) {
        rec.u = std::move(utry);
        F = std::move(ftry);
        r = rtry;
        moved = true;
        break;
      }
    }
    rec.iters = it + 1;
    if (!moved) {
      rec.notes.push_back("line search stalled at residual " + std::to_string(r));
      break;
    }
  }
  rec.residual = r;
  rec.h_norm_u = h_norm(rec.u);
  rec.converged = r < opts.tol_rel * (1.0 + rec.h_norm_u);
  return rec;
}

}  // namespace detail

inline ContinuationRecord newton_solve(double tau, const Field& u_init,
                                       const NewtonOpts& opts = {}) {
  const WeightH h = WeightH::one(u_init.mesh);
  ContinuationRecord rec = detail::newton_core(tau, u_init, h, nullptr, opts);
  if (rec.converged && opts.compute_index) {
    StabilityReport st = stability_report(rec.u, tau, h, opts.degeneracy_band, opts.eig);
    rec.unstable_count = st.unstable_count;
    rec.degenerate = st.degenerate;
    rec.index = st.index();
    rec.notes.insert(rec.notes.end(), st.notes.begin(), st.notes.end());
  }
  return rec;
}

struct ContinuationResult {
  std::vector<ContinuationRecord> records;
  std::vector<std::string> events;  // splits, halvings, terminations, blow-up flags
  bool blow_up = false;
  Vec4 blow_up_location{};
  double blow_up_value = 0.0;
};

// Natural-parameter continuation over [tau_lo, tau_hi]. Interior threshold
// crossings split the range (the degree jumps there and no branch is
// continued through); failed steps are bisected up to six levels before the
// branch is declared terminated. Everything is deterministic in the seeds.
inline ContinuationResult continuation(const MeshPtr& mesh, double tau_lo, double tau_hi,
                                       int steps, const std::vector<Field>& seeds,
                                       const NewtonOpts& opts = {}) {
  if (!(0.0 < tau_lo) || !(tau_lo < tau_hi))
    throw std::invalid_argument("continuation: need 0 < tau_lo < tau_hi");
  if (steps < 1) throw std::invalid_argument("continuation: steps must be >= 1");
  if (seeds.empty()) throw std::invalid_argument("continuation: need at least one seed");
  for (const Field& s : seeds)
    if (s.mesh != mesh) throw std::invalid_argument("continuation: seed on a different mesh");

  const double margin = 0.005 * tau_threshold(1);
  std::vector<double> cuts;
  for (long long k = 1; tau_threshold(k) < tau_hi + margin; ++k) {
    const double t = tau_threshold(k);
    if (std::abs(tau_lo - t) < margin || std::abs(tau_hi - t) < margin)
      throw std::invalid_argument("continuation: endpoint within the threshold margin");
    if (t > tau_lo && t < tau_hi) cuts.push_back(t);
  }

  ContinuationResult out;
  std::vector<std::pair<double, double>> segs;
  double cur = tau_lo;
  for (double t : cuts) {
    segs.emplace_back(cur, t - margin);
    out.events.push_back("split at threshold tau = " + std::to_string(t));
    cur = t + margin;
  }
  segs.emplace_back(cur, tau_hi);

  Field warm;
  bool have_warm = false;
  for (const auto& [slo, shi] : segs) {
    const int nseg = std::max(
        1, static_cast<int>(std::llround(steps * (shi - slo) / (tau_hi - tau_lo))));
    Field u_cur;
    bool alive = false;
    {
      std::vector<const Field*> starts;
      if (have_warm) starts.push_back(&warm);
      for (const Field& s : seeds) starts.push_back(&s);
      for (size_t i = 0; i < starts.size(); ++i) {
        ContinuationRecord rec = newton_solve(slo, *starts[i], opts);
        if (rec.converged) {
          if (i > 0)
            out.events.push_back("seed " + std::to_string(i) + " opened the branch at tau = " +
                                 std::to_string(slo));
          u_cur = rec.u;
          out.records.push_back(std::move(rec));
          alive = true;
          break;
        }
      }
    }
    if (!alive) {
      out.events.push_back("no seed converged at tau = " + std::to_string(slo));
      have_warm = false;
      continue;
    }

    std::function<bool(double, double, int)> advance = [&](double t_from, double t_to,
                                                           int depth) -> bool {
      ContinuationRecord rec = newton_solve(t_to, u_cur, opts);
      if (rec.converged) {
        u_cur = rec.u;
        out.records.push_back(std::move(rec));
        return true;
      }
      if (depth >= 6) return false;
      out.events.push_back("step halved at tau = " + std::to_string(t_to));
      const double mid = 0.5 * (t_from + t_to);
      return advance(t_from, mid, depth + 1) && advance(mid, t_to, depth + 1);
    };

    bool terminated = false;
    for (int i = 1; i <= nseg; ++i) {
      const double t_prev = slo + (shi - slo) * (i - 1) / nseg;
      const double t_next = slo + (shi - slo) * i / nseg;
      if (!advance(t_prev, t_next, 0)) {
        out.events.push_back("branch terminated at tau = " + std::to_string(t_next));
        terminated = true;
        break;
      }
    }
    warm = u_cur;
    have_warm = !terminated;
  }

  // blow-up scan: flag any record whose sup norm dwarfs the one at the
  // median record of its window, and report where the maximum sits
  std::map<long long, std::vector<size_t>> by_window;
  for (size_t i = 0; i < out.records.size(); ++i)
    by_window[window_of_tau(out.records[i].tau)].push_back(i);
  auto max_abs = [&](const Field& f, size_t& arg) {
    double mx = 0.0;
    arg = 0;
    for (size_t i = 0; i < f.v.size(); ++i)
      if (std::abs(f.v[i]) > mx) {
        mx = std::abs(f.v[i]);
        arg = i;
      }
    return mx;
  };
  for (auto& [k, idx] : by_window) {
    std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) {
      return out.records[a].tau < out.records[b].tau;
    });
    size_t dummy = 0;
    const double ref = max_abs(out.records[idx[idx.size() / 2]].u, dummy);
    for (size_t i : idx) {
      size_t arg = 0;
      const double mx = max_abs(out.records[i].u, arg);
      if (mx > 8.0 * ref && ref > 0.0) {
        out.blow_up = true;
        out.blow_up_value = mx;
        out.blow_up_location = node_point(*mesh, arg);
        out.events.push_back("blow-up flag at tau = " + std::to_string(out.records[i].tau) +
                             ", sup |u| = " + std::to_string(mx));
      }
    }
  }
  return out;
}

struct DegreeReport {
  double tau = 0.0;
  long long k = 0;
  Integer formula_degree{0};
  Integer sigma_euler{0};  // Euler characteristic of the top stratum: d = 1 - chi
  long long index_sum = 0;
  int solutions_found = 0;
  int degenerate_count = 0;
  int unconverged_count = 0;
  bool certified = false;  // coercive window with a closed accounting
  bool consistent = false;
  std::string caveat;
};

inline DegreeReport degree_compare(double tau, const std::vector<ContinuationRecord>& records,
                                   long long chi) {
  DegreeReport rep;
  rep.tau = tau;
  rep.k = window_of_tau(tau);
  rep.formula_degree = degree_from_tau(tau, chi);
  rep.sigma_euler = barycenter_euler(chi, rep.k);
  for (const ContinuationRecord& r : records) {
    if (!r.converged) {
      ++rep.unconverged_count;
      continue;
    }
    ++rep.solutions_found;
    if (r.degenerate || r.index == 0)
      ++rep.degenerate_count;
    else
      rep.index_sum += r.index;
  }
  rep.consistent =
      rep.degenerate_count == 0 && Integer(rep.index_sum) == rep.formula_degree;
  rep.certified = rep.k == 0 && rep.degenerate_count == 0 && rep.unconverged_count == 0 &&
                  rep.solutions_found > 0;
  if (rep.degenerate_count > 0)
    rep.caveat = "degenerate records carry no index; the sum is inconclusive";
  else if (rep.k >= 1)
    rep.caveat = "completeness of the solution set is not certified for k >= 1; "
                 "the index sum is a consistency check";
  else if (!rep.certified)
    rep.caveat = "no closed accounting: unconverged records or an empty solution set";
  return rep;
}

// ---------------------------------------------------------------------------
// Sard-style perturbation around a finite solution set

struct SardRetryError : InconclusiveError {
  using InconclusiveError::InconclusiveError;
};

// I~(u) = I(u) + p(u) <u0, u>, with p a C^2 bump that is 1 within delta of
// the solution set and 0 beyond 2 delta. Outside the far shell the values
// and gradients of I~ are those of I, bit for bit: p short-circuits to 0.
struct PerturbedFunctional {
  double tau = 0.0;
  double delta = 0.0;
  std::vector<Field> solutions;
  Field u0;

  // evidence gathered while the perturbation was built
  int samples_tried = 0;
  bool outside_exact = false;
  double gamma_delta = 0.0;     // min ||grad I|| over the sampled shell
  double shell_bound = 0.0;     // gamma - ||u0|| (sup|grad p| sup||u|| + 1)
  double shell_grad_min = 0.0;  // measured min ||grad I~|| on the same shell
  double shift_max = 0.0;       // largest ||u* - u_i|| over shifted critical points
  double hess_margin = 0.0;     // min |1 - mu| of the linearization there
  std::vector<Field> shifted;
  std::vector<std::string> notes;

  double dist_to_set(const Field& x, size_t* which = nullptr) const {
    double d = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < solutions.size(); ++i) {
      const double di = h_norm(x - solutions[i]);
      if (di < d) {
        d = di;
        if (which) *which = i;
      }
    }
    return d;
  }

  double p_of(const Field& x) const {
    const double d = dist_to_set(x);
    if (d <= delta) return 1.0;
    if (d >= 2.0 * delta) return 0.0;
    return 1.0 - detail::smoothstep(d / delta - 1.0);
  }

  double value(const Field& x) const {
    const WeightH h = WeightH::one(x.mesh);
    const double base = I_tau(x, tau, h).total;
    const double p = p_of(x);
    if (p == 0.0) return base;
    return base + p * h_inner(u0, x);
  }

  Field gradient(const Field& x) const {
    const WeightH h = WeightH::one(x.mesh);
    Field g = grad_I(x, tau, h);
    size_t near = 0;
    const double d = dist_to_set(x, &near);
    if (d >= 2.0 * delta) return g;
    if (d <= delta) return g + u0;
    const double s = d / delta - 1.0;
    const double p = 1.0 - detail::smoothstep(s);
    const double dp = -detail::smoothstep_deriv(s) / delta;
    const double c = dp * h_inner(u0, x) / d;
    return g + p * u0 + c * (x - solutions[near]);
  }
};

// Builds the perturbation and verifies the three claims behind it: exact
// coincidence outside the far shell, a positive gradient floor on the shell
// (the triangle inequality constant is reported next to the measurement),
// and nondegeneracy of the linearization at the shifted critical points.
// Fresh u0 directions are drawn until all three hold; running out of draws
// raises SardRetryError.
inline PerturbedFunctional perturb_nondegenerate(double tau, const std::vector<Field>& solutions,
                                                 double delta, double u0_magnitude,
                                                 uint64_t seed = 2026, int max_samples = 20) {
  if (solutions.empty()) throw std::invalid_argument("perturb: empty solution set");
  if (!(delta > 0.0) || !(u0_magnitude > 0.0))
    throw std::invalid_argument("perturb: delta and u0 magnitude must be > 0");
  const MeshPtr mesh = solutions.front().mesh;
  for (const Field& s : solutions)
    if (s.mesh != mesh) throw std::invalid_argument("perturb: solutions on different meshes");
  for (size_t i = 0; i < solutions.size(); ++i)
    for (size_t j = i + 1; j < solutions.size(); ++j)
      if (h_norm(solutions[i] - solutions[j]) <= 4.0 * delta)
        throw std::invalid_argument("perturb: solutions not separated by more than 4 delta");

  const WeightH h = WeightH::one(mesh);
  std::mt19937_64 rng(seed);
  auto unit_direction = [&]() {
    for (int tries = 0; tries < 64; ++tries) {
      Field e = random_field(mesh, rng());
      const double n = h_norm(e);
      if (n > 1e-12) return (1.0 / n) * e;
    }
    throw SolverError("perturb: could not draw a unit direction");
  };

  PerturbedFunctional pf;
  pf.tau = tau;
  pf.delta = delta;
  pf.solutions = solutions;

  // shell samples are fixed once; every candidate u0 is checked against them
  std::vector<Field> shell;
  double sup_shell_norm = 0.0;
  pf.gamma_delta = std::numeric_limits<double>::infinity();
  for (const Field& ui : solutions)
    for (double f : {1.15, 1.5, 1.85})
      for (int j = 0; j < 4; ++j) {
        Field s = ui + (f * delta) * unit_direction();
        pf.gamma_delta = std::min(pf.gamma_delta, h_norm(grad_I(s, tau, h)));
        sup_shell_norm = std::max(sup_shell_norm, h_norm(s));
        shell.push_back(std::move(s));
      }
  const double pslope = detail::smoothstep_deriv(0.5) / delta;  // sup |grad p|
  pf.shell_bound = pf.gamma_delta - u0_magnitude * (pslope * sup_shell_norm + 1.0);
  if (!(pf.shell_bound > 0.0))
    throw std::invalid_argument(
        "perturb: u0 magnitude too large for the shell bound; need below " +
        std::to_string(pf.gamma_delta / (pslope * sup_shell_norm + 1.0)));

  NewtonOpts nopts;
  nopts.compute_index = false;

  for (int attempt = 0; attempt < max_samples; ++attempt) {
    ++pf.samples_tried;
    pf.u0 = u0_magnitude * unit_direction();
    pf.notes.clear();
    pf.shifted.clear();

    // (i) exact coincidence outside the far shell
    bool ok = true;
    for (const Field& ui : solutions)
      for (double f : {2.5, 10.0}) {
        Field x = ui + (f * delta) * unit_direction();
        if (pf.p_of(x) != 0.0 || pf.value(x) != I_tau(x, tau, h).total) ok = false;
        Field gd = pf.gradient(x) - grad_I(x, tau, h);
        for (double t : gd.v)
          if (t != 0.0) ok = false;
      }
    pf.outside_exact = ok;
    if (!ok) {
      pf.notes.push_back("outside coincidence failed");
      continue;
    }

    // (ii) measured gradient floor on the shell
    pf.shell_grad_min = std::numeric_limits<double>::infinity();
    for (const Field& s : shell)
      pf.shell_grad_min = std::min(pf.shell_grad_min, h_norm(pf.gradient(s)));
    if (!(pf.shell_grad_min > 0.0) ||
        pf.shell_grad_min < pf.shell_bound - 1e-10 * (1.0 + pf.shell_bound)) {
      pf.notes.push_back("shell gradient floor failed");
      continue;
    }

    // (iii) shifted critical points stay within delta and are nondegenerate
    pf.shift_max = 0.0;
    pf.hess_margin = std::numeric_limits<double>::infinity();
    ok = true;
    for (const Field& ui : solutions) {
      ContinuationRecord rec = detail::newton_core(tau, ui, h, &pf.u0, nopts);
      const double shift = rec.converged ? h_norm(rec.u - ui) : 0.0;
      if (!rec.converged || shift >= delta) {
        pf.notes.push_back(rec.converged ? "shifted point left the inner shell"
                                         : "shifted point did not converge");
        ok = false;
        break;
      }
      StabilityReport st = stability_report(rec.u, tau, h, nopts.degeneracy_band, nopts.eig);
      if (st.degenerate) {
        pf.notes.push_back("degenerate linearization at a shifted point");
        ok = false;
        break;
      }
      pf.shift_max = std::max(pf.shift_max, shift);
      pf.hess_margin = std::min(pf.hess_margin, st.nearest_to_one);
      pf.shifted.push_back(std::move(rec.u));
    }
    if (ok) return pf;
  }
  throw SardRetryError("perturb_nondegenerate: no admissible u0 in " +
                       std::to_string(max_samples) + " draws");
}

}  // namespace mf4d
