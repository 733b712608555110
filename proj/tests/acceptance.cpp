// Acceptance suite. Each criterion prints one [PASS]/[FAIL] line with its
// runtime and a measurement summary; the exit code is nonzero when any line
// fails. Criteria can be selected by number on the command line, e.g.
// `mf4d_acceptance 5 7` runs only criteria 5 and 7. Runtime budgets are part
// of the gates.

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "manufactured.hpp"
#include "mf4d/barycenters.hpp"
#include "mf4d/bubbles.hpp"
#include "mf4d/combinatorics.hpp"
#include "mf4d/domain.hpp"
#include "mf4d/errors.hpp"
#include "mf4d/functional.hpp"
#include "mf4d/morseflow.hpp"

namespace {

using namespace mf4d;

struct Outcome {
  bool ok = false;
  std::string detail;
};

std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof buf, f, ap);
  va_end(ap);
  return buf;
}

std::vector<double> log_grid(double lo, double hi, int n) {
  std::vector<double> g(n);
  for (int i = 0; i < n; ++i) g[i] = lo * std::pow(hi / lo, double(i) / double(n - 1));
  return g;
}

Field normalized_random(const MeshPtr& m, uint64_t seed, double norm) {
  Field e = random_field(m, seed, 1.0, 12);
  return (norm / h_norm(e)) * e;
}

// one representative per solution orbit, measured in the H-norm
std::vector<ContinuationRecord> dedup_orbits(const std::vector<ContinuationRecord>& raw,
                                             double tol, int* unconverged = nullptr) {
  std::vector<ContinuationRecord> orbits;
  if (unconverged) *unconverged = 0;
  for (const auto& r : raw) {
    if (!r.converged) {
      if (unconverged) ++*unconverged;
      continue;
    }
    bool merged = false;
    for (auto& o : orbits) {
      if (h_norm(r.u - o.u) <= tol * (1.0 + o.h_norm_u)) {
        if (r.residual < o.residual) o = r;
        merged = true;
        break;
      }
    }
    if (!merged) orbits.push_back(r);
  }
  return orbits;
}

// 1: exact degree formula at window midpoints plus the additivity and
// telescoping identities of the stratum characteristics
Outcome c1() {
  for (long long chi = -3; chi <= 2; ++chi)
    for (long long k = 0; k <= 8; ++k) {
      const double mid = 0.5 * (tau_threshold(k) + tau_threshold(k + 1));
      if (degree_from_tau(mid, chi) != binomial(k - chi, k))
        return {false, fmt("formula mismatch at chi=%lld k=%lld", chi, k)};
    }
  for (long long chi = -3; chi <= 2; ++chi) {
    Integer running = 0;
    for (long long k = 1; k <= 20; ++k) {
      const Integer pair = barycenter_pair_euler(chi, k);
      if (barycenter_euler(chi, k) != barycenter_euler(chi, k - 1) + pair)
        return {false, fmt("additivity fails at chi=%lld k=%lld", chi, k)};
      running += pair;
      if (running != Integer(1) - binomial(k - chi, k))
        return {false, fmt("telescoping fails at chi=%lld k=%lld", chi, k)};
    }
  }
  return {true, "54 window midpoints and 120 identity rows, all exact"};
}

// 2: manufactured Navier eigenfunctions, L2 error ratio per mesh halving
Outcome c2() {
  const int ns[] = {201, 401, 801, 1601};
  std::string detail;
  for (const DomainSpec& dom : {DomainSpec::ball(1.0), DomainSpec::shell(0.5, 1.0)}) {
    double err[4];
    for (int i = 0; i < 4; ++i) err[i] = mftest::navier_eigen_error(dom, ns[i]);
    for (int i = 0; i + 1 < 4; ++i) {
      const double ratio = err[i] / err[i + 1];
      if (!(ratio > 3.2 && ratio < 4.8))
        return {false, fmt("ratio %.3f outside [3.2, 4.8] at n=%d on %s", ratio, ns[i],
                           dom.kind == DomainKind::ball ? "ball" : "shell")};
      if (!detail.empty()) detail += " ";
      detail += fmt("%.2f", ratio);
    }
  }
  return {true, "ratios per halving: " + detail};
}

// 3: the H-gradient of I matches central differences along random directions
Outcome c3() {
  const auto check = [](const MeshPtr& m, uint64_t seed, double tau, double* worst) {
    const WeightH one = WeightH::one(m);
    const Field u = random_field(m, seed, 1.1);
    const Field v = random_field(m, seed + 977, 0.7);
    const double lhs = h_inner(grad_I(u, tau, one), v);
    const double eps = 1e-4 * (1.0 + h_norm(u)) / std::max(1e-9, h_norm(v));
    const double fd = (I_tau(u + eps * v, tau, one).total -
                       I_tau(u - eps * v, tau, one).total) / (2.0 * eps);
    const double err = std::abs(lhs - fd) / std::max(std::abs(fd), 1e-10);
    *worst = std::max(*worst, err);
    return err <= 1e-4;
  };
  double worst = 0.0;
  const auto ball = make_radial_mesh(DomainSpec::ball(1.0), 1200);
  const auto shell = make_radial_mesh(DomainSpec::shell(0.5, 1.0), 1200);
  for (uint64_t s = 1; s <= 20; ++s) {
    if (!check(ball, s, 40.0 + 9.0 * s, &worst))
      return {false, fmt("ball pair %llu, rel err %.2e", (unsigned long long)s, worst)};
    if (!check(shell, 100 + s, 25.0 + 12.0 * s, &worst))
      return {false, fmt("shell pair %llu, rel err %.2e", (unsigned long long)s, worst)};
  }
  const auto box = make_grid_mesh(DomainSpec::box(Vec4{1, 1, 1, 1}), 10);
  for (uint64_t s = 1; s <= 20; ++s)
    if (!check(box, 200 + s, 30.0 + 7.0 * s, &worst))
      return {false, fmt("box pair %llu, rel err %.2e", (unsigned long long)s, worst)};
  return {true, fmt("60 pairs, worst relative error %.2e", worst)};
}

// 4: the Moser-Trudinger gap stays bounded across random fields and the
// bubble family, and is invariant under mean shifts
Outcome c4() {
  const auto m = make_radial_mesh(DomainSpec::ball(1.0), 1600);
  const WeightH one = WeightH::one(m);
  const double budget = 128.0 * pi * pi;
  std::vector<double> xs, gaps;
  const auto push = [&](const Field& u) {
    const double ubar = integrate(u) / volume(*m);
    Field c = u;
    for (double& t : c.v) t -= ubar;
    xs.push_back(h_norm_sq(c) / budget);
    gaps.push_back(mt_gap(u));
    return std::isfinite(gaps.back());
  };
  for (uint64_t s = 1; s <= 100; ++s)
    if (!push(random_field(m, s, 1.5))) return {false, fmt("gap not finite at seed %llu",
                                                           (unsigned long long)s)};
  FormalBarycenter origin;
  origin.atoms.push_back({1.0, Vec4{0, 0, 0, 0}});
  for (double lam : log_grid(10.0, 1000.0, 12)) {
    BubbleParams p;
    p.lambda = lam;
    p.sigma = origin;
    if (!push(project_P(bubble_multi(m, p))))
      return {false, fmt("gap not finite at lambda %.0f", lam)};
  }
  double gmax = gaps[0];
  for (double g : gaps) gmax = std::max(gmax, g);
  const auto fit = detail::fit_line(xs, gaps);
  if (!(fit.slope <= 0.05))
    return {false, fmt("growth slope %.4f exceeds 0.05", fit.slope)};
  for (uint64_t s = 1; s <= 10; ++s) {
    const Field u = random_field(m, s, 1.5);
    const double g0 = mt_gap(u);
    Field sh = u;
    for (double& t : sh.v) t += 17.5;
    if (std::abs(mt_gap(sh) - g0) > 1e-9 * (1.0 + std::abs(g0)))
      return {false, fmt("mean shift moved the gap by %.2e", std::abs(mt_gap(sh) - g0))};
  }
  return {true, fmt("112 samples, max gap %.3f, growth slope %.2e", gmax, fit.slope)};
}

// 5: the bubble energy slope splits by sign across the first threshold
Outcome c5() {
  const auto m = make_radial_mesh(DomainSpec::ball(1.0), 32768);
  FormalBarycenter origin;
  origin.atoms.push_back({1.0, Vec4{0, 0, 0, 0}});
  const auto grid = log_grid(10.0, 1000.0, 12);
  const AsymptoticsReport hi = energy_asymptotics(m, origin, 80.0 * pi * pi, grid);
  const AsymptoticsReport lo = energy_asymptotics(m, origin, 40.0 * pi * pi, grid);
  if (!(hi.slope_i < 0.0 && std::abs(hi.slope_i) > 3.0 * hi.se_i))
    return {false, fmt("slope %.2f +- %.2f at 80 pi^2 is not negative beyond 3 se",
                       hi.slope_i, hi.se_i)};
  if (!(lo.slope_i > 0.0 && std::abs(lo.slope_i) > 3.0 * lo.se_i))
    return {false, fmt("slope %.2f +- %.2f at 40 pi^2 is not positive beyond 3 se",
                       lo.slope_i, lo.se_i)};
  // measured quadratic growth against the 128 pi^2 book value; the factor-2
  // discrepancy between the two book forms is reported, never gated
  return {true, fmt("slopes %.1f (80 pi^2) / +%.1f (40 pi^2); quad slope / 128 pi^2 = %.3f",
                    hi.slope_i, lo.slope_i, hi.slope_quad / (128.0 * pi * pi))};
}

// 6: bubble fields concentrate and their atoms are recovered
Outcome c6() {
  const double lambda = 1000.0;
  {
    const auto m = make_radial_mesh(DomainSpec::ball(1.0), 16384);
    FormalBarycenter sigma;
    sigma.atoms.push_back({1.0, Vec4{0, 0, 0, 0}});
    BubbleParams p;
    p.lambda = lambda;
    p.sigma = sigma;
    const Field u = bubble_multi(m, p);
    const ConcentrationReport rep = concentration_check(u, 96.0 * pi * pi, 0.05, 0.2);
    if (rep.k != 1 || !rep.concentrated || !(rep.residual_mass < 0.05))
      return {false, fmt("ball k=1: residual %.4f, concentrated=%d", rep.residual_mass,
                         int(rep.concentrated))};
    const FormalBarycenter rec = nearest_barycenter(density_rho(u, WeightH::one(m)), 1);
    if (rec.size() != 1 || !(norm4(rec.atoms[0].x) < 4.0 / lambda) ||
        !(std::abs(rec.atoms[0].t - 1.0) < 0.05))
      return {false, fmt("ball k=1: atom at |x|=%.2e weight %.3f", norm4(rec.atoms[0].x),
                         rec.atoms[0].t)};
  }
  {
    const auto m = make_grid_mesh(DomainSpec::box(Vec4{1, 1, 1, 1}), 24);
    const double h = 1.0 / 24.0;
    const Vec4 a{6.5 * h, 6.5 * h, 6.5 * h, 6.5 * h};
    const Vec4 b{17.5 * h, 17.5 * h, 17.5 * h, 17.5 * h};
    FormalBarycenter sigma;
    sigma.atoms.push_back({0.5, a});
    sigma.atoms.push_back({0.5, b});
    BubbleParams p;
    p.lambda = lambda;
    p.sigma = sigma;
    const Field u = bubble_multi(m, p);
    const ConcentrationReport rep = concentration_check(u, 160.0 * pi * pi, 0.05, 0.1);
    if (rep.k != 2 || !rep.concentrated || !(rep.residual_mass < 0.05))
      return {false, fmt("box k=2: residual %.4f, concentrated=%d", rep.residual_mass,
                         int(rep.concentrated))};
    const FormalBarycenter rec = nearest_barycenter(density_rho(u, WeightH::one(m)), 2);
    if (rec.size() != 2) return {false, fmt("box k=2: recovered %zu atoms", rec.size())};
    for (const auto& atom : rec.atoms) {
      const double loc = std::min(dist(atom.x, a), dist(atom.x, b));
      if (!(loc < 4.0 / lambda) || !(std::abs(atom.t - 0.5) < 0.05))
        return {false, fmt("box k=2: atom err %.2e weight %.3f", loc, atom.t)};
    }
  }
  return {true, "k=1 ball and k=2 box pass mass, location and weight gates"};
}

// 7: the descent flow is monotone and funnels 50 starts to one state
Outcome c7() {
  const double tau = 32.0 * pi * pi;
  const auto m = make_radial_mesh(DomainSpec::shell(0.5, 1.0), 1000);
  const ContinuationRecord ref = newton_solve(tau, make_field(m, 0.0));
  if (!ref.converged) return {false, "reference newton solve failed"};
  const FlowConfig cfg = default_flow_config(ref.h_norm_u);
  std::vector<Field> finals;
  double grad_worst = 0.0;
  for (int i = 0; i < 50; ++i) {
    const double norm = cfg.R * (0.1 + 0.4 * double(i) / 49.0);
    const Field u0 = normalized_random(m, 9000 + static_cast<uint64_t>(i), norm);
    const Trajectory traj = flow_integrate(u0, tau, cfg);
    if (traj.reason != FlowStop::stationary)
      return {false, fmt("start %d stopped early (%d)", i, int(traj.reason))};
    double iprev = traj.samples.front().i_value;
    for (const FlowSample& s : traj.samples) {
      if (s.i_value > iprev + 1e-8 * (1.0 + std::abs(iprev)))
        return {false, fmt("start %d: I increased by %.2e", i, s.i_value - iprev)};
      iprev = s.i_value;
    }
    const double g = traj.samples.back().grad_norm;
    grad_worst = std::max(grad_worst, g);
    if (!(g < 1e-6)) return {false, fmt("start %d: terminal gradient %.2e", i, g)};
    finals.push_back(traj.u_final);
  }
  double pair_worst = 0.0;
  for (size_t i = 0; i < finals.size(); ++i)
    for (size_t j = i + 1; j < finals.size(); ++j)
      pair_worst = std::max(pair_worst, h_norm(finals[i] - finals[j]));
  if (!(pair_worst < 1e-4))
    return {false, fmt("terminal states differ by %.2e in the H-norm", pair_worst)};
  return {true, fmt("worst terminal gradient %.1e, worst pairwise distance %.1e",
                    grad_worst, pair_worst)};
}

// 8: the coercive window has one orbit of index +1 matching the formula
Outcome c8() {
  std::string detail;
  for (const DomainSpec& dom : {DomainSpec::ball(1.0), DomainSpec::shell(0.5, 1.0)}) {
    const auto m = make_radial_mesh(dom, 800);
    for (double mult : {16.0, 32.0, 48.0}) {
      const double tau = mult * pi * pi;
      std::vector<ContinuationRecord> raw;
      for (int i = 0; i < 10; ++i) {
        const Field u0 = i == 0 ? make_field(m, 0.0)
                                : normalized_random(m, 40 + static_cast<uint64_t>(i),
                                                    0.25 * (1 + i % 4));
        raw.push_back(newton_solve(tau, u0));
      }
      int unconverged = 0;
      std::vector<ContinuationRecord> orbits = dedup_orbits(raw, 1e-4, &unconverged);
      if (unconverged != 0)
        return {false, fmt("%d of 10 seeds failed at tau=%.0f", unconverged, tau)};
      if (orbits.size() != 1)
        return {false, fmt("%zu orbits at tau=%.0f", orbits.size(), tau)};
      if (orbits[0].index != 1 || orbits[0].degenerate)
        return {false, fmt("orbit index %d at tau=%.0f", orbits[0].index, tau)};
      const DegreeReport rep = degree_compare(tau, orbits, dom.chi);
      if (!rep.certified || !rep.consistent || rep.index_sum != 1 ||
          rep.formula_degree != Integer(1))
        return {false, fmt("degree accounting open at tau=%.0f", tau)};
    }
    if (!detail.empty()) detail += "; ";
    detail += dom.kind == DomainKind::ball ? "ball ok" : "shell ok";
  }
  return {true, detail + " at 16/32/48 pi^2, all certified with index sum 1"};
}

// 9: the k=1 window on the shell yields a solution and no contradiction;
// completeness is not certifiable at this scale, so the index sum is
// reported against the formula rather than gated outright
Outcome c9() {
  const double tau_star = 96.0 * pi * pi;
  const auto m = make_radial_mesh(DomainSpec::shell(0.5, 1.0), 1200);
  if (degree_from_tau(tau_star, 0) != Integer(1))
    return {false, "formula degree is not 1 on the shell k=1 window"};

  std::vector<Field> seeds{make_field(m, 0.0)};
  const ContinuationResult walk = continuation(m, 300.0, tau_star, 10, seeds);
  std::vector<ContinuationRecord> raw;
  for (const auto& r : walk.records)
    if (r.converged && std::abs(r.tau - tau_star) < 1e-9 * tau_star) raw.push_back(r);

  NewtonOpts nopts;
  for (int i = 0; i < 6; ++i) {
    const Field u0 = i == 0 ? make_field(m, 0.0)
                            : normalized_random(m, 70 + static_cast<uint64_t>(i), 0.5 * i);
    raw.push_back(newton_solve(tau_star, u0, nopts));
  }
  if (!raw.empty() && raw.front().converged) {
    // refine the warm-started branch once more from its own state
    raw.push_back(newton_solve(tau_star, raw.front().u, nopts));
  }
  int unconverged = 0;
  std::vector<ContinuationRecord> orbits = dedup_orbits(raw, 1e-4, &unconverged);
  std::vector<ContinuationRecord> pass = orbits;
  for (const auto& r : raw)
    if (!r.converged) pass.push_back(r);
  const DegreeReport rep = degree_compare(tau_star, pass, 0);

  int well_defined = 0;
  for (const auto& o : orbits)
    if (!o.degenerate) ++well_defined;
  if (well_defined < 1)
    return {false, fmt("no solution with a well-defined index (%zu orbits, %d unconverged)",
                       orbits.size(), unconverged)};
  const bool closed = rep.unconverged_count == 0 && rep.degenerate_count == 0;
  if (closed && ((rep.index_sum % 2) + 2) % 2 != 1)
    return {false, fmt("closed accounting with index sum %lld contradicts degree 1",
                       rep.index_sum)};
  return {true, fmt("%zu orbit(s), index sum %lld vs formula 1, %d unconverged start(s); %s",
                    orbits.size(), rep.index_sum, unconverged,
                    closed ? "accounting closed" : "completeness caveat applies")};
}

// 10: the F* census on the shell against the exact Morse count target
Outcome c10() {
  const DomainSpec dom = DomainSpec::shell(0.5, 1.0);
  CensusConfig cc;
  cc.nstarts = 10000;
  cc.seed = 20260819;
  const CensusReport rep = f_star_critical_census(dom, 2, GCutoff(dom.eta_value()), cc);
  std::string counts = "c = [";
  for (size_t i = 0; i < rep.counts.size(); ++i)
    counts += fmt("%s%lld", i ? ", " : "", rep.counts[i]);
  counts += "]";
  const std::string stats =
      fmt("%s, sum %lld, alternating %lld vs 0; %lld converged, %lld unconverged, "
          "%lld degenerate-excluded",
          counts.c_str(), rep.plain_sum, rep.alternating_sum, rep.converged, rep.unconverged,
          rep.degenerate_excluded);
  if (rep.alternating_sum == 0) return {true, stats};
  if (rep.incomplete) return {true, stats + " (flagged incomplete)"};
  return {false, stats};
}

// 11: the Sard-style perturbation is local, bounded below on the shell and
// nondegenerate at its shifted critical points
Outcome c11() {
  const double tau = 32.0 * pi * pi;
  const auto m = make_radial_mesh(DomainSpec::ball(1.0), 600);
  const WeightH one = WeightH::one(m);
  const ContinuationRecord rec = newton_solve(tau, make_field(m, 0.0));
  if (!rec.converged) return {false, "coercive newton solve failed"};
  PerturbedFunctional pf;
  try {
    pf = perturb_nondegenerate(tau, {rec.u}, 0.05, 1e-4, 918273, 20);
  } catch (const SardRetryError& e) {
    return {false, std::string("all 20 samples rejected: ") + e.what()};
  }
  if (!pf.outside_exact) return {false, "coincidence outside the far shell not observed"};
  const Field far = rec.u + normalized_random(m, 5150, 10.0 * pf.delta);
  if (pf.value(far) != I_tau(far, tau, one).total)
    return {false, "perturbed value differs outside the far shell"};
  const Field g1 = pf.gradient(far), g2 = grad_I(far, tau, one);
  for (size_t i = 0; i < g1.v.size(); ++i)
    if (g1.v[i] != g2.v[i]) return {false, "perturbed gradient differs outside the far shell"};
  if (!(pf.shell_bound > 0.0 && pf.shell_grad_min > 0.0))
    return {false, fmt("shell bound %.2e, measured floor %.2e", pf.shell_bound,
                       pf.shell_grad_min)};
  if (!(pf.hess_margin > 1e-6))
    return {false, fmt("hessian margin %.2e within the degeneracy band", pf.hess_margin)};
  if (pf.samples_tried > 20) return {false, fmt("%d samples used", pf.samples_tried)};
  return {true, fmt("sample %d of 20: shell floor %.2e, hessian margin %.2e, shift %.2e",
                    pf.samples_tried, pf.shell_grad_min, pf.hess_margin, pf.shift_max)};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  struct Row {
    int id;
    const char* name;
    double budget_s;
    std::function<Outcome()> fn;
  };
  const std::vector<Row> rows = {
      {1, "degree formula and exact stratum identities", 60, c1},
      {2, "biharmonic solver convergence order", 120, c2},
      {3, "gradient consistency against central differences", 120, c3},
      {4, "moser-trudinger gap boundedness and invariance", 300, c4},
      {5, "bubble energy sign split across the first threshold", 600, c5},
      {6, "concentration and atom recovery for k-bubbles", 300, c6},
      {7, "flow descent funnels to the coercive solution", 600, c7},
      {8, "coercive-window degree accounting", 600, c8},
      {9, "k=1 window solution and index consistency", 1800, c9},
      {10, "f* census against the morse count target", 900, c10},
      {11, "perturbation locality, floor and nondegeneracy", 300, c11},
  };
  int failures = 0;
  for (const Row& row : rows) {
    if (!only.empty() && !only.count(row.id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = row.fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (o.ok && dt > row.budget_s) {
      o.ok = false;
      o.detail += fmt(" [over budget: %.0f s > %.0f s]", dt, row.budget_s);
    }
    std::printf("[%s] %2d %-52s (%7.2f s) %s\n", o.ok ? "PASS" : "FAIL", row.id, row.name, dt,
                o.detail.c_str());
    std::fflush(stdout);
    if (!o.ok) ++failures;
  }
  return failures == 0 ? 0 : 1;
}
