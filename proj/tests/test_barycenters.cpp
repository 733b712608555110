#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "mf4d/barycenters.hpp"
#include "mf4d/combinatorics.hpp"

using namespace mf4d;

namespace {

FormalBarycenter two_atoms(double t1, const Vec4& x1, const Vec4& x2) {
  FormalBarycenter b;
  b.atoms = {{t1, x1}, {1.0 - t1, x2}};
  return b;
}

}  // namespace

TEST_CASE("canonicalize merges, drops zero weights and renormalizes") {
  const Vec4 x{0.2, 0.0, -0.1, 0.3};
  const Vec4 y{-0.4, 0.5, 0.0, 0.0};

  // coincident atoms merge even with merge_radius 0
  FormalBarycenter a = canonicalize({{0.5, x}, {0.5, x}}, 0.0);
  REQUIRE(a.size() == 1);
  REQUIRE(a.atoms[0].t == 1.0);
  REQUIRE(a.atoms[0].x == x);

  FormalBarycenter b = canonicalize({{0.0, x}, {1.0, y}}, 0.0);
  REQUIRE(b.size() == 1);
  REQUIRE(b.atoms[0].t == 1.0);
  REQUIRE(b.atoms[0].x == y);

  // merged location is the weight average
  const Vec4 p{0.1, 0.0, 0.0, 0.0};
  const Vec4 q{0.11, 0.0, 0.0, 0.0};
  FormalBarycenter c = canonicalize({{0.6, p}, {0.4, q}}, 0.05);
  REQUIRE(c.size() == 1);
  REQUIRE(c.atoms[0].x[0] == Catch::Approx(0.104).margin(1e-15));

  // permutation invariance and idempotence
  std::vector<FormalBarycenter::Atom> raw = {{0.2, x}, {0.5, y}, {0.3, Vec4{0.9, 0.9, 0.9, 0.9}}};
  std::vector<FormalBarycenter::Atom> shuffled = {raw[2], raw[0], raw[1]};
  FormalBarycenter c1 = canonicalize(raw, 0.01);
  FormalBarycenter c2 = canonicalize(shuffled, 0.01);
  REQUIRE(c1.size() == c2.size());
  REQUIRE(barycenter_mismatch(c1, c2) < 1e-14);
  FormalBarycenter c3 = canonicalize(c1, 0.01);
  REQUIRE(barycenter_mismatch(c1, c3) < 1e-14);

  REQUIRE_THROWS_AS(canonicalize(std::vector<FormalBarycenter::Atom>{}, 0.1), std::invalid_argument);
  REQUIRE_THROWS_AS(canonicalize({{-0.2, x}, {1.2, y}}, 0.1), std::invalid_argument);
  REQUIRE_THROWS_AS(canonicalize({{0.4, x}, {0.4, y}}, 0.1), std::invalid_argument);
  REQUIRE_THROWS_AS(canonicalize({{0.0, x}, {0.0, y}}, 0.1), std::invalid_argument);
}

TEST_CASE("interaction kernel is non-increasing and C1 at the junctions") {
  const double eta = 0.07;
  GCutoff g(eta);
  REQUIRE(g.value(eta) == Catch::Approx(1.0 / eta).epsilon(1e-14));
  REQUIRE(g.value(eta * (1.0 + 1e-10)) == Catch::Approx(1.0 / eta).epsilon(1e-8));
  REQUIRE(g.value(2.0 * eta) == Catch::Approx(0.5 / eta).epsilon(1e-14));
  REQUIRE(g.value(2.0 * eta * (1.0 - 1e-10)) == Catch::Approx(0.5 / eta).epsilon(1e-8));
  REQUIRE(g.value(10.0 * eta) == 0.5 / eta);

  double prev = g.value(1e-3);
  for (int i = 1; i <= 2000; ++i) {
    const double t = 1e-3 + (3.0 * eta - 1e-3) * i / 2000.0;
    const double v = g.value(t);
    REQUIRE(v <= prev + 1e-12);
    prev = v;
  }

  // derivative matches a central difference and is strictly negative below 2 eta
  for (double t : {0.3 * eta, 0.8 * eta, 1.1 * eta, 1.5 * eta, 1.9 * eta}) {
    const double h = 1e-7 * eta;
    const double fd = (g.value(t + h) - g.value(t - h)) / (2.0 * h);
    REQUIRE(g.deriv(t) == Catch::Approx(fd).epsilon(1e-5));
    REQUIRE(g.deriv(t) < 0.0);
  }
  REQUIRE(g.deriv(2.0 * eta) == 0.0);
  REQUIRE(g.deriv(3.0 * eta) == 0.0);
  REQUIRE(g.deriv(eta * (1.0 - 1e-9)) == Catch::Approx(-1.0 / (eta * eta)).epsilon(1e-6));
  REQUIRE(g.deriv(eta * (1.0 + 1e-9)) == Catch::Approx(-1.0 / (eta * eta)).epsilon(1e-6));
}

TEST_CASE("f_star closed-form value, symmetry and collapse paths") {
  const double eta = 0.025;
  GCutoff g(eta);

  FormalBarycenter sep = two_atoms(0.5, Vec4{0.7, 0, 0, 0}, Vec4{-0.7, 0, 0, 0});
  const double expect = -1.0 / eta - 8.0;  // -2/(2 eta) - 2*4
  REQUIRE(f_star(sep, g) == Catch::Approx(expect).epsilon(1e-13));

  FormalBarycenter one;
  one.atoms = {{1.0, Vec4{0, 0, 0, 0}}};
  REQUIRE_THROWS_AS(f_star(one, g), std::domain_error);

  // atom permutation leaves the value unchanged
  FormalBarycenter asym = two_atoms(0.3, Vec4{0.5, 0.1, 0, 0}, Vec4{-0.2, 0, 0.4, 0});
  FormalBarycenter swapped = two_atoms(0.7, Vec4{-0.2, 0, 0.4, 0}, Vec4{0.5, 0.1, 0, 0});
  REQUIRE(f_star(asym, g) == Catch::Approx(f_star(swapped, g)).epsilon(1e-14));

  // collision path: strictly decreasing as the pair distance shrinks
  double last = f_star(two_atoms(0.5, Vec4{3.0 * eta, 0, 0, 0}, Vec4{0, 0, 0, 0}), g);
  for (double d : {1.0 * eta, 0.5 * eta, 0.1 * eta, 0.01 * eta}) {
    const double v = f_star(two_atoms(0.5, Vec4{d, 0, 0, 0}, Vec4{0, 0, 0, 0}), g);
    REQUIRE(v < last);
    last = v;
  }
  REQUIRE(last < -2.0 / (0.01 * eta));

  // vanishing-weight path
  last = f_star(two_atoms(0.5, Vec4{0.7, 0, 0, 0}, Vec4{-0.7, 0, 0, 0}), g);
  for (double t1 : {0.1, 0.01, 0.001, 1e-4}) {
    const double v = f_star(two_atoms(t1, Vec4{0.7, 0, 0, 0}, Vec4{-0.7, 0, 0, 0}), g);
    REQUIRE(v < last);
    last = v;
  }
  REQUIRE(last < -1.0 / 1e-4);
}

TEST_CASE("critical census on the shell sees only the degenerate flat family") {
  // Away from collisions the kernel is constant, so the position gradient
  // vanishes on the open set {all pairwise distances > 2 eta} and every
  // critical point there sits on a flat manifold: the Hessian has zero
  // eigenvalues and the census must exclude it rather than count it.
  DomainSpec dom = DomainSpec::shell(0.5, 1.0);
  GCutoff g(dom.eta_value());
  CensusConfig cfg;
  cfg.nstarts = 120;
  cfg.seed = 7;
  CensusReport rep = f_star_critical_census(dom, 2, g, cfg);

  REQUIRE(rep.starts == 120);
  REQUIRE(rep.converged + rep.unconverged == 120);
  REQUIRE(rep.degenerate_excluded > 60);
  REQUIRE(rep.entries.empty());
  REQUIRE(rep.plain_sum == 0);
  REQUIRE(rep.alternating_sum == morse_count_sum(0, 2));
  REQUIRE(rep.incomplete);
  REQUIRE_FALSE(rep.warnings.empty());
  for (const auto& e : rep.entries) {
    for (const auto& a : e.sigma.atoms) {
      REQUIRE(a.t > 0.0);
      REQUIRE(a.t < 1.0);
    }
    REQUIRE(dist(e.sigma.atoms[0].x, e.sigma.atoms[1].x) > 0.0);
  }

  REQUIRE_THROWS_AS(f_star_critical_census(dom, 1, g, cfg), std::invalid_argument);
  REQUIRE_THROWS_AS(f_star_critical_census(dom, 4, g, cfg), std::invalid_argument);
}

TEST_CASE("weak distance vanishes on exact atomic data and flags uniform mass") {
  auto box = make_grid_mesh(DomainSpec::box(Vec4{1, 1, 1, 1}), 12);
  Field f = make_field(box, 0.0);
  const size_t ia = box->size() / 3, ib = 2 * box->size() / 3;
  f.v[ia] = 0.75 / box->w[ia];
  f.v[ib] = 0.25 / box->w[ib];
  FormalBarycenter sigma;
  sigma.atoms = {{0.75, node_point(*box, ia)}, {0.25, node_point(*box, ib)}};
  REQUIRE(weak_distance(f, sigma) < 1e-12);

  // permutation of the atoms leaves the pairing unchanged
  FormalBarycenter swapped;
  swapped.atoms = {sigma.atoms[1], sigma.atoms[0]};
  REQUIRE(weak_distance(f, swapped) == Catch::Approx(weak_distance(f, sigma)).margin(1e-15));

  // mollified atom: every mass point sits within w of the atom, so any
  // C1-normalized test function pairs within w (plus shell banding)
  auto ball = make_radial_mesh(DomainSpec::ball(1.0), 2000);
  const double w = 0.05;
  Field smooth = make_field(ball, 0.0);
  for (int j = 0; j < ball->n; ++j) {
    const double s = ball->r[j] / w;
    smooth.v[j] = s < 1.0 ? (1.0 - s * s) * (1.0 - s * s) : 0.0;
  }
  FormalBarycenter atom;
  atom.atoms = {{1.0, Vec4{0, 0, 0, 0}}};
  const double wd = weak_distance(smooth, atom);
  REQUIRE(wd <= 1.1 * w);

  // uniform density against a single central atom is far in the weak sense
  Field unif = make_field(ball, 1.0);
  REQUIRE(weak_distance(unif, atom) > 0.5);

  Field zero = make_field(ball, 0.0);
  REQUIRE_THROWS_AS(weak_distance(zero, atom), std::invalid_argument);
}

TEST_CASE("nearest barycenter recovers separated masses and collapses a lone peak") {
  auto box = make_grid_mesh(DomainSpec::box(Vec4{1, 1, 1, 1}), 24);

  // exact atomic data comes back exactly
  Field f = make_field(box, 0.0);
  const size_t ia = box->size() / 5, ib = 4 * box->size() / 5;
  f.v[ia] = 0.7 / box->w[ia];
  f.v[ib] = 0.3 / box->w[ib];
  FormalBarycenter rec = nearest_barycenter(f, 2);
  REQUIRE(rec.size() == 2);
  FormalBarycenter expect;
  expect.atoms = {{0.7, node_point(*box, ia)}, {0.3, node_point(*box, ib)}};
  REQUIRE(barycenter_mismatch(canonicalize(expect, 0.0), rec) < 1e-12);

  // determinism: same input, same output
  FormalBarycenter rec2 = nearest_barycenter(f, 2);
  REQUIRE(barycenter_mismatch(rec, rec2) == 0.0);

  // two Gaussian bumps on the grid
  const Vec4 ca{0.3, 0.3, 0.3, 0.3};
  const Vec4 cb{0.7, 0.7, 0.7, 0.7};
  const double s = 0.06;
  Field gg = make_field(box, 0.0);
  for (size_t i = 0; i < box->size(); ++i) {
    const Vec4 p = node_point(*box, i);
    const double da = dist(p, ca), db = dist(p, cb);
    gg.v[i] = std::exp(-0.5 * da * da / (s * s)) + std::exp(-0.5 * db * db / (s * s));
  }
  FormalBarycenter gb = nearest_barycenter(gg, 2);
  REQUIRE(gb.size() == 2);
  for (const auto& a : gb.atoms) {
    const double d = std::min(dist(a.x, ca), dist(a.x, cb));
    REQUIRE(d < 0.06);
    REQUIRE(a.t == Catch::Approx(0.5).margin(0.02));
  }
  REQUIRE(weak_distance(gg, gb) < 2.0 * s);

  // a single narrow peak collapses to one atom when asked for three
  auto ball = make_radial_mesh(DomainSpec::ball(1.0), 2000);
  const double lambda = 100.0;
  Field peak = make_field(ball, 0.0);
  for (int j = 0; j < ball->n; ++j) {
    const double lr = lambda * ball->r[j];
    peak.v[j] = 1.0 / std::pow(1.0 + lr * lr, 4);
  }
  NearestOpts opts;
  opts.merge_radius = 0.1;
  FormalBarycenter lone = nearest_barycenter(peak, 3, opts);
  REQUIRE(lone.size() == 1);
  REQUIRE(lone.atoms[0].t == Catch::Approx(1.0).margin(1e-12));
  REQUIRE(norm4(lone.atoms[0].x) < 0.05);

  Field zero = make_field(ball, 0.0);
  REQUIRE_THROWS_AS(nearest_barycenter(zero, 2), std::invalid_argument);
  REQUIRE_THROWS_AS(nearest_barycenter(peak, 0), std::invalid_argument);
}
