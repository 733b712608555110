#pragma once

// Geometry and discretization of the 4d domains. Two mesh modes:
//
//  - radial: conservative finite volumes in r on balls and shells. Nodes
//    r_j = a + j*dr include the boundary; cell masses are exact shell
//    volumes, so quadrature telescopes to |Omega| exactly and the flux-form
//    Laplacian is self-adjoint with respect to the cell masses. That makes
//    the chained Navier solve exactly self-adjoint and the discrete
//    gradient of the functional exact, not just O(h^2).
//
//  - grid: cell-centered uniform lattice on boxes, optional voxel mask.
//    Dirichlet faces are eliminated by ghost reflection (ghost = 2g - u),
//    which keeps the operator symmetric; the domain is the voxel union, so
//    quadrature is exact for it as well.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mf4d/combinatorics.hpp"
#include "mf4d/errors.hpp"
#include "mf4d/linalg.hpp"

namespace mf4d {

using Vec4 = std::array<double, 4>;

inline double dist(const Vec4& x, const Vec4& y) {
  double s = 0.0;
  for (int i = 0; i < 4; ++i) s += (x[i] - y[i]) * (x[i] - y[i]);
  return std::sqrt(s);
}

inline double norm4(const Vec4& x) {
  return dist(x, Vec4{0.0, 0.0, 0.0, 0.0});
}

enum class DomainKind { ball, shell, box4d };

struct DomainSpec {
  DomainKind kind = DomainKind::ball;
  double radius = 1.0;                       // ball
  double r0 = 0.5, r1 = 1.0;                 // shell
  Vec4 extent{1.0, 1.0, 1.0, 1.0};           // box
  std::function<bool(const Vec4&)> mask;     // box only; domain = masked voxels
  long long chi = 1;                         // declared Euler characteristic
  double eta = -1.0;                         // cutoff scale; <= 0 means default

  static DomainSpec ball(double R, double eta = -1.0) {
    DomainSpec d;
    d.kind = DomainKind::ball;
    d.radius = R;
    d.chi = 1;
    d.eta = eta;
    d.validate();
    return d;
  }
  static DomainSpec shell(double r0, double r1, double eta = -1.0) {
    DomainSpec d;
    d.kind = DomainKind::shell;
    d.r0 = r0;
    d.r1 = r1;
    d.chi = 0;  // homotopy type of the 3-sphere
    d.eta = eta;
    d.validate();
    return d;
  }
  static DomainSpec box(const Vec4& extent,
                        std::function<bool(const Vec4&)> mask = nullptr,
                        long long chi = 1, double eta = -1.0) {
    DomainSpec d;
    d.kind = DomainKind::box4d;
    d.extent = extent;
    d.mask = std::move(mask);
    d.chi = chi;
    d.eta = eta;
    d.validate();
    return d;
  }

  // Largest inscribed-ball radius (unmasked geometry).
  double inradius() const {
    switch (kind) {
      case DomainKind::ball: return radius;
      case DomainKind::shell: return 0.5 * (r1 - r0);
      case DomainKind::box4d: {
        double m = extent[0];
        for (int i = 1; i < 4; ++i) m = std::min(m, extent[i]);
        return 0.5 * m;
      }
    }
    return 0.0;
  }

  double diameter() const {
    switch (kind) {
      case DomainKind::ball: return 2.0 * radius;
      case DomainKind::shell: return 2.0 * r1;
      case DomainKind::box4d: {
        double s = 0.0;
        for (int i = 0; i < 4; ++i) s += extent[i] * extent[i];
        return std::sqrt(s);
      }
    }
    return 0.0;
  }

  double eta_value() const { return eta > 0.0 ? eta : 0.1 * inradius(); }

  void validate() const {
    switch (kind) {
      case DomainKind::ball:
        if (!(radius > 0.0)) throw std::invalid_argument("domain: ball radius must be > 0");
        break;
      case DomainKind::shell:
        if (!(r0 > 0.0) || !(r1 > r0))
          throw std::invalid_argument("domain: shell needs 0 < r0 < r1");
        break;
      case DomainKind::box4d:
        for (int i = 0; i < 4; ++i)
          if (!(extent[i] > 0.0))
            throw std::invalid_argument("domain: box extents must be > 0");
        break;
    }
    if (eta > 0.0 && eta >= 0.5 * inradius())
      throw std::invalid_argument("domain: eta must be < characteristic size / 4");
  }
};

enum class MeshMode { radial, grid };

struct Mesh {
  MeshMode mode = MeshMode::radial;
  DomainSpec dom;

  // radial
  int n = 0;
  double a = 0.0, b = 0.0, dr = 0.0;
  std::vector<double> r;       // node radii
  std::vector<double> cface;   // 2 pi^2 r_{j+1/2}^3 / dr, couples nodes j, j+1
  std::vector<double> qsec;    // pi^2 (r_{j+1/2}^2 - r_{j-1/2}^2), for l(l+2)/r^2
  size_t ifirst = 0, ilast = 0;  // interior node range, inclusive

  // grid
  std::array<int, 4> dims{};
  std::array<double, 4> hx{};
  double cellvol = 0.0;
  std::vector<int> cells;                 // active cell -> lattice index
  std::vector<int> compact;               // lattice index -> active cell or -1
  std::vector<std::array<int, 8>> nbr;    // [2*axis + side], -1 = Dirichlet face
  std::vector<double> bdist;              // per active cell, axis-metric chamfer

  // both modes
  std::vector<double> w;  // quadrature weights (4-volume per node)
  double vol = 0.0;
  double hmin = 0.0;      // finest spacing, used as a generic small length
  double inradius_mesh = 0.0;

  size_t size() const { return w.size(); }
};

using MeshPtr = std::shared_ptr<const Mesh>;

inline MeshPtr make_radial_mesh(const DomainSpec& dom, int n = 2000) {
  if (dom.kind == DomainKind::box4d)
    throw std::invalid_argument("make_radial_mesh: box domains need a grid mesh");
  if (n < 8) throw std::invalid_argument("make_radial_mesh: n must be >= 8");
  dom.validate();
  auto m = std::make_shared<Mesh>();
  m->mode = MeshMode::radial;
  m->dom = dom;
  m->n = n;
  m->a = dom.kind == DomainKind::ball ? 0.0 : dom.r0;
  m->b = dom.kind == DomainKind::ball ? dom.radius : dom.r1;
  m->dr = (m->b - m->a) / (n - 1);
  m->r.resize(n);
  for (int j = 0; j < n; ++j) m->r[j] = m->a + j * m->dr;
  m->r[n - 1] = m->b;
  m->w.resize(n);
  m->qsec.assign(n, 0.0);
  const double twopi2 = 2.0 * pi * pi;
  auto face = [&](int j) {  // radius of the face between nodes j and j+1
    return m->a + (j + 0.5) * m->dr;
  };
  for (int j = 0; j < n; ++j) {
    const double lo = j == 0 ? m->a : face(j - 1);
    const double hi = j == n - 1 ? m->b : face(j);
    m->w[j] = twopi2 * (hi * hi * hi * hi - lo * lo * lo * lo) / 4.0;
    m->qsec[j] = pi * pi * (hi * hi - lo * lo);
  }
  m->cface.resize(n - 1);
  for (int j = 0; j + 1 < n; ++j) {
    const double rf = face(j);
    m->cface[j] = twopi2 * rf * rf * rf / m->dr;
  }
  m->ifirst = dom.kind == DomainKind::ball ? 0 : 1;
  m->ilast = static_cast<size_t>(n) - 2;
  m->vol = 0.0;
  for (double ww : m->w) m->vol += ww;
  m->hmin = m->dr;
  m->inradius_mesh = dom.inradius();
  return m;
}

inline MeshPtr make_grid_mesh(const DomainSpec& dom, int cells_per_axis = 24) {
  if (dom.kind != DomainKind::box4d)
    throw std::invalid_argument("make_grid_mesh: only box domains carry grids");
  if (cells_per_axis < 4)
    throw std::invalid_argument("make_grid_mesh: need >= 4 cells per axis");
  dom.validate();
  auto m = std::make_shared<Mesh>();
  m->mode = MeshMode::grid;
  m->dom = dom;
  for (int i = 0; i < 4; ++i) {
    m->dims[i] = cells_per_axis;
    m->hx[i] = dom.extent[i] / cells_per_axis;
  }
  m->cellvol = m->hx[0] * m->hx[1] * m->hx[2] * m->hx[3];
  const long long nlat = static_cast<long long>(cells_per_axis) * cells_per_axis *
                         cells_per_axis * cells_per_axis;
  m->compact.assign(nlat, -1);
  auto center = [&](int i0, int i1, int i2, int i3) {
    return Vec4{(i0 + 0.5) * m->hx[0], (i1 + 0.5) * m->hx[1],
                (i2 + 0.5) * m->hx[2], (i3 + 0.5) * m->hx[3]};
  };
  const int d = cells_per_axis;
  for (int i3 = 0; i3 < d; ++i3)
    for (int i2 = 0; i2 < d; ++i2)
      for (int i1 = 0; i1 < d; ++i1)
        for (int i0 = 0; i0 < d; ++i0) {
          const long long lin = i0 + static_cast<long long>(d) * (i1 + static_cast<long long>(d) * (i2 + static_cast<long long>(d) * i3));
          if (!dom.mask || dom.mask(center(i0, i1, i2, i3)))
            m->compact[lin] = 0;
        }
  // assign compact indices in lattice order
  int nact = 0;
  for (long long lin = 0; lin < nlat; ++lin)
    if (m->compact[lin] >= 0) m->compact[lin] = nact++;
  if (nact == 0) throw std::invalid_argument("make_grid_mesh: mask removed every cell");
  m->cells.resize(nact);
  for (long long lin = 0; lin < nlat; ++lin)
    if (m->compact[lin] >= 0) m->cells[m->compact[lin]] = static_cast<int>(lin);
  m->nbr.assign(nact, {-1, -1, -1, -1, -1, -1, -1, -1});
  const long long stride[4] = {1, d, static_cast<long long>(d) * d,
                               static_cast<long long>(d) * d * d};
  for (int c = 0; c < nact; ++c) {
    long long lin = m->cells[c];
    int idx[4];
    long long t = lin;
    for (int aax = 0; aax < 4; ++aax) {
      idx[aax] = static_cast<int>(t % d);
      t /= d;
    }
    for (int aax = 0; aax < 4; ++aax) {
      if (idx[aax] > 0 && m->compact[lin - stride[aax]] >= 0)
        m->nbr[c][2 * aax] = m->compact[lin - stride[aax]];
      if (idx[aax] + 1 < d && m->compact[lin + stride[aax]] >= 0)
        m->nbr[c][2 * aax + 1] = m->compact[lin + stride[aax]];
    }
  }
  m->w.assign(nact, m->cellvol);
  m->vol = m->cellvol * nact;
  m->hmin = *std::min_element(m->hx.begin(), m->hx.end());
  // chamfer distance to the nearest Dirichlet face, axis metric
  m->bdist.assign(nact, std::numeric_limits<double>::infinity());
  for (int c = 0; c < nact; ++c)
    for (int aax = 0; aax < 4; ++aax)
      for (int s = 0; s < 2; ++s)
        if (m->nbr[c][2 * aax + s] < 0)
          m->bdist[c] = std::min(m->bdist[c], 0.5 * m->hx[aax]);
  for (int pass = 0; pass < 6; ++pass) {
    bool changed = false;
    auto relax = [&](int c) {
      for (int aax = 0; aax < 4; ++aax)
        for (int s = 0; s < 2; ++s) {
          const int nb = m->nbr[c][2 * aax + s];
          if (nb >= 0 && m->bdist[nb] + m->hx[aax] < m->bdist[c]) {
            m->bdist[c] = m->bdist[nb] + m->hx[aax];
            changed = true;
          }
        }
    };
    if (pass % 2 == 0)
      for (int c = 0; c < nact; ++c) relax(c);
    else
      for (int c = nact; c-- > 0;) relax(c);
    if (!changed) break;
  }
  m->inradius_mesh = 0.0;
  for (double v : m->bdist) m->inradius_mesh = std::max(m->inradius_mesh, v);
  return m;
}

struct Field {
  MeshPtr mesh;
  Vec v;
};

inline Field make_field(const MeshPtr& m, double c = 0.0) {
  return Field{m, Vec(m->size(), c)};
}

inline void require_same_mesh(const Field& x, const Field& y) {
  if (x.mesh != y.mesh || x.v.size() != y.v.size())
    throw std::invalid_argument("fields live on different meshes");
}

inline Field operator+(Field x, const Field& y) {
  require_same_mesh(x, y);
  for (size_t i = 0; i < x.v.size(); ++i) x.v[i] += y.v[i];
  return x;
}

inline Field operator-(Field x, const Field& y) {
  require_same_mesh(x, y);
  for (size_t i = 0; i < x.v.size(); ++i) x.v[i] -= y.v[i];
  return x;
}

inline Field operator*(double c, Field x) {
  for (double& t : x.v) t *= c;
  return x;
}

inline Vec4 node_point(const Mesh& m, size_t i) {
  if (m.mode == MeshMode::radial) return Vec4{m.r[i], 0.0, 0.0, 0.0};
  long long lin = m.cells[i];
  Vec4 p;
  for (int aax = 0; aax < 4; ++aax) {
    p[aax] = (static_cast<double>(lin % m.dims[aax]) + 0.5) * m.hx[aax];
    lin /= m.dims[aax];
  }
  return p;
}

inline double integrate(const Field& u) {
  double s = 0.0;
  for (size_t i = 0; i < u.v.size(); ++i) s += u.mesh->w[i] * u.v[i];
  return s;
}

inline double volume(const Mesh& m) { return m.vol; }

// log of integral h e^u, overflow-safe; logh omitted means h = 1.
inline double log_integral_exp(const Field& u, const Field* logh = nullptr) {
  if (logh) require_same_mesh(u, *logh);
  double mx = -std::numeric_limits<double>::infinity();
  for (size_t i = 0; i < u.v.size(); ++i) {
    const double z = u.v[i] + (logh ? logh->v[i] : 0.0);
    mx = std::max(mx, z);
  }
  double s = 0.0;
  for (size_t i = 0; i < u.v.size(); ++i) {
    const double z = u.v[i] + (logh ? logh->v[i] : 0.0);
    s += u.mesh->w[i] * std::exp(z - mx);
  }
  return mx + std::log(s);
}

namespace detail {

// Variational Laplacian: flux form with the field's stored boundary values
// as Dirichlet data (radial) / reflected zero-ghosts (grid). Output is zero
// at radial boundary nodes; the H bilinear form sums interior nodes only.
inline void lap_h(const Field& u, Field& out) {
  const Mesh& m = *u.mesh;
  if (m.mode == MeshMode::radial) {
    std::fill(out.v.begin(), out.v.end(), 0.0);
    for (size_t j = m.ifirst; j <= m.ilast; ++j) {
      const double fl = j == 0 ? 0.0 : m.cface[j - 1] * (u.v[j] - u.v[j - 1]);
      const double fh = m.cface[j] * (u.v[j + 1] - u.v[j]);
      out.v[j] = (fh - fl) / m.w[j];
    }
  } else {
    for (size_t c = 0; c < m.cells.size(); ++c) {
      double acc = 0.0;
      for (int aax = 0; aax < 4; ++aax) {
        const double inv = 1.0 / (m.hx[aax] * m.hx[aax]);
        const int lo = m.nbr[c][2 * aax], hi = m.nbr[c][2 * aax + 1];
        const double ul = lo >= 0 ? u.v[lo] : -u.v[c];
        const double uh = hi >= 0 ? u.v[hi] : -u.v[c];
        acc += (ul - 2.0 * u.v[c] + uh) * inv;
      }
      out.v[c] = acc;
    }
  }
}

}  // namespace detail

// H = H^2 cap H^1_0 inner product: integral of (Delta u)(Delta v) in flux
// form. Exactly the bilinear form inverted by the Navier solve below.
inline double h_inner(const Field& u, const Field& v) {
  require_same_mesh(u, v);
  const Mesh& m = *u.mesh;
  Field lu = make_field(u.mesh), lv = make_field(u.mesh);
  detail::lap_h(u, lu);
  detail::lap_h(v, lv);
  double s = 0.0;
  if (m.mode == MeshMode::radial) {
    for (size_t j = m.ifirst; j <= m.ilast; ++j) s += m.w[j] * lu.v[j] * lv.v[j];
  } else {
    for (size_t c = 0; c < m.size(); ++c) s += m.w[c] * lu.v[c] * lv.v[c];
  }
  return s;
}

inline double h_norm(const Field& u) { return std::sqrt(std::max(0.0, h_inner(u, u))); }

// Diagnostic pointwise Laplacian. Interior agrees with the variational one;
// radial boundary nodes get quadratic extrapolation, grid cells with a
// missing neighbor use one-sided differences (so constants map to zero).
inline Field laplacian(const Field& u) {
  const Mesh& m = *u.mesh;
  Field out = make_field(u.mesh);
  if (m.mode == MeshMode::radial) {
    detail::lap_h(u, out);
    auto extrap = [&](size_t bnd, int dir) {
      const double l1 = out.v[bnd + dir], l2 = out.v[bnd + 2 * dir],
                   l3 = out.v[bnd + 3 * dir];
      out.v[bnd] = 3.0 * (l1 - l2) + l3;
    };
    if (m.ifirst > 0) extrap(0, +1);
    extrap(static_cast<size_t>(m.n) - 1, -1);
  } else {
    for (size_t c = 0; c < m.cells.size(); ++c) {
      double acc = 0.0;
      for (int aax = 0; aax < 4; ++aax) {
        const double inv = 1.0 / (m.hx[aax] * m.hx[aax]);
        const int lo = m.nbr[c][2 * aax], hi = m.nbr[c][2 * aax + 1];
        if (lo >= 0 && hi >= 0) {
          acc += (u.v[lo] - 2.0 * u.v[c] + u.v[hi]) * inv;
        } else if (hi >= 0) {
          const int hi2 = m.nbr[hi][2 * aax + 1];
          if (hi2 >= 0) acc += (u.v[c] - 2.0 * u.v[hi] + u.v[hi2]) * inv;
        } else if (lo >= 0) {
          const int lo2 = m.nbr[lo][2 * aax];
          if (lo2 >= 0) acc += (u.v[c] - 2.0 * u.v[lo] + u.v[lo2]) * inv;
        }
      }
      out.v[c] = acc;
    }
  }
  return out;
}

// Dirichlet data on the boundary faces: evaluated at the face center, with
// the face identified by (point, axis, side). Radial meshes use axis 0 and
// side 0/1 for the inner/outer sphere.
struct BoundaryData {
  std::function<double(const Vec4&, int, int)> fn;
  static BoundaryData zero() { return BoundaryData{nullptr}; }
  static BoundaryData constant(double c) {
    return BoundaryData{[c](const Vec4&, int, int) { return c; }};
  }
  static BoundaryData of_point(std::function<double(const Vec4&)> f) {
    return BoundaryData{[f = std::move(f)](const Vec4& p, int, int) { return f(p); }};
  }
  double operator()(const Vec4& p, int axis, int side) const {
    return fn ? fn(p, axis, side) : 0.0;
  }
  bool trivial() const { return !fn; }
};

// Solves Delta u = f, u = g on the boundary. Radial: exact tridiagonal
// solve of the flux operator. Grid: CG on the ghost-eliminated stencil.
inline Field poisson_solve(const Field& f, const BoundaryData& g = BoundaryData::zero()) {
  const Mesh& m = *f.mesh;
  for (double t : f.v)
    if (!std::isfinite(t)) throw std::invalid_argument("poisson_solve: non-finite rhs");
  Field u = make_field(f.mesh);
  if (m.mode == MeshMode::radial) {
    const size_t ni = m.ilast - m.ifirst + 1;
    Vec diag(ni), off(ni - 1), rhs(ni);
    for (size_t j = m.ifirst; j <= m.ilast; ++j) {
      const size_t k = j - m.ifirst;
      const double clo = j == 0 ? 0.0 : m.cface[j - 1];
      const double chi_ = m.cface[j];
      diag[k] = clo + chi_;
      if (j < m.ilast) off[k] = -m.cface[j];
      rhs[k] = -m.w[j] * f.v[j];
    }
    double gin = 0.0, gout = 0.0;
    if (!g.trivial()) {
      gout = g(Vec4{m.b, 0, 0, 0}, 0, 1);
      if (m.ifirst > 0) gin = g(Vec4{m.a, 0, 0, 0}, 0, 0);
    }
    if (m.ifirst > 0) rhs[0] += m.cface[m.ifirst - 1] * gin;
    rhs[ni - 1] += m.cface[m.ilast] * gout;
    Vec sol = tridiag_solve_spd(diag, off, std::move(rhs));
    for (size_t j = m.ifirst; j <= m.ilast; ++j) u.v[j] = sol[j - m.ifirst];
    if (m.ifirst > 0) u.v[0] = gin;
    u.v[m.n - 1] = gout;
  } else {
    const size_t n = m.size();
    Vec b(n);
    for (size_t c = 0; c < n; ++c) b[c] = -f.v[c];
    if (!g.trivial()) {
      for (size_t c = 0; c < n; ++c) {
        const Vec4 p = node_point(m, c);
        for (int aax = 0; aax < 4; ++aax)
          for (int s = 0; s < 2; ++s)
            if (m.nbr[c][2 * aax + s] < 0) {
              Vec4 q = p;
              q[aax] += (s == 0 ? -0.5 : 0.5) * m.hx[aax];
              b[c] += 2.0 * g(q, aax, s) / (m.hx[aax] * m.hx[aax]);
            }
      }
    }
    auto apply = [&m](const Vec& x, Vec& y) {
      for (size_t c = 0; c < x.size(); ++c) {
        double acc = 0.0;
        for (int aax = 0; aax < 4; ++aax) {
          const double inv = 1.0 / (m.hx[aax] * m.hx[aax]);
          const int lo = m.nbr[c][2 * aax], hi = m.nbr[c][2 * aax + 1];
          const double xl = lo >= 0 ? x[lo] : -x[c];
          const double xh = hi >= 0 ? x[hi] : -x[c];
          acc += (xl - 2.0 * x[c] + xh) * inv;
        }
        y[c] = -acc;
      }
    };
    CgResult res = cg_solve(apply, b, 1e-12, 40000);
    u.v = std::move(res.x);
  }
  return u;
}

// Navier problem Delta^2 u = f, u = Delta u = 0: two chained Dirichlet
// solves. Self-adjoint in the quadrature inner product by construction.
inline Field biharmonic_solve_navier(const Field& f) {
  return poisson_solve(poisson_solve(f));
}

inline double boundary_distance(const DomainSpec& dom, const Vec4& x) {
  switch (dom.kind) {
    case DomainKind::ball: return dom.radius - norm4(x);
    case DomainKind::shell: {
      const double r = norm4(x);
      return std::min(r - dom.r0, dom.r1 - r);
    }
    case DomainKind::box4d: {
      double d = std::numeric_limits<double>::infinity();
      for (int i = 0; i < 4; ++i) d = std::min({d, x[i], dom.extent[i] - x[i]});
      return d;
    }
  }
  return 0.0;
}

// Mesh-aware variant: masked grids fall back to the chamfer table (axis
// metric, an upper bound within a factor 2 of the Euclidean distance).
inline double boundary_distance(const Mesh& m, const Vec4& x) {
  if (m.mode == MeshMode::grid && m.dom.mask) {
    std::array<int, 4> idx;
    for (int aax = 0; aax < 4; ++aax) {
      int i = static_cast<int>(std::floor(x[aax] / m.hx[aax]));
      idx[aax] = std::clamp(i, 0, m.dims[aax] - 1);
    }
    const long long lin = idx[0] + static_cast<long long>(m.dims[0]) *
                                       (idx[1] + static_cast<long long>(m.dims[1]) *
                                                     (idx[2] + static_cast<long long>(m.dims[2]) * idx[3]));
    const int c = m.compact[lin];
    return c >= 0 ? m.bdist[c] : 0.0;
  }
  return boundary_distance(m.dom, x);
}

// Smooth random field vanishing on the boundary; deterministic in the seed.
inline Field random_field(const MeshPtr& mp, uint64_t seed, double amplitude = 1.0,
                          int nmodes = 6) {
  const Mesh& m = *mp;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Field u = make_field(mp);
  if (m.mode == MeshMode::radial) {
    std::vector<double> amp(nmodes);
    for (int k = 0; k < nmodes; ++k) amp[k] = amplitude * gauss(rng) / ((k + 1) * (k + 1));
    for (int j = 0; j < m.n; ++j) {
      const double s = m.dom.kind == DomainKind::ball
                           ? (m.r[j] / m.b) * (m.r[j] / m.b)
                           : (m.r[j] - m.a) / (m.b - m.a);
      double val = 0.0;
      for (int k = 0; k < nmodes; ++k) val += amp[k] * std::sin((k + 1) * pi * s);
      u.v[j] = val;
    }
    if (m.ifirst > 0) u.v[0] = 0.0;
    u.v[m.n - 1] = 0.0;
  } else {
    struct Mode {
      int k[4];
      double a;
    };
    std::vector<Mode> modes(nmodes);
    std::uniform_int_distribution<int> ki(1, 3);
    for (auto& mo : modes) {
      int s2 = 0;
      for (int aax = 0; aax < 4; ++aax) {
        mo.k[aax] = ki(rng);
        s2 += mo.k[aax] * mo.k[aax];
      }
      mo.a = amplitude * gauss(rng) / s2;
    }
    for (size_t c = 0; c < m.size(); ++c) {
      const Vec4 p = node_point(m, c);
      double val = 0.0;
      for (const auto& mo : modes) {
        double t = mo.a;
        for (int aax = 0; aax < 4; ++aax)
          t *= std::sin(mo.k[aax] * pi * p[aax] / m.dom.extent[aax]);
        val += t;
      }
      u.v[c] = val;
    }
  }
  return u;
}

// Radial sector solve: (-Delta + l(l+2)/r^2) u = f with zero Dirichlet data;
// ball meshes drop the origin node for l >= 1 (angular modes vanish there).
inline Field sector_poisson_zero(const Field& f, long long l) {
  const Mesh& m = *f.mesh;
  if (m.mode != MeshMode::radial)
    throw std::invalid_argument("sector_poisson_zero: radial meshes only");
  if (l < 0) throw std::invalid_argument("sector_poisson_zero: l must be >= 0");
  const size_t first = (m.dom.kind == DomainKind::ball && l >= 1) ? 1 : m.ifirst;
  const size_t ni = m.ilast - first + 1;
  Vec diag(ni), off(ni > 1 ? ni - 1 : 0), rhs(ni);
  const double ll = static_cast<double>(l) * (l + 2);
  for (size_t j = first; j <= m.ilast; ++j) {
    const size_t k = j - first;
    const double clo = j == 0 ? 0.0 : m.cface[j - 1];
    diag[k] = clo + m.cface[j] + ll * m.qsec[j];
    if (j < m.ilast) off[k] = -m.cface[j];
    rhs[k] = m.w[j] * f.v[j];
  }
  Vec sol = tridiag_solve_spd(diag, off, std::move(rhs));
  Field u = make_field(f.mesh);
  for (size_t j = first; j <= m.ilast; ++j) u.v[j] = sol[j - first];
  return u;
}

}  // namespace mf4d
