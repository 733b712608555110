#pragma once

// Point-mass view of a density field, shared by the covering search, the
// barycenter clustering and the weak-distance pairing.
//
// Radial meshes expand each radial cell into a fixed direction set on S^3
// that is closed under x -> -x, so the centroid of every shell cancels to
// rounding; grids contribute their cell centers. Long radial meshes are
// grouped into at most max_shells bands (mass-weighted representative
// radius) to keep cloud sizes workable.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "mf4d/domain.hpp"

namespace mf4d {

struct MassCloud {
  std::vector<Vec4> pts;
  std::vector<double> mass;  // nonnegative
  double total = 0.0;
  size_t size() const { return pts.size(); }
};

// 48 unit vectors: +-e_i, all sign choices of (1,1,1,1)/2, and all
// permutations of (+-1,+-1,0,0)/sqrt(2). Antipodally symmetric.
inline const std::vector<Vec4>& s3_directions() {
  static const std::vector<Vec4> dirs = [] {
    std::vector<Vec4> d;
    for (int i = 0; i < 4; ++i)
      for (int s = -1; s <= 1; s += 2) {
        Vec4 p{0.0, 0.0, 0.0, 0.0};
        p[i] = s;
        d.push_back(p);
      }
    for (int mask = 0; mask < 16; ++mask) {
      Vec4 p;
      for (int i = 0; i < 4; ++i) p[i] = (mask >> i & 1) ? 0.5 : -0.5;
      d.push_back(p);
    }
    const double q = 1.0 / std::sqrt(2.0);
    for (int i = 0; i < 4; ++i)
      for (int j = i + 1; j < 4; ++j)
        for (int si = -1; si <= 1; si += 2)
          for (int sj = -1; sj <= 1; sj += 2) {
            Vec4 p{0.0, 0.0, 0.0, 0.0};
            p[i] = si * q;
            p[j] = sj * q;
            d.push_back(p);
          }
    return d;
  }();
  return dirs;
}

// density >= 0 nodewise (tiny negatives are clamped); masses carry the
// quadrature weights, so cloud.total matches integrate(density).
inline MassCloud mass_cloud(const Field& density, int max_shells = 512) {
  const Mesh& m = *density.mesh;
  MassCloud cloud;
  double mx = 0.0;
  for (double t : density.v) mx = std::max(mx, std::abs(t));
  for (double t : density.v)
    if (t < -1e-12 * mx) throw std::invalid_argument("mass_cloud: density must be nonnegative");
  if (m.mode == MeshMode::grid) {
    cloud.pts.reserve(m.size());
    cloud.mass.reserve(m.size());
    for (size_t c = 0; c < m.size(); ++c) {
      cloud.pts.push_back(node_point(m, c));
      const double mass = m.w[c] * std::max(0.0, density.v[c]);
      cloud.mass.push_back(mass);
      cloud.total += mass;
    }
    return cloud;
  }
  const auto& dirs = s3_directions();
  const int groups = std::min(m.n, std::max(1, max_shells));
  cloud.pts.reserve(static_cast<size_t>(groups) * dirs.size());
  cloud.mass.reserve(static_cast<size_t>(groups) * dirs.size());
  for (int g = 0; g < groups; ++g) {
    const int j0 = static_cast<int>(static_cast<long long>(g) * m.n / groups);
    const int j1 = static_cast<int>(static_cast<long long>(g + 1) * m.n / groups);
    double mass = 0.0, mr = 0.0, wsum = 0.0, wr = 0.0;
    for (int j = j0; j < j1; ++j) {
      const double mj = m.w[j] * std::max(0.0, density.v[j]);
      mass += mj;
      mr += mj * m.r[j];
      wsum += m.w[j];
      wr += m.w[j] * m.r[j];
    }
    const double rg = mass > 0.0 ? mr / mass : (wsum > 0.0 ? wr / wsum : m.r[j0]);
    const double share = mass / dirs.size();
    for (const Vec4& d : dirs) {
      cloud.pts.push_back(Vec4{rg * d[0], rg * d[1], rg * d[2], rg * d[3]});
      cloud.mass.push_back(share);
    }
    cloud.total += mass;
  }
  return cloud;
}

namespace detail {

// Uniform hash bins over the cloud; neighbor scans cover a fixed radius.
struct CloudBins {
  double cell = 1.0;
  Vec4 origin{};
  std::unordered_map<uint64_t, std::vector<int>> bins;

  static uint64_t key(const std::array<int, 4>& i) {
    uint64_t k = 0;
    for (int a = 0; a < 4; ++a) k = (k << 16) | static_cast<uint16_t>(i[a] + 0x4000);
    return k;
  }
  std::array<int, 4> index(const Vec4& p) const {
    std::array<int, 4> i;
    for (int a = 0; a < 4; ++a) i[a] = static_cast<int>(std::floor((p[a] - origin[a]) / cell));
    return i;
  }
  void build(const MassCloud& c, double radius) {
    cell = radius;
    origin = Vec4{0.0, 0.0, 0.0, 0.0};
    for (const Vec4& p : c.pts)
      for (int a = 0; a < 4; ++a) origin[a] = std::min(origin[a], p[a]);
    bins.clear();
    for (size_t i = 0; i < c.pts.size(); ++i) bins[key(index(c.pts[i]))].push_back(static_cast<int>(i));
  }
  // visit indices of all points within `radius` bins of p (superset of the
  // metric ball of the build radius)
  template <class F>
  void visit(const Vec4& p, F&& f) const {
    const auto ic = index(p);
    std::array<int, 4> i;
    for (i[0] = ic[0] - 1; i[0] <= ic[0] + 1; ++i[0])
      for (i[1] = ic[1] - 1; i[1] <= ic[1] + 1; ++i[1])
        for (i[2] = ic[2] - 1; i[2] <= ic[2] + 1; ++i[2])
          for (i[3] = ic[3] - 1; i[3] <= ic[3] + 1; ++i[3]) {
            auto it = bins.find(key(i));
            if (it == bins.end()) continue;
            for (int idx : it->second) f(idx);
          }
  }
};

}  // namespace detail

}  // namespace mf4d
