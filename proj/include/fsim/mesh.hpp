#ifndef FSIM_MESH_HPP
#define FSIM_MESH_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fsim/errors.hpp"
#include "fsim/geometry.hpp"

namespace fsim {

enum class BoundaryTag { OuterWall, SolidInterface };

struct BoundaryFacet {
  std::array<int, 3> nodes;
  BoundaryTag tag;
  int owner_tet;
  Vec3 normal;  // unit, points out of the owning domain
  double area;
};

// Degree-2 simplex quadrature. Barycentric points; weights sum to 1.
struct QuadRule {
  static constexpr int n_tet = 4;
  static constexpr int n_tri = 3;

  static const std::array<std::array<double, 4>, 4>& tet_points() {
    static const double a = 0.5854101966249684544614;
    static const double b = 0.1381966011250105151795;
    static const std::array<std::array<double, 4>, 4> pts = {{
        {a, b, b, b}, {b, a, b, b}, {b, b, a, b}, {b, b, b, a}}};
    return pts;
  }
  static double tet_weight() { return 0.25; }

  static const std::array<std::array<double, 3>, 3>& tri_points() {
    static const std::array<std::array<double, 3>, 3> pts = {{
        {2.0 / 3.0, 1.0 / 6.0, 1.0 / 6.0},
        {1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0},
        {1.0 / 6.0, 1.0 / 6.0, 2.0 / 3.0}}};
    return pts;
  }
  static double tri_weight() { return 1.0 / 3.0; }
};

inline double tet_volume(const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d) {
  return (b - a).cross(c - a).dot(d - a) / 6.0;
}

struct Mesh {
  std::vector<Vec3> nodes;
  std::vector<std::array<int, 4>> tets;
  std::vector<BoundaryFacet> boundary_facets;
  std::vector<double> tet_volumes;
  QuadRule quad_rule;

  // Interface nodes, index-aligned with the companion SolidMesh list.
  std::vector<int> interface_nodes;

  double volume() const {
    double v = 0.0;
    for (double tv : tet_volumes) v += tv;
    return v;
  }

  Vec3 tet_node(int tet, int k) const { return nodes[tets[tet][k]]; }

  void finalize() {
    tet_volumes.resize(tets.size());
    for (std::size_t e = 0; e < tets.size(); ++e) {
      const auto& t = tets[e];
      tet_volumes[e] = tet_volume(nodes[t[0]], nodes[t[1]], nodes[t[2]], nodes[t[3]]);
      if (tet_volumes[e] <= 0.0)
        throw DegenerateElement("tet " + std::to_string(e) + " has volume " +
                                std::to_string(tet_volumes[e]));
    }
    for (auto& f : boundary_facets) {
      const Vec3 a = nodes[f.nodes[0]], b = nodes[f.nodes[1]], c = nodes[f.nodes[2]];
      Vec3 n = (b - a).cross(c - a);
      f.area = 0.5 * n.norm();
      if (f.area <= 0.0) throw DegenerateElement("zero-area boundary facet");
      n.normalize();
      // orient away from the owning tet
      const auto& t = tets[f.owner_tet];
      const Vec3 tc = 0.25 * (nodes[t[0]] + nodes[t[1]] + nodes[t[2]] + nodes[t[3]]);
      const Vec3 fc = (a + b + c) / 3.0;
      if (n.dot(fc - tc) < 0.0) n = -n;
      f.normal = n;
    }
  }
};

// The solid reference domain S, with surface facets matching the fluid
// mesh's SolidInterface facets node-for-node.
struct SolidMesh : Mesh {};

namespace detail {

struct GlobalTetMesh {
  std::vector<Vec3> nodes;
  std::vector<std::array<int, 4>> tets;
};

// Kuhn subdivision of a regular grid over [-h, h]^3 into 6 tets per cell.
inline GlobalTetMesh build_box_grid(double half_width, int resolution) {
  GlobalTetMesh g;
  const int n = resolution + 1;
  const double spacing = 2.0 * half_width / resolution;
  g.nodes.reserve(static_cast<std::size_t>(n) * n * n);
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        g.nodes.emplace_back(-half_width + i * spacing, -half_width + j * spacing,
                             -half_width + k * spacing);
  auto id = [n](int i, int j, int k) { return (k * n + j) * n + i; };

  // six tets around the main diagonal v000 -> v111
  static const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                  {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  for (int k = 0; k < resolution; ++k)
    for (int j = 0; j < resolution; ++j)
      for (int i = 0; i < resolution; ++i) {
        auto corner = [&](int bx, int by, int bz) { return id(i + bx, j + by, k + bz); };
        for (const auto& p : perms) {
          int bits[3] = {0, 0, 0};
          std::array<int, 4> tet;
          tet[0] = corner(0, 0, 0);
          bits[p[0]] = 1;
          tet[1] = corner(bits[0], bits[1], bits[2]);
          bits[p[1]] = 1;
          tet[2] = corner(bits[0], bits[1], bits[2]);
          tet[3] = corner(1, 1, 1);
          const double v = tet_volume(g.nodes[tet[0]], g.nodes[tet[1]],
                                      g.nodes[tet[2]], g.nodes[tet[3]]);
          if (v < 0.0) std::swap(tet[1], tet[2]);
          g.tets.push_back(tet);
        }
      }
  return g;
}

struct SortedTri {
  std::array<int, 3> v;
  SortedTri(int a, int b, int c) : v{a, b, c} { std::sort(v.begin(), v.end()); }
  bool operator<(const SortedTri& o) const { return v < o.v; }
};

inline Mesh extract_submesh(const GlobalTetMesh& g, const std::vector<char>& take,
                            const std::vector<BoundaryFacet>& global_facets,
                            std::vector<int>& global_to_local) {
  Mesh m;
  global_to_local.assign(g.nodes.size(), -1);
  std::vector<int> tet_map(g.tets.size(), -1);
  for (std::size_t e = 0; e < g.tets.size(); ++e) {
    if (!take[e]) continue;
    std::array<int, 4> loc;
    for (int k = 0; k < 4; ++k) {
      int gid = g.tets[e][k];
      if (global_to_local[gid] < 0) {
        global_to_local[gid] = static_cast<int>(m.nodes.size());
        m.nodes.push_back(g.nodes[gid]);
      }
      loc[k] = global_to_local[gid];
    }
    tet_map[e] = static_cast<int>(m.tets.size());
    m.tets.push_back(loc);
  }
  for (const auto& f : global_facets) {
    if (!take[f.owner_tet]) continue;
    BoundaryFacet lf = f;
    for (int k = 0; k < 3; ++k) lf.nodes[k] = global_to_local[f.nodes[k]];
    lf.owner_tet = tet_map[f.owner_tet];
    m.boundary_facets.push_back(lf);
  }
  m.finalize();
  return m;
}

// Splits grid tets crossing the sphere |x| = R into sub-tets conforming to
// the (piecewise-linear) sphere. Nodes close to the sphere are first warped
// onto it; remaining crossing edges get a cut vertex at the exact sphere
// intersection. Quad faces produced by cuts are split by a global
// smallest-index rule, so neighbouring tets agree face-for-face.
class SphereCutter {
 public:
  SphereCutter(GlobalTetMesh& g, double radius) : g_(g), radius_(radius) {
    phi_.resize(g_.nodes.size());
    for (std::size_t i = 0; i < g_.nodes.size(); ++i)
      phi_[i] = g_.nodes[i].norm() - radius_;
    const auto& t0 = g_.tets.front();
    cell_volume_ = std::abs(tet_volume(g_.nodes[t0[0]], g_.nodes[t0[1]],
                                       g_.nodes[t0[2]], g_.nodes[t0[3]]));
    warp();
  }

  // out: final tet list and per-tet solid flag
  void build(std::vector<std::array<int, 4>>& tets, std::vector<char>& is_solid) {
    const double tol = 1e-12 * radius_;
    for (const auto& t : g_.tets) {
      std::array<int, 4> neg{}, pos{}, zer{};
      int nn = 0, np = 0, nz = 0;
      for (int v : t) {
        if (phi_[v] < -tol)
          neg[nn++] = v;
        else if (phi_[v] > tol)
          pos[np++] = v;
        else
          zer[nz++] = v;
      }
      if (nn == 0 || np == 0) {
        // untouched by the sphere; zeros sit on it
        bool solid = nn > 0;
        if (nn == 0 && np == 0) {
          const Vec3 c = 0.25 * (g_.nodes[t[0]] + g_.nodes[t[1]] + g_.nodes[t[2]] + g_.nodes[t[3]]);
          solid = c.norm() < radius_;
        }
        emit(tets, is_solid, t, solid);
        continue;
      }
      if (nn > np) {  // mirror so nn <= np, flip the side flag back on emit
        std::swap(neg, pos);
        std::swap(nn, np);
        mirror_ = true;
      }
      // Prefer the decomposition with an extra on-sphere vertex per cut
      // polygon (captures the spherical-cap volume); fall back to the flat
      // cut when that produces a degenerate sub-tet.
      bool ok = false;
      for (int refine = 1; refine >= 0 && !ok; --refine) {
        min_thickness_ = refine ? 0.02 * std::cbrt(6.0 * cell_volume_) : 0.0;
        tmp_tets_.clear();
        tmp_solid_.clear();
        switch (nz * 10 + nn) {
          case 1: ok = split_1_3(neg[0], pos, refine != 0); break;
          case 2: ok = split_2_2(neg, pos, refine != 0); break;
          case 11: ok = split_1z_1_2(neg[0], zer[0], pos, refine != 0); break;
          case 21: ok = split_2z(neg[0], zer, pos[0], refine != 0); break;
          default: throw DegenerateElement("unexpected sphere-crossing configuration");
        }
        ok = ok && tmp_conforming();
      }
      if (!ok) throw DegenerateElement("sphere cut produced a degenerate sub-tet");
      tets.insert(tets.end(), tmp_tets_.begin(), tmp_tets_.end());
      is_solid.insert(is_solid.end(), tmp_solid_.begin(), tmp_solid_.end());
      mirror_ = false;
    }
  }

 private:
  void warp() {
    constexpr double alpha = 0.25;
    std::vector<char> snap(g_.nodes.size(), 0);
    for (const auto& t : g_.tets)
      for (int a = 0; a < 4; ++a)
        for (int b = a + 1; b < 4; ++b) {
          const int ia = t[a], ib = t[b];
          if (phi_[ia] * phi_[ib] < 0.0) {
            const double s = phi_[ia] / (phi_[ia] - phi_[ib]);
            if (s < alpha) snap[ia] = 1;
            if (s > 1.0 - alpha) snap[ib] = 1;
          }
        }
    for (std::size_t i = 0; i < g_.nodes.size(); ++i)
      if (snap[i]) {
        g_.nodes[i] *= radius_ / g_.nodes[i].norm();
        phi_[i] = 0.0;
      }
  }

  int cut(int a, int b) {
    const auto key = std::minmax(a, b);
    auto it = cuts_.find(key);
    if (it != cuts_.end()) return it->second;
    const Vec3 pa = g_.nodes[a], d = g_.nodes[b] - pa;
    // |pa + s d| = R, opposite-sign endpoints give exactly one root in (0,1)
    const double qa = d.squaredNorm(), qb = pa.dot(d),
                 qc = pa.squaredNorm() - radius_ * radius_;
    const double disc = std::sqrt(std::max(0.0, qb * qb - qa * qc));
    double s = (-qb + disc) / qa;
    if (s <= 0.0 || s >= 1.0) s = (-qb - disc) / qa;
    if (s <= 0.0 || s >= 1.0) throw DegenerateElement("sphere cut outside edge");
    const int id = static_cast<int>(g_.nodes.size());
    g_.nodes.push_back(pa + s * d);
    phi_.push_back(0.0);
    cuts_.emplace(key, id);
    return id;
  }

  void emit(std::vector<std::array<int, 4>>& tets, std::vector<char>& is_solid,
            std::array<int, 4> t, bool solid) {
    const double v = tet_volume(g_.nodes[t[0]], g_.nodes[t[1]], g_.nodes[t[2]], g_.nodes[t[3]]);
    if (v < 0.0) std::swap(t[1], t[2]);
    tets.push_back(t);
    is_solid.push_back((solid != mirror_) ? 1 : 0);
  }

  // candidate sub-tet; rejects (returns false) when too small or thinner
  // than the current altitude floor (slivers crush under later mesh motion)
  bool emit_sub(std::array<int, 4> t, bool solid) {
    const double v = tet_volume(g_.nodes[t[0]], g_.nodes[t[1]], g_.nodes[t[2]], g_.nodes[t[3]]);
    if (std::abs(v) < 1e-14 * cell_volume_) return false;
    double amax = 0.0;
    const int idx[4][3] = {{0, 1, 2}, {0, 1, 3}, {0, 2, 3}, {1, 2, 3}};
    for (const auto& f : idx)
      amax = std::max(amax, 0.5 * (g_.nodes[t[f[1]]] - g_.nodes[t[f[0]]])
                                      .cross(g_.nodes[t[f[2]]] - g_.nodes[t[f[0]]])
                                      .norm());
    if (3.0 * std::abs(v) / amax < min_thickness_) return false;
    if (v < 0.0) std::swap(t[1], t[2]);
    tmp_tets_.push_back(t);
    tmp_solid_.push_back((solid != mirror_) ? 1 : 0);
    return true;
  }

  // A decomposition is valid only if the two tets meeting at each internal
  // face sit on opposite sides of it; a fan whose apex falls outside a
  // non-convex piece folds over and fails this check (the caller then
  // retries with the flat cut, whose pieces are convex).
  bool tmp_conforming() const {
    std::map<std::array<int, 3>, double> side;
    for (const auto& t : tmp_tets_) {
      const int idx[4][3] = {{0, 1, 2}, {0, 1, 3}, {0, 2, 3}, {1, 2, 3}};
      const int opp[4] = {3, 2, 1, 0};
      for (int f = 0; f < 4; ++f) {
        std::array<int, 3> key = {t[idx[f][0]], t[idx[f][1]], t[idx[f][2]]};
        std::sort(key.begin(), key.end());
        const double s = tet_volume(g_.nodes[key[0]], g_.nodes[key[1]],
                                    g_.nodes[key[2]], g_.nodes[t[opp[f]]]);
        auto [it, fresh] = side.emplace(key, s);
        if (!fresh && it->second * s >= 0.0) return false;
      }
    }
    return true;
  }

  // extra vertex on the sphere above the centroid of a cut polygon
  int sphere_point(std::initializer_list<int> poly) {
    Vec3 c = Vec3::Zero();
    for (int v : poly) c += g_.nodes[v];
    c /= static_cast<double>(poly.size());
    c *= radius_ / c.norm();
    g_.nodes.push_back(c);
    phi_.push_back(0.0);
    return static_cast<int>(g_.nodes.size()) - 1;
  }

  int steiner_point(std::initializer_list<int> verts) {
    Vec3 c = Vec3::Zero();
    for (int v : verts) c += g_.nodes[v];
    g_.nodes.push_back(c / static_cast<double>(verts.size()));
    phi_.push_back(0.0);
    return static_cast<int>(g_.nodes.size()) - 1;
  }

  // quad given as a cycle a-b-c-d; diagonal through the smallest-index corner
  template <typename F>
  bool for_quad_tris(int a, int b, int c, int d, F&& f) {
    const int m = std::min({a, b, c, d});
    if (m == a || m == c) return f(a, b, c) && f(a, c, d);
    return f(b, c, d) && f(b, d, a);
  }

  // one negative vertex, three positive
  bool split_1_3(int n, const std::array<int, 4>& pos, bool refine) {
    const int p1 = pos[0], p2 = pos[1], p3 = pos[2];
    const int c1 = cut(n, p1), c2 = cut(n, p2), c3 = cut(n, p3);
    const int m = refine ? sphere_point({c1, c2, c3}) : -1;
    auto cut_tris = [&](auto tri) {
      if (!refine) return tri(c1, c2, c3);
      return tri(c1, c2, m) && tri(c2, c3, m) && tri(c3, c1, m);
    };
    bool ok = cut_tris([&](int a, int b, int c) { return emit_sub({n, a, b, c}, true); });
    const int s = steiner_point({p1, p2, p3, c1, c2, c3});
    auto tri = [&](int a, int b, int c) { return emit_sub({a, b, c, s}, false); };
    ok = ok && tri(p1, p2, p3) && cut_tris(tri) &&
         for_quad_tris(p1, p2, c2, c1, tri) && for_quad_tris(p2, p3, c3, c2, tri) &&
         for_quad_tris(p3, p1, c1, c3, tri);
    return ok;
  }

  // two negative, two positive: both pieces are combinatorial prisms
  bool split_2_2(const std::array<int, 4>& neg, const std::array<int, 4>& pos, bool refine) {
    const int n1 = neg[0], n2 = neg[1], p1 = pos[0], p2 = pos[1];
    const int c11 = cut(n1, p1), c12 = cut(n1, p2), c21 = cut(n2, p1), c22 = cut(n2, p2);
    int m = -1;
    if (refine) m = sphere_point({c11, c12, c22, c21});
    auto cut_tris = [&](auto tri) {
      if (!refine) return for_quad_tris(c11, c12, c22, c21, tri);
      return tri(c11, c12, m) && tri(c12, c22, m) && tri(c22, c21, m) && tri(c21, c11, m);
    };
    const int sn = steiner_point({n1, n2, c11, c12, c21, c22});
    auto ntri = [&](int a, int b, int c) { return emit_sub({a, b, c, sn}, true); };
    bool ok = ntri(n1, c11, c12) && ntri(n2, c21, c22) && cut_tris(ntri) &&
              for_quad_tris(n1, n2, c21, c11, ntri) && for_quad_tris(n1, n2, c22, c12, ntri);
    const int sp = steiner_point({p1, p2, c11, c12, c21, c22});
    auto ptri = [&](int a, int b, int c) { return emit_sub({a, b, c, sp}, false); };
    ok = ok && ptri(p1, c11, c21) && ptri(p2, c12, c22) && cut_tris(ptri) &&
         for_quad_tris(p1, p2, c12, c11, ptri) && for_quad_tris(p1, p2, c22, c21, ptri);
    return ok;
  }

  // one negative, one on-sphere, two positive
  bool split_1z_1_2(int n, int z, const std::array<int, 4>& pos, bool refine) {
    const int p1 = pos[0], p2 = pos[1];
    const int c1 = cut(n, p1), c2 = cut(n, p2);
    if (!refine) {
      bool ok = emit_sub({n, z, c1, c2}, true);
      // positive piece is a pyramid with apex z over quad c1-p1-p2-c2
      return ok && for_quad_tris(c1, p1, p2, c2, [&](int a, int b, int c) {
               return emit_sub({z, a, b, c}, false);
             });
    }
    const int m = sphere_point({z, c1, c2});
    bool ok = emit_sub({n, z, c1, m}, true) && emit_sub({n, c1, c2, m}, true) &&
              emit_sub({n, c2, z, m}, true);
    const int s = steiner_point({p1, p2, z, c1, c2, m});
    auto tri = [&](int a, int b, int c) { return emit_sub({a, b, c, s}, false); };
    ok = ok && tri(z, c1, p1) && tri(z, p1, p2) && tri(z, p2, c2) &&
         tri(z, c1, m) && tri(c1, c2, m) && tri(c2, z, m) &&
         for_quad_tris(c1, p1, p2, c2, tri);
    return ok;
  }

  // one negative, two on-sphere, one positive
  bool split_2z(int n, const std::array<int, 4>& zer, int p, bool refine) {
    const int z1 = zer[0], z2 = zer[1];
    const int c = cut(n, p);
    if (!refine) return emit_sub({n, z1, z2, c}, true) && emit_sub({p, z1, z2, c}, false);
    const int m = sphere_point({z1, z2, c});
    return emit_sub({n, z1, z2, m}, true) && emit_sub({n, z2, c, m}, true) &&
           emit_sub({n, c, z1, m}, true) && emit_sub({p, z1, z2, m}, false) &&
           emit_sub({p, z2, c, m}, false) && emit_sub({p, c, z1, m}, false);
  }

  GlobalTetMesh& g_;
  double radius_;
  double cell_volume_ = 0.0;
  double min_thickness_ = 0.0;
  std::vector<double> phi_;
  std::map<std::pair<int, int>, int> cuts_;
  std::vector<std::array<int, 4>> tmp_tets_;
  std::vector<char> tmp_solid_;
  bool mirror_ = false;
};

}  // namespace detail

/// Conforming fluid/solid meshes for a ball of radius `ball_radius` centered
/// in the box [-box_half_width, box_half_width]^3. Grid nodes near the sphere
/// are snapped radially onto it; tets still crossing it are subdivided along
/// exact sphere intersections (marching-tetrahedra style).
inline std::pair<Mesh, SolidMesh> generate_ball_in_box(double box_half_width,
                                                       double ball_radius,
                                                       int resolution) {
  if (!(ball_radius > 0.0) || !(ball_radius < box_half_width))
    throw ConfigInvalid("require 0 < ball_radius < box_half_width");
  const double spacing = 2.0 * box_half_width / resolution;
  if (resolution < 8 || box_half_width - ball_radius < 2.0 * spacing)
    throw ResolutionTooCoarse("need at least 2 cell layers between ball and wall");

  auto g = detail::build_box_grid(box_half_width, resolution);
  std::vector<std::array<int, 4>> final_tets;
  std::vector<char> is_solid;
  {
    detail::SphereCutter cutter(g, ball_radius);
    cutter.build(final_tets, is_solid);
  }
  g.tets = std::move(final_tets);

  // face incidence: box-boundary faces appear once; interface faces join a
  // solid tet and a fluid tet
  std::map<detail::SortedTri, std::pair<int, int>> faces;  // -> (tet, tet or -1)
  static const int face_of[4][3] = {{1, 2, 3}, {0, 3, 2}, {0, 1, 3}, {0, 2, 1}};
  for (std::size_t e = 0; e < g.tets.size(); ++e)
    for (const auto& fv : face_of) {
      detail::SortedTri key(g.tets[e][fv[0]], g.tets[e][fv[1]], g.tets[e][fv[2]]);
      auto [it, fresh] = faces.emplace(key, std::pair<int, int>{static_cast<int>(e), -1});
      if (!fresh) it->second.second = static_cast<int>(e);
    }

  std::vector<BoundaryFacet> fluid_facets, solid_facets;
  for (const auto& [key, owners] : faces) {
    const auto [e1, e2] = owners;
    if (e2 < 0) {
      if (is_solid[e1]) throw DegenerateElement("solid tet touches the outer wall");
      fluid_facets.push_back({{key.v[0], key.v[1], key.v[2]}, BoundaryTag::OuterWall, e1, {}, 0});
    } else if (is_solid[e1] != is_solid[e2]) {
      const int fl = is_solid[e1] ? e2 : e1;
      const int so = is_solid[e1] ? e1 : e2;
      fluid_facets.push_back({{key.v[0], key.v[1], key.v[2]}, BoundaryTag::SolidInterface, fl, {}, 0});
      solid_facets.push_back({{key.v[0], key.v[1], key.v[2]}, BoundaryTag::SolidInterface, so, {}, 0});
    }
  }

  std::vector<char> take_fluid(g.tets.size()), take_solid(g.tets.size());
  for (std::size_t e = 0; e < g.tets.size(); ++e) {
    take_fluid[e] = !is_solid[e];
    take_solid[e] = is_solid[e];
  }
  std::vector<int> g2f, g2s;
  Mesh fluid = detail::extract_submesh(g, take_fluid, fluid_facets, g2f);
  SolidMesh solid;
  static_cast<Mesh&>(solid) = detail::extract_submesh(g, take_solid, solid_facets, g2s);

  // index-aligned interface node lists
  for (std::size_t i = 0; i < g.nodes.size(); ++i)
    if (g2f[i] >= 0 && g2s[i] >= 0) {
      fluid.interface_nodes.push_back(g2f[i]);
      solid.interface_nodes.push_back(g2s[i]);
    }
  return {std::move(fluid), std::move(solid)};
}

inline void save_mesh(const Mesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path);
  out.precision(17);
  out << "FSIMESH 1\n";
  out << "NODES " << mesh.nodes.size() << "\n";
  for (const auto& n : mesh.nodes) out << n.x() << " " << n.y() << " " << n.z() << "\n";
  out << "TETS " << mesh.tets.size() << "\n";
  for (const auto& t : mesh.tets) out << t[0] << " " << t[1] << " " << t[2] << " " << t[3] << "\n";
  out << "FACETS " << mesh.boundary_facets.size() << "\n";
  for (const auto& f : mesh.boundary_facets)
    out << f.nodes[0] << " " << f.nodes[1] << " " << f.nodes[2] << " "
        << (f.tag == BoundaryTag::OuterWall ? "wall" : "solid") << "\n";
}

inline Mesh load_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string magic;
  int version = 0;
  in >> magic >> version;
  if (magic != "FSIMESH" || version != 1) throw IoError("bad mesh header in " + path);
  Mesh m;
  std::string section;
  std::size_t count = 0;
  in >> section >> count;
  if (section != "NODES") throw IoError("expected NODES");
  m.nodes.resize(count);
  for (auto& n : m.nodes) in >> n.x() >> n.y() >> n.z();
  in >> section >> count;
  if (section != "TETS") throw IoError("expected TETS");
  m.tets.resize(count);
  for (auto& t : m.tets) in >> t[0] >> t[1] >> t[2] >> t[3];
  in >> section >> count;
  if (section != "FACETS") throw IoError("expected FACETS");

  std::map<detail::SortedTri, int> face_owner;
  static const int face_of[4][3] = {{1, 2, 3}, {0, 3, 2}, {0, 1, 3}, {0, 2, 1}};
  for (std::size_t e = 0; e < m.tets.size(); ++e)
    for (const auto& fv : face_of)
      face_owner[detail::SortedTri(m.tets[e][fv[0]], m.tets[e][fv[1]], m.tets[e][fv[2]])] =
          static_cast<int>(e);
  m.boundary_facets.resize(count);
  for (auto& f : m.boundary_facets) {
    std::string tag;
    in >> f.nodes[0] >> f.nodes[1] >> f.nodes[2] >> tag;
    if (tag == "wall")
      f.tag = BoundaryTag::OuterWall;
    else if (tag == "solid")
      f.tag = BoundaryTag::SolidInterface;
    else
      throw IoError("unknown facet tag '" + tag + "'");
    auto it = face_owner.find(detail::SortedTri(f.nodes[0], f.nodes[1], f.nodes[2]));
    if (it == face_owner.end()) throw IoError("facet is not a face of any tet");
    f.owner_tet = it->second;
  }
  if (!in) throw IoError("truncated mesh file " + path);
  m.finalize();
  return m;
}

}  // namespace fsim

#endif
