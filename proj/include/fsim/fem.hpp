#ifndef FSIM_FEM_HPP
#define FSIM_FEM_HPP

#include <array>
#include <vector>

#include "fsim/mesh.hpp"

namespace fsim {

// Per-element P1 data: constant basis gradients and volume.
struct ElementGeometry {
  std::array<Vec3, 4> grad;
  double volume;
};

inline std::vector<ElementGeometry> build_element_geometry(const Mesh& mesh) {
  std::vector<ElementGeometry> out(mesh.tets.size());
  for (std::size_t e = 0; e < mesh.tets.size(); ++e) {
    const auto& t = mesh.tets[e];
    Mat3 edges;
    edges.col(0) = mesh.nodes[t[1]] - mesh.nodes[t[0]];
    edges.col(1) = mesh.nodes[t[2]] - mesh.nodes[t[0]];
    edges.col(2) = mesh.nodes[t[3]] - mesh.nodes[t[0]];
    const Mat3 inv = edges.inverse();
    // rows of inv are grad lambda_1..3; lambda_0 closes the partition of unity
    for (int k = 0; k < 3; ++k) out[e].grad[k + 1] = inv.row(k).transpose();
    out[e].grad[0] = -(out[e].grad[1] + out[e].grad[2] + out[e].grad[3]);
    out[e].volume = mesh.tet_volumes[e];
  }
  return out;
}

// Cubic bubble 256 l0 l1 l2 l3 and its gradient at a barycentric point.
inline double bubble_value(const std::array<double, 4>& l) {
  return 256.0 * l[0] * l[1] * l[2] * l[3];
}

inline Vec3 bubble_gradient(const std::array<double, 4>& l, const std::array<Vec3, 4>& g) {
  Vec3 out = Vec3::Zero();
  for (int k = 0; k < 4; ++k) {
    double prod = 256.0;
    for (int j = 0; j < 4; ++j)
      if (j != k) prod *= l[j];
    out += prod * g[k];
  }
  return out;
}

// Rescales bubble-load quadrature so constant densities are integrated
// exactly (the 4-point rule underresolves the peaked cubic bubble).
inline double bubble_quad_scale() {
  static const double s = [] {
    double q = 0.0;
    for (const auto& l : QuadRule::tet_points()) q += QuadRule::tet_weight() * bubble_value(l);
    return (32.0 / 105.0) / q;
  }();
  return s;
}

// Exact integrals of P1/bubble products over one tet (from
// int l0^a l1^b l2^c l3^d = 6V a!b!c!d!/(a+b+c+d+3)!).
namespace mini {

inline double mass_p1(double vol, int a, int b) { return (a == b ? 0.1 : 0.05) * vol; }
inline double mass_p1_bubble(double vol) { return (8.0 / 105.0) * vol; }
inline double mass_bubble(double vol) { return (8192.0 / 51975.0) * vol; }
inline double int_bubble(double vol) { return (32.0 / 105.0) * vol; }

// int grad(b) tensor grad(b) = c V sum_k g_k g_k^T
inline Mat3 stiffness_bubble(const ElementGeometry& el) {
  Mat3 s = Mat3::Zero();
  for (const auto& g : el.grad) s += g * g.transpose();
  return (65536.0 / 15120.0) * el.volume * s;
}

// int lambda_c grad(b) = -(32/105) V g_c
inline Vec3 int_p1_grad_bubble(const ElementGeometry& el, int c) {
  return -(32.0 / 105.0) * el.volume * el.grad[c];
}

}  // namespace mini

// DOF layout of the MINI velocity space: 3 components per P1 node followed
// by 3 components per element bubble.
struct MiniLayout {
  int n_nodes = 0;
  int n_tets = 0;

  MiniLayout() = default;
  explicit MiniLayout(const Mesh& mesh)
      : n_nodes(static_cast<int>(mesh.nodes.size())),
        n_tets(static_cast<int>(mesh.tets.size())) {}

  int vel_node(int i, int c) const { return 3 * i + c; }
  int vel_bubble(int e, int c) const { return 3 * n_nodes + 3 * e + c; }
  int n_vel() const { return 3 * (n_nodes + n_tets); }
};

}  // namespace fsim

#endif
