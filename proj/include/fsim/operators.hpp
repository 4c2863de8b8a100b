#ifndef FSIM_OPERATORS_HPP
#define FSIM_OPERATORS_HPP

#include <Eigen/Dense>
#include <vector>

#include "fsim/deformation.hpp"
#include "fsim/extension.hpp"
#include "fsim/fem.hpp"

namespace fsim {

/// MINI fluid state on the reference mesh: rotated-back velocity, bubble
/// coefficients, and pressure.
struct FluidState {
  std::vector<Vec3> u;    // P1 nodal
  std::vector<Vec3> ub;   // per element bubble
  std::vector<double> p;  // P1 nodal, mean zero

  static FluidState rest(const Mesh& mesh) {
    FluidState s;
    s.u.assign(mesh.nodes.size(), Vec3::Zero());
    s.ub.assign(mesh.tets.size(), Vec3::Zero());
    s.p.assign(mesh.nodes.size(), 0.0);
    return s;
  }
};

/// Body-frame rigid rates: translational h' pulled back by R, and the
/// body angular rate.
struct RigidRates {
  Vec3 v = Vec3::Zero();  // R^T h'
  Vec3 w = Vec3::Zero();  // body angular velocity
};

struct PhysParams {
  double nu = 1.0;       // fluid viscosity
  double rho_f = 1.0;    // fluid density
  double rho_s = 1.0;    // solid density (mass/inertia come from the datum)
};

/// Deformation datum sampled on the fluid mesh's interface nodes, stored as
/// full-size nodal arrays (zero away from the interface).
struct InterfaceDatum {
  std::vector<Vec3> xstar_minus_y;  // X*(y) - y
  std::vector<Vec3> xstar_dot;      // dX*/dt
};

inline InterfaceDatum sample_interface_datum(const Mesh& fluid, const SolidMesh& solid,
                                             const DeformationField& d, double t) {
  std::vector<Vec3> pos, vel;
  d.eval_nodal(solid, t, pos, vel);
  InterfaceDatum out;
  out.xstar_minus_y.assign(fluid.nodes.size(), Vec3::Zero());
  out.xstar_dot.assign(fluid.nodes.size(), Vec3::Zero());
  for (std::size_t i = 0; i < fluid.interface_nodes.size(); ++i) {
    const int fi = fluid.interface_nodes[i], si = solid.interface_nodes[i];
    out.xstar_minus_y[fi] = pos[si] - solid.nodes[si];
    out.xstar_dot[fi] = vel[si];
  }
  return out;
}

/// No-slip lift on the interface beyond the rigid part carried by the
/// coupled unknowns: W_i = w x (X*_i - y_i) + dX*/dt_i, with the body rate
/// taken from the previous Picard iterate.
inline std::vector<Vec3> interface_lift(const Mesh& fluid, const InterfaceDatum& ifd,
                                        const Vec3& omega_prev) {
  std::vector<Vec3> lift(fluid.nodes.size(), Vec3::Zero());
  for (int i : fluid.interface_nodes)
    lift[i] = omega_prev.cross(ifd.xstar_minus_y[i]) + ifd.xstar_dot[i];
  return lift;
}

/// Per-iterate load vector of the Picard scheme. `mom` is laid out like the
/// MINI velocity space (3 per node, then 3 per element bubble); `div` holds
/// the lagged divergence datum per quadrature point; `rigid` the body-frame
/// forcing of the six rigid equations (linear momentum then angular).
struct PicardLoads {
  Eigen::VectorXd mom;
  std::vector<double> div;
  Eigen::Matrix<double, 6, 1> rigid;
};

namespace detail {

// velocity and gradient of a MINI field at a barycentric point of tet e
inline Vec3 mini_value(const Mesh& mesh, const std::vector<Vec3>& u,
                       const std::vector<Vec3>& ub, std::size_t e,
                       const std::array<double, 4>& l) {
  const auto& t = mesh.tets[e];
  Vec3 val = bubble_value(l) * ub[e];
  for (int a = 0; a < 4; ++a) val += l[a] * u[t[a]];
  return val;
}

inline Mat3 mini_gradient(const Mesh& mesh, const std::vector<ElementGeometry>& elems,
                          const std::vector<Vec3>& u, const std::vector<Vec3>& ub,
                          std::size_t e, const std::array<double, 4>& l) {
  const auto& t = mesh.tets[e];
  Mat3 g = ub[e] * bubble_gradient(l, elems[e].grad).transpose();
  for (int a = 0; a < 4; ++a) g += u[t[a]] * elems[e].grad[a].transpose();
  return g;
}

}  // namespace detail

/// Assembles the lagged (previous-iterate) loads of one Picard iterate for
/// the time-independent coupled matrix
///   rho_f M/dt + 2 nu D:D (+ pressure/divergence rows, rigid blocks).
/// Everything that depends on the extension geometry A = (grad X)^-1, on the
/// frame rates, or nonlinearly on the state is evaluated at (state_k,
/// rigid_k) and moved to the right-hand side; for the identity geometry at
/// rest every entry vanishes identically.
inline PicardLoads assemble_picard_loads(
    const Mesh& mesh, const std::vector<ElementGeometry>& elems, const ExtensionMap& ext,
    const FluidState& state_k, const FluidState& state_n, const RigidRates& rigid_k,
    const RigidRates& rigid_n, const InterfaceDatum& ifd, const InertiaTensor& inertia,
    double solid_mass, const PhysParams& phys, double dt) {
  const int nn = static_cast<int>(mesh.nodes.size());
  const int ne = static_cast<int>(mesh.tets.size());
  PicardLoads out;
  out.mom = Eigen::VectorXd::Zero(3 * (nn + ne));
  out.div.assign(4 * ne, 0.0);

  // interface mismatch test fields w_j = e_j x (X* - y), P1 on the interface
  Eigen::Matrix<double, 3, 1> wres = Eigen::Matrix<double, 3, 1>::Zero();

  for (int e = 0; e < ne; ++e) {
    const auto& t = mesh.tets[e];
    const auto& el = elems[e];
    const double wq = el.volume * QuadRule::tet_weight();

    // exact time-term mass application rho_f/dt * M u^n
    {
      const double c0 = phys.rho_f / dt;
      for (int a = 0; a < 4; ++a) {
        Vec3 m = Vec3::Zero();
        for (int b = 0; b < 4; ++b) m += mini::mass_p1(el.volume, a, b) * state_n.u[t[b]];
        m += mini::mass_p1_bubble(el.volume) * state_n.ub[e];
        for (int c = 0; c < 3; ++c) out.mom[3 * t[a] + c] += c0 * m[c];
      }
      Vec3 mb = mini::mass_bubble(el.volume) * state_n.ub[e];
      for (int b = 0; b < 4; ++b) mb += mini::mass_p1_bubble(el.volume) * state_n.u[t[b]];
      for (int c = 0; c < 3; ++c) out.mom[3 * nn + 3 * e + c] += (phys.rho_f / dt) * mb[c];
    }

    bool has_ifc = false;
    for (int a = 0; a < 4; ++a)
      if (ifd.xstar_minus_y[t[a]].squaredNorm() > 0.0 || ifd.xstar_dot[t[a]].squaredNorm() > 0.0)
        has_ifc = true;

    for (int q = 0; q < QuadRule::n_tet; ++q) {
      const auto& l = QuadRule::tet_points()[q];
      const Mat3& A = ext.grad_inv[4 * e + q];
      const Mat3 Am1 = A - Mat3::Identity();

      const Vec3 uk = detail::mini_value(mesh, state_k.u, state_k.ub, e, l);
      const Mat3 gk = detail::mini_gradient(mesh, elems, state_k.u, state_k.ub, e, l);
      const Vec3 xt = detail::mini_value(mesh, ext.pos, ext.pos_b, e, l);
      const Vec3 xt_dot = detail::mini_value(mesh, ext.vel, ext.vel_b, e, l);
      double pk = 0.0;
      for (int a = 0; a < 4; ++a) pk += l[a] * state_k.p[t[a]];

      // lagged divergence datum: div u = tr(grad u (I - A))
      out.div[4 * e + q] = -(gk * Am1).trace();

      // frame + convection force (moved to the right with a minus)
      const Vec3 drift = uk - rigid_k.v - rigid_k.w.cross(xt) - xt_dot;
      const Vec3 f = -phys.rho_f * (rigid_k.w.cross(uk) + gk * (A * drift));

      // viscous geometric correction, same quadrature for both forms
      const Mat3 SA = 0.5 * ((gk * A) + (gk * A).transpose());
      const Mat3 SI = 0.5 * (gk + gk.transpose());
      const Vec3 gb = bubble_gradient(l, el.grad);

      for (int a = 0; a < 4; ++a) {
        const Vec3 ga = el.grad[a];
        const Vec3 visc = 2.0 * phys.nu * (SA * (A.transpose() * ga) - SI * ga);
        const Vec3 pres = pk * (Am1.transpose() * ga);
        for (int c = 0; c < 3; ++c)
          out.mom[3 * t[a] + c] += wq * (l[a] * f[c] - visc[c] + pres[c]);
      }
      const double bv = bubble_quad_scale() * bubble_value(l);
      const Vec3 viscb = 2.0 * phys.nu * (SA * (A.transpose() * gb) - SI * gb);
      const Vec3 presb = pk * (Am1.transpose() * gb);
      for (int c = 0; c < 3; ++c)
        out.mom[3 * nn + 3 * e + c] += wq * (bv * f[c] - viscb[c] + presb[c]);

      if (has_ifc) {
        // residual of the transformed momentum functional tested with
        // w_j = e_j x (X* - y): the angular equation inherits it because the
        // rigid test velocity acts through X*, not the reference position
        Vec3 wval = Vec3::Zero();
        Mat3 wgrad = Mat3::Zero();
        for (int a = 0; a < 4; ++a) {
          wval += l[a] * ifd.xstar_minus_y[t[a]];
          wgrad += ifd.xstar_minus_y[t[a]] * el.grad[a].transpose();
        }
        const Vec3 un = detail::mini_value(mesh, state_n.u, state_n.ub, e, l);
        const Vec3 inertial =
            phys.rho_f * ((uk - un) / dt + rigid_k.w.cross(uk) + gk * (A * drift));
        const Mat3 GA = gk * A;
        const Mat3 SAw = 0.5 * (GA + GA.transpose());
        // r(e_j x m) for the P1 field m: value e_j x wval, gradient S(e_j) wgrad
        for (int j = 0; j < 3; ++j) {
          const Vec3 ej = Vec3::Unit(j);
          const Vec3 wj = ej.cross(wval);
          const Mat3 wjg = skew(ej) * wgrad;
          const Mat3 wjgA = wjg * A;
          double r = inertial.dot(wj);
          r += 2.0 * phys.nu * (SAw.cwiseProduct(0.5 * (wjgA + wjgA.transpose()))).sum();
          r -= pk * (wjgA).trace();
          wres[j] += wq * r;
        }
      }
    }
  }

  // rigid forcing: linear momentum then angular momentum, body frame
  const Vec3 fm = (solid_mass / dt) * rigid_n.v - solid_mass * rigid_k.w.cross(rigid_k.v);
  const Vec3 fi = inertia.I0 * rigid_n.w / dt -
                  (inertia.I_star - inertia.I0) * (rigid_k.w - rigid_n.w) / dt -
                  inertia.I_star_dot * rigid_k.w -
                  rigid_k.w.cross(inertia.I_star * rigid_k.w) - wres;
  out.rigid << fm, fi;
  return out;
}

}  // namespace fsim

#endif
