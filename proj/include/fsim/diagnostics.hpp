#ifndef FSIM_DIAGNOSTICS_HPP
#define FSIM_DIAGNOSTICS_HPP

#include <cstdio>
#include <string>
#include <vector>

#include "fsim/coupled.hpp"
#include "fsim/deformation.hpp"
#include "fsim/extension.hpp"
#include "fsim/operators.hpp"
#include "fsim/stepper.hpp"

namespace fsim {

namespace detail {

/// Residual of the transformed momentum form evaluated at the accepted state
/// and tested with the P1 nodal fields in `tests` (zero entries are skipped
/// element-wise). For a test field supported on a boundary this recovers the
/// traction functional the discrete equations actually see; for interior
/// fields of a converged state it is zero to solver tolerance. The mass-type
/// terms use the exact element integrals, matching the system matrix.
inline std::vector<double> momentum_residual(
    const Mesh& mesh, const std::vector<ElementGeometry>& elems, const ExtensionMap& ext,
    const FluidState& state, const FluidState& state_prev, const RigidRates& rigid,
    const PhysParams& phys, double dt, const std::vector<std::vector<Vec3>>& tests) {
  std::vector<double> out(tests.size(), 0.0);
  for (std::size_t e = 0; e < mesh.tets.size(); ++e) {
    const auto& te = mesh.tets[e];
    bool touched = false;
    for (const auto& tf : tests)
      for (int a = 0; a < 4; ++a) touched |= tf[te[a]].squaredNorm() > 0.0;
    if (!touched) continue;

    // explicit Vec3 return: an auto-deduced Eigen expression would reference
    // temporaries that die when the lambda returns
    auto accel = [&](const Vec3& u1, const Vec3& u0) -> Vec3 {
      return (u1 - u0) / dt + rigid.w.cross(u1);
    };
    for (std::size_t k = 0; k < tests.size(); ++k)
      for (int a = 0; a < 4; ++a) {
        if (tests[k][te[a]].squaredNorm() == 0.0) continue;
        Vec3 m = mini::mass_p1_bubble(elems[e].volume) * accel(state.ub[e], state_prev.ub[e]);
        for (int b = 0; b < 4; ++b)
          m += mini::mass_p1(elems[e].volume, a, b) *
               accel(state.u[te[b]], state_prev.u[te[b]]);
        out[k] += phys.rho_f * m.dot(tests[k][te[a]]);
      }

    const double w = elems[e].volume * QuadRule::tet_weight();
    for (int q = 0; q < QuadRule::n_tet; ++q) {
      const auto& l = QuadRule::tet_points()[q];
      const Mat3& A = ext.grad_inv[4 * e + q];
      const Vec3 u = mini_value(mesh, state.u, state.ub, e, l);
      const Mat3 g = mini_gradient(mesh, elems, state.u, state.ub, e, l);
      const Vec3 xt = mini_value(mesh, ext.pos, ext.pos_b, e, l);
      const Vec3 xt_dot = mini_value(mesh, ext.vel, ext.vel_b, e, l);
      double p = 0.0;
      for (int a = 0; a < 4; ++a) p += l[a] * state.p[te[a]];
      const Vec3 drift = u - rigid.v - rigid.w.cross(xt) - xt_dot;
      const Vec3 convective = phys.rho_f * (g * (A * drift));
      const Mat3 GA = g * A;
      const Mat3 S = 0.5 * (GA + GA.transpose());

      for (std::size_t k = 0; k < tests.size(); ++k) {
        Vec3 tval = Vec3::Zero();
        Mat3 tgrad = Mat3::Zero();
        for (int a = 0; a < 4; ++a) {
          tval += l[a] * tests[k][te[a]];
          tgrad += tests[k][te[a]] * elems[e].grad[a].transpose();
        }
        const Mat3 tgA = tgrad * A;
        out[k] += w * (convective.dot(tval) +
                       2.0 * phys.nu * (S.cwiseProduct(0.5 * (tgA + tgA.transpose()))).sum() -
                       p * tgA.trace());
      }
    }
  }
  return out;
}

}  // namespace detail

struct EnergyReport {
  double kinetic_energy = 0.0;       // 1/2 rho_f |u|^2_F + 1/2 M|v|^2 + 1/2 w.I* w
  double dissipation = 0.0;          // 2 nu int |D(u)|^2 with the transformed gradient
  double deformation_kinetic = 0.0;  // 1/2 rho_s int |dX*/dt|^2 (informational)
  double deformation_power = 0.0;    // traction work through the interface datum
  double energy_residual = 0.0;      // (E^n - E^{n-1})/dt + dissipation - power, <= 0
};

/// Energy bookkeeping between two accepted states. Norms are body-frame
/// (rotation preserves them, the volume-preserving map keeps det = 1) and the
/// rotational energy uses the deformed inertia I*(t). The residual convention:
/// negative values mean the implicit step dissipated more than the physical
/// rate, which is the expected O(dt) behavior without deformation input.
inline EnergyReport energy_report(const Mesh& mesh,
                                  const std::vector<ElementGeometry>& elems,
                                  const ExtensionMap& ext, const FluidState& fluid,
                                  const FluidState& fluid_prev, const RigidRates& rigid,
                                  const RigidRates& rigid_prev,
                                  const InertiaTensor& itens,
                                  const InertiaTensor& itens_prev, double solid_mass,
                                  const SolidMesh& solid, const DeformationField& deform,
                                  double t, const PhysParams& phys, double dt) {
  EnergyReport out;
  double ke_prev = 0.0;
  for (std::size_t e = 0; e < mesh.tets.size(); ++e) {
    const auto& te = mesh.tets[e];
    const double w = elems[e].volume * QuadRule::tet_weight();
    for (int q = 0; q < QuadRule::n_tet; ++q) {
      const auto& l = QuadRule::tet_points()[q];
      const Vec3 u = detail::mini_value(mesh, fluid.u, fluid.ub, e, l);
      const Vec3 up = detail::mini_value(mesh, fluid_prev.u, fluid_prev.ub, e, l);
      out.kinetic_energy += 0.5 * phys.rho_f * w * u.squaredNorm();
      ke_prev += 0.5 * phys.rho_f * w * up.squaredNorm();
      const Mat3 g = detail::mini_gradient(mesh, elems, fluid.u, fluid.ub, e, l);
      const Mat3 ga = g * ext.grad_inv[4 * e + q];
      const Mat3 d = 0.5 * (ga + ga.transpose());
      out.dissipation += 2.0 * phys.nu * w * d.squaredNorm();
    }
  }
  out.kinetic_energy += 0.5 * solid_mass * rigid.v.squaredNorm() +
                        0.5 * rigid.w.dot(itens.I_star * rigid.w);
  ke_prev += 0.5 * solid_mass * rigid_prev.v.squaredNorm() +
             0.5 * rigid_prev.w.dot(itens_prev.I_star * rigid_prev.w);

  std::vector<Vec3> pos, vel;
  deform.eval_nodal(solid, t, pos, vel);
  for (std::size_t e = 0; e < solid.tets.size(); ++e) {
    const auto& te = solid.tets[e];
    const double w = solid.tet_volumes[e] * QuadRule::tet_weight();
    for (const auto& l : QuadRule::tet_points()) {
      Vec3 v = Vec3::Zero();
      for (int k = 0; k < 4; ++k) v += l[k] * vel[te[k]];
      out.deformation_kinetic += 0.5 * deform.rho_s() * w * v.squaredNorm();
    }
  }

  // power fed through the interface datum: the momentum residual tested with
  // the non-rigid part of the no-slip data, w x (X* - y) + dX*/dt
  InterfaceDatum ifd = sample_interface_datum(mesh, solid, deform, t);
  std::vector<Vec3> wfield = interface_lift(mesh, ifd, rigid.w);
  out.deformation_power = -detail::momentum_residual(mesh, elems, ext, fluid, fluid_prev,
                                                     rigid, phys, dt, {wfield})[0];
  out.energy_residual =
      (out.kinetic_energy - ke_prev) / dt + out.dissipation - out.deformation_power;
  return out;
}

struct MomentumReport {
  Vec3 fluid = Vec3::Zero();          // space frame
  Vec3 solid = Vec3::Zero();          // space frame, rigid part (H3 kills the rest)
  Vec3 wall_traction = Vec3::Zero();  // space frame, force of the wall on the fluid
  Vec3 reaction = Vec3::Zero();       // space frame, fluid force on the solid
  Vec3 total() const { return fluid + solid; }
};

/// Momentum bookkeeping with variationally consistent tractions: the wall
/// traction and the interface reaction are the momentum residual tested with
/// the node indicators of each boundary, which is exactly what the discrete
/// equations exchange. d/dt (fluid + solid) should track wall_traction.
inline MomentumReport momentum_report(const Mesh& mesh,
                                      const std::vector<ElementGeometry>& elems,
                                      const ExtensionMap& ext, const FluidState& state,
                                      const FluidState& state_prev,
                                      const RigidRates& rigid, const RigidState& pose,
                                      double solid_mass, const PhysParams& phys,
                                      double dt) {
  MomentumReport out;
  std::vector<char> on_wall(mesh.nodes.size(), 0), on_ifc(mesh.nodes.size(), 0);
  for (const auto& f : mesh.boundary_facets)
    for (int k = 0; k < 3; ++k)
      (f.tag == BoundaryTag::OuterWall ? on_wall : on_ifc)[f.nodes[k]] = 1;

  std::vector<std::vector<Vec3>> tests(
      6, std::vector<Vec3>(mesh.nodes.size(), Vec3::Zero()));
  for (std::size_t i = 0; i < mesh.nodes.size(); ++i)
    for (int j = 0; j < 3; ++j) {
      if (on_wall[i]) tests[j][i] = Vec3::Unit(j);
      if (on_ifc[i]) tests[3 + j][i] = Vec3::Unit(j);
    }
  const std::vector<double> r = detail::momentum_residual(
      mesh, elems, ext, state, state_prev, rigid, phys, dt, tests);
  // the functional value at a boundary is the force that boundary supplies to
  // the fluid; the force the fluid exerts back on the solid is the negative
  out.wall_traction = pose.R * Vec3(r[0], r[1], r[2]);
  out.reaction = -pose.R * Vec3(r[3], r[4], r[5]);

  // exact element integrals (the bubble is cubic, the 4-point rule is not)
  Vec3 mom_body = Vec3::Zero();
  for (std::size_t e = 0; e < mesh.tets.size(); ++e) {
    const auto& te = mesh.tets[e];
    Vec3 u = mini::int_bubble(1.0) * state.ub[e];
    for (int a = 0; a < 4; ++a) u += 0.25 * state.u[te[a]];
    mom_body += phys.rho_f * elems[e].volume * u;
  }
  out.fluid = pose.R * mom_body;
  out.solid = solid_mass * pose.h_dot;
  return out;
}

/// One CSV row of the run log; column order matches write_csv's header.
struct DiagnosticsRecord {
  double t = 0.0;
  Vec3 h = Vec3::Zero(), h_dot = Vec3::Zero(), omega = Vec3::Zero();
  double kinetic_energy = 0.0;
  double dissipation = 0.0;
  double energy_residual = 0.0;
  double deformation_power = 0.0;
  Vec3 momentum_total = Vec3::Zero();
  Vec3 wall_traction = Vec3::Zero();
  double h2_residual = 0.0, h3_residual = 0.0, h4_residual = 0.0;
  double det_residual = 0.0;       // max |det grad X - 1|
  double piola_residual = 0.0;
  double interface_bc_residual = 0.0;
  double dist_to_wall = 0.0;
  int picard_iterations = 0;
  double linear_residual = 0.0;
};

/// Full per-step record from two consecutive accepted states.
inline DiagnosticsRecord collect_diagnostics(
    const StokesSolver& ext_solver, const CoupledSolver& solver, const SolidMesh& solid,
    const DeformationField& deform, const CoupledState& prev, const CoupledState& st,
    const PicardStats& ps) {
  const Mesh& mesh = solver.mesh();
  const double dt = solver.dt();
  const double solid_mass = deform.rho_s() * solid.volume();
  const RigidRates rigid{st.rigid.h_tilde_dot(), st.rigid.omega_tilde()};
  const RigidRates rigid_prev{prev.rigid.h_tilde_dot(), prev.rigid.omega_tilde()};
  const InertiaTensor itens = inertia(deform, solid, st.t);
  const InertiaTensor itens_prev = inertia(deform, solid, prev.t);

  DiagnosticsRecord r;
  r.t = st.t;
  r.h = st.rigid.h;
  r.h_dot = st.rigid.h_dot;
  r.omega = st.rigid.omega;

  const EnergyReport er =
      energy_report(mesh, solver.elements(), st.ext, st.fluid, prev.fluid, rigid,
                    rigid_prev, itens, itens_prev, solid_mass, solid, deform, st.t,
                    solver.phys(), dt);
  r.kinetic_energy = er.kinetic_energy;
  r.dissipation = er.dissipation;
  r.energy_residual = er.energy_residual;
  r.deformation_power = er.deformation_power;

  const MomentumReport mr =
      momentum_report(mesh, solver.elements(), st.ext, st.fluid, prev.fluid, rigid,
                      st.rigid, solid_mass, solver.phys(), dt);
  r.momentum_total = mr.total();
  r.wall_traction = mr.wall_traction;

  const ConstraintResiduals cr = constraint_residuals(deform, solid, st.t);
  r.h2_residual = std::abs(cr.flux);
  r.h3_residual = cr.lin_mom.norm();
  r.h4_residual = cr.ang_mom.norm();

  r.det_residual = std::max(std::abs(st.ext.min_det - 1.0), std::abs(st.ext.max_det - 1.0));
  r.piola_residual = piola_residual(ext_solver, st.ext);

  const InterfaceDatum ifd = sample_interface_datum(mesh, solid, deform, st.t);
  for (int i : mesh.interface_nodes) {
    const Vec3 target = rigid.v + rigid.w.cross(mesh.nodes[i]) +
                        rigid.w.cross(ifd.xstar_minus_y[i]) + ifd.xstar_dot[i];
    r.interface_bc_residual =
        std::max(r.interface_bc_residual, (st.fluid.u[i] - target).norm());
  }
  r.dist_to_wall = solid_wall_distance(mesh, solid, st.rigid, deform, st.t);
  r.picard_iterations = ps.iterations;
  r.linear_residual = ps.linear_residual;
  return r;
}

inline void write_csv(const std::string& path, const std::vector<DiagnosticsRecord>& rec) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw IoError("cannot open " + path);
  std::fprintf(f,
               "t,hx,hy,hz,hdotx,hdoty,hdotz,omegax,omegay,omegaz,"
               "kinetic_energy,dissipation,energy_residual,deformation_power,"
               "px,py,pz,wall_fx,wall_fy,wall_fz,"
               "h2_residual,h3_residual,h4_residual,det_residual,piola_residual,"
               "interface_bc_residual,dist_to_wall,picard_iterations,linear_residual\n");
  for (const auto& r : rec) {
    std::fprintf(f,
                 "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,"
                 "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,"
                 "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%d,%.17g\n",
                 r.t, r.h.x(), r.h.y(), r.h.z(), r.h_dot.x(), r.h_dot.y(), r.h_dot.z(),
                 r.omega.x(), r.omega.y(), r.omega.z(), r.kinetic_energy, r.dissipation,
                 r.energy_residual, r.deformation_power, r.momentum_total.x(),
                 r.momentum_total.y(), r.momentum_total.z(), r.wall_traction.x(),
                 r.wall_traction.y(), r.wall_traction.z(), r.h2_residual, r.h3_residual,
                 r.h4_residual, r.det_residual, r.piola_residual,
                 r.interface_bc_residual, r.dist_to_wall, r.picard_iterations,
                 r.linear_residual);
  }
  std::fclose(f);
}

}  // namespace fsim

#endif
