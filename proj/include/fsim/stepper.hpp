#ifndef FSIM_STEPPER_HPP
#define FSIM_STEPPER_HPP

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "fsim/coupled.hpp"
#include "fsim/deformation.hpp"
#include "fsim/extension.hpp"
#include "fsim/operators.hpp"

namespace fsim {

/// Complete state of the coupled system at one time level.
struct CoupledState {
  double t = 0.0;
  RigidState rigid;   // space-frame pose and rates
  FluidState fluid;   // reference-domain MINI state
  ExtensionMap ext;   // reference-to-current domain map
};

struct PicardOptions {
  double tol = 1e-8;  // relative combined fluid+rigid increment
  int max_iter = 50;
  double compat_limit = std::numeric_limits<double>::infinity();
  ExtensionOptions extension;
};

struct PicardStats {
  int iterations = 0;
  double increment = 0.0;
  int extension_sweeps = 0;    // of the final geometry update
  double compat_mismatch = 0.0;
  double linear_residual = 0.0;  // of the last monolithic solve
};

/// One implicit step of size dt by fixed-point iteration: each sweep advances
/// the domain map with the lagged rigid rates, assembles the lagged loads,
/// and performs one monolithic linear solve for the fluid state and the six
/// rigid rates. On convergence the state is committed and the pose updated
/// (rotation through the exponential map, then the translation).
inline PicardStats fixed_point_step(const StokesSolver& ext_solver,
                                    const CoupledSolver& solver, const SolidMesh& solid,
                                    const DeformationField& deform, CoupledState& st,
                                    const PicardOptions& opt = {}) {
  const Mesh& mesh = solver.mesh();
  const double dt = solver.dt();
  const double t1 = st.t + dt;

  const InterfaceDatum ifd = sample_interface_datum(mesh, solid, deform, t1);
  const InertiaTensor itens = inertia(deform, solid, t1);
  const double solid_mass = deform.rho_s() * solid.volume();

  const RigidRates rigid_n{st.rigid.h_tilde_dot(), st.rigid.omega_tilde()};
  const FluidState& state_n = st.fluid;
  FluidState state_k = state_n;
  RigidRates rigid_k = rigid_n;

  PicardStats stats;
  ExtensionMap ext_k;
  double prev_inc = 1e300;
  int growing = 0;

  for (int it = 0; it < opt.max_iter; ++it) {
    // geometry sweep: the map is rebuilt from the identity against the
    // current datum (it depends on X*(t1) and the pose only, so it stays
    // uniformly close to the identity instead of accumulating the Lagrangian
    // drift of an advected map); interface nodes land exactly on X*(t1),
    // wall nodes on the reference-frame image of the fixed container
    const Mat3 R1 = integrate_rotation(st.rigid.R, rigid_k.w, dt);
    const Vec3 h1 = st.rigid.h + dt * (R1 * rigid_k.v);
    ext_k = make_identity_extension(ext_solver);
    // warm start from the previous map's pseudo-velocity
    for (std::size_t i = 0; i < mesh.nodes.size(); ++i)
      ext_k.vel[i] = (st.ext.pos[i] - mesh.nodes[i]) / dt + st.ext.vel[i];
    for (std::size_t e = 0; e < mesh.tets.size(); ++e)
      ext_k.vel_b[e] = st.ext.pos_b[e] / dt + st.ext.vel_b[e];
    std::vector<Vec3> bdata(mesh.nodes.size(), Vec3::Zero());
    for (int i : mesh.interface_nodes) bdata[i] = ifd.xstar_minus_y[i] / dt;
    for (const auto& f : mesh.boundary_facets)
      if (f.tag == BoundaryTag::OuterWall)
        for (int k = 0; k < 3; ++k) {
          const int i = f.nodes[k];
          bdata[i] = (R1.transpose() * (mesh.nodes[i] - h1) - mesh.nodes[i]) / dt;
        }
    const ExtensionStats ext_stats =
        advance_extension(ext_solver, ext_k, bdata, dt, opt.extension);
    stats.extension_sweeps = ext_stats.iterations;
    // the advance produced X(t1) through a pseudo-step from the identity;
    // the physical map velocity is the difference of consecutive maps
    for (std::size_t i = 0; i < mesh.nodes.size(); ++i)
      ext_k.vel[i] = (ext_k.pos[i] - st.ext.pos[i]) / dt;
    for (std::size_t e = 0; e < mesh.tets.size(); ++e)
      ext_k.vel_b[e] = (ext_k.pos_b[e] - st.ext.pos_b[e]) / dt;

    const PicardLoads loads = assemble_picard_loads(
        mesh, solver.elements(), ext_k, state_k, state_n, rigid_k, rigid_n, ifd, itens,
        solid_mass, solver.phys(), dt);
    const std::vector<Vec3> lift = interface_lift(mesh, ifd, rigid_k.w);
    const CoupledResult res = solver.solve(loads, lift, opt.compat_limit);
    stats.compat_mismatch = res.compat_mismatch;
    stats.linear_residual = res.linear_residual;

    double num2 = (res.rigid.v - rigid_k.v).squaredNorm() +
                  (res.rigid.w - rigid_k.w).squaredNorm();
    double den2 = res.rigid.v.squaredNorm() + res.rigid.w.squaredNorm();
    for (std::size_t e = 0; e < mesh.tets.size(); ++e) {
      const auto& t = mesh.tets[e];
      const double w = solver.elements()[e].volume * QuadRule::tet_weight();
      for (const auto& l : QuadRule::tet_points()) {
        Vec3 dv = bubble_value(l) * (res.state.ub[e] - state_k.ub[e]);
        Vec3 vv = bubble_value(l) * res.state.ub[e];
        for (int a = 0; a < 4; ++a) {
          dv += l[a] * (res.state.u[t[a]] - state_k.u[t[a]]);
          vv += l[a] * res.state.u[t[a]];
        }
        num2 += w * dv.squaredNorm();
        den2 += w * vv.squaredNorm();
      }
    }
    state_k = res.state;
    rigid_k = res.rigid;
    stats.iterations = it + 1;
    stats.increment = std::sqrt(num2) / std::max(std::sqrt(den2), 1e-12);
    if (stats.increment <= opt.tol) break;
    if (stats.increment >= prev_inc) {
      if (++growing >= 5)
        throw PicardDiverged("fixed point stopped contracting (increment " +
                             std::to_string(stats.increment) + ")");
    } else {
      growing = 0;
    }
    prev_inc = stats.increment;
    if (it + 1 == opt.max_iter)
      throw PicardDiverged("fixed point did not converge in " +
                           std::to_string(opt.max_iter) + " iterations");
  }

  st.fluid = state_k;
  st.ext = std::move(ext_k);
  st.t = t1;
  st.rigid.R = integrate_rotation(st.rigid.R, rigid_k.w, dt);
  st.rigid.omega = st.rigid.R * rigid_k.w;
  st.rigid.h_dot = st.rigid.R * rigid_k.v;
  st.rigid.h += dt * st.rigid.h_dot;
  return stats;
}

enum class TerminationReason { Completed, Contact, PicardDiverged, ExtensionDiverged };

inline const char* to_string(TerminationReason r) {
  switch (r) {
    case TerminationReason::Completed: return "completed";
    case TerminationReason::Contact: return "contact";
    case TerminationReason::PicardDiverged: return "picard_diverged";
    case TerminationReason::ExtensionDiverged: return "extension_diverged";
  }
  return "unknown";
}

struct SimulationOptions {
  double t_end = 1.0;
  double dt = 0.01;
  double contact_margin = -1.0;  // < 0: about two grid cells
  PicardOptions picard;
};

struct StepRecord {
  double t = 0.0;
  RigidState rigid;
  PicardStats picard;
  double min_det = 1.0;
};

struct SimulationResult {
  TerminationReason reason = TerminationReason::Completed;
  std::string message;
  std::vector<StepRecord> history;
};

/// Runs the fixed-step simulation until t_end or a termination condition;
/// `observer` (optional) sees the committed state after every step.
inline SimulationResult run_simulation(
    const StokesSolver& ext_solver, const CoupledSolver& solver, const SolidMesh& solid,
    const DeformationField& deform, CoupledState& st, const SimulationOptions& opt,
    const std::function<void(const CoupledState&, const PicardStats&)>& observer = {}) {
  SimulationResult out;
  double margin = opt.contact_margin;
  if (margin < 0.0) {
    const double vmean = solver.mesh().volume() / solver.mesh().tets.size();
    margin = 2.0 * std::cbrt(6.0 * vmean);
  }
  const int n_steps = static_cast<int>(std::llround(opt.t_end / opt.dt));
  for (int n = 0; n < n_steps; ++n) {
    PicardStats ps;
    try {
      ps = fixed_point_step(ext_solver, solver, solid, deform, st, opt.picard);
    } catch (const PicardDiverged& err) {
      out.reason = TerminationReason::PicardDiverged;
      out.message = err.what();
      return out;
    } catch (const ExtensionDiverged& err) {
      out.reason = TerminationReason::ExtensionDiverged;
      out.message = err.what();
      return out;
    }
    out.history.push_back({st.t, st.rigid, ps, st.ext.min_det});
    if (observer) observer(st, ps);
    const double dist = solid_wall_distance(solver.mesh(), solid, st.rigid, deform, st.t);
    if (dist < margin) {
      out.reason = TerminationReason::Contact;
      out.message = "solid within " + std::to_string(dist) + " of the wall";
      return out;
    }
  }
  out.reason = TerminationReason::Completed;
  return out;
}

}  // namespace fsim

#endif
