#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "fsim/coupled.hpp"
#include "fsim/diagnostics.hpp"
#include "fsim/mesh.hpp"
#include "fsim/stepper.hpp"

using namespace fsim;

namespace {

struct Setup {
  Mesh fluid;
  SolidMesh solid;
  DeformationField deform = DeformationField::none(1.0);
  double mass = 0.0;
  InertiaTensor itens;

  Setup(int res, DeformationField d) : deform(std::move(d)) {
    auto pair = generate_ball_in_box(1.0, 0.3, res);
    fluid = std::move(pair.first);
    solid = std::move(pair.second);
    mass = deform.rho_s() * solid.volume();
    itens = inertia(deform, solid, 0.0);
  }
};

}  // namespace

TEST_CASE("identity geometry and zero state produce zero loads") {
  Setup s(8, DeformationField::none(1.0));
  StokesSolver ext_solver(s.fluid);
  const double dt = 0.02;
  CoupledSolver solver(s.fluid, {}, s.mass, s.itens.I0, dt);
  auto ext = make_identity_extension(ext_solver);
  auto ifd = sample_interface_datum(s.fluid, s.solid, s.deform, dt);
  auto zero = FluidState::rest(s.fluid);
  auto loads = assemble_picard_loads(s.fluid, solver.elements(), ext, zero, zero, {}, {},
                                     ifd, s.itens, s.mass, solver.phys(), dt);
  REQUIRE(loads.mom.cwiseAbs().maxCoeff() == 0.0);
  for (double g : loads.div) REQUIRE(g == 0.0);
  REQUIRE(loads.rigid.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("a system at rest stays exactly at rest") {
  Setup s(8, DeformationField::none(1.0));
  StokesSolver ext_solver(s.fluid);
  CoupledSolver solver(s.fluid, {}, s.mass, s.itens.I0, 0.05);
  CoupledState st;
  st.fluid = FluidState::rest(s.fluid);
  st.ext = make_identity_extension(ext_solver);
  auto ps = fixed_point_step(ext_solver, solver, s.solid, s.deform, st);
  REQUIRE(ps.iterations == 1);
  for (const auto& u : st.fluid.u) REQUIRE(u.norm() < 1e-12);
  REQUIRE(st.rigid.h_dot.norm() < 1e-12);
  REQUIRE(st.rigid.omega.norm() < 1e-12);
  REQUIRE(st.rigid.h.norm() < 1e-12);
  REQUIRE((st.rigid.R - Mat3::Identity()).norm() < 1e-14);
}

TEST_CASE("impulsively started solid decelerates with monotone energy decay") {
  Setup s(8, DeformationField::none(1.0));
  StokesSolver ext_solver(s.fluid);
  const double dt = 0.02;
  CoupledSolver solver(s.fluid, {}, s.mass, s.itens.I0, dt);
  CoupledState st;
  st.fluid = FluidState::rest(s.fluid);
  st.ext = make_identity_extension(ext_solver);
  st.rigid.h_dot = Vec3(0.1, 0.0, 0.0);
  st.rigid.omega = Vec3(0.0, 0.0, 0.2);

  double eprev = std::numeric_limits<double>::max();
  double vprev = st.rigid.h_dot.norm();
  Vec3 ptot_prev = s.mass * st.rigid.h_dot;
  for (int n = 0; n < 6; ++n) {
    FluidState prev = st.fluid;
    RigidRates before{st.rigid.h_tilde_dot(), st.rigid.omega_tilde()};
    fixed_point_step(ext_solver, solver, s.solid, s.deform, st);
    RigidRates after{st.rigid.h_tilde_dot(), st.rigid.omega_tilde()};
    auto er = energy_report(s.fluid, solver.elements(), st.ext, st.fluid, prev, after,
                            before, s.itens, s.itens, s.mass, s.solid, s.deform, st.t,
                            solver.phys(), dt);
    REQUIRE(er.kinetic_energy < eprev);
    REQUIRE(er.dissipation >= 0.0);
    // without deformation input the implicit step can only over-dissipate
    REQUIRE(er.deformation_power == 0.0);
    REQUIRE(er.energy_residual <= 1e-10);
    eprev = er.kinetic_energy;

    // without propulsion the solid can only slow down
    REQUIRE(st.rigid.h_dot.norm() < vprev);
    vprev = st.rigid.h_dot.norm();

    auto mr = momentum_report(s.fluid, solver.elements(), st.ext, st.fluid, prev, after,
                              st.rigid, s.mass, solver.phys(), dt);
    // the discrete rigid equation balances the variational reaction
    const Vec3 newton =
        s.mass * (after.v - before.v) / dt + s.mass * after.w.cross(after.v);
    const Vec3 reaction_body = st.rigid.R.transpose() * mr.reaction;
    REQUIRE((newton - reaction_body).norm() < 5e-3 * std::max(reaction_body.norm(), 1e-3));

    // total momentum changes only through the wall traction
    const Vec3 dpdt = (mr.total() - ptot_prev) / dt;
    REQUIRE((dpdt - mr.wall_traction).norm() <
            0.05 * std::max(mr.wall_traction.norm(), 1e-4));
    ptot_prev = mr.total();
  }
  // the motion decays by orders of magnitude over the run
  REQUIRE(st.rigid.h_dot.norm() < 0.01);
  REQUIRE(st.rigid.omega.norm() < 0.02);
}

TEST_CASE("deformation datum is sampled consistently onto the fluid interface") {
  Setup s(8, DeformationField::travelling_wave(0.02, 4.0, 1.0));
  auto d = project_deformation(s.deform, s.solid);
  auto ifd = sample_interface_datum(s.fluid, s.solid, d, 0.3);
  std::vector<Vec3> pos, vel;
  d.eval_nodal(s.solid, 0.3, pos, vel);
  double moved = 0.0;
  for (std::size_t i = 0; i < s.fluid.interface_nodes.size(); ++i) {
    const int fi = s.fluid.interface_nodes[i], si = s.solid.interface_nodes[i];
    REQUIRE((ifd.xstar_minus_y[fi] - (pos[si] - s.solid.nodes[si])).norm() < 1e-14);
    REQUIRE((ifd.xstar_dot[fi] - vel[si]).norm() < 1e-14);
    moved = std::max(moved, ifd.xstar_minus_y[fi].norm());
  }
  REQUIRE(moved > 1e-3);  // the wave actually displaces the interface
  // off-interface entries stay zero
  std::vector<char> on(s.fluid.nodes.size(), 0);
  for (int i : s.fluid.interface_nodes) on[i] = 1;
  for (std::size_t i = 0; i < s.fluid.nodes.size(); ++i)
    if (!on[i]) {
      REQUIRE(ifd.xstar_minus_y[i].norm() == 0.0);
      REQUIRE(ifd.xstar_dot[i].norm() == 0.0);
    }
}
