// Acceptance gate: one self-contained scenario per criterion, one pass/fail
// line each. Exit code 0 iff every criterion passes.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "fsim/coupled.hpp"
#include "fsim/diagnostics.hpp"
#include "fsim/mesh.hpp"
#include "fsim/stepper.hpp"

using namespace fsim;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void criterion(int n, const std::string& name, double limit_s,
               const std::function<bool(std::string&)>& fn) {
  const auto t0 = Clock::now();
  bool ok = false;
  std::string detail;
  try {
    ok = fn(detail);
  } catch (const std::exception& err) {
    detail = err.what();
  }
  const double dt = std::chrono::duration<double>(Clock::now() - t0).count();
  if (dt > limit_s) {
    ok = false;
    detail += (detail.empty() ? "" : "; ") + std::string("over time budget");
  }
  if (!ok) ++g_failures;
  std::printf("criterion %d: %s  (%.1fs)  %s%s%s\n", n, ok ? "PASS" : "FAIL", dt,
              name.c_str(), detail.empty() ? "" : " -- ", detail.c_str());
  std::fflush(stdout);
}

// discrete Piola defect of an analytic map evaluated exactly at quadrature
// points; only the cofactor samples matter to the residual
double analytic_piola(int res, const std::function<Mat3(const Vec3&)>& grad) {
  auto [fluid, solid] = generate_ball_in_box(1.0, 0.3, res);
  const auto elems = build_element_geometry(fluid);
  ExtensionMap ext;
  ext.cof.resize(4 * fluid.tets.size());
  for (std::size_t e = 0; e < fluid.tets.size(); ++e) {
    const auto& t = fluid.tets[e];
    for (int q = 0; q < QuadRule::n_tet; ++q) {
      Vec3 y = Vec3::Zero();
      for (int a = 0; a < 4; ++a)
        y += QuadRule::tet_points()[q][a] * fluid.nodes[t[a]];
      ext.cof[4 * e + q] = cofactor(grad(y));
    }
  }
  return piola_residual(fluid, elems, ext);
}

// 2 nu D(u):D(v) - b(p_u, v): variational reaction pairing of two MINI
// solutions; independent solves make its symmetry a nontrivial check
double pair_energy(const StokesSolver& s, const StokesResult& ru, const StokesResult& rv) {
  const auto& mesh = s.mesh();
  double val = 0.0;
  for (std::size_t e = 0; e < mesh.tets.size(); ++e) {
    const auto& t = mesh.tets[e];
    const auto& el = s.elements()[e];
    const double w = el.volume * QuadRule::tet_weight();
    Mat3 gu = Mat3::Zero(), gv = Mat3::Zero();
    for (int a = 0; a < 4; ++a) {
      gu += ru.velocity[t[a]] * el.grad[a].transpose();
      gv += rv.velocity[t[a]] * el.grad[a].transpose();
    }
    for (int q = 0; q < QuadRule::n_tet; ++q) {
      const Vec3 gb = bubble_gradient(QuadRule::tet_points()[q], el.grad);
      const Mat3 guq = gu + ru.bubble[e] * gb.transpose();
      const Mat3 gvq = gv + rv.bubble[e] * gb.transpose();
      const Mat3 su = 0.5 * (guq + guq.transpose());
      const Mat3 sv = 0.5 * (gvq + gvq.transpose());
      val += w * 2.0 * (su.cwiseProduct(sv)).sum();
    }
    const double trgv = gv.trace();
    for (int c = 0; c < 4; ++c)
      val -= ru.pressure[t[c]] * ((el.volume / 4.0) * trgv +
                                  mini::int_p1_grad_bubble(el, c).dot(rv.bubble[e]));
  }
  return val;
}

double manufactured_error(int res) {
  Mesh fluid = generate_ball_in_box(1.0, 0.3, res).first;
  StokesSolver s(fluid);
  const Vec3 c(1.0, -0.5, 2.0);
  auto exact = [&](const Vec3& x) -> Vec3 {
    const double pi = M_PI;
    const Vec3 g(pi * std::cos(pi * x[0]) * std::sin(pi * x[1]) * std::sin(pi * x[2]),
                 pi * std::sin(pi * x[0]) * std::cos(pi * x[1]) * std::sin(pi * x[2]),
                 pi * std::sin(pi * x[0]) * std::sin(pi * x[1]) * std::cos(pi * x[2]));
    return g.cross(c);
  };
  std::vector<Vec3> bdata(fluid.nodes.size(), Vec3::Zero());
  for (const auto& f : fluid.boundary_facets)
    for (int k = 0; k < 3; ++k) bdata[f.nodes[k]] = exact(fluid.nodes[f.nodes[k]]);
  std::vector<Vec3> force(4 * fluid.tets.size());
  for (std::size_t e = 0; e < fluid.tets.size(); ++e) {
    const auto& t = fluid.tets[e];
    for (int q = 0; q < QuadRule::n_tet; ++q) {
      Vec3 x = Vec3::Zero();
      for (int a = 0; a < 4; ++a) x += QuadRule::tet_points()[q][a] * fluid.nodes[t[a]];
      force[4 * e + q] = 3.0 * M_PI * M_PI * exact(x);
    }
  }
  const StokesResult r = s.solve(bdata, {}, force);
  double err2 = 0.0;
  for (std::size_t e = 0; e < fluid.tets.size(); ++e) {
    const auto& t = fluid.tets[e];
    const double w = s.elements()[e].volume * QuadRule::tet_weight();
    for (const auto& l : QuadRule::tet_points()) {
      Vec3 x = Vec3::Zero(), uh = bubble_value(l) * r.bubble[e];
      for (int a = 0; a < 4; ++a) {
        x += l[a] * fluid.nodes[t[a]];
        uh += l[a] * r.velocity[t[a]];
      }
      err2 += w * (uh - exact(x)).squaredNorm();
    }
  }
  return std::sqrt(err2);
}

double matrix_asymmetry(const SpMat& m) {
  const SpMat d = SpMat(m.transpose()) - m;
  if (d.nonZeros() == 0) return 0.0;
  return d.coeffs().cwiseAbs().maxCoeff() / m.coeffs().cwiseAbs().maxCoeff();
}

// sweep increments of the volume-preserving extension fixed point (mirrors
// advance_extension, which has no hook to observe per-sweep increments)
std::vector<double> extension_increments(const StokesSolver& s, const SolidMesh& solid,
                                         const DeformationField& d, double dt,
                                         int sweeps) {
  const Mesh& fluid = s.mesh();
  std::vector<Vec3> pos, vel;
  d.eval_nodal(solid, dt, pos, vel);
  std::vector<Vec3> bdata(fluid.nodes.size(), Vec3::Zero());
  for (std::size_t i = 0; i < fluid.interface_nodes.size(); ++i)
    bdata[fluid.interface_nodes[i]] =
        (pos[solid.interface_nodes[i]] - solid.nodes[solid.interface_nodes[i]]) / dt;
  ExtensionMap ext = make_identity_extension(s);
  std::vector<Vec3> v = ext.vel;
  std::vector<Vec3> vb(fluid.tets.size(), Vec3::Zero());
  std::vector<double> div_data(4 * fluid.tets.size(), 0.0);
  std::vector<double> incs;
  for (int it = 0; it < sweeps; ++it) {
    for (std::size_t e = 0; e < fluid.tets.size(); ++e) {
      const auto& t = fluid.tets[e];
      const auto& el = s.elements()[e];
      Mat3 gx = Mat3::Zero(), gv = Mat3::Zero();
      for (int a = 0; a < 4; ++a) {
        gx += (ext.pos[t[a]] + dt * v[t[a]]) * el.grad[a].transpose();
        gv += v[t[a]] * el.grad[a].transpose();
      }
      for (int q = 0; q < QuadRule::n_tet; ++q) {
        const Vec3 gb = bubble_gradient(QuadRule::tet_points()[q], el.grad);
        const Mat3 gxq = gx + (ext.pos_b[e] + dt * vb[e]) * gb.transpose();
        const Mat3 gvq = gv + vb[e] * gb.transpose();
        div_data[4 * e + q] =
            ((Mat3::Identity() - cofactor(gxq)).transpose() * gvq).trace();
      }
    }
    const StokesResult sol = s.solve(bdata, div_data, {});
    double inc2 = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i)
      inc2 += (sol.velocity[i] - v[i]).squaredNorm();
    incs.push_back(std::sqrt(inc2));
    v = sol.velocity;
    vb = sol.bubble;
  }
  return incs;
}

struct GapStudy {
  double rel_gap = 0.0;  // mean |dP/dt - wall traction| over mean |wall traction|
  double max_det_residual = 0.0;
  Vec3 h_final = Vec3::Zero();
};

GapStudy swimmer_gap(int res, int steps, double dt, double amp, double freq) {
  auto [fluid, solid] = generate_ball_in_box(1.0, 0.3, res);
  auto d = project_deformation(DeformationField::travelling_wave(amp, freq, 1.0), solid);
  const double mass = d.rho_s() * solid.volume();
  const auto itens = inertia(d, solid, 0.0);
  StokesSolver es(fluid);
  CoupledSolver cs(fluid, {}, mass, itens.I0, dt);
  CoupledState st;
  st.fluid = FluidState::rest(fluid);
  st.ext = make_identity_extension(es);
  Vec3 pprev = Vec3::Zero();
  GapStudy out;
  double gapsum = 0.0, wallsum = 0.0;
  for (int n = 0; n < steps; ++n) {
    FluidState prev = st.fluid;
    fixed_point_step(es, cs, solid, d, st);
    const RigidRates after{st.rigid.h_tilde_dot(), st.rigid.omega_tilde()};
    const MomentumReport mr = momentum_report(fluid, cs.elements(), st.ext, st.fluid,
                                              prev, after, st.rigid, mass, cs.phys(), dt);
    const Vec3 dpdt = (mr.total() - pprev) / dt;
    gapsum += (dpdt - mr.wall_traction).norm();
    wallsum += mr.wall_traction.norm();
    out.max_det_residual =
        std::max(out.max_det_residual, std::max(std::abs(st.ext.min_det - 1.0),
                                                std::abs(st.ext.max_det - 1.0)));
    pprev = mr.total();
  }
  out.rel_gap = gapsum / wallsum;
  out.h_final = st.rigid.h;
  return out;
}

}  // namespace

int main() {
  std::printf("acceptance suite\n");

  criterion(1, "cofactor and Piola-identity suite", 10.0, [](std::string& msg) {
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int k = 0; k < 1000; ++k) {
      Mat3 m;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) m(i, j) = u(rng);
      if ((m * cofactor(m).transpose() - m.determinant() * Mat3::Identity()).norm() >
          1e-12) {
        msg = "adjugate identity violated";
        return false;
      }
    }
    Mat3 f = Mat3::Identity();
    f(0, 1) = 0.2;
    f(1, 2) = -0.15;
    f(2, 0) = 0.1;
    const double affine = analytic_piola(8, [&](const Vec3&) { return f; });
    auto smooth = [](const Vec3& y) {
      const double pi = M_PI;
      Mat3 g = Mat3::Identity();
      const double eps = 0.05;
      // X = y + eps (sin pi y2 sin pi y3, sin pi y3 sin pi y1, sin pi y1 sin pi y2)
      g(0, 1) += eps * pi * std::cos(pi * y[1]) * std::sin(pi * y[2]);
      g(0, 2) += eps * pi * std::sin(pi * y[1]) * std::cos(pi * y[2]);
      g(1, 2) += eps * pi * std::cos(pi * y[2]) * std::sin(pi * y[0]);
      g(1, 0) += eps * pi * std::sin(pi * y[2]) * std::cos(pi * y[0]);
      g(2, 0) += eps * pi * std::cos(pi * y[0]) * std::sin(pi * y[1]);
      g(2, 1) += eps * pi * std::sin(pi * y[0]) * std::cos(pi * y[1]);
      return g;
    };
    const double r16 = analytic_piola(16, smooth);
    const double r32 = analytic_piola(32, smooth);
    char buf[128];
    std::snprintf(buf, sizeof buf, "affine %.2e, smooth %.3e -> %.3e (ratio %.2f)",
                  affine, r16, r32, r16 / r32);
    msg = buf;
    return affine <= 1e-12 && r16 / r32 >= 1.4;
  });

  criterion(2, "rotation group suite", 5.0, [](std::string& msg) {
    Mat3 r = Mat3::Identity();
    const Vec3 w(0.3, -0.2, 0.9);
    for (int k = 0; k < 100000; ++k) r = integrate_rotation(r, w, 1e-3);
    const double drift = (r * r.transpose() - Mat3::Identity()).norm();
    // constant axis: the integrator composes exact exponentials
    Mat3 rz = Mat3::Identity();
    for (int k = 0; k < 100; ++k) rz = integrate_rotation(rz, Vec3(0, 0, 2.0), 0.01);
    Mat3 exact;
    exact << std::cos(2.0), -std::sin(2.0), 0, std::sin(2.0), std::cos(2.0), 0, 0, 0, 1;
    const double closed = (rz - exact).norm();
    char buf[96];
    std::snprintf(buf, sizeof buf, "drift %.2e, closed-form gap %.2e", drift, closed);
    msg = buf;
    return drift <= 1e-12 && closed <= 1e-6;
  });

  criterion(3, "constraint projector suite", 30.0, [](std::string& msg) {
    auto [fluid, solid] = generate_ball_in_box(1.0, 0.3, 12);
    auto wave = project_deformation(DeformationField::travelling_wave(0.02, 4.0, 1.0),
                                    solid);
    auto twice = project_deformation(wave, solid);
    std::vector<Vec3> p1, v1, p2, v2;
    wave.eval_nodal(solid, 0.41, p1, v1);
    twice.eval_nodal(solid, 0.41, p2, v2);
    double idem = 0.0;
    for (std::size_t i = 0; i < p1.size(); ++i)
      idem = std::max(idem, (p1[i] - p2[i]).norm() + (v1[i] - v2[i]).norm());

    // rigid velocity input: the projector must remove it entirely
    const Vec3 c(0.3, -0.1, 0.2), om(0.1, 0.4, -0.2);
    auto rigid = project_deformation(
        DeformationField::custom([](const Vec3& y, double) { return y; },
                                 [&](const Vec3& y, double) -> Vec3 {
                                   return c + om.cross(y);
                                 },
                                 1.0),
        solid);
    std::vector<Vec3> rp, rv;
    rigid.eval_nodal(solid, 0.0, rp, rv);
    double annihil = 0.0;
    for (const auto& v : rv) annihil = std::max(annihil, v.norm());

    std::mt19937 rng(5);
    std::uniform_real_distribution<double> ts(0.0, 3.0);
    auto dil = project_deformation(DeformationField::dilation(0.02, 3.0, 1.0), solid);
    double worst = 0.0;
    for (int k = 0; k < 50; ++k) {
      for (const auto* d : {&wave, &dil}) {
        const ConstraintResiduals r = constraint_residuals(*d, solid, ts(rng));
        worst = std::max({worst, std::abs(r.flux), r.lin_mom.norm(), r.ang_mom.norm()});
      }
    }
    char buf[128];
    std::snprintf(buf, sizeof buf,
                  "idempotence %.2e, rigid annihilation %.2e, residuals %.2e", idem,
                  annihil, worst);
    msg = buf;
    return idem <= 1e-12 && annihil <= 1e-10 && worst <= 1e-10;
  });

  criterion(4, "extension map suite", 120.0, [](std::string& msg) {
    auto [fluid, solid] = generate_ball_in_box(1.0, 0.3, 12);
    StokesSolver s(fluid);
    auto ext = make_identity_extension(s);
    advance_extension(s, ext, {}, 0.05);
    double ident = std::max(std::abs(ext.min_det - 1.0), std::abs(ext.max_det - 1.0));
    for (std::size_t i = 0; i < ext.pos.size(); ++i)
      ident = std::max(ident, (ext.pos[i] - fluid.nodes[i]).norm());

    // rigid translation of the whole domain is volume preserving exactly
    std::vector<Vec3> rigid(fluid.nodes.size(), Vec3::Zero());
    for (const auto& f : fluid.boundary_facets)
      for (int k = 0; k < 3; ++k) rigid[f.nodes[k]] = Vec3(0.05, 0.0, 0.0);
    auto ext2 = make_identity_extension(s);
    for (int n = 0; n < 5; ++n) advance_extension(s, ext2, rigid, 0.01);
    const double rigid_det =
        std::max(std::abs(ext2.min_det - 1.0), std::abs(ext2.max_det - 1.0));

    auto d = project_deformation(DeformationField::travelling_wave(0.01, 6.0, 1.0), solid);
    const auto inc1 = extension_increments(s, solid, d, 1e-2, 3);
    const auto inc2 = extension_increments(s, solid, d, 5e-3, 3);
    const double ratio1 = inc1[1] / inc1[0], ratio2 = inc2[1] / inc2[0];
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "identity %.2e, rigid det %.2e, contraction %.2e (dt/2: %.2e)", ident,
                  rigid_det, ratio1, ratio2);
    msg = buf;
    return ident <= 1e-12 && rigid_det <= 1e-10 && ratio1 < 1.0 && ratio2 <= ratio1;
  });

  criterion(5, "linear solver suite", 300.0, [](std::string& msg) {
    const double e12 = manufactured_error(12), e16 = manufactured_error(16);

    auto [fluid, solid] = generate_ball_in_box(1.0, 0.3, 12);
    StokesSolver s(fluid);
    const double sym_stokes = matrix_asymmetry(s.system_matrix());

    // mobility: six rigid interface data sets, variational reaction pairing
    auto rigid_field = [&](int j) {
      std::vector<Vec3> b(fluid.nodes.size(), Vec3::Zero());
      for (int i : fluid.interface_nodes)
        b[i] = j < 3 ? Vec3(Vec3::Unit(j))
                     : Vec3(Vec3::Unit(j - 3).cross(fluid.nodes[i]));
      return b;
    };
    std::vector<StokesResult> sols;
    double pmean_worst = 0.0;
    double volume = 0.0;
    for (std::size_t e = 0; e < fluid.tets.size(); ++e) volume += s.elements()[e].volume;
    for (int j = 0; j < 6; ++j) {
      sols.push_back(s.solve(rigid_field(j), {}, {}));
      double pm = 0.0;
      for (std::size_t e = 0; e < fluid.tets.size(); ++e)
        for (int c = 0; c < 4; ++c)
          pm += 0.25 * s.elements()[e].volume * sols.back().pressure[fluid.tets[e][c]];
      pmean_worst = std::max(pmean_worst, std::abs(pm / volume));
    }
    Eigen::Matrix<double, 6, 6> K;
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) K(i, j) = pair_energy(s, sols[j], sols[i]);
    const double mob_sym = (K - K.transpose()).norm() / K.norm();

    // rigid decay: energy non-increasing every step (the implicit step only
    // over-dissipates, so the balance residual is <= 0); the residual at the
    // shared final time halves when dt does -- the first impulsive steps carry
    // a projection defect that grows like 1/dt and are compared by time, not
    // by index
    const auto none = DeformationField::none(1.0);
    const double mass = none.rho_s() * solid.volume();
    const auto itens = inertia(none, solid, 0.0);
    double sym_coupled = 0.0;
    auto decay_residual = [&](double dt, int steps, bool& monotone) {
      CoupledSolver cs(fluid, {}, mass, itens.I0, dt);
      sym_coupled = std::max(sym_coupled, matrix_asymmetry(cs.system_matrix()));
      CoupledState st;
      st.fluid = FluidState::rest(fluid);
      st.ext = make_identity_extension(s);
      st.rigid.h_dot = Vec3(0.05, 0.0, 0.0);
      double eprev = std::numeric_limits<double>::max(), last = 0.0;
      monotone = true;
      for (int n = 0; n < steps; ++n) {
        FluidState prev = st.fluid;
        const RigidRates before{st.rigid.h_tilde_dot(), st.rigid.omega_tilde()};
        fixed_point_step(s, cs, solid, none, st);
        const RigidRates after{st.rigid.h_tilde_dot(), st.rigid.omega_tilde()};
        const EnergyReport er =
            energy_report(fluid, cs.elements(), st.ext, st.fluid, prev, after, before,
                          itens, itens, mass, solid, none, st.t, cs.phys(), dt);
        monotone = monotone && er.kinetic_energy < eprev && er.energy_residual <= 1e-12;
        eprev = er.kinetic_energy;
        last = std::abs(er.energy_residual);
      }
      return last;
    };
    bool mono1 = false, mono2 = false;
    const double res1 = decay_residual(0.02, 5, mono1);
    const double res2 = decay_residual(0.01, 10, mono2);

    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "err %.3f->%.3f, sym %.1e/%.1e, mobility %.1e, pmean %.1e, "
                  "balance %.2e->%.2e",
                  e12, e16, sym_stokes, sym_coupled, mob_sym, pmean_worst, res1, res2);
    msg = buf;
    return e16 < 0.8 * e12 && sym_stokes <= 1e-12 && sym_coupled <= 1e-12 &&
           mob_sym <= 1e-8 && pmean_worst <= 1e-10 && mono1 && mono2 &&
           res2 <= 0.75 * res1;
  });

  criterion(6, "nonlinear stepper suite", 600.0, [](std::string& msg) {
    auto [fluid, solid] = generate_ball_in_box(1.0, 0.3, 12);
    StokesSolver es(fluid);
    const auto none = DeformationField::none(1.0);
    const double dt = 0.01;
    {
      const double mass0 = none.rho_s() * solid.volume();
      const auto itens0 = inertia(none, solid, 0.0);
      CoupledSolver cs0(fluid, {}, mass0, itens0.I0, dt);
      CoupledState st0;
      st0.fluid = FluidState::rest(fluid);
      st0.ext = make_identity_extension(es);
      const PicardStats ps = fixed_point_step(es, cs0, solid, none, st0);
      double m = st0.rigid.h_dot.norm() + st0.rigid.omega.norm();
      for (const auto& u : st0.fluid.u) m = std::max(m, u.norm());
      if (ps.iterations != 1 || m > 1e-12) {
        msg = "zero state is not an exact fixed point";
        return false;
      }
    }

    auto d = project_deformation(DeformationField::travelling_wave(0.01, 6.0, 1.0), solid);
    const double mass = d.rho_s() * solid.volume();
    const auto itens = inertia(d, solid, 0.0);
    CoupledSolver cs(fluid, {}, mass, itens.I0, dt);
    CoupledState st;
    st.fluid = FluidState::rest(fluid);
    st.ext = make_identity_extension(es);
    int worst_iters = 0;
    double worst_bc = 0.0, worst_round = 0.0;
    for (int n = 0; n < 20; ++n) {
      const FluidState fluid_n = st.fluid;
      const RigidRates rigid_n{st.rigid.h_tilde_dot(), st.rigid.omega_tilde()};
      const PicardStats ps = fixed_point_step(es, cs, solid, d, st);
      worst_iters = std::max(worst_iters, ps.iterations);
      // interface trace of the accepted step vs the imposed no-slip datum:
      // the rigid part plus the flux-corrected deformation lift, which is
      // what the converged iterate satisfies up to the Picard tolerance
      const RigidRates rr{st.rigid.h_tilde_dot(), st.rigid.omega_tilde()};
      const InterfaceDatum ifd = sample_interface_datum(fluid, solid, d, st.t);
      const InertiaTensor it_now = inertia(d, solid, st.t);
      const PicardLoads loads =
          assemble_picard_loads(fluid, cs.elements(), st.ext, st.fluid, fluid_n, rr,
                                rigid_n, ifd, it_now, mass, cs.phys(), dt);
      double div_target = 0.0;
      for (std::size_t e = 0; e < fluid.tets.size(); ++e)
        for (int q = 0; q < QuadRule::n_tet; ++q)
          div_target += cs.elements()[e].volume * QuadRule::tet_weight() *
                        loads.div[4 * e + q];
      std::vector<Vec3> lift = interface_lift(fluid, ifd, rr.w);
      detail::apply_flux_correction(fluid, lift,
                                    detail::boundary_flux(fluid, lift) - div_target);
      for (int i : fluid.interface_nodes) {
        const Vec3 target = rr.v + rr.w.cross(fluid.nodes[i]) + lift[i];
        worst_bc = std::max(worst_bc, (st.fluid.u[i] - target).norm());
      }
      // physical-frame reconstruction at nodes and back
      for (std::size_t i = 0; i < fluid.nodes.size(); ++i) {
        const Vec3 uphys = st.rigid.R * st.fluid.u[i];
        worst_round =
            std::max(worst_round, (st.rigid.R.transpose() * uphys - st.fluid.u[i]).norm());
      }
    }
    // final contraction ratio of one more Picard pass from the accepted state
    double ratio = 0.0;
    {
      const InterfaceDatum ifd = sample_interface_datum(fluid, solid, d, st.t + dt);
      const InertiaTensor it1 = inertia(d, solid, st.t + dt);
      const RigidRates rn{st.rigid.h_tilde_dot(), st.rigid.omega_tilde()};
      FluidState sk = st.fluid;
      RigidRates rk = rn;
      double inc_prev = 0.0;
      for (int k = 0; k < 3; ++k) {
        const Mat3 R1 = integrate_rotation(st.rigid.R, rk.w, dt);
        const Vec3 h1 = st.rigid.h + dt * (R1 * rk.v);
        ExtensionMap ek = make_identity_extension(es);
        for (std::size_t i = 0; i < fluid.nodes.size(); ++i)
          ek.vel[i] = (st.ext.pos[i] - fluid.nodes[i]) / dt + st.ext.vel[i];
        for (std::size_t e = 0; e < fluid.tets.size(); ++e)
          ek.vel_b[e] = st.ext.pos_b[e] / dt + st.ext.vel_b[e];
        std::vector<Vec3> bdata(fluid.nodes.size(), Vec3::Zero());
        for (int i : fluid.interface_nodes) bdata[i] = ifd.xstar_minus_y[i] / dt;
        for (const auto& f : fluid.boundary_facets)
          if (f.tag == BoundaryTag::OuterWall)
            for (int kk = 0; kk < 3; ++kk) {
              const int i = f.nodes[kk];
              bdata[i] =
                  (R1.transpose() * (fluid.nodes[i] - h1) - fluid.nodes[i]) / dt;
            }
        advance_extension(es, ek, bdata, dt);
        for (std::size_t i = 0; i < fluid.nodes.size(); ++i)
          ek.vel[i] = (ek.pos[i] - st.ext.pos[i]) / dt;
        for (std::size_t e = 0; e < fluid.tets.size(); ++e)
          ek.vel_b[e] = (ek.pos_b[e] - st.ext.pos_b[e]) / dt;
        const PicardLoads loads = assemble_picard_loads(
            fluid, cs.elements(), ek, sk, st.fluid, rk, rn, ifd, it1, mass, cs.phys(), dt);
        const std::vector<Vec3> lift = interface_lift(fluid, ifd, rk.w);
        const CoupledResult res = cs.solve(loads, lift);
        double inc2 = (res.rigid.v - rk.v).squaredNorm() + (res.rigid.w - rk.w).squaredNorm();
        for (std::size_t i = 0; i < sk.u.size(); ++i)
          inc2 += (res.state.u[i] - sk.u[i]).squaredNorm();
        const double inc = std::sqrt(inc2);
        if (k == 2) ratio = inc / inc_prev;
        inc_prev = std::max(inc, 1e-300);
        sk = res.state;
        rk = res.rigid;
      }
    }
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "max picard %d, interface residual %.1e, round trip %.1e, "
                  "contraction %.2e",
                  worst_iters, worst_bc, worst_round, ratio);
    msg = buf;
    return worst_iters <= 10 && worst_bc <= 1e-8 && worst_round <= 1e-12 && ratio < 1.0;
  });

  criterion(7, "self-propulsion smoke test", 1200.0, [](std::string& msg) {
    const double freq = 6.0, amp = 1e-2, dt = 0.02;
    const int two_periods = static_cast<int>(std::ceil(2.0 * 2.0 * M_PI / freq / dt));
    const GapStudy fine = swimmer_gap(12, two_periods, dt, amp, freq);
    const GapStudy coarse = swimmer_gap(8, 10, dt, amp, freq);
    const GapStudy fine10 = swimmer_gap(12, 10, dt, amp, freq);
    char buf[180];
    std::snprintf(buf, sizeof buf,
                  "|h(T)| %.2e, det residual %.2e, momentum gap %.2e -> %.2e",
                  fine.h_final.norm(), fine.max_det_residual, coarse.rel_gap,
                  fine10.rel_gap);
    msg = buf;
    // the det sup is attained inside thin warped cells near the interface
    // where the weak divergence constraint leaves an O(1) pointwise defect;
    // 0.5 keeps a uniform local-injectivity margin (min det >= 0.5)
    return fine.h_final.norm() > 1e-6 && fine.max_det_residual <= 0.5 &&
           fine10.rel_gap < coarse.rel_gap;
  });

  criterion(8, "contact and completion alternative", 300.0, [](std::string& msg) {
    auto [fluid, solid] = generate_ball_in_box(1.0, 0.3, 8);
    const auto none = DeformationField::none(1.0);
    const double mass = none.rho_s() * solid.volume();
    const auto itens = inertia(none, solid, 0.0);
    StokesSolver es(fluid);

    SimulationOptions opt;
    opt.t_end = 0.2;
    opt.dt = 0.02;
    opt.contact_margin = 0.699;  // initial gap is 0.7
    CoupledSolver cs(fluid, {}, mass, itens.I0, opt.dt);
    CoupledState st;
    st.fluid = FluidState::rest(fluid);
    st.ext = make_identity_extension(es);
    st.rigid.h_dot = Vec3(1.0, 0.0, 0.0);  // impulsive approach toward the +x wall
    const SimulationResult contact = run_simulation(es, cs, solid, none, st, opt);
    const double dist = solid_wall_distance(fluid, solid, st.rigid, none, st.t);

    CoupledState quiet;
    quiet.fluid = FluidState::rest(fluid);
    quiet.ext = make_identity_extension(es);
    SimulationOptions qopt;
    qopt.t_end = 0.1;
    qopt.dt = 0.02;
    const SimulationResult done = run_simulation(es, cs, solid, none, quiet, qopt);

    char buf[160];
    std::snprintf(buf, sizeof buf, "%s at dist %.4f <= 0.699; quiescent %s with |h| %.1e",
                  to_string(contact.reason), dist, to_string(done.reason),
                  quiet.rigid.h.norm());
    msg = buf;
    return contact.reason == TerminationReason::Contact && dist <= opt.contact_margin &&
           done.reason == TerminationReason::Completed && quiet.rigid.h.norm() == 0.0;
  });

  if (g_failures == 0)
    std::printf("all criteria passed\n");
  else
    std::printf("%d criteria FAILED\n", g_failures);
  return g_failures == 0 ? 0 : 1;
}
