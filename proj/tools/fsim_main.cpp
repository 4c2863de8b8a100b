// fsim command-line driver: config ingestion, subcommand dispatch, output
// management. Subcommands: check-deformation, simulate, verify, stokes.
#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include "fsim/config.hpp"
#include "fsim/coupled.hpp"
#include "fsim/diagnostics.hpp"
#include "fsim/mesh.hpp"
#include "fsim/stepper.hpp"
#include "fsim/stokes.hpp"
#include "fsim/vtk.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace fsim;

namespace {

struct CliOptions {
  std::string out_dir;  // overrides output.dir when nonempty
  int threads = 1;      // accepted for interface stability; assembly is serial
  long seed = 0;        // reserved; nothing numeric depends on it
  bool quiet = false;
};

DeformationField make_deformation(const SimConfig& cfg) {
  const auto& d = cfg.deformation;
  if (d.family == "dilation")
    return DeformationField::dilation(d.amplitude, d.frequency, cfg.solid.rho_s);
  if (d.family == "travelling_wave")
    return DeformationField::travelling_wave(d.amplitude, d.frequency, cfg.solid.rho_s);
  if (d.family == "file") return DeformationField::tabulated(d.path, cfg.solid.rho_s);
  return DeformationField::none(cfg.solid.rho_s);
}

void echo_config(const std::string& cfg_path, const std::string& out_dir) {
  std::ifstream in(cfg_path, std::ios::binary);
  if (!in) throw IoError("cannot open " + cfg_path);
  std::ofstream out(fs::path(out_dir) / "config.ini", std::ios::binary);
  if (!out) throw IoError("cannot write config echo into " + out_dir);
  out << in.rdbuf();
}

int cmd_check_deformation(const std::string& cfg_path, const CliOptions& opt) {
  const SimConfig cfg = parse_config(cfg_path);
  auto [fluid, solid] = generate_ball_in_box(cfg.geometry.box_half_width,
                                             cfg.geometry.ball_radius,
                                             cfg.geometry.resolution);
  const DeformationField raw = make_deformation(cfg);
  const DeformationField proj = project_deformation(raw, solid);

  const int n_samples = 13;
  const double pass_tol = 1e-8;
  bool ok = true;
  if (!opt.quiet)
    std::printf("%10s %12s %12s %12s %12s %12s %12s\n", "t", "H2(raw)", "H3(raw)",
                "H4(raw)", "H2(proj)", "H3(proj)", "H4(proj)");
  for (int k = 0; k < n_samples; ++k) {
    const double t = cfg.time.t_end * k / (n_samples - 1);
    const ConstraintResiduals rr = constraint_residuals(raw, solid, t);
    const ConstraintResiduals rp = constraint_residuals(proj, solid, t);
    ok = ok && std::abs(rp.flux) <= pass_tol && rp.lin_mom.norm() <= pass_tol &&
         rp.ang_mom.norm() <= pass_tol;
    if (!opt.quiet)
      std::printf("%10.4f %12.3e %12.3e %12.3e %12.3e %12.3e %12.3e\n", t,
                  std::abs(rr.flux), rr.lin_mom.norm(), rr.ang_mom.norm(),
                  std::abs(rp.flux), rp.lin_mom.norm(), rp.ang_mom.norm());
  }
  if (!opt.quiet)
    std::printf("post-projection residuals %s (tolerance %.1e)\n",
                ok ? "PASS" : "FAIL", pass_tol);
  return ok ? 0 : 1;
}

int cmd_simulate(const std::string& cfg_path, const CliOptions& opt) {
  SimConfig cfg = parse_config(cfg_path);
  if (!opt.out_dir.empty()) cfg.output.dir = opt.out_dir;
  if (!cfg.geometry.mesh_path.empty())
    throw ConfigInvalid(
        "geometry.mesh_path carries no solid mesh; simulate requires geometry.resolution");
  fs::create_directories(cfg.output.dir);
  echo_config(cfg_path, cfg.output.dir);

  auto [fluid, solid] = generate_ball_in_box(cfg.geometry.box_half_width,
                                             cfg.geometry.ball_radius,
                                             cfg.geometry.resolution);
  DeformationField deform = make_deformation(cfg);
  if (cfg.deformation.family != "none") deform = project_deformation(deform, solid);
  const double mass = deform.rho_s() * solid.volume();
  const InertiaTensor itens = inertia(deform, solid, 0.0);
  PhysParams phys;
  phys.nu = cfg.fluid.nu;
  phys.rho_s = cfg.solid.rho_s;

  StokesSolver ext_solver(fluid);
  CoupledSolver solver(fluid, phys, mass, itens.I0, cfg.time.dt);

  CoupledState st;
  st.fluid = FluidState::rest(fluid);
  st.ext = make_identity_extension(ext_solver);
  st.rigid.h_dot = cfg.initial.h1;
  st.rigid.omega = cfg.initial.omega0;
  if (cfg.initial.u0 == "file") {
    const std::vector<Vec3> u0 = load_velocity_table(cfg.initial.path);
    validate_initial_velocity(fluid, u0, cfg.initial.h1, cfg.initial.omega0,
                              /*strict=*/true);
    st.fluid.u = u0;
  }

  SimulationOptions sopt;
  sopt.t_end = cfg.time.t_end;
  sopt.dt = cfg.time.dt;
  sopt.contact_margin = cfg.tolerances.d_min;
  sopt.picard.tol = cfg.tolerances.tol_picard;
  sopt.picard.max_iter = cfg.tolerances.max_picard;
  sopt.picard.extension.tol = cfg.tolerances.tol_ext;
  sopt.picard.extension.max_iter = cfg.tolerances.max_ext_iter;

  auto snapshot_name = [&](int step) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "step_%06d.vtk", step);
    return (fs::path(cfg.output.dir) / buf).string();
  };

  std::vector<DiagnosticsRecord> records;
  CoupledState prev = st;
  records.push_back(
      collect_diagnostics(ext_solver, solver, solid, deform, st, st, PicardStats{}));
  if (cfg.time.snapshot_every > 0)
    write_vtk_snapshot(snapshot_name(0), fluid, st.ext, st.fluid, st.rigid.R);

  int stepno = 0;
  auto observer = [&](const CoupledState& s, const PicardStats& ps) {
    ++stepno;
    records.push_back(collect_diagnostics(ext_solver, solver, solid, deform, prev, s, ps));
    if (cfg.time.snapshot_every > 0 && stepno % cfg.time.snapshot_every == 0)
      write_vtk_snapshot(snapshot_name(stepno), fluid, s.ext, s.fluid, s.rigid.R);
    if (!opt.quiet)
      std::printf("step %5d  t=%-8.4g picard=%2d  |h|=%.4e  E=%.6e\n", stepno, s.t,
                  ps.iterations, s.rigid.h.norm(), records.back().kinetic_energy);
    prev = s;
  };

  const SimulationResult res =
      run_simulation(ext_solver, solver, solid, deform, st, sopt, observer);
  write_csv((fs::path(cfg.output.dir) / "diagnostics.csv").string(), records);

  double max_energy = 0.0, total_dissipation = 0.0;
  for (const auto& r : records) max_energy = std::max(max_energy, r.kinetic_energy);
  for (std::size_t i = 1; i < records.size(); ++i)
    total_dissipation += cfg.time.dt * records[i].dissipation;

  json summary;
  summary["final_h"] = {st.rigid.h.x(), st.rigid.h.y(), st.rigid.h.z()};
  summary["final_displacement"] = st.rigid.h.norm();
  summary["final_time"] = st.t;
  summary["steps"] = res.history.size();
  summary["termination_reason"] = to_string(res.reason);
  summary["message"] = res.message;
  summary["max_energy"] = max_energy;
  summary["total_dissipation"] = total_dissipation;
  std::ofstream sf(fs::path(cfg.output.dir) / "summary.json");
  sf << summary.dump(2) << "\n";

  if (!opt.quiet)
    std::printf("terminated: %s after %zu steps, |h(T)| = %.6e\n", to_string(res.reason),
                res.history.size(), st.rigid.h.norm());
  return 0;
}

int cmd_stokes(const std::string& cfg_path, const CliOptions& opt) {
  const SimConfig cfg = parse_config(cfg_path);
  Mesh fluid;
  if (!cfg.geometry.mesh_path.empty()) {
    fluid = load_mesh(cfg.geometry.mesh_path);
  } else {
    fluid = generate_ball_in_box(cfg.geometry.box_half_width, cfg.geometry.ball_radius,
                                 cfg.geometry.resolution)
                .first;
  }
  StokesSolver solver(fluid, cfg.fluid.nu);

  // manufactured solution u = grad(phi) x c, phi = sin(pi x)sin(pi y)sin(pi z):
  // divergence-free with -nu Lap u = 3 nu pi^2 u and p = 0
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
      force[4 * e + q] = 3.0 * cfg.fluid.nu * M_PI * M_PI * exact(x);
    }
  }
  const StokesResult r = solver.solve(bdata, {}, force);

  double err2 = 0.0, pmean = 0.0, vol = 0.0;
  for (std::size_t e = 0; e < fluid.tets.size(); ++e) {
    const auto& t = fluid.tets[e];
    const double w = solver.elements()[e].volume * QuadRule::tet_weight();
    for (const auto& l : QuadRule::tet_points()) {
      Vec3 x = Vec3::Zero(), uh = bubble_value(l) * r.bubble[e];
      for (int a = 0; a < 4; ++a) {
        x += l[a] * fluid.nodes[t[a]];
        uh += l[a] * r.velocity[t[a]];
      }
      err2 += w * (uh - exact(x)).squaredNorm();
    }
    for (int a = 0; a < 4; ++a)
      pmean += 0.25 * solver.elements()[e].volume * r.pressure[t[a]];
    vol += solver.elements()[e].volume;
  }
  if (!opt.quiet) {
    std::printf("mesh: %zu nodes, %zu tets\n", fluid.nodes.size(), fluid.tets.size());
    std::printf("manufactured-solution L2 velocity error: %.6e\n", std::sqrt(err2));
    std::printf("pressure mean: %.3e\n", pmean / vol);
    std::printf("boundary-flux compatibility correction: %.3e\n", r.compat_mismatch);
  }
  return 0;
}

int cmd_verify(const CliOptions& opt) {
  int failures = 0;
  auto check = [&](const std::string& name, const std::function<bool()>& fn) {
    bool ok = false;
    std::string note;
    try {
      ok = fn();
    } catch (const std::exception& err) {
      note = std::string(" (") + err.what() + ")";
    }
    if (!ok) ++failures;
    if (!opt.quiet)
      std::printf("[%s] %s%s\n", ok ? "PASS" : "FAIL", name.c_str(), note.c_str());
  };
  const int res = 12;

  check("cofactor adjugate identity on 1000 random matrices", [] {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    for (int k = 0; k < 1000; ++k) {
      Mat3 m;
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) m(i, j) = d(rng);
      if ((m * cofactor(m).transpose() - m.determinant() * Mat3::Identity()).norm() >
          1e-12)
        return false;
    }
    return true;
  });

  check("rotation integrator stays orthonormal over 1e5 steps", [] {
    RigidState r;
    const Vec3 w(0.3, -0.2, 0.9);
    for (int k = 0; k < 100000; ++k) r.R = integrate_rotation(r.R, w, 1e-3);
    r.omega = r.R * w;
    return r.orthonormality_error() < 1e-12;
  });

  auto [fluid, solid] = generate_ball_in_box(1.0, 0.3, res);

  check("projection is idempotent", [&] {
    auto d1 = project_deformation(
        DeformationField::travelling_wave(0.02, 4.0, 1.0), solid);
    auto d2 = project_deformation(d1, solid);
    std::vector<Vec3> p1, v1, p2, v2;
    d1.eval_nodal(solid, 0.37, p1, v1);
    d2.eval_nodal(solid, 0.37, p2, v2);
    double gap = 0.0;
    for (std::size_t i = 0; i < p1.size(); ++i)
      gap = std::max(gap, (p1[i] - p2[i]).norm() + (v1[i] - v2[i]).norm());
    return gap < 1e-12;
  });

  check("post-projection constraint residuals below 1e-10", [&] {
    auto d = project_deformation(DeformationField::travelling_wave(0.02, 4.0, 1.0), solid);
    std::mt19937 rng(11);
    std::uniform_real_distribution<double> ts(0.0, 2.0);
    for (int k = 0; k < 20; ++k) {
      const ConstraintResiduals r = constraint_residuals(d, solid, ts(rng));
      if (std::abs(r.flux) > 1e-10 || r.lin_mom.norm() > 1e-10 ||
          r.ang_mom.norm() > 1e-10)
        return false;
    }
    return true;
  });

  StokesSolver ext_solver(fluid);

  check("identity extension is exact", [&] {
    auto ext = make_identity_extension(ext_solver);
    return std::abs(ext.min_det - 1.0) < 1e-12 && std::abs(ext.max_det - 1.0) < 1e-12;
  });

  check("Stokes solve with zero data returns zero", [&] {
    auto r = ext_solver.solve({}, {}, {});
    double m = 0.0;
    for (const auto& v : r.velocity) m = std::max(m, v.norm());
    for (double p : r.pressure) m = std::max(m, std::abs(p));
    return m < 1e-12;
  });

  check("Stokes pressure is mean-zero", [&] {
    std::vector<Vec3> force(4 * fluid.tets.size(), Vec3(0.0, 0.0, -1.0));
    auto r = ext_solver.solve({}, {}, force);
    double pm = 0.0, vol = 0.0;
    for (std::size_t e = 0; e < fluid.tets.size(); ++e) {
      for (int a = 0; a < 4; ++a)
        pm += 0.25 * ext_solver.elements()[e].volume * r.pressure[fluid.tets[e][a]];
      vol += ext_solver.elements()[e].volume;
    }
    return std::abs(pm / vol) < 1e-10;
  });

  const auto none = DeformationField::none(1.0);
  const double mass = none.rho_s() * solid.volume();
  const InertiaTensor itens = inertia(none, solid, 0.0);
  const double dt = 0.02;
  CoupledSolver solver(fluid, {}, mass, itens.I0, dt);

  check("rest state is an exact fixed point (1 iteration)", [&] {
    CoupledState st;
    st.fluid = FluidState::rest(fluid);
    st.ext = make_identity_extension(ext_solver);
    auto ps = fixed_point_step(ext_solver, solver, solid, none, st);
    double m = st.rigid.h_dot.norm() + st.rigid.omega.norm() + st.rigid.h.norm();
    for (const auto& u : st.fluid.u) m = std::max(m, u.norm());
    return ps.iterations == 1 && m < 1e-12;
  });

  check("impulsive start decays with non-positive energy residual", [&] {
    CoupledState st;
    st.fluid = FluidState::rest(fluid);
    st.ext = make_identity_extension(ext_solver);
    st.rigid.h_dot = Vec3(0.05, 0.0, 0.0);
    double eprev = std::numeric_limits<double>::max();
    for (int n = 0; n < 3; ++n) {
      FluidState prev = st.fluid;
      RigidRates before{st.rigid.h_tilde_dot(), st.rigid.omega_tilde()};
      fixed_point_step(ext_solver, solver, solid, none, st);
      RigidRates after{st.rigid.h_tilde_dot(), st.rigid.omega_tilde()};
      auto er = energy_report(fluid, solver.elements(), st.ext, st.fluid, prev, after,
                              before, itens, itens, mass, solid, none, st.t,
                              solver.phys(), dt);
      if (er.kinetic_energy >= eprev || er.energy_residual > 1e-10) return false;
      eprev = er.kinetic_energy;
    }
    return true;
  });

  check("travelling-wave stroke yields net displacement", [&] {
    auto d = project_deformation(DeformationField::travelling_wave(0.03, 6.0, 1.0), solid);
    CoupledState st;
    st.fluid = FluidState::rest(fluid);
    st.ext = make_identity_extension(ext_solver);
    for (int n = 0; n < 5; ++n) fixed_point_step(ext_solver, solver, solid, d, st);
    return st.rigid.h.norm() > 1e-7 && st.ext.min_det > 0.9;
  });

  if (!opt.quiet)
    std::printf("%s\n", failures == 0 ? "all checks passed" : "FAILURES present");
  return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fsim: deformable self-propelled solid in a viscous fluid"};
  app.require_subcommand(1);
  CliOptions opt;
  app.add_option("--out", opt.out_dir, "override the output directory");
  app.add_option("--threads", opt.threads, "assembly thread count (serial build)");
  app.add_option("--seed", opt.seed, "reserved; nothing numeric depends on it");
  app.add_flag("--quiet", opt.quiet, "suppress progress output");

  std::string cfg_check, cfg_sim, cfg_stokes;
  auto* sc_check = app.add_subcommand(
      "check-deformation", "report constraint residuals before/after projection");
  sc_check->add_option("cfg", cfg_check, "config file")->required();
  auto* sc_sim = app.add_subcommand("simulate", "run the coupled simulation");
  sc_sim->add_option("cfg", cfg_sim, "config file")->required();
  auto* sc_verify = app.add_subcommand("verify", "run the built-in property suite");
  auto* sc_stokes =
      app.add_subcommand("stokes", "manufactured-solution report for the Stokes solver");
  sc_stokes->add_option("cfg", cfg_stokes, "config file")->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (sc_check->parsed()) return cmd_check_deformation(cfg_check, opt);
    if (sc_sim->parsed()) return cmd_simulate(cfg_sim, opt);
    if (sc_verify->parsed()) return cmd_verify(opt);
    if (sc_stokes->parsed()) return cmd_stokes(cfg_stokes, opt);
  } catch (const std::exception& err) {
    json e;
    e["error"] = err.what();
    std::cerr << e.dump() << "\n";
    return 1;
  }
  return 1;
}
