#ifndef FSIM_CONFIG_HPP
#define FSIM_CONFIG_HPP

#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fsim/errors.hpp"
#include "fsim/fem.hpp"
#include "fsim/mesh.hpp"

namespace fsim {

/// Flat `section.key = value` run configuration. Every field has a usable
/// default; parse_config overrides from file and validates the result.
struct SimConfig {
  struct Geometry {
    double box_half_width = 1.0;
    double ball_radius = 0.3;
    int resolution = 32;
    std::string mesh_path;  // when set, overrides the generated fluid mesh
  } geometry;
  struct Fluid {
    double nu = 1.0;
  } fluid;
  struct Solid {
    double rho_s = 1.0;
  } solid;
  struct Deformation {
    std::string family = "none";  // none | dilation | travelling_wave | file
    double amplitude = 0.0;
    double frequency = 1.0;
    std::string path;  // deformation table, family == file
  } deformation;
  struct Time {
    double dt = 0.01;
    double t_end = 1.0;
    int snapshot_every = 10;  // steps between VTK snapshots; 0 disables
  } time;
  struct Tolerances {
    double tol_picard = 1e-8;
    double tol_ext = 1e-10;
    double tol_linear = 1e-10;
    double d_min = -1.0;  // contact distance; < 0 selects ~2 mesh cells
    int max_picard = 50;
    int max_ext_iter = 60;
  } tolerances;
  struct Initial {
    std::string u0 = "zero";  // zero | file
    std::string path;         // nodal velocity table, u0 == file
    Vec3 h1 = Vec3::Zero();
    Vec3 omega0 = Vec3::Zero();
  } initial;
  struct Output {
    std::string dir = "out";
  } output;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double to_double(const std::string& key, const std::string& v) {
  std::size_t used = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &used);
  } catch (const std::exception&) {
    throw ConfigInvalid(key + ": cannot parse '" + v + "' as a number");
  }
  if (detail::trim(v.substr(used)) != "")
    throw ConfigInvalid(key + ": trailing characters in '" + v + "'");
  return out;
}

inline int to_int(const std::string& key, const std::string& v) {
  const double d = to_double(key, v);
  const int i = static_cast<int>(d);
  if (static_cast<double>(i) != d)
    throw ConfigInvalid(key + ": '" + v + "' is not an integer");
  return i;
}

inline Vec3 to_vec3(const std::string& key, const std::string& v) {
  std::istringstream in(v);
  Vec3 out;
  if (!(in >> out.x() >> out.y() >> out.z()))
    throw ConfigInvalid(key + ": expected three numbers, got '" + v + "'");
  std::string rest;
  if (in >> rest) throw ConfigInvalid(key + ": trailing characters in '" + v + "'");
  return out;
}

}  // namespace detail

inline void validate_config(const SimConfig& c) {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigInvalid(what);
  };
  require(c.geometry.box_half_width > 0.0, "geometry.box_half_width must be > 0");
  require(c.geometry.ball_radius > 0.0, "geometry.ball_radius must be > 0");
  require(c.geometry.ball_radius < c.geometry.box_half_width,
          "geometry.ball_radius must be smaller than geometry.box_half_width");
  require(c.geometry.resolution >= 4, "geometry.resolution must be at least 4");
  require(c.fluid.nu > 0.0, "fluid.nu must be > 0");
  require(c.solid.rho_s > 0.0, "solid.rho_s must be > 0");
  require(c.deformation.family == "none" || c.deformation.family == "dilation" ||
              c.deformation.family == "travelling_wave" || c.deformation.family == "file",
          "deformation.family must be none, dilation, travelling_wave or file");
  require(c.deformation.amplitude >= 0.0, "deformation.amplitude must be >= 0");
  require(c.deformation.family != "file" || !c.deformation.path.empty(),
          "deformation.path is required for deformation.family = file");
  require(c.time.dt > 0.0, "time.dt must be > 0");
  require(c.time.dt < c.time.t_end, "time.dt must be smaller than time.t_end");
  require(c.time.snapshot_every >= 0, "time.snapshot_every must be >= 0");
  require(c.tolerances.tol_picard > 0.0, "tolerances.tol_picard must be > 0");
  require(c.tolerances.tol_ext > 0.0, "tolerances.tol_ext must be > 0");
  require(c.tolerances.tol_linear > 0.0, "tolerances.tol_linear must be > 0");
  require(c.tolerances.max_picard > 0, "tolerances.max_picard must be > 0");
  require(c.tolerances.max_ext_iter > 0, "tolerances.max_ext_iter must be > 0");
  require(c.initial.u0 == "zero" || c.initial.u0 == "file",
          "initial.u0 must be zero or file");
  require(c.initial.u0 != "file" || !c.initial.path.empty(),
          "initial.path is required for initial.u0 = file");
  require(!c.output.dir.empty(), "output.dir must not be empty");
}

/// Parses `section.key = value` lines; '#' or ';' start a comment, blank
/// lines are skipped. Unknown keys are an error (they are always typos).
inline SimConfig parse_config_text(const std::string& text) {
  SimConfig c;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto cut = line.find_first_of("#;");
    if (cut != std::string::npos) line.resize(cut);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigInvalid("line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string val = detail::trim(line.substr(eq + 1));

    if (key == "geometry.box_half_width")
      c.geometry.box_half_width = detail::to_double(key, val);
    else if (key == "geometry.ball_radius")
      c.geometry.ball_radius = detail::to_double(key, val);
    else if (key == "geometry.resolution")
      c.geometry.resolution = detail::to_int(key, val);
    else if (key == "geometry.mesh_path")
      c.geometry.mesh_path = val;
    else if (key == "fluid.nu")
      c.fluid.nu = detail::to_double(key, val);
    else if (key == "solid.rho_s")
      c.solid.rho_s = detail::to_double(key, val);
    else if (key == "deformation.family")
      c.deformation.family = val;
    else if (key == "deformation.amplitude")
      c.deformation.amplitude = detail::to_double(key, val);
    else if (key == "deformation.frequency")
      c.deformation.frequency = detail::to_double(key, val);
    else if (key == "deformation.path")
      c.deformation.path = val;
    else if (key == "time.dt")
      c.time.dt = detail::to_double(key, val);
    else if (key == "time.t_end")
      c.time.t_end = detail::to_double(key, val);
    else if (key == "time.snapshot_every")
      c.time.snapshot_every = detail::to_int(key, val);
    else if (key == "tolerances.tol_picard")
      c.tolerances.tol_picard = detail::to_double(key, val);
    else if (key == "tolerances.tol_ext")
      c.tolerances.tol_ext = detail::to_double(key, val);
    else if (key == "tolerances.tol_linear")
      c.tolerances.tol_linear = detail::to_double(key, val);
    else if (key == "tolerances.d_min")
      c.tolerances.d_min = detail::to_double(key, val);
    else if (key == "tolerances.max_picard")
      c.tolerances.max_picard = detail::to_int(key, val);
    else if (key == "tolerances.max_ext_iter")
      c.tolerances.max_ext_iter = detail::to_int(key, val);
    else if (key == "initial.u0")
      c.initial.u0 = val;
    else if (key == "initial.path")
      c.initial.path = val;
    else if (key == "initial.h1")
      c.initial.h1 = detail::to_vec3(key, val);
    else if (key == "initial.omega0")
      c.initial.omega0 = detail::to_vec3(key, val);
    else if (key == "output.dir")
      c.output.dir = val;
    else
      throw ConfigInvalid("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  validate_config(c);
  return c;
}

inline SimConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_text(text.str());
}

/// Canonical text form; parse_config_text(serialize_config(c)) == c.
inline std::string serialize_config(const SimConfig& c) {
  std::ostringstream out;
  out.precision(17);
  out << "geometry.box_half_width = " << c.geometry.box_half_width << "\n"
      << "geometry.ball_radius = " << c.geometry.ball_radius << "\n"
      << "geometry.resolution = " << c.geometry.resolution << "\n";
  if (!c.geometry.mesh_path.empty())
    out << "geometry.mesh_path = " << c.geometry.mesh_path << "\n";
  out << "fluid.nu = " << c.fluid.nu << "\n"
      << "solid.rho_s = " << c.solid.rho_s << "\n"
      << "deformation.family = " << c.deformation.family << "\n"
      << "deformation.amplitude = " << c.deformation.amplitude << "\n"
      << "deformation.frequency = " << c.deformation.frequency << "\n";
  if (!c.deformation.path.empty())
    out << "deformation.path = " << c.deformation.path << "\n";
  out << "time.dt = " << c.time.dt << "\n"
      << "time.t_end = " << c.time.t_end << "\n"
      << "time.snapshot_every = " << c.time.snapshot_every << "\n"
      << "tolerances.tol_picard = " << c.tolerances.tol_picard << "\n"
      << "tolerances.tol_ext = " << c.tolerances.tol_ext << "\n"
      << "tolerances.tol_linear = " << c.tolerances.tol_linear << "\n"
      << "tolerances.d_min = " << c.tolerances.d_min << "\n"
      << "tolerances.max_picard = " << c.tolerances.max_picard << "\n"
      << "tolerances.max_ext_iter = " << c.tolerances.max_ext_iter << "\n"
      << "initial.u0 = " << c.initial.u0 << "\n";
  if (!c.initial.path.empty()) out << "initial.path = " << c.initial.path << "\n";
  out << "initial.h1 = " << c.initial.h1.x() << " " << c.initial.h1.y() << " "
      << c.initial.h1.z() << "\n"
      << "initial.omega0 = " << c.initial.omega0.x() << " " << c.initial.omega0.y()
      << " " << c.initial.omega0.z() << "\n"
      << "output.dir = " << c.output.dir << "\n";
  return out.str();
}

struct InitialVelocityReport {
  double div_residual = 0.0;        // L2 norm of the elementwise divergence
  double wall_residual = 0.0;       // max nodal speed on the outer wall
  double interface_residual = 0.0;  // max nodal mismatch vs h1 + omega0 x y
};

/// Checks the compatibility conditions on a nodal initial velocity: weakly
/// divergence-free, zero wall trace, rigid trace h1 + omega0 x y on the
/// interface. Throws when `strict` and any residual exceeds 1e-8.
inline InitialVelocityReport validate_initial_velocity(const Mesh& mesh,
                                                       const std::vector<Vec3>& u0,
                                                       const Vec3& h1, const Vec3& omega0,
                                                       bool strict = false) {
  if (u0.size() != mesh.nodes.size())
    throw IncompatibleInitialData("initial velocity has " + std::to_string(u0.size()) +
                                  " nodes, mesh has " + std::to_string(mesh.nodes.size()));
  InitialVelocityReport r;
  const std::vector<ElementGeometry> elems = build_element_geometry(mesh);
  double div2 = 0.0;
  for (std::size_t e = 0; e < mesh.tets.size(); ++e) {
    const auto& t = mesh.tets[e];
    double d = 0.0;
    for (int a = 0; a < 4; ++a) d += u0[t[a]].dot(elems[e].grad[a]);
    div2 += elems[e].volume * d * d;
  }
  r.div_residual = std::sqrt(div2);
  std::vector<char> on_wall(mesh.nodes.size(), 0), on_ifc(mesh.nodes.size(), 0);
  for (const auto& f : mesh.boundary_facets)
    for (int k = 0; k < 3; ++k)
      (f.tag == BoundaryTag::OuterWall ? on_wall : on_ifc)[f.nodes[k]] = 1;
  for (std::size_t i = 0; i < mesh.nodes.size(); ++i) {
    if (on_wall[i]) r.wall_residual = std::max(r.wall_residual, u0[i].norm());
    if (on_ifc[i])
      r.interface_residual =
          std::max(r.interface_residual,
                   (u0[i] - h1 - omega0.cross(mesh.nodes[i])).norm());
  }
  if (strict) {
    const double tol = 1e-8;
    if (r.div_residual > tol || r.wall_residual > tol || r.interface_residual > tol) {
      std::ostringstream msg;
      msg.precision(3);
      msg << "initial velocity incompatible: div " << r.div_residual << ", wall trace "
          << r.wall_residual << ", interface mismatch " << r.interface_residual;
      throw IncompatibleInitialData(msg.str());
    }
  }
  return r;
}

/// Nodal velocity table: one `ux uy uz` line per mesh node.
inline std::vector<Vec3> load_velocity_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<Vec3> out;
  Vec3 u;
  while (in >> u.x() >> u.y() >> u.z()) out.push_back(u);
  return out;
}

}  // namespace fsim

#endif
