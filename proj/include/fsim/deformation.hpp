#ifndef FSIM_DEFORMATION_HPP
#define FSIM_DEFORMATION_HPP

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "fsim/errors.hpp"
#include "fsim/geometry.hpp"
#include "fsim/mesh.hpp"

namespace fsim {

struct RigidState {
  Vec3 h = Vec3::Zero();
  Vec3 h_dot = Vec3::Zero();
  Mat3 R = Mat3::Identity();
  Vec3 omega = Vec3::Zero();

  Vec3 h_tilde_dot() const { return R.transpose() * h_dot; }
  Vec3 omega_tilde() const { return R.transpose() * omega; }

  double orthonormality_error() const {
    return (R.transpose() * R - Mat3::Identity()).cwiseAbs().maxCoeff();
  }
};

struct InertiaTensor {
  Mat3 I_star = Mat3::Zero();
  Mat3 I_star_dot = Mat3::Zero();
  Mat3 I0 = Mat3::Zero();
};

struct ConstraintResiduals {
  double flux = 0.0;  // volume rate through the interface (H2)
  Vec3 lin_mom = Vec3::Zero();   // H3
  Vec3 ang_mom = Vec3::Zero();   // H4
};

namespace detail {

struct TabulatedDeformation {
  int n_nodes = 0;
  double dt = 0.0;
  std::vector<std::vector<Vec3>> positions;   // per sample
  std::vector<std::vector<Vec3>> velocities;
};

inline TabulatedDeformation load_deformation_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::string magic, nodes_kv, samples_kv, dt_kv;
  int version = 0;
  in >> magic >> version >> nodes_kv >> samples_kv >> dt_kv;
  if (magic != "FSIDEFORM" || version != 1) throw IoError("bad deformation header");
  auto value_of = [](const std::string& kv, const char* key) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || kv.substr(0, eq) != key)
      throw IoError("expected " + std::string(key) + "=... in deformation header");
    return kv.substr(eq + 1);
  };
  TabulatedDeformation tab;
  tab.n_nodes = std::stoi(value_of(nodes_kv, "nodes"));
  const int samples = std::stoi(value_of(samples_kv, "samples"));
  tab.dt = std::stod(value_of(dt_kv, "dt"));
  if (tab.n_nodes <= 0 || samples <= 0 || tab.dt <= 0.0)
    throw IoError("bad deformation header values");
  tab.positions.resize(samples);
  tab.velocities.resize(samples);
  for (int s = 0; s < samples; ++s) {
    tab.positions[s].resize(tab.n_nodes);
    tab.velocities[s].resize(tab.n_nodes);
    for (int i = 0; i < tab.n_nodes; ++i) {
      auto& p = tab.positions[s][i];
      auto& v = tab.velocities[s][i];
      in >> p.x() >> p.y() >> p.z() >> v.x() >> v.y() >> v.z();
    }
  }
  if (!in) throw IoError("truncated deformation file " + path);
  return tab;
}

}  // namespace detail

/// The prescribed solid deformation X*(.,t) in the body frame, with
/// X*(.,0) = Id and dX*/dt(.,0) = 0 for every built-in family.
class DeformationField {
 public:
  using PointFn = std::function<Vec3(const Vec3&, double)>;

  static DeformationField none(double rho_s) {
    DeformationField d(rho_s);
    d.pos_ = [](const Vec3& y, double) { return y; };
    d.vel_ = [](const Vec3&, double) { return Vec3::Zero(); };
    return d;
  }

  /// Isotropic breathing with a C^1 start: X* = (1 + a(1 - cos wt)) y.
  static DeformationField dilation(double amplitude, double omega, double rho_s) {
    DeformationField d(rho_s);
    d.pos_ = [=](const Vec3& y, double t) { return (1.0 + amplitude * (1.0 - std::cos(omega * t))) * y; };
    d.vel_ = [=](const Vec3& y, double t) { return (amplitude * omega * std::sin(omega * t)) * y; };
    return d;
  }

  /// Transverse undulation travelling along the x axis, ramped over the
  /// first period so that the initial conditions hold.
  static DeformationField travelling_wave(double amplitude, double omega, double rho_s) {
    DeformationField d(rho_s);
    const double wavenumber = 2.0 * M_PI;
    const double ramp = 2.0 * M_PI / omega;
    auto env = [ramp](double t) {
      const double u = std::min(1.0, t / ramp);
      return u * u * (3.0 - 2.0 * u);
    };
    auto denv = [ramp](double t) {
      if (t >= ramp) return 0.0;
      const double u = t / ramp;
      return 6.0 * u * (1.0 - u) / ramp;
    };
    d.pos_ = [=](const Vec3& y, double t) {
      Vec3 x = y;
      x.y() += amplitude * env(t) * std::sin(wavenumber * y.x() - omega * t);
      return x;
    };
    d.vel_ = [=](const Vec3& y, double t) {
      const double phase = wavenumber * y.x() - omega * t;
      Vec3 v = Vec3::Zero();
      v.y() = amplitude * (denv(t) * std::sin(phase) - env(t) * omega * std::cos(phase));
      return v;
    };
    return d;
  }

  static DeformationField tabulated(const std::string& path, double rho_s) {
    DeformationField d(rho_s);
    d.table_ = std::make_shared<detail::TabulatedDeformation>(detail::load_deformation_table(path));
    return d;
  }

  /// Arbitrary analytic deformation (used by tests and custom studies).
  static DeformationField custom(PointFn pos, PointFn vel, double rho_s) {
    DeformationField d(rho_s);
    d.pos_ = std::move(pos);
    d.vel_ = std::move(vel);
    return d;
  }

  double rho_s() const { return rho_s_; }
  bool projected() const { return projected_; }
  void set_projected(bool on) { projected_ = on; }

  Vec3 position(const Vec3& y, double t) const {
    if (table_) throw Error("tabulated deformation has no off-node evaluation");
    return pos_(y, t);
  }

  /// Nodal X* and dX*/dt on the solid mesh; applies the H2-H4 projection
  /// when the field has been projected.
  void eval_nodal(const SolidMesh& solid, double t, std::vector<Vec3>& pos,
                  std::vector<Vec3>& vel) const {
    eval_raw(solid, t, pos, vel);
    if (projected_) apply_projection(solid, pos, vel);
  }

 private:
  explicit DeformationField(double rho_s) : rho_s_(rho_s) {}

  void eval_raw(const SolidMesh& solid, double t, std::vector<Vec3>& pos,
                std::vector<Vec3>& vel) const {
    const std::size_t n = solid.nodes.size();
    pos.resize(n);
    vel.resize(n);
    if (table_) {
      if (static_cast<int>(n) != table_->n_nodes)
        throw IoError("deformation table node count does not match the solid mesh");
      const int last = static_cast<int>(table_->positions.size()) - 1;
      const double s = std::min(std::max(t / table_->dt, 0.0), static_cast<double>(last));
      const int k0 = std::min(static_cast<int>(s), last - (last > 0 ? 1 : 0));
      const int k1 = std::min(k0 + 1, last);
      const double a = s - k0;
      for (std::size_t i = 0; i < n; ++i) {
        pos[i] = (1.0 - a) * table_->positions[k0][i] + a * table_->positions[k1][i];
        vel[i] = (1.0 - a) * table_->velocities[k0][i] + a * table_->velocities[k1][i];
      }
      return;
    }
    for (std::size_t i = 0; i < n; ++i) {
      pos[i] = pos_(solid.nodes[i], t);
      vel[i] = vel_(solid.nodes[i], t);
    }
  }

  void apply_projection(const SolidMesh& solid, const std::vector<Vec3>& pos,
                        std::vector<Vec3>& vel) const;

  double rho_s_ = 1.0;
  bool projected_ = false;
  PointFn pos_, vel_;
  std::shared_ptr<const detail::TabulatedDeformation> table_;
};

namespace detail {

// P1 gradient of the nodal field `vals` on one solid tet (constant tensor),
// (grad)_ij = d vals_i / d y_j.
inline Mat3 p1_gradient(const Mesh& m, int tet, const std::vector<Vec3>& vals) {
  const auto& t = m.tets[tet];
  Mat3 dy;  // edge matrix
  dy.col(0) = m.nodes[t[1]] - m.nodes[t[0]];
  dy.col(1) = m.nodes[t[2]] - m.nodes[t[0]];
  dy.col(2) = m.nodes[t[3]] - m.nodes[t[0]];
  Mat3 dv;
  dv.col(0) = vals[t[1]] - vals[t[0]];
  dv.col(1) = vals[t[2]] - vals[t[0]];
  dv.col(2) = vals[t[3]] - vals[t[0]];
  return dv * dy.inverse();
}

struct SolidMoments {
  double flux;
  Vec3 lin_mom, ang_mom;
  Vec3 mass_center;  // of X*
  Mat3 inertia;      // I*(t)
  double min_det;
};

inline SolidMoments solid_moments(const SolidMesh& solid, const std::vector<Vec3>& pos,
                                  const std::vector<Vec3>& vel, double rho_s) {
  SolidMoments mo{0.0, Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), Mat3::Zero(),
                  std::numeric_limits<double>::max()};
  Vec3 first_moment = Vec3::Zero();
  double mass = 0.0;
  for (std::size_t e = 0; e < solid.tets.size(); ++e) {
    const auto& t = solid.tets[e];
    const Mat3 grad = p1_gradient(solid, static_cast<int>(e), pos);
    mo.min_det = std::min(mo.min_det, grad.determinant());
    const double w = solid.tet_volumes[e] * QuadRule::tet_weight();
    for (const auto& bc : QuadRule::tet_points()) {
      Vec3 x = Vec3::Zero(), v = Vec3::Zero();
      for (int k = 0; k < 4; ++k) {
        x += bc[k] * pos[t[k]];
        v += bc[k] * vel[t[k]];
      }
      mass += rho_s * w;
      first_moment += rho_s * w * x;
      mo.lin_mom += rho_s * w * v;
      mo.ang_mom += rho_s * w * x.cross(v);
      mo.inertia += rho_s * w * (x.squaredNorm() * Mat3::Identity() - x * x.transpose());
    }
  }
  mo.mass_center = first_moment / mass;
  for (const auto& f : solid.boundary_facets) {
    const Mat3 cof = cofactor(p1_gradient(solid, f.owner_tet, pos));
    const double w = f.area * QuadRule::tri_weight();
    for (const auto& bc : QuadRule::tri_points()) {
      Vec3 v = Vec3::Zero();
      for (int k = 0; k < 3; ++k) v += bc[k] * vel[f.nodes[k]];
      mo.flux += w * v.dot(cof * f.normal);
    }
  }
  return mo;
}

}  // namespace detail

inline void DeformationField::apply_projection(const SolidMesh& solid,
                                               const std::vector<Vec3>& pos,
                                               std::vector<Vec3>& vel) const {
  const std::size_t n = solid.nodes.size();
  const double volume = solid.volume();
  const double mass = rho_s_ * volume;
  double vel_scale = 1.0;
  for (const auto& v : vel) vel_scale = std::max(vel_scale, v.norm());
  const double tol = 1e-12 * vel_scale;

  for (int pass = 0; pass < 12; ++pass) {
    auto mo = detail::solid_moments(solid, pos, vel, rho_s_);
    if (std::abs(mo.flux) <= tol * volume && mo.lin_mom.norm() <= tol * mass &&
        mo.ang_mom.norm() <= tol * mass)
      break;

    // dilation about the mass center cancels the volume flux and is
    // momentum-neutral by construction
    std::vector<Vec3> dil(n);
    for (std::size_t i = 0; i < n; ++i) dil[i] = pos[i] - mo.mass_center;
    const double dil_flux = detail::solid_moments(solid, pos, dil, rho_s_).flux;
    if (std::abs(dil_flux) < 1e-14 * volume)
      throw SingularInertia("degenerate dilation direction");
    const double beta = -mo.flux / dil_flux;
    for (std::size_t i = 0; i < n; ++i) vel[i] += beta * dil[i];

    // rigid field a + b ^ X* cancelling linear and angular momentum
    mo = detail::solid_moments(solid, pos, vel, rho_s_);
    Eigen::Matrix<double, 6, 6> sys = Eigen::Matrix<double, 6, 6>::Zero();
    sys.block<3, 3>(0, 0) = mass * Mat3::Identity();
    sys.block<3, 3>(0, 3) = -mass * skew(mo.mass_center);
    sys.block<3, 3>(3, 0) = mass * skew(mo.mass_center);
    sys.block<3, 3>(3, 3) = mo.inertia;
    Eigen::Matrix<double, 6, 1> rhs;
    rhs << mo.lin_mom, mo.ang_mom;
    Eigen::FullPivLU<Eigen::Matrix<double, 6, 6>> lu(sys);
    if (lu.rcond() < 1e-12) throw SingularInertia("ill-conditioned inertia system");
    const Eigen::Matrix<double, 6, 1> ab = lu.solve(rhs);
    const Vec3 a = ab.head<3>(), b = ab.tail<3>();
    for (std::size_t i = 0; i < n; ++i) vel[i] -= a + b.cross(pos[i]);
  }
}

inline ConstraintResiduals constraint_residuals(const DeformationField& deform,
                                                const SolidMesh& solid, double t) {
  std::vector<Vec3> pos, vel;
  deform.eval_nodal(solid, t, pos, vel);
  auto mo = detail::solid_moments(solid, pos, vel, deform.rho_s());
  if (mo.min_det < 0.1)
    throw H1Violation("min det grad X* = " + std::to_string(mo.min_det));
  return {mo.flux, mo.lin_mom, mo.ang_mom};
}

inline DeformationField project_deformation(const DeformationField& raw,
                                            const SolidMesh& solid) {
  DeformationField out = raw;
  out.set_projected(true);
  // surface the SingularInertia/H1 failure modes immediately
  std::vector<Vec3> pos, vel;
  out.eval_nodal(solid, 0.0, pos, vel);
  return out;
}

inline InertiaTensor inertia(const DeformationField& deform, const SolidMesh& solid,
                             double t) {
  std::vector<Vec3> pos, vel;
  InertiaTensor out;
  deform.eval_nodal(solid, 0.0, pos, vel);
  out.I0 = detail::solid_moments(solid, pos, vel, deform.rho_s()).inertia;
  deform.eval_nodal(solid, t, pos, vel);
  out.I_star = detail::solid_moments(solid, pos, vel, deform.rho_s()).inertia;
  const double rho = deform.rho_s();
  for (std::size_t e = 0; e < solid.tets.size(); ++e) {
    const auto& tt = solid.tets[e];
    const double w = solid.tet_volumes[e] * QuadRule::tet_weight();
    for (const auto& bc : QuadRule::tet_points()) {
      Vec3 x = Vec3::Zero(), v = Vec3::Zero();
      for (int k = 0; k < 4; ++k) {
        x += bc[k] * pos[tt[k]];
        v += bc[k] * vel[tt[k]];
      }
      out.I_star_dot += rho * w *
          (2.0 * v.dot(x) * Mat3::Identity() - v * x.transpose() - x * v.transpose());
    }
  }
  return out;
}

/// Distance from the deformed, displaced solid surface to the box wall
/// (exact slab distance for the box container).
inline double solid_wall_distance(const Mesh& fluid, const SolidMesh& solid,
                                  const RigidState& rigid, const DeformationField& deform,
                                  double t) {
  double half_width = 0.0;
  for (const auto& f : fluid.boundary_facets)
    if (f.tag == BoundaryTag::OuterWall)
      for (int k = 0; k < 3; ++k)
        half_width = std::max(half_width, fluid.nodes[f.nodes[k]].cwiseAbs().maxCoeff());
  std::vector<Vec3> pos, vel;
  deform.eval_nodal(solid, t, pos, vel);
  double dist = std::numeric_limits<double>::max();
  for (int i : solid.interface_nodes) {
    const Vec3 x = rigid.h + rigid.R * pos[i];
    dist = std::min(dist, half_width - x.cwiseAbs().maxCoeff());
  }
  return dist;
}

}  // namespace fsim

#endif
