#ifndef FSIM_COUPLED_HPP
#define FSIM_COUPLED_HPP

#include <Eigen/Sparse>
#include <Eigen/UmfPackSupport>
#include <cmath>
#include <limits>
#include <vector>

#include "fsim/fem.hpp"
#include "fsim/mesh.hpp"
#include "fsim/operators.hpp"
#include "fsim/stokes.hpp"

namespace fsim {

struct CoupledResult {
  FluidState state;
  RigidRates rigid;
  double compat_mismatch = 0.0;
  double linear_residual = 0.0;  // relative algebraic residual of the solve
};

/// Monolithic linear solve of one Picard iterate: the fluid unknowns (MINI,
/// bubbles condensed), the mean-zero pressure, and the six rigid rates in one
/// system. The matrix
///   rho_f M/dt + 2 nu D(u):D(v)  (+ divergence rows, multiplier, rigid mass)
/// is independent of the geometry iterate, so it is factored once per step
/// size and reused across Picard iterations and time steps. Interface node
/// velocities are eliminated through u_i = v + w x y_i + W_i with the
/// time-independent reference positions y_i; the deformation part W_i enters
/// as a Dirichlet-type lift.
class CoupledSolver {
 public:
  CoupledSolver(const Mesh& mesh, const PhysParams& phys, double solid_mass,
                const Mat3& I0, double dt)
      : mesh_(mesh), phys_(phys), solid_mass_(solid_mass), dt_(dt),
        layout_(mesh), elems_(build_element_geometry(mesh)) {
    const int np = layout_.n_nodes;
    const int ne = static_cast<int>(mesh_.tets.size());
    n_full_ = 3 * np + np + 1;
    n_red_ = n_full_ + 6;

    kind_.assign(np, Free);
    for (const auto& f : mesh_.boundary_facets)
      for (int k = 0; k < 3; ++k)
        kind_[f.nodes[k]] = (f.tag == BoundaryTag::SolidInterface) ? Interface : Wall;

    // bubble condensation data: the bubble block is the 3x3 SPD matrix
    //   B = (rho_f/dt) m_bb I + nu (tr(T) I + T),  T = int grad b grad b^T,
    // coupled to the element P1 velocities by the scalar mass m_1b and to the
    // element pressures by the vectors db_c.
    binv_.resize(ne);
    m1b_.resize(ne);
    db_.resize(ne);
    for (int e = 0; e < ne; ++e) {
      const Mat3 T = mini::stiffness_bubble(elems_[e]);
      const Mat3 B = (phys_.rho_f / dt_) * mini::mass_bubble(elems_[e].volume) *
                         Mat3::Identity() +
                     phys_.nu * (T.trace() * Mat3::Identity() + T);
      binv_[e] = B.inverse();
      m1b_[e] = (phys_.rho_f / dt_) * mini::mass_p1_bubble(elems_[e].volume);
      for (int c = 0; c < 4; ++c) db_[e][c] = -mini::int_p1_grad_bubble(elems_[e], c);
    }

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(mesh_.tets.size() * 420);
    for (int e = 0; e < ne; ++e) {
      const auto& t = mesh_.tets[e];
      const auto& el = elems_[e];
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) {
          // 2 nu int D(u):D(v) plus lumped-in-time mass, componentwise + cross
          const double lap = phys_.nu * el.volume * el.grad[a].dot(el.grad[b]);
          const double mass = (phys_.rho_f / dt_) * mini::mass_p1(el.volume, a, b);
          const double schur_m = m1b_[e] * m1b_[e];  // bubble mass elimination
          for (int c = 0; c < 3; ++c)
            for (int d = 0; d < 3; ++d) {
              double s = phys_.nu * el.volume * el.grad[b][c] * el.grad[a][d] -
                         schur_m * binv_[e](c, d);
              if (c == d) s += lap + mass;
              if (s != 0.0)
                trip.emplace_back(layout_.vel_node(t[a], c), layout_.vel_node(t[b], d), s);
            }
        }
      for (int c = 0; c < 4; ++c) {
        const int prow = 3 * np + t[c];
        for (int a = 0; a < 4; ++a) {
          const Vec3 d = -0.25 * el.volume * el.grad[a];
          const Vec3 bm = -m1b_[e] * (binv_[e] * db_[e][c]);
          for (int i = 0; i < 3; ++i) {
            trip.emplace_back(prow, layout_.vel_node(t[a], i), d[i] + bm[i]);
            trip.emplace_back(layout_.vel_node(t[a], i), prow, d[i] + bm[i]);
          }
        }
        for (int c2 = 0; c2 < 4; ++c2)
          trip.emplace_back(prow, 3 * np + t[c2],
                            -db_[e][c].dot(binv_[e] * db_[e][c2]));
        trip.emplace_back(3 * np + np, prow, 0.25 * el.volume);
        trip.emplace_back(prow, 3 * np + np, 0.25 * el.volume);
      }
    }
    full_.resize(n_full_, n_full_);
    full_.setFromTriplets(trip.begin(), trip.end());

    // prolongation from the reduced unknowns (free velocities, pressure,
    // multiplier, rigid rates) to the full velocity/pressure vector
    std::vector<Eigen::Triplet<double>> ptrip;
    for (int i = 0; i < np; ++i) {
      if (kind_[i] == Free)
        for (int c = 0; c < 3; ++c)
          ptrip.emplace_back(layout_.vel_node(i, c), layout_.vel_node(i, c), 1.0);
      else if (kind_[i] == Interface) {
        const Mat3 s = -skew(mesh_.nodes[i]);
        for (int c = 0; c < 3; ++c) {
          ptrip.emplace_back(layout_.vel_node(i, c), n_full_ + c, 1.0);
          for (int j = 0; j < 3; ++j)
            if (s(c, j) != 0.0)
              ptrip.emplace_back(layout_.vel_node(i, c), n_full_ + 3 + j, s(c, j));
        }
      }
    }
    for (int d = 3 * np; d < n_full_; ++d) ptrip.emplace_back(d, d, 1.0);
    prolong_.resize(n_full_, n_red_);
    prolong_.setFromTriplets(ptrip.begin(), ptrip.end());

    SpMat red = prolong_.transpose() * full_ * prolong_;

    // pin the eliminated velocity slots and add the rigid mass blocks
    std::vector<Eigen::Triplet<double>> extra;
    for (int i = 0; i < np; ++i)
      if (kind_[i] != Free)
        for (int c = 0; c < 3; ++c)
          extra.emplace_back(layout_.vel_node(i, c), layout_.vel_node(i, c), 1.0);
    for (int c = 0; c < 3; ++c)
      extra.emplace_back(n_full_ + c, n_full_ + c, solid_mass_ / dt_);
    for (int c = 0; c < 3; ++c)
      for (int j = 0; j < 3; ++j)
        if (I0(c, j) != 0.0)
          extra.emplace_back(n_full_ + 3 + c, n_full_ + 3 + j, I0(c, j) / dt_);
    SpMat add(n_red_, n_red_);
    add.setFromTriplets(extra.begin(), extra.end());
    sys_ = red + add;
    sys_.makeCompressed();
    lu_.compute(sys_);
    if (lu_.info() != Eigen::Success)
      throw SingularSystem("coupled factorization failed");
  }

  const Mesh& mesh() const { return mesh_; }
  const std::vector<ElementGeometry>& elements() const { return elems_; }
  const PhysParams& phys() const { return phys_; }
  double dt() const { return dt_; }
  const SpMat& system_matrix() const { return sys_; }

  /// One linear iterate: lagged loads from assemble_picard_loads plus the
  /// interface lift W (deformation velocity beyond the rigid part). The lift
  /// is flux-corrected against the prescribed divergence datum before use.
  CoupledResult solve(const PicardLoads& loads, const std::vector<Vec3>& lift_w,
                      double compat_limit = std::numeric_limits<double>::infinity()) const {
    const int np = layout_.n_nodes;
    const int ne = static_cast<int>(mesh_.tets.size());

    // compatibility: the rigid part has exactly zero flux through the closed
    // interface, so only the lift must balance the divergence datum
    double target = 0.0;
    for (int e = 0; e < ne; ++e)
      for (int q = 0; q < QuadRule::n_tet; ++q)
        target += elems_[e].volume * QuadRule::tet_weight() * loads.div[4 * e + q];
    std::vector<Vec3> lift_nodal = lift_w;
    if (lift_nodal.empty()) lift_nodal.assign(np, Vec3::Zero());
    const double delta = detail::boundary_flux(mesh_, lift_nodal) - target;
    if (std::abs(delta) > compat_limit)
      throw CompatibilityViolation("boundary flux / divergence mismatch " +
                                   std::to_string(delta));
    detail::apply_flux_correction(mesh_, lift_nodal, delta);

    // full-space right-hand side: P1 momentum loads, condensed bubble loads,
    // divergence rows
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n_full_);
    std::vector<Vec3> fb(ne);
    for (int i = 0; i < np; ++i)
      for (int c = 0; c < 3; ++c) rhs[layout_.vel_node(i, c)] = loads.mom[3 * i + c];
    for (int e = 0; e < ne; ++e) {
      const auto& t = mesh_.tets[e];
      for (int c = 0; c < 3; ++c) fb[e][c] = loads.mom[3 * np + 3 * e + c];
      const Vec3 bf = binv_[e] * fb[e];
      for (int a = 0; a < 4; ++a)
        for (int c = 0; c < 3; ++c) rhs[layout_.vel_node(t[a], c)] -= m1b_[e] * bf[c];
      for (int c = 0; c < 4; ++c) rhs[3 * np + t[c]] -= db_[e][c].dot(bf);
      const double w = elems_[e].volume * QuadRule::tet_weight();
      for (int q = 0; q < QuadRule::n_tet; ++q) {
        const auto& l = QuadRule::tet_points()[q];
        for (int c = 0; c < 4; ++c) rhs[3 * np + t[c]] -= w * l[c] * loads.div[4 * e + q];
      }
    }

    // Dirichlet-type lift of the deformation velocity on the interface
    Eigen::VectorXd lift = Eigen::VectorXd::Zero(n_full_);
    for (int i = 0; i < np; ++i)
      if (kind_[i] == Interface)
        for (int c = 0; c < 3; ++c) lift[layout_.vel_node(i, c)] = lift_nodal[i][c];
    rhs -= full_ * lift;

    Eigen::VectorXd rhs_red = prolong_.transpose() * rhs;
    for (int i = 0; i < np; ++i)
      if (kind_[i] != Free)
        for (int c = 0; c < 3; ++c) rhs_red[layout_.vel_node(i, c)] = 0.0;
    rhs_red.segment<6>(n_full_) += loads.rigid;

    Eigen::VectorXd sol = lu_.solve(rhs_red);
    if (lu_.info() != Eigen::Success)
      throw LinearSolveFailed("coupled back-substitution failed");

    const Eigen::VectorXd full_sol = prolong_ * sol + lift;
    CoupledResult out;
    out.compat_mismatch = delta;
    out.linear_residual =
        (sys_ * sol - rhs_red).norm() / std::max(rhs_red.norm(), 1e-300);
    out.rigid.v = sol.segment<3>(n_full_);
    out.rigid.w = sol.segment<3>(n_full_ + 3);
    out.state.u.resize(np);
    out.state.p.resize(np);
    for (int i = 0; i < np; ++i)
      for (int c = 0; c < 3; ++c) out.state.u[i][c] = full_sol[layout_.vel_node(i, c)];
    double pmean = 0.0, vol = 0.0;
    for (int e = 0; e < ne; ++e) {
      const auto& t = mesh_.tets[e];
      for (int c = 0; c < 4; ++c) pmean += 0.25 * elems_[e].volume * full_sol[3 * np + t[c]];
      vol += elems_[e].volume;
    }
    pmean /= vol;
    for (int i = 0; i < np; ++i) out.state.p[i] = full_sol[3 * np + i] - pmean;
    // bubble recovery: B u_b = f_b - m_1b sum_a u_a - sum_c db_c p_c
    out.state.ub.resize(ne);
    for (int e = 0; e < ne; ++e) {
      const auto& t = mesh_.tets[e];
      Vec3 b = fb[e];
      for (int a = 0; a < 4; ++a) b -= m1b_[e] * out.state.u[t[a]];
      for (int c = 0; c < 4; ++c) b -= db_[e][c] * full_sol[3 * np + t[c]];
      out.state.ub[e] = binv_[e] * b;
    }
    return out;
  }

 private:
  enum NodeKind : char { Free, Wall, Interface };

  const Mesh& mesh_;
  PhysParams phys_;
  double solid_mass_, dt_;
  MiniLayout layout_;
  std::vector<ElementGeometry> elems_;
  std::vector<char> kind_;
  std::vector<Mat3> binv_;
  std::vector<double> m1b_;
  std::vector<std::array<Vec3, 4>> db_;
  int n_full_ = 0, n_red_ = 0;
  SpMat full_, prolong_;
  SpMat sys_;  // must outlive lu_, which references its arrays
  Eigen::UmfPackLU<SpMat> lu_;
};

}  // namespace fsim

#endif
