#ifndef FSIM_STOKES_HPP
#define FSIM_STOKES_HPP

#include <Eigen/Sparse>
#include <Eigen/UmfPackSupport>
#include <cmath>
#include <limits>
#include <vector>

#include "fsim/fem.hpp"
#include "fsim/mesh.hpp"

namespace fsim {

using SpMat = Eigen::SparseMatrix<double>;

namespace detail {

/// Surface quadrature of the P1 field against outward facet normals.
inline double boundary_flux(const Mesh& mesh, const std::vector<Vec3>& nodal) {
  double flux = 0.0;
  for (const auto& f : mesh.boundary_facets) {
    const double w = f.area * QuadRule::tri_weight();
    for (const auto& bc : QuadRule::tri_points()) {
      Vec3 v = Vec3::Zero();
      for (int k = 0; k < 3; ++k) v += bc[k] * nodal[f.nodes[k]];
      flux += w * v.dot(f.normal);
    }
  }
  return flux;
}

/// Removes the given flux defect as a uniform normal field on the solid
/// interface (whole boundary for wall-only meshes).
inline void apply_flux_correction(const Mesh& mesh, std::vector<Vec3>& bdata,
                                  double delta) {
  if (delta == 0.0) return;
  std::vector<Vec3> normal_field(mesh.nodes.size(), Vec3::Zero());
  bool has_interface = false;
  for (const auto& f : mesh.boundary_facets) {
    if (f.tag != BoundaryTag::SolidInterface) continue;
    has_interface = true;
    for (int k = 0; k < 3; ++k) normal_field[f.nodes[k]] += (f.area / 3.0) * f.normal;
  }
  if (!has_interface)
    for (const auto& f : mesh.boundary_facets)
      for (int k = 0; k < 3; ++k) normal_field[f.nodes[k]] += (f.area / 3.0) * f.normal;
  for (auto& n : normal_field) {
    const double len = n.norm();
    if (len > 0.0) n /= len;
  }
  const double base_flux = boundary_flux(mesh, normal_field);
  if (std::abs(base_flux) < 1e-14)
    throw CompatibilityViolation("degenerate flux-correction direction");
  const double scale = -delta / base_flux;
  for (std::size_t i = 0; i < mesh.nodes.size(); ++i) bdata[i] += scale * normal_field[i];
}

}  // namespace detail

struct StokesResult {
  std::vector<Vec3> velocity;        // P1 nodal
  std::vector<Vec3> bubble;          // per element (recovered after condensation)
  std::vector<double> pressure;      // P1 nodal, mean zero
  double compat_mismatch = 0.0;      // pre-correction boundary-flux defect
};

/// Viscous divergence solver (MINI element):
///   -nu Lap u + grad p = f,  div u = g  in F,  u = data on the boundary,
/// with a mean-zero pressure multiplier. The element bubbles couple only to
/// the pressure (their stiffness block is diagonal and their P1 coupling
/// vanishes), so they are condensed out exactly before factorization; the
/// reduced system has 4 dofs per node. The matrix depends only on the mesh,
/// so the factorization is reused across solves (extension iterations).
class StokesSolver {
 public:
  explicit StokesSolver(const Mesh& mesh, double nu = 1.0)
      : mesh_(mesh), nu_(nu), layout_(mesh), elems_(build_element_geometry(mesh)) {
    const int np = layout_.n_nodes;
    n_dofs_ = 3 * np + np + 1;

    dirichlet_.assign(np, 0);
    for (const auto& f : mesh_.boundary_facets)
      for (int k = 0; k < 3; ++k) dirichlet_[f.nodes[k]] = 1;

    // bubble condensation data: diag stiffness alpha I and pressure coupling
    alpha_inv_.resize(mesh_.tets.size());
    db_.resize(mesh_.tets.size());
    for (std::size_t e = 0; e < mesh_.tets.size(); ++e) {
      alpha_inv_[e] = 1.0 / (nu_ * mini::stiffness_bubble(elems_[e]).trace());
      for (int c = 0; c < 4; ++c) db_[e][c] = -mini::int_p1_grad_bubble(elems_[e], c);
    }

    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(mesh_.tets.size() * 220);
    for (std::size_t e = 0; e < mesh_.tets.size(); ++e) {
      const auto& t = mesh_.tets[e];
      const auto& el = elems_[e];
      // velocity stiffness nu int grad u : grad v (componentwise)
      for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b) {
          const double s = nu_ * el.volume * el.grad[a].dot(el.grad[b]);
          for (int c = 0; c < 3; ++c)
            trip.emplace_back(layout_.vel_node(t[a], c), layout_.vel_node(t[b], c), s);
        }
      // divergence rows -int q div u (symmetric transpose = weak pressure
      // gradient -int p div(phi) in the momentum rows)
      for (int c = 0; c < 4; ++c) {
        const int prow = 3 * np + t[c];
        for (int a = 0; a < 4; ++a) {
          const Vec3 d = -0.25 * el.volume * el.grad[a];
          for (int i = 0; i < 3; ++i) {
            trip.emplace_back(prow, layout_.vel_node(t[a], i), d[i]);
            trip.emplace_back(layout_.vel_node(t[a], i), prow, d[i]);
          }
        }
        // condensed bubble: Schur complement onto the pressure block
        for (int c2 = 0; c2 < 4; ++c2)
          trip.emplace_back(prow, 3 * np + t[c2],
                            -alpha_inv_[e] * db_[e][c].dot(db_[e][c2]));
        // mean-pressure multiplier
        trip.emplace_back(3 * np + np, prow, 0.25 * el.volume);
        trip.emplace_back(prow, 3 * np + np, 0.25 * el.volume);
      }
    }
    full_.resize(n_dofs_, n_dofs_);
    full_.setFromTriplets(trip.begin(), trip.end());

    // symmetric Dirichlet elimination: keep only free rows/cols
    std::vector<Eigen::Triplet<double>> ctrip;
    for (int col = 0; col < full_.outerSize(); ++col)
      for (SpMat::InnerIterator it(full_, col); it; ++it) {
        if (constrained_dof(it.row()) || constrained_dof(col)) continue;
        ctrip.emplace_back(it.row(), col, it.value());
      }
    for (int i = 0; i < np; ++i)
      if (dirichlet_[i])
        for (int c = 0; c < 3; ++c)
          ctrip.emplace_back(layout_.vel_node(i, c), layout_.vel_node(i, c), 1.0);
    sys_.resize(n_dofs_, n_dofs_);
    sys_.setFromTriplets(ctrip.begin(), ctrip.end());
    lu_.compute(sys_);
    if (lu_.info() != Eigen::Success) throw SingularSystem("Stokes factorization failed");
  }

  const Mesh& mesh() const { return mesh_; }
  const std::vector<ElementGeometry>& elements() const { return elems_; }
  const MiniLayout& layout() const { return layout_; }
  const SpMat& system_matrix() const { return sys_; }

  /// boundary_velocity: nodal values, consulted only at boundary nodes;
  /// div_data: per quadrature point (4 per tet, ordered as QuadRule), may be
  /// empty for div u = 0; force_qp likewise (volume force density).
  StokesResult solve(const std::vector<Vec3>& boundary_velocity,
                     const std::vector<double>& div_data,
                     const std::vector<Vec3>& force_qp,
                     double compat_limit = std::numeric_limits<double>::infinity()) const {
    const int np = layout_.n_nodes;
    std::vector<Vec3> bdata = boundary_velocity;
    if (bdata.empty()) bdata.assign(np, Vec3::Zero());

    // compatibility: boundary flux must match the prescribed divergence
    double target = 0.0;
    if (!div_data.empty())
      for (std::size_t e = 0; e < mesh_.tets.size(); ++e)
        for (int q = 0; q < QuadRule::n_tet; ++q)
          target += elems_[e].volume * QuadRule::tet_weight() * div_data[4 * e + q];
    const double delta = boundary_flux(bdata) - target;
    const double mismatch = delta;
    if (std::abs(delta) > compat_limit)
      throw CompatibilityViolation("boundary flux / divergence mismatch " +
                                   std::to_string(delta));
    detail::apply_flux_correction(mesh_, bdata, delta);

    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n_dofs_);
    std::vector<Vec3> fb(mesh_.tets.size(), Vec3::Zero());  // bubble force load
    if (!force_qp.empty()) {
      for (std::size_t e = 0; e < mesh_.tets.size(); ++e) {
        const auto& t = mesh_.tets[e];
        const double w = elems_[e].volume * QuadRule::tet_weight();
        for (int q = 0; q < QuadRule::n_tet; ++q) {
          const auto& l = QuadRule::tet_points()[q];
          const Vec3 f = w * force_qp[4 * e + q];
          for (int a = 0; a < 4; ++a)
            for (int c = 0; c < 3; ++c) rhs[layout_.vel_node(t[a], c)] += l[a] * f[c];
          fb[e] += bubble_quad_scale() * bubble_value(l) * f;
        }
        // condensed bubble load lands on the pressure rows
        for (int c = 0; c < 4; ++c)
          rhs[3 * np + t[c]] -= alpha_inv_[e] * db_[e][c].dot(fb[e]);
      }
    }
    if (!div_data.empty()) {
      for (std::size_t e = 0; e < mesh_.tets.size(); ++e) {
        const auto& t = mesh_.tets[e];
        const double w = elems_[e].volume * QuadRule::tet_weight();
        for (int q = 0; q < QuadRule::n_tet; ++q) {
          const auto& l = QuadRule::tet_points()[q];
          for (int c = 0; c < 4; ++c) rhs[3 * np + t[c]] -= w * l[c] * div_data[4 * e + q];
        }
      }
    }

    // lift Dirichlet data: rhs -= K * lift, then pin constrained dofs
    Eigen::VectorXd lift = Eigen::VectorXd::Zero(n_dofs_);
    for (int i = 0; i < np; ++i)
      if (dirichlet_[i])
        for (int c = 0; c < 3; ++c) lift[layout_.vel_node(i, c)] = bdata[i][c];
    rhs -= full_ * lift;
    for (int d = 0; d < n_dofs_; ++d)
      if (constrained_dof(d)) rhs[d] = lift[d];

    Eigen::VectorXd sol = lu_.solve(rhs);
    if (lu_.info() != Eigen::Success) throw LinearSolveFailed("Stokes back-substitution failed");

    StokesResult out;
    out.compat_mismatch = mismatch;
    out.velocity.resize(np);
    out.pressure.resize(np);
    for (int i = 0; i < np; ++i)
      for (int c = 0; c < 3; ++c) out.velocity[i][c] = sol[layout_.vel_node(i, c)];
    double pmean = 0.0, vol = 0.0;
    for (std::size_t e = 0; e < mesh_.tets.size(); ++e) {
      const auto& t = mesh_.tets[e];
      for (int c = 0; c < 4; ++c) pmean += 0.25 * elems_[e].volume * sol[3 * np + t[c]];
      vol += elems_[e].volume;
    }
    pmean /= vol;
    for (int i = 0; i < np; ++i) out.pressure[i] = sol[3 * np + i] - pmean;
    // recover the condensed bubbles: alpha u_b = f_b - sum_c db_c p_c
    out.bubble.resize(mesh_.tets.size());
    for (std::size_t e = 0; e < mesh_.tets.size(); ++e) {
      const auto& t = mesh_.tets[e];
      Vec3 b = fb[e];
      for (int c = 0; c < 4; ++c) b -= db_[e][c] * sol[3 * np + t[c]];
      out.bubble[e] = alpha_inv_[e] * b;
    }
    return out;
  }

  /// Surface quadrature of the P1 field against outward facet normals.
  double boundary_flux(const std::vector<Vec3>& nodal) const {
    return detail::boundary_flux(mesh_, nodal);
  }

 private:
  bool constrained_dof(int d) const {
    return d < 3 * layout_.n_nodes && dirichlet_[d / 3];
  }

  const Mesh& mesh_;
  double nu_;
  MiniLayout layout_;
  std::vector<ElementGeometry> elems_;
  std::vector<char> dirichlet_;
  std::vector<double> alpha_inv_;
  std::vector<std::array<Vec3, 4>> db_;
  int n_dofs_ = 0;
  SpMat full_;
  SpMat sys_;  // pruned system; must outlive lu_, which references its arrays
  Eigen::UmfPackLU<SpMat> lu_;
};

}  // namespace fsim

#endif
