#ifndef FSIM_EXTENSION_HPP
#define FSIM_EXTENSION_HPP

#include <cmath>
#include <vector>

#include "fsim/stokes.hpp"

namespace fsim {

/// Volume-preserving extension of the interface motion into the fluid
/// reference domain, stored as a MINI (P1 + bubble) displacement field with
/// derived per-quadrature-point kinematic tensors.
struct ExtensionMap {
  std::vector<Vec3> pos, vel;      // P1 nodal position / velocity
  std::vector<Vec3> pos_b, vel_b;  // bubble coefficients per element

  // derived at the 4 quadrature points of each tet (index 4*e + q)
  std::vector<Mat3> grad;      // grad X
  std::vector<Mat3> cof;       // cof grad X
  std::vector<Mat3> grad_inv;  // (grad X)^-1 = grad Y evaluated at X
  std::vector<double> det;     // det grad X
  double min_det = 1.0, max_det = 1.0;
};

struct ExtensionOptions {
  double tol = 1e-10;       // relative L2 increment between sweeps
  int max_iter = 60;
  double compat_limit = std::numeric_limits<double>::infinity();
  double min_det_limit = 0.05;  // extension map must stay locally injective
};

struct ExtensionStats {
  int iterations = 0;
  double increment = 0.0;     // final relative increment
  double compat_mismatch = 0.0;
};

namespace detail {

inline void extension_derived(const StokesSolver& solver, ExtensionMap& ext) {
  const auto& mesh = solver.mesh();
  const auto& elems = solver.elements();
  const std::size_t nq = 4 * mesh.tets.size();
  ext.grad.resize(nq);
  ext.cof.resize(nq);
  ext.grad_inv.resize(nq);
  ext.det.resize(nq);
  ext.min_det = 1e300;
  ext.max_det = -1e300;
  for (std::size_t e = 0; e < mesh.tets.size(); ++e) {
    const auto& t = mesh.tets[e];
    Mat3 gp1 = Mat3::Zero();
    for (int a = 0; a < 4; ++a) gp1 += ext.pos[t[a]] * elems[e].grad[a].transpose();
    for (int q = 0; q < QuadRule::n_tet; ++q) {
      const auto& l = QuadRule::tet_points()[q];
      const Mat3 g = gp1 + ext.pos_b[e] * bubble_gradient(l, elems[e].grad).transpose();
      const std::size_t k = 4 * e + q;
      ext.grad[k] = g;
      ext.cof[k] = cofactor(g);
      ext.det[k] = g.determinant();
      ext.min_det = std::min(ext.min_det, ext.det[k]);
      ext.max_det = std::max(ext.max_det, ext.det[k]);
      if (ext.det[k] <= 0.0)
        throw ExtensionDiverged("extension map folded over (det " +
                                std::to_string(ext.det[k]) + ")");
      ext.grad_inv[k] = g.inverse();
    }
  }
}

}  // namespace detail

/// Identity extension on the fluid reference mesh.
inline ExtensionMap make_identity_extension(const StokesSolver& solver) {
  ExtensionMap ext;
  const auto& mesh = solver.mesh();
  ext.pos = mesh.nodes;
  ext.vel.assign(mesh.nodes.size(), Vec3::Zero());
  ext.pos_b.assign(mesh.tets.size(), Vec3::Zero());
  ext.vel_b.assign(mesh.tets.size(), Vec3::Zero());
  detail::extension_derived(solver, ext);
  return ext;
}

/// Advances the extension by one step of size dt with prescribed boundary
/// velocity (interface: solid deformation rate; outer wall: reference-frame
/// rigid drift). The velocity solves a viscous divergence problem whose
/// divergence datum makes det grad X stationary:
///   cof(grad X) : grad(dX/dt) = 0,
/// linearized as a fixed point  div v = (I - cof grad X^k) : grad v^k  with
/// the mesh-wide factorization reused across sweeps. The cofactor is taken at
/// the midpoint X + (dt/2) v, which makes the determinant increment exact
/// through second order in dt (the defect is (dt^3/4) det grad v per step).
/// The datum also carries the feedback term (1 - det grad X_prev)/dt: the
/// divergence constraint only holds weakly against the pressure space, so the
/// pointwise determinant at quadrature points picks up a spatial defect every
/// step; the feedback removes the inherited defect instead of letting it
/// accumulate along the Lagrangian drift of the interior nodes.
inline ExtensionStats advance_extension(const StokesSolver& solver, ExtensionMap& ext,
                                        const std::vector<Vec3>& boundary_velocity,
                                        double dt,
                                        const ExtensionOptions& opt = {}) {
  const auto& mesh = solver.mesh();
  const auto& elems = solver.elements();
  const std::size_t ne = mesh.tets.size();

  // start the sweep from the previous velocity
  std::vector<Vec3> v = ext.vel, vb = ext.vel_b;
  std::vector<double> div_data(4 * ne, 0.0);
  std::vector<Mat3> gk(4 * ne);

  ExtensionStats stats;
  double prev_inc = 1e300;
  int growing = 0;
  double vol = 0.0;
  for (std::size_t e = 0; e < ne; ++e) vol += elems[e].volume;

  for (int it = 0; it < opt.max_iter; ++it) {
    // grad X^k at quadrature points, X^k = X_prev + (dt/2) v^k (midpoint)
    for (std::size_t e = 0; e < ne; ++e) {
      const auto& t = mesh.tets[e];
      Mat3 gx = Mat3::Zero(), gv = Mat3::Zero();
      for (int a = 0; a < 4; ++a) {
        gx += (ext.pos[t[a]] + 0.5 * dt * v[t[a]]) * elems[e].grad[a].transpose();
        gv += v[t[a]] * elems[e].grad[a].transpose();
      }
      for (int q = 0; q < QuadRule::n_tet; ++q) {
        const auto& l = QuadRule::tet_points()[q];
        const Vec3 gb = bubble_gradient(l, elems[e].grad);
        const Mat3 gxq = gx + (ext.pos_b[e] + 0.5 * dt * vb[e]) * gb.transpose();
        const Mat3 gvq = gv + vb[e] * gb.transpose();
        gk[4 * e + q] = gxq;
        div_data[4 * e + q] =
            ((Mat3::Identity() - cofactor(gxq)).transpose() * gvq).trace() +
            (1.0 - ext.det[4 * e + q]) / dt;
      }
    }
    auto sol = solver.solve(boundary_velocity, div_data, {}, opt.compat_limit);
    stats.compat_mismatch = sol.compat_mismatch;

    double inc2 = 0.0, norm2 = 0.0;
    for (std::size_t e = 0; e < ne; ++e) {
      const auto& t = mesh.tets[e];
      const double w = elems[e].volume * QuadRule::tet_weight();
      for (const auto& l : QuadRule::tet_points()) {
        Vec3 dv = bubble_value(l) * (sol.bubble[e] - vb[e]);
        Vec3 vv = bubble_value(l) * sol.bubble[e];
        for (int a = 0; a < 4; ++a) {
          dv += l[a] * (sol.velocity[t[a]] - v[t[a]]);
          vv += l[a] * sol.velocity[t[a]];
        }
        inc2 += w * dv.squaredNorm();
        norm2 += w * vv.squaredNorm();
      }
    }
    v = sol.velocity;
    vb = sol.bubble;
    stats.iterations = it + 1;
    stats.increment = std::sqrt(inc2) / std::max(std::sqrt(norm2), std::sqrt(vol));
    if (stats.increment <= opt.tol) break;
    if (stats.increment >= prev_inc) {
      if (++growing >= 5)
        throw ExtensionDiverged("extension fixed point stopped contracting (increment " +
                                std::to_string(stats.increment) + ")");
    } else {
      growing = 0;
    }
    prev_inc = stats.increment;
    if (it + 1 == opt.max_iter)
      throw ExtensionDiverged("extension fixed point did not converge in " +
                              std::to_string(opt.max_iter) + " sweeps");
  }

  ext.vel = v;
  ext.vel_b = vb;
  for (std::size_t i = 0; i < ext.pos.size(); ++i) ext.pos[i] += dt * v[i];
  for (std::size_t e = 0; e < ne; ++e) ext.pos_b[e] += dt * vb[e];
  detail::extension_derived(solver, ext);
  if (ext.min_det < opt.min_det_limit)
    throw ExtensionDiverged("extension map close to folding (min det " +
                            std::to_string(ext.min_det) + ")");
  return stats;
}

/// Weak-divergence defect of cof(grad X): for the exact map the cofactor is
/// row-wise divergence free (Piola identity); returns the worst nodal residual
/// of  int cof(grad X) grad(lambda_a)  over interior P1 nodes, normalized by
/// the nodal support volume.
inline double piola_residual(const Mesh& mesh, const std::vector<ElementGeometry>& elems,
                             const ExtensionMap& ext) {
  std::vector<char> bdy(mesh.nodes.size(), 0);
  for (const auto& f : mesh.boundary_facets)
    for (int k = 0; k < 3; ++k) bdy[f.nodes[k]] = 1;
  std::vector<Vec3> res(mesh.nodes.size(), Vec3::Zero());
  std::vector<double> supp(mesh.nodes.size(), 0.0);
  for (std::size_t e = 0; e < mesh.tets.size(); ++e) {
    const auto& t = mesh.tets[e];
    const double w = elems[e].volume * QuadRule::tet_weight();
    for (int q = 0; q < QuadRule::n_tet; ++q) {
      const Mat3& c = ext.cof[4 * e + q];
      for (int a = 0; a < 4; ++a) res[t[a]] += w * (c * elems[e].grad[a]);
    }
    for (int a = 0; a < 4; ++a) supp[t[a]] += elems[e].volume;
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < mesh.nodes.size(); ++i)
    if (!bdy[i]) worst = std::max(worst, res[i].norm() / supp[i]);
  return worst;
}

inline double piola_residual(const StokesSolver& solver, const ExtensionMap& ext) {
  return piola_residual(solver.mesh(), solver.elements(), ext);
}

}  // namespace fsim

#endif
