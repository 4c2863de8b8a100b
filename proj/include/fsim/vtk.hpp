#ifndef FSIM_VTK_HPP
#define FSIM_VTK_HPP

#include <cstdio>
#include <string>

#include "fsim/extension.hpp"
#include "fsim/mesh.hpp"
#include "fsim/operators.hpp"

namespace fsim {

/// Legacy ASCII VTK unstructured-grid snapshot on the reference mesh.
/// Point data: velocity in the physical frame (R u), pressure, displacement
/// of the domain map (X - Id). Cell data: det grad X (element average).
inline void write_vtk_snapshot(const std::string& path, const Mesh& mesh,
                               const ExtensionMap& ext, const FluidState& state,
                               const Mat3& rotation) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw IoError("cannot open " + path);
  const std::size_t np = mesh.nodes.size(), ne = mesh.tets.size();

  std::fprintf(f, "# vtk DataFile Version 3.0\nfsim snapshot\nASCII\n");
  std::fprintf(f, "DATASET UNSTRUCTURED_GRID\nPOINTS %zu double\n", np);
  for (const auto& x : mesh.nodes)
    std::fprintf(f, "%.9g %.9g %.9g\n", x.x(), x.y(), x.z());
  std::fprintf(f, "CELLS %zu %zu\n", ne, 5 * ne);
  for (const auto& t : mesh.tets)
    std::fprintf(f, "4 %d %d %d %d\n", t[0], t[1], t[2], t[3]);
  std::fprintf(f, "CELL_TYPES %zu\n", ne);
  for (std::size_t e = 0; e < ne; ++e) std::fprintf(f, "10\n");

  std::fprintf(f, "POINT_DATA %zu\nVECTORS velocity double\n", np);
  for (std::size_t i = 0; i < np; ++i) {
    const Vec3 u = rotation * state.u[i];
    std::fprintf(f, "%.9g %.9g %.9g\n", u.x(), u.y(), u.z());
  }
  std::fprintf(f, "SCALARS pressure double 1\nLOOKUP_TABLE default\n");
  for (std::size_t i = 0; i < np; ++i) std::fprintf(f, "%.9g\n", state.p[i]);
  std::fprintf(f, "VECTORS displacement double\n");
  for (std::size_t i = 0; i < np; ++i) {
    const Vec3 d = ext.pos[i] - mesh.nodes[i];
    std::fprintf(f, "%.9g %.9g %.9g\n", d.x(), d.y(), d.z());
  }
  std::fprintf(f, "CELL_DATA %zu\nSCALARS det_grad double 1\nLOOKUP_TABLE default\n", ne);
  for (std::size_t e = 0; e < ne; ++e) {
    double d = 0.0;
    for (int q = 0; q < 4; ++q) d += 0.25 * ext.det[4 * e + q];
    std::fprintf(f, "%.9g\n", d);
  }
  std::fclose(f);
}

}  // namespace fsim

#endif
