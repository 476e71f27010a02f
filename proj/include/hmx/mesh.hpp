// SPDX-License-Identifier: Apache-2.0
//
// Tetrahedral meshes of grid-aligned box geometries, uniform red refinement,
// and global edge enumeration for edge-based degrees of freedom.

#ifndef HMX_MESH_HPP
#define HMX_MESH_HPP

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "hmx/types.hpp"

namespace hmx {

struct TetMesh {
  std::vector<Vector3> vertices;
  std::vector<std::array<int, 4>> tets;
  std::vector<int> region;  // one tag per tet; 0 unless a geometry assigns more

  int num_vertices() const { return static_cast<int>(vertices.size()); }
  int num_tets() const { return static_cast<int>(tets.size()); }
};

struct EdgeNumbering {
  // Edges stored once as (i,j), i < j, sorted lexicographically.
  std::vector<std::pair<int, int>> edges;
  // Per tet: local edges (0,1),(0,2),(0,3),(1,2),(1,3),(2,3) mapped to
  // (global edge index, orientation sign). Sign is +1 when the local edge
  // direction runs from the lower to the higher global vertex index.
  std::vector<std::array<std::pair<int, int>, 6>> tet_edge_map;
  std::vector<bool> boundary_mask;

  int num_edges() const { return static_cast<int>(edges.size()); }
};

// Axis-aligned box given by its two extreme corners.
struct AlignedBox {
  Vector3 lo;
  Vector3 hi;
};

double tet_volume(const TetMesh& mesh, int t);
double total_volume(const TetMesh& mesh);

// Faces incident to exactly one tet, each as a sorted vertex triple.
std::vector<std::array<int, 3>> boundary_faces(const TetMesh& mesh);

// Checks positive volumes and face incidence counts; throws ConfigError.
void validate_mesh(const TetMesh& mesh);

// Kuhn triangulation of the unit cube: 6 tets sharing the main diagonal.
TetMesh unit_cube_coarse();

// Kuhn triangulation of an n×n×n grid over [0,1]^3 (6n^3 tets).
TetMesh kuhn_grid(int n);

// Conforming mesh of a union of axis-aligned boxes. Every box corner must
// lie on the lattice origin + h·Z^3; overlapping cells are merged. Each tet
// carries the tag of the first box in `boxes` that contains its cell.
TetMesh mesh_box_union(const std::vector<AlignedBox>& boxes, double h,
                       const std::vector<int>& tags = {});

// Red refinement via edge midpoints: 8 children per tet. On meshes built
// from Kuhn-triangulated grids this reproduces the Kuhn triangulation of
// the half-spaced grid.
TetMesh refine_uniform(const TetMesh& mesh);

// Cross-shaped union of boxes used by the two-box example geometry.
TetMesh two_boxes_geometry();

// Unit-ish outer box with a centered inner box on a common grid; tets inside
// the inner box are tagged 1, the rest 0.
TetMesh box_with_inclusion(const Vector3& outer_dims, const Vector3& inner_dims);

EdgeNumbering enumerate_edges(const TetMesh& mesh);

// Closed-form edge count of the Kuhn-triangulated n-grid cube.
inline std::int64_t kuhn_edge_count(std::int64_t n) {
  return 3 * n * (n + 1) * (n + 1) + 3 * n * n * (n + 1) + n * n * n;
}

}  // namespace hmx

#endif  // HMX_MESH_HPP
