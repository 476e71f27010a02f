// SPDX-License-Identifier: Apache-2.0

#include "hmx/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

namespace hmx {

namespace {

double signed_volume(const Vector3& a, const Vector3& b, const Vector3& c,
                     const Vector3& d) {
  return (b - a).cross(c - a).dot(d - a) / 6.0;
}

// Reorders so the stored tet has positive signed volume.
std::array<int, 4> oriented(const TetMesh& mesh, std::array<int, 4> v) {
  if (signed_volume(mesh.vertices[v[0]], mesh.vertices[v[1]],
                    mesh.vertices[v[2]], mesh.vertices[v[3]]) < 0.0)
    std::swap(v[2], v[3]);
  return v;
}

// Canonical refinement order: sort vertices by coordinate sum, ties broken
// lexicographically. On tets of a Kuhn-triangulated grid this recovers the
// monotone lattice path v0 -> v3, which is the ordering under which red
// refinement reproduces the Kuhn triangulation of the refined grid.
std::array<int, 4> refinement_order(const TetMesh& mesh, std::array<int, 4> v) {
  auto key = [&](int i) {
    const Vector3& p = mesh.vertices[i];
    return std::array<double, 4>{p.x() + p.y() + p.z(), p.x(), p.y(), p.z()};
  };
  std::sort(v.begin(), v.end(), [&](int a, int b) { return key(a) < key(b); });
  return v;
}

std::array<std::array<int, 3>, 4> tet_faces(const std::array<int, 4>& t) {
  return {{{t[1], t[2], t[3]}, {t[0], t[2], t[3]}, {t[0], t[1], t[3]},
           {t[0], t[1], t[2]}}};
}

std::array<int, 3> sorted_face(std::array<int, 3> f) {
  std::sort(f.begin(), f.end());
  return f;
}

using Cell = std::array<int, 3>;

TetMesh mesh_from_cells(const std::map<Cell, int>& cells, const Vector3& origin,
                        double h) {
  TetMesh mesh;
  std::map<Cell, int> vertex_of;
  auto vertex = [&](int i, int j, int k) {
    auto [it, inserted] = vertex_of.try_emplace({i, j, k}, mesh.num_vertices());
    if (inserted)
      mesh.vertices.push_back(origin + h * Vector3(i, j, k));
    return it->second;
  };

  // The 6 monotone lattice paths from the low to the high cell corner; one
  // tet per axis permutation, identical in every cell.
  static constexpr int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                      {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  for (const auto& [cell, tag] : cells) {
    for (const auto& perm : perms) {
      std::array<int, 4> tet;
      Cell c = cell;
      tet[0] = vertex(c[0], c[1], c[2]);
      for (int s = 0; s < 3; ++s) {
        ++c[perm[s]];
        tet[s + 1] = vertex(c[0], c[1], c[2]);
      }
      mesh.tets.push_back(oriented(mesh, tet));
      mesh.region.push_back(tag);
    }
  }
  return mesh;
}

}  // namespace

double tet_volume(const TetMesh& mesh, int t) {
  const auto& v = mesh.tets[t];
  return signed_volume(mesh.vertices[v[0]], mesh.vertices[v[1]],
                       mesh.vertices[v[2]], mesh.vertices[v[3]]);
}

double total_volume(const TetMesh& mesh) {
  double vol = 0.0;
  for (int t = 0; t < mesh.num_tets(); ++t) vol += tet_volume(mesh, t);
  return vol;
}

std::vector<std::array<int, 3>> boundary_faces(const TetMesh& mesh) {
  std::map<std::array<int, 3>, int> count;
  for (const auto& t : mesh.tets)
    for (const auto& f : tet_faces(t)) ++count[sorted_face(f)];
  std::vector<std::array<int, 3>> result;
  for (const auto& [face, n] : count)
    if (n == 1) result.push_back(face);
  return result;
}

void validate_mesh(const TetMesh& mesh) {
  if (mesh.region.size() != mesh.tets.size())
    throw ConfigError("mesh: region tag count does not match tet count");
  for (int t = 0; t < mesh.num_tets(); ++t) {
    if (tet_volume(mesh, t) <= 0.0) {
      std::ostringstream os;
      os << "mesh: tet " << t << " has non-positive volume";
      throw ConfigError(os.str());
    }
  }
  std::map<std::array<int, 3>, int> count;
  for (const auto& t : mesh.tets)
    for (const auto& f : tet_faces(t)) ++count[sorted_face(f)];
  for (const auto& [face, n] : count)
    if (n > 2) throw ConfigError("mesh: face shared by more than two tets");
}

TetMesh unit_cube_coarse() { return kuhn_grid(1); }

TetMesh kuhn_grid(int n) {
  if (n < 1) throw ConfigError("kuhn_grid: n must be >= 1");
  std::map<Cell, int> cells;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      for (int k = 0; k < n; ++k) cells[{i, j, k}] = 0;
  return mesh_from_cells(cells, Vector3::Zero(), 1.0 / n);
}

TetMesh mesh_box_union(const std::vector<AlignedBox>& boxes, double h,
                       const std::vector<int>& tags) {
  if (boxes.empty()) throw ConfigError("mesh_box_union: no boxes");
  if (h <= 0.0) throw ConfigError("mesh_box_union: h must be positive");
  auto to_lattice = [&](double x) {
    double q = x / h;
    double r = std::round(q);
    if (std::abs(q - r) > 1e-9)
      throw ConfigError("mesh_box_union: box corner not aligned to the grid");
    return static_cast<int>(r);
  };
  std::map<Cell, int> cells;
  for (std::size_t b = 0; b < boxes.size(); ++b) {
    const int tag = b < tags.size() ? tags[b] : 0;
    int lo[3], hi[3];
    for (int a = 0; a < 3; ++a) {
      lo[a] = to_lattice(boxes[b].lo[a]);
      hi[a] = to_lattice(boxes[b].hi[a]);
      if (hi[a] <= lo[a])
        throw ConfigError("mesh_box_union: box is empty along an axis");
    }
    for (int i = lo[0]; i < hi[0]; ++i)
      for (int j = lo[1]; j < hi[1]; ++j)
        for (int k = lo[2]; k < hi[2]; ++k) cells.try_emplace({i, j, k}, tag);
  }
  return mesh_from_cells(cells, Vector3::Zero(), h);
}

TetMesh refine_uniform(const TetMesh& mesh) {
  TetMesh out;
  out.vertices = mesh.vertices;
  std::map<std::pair<int, int>, int> midpoint_of;
  auto midpoint = [&](int a, int b) {
    auto key = std::minmax(a, b);
    auto [it, inserted] = midpoint_of.try_emplace(key, out.num_vertices());
    if (inserted)
      out.vertices.push_back(0.5 * (mesh.vertices[a] + mesh.vertices[b]));
    return it->second;
  };

  out.tets.reserve(8 * mesh.tets.size());
  out.region.reserve(8 * mesh.tets.size());
  for (int t = 0; t < mesh.num_tets(); ++t) {
    const auto w = refinement_order(mesh, mesh.tets[t]);
    const int m01 = midpoint(w[0], w[1]), m02 = midpoint(w[0], w[2]),
              m03 = midpoint(w[0], w[3]), m12 = midpoint(w[1], w[2]),
              m13 = midpoint(w[1], w[3]), m23 = midpoint(w[2], w[3]);
    // Four corner tets plus the octahedron cut along (m02, m13).
    const std::array<std::array<int, 4>, 8> children = {{
        {w[0], m01, m02, m03},
        {m01, w[1], m12, m13},
        {m02, m12, w[2], m23},
        {m03, m13, m23, w[3]},
        {m01, m02, m03, m13},
        {m01, m02, m12, m13},
        {m02, m03, m13, m23},
        {m02, m12, m13, m23},
    }};
    for (const auto& child : children) {
      out.tets.push_back(oriented(out, child));
      out.region.push_back(mesh.region[t]);
    }
  }
  return out;
}

TetMesh two_boxes_geometry() {
  // Two 2x2x1 boxes stacked above and below a 4x3x2 slab; overlapping pieces
  // of the slab are listed separately and merge cell-wise.
  std::vector<AlignedBox> boxes = {
      {{-1, -1, -2}, {1, 1, -1}}, {{-2, 1, -1}, {2, 2, 1}},
      {{-2, -1, -1}, {2, 1, 1}},  {{-1, -1, 1}, {1, 1, 2}},
      {{-2, -1, -1}, {2, 2, 1}},
  };
  return mesh_box_union(boxes, 1.0);
}

TetMesh box_with_inclusion(const Vector3& outer_dims,
                           const Vector3& inner_dims) {
  for (int a = 0; a < 3; ++a) {
    if (!(inner_dims[a] > 0.0) || !(outer_dims[a] > 0.0))
      throw ConfigError("box_with_inclusion: dimensions must be positive");
    if (inner_dims[a] >= outer_dims[a])
      throw ConfigError(
          "box_with_inclusion: inner box must be strictly inside the outer");
  }
  // Coarsest power-of-two grid on which both boxes and the centered
  // placement are lattice-aligned.
  const double scale = outer_dims.maxCoeff();
  for (int m = 1; m <= 8; ++m) {
    const double h = scale / std::pow(2.0, m);
    bool ok = true;
    for (int a = 0; a < 3 && ok; ++a) {
      const double off = 0.5 * (outer_dims[a] - inner_dims[a]);
      for (double x : {outer_dims[a], inner_dims[a], off}) {
        double q = x / h;
        if (std::abs(q - std::round(q)) > 1e-9) ok = false;
      }
    }
    if (!ok) continue;
    // Inner box first: the first box containing a cell assigns its tag.
    const Vector3 off = 0.5 * (outer_dims - inner_dims);
    std::vector<AlignedBox> boxes = {{off, off + inner_dims},
                                     {Vector3::Zero(), outer_dims}};
    return mesh_box_union(boxes, h, {1, 0});
  }
  throw ConfigError(
      "box_with_inclusion: inner box not representable on a 2^-m grid");
}

EdgeNumbering enumerate_edges(const TetMesh& mesh) {
  static constexpr int local_edges[6][2] = {{0, 1}, {0, 2}, {0, 3},
                                            {1, 2}, {1, 3}, {2, 3}};
  std::set<std::pair<int, int>> edge_set;
  for (const auto& t : mesh.tets)
    for (const auto& le : local_edges)
      edge_set.insert(std::minmax(t[le[0]], t[le[1]]));

  EdgeNumbering numbering;
  numbering.edges.assign(edge_set.begin(), edge_set.end());
  std::map<std::pair<int, int>, int> index_of;
  for (int e = 0; e < numbering.num_edges(); ++e)
    index_of[numbering.edges[e]] = e;

  numbering.tet_edge_map.resize(mesh.num_tets());
  for (int t = 0; t < mesh.num_tets(); ++t) {
    const auto& tet = mesh.tets[t];
    for (int le = 0; le < 6; ++le) {
      const int a = tet[local_edges[le][0]], b = tet[local_edges[le][1]];
      numbering.tet_edge_map[t][le] = {index_of[std::minmax(a, b)],
                                       a < b ? 1 : -1};
    }
  }

  numbering.boundary_mask.assign(numbering.num_edges(), false);
  for (const auto& f : boundary_faces(mesh)) {
    numbering.boundary_mask[index_of[std::minmax(f[0], f[1])]] = true;
    numbering.boundary_mask[index_of[std::minmax(f[0], f[2])]] = true;
    numbering.boundary_mask[index_of[std::minmax(f[1], f[2])]] = true;
  }
  return numbering;
}

}  // namespace hmx
