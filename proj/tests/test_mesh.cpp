// SPDX-License-Identifier: Apache-2.0

#include "hmx/mesh.hpp"

#include <doctest.h>

#include <algorithm>
#include <map>
#include <numeric>
#include <set>

using namespace hmx;

namespace {

// Canonical form of a mesh for set comparison: tets as sorted tuples of
// sorted vertex coordinates.
std::set<std::array<std::array<double, 3>, 4>> canonical_tets(
    const TetMesh& mesh) {
  std::set<std::array<std::array<double, 3>, 4>> out;
  for (const auto& t : mesh.tets) {
    std::array<std::array<double, 3>, 4> tet;
    for (int i = 0; i < 4; ++i) {
      const Vector3& p = mesh.vertices[t[i]];
      tet[i] = {p.x(), p.y(), p.z()};
    }
    std::sort(tet.begin(), tet.end());
    out.insert(tet);
  }
  return out;
}

std::map<std::array<int, 3>, int> face_counts(const TetMesh& mesh) {
  std::map<std::array<int, 3>, int> count;
  for (const auto& t : mesh.tets) {
    const std::array<std::array<int, 3>, 4> faces = {{{t[1], t[2], t[3]},
                                                      {t[0], t[2], t[3]},
                                                      {t[0], t[1], t[3]},
                                                      {t[0], t[1], t[2]}}};
    for (auto f : faces) {
      std::sort(f.begin(), f.end());
      ++count[f];
    }
  }
  return count;
}

bool is_connected(const TetMesh& mesh) {
  // Union-find over vertices through tets.
  std::vector<int> parent(mesh.num_vertices());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& t : mesh.tets)
    for (int i = 1; i < 4; ++i) parent[find(t[i])] = find(t[0]);
  const int root = find(0);
  for (int v = 0; v < mesh.num_vertices(); ++v)
    if (find(v) != root) return false;
  return true;
}

// Inclusion-exclusion volume of a box union, independent of any meshing.
double union_volume(const std::vector<AlignedBox>& boxes) {
  const int n = static_cast<int>(boxes.size());
  double vol = 0.0;
  for (int mask = 1; mask < (1 << n); ++mask) {
    Vector3 lo = Vector3::Constant(-1e30), hi = Vector3::Constant(1e30);
    for (int b = 0; b < n; ++b) {
      if (!(mask & (1 << b))) continue;
      lo = lo.cwiseMax(boxes[b].lo);
      hi = hi.cwiseMin(boxes[b].hi);
    }
    const Vector3 ext = (hi - lo).cwiseMax(0.0);
    const double v = ext.prod();
    vol += (__builtin_popcount(mask) % 2 == 1) ? v : -v;
  }
  return vol;
}

}  // namespace

TEST_CASE("unit cube coarse mesh") {
  const TetMesh mesh = unit_cube_coarse();
  CHECK(mesh.num_tets() == 6);
  CHECK(mesh.num_vertices() == 8);
  CHECK(total_volume(mesh) == doctest::Approx(1.0).epsilon(1e-13));
  for (int t = 0; t < mesh.num_tets(); ++t) CHECK(tet_volume(mesh, t) > 0.0);

  const EdgeNumbering edges = enumerate_edges(mesh);
  CHECK(edges.num_edges() == 19);
  const int n_boundary = static_cast<int>(
      std::count(edges.boundary_mask.begin(), edges.boundary_mask.end(), true));
  CHECK(n_boundary == 18);  // only the main diagonal is interior

  // Euler count V - E + F - T = 1 for a ball.
  const int n_faces = static_cast<int>(face_counts(mesh).size());
  CHECK(mesh.num_vertices() - edges.num_edges() + n_faces - mesh.num_tets() ==
        1);
}

TEST_CASE("uniform refinement counts and volume") {
  TetMesh mesh = unit_cube_coarse();
  CHECK(kuhn_edge_count(1) == 19);

  mesh = refine_uniform(mesh);
  CHECK(mesh.num_tets() == 48);
  CHECK(enumerate_edges(mesh).num_edges() == 98);
  CHECK(enumerate_edges(mesh).num_edges() == kuhn_edge_count(2));
  CHECK(total_volume(mesh) == doctest::Approx(1.0).epsilon(1e-12));

  mesh = refine_uniform(mesh);
  CHECK(enumerate_edges(mesh).num_edges() == 604);
  CHECK(enumerate_edges(mesh).num_edges() == kuhn_edge_count(4));

  mesh = refine_uniform(mesh);
  CHECK(enumerate_edges(mesh).num_edges() == kuhn_edge_count(8));
  CHECK(kuhn_edge_count(8) == 4184);
  CHECK(total_volume(mesh) == doctest::Approx(1.0).epsilon(1e-12));
  for (int t = 0; t < mesh.num_tets(); ++t) CHECK(tet_volume(mesh, t) > 0.0);
}

TEST_CASE("refinement reproduces the Kuhn grid") {
  for (int n : {1, 2}) {
    const TetMesh refined = refine_uniform(kuhn_grid(n));
    const TetMesh direct = kuhn_grid(2 * n);
    CHECK(refined.num_tets() == direct.num_tets());
    CHECK(canonical_tets(refined) == canonical_tets(direct));
  }
}

TEST_CASE("refinement conserves per-tet volume") {
  const TetMesh mesh = two_boxes_geometry();
  const TetMesh fine = refine_uniform(mesh);
  CHECK(fine.num_tets() == 8 * mesh.num_tets());
  CHECK(total_volume(fine) ==
        doctest::Approx(total_volume(mesh)).epsilon(1e-12));
}

TEST_CASE("face incidence is 1 or 2") {
  const TetMesh mesh = refine_uniform(unit_cube_coarse());
  int n_boundary = 0;
  for (const auto& [face, n] : face_counts(mesh)) {
    CHECK(n >= 1);
    CHECK(n <= 2);
    if (n == 1) ++n_boundary;
  }
  CHECK(n_boundary == static_cast<int>(boundary_faces(mesh).size()));
  validate_mesh(mesh);
}

TEST_CASE("two boxes geometry") {
  const TetMesh mesh = two_boxes_geometry();
  validate_mesh(mesh);
  CHECK(is_connected(mesh));

  const std::vector<AlignedBox> boxes = {
      {{-1, -1, -2}, {1, 1, -1}}, {{-2, 1, -1}, {2, 2, 1}},
      {{-2, -1, -1}, {2, 1, 1}},  {{-1, -1, 1}, {1, 1, 2}},
      {{-2, -1, -1}, {2, 2, 1}},
  };
  CHECK(total_volume(mesh) ==
        doctest::Approx(union_volume(boxes)).epsilon(1e-12));
}

TEST_CASE("box union rejects grid-incompatible boxes") {
  CHECK_THROWS_AS(
      mesh_box_union({{Vector3(0, 0, 0), Vector3(1, 1, 0.5)}}, 1.0),
      ConfigError);
}

TEST_CASE("box with inclusion") {
  const TetMesh mesh =
      box_with_inclusion(Vector3(1, 1, 1), Vector3(0.5, 0.5, 0.75));
  validate_mesh(mesh);
  double inner = 0.0, outer = 0.0;
  for (int t = 0; t < mesh.num_tets(); ++t) {
    REQUIRE(mesh.region[t] >= 0);
    REQUIRE(mesh.region[t] <= 1);
    (mesh.region[t] == 1 ? inner : outer) += tet_volume(mesh, t);
  }
  CHECK(inner == doctest::Approx(0.1875).epsilon(1e-12));
  CHECK(outer == doctest::Approx(0.8125).epsilon(1e-12));

  CHECK_THROWS_AS(box_with_inclusion(Vector3(1, 1, 1), Vector3(1, 1, 1)),
                  ConfigError);
}

TEST_CASE("edge enumeration basics") {
  TetMesh single;
  single.vertices = {Vector3(0, 0, 0), Vector3(1, 0, 0), Vector3(0, 1, 0),
                     Vector3(0, 0, 1)};
  single.tets = {{0, 1, 2, 3}};
  single.region = {0};
  EdgeNumbering edges = enumerate_edges(single);
  CHECK(edges.num_edges() == 6);
  CHECK(std::count(edges.boundary_mask.begin(), edges.boundary_mask.end(),
                   true) == 6);

  TetMesh pair = single;
  pair.vertices.push_back(Vector3(1, 1, 1));
  pair.tets.push_back({1, 2, 3, 4});
  if (tet_volume(pair, 1) < 0) std::swap(pair.tets[1][2], pair.tets[1][3]);
  pair.region.push_back(0);
  CHECK(enumerate_edges(pair).num_edges() == 9);
}

TEST_CASE("edge enumeration is canonical and deterministic") {
  const TetMesh mesh = refine_uniform(unit_cube_coarse());
  const EdgeNumbering a = enumerate_edges(mesh);
  const EdgeNumbering b = enumerate_edges(mesh);
  CHECK(a.edges == b.edges);
  CHECK(a.boundary_mask == b.boundary_mask);
  CHECK(a.tet_edge_map == b.tet_edge_map);

  CHECK(std::is_sorted(a.edges.begin(), a.edges.end()));
  for (const auto& [i, j] : a.edges) CHECK(i < j);

  // Each tet references 6 distinct edges with signs matching vertex order.
  for (int t = 0; t < mesh.num_tets(); ++t) {
    std::set<int> distinct;
    for (const auto& [e, sign] : a.tet_edge_map[t]) {
      distinct.insert(e);
      CHECK((sign == 1 || sign == -1));
    }
    CHECK(distinct.size() == 6);
  }
}
