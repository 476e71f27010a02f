// SPDX-License-Identifier: Apache-2.0

#include "hmx/clustering.hpp"

#include <algorithm>
#include <numeric>

namespace hmx {

DofGeometry dof_points(const TetMesh& mesh, const EdgeNumbering& edges,
                       const std::vector<int>& dof_map) {
  DofGeometry geo;
  geo.points.reserve(dof_map.size());
  geo.boxes.reserve(dof_map.size());
  for (int e : dof_map) {
    const auto [i, j] = edges.edges[e];
    const Vector3 &a = mesh.vertices[i], &b = mesh.vertices[j];
    geo.points.push_back(0.5 * (a + b));
    Box3 box;
    box.extend(a);
    box.extend(b);
    geo.boxes.push_back(box);
  }
  return geo;
}

namespace {

struct TreeBuilder {
  const DofGeometry& geo;
  ClusterTree tree;

  int build(int begin, int end) {
    const int id = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes[id].begin = begin;
    tree.nodes[id].end = end;

    Box3 point_box;  // drives the split
    Box3 support_box;
    for (int p = begin; p < end; ++p) {
      point_box.extend(geo.points[tree.perm[p]]);
      support_box.extend(geo.boxes[tree.perm[p]]);
    }
    tree.nodes[id].bbox = support_box;

    const Vector3 extent = point_box.hi - point_box.lo;
    int axis = 0;
    extent.maxCoeff(&axis);
    if (end - begin <= tree.n_min || extent(axis) <= 0.0) return id;

    const double mid = 0.5 * (point_box.lo(axis) + point_box.hi(axis));
    auto* first = tree.perm.data() + begin;
    auto* last = tree.perm.data() + end;
    auto* split = std::partition(
        first, last, [&](int dof) { return geo.points[dof](axis) < mid; });
    const int cut = begin + static_cast<int>(split - first);
    // A box with positive extent always separates its extreme points.
    const int left = build(begin, cut);
    const int right = build(cut, end);
    tree.nodes[id].child = {left, right};
    return id;
  }
};

struct BlockBuilder {
  const ClusterTree& rows;
  const ClusterTree& cols;
  double eta;
  std::vector<BlockNode> nodes;

  int build(int row, int col, int level) {
    const int id = static_cast<int>(nodes.size());
    nodes.emplace_back();
    nodes[id].row = row;
    nodes[id].col = col;
    nodes[id].level = level;

    const ClusterNode& r = rows.nodes[row];
    const ClusterNode& c = cols.nodes[col];
    const double diam = std::min(r.bbox.diameter(), c.bbox.diameter());
    if (diam <= eta * r.bbox.distance_to(c.bbox)) {
      nodes[id].kind = BlockKind::Admissible;
    } else if (r.is_leaf() || c.is_leaf()) {
      nodes[id].kind = BlockKind::Dense;
    } else {
      nodes[id].kind = BlockKind::Subdivided;
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
          const int child = build(r.child[i], c.child[j], level + 1);
          nodes[id].child[i][j] = child;
        }
    }
    return id;
  }
};

}  // namespace

std::shared_ptr<const ClusterTree> build_cluster_tree(const DofGeometry& geo,
                                                      int n_min) {
  if (geo.points.empty())
    throw ConfigError("build_cluster_tree: no DOFs to cluster");
  if (n_min < 1) throw ConfigError("build_cluster_tree: n_min must be >= 1");
  TreeBuilder builder{geo, {}};
  builder.tree.n_min = n_min;
  builder.tree.perm.resize(geo.points.size());
  std::iota(builder.tree.perm.begin(), builder.tree.perm.end(), 0);
  builder.build(0, static_cast<int>(geo.points.size()));
  builder.tree.iperm.resize(builder.tree.perm.size());
  for (int p = 0; p < builder.tree.size(); ++p)
    builder.tree.iperm[builder.tree.perm[p]] = p;
  return std::make_shared<const ClusterTree>(std::move(builder.tree));
}

BlockStats BlockClusterTree::stats() const {
  BlockStats stats;
  for (const auto& node : nodes) {
    stats.depth = std::max(stats.depth, node.level);
    if (node.kind == BlockKind::Admissible) ++stats.n_admissible;
    else if (node.kind == BlockKind::Dense) ++stats.n_dense;
  }
  return stats;
}

std::shared_ptr<const BlockClusterTree> build_block_tree(
    std::shared_ptr<const ClusterTree> rows,
    std::shared_ptr<const ClusterTree> cols, double eta) {
  if (!(eta > 0.0)) throw ConfigError("build_block_tree: eta must be > 0");
  BlockBuilder builder{*rows, *cols, eta, {}};
  builder.build(0, 0, 0);
  auto tree = std::make_shared<BlockClusterTree>();
  tree->rows = std::move(rows);
  tree->cols = std::move(cols);
  tree->eta = eta;
  tree->nodes = std::move(builder.nodes);
  return tree;
}

}  // namespace hmx
