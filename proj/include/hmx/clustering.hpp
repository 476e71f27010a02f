// SPDX-License-Identifier: Apache-2.0
//
// Geometrically balanced cluster trees over DOF locations and eta-admissible
// block cluster trees that define the H-matrix block structure.

#ifndef HMX_CLUSTERING_HPP
#define HMX_CLUSTERING_HPP

#include <memory>
#include <vector>

#include "hmx/mesh.hpp"
#include "hmx/types.hpp"

namespace hmx {

struct Box3 {
  Vector3 lo = Vector3::Constant(1e300);
  Vector3 hi = Vector3::Constant(-1e300);

  void extend(const Vector3& p) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  void extend(const Box3& b) {
    lo = lo.cwiseMin(b.lo);
    hi = hi.cwiseMax(b.hi);
  }
  double diameter() const { return (hi - lo).norm(); }
  double distance_to(const Box3& other) const {
    const Vector3 gap =
        (lo - other.hi).cwiseMax(other.lo - hi).cwiseMax(0.0);
    return gap.norm();
  }
};

// One point (and a support box) per edge DOF.
struct DofGeometry {
  std::vector<Vector3> points;  // edge midpoints
  std::vector<Box3> boxes;      // span of the full edge
};

DofGeometry dof_points(const TetMesh& mesh, const EdgeNumbering& edges,
                       const std::vector<int>& dof_map);

struct ClusterNode {
  int begin = 0, end = 0;  // permuted index range [begin, end)
  Box3 bbox;               // union of member DOF boxes
  std::array<int, 2> child = {-1, -1};

  int size() const { return end - begin; }
  bool is_leaf() const { return child[0] < 0; }
};

struct ClusterTree {
  std::vector<ClusterNode> nodes;  // nodes[0] is the root
  std::vector<int> perm;           // position -> DOF
  std::vector<int> iperm;          // DOF -> position
  int n_min = 32;

  int size() const { return static_cast<int>(perm.size()); }
  const ClusterNode& root() const { return nodes[0]; }
};

// Recursive geometric bisection: split the node's point bounding box at the
// midpoint of its longest axis until clusters have at most n_min DOFs.
std::shared_ptr<const ClusterTree> build_cluster_tree(const DofGeometry& geo,
                                                      int n_min = 32);

enum class BlockKind { Admissible, Dense, Subdivided };

struct BlockNode {
  int row = 0, col = 0;  // cluster node ids
  BlockKind kind = BlockKind::Dense;
  // children indexed by (row child, col child); -1 when not subdivided
  std::array<std::array<int, 2>, 2> child = {{{-1, -1}, {-1, -1}}};
  int level = 0;
};

struct BlockStats {
  long n_admissible = 0;
  long n_dense = 0;
  int depth = 0;
};

struct BlockClusterTree {
  std::shared_ptr<const ClusterTree> rows, cols;
  std::vector<BlockNode> nodes;  // nodes[0] is the root pair
  double eta = 2.0;

  Index dim_rows() const { return rows->size(); }
  Index dim_cols() const { return cols->size(); }
  BlockStats stats() const;
};

// Pairs (tau, sigma) are admissible when
//   min(diam(tau), diam(sigma)) <= eta * dist(tau, sigma)
// on the clusters' DOF-support boxes; pairs where either cluster is a leaf
// become dense leaves; everything else is subdivided.
std::shared_ptr<const BlockClusterTree> build_block_tree(
    std::shared_ptr<const ClusterTree> rows,
    std::shared_ptr<const ClusterTree> cols, double eta);

}  // namespace hmx

#endif  // HMX_CLUSTERING_HPP
