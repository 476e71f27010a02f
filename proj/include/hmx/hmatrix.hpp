// SPDX-License-Identifier: Apache-2.0
//
// H-matrix representation over a block cluster tree: low-rank leaves X*Y^H
// on admissible blocks, dense leaves elsewhere. Truncated-SVD compression,
// formatted add/multiply, conversion from sparse matrices, and the Schulz
// iteration for the approximate inverse.

#ifndef HMX_HMATRIX_HPP
#define HMX_HMATRIX_HPP

#include <algorithm>
#include <optional>
#include <random>
#include <vector>

#include <Eigen/QR>
#include <Eigen/SVD>

#include "hmx/clustering.hpp"
#include "hmx/types.hpp"

namespace hmx {

struct TruncationControl {
  enum class Mode { FixedRank, RelativeEps };
  Mode mode = Mode::RelativeEps;
  int rank = 0;        // fixed-rank mode
  double eps = 1e-12;  // relative mode: keep sigma_i > eps * sigma_1
  int r_max = 1 << 30;

  static TruncationControl fixed(int r, int r_max = 1 << 30) {
    if (r < 0) throw ConfigError("TruncationControl: rank must be >= 0");
    TruncationControl ctl;
    ctl.mode = Mode::FixedRank;
    ctl.rank = r;
    ctl.r_max = r_max;
    return ctl;
  }
  static TruncationControl relative(double eps, int r_max = 1 << 30) {
    if (!(eps > 0.0) || !(eps < 1.0))
      throw ConfigError("TruncationControl: eps must be in (0,1)");
    TruncationControl ctl;
    ctl.mode = Mode::RelativeEps;
    ctl.eps = eps;
    ctl.r_max = r_max;
    return ctl;
  }
};

template <class S>
struct LowRankBlock {
  MatrixX<S> X;  // |tau| x r
  MatrixX<S> Y;  // |sigma| x r; block value is X * Y^H

  int rank() const { return static_cast<int>(X.cols()); }
};

template <class S>
struct HMatrix {
  std::shared_ptr<const BlockClusterTree> tree;
  // Payloads indexed by block node id; only the matching kind is filled.
  std::vector<LowRankBlock<S>> lr;
  std::vector<MatrixX<S>> dn;

  Index rows() const { return tree->dim_rows(); }
  Index cols() const { return tree->dim_cols(); }
};

namespace detail {

template <class S>
void svd_thin(const MatrixX<S>& m, MatrixX<S>& u, VectorXd& sv, MatrixX<S>& v) {
  if (std::min(m.rows(), m.cols()) <= 16) {
    Eigen::JacobiSVD<MatrixX<S>> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    u = svd.matrixU();
    sv = svd.singularValues();
    v = svd.matrixV();
  } else {
    Eigen::BDCSVD<MatrixX<S>> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
    u = svd.matrixU();
    sv = svd.singularValues();
    v = svd.matrixV();
  }
}

inline int choose_rank(const VectorXd& sv, const TruncationControl& ctl) {
  const int n = static_cast<int>(sv.size());
  if (n == 0 || sv(0) <= 0.0) return 0;
  int keep;
  if (ctl.mode == TruncationControl::Mode::FixedRank) {
    keep = std::min(ctl.rank, n);
  } else {
    keep = 0;
    while (keep < n && sv(keep) > ctl.eps * sv(0)) ++keep;
  }
  keep = std::min(keep, ctl.r_max);
  while (keep > 0 && sv(keep - 1) <= 1e-15 * sv(0)) --keep;  // numerical zeros
  return keep;
}

// Thin QR helper: m = q * r with q orthonormal.
template <class S>
void qr_thin(const MatrixX<S>& m, MatrixX<S>& q, MatrixX<S>& r) {
  const Index k = std::min(m.rows(), m.cols());
  Eigen::HouseholderQR<MatrixX<S>> qr(m);
  q = qr.householderQ() * MatrixX<S>::Identity(m.rows(), k);
  r = MatrixX<S>(qr.matrixQR().topRows(k).template triangularView<Eigen::Upper>());
}

}  // namespace detail

// Best rank-r approximation of a dense block (Eckart-Young via SVD).
// Factors returned as X = U_r * S_r, Y = V_r.
template <class S>
LowRankBlock<S> truncate_block(const MatrixX<S>& m,
                               const TruncationControl& ctl) {
  MatrixX<S> u, v;
  VectorXd sv;
  detail::svd_thin(m, u, sv, v);
  const int r = detail::choose_rank(sv, ctl);
  LowRankBlock<S> block;
  block.X = u.leftCols(r) * sv.head(r).asDiagonal();
  block.Y = v.leftCols(r);
  return block;
}

// Recompression of a low-rank block: QR both factors, SVD the small core.
template <class S>
LowRankBlock<S> truncate_block(const LowRankBlock<S>& m,
                               const TruncationControl& ctl) {
  if (m.rank() == 0) return m;
  MatrixX<S> qx, rx, qy, ry;
  detail::qr_thin(m.X, qx, rx);
  detail::qr_thin(m.Y, qy, ry);
  MatrixX<S> u, v;
  VectorXd sv;
  detail::svd_thin(MatrixX<S>(rx * ry.adjoint()), u, sv, v);
  const int r = detail::choose_rank(sv, ctl);
  LowRankBlock<S> out;
  out.X = qx * (u.leftCols(r) * sv.head(r).asDiagonal());
  out.Y = qy * v.leftCols(r);
  return out;
}

template <class S>
MatrixX<S> densify_block(const LowRankBlock<S>& m) {
  return m.X * m.Y.adjoint();
}

template <class S>
HMatrix<S> h_zero(std::shared_ptr<const BlockClusterTree> tree) {
  HMatrix<S> h;
  h.tree = std::move(tree);
  const auto& nodes = h.tree->nodes;
  h.lr.resize(nodes.size());
  h.dn.resize(nodes.size());
  for (std::size_t n = 0; n < nodes.size(); ++n) {
    const auto& r = h.tree->rows->nodes[nodes[n].row];
    const auto& c = h.tree->cols->nodes[nodes[n].col];
    if (nodes[n].kind == BlockKind::Dense)
      h.dn[n] = MatrixX<S>::Zero(r.size(), c.size());
    else if (nodes[n].kind == BlockKind::Admissible) {
      h.lr[n].X = MatrixX<S>::Zero(r.size(), 0);
      h.lr[n].Y = MatrixX<S>::Zero(c.size(), 0);
    }
  }
  return h;
}

// Adds s*I along the block diagonal; requires identical row/col trees.
template <class S>
void add_scaled_identity(HMatrix<S>& h, S s) {
  if (h.tree->rows != h.tree->cols)
    throw ConfigError("add_scaled_identity: tree is not square");
  // Diagonal pairs subdivide until dense cluster-leaf blocks, so all
  // diagonal entries live in diagonal dense leaves.
  std::vector<int> stack = {0};
  while (!stack.empty()) {
    const int n = stack.back();
    stack.pop_back();
    const auto& node = h.tree->nodes[n];
    if (node.kind == BlockKind::Subdivided) {
      stack.push_back(node.child[0][0]);
      stack.push_back(node.child[1][1]);
    } else {
      h.dn[n].diagonal().array() += s;
    }
  }
}

template <class S>
HMatrix<S> h_identity(std::shared_ptr<const BlockClusterTree> tree, S s = S(1)) {
  HMatrix<S> h = h_zero<S>(std::move(tree));
  add_scaled_identity(h, s);
  return h;
}

template <class S>
void h_scale(HMatrix<S>& h, S s) {
  for (std::size_t n = 0; n < h.tree->nodes.size(); ++n) {
    if (h.tree->nodes[n].kind == BlockKind::Dense) h.dn[n] *= s;
    else if (h.tree->nodes[n].kind == BlockKind::Admissible) h.lr[n].X *= s;
  }
}

// Mirror across the diagonal: value becomes H^H. Requires rows == cols tree.
template <class S>
HMatrix<S> h_adjoint(const HMatrix<S>& h) {
  if (h.tree->rows != h.tree->cols)
    throw ConfigError("h_adjoint: tree is not square");
  HMatrix<S> out = h_zero<S>(h.tree);
  // mirrored node ids: walk pairs (n, m) with m the (col,row) mirror of n
  std::vector<std::pair<int, int>> stack = {{0, 0}};
  while (!stack.empty()) {
    const auto [n, m] = stack.back();
    stack.pop_back();
    const auto& node = h.tree->nodes[n];
    if (node.kind == BlockKind::Subdivided) {
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
          stack.push_back({node.child[i][j], h.tree->nodes[m].child[j][i]});
    } else if (node.kind == BlockKind::Dense) {
      out.dn[m] = h.dn[n].adjoint();
    } else {
      out.lr[m].X = h.lr[n].Y;
      out.lr[m].Y = h.lr[n].X;
    }
  }
  return out;
}

// H-matrix approximation of a sparse matrix (given in original ordering).
// Without a control the conversion is lossless: admissible blocks keep their
// exact rank (bounded by the number of nonzero columns in the block).
template <class S>
HMatrix<S> sparse_to_h(const Eigen::SparseMatrix<S>& a,
                       std::shared_ptr<const BlockClusterTree> tree,
                       std::optional<TruncationControl> ctl = std::nullopt) {
  if (a.rows() != tree->dim_rows() || a.cols() != tree->dim_cols())
    throw ConfigError("sparse_to_h: dimension mismatch with block tree");
  Eigen::SparseMatrix<S> ac = a;
  ac.makeCompressed();
  HMatrix<S> h = h_zero<S>(tree);
  const auto& rows = *tree->rows;
  const auto& cols = *tree->cols;

  for (std::size_t n = 0; n < tree->nodes.size(); ++n) {
    const auto& node = tree->nodes[n];
    if (node.kind == BlockKind::Subdivided) continue;
    const auto& r = rows.nodes[node.row];
    const auto& c = cols.nodes[node.col];

    if (node.kind == BlockKind::Dense) {
      MatrixX<S>& d = h.dn[n];
      for (int j = c.begin; j < c.end; ++j) {
        const int col = cols.perm[j];
        for (typename Eigen::SparseMatrix<S>::InnerIterator it(ac, col); it;
             ++it) {
          const int pos = rows.iperm[it.row()];
          if (pos >= r.begin && pos < r.end)
            d(pos - r.begin, j - c.begin) = it.value();
        }
      }
      continue;
    }

    // Admissible: gather nonzero columns of the block restriction.
    std::vector<int> nz_cols;
    for (int j = c.begin; j < c.end; ++j) {
      const int col = cols.perm[j];
      for (typename Eigen::SparseMatrix<S>::InnerIterator it(ac, col); it;
           ++it) {
        const int pos = rows.iperm[it.row()];
        if (pos >= r.begin && pos < r.end) {
          nz_cols.push_back(j - c.begin);
          break;
        }
      }
    }
    const int k = static_cast<int>(nz_cols.size());
    LowRankBlock<S> block;
    block.X = MatrixX<S>::Zero(r.size(), k);
    block.Y = MatrixX<S>::Zero(c.size(), k);
    for (int q = 0; q < k; ++q) {
      const int col = cols.perm[c.begin + nz_cols[q]];
      for (typename Eigen::SparseMatrix<S>::InnerIterator it(ac, col); it;
           ++it) {
        const int pos = rows.iperm[it.row()];
        if (pos >= r.begin && pos < r.end)
          block.X(pos - r.begin, q) = it.value();
      }
      block.Y(nz_cols[q], q) = S(1);
    }
    if (k > std::min(r.size(), c.size()))
      block = truncate_block(block, TruncationControl::relative(1e-15));
    if (ctl) block = truncate_block(block, *ctl);
    h.lr[n] = std::move(block);
  }
  return h;
}

// y = H * x, vectors in original (unpermuted) ordering.
template <class S>
VectorX<S> h_matvec(const HMatrix<S>& h, const VectorX<S>& x) {
  if (x.size() != h.cols()) throw ConfigError("h_matvec: dimension mismatch");
  const auto& rows = *h.tree->rows;
  const auto& cols = *h.tree->cols;
  VectorX<S> xp(x.size());
  for (Index i = 0; i < x.size(); ++i) xp(i) = x(cols.perm[i]);
  VectorX<S> yp = VectorX<S>::Zero(h.rows());
  for (std::size_t n = 0; n < h.tree->nodes.size(); ++n) {
    const auto& node = h.tree->nodes[n];
    if (node.kind == BlockKind::Subdivided) continue;
    const auto& r = rows.nodes[node.row];
    const auto& c = cols.nodes[node.col];
    const auto xs = xp.segment(c.begin, c.size());
    if (node.kind == BlockKind::Dense)
      yp.segment(r.begin, r.size()).noalias() += h.dn[n] * xs;
    else if (h.lr[n].rank() > 0)
      yp.segment(r.begin, r.size()).noalias() +=
          h.lr[n].X * (h.lr[n].Y.adjoint() * xs);
  }
  VectorX<S> y(h.rows());
  for (Index i = 0; i < y.size(); ++i) y(rows.perm[i]) = yp(i);
  return y;
}

template <class S>
VectorX<S> h_matvec_adjoint(const HMatrix<S>& h, const VectorX<S>& x) {
  if (x.size() != h.rows())
    throw ConfigError("h_matvec_adjoint: dimension mismatch");
  const auto& rows = *h.tree->rows;
  const auto& cols = *h.tree->cols;
  VectorX<S> xp(x.size());
  for (Index i = 0; i < x.size(); ++i) xp(i) = x(rows.perm[i]);
  VectorX<S> yp = VectorX<S>::Zero(h.cols());
  for (std::size_t n = 0; n < h.tree->nodes.size(); ++n) {
    const auto& node = h.tree->nodes[n];
    if (node.kind == BlockKind::Subdivided) continue;
    const auto& r = rows.nodes[node.row];
    const auto& c = cols.nodes[node.col];
    const auto xs = xp.segment(r.begin, r.size());
    if (node.kind == BlockKind::Dense)
      yp.segment(c.begin, c.size()).noalias() += h.dn[n].adjoint() * xs;
    else if (h.lr[n].rank() > 0)
      yp.segment(c.begin, c.size()).noalias() +=
          h.lr[n].Y * (h.lr[n].X.adjoint() * xs);
  }
  VectorX<S> y(h.cols());
  for (Index i = 0; i < y.size(); ++i) y(cols.perm[i]) = yp(i);
  return y;
}

// Dense matrix in original ordering.
template <class S>
MatrixX<S> densify(const HMatrix<S>& h) {
  const auto& rows = *h.tree->rows;
  const auto& cols = *h.tree->cols;
  MatrixX<S> dp = MatrixX<S>::Zero(h.rows(), h.cols());
  for (std::size_t n = 0; n < h.tree->nodes.size(); ++n) {
    const auto& node = h.tree->nodes[n];
    if (node.kind == BlockKind::Subdivided) continue;
    const auto& r = rows.nodes[node.row];
    const auto& c = cols.nodes[node.col];
    if (node.kind == BlockKind::Dense)
      dp.block(r.begin, c.begin, r.size(), c.size()) = h.dn[n];
    else
      dp.block(r.begin, c.begin, r.size(), c.size()) = densify_block(h.lr[n]);
  }
  MatrixX<S> d(h.rows(), h.cols());
  for (Index i = 0; i < h.rows(); ++i)
    for (Index j = 0; j < h.cols(); ++j)
      d(rows.perm[i], cols.perm[j]) = dp(i, j);
  return d;
}

// Formatted sum: dense leaves exact, admissible leaves re-truncated.
template <class S>
HMatrix<S> h_add(const HMatrix<S>& a, const HMatrix<S>& b,
                 const TruncationControl& ctl) {
  if (a.tree != b.tree) throw ConfigError("h_add: block trees differ");
  HMatrix<S> out = h_zero<S>(a.tree);
  for (std::size_t n = 0; n < a.tree->nodes.size(); ++n) {
    const auto& node = a.tree->nodes[n];
    if (node.kind == BlockKind::Dense) {
      out.dn[n] = a.dn[n] + b.dn[n];
    } else if (node.kind == BlockKind::Admissible) {
      LowRankBlock<S> sum;
      sum.X.resize(a.lr[n].X.rows(), a.lr[n].rank() + b.lr[n].rank());
      sum.Y.resize(a.lr[n].Y.rows(), sum.X.cols());
      sum.X << a.lr[n].X, b.lr[n].X;
      sum.Y << a.lr[n].Y, b.lr[n].Y;
      out.lr[n] = truncate_block(sum, ctl);
    }
  }
  return out;
}

// Storage accounting in scalar entries and bytes.
template <class S>
std::int64_t storage_entries(const HMatrix<S>& h) {
  std::int64_t total = 0;
  for (std::size_t n = 0; n < h.tree->nodes.size(); ++n) {
    const auto& node = h.tree->nodes[n];
    if (node.kind == BlockKind::Dense)
      total += static_cast<std::int64_t>(h.dn[n].rows()) * h.dn[n].cols();
    else if (node.kind == BlockKind::Admissible)
      total += static_cast<std::int64_t>(h.lr[n].X.rows() + h.lr[n].Y.rows()) *
               h.lr[n].rank();
  }
  return total;
}

template <class S>
std::int64_t storage_bytes(const HMatrix<S>& h) {
  return storage_entries(h) * static_cast<std::int64_t>(sizeof(S));
}

template <class S>
int max_leaf_rank(const HMatrix<S>& h) {
  int r = 0;
  for (std::size_t n = 0; n < h.tree->nodes.size(); ++n)
    if (h.tree->nodes[n].kind == BlockKind::Admissible)
      r = std::max(r, h.lr[n].rank());
  return r;
}

namespace detail {

// A (possibly sliced) view of an H-matrix block used by the formatted
// multiplication: either a tree-backed node, a sliced low-rank piece, or a
// sliced dense piece. Views carry the cluster nodes they span.
template <class S>
struct BlockView {
  const BlockClusterTree* bt = nullptr;
  int rcluster = -1, ccluster = -1;
  const HMatrix<S>* h = nullptr;
  int hnode = -1;
  std::optional<LowRankBlock<S>> slr;
  std::optional<MatrixX<S>> sdn;

  enum class Kind { Sub, LowRank, Dense };

  static BlockView from_node(const HMatrix<S>& owner, int node) {
    BlockView v;
    v.bt = owner.tree.get();
    v.rcluster = owner.tree->nodes[node].row;
    v.ccluster = owner.tree->nodes[node].col;
    v.h = &owner;
    v.hnode = node;
    return v;
  }

  Kind kind() const {
    if (h) {
      switch (h->tree->nodes[hnode].kind) {
        case BlockKind::Subdivided: return Kind::Sub;
        case BlockKind::Admissible: return Kind::LowRank;
        case BlockKind::Dense: return Kind::Dense;
      }
    }
    return slr ? Kind::LowRank : Kind::Dense;
  }

  const ClusterNode& rnode() const { return bt->rows->nodes[rcluster]; }
  const ClusterNode& cnode() const { return bt->cols->nodes[ccluster]; }
  Index rows() const { return rnode().size(); }
  Index cols() const { return cnode().size(); }

  const LowRankBlock<S>& lr_ref() const {
    return h ? h->lr[hnode] : *slr;
  }
  const MatrixX<S>& dn_ref() const { return h ? h->dn[hnode] : *sdn; }

  // Child view (i, j): follows tree children for subdivided nodes and
  // slices leaf payloads along the cluster children otherwise.
  BlockView child(int i, int j) const {
    const int rc = rnode().child[i];
    const int cc = cnode().child[j];
    if (kind() == Kind::Sub) {
      return from_node(*h, h->tree->nodes[hnode].child[i][j]);
    }
    BlockView v;
    v.bt = bt;
    v.rcluster = rc;
    v.ccluster = cc;
    const Index r0 = bt->rows->nodes[rc].begin - rnode().begin;
    const Index c0 = bt->cols->nodes[cc].begin - cnode().begin;
    const Index nr = bt->rows->nodes[rc].size();
    const Index nc = bt->cols->nodes[cc].size();
    if (kind() == Kind::LowRank) {
      const auto& lr = lr_ref();
      LowRankBlock<S> piece;
      piece.X = lr.X.middleRows(r0, nr);
      piece.Y = lr.Y.middleRows(c0, nc);
      v.slr = std::move(piece);
    } else {
      v.sdn = dn_ref().block(r0, c0, nr, nc);
    }
    return v;
  }
};

// view * m on permuted coordinates (m has view.cols() rows).
template <class S>
MatrixX<S> view_apply(const BlockView<S>& v, const MatrixX<S>& m) {
  switch (v.kind()) {
    case BlockView<S>::Kind::Dense:
      return v.dn_ref() * m;
    case BlockView<S>::Kind::LowRank:
      return v.lr_ref().X * (v.lr_ref().Y.adjoint() * m);
    case BlockView<S>::Kind::Sub: {
      MatrixX<S> out = MatrixX<S>::Zero(v.rows(), m.cols());
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
          const auto c = v.child(i, j);
          const Index r0 = c.rnode().begin - v.rnode().begin;
          const Index c0 = c.cnode().begin - v.cnode().begin;
          out.middleRows(r0, c.rows()).noalias() +=
              view_apply(c, MatrixX<S>(m.middleRows(c0, c.cols())));
        }
      return out;
    }
  }
  return {};
}

// view^H * m (m has view.rows() rows).
template <class S>
MatrixX<S> view_apply_adjoint(const BlockView<S>& v, const MatrixX<S>& m) {
  switch (v.kind()) {
    case BlockView<S>::Kind::Dense:
      return v.dn_ref().adjoint() * m;
    case BlockView<S>::Kind::LowRank:
      return v.lr_ref().Y * (v.lr_ref().X.adjoint() * m);
    case BlockView<S>::Kind::Sub: {
      MatrixX<S> out = MatrixX<S>::Zero(v.cols(), m.cols());
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) {
          const auto c = v.child(i, j);
          const Index r0 = c.rnode().begin - v.rnode().begin;
          const Index c0 = c.cnode().begin - v.cnode().begin;
          out.middleRows(c0, c.cols()).noalias() +=
              view_apply_adjoint(c, MatrixX<S>(m.middleRows(r0, c.rows())));
        }
      return out;
    }
  }
  return {};
}

// Product contribution: low-rank or dense.
template <class S>
struct MatBlock {
  std::optional<LowRankBlock<S>> lr;
  std::optional<MatrixX<S>> dn;
};

template <class S>
MatBlock<S> mb_lowrank(MatrixX<S> x, MatrixX<S> y) {
  MatBlock<S> b;
  b.lr = LowRankBlock<S>{std::move(x), std::move(y)};
  return b;
}

template <class S>
void mb_scale(MatBlock<S>& b, S alpha) {
  if (b.lr) b.lr->X *= alpha;
  if (b.dn) *b.dn *= alpha;
}

// Combine contributions on one (rows x cols) block into a single low-rank
// block, truncating once over the concatenation.
template <class S>
LowRankBlock<S> reduce_to_lowrank(Index rows, Index cols,
                                  std::vector<MatBlock<S>>& contribs,
                                  const LowRankBlock<S>* existing,
                                  const TruncationControl& ctl) {
  std::optional<MatrixX<S>> dense_sum;
  std::vector<const LowRankBlock<S>*> lrs;
  if (existing && existing->rank() > 0) lrs.push_back(existing);
  for (auto& c : contribs) {
    if (c.dn) {
      if (!dense_sum) dense_sum = MatrixX<S>::Zero(rows, cols);
      *dense_sum += *c.dn;
    } else if (c.lr && c.lr->rank() > 0) {
      lrs.push_back(&*c.lr);
    }
  }
  LowRankBlock<S> dense_part;
  if (dense_sum) {
    dense_part = truncate_block(*dense_sum, ctl);
    if (dense_part.rank() > 0) lrs.push_back(&dense_part);
  }
  Index total = 0;
  for (const auto* b : lrs) total += b->rank();
  LowRankBlock<S> concat;
  concat.X.resize(rows, total);
  concat.Y.resize(cols, total);
  Index at = 0;
  for (const auto* b : lrs) {
    concat.X.middleCols(at, b->rank()) = b->X;
    concat.Y.middleCols(at, b->rank()) = b->Y;
    at += b->rank();
  }
  return truncate_block(concat, ctl);
}

template <class S>
MatBlock<S> mul_views(const BlockView<S>& a, const BlockView<S>& b,
                      const TruncationControl& ctl);

// Product of two subdivided views agglomerated into one low-rank block.
template <class S>
LowRankBlock<S> mul_sub_sub(const BlockView<S>& a, const BlockView<S>& b,
                            const TruncationControl& ctl) {
  const Index rows = a.rows(), cols = b.cols();
  std::vector<MatBlock<S>> quadrants;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      std::vector<MatBlock<S>> contribs;
      for (int k = 0; k < 2; ++k)
        contribs.push_back(mul_views(a.child(i, k), b.child(k, j), ctl));
      const Index r0 = a.rnode().child[i], c0 = b.cnode().child[j];
      const Index nr = a.bt->rows->nodes[r0].size();
      const Index nc = b.bt->cols->nodes[c0].size();
      LowRankBlock<S> q = reduce_to_lowrank(nr, nc, contribs, nullptr, ctl);
      // lift into the parent block by zero padding
      LowRankBlock<S> lifted;
      lifted.X = MatrixX<S>::Zero(rows, q.rank());
      lifted.Y = MatrixX<S>::Zero(cols, q.rank());
      const Index roff = a.bt->rows->nodes[r0].begin - a.rnode().begin;
      const Index coff = b.bt->cols->nodes[c0].begin - b.cnode().begin;
      lifted.X.middleRows(roff, nr) = q.X;
      lifted.Y.middleRows(coff, nc) = q.Y;
      MatBlock<S> mb;
      mb.lr = std::move(lifted);
      quadrants.push_back(std::move(mb));
    }
  return reduce_to_lowrank(rows, cols, quadrants, nullptr, ctl);
}

template <class S>
MatBlock<S> mul_views(const BlockView<S>& a, const BlockView<S>& b,
                      const TruncationControl& ctl) {
  using Kind = typename BlockView<S>::Kind;
  const Kind ka = a.kind(), kb = b.kind();

  if (ka == Kind::LowRank) {
    const auto& lr = a.lr_ref();
    return mb_lowrank<S>(lr.X, view_apply_adjoint(b, lr.Y));
  }
  if (kb == Kind::LowRank) {
    const auto& lr = b.lr_ref();
    return mb_lowrank<S>(view_apply(a, lr.X), lr.Y);
  }
  if (ka == Kind::Dense && kb == Kind::Dense) {
    MatBlock<S> out;
    out.dn = MatrixX<S>(a.dn_ref() * b.dn_ref());
    return out;
  }
  if (ka == Kind::Dense) {  // b subdivided
    const auto& d = a.dn_ref();
    if (d.rows() <= d.cols()) {
      MatBlock<S> out;
      out.dn = MatrixX<S>(
          view_apply_adjoint(b, MatrixX<S>(d.adjoint())).adjoint());
      return out;
    }
    return mb_lowrank<S>(
        d, view_apply_adjoint(b, MatrixX<S>(MatrixX<S>::Identity(d.cols(), d.cols()))));
  }
  if (kb == Kind::Dense) {  // a subdivided
    const auto& d = b.dn_ref();
    if (d.cols() <= d.rows()) {
      MatBlock<S> out;
      out.dn = view_apply(a, d);
      return out;
    }
    return mb_lowrank<S>(
        view_apply(a, MatrixX<S>(MatrixX<S>::Identity(d.rows(), d.rows()))),
        MatrixX<S>(d.adjoint()));
  }
  MatBlock<S> out;
  out.lr = mul_sub_sub(a, b, ctl);
  return out;
}

// Recursive multiply-accumulate: C(node) += sum of va*vb products plus
// already-computed pending contributions. Structural (Sub x Sub) pairs
// descend with the target; everything else is evaluated where it appears
// and sliced down to the leaves, so each leaf truncates once over its sum.
template <class S>
void mul_acc_node(HMatrix<S>& c, int cnode,
                  std::vector<std::pair<BlockView<S>, BlockView<S>>> pairs,
                  std::vector<MatBlock<S>> pending, S alpha,
                  const TruncationControl& ctl) {
  using Kind = typename BlockView<S>::Kind;
  const auto& node = c.tree->nodes[cnode];

  if (node.kind != BlockKind::Subdivided) {
    auto& contribs = pending;
    for (auto& [va, vb] : pairs) {
      MatBlock<S> mb = mul_views(va, vb, ctl);
      mb_scale(mb, alpha);
      contribs.push_back(std::move(mb));
    }
    const auto& r = c.tree->rows->nodes[node.row];
    const auto& cc = c.tree->cols->nodes[node.col];
    if (node.kind == BlockKind::Dense) {
      for (auto& b : contribs) {
        if (b.dn) c.dn[cnode] += *b.dn;
        else if (b.lr && b.lr->rank() > 0)
          c.dn[cnode].noalias() += b.lr->X * b.lr->Y.adjoint();
      }
    } else {
      c.lr[cnode] =
          reduce_to_lowrank(r.size(), cc.size(), contribs, &c.lr[cnode], ctl);
    }
    return;
  }

  // Evaluate non-structural products at this level; they join `pending`.
  std::vector<std::pair<BlockView<S>, BlockView<S>>> structural;
  for (auto& [va, vb] : pairs) {
    if (va.kind() == Kind::Sub && vb.kind() == Kind::Sub) {
      structural.emplace_back(va, vb);
    } else {
      MatBlock<S> mb = mul_views(va, vb, ctl);
      mb_scale(mb, alpha);
      pending.push_back(std::move(mb));
    }
  }

  const auto& rn = c.tree->rows->nodes[node.row];
  const auto& cn = c.tree->cols->nodes[node.col];
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) {
      std::vector<std::pair<BlockView<S>, BlockView<S>>> child_pairs;
      for (auto& [va, vb] : structural)
        for (int k = 0; k < 2; ++k)
          child_pairs.emplace_back(va.child(i, k), vb.child(k, j));

      std::vector<MatBlock<S>> child_pending;
      const auto& cri = c.tree->rows->nodes[rn.child[i]];
      const auto& ccj = c.tree->cols->nodes[cn.child[j]];
      const Index r0 = cri.begin - rn.begin, c0 = ccj.begin - cn.begin;
      for (const auto& b : pending) {
        MatBlock<S> piece;
        if (b.dn) {
          piece.dn = b.dn->block(r0, c0, cri.size(), ccj.size());
        } else if (b.lr && b.lr->rank() > 0) {
          LowRankBlock<S> lr;
          lr.X = b.lr->X.middleRows(r0, cri.size());
          lr.Y = b.lr->Y.middleRows(c0, ccj.size());
          piece.lr = std::move(lr);
        } else {
          continue;
        }
        child_pending.push_back(std::move(piece));
      }
      mul_acc_node(c, node.child[i][j], std::move(child_pairs),
                   std::move(child_pending), alpha, ctl);
    }
}

}  // namespace detail

// C += alpha * A|a_node * B|b_node, all on the same block cluster tree.
template <class S>
void multiply_accumulate(HMatrix<S>& c, int c_node, const HMatrix<S>& a,
                         int a_node, const HMatrix<S>& b, int b_node, S alpha,
                         const TruncationControl& ctl) {
  using View = detail::BlockView<S>;
  std::vector<std::pair<View, View>> pairs = {
      {View::from_node(a, a_node), View::from_node(b, b_node)}};
  detail::mul_acc_node(c, c_node, std::move(pairs), {}, alpha, ctl);
}

// Formatted product on a shared block tree.
template <class S>
HMatrix<S> h_multiply(const HMatrix<S>& a, const HMatrix<S>& b,
                      const TruncationControl& ctl) {
  if (a.tree != b.tree) throw ConfigError("h_multiply: block trees differ");
  HMatrix<S> c = h_zero<S>(a.tree);
  multiply_accumulate(c, 0, a, 0, b, 0, S(1), ctl);
  return c;
}

// Power iteration estimate of the spectral norm of a linear operator given
// by apply/apply-adjoint callbacks. Deterministic for a fixed seed.
template <class S, class Apply, class ApplyAdj>
double operator_norm_estimate(Index rows, Index cols, Apply&& apply,
                              ApplyAdj&& apply_adjoint, int iters = 60,
                              std::uint64_t seed = 0x5eed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> dist(0.0, 1.0);
  VectorX<S> v(cols);
  for (Index i = 0; i < cols; ++i) {
    if constexpr (std::is_same_v<S, Complex>)
      v(i) = Complex(dist(gen), dist(gen));
    else
      v(i) = dist(gen);
  }
  if (v.norm() == 0.0) return 0.0;
  v /= v.norm();
  double sigma = 0.0;
  for (int it = 0; it < iters; ++it) {
    VectorX<S> w = apply(v);
    sigma = w.norm();
    if (sigma == 0.0) return 0.0;
    v = apply_adjoint(VectorX<S>(w / sigma));
    const double n = v.norm();
    if (n == 0.0) return 0.0;
    v /= n;
  }
  return sigma;
}

// Spectral-norm distance between an H-matrix and a reference operator.
template <class S, class RefApply, class RefApplyAdj>
double spectral_error_operator(const HMatrix<S>& h, RefApply&& ref,
                               RefApplyAdj&& ref_adj, int iters = 60) {
  auto apply = [&](const VectorX<S>& x) {
    return VectorX<S>(h_matvec(h, x) - ref(x));
  };
  auto apply_adj = [&](const VectorX<S>& x) {
    return VectorX<S>(h_matvec_adjoint(h, x) - ref_adj(x));
  };
  return operator_norm_estimate<S>(h.rows(), h.cols(), apply, apply_adj,
                                   iters);
}

template <class S>
double spectral_error(const HMatrix<S>& h, const MatrixX<S>& reference,
                      int iters = 60) {
  return spectral_error_operator(
      h, [&](const VectorX<S>& x) { return VectorX<S>(reference * x); },
      [&](const VectorX<S>& x) {
        return VectorX<S>(reference.adjoint() * x);
      },
      iters);
}

template <class S>
double spectral_error(const HMatrix<S>& h,
                      const Eigen::SparseMatrix<S>& reference, int iters = 60) {
  return spectral_error_operator(
      h, [&](const VectorX<S>& x) { return VectorX<S>(reference * x); },
      [&](const VectorX<S>& x) {
        return VectorX<S>(reference.adjoint() * x);
      },
      iters);
}

template <class S>
double h_norm2_estimate(const HMatrix<S>& h, int iters = 60) {
  return operator_norm_estimate<S>(
      h.rows(), h.cols(),
      [&](const VectorX<S>& x) { return h_matvec(h, x); },
      [&](const VectorX<S>& x) { return h_matvec_adjoint(h, x); }, iters);
}

namespace detail {

// Upper bounds for the 1- and inf-norms via per-leaf absolute sums; for a
// low-rank leaf |X Y^H| is bounded entrywise by |X| |Y|^T.
template <class S>
std::pair<double, double> h_norm1_inf_bounds(const HMatrix<S>& h) {
  VectorXd col_sums = VectorXd::Zero(h.cols());
  VectorXd row_sums = VectorXd::Zero(h.rows());
  for (std::size_t n = 0; n < h.tree->nodes.size(); ++n) {
    const auto& node = h.tree->nodes[n];
    if (node.kind == BlockKind::Subdivided) continue;
    const auto& r = h.tree->rows->nodes[node.row];
    const auto& c = h.tree->cols->nodes[node.col];
    if (node.kind == BlockKind::Dense) {
      const MatrixXd abs = h.dn[n].cwiseAbs();
      row_sums.segment(r.begin, r.size()) += abs.rowwise().sum();
      col_sums.segment(c.begin, c.size()) += abs.colwise().sum().transpose();
    } else if (h.lr[n].rank() > 0) {
      const MatrixXd ax = h.lr[n].X.cwiseAbs();
      const MatrixXd ay = h.lr[n].Y.cwiseAbs();
      row_sums.segment(r.begin, r.size()) +=
          ax * ay.colwise().sum().transpose();
      col_sums.segment(c.begin, c.size()) +=
          ay * ax.colwise().sum().transpose();
    }
  }
  return {col_sums.maxCoeff(), row_sums.maxCoeff()};
}

}  // namespace detail

struct SchulzOptions {
  int max_sweeps = 100;
  double stop_tol = 1e-10;
  bool throw_on_divergence = true;
  int norm_iters = 40;
};

struct SchulzReport {
  int sweeps = 0;
  double residual = 0.0;  // estimated ||I - A X||_2 of the returned iterate
  bool converged = false;
  std::vector<double> history;
};

// Newton-Schulz iteration X <- X (2I - A X) in formatted arithmetic,
// started from X0 = A^H / (||A||_1 ||A||_inf). Returns the iterate with the
// smallest estimated residual ||I - A X||_2.
template <class S>
HMatrix<S> schulz_inverse(const HMatrix<S>& a, const TruncationControl& ctl,
                          const SchulzOptions& opt = {},
                          SchulzReport* report = nullptr) {
  if (a.rows() != a.cols())
    throw ConfigError("schulz_inverse: matrix not square");
  const auto [norm1, norminf] = detail::h_norm1_inf_bounds(a);
  if (norm1 == 0.0 || norminf == 0.0)
    throw NumericalError("schulz_inverse: zero matrix");

  HMatrix<S> x = h_adjoint(a);
  h_scale(x, S(1.0 / (norm1 * norminf)));

  auto residual_norm = [&](const HMatrix<S>& xk) {
    auto apply = [&](const VectorX<S>& v) {
      return VectorX<S>(v - h_matvec(a, VectorX<S>(h_matvec(xk, v))));
    };
    auto apply_adj = [&](const VectorX<S>& v) {
      return VectorX<S>(
          v - h_matvec_adjoint(xk, VectorX<S>(h_matvec_adjoint(a, v))));
    };
    return operator_norm_estimate<S>(a.rows(), a.cols(), apply, apply_adj,
                                     opt.norm_iters);
  };

  HMatrix<S> best = x;
  double best_res = residual_norm(x);
  double prev = best_res;
  int growth_streak = 0;
  SchulzReport rep;
  rep.history.push_back(best_res);

  for (int sweep = 0; sweep < opt.max_sweeps; ++sweep) {
    if (best_res <= opt.stop_tol) break;
    HMatrix<S> t = h_multiply(a, x, ctl);  // A X
    h_scale(t, S(-1));
    add_scaled_identity(t, S(2));          // 2I - A X
    x = h_multiply(x, t, ctl);
    ++rep.sweeps;

    const double res = residual_norm(x);
    rep.history.push_back(res);
    if (res < best_res) {
      best_res = res;
      best = x;
    }
    growth_streak = res > prev ? growth_streak + 1 : 0;
    if (growth_streak >= 3 && res > 1.0) {
      if (opt.throw_on_divergence)
        throw NumericalError(
            "schulz_inverse: residual grew for 3 consecutive sweeps "
            "(matrix singular or scaling failed)");
      break;
    }
    prev = res;
  }

  rep.residual = best_res;
  rep.converged = best_res <= opt.stop_tol;
  if (report) *report = rep;
  return best;
}

}  // namespace hmx

#endif  // HMX_HMATRIX_HPP
