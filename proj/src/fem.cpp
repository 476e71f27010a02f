// SPDX-License-Identifier: Apache-2.0

#include "hmx/fem.hpp"

#include <Eigen/LU>

#include <cmath>
#include <sstream>

namespace hmx {

namespace {

constexpr int kLocalEdges[6][2] = {{0, 1}, {0, 2}, {0, 3},
                                   {1, 2}, {1, 3}, {2, 3}};

struct TetGeometry {
  std::array<Vector3, 4> grad;  // barycentric gradients
  double volume;
};

TetGeometry tet_geometry(const std::array<Vector3, 4>& v) {
  Eigen::Matrix3d edge_mat;
  edge_mat.col(0) = v[1] - v[0];
  edge_mat.col(1) = v[2] - v[0];
  edge_mat.col(2) = v[3] - v[0];
  const double det = edge_mat.determinant();
  const double volume = std::abs(det) / 6.0;

  double diam = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j) diam = std::max(diam, (v[i] - v[j]).norm());
  if (volume < 1e-14 * diam * diam * diam)
    throw ConfigError("local_matrices: degenerate tet");

  TetGeometry geo;
  geo.volume = volume;
  const Eigen::Matrix3d inv = edge_mat.inverse();
  for (int i = 0; i < 3; ++i) geo.grad[i + 1] = inv.row(i).transpose();
  geo.grad[0] = -(geo.grad[1] + geo.grad[2] + geo.grad[3]);
  return geo;
}

}  // namespace

MaterialParams MaterialParams::from_kappa(Complex kappa,
                                          std::vector<double> beta) {
  MaterialParams mat;
  mat.kappa = kappa;
  mat.beta = std::move(beta);
  mat.validate();
  return mat;
}

MaterialParams MaterialParams::from_frequency(double omega, double alpha,
                                              double chi,
                                              std::vector<double> beta) {
  MaterialParams mat;
  mat.kappa = Complex(omega * omega * alpha, omega * chi);
  mat.beta = std::move(beta);
  mat.frequency_form = {omega, alpha, chi};
  mat.validate();
  return mat;
}

double MaterialParams::beta_for(int region) const {
  if (beta.size() == 1) return beta[0];
  if (region < 0 || region >= static_cast<int>(beta.size()))
    throw ConfigError("MaterialParams: no beta for region tag");
  return beta[region];
}

void MaterialParams::validate() const {
  if (kappa == Complex(0.0, 0.0))
    throw ConfigError("MaterialParams: kappa must be nonzero");
  if (beta.empty()) throw ConfigError("MaterialParams: beta is empty");
  for (double b : beta)
    if (!(b > 0.0)) throw ConfigError("MaterialParams: beta must be positive");
}

LocalMatrices local_matrices(const std::array<Vector3, 4>& verts) {
  const TetGeometry geo = tet_geometry(verts);

  // Whitney edge function for local edge (a,b): lambda_a grad(lambda_b) -
  // lambda_b grad(lambda_a); its curl is the constant 2 grad(lambda_a) x
  // grad(lambda_b).
  std::array<Vector3, 6> curls;
  for (int e = 0; e < 6; ++e)
    curls[e] =
        2.0 * geo.grad[kLocalEdges[e][0]].cross(geo.grad[kLocalEdges[e][1]]);

  Eigen::Matrix4d g;  // Gram matrix of barycentric gradients
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) g(i, j) = geo.grad[i].dot(geo.grad[j]);

  LocalMatrices local;
  for (int e = 0; e < 6; ++e) {
    for (int f = e; f < 6; ++f) {
      const int a = kLocalEdges[e][0], b = kLocalEdges[e][1];
      const int c = kLocalEdges[f][0], d = kLocalEdges[f][1];
      const double cc = geo.volume * curls[e].dot(curls[f]);
      // Exact: integral of lambda_i lambda_j = vol*(1+delta_ij)/20.
      const double m =
          geo.volume / 20.0 *
          ((1.0 + (a == c)) * g(b, d) - (1.0 + (a == d)) * g(b, c) -
           (1.0 + (b == c)) * g(a, d) + (1.0 + (b == d)) * g(a, c));
      local.curl_curl(e, f) = cc;
      local.curl_curl(f, e) = cc;
      local.mass(e, f) = m;
      local.mass(f, e) = m;
    }
  }
  return local;
}

Eigen::Matrix<double, 6, 1> local_load(const std::array<Vector3, 4>& verts,
                                       const Vector3& j_source) {
  const TetGeometry geo = tet_geometry(verts);
  Eigen::Matrix<double, 6, 1> load;
  // integral of lambda_i over the tet = vol/4
  for (int e = 0; e < 6; ++e)
    load(e) = geo.volume / 4.0 *
              j_source.dot(geo.grad[kLocalEdges[e][1]] -
                           geo.grad[kLocalEdges[e][0]]);
  return load;
}

SparseSystem assemble(const TetMesh& mesh, const EdgeNumbering& edges,
                      const MaterialParams& mat,
                      const std::vector<Vector3>& source, BcMode bc_mode) {
  mat.validate();
  if (source.empty()) throw ConfigError("assemble: no source given");
  auto source_for = [&](int region) -> const Vector3& {
    if (source.size() == 1) return source[0];
    if (region < 0 || region >= static_cast<int>(source.size()))
      throw ConfigError("assemble: no source for region tag");
    return source[region];
  };

  const int n_edges = edges.num_edges();
  std::vector<int> active_of(n_edges, -1);
  SparseSystem sys;
  sys.bc_mode = bc_mode;
  for (int e = 0; e < n_edges; ++e) {
    if (bc_mode == BcMode::KeepAll || !edges.boundary_mask[e]) {
      active_of[e] = static_cast<int>(sys.dof_map.size());
      sys.dof_map.push_back(e);
    }
  }
  sys.dim = static_cast<Index>(sys.dof_map.size());
  if (sys.dim == 0) throw ConfigError("assemble: empty active DOF set");

  std::vector<Eigen::Triplet<Complex>> triplets;
  triplets.reserve(36 * mesh.tets.size());
  VectorXc rhs = VectorXc::Zero(sys.dim);

  for (int t = 0; t < mesh.num_tets(); ++t) {
    const auto& tet = mesh.tets[t];
    const std::array<Vector3, 4> verts = {
        mesh.vertices[tet[0]], mesh.vertices[tet[1]], mesh.vertices[tet[2]],
        mesh.vertices[tet[3]]};
    const LocalMatrices local = local_matrices(verts);
    const auto load = local_load(verts, source_for(mesh.region[t]));
    const double inv_beta = 1.0 / mat.beta_for(mesh.region[t]);

    const auto& map = edges.tet_edge_map[t];
    for (int e = 0; e < 6; ++e) {
      const auto [ge, se] = map[e];
      const int ae = active_of[ge];
      if (ae < 0) continue;
      rhs(ae) += static_cast<double>(se) * load(e);
      for (int f = 0; f < 6; ++f) {
        const auto [gf, sf] = map[f];
        const int af = active_of[gf];
        if (af < 0) continue;
        const Complex value =
            static_cast<double>(se * sf) *
            (inv_beta * local.curl_curl(e, f) - mat.kappa * local.mass(e, f));
        triplets.emplace_back(ae, af, value);
      }
    }
  }

  sys.matrix.resize(sys.dim, sys.dim);
  sys.matrix.setFromTriplets(triplets.begin(), triplets.end());
  sys.matrix.makeCompressed();
  sys.rhs = std::move(rhs);
  return sys;
}

VectorXc matvec(const SparseSystem& sys, const VectorXc& x) {
  if (x.size() != sys.dim) throw ConfigError("matvec: dimension mismatch");
  return sys.matrix * x;
}

VectorXc dense_solve(const SparseSystem& sys, Index cap) {
  if (sys.dim > cap) {
    std::ostringstream os;
    os << "dense_solve: dim " << sys.dim << " exceeds cap " << cap;
    throw ConfigError(os.str());
  }
  const MatrixXc dense(sys.matrix);
  Eigen::PartialPivLU<MatrixXc> lu(dense);
  const VectorXd diag = lu.matrixLU().diagonal().cwiseAbs();
  if (diag.minCoeff() < 1e-12 * diag.maxCoeff())
    throw NumericalError(
        "dense_solve: matrix numerically singular (kappa at/near an "
        "eigenvalue?)");
  return lu.solve(sys.rhs);
}

}  // namespace hmx
