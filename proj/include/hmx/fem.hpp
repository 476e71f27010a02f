// SPDX-License-Identifier: Apache-2.0
//
// Lowest-order Nedelec (first kind) edge elements on tets: local curl-curl
// and mass matrices, global assembly of A = K_beta - kappa*M and the load
// vector, plus small dense utilities used as test oracles.

#ifndef HMX_FEM_HPP
#define HMX_FEM_HPP

#include <array>
#include <optional>
#include <vector>

#include "hmx/mesh.hpp"
#include "hmx/types.hpp"

namespace hmx {

struct MaterialParams {
  Complex kappa{0.0, 0.0};
  // Per-region magnetic parameter; a single entry applies to all regions.
  std::vector<double> beta{1.0};
  // Set when the parameters came from (omega, alpha, chi).
  std::optional<std::array<double, 3>> frequency_form;

  static MaterialParams from_kappa(Complex kappa,
                                   std::vector<double> beta = {1.0});
  // kappa = omega^2 * (alpha + i*chi/omega) = omega^2*alpha + i*omega*chi
  static MaterialParams from_frequency(double omega, double alpha, double chi,
                                       std::vector<double> beta = {1.0});

  double beta_for(int region) const;
  void validate() const;
};

enum class BcMode { EliminateBoundary, KeepAll };

struct SparseSystem {
  Index dim = 0;
  SparseXc matrix;
  VectorXc rhs;
  std::vector<int> dof_map;  // active index -> global edge index
  BcMode bc_mode = BcMode::EliminateBoundary;
};

struct LocalMatrices {
  Eigen::Matrix<double, 6, 6> curl_curl;
  Eigen::Matrix<double, 6, 6> mass;
};

// Exact integrals of the 6 Whitney edge functions on one tet. Local edge
// order (0,1),(0,2),(0,3),(1,2),(1,3),(2,3) over the given vertex order.
LocalMatrices local_matrices(const std::array<Vector3, 4>& verts);

// Exact load integrals: entry e is the integral of J . Phi_e over the tet.
Eigen::Matrix<double, 6, 1> local_load(const std::array<Vector3, 4>& verts,
                                       const Vector3& j_source);

// Constant source per region; a single entry applies everywhere.
SparseSystem assemble(const TetMesh& mesh, const EdgeNumbering& edges,
                      const MaterialParams& mat,
                      const std::vector<Vector3>& source, BcMode bc_mode);

VectorXc matvec(const SparseSystem& sys, const VectorXc& x);

// Dense pivoted solve, intended as an oracle on small systems.
VectorXc dense_solve(const SparseSystem& sys, Index cap = 5000);

}  // namespace hmx

#endif  // HMX_FEM_HPP
