// SPDX-License-Identifier: Apache-2.0
//
// Test-only oracles, independent of the library's computational paths:
// a degree-5 conical-product quadrature on the tetrahedron, pointwise
// Whitney edge-function evaluation, and finite-difference curls.

#ifndef HMX_TESTS_ORACLES_HPP
#define HMX_TESTS_ORACLES_HPP

#include <array>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "hmx/types.hpp"

namespace hmx::oracle {

struct Quadrature {
  std::vector<Vector3> points;   // on the reference simplex
  std::vector<double> weights;   // sum = 1/6
};

// Gauss nodes/weights for weight (1-x)^alpha on [0,1] via Golub-Welsch.
inline void gauss_jacobi01(int n, double alpha, std::vector<double>& x,
                           std::vector<double>& w) {
  // Three-term recurrence of Jacobi(alpha, 0) polynomials on [-1, 1].
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
  const double a = alpha, b = 0.0;
  auto diag = [&](int k) {
    if (k == 0) return (b - a) / (a + b + 2.0);
    const double s = 2.0 * k + a + b;
    return (b * b - a * a) / (s * (s + 2.0));
  };
  auto offdiag_sq = [&](int k) {  // beta_k, k >= 1
    if (k == 1)
      return 4.0 * (1.0 + a) * (1.0 + b) /
             ((2.0 + a + b) * (2.0 + a + b) * (3.0 + a + b));
    const double s = 2.0 * k + a + b;
    return 4.0 * k * (k + a) * (k + b) * (k + a + b) /
           (s * s * (s + 1.0) * (s - 1.0));
  };
  for (int k = 0; k < n; ++k) jac(k, k) = diag(k);
  for (int k = 1; k < n; ++k) {
    const double off = std::sqrt(offdiag_sq(k));
    jac(k, k - 1) = off;
    jac(k - 1, k) = off;
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jac);
  // mu0 = integral of (1-t)^a over [-1,1] = 2^(a+1)/(a+1)
  const double mu0 = std::pow(2.0, a + 1.0) / (a + 1.0);
  x.resize(n);
  w.resize(n);
  for (int i = 0; i < n; ++i) {
    const double t = es.eigenvalues()(i);
    x[i] = 0.5 * (1.0 + t);                       // map [-1,1] -> [0,1]
    const double wt = mu0 * es.eigenvectors()(0, i) * es.eigenvectors()(0, i);
    w[i] = wt * std::pow(2.0, -a - 1.0);          // absorb (1-x)^a rescale
  }
}

// Degree-5 conical product rule on the reference tetrahedron
// {x,y,z >= 0, x+y+z <= 1}: 27 points.
inline Quadrature tet_quadrature_deg5() {
  std::vector<double> x1, w1, x2, w2, x3, w3;
  gauss_jacobi01(3, 2.0, x1, w1);
  gauss_jacobi01(3, 1.0, x2, w2);
  gauss_jacobi01(3, 0.0, x3, w3);
  Quadrature q;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      for (int k = 0; k < 3; ++k) {
        const double u = x1[i], v = x2[j], t = x3[k];
        q.points.emplace_back(u, v * (1.0 - u), t * (1.0 - u) * (1.0 - v));
        q.weights.push_back(w1[i] * w2[j] * w3[k]);
      }
  return q;
}

// Barycentric coordinates and their gradients from the 4x4 vertex system.
struct Barycentric {
  Eigen::Matrix4d inv;  // rows: lambda_i as affine coefficients (c, gx, gy, gz)

  explicit Barycentric(const std::array<Vector3, 4>& v) {
    Eigen::Matrix4d m;
    for (int i = 0; i < 4; ++i) {
      m(0, i) = 1.0;
      m.block<3, 1>(1, i) = v[i];
    }
    inv = m.fullPivLu().inverse();
  }
  double lambda(int i, const Vector3& x) const {
    return inv(i, 0) + inv.row(i).tail<3>().dot(x.transpose());
  }
  Vector3 grad(int i) const { return inv.row(i).tail<3>().transpose(); }
};

inline Vector3 whitney(const Barycentric& bc, int a, int b, const Vector3& x) {
  return bc.lambda(a, x) * bc.grad(b) - bc.lambda(b, x) * bc.grad(a);
}

// Central-difference curl; exact (to rounding) for affine fields.
template <class Field>
Vector3 fd_curl(const Field& f, const Vector3& x, double h) {
  auto d = [&](int j) {
    Vector3 e = Vector3::Zero();
    e(j) = h;
    return ((f(x + e) - f(x - e)) / (2.0 * h)).eval();
  };
  const Vector3 dx = d(0), dy = d(1), dz = d(2);
  return Vector3(dy.z() - dz.y(), dz.x() - dx.z(), dx.y() - dy.x());
}

struct OracleLocal {
  Eigen::Matrix<double, 6, 6> curl_curl;
  Eigen::Matrix<double, 6, 6> mass;
  Eigen::Matrix<double, 6, 1> load;
};

inline OracleLocal local_matrices_quadrature(const std::array<Vector3, 4>& v,
                                             const Vector3& j_source) {
  static constexpr int edges[6][2] = {{0, 1}, {0, 2}, {0, 3},
                                      {1, 2}, {1, 3}, {2, 3}};
  const Quadrature q = tet_quadrature_deg5();
  const Barycentric bc(v);
  Eigen::Matrix3d map;
  map.col(0) = v[1] - v[0];
  map.col(1) = v[2] - v[0];
  map.col(2) = v[3] - v[0];
  const double jac = std::abs(map.determinant());
  double diam = 0.0;
  for (int i = 0; i < 4; ++i)
    for (int j = i + 1; j < 4; ++j)
      diam = std::max(diam, (v[i] - v[j]).norm());

  std::array<Vector3, 6> curls;
  const Vector3 centroid = 0.25 * (v[0] + v[1] + v[2] + v[3]);
  for (int e = 0; e < 6; ++e)
    curls[e] = fd_curl(
        [&](const Vector3& x) { return whitney(bc, edges[e][0], edges[e][1], x); },
        centroid, 0.25 * diam);

  OracleLocal out;
  out.curl_curl.setZero();
  out.mass.setZero();
  out.load.setZero();
  for (std::size_t p = 0; p < q.points.size(); ++p) {
    const Vector3 x = v[0] + map * q.points[p];
    const double w = q.weights[p] * jac;
    std::array<Vector3, 6> phi;
    for (int e = 0; e < 6; ++e) phi[e] = whitney(bc, edges[e][0], edges[e][1], x);
    for (int e = 0; e < 6; ++e) {
      out.load(e) += w * j_source.dot(phi[e]);
      for (int f = 0; f < 6; ++f) {
        out.mass(e, f) += w * phi[e].dot(phi[f]);
        out.curl_curl(e, f) += w * curls[e].dot(curls[f]);
      }
    }
  }
  return out;
}

inline std::mt19937_64 rng(std::uint64_t seed) { return std::mt19937_64(seed); }

inline MatrixXc random_complex_matrix(Index rows, Index cols,
                                      std::mt19937_64& gen) {
  std::normal_distribution<double> dist(0.0, 1.0);
  MatrixXc m(rows, cols);
  for (Index j = 0; j < cols; ++j)
    for (Index i = 0; i < rows; ++i) m(i, j) = Complex(dist(gen), dist(gen));
  return m;
}

inline VectorXc random_complex_vector(Index n, std::mt19937_64& gen) {
  std::normal_distribution<double> dist(0.0, 1.0);
  VectorXc v(n);
  for (Index i = 0; i < n; ++i) v(i) = Complex(dist(gen), dist(gen));
  return v;
}

}  // namespace hmx::oracle

#endif  // HMX_TESTS_ORACLES_HPP
