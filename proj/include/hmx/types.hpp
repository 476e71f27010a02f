// SPDX-License-Identifier: Apache-2.0

#ifndef HMX_TYPES_HPP
#define HMX_TYPES_HPP

#include <complex>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>
#include <Eigen/Sparse>

namespace hmx {

using Index = Eigen::Index;
using Complex = std::complex<double>;

using Vector3 = Eigen::Vector3d;
using VectorXd = Eigen::VectorXd;
using VectorXc = Eigen::VectorXcd;
using MatrixXd = Eigen::MatrixXd;
using MatrixXc = Eigen::MatrixXcd;
using SparseXc = Eigen::SparseMatrix<Complex>;

template <class Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

// Configuration / input problems (bad flags, malformed files, broken meshes).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failures (singular matrices, factorization breakdown, divergence).
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace hmx

#endif  // HMX_TYPES_HPP
