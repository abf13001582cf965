#pragma once

#include <Eigen/Eigenvalues>

namespace fragility {

// Every spectral computation in the library goes through these two helpers
// (Householder tridiagonalisation followed by implicit symmetric QR).

template <typename Derived>
Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, 1> symmetric_eigenvalues(const Eigen::MatrixBase<Derived>& m) {
  using Plain = Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  Eigen::SelfAdjointEigenSolver<Plain> es(Plain(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues();  // ascending
}

template <typename Derived>
auto symmetric_eigen(const Eigen::MatrixBase<Derived>& m) {
  using Plain = Eigen::Matrix<typename Derived::Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  return Eigen::SelfAdjointEigenSolver<Plain>(Plain(m), Eigen::ComputeEigenvectors);
}

}  // namespace fragility
