#pragma once

// Small dense linear algebra on top of Eigen: induced norms, Gram-Schmidt
// projections that tolerate rank-deficient column sets, and Haar-like random
// orthonormal matrices. All dimension mismatches throw, nothing broadcasts.

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>

#include "icl/rng.hpp"

namespace icl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline Vector gauss_vector(RngStream& rng, Eigen::Index n) {
  require(n >= 1, "gauss_vector: n must be >= 1");
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.next_gauss();
  return v;
}

inline Vector rademacher_vector(RngStream& rng, Eigen::Index n) {
  require(n >= 1, "rademacher_vector: n must be >= 1");
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.next_sign();
  return v;
}

inline Matrix gauss_matrix(RngStream& rng, Eigen::Index rows, Eigen::Index cols) {
  require(rows >= 1 && cols >= 1, "gauss_matrix: empty shape");
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.next_gauss();
  return m;
}

// x^T A x for symmetric A.
inline double induced_norm_sq(const Vector& x, const Matrix& A) {
  require(A.rows() == A.cols(), "induced_norm_sq: A must be square");
  require(A.rows() == x.size(), "induced_norm_sq: dimension mismatch");
  require((A - A.transpose()).cwiseAbs().maxCoeff() <= 1e-10,
          "induced_norm_sq: A must be symmetric");
  return x.dot(A * x);
}

// Orthonormal basis of the column space of Z via modified Gram-Schmidt.
// Columns whose residual drops below tol_factor * (largest column norm) are
// discarded; that handles exact duplicates and negated duplicates.
inline Matrix orthonormal_basis(const Matrix& Z, double tol_factor = 1e-9) {
  require(Z.rows() >= 1, "orthonormal_basis: Z has zero rows");
  double max_norm = 0.0;
  for (Eigen::Index j = 0; j < Z.cols(); ++j) max_norm = std::max(max_norm, Z.col(j).norm());
  const double drop = tol_factor * max_norm;
  Matrix basis(Z.rows(), Z.cols());
  Eigen::Index rank = 0;
  for (Eigen::Index j = 0; j < Z.cols(); ++j) {
    Vector v = Z.col(j);
    for (int pass = 0; pass < 2; ++pass)  // twice for numerical orthogonality
      for (Eigen::Index k = 0; k < rank; ++k) v -= basis.col(k).dot(v) * basis.col(k);
    const double nv = v.norm();
    if (nv > drop && nv > 0.0) basis.col(rank++) = v / nv;
  }
  return basis.leftCols(rank);
}

inline Eigen::Index numerical_rank(const Matrix& M, double tol_factor = 1e-8) {
  return orthonormal_basis(M, tol_factor).cols();
}

// Orthogonal projection of v onto the column space of Z.
inline Vector project_columnspace(const Matrix& Z, const Vector& v) {
  require(Z.rows() >= 1, "project_columnspace: Z has zero rows");
  require(Z.rows() == v.size(), "project_columnspace: dimension mismatch");
  const Matrix basis = orthonormal_basis(Z);
  return basis * (basis.transpose() * v);
}

// Haar-like random orthonormal matrix: QR of a Gaussian matrix with the
// diagonal of R forced positive.
inline Matrix random_orthonormal(RngStream& rng, Eigen::Index d) {
  require(d >= 1, "random_orthonormal: d must be >= 1");
  const Matrix G = gauss_matrix(rng, d, d);
  Eigen::HouseholderQR<Matrix> qr(G);
  Matrix Q = qr.householderQ();
  const Matrix R = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < d; ++j)
    if (R(j, j) < 0.0) Q.col(j) = -Q.col(j);
  return Q;
}

inline double orthonormality_error(const Matrix& Q) {
  return (Q.transpose() * Q - Matrix::Identity(Q.cols(), Q.cols())).norm();
}

}  // namespace icl
