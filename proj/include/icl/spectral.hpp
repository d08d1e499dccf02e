#pragma once

// Token covariance held in spectral form: eigenbasis Q plus sorted
// eigenvalues. Covariances are constructed this way, never decomposed from a
// dense matrix; every closed form downstream is stated in the eigenbasis.

#include <algorithm>

#include "icl/linalg.hpp"

namespace icl {

class SpectralCovariance {
 public:
  SpectralCovariance(Matrix eigenbasis, Vector eigenvalues)
      : Q_(std::move(eigenbasis)), eigs_(std::move(eigenvalues)) {
    require(Q_.rows() == Q_.cols(), "SpectralCovariance: Q must be square");
    require(Q_.rows() == eigs_.size(), "SpectralCovariance: dim mismatch");
    require(orthonormality_error(Q_) <= 1e-10, "SpectralCovariance: Q not orthonormal");
    for (Eigen::Index i = 0; i < eigs_.size(); ++i) {
      require(eigs_[i] >= 0.0, "SpectralCovariance: negative eigenvalue");
      if (i > 0) require(eigs_[i] <= eigs_[i - 1], "SpectralCovariance: eigenvalues not sorted");
    }
  }

  static SpectralCovariance diagonal(Vector eigenvalues) {
    const Eigen::Index d = eigenvalues.size();
    return SpectralCovariance(Matrix::Identity(d, d), std::move(eigenvalues));
  }

  static SpectralCovariance random_basis(RngStream& rng, Vector eigenvalues) {
    const Eigen::Index d = eigenvalues.size();
    return SpectralCovariance(random_orthonormal(rng, d), std::move(eigenvalues));
  }

  Eigen::Index dim() const { return eigs_.size(); }
  const Matrix& basis() const { return Q_; }
  const Vector& eigenvalues() const { return eigs_; }
  double trace() const { return eigs_.sum(); }
  Matrix materialize() const { return Q_ * eigs_.asDiagonal() * Q_.transpose(); }

  // Sample x ~ N(0, Lambda).
  Vector sample(RngStream& rng) const {
    Vector z = gauss_vector(rng, dim());
    for (Eigen::Index i = 0; i < dim(); ++i) z[i] *= std::sqrt(eigs_[i]);
    return Q_ * z;
  }

 private:
  Matrix Q_;
  Vector eigs_;
};

}  // namespace icl
