#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "icl/linalg.hpp"
#include "icl/mc.hpp"
#include "icl/rng.hpp"
#include "icl/spectral.hpp"

using namespace icl;

TEST_CASE("rng: same (seed, path) reproduces the same draws") {
  RngStream a = make_rng(42).split("x").split("y");
  RngStream b = make_rng(42).split("x").split("y");
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
}

TEST_CASE("rng: split is pure and does not disturb the parent") {
  RngStream parent = make_rng(7);
  RngStream before = parent;
  (void)parent.split("child");
  for (int i = 0; i < 10; ++i) CHECK(parent.next_u64() == before.next_u64());

  // Drawing from one child does not change a sibling.
  RngStream base = make_rng(7);
  RngStream c1 = base.split("a");
  RngStream c2 = base.split("b");
  RngStream c2_copy = base.split("b");
  for (int i = 0; i < 50; ++i) (void)c1.next_u64();
  for (int i = 0; i < 10; ++i) CHECK(c2.next_u64() == c2_copy.next_u64());
}

TEST_CASE("rng: distinct labels and seeds give distinct streams") {
  RngStream base = make_rng(0);
  RngStream a = base.split("a");
  RngStream b = base.split("b");
  CHECK(a.next_u64() != b.next_u64());
  RngStream s0 = make_rng(0);
  RngStream s1 = make_rng(1);
  CHECK(s0.next_u64() != s1.next_u64());
}

TEST_CASE("rng: uniform stays inside the open unit interval") {
  RngStream rng = make_rng(3);
  double lo = 1.0, hi = 0.0, sum = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.next_uniform();
    CHECK(u > 0.0);
    CHECK(u < 1.0);
    lo = std::min(lo, u);
    hi = std::max(hi, u);
    sum += u;
  }
  CHECK(std::fabs(sum / n - 0.5) < 0.002);
  CHECK(lo < 0.001);
  CHECK(hi > 0.999);
}

TEST_CASE("rng: gaussian moments") {
  RngStream rng = make_rng(11);
  const int n = 200000;
  double m1 = 0, m2 = 0, m3 = 0, m4 = 0;
  for (int i = 0; i < n; ++i) {
    const double g = rng.next_gauss();
    m1 += g;
    m2 += g * g;
    m3 += g * g * g;
    m4 += g * g * g * g;
  }
  CHECK(std::fabs(m1 / n) < 0.01);
  CHECK(std::fabs(m2 / n - 1.0) < 0.02);
  CHECK(std::fabs(m3 / n) < 0.05);
  CHECK(std::fabs(m4 / n - 3.0) < 0.1);
}

TEST_CASE("rng: inverse normal CDF hits known quantiles") {
  CHECK(detail::inverse_normal_cdf(0.5) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(detail::inverse_normal_cdf(0.975) == doctest::Approx(1.959963985).epsilon(1e-8));
  CHECK(detail::inverse_normal_cdf(0.025) == doctest::Approx(-1.959963985).epsilon(1e-8));
  CHECK(detail::inverse_normal_cdf(1e-10) == doctest::Approx(-6.361340902).epsilon(1e-6));
  CHECK_THROWS_AS((void)detail::inverse_normal_cdf(0.0), std::invalid_argument);
  CHECK_THROWS_AS((void)detail::inverse_normal_cdf(1.0), std::invalid_argument);
}

TEST_CASE("rng: signs are balanced") {
  RngStream rng = make_rng(5);
  long pos = 0;
  const long n = 100000;
  for (long i = 0; i < n; ++i) {
    const double s = rng.next_sign();
    CHECK((s == 1.0 || s == -1.0));
    if (s > 0) ++pos;
  }
  CHECK(std::fabs(pos / double(n) - 0.5) < 0.005);
}

TEST_CASE("mc_mean: identical result at 1, 2, 7 threads") {
  auto run = [&](int threads) {
    RngStream base = make_rng(9).split("mc");
    return mc_mean(base, 20001, [](RngStream& r) { return r.next_gauss(); }, threads);
  };
  const MeanStderr a = run(1), b = run(2), c = run(7);
  CHECK(a.mean == b.mean);
  CHECK(a.mean == c.mean);
  CHECK(a.stderr_ == b.stderr_);
  CHECK(a.n == 20001);
  CHECK(std::fabs(a.mean) < 3.0 * a.stderr_ + 1e-12);
}

TEST_CASE("mc_mean: constant sampler has zero stderr") {
  const MeanStderr m = mc_mean(make_rng(1), 5000, [](RngStream&) { return 2.5; }, 2);
  CHECK(m.mean == 2.5);
  CHECK(m.stderr_ == 0.0);
  CHECK_THROWS_AS((void)mc_mean(make_rng(1), 0, [](RngStream&) { return 0.0; }),
                  std::invalid_argument);
}

TEST_CASE("gauss/rademacher vectors: moments and support") {
  RngStream rng = make_rng(21);
  double sum = 0, sum2 = 0;
  for (int t = 0; t < 2000; ++t) {
    const Vector v = gauss_vector(rng, 16);
    sum += v.sum();
    sum2 += v.squaredNorm();
  }
  CHECK(std::fabs(sum / (2000.0 * 16)) < 0.02);  // ~3.5 sigma at 32000 draws
  CHECK(std::fabs(sum2 / (2000.0 * 16) - 1.0) < 0.03);
  const Vector r = rademacher_vector(rng, 64);
  for (int i = 0; i < 64; ++i) CHECK(std::fabs(r[i]) == 1.0);
}

TEST_CASE("induced_norm_sq: values and input validation") {
  Matrix A(2, 2);
  A << 2, 0, 0, 1;
  Vector x(2);
  x << 3, 4;
  CHECK(induced_norm_sq(x, A) == doctest::Approx(2 * 9 + 16));
  Matrix bad(2, 2);
  bad << 0, 1, 0, 0;
  CHECK_THROWS_AS((void)induced_norm_sq(x, bad), std::invalid_argument);
  CHECK_THROWS_AS((void)induced_norm_sq(Vector::Ones(3), A), std::invalid_argument);
}

TEST_CASE("random_orthonormal: orthonormal and seed-deterministic") {
  RngStream rng = make_rng(17);
  const Matrix Q = random_orthonormal(rng, 6);
  CHECK(orthonormality_error(Q) < 1e-12);
  RngStream rng2 = make_rng(17);
  const Matrix Q2 = random_orthonormal(rng2, 6);
  CHECK((Q - Q2).norm() == 0.0);
  // Column distribution is not axis-pinned: off-diagonal mass exists.
  CHECK(Q.cwiseAbs().maxCoeff() < 1.0);
}

TEST_CASE("orthonormal_basis: projection identities") {
  RngStream rng = make_rng(19);
  const Matrix Z = gauss_matrix(rng, 8, 3);
  const Matrix B = orthonormal_basis(Z);
  CHECK(B.cols() == 3);
  CHECK(orthonormality_error(B) < 1e-10);
  const Vector v = gauss_vector(rng, 8);
  const Vector p = project_columnspace(Z, v);
  // Idempotence and orthogonality of the residual.
  CHECK((project_columnspace(Z, p) - p).norm() < 1e-10);
  CHECK(std::fabs((v - p).dot(p)) < 1e-10);
  for (int c = 0; c < 3; ++c) CHECK(std::fabs((v - p).dot(Z.col(c))) < 1e-9);
  // Projection of something already in the span is the identity.
  const Vector in_span = Z * Vector::Ones(3);
  CHECK((project_columnspace(Z, in_span) - in_span).norm() < 1e-9);
}

TEST_CASE("orthonormal_basis: rank-deficient input with negated duplicates") {
  RngStream rng = make_rng(23);
  Matrix Z(6, 4);
  Z.col(0) = gauss_vector(rng, 6);
  Z.col(1) = gauss_vector(rng, 6);
  Z.col(2) = -Z.col(0);  // exact negated duplicate
  Z.col(3) = 2.0 * Z.col(1);
  const Matrix B = orthonormal_basis(Z);
  CHECK(B.cols() == 2);
  CHECK(numerical_rank(Z) == 2);
  const Vector v = gauss_vector(rng, 6);
  const Vector p = project_columnspace(Z, v);
  const Matrix Z2 = Z.leftCols(2);
  CHECK((p - project_columnspace(Z2, v)).norm() < 1e-9);
}

TEST_CASE("spectral covariance: diagonal and rotated forms") {
  Vector eigs(3);
  eigs << 2.0, 1.0, 0.25;
  const SpectralCovariance diag = SpectralCovariance::diagonal(eigs);
  CHECK(diag.trace() == doctest::Approx(3.25));
  CHECK((diag.materialize() - eigs.asDiagonal().toDenseMatrix()).norm() < 1e-14);

  RngStream rng = make_rng(29);
  const SpectralCovariance rot = SpectralCovariance::random_basis(rng, eigs);
  CHECK(rot.trace() == doctest::Approx(3.25));
  CHECK(orthonormality_error(rot.basis()) < 1e-12);
  // Sample covariance converges to the materialized matrix.
  Matrix acc = Matrix::Zero(3, 3);
  RngStream srng = make_rng(31);
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const Vector x = rot.sample(srng);
    acc += x * x.transpose();
  }
  CHECK((acc / n - rot.materialize()).cwiseAbs().maxCoeff() < 0.03);
}

TEST_CASE("spectral covariance: rejects unsorted or negative eigenvalues") {
  Vector bad(2);
  bad << 1.0, 2.0;
  CHECK_THROWS_AS((void)SpectralCovariance::diagonal(bad), std::invalid_argument);
  Vector neg(2);
  neg << 1.0, -0.5;
  CHECK_THROWS_AS((void)SpectralCovariance::diagonal(neg), std::invalid_argument);
}
