#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "icl/regression.hpp"

using namespace icl;
namespace reg = icl::regression;

namespace {

reg::RegressionSetting diag21_setting(long N = 4) {
  Vector eigs(2);
  eigs << 2.0, 1.0;
  return reg::RegressionSetting(SpectralCovariance::diagonal(eigs), N);
}

reg::RegressionSetting rotated_setting(std::uint64_t seed, int d, long N) {
  Vector eigs(d);
  for (int i = 0; i < d; ++i) eigs[i] = 2.0 * std::pow(0.7, i);
  RngStream rng = make_rng(seed).split("basis");
  return reg::RegressionSetting(SpectralCovariance::random_basis(rng, eigs), N);
}

}  // namespace

TEST_CASE("sample_task_weight: standard normal statistics") {
  RngStream rng = make_rng(1).split("w");
  const long n = 100000;
  Vector mean = Vector::Zero(4);
  Matrix gram = Matrix::Zero(4, 4);
  for (long t = 0; t < n; ++t) {
    const Vector w = reg::sample_task_weight(rng, 4);
    mean += w;
    gram += w * w.transpose();
  }
  CHECK((mean / n).cwiseAbs().maxCoeff() < 0.013);
  CHECK((gram / n - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() < 0.02);
  RngStream a = make_rng(2).split("w"), b = make_rng(2).split("w");
  CHECK((reg::sample_task_weight(a, 4) - reg::sample_task_weight(b, 4)).norm() == 0.0);
  CHECK_THROWS_AS((void)reg::sample_task_weight(rng, 0), std::invalid_argument);
}

TEST_CASE("sample_prompt: layout, noiseless labels, variances") {
  const auto setting = diag21_setting();
  RngStream rng = make_rng(3).split("p");
  Vector w(2);
  w << 1.0, -0.5;
  const auto p = reg::sample_prompt(rng, setting, w, 100000, 0.0);
  CHECK(p.E.rows() == 3);
  CHECK(p.E.cols() == 100001);
  CHECK(p.E(2, 100000) == 0.0);  // query label slot
  CHECK((p.E.col(100000).head(2) - p.x_q).norm() == 0.0);
  CHECK(p.y_q_true == doctest::Approx(w.dot(p.x_q)).epsilon(1e-14));
  double max_resid = 0.0, var1 = 0.0;
  for (int i = 0; i < 100000; ++i) {
    max_resid = std::max(max_resid, std::fabs(p.y[i] - w.dot(p.X.row(i))));
    var1 += p.X(i, 0) * p.X(i, 0);
  }
  CHECK(max_resid == 0.0);
  CHECK(std::fabs(var1 / 100000 - 2.0) < 0.04);

  // sigma = 0.5, w = 0: label variance is sigma^2.
  RngStream rng2 = make_rng(4).split("p");
  const auto pn = reg::sample_prompt(rng2, setting, Vector::Zero(2), 100000, 0.5);
  CHECK(std::fabs(pn.y.squaredNorm() / 100000 - 0.25) < 0.005);
}

TEST_CASE("lsa_predict: hand example and reduced-prediction identity") {
  // d=1: x1=2, y1=3, x_q=0.5, only wPV_22 = 1 and WKQ_11 = 1 set, rho=1.
  reg::PromptMatrix p;
  p.E = Matrix::Zero(2, 2);
  p.E(0, 0) = 2.0;
  p.E(1, 0) = 3.0;
  p.E(0, 1) = 0.5;
  p.X = Matrix::Constant(1, 1, 2.0);
  p.y = Vector::Constant(1, 3.0);
  p.x_q = Vector::Constant(1, 0.5);
  reg::LSAParams params{Matrix::Zero(2, 2), Matrix::Zero(2, 2)};
  params.Wpv(1, 1) = 1.0;
  params.Wkq(0, 0) = 1.0;
  CHECK(reg::lsa_predict(params, p, 1.0) == doctest::Approx(3.0).epsilon(1e-14));
  params.Wpv.setZero();
  params.Wkq.setZero();
  CHECK(reg::lsa_predict(params, p, 1.0) == 0.0);

  // Embedded block-pattern params reduce to (y^T X / rho) (uU) x_q.
  const auto setting = rotated_setting(5, 3, 8);
  RngStream rng = make_rng(5).split("pred");
  for (int t = 0; t < 100; ++t) {
    reg::ReducedLSA lsa{gauss_matrix(rng, 3, 3), rng.next_gauss(), 3};
    const Vector w = reg::sample_task_weight(rng, 3);
    const auto prompt = reg::sample_prompt(rng, setting, w, 6, 0.3);
    const double full = reg::lsa_predict(reg::embed_full_params(lsa), prompt, 6.0);
    const double red = reg::reduced_predict(lsa, prompt, 6.0);
    CHECK(full == doctest::Approx(red).epsilon(1e-12));
  }
}

TEST_CASE("gamma_matrix: diag(2,1), N=4 and identity cases") {
  const Matrix G = reg::gamma_matrix(diag21_setting());
  CHECK(G(0, 0) == doctest::Approx(3.25).epsilon(1e-14));
  CHECK(G(1, 1) == doctest::Approx(2.0).epsilon(1e-14));
  CHECK(std::fabs(G(0, 1)) < 1e-14);
  Vector ones(2);
  ones << 1.0, 1.0;
  const reg::RegressionSetting id_setting(SpectralCovariance::diagonal(ones), 1);
  CHECK((reg::gamma_matrix(id_setting) - 4.0 * Matrix::Identity(2, 2)).norm() < 1e-14);
}

TEST_CASE("simplified_loss: zero model, minimizer plug-in, gauge") {
  const auto setting = diag21_setting();
  CHECK(reg::simplified_loss(Matrix::Zero(2, 2), 3.7, setting) == 0.0);
  const Matrix GamInv = reg::gamma_matrix(setting).inverse();
  CHECK(reg::simplified_loss(GamInv, 1.0, setting) ==
        doctest::Approx(-0.86538461538461538).epsilon(1e-12));
  CHECK(reg::min_simplified_loss(setting) ==
        doctest::Approx(-0.86538461538461538).epsilon(1e-12));
  CHECK(reg::simplified_loss(GamInv, 1.0, setting) ==
        doctest::Approx(reg::min_simplified_loss(setting)).epsilon(1e-12));
  RngStream rng = make_rng(6).split("gauge");
  for (int t = 0; t < 50; ++t) {
    const Matrix U = gauss_matrix(rng, 2, 2);
    const double u = rng.next_gauss();
    for (double c : {-2.0, 0.5, 10.0})
      CHECK(reg::simplified_loss(c * U, u / c, setting) ==
            doctest::Approx(reg::simplified_loss(U, u, setting)).epsilon(1e-12));
  }
}

TEST_CASE("min_simplified_loss: rejects zero covariance") {
  Vector z(2);
  z << 0.0, 0.0;
  const reg::RegressionSetting zero(SpectralCovariance::diagonal(z), 4);
  CHECK_THROWS_AS((void)reg::min_simplified_loss(zero), std::invalid_argument);
  CHECK_THROWS_AS((void)reg::loss_gap_norm(Matrix::Zero(2, 2), 1.0, zero),
                  std::invalid_argument);
}

TEST_CASE("loss_gap_norm: minimizer, rank-1 value, identity on random points") {
  const auto setting = diag21_setting();
  const Matrix GamInv = reg::gamma_matrix(setting).inverse();
  CHECK(reg::loss_gap_norm(GamInv, 1.0, setting) < 1e-12);
  const auto rank1 = reg::optimal_rank_r(setting, 1);
  CHECK(reg::loss_gap_norm(rank1.U, rank1.u, setting) ==
        doctest::Approx(0.25).epsilon(1e-12));
  // Identity against the trace form on 500 random (U, u, Lambda, N).
  RngStream rng = make_rng(7).split("gapid");
  for (int t = 0; t < 500; ++t) {
    const int d = 2 + static_cast<int>(rng.next_u64() % 3);
    Vector eigs(d);
    for (int i = 0; i < d; ++i) eigs[i] = 0.2 + 2.0 * rng.next_uniform();
    std::sort(eigs.data(), eigs.data() + d, std::greater<double>());
    const long N = 1 + static_cast<long>(rng.next_u64() % 16);
    const reg::RegressionSetting s(SpectralCovariance::diagonal(eigs), N);
    const Matrix U = gauss_matrix(rng, d, d);
    const double u = rng.next_gauss();
    const double lhs = reg::loss_gap_norm(U, u, s);
    const double rhs = reg::simplified_loss(U, u, s) - reg::min_simplified_loss(s);
    CHECK(std::fabs(lhs - rhs) < 1e-10);
  }
}

TEST_CASE("optimal_rank_r: frozen entries, nesting, monotone lambda v") {
  const auto setting = diag21_setting();
  const Vector v1 = reg::optimal_v_entries(setting, 1);
  CHECK(v1[0] == doctest::Approx(4.0 / 13.0).epsilon(1e-14));
  CHECK(v1[1] == 0.0);
  const Vector v2 = reg::optimal_v_entries(setting, 2);
  CHECK(v2[0] == doctest::Approx(4.0 / 13.0).epsilon(1e-14));
  CHECK(v2[1] == doctest::Approx(0.5).epsilon(1e-14));
  CHECK(reg::optimal_rank_r(setting, 0).U.norm() == 0.0);

  const auto big = rotated_setting(8, 5, 12);
  const Vector v_full = reg::optimal_v_entries(big, 5);
  for (int r = 0; r <= 5; ++r) {
    const Vector v_r = reg::optimal_v_entries(big, r);
    for (int i = 0; i < 5; ++i) CHECK(v_r[i] == (i < r ? v_full[i] : 0.0));
  }
  const Vector lam = big.cov.eigenvalues();
  for (int i = 1; i < 5; ++i) CHECK(lam[i] * v_full[i] <= lam[i - 1] * v_full[i - 1] + 1e-15);
}

TEST_CASE("optimal_rank_r: beats random rank-r competitors") {
  const auto setting = rotated_setting(9, 4, 8);
  RngStream rng = make_rng(9).split("comp");
  for (int r = 1; r <= 4; ++r) {
    const double best = reg::simplified_loss(reg::optimal_rank_r(setting, r).U, 1.0, setting);
    for (int t = 0; t < 250; ++t) {
      const Matrix A = gauss_matrix(rng, 4, r);
      const Matrix B = gauss_matrix(rng, 4, r);
      CHECK(reg::simplified_loss(A * B.transpose(), 1.0, setting) >= best - 1e-12);
    }
  }
}

TEST_CASE("embed_full_params: block placement round-trip") {
  RngStream rng = make_rng(10).split("embed");
  reg::ReducedLSA lsa{gauss_matrix(rng, 3, 3), 1.7, 3};
  const auto params = reg::embed_full_params(lsa);
  CHECK((params.Wkq.topLeftCorner(3, 3) - lsa.U).norm() == 0.0);
  CHECK(params.Wpv(3, 3) == lsa.u);
  CHECK(params.Wpv.topLeftCorner(3, 3).norm() == 0.0);
  CHECK(params.Wkq.row(3).norm() == 0.0);
  CHECK(params.Wkq.col(3).norm() == 0.0);
  const auto zero = reg::embed_full_params(reg::ReducedLSA{Matrix::Zero(2, 2), 0.0, 0});
  CHECK(zero.Wpv.norm() == 0.0);
  CHECK(zero.Wkq.norm() == 0.0);
}

TEST_CASE("decompose_weight: coordinate split and reconstruction") {
  const auto setting = diag21_setting();
  Vector w(2);
  w << 3.0, 4.0;
  const auto dec = reg::decompose_weight(w, setting, 1);
  CHECK(dec.s[0] == 3.0);
  CHECK(dec.s[1] == 0.0);
  CHECK(dec.xi[0] == 0.0);
  CHECK(dec.xi[1] == 4.0);
  const auto full = reg::decompose_weight(w, setting, 2);
  CHECK(full.xi.norm() == 0.0);
  const auto none = reg::decompose_weight(w, setting, 0);
  CHECK(none.s.norm() == 0.0);

  const auto rot = rotated_setting(11, 4, 8);
  RngStream rng = make_rng(11).split("dec");
  const Vector wr = reg::sample_task_weight(rng, 4);
  for (int r = 0; r <= 4; ++r) {
    const auto d = reg::decompose_weight(wr, rot, r);
    CHECK((rot.cov.basis() * (d.s + d.xi) - wr).norm() < 1e-12);
  }
}

TEST_CASE("eval_loss_closed: frozen d=1 example and degenerate zeros") {
  Vector one(1);
  one << 1.0;
  const reg::RegressionSetting s1(SpectralCovariance::diagonal(one), 2);
  CHECK(reg::optimal_v_entries(s1, 1)[0] == doctest::Approx(0.5).epsilon(1e-14));
  Vector w(1);
  w << 1.0;
  const auto dec = reg::decompose_weight(w, s1, 1);
  CHECK(reg::eval_loss_closed(s1, 1, 1, dec, 0.0) == doctest::Approx(0.75).epsilon(1e-14));
  const auto zero_dec = reg::decompose_weight(Vector::Zero(1), s1, 1);
  CHECK(reg::eval_loss_closed(s1, 1, 1, zero_dec, 0.0) == 0.0);
}

TEST_CASE("eval_loss_mc: zero model, closed-form agreement, monotone in M") {
  const auto setting = diag21_setting(8);
  Vector w(2);
  w << 1.0, 0.0;
  const reg::ReducedLSA zero{Matrix::Zero(2, 2), 0.0, 0};
  const auto mz =
      reg::eval_loss_mc(make_rng(12).split("mc-zero"), zero, setting, w, 8, 0.0, 40000);
  // Zero model: loss is E[y_q^2]/1 = ||w||^2_Lambda = 2 (squared error, no 1/2).
  CHECK(std::fabs(mz.mean - 2.0) <= 3.0 * mz.stderr_);

  const auto full = reg::optimal_rank_r(setting, 2);
  const auto dec = reg::decompose_weight(w, setting, 2);
  const double closed = reg::eval_loss_closed(setting, 1000, 2, dec, 0.0);
  const auto mc =
      reg::eval_loss_mc(make_rng(12).split("mc-full"), full, setting, w, 1000, 0.0, 40000);
  CHECK(std::fabs(mc.mean - closed) <= 3.0 * mc.stderr_);
  CHECK(mc.mean > 0.0);

  const auto mc_small =
      reg::eval_loss_mc(make_rng(12).split("mc-m4"), full, setting, w, 4, 0.0, 40000);
  const auto mc_large =
      reg::eval_loss_mc(make_rng(12).split("mc-m1e4"), full, setting, w, 10000, 0.0, 40000);
  CHECK(mc_large.mean < mc_small.mean);
}

TEST_CASE("behavior_gap_closed: frozen example, consistency, monotonicity") {
  Vector ones(2);
  ones << 1.0, 1.0;
  const reg::RegressionSetting s(SpectralCovariance::diagonal(ones), 2);
  CHECK(reg::behavior_gap_closed(s, 4, 0, 2, Vector::Zero(2), 1.0) ==
        doctest::Approx(0.08).epsilon(1e-14));
  CHECK(reg::behavior_gap_closed(s, 4, 1, 1, Vector::Zero(2), 1.0) == 0.0);

  const auto setting = rotated_setting(13, 4, 8);
  Vector svec = Vector::Zero(4);
  svec[0] = 1.3;
  const Vector w = setting.cov.basis() * svec;
  for (int rp = 1; rp <= 4; ++rp)
    for (double sigma : {0.0, 0.5}) {
      const double gap = reg::behavior_gap_closed(setting, 8, 1, rp, svec, sigma);
      CHECK(gap >= 0.0);
      const double diff =
          reg::eval_loss_closed(setting, 8, rp, reg::decompose_weight(w, setting, rp), sigma) -
          reg::eval_loss_closed(setting, 8, 1, reg::decompose_weight(w, setting, 1), sigma);
      CHECK(std::fabs(gap - diff) < 1e-12);
    }
  // Noise sensitivity: with s in the top direction and sigma > 0, the loss is
  // non-decreasing in model rank r' >= 1.
  double prev = reg::eval_loss_closed(setting, 8, 1, reg::decompose_weight(w, setting, 1), 0.5);
  for (int rp = 2; rp <= 4; ++rp) {
    const double cur =
        reg::eval_loss_closed(setting, 8, rp, reg::decompose_weight(w, setting, rp), 0.5);
    CHECK(cur >= prev - 1e-14);
    prev = cur;
  }
  // s with mass above r is rejected.
  Vector bad = Vector::Zero(4);
  bad[2] = 1.0;
  CHECK_THROWS_AS((void)reg::behavior_gap_closed(setting, 8, 1, 3, bad, 0.0),
                  std::invalid_argument);
}

TEST_CASE("eval_loss_largeN_approx: limits and agreement at huge N") {
  const auto small = diag21_setting(4);
  Vector w(2);
  w << 0.7, -0.2;
  const auto dec0 = reg::decompose_weight(w, small, 0);
  CHECK(reg::eval_loss_largeN_approx(small, 8, 0, dec0, 0.3) ==
        doctest::Approx(induced_norm_sq(w, small.cov.materialize())).epsilon(1e-12));

  Vector eigs(4);
  for (int i = 0; i < 4; ++i) eigs[i] = 2.0 * std::pow(0.7, i);
  const reg::RegressionSetting huge(SpectralCovariance::diagonal(eigs), 1000000);
  RngStream rng = make_rng(14).split("largeN");
  const Vector wr = reg::sample_task_weight(rng, 4);
  for (int r = 1; r <= 4; ++r)
    for (double sigma : {0.0, 0.5})
      for (long M : {4L, 16L}) {
        const auto dec = reg::decompose_weight(wr, huge, r);
        const double exact = reg::eval_loss_closed(huge, M, r, dec, sigma);
        const double approx = reg::eval_loss_largeN_approx(huge, M, r, dec, sigma);
        CHECK(std::fabs(approx - exact) <= 0.01 * std::max(exact, 1e-12));
      }
}

TEST_CASE("empirical_pretrain_risk: pins the loss constant to tr(Lambda)/2") {
  const auto setting = diag21_setting(4);
  const auto zero = reg::empirical_pretrain_risk(
      make_rng(15).split("risk-zero"),
      reg::embed_full_params(reg::ReducedLSA{Matrix::Zero(2, 2), 0.0, 0}), setting, 100000);
  CHECK(std::fabs(zero.mean - 1.5) <= 3.0 * zero.stderr_);
  const auto opt = reg::empirical_pretrain_risk(
      make_rng(15).split("risk-opt"),
      reg::embed_full_params(reg::optimal_rank_r(setting, 2)), setting, 100000);
  const double target = reg::min_simplified_loss(setting) + 1.5;
  CHECK(std::fabs(opt.mean - target) <= 3.0 * opt.stderr_);
  // stderr shrinks ~1/sqrt(2) when B doubles.
  const auto half = reg::empirical_pretrain_risk(
      make_rng(15).split("risk-half"),
      reg::embed_full_params(reg::optimal_rank_r(setting, 2)), setting, 50000);
  CHECK(opt.stderr_ / half.stderr_ == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(0.1));
}

TEST_CASE("isserlis moment identity: E[y^2 x x^T]") {
  Vector eigs(3);
  eigs << 1.5, 1.0, 0.4;
  RngStream brng = make_rng(16).split("iss-basis");
  const SpectralCovariance cov = SpectralCovariance::random_basis(brng, eigs);
  const Matrix Lam = cov.materialize();
  RngStream wrng = make_rng(16).split("iss-w");
  const Vector w = gauss_vector(wrng, 3);
  const double sigma = 0.4;
  const Matrix target = sigma * sigma * Lam + induced_norm_sq(w, Lam) * Lam +
                        2.0 * Lam * w * w.transpose() * Lam;
  RngStream rng = make_rng(16).split("iss-mc");
  const long n = 300000;
  Matrix sum = Matrix::Zero(3, 3), sum_sq = Matrix::Zero(3, 3);
  for (long t = 0; t < n; ++t) {
    const Vector x = cov.sample(rng);
    const double y = w.dot(x) + sigma * rng.next_gauss();
    const Matrix m = y * y * x * x.transpose();
    sum += m;
    sum_sq += m.cwiseProduct(m);
  }
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      const double mean = sum(i, j) / n;
      const double se = std::sqrt(std::max(0.0, sum_sq(i, j) / n - mean * mean) / n);
      CHECK(std::fabs(mean - target(i, j)) <= 3.0 * se);
    }
}

TEST_CASE("gradient: analytic matches central differences at second order") {
  const auto setting = rotated_setting(17, 4, 8);
  RngStream rng = make_rng(17).split("fd");
  const reg::FactorizedLSA point{gauss_matrix(rng, 4, 2), gauss_matrix(rng, 4, 2), 1.0};
  const double e5 = reg::gradient_fd_check(setting, point, 1e-5);
  CHECK(e5 <= 1e-5);
  // Each coordinate section of l~(A B^T, 1) is quadratic (U is linear in any
  // single factor entry), so the central difference is exact up to roundoff:
  // the error is tiny at large h and grows as h shrinks into cancellation.
  const double e1 = reg::gradient_fd_check(setting, point, 1e-1);
  CHECK(e1 <= 1e-10);
  CHECK(reg::gradient_fd_check(setting, point, 1e-6) >= e1);
  const reg::FactorizedLSA zero{Matrix::Zero(4, 2), Matrix::Zero(4, 2), 1.0};
  CHECK(reg::gradient_fd_check(setting, zero, 1e-5) <= 1e-6);
}

TEST_CASE("fit_rank_r: reaches the closed-form optimum at small scale") {
  const auto setting = rotated_setting(18, 3, 8);
  for (int r = 1; r <= 3; ++r) {
    RngStream rng = make_rng(18).split("gd-r" + std::to_string(r));
    reg::FitHyperparams hyper;
    hyper.restarts = 4;
    hyper.steps = 30000;
    const auto fit = reg::fit_rank_r(rng, setting, r, hyper);
    const double closed =
        reg::simplified_loss(reg::optimal_rank_r(setting, r).U, 1.0, setting);
    CHECK(std::fabs(fit.loss - closed) / std::fabs(closed) <= 1e-6);
    CHECK(fit.loss >= closed - 1e-9);
  }
  RngStream rng0 = make_rng(18).split("gd-r0");
  const auto z = reg::fit_rank_r(rng0, setting, 0);
  CHECK(z.loss == 0.0);
  CHECK(z.lsa.U.norm() == 0.0);
}
