#pragma once

// Linear-regression in-context learning with a one-layer single-head linear
// self-attention network: prompts, the simplified trace-form loss, the
// closed-form optimal rank-r solution, closed-form and Monte Carlo evaluation
// losses, the large/small model gap, and a gradient-descent optimality oracle
// over a rank-constrained factorization.

#include <cmath>
#include <limits>
#include <string>

#include "icl/linalg.hpp"
#include "icl/mc.hpp"
#include "icl/spectral.hpp"

namespace icl::regression {

struct RegressionSetting {
  SpectralCovariance cov;
  long N;  // pretraining prompt length

  RegressionSetting(SpectralCovariance c, long n) : cov(std::move(c)), N(n) {
    require(N >= 1, "RegressionSetting: N must be >= 1");
  }
  Eigen::Index d() const { return cov.dim(); }
};

// (d+1) x (n+1) embedding: columns (x_i; y_i) then the query column (x_q; 0).
struct PromptMatrix {
  Matrix E;
  Matrix X;  // n x d, rows x_i^T
  Vector y;  // n
  Vector x_q;
  double y_q_true = 0.0;
  Eigen::Index n() const { return y.size(); }
};

struct ReducedLSA {
  Matrix U;
  double u = 1.0;
  Eigen::Index declared_rank = 0;
};

struct LSAParams {
  Matrix Wpv;  // (d+1) x (d+1)
  Matrix Wkq;  // (d+1) x (d+1)
};

// w = Q(s + xi); s lives in the first r eigen-coordinates, xi in the rest.
struct WeightDecomposition {
  Vector w;
  Vector s;
  Vector xi;
  Eigen::Index r = 0;
};

// U = A B^T keeps rank(U) <= r by construction; the GD oracle optimizes A, B.
struct FactorizedLSA {
  Matrix A;  // d x r
  Matrix B;  // d x r
  double u = 1.0;
  Matrix realized() const { return A * B.transpose(); }
};

inline Vector sample_task_weight(RngStream& rng, Eigen::Index d) {
  return gauss_vector(rng, d);
}

inline PromptMatrix sample_prompt(RngStream& rng, const RegressionSetting& setting,
                                  const Vector& w, Eigen::Index n, double sigma) {
  require(n >= 1, "sample_prompt: n must be >= 1");
  require(sigma >= 0.0, "sample_prompt: sigma must be >= 0");
  require(w.size() == setting.d(), "sample_prompt: weight dimension mismatch");
  const Eigen::Index d = setting.d();
  PromptMatrix p;
  p.X.resize(n, d);
  p.y.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector x = setting.cov.sample(rng);
    p.X.row(i) = x.transpose();
    p.y[i] = w.dot(x) + (sigma > 0.0 ? sigma * rng.next_gauss() : 0.0);
  }
  p.x_q = setting.cov.sample(rng);
  p.y_q_true = w.dot(p.x_q);
  p.E.setZero(d + 1, n + 1);
  p.E.topLeftCorner(d, n) = p.X.transpose();
  p.E.row(d).head(n) = p.y.transpose();
  p.E.col(n).head(d) = p.x_q;
  return p;
}

// Bottom-right entry of the LSA output: the query prediction.
inline double lsa_predict(const LSAParams& params, const PromptMatrix& prompt, double rho) {
  require(rho > 0.0, "lsa_predict: rho must be positive");
  const Eigen::Index d = prompt.E.rows() - 1;
  require(params.Wpv.rows() == d + 1 && params.Wpv.cols() == d + 1 &&
              params.Wkq.rows() == d + 1 && params.Wkq.cols() == d + 1,
          "lsa_predict: parameter dimension mismatch");
  const Matrix EEt = prompt.E * prompt.E.transpose() / rho;
  // (w21_pv^T, w22_pv) (EE^T/rho) [W11_kq; w21_kq^T] x_q
  Eigen::RowVectorXd left = params.Wpv.row(d) * EEt;
  Matrix right(d + 1, d);
  right.topRows(d) = params.Wkq.topLeftCorner(d, d);
  right.row(d) = params.Wkq.bottomLeftCorner(1, d);
  return left * right * prompt.x_q;
}

// Reduced prediction (y^T X / rho) (uU) x_q; equals lsa_predict on the
// embedded block pattern.
inline double reduced_predict(const ReducedLSA& lsa, const PromptMatrix& prompt, double rho) {
  require(rho > 0.0, "reduced_predict: rho must be positive");
  const Vector stat = prompt.X.transpose() * prompt.y / rho;
  return stat.dot(lsa.u * (lsa.U * prompt.x_q));
}

// Gamma = (1 + 1/N) Lambda + tr(Lambda)/N I.
inline Matrix gamma_matrix(const RegressionSetting& setting) {
  const Matrix Lam = setting.cov.materialize();
  const double N = static_cast<double>(setting.N);
  return (1.0 + 1.0 / N) * Lam +
         (setting.cov.trace() / N) * Matrix::Identity(setting.d(), setting.d());
}

// Eigenvalues of Gamma in the shared eigenbasis.
inline Vector gamma_eigenvalues(const RegressionSetting& setting) {
  const double N = static_cast<double>(setting.N);
  const double tr = setting.cov.trace();
  return (1.0 + 1.0 / N) * setting.cov.eigenvalues() +
         Vector::Constant(setting.d(), tr / N);
}

// tr[ (1/2) u^2 Gamma Lambda U Lambda U^T - u Lambda^2 U^T ].
inline double simplified_loss(const Matrix& U, double u, const RegressionSetting& setting) {
  require(U.rows() == setting.d() && U.cols() == setting.d(),
          "simplified_loss: U must be d x d");
  const Matrix Lam = setting.cov.materialize();
  const Matrix Gam = gamma_matrix(setting);
  const double quad = 0.5 * u * u * (Gam * Lam * U * Lam * U.transpose()).trace();
  const double lin = u * (Lam * Lam * U.transpose()).trace();
  return quad - lin;
}

// Unconstrained minimum -(1/2) tr[Lambda^2 Gamma^{-1}].
inline double min_simplified_loss(const RegressionSetting& setting) {
  require(setting.cov.trace() > 0.0, "min_simplified_loss: Gamma is singular (Lambda = 0)");
  const Vector lam = setting.cov.eigenvalues();
  const Vector gam = gamma_eigenvalues(setting);
  double acc = 0.0;
  for (Eigen::Index i = 0; i < lam.size(); ++i) acc += lam[i] * lam[i] / gam[i];
  return -0.5 * acc;
}

// (1/2) || Gamma^{1/2} (u Lambda^{1/2} U Lambda^{1/2} - Lambda Gamma^{-1}) ||_F^2
// = simplified_loss - min_simplified_loss.
inline double loss_gap_norm(const Matrix& U, double u, const RegressionSetting& setting) {
  require(setting.cov.trace() > 0.0, "loss_gap_norm: Gamma is singular (Lambda = 0)");
  const Matrix& Q = setting.cov.basis();
  const Vector lam_half = setting.cov.eigenvalues().cwiseSqrt();
  const Vector gam = gamma_eigenvalues(setting);
  const Matrix LamHalf = Q * lam_half.asDiagonal() * Q.transpose();
  const Matrix GamHalf = Q * gam.cwiseSqrt().asDiagonal() * Q.transpose();
  const Matrix LamGamInv =
      Q * (setting.cov.eigenvalues().cwiseQuotient(gam)).asDiagonal() * Q.transpose();
  const Matrix inner = u * LamHalf * U * LamHalf - LamGamInv;
  return 0.5 * (GamHalf * inner).squaredNorm();
}

// v*_i = N / ((N+1) lambda_i + tr(D)) for i <= r, zero above; gauge c = 1.
inline Vector optimal_v_entries(const RegressionSetting& setting, Eigen::Index r) {
  require(r >= 0 && r <= setting.d(), "optimal_rank_r: r outside [0, d]");
  const double N = static_cast<double>(setting.N);
  const double tr = setting.cov.trace();
  Vector v = Vector::Zero(setting.d());
  for (Eigen::Index i = 0; i < r; ++i)
    v[i] = N / ((N + 1.0) * setting.cov.eigenvalues()[i] + tr);
  return v;
}

inline ReducedLSA optimal_rank_r(const RegressionSetting& setting, Eigen::Index r) {
  const Vector v = optimal_v_entries(setting, r);
  const Matrix& Q = setting.cov.basis();
  ReducedLSA lsa;
  lsa.U = Q * v.asDiagonal() * Q.transpose();
  lsa.u = 1.0;
  lsa.declared_rank = r;
  return lsa;
}

// Block pattern of the optimal solution: only w22_pv and W11_kq nonzero.
inline LSAParams embed_full_params(const ReducedLSA& lsa) {
  const Eigen::Index d = lsa.U.rows();
  LSAParams p;
  p.Wpv = Matrix::Zero(d + 1, d + 1);
  p.Wkq = Matrix::Zero(d + 1, d + 1);
  p.Wpv(d, d) = lsa.u;
  p.Wkq.topLeftCorner(d, d) = lsa.U;
  return p;
}

inline WeightDecomposition decompose_weight(const Vector& w,
                                            const RegressionSetting& setting,
                                            Eigen::Index r) {
  require(r >= 0 && r <= setting.d(), "decompose_weight: r outside [0, d]");
  require(w.size() == setting.d(), "decompose_weight: dimension mismatch");
  const Vector coeffs = setting.cov.basis().transpose() * w;
  WeightDecomposition dec;
  dec.w = w;
  dec.r = r;
  dec.s = Vector::Zero(setting.d());
  dec.xi = Vector::Zero(setting.d());
  dec.s.head(r) = coeffs.head(r);
  dec.xi.tail(setting.d() - r) = coeffs.tail(setting.d() - r);
  return dec;
}

// Evaluation loss of the optimal rank-r solution on prompts of length M with
// label noise sigma, in closed form:
//   (1/M) ||s||^2_{(V*)^2 D^3}
// + (1/M) (||s+xi||^2_D + sigma^2) tr((V*)^2 D^2)
// + ||xi||^2_D
// + sum_{i<=r} s_i^2 lambda_i (lambda_i v*_i - 1)^2.
inline double eval_loss_closed(const RegressionSetting& setting, long M, Eigen::Index r,
                               const WeightDecomposition& dec, double sigma) {
  require(M >= 1, "eval_loss_closed: M must be >= 1");
  require(sigma >= 0.0, "eval_loss_closed: sigma must be >= 0");
  require(dec.r == r, "eval_loss_closed: decomposition rank mismatch");
  const Vector lam = setting.cov.eigenvalues();
  const Vector v = optimal_v_entries(setting, r);
  const double Md = static_cast<double>(M);
  double term1 = 0.0, tr_v2d2 = 0.0, norm_sxi_D = 0.0, norm_xi_D = 0.0, term4 = 0.0;
  for (Eigen::Index i = 0; i < setting.d(); ++i) {
    const double s2 = dec.s[i] * dec.s[i];
    const double xi2 = dec.xi[i] * dec.xi[i];
    term1 += s2 * v[i] * v[i] * lam[i] * lam[i] * lam[i];
    tr_v2d2 += v[i] * v[i] * lam[i] * lam[i];
    norm_sxi_D += (s2 + xi2) * lam[i];
    norm_xi_D += xi2 * lam[i];
    if (i < r) {
      const double t = lam[i] * v[i] - 1.0;
      term4 += s2 * lam[i] * t * t;
    }
  }
  return term1 / Md + (norm_sxi_D + sigma * sigma) * tr_v2d2 / Md + norm_xi_D + term4;
}

// Monte Carlo oracle for the evaluation loss; prediction normalizer rho = M.
inline MeanStderr eval_loss_mc(const RngStream& rng, const ReducedLSA& lsa,
                               const RegressionSetting& setting, const Vector& w, long M,
                               double sigma, long trials, int threads = 0) {
  const Matrix uU = lsa.u * lsa.U;
  return mc_mean(
      rng, trials,
      [&, uU](RngStream& r) {
        PromptMatrix p = sample_prompt(r, setting, w, M, sigma);
        const Vector stat = p.X.transpose() * p.y / static_cast<double>(M);
        const double pred = stat.dot(uU * p.x_q);
        const double err = pred - p.y_q_true;
        return err * err;
      },
      threads);
}

// Gap between the optimal rank-r' and rank-r models when the task weight has
// no mass above index r: (1/M)(||s||^2_D + sigma^2) sum_{i=r+1}^{r'} (N l_i/((N+1)l_i+trD))^2.
inline double behavior_gap_closed(const RegressionSetting& setting, long M, Eigen::Index r,
                                  Eigen::Index r_prime, const Vector& s, double sigma) {
  require(0 <= r && r <= r_prime && r_prime <= setting.d(),
          "behavior_gap_closed: need 0 <= r <= r' <= d");
  require(s.size() == setting.d(), "behavior_gap_closed: s dimension mismatch");
  for (Eigen::Index i = r; i < setting.d(); ++i)
    require(s[i] == 0.0, "behavior_gap_closed: s has mass above index r");
  const double N = static_cast<double>(setting.N);
  const double tr = setting.cov.trace();
  const Vector lam = setting.cov.eigenvalues();
  double norm_s_D = 0.0;
  for (Eigen::Index i = 0; i < r; ++i) norm_s_D += s[i] * s[i] * lam[i];
  double sum = 0.0;
  for (Eigen::Index i = r; i < r_prime; ++i) {
    const double t = N * lam[i] / ((N + 1.0) * lam[i] + tr);
    sum += t * t;
  }
  return (norm_s_D + sigma * sigma) * sum / static_cast<double>(M);
}

// Large-N approximation: ||xi||^2_D + (1/M)((r+1)||s||^2_D + r ||xi||^2_D + r sigma^2).
inline double eval_loss_largeN_approx(const RegressionSetting& setting, long M,
                                      Eigen::Index r, const WeightDecomposition& dec,
                                      double sigma) {
  require(M >= 1, "eval_loss_largeN_approx: M must be >= 1");
  require(dec.r == r, "eval_loss_largeN_approx: decomposition rank mismatch");
  const Vector lam = setting.cov.eigenvalues();
  double norm_s_D = 0.0, norm_xi_D = 0.0;
  for (Eigen::Index i = 0; i < setting.d(); ++i) {
    norm_s_D += dec.s[i] * dec.s[i] * lam[i];
    norm_xi_D += dec.xi[i] * dec.xi[i] * lam[i];
  }
  const double rd = static_cast<double>(r);
  return norm_xi_D +
         ((rd + 1.0) * norm_s_D + rd * norm_xi_D + rd * sigma * sigma) /
             static_cast<double>(M);
}

// (1/2B) sum (y_hat - <w, x_q>)^2 over fresh tasks and noiseless prompts of
// length N, rho = N.
inline MeanStderr empirical_pretrain_risk(const RngStream& rng, const LSAParams& params,
                                          const RegressionSetting& setting, long B,
                                          int threads = 0) {
  require(B >= 1, "empirical_pretrain_risk: B must be >= 1");
  return mc_mean(
      rng, B,
      [&](RngStream& r) {
        const Vector w = sample_task_weight(r, setting.d());
        PromptMatrix p = sample_prompt(r, setting, w, setting.N, 0.0);
        const double pred = lsa_predict(params, p, static_cast<double>(setting.N));
        const double err = pred - p.y_q_true;
        return 0.5 * err * err;
      },
      threads);
}

// Analytic gradient machinery for the factorized GD oracle. Gamma and Lambda
// commute, so d/dU of the trace form is Gamma Lambda U Lambda - Lambda^2.
class SimplifiedLossFn {
 public:
  explicit SimplifiedLossFn(const RegressionSetting& setting)
      : Lam_(setting.cov.materialize()),
        GamLam_(gamma_matrix(setting) * Lam_),
        Lam2_(Lam_ * Lam_) {}

  double value(const Matrix& U) const {
    return 0.5 * (GamLam_ * U * Lam_ * U.transpose()).trace() -
           (Lam2_ * U.transpose()).trace();
  }
  Matrix grad_U(const Matrix& U) const { return GamLam_ * U * Lam_ - Lam2_; }

 private:
  Matrix Lam_;
  Matrix GamLam_;
  Matrix Lam2_;
};

struct FitHyperparams {
  double lr = 0.0;  // 0 -> 0.05 / lambda_1^2
  long steps = 50000;
  int restarts = 20;
  double tol = 1e-10;  // on gradient norm
};

struct FitResult {
  ReducedLSA lsa;
  double loss = std::numeric_limits<double>::infinity();
};

// Gradient descent on l~(A B^T, 1) from `restarts` random inits; returns the
// best run. Throws on divergence.
inline FitResult fit_rank_r(RngStream& rng, const RegressionSetting& setting,
                            Eigen::Index r, FitHyperparams hyper = {}) {
  require(r >= 0 && r <= setting.d(), "fit_rank_r: r outside [0, d]");
  const Eigen::Index d = setting.d();
  FitResult best;
  if (r == 0) {
    best.lsa = ReducedLSA{Matrix::Zero(d, d), 1.0, 0};
    best.loss = 0.0;
    return best;
  }
  const SimplifiedLossFn fn(setting);
  const double lam1 = setting.cov.eigenvalues()[0];
  const double lr = hyper.lr > 0.0 ? hyper.lr : 0.05 / (lam1 * lam1);
  require(lr > 0.0 && hyper.steps > 0 && hyper.restarts > 0 && hyper.tol > 0.0,
          "fit_rank_r: hyperparameters must be positive");

  for (int restart = 0; restart < hyper.restarts; ++restart) {
    RngStream init = rng.split("restart-" + std::to_string(restart));
    Matrix A = gauss_matrix(init, d, r) / std::sqrt(static_cast<double>(d));
    Matrix B = gauss_matrix(init, d, r) / std::sqrt(static_cast<double>(d));
    for (long step = 0; step < hyper.steps; ++step) {
      const Matrix G = fn.grad_U(A * B.transpose());
      const Matrix gA = G * B;
      const Matrix gB = G.transpose() * A;
      if (std::sqrt(gA.squaredNorm() + gB.squaredNorm()) < hyper.tol) break;
      A -= lr * gA;
      B -= lr * gB;
      if (step % 256 == 0 && fn.value(A * B.transpose()) > 1e10)
        throw std::runtime_error("fit_rank_r: gradient descent diverged");
    }
    const Matrix U = A * B.transpose();
    const double loss = fn.value(U);
    if (loss < best.loss) {
      best.loss = loss;
      best.lsa = ReducedLSA{U, 1.0, r};
    }
  }
  return best;
}

// Max relative error between the analytic gradient of l~(A B^T, 1) and a
// central finite difference with step h.
inline double gradient_fd_check(const RegressionSetting& setting,
                                const FactorizedLSA& point, double h) {
  require(h > 0.0, "gradient_fd_check: h must be positive");
  const SimplifiedLossFn fn(setting);
  Matrix A = point.A, B = point.B;
  const Matrix G = fn.grad_U(A * B.transpose());
  const Matrix gA = G * B;
  const Matrix gB = G.transpose() * A;
  double max_rel = 0.0;
  auto probe = [&](Matrix& P, const Matrix& analytic) {
    for (Eigen::Index i = 0; i < P.rows(); ++i)
      for (Eigen::Index j = 0; j < P.cols(); ++j) {
        const double save = P(i, j);
        P(i, j) = save + h;
        const double fp = fn.value(A * B.transpose());
        P(i, j) = save - h;
        const double fm = fn.value(A * B.transpose());
        P(i, j) = save;
        const double fd = (fp - fm) / (2.0 * h);
        const double rel = std::fabs(analytic(i, j) - fd) /
                           (std::fabs(analytic(i, j)) + 1e-8);
        max_rel = std::max(max_rel, rel);
      }
  };
  probe(A, gA);
  probe(B, gB);
  return max_rel;
}

}  // namespace icl::regression
