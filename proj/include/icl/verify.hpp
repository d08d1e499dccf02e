#pragma once

// Verification suites behind `icl-lab verify`: every numeric claim the
// library makes about the closed forms, checked against its independent
// oracle at a fixed seed. Each line of the report names the theorem anchor
// it exercises. Output is byte-deterministic for a given seed and thread
// count does not change it.

#include <cstdio>
#include <sstream>
#include <string>

#include "icl/csv.hpp"
#include "icl/parity.hpp"
#include "icl/regression.hpp"

namespace icl {

struct VerifyOptions {
  std::uint64_t seed = 0;
  std::string suite = "all";  // all | regression | parity
  double perturb = 0.0;       // injected perturbation on U* for fault testing
  int threads = 0;
};

class VerifyReport {
 public:
  void check(const std::string& anchor, const std::string& what, bool ok,
             double observed, double bound) {
    char line[256];
    std::snprintf(line, sizeof(line), "[%s] %s: %s (observed %.6e, bound %.6e)\n",
                  ok ? "PASS" : "FAIL", anchor.c_str(), what.c_str(), observed, bound);
    out_ << line;
    ++total_;
    if (!ok) ++failures_;
  }
  void note(const std::string& text) { out_ << text << "\n"; }
  bool all_passed() const { return failures_ == 0; }
  int failures() const { return failures_; }
  std::string render() const {
    std::ostringstream final;
    final << out_.str();
    final << "RESULT: " << (failures_ == 0 ? "PASS" : "FAIL") << " (" << (total_ - failures_)
          << "/" << total_ << " checks passed)\n";
    return final.str();
  }

 private:
  std::ostringstream out_;
  int total_ = 0;
  int failures_ = 0;
};

namespace detail {

inline regression::RegressionSetting verify_setting(std::uint64_t seed) {
  Vector eigs(4);
  eigs << 2.0, 1.4, 0.9, 0.5;
  RngStream rng = make_rng(seed).split("verify-eigenbasis");
  return regression::RegressionSetting(SpectralCovariance::random_basis(rng, eigs), 8);
}

inline void verify_regression(VerifyReport& rep, const VerifyOptions& opt) {
  namespace reg = icl::regression;
  const RngStream root = make_rng(opt.seed);
  const reg::RegressionSetting setting = verify_setting(opt.seed);
  const Eigen::Index d = setting.d();

  // --- Thm 4.1: closed-form optimal rank-r solution ---
  for (Eigen::Index r = 1; r <= d; ++r) {
    reg::ReducedLSA opt_lsa = reg::optimal_rank_r(setting, r);
    if (opt.perturb != 0.0)
      opt_lsa.U += opt.perturb * Matrix::Identity(d, d);
    if (r == d) {
      const double gap = reg::loss_gap_norm(opt_lsa.U, 1.0, setting);
      rep.check("Thm 4.1", "full-rank optimum attains the unconstrained minimum",
                gap <= 1e-10, gap, 1e-10);
    }
    RngStream gd = root.split("verify-gd-r" + std::to_string(r));
    reg::FitHyperparams hyper;
    hyper.restarts = 5;
    hyper.steps = 30000;
    const auto fit = reg::fit_rank_r(gd, setting, r, hyper);
    const double closed = reg::simplified_loss(opt_lsa.U, opt_lsa.u, setting);
    const double rel = std::fabs(fit.loss - closed) / std::fabs(closed);
    rep.check("Thm 4.1", "GD oracle matches closed form at rank " + std::to_string(r),
              fit.loss >= closed - 1e-9 && rel <= 1e-6, rel, 1e-6);
  }
  {
    // Truncation nesting and monotone lambda_i v*_i.
    const Vector v_full = reg::optimal_v_entries(setting, d);
    bool nested = true, monotone = true;
    for (Eigen::Index r = 0; r <= d; ++r) {
      const Vector v_r = reg::optimal_v_entries(setting, r);
      for (Eigen::Index i = 0; i < d; ++i)
        if (v_r[i] != (i < r ? v_full[i] : 0.0)) nested = false;
    }
    const Vector lam = setting.cov.eigenvalues();
    for (Eigen::Index i = 1; i < d; ++i)
      if (lam[i] * v_full[i] > lam[i - 1] * v_full[i - 1] + 1e-15) monotone = false;
    rep.check("Thm 4.1", "rank-r solution is the truncated full-rank solution", nested,
              nested ? 0.0 : 1.0, 0.0);
    rep.check("Thm 4.1", "lambda_i v*_i non-increasing", monotone, monotone ? 0.0 : 1.0,
              0.0);
  }
  {
    // Gauge invariance and the gap identity on random parameters.
    RngStream rng = root.split("verify-gap");
    double max_gauge = 0.0, max_gap = 0.0;
    for (int t = 0; t < 100; ++t) {
      const Matrix U = gauss_matrix(rng, d, d);
      const double u = rng.next_gauss();
      for (double c : {-2.0, 0.5, 10.0})
        max_gauge = std::max(max_gauge,
                             std::fabs(reg::simplified_loss(c * U, u / c, setting) -
                                       reg::simplified_loss(U, u, setting)));
      const double lhs = reg::loss_gap_norm(U, u, setting);
      const double rhs =
          reg::simplified_loss(U, u, setting) - reg::min_simplified_loss(setting);
      max_gap = std::max(max_gap, std::fabs(lhs - rhs));
    }
    rep.check("Lemma 3.1", "gauge invariance l(cU, u/c) = l(U, u)", max_gauge <= 1e-12,
              max_gauge, 1e-12);
    rep.check("Lemma C.1", "loss gap identity (Frobenius form)", max_gap <= 1e-10,
              max_gap, 1e-10);
  }
  {
    // Optimality against random rank-r competitors.
    RngStream rng = root.split("verify-competitors");
    bool optimal = true;
    for (Eigen::Index r = 1; r <= d; ++r) {
      const double best = reg::simplified_loss(reg::optimal_rank_r(setting, r).U +
                                                   opt.perturb * Matrix::Identity(d, d),
                                               1.0, setting);
      for (int t = 0; t < 250; ++t) {
        const Matrix A = gauss_matrix(rng, d, r);
        const Matrix B = gauss_matrix(rng, d, r);
        if (reg::simplified_loss(A * B.transpose(), 1.0, setting) < best - 1e-12)
          optimal = false;
      }
    }
    rep.check("Thm 4.1", "no random rank-r competitor beats the closed form", optimal,
              optimal ? 0.0 : 1.0, 0.0);
  }

  // --- Lemma 3.1: constant pin via the pretraining risk oracle ---
  {
    const double half_tr = 0.5 * setting.cov.trace();
    const auto zero =
        reg::empirical_pretrain_risk(root.split("verify-risk-zero"),
                                     reg::embed_full_params(reg::ReducedLSA{
                                         Matrix::Zero(d, d), 0.0, 0}),
                                     setting, 20000, opt.threads);
    rep.check("Lemma 3.1", "zero model risk = tr(Lambda)/2",
              std::fabs(zero.mean - half_tr) <= 3.0 * zero.stderr_,
              std::fabs(zero.mean - half_tr), 3.0 * zero.stderr_);
    const auto best =
        reg::empirical_pretrain_risk(root.split("verify-risk-opt"),
                                     reg::embed_full_params(reg::optimal_rank_r(setting, d)),
                                     setting, 20000, opt.threads);
    const double target = reg::min_simplified_loss(setting) + half_tr;
    rep.check("Lemma 3.1", "optimal model risk = min loss + tr(Lambda)/2",
              std::fabs(best.mean - target) <= 3.0 * best.stderr_,
              std::fabs(best.mean - target), 3.0 * best.stderr_);
  }

  // --- Thm 4.2: closed-form evaluation loss vs Monte Carlo ---
  {
    RngStream wrng = root.split("verify-eval-w");
    const Vector w = reg::sample_task_weight(wrng, d);
    for (Eigen::Index r : {Eigen::Index(1), d}) {
      for (double sigma : {0.0, 0.5})
        for (long M : {4L, 16L}) {
          const auto dec = reg::decompose_weight(w, setting, r);
          const double closed = reg::eval_loss_closed(setting, M, r, dec, sigma);
          const std::string label = "verify-eval/r=" + std::to_string(r) +
                                    "/sigma=" + format_double(sigma) +
                                    "/M=" + std::to_string(M);
          const auto mc =
              reg::eval_loss_mc(root.split(label), reg::optimal_rank_r(setting, r),
                                setting, w, M, sigma, 20000, opt.threads);
          rep.check("Thm 4.2",
                    "closed form within 3 stderr of MC at r=" + std::to_string(r) +
                        " sigma=" + format_double(sigma) + " M=" + std::to_string(M),
                    std::fabs(closed - mc.mean) <= 3.0 * mc.stderr_,
                    std::fabs(closed - mc.mean), 3.0 * mc.stderr_);
        }
    }
  }

  // --- Thm 4.3: behavior gap ---
  {
    Vector s = Vector::Zero(d);
    s[0] = 1.2;
    const Vector w = setting.cov.basis() * s;
    double max_dev = 0.0;
    bool nonneg = true;
    for (Eigen::Index rp = 1; rp <= d; ++rp)
      for (double sigma : {0.0, 0.7}) {
        const double gap = reg::behavior_gap_closed(setting, 8, 1, rp, s, sigma);
        if (gap < 0.0) nonneg = false;
        const auto dec_lo = reg::decompose_weight(w, setting, 1);
        const auto dec_hi = reg::decompose_weight(w, setting, rp);
        const double diff = reg::eval_loss_closed(setting, 8, rp, dec_hi, sigma) -
                            reg::eval_loss_closed(setting, 8, 1, dec_lo, sigma);
        max_dev = std::max(max_dev, std::fabs(gap - diff));
      }
    rep.check("Thm 4.3", "gap equals difference of Thm 4.2 closed forms (xi = 0)",
              max_dev <= 1e-12, max_dev, 1e-12);
    rep.check("Thm 4.3", "gap nonnegative", nonneg, nonneg ? 0.0 : 1.0, 0.0);
    // Affine in sigma^2 with the stated slope, by two-point evaluation.
    const double g0 = reg::behavior_gap_closed(setting, 8, 1, d, s, 0.0);
    const double g1 = reg::behavior_gap_closed(setting, 8, 1, d, s, 1.0);
    const Vector lam = setting.cov.eigenvalues();
    double slope = 0.0;
    for (Eigen::Index i = 1; i < d; ++i) {
      const double t = setting.N * lam[i] / ((setting.N + 1.0) * lam[i] + setting.cov.trace());
      slope += t * t;
    }
    slope /= 8.0;
    rep.check("Thm 4.3", "slope in sigma^2 matches (1/M) sum (N l/((N+1)l+trD))^2",
              std::fabs((g1 - g0) - slope) <= 1e-10, std::fabs((g1 - g0) - slope), 1e-10);
  }

  // --- Lemma C.2: Isserlis moment identity ---
  {
    Vector eigs3(3);
    eigs3 << 1.5, 1.0, 0.4;
    RngStream brng = make_rng(opt.seed).split("verify-isserlis-basis");
    const SpectralCovariance cov3 = SpectralCovariance::random_basis(brng, eigs3);
    const Matrix Lam = cov3.materialize();
    RngStream wrng = make_rng(opt.seed).split("verify-isserlis-w");
    const Vector w = gauss_vector(wrng, 3);
    const double sigma = 0.3;
    const Matrix target = sigma * sigma * Lam + induced_norm_sq(w, Lam) * Lam +
                          2.0 * Lam * w * w.transpose() * Lam;
    const long n = 200000;
    RngStream srng = make_rng(opt.seed).split("verify-isserlis-mc");
    Matrix sum = Matrix::Zero(3, 3), sum_sq = Matrix::Zero(3, 3);
    for (long t = 0; t < n; ++t) {
      const Vector x = cov3.sample(srng);
      const double y = w.dot(x) + sigma * srng.next_gauss();
      const Matrix m = y * y * x * x.transpose();
      sum += m;
      sum_sq += m.cwiseProduct(m);
    }
    bool ok = true;
    double worst = 0.0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        const double mean = sum(i, j) / n;
        const double se =
            std::sqrt(std::max(0.0, sum_sq(i, j) / n - mean * mean) / n);
        const double dev = std::fabs(mean - target(i, j));
        if (dev > 3.0 * se) ok = false;
        worst = std::max(worst, dev / (3.0 * se));
      }
    rep.check("Lemma C.2", "MC E[y^2 x x^T] matches the Isserlis closed form entrywise",
              ok, worst, 1.0);
  }

  // --- analytic gradient vs finite differences ---
  {
    RngStream rng = root.split("verify-fd");
    reg::FactorizedLSA point{gauss_matrix(rng, d, 2), gauss_matrix(rng, d, 2), 1.0};
    const double err = reg::gradient_fd_check(setting, point, 1e-5);
    rep.check("Lemma 3.1", "analytic gradient matches central differences", err <= 1e-5,
              err, 1e-5);
  }
}

inline void verify_parity(VerifyReport& rep, const VerifyOptions& opt) {
  namespace par = icl::parity;
  const RngStream root = make_rng(opt.seed);

  // --- Thm 5.1: construction, coverage, minimality, zero loss ---
  for (int nu2 : {1, 2, 3}) {
    for (double gamma : {0.05, 0.1, 0.2}) {
      par::ParityConfig cfg;
      cfg.nu1 = 1;
      cfg.nu2 = nu2;
      cfg.gamma = gamma;
      cfg.p_T = 0.5 * par::pT_threshold(gamma, 1 << nu2);
      if (nu2 == 1) cfg.p_T = 0.0;  // d = k: S2 is empty
      const auto g2 = par::build_optimal(cfg, par::ModelSize::Large);
      const double loss = par::exact_population_loss(g2, cfg);
      rep.check("Thm 5.1",
                "exact loss of g*2 is 0 at nu2=" + std::to_string(nu2) +
                    " gamma=" + format_double(gamma),
                loss == 0.0, loss, 0.0);
      const auto covered = par::pattern_coverage(g2, cfg.d());
      const auto want = par::all_patterns(cfg.d());
      rep.check("Thm 5.1",
                "g*2 covers all patterns at nu2=" + std::to_string(nu2) +
                    " gamma=" + format_double(gamma),
                covered.size() == want.size(), static_cast<double>(covered.size()),
                static_cast<double>(want.size()));
    }
  }
  {
    const int min_heads = par::bruteforce_min_heads(4, 0.1);
    rep.check("Thm 5.1", "exhaustive search: minimum head count at d=4 is 2(nu2+1) = 6",
              min_heads == 6, min_heads, 6.0);
  }
  {
    // Small-model regime: zero loss on S1, exactly p_T-weighted loss on S2.
    par::ParityConfig cfg;
    cfg.nu1 = 1;
    cfg.nu2 = 3;
    cfg.gamma = 0.1;
    cfg.p_T = 0.5 * par::pT_threshold(cfg.gamma, cfg.d());
    auto g1 = par::build_optimal(cfg, par::ModelSize::Small);
    if (opt.perturb != 0.0)
      for (auto& v : g1.vdiags) v.array() += opt.perturb;
    const auto ts = par::task_sets(cfg.k(), cfg.d());
    const double s1_loss = par::exact_loss_on_pairs(g1, cfg, ts.s1);
    const double s2_loss = par::exact_loss_on_pairs(g1, cfg, ts.s2);
    const double mix = par::exact_population_loss(g1, cfg);
    rep.check("Thm 5.1", "g*1 has zero S1-restricted loss", s1_loss == 0.0, s1_loss, 0.0);
    rep.check("Thm 5.1", "g*1 mixture loss = p_T x (S2 enumerated loss) > 0",
              mix > 0.0 && std::fabs(mix - cfg.p_T * s2_loss) <= 1e-15,
              std::fabs(mix - cfg.p_T * s2_loss), 1e-15);
  }

  // --- Thm 5.2: projection energy ratio and residual scaling ---
  for (auto [n1, n2] : {std::pair{1, 2}, std::pair{1, 3}, std::pair{2, 3}}) {
    par::ParityConfig cfg;
    cfg.nu1 = n1;
    cfg.nu2 = n2;
    cfg.gamma = 0.1;
    cfg.p_T = 0.0;
    const std::string label =
        "verify-ratio/" + std::to_string(n1) + "-" + std::to_string(n2);
    const auto er =
        par::projection_energy_ratio(root.split(label), cfg, 64, 20000, opt.threads);
    const double formula = (n1 + 1.0) / (n2 + 1.0);
    rep.check("Thm 5.2",
              "projection energy ratio ~ (nu1+1)/(nu2+1) at (" + std::to_string(n1) + "," +
                  std::to_string(n2) + ")",
              std::fabs(er.ratio / formula - 1.0) <= 0.05,
              std::fabs(er.ratio / formula - 1.0), 0.05);
    const double t1 = (n1 + 1.0) / 64.0, t2 = (n2 + 1.0) / 64.0;
    rep.check("Thm 5.2", "each projection energy ~ (nu_j+1)/M",
              std::fabs(er.energy_small / t1 - 1.0) <= 0.05 &&
                  std::fabs(er.energy_large / t2 - 1.0) <= 0.05,
              std::max(std::fabs(er.energy_small / t1 - 1.0),
                       std::fabs(er.energy_large / t2 - 1.0)),
              0.05);
  }
  {
    par::ParityConfig cfg;
    cfg.nu1 = 1;
    cfg.nu2 = 3;
    cfg.gamma = 0.1;
    cfg.p_T = 0.0;
    for (const auto& [name, which] : {std::pair{"g1", par::ModelSize::Small},
                                      std::pair{"g2", par::ModelSize::Large}}) {
      std::vector<double> ms, rmss;
      for (long M : {16L, 64L, 256L, 1024L}) {
        const std::string label = std::string("verify-residual/") + name + "/" +
                                  std::to_string(M);
        const auto stats = par::decomposition_residual(
            root.split(label), cfg, which, M, 4000, par::NoiseMode::Idealized, opt.threads);
        ms.push_back(static_cast<double>(M));
        rmss.push_back(stats.rms);
      }
      double sx = 0, sy = 0, sxx = 0, sxy = 0;
      for (std::size_t i = 0; i < ms.size(); ++i) {
        const double lx = std::log(ms[i]), ly = std::log(rmss[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
      }
      const double slope =
          (ms.size() * sxy - sx * sy) / (ms.size() * sxx - sx * sx);
      rep.check("Thm 5.2",
                std::string("residual RMS log-log slope is -0.5 +- 0.1 for ") + name,
                std::fabs(slope + 0.5) <= 0.1, slope, -0.5);
    }
  }
  {
    // Noise ordering at matched prompts: smaller nu -> strictly smaller
    // projected noise energy.
    par::ParityConfig cfg;
    cfg.nu1 = 1;
    cfg.nu2 = 3;
    cfg.gamma = 0.1;
    cfg.p_T = 0.0;
    const auto er =
        par::projection_energy_ratio(root.split("verify-ordering"), cfg, 64, 20000,
                                     opt.threads);
    rep.check("Thm 5.2", "effective noise energy strictly increases with nu",
              er.energy_small < er.energy_large, er.energy_small, er.energy_large);
  }
}

}  // namespace detail

inline VerifyReport run_verify(const VerifyOptions& opt) {
  VerifyReport rep;
  rep.note("icl-lab verify (seed " + std::to_string(opt.seed) + ", suite " + opt.suite + ")");
  if (opt.suite == "all" || opt.suite == "regression") {
    detail::verify_regression(rep, opt);
  } else {
    rep.note("regression suites skipped (--suite " + opt.suite + ")");
  }
  if (opt.suite == "all" || opt.suite == "parity") {
    detail::verify_parity(rep, opt);
  } else {
    rep.note("parity suites skipped (--suite " + opt.suite + ")");
  }
  return rep;
}

}  // namespace icl
