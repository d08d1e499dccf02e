#pragma once

// Experiment sweeps: deterministic CSV tables plus a JSON run manifest with
// per-table content digests. Every row carries the seed that produced it and
// each Monte Carlo cell runs on its own labelled child stream, so rows can be
// re-derived in isolation.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "icl/config.hpp"
#include "icl/csv.hpp"
#include "icl/regression.hpp"
#include "icl/version.hpp"

namespace icl {

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << bytes;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

inline std::string iso_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

class ManifestBuilder {
 public:
  explicit ManifestBuilder(const RunConfig& cfg) {
    j_["config"] = config_echo(cfg);
    j_["tool_version"] = kVersion;
    j_["started_at"] = iso_timestamp();
  }
  void add_table(const std::string& name, const std::string& bytes) {
    char hex[32];
    std::snprintf(hex, sizeof(hex), "fnv1a:%016llx",
                  static_cast<unsigned long long>(fnv1a_digest(bytes)));
    j_["tables"][name] = hex;
  }
  void add_extra(const std::string& key, const nlohmann::json& value) { j_[key] = value; }
  void write(const std::filesystem::path& dir) {
    j_["finished_at"] = iso_timestamp();
    write_file(dir / "manifest.json", j_.dump(2) + "\n");
  }

 private:
  nlohmann::json j_;
};

inline regression::RegressionSetting make_regression_setting(
    const RunConfig& cfg) {
  const auto& rc = cfg.regression;
  Vector eigs(rc.d);
  if (rc.eigenvalues.empty()) {
    for (int i = 0; i < rc.d; ++i) eigs[i] = 2.0 * std::pow(0.7, i);
  } else {
    for (int i = 0; i < rc.d; ++i) eigs[i] = rc.eigenvalues[i];
  }
  RngStream basis_rng = make_rng(cfg.seed).split("eigenbasis");
  return regression::RegressionSetting(
      SpectralCovariance::random_basis(basis_rng, eigs), rc.N);
}

// Least-squares slope of log(y) against log(x).
inline double loglog_slope(const std::vector<double>& xs, const std::vector<double>& ys) {
  const std::size_t n = xs.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double lx = std::log(xs[i]), ly = std::log(ys[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

inline void run_regression_sweep(const RunConfig& cfg, const std::filesystem::path& out_dir) {
  namespace reg = icl::regression;
  const auto& rc = cfg.regression;
  std::filesystem::create_directories(out_dir);
  const reg::RegressionSetting setting = make_regression_setting(cfg);
  const int signal_rank =
      rc.signal_rank > 0 ? rc.signal_rank
                         : *std::min_element(rc.r_list.begin(), rc.r_list.end());

  // Evaluation weight confined to the top signal_rank eigendirections.
  Vector s_coeffs = Vector::Zero(rc.d);
  for (int i = 0; i < signal_rank; ++i) s_coeffs[i] = 1.0;
  const Vector w = setting.cov.basis() * s_coeffs;

  const RngStream root = make_rng(cfg.seed);
  ManifestBuilder manifest(cfg);

  CsvTable eval_table({"seed", "d", "N", "M", "r", "sigma", "closed_form", "mc_mean",
                       "mc_stderr", "gap_formula"});
  for (long M : rc.M_list)
    for (int r : rc.r_list)
      for (double sigma : rc.sigma_list) {
        const auto dec = reg::decompose_weight(w, setting, r);
        const double closed = reg::eval_loss_closed(setting, M, r, dec, sigma);
        const std::string label = "eval/M=" + std::to_string(M) + "/r=" + std::to_string(r) +
                                  "/sigma=" + format_double(sigma);
        const auto lsa = reg::optimal_rank_r(setting, r);
        const MeanStderr mc = reg::eval_loss_mc(root.split(label), lsa, setting, w, M,
                                                sigma, cfg.trials, cfg.threads);
        const double gap =
            r >= signal_rank
                ? reg::behavior_gap_closed(setting, M, signal_rank, r, s_coeffs, sigma)
                : 0.0;
        eval_table.add_row({std::to_string(cfg.seed), std::to_string(rc.d),
                            std::to_string(rc.N), std::to_string(M), std::to_string(r),
                            format_double(sigma), format_double(closed),
                            format_double(mc.mean), format_double(mc.stderr_),
                            format_double(gap)});
      }
  const std::string eval_bytes = eval_table.to_string();
  write_file(out_dir / "regression_eval.csv", eval_bytes);
  manifest.add_table("regression_eval.csv", eval_bytes);

  CsvTable opt_table({"seed", "r", "gd_loss", "closed_loss", "rel_err"});
  for (int r : rc.r_list) {
    RngStream gd_rng = root.split("gd/r=" + std::to_string(r));
    reg::FitHyperparams hyper;
    hyper.restarts = rc.gd_restarts;
    hyper.steps = rc.gd_steps;
    const auto fit = reg::fit_rank_r(gd_rng, setting, r, hyper);
    const double closed =
        reg::simplified_loss(reg::optimal_rank_r(setting, r).U, 1.0, setting);
    const double rel =
        std::fabs(fit.loss - closed) / std::max(1e-300, std::fabs(closed));
    opt_table.add_row({std::to_string(cfg.seed), std::to_string(r), format_double(fit.loss),
                       format_double(closed), format_double(rel)});
  }
  const std::string opt_bytes = opt_table.to_string();
  write_file(out_dir / "regression_opt.csv", opt_bytes);
  manifest.add_table("regression_opt.csv", opt_bytes);
  manifest.write(out_dir);
}

inline void run_parity_sweep(const RunConfig& cfg, const std::filesystem::path& out_dir) {
  namespace par = icl::parity;
  const auto& pc = cfg.parity;
  std::filesystem::create_directories(out_dir);

  par::ParityConfig pcfg;
  pcfg.nu1 = pc.nu1;
  pcfg.nu2 = pc.nu2;
  pcfg.gamma = pc.gamma;
  pcfg.p_T = pc.p_T >= 0.0 ? pc.p_T : 0.5 * par::pT_threshold(pc.gamma, 1 << pc.nu2);
  par::validate(pcfg);

  const RngStream root = make_rng(cfg.seed);
  ManifestBuilder manifest(cfg);
  if (pcfg.p_T == 0.0)
    manifest.add_extra("note",
                       "p_T = 0: S2 has zero weight, the small/large distinction is vacuous");

  RngStream dict_rng = root.split("dictionary");
  const Matrix G = random_orthonormal(dict_rng, pcfg.d());
  const auto g1 = par::build_optimal(pcfg, par::ModelSize::Small);
  const auto g2 = par::build_optimal(pcfg, par::ModelSize::Large);

  CsvTable loss_table({"seed", "model", "p_T", "exact_loss", "mc_mean", "mc_stderr"});
  for (const auto& [name, diag] : {std::pair{"g1", &g1}, std::pair{"g2", &g2}}) {
    const double exact = par::exact_population_loss(*diag, pcfg);
    const auto embedded = par::embed_model(*diag, G);
    const MeanStderr mc =
        par::mc_population_loss(root.split(std::string("mcloss/") + name), embedded, pcfg,
                                G, pc.mc_prompt_length, pc.mc_trials, cfg.threads);
    loss_table.add_row({std::to_string(cfg.seed), name, format_double(pcfg.p_T),
                        format_double(exact), format_double(mc.mean),
                        format_double(mc.stderr_)});
  }
  const std::string loss_bytes = loss_table.to_string();
  write_file(out_dir / "parity_loss.csv", loss_bytes);
  manifest.add_table("parity_loss.csv", loss_bytes);

  CsvTable ratio_table({"seed", "nu1", "nu2", "M", "mc_ratio", "formula_ratio"});
  for (auto [n1, n2] : pc.ratio_pairs) {
    par::ParityConfig rcfg;
    rcfg.nu1 = n1;
    rcfg.nu2 = n2;
    rcfg.gamma = pcfg.gamma;
    rcfg.p_T = 0.0;
    const std::string label = "ratio/" + std::to_string(n1) + "-" + std::to_string(n2);
    const auto er = par::projection_energy_ratio(root.split(label), rcfg, pc.ratio_M,
                                                 pc.ratio_trials, cfg.threads);
    const double formula = (n1 + 1.0) / (n2 + 1.0);
    ratio_table.add_row({std::to_string(cfg.seed), std::to_string(n1), std::to_string(n2),
                         std::to_string(pc.ratio_M), format_double(er.ratio),
                         format_double(formula)});
  }
  const std::string ratio_bytes = ratio_table.to_string();
  write_file(out_dir / "parity_ratio.csv", ratio_bytes);
  manifest.add_table("parity_ratio.csv", ratio_bytes);

  CsvTable residual_table({"seed", "model", "M", "rms", "max_abs"});
  nlohmann::json slopes;
  for (const auto& [name, which] : {std::pair{"g1", par::ModelSize::Small},
                                    std::pair{"g2", par::ModelSize::Large}}) {
    std::vector<double> ms, rmss;
    for (long M : pc.M_list) {
      const std::string label =
          "residual/" + std::string(name) + "/M=" + std::to_string(M);
      const auto stats = par::decomposition_residual(root.split(label), pcfg, which, M,
                                                     pc.residual_trials,
                                                     par::NoiseMode::Idealized, cfg.threads);
      residual_table.add_row({std::to_string(cfg.seed), name, std::to_string(M),
                              format_double(stats.rms), format_double(stats.max_abs)});
      ms.push_back(static_cast<double>(M));
      rmss.push_back(stats.rms);
    }
    if (ms.size() >= 2) slopes[name] = loglog_slope(ms, rmss);
  }
  const std::string residual_bytes = residual_table.to_string();
  write_file(out_dir / "parity_residual.csv", residual_bytes);
  manifest.add_table("parity_residual.csv", residual_bytes);
  manifest.add_extra("residual_loglog_slopes", slopes);
  manifest.write(out_dir);
}

}  // namespace icl
