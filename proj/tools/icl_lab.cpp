// icl-lab: command-line front end for the in-context-learning laboratory.
//
// Exit codes: 0 success, 1 verification failure, 2 configuration error,
// 3 I/O error.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "icl/config.hpp"
#include "icl/csv.hpp"
#include "icl/svg.hpp"
#include "icl/sweeps.hpp"
#include "icl/verify.hpp"
#include "icl/version.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitVerifyFail = 1;
constexpr int kExitConfig = 2;
constexpr int kExitIo = 3;

int run_sweep(const std::string& config_path, const std::string& out_dir,
              const std::string& experiment) {
  icl::RunConfig cfg;
  try {
    cfg = icl::load_config(config_path);
  } catch (const icl::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  }
  if (!cfg.experiment.empty() && cfg.experiment != experiment) {
    std::cerr << "config error: config declares experiment '" << cfg.experiment
              << "' but the '" << experiment << "' subcommand was invoked\n";
    return kExitConfig;
  }
  if (!out_dir.empty()) cfg.out_dir = out_dir;
  try {
    const std::filesystem::path out = cfg.out_dir;
    std::filesystem::create_directories(out);
    if (experiment == "regression-sweep")
      icl::run_regression_sweep(cfg, out);
    else
      icl::run_parity_sweep(cfg, out);
    std::cout << experiment << " complete; outputs in " << out.string() << "\n";
    return kExitOk;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kExitIo;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"icl-lab: numerical checks of in-context linear regression and sparse "
               "parity closed forms"};
  app.set_version_flag("--version", std::string(icl::kVersion));
  app.require_subcommand(1);

  std::string config_path, out_dir;
  auto* reg = app.add_subcommand(
      "regression-sweep",
      "Run the linear-regression sweep described by a JSON config.\n"
      "Config keys: seed, experiment, trials, threads, out_dir, regression{d, N,\n"
      "eigenvalues, M_list, r_list, sigma_list, signal_rank, B, gd_restarts,\n"
      "gd_steps}. Writes regression_eval.csv, regression_opt.csv,\n"
      "manifest.json.");
  reg->add_option("--config", config_path, "JSON config path")->required();
  reg->add_option("--out", out_dir, "output directory (overrides config out_dir)");

  auto* par = app.add_subcommand(
      "parity-sweep",
      "Run the sparse-parity sweep described by a JSON config.\n"
      "Config keys: seed, experiment, trials, threads, out_dir, parity{nu1, nu2,\n"
      "gamma, p_T, M_list, mc_prompt_length, mc_trials, residual_trials,\n"
      "ratio_trials, ratio_M, ratio_pairs}. Writes parity_loss.csv,\n"
      "parity_ratio.csv, parity_residual.csv, manifest.json.");
  par->add_option("--config", config_path, "JSON config path")->required();
  par->add_option("--out", out_dir, "output directory (overrides config out_dir)");

  icl::VerifyOptions vopt;
  auto* ver = app.add_subcommand(
      "verify", "Check every closed form against its independent oracle.");
  ver->add_option("--suite", vopt.suite, "all | regression | parity")
      ->check(CLI::IsMember({"all", "regression", "parity"}))
      ->default_val("all");
  ver->add_option("--seed", vopt.seed, "base seed for the verification runs");
  ver->add_option("--threads", vopt.threads,
                  "worker threads (0 = ICL_LAB_THREADS or all cores)");
  ver->add_option("--perturb", vopt.perturb,
                  "fault injection: offset added to closed-form optima; any nonzero "
                  "value must make the run fail");

  std::string csv_path, x_col, y_col, series_col, svg_out;
  auto* plot = app.add_subcommand("plot", "Render a CSV column pair as an SVG scatter/line plot.");
  plot->add_option("--csv", csv_path, "input CSV path")->required();
  plot->add_option("--x", x_col, "x-axis column name")->required();
  plot->add_option("--y", y_col, "y-axis column name")->required();
  plot->add_option("--series", series_col, "optional column to split series on");
  plot->add_option("--out", svg_out, "output .svg path")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitConfig;
  }

  if (reg->parsed()) return run_sweep(config_path, out_dir, "regression-sweep");
  if (par->parsed()) return run_sweep(config_path, out_dir, "parity-sweep");

  if (ver->parsed()) {
    const icl::VerifyReport report = icl::run_verify(vopt);
    std::cout << report.render();
    return report.all_passed() ? kExitOk : kExitVerifyFail;
  }

  if (plot->parsed()) {
    icl::CsvData data;
    try {
      data = icl::read_csv(csv_path);
    } catch (const std::invalid_argument& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return kExitConfig;
    } catch (const std::exception& e) {
      std::cerr << "i/o error: " << e.what() << "\n";
      return kExitIo;
    }
    try {
      const std::string svg =
          icl::emit_plot_svg(data, icl::PlotSpec{x_col, y_col, series_col});
      icl::write_file(svg_out, svg);
    } catch (const std::invalid_argument& e) {
      std::cerr << "config error: " << e.what() << "\n";
      return kExitConfig;
    } catch (const std::exception& e) {
      std::cerr << "i/o error: " << e.what() << "\n";
      return kExitIo;
    }
    std::cout << "wrote " << svg_out << "\n";
    return kExitOk;
  }

  return kExitConfig;
}
