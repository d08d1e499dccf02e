#pragma once

// JSON run configuration. The key set is closed: unknown keys are rejected
// with the list of accepted keys, and every numeric field is validated
// against the library preconditions with the field named in the error.

#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "icl/csv.hpp"
#include "icl/parity.hpp"

namespace icl {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RegressionSweepConfig {
  int d = 4;
  long N = 8;
  std::vector<double> eigenvalues;  // empty -> default spectrum for d
  std::vector<long> M_list = {4, 16};
  std::vector<int> r_list = {1, 2, 4};
  std::vector<double> sigma_list = {0.0, 0.5};
  int signal_rank = 0;  // 0 -> min of r_list
  long B = 100000;
  int gd_restarts = 20;
  long gd_steps = 50000;
};

struct ParitySweepConfig {
  int nu1 = 1;
  int nu2 = 3;
  double gamma = 0.1;
  double p_T = -1.0;  // negative -> half the admissible threshold
  std::vector<long> M_list = {16, 64, 256, 1024};
  long mc_prompt_length = 4096;
  long mc_trials = 10000;
  long residual_trials = 20000;
  long ratio_trials = 100000;
  long ratio_M = 64;
  std::vector<std::pair<int, int>> ratio_pairs = {{1, 2}, {1, 3}, {2, 3}};
};

struct RunConfig {
  std::uint64_t seed = 0;
  std::string experiment;  // regression-sweep | parity-sweep | verify
  long trials = 100000;
  int threads = 0;  // 0 -> available cores; ICL_LAB_THREADS overrides
  std::string out_dir = "out";
  RegressionSweepConfig regression;
  ParitySweepConfig parity;
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& obj,
                                const std::set<std::string>& accepted,
                                const std::string& context) {
  for (const auto& [key, _] : obj.items())
    if (!accepted.count(key)) {
      std::string list;
      for (const auto& k : accepted) list += (list.empty() ? "" : ", ") + k;
      throw ConfigError("unknown key \"" + context + key + "\"; accepted keys: " + list);
    }
}

template <typename T>
void read_field(const nlohmann::json& obj, const char* key, T& out) {
  if (obj.contains(key)) out = obj.at(key).get<T>();
}

}  // namespace detail

inline RunConfig parse_config(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config root must be a JSON object");
  detail::reject_unknown_keys(
      j, {"seed", "experiment", "trials", "threads", "out_dir", "regression", "parity"}, "");
  RunConfig cfg;
  detail::read_field(j, "seed", cfg.seed);
  detail::read_field(j, "experiment", cfg.experiment);
  detail::read_field(j, "trials", cfg.trials);
  detail::read_field(j, "threads", cfg.threads);
  detail::read_field(j, "out_dir", cfg.out_dir);
  if (cfg.experiment != "regression-sweep" && cfg.experiment != "parity-sweep" &&
      cfg.experiment != "verify")
    throw ConfigError(
        "experiment must be one of regression-sweep, parity-sweep, verify");
  if (cfg.trials < 1) throw ConfigError("trials must be >= 1");
  if (cfg.threads < 0) throw ConfigError("threads must be >= 0 (0 = available cores)");

  if (j.contains("regression")) {
    const auto& r = j.at("regression");
    detail::reject_unknown_keys(r,
                                {"d", "N", "eigenvalues", "M_list", "r_list", "sigma_list",
                                 "signal_rank", "B", "gd_restarts", "gd_steps"},
                                "regression.");
    auto& rc = cfg.regression;
    detail::read_field(r, "d", rc.d);
    detail::read_field(r, "N", rc.N);
    detail::read_field(r, "eigenvalues", rc.eigenvalues);
    detail::read_field(r, "M_list", rc.M_list);
    detail::read_field(r, "r_list", rc.r_list);
    detail::read_field(r, "sigma_list", rc.sigma_list);
    detail::read_field(r, "signal_rank", rc.signal_rank);
    detail::read_field(r, "B", rc.B);
    detail::read_field(r, "gd_restarts", rc.gd_restarts);
    detail::read_field(r, "gd_steps", rc.gd_steps);
    if (rc.d < 1) throw ConfigError("regression.d must be >= 1");
    if (rc.N < 1) throw ConfigError("regression.N must be >= 1");
    if (!rc.eigenvalues.empty() && static_cast<int>(rc.eigenvalues.size()) != rc.d)
      throw ConfigError("regression.eigenvalues must have d entries");
    for (double l : rc.eigenvalues)
      if (l < 0.0) throw ConfigError("regression.eigenvalues must be nonnegative");
    if (rc.M_list.empty() || rc.r_list.empty() || rc.sigma_list.empty())
      throw ConfigError("regression.M_list, r_list, sigma_list must be nonempty");
    for (long m : rc.M_list)
      if (m < 1) throw ConfigError("regression.M_list entries must be >= 1");
    for (int rr : rc.r_list)
      if (rr < 0 || rr > rc.d) throw ConfigError("regression.r_list entries must be in [0, d]");
    for (double s : rc.sigma_list)
      if (s < 0.0) throw ConfigError("regression.sigma_list entries must be >= 0");
    if (rc.signal_rank < 0 || rc.signal_rank > rc.d)
      throw ConfigError("regression.signal_rank must be in [0, d]");
    if (rc.B < 1) throw ConfigError("regression.B must be >= 1");
    if (rc.gd_restarts < 1 || rc.gd_steps < 1)
      throw ConfigError("regression.gd_restarts and gd_steps must be >= 1");
  }

  if (j.contains("parity")) {
    const auto& p = j.at("parity");
    detail::reject_unknown_keys(
        p,
        {"nu1", "nu2", "gamma", "p_T", "M_list", "mc_prompt_length", "mc_trials",
         "residual_trials", "ratio_trials", "ratio_M", "ratio_pairs"},
        "parity.");
    auto& pc = cfg.parity;
    detail::read_field(p, "nu1", pc.nu1);
    detail::read_field(p, "nu2", pc.nu2);
    detail::read_field(p, "gamma", pc.gamma);
    detail::read_field(p, "p_T", pc.p_T);
    detail::read_field(p, "M_list", pc.M_list);
    detail::read_field(p, "mc_prompt_length", pc.mc_prompt_length);
    detail::read_field(p, "mc_trials", pc.mc_trials);
    detail::read_field(p, "residual_trials", pc.residual_trials);
    detail::read_field(p, "ratio_trials", pc.ratio_trials);
    detail::read_field(p, "ratio_M", pc.ratio_M);
    if (p.contains("ratio_pairs")) {
      pc.ratio_pairs.clear();
      for (const auto& pair : p.at("ratio_pairs")) {
        if (!pair.is_array() || pair.size() != 2)
          throw ConfigError("parity.ratio_pairs entries must be [nu1, nu2]");
        pc.ratio_pairs.emplace_back(pair.at(0).get<int>(), pair.at(1).get<int>());
      }
    }
    if (pc.nu1 < 1 || pc.nu2 < pc.nu1) throw ConfigError("parity: need 1 <= nu1 <= nu2");
    if (pc.nu2 > 6) throw ConfigError("parity.nu2 must be <= 6 (enumeration cap)");
    if (!(pc.gamma > 0.0 && pc.gamma < 0.25))
      throw ConfigError("parity.gamma must lie in (0, 1/4)");
    const double thr = parity::pT_threshold(pc.gamma, 1 << pc.nu2);
    if (pc.p_T >= 0.0 && pc.p_T >= thr)
      throw ConfigError("parity.p_T must lie in [0, " + format_double(thr) + ")");
    if (pc.M_list.empty()) throw ConfigError("parity.M_list must be nonempty");
    for (long m : pc.M_list)
      if (m < 4) throw ConfigError("parity.M_list entries must be >= 4");
    if (pc.mc_prompt_length < 1 || pc.mc_trials < 1 || pc.residual_trials < 1 ||
        pc.ratio_trials < 1 || pc.ratio_M < 1)
      throw ConfigError("parity: counts must be >= 1");
    for (auto [n1, n2] : pc.ratio_pairs)
      if (n1 < 1 || n2 < n1 || n2 > 6)
        throw ConfigError("parity.ratio_pairs: need 1 <= nu1 <= nu2 <= 6");
  }
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return parse_config(j);
}

inline nlohmann::json config_echo(const RunConfig& cfg) {
  nlohmann::json j;
  j["seed"] = cfg.seed;
  j["experiment"] = cfg.experiment;
  j["trials"] = cfg.trials;
  j["threads"] = cfg.threads;
  j["out_dir"] = cfg.out_dir;
  if (cfg.experiment == "regression-sweep") {
    const auto& r = cfg.regression;
    j["regression"] = {{"d", r.d},
                       {"N", r.N},
                       {"eigenvalues", r.eigenvalues},
                       {"M_list", r.M_list},
                       {"r_list", r.r_list},
                       {"sigma_list", r.sigma_list},
                       {"signal_rank", r.signal_rank},
                       {"B", r.B},
                       {"gd_restarts", r.gd_restarts},
                       {"gd_steps", r.gd_steps}};
  } else if (cfg.experiment == "parity-sweep") {
    const auto& p = cfg.parity;
    j["parity"] = {{"nu1", p.nu1},
                   {"nu2", p.nu2},
                   {"gamma", p.gamma},
                   {"p_T", p.p_T},
                   {"M_list", p.M_list},
                   {"mc_prompt_length", p.mc_prompt_length},
                   {"mc_trials", p.mc_trials},
                   {"residual_trials", p.residual_trials},
                   {"ratio_trials", p.ratio_trials},
                   {"ratio_M", p.ratio_M}};
  }
  return j;
}

}  // namespace icl
