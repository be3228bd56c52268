#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "confglm/csv.hpp"
#include "confglm/glm.hpp"
#include "confglm/pipeline.hpp"
#include "confglm/rng.hpp"
#include "confglm/sim.hpp"
#include "confglm/stats.hpp"

namespace {

using namespace confglm;
using nlohmann::json;

constexpr int kExitInput = 2;
constexpr int kExitInvalidRun = 3;

int cmd_simulate(const std::string& config_path, const std::string& out_dir) {
  std::ifstream in(config_path);
  if (!in) {
    std::fprintf(stderr, "error: cannot open config file '%s'\n", config_path.c_str());
    return kExitInput;
  }
  std::stringstream ss;
  ss << in.rdbuf();
  SimConfig config;
  try {
    config = SimConfig::from_json_text(ss.str());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s: %s\n", config_path.c_str(), e.what());
    return kExitInput;
  }

  std::filesystem::create_directories(out_dir);
  const CoverageSummary summary = run_replications(config);
  {
    std::ofstream js(out_dir + "/summary.json");
    js << summary.to_json_text(config) << "\n";
  }
  summary.write_records_csv(out_dir + "/records.csv");
  for (const auto& [name, ms] : summary.per_method)
    std::printf("%s: coverage=%.4f mean_ci_length=%.6f n_success=%d n_fail=%d\n",
                name.c_str(), ms.coverage, ms.mean_ci_length, ms.n_success,
                ms.n_fail);
  if (!summary.valid) {
    std::fprintf(stderr, "error: run invalid (more than 5%% replication failures)\n");
    return kExitInvalidRun;
  }
  return 0;
}

int cmd_infer(const std::string& data_csv, const std::string& response_col,
              std::vector<std::string> exposures, const std::string& family_str,
              const std::string& k_str, double alpha, std::uint64_t seed,
              const std::string& out_path) {
  Family family;
  if (family_str == "linear") family = Family::linear;
  else if (family_str == "logistic") family = Family::logistic;
  else if (family_str == "poisson") family = Family::poisson;
  else {
    std::fprintf(stderr, "error: unknown family '%s'\n", family_str.c_str());
    return kExitInput;
  }

  int k = -1;
  if (k_str != "auto") {
    try {
      k = std::stoi(k_str);
    } catch (...) {
      std::fprintf(stderr, "error: --k must be 'auto' or a non-negative integer\n");
      return kExitInput;
    }
    if (k < 0) {
      std::fprintf(stderr, "error: --k must be 'auto' or a non-negative integer\n");
      return kExitInput;
    }
  }

  CsvTable table;
  try {
    table = read_csv(data_csv);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInput;
  }
  const Eigen::Index resp_idx = table.column_index(response_col);
  if (resp_idx < 0) {
    std::fprintf(stderr, "error: response column '%s' not found\n", response_col.c_str());
    return kExitInput;
  }

  // Covariate matrix: every column except the response, in file order.
  std::vector<std::string> cov_names;
  MatrixXd x(table.values.rows(), table.values.cols() - 1);
  Eigen::Index c = 0;
  for (Eigen::Index j = 0; j < table.values.cols(); ++j) {
    if (j == resp_idx) continue;
    cov_names.push_back(table.columns[j]);
    x.col(c++) = table.values.col(j);
  }
  const VectorXd y = table.values.col(resp_idx);

  if (exposures.size() == 1 && exposures[0] == "all") {
    exposures = cov_names;
  }
  std::vector<Eigen::Index> exp_idx;
  for (const auto& name : exposures) {
    Eigen::Index found = -1;
    for (std::size_t j = 0; j < cov_names.size(); ++j)
      if (cov_names[j] == name) found = static_cast<Eigen::Index>(j);
    if (found < 0) {
      std::fprintf(stderr, "error: exposure column '%s' not found\n", name.c_str());
      return kExitInput;
    }
    exp_idx.push_back(found);
  }

  try {
    check_responses(family, y);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInput;
  }

  try {
    PipelineOptions opts;
    opts.alpha = alpha;
    opts.seed = seed;
    opts.k = k;

    // The factor stage depends only on X: run it once, reuse per exposure.
    const FactorStage fs = run_factor_stage(x, k, opts);
    opts.uhat_override = &fs.uhat;

    const std::size_t m = exp_idx.size();
    json jrows = json::array();
    std::vector<std::vector<std::string>> rows;
    for (std::size_t t = 0; t < m; ++t) {
      const PipelineResult res = full_pipeline(family, y, x, exp_idx[t], opts);
      const InferenceResult& inf = res.inference;
      const bool significant = inf.p_value < alpha / double(m);
      const double p_adj = std::min(1.0, double(m) * inf.p_value);
      rows.push_back({exposures[t], format_double(inf.theta_tilde),
                      format_double(inf.ci_low), format_double(inf.ci_high),
                      format_double(inf.p_value), format_double(inf.z),
                      format_double(p_adj), significant ? "1" : "0",
                      std::to_string(fs.k)});
      jrows.push_back({{"column_name", exposures[t]},
                       {"theta_tilde", inf.theta_tilde},
                       {"ci_low", inf.ci_low},
                       {"ci_high", inf.ci_high},
                       {"p_value", inf.p_value},
                       {"effect_size", inf.z},
                       {"p_value_bonferroni", p_adj},
                       {"significant_bonferroni", significant},
                       {"k_used", fs.k}});
    }
    write_csv(out_path,
              {"column_name", "theta_tilde", "ci_low", "ci_high", "p_value",
               "effect_size", "p_value_bonferroni", "significant_bonferroni",
               "k_used"},
              rows);
    const std::string json_path =
        std::filesystem::path(out_path).replace_extension(".json").string();
    std::ofstream js(json_path);
    js << json({{"alpha", alpha},
                {"n_exposures", m},
                {"family", family_name(family)},
                {"rows", jrows}})
              .dump(2)
       << "\n";
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInput;
  }
  return 0;
}

int cmd_select_k(const std::string& data_csv, int draws, double quantile,
                 std::uint64_t seed) {
  CsvTable table;
  try {
    table = read_csv(data_csv);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInput;
  }
  try {
    if (table.values.rows() < 3)
      throw InvalidInput("select-k: need at least 3 data rows");
    PaOptions pa;
    pa.n_null_draws = draws;
    pa.quantile = quantile;
    pa.seed = seed;
    const VectorXd thr =
        pa_null_thresholds(table.values.rows(), table.values.cols(), pa);
    const VectorXd obs = correlation_eigenvalues(table.values);
    const int k = select_k_with_thresholds(table.values, thr);
    std::printf("selected_k,%d\n", k);
    std::printf("rank,observed_eigenvalue,null_quantile,exceeds\n");
    for (Eigen::Index j = 0; j < obs.size(); ++j)
      std::printf("%ld,%s,%s,%d\n", long(j + 1), format_double(obs(j)).c_str(),
                  format_double(thr(j)).c_str(), obs(j) > thr(j) ? 1 : 0);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitInput;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Debiased inference for high-dimensional GLMs with hidden confounding"};
  app.require_subcommand(1);

  auto* sim = app.add_subcommand("simulate", "Run a Monte-Carlo coverage study");
  std::string config_path, out_dir;
  sim->add_option("--config", config_path, "JSON configuration file")->required();
  sim->add_option("--out", out_dir, "Output directory")->required();

  auto* infer = app.add_subcommand("infer", "Debiased inference on CSV data");
  std::string data_csv, response_col, family_str = "linear", k_str = "auto", out_path;
  std::vector<std::string> exposures;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  infer->add_option("--data", data_csv, "Input CSV (header + numeric body)")->required();
  infer->add_option("--response", response_col, "Response column name")->required();
  infer->add_option("--exposures", exposures, "Exposure column names, or 'all'")
      ->required()
      ->delimiter(',');
  infer->add_option("--family", family_str, "linear|logistic|poisson");
  infer->add_option("--k", k_str, "Number of confounders, or 'auto'");
  infer->add_option("--alpha", alpha, "CI level alpha");
  infer->add_option("--seed", seed, "RNG seed");
  infer->add_option("--out", out_path, "Output CSV path (JSON written alongside)")
      ->required();

  auto* selk = app.add_subcommand("select-k", "Choose K by parallel analysis");
  std::string sk_data;
  int sk_draws = 100;
  double sk_quantile = 0.95;
  std::uint64_t sk_seed = 0;
  selk->add_option("--data", sk_data, "Input CSV")->required();
  selk->add_option("--draws", sk_draws, "Number of null draws");
  selk->add_option("--quantile", sk_quantile, "Null eigenvalue quantile");
  selk->add_option("--seed", sk_seed, "RNG seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }

  if (sim->parsed()) return cmd_simulate(config_path, out_dir);
  if (infer->parsed())
    return cmd_infer(data_csv, response_col, exposures, family_str, k_str, alpha,
                     seed, out_path);
  if (selk->parsed()) return cmd_select_k(sk_data, sk_draws, sk_quantile, sk_seed);
  return kExitInput;
}
