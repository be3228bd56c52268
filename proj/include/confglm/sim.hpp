#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "confglm/score.hpp"
#include "confglm/types.hpp"

namespace confglm {

enum class Loading { diag_blocks, uniform };
enum class Method { proposed, oracle, naive };
enum class KMode { automatic, fixed };

const char* method_name(Method m);

// Synthetic design: X = W^T U + E with three confounders, theta* = 0,
// v* = (1, 0, ...), beta* = (1, 1, 1).
struct SimConfig {
  int n = 500;
  int p = 300;
  Family family = Family::linear;
  Loading loading = Loading::diag_blocks;
  int replications = 200;
  double alpha = 0.05;
  std::uint64_t seed = 0;
  std::vector<Method> methods = {Method::proposed, Method::oracle, Method::naive};
  KMode k_mode = KMode::automatic;
  int threads = 1;
  int cv_grid_size = 100;
  int pa_draws = 100;

  static constexpr int k_true = 3;
  static constexpr double theta_star = 0.0;

  void validate() const;
  static SimConfig from_json_text(const std::string& text);
  std::string to_json_text() const;
};

struct RepRecord {
  Method method = Method::proposed;
  int rep_index = 0;
  double theta_tilde = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  bool covered = false;
  double ci_length = 0.0;
  int k_selected = 0;
  bool failed = false;
  std::string error;
};

struct MethodSummary {
  int n_success = 0;
  int n_fail = 0;
  int n_covered = 0;
  double coverage = 0.0;  // n_covered / n_success (exact integer counting)
  double mean_ci_length = 0.0;
  double mean_abs_error = 0.0;
};

struct CoverageSummary {
  std::map<std::string, MethodSummary> per_method;
  std::vector<RepRecord> records;  // ordered by (rep_index, method)
  bool valid = true;               // false when any method fails > 5% of reps

  std::string to_json_text(const SimConfig& config) const;
  void write_records_csv(const std::string& path) const;
};

// Replication data with the draw order (U, E, W, response noise) fixed and the
// stream seeded by (config.seed, rep_index).
Dataset generate_dataset(const SimConfig& config, int rep_index);

// Loading matrix for the replication (diag blocks 0.5/1/1.5, or Unif[0,1]
// entries redrawn per replication).
MatrixXd loading_matrix(const SimConfig& config, int rep_index);

InferenceResult run_method(Method method, const Dataset& dataset,
                           const SimConfig& config, int rep_index,
                           const VectorXd* pa_thresholds, int* k_selected = nullptr);

CoverageSummary run_replications(const SimConfig& config);

// Shared null eigenvalue reference for the proposed method's parallel
// analysis, derived from config.seed only.
VectorXd sim_pa_thresholds(const SimConfig& config);

// Fit of eta-hat only (factor stage + CV + lasso), for estimation-error
// studies; returns the l1 distance to the generating coefficients.
double eta_l1_error(const Dataset& dataset, const SimConfig& config, int rep_index,
                    const VectorXd* pa_thresholds);

}  // namespace confglm
