#pragma once

#include <cstdint>

#include "confglm/factor.hpp"
#include "confglm/score.hpp"
#include "confglm/types.hpp"

namespace confglm {

struct PipelineOptions {
  int k = -1;  // -1: choose K by parallel analysis
  double alpha = 0.05;
  std::uint64_t seed = 0;
  ScoreMode score_mode = ScoreMode::at_estimate;
  int cv_grid_size = 100;
  double cv_grid_ratio = 0.01;
  int cv_folds = 10;
  EmOptions em;
  PaOptions pa;  // seed is derived from `seed` unless pa_thresholds given

  // Surrogate confounders supplied directly: skips the factor stage.
  // Used by the oracle baseline, the naive baseline (0 columns), and by the
  // CLI to share one factor fit across exposures.
  const MatrixXd* uhat_override = nullptr;
  // Shared null reference for parallel analysis (sweeps reuse one draw).
  const VectorXd* pa_thresholds = nullptr;

  bool add_intercept = false;    // unpenalized intercept for applied data
  bool standardize = false;      // unit-variance covariate columns
  bool dispersion_rescale = false;
};

struct PipelineResult {
  InferenceResult inference;
  int k_used = 0;
  PenalizedFit lasso;
  ProjectionFit projection;
  double lambda_star = 0.0;
  double lambda_prime_star = 0.0;
};

// End-to-end inference for one exposure column: factor estimation (unless
// overridden), CV-tuned lasso, CV-tuned projection, debiased CI.
// Deterministic given seed. Stage failures rethrow as PipelineError.
PipelineResult full_pipeline(Family family, const VectorXd& y, const MatrixXd& x,
                             Eigen::Index exposure_index,
                             const PipelineOptions& opts = {});

// Factor stage alone (parallel analysis if k < 0, EM, rotation, GLS); the CLI
// runs it once per data matrix and reuses the result across exposures.
struct FactorStage {
  int k = 0;
  MatrixXd uhat;  // n x k
};
FactorStage run_factor_stage(const MatrixXd& x, int k, const PipelineOptions& opts);

}  // namespace confglm
