#pragma once

#include "confglm/lasso.hpp"
#include "confglm/types.hpp"

namespace confglm {

// Projection of the exposure on the nuisance block in the information metric,
// fitted by an l1-penalized quadratic program.
struct ProjectionFit {
  VectorXd w;  // p+K-1
  double lambda_prime = 0.0;
  double kkt_residual = 0.0;
  int n_iter = 0;
  bool converged = false;
};

enum class ScoreMode {
  at_estimate,  // score evaluated at the full lasso fit
  at_null,      // score evaluated with theta forced to zero
};

struct InferenceResult {
  double theta_tilde = 0.0;
  double info_partial = 0.0;  // partial Fisher information
  double se = 0.0;            // (n * info_partial)^{-1/2}
  double ci_low = 0.0;
  double ci_high = 0.0;
  double alpha = 0.05;
  double z = 0.0;        // effect size
  double p_value = 1.0;  // 2{1 - Phi(|z|)}
};

// Quadratic-form ingredients  A = n^-1 sum b'' m m^T,  b = n^-1 sum b'' d m.
struct QuadraticForm {
  MatrixXd a;
  VectorXd b;
};
QuadraticForm score_quadratic(Family family, const Dataset& data,
                              const MatrixXd& uhat, const Coefficients& eta_hat);

// Minimizes (1/2) w^T A w - w^T b + lambda' ||w||_1 by coordinate descent,
// optionally warm-started (used along the CV grid).
ProjectionFit solve_projection(const QuadraticForm& q, double lambda_prime,
                               const VectorXd* warm = nullptr);

ProjectionFit fit_w(Family family, const Dataset& data, const MatrixXd& uhat,
                    const Coefficients& eta_hat, double lambda_prime);

// 10-fold CV for lambda' on the held-out quadratic objective.
CvResult cross_validate_lambda_prime(Family family, const Dataset& data,
                                     const MatrixXd& uhat,
                                     const Coefficients& eta_hat,
                                     const CvOptions& opts = {});

struct DebiasOptions {
  double alpha = 0.05;
  ScoreMode score_mode = ScoreMode::at_estimate;
  // Linear family only: rescale the CI by the residual standard deviation.
  bool dispersion_rescale = false;
};

InferenceResult debias(Family family, const Dataset& data, const MatrixXd& uhat,
                       const Coefficients& eta_hat, const ProjectionFit& w_fit,
                       const DebiasOptions& opts = {});

}  // namespace confglm
