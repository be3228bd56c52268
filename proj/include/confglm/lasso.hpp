#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "confglm/types.hpp"

namespace confglm {

struct PenalizedFit {
  Coefficients coeffs;
  double lambda = 0.0;
  double kkt_residual = 0.0;
  int n_iter = 0;
  bool converged = false;
  std::vector<double> objective_trace;  // penalized objective per outer step
};

struct LassoOptions {
  int max_iter = 10000;
  double tol = 1e-8;       // max coefficient change per full cycle
  double kkt_tol = 1e-7;   // exact-gradient stationarity target
  std::optional<Coefficients> warm_start;
};

struct CvOptions {
  int n_folds = 10;
  int grid_size = 100;
  double grid_ratio = 0.01;
  std::uint64_t seed = 0;
};

struct CvResult {
  VectorXd lambda_grid;   // decreasing
  VectorXd cv_loss;       // mean held-out deviance per grid point
  double lambda_star = 0.0;
  VectorXi fold_assignment;  // length n
};

// Minimizes loss(eta) + lambda(|theta| + ||v||_1); beta is unpenalized.
PenalizedFit fit_lasso(Family family, const Dataset& data, const MatrixXd& uhat,
                       double lambda, const LassoOptions& opts = {});

// Smallest lambda that zeroes every penalized coordinate: the sup-norm of the
// penalized gradient block at the confounder-only fit (0, 0, beta~).
double lambda_max(Family family, const Dataset& data, const MatrixXd& uhat);

CvResult cross_validate_lambda(Family family, const Dataset& data,
                               const MatrixXd& uhat, const CvOptions& opts = {});

// Seeded fold partition, stratified by response class for the logistic
// family. Throws InvalidConfig when a valid stratification cannot be drawn.
VectorXi make_folds(const VectorXd& y, Family family, int n_folds,
                    std::uint64_t seed);

// Log-spaced decreasing grid from lambda_top down to ratio*lambda_top.
VectorXd lambda_grid(double lambda_top, int grid_size, double ratio);

}  // namespace confglm
