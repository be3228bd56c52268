#pragma once

#include <cstdint>
#include <vector>

#include "confglm/types.hpp"

namespace confglm {

// Factor model X = W^T U + E with diagonal noise covariance.
struct FactorFit {
  MatrixXd w;                        // K x p loading matrix
  VectorXd sigma_e;                  // p noise variances, >= floor
  MatrixXd s_u;                      // K x K confounder covariance
  std::vector<double> loglik_trace;  // scaled quasi log-likelihood per iteration
  int k = 0;
  bool converged = false;
};

struct ConfounderEstimate {
  MatrixXd uhat;  // n x K, column means zero
};

struct EmOptions {
  int max_iter = 1000;
  double tol = 1e-8;
  double variance_floor = 1e-6;
  std::uint64_t seed = 0;  // reserved; the SVD warm start is deterministic
};

struct PaOptions {
  int n_null_draws = 100;
  double quantile = 0.95;
  std::uint64_t seed = 0;
};

// Maximum likelihood fit by EM with S_u fixed at I_K during iteration
// (rotate_canonical restores the identifiable parameterization).
FactorFit fit_em(const MatrixXd& x, int k, const EmOptions& opts = {});

// Two-step identifiability transform: whiten S_u, then diagonalize
// p^{-1} W Sigma_e^{-1} W^T with decreasing diagonal; each factor's sign is
// fixed so its largest-magnitude loading is positive.
FactorFit rotate_canonical(const FactorFit& fit);

// GLS recovery  uhat_i = (W S^-1 W^T)^{-1} W S^-1 (x_i - xbar).
ConfounderEstimate estimate_confounders(const FactorFit& fit, const MatrixXd& x);

// Horn's parallel analysis on correlation-matrix eigenvalues.
int select_k_parallel_analysis(const MatrixXd& x, const PaOptions& opts = {});

// Per-rank null thresholds (quantile of eigenvalues over seeded null draws);
// exposed separately so simulation sweeps can reuse one null reference.
VectorXd pa_null_thresholds(Eigen::Index n, Eigen::Index p, const PaOptions& opts);

// Sorted (descending) correlation-matrix eigenvalues of x.
VectorXd correlation_eigenvalues(const MatrixXd& x);

int select_k_with_thresholds(const MatrixXd& x, const VectorXd& thresholds);

}  // namespace confglm
