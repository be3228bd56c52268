#pragma once

#include "confglm/types.hpp"

namespace confglm {

struct CumulantTriple {
  double b;   // cumulant
  double b1;  // mean function b'
  double b2;  // variance function b''
};

// Linear predictors for the poisson family are clamped at this value inside
// b, b', b'' to avoid exp overflow on wild data (a warning is printed once).
inline constexpr double kPoissonClamp = 30.0;

CumulantTriple cumulant_triple(Family family, double t);

// True when y is a valid response for the family (logistic: {0,1};
// poisson: non-negative integers; linear: any finite real).
bool response_valid(Family family, double y);
void check_responses(Family family, const VectorXd& y);

// Linear predictor eta^T z_i for every row, z_i = (d_i, q_i, uhat_i).
VectorXd linear_predictor(const Dataset& data, const MatrixXd& uhat,
                          const Coefficients& coeffs);

// Negative mean log-likelihood  -n^{-1} sum_i { y_i lp_i - b(lp_i) }.
double loss(Family family, const Dataset& data, const MatrixXd& uhat,
            const Coefficients& coeffs);

// grad = -n^{-1} sum_i { y_i - b'(lp_i) } z_i, length p+K.
VectorXd gradient(Family family, const Dataset& data, const MatrixXd& uhat,
                  const Coefficients& coeffs);

// hess = n^{-1} sum_i b''(lp_i) z_i z_i^T, symmetric PSD.
MatrixXd hessian(Family family, const Dataset& data, const MatrixXd& uhat,
                 const Coefficients& coeffs);

// Per-observation deviance contribution 2{ loglik_sat - loglik(lp) }.
double deviance(Family family, double y, double lp);

}  // namespace confglm
