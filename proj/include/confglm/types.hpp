#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace confglm {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using Eigen::VectorXi;

// Exponential-family choices: cumulant b, mean b', variance b''.
enum class Family { linear, logistic, poisson };

inline const char* family_name(Family f) {
  switch (f) {
    case Family::linear: return "linear";
    case Family::logistic: return "logistic";
    case Family::poisson: return "poisson";
  }
  return "?";
}

// One observed sample: response y, exposure column d, nuisance covariates q.
// u_true is kept only by the simulation generator (oracle baseline).
struct Dataset {
  VectorXd y;       // n
  VectorXd d;       // n, exposure
  MatrixXd q;       // n x (p-1)
  MatrixXd u_true;  // n x K, may have 0 columns

  Eigen::Index n() const { return y.size(); }
  Eigen::Index p() const { return q.cols() + 1; }
};

// eta = (theta, v, beta); (theta, v) is penalized, beta is not.
struct Coefficients {
  double theta = 0.0;
  VectorXd v;     // p-1
  VectorXd beta;  // K

  Eigen::Index size() const { return 1 + v.size() + beta.size(); }
  VectorXd flat() const {
    VectorXd out(size());
    out(0) = theta;
    out.segment(1, v.size()) = v;
    out.tail(beta.size()) = beta;
    return out;
  }
  static Coefficients zero(Eigen::Index p_minus_1, Eigen::Index k) {
    Coefficients c;
    c.v = VectorXd::Zero(p_minus_1);
    c.beta = VectorXd::Zero(k);
    return c;
  }
};

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InvalidInput : Error {
  using Error::Error;
};
struct InvalidConfig : Error {
  using Error::Error;
};
struct DegenerateData : Error {
  using Error::Error;
};
struct SolverFailure : Error {
  using Error::Error;
};
struct NumericalRankError : Error {
  using Error::Error;
};
struct PipelineError : Error {
  PipelineError(const std::string& stage_, const std::string& what_)
      : Error(stage_ + ": " + what_), stage(stage_) {}
  std::string stage;
};

}  // namespace confglm
