#include "confglm/glm.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>

namespace confglm {

namespace {

std::atomic<bool> poisson_clamp_warned{false};

double clamp_poisson(double t) {
  if (t > kPoissonClamp) {
    if (!poisson_clamp_warned.exchange(true)) {
      std::fprintf(stderr,
                   "confglm: warning: poisson linear predictor clamped at %g\n",
                   kPoissonClamp);
    }
    return kPoissonClamp;
  }
  return t;
}

void check_dims(const Dataset& data, const MatrixXd& uhat,
                const Coefficients& coeffs) {
  const auto n = data.n();
  if (data.d.size() != n || data.q.rows() != n)
    throw InvalidInput("dataset rows disagree");
  if (uhat.rows() != n) throw InvalidInput("uhat rows do not match dataset");
  if (coeffs.v.size() != data.q.cols())
    throw InvalidInput("coefficient v length does not match q");
  if (coeffs.beta.size() != uhat.cols())
    throw InvalidInput("coefficient beta length does not match uhat");
}

}  // namespace

CumulantTriple cumulant_triple(Family family, double t) {
  if (!std::isfinite(t)) throw InvalidInput("cumulant_triple: non-finite t");
  switch (family) {
    case Family::linear:
      return {0.5 * t * t, t, 1.0};
    case Family::logistic: {
      // b(t) = log(1+e^t) in the overflow-free form.
      const double b = std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t)));
      const double e = std::exp(-std::abs(t));
      double sig = (t >= 0) ? 1.0 / (1.0 + e) : e / (1.0 + e);
      // Keep the mean strictly inside (0,1) even where 1/(1+e) rounds to 1.
      sig = std::min(sig, std::nextafter(1.0, 0.0));
      sig = std::max(sig, std::nextafter(0.0, 1.0));
      return {b, sig, sig * (1.0 - sig)};
    }
    case Family::poisson: {
      const double e = std::exp(clamp_poisson(t));
      return {e, e, e};
    }
  }
  throw InvalidInput("unknown family");
}

bool response_valid(Family family, double y) {
  if (!std::isfinite(y)) return false;
  switch (family) {
    case Family::linear:
      return true;
    case Family::logistic:
      return y == 0.0 || y == 1.0;
    case Family::poisson:
      return y >= 0.0 && y == std::floor(y);
  }
  return false;
}

void check_responses(Family family, const VectorXd& y) {
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    if (!response_valid(family, y(i)))
      throw InvalidInput("response invalid for " + std::string(family_name(family)) +
                         " family at row " + std::to_string(i));
  }
}

VectorXd linear_predictor(const Dataset& data, const MatrixXd& uhat,
                          const Coefficients& coeffs) {
  check_dims(data, uhat, coeffs);
  VectorXd lp = coeffs.theta * data.d;
  if (coeffs.v.size() > 0) lp.noalias() += data.q * coeffs.v;
  if (coeffs.beta.size() > 0) lp.noalias() += uhat * coeffs.beta;
  return lp;
}

double loss(Family family, const Dataset& data, const MatrixXd& uhat,
            const Coefficients& coeffs) {
  check_responses(family, data.y);
  const VectorXd lp = linear_predictor(data, uhat, coeffs);
  const auto n = data.n();
  double acc = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    acc += data.y(i) * lp(i) - cumulant_triple(family, lp(i)).b;
  }
  return -acc / static_cast<double>(n);
}

VectorXd gradient(Family family, const Dataset& data, const MatrixXd& uhat,
                  const Coefficients& coeffs) {
  check_responses(family, data.y);
  const VectorXd lp = linear_predictor(data, uhat, coeffs);
  const auto n = data.n();
  VectorXd r(n);
  for (Eigen::Index i = 0; i < n; ++i)
    r(i) = data.y(i) - cumulant_triple(family, lp(i)).b1;
  const double inv_n = 1.0 / static_cast<double>(n);
  VectorXd g(coeffs.size());
  g(0) = -inv_n * data.d.dot(r);
  g.segment(1, coeffs.v.size()).noalias() = -inv_n * (data.q.transpose() * r);
  g.tail(coeffs.beta.size()).noalias() = -inv_n * (uhat.transpose() * r);
  return g;
}

MatrixXd hessian(Family family, const Dataset& data, const MatrixXd& uhat,
                 const Coefficients& coeffs) {
  check_responses(family, data.y);
  const VectorXd lp = linear_predictor(data, uhat, coeffs);
  const auto n = data.n();
  VectorXd w(n);
  for (Eigen::Index i = 0; i < n; ++i)
    w(i) = std::sqrt(cumulant_triple(family, lp(i)).b2);
  MatrixXd z(n, coeffs.size());
  z.col(0) = data.d;
  z.middleCols(1, data.q.cols()) = data.q;
  z.rightCols(uhat.cols()) = uhat;
  z.array().colwise() *= w.array();
  return z.transpose() * z / static_cast<double>(n);
}

double deviance(Family family, double y, double lp) {
  const CumulantTriple c = cumulant_triple(family, lp);
  double sat = 0.0;  // saturated log-likelihood y*g(y) - b(g(y))
  switch (family) {
    case Family::linear:
      sat = 0.5 * y * y;
      break;
    case Family::logistic:
      sat = 0.0;
      break;
    case Family::poisson:
      sat = (y > 0.0) ? y * std::log(y) - y : 0.0;
      break;
  }
  return 2.0 * (sat - (y * lp - c.b));
}

}  // namespace confglm
