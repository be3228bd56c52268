#include <doctest.h>

#include <cmath>

#include "confglm/glm.hpp"
#include "confglm/lasso.hpp"
#include "confglm/rng.hpp"

using namespace confglm;

namespace {

MatrixXd random_normal(int r, int c, Rng& rng) {
  MatrixXd m(r, c);
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) m(i, j) = rng.normal();
  return m;
}

struct Instance {
  Dataset data;
  MatrixXd uhat;
};

Instance make_instance(Family family, int n, int p, int k, std::uint64_t seed) {
  Rng rng(seed);
  Instance inst;
  inst.data.d = random_normal(n, 1, rng).col(0);
  inst.data.q = random_normal(n, p - 1, rng);
  inst.uhat = random_normal(n, k, rng);
  VectorXd lp = 0.8 * inst.data.d;
  if (p > 1) lp += inst.data.q.col(0);
  if (k > 0) lp += 0.5 * inst.uhat.rowwise().sum();
  inst.data.y.resize(n);
  for (int i = 0; i < n; ++i) {
    switch (family) {
      case Family::linear:
        inst.data.y(i) = lp(i) + rng.normal();
        break;
      case Family::logistic: {
        const double mu = cumulant_triple(family, lp(i)).b1;
        inst.data.y(i) = rng.uniform() < mu ? 1.0 : 0.0;
        break;
      }
      case Family::poisson: {
        // Small counts via inverse-cdf sampling of a clipped Poisson.
        const double mu = std::exp(std::min(lp(i), 3.0));
        double u = rng.uniform(), cum = std::exp(-mu), pmf = cum;
        int y = 0;
        while (u > cum && y < 60) {
          ++y;
          pmf *= mu / y;
          cum += pmf;
        }
        inst.data.y(i) = y;
        break;
      }
    }
  }
  return inst;
}

// Exact-gradient stationarity residual for the penalized problem, computed
// from the public gradient() rather than the solver's internal bookkeeping.
double kkt_residual_oracle(Family family, const Instance& inst,
                           const Coefficients& c, double lambda) {
  const VectorXd g = gradient(family, inst.data, inst.uhat, c);
  const VectorXd eta = c.flat();
  const Eigen::Index p = inst.data.p();
  double r = 0.0;
  for (Eigen::Index j = 0; j < eta.size(); ++j) {
    if (j >= p) {
      r = std::max(r, std::abs(g(j)));  // unpenalized
    } else if (eta(j) != 0.0) {
      r = std::max(r, std::abs(g(j) + lambda * (eta(j) > 0 ? 1.0 : -1.0)));
    } else {
      r = std::max(r, std::max(0.0, std::abs(g(j)) - lambda));
    }
  }
  return r;
}

double penalized_objective(Family family, const Instance& inst,
                           const Coefficients& c, double lambda) {
  return loss(family, inst.data, inst.uhat, c) +
         lambda * (std::abs(c.theta) + c.v.cwiseAbs().sum());
}

// Independent proximal-gradient (ISTA) solver with backtracking, run to a
// tight fixed-point tolerance. Shares only the gradient/loss primitives.
Coefficients ista_oracle(Family family, const Instance& inst, double lambda,
                         int max_iter = 200000, double tol = 1e-11) {
  const Eigen::Index p = inst.data.p();
  Coefficients c = Coefficients::zero(p - 1, inst.uhat.cols());
  double step = 1.0;
  double obj = penalized_objective(family, inst, c, lambda);
  for (int it = 0; it < max_iter; ++it) {
    const VectorXd g = gradient(family, inst.data, inst.uhat, c);
    const VectorXd eta = c.flat();
    VectorXd next;
    double obj_new = 0.0;
    for (;;) {
      next = eta - step * g;
      for (Eigen::Index j = 0; j < p; ++j) {
        const double t = step * lambda;
        next(j) = std::copysign(std::max(std::abs(next(j)) - t, 0.0), next(j));
      }
      Coefficients cn;
      cn.theta = next(0);
      cn.v = next.segment(1, p - 1);
      cn.beta = next.tail(inst.uhat.cols());
      obj_new = penalized_objective(family, inst, cn, lambda);
      const double quad =
          obj + g.dot(next - eta) -
          lambda * (std::abs(c.theta) + c.v.cwiseAbs().sum()) +
          lambda * (std::abs(cn.theta) + cn.v.cwiseAbs().sum()) +
          (next - eta).squaredNorm() / (2.0 * step);
      if (loss(family, inst.data, inst.uhat, cn) <=
          quad - lambda * (std::abs(cn.theta) + cn.v.cwiseAbs().sum()) + 1e-14)
        break;
      step *= 0.5;
    }
    const double move = (next - eta).cwiseAbs().maxCoeff();
    c.theta = next(0);
    c.v = next.segment(1, p - 1);
    c.beta = next.tail(inst.uhat.cols());
    obj = obj_new;
    if (move < tol) break;
    step *= 1.2;  // gentle recovery after halving
  }
  return c;
}

}  // namespace

TEST_CASE("lambda at or above lambda_max zeroes every penalized coordinate") {
  for (Family family : {Family::linear, Family::logistic}) {
    const Instance inst = make_instance(family, 80, 10, 2, 11);
    const double lmax = lambda_max(family, inst.data, inst.uhat);
    CHECK(lmax > 0.0);
    for (double mult : {1.0, 1.5}) {
      const PenalizedFit fit =
          fit_lasso(family, inst.data, inst.uhat, mult * lmax);
      CHECK(fit.coeffs.theta == 0.0);
      CHECK(fit.coeffs.v.cwiseAbs().maxCoeff() == 0.0);
      CHECK(fit.converged);
    }
    // Just below the knot, something penalized must enter.
    const PenalizedFit below =
        fit_lasso(family, inst.data, inst.uhat, 0.98 * lmax);
    const double active = std::abs(below.coeffs.theta) +
                          below.coeffs.v.cwiseAbs().maxCoeff();
    CHECK(active > 0.0);
  }
}

TEST_CASE("linear fit at lambda=0 matches the normal equations") {
  const Instance inst = make_instance(Family::linear, 120, 8, 3, 21);
  const PenalizedFit fit = fit_lasso(Family::linear, inst.data, inst.uhat, 0.0);
  REQUIRE(fit.converged);

  const int n = static_cast<int>(inst.data.n());
  const Eigen::Index m = inst.data.p() + inst.uhat.cols();
  MatrixXd z(n, m);
  z.col(0) = inst.data.d;
  z.middleCols(1, inst.data.q.cols()) = inst.data.q;
  z.rightCols(inst.uhat.cols()) = inst.uhat;
  const VectorXd ols = (z.transpose() * z).ldlt().solve(z.transpose() * inst.data.y);
  CHECK((fit.coeffs.flat() - ols).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("solutions satisfy exact KKT stationarity across families") {
  int id = 0;
  for (Family family : {Family::linear, Family::logistic, Family::poisson}) {
    for (int rep = 0; rep < 6; ++rep) {
      const Instance inst = make_instance(family, 90, 12, 2, 100 + id++);
      const double lmax = lambda_max(family, inst.data, inst.uhat);
      for (double frac : {0.5, 0.1, 0.02}) {
        const PenalizedFit fit =
            fit_lasso(family, inst.data, inst.uhat, frac * lmax);
        REQUIRE(fit.converged);
        CHECK(kkt_residual_oracle(family, inst, fit.coeffs, frac * lmax) <
              1e-6);
        CHECK(fit.kkt_residual < 1e-6);
      }
    }
  }
}

TEST_CASE("outer objective trace is non-increasing") {
  for (Family family : {Family::linear, Family::logistic, Family::poisson}) {
    const Instance inst = make_instance(family, 70, 15, 2, 31);
    const double lam = 0.2 * lambda_max(family, inst.data, inst.uhat);
    const PenalizedFit fit = fit_lasso(family, inst.data, inst.uhat, lam);
    REQUIRE(fit.objective_trace.size() >= 1);
    for (std::size_t i = 1; i < fit.objective_trace.size(); ++i)
      CHECK(fit.objective_trace[i] <= fit.objective_trace[i - 1] + 1e-12);
  }
}

TEST_CASE("coordinate descent agrees with an independent proximal solver") {
  int id = 0;
  for (Family family : {Family::linear, Family::logistic}) {
    for (int rep = 0; rep < 3; ++rep) {
      const Instance inst = make_instance(family, 60, 8, 2, 500 + id++);
      const double lam = 0.15 * lambda_max(family, inst.data, inst.uhat);
      const PenalizedFit fit = fit_lasso(family, inst.data, inst.uhat, lam);
      REQUIRE(fit.converged);
      const Coefficients ref = ista_oracle(family, inst, lam);
      CHECK((fit.coeffs.flat() - ref.flat()).cwiseAbs().maxCoeff() < 1e-6);
    }
  }
}

TEST_CASE("fold assignments are deterministic, balanced, and stratified") {
  Rng rng(77);
  VectorXd y(100);
  for (int i = 0; i < 100; ++i) y(i) = i < 23 ? 1.0 : 0.0;
  const VectorXi f1 = make_folds(y, Family::logistic, 10, 9);
  const VectorXi f2 = make_folds(y, Family::logistic, 10, 9);
  CHECK((f1 - f2).cwiseAbs().maxCoeff() == 0);
  VectorXi size = VectorXi::Zero(10), ones = VectorXi::Zero(10);
  for (int i = 0; i < 100; ++i) {
    REQUIRE(f1(i) >= 0);
    REQUIRE(f1(i) < 10);
    ++size(f1(i));
    if (y(i) == 1.0) ++ones(f1(i));
  }
  CHECK(size.minCoeff() == 10);
  CHECK(size.maxCoeff() == 10);
  // 23 positives over 10 folds: every fold carries 2 or 3.
  CHECK(ones.minCoeff() >= 2);
  CHECK(ones.maxCoeff() <= 3);

  const VectorXi other = make_folds(y, Family::logistic, 10, 10);
  CHECK((f1 - other).cwiseAbs().maxCoeff() > 0);

  // One positive can never be spread over two folds with each non-empty class.
  VectorXd bad = VectorXd::Zero(20);
  bad(0) = 1.0;
  CHECK_THROWS_AS(make_folds(bad, Family::logistic, 2, 1), InvalidConfig);
}

TEST_CASE("lambda grid is log-spaced and decreasing") {
  const VectorXd g = lambda_grid(2.0, 5, 0.01);
  REQUIRE(g.size() == 5);
  CHECK(g(0) == doctest::Approx(2.0));
  CHECK(g(4) == doctest::Approx(0.02));
  for (int i = 1; i < 5; ++i) {
    CHECK(g(i) < g(i - 1));
    // constant ratio between neighbours
    CHECK(g(i) / g(i - 1) == doctest::Approx(g(1) / g(0)).epsilon(1e-10));
  }
}

TEST_CASE("cross-validation picks from the grid and is reproducible") {
  const Instance inst = make_instance(Family::linear, 100, 10, 2, 41);
  CvOptions opts;
  opts.grid_size = 20;
  opts.seed = 3;
  const CvResult a = cross_validate_lambda(Family::linear, inst.data, inst.uhat, opts);
  const CvResult b = cross_validate_lambda(Family::linear, inst.data, inst.uhat, opts);
  REQUIRE(a.lambda_grid.size() == 20);
  REQUIRE(a.cv_loss.size() == 20);
  CHECK(a.lambda_star == b.lambda_star);
  CHECK((a.cv_loss - b.cv_loss).cwiseAbs().maxCoeff() == 0.0);
  bool on_grid = false;
  for (int i = 0; i < 20; ++i)
    if (a.lambda_grid(i) == a.lambda_star) on_grid = true;
  CHECK(on_grid);
  // The selected lambda attains the grid minimum of the cv curve.
  CHECK(a.cv_loss.minCoeff() ==
        a.cv_loss(std::distance(
            a.lambda_grid.data(),
            std::find(a.lambda_grid.data(), a.lambda_grid.data() + 20,
                      a.lambda_star))));
}
