#include <doctest.h>

#include <cmath>

#include "confglm/glm.hpp"
#include "confglm/rng.hpp"
#include "confglm/score.hpp"
#include "confglm/stats.hpp"

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
  Coefficients eta;
};

Instance make_instance(Family family, int n, int p, int k, std::uint64_t seed) {
  Rng rng(seed);
  Instance inst;
  inst.data.d = random_normal(n, 1, rng).col(0);
  inst.data.q = random_normal(n, p - 1, rng);
  inst.uhat = random_normal(n, k, rng);
  inst.eta.theta = 0.7;
  inst.eta.v = 0.3 * random_normal(p - 1, 1, rng).col(0);
  inst.eta.beta = 0.4 * random_normal(k, 1, rng).col(0);
  inst.data.y = VectorXd::Zero(n);
  const VectorXd lp = linear_predictor(inst.data, inst.uhat, inst.eta);
  for (int i = 0; i < n; ++i) {
    switch (family) {
      case Family::linear:
        inst.data.y(i) = lp(i) + rng.normal();
        break;
      case Family::logistic:
        inst.data.y(i) =
            rng.uniform() < cumulant_triple(family, lp(i)).b1 ? 1.0 : 0.0;
        break;
      case Family::poisson:
        inst.data.y(i) = std::floor(std::exp(std::min(lp(i), 2.0)) + 0.5);
        break;
    }
  }
  return inst;
}

}  // namespace

TEST_CASE("projection with identity quadratic is a soft threshold") {
  QuadraticForm q;
  q.a = MatrixXd::Identity(5, 5);
  q.b.resize(5);
  q.b << 2.0, -1.5, 0.3, -0.05, 0.0;
  const double lam = 0.4;
  const ProjectionFit fit = solve_projection(q, lam);
  REQUIRE(fit.converged);
  for (int j = 0; j < 5; ++j) {
    const double ref = std::copysign(std::max(std::abs(q.b(j)) - lam, 0.0), q.b(j));
    CHECK(fit.w(j) == doctest::Approx(ref).epsilon(1e-12));
  }
}

TEST_CASE("a penalty above the gradient sup-norm zeroes the projection") {
  const Instance inst = make_instance(Family::logistic, 60, 6, 2, 3);
  const QuadraticForm q =
      score_quadratic(Family::logistic, inst.data, inst.uhat, inst.eta);
  const double top = q.b.cwiseAbs().maxCoeff();
  const ProjectionFit fit = solve_projection(q, 1.0001 * top);
  REQUIRE(fit.converged);
  CHECK(fit.w.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("projection agrees with an independent proximal-gradient solver") {
  // p + K - 1 = 8 unknowns.
  const Instance inst = make_instance(Family::linear, 80, 7, 2, 17);
  const QuadraticForm q =
      score_quadratic(Family::linear, inst.data, inst.uhat, inst.eta);
  const double lam = 0.1 * q.b.cwiseAbs().maxCoeff();
  const ProjectionFit fit = solve_projection(q, lam);
  REQUIRE(fit.converged);

  // ISTA on (1/2)w'Aw - w'b + lam|w|_1 with a Lipschitz step.
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(q.a);
  const double step = 1.0 / es.eigenvalues().maxCoeff();
  VectorXd w = VectorXd::Zero(q.b.size());
  for (int it = 0; it < 200000; ++it) {
    const VectorXd g = q.a * w - q.b;
    VectorXd next = w - step * g;
    for (Eigen::Index j = 0; j < next.size(); ++j)
      next(j) = std::copysign(std::max(std::abs(next(j)) - step * lam, 0.0),
                              next(j));
    const double move = (next - w).cwiseAbs().maxCoeff();
    w = next;
    if (move < 1e-13) break;
  }
  CHECK((fit.w - w).cwiseAbs().maxCoeff() < 1e-4);
}

TEST_CASE("a zero score leaves the estimate unchanged") {
  // Linear data with exact responses: the residual vector is identically 0.
  Instance inst = make_instance(Family::linear, 50, 5, 2, 23);
  inst.data.y = linear_predictor(inst.data, inst.uhat, inst.eta);
  const ProjectionFit w = fit_w(Family::linear, inst.data, inst.uhat, inst.eta, 0.05);
  const InferenceResult r =
      debias(Family::linear, inst.data, inst.uhat, inst.eta, w);
  CHECK(r.theta_tilde == doctest::Approx(inst.eta.theta).epsilon(1e-12));
}

TEST_CASE("debias matches a dense-algebra transcription") {
  for (Family family : {Family::linear, Family::logistic}) {
    const Instance inst = make_instance(family, 70, 6, 2, 29);
    const ProjectionFit w = fit_w(family, inst.data, inst.uhat, inst.eta, 0.02);
    DebiasOptions opts;
    opts.alpha = 0.1;
    const InferenceResult r =
        debias(family, inst.data, inst.uhat, inst.eta, w, opts);

    const int n = static_cast<int>(inst.data.n());
    MatrixXd m(n, inst.data.q.cols() + inst.uhat.cols());
    m.leftCols(inst.data.q.cols()) = inst.data.q;
    m.rightCols(inst.uhat.cols()) = inst.uhat;
    const VectorXd lp = linear_predictor(inst.data, inst.uhat, inst.eta);
    const VectorXd resid_dir = inst.data.d - m * w.w;
    double s = 0.0, info = 0.0;
    for (int i = 0; i < n; ++i) {
      const CumulantTriple c = cumulant_triple(family, lp(i));
      s -= (inst.data.y(i) - c.b1) * resid_dir(i);
      info += c.b2 * inst.data.d(i) * resid_dir(i);
    }
    s /= n;
    info /= n;
    CHECK(r.info_partial == doctest::Approx(info).epsilon(1e-12));
    CHECK(r.theta_tilde ==
          doctest::Approx(inst.eta.theta - s / info).epsilon(1e-12));
    CHECK(r.se == doctest::Approx(1.0 / std::sqrt(n * info)).epsilon(1e-12));
    CHECK(r.z == doctest::Approx(r.theta_tilde / r.se).epsilon(1e-12));
    CHECK(r.p_value == doctest::Approx(two_sided_p(r.z)).epsilon(1e-12));
  }
}

TEST_CASE("interval length equals twice the normal quantile times se") {
  const Instance inst = make_instance(Family::logistic, 90, 8, 2, 31);
  const ProjectionFit w =
      fit_w(Family::logistic, inst.data, inst.uhat, inst.eta, 0.03);
  for (double alpha : {0.01, 0.05, 0.2}) {
    DebiasOptions opts;
    opts.alpha = alpha;
    const InferenceResult r =
        debias(Family::logistic, inst.data, inst.uhat, inst.eta, w, opts);
    const double len = r.ci_high - r.ci_low;
    CHECK(std::abs(len - 2.0 * normal_quantile(1.0 - alpha / 2.0) * r.se) <
          1e-12);
    CHECK(r.ci_low < r.theta_tilde);
    CHECK(r.theta_tilde < r.ci_high);
  }
}

TEST_CASE("score modes coincide when the exposure estimate is zero") {
  Instance inst = make_instance(Family::logistic, 60, 6, 2, 37);
  inst.eta.theta = 0.0;
  const ProjectionFit w =
      fit_w(Family::logistic, inst.data, inst.uhat, inst.eta, 0.05);
  DebiasOptions est, null;
  est.score_mode = ScoreMode::at_estimate;
  null.score_mode = ScoreMode::at_null;
  const InferenceResult a =
      debias(Family::logistic, inst.data, inst.uhat, inst.eta, w, est);
  const InferenceResult b =
      debias(Family::logistic, inst.data, inst.uhat, inst.eta, w, null);
  CHECK(a.theta_tilde == b.theta_tilde);
  CHECK(a.se == b.se);
  CHECK(a.p_value == b.p_value);
}

TEST_CASE("lambda_prime cross-validation is reproducible and on-grid") {
  const Instance inst = make_instance(Family::linear, 100, 8, 2, 41);
  CvOptions opts;
  opts.grid_size = 15;
  opts.seed = 7;
  const CvResult a = cross_validate_lambda_prime(Family::linear, inst.data,
                                                 inst.uhat, inst.eta, opts);
  const CvResult b = cross_validate_lambda_prime(Family::linear, inst.data,
                                                 inst.uhat, inst.eta, opts);
  CHECK(a.lambda_star == b.lambda_star);
  REQUIRE(a.lambda_grid.size() == 15);
  bool on_grid = false;
  for (int i = 0; i < 15; ++i)
    if (a.lambda_grid(i) == a.lambda_star) on_grid = true;
  CHECK(on_grid);
}

TEST_CASE("invalid alpha and degenerate information are rejected") {
  const Instance inst = make_instance(Family::linear, 40, 5, 1, 43);
  const ProjectionFit w =
      fit_w(Family::linear, inst.data, inst.uhat, inst.eta, 0.05);
  DebiasOptions bad;
  bad.alpha = 0.0;
  CHECK_THROWS_AS(debias(Family::linear, inst.data, inst.uhat, inst.eta, w, bad),
                  InvalidInput);

  // Exposure identical to a nuisance column: the projection direction has no
  // residual exposure variation left, so the partial information collapses.
  Instance deg = inst;
  deg.data.d = deg.data.q.col(0);
  ProjectionFit wzero;
  wzero.w = VectorXd::Zero(deg.data.q.cols() + deg.uhat.cols());
  wzero.w(0) = 1.0;
  CHECK_THROWS_AS(debias(Family::linear, deg.data, deg.uhat, deg.eta, wzero),
                  DegenerateData);
}
