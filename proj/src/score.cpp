#include "confglm/score.hpp"

#include <cmath>

#include "confglm/glm.hpp"
#include "confglm/quad_l1.hpp"
#include "confglm/stats.hpp"

namespace confglm {

namespace {

MatrixXd nuisance_design(const Dataset& data, const MatrixXd& uhat) {
  MatrixXd m(data.n(), data.q.cols() + uhat.cols());
  m.leftCols(data.q.cols()) = data.q;
  if (uhat.cols() > 0) m.rightCols(uhat.cols()) = uhat;
  return m;
}

}  // namespace

QuadraticForm score_quadratic(Family family, const Dataset& data,
                              const MatrixXd& uhat, const Coefficients& eta_hat) {
  const VectorXd lp = linear_predictor(data, uhat, eta_hat);
  const auto n = data.n();
  VectorXd b2(n);
  for (Eigen::Index i = 0; i < n; ++i) b2(i) = cumulant_triple(family, lp(i)).b2;
  MatrixXd m = nuisance_design(data, uhat);
  if (!m.allFinite() || !b2.allFinite())
    throw Error("score_quadratic: non-finite entries assembling A");
  QuadraticForm q;
  q.b = m.transpose() * (b2.asDiagonal() * data.d) / double(n);
  m.array().colwise() *= b2.array().sqrt();
  q.a = m.transpose() * m / double(n);
  return q;
}

ProjectionFit solve_projection(const QuadraticForm& q, double lambda_prime,
                               const VectorXd* warm) {
  if (!(lambda_prime >= 0.0))
    throw InvalidInput("solve_projection: lambda_prime must be >= 0");
  if (!q.a.allFinite() || !q.b.allFinite())
    throw Error("solve_projection: non-finite quadratic form");
  const QuadL1Result res =
      solve_quad_l1(q.a, q.b, lambda_prime, q.b.size(), warm, 1e-7);
  ProjectionFit fit;
  fit.lambda_prime = lambda_prime;
  fit.w = res.w;
  fit.kkt_residual = res.kkt;
  fit.n_iter = res.n_iter;
  fit.converged = res.converged;
  return fit;
}

ProjectionFit fit_w(Family family, const Dataset& data, const MatrixXd& uhat,
                    const Coefficients& eta_hat, double lambda_prime) {
  return solve_projection(score_quadratic(family, data, uhat, eta_hat), lambda_prime);
}

CvResult cross_validate_lambda_prime(Family family, const Dataset& data,
                                     const MatrixXd& uhat,
                                     const Coefficients& eta_hat,
                                     const CvOptions& opts) {
  const auto n = data.n();
  CvResult res;
  res.fold_assignment = make_folds(data.y, family, opts.n_folds, opts.seed);

  const QuadraticForm full = score_quadratic(family, data, uhat, eta_hat);
  res.lambda_grid =
      lambda_grid(full.b.cwiseAbs().maxCoeff(), opts.grid_size, opts.grid_ratio);

  // Per-fold quadratic forms; sums decompose by row so the held-out form is
  // recovered from the full-sample one.
  VectorXd cv = VectorXd::Zero(opts.grid_size);
  for (int f = 0; f < opts.n_folds; ++f) {
    Dataset dtr;
    std::vector<Eigen::Index> tr;
    for (Eigen::Index i = 0; i < n; ++i)
      if (res.fold_assignment(i) != f) tr.push_back(i);
    dtr.y.resize(tr.size());
    dtr.d.resize(tr.size());
    dtr.q.resize(tr.size(), data.q.cols());
    MatrixXd utr(tr.size(), uhat.cols());
    for (std::size_t r = 0; r < tr.size(); ++r) {
      dtr.y(r) = data.y(tr[r]);
      dtr.d(r) = data.d(tr[r]);
      dtr.q.row(r) = data.q.row(tr[r]);
      if (uhat.cols() > 0) utr.row(r) = uhat.row(tr[r]);
    }
    const QuadraticForm qtr = score_quadratic(family, dtr, utr, eta_hat);
    const double w_tr = double(tr.size()) / double(n);
    const double w_te = 1.0 - w_tr;
    const MatrixXd a_te = (full.a - w_tr * qtr.a) / w_te;
    const VectorXd b_te = (full.b - w_tr * qtr.b) / w_te;

    VectorXd warm;
    for (int gi = 0; gi < opts.grid_size; ++gi) {
      const ProjectionFit fit = solve_projection(
          qtr, res.lambda_grid(gi), gi > 0 ? &warm : nullptr);
      warm = fit.w;
      cv(gi) += 0.5 * fit.w.dot(a_te * fit.w) - fit.w.dot(b_te);
    }
  }
  res.cv_loss = cv / double(opts.n_folds);
  Eigen::Index best;
  res.cv_loss.minCoeff(&best);
  res.lambda_star = res.lambda_grid(best);
  return res;
}

InferenceResult debias(Family family, const Dataset& data, const MatrixXd& uhat,
                       const Coefficients& eta_hat, const ProjectionFit& w_fit,
                       const DebiasOptions& opts) {
  if (!(opts.alpha > 0.0 && opts.alpha < 1.0))
    throw InvalidInput("debias: alpha must lie in (0,1)");
  const auto n = data.n();
  const VectorXd lp_full = linear_predictor(data, uhat, eta_hat);
  VectorXd lp_score = lp_full;
  if (opts.score_mode == ScoreMode::at_null)
    lp_score -= eta_hat.theta * data.d;

  const MatrixXd m = nuisance_design(data, uhat);
  const VectorXd dmw = data.d - m * w_fit.w;

  double score = 0.0, info = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    score -= (data.y(i) - cumulant_triple(family, lp_score(i)).b1) * dmw(i);
    info += cumulant_triple(family, lp_full(i)).b2 * data.d(i) * dmw(i);
  }
  score /= double(n);
  info /= double(n);
  if (info <= 1e-10)
    throw DegenerateData("debias: partial information is degenerate");

  InferenceResult r;
  r.alpha = opts.alpha;
  r.info_partial = info;
  r.theta_tilde = eta_hat.theta - score / info;
  r.se = 1.0 / std::sqrt(double(n) * info);
  if (opts.dispersion_rescale && family == Family::linear) {
    const double s2 = (data.y - lp_full).squaredNorm() / double(n);
    r.se *= std::sqrt(s2);
  }
  const double half = normal_quantile(1.0 - opts.alpha / 2.0) * r.se;
  r.ci_low = r.theta_tilde - half;
  r.ci_high = r.theta_tilde + half;
  r.z = r.theta_tilde / r.se;
  r.p_value = two_sided_p(r.z);
  return r;
}

}  // namespace confglm
