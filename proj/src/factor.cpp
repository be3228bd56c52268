#include "confglm/factor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "confglm/rng.hpp"

namespace confglm {

namespace {

MatrixXd center_columns(const MatrixXd& x) {
  return x.rowwise() - x.colwise().mean();
}

// Scaled quasi log-likelihood -(2p)^{-1}{log|Sigma_x| + tr(S_x Sigma_x^{-1})}
// evaluated with the Woodbury identity; S_u = I_K.
double scaled_loglik(const MatrixXd& w, const VectorXd& psi, const MatrixXd& sx) {
  const auto p = w.cols();
  const VectorXd psi_inv = psi.cwiseInverse();
  const MatrixXd b = w * psi_inv.asDiagonal();            // K x p
  const MatrixXd cap = MatrixXd::Identity(w.rows(), w.rows()) + b * w.transpose();
  Eigen::LLT<MatrixXd> llt(cap);
  double logdet = psi.array().log().sum();
  logdet += 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const MatrixXd t = b * sx;  // K x p
  const double trace = sx.diagonal().dot(psi_inv) -
                       (llt.solve(t) * b.transpose()).trace();
  return -(logdet + trace) / (2.0 * static_cast<double>(p));
}

}  // namespace

FactorFit fit_em(const MatrixXd& x, int k, const EmOptions& opts) {
  const auto n = x.rows();
  const auto p = x.cols();
  if (k < 1) throw InvalidConfig("fit_em: k must be >= 1");
  if (k >= p) throw InvalidConfig("fit_em: k must be smaller than p");
  if (n < 2) throw InvalidInput("fit_em: need n >= 2");
  if (!x.allFinite()) throw InvalidInput("fit_em: non-finite entries in x");

  const MatrixXd xc = center_columns(x);
  const VectorXd col_var = xc.array().square().colwise().sum() / double(n);
  if ((col_var.array() > 0.0).count() < k)
    throw DegenerateData("fit_em: fewer than k columns with nonzero variance");

  const MatrixXd sx = xc.transpose() * xc / double(n);

  // Warm start: top-k principal directions scaled by singular values.
  Eigen::BDCSVD<MatrixXd> svd(xc / std::sqrt(double(n)), Eigen::ComputeThinV);
  MatrixXd w(k, p);
  for (int j = 0; j < k; ++j)
    w.row(j) = svd.singularValues()(j) * svd.matrixV().col(j).transpose();
  VectorXd psi = (sx.diagonal() - w.colwise().squaredNorm().transpose())
                     .cwiseMax(opts.variance_floor);

  FactorFit fit;
  fit.k = k;
  fit.loglik_trace.reserve(opts.max_iter + 1);
  double obj = scaled_loglik(w, psi, sx);
  fit.loglik_trace.push_back(obj);

  const MatrixXd eye = MatrixXd::Identity(k, k);
  for (int it = 0; it < opts.max_iter; ++it) {
    const MatrixXd b = w * psi.cwiseInverse().asDiagonal();  // K x p
    const MatrixXd g = (eye + b * w.transpose()).llt().solve(eye);
    const MatrixXd a = g * (b * sx);                          // K x p
    const MatrixXd m = g + a * b.transpose() * g;             // K x K
    w = m.llt().solve(a);
    psi = (sx.diagonal() - (w.transpose() * a).diagonal()).cwiseMax(opts.variance_floor);

    const double next = scaled_loglik(w, psi, sx);
    fit.loglik_trace.push_back(next);
    const double rel = std::abs(next - obj) / (std::abs(obj) + 1e-12);
    obj = next;
    if (rel < opts.tol) {
      fit.converged = true;
      break;
    }
  }
  fit.w = std::move(w);
  fit.sigma_e = std::move(psi);
  fit.s_u = eye;
  return fit;
}

FactorFit rotate_canonical(const FactorFit& fit) {
  const int k = fit.k;
  const auto p = fit.w.cols();

  // Whiten S_u (O1 = Cholesky factor), then diagonalize the information form.
  Eigen::LLT<MatrixXd> llt(fit.s_u);
  if (llt.info() != Eigen::Success)
    throw NumericalRankError("rotate_canonical: s_u not positive definite");
  const MatrixXd w1 = llt.matrixL().toDenseMatrix().transpose() * fit.w;

  const MatrixXd d =
      w1 * fit.sigma_e.cwiseInverse().asDiagonal() * w1.transpose() / double(p);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(d);
  if (es.info() != Eigen::Success)
    throw NumericalRankError("rotate_canonical: eigendecomposition failed");

  // Decreasing eigenvalue order; warn on (near-)ties, the order/sign
  // convention below still pins a unique representative.
  const VectorXd evals = es.eigenvalues().reverse();
  for (int j = 0; j + 1 < k; ++j) {
    if (evals(j) - evals(j + 1) < 1e-10)
      std::fprintf(stderr,
                   "confglm: warning: near-equal rotation eigenvalues (%g, %g)\n",
                   evals(j), evals(j + 1));
  }
  MatrixXd o2(k, k);
  for (int j = 0; j < k; ++j) o2.col(j) = es.eigenvectors().col(k - 1 - j);

  MatrixXd w_new = o2.transpose() * w1;
  for (int j = 0; j < k; ++j) {
    Eigen::Index arg;
    w_new.row(j).cwiseAbs().maxCoeff(&arg);
    if (w_new(j, arg) < 0.0) w_new.row(j) = -w_new.row(j);
  }

  FactorFit out = fit;
  out.w = std::move(w_new);
  out.s_u = MatrixXd::Identity(k, k);
  return out;
}

ConfounderEstimate estimate_confounders(const FactorFit& fit, const MatrixXd& x) {
  if (x.cols() != fit.w.cols())
    throw InvalidInput("estimate_confounders: x and loading dimensions disagree");
  const MatrixXd xc = center_columns(x);
  const MatrixXd b = fit.w * fit.sigma_e.cwiseInverse().asDiagonal();  // K x p
  const MatrixXd m = b * fit.w.transpose();                            // K x K
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(m);
  const double emin = es.eigenvalues().minCoeff();
  const double emax = es.eigenvalues().maxCoeff();
  if (!(emin > 0.0) || emax / emin > 1e12)
    throw NumericalRankError("estimate_confounders: W Sigma_e^-1 W^T numerically singular");
  ConfounderEstimate out;
  out.uhat = xc * b.transpose() * m.ldlt().solve(MatrixXd::Identity(fit.k, fit.k));
  return out;
}

VectorXd correlation_eigenvalues(const MatrixXd& x) {
  const auto n = x.rows();
  MatrixXd xc = center_columns(x);
  for (Eigen::Index j = 0; j < xc.cols(); ++j) {
    const double sd = std::sqrt(xc.col(j).squaredNorm() / double(n - 1));
    if (sd <= 0.0)
      throw DegenerateData("correlation_eigenvalues: zero-variance column");
    xc.col(j) /= sd;
  }
  const MatrixXd corr = xc.transpose() * xc / double(n - 1);
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(corr, Eigen::EigenvaluesOnly);
  return es.eigenvalues().reverse();
}

VectorXd pa_null_thresholds(Eigen::Index n, Eigen::Index p, const PaOptions& opts) {
  if (n < 3 || p < 2) throw InvalidInput("parallel analysis: need n >= 3, p >= 2");
  if (opts.n_null_draws < 1) throw InvalidConfig("parallel analysis: n_null_draws >= 1");
  if (!(opts.quantile > 0.0 && opts.quantile < 1.0))
    throw InvalidConfig("parallel analysis: quantile in (0,1)");

  MatrixXd null_evals(opts.n_null_draws, p);
  for (int d = 0; d < opts.n_null_draws; ++d) {
    Rng rng(Rng::substream_seed(opts.seed, static_cast<std::uint64_t>(d)));
    MatrixXd z(n, p);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < p; ++j) z(i, j) = rng.normal();
    null_evals.row(d) = correlation_eigenvalues(z).transpose();
  }
  // Per-rank empirical quantile (order statistic at ceil(q*m)).
  const int m = opts.n_null_draws;
  const int idx = std::min<int>(m - 1, static_cast<int>(std::ceil(opts.quantile * m)) - 1);
  VectorXd thr(p);
  std::vector<double> col(m);
  for (Eigen::Index j = 0; j < p; ++j) {
    for (int d = 0; d < m; ++d) col[d] = null_evals(d, j);
    std::nth_element(col.begin(), col.begin() + idx, col.end());
    thr(j) = col[idx];
  }
  return thr;
}

int select_k_with_thresholds(const MatrixXd& x, const VectorXd& thresholds) {
  const VectorXd obs = correlation_eigenvalues(x);
  if (obs.size() != thresholds.size())
    throw InvalidInput("select_k: threshold length mismatch");
  // Horn's rule: leading ranks only, stopping at the first non-exceedance.
  int k = 0;
  for (Eigen::Index j = 0; j < obs.size(); ++j) {
    if (obs(j) > thresholds(j))
      ++k;
    else
      break;
  }
  return k;
}

int select_k_parallel_analysis(const MatrixXd& x, const PaOptions& opts) {
  return select_k_with_thresholds(x, pa_null_thresholds(x.rows(), x.cols(), opts));
}

}  // namespace confglm
