#include "confglm/pipeline.hpp"

#include <cmath>

#include "confglm/glm.hpp"
#include "confglm/rng.hpp"

namespace confglm {

namespace {

template <class F>
auto stage(const char* name, F&& f) {
  try {
    return f();
  } catch (const PipelineError&) {
    throw;
  } catch (const std::exception& e) {
    throw PipelineError(name, e.what());
  }
}

Dataset split_exposure(const VectorXd& y, const MatrixXd& x, Eigen::Index e) {
  Dataset d;
  d.y = y;
  d.d = x.col(e);
  d.q.resize(x.rows(), x.cols() - 1);
  Eigen::Index c = 0;
  for (Eigen::Index j = 0; j < x.cols(); ++j)
    if (j != e) d.q.col(c++) = x.col(j);
  return d;
}

}  // namespace

FactorStage run_factor_stage(const MatrixXd& x, int k, const PipelineOptions& opts) {
  FactorStage out;
  if (k < 0) {
    out.k = stage("select_k", [&] {
      if (opts.pa_thresholds) return select_k_with_thresholds(x, *opts.pa_thresholds);
      PaOptions pa = opts.pa;
      pa.seed = Rng::substream_seed(opts.seed, 0xFAC70Bu);
      return select_k_parallel_analysis(x, pa);
    });
  } else {
    out.k = k;
  }
  if (out.k == 0) {
    out.uhat.resize(x.rows(), 0);
    return out;
  }
  const FactorFit fit = stage("factor_em", [&] { return fit_em(x, out.k, opts.em); });
  const FactorFit rot = stage("rotate", [&] { return rotate_canonical(fit); });
  out.uhat = stage("confounders", [&] { return estimate_confounders(rot, x).uhat; });
  return out;
}

PipelineResult full_pipeline(Family family, const VectorXd& y, const MatrixXd& x,
                             Eigen::Index exposure_index,
                             const PipelineOptions& opts) {
  if (exposure_index < 0 || exposure_index >= x.cols())
    throw PipelineError("input", "exposure index out of range");
  if (y.size() != x.rows()) throw PipelineError("input", "y and x rows disagree");
  stage("input", [&] { check_responses(family, y); return 0; });

  MatrixXd xs = x;
  VectorXd scales = VectorXd::Ones(x.cols());
  if (opts.standardize) {
    for (Eigen::Index j = 0; j < xs.cols(); ++j) {
      const double mean = xs.col(j).mean();
      const double sd = std::sqrt((xs.col(j).array() - mean).square().sum() /
                                  double(xs.rows() - 1));
      if (sd > 0) {
        scales(j) = sd;
        xs.col(j) /= sd;
      }
    }
  }

  PipelineResult res;
  MatrixXd uhat;
  if (opts.uhat_override) {
    uhat = *opts.uhat_override;
    res.k_used = static_cast<int>(uhat.cols());
  } else {
    FactorStage fs = run_factor_stage(xs, opts.k, opts);
    uhat = std::move(fs.uhat);
    res.k_used = fs.k;
  }
  if (opts.add_intercept) {
    uhat.conservativeResize(Eigen::NoChange, uhat.cols() + 1);
    uhat.col(uhat.cols() - 1).setOnes();
  }

  const Dataset data = split_exposure(y, xs, exposure_index);

  CvOptions cv;
  cv.n_folds = opts.cv_folds;
  cv.grid_size = opts.cv_grid_size;
  cv.grid_ratio = opts.cv_grid_ratio;
  cv.seed = Rng::substream_seed(opts.seed, 0xC4u);

  const CvResult cv_lambda = stage("cv_lambda", [&] {
    return cross_validate_lambda(family, data, uhat, cv);
  });
  res.lambda_star = cv_lambda.lambda_star;

  res.lasso = stage("lasso", [&] {
    return fit_lasso(family, data, uhat, res.lambda_star);
  });

  CvOptions cvp = cv;
  cvp.seed = Rng::substream_seed(opts.seed, 0xC5u);
  const CvResult cv_prime = stage("cv_lambda_prime", [&] {
    return cross_validate_lambda_prime(family, data, uhat, res.lasso.coeffs, cvp);
  });
  res.lambda_prime_star = cv_prime.lambda_star;

  res.projection = stage("fit_w", [&] {
    return fit_w(family, data, uhat, res.lasso.coeffs, res.lambda_prime_star);
  });

  DebiasOptions db;
  db.alpha = opts.alpha;
  db.score_mode = opts.score_mode;
  db.dispersion_rescale = opts.dispersion_rescale;
  res.inference = stage("debias", [&] {
    return debias(family, data, uhat, res.lasso.coeffs, res.projection, db);
  });

  if (opts.standardize && scales(exposure_index) != 1.0) {
    const double s = scales(exposure_index);
    res.inference.theta_tilde /= s;
    res.inference.se /= s;
    res.inference.ci_low /= s;
    res.inference.ci_high /= s;
    res.inference.info_partial *= s * s;
  }
  return res;
}

}  // namespace confglm
