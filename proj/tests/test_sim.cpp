#include <doctest.h>

#include <cmath>

#include "confglm/pipeline.hpp"
#include "confglm/rng.hpp"
#include "confglm/sim.hpp"

using namespace confglm;

namespace {

SimConfig small_config() {
  SimConfig c;
  c.n = 60;
  c.p = 9;
  c.replications = 2;
  c.seed = 5;
  c.cv_grid_size = 12;
  c.pa_draws = 20;
  return c;
}

double column_variance(const VectorXd& v) {
  const double m = v.mean();
  return (v.array() - m).square().sum() / (v.size() - 1);
}

}  // namespace

TEST_CASE("diagonal-block loading has the documented pattern") {
  SimConfig c = small_config();
  c.p = 6;
  const MatrixXd w = loading_matrix(c, 0);
  REQUIRE(w.rows() == 3);
  REQUIRE(w.cols() == 6);
  MatrixXd ref = MatrixXd::Zero(3, 6);
  ref.row(0).segment(0, 2).setConstant(0.5);
  ref.row(1).segment(2, 2).setConstant(1.0);
  ref.row(2).segment(4, 2).setConstant(1.5);
  CHECK((w - ref).cwiseAbs().maxCoeff() == 0.0);
  // Same for every replication.
  CHECK((loading_matrix(c, 7) - ref).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("uniform loading lies in [0,1] and is redrawn per replication") {
  SimConfig c = small_config();
  c.loading = Loading::uniform;
  const MatrixXd w0 = loading_matrix(c, 0);
  const MatrixXd w1 = loading_matrix(c, 1);
  CHECK(w0.minCoeff() >= 0.0);
  CHECK(w0.maxCoeff() <= 1.0);
  CHECK((w0 - w1).cwiseAbs().maxCoeff() > 0.0);
  // The loading replays the replication stream, so the dataset built with it
  // is internally consistent: X - U W has unit-ish noise variance.
  const Dataset d = generate_dataset(c, 1);
  MatrixXd x(d.n(), d.p());
  x.col(0) = d.d;
  x.rightCols(d.q.cols()) = d.q;
  const MatrixXd resid = x - d.u_true * w1;
  const double v = resid.array().square().mean();
  CHECK(v == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("dataset generation is deterministic per (seed, replication)") {
  const SimConfig c = small_config();
  const Dataset a = generate_dataset(c, 1);
  const Dataset b = generate_dataset(c, 1);
  CHECK((a.y - b.y).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.d - b.d).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.q - b.q).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.u_true - b.u_true).cwiseAbs().maxCoeff() == 0.0);
  const Dataset other = generate_dataset(c, 2);
  CHECK((a.y - other.y).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("marginal covariate variances match the factor decomposition") {
  SimConfig c = small_config();
  c.n = 100000;
  c.p = 6;
  const Dataset d = generate_dataset(c, 0);
  // var(X_j) = w_j^2 + 1: blocks give 1.25, 2.0, 3.25.
  CHECK(column_variance(d.d) == doctest::Approx(1.25).epsilon(0.03));
  CHECK(column_variance(d.q.col(0)) == doctest::Approx(1.25).epsilon(0.03));
  CHECK(column_variance(d.q.col(1)) == doctest::Approx(2.0).epsilon(0.03));
  CHECK(column_variance(d.q.col(3)) == doctest::Approx(3.25).epsilon(0.03));
}

TEST_CASE("logistic responses are binary and correlated with the predictor") {
  SimConfig c = small_config();
  c.family = Family::logistic;
  c.n = 2000;
  const Dataset d = generate_dataset(c, 0);
  for (int i = 0; i < d.n(); ++i)
    REQUIRE((d.y(i) == 0.0 || d.y(i) == 1.0));
  const VectorXd lp = d.q.col(0) + d.u_true.rowwise().sum();
  double hi = 0.0, lo = 0.0;
  int nhi = 0, nlo = 0;
  for (int i = 0; i < d.n(); ++i)
    (lp(i) > 0 ? (hi += d.y(i), ++nhi) : (lo += d.y(i), ++nlo));
  CHECK(hi / nhi > lo / nlo);
}

TEST_CASE("the oracle method equals the pipeline run on true confounders") {
  const SimConfig c = small_config();
  const Dataset d = generate_dataset(c, 0);
  const InferenceResult via_method = run_method(Method::oracle, d, c, 0, nullptr);

  MatrixXd x(d.n(), d.p());
  x.col(0) = d.d;
  x.rightCols(d.q.cols()) = d.q;
  const MatrixXd uc = d.u_true.rowwise() - d.u_true.colwise().mean();
  PipelineOptions opts;
  opts.alpha = c.alpha;
  opts.cv_grid_size = c.cv_grid_size;
  opts.seed = Rng::substream_seed(Rng::substream_seed(c.seed, 0), 0x9u);
  opts.uhat_override = &uc;
  const PipelineResult direct = full_pipeline(c.family, d.y, x, 0, opts);

  CHECK(via_method.theta_tilde == direct.inference.theta_tilde);
  CHECK(via_method.ci_low == direct.inference.ci_low);
  CHECK(via_method.ci_high == direct.inference.ci_high);
  CHECK(via_method.p_value == direct.inference.p_value);
}

TEST_CASE("single-replication summaries count coverage exactly") {
  SimConfig c = small_config();
  c.replications = 1;
  c.methods = {Method::oracle, Method::naive};
  const CoverageSummary s = run_replications(c);
  REQUIRE(s.records.size() == 2);
  for (const auto& [name, ms] : s.per_method) {
    CHECK(ms.n_success == 1);
    CHECK(ms.n_fail == 0);
    CHECK((ms.coverage == 0.0 || ms.coverage == 1.0));
    CHECK(ms.coverage == double(ms.n_covered));
  }
  CHECK(s.valid);
  // Records ordered by replication index, then configured method order.
  CHECK(s.records[0].method == Method::oracle);
  CHECK(s.records[1].method == Method::naive);
}

TEST_CASE("summaries are byte-identical across thread counts") {
  SimConfig c = small_config();
  c.replications = 4;
  c.methods = {Method::oracle, Method::naive};
  SimConfig c8 = c;
  c8.threads = 8;
  const CoverageSummary a = run_replications(c);
  const CoverageSummary b = run_replications(c8);
  CHECK(a.to_json_text(c) == b.to_json_text(c8));
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].rep_index == b.records[i].rep_index);
    CHECK(a.records[i].theta_tilde == b.records[i].theta_tilde);
    CHECK(a.records[i].ci_low == b.records[i].ci_low);
    CHECK(a.records[i].ci_high == b.records[i].ci_high);
  }
}

TEST_CASE("config validation and JSON parsing reject bad inputs") {
  CHECK_THROWS_AS(SimConfig::from_json_text("{not json"), InvalidConfig);
  CHECK_THROWS_AS(SimConfig::from_json_text("{}"), InvalidConfig);
  CHECK_THROWS_AS(SimConfig::from_json_text(
                      R"({"n":500,"p":300,"family":"gamma","replications":1,"seed":0})"),
                  InvalidConfig);
  // diag design needs p divisible by 3
  CHECK_THROWS_AS(SimConfig::from_json_text(
                      R"({"n":500,"p":301,"family":"linear","replications":1,"seed":0})"),
                  InvalidConfig);
  SimConfig c = small_config();
  c.alpha = 0.0;
  CHECK_THROWS_AS(c.validate(), InvalidConfig);
  c = small_config();
  c.replications = 0;
  CHECK_THROWS_AS(c.validate(), InvalidConfig);

  // Round trip, and threads deliberately absent from the echo.
  const SimConfig base = small_config();
  const std::string text = base.to_json_text();
  CHECK(text.find("threads") == std::string::npos);
  const SimConfig back = SimConfig::from_json_text(text);
  CHECK(back.n == base.n);
  CHECK(back.p == base.p);
  CHECK(back.seed == base.seed);
  CHECK(back.cv_grid_size == base.cv_grid_size);
  CHECK(back.to_json_text() == text);
}

TEST_CASE("coefficient estimation error is finite on a small instance") {
  const SimConfig c = small_config();
  const Dataset d = generate_dataset(c, 0);
  const double err = eta_l1_error(d, c, 0, nullptr);
  CHECK(std::isfinite(err));
  CHECK(err >= 0.0);
}
