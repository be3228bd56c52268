#include "confglm/quad_l1.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace confglm {

namespace {

double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

// Stationarity residual from an exact gradient g = A w - b.
double kkt_residual(const VectorXd& g, const VectorXd& w, Eigen::Index n_pen,
                    double lambda) {
  double kkt = 0.0;
  for (Eigen::Index j = 0; j < w.size(); ++j) {
    double r;
    if (j >= n_pen) {
      r = std::abs(g(j));
    } else if (w(j) != 0.0) {
      r = std::abs(g(j) + lambda * (w(j) > 0 ? 1.0 : -1.0));
    } else {
      r = std::max(std::abs(g(j)) - lambda, 0.0);
    }
    kkt = std::max(kkt, r);
  }
  return kkt;
}

// Plain cyclic coordinate descent; the safety net when the active-set loop
// stalls (singular working blocks, degeneracy).
void cd_fallback(const MatrixXd& a, const VectorXd& b, double lambda,
                 Eigen::Index n_pen, double kkt_tol, QuadL1Result& res) {
  const auto m = b.size();
  VectorXd grad = a * res.w - b;
  for (int cycle = 0; cycle < 100000; ++cycle) {
    ++res.n_iter;
    double max_change = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) {
      const double ajj = a(j, j);
      if (ajj <= 1e-12) continue;
      const double c = ajj * res.w(j) - grad(j);
      const double next = (j < n_pen) ? soft_threshold(c, lambda) / ajj : c / ajj;
      if (next != res.w(j)) {
        grad.noalias() += a.col(j) * (next - res.w(j));
        max_change = std::max(max_change, std::abs(next - res.w(j)));
        res.w(j) = next;
      }
    }
    res.kkt = kkt_residual(grad, res.w, n_pen, lambda);
    if (res.kkt < kkt_tol) {
      res.converged = true;
      return;
    }
    if (max_change < 1e-15) return;  // stuck at round-off
  }
}

}  // namespace

QuadL1Result solve_quad_l1(const MatrixXd& a, const VectorXd& b, double lambda,
                           Eigen::Index n_pen, const VectorXd* warm,
                           double kkt_tol) {
  const auto m = b.size();
  if (a.rows() != m || a.cols() != m)
    throw InvalidInput("solve_quad_l1: dimension mismatch");
  if (!(lambda >= 0.0)) throw InvalidInput("solve_quad_l1: lambda must be >= 0");
  if (warm && warm->size() != m)
    throw InvalidInput("solve_quad_l1: warm start has wrong length");

  QuadL1Result res;
  res.w = warm ? *warm : VectorXd::Zero(m);

  std::vector<Eigen::Index> active;
  std::vector<char> in_active(m, 0);
  VectorXd sign = VectorXd::Zero(m);  // sub-gradient sign for penalized actives
  for (Eigen::Index j = 0; j < m; ++j) {
    if (j >= n_pen || res.w(j) != 0.0) {
      active.push_back(j);
      in_active[j] = 1;
      if (j < n_pen) sign(j) = res.w(j) > 0 ? 1.0 : -1.0;
    }
  }

  for (int it = 0; it < 200; ++it) {
    res.n_iter = it;
    const auto na = static_cast<Eigen::Index>(active.size());

    bool step_ok = true;
    if (na > 0) {
      MatrixXd aa(na, na);
      VectorXd rhs(na);
      for (Eigen::Index r = 0; r < na; ++r) {
        for (Eigen::Index c = 0; c < na; ++c) aa(r, c) = a(active[r], active[c]);
        rhs(r) = b(active[r]) -
                 (active[r] < n_pen ? lambda * sign(active[r]) : 0.0);
      }
      Eigen::LDLT<MatrixXd> ldlt(aa);
      const VectorXd x = ldlt.solve(rhs);
      if (ldlt.info() != Eigen::Success || !x.allFinite() ||
          (aa * x - rhs).cwiseAbs().maxCoeff() > 1e-6 * (1.0 + rhs.cwiseAbs().maxCoeff())) {
        step_ok = false;  // singular working block: leave it to the fallback
      } else {
        // Longest step toward the Newton point that keeps penalized signs.
        double t = 1.0;
        Eigen::Index blocker = -1;
        for (Eigen::Index r = 0; r < na; ++r) {
          const Eigen::Index j = active[r];
          if (j >= n_pen) continue;
          if (sign(j) * x(r) < 0.0) {
            const double tr = res.w(j) / (res.w(j) - x(r));
            if (tr < t) {
              t = tr;
              blocker = r;
            }
          }
        }
        if (blocker >= 0) {
          for (Eigen::Index r = 0; r < na; ++r) {
            const Eigen::Index j = active[r];
            res.w(j) += t * (x(r) - res.w(j));
          }
          const Eigen::Index j = active[blocker];
          res.w(j) = 0.0;
          sign(j) = 0.0;
          in_active[j] = 0;
          active.erase(active.begin() + blocker);
          continue;
        }
        for (Eigen::Index r = 0; r < na; ++r) res.w(active[r]) = x(r);
      }
    }
    if (!step_ok) {
      cd_fallback(a, b, lambda, n_pen, kkt_tol, res);
      return res;
    }

    const VectorXd g = a * res.w - b;
    res.kkt = kkt_residual(g, res.w, n_pen, lambda);
    if (res.kkt < kkt_tol) {
      res.converged = true;
      return res;
    }

    // Admit every strict violator in one batch; the sign-preserving step
    // above removes any that the next solve turns out not to need.
    bool added = false;
    for (Eigen::Index j = 0; j < n_pen; ++j) {
      if (in_active[j]) continue;
      if (std::abs(g(j)) - lambda > kkt_tol) {
        active.push_back(j);
        in_active[j] = 1;
        sign(j) = g(j) > 0 ? -1.0 : 1.0;
        added = true;
      }
    }
    if (!added) {
      // Violation sits inside the working set (degenerate block); fall back.
      cd_fallback(a, b, lambda, n_pen, kkt_tol, res);
      return res;
    }
  }
  cd_fallback(a, b, lambda, n_pen, kkt_tol, res);
  return res;
}

}  // namespace confglm
