#pragma once

#include "confglm/types.hpp"

namespace confglm {

struct QuadL1Result {
  VectorXd w;
  double kkt = 0.0;
  int n_iter = 0;
  bool converged = false;
};

// Minimizes (1/2) w^T A w - b^T w + lambda * sum_{j < n_pen} |w_j|.
// Coordinates at n_pen and beyond are unpenalized. Active-set Newton steps
// (direct solves on the working set) with a coordinate-descent fallback;
// warm starts make repeated solves along a lambda grid cheap.
QuadL1Result solve_quad_l1(const MatrixXd& a, const VectorXd& b, double lambda,
                           Eigen::Index n_pen, const VectorXd* warm = nullptr,
                           double kkt_tol = 1e-7);

}  // namespace confglm
