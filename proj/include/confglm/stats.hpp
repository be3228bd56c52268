#pragma once

namespace confglm {

// Standard normal CDF; absolute error a few ulp for |t| <= 8.
double normal_cdf(double t);

// Inverse standard normal CDF on (0,1) (Wichura's PPND16 rational
// approximations). Throws InvalidInput outside (0,1).
double normal_quantile(double q);

// Two-sided p-value 2{1 - Phi(|z|)}.
double two_sided_p(double z);

}  // namespace confglm
