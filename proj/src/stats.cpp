#include "confglm/stats.hpp"

#include <cmath>

#include "confglm/types.hpp"

namespace confglm {

double normal_cdf(double t) {
  if (!std::isfinite(t)) {
    if (std::isnan(t)) throw InvalidInput("normal_cdf: NaN argument");
    return t > 0 ? 1.0 : 0.0;
  }
  return 0.5 * std::erfc(-t / std::sqrt(2.0));
}

// PPND16 (Wichura, AS 241): max relative error about 1e-16.
double normal_quantile(double q) {
  if (!(q > 0.0 && q < 1.0)) throw InvalidInput("normal_quantile: q must lie in (0,1)");
  const double r = q - 0.5;
  if (std::abs(r) <= 0.425) {
    const double s = 0.180625 - r * r;
    return r *
           (((((((2.5090809287301226727e3 * s + 3.3430575583588128105e4) * s +
                 6.7265770927008700853e4) *
                    s +
                4.5921953931549871457e4) *
                   s +
               1.3731693765509461125e4) *
                  s +
              1.9715909503065514427e3) *
                 s +
             1.3314166789178437745e2) *
                s +
            3.3871328727963666080e0) /
           (((((((5.2264952788528545610e3 * s + 2.8729085735721942674e4) * s +
                 3.9307895800092710610e4) *
                    s +
                2.1213794301586595867e4) *
                   s +
               5.3941960214247511077e3) *
                  s +
              6.8718700749205790830e2) *
                 s +
             4.2313330701600911252e1) *
                s +
            1.0);
  }
  double u = (r < 0.0) ? q : 1.0 - q;
  double s = std::sqrt(-std::log(u));
  double val;
  if (s <= 5.0) {
    s -= 1.6;
    val = (((((((7.74545014278341407640e-4 * s + 2.27238449892691845833e-2) * s +
                2.41780725177450611770e-1) *
                   s +
               1.27045825245236838258e0) *
                  s +
              3.64784832476320460504e0) *
                 s +
             5.76949722146069140550e0) *
                s +
            4.63033784615654529590e0) *
               s +
           1.42343711074968357734e0) /
          (((((((1.05075007164441684324e-9 * s + 5.47593808499534494600e-4) * s +
                1.51986665636164571966e-2) *
                   s +
               1.48103976427480074590e-1) *
                  s +
              6.89767334985100004550e-1) *
                 s +
             1.67638483018380384940e0) *
                s +
            2.05319162663775882187e0) *
               s +
           1.0);
  } else {
    s -= 5.0;
    val = (((((((2.01033439929228813265e-7 * s + 2.71155556874348757815e-5) * s +
                1.24266094738807843860e-3) *
                   s +
               2.65321895265761230930e-2) *
                  s +
              2.96560571828504891230e-1) *
                 s +
             1.78482653991729133580e0) *
                s +
            5.46378491116411436990e0) *
               s +
           6.65790464350110377720e0) /
          (((((((2.04426310338993978564e-15 * s + 1.42151175831644588870e-7) * s +
                1.84631831751005468180e-5) *
                   s +
               7.86869131145613259100e-4) *
                  s +
              1.48753612908506148525e-2) *
                 s +
             1.36929880922735805310e-1) *
                s +
            5.99832206555887937690e-1) *
               s +
           1.0);
  }
  return (r < 0.0) ? -val : val;
}

double two_sided_p(double z) {
  return std::erfc(std::abs(z) / std::sqrt(2.0));
}

}  // namespace confglm
