#pragma once

namespace rlcd {

// Regularized lower incomplete gamma P(a, x).
double gamma_p(double a, double x);

// Chi-square CDF and upper-alpha quantile.
double chi2_cdf(double x, double dof);
double chi2_quantile(double p, double dof);  // returns x with CDF(x) = p

}  // namespace rlcd
