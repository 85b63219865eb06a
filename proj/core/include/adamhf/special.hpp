#pragma once

namespace adamhf {

// Regularized lower/upper incomplete gamma functions P(a,x), Q(a,x).
// Series expansion for x < a+1, continued fraction otherwise.
double gamma_p(double a, double x);
double gamma_q(double a, double x);

// Upper-tail probability of a chi-square(1) variate.
double chi2_1_sf(double x);

}  // namespace adamhf
