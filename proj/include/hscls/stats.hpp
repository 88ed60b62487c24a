#pragma once

#include <span>

namespace hscls {

/// Regularized incomplete beta I_x(a, b) by the modified Lentz continued
/// fraction (relative tolerance 1e-12), using I_x(a,b) = 1 - I_{1-x}(b,a) when
/// x lies past the mean so the fraction converges quickly.
double regularized_incomplete_beta(double x, double a, double b);

/// P(F > f) for an F(d1, d2) variate: I_{d2/(d2+d1 f)}(d2/2, d1/2).
double f_survival(double f, double d1, double d2);

double normal_pdf(double z);
double normal_cdf(double z);

double mean(std::span<const double> xs);
/// Even counts average the two central values. Empty input is rejected.
double median(std::span<const double> xs);

}  // namespace hscls
