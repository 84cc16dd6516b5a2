#pragma once

#include <Eigen/Dense>

#include <vector>

namespace mesvar {

// Robust location/scale helpers. Quantiles use linear interpolation between
// order statistics at index q*(n-1).
double median(std::vector<double> values);
double quantile(std::vector<double> values, double q);

// Median absolute deviation scaled by 1.4826 so it is consistent with the
// standard deviation under Gaussian data.
double scaled_mad(const std::vector<double>& values, double med);

// Distribution tails. All are two-sided-test building blocks; survival
// functions are computed directly so extreme tails (p ~ 1e-300) keep
// relative accuracy.
double normal_sf(double z);
double student_t_sf(double t, double df);
double chi_squared_sf(double x, double df);

// Two-sided p-values.
double t_test_p(double t, double df);

// Regularized incomplete beta I_x(a, b) and lower incomplete gamma P(a, x),
// exposed for tests.
double incomplete_beta(double a, double b, double x);
double incomplete_gamma_p(double a, double x);

}  // namespace mesvar
