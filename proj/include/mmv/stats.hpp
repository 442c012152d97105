#pragma once

#include <cstddef>
#include <vector>

namespace mmv {

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
};

// Ordinary least squares of y on x; needs two distinct x values.
LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y);

double mean(const std::vector<double>& v);
double median(std::vector<double> v);
// Sample standard deviation (n - 1); 0 for fewer than two values.
double sample_sd(const std::vector<double>& v);

// Kendall tau-a of v against its index.
double kendall_tau(const std::vector<double>& v);

// Jackknife standard error from leave-one-out replicates.
double jackknife_se(const std::vector<double>& replicates);

}  // namespace mmv
