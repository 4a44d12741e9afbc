#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace csprobe::stats {

/// Upper tail P(X >= x) of a chi-square distribution with dof degrees of freedom.
double chi_square_sf(double x, int dof);

double poisson_pmf(int k, double lambda);

struct ChiSquareResult {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
};

/// Pearson chi-square of observed counts against expected counts. Tail cells
/// with expectation below min_expected are merged into their neighbour.
/// `fitted_params` is subtracted from the degrees of freedom.
ChiSquareResult chi_square_test(std::span<const double> observed,
                                std::span<const double> expected, int fitted_params,
                                double min_expected = 5.0);

/// Goodness of fit of integer samples against Poisson(lambda), lambda known.
ChiSquareResult poisson_chi_square(std::span<const int> samples, double lambda);

/// Kolmogorov-Smirnov distance between samples and a CDF.
template <class Cdf>
double ks_statistic(std::vector<double> samples, Cdf&& cdf);

/// Asymptotic p-value of the one-sample KS statistic d with n samples.
double ks_p_value(double d, std::size_t n);

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_and_se(std::span<const double> values);

}  // namespace csprobe::stats

#include <algorithm>
#include <cmath>

template <class Cdf>
double csprobe::stats::ks_statistic(std::vector<double> samples, Cdf&& cdf) {
  std::sort(samples.begin(), samples.end());
  const double n = static_cast<double>(samples.size());
  double d = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double f = cdf(samples[i]);
    d = std::max({d, (static_cast<double>(i) + 1.0) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}
