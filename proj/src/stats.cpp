#include "csprobe/stats.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/poisson.hpp>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace csprobe::stats {

double chi_square_sf(double x, int dof) {
  if (dof <= 0) return 1.0;
  if (x <= 0.0) return 1.0;
  return boost::math::cdf(boost::math::complement(boost::math::chi_squared(dof), x));
}

double poisson_pmf(int k, double lambda) {
  if (k < 0) return 0.0;
  if (lambda == 0.0) return k == 0 ? 1.0 : 0.0;
  return boost::math::pdf(boost::math::poisson_distribution<double>(lambda), k);
}

ChiSquareResult chi_square_test(std::span<const double> observed,
                                std::span<const double> expected, int fitted_params,
                                double min_expected) {
  if (observed.size() != expected.size() || observed.empty())
    throw std::invalid_argument("chi_square_test: mismatched or empty cells");
  std::vector<double> obs(observed.begin(), observed.end());
  std::vector<double> exp(expected.begin(), expected.end());
  // Merge sparse cells from the tail inward, then from the head.
  while (exp.size() > 1 && exp.back() < min_expected) {
    exp[exp.size() - 2] += exp.back();
    obs[obs.size() - 2] += obs.back();
    exp.pop_back();
    obs.pop_back();
  }
  while (exp.size() > 1 && exp.front() < min_expected) {
    exp[1] += exp[0];
    obs[1] += obs[0];
    exp.erase(exp.begin());
    obs.erase(obs.begin());
  }
  ChiSquareResult r;
  for (std::size_t i = 0; i < exp.size(); ++i) {
    if (exp[i] > 0.0) r.statistic += (obs[i] - exp[i]) * (obs[i] - exp[i]) / exp[i];
  }
  r.dof = static_cast<int>(exp.size()) - 1 - fitted_params;
  r.p_value = chi_square_sf(r.statistic, r.dof);
  return r;
}

ChiSquareResult poisson_chi_square(std::span<const int> samples, double lambda) {
  if (samples.empty()) throw std::invalid_argument("poisson_chi_square: no samples");
  const int kmax = *std::max_element(samples.begin(), samples.end());
  const auto cells = static_cast<std::size_t>(std::max(kmax, 0)) + 2;
  std::vector<double> obs(cells, 0.0), exp(cells, 0.0);
  for (int s : samples) obs[static_cast<std::size_t>(std::max(s, 0))] += 1.0;
  const double n = static_cast<double>(samples.size());
  double cum = 0.0;
  for (std::size_t k = 0; k + 1 < cells; ++k) {
    exp[k] = n * poisson_pmf(static_cast<int>(k), lambda);
    cum += exp[k];
  }
  exp.back() = std::max(0.0, n - cum);  // P(X > kmax)
  return chi_square_test(obs, exp, 0);
}

double ks_p_value(double d, std::size_t n) {
  if (n == 0) return 1.0;
  const double sn = std::sqrt(static_cast<double>(n));
  // Stephens' finite-n correction of the Kolmogorov limit.
  const double lambda = (sn + 0.12 + 0.11 / sn) * d;
  if (lambda < 1e-3) return 1.0;
  double sum = 0.0;
  for (int j = 1; j <= 100; ++j) {
    const double term = std::exp(-2.0 * j * j * lambda * lambda);
    sum += (j % 2 == 1 ? 2.0 : -2.0) * term;
    if (term < 1e-16) break;
  }
  return std::clamp(sum, 0.0, 1.0);
}

MeanSe mean_and_se(std::span<const double> values) {
  MeanSe r;
  if (values.empty()) return r;
  const double n = static_cast<double>(values.size());
  r.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (values.size() < 2) return r;
  double ss = 0.0;
  for (double v : values) ss += (v - r.mean) * (v - r.mean);
  r.se = std::sqrt(ss / (n - 1.0) / n);
  return r;
}

}  // namespace csprobe::stats
