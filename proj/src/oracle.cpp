#include "csprobe/oracle.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

namespace csprobe::oracle {

namespace {

double unit_cloud(double r2, double w) {
  return std::exp(-r2 / (w * w)) / (std::pow(std::numbers::pi, 1.5) * w * w * w);
}

template <class Density>
double cube_trapezoid(double extent, double h, Density&& density) {
  const int n = static_cast<int>(std::ceil(extent / h));
  double sum = 0.0;
  for (int i = -n; i <= n; ++i) {
    const double x = i * h;
    const double wx = (std::abs(i) == n) ? 0.5 : 1.0;
    for (int j = -n; j <= n; ++j) {
      const double y = j * h;
      const double wy = (std::abs(j) == n) ? 0.5 : 1.0;
      for (int k = -n; k <= n; ++k) {
        const double z = k * h;
        const double wz = (std::abs(k) == n) ? 0.5 : 1.0;
        sum += wx * wy * wz * density(x * x + y * y + z * z);
      }
    }
  }
  return sum * h * h * h;
}

std::string format(const char* fmt, auto... args) {
  char buf[256];
  std::snprintf(buf, sizeof buf, fmt, args...);
  return buf;
}

}  // namespace

double quadrature_pair_volume(double w_a, double w_b, int points_per_width, double half_width) {
  const double w_min = std::min(w_a, w_b);
  const double integral =
      cube_trapezoid(half_width * w_min, w_min / points_per_width,
                     [&](double r2) { return unit_cloud(r2, w_a) * unit_cloud(r2, w_b); });
  return 1.0 / integral;
}

double quadrature_normalization(double w, int points_per_width, double half_width) {
  return cube_trapezoid(half_width * w, w / points_per_width,
                        [&](double r2) { return unit_cloud(r2, w); });
}

std::vector<TransientPoint> transient_check(double n_rb, const PhysicalParams& params,
                                            std::span<const double> checkpoints,
                                            std::size_t runs, std::uint64_t seed) {
  ExperimentSchedule schedule;
  double t_max = 0.0;
  for (double t : checkpoints) t_max = std::max(t_max, t);
  schedule.detect_s = t_max > 0.0 ? t_max : 1.0;

  std::vector<double> sum(checkpoints.size(), 0.0), sum2(checkpoints.size(), 0.0);
  for (std::size_t r = 0; r < runs; ++r) {
    const auto traj =
        simulate_trajectory(n_rb, params, schedule, derive_seed(seed, Stream::Oracle, 0, r));
    for (std::size_t c = 0; c < checkpoints.size(); ++c) {
      const double n = traj.n_at(checkpoints[c]);
      sum[c] += n;
      sum2[c] += n * n;
    }
  }
  std::vector<TransientPoint> out;
  const double m = static_cast<double>(runs);
  for (std::size_t c = 0; c < checkpoints.size(); ++c) {
    TransientPoint p;
    p.t = checkpoints[c];
    p.ensemble_mean = sum[c] / m;
    const double var = std::max(0.0, (sum2[c] - m * p.ensemble_mean * p.ensemble_mean) / (m - 1.0));
    p.standard_error = std::sqrt(var / m);
    p.analytic = transient_mean(p.t, n_rb, params);
    const double diff = std::abs(p.ensemble_mean - p.analytic);
    p.z = p.standard_error > 0.0 ? diff / p.standard_error : (diff == 0.0 ? 0.0 : INFINITY);
    out.push_back(p);
  }
  return out;
}

StationaryResult stationary_check(double load, double loss, std::size_t runs, double t_end,
                                  std::uint64_t seed) {
  PhysicalParams p;
  p.r0 = load;
  p.alpha = 0.0;
  p.gamma = loss;
  p.beta_rbcs = 0.0;
  p.beta_cscs = 0.0;
  ExperimentSchedule schedule;
  schedule.detect_s = t_end;

  StationaryResult res;
  res.lambda = load / loss;
  double sum = 0.0;
  for (std::size_t r = 0; r < runs; ++r) {
    const auto traj = simulate_trajectory(0.0, p, schedule, derive_seed(seed, Stream::Oracle, 1, r));
    const int n = traj.events.empty() ? 0 : traj.events.back().n_after;
    res.end_states.push_back(n);
    sum += n;
  }
  res.sample_mean = sum / static_cast<double>(runs);
  res.test = stats::poisson_chi_square(res.end_states, res.lambda);
  return res;
}

std::vector<Check> run_overlap_oracle() {
  std::vector<Check> out;
  const double radii_um[] = {1.0, 3.1622776601683795, 10.0, 31.622776601683793, 100.0};
  double worst = 0.0;
  for (double a : radii_um)
    for (double b : radii_um) {
      const double wa = a * kCmPerUm, wb = b * kCmPerUm;
      const double rel = std::abs(quadrature_pair_volume(wa, wb) / pair_overlap_volume(wa, wb) - 1.0);
      worst = std::max(worst, rel);
    }
  out.push_back({"overlap 5x5 grid [1, 100] um", worst < 1e-6,
                 format("max relative error %.3e (tolerance 1e-6)", worst)});

  const double w = 6.6 * kCmPerUm;
  const double q = quadrature_pair_volume(w, 4.0 * w);
  const double rel = std::abs(q / pair_overlap_volume(w, 4.0 * w) - 1.0);
  out.push_back({"overlap (6.6 um, 26.4 um)", rel < 1e-6,
                 format("quadrature %.6e cm^3, relative error %.3e", q, rel)});

  const double special = std::pow(17.0 * std::numbers::pi, 1.5) * w * w * w;
  const double rel_special = std::abs(pair_overlap_volume(w, 4.0 * w) / special - 1.0);
  out.push_back({"(17 pi)^{3/2} w^3 special case", rel_special < 1e-14,
                 format("relative difference %.3e", rel_special)});
  return out;
}

std::vector<Check> run_transient_oracle(const PhysicalParams& params, std::uint64_t seed,
                                        std::size_t runs) {
  std::vector<Check> out;
  const double checkpoints[] = {0.5, 1.0, 1.5, 2.0, 3.0};
  std::uint64_t set = 0;
  for (double n_rb : {0.0, 550.0, 3300.0}) {
    const auto pts = transient_check(n_rb, params, checkpoints, runs, seed + set++);
    for (const auto& p : pts)
      out.push_back({format("transient N_Rb=%g t=%.1f s", n_rb, p.t), p.z < 3.0,
                     format("ensemble %.4f +- %.4f vs analytic %.4f (z = %.2f)", p.ensemble_mean,
                            p.standard_error, p.analytic, p.z)});
  }
  return out;
}

std::vector<Check> run_stationary_oracle(std::uint64_t seed, std::size_t runs) {
  const auto res = stationary_check(5.0, 2.5, runs, 10.0, seed);
  return {{"stationary Poisson(2) chi-square", res.test.p_value > 0.01,
           format("mean %.4f, chi2 %.2f on %d dof, p = %.4f", res.sample_mean, res.test.statistic,
                  res.test.dof, res.test.p_value)}};
}

}  // namespace csprobe::oracle
