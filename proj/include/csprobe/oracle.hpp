#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "csprobe/physics.hpp"
#include "csprobe/simulation.hpp"
#include "csprobe/stats.hpp"

namespace csprobe::oracle {

/// Brute-force 1 / integral n_a n_b d^3r for unit-normalized Gaussian clouds,
/// by a 3-D trapezoidal rule on a cube. Shares no code with the closed form.
double quadrature_pair_volume(double w_a, double w_b, int points_per_width = 4,
                              double half_width = 8.0);

/// Brute-force integral of a unit-normalized Gaussian cloud (should be 1).
double quadrature_normalization(double w, int points_per_width = 4, double half_width = 8.0);

struct TransientPoint {
  double t = 0.0;
  double ensemble_mean = 0.0;
  double standard_error = 0.0;
  double analytic = 0.0;
  /// |ensemble - analytic| / standard_error.
  double z = 0.0;
};

/// Ensemble mean N_Cs(t) over `runs` simulated trajectories vs the closed form.
std::vector<TransientPoint> transient_check(double n_rb, const PhysicalParams& params,
                                            std::span<const double> checkpoints,
                                            std::size_t runs, std::uint64_t seed);

struct StationaryResult {
  double lambda = 0.0;
  double sample_mean = 0.0;
  std::vector<int> end_states;
  stats::ChiSquareResult test;
};

/// Final atom numbers of an immigration-death process (load rate `load`,
/// per-atom loss `loss`) after t_end, tested against Poisson(load / loss).
StationaryResult stationary_check(double load, double loss, std::size_t runs, double t_end,
                                  std::uint64_t seed);

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
};

std::vector<Check> run_overlap_oracle();
std::vector<Check> run_transient_oracle(const PhysicalParams& params, std::uint64_t seed,
                                        std::size_t runs = 10000);
std::vector<Check> run_stationary_oracle(std::uint64_t seed, std::size_t runs = 5000);

}  // namespace csprobe::oracle
