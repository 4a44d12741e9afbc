#pragma once

#include <numbers>

namespace csprobe {

/// Length conversion used at config boundaries. Internally everything is cm, s.
inline constexpr double kCmPerUm = 1.0e-4;

/// Rate-equation coefficients and cloud geometry.
///
/// Units: r0, gamma in 1/s; alpha in 1/s per Rb atom; betas in cm^3/s;
/// radii are 1/e radii in cm.
struct PhysicalParams {
  double r0 = 1.48;
  double alpha = 2.3e-4;
  double gamma = 0.03;
  double beta_rbcs = 1.6e-10;
  double beta_cscs = 0.0;
  double w_cs = 6.6 * kCmPerUm;
  double w_rb = 4.0 * 6.6 * kCmPerUm;

  /// Throws std::invalid_argument if any field is negative or a radius is zero.
  void validate() const;

  bool operator==(const PhysicalParams&) const = default;
};

/// Gaussian cloud n(r) = n0 exp(-r^2 / w^2).
struct CloudModel {
  double n0 = 0.0;
  double w = 0.0;
  double atoms = 0.0;

  static CloudModel from_atoms(double atoms, double w);
};

/// Event rates of the four processes, all in 1/s.
struct RateSet {
  double load = 0.0;
  double loss_bg = 0.0;
  double loss_rbcs = 0.0;
  double loss_cscs = 0.0;

  double total_loss() const { return loss_bg + loss_rbcs + loss_cscs; }
  double total() const { return load + total_loss(); }
};

/// Effective volume V with  integral n_a n_b d^3r = N_a N_b / V.
double pair_overlap_volume(double w_a, double w_b);

/// Effective volume V with  integral n^2 d^3r = N^2 / V.
double self_overlap_volume(double w);

/// Shielded loading rate R0 - alpha N_Rb, clamped at zero.
double loading_rate(double n_rb, const PhysicalParams& params);

RateSet rates(int n_cs, double n_rb, const PhysicalParams& params);

/// One-body decay constant gamma + beta_RbCs N_Rb / V of the mean atom number.
double linear_loss_constant(double n_rb, const PhysicalParams& params);

/// Steady-state mean Cs number with beta_CsCs neglected.
double steady_state_mean(double n_rb, const PhysicalParams& params);

/// Exact mean atom number at time t for a trap started empty.
/// Only defined for beta_cscs == 0 (linear immigration-death process).
double transient_mean(double t, double n_rb, const PhysicalParams& params);

/// Central density N / (pi^{3/2} w^3) in cm^-3.
double peak_density(double atoms, double w);

}  // namespace csprobe
