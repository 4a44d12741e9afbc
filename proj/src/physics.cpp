#include "csprobe/physics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace csprobe {

namespace {

constexpr double kPi = std::numbers::pi;

void require_positive_radius(double w, const char* name) {
  if (!(w > 0.0) || !std::isfinite(w))
    throw std::domain_error(std::string(name) + " must be a positive finite radius");
}

}  // namespace

void PhysicalParams::validate() const {
  const auto check = [](double v, const char* name) {
    if (!(v >= 0.0) || !std::isfinite(v))
      throw std::invalid_argument(std::string("physical parameter ") + name +
                                  " must be finite and non-negative");
  };
  check(r0, "r0");
  check(alpha, "alpha");
  check(gamma, "gamma");
  check(beta_rbcs, "beta_rbcs");
  check(beta_cscs, "beta_cscs");
  if (!(w_cs > 0.0) || !(w_rb > 0.0) || !std::isfinite(w_cs) || !std::isfinite(w_rb))
    throw std::invalid_argument("cloud radii w_cs and w_rb must be positive");
}

CloudModel CloudModel::from_atoms(double atoms, double w) {
  return CloudModel{peak_density(atoms, w), w, atoms};
}

double pair_overlap_volume(double w_a, double w_b) {
  require_positive_radius(w_a, "w_a");
  require_positive_radius(w_b, "w_b");
  return std::pow(kPi * (w_a * w_a + w_b * w_b), 1.5);
}

double self_overlap_volume(double w) {
  require_positive_radius(w, "w");
  return pair_overlap_volume(w, w);
}

double loading_rate(double n_rb, const PhysicalParams& params) {
  return std::max(0.0, params.r0 - params.alpha * n_rb);
}

RateSet rates(int n_cs, double n_rb, const PhysicalParams& params) {
  RateSet r;
  r.load = loading_rate(n_rb, params);
  if (n_cs <= 0) return r;
  const double n = n_cs;
  r.loss_bg = params.gamma * n;
  r.loss_rbcs = params.beta_rbcs * n_rb * n / pair_overlap_volume(params.w_cs, params.w_rb);
  // Discrete pair counting: a single atom cannot collide with itself.
  r.loss_cscs = params.beta_cscs * n * (n - 1.0) / self_overlap_volume(params.w_cs);
  return r;
}

double linear_loss_constant(double n_rb, const PhysicalParams& params) {
  return params.gamma + params.beta_rbcs * n_rb / pair_overlap_volume(params.w_cs, params.w_rb);
}

double steady_state_mean(double n_rb, const PhysicalParams& params) {
  const double denom = linear_loss_constant(n_rb, params);
  if (!(denom > 0.0))
    throw std::domain_error("steady_state_mean: zero loss constant (gamma = 0 at N_Rb = 0)");
  return loading_rate(n_rb, params) / denom;
}

double transient_mean(double t, double n_rb, const PhysicalParams& params) {
  if (params.beta_cscs != 0.0)
    throw std::logic_error("transient_mean: closed form requires beta_cscs = 0");
  if (t < 0.0) throw std::domain_error("transient_mean: negative time");
  const double big_gamma = linear_loss_constant(n_rb, params);
  const double load = loading_rate(n_rb, params);
  if (big_gamma == 0.0) return load * t;
  return load / big_gamma * -std::expm1(-big_gamma * t);
}

double peak_density(double atoms, double w) {
  require_positive_radius(w, "w");
  return atoms / (std::pow(kPi, 1.5) * w * w * w);
}

}  // namespace csprobe
