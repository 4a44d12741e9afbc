#include "csprobe/simulation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <string>

#include "csprobe/parallel.hpp"

namespace csprobe {

std::string_view to_string(EventKind k) {
  switch (k) {
    case EventKind::Load: return "load";
    case EventKind::LossBackground: return "loss_bg";
    case EventKind::LossRbCs: return "loss_rbcs";
    case EventKind::LossCsCsPair: return "loss_cscs_pair";
  }
  return "unknown";
}

EventKind event_kind_from_string(std::string_view name) {
  for (auto k : {EventKind::Load, EventKind::LossBackground, EventKind::LossRbCs,
                 EventKind::LossCsCsPair})
    if (to_string(k) == name) return k;
  throw std::invalid_argument("unknown event kind '" + std::string(name) + "'");
}

int Trajectory::n_at(double t) const {
  int n = 0;
  for (const auto& e : events) {
    if (e.t > t) break;
    n = e.n_after;
  }
  return n;
}

double Trajectory::integral(double t0, double t1) const {
  t0 = std::max(t0, 0.0);
  t1 = std::min(t1, t_end);
  if (t1 <= t0) return 0.0;
  double acc = 0.0;
  double t_prev = 0.0;
  int n = 0;
  for (const auto& e : events) {
    if (e.t >= t1) break;
    const double lo = std::max(t_prev, t0);
    if (e.t > lo) acc += n * (e.t - lo);
    n = e.n_after;
    t_prev = e.t;
  }
  const double lo = std::max(t_prev, t0);
  if (t1 > lo) acc += n * (t1 - lo);
  return acc;
}

void ExperimentSchedule::validate() const {
  if (!(detect_s > 0.0) || !(off_s > 0.0) || !(background_s > 0.0))
    throw std::invalid_argument("schedule durations must all be positive");
}

std::optional<NextEvent> next_event(int n_cs, double n_rb, const PhysicalParams& params,
                                    Rng& rng) {
  const RateSet r = rates(n_cs, n_rb, params);
  const double total = r.total();
  if (!(total > 0.0)) return std::nullopt;

  NextEvent ev;
  ev.dt = std::exponential_distribution<double>(total)(rng);

  // Categorical choice over enabled transitions only, so rounding at the upper
  // edge can never select a zero-rate kind.
  const double u = std::uniform_real_distribution<double>(0.0, total)(rng);
  const std::array<std::pair<double, EventKind>, 4> parts{{
      {r.load, EventKind::Load},
      {r.loss_bg, EventKind::LossBackground},
      {r.loss_rbcs, EventKind::LossRbCs},
      {r.loss_cscs, EventKind::LossCsCsPair},
  }};
  double acc = 0.0;
  for (const auto& [rate, kind] : parts) {
    if (!(rate > 0.0)) continue;
    acc += rate;
    ev.kind = kind;
    if (u < acc) break;
  }
  return ev;
}

Trajectory simulate_trajectory(double n_rb, const PhysicalParams& params,
                               const ExperimentSchedule& schedule, std::uint64_t seed) {
  Trajectory traj;
  traj.t_end = schedule.detect_s;
  traj.n_rb = n_rb;
  traj.seed = seed;

  Rng rng(seed);
  double t = 0.0;
  int n = 0;
  while (true) {
    const auto ev = next_event(n, n_rb, params, rng);
    if (!ev) break;
    t += ev->dt;
    if (t > traj.t_end) break;
    n += delta_n(ev->kind);
    traj.events.push_back({t, ev->kind, n});
  }
  return traj;
}

std::vector<Trajectory> simulate_ensemble(std::span<const double> grid,
                                          const PhysicalParams& params,
                                          const ExperimentSchedule& schedule,
                                          const EnsembleOptions& options) {
  if (grid.empty()) throw std::invalid_argument("simulate_ensemble: empty grid");
  if (options.traces_per_bin < 1)
    throw std::invalid_argument("simulate_ensemble: traces_per_bin must be >= 1");
  params.validate();
  schedule.validate();

  const auto per_bin = static_cast<std::size_t>(options.traces_per_bin);
  std::vector<Trajectory> out(grid.size() * per_bin);
  parallel_for(out.size(), options.threads, [&](std::size_t i) {
    const std::size_t bin = i / per_bin;
    const std::size_t trace = i % per_bin;
    const auto seed = derive_seed(options.master_seed, Stream::Dynamics, bin, trace);
    out[i] = simulate_trajectory(grid[bin], params, schedule, seed);
    out[i].trace_id = static_cast<std::int64_t>(i);
  });
  return out;
}

std::vector<double> make_grid(double min, double max, double step) {
  if (!(step > 0.0) || max < min || min < 0.0)
    throw std::invalid_argument("grid requires 0 <= min <= max and step > 0");
  std::vector<double> grid;
  const auto count = static_cast<std::size_t>(std::floor((max - min) / step + 1e-9)) + 1;
  grid.reserve(count);
  for (std::size_t i = 0; i < count; ++i) grid.push_back(min + step * static_cast<double>(i));
  return grid;
}

}  // namespace csprobe
