#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "csprobe/physics.hpp"
#include "csprobe/random.hpp"

namespace csprobe {

enum class EventKind { Load, LossBackground, LossRbCs, LossCsCsPair };

/// Change of the Cs atom number caused by one event.
constexpr int delta_n(EventKind k) {
  switch (k) {
    case EventKind::Load: return 1;
    case EventKind::LossBackground:
    case EventKind::LossRbCs: return -1;
    case EventKind::LossCsCsPair: return -2;
  }
  return 0;
}

std::string_view to_string(EventKind k);
/// Inverse of to_string; throws std::invalid_argument on unknown names.
EventKind event_kind_from_string(std::string_view name);

struct Event {
  double t = 0.0;
  EventKind kind = EventKind::Load;
  int n_after = 0;

  bool operator==(const Event&) const = default;
};

/// Exact event history of N_Cs(t) on [0, t_end], starting from an empty trap.
struct Trajectory {
  std::vector<Event> events;
  double t_end = 0.0;
  double n_rb = 0.0;
  std::uint64_t seed = 0;
  std::int64_t trace_id = 0;

  /// Atom number just after time t (right-continuous).
  int n_at(double t) const;
  /// Integral of N_Cs(t) dt over [t0, t1] (clipped to [0, t_end]).
  double integral(double t0, double t1) const;

  bool operator==(const Trajectory&) const = default;
};

/// Experimental sequence: Cs detection, trap off, background measurement.
struct ExperimentSchedule {
  double detect_s = 3.0;
  double off_s = 0.5;
  double background_s = 0.2;

  void validate() const;
  bool operator==(const ExperimentSchedule&) const = default;
};

struct NextEvent {
  double dt = 0.0;
  EventKind kind = EventKind::Load;
};

/// Waiting time and kind of the next event. Empty when no transition is
/// enabled (absorbing state).
std::optional<NextEvent> next_event(int n_cs, double n_rb, const PhysicalParams& params,
                                    Rng& rng);

Trajectory simulate_trajectory(double n_rb, const PhysicalParams& params,
                               const ExperimentSchedule& schedule, std::uint64_t seed);

struct EnsembleOptions {
  std::uint64_t master_seed = 0;
  int traces_per_bin = 200;
  /// Worker threads; 0 selects hardware concurrency. Output never depends on it.
  unsigned threads = 0;
};

/// traces_per_bin trajectories per grid point, ordered bin-major. Trace seeds
/// are derive_seed(master, Stream::Dynamics, bin, trace) and trace ids are
/// bin * traces_per_bin + trace.
std::vector<Trajectory> simulate_ensemble(std::span<const double> grid,
                                          const PhysicalParams& params,
                                          const ExperimentSchedule& schedule,
                                          const EnsembleOptions& options);

/// Uniform grid {min, min+step, ..., <= max}.
std::vector<double> make_grid(double min, double max, double step);

}  // namespace csprobe
