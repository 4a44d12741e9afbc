#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "csprobe/simulation.hpp"

namespace csprobe {

/// Detector model. Rates are in counts per second.
struct DetectionCalibration {
  double rate_per_atom = 1.0e4;
  double background_rate = 5.0e3;
  /// Count rate while the trap and lasers are off.
  double dark_rate = 0.0;
  double bin_s = 0.02;

  void validate() const;
  bool operator==(const DetectionCalibration&) const = default;
};

/// Half-open bin range [begin, end).
struct BinRange {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool operator==(const BinRange&) const = default;
};

struct TraceSegments {
  BinRange detect;
  BinRange off;
  BinRange background;

  bool operator==(const TraceSegments&) const = default;
};

/// Bin layout of one run: detect, then off, then background, contiguous.
TraceSegments segment_layout(const ExperimentSchedule& schedule, double bin_s);

struct FluorescenceTrace {
  std::int64_t trace_id = 0;
  double n_rb = 0.0;
  double bin_s = 0.02;
  TraceSegments segments;
  std::vector<std::int64_t> counts;

  /// Throws std::invalid_argument unless segments are ordered, disjoint and
  /// tile the counts, and all counts are non-negative.
  void validate() const;
  bool operator==(const FluorescenceTrace&) const = default;
};

struct LossEvent {
  std::size_t bin = 0;
  /// 1 for a single loss, 2 for a pair-loss candidate.
  int multiplicity = 1;

  bool operator==(const LossEvent&) const = default;
};

/// Integer atom number per detect bin plus the steps between levels.
/// Levels are referenced to an empty trap before the first detect bin.
struct AtomNumberEstimate {
  std::vector<int> staircase;
  std::vector<std::size_t> load_events;
  std::vector<LossEvent> loss_events;

  std::size_t pair_candidates() const;
  /// Atoms lost, counting a pair candidate twice.
  std::size_t atoms_lost() const;
};

struct StaircaseOptions {
  /// Odd median-filter window applied to the rounded levels. 1 keeps the raw
  /// rounding and derives events by segmentation; larger windows derive events
  /// from differences of the filtered levels.
  int median_window = 1;
  /// Cost in nats of one load or single loss when segmenting the trace.
  double event_penalty = 4.5;
  /// Additional cost of reading a two-atom drop inside one bin as a pair loss.
  double pair_extra_penalty = 1.5;
};

struct HistogramPeak {
  int atoms = 0;
  double center = 0.0;
  double width = 0.0;
  /// Number of pooled bins assigned to this peak.
  double weight = 0.0;
};

struct TraceHistogram {
  /// Bin edges of the background-subtracted count rate (1/s); size = occurrences + 1.
  std::vector<double> edges;
  std::vector<std::size_t> occurrences;
  std::vector<HistogramPeak> peaks;
  double poisson_lambda = 0.0;
  std::size_t traces = 0;
  std::size_t samples = 0;
};

struct HistogramOptions {
  /// Histogram bin width in 1/s; 0 selects rate_per_atom / 50.
  double bin_width = 0.0;
  /// Peak windows are +-window_frac * rate_per_atom around k * rate_per_atom.
  double window_frac = 0.35;
  std::size_t min_peak_samples = 5;
};

struct PoissonFit {
  double lambda = 0.0;
  double chi2 = 0.0;
  int dof = 0;
  double p_value = 1.0;
};

struct GaussianPeakFit {
  double amplitude = 0.0;
  double center = 0.0;
  double sigma = 0.0;
  bool converged = false;
};

/// Poisson photon counts for a trajectory. Detect bins use the time-averaged
/// atom number within each bin.
FluorescenceTrace synthesize_counts(const Trajectory& traj, const DetectionCalibration& cal,
                                    const ExperimentSchedule& schedule, std::uint64_t seed);

/// Mean count rate of the background segment.
double background_level(const FluorescenceTrace& trace);

/// Detect-bin count rates with the trace's own background level removed.
std::vector<double> subtract_background(const FluorescenceTrace& trace);

AtomNumberEstimate estimate_staircase(const FluorescenceTrace& trace,
                                      const DetectionCalibration& cal,
                                      const StaircaseOptions& options = {});

/// Effective time below which a load followed by a loss (or a loss followed by
/// a reload) at the given level leaves no trace in the estimated events.
double blind_time(const FluorescenceTrace& trace, const DetectionCalibration& cal, int level,
                  const StaircaseOptions& options = {});

TraceHistogram build_histogram(std::span<const FluorescenceTrace> traces,
                               const DetectionCalibration& cal,
                               const HistogramOptions& options = {});

/// Poisson mean from normalized peak weights and a chi-square goodness of fit.
/// effective_samples = 0 uses the number of pooled traces.
PoissonFit fit_poisson(const TraceHistogram& hist, double effective_samples = 0.0);

/// Least-squares Gaussian A exp(-(x-c)^2 / 2 s^2) through histogram points.
GaussianPeakFit fit_gaussian_peak(std::span<const double> x, std::span<const double> y,
                                  double center_guess, double sigma_guess);

}  // namespace csprobe
