#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "csprobe/photon.hpp"
#include "csprobe/physics.hpp"

namespace csprobe {

/// Per-trace statistics extracted from one staircase.
struct TraceSummary {
  std::int64_t trace_id = 0;
  double n_rb = 0.0;
  double detect_s = 0.0;
  std::size_t loads = 0;
  /// Atoms lost; a pair candidate counts twice.
  std::size_t atoms_lost = 0;
  std::size_t pair_candidates = 0;
  /// Mean atom number over detect bins starting at the settling time.
  double mean_n = 0.0;
  /// Mean atom number over the whole detect segment.
  double mean_n_full = 0.0;
  /// Number of detect bins at each integer level.
  std::vector<std::size_t> level_counts;
  /// Sum over detect bins of bin_s * blind_time * (2 level + 1), in s^2. Times
  /// R * kappa this is the expected number of hidden load/loss pairs.
  double blind_exposure = 0.0;

  bool operator==(const TraceSummary&) const = default;
};

struct SummaryOptions {
  /// Bins starting before this time are excluded from mean_n.
  double settle_s = 1.0;
  StaircaseOptions staircase;
};

TraceSummary summarize_trace(const FluorescenceTrace& trace, const AtomNumberEstimate& est,
                             const DetectionCalibration& cal, const SummaryOptions& options = {});
TraceSummary summarize_trace(const FluorescenceTrace& trace, const DetectionCalibration& cal,
                             const SummaryOptions& options = {});

struct RbBin {
  double n_rb_center = 0.0;
  std::size_t n_traces = 0;
  double detect_time_s = 0.0;
  double loads = 0.0;
  double atoms_lost = 0.0;
  double loading_rate = 0.0;
  double loss_rate = 0.0;
  double mean_n_cs = 0.0;
  double mean_n_cs_se = 0.0;
  double poisson_lambda = 0.0;
  /// Expected load/loss pairs too short to resolve; included in both rates.
  double hidden_pairs = 0.0;
  /// Empty when the bin was read back from an aggregate table.
  std::vector<TraceSummary> traces;
};

/// Recomputes the aggregate fields of a bin from its traces.
void aggregate_bin(RbBin& bin);

struct BinnedDataset {
  double width = 220.0;
  std::vector<RbBin> bins;
  std::vector<std::string> notices;
};

/// Groups traces by Rb number into bins centered on multiples of width.
BinnedDataset bin_by_nrb(std::span<const TraceSummary> traces, double width = 220.0);

struct LoadingFit {
  double r0 = 0.0;
  double r0_err = 0.0;
  double alpha = 0.0;
  double alpha_err = 0.0;
  double covariance = 0.0;
  double chi2 = 0.0;
  std::vector<double> residuals;
};

/// Weighted straight-line fit R(N_Rb) = R0 - alpha N_Rb with Poisson counting
/// weights. Needs at least 3 bins.
LoadingFit fit_loading_rate(const BinnedDataset& binned);

enum class BinState { Transient, Steady };

/// Steady bins form the contiguous high-N_Rb run with |loading/loss - 1| <= tol
/// and loss > 0. The default tolerance places the boundary near 1000 Rb atoms
/// for a 3 s detection window.
std::vector<BinState> classify_steady_state(const BinnedDataset& binned, double tol = 0.30);

std::vector<std::size_t> steady_bins(std::span<const BinState> labels);

struct BetaFit {
  double beta = 0.0;
  double stat_err = 0.0;
  double syst_err = 0.0;
  std::vector<std::size_t> fitted_bins;
  double chi2 = 0.0;
  /// chi2 per degree of freedom.
  double goodness = 0.0;
  bool unit_weights = false;
};

/// Fits the steady-state mean relation to the listed bins with beta_RbCs as the
/// only free parameter (beta >= 0). R0 and alpha come from `loading`, gamma
/// and the cloud radii from `known`.
BetaFit fit_beta(const BinnedDataset& binned, const PhysicalParams& known,
                 const LoadingFit& loading, std::span<const std::size_t> bins);

/// Same, fitting the bins classified as steady with tolerance tol.
BetaFit fit_beta(const BinnedDataset& binned, const PhysicalParams& known,
                 const LoadingFit& loading, double tol = 0.30);

/// Known parameters with R0, alpha, beta replaced by fit results.
PhysicalParams fitted_params(const PhysicalParams& known, const LoadingFit& loading,
                             double beta);

struct CurvePoint {
  double n_rb = 0.0;
  double model = 0.0;
  double data = 0.0;
  double data_se = 0.0;
  bool fitted = false;
};

/// Model curve at every bin center; bins outside the fit are extrapolation.
std::vector<CurvePoint> model_curve(const BinnedDataset& binned, const PhysicalParams& known,
                                    const LoadingFit& loading, const BetaFit& fit);

struct SystematicsOptions {
  double nrb_factor = 1.3;
  double size_frac = 0.15;
};

struct SystematicCorner {
  double nrb_scale = 1.0;
  double w_cs = 0.0;
  double w_rb = 0.0;
  double beta = 0.0;
};

struct SystematicsResult {
  double syst_err = 0.0;
  std::vector<SystematicCorner> corners;
};

/// Refits the loading line and beta with N_Rb scaled and beta re-solved for
/// the chosen cloud radii; other inputs unchanged.
double refit_beta(const BinnedDataset& binned, const PhysicalParams& known,
                  std::span<const std::size_t> bins, double nrb_scale, double w_cs, double w_rb);

/// Half the spread of beta over the 2x2x2 corners
/// {N_Rb * f, N_Rb / f} x {w_cs (1 +- s)} x {w_rb (1 +- s)}.
SystematicsResult propagate_systematics(const BinnedDataset& binned, const PhysicalParams& known,
                                        const BetaFit& fit, const SystematicsOptions& options = {});

/// Trace-level bootstrap within each bin; standard deviation of refitted beta.
double bootstrap_stat_error(const BinnedDataset& binned, const PhysicalParams& known,
                            std::span<const std::size_t> bins, std::size_t resamples,
                            std::uint64_t seed);

}  // namespace csprobe
