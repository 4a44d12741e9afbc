#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "csprobe/config.hpp"
#include "csprobe/inference.hpp"
#include "csprobe/photon.hpp"

namespace csprobe {

/// Failure reported to the user with a diagnostic; maps to a nonzero exit.
class CommandError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CampaignSummary {
  std::size_t bins = 0;
  std::size_t traces = 0;
  std::size_t events = 0;
};

/// Simulates the configured campaign and synthesizes one trace per trajectory.
/// Photon seeds are derive_seed(master, Stream::Photons, bin, trace).
std::vector<FluorescenceTrace> simulate_campaign(const RunConfig& cfg,
                                                 std::vector<Trajectory>* trajectories = nullptr);

/// Writes traces (and optionally trajectories) to the configured paths.
CampaignSummary cmd_simulate(const RunConfig& cfg, std::ostream& log);

struct BinHistogram {
  double n_rb_center = 0.0;
  TraceHistogram histogram;
  std::optional<PoissonFit> poisson;
};

struct AnalysisResult {
  std::vector<TraceSummary> summaries;
  std::vector<AtomNumberEstimate> staircases;
  BinnedDataset binned;
  std::vector<BinHistogram> histograms;
};

AnalysisResult analyze_traces(const std::vector<FluorescenceTrace>& traces, const RunConfig& cfg);

std::vector<FluorescenceTrace> load_traces(const std::filesystem::path& path);

/// Writes bins.csv, staircases.csv and histograms/hist_nrb_<N>.csv into out_dir.
AnalysisResult cmd_analyze(const std::filesystem::path& trace_file,
                           const std::filesystem::path& out_dir, const RunConfig& cfg,
                           std::ostream& log);

struct FitReport {
  LoadingFit loading;
  BetaFit beta;
  SystematicsResult systematics;
  std::optional<double> bootstrap_err;
  std::vector<BinState> labels;
  std::vector<CurvePoint> curve;
  BinnedDataset binned;

  nlohmann::json to_json() const;
};

/// Full estimation chain on a binned dataset. Throws CommandError naming each
/// bin's classification when no bin is steady.
FitReport fit_dataset(const BinnedDataset& binned, const RunConfig& cfg, bool bootstrap);

/// Input is a JSON Lines trace file or a per-bin CSV (by .csv extension).
/// Writes the report JSON plus <report stem>_curve.csv and <report stem>_bins.csv.
FitReport cmd_fit(const std::filesystem::path& input, const std::filesystem::path& report_path,
                  const RunConfig& cfg, std::ostream& log);

/// Runs oracles: "overlap", "transient", "stationary" or "all". Returns true
/// iff every check passes.
bool cmd_oracle(const std::string& which, const RunConfig& cfg, std::ostream& log);

}  // namespace csprobe
