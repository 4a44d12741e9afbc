#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "csprobe/inference.hpp"
#include "csprobe/photon.hpp"
#include "csprobe/simulation.hpp"

namespace csprobe::io {

/// Error carrying the 1-based line number of a malformed input line.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

// {"trace_id", "n_rb", "seed", "t_end_s", "events": [[t, kind, n_after], ...]}
nlohmann::json trajectory_to_json(const Trajectory& traj);
Trajectory trajectory_from_json(const nlohmann::json& j);
void write_trajectories(std::ostream& out, const std::vector<Trajectory>& trajs);
std::vector<Trajectory> read_trajectories(std::istream& in);

// {"trace_id", "n_rb", "bin_s", "segments": {"detect": [i0, i1], "off": [i1, i2],
//  "background": [i2, i3]}, "counts": [...]}
nlohmann::json trace_to_json(const FluorescenceTrace& trace);
FluorescenceTrace trace_from_json(const nlohmann::json& j);
void write_trace_line(std::ostream& out, const FluorescenceTrace& trace);
/// Throws ParseError for malformed lines and for an empty stream.
std::vector<FluorescenceTrace> read_traces(std::istream& in);

/// Shortest text that parses back to the same double.
std::string format_double(double v);

void write_bins_csv(std::ostream& out, const BinnedDataset& binned,
                    const std::vector<BinState>* labels = nullptr);
/// Reads the aggregate columns written by write_bins_csv (no trace-level data).
BinnedDataset read_bins_csv(std::istream& in);

/// Columns: bin_center,occurrences
void write_histogram_csv(std::ostream& out, const TraceHistogram& hist);
/// Columns: trace_id,bin_index,n_cs
void write_staircase_csv(std::ostream& out, std::int64_t trace_id, const AtomNumberEstimate& est,
                         bool header);
/// Columns: n_rb,model,data,data_se,fitted
void write_curve_csv(std::ostream& out, const std::vector<CurvePoint>& curve);

}  // namespace csprobe::io
