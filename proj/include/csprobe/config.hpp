#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "csprobe/photon.hpp"
#include "csprobe/physics.hpp"
#include "csprobe/simulation.hpp"

namespace csprobe {

/// Physical parameters in config units; radii in micrometres.
struct PhysicsConfig {
  double r0_per_s = 1.48;
  double alpha_per_s_per_atom = 2.3e-4;
  double gamma_per_s = 0.03;
  double beta_rbcs_cm3_per_s = 1.6e-10;
  double beta_cscs_cm3_per_s = 0.0;
  double w_cs_um = 6.6;
  double w_rb_um = 26.4;

  PhysicalParams to_params() const;
  bool operator==(const PhysicsConfig&) const = default;
};

struct GridSpec {
  double n_rb_min = 0.0;
  double n_rb_max = 3300.0;
  double n_rb_step = 220.0;

  bool operator==(const GridSpec&) const = default;
};

struct AnalysisConfig {
  double bin_width_atoms = 220.0;
  double steady_tol = 0.30;
  double settle_s = 1.0;
  double nrb_factor = 1.3;
  double size_frac = 0.15;
  std::uint64_t bootstrap_resamples = 500;
  int median_window = 1;

  bool operator==(const AnalysisConfig&) const = default;
};

struct OutputPaths {
  std::string traces = "traces.jsonl";
  /// Empty disables the trajectory dump.
  std::string trajectories;
  std::string analysis_dir = "analysis";
  std::string report = "fit_report.json";

  bool operator==(const OutputPaths&) const = default;
};

struct RunConfig {
  PhysicsConfig physics;
  DetectionCalibration calibration;
  ExperimentSchedule schedule;
  GridSpec grid;
  std::uint64_t traces_per_bin = 200;
  std::uint64_t master_seed = 20100301;
  unsigned threads = 0;
  AnalysisConfig analysis;
  OutputPaths output;

  /// Throws std::invalid_argument on any out-of-range value.
  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

/// Missing keys take defaults; unknown keys and wrong types are rejected.
RunConfig config_from_json(const nlohmann::json& j);
nlohmann::json config_to_json(const RunConfig& cfg);
RunConfig load_config(const std::filesystem::path& path);

}  // namespace csprobe
