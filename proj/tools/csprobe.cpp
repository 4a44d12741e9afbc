// Command-line driver: simulate, analyze, fit, oracle.
#include <CLI11.hpp>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

#include "csprobe/commands.hpp"
#include "csprobe/config.hpp"

namespace {

struct NullBuffer : std::streambuf {
  int overflow(int c) override { return c; }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Single-atom collisional probe: simulation and beta_RbCs estimation"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::string out_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::uint64_t> traces;
  bool quiet = false;
  app.add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--out", out_path, "output path (trace file, analysis directory or report)");
  app.add_option("--seed", seed, "master seed, overrides the config");
  app.add_option("--traces", traces, "traces per Rb bin, overrides the config");
  app.add_flag("--quiet", quiet, "suppress progress output");

  auto* simulate = app.add_subcommand("simulate", "simulate a campaign and write traces");
  std::string input;
  auto* analyze = app.add_subcommand("analyze", "per-bin statistics and histograms from traces");
  analyze->add_option("input", input, "trace file (JSON Lines)")->required();
  auto* fit = app.add_subcommand("fit", "loading and beta fits with uncertainty budget");
  fit->add_option("input", input, "trace file (JSON Lines) or per-bin CSV")->required();
  std::string which = "all";
  auto* oracle = app.add_subcommand("oracle", "compare closed forms with brute-force oracles");
  oracle->add_option("which", which, "overlap | transient | stationary | all");

  CLI11_PARSE(app, argc, argv);

  NullBuffer null_buffer;
  std::ostream null_stream(&null_buffer);
  std::ostream& log = quiet ? null_stream : std::cout;

  try {
    csprobe::RunConfig cfg = config_path.empty() ? csprobe::RunConfig{} : csprobe::load_config(config_path);
    if (seed) cfg.master_seed = *seed;
    if (traces) cfg.traces_per_bin = *traces;
    cfg.validate();

    if (*simulate) {
      if (!out_path.empty()) cfg.output.traces = out_path;
      csprobe::cmd_simulate(cfg, log);
    } else if (*analyze) {
      csprobe::cmd_analyze(input, out_path.empty() ? cfg.output.analysis_dir : out_path, cfg, log);
    } else if (*fit) {
      csprobe::cmd_fit(input, out_path.empty() ? cfg.output.report : out_path, cfg, log);
    } else if (*oracle) {
      if (!csprobe::cmd_oracle(which, cfg, log)) {
        std::cerr << "error: oracle checks failed\n";
        return 1;
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
