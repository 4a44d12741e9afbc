// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>

#include <unistd.h>

#include "csprobe/commands.hpp"
#include "csprobe/io.hpp"
#include "csprobe/oracle.hpp"
#include "test_support.hpp"

using namespace csprobe;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

BinnedDataset noiseless_bins(const PhysicalParams& p) {
  BinnedDataset d;
  for (double n = 0.0; n <= 3300.0; n += 220.0) {
    RbBin b;
    b.n_rb_center = n;
    b.n_traces = 200;
    b.detect_time_s = 600.0;
    b.loading_rate = loading_rate(n, p);
    b.loads = b.loading_rate * b.detect_time_s;
    b.loss_rate = b.loading_rate;
    b.mean_n_cs = steady_state_mean(n, p);
    b.mean_n_cs_se = 0.05 * std::max(b.mean_n_cs, 0.01);
    d.bins.push_back(b);
  }
  return d;
}

/// State shared by the campaign-level criteria.
struct Pipeline {
  RunConfig cfg;
  FitReport report;
  double seconds = 0.0;
};

Pipeline run_pipeline(const fs::path& dir) {
  Pipeline p;
  p.cfg.output.traces = (dir / "traces.jsonl").string();
  p.cfg.output.analysis_dir = (dir / "analysis").string();
  p.cfg.output.report = (dir / "fit_report.json").string();
  std::ostringstream log;
  const auto t0 = std::chrono::steady_clock::now();
  cmd_simulate(p.cfg, log);
  cmd_analyze(p.cfg.output.traces, p.cfg.output.analysis_dir, p.cfg, log);
  p.report = cmd_fit(p.cfg.output.traces, p.cfg.output.report, p.cfg, log);
  p.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return p;
}

}  // namespace

int main() {
  const fs::path dir = fs::temp_directory_path() / ("csprobe_acceptance_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const RunConfig defaults;
  const auto truth = defaults.physics.to_params();

  Pipeline pipe;
  bool pipeline_ok = true;
  std::string pipeline_error;
  try {
    pipe = run_pipeline(dir);
  } catch (const std::exception& e) {
    pipeline_ok = false;
    pipeline_error = e.what();
  }

  std::vector<std::pair<std::string, std::function<Outcome()>>> criteria;

  criteria.emplace_back("1 round-trip beta recovery", [&] {
    if (!pipeline_ok) return Outcome{false, "pipeline failed: " + pipeline_error};
    const double rel = pipe.report.beta.beta / truth.beta_rbcs - 1.0;
    return Outcome{std::abs(rel) <= 0.20 && pipe.seconds < 300.0,
                   fmt("beta = %.4g (%+.1f%%), %zu steady bins, %.1f s", pipe.report.beta.beta,
                       100.0 * rel, pipe.report.beta.fitted_bins.size(), pipe.seconds)};
  });

  criteria.emplace_back("2 loading-fit recovery", [&] {
    if (!pipeline_ok) return Outcome{false, "pipeline failed: " + pipeline_error};
    const auto& l = pipe.report.loading;
    const double z_r0 = (l.r0 - truth.r0) / l.r0_err;
    const double z_alpha = (l.alpha - truth.alpha) / l.alpha_err;
    const auto exact = fit_loading_rate(noiseless_bins(truth));
    const double e0 = std::abs(exact.r0 / truth.r0 - 1.0);
    const double ea = std::abs(exact.alpha / truth.alpha - 1.0);
    return Outcome{std::abs(z_r0) <= 2.0 && std::abs(z_alpha) <= 2.0 && e0 < 1e-10 && ea < 1e-10,
                   fmt("R0 = %.4f +- %.4f (%.2f SE), alpha = %.4g +- %.2g (%.2f SE); "
                       "noiseless rel err %.1e, %.1e",
                       l.r0, l.r0_err, z_r0, l.alpha, l.alpha_err, z_alpha, e0, ea)};
  });

  criteria.emplace_back("3 overlap-volume oracle", [] {
    const auto checks = oracle::run_overlap_oracle();
    Outcome o{true, ""};
    for (const auto& c : checks) {
      o.pass = o.pass && c.pass;
      if (!c.pass) o.detail += c.name + ": " + c.detail + "; ";
    }
    if (o.pass) o.detail = fmt("%zu checks", checks.size());
    return o;
  });

  criteria.emplace_back("4 stationary Poisson law", [&] {
    const auto r = oracle::stationary_check(5.0, 2.5, 5000, 20.0, defaults.master_seed);
    return Outcome{r.test.p_value > 0.01,
                   fmt("5000 runs, mean %.4f, chi2 = %.2f / %d dof, p = %.3f", r.sample_mean,
                       r.test.statistic, r.test.dof, r.test.p_value)};
  });

  criteria.emplace_back("5 transient-mean agreement", [&] {
    std::vector<double> checkpoints;
    for (int k = 1; k <= 10; ++k) checkpoints.push_back(0.3 * k);
    double worst = 0.0;
    std::string detail;
    bool rbcs_dominated = false;
    for (double n_rb : {0.0, 550.0, 3300.0}) {
      const auto pts = oracle::transient_check(n_rb, truth, checkpoints, 10000,
                                               derive_seed(defaults.master_seed, Stream::Oracle, 1,
                                                           static_cast<std::uint64_t>(n_rb)));
      double w = 0.0;
      for (const auto& p : pts) w = std::max(w, std::abs(p.z));
      worst = std::max(worst, w);
      const double rbcs = truth.beta_rbcs * n_rb / pair_overlap_volume(truth.w_cs, truth.w_rb);
      rbcs_dominated = rbcs_dominated || rbcs > 10.0 * truth.gamma;
      detail += fmt("N_Rb=%.0f max|z|=%.2f; ", n_rb, w);
    }
    return Outcome{worst < 3.0 && rbcs_dominated, detail + "10 checkpoints x 10000 runs each"};
  });

  criteria.emplace_back("6 staircase fidelity", [&] {
    const auto& c = testing::default_campaign();
    testing::FidelityCount total;
    for (std::size_t i = 0; i < c.traces.size(); ++i) {
      const auto f = testing::staircase_fidelity(c.trajectories[i], c.analysis.staircases[i],
                                                 c.cfg.calibration.bin_s);
      total.bins += f.bins;
      total.correct_bins += f.correct_bins;
      total.true_events += f.true_events;
      total.recovered_events += f.recovered_events;
    }
    const double frac = static_cast<double>(total.correct_bins) / static_cast<double>(total.bins);
    return Outcome{frac >= 0.99 && total.recovered_events == total.true_events,
                   fmt("%.4f%% of %zu bins correct, %zu/%zu resolvable events recovered",
                       100.0 * frac, total.bins, total.recovered_events, total.true_events)};
  });

  criteria.emplace_back("7 steady-state threshold", [&] {
    if (!pipeline_ok) return Outcome{false, "pipeline failed: " + pipeline_error};
    const auto& bins = pipe.report.beta.fitted_bins;
    double boundary = 1e300;
    for (auto i : bins) boundary = std::min(boundary, pipe.report.binned.bins[i].n_rb_center);
    return Outcome{boundary >= 800.0 && boundary <= 1400.0,
                   fmt("lowest steady bin at N_Rb = %.0f (tolerance %.2f)", boundary,
                       pipe.cfg.analysis.steady_tol)};
  });

  criteria.emplace_back("8 noiseless inversion", [&] {
    double worst = 0.0;
    for (double beta : {1e-11, 1.6e-10, 1e-9}) {
      PhysicalParams p = truth;
      p.beta_rbcs = beta;
      const auto d = noiseless_bins(p);
      std::vector<std::size_t> all(d.bins.size());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
      const auto fit = fit_beta(d, p, fit_loading_rate(d), all);
      worst = std::max(worst, std::abs(fit.beta / beta - 1.0));
    }
    return Outcome{worst < 1e-6, fmt("max relative error %.2e", worst)};
  });

  criteria.emplace_back("9 determinism", [&] {
    std::vector<std::string> files;
    for (unsigned threads : {1u, 4u, 0u}) {
      RunConfig cfg;
      cfg.threads = threads;
      cfg.output.traces = (dir / ("det_" + std::to_string(threads) + ".jsonl")).string();
      std::ostringstream log;
      cmd_simulate(cfg, log);
      files.push_back(slurp(cfg.output.traces));
    }
    const bool same = files[0] == files[1] && files[0] == files[2] && !files[0].empty();
    return Outcome{same, fmt("threads 1/4/auto: %s (%zu bytes)", same ? "identical" : "differ",
                             files[0].size())};
  });

  criteria.emplace_back("10 systematics budget", [&] {
    if (!pipeline_ok) return Outcome{false, "pipeline failed: " + pipeline_error};
    const double s = pipe.report.beta.syst_err;
    return Outcome{s >= 4.5e-11 && s <= 1.8e-10, fmt("syst_err = %.3g cm^3/s", s)};
  });

  int failures = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::cout << (o.pass ? "PASS " : "FAIL ") << name << " -- " << o.detail << std::endl;
  }
  std::error_code ec;
  fs::remove_all(dir, ec);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
