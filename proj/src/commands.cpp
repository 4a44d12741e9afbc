#include "csprobe/commands.hpp"

#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include "csprobe/io.hpp"
#include "csprobe/oracle.hpp"
#include "csprobe/parallel.hpp"

namespace csprobe {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CommandError("cannot write " + path.string());
  return out;
}

void close_output(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw CommandError("error while writing " + path.string());
}

SummaryOptions summary_options(const RunConfig& cfg) {
  SummaryOptions opt;
  opt.settle_s = cfg.analysis.settle_s;
  opt.staircase.median_window = cfg.analysis.median_window;
  return opt;
}

}  // namespace

std::vector<FluorescenceTrace> simulate_campaign(const RunConfig& cfg,
                                                 std::vector<Trajectory>* trajectories) {
  cfg.validate();
  const auto params = cfg.physics.to_params();
  const auto grid = make_grid(cfg.grid.n_rb_min, cfg.grid.n_rb_max, cfg.grid.n_rb_step);
  EnsembleOptions opt;
  opt.master_seed = cfg.master_seed;
  opt.traces_per_bin = static_cast<int>(cfg.traces_per_bin);
  opt.threads = cfg.threads;
  auto trajs = simulate_ensemble(grid, params, cfg.schedule, opt);

  std::vector<FluorescenceTrace> traces(trajs.size());
  const auto per_bin = cfg.traces_per_bin;
  parallel_for(trajs.size(), cfg.threads, [&](std::size_t i) {
    const auto seed = derive_seed(cfg.master_seed, Stream::Photons, i / per_bin, i % per_bin);
    traces[i] = synthesize_counts(trajs[i], cfg.calibration, cfg.schedule, seed);
  });
  if (trajectories) *trajectories = std::move(trajs);
  return traces;
}

CampaignSummary cmd_simulate(const RunConfig& cfg, std::ostream& log) {
  std::vector<Trajectory> trajs;
  const auto traces = simulate_campaign(cfg, &trajs);

  const fs::path trace_path = cfg.output.traces;
  auto out = open_output(trace_path);
  for (const auto& t : traces) io::write_trace_line(out, t);
  close_output(out, trace_path);

  if (!cfg.output.trajectories.empty()) {
    const fs::path traj_path = cfg.output.trajectories;
    auto tout = open_output(traj_path);
    io::write_trajectories(tout, trajs);
    close_output(tout, traj_path);
  }

  CampaignSummary s;
  s.bins = make_grid(cfg.grid.n_rb_min, cfg.grid.n_rb_max, cfg.grid.n_rb_step).size();
  s.traces = traces.size();
  for (const auto& t : trajs) s.events += t.events.size();
  log << "simulated " << s.bins << " bins x " << cfg.traces_per_bin << " traces = " << s.traces
      << " traces, " << s.events << " events -> " << trace_path.string() << '\n';
  return s;
}

AnalysisResult analyze_traces(const std::vector<FluorescenceTrace>& traces, const RunConfig& cfg) {
  AnalysisResult res;
  const auto opt = summary_options(cfg);
  res.summaries.reserve(traces.size());
  res.staircases.reserve(traces.size());
  for (const auto& tr : traces) {
    res.staircases.push_back(estimate_staircase(tr, cfg.calibration, opt.staircase));
    res.summaries.push_back(summarize_trace(tr, res.staircases.back(), cfg.calibration, opt));
  }
  res.binned = bin_by_nrb(res.summaries, cfg.analysis.bin_width_atoms);

  // Pooled histogram per Rb bin, same bin assignment as bin_by_nrb.
  for (const auto& bin : res.binned.bins) {
    std::vector<FluorescenceTrace> members;
    for (const auto& tr : traces)
      if (std::llround(tr.n_rb / cfg.analysis.bin_width_atoms) ==
          std::llround(bin.n_rb_center / cfg.analysis.bin_width_atoms))
        members.push_back(tr);
    BinHistogram bh;
    bh.n_rb_center = bin.n_rb_center;
    bh.histogram = build_histogram(members, cfg.calibration);
    if (!bh.histogram.peaks.empty()) {
      try {
        bh.poisson = fit_poisson(bh.histogram);
      } catch (const std::invalid_argument&) {
      }
    }
    res.histograms.push_back(std::move(bh));
  }
  return res;
}

std::vector<FluorescenceTrace> load_traces(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw CommandError("cannot open trace file " + path.string());
  try {
    return io::read_traces(in);
  } catch (const io::ParseError& e) {
    throw CommandError(path.string() + ": " + e.what());
  }
}

AnalysisResult cmd_analyze(const fs::path& trace_file, const fs::path& out_dir,
                           const RunConfig& cfg, std::ostream& log) {
  const auto traces = load_traces(trace_file);
  auto res = analyze_traces(traces, cfg);
  const auto labels = classify_steady_state(res.binned, cfg.analysis.steady_tol);

  const auto bins_path = out_dir / "bins.csv";
  auto bins_out = open_output(bins_path);
  io::write_bins_csv(bins_out, res.binned, &labels);
  close_output(bins_out, bins_path);

  const auto stair_path = out_dir / "staircases.csv";
  auto stair_out = open_output(stair_path);
  for (std::size_t i = 0; i < traces.size(); ++i)
    io::write_staircase_csv(stair_out, traces[i].trace_id, res.staircases[i], i == 0);
  close_output(stair_out, stair_path);

  for (const auto& h : res.histograms) {
    char name[64];
    std::snprintf(name, sizeof name, "hist_nrb_%05lld.csv",
                  static_cast<long long>(std::llround(h.n_rb_center)));
    const auto path = out_dir / "histograms" / name;
    auto hout = open_output(path);
    io::write_histogram_csv(hout, h.histogram);
    close_output(hout, path);
  }
  for (const auto& n : res.binned.notices) log << "notice: " << n << '\n';
  log << "analyzed " << traces.size() << " traces in " << res.binned.bins.size() << " bins -> "
      << out_dir.string() << '\n';
  return res;
}

FitReport fit_dataset(const BinnedDataset& binned, const RunConfig& cfg, bool bootstrap) {
  const auto known = cfg.physics.to_params();
  FitReport rep;
  rep.binned = binned;
  try {
    rep.loading = fit_loading_rate(binned);
  } catch (const std::invalid_argument& e) {
    throw CommandError(e.what());
  }
  rep.labels = classify_steady_state(binned, cfg.analysis.steady_tol);
  const auto bins = steady_bins(rep.labels);
  if (bins.empty()) {
    std::ostringstream msg;
    msg << "no steady-state bins (tolerance " << cfg.analysis.steady_tol << "):";
    for (const auto& b : binned.bins) {
      msg << "\n  N_Rb=" << b.n_rb_center << " loading=" << b.loading_rate
          << "/s loss=" << b.loss_rate << "/s ";
      if (b.loss_rate > 0.0)
        msg << "ratio=" << b.loading_rate / b.loss_rate << " -> transient";
      else
        msg << "no losses -> transient";
    }
    throw CommandError(msg.str());
  }
  try {
    rep.beta = fit_beta(binned, known, rep.loading, bins);
    SystematicsOptions sopt{cfg.analysis.nrb_factor, cfg.analysis.size_frac};
    rep.systematics = propagate_systematics(binned, known, rep.beta, sopt);
    rep.beta.syst_err = rep.systematics.syst_err;
    rep.curve = model_curve(binned, known, rep.loading, rep.beta);
    if (bootstrap && cfg.analysis.bootstrap_resamples >= 2)
      rep.bootstrap_err = bootstrap_stat_error(binned, known, bins, cfg.analysis.bootstrap_resamples,
                                               cfg.master_seed);
  } catch (const std::domain_error& e) {
    throw CommandError(std::string("division by zero in the steady-state model: ") + e.what());
  }
  return rep;
}

json FitReport::to_json() const {
  json steady = json::array();
  for (auto i : beta.fitted_bins) steady.push_back(binned.bins[i].n_rb_center);
  json corners = json::array();
  for (const auto& c : systematics.corners)
    corners.push_back({{"nrb_scale", c.nrb_scale},
                       {"w_cs_um", c.w_cs / kCmPerUm},
                       {"w_rb_um", c.w_rb / kCmPerUm},
                       {"beta", c.beta}});
  json table = json::array();
  for (std::size_t i = 0; i < binned.bins.size(); ++i) {
    const auto& b = binned.bins[i];
    table.push_back({{"n_rb", b.n_rb_center},
                     {"n_traces", b.n_traces},
                     {"loading_rate", b.loading_rate},
                     {"loss_rate", b.loss_rate},
                     {"ratio", b.loss_rate > 0.0 ? json(b.loading_rate / b.loss_rate) : json(nullptr)},
                     {"mean_n_cs", b.mean_n_cs},
                     {"mean_n_cs_se", b.mean_n_cs_se},
                     {"poisson_lambda", b.poisson_lambda},
                     {"hidden_pairs", b.hidden_pairs},
                     {"state", labels[i] == BinState::Steady ? "steady" : "transient"},
                     {"model", i < curve.size() ? json(curve[i].model) : json(nullptr)}});
  }
  return json{{"r0", loading.r0},
              {"r0_err", loading.r0_err},
              {"alpha", loading.alpha},
              {"alpha_err", loading.alpha_err},
              {"beta", beta.beta},
              {"stat_err", beta.stat_err},
              {"stat_err_bootstrap", bootstrap_err ? json(*bootstrap_err) : json(nullptr)},
              {"syst_err", beta.syst_err},
              {"steady_bins", steady},
              {"goodness", beta.goodness},
              {"chi2", beta.chi2},
              {"systematic_corners", corners},
              {"bins", table}};
}

FitReport cmd_fit(const fs::path& input, const fs::path& report_path, const RunConfig& cfg,
                  std::ostream& log) {
  BinnedDataset binned;
  bool from_traces = input.extension() != ".csv";
  if (from_traces) {
    binned = analyze_traces(load_traces(input), cfg).binned;
  } else {
    std::ifstream in(input);
    if (!in) throw CommandError("cannot open per-bin CSV " + input.string());
    try {
      binned = io::read_bins_csv(in);
    } catch (const io::ParseError& e) {
      throw CommandError(input.string() + ": " + e.what());
    }
  }
  auto rep = fit_dataset(binned, cfg, from_traces);

  auto out = open_output(report_path);
  out << rep.to_json().dump(2) << '\n';
  close_output(out, report_path);

  const auto stem = report_path.parent_path() / report_path.stem();
  const fs::path curve_path = stem.string() + "_curve.csv";
  auto cout_ = open_output(curve_path);
  io::write_curve_csv(cout_, rep.curve);
  close_output(cout_, curve_path);

  const fs::path bins_path = stem.string() + "_bins.csv";
  auto bout = open_output(bins_path);
  io::write_bins_csv(bout, rep.binned, &rep.labels);
  close_output(bout, bins_path);

  log << "R0 = " << rep.loading.r0 << " +- " << rep.loading.r0_err << " /s, alpha = "
      << rep.loading.alpha << " +- " << rep.loading.alpha_err << " /s\n"
      << "beta_RbCs = " << rep.beta.beta << " +- " << rep.beta.stat_err << " (stat) +- "
      << rep.beta.syst_err << " (syst) cm^3/s over " << rep.beta.fitted_bins.size()
      << " steady bins -> " << report_path.string() << '\n';
  return rep;
}

bool cmd_oracle(const std::string& which, const RunConfig& cfg, std::ostream& log) {
  std::vector<oracle::Check> checks;
  const bool all = which == "all";
  if (all || which == "overlap") {
    auto c = oracle::run_overlap_oracle();
    checks.insert(checks.end(), c.begin(), c.end());
  }
  if (all || which == "transient") {
    auto params = cfg.physics.to_params();
    params.beta_cscs = 0.0;
    auto c = oracle::run_transient_oracle(params, cfg.master_seed);
    checks.insert(checks.end(), c.begin(), c.end());
  }
  if (all || which == "stationary") {
    auto c = oracle::run_stationary_oracle(cfg.master_seed);
    checks.insert(checks.end(), c.begin(), c.end());
  }
  if (checks.empty()) throw CommandError("unknown oracle '" + which + "'");
  bool ok = true;
  for (const auto& c : checks) {
    log << (c.pass ? "PASS " : "FAIL ") << c.name << ": " << c.detail << '\n';
    ok = ok && c.pass;
  }
  return ok;
}

}  // namespace csprobe
