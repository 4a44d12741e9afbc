#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "csprobe/inference.hpp"
#include "csprobe/stats.hpp"
#include "test_support.hpp"

using namespace csprobe;

namespace {

PhysicalParams paper_params() {
  PhysicalParams p;
  p.r0 = 1.48;
  p.alpha = 2.3e-4;
  p.gamma = 0.03;
  p.beta_rbcs = 1.6e-10;
  return p;
}

/// Bins lying exactly on the model, with a relative 5% standard error.
BinnedDataset noiseless(const PhysicalParams& p, double n_min = 0.0, double n_max = 3300.0) {
  BinnedDataset d;
  for (double n = n_min; n <= n_max + 1e-9; n += 220.0) {
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

std::vector<std::size_t> all_bins(const BinnedDataset& d) {
  std::vector<std::size_t> out(d.bins.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = i;
  return out;
}

TraceSummary summary(double n_rb, std::size_t loads, std::size_t lost, double mean_n) {
  TraceSummary s;
  s.n_rb = n_rb;
  s.detect_s = 3.0;
  s.loads = loads;
  s.atoms_lost = lost;
  s.mean_n = mean_n;
  s.level_counts = {150};
  return s;
}

}  // namespace

TEST_CASE("summarize_trace") {
  FluorescenceTrace tr;
  tr.segments = segment_layout(ExperimentSchedule{}, 0.02);
  tr.counts.assign(tr.segments.background.end, 0);
  for (std::size_t i = tr.segments.background.begin; i < tr.segments.background.end; ++i)
    tr.counts[i] = 100;
  AtomNumberEstimate est;
  est.staircase.assign(150, 0);
  std::fill(est.staircase.begin() + 50, est.staircase.begin() + 100, 1);
  std::fill(est.staircase.begin() + 100, est.staircase.end(), 3);
  est.load_events = {50, 100, 100};
  const DetectionCalibration cal;
  const auto s = summarize_trace(tr, est, cal);
  CHECK(s.detect_s == doctest::Approx(3.0));
  CHECK(s.loads == 3);
  CHECK(s.atoms_lost == 0);
  // Bins 50..149 are after 1 s: 50 at level 1 and 50 at level 3.
  CHECK(s.mean_n == doctest::Approx(2.0));
  CHECK(s.mean_n_full == doctest::Approx((50.0 + 150.0) / 150.0));
  REQUIRE(s.level_counts.size() == 4);
  CHECK(s.level_counts[0] == 50);
  CHECK(s.level_counts[3] == 50);
  const double expected = 50 * 0.02 * (blind_time(tr, cal, 0) * 1 + blind_time(tr, cal, 1) * 3 +
                                       blind_time(tr, cal, 3) * 7);
  CHECK(s.blind_exposure == doctest::Approx(expected));
}

TEST_CASE("hidden-pair correction") {
  SUBCASE("no exposure leaves the raw rates") {
    std::vector<TraceSummary> t{summary(0, 30, 12, 2.0), summary(0, 20, 9, 1.0)};
    const auto d = bin_by_nrb(t);
    CHECK(d.bins[0].hidden_pairs == 0.0);
    CHECK(d.bins[0].loading_rate == doctest::Approx(50.0 / 6.0));
  }
  SUBCASE("fixed point of h = R kappa E") {
    auto a = summary(0, 30, 12, 2.0);
    a.mean_n_full = 2.0;
    a.blind_exposure = 0.01;
    const auto d = bin_by_nrb(std::vector<TraceSummary>{a});
    const auto& b = d.bins[0];
    const double r = (30 + b.hidden_pairs) / 3.0;
    const double kappa = (12 + b.hidden_pairs) / (2.0 * 3.0);
    CHECK(b.hidden_pairs == doctest::Approx(r * kappa * 0.01));
    CHECK(b.loss_rate == doctest::Approx((12 + b.hidden_pairs) / 3.0));
  }
  SUBCASE("corrected counts match the simulated event totals") {
    const auto& c = testing::default_campaign();
    double true_loads = 0.0, true_lost = 0.0;
    for (const auto& t : c.trajectories)
      for (const auto& e : t.events) {
        if (e.kind == EventKind::Load) true_loads += 1.0;
        else true_lost += -delta_n(e.kind);
      }
    double raw_loads = 0.0, loads = 0.0, lost = 0.0;
    for (const auto& b : c.analysis.binned.bins) {
      raw_loads += b.loads;
      loads += b.loading_rate * b.detect_time_s;
      lost += b.loss_rate * b.detect_time_s;
    }
    MESSAGE("loads: true " << true_loads << ", raw " << raw_loads << ", corrected " << loads
                           << "; lost: true " << true_lost << ", corrected " << lost);
    // Poisson scatter of the hidden count itself is ~sqrt(300).
    CHECK(std::abs(loads - true_loads) < 3.0 * std::sqrt(true_loads * 0.03) + 0.005 * true_loads);
    CHECK(std::abs(lost - true_lost) < 3.0 * std::sqrt(true_lost * 0.03) + 0.005 * true_lost);
  }
}

TEST_CASE("bin_by_nrb") {
  SUBCASE("single populated bin") {
    std::vector<TraceSummary> t{summary(1000, 3, 2, 0.5), summary(1010, 1, 1, 0.3)};
    const auto d = bin_by_nrb(t);
    REQUIRE(d.bins.size() == 1);
    CHECK(d.bins[0].n_rb_center == 1100.0);
    CHECK(d.bins[0].n_traces == 2);
    CHECK(d.bins[0].loading_rate == doctest::Approx(4.0 / 6.0));
    CHECK(d.bins[0].loss_rate == doctest::Approx(3.0 / 6.0));
    CHECK(d.bins[0].mean_n_cs == doctest::Approx(0.4));
    CHECK(d.notices.empty());
  }
  SUBCASE("gap bins are reported") {
    std::vector<TraceSummary> t{summary(0, 1, 1, 1), summary(660, 1, 1, 1)};
    const auto d = bin_by_nrb(t);
    CHECK(d.bins.size() == 2);
    CHECK(d.notices.size() == 2);
  }
  SUBCASE("bad inputs") {
    std::vector<TraceSummary> t{summary(-5, 1, 1, 1)};
    CHECK_THROWS_AS(bin_by_nrb(t), std::invalid_argument);
    CHECK_THROWS_AS(bin_by_nrb({}, 0.0), std::invalid_argument);
    CHECK(bin_by_nrb({}).bins.empty());
  }
}

TEST_CASE("fit_loading_rate") {
  SUBCASE("exact on a noiseless line") {
    const auto fit = fit_loading_rate(noiseless(paper_params()));
    CHECK(std::abs(fit.r0 - 1.48) / 1.48 < 1e-10);
    CHECK(std::abs(fit.alpha - 2.3e-4) / 2.3e-4 < 1e-10);
    CHECK(fit.r0_err > 0.0);
  }
  SUBCASE("zero loading everywhere") {
    PhysicalParams p = paper_params();
    p.r0 = 0.0;
    p.alpha = 0.0;
    const auto fit = fit_loading_rate(noiseless(p));
    CHECK(fit.r0 == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(fit.alpha == doctest::Approx(0.0).epsilon(1e-12));
  }
  SUBCASE("needs three bins") {
    CHECK_THROWS_AS(fit_loading_rate(noiseless(paper_params(), 0.0, 220.0)), std::invalid_argument);
  }
  SUBCASE("unbiased with calibrated errors under Poisson counts") {
    const auto truth = noiseless(paper_params());
    std::mt19937_64 rng(77);
    std::vector<double> r0s, alphas, pulls;
    for (int rep = 0; rep < 100; ++rep) {
      auto d = truth;
      for (auto& b : d.bins) {
        std::poisson_distribution<long> pois(b.loading_rate * b.detect_time_s);
        b.loads = static_cast<double>(pois(rng));
        b.loading_rate = b.loads / b.detect_time_s;
      }
      const auto fit = fit_loading_rate(d);
      r0s.push_back(fit.r0);
      alphas.push_back(fit.alpha);
      pulls.push_back((fit.r0 - 1.48) / fit.r0_err);
    }
    const auto m0 = stats::mean_and_se(r0s);
    const auto ma = stats::mean_and_se(alphas);
    CHECK(std::abs(m0.mean - 1.48) < 3.0 * m0.se);
    CHECK(std::abs(ma.mean - 2.3e-4) < 3.0 * ma.se);
    const double pull_sd = stats::mean_and_se(pulls).se * 10.0;
    CHECK(pull_sd == doctest::Approx(1.0).epsilon(0.25));
  }
}

TEST_CASE("classify_steady_state") {
  BinnedDataset d;
  const auto add = [&](double n, double load, double loss) {
    RbBin b;
    b.n_rb_center = n;
    b.loading_rate = load;
    b.loss_rate = loss;
    d.bins.push_back(b);
  };
  SUBCASE("contiguous run from the high end") {
    add(0, 1.5, 0.2);
    add(220, 1.4, 1.3);  // ratio-consistent but separated by a transient bin
    add(440, 1.3, 0.5);
    add(660, 1.2, 1.0);
    add(880, 1.1, 1.05);
    const auto labels = classify_steady_state(d, 0.3);
    CHECK(labels == std::vector<BinState>{BinState::Transient, BinState::Transient,
                                          BinState::Transient, BinState::Steady, BinState::Steady});
    CHECK(steady_bins(labels) == std::vector<std::size_t>{3, 4});
  }
  SUBCASE("order of bins in the dataset does not matter") {
    add(880, 1.1, 1.05);
    add(0, 1.5, 0.2);
    add(660, 1.2, 1.0);
    const auto labels = classify_steady_state(d, 0.3);
    CHECK(labels == std::vector<BinState>{BinState::Steady, BinState::Transient, BinState::Steady});
  }
  SUBCASE("ratio exactly at the tolerance counts as steady") {
    add(0, 1.25, 1.0);
    CHECK(classify_steady_state(d, 0.25)[0] == BinState::Steady);
  }
  SUBCASE("zero loss is never steady") {
    add(0, 0.0, 0.0);
    add(220, 0.0, 0.0);
    CHECK(steady_bins(classify_steady_state(d, 10.0)).empty());
  }
  SUBCASE("steady set grows with the tolerance on the campaign") {
    const auto& binned = testing::default_campaign().analysis.binned;
    std::size_t prev = 0;
    for (double tol : {0.05, 0.1, 0.15, 0.2, 0.3, 0.5, 1.0}) {
      const auto n = steady_bins(classify_steady_state(binned, tol)).size();
      CHECK(n >= prev);
      prev = n;
    }
  }
}

TEST_CASE("fit_beta") {
  const auto p = paper_params();
  SUBCASE("noiseless inversion") {
    for (double beta : {2e-11, 1.6e-10, 8e-10}) {
      PhysicalParams q = p;
      q.beta_rbcs = beta;
      const auto d = noiseless(q);
      const auto fit = fit_beta(d, q, fit_loading_rate(d), all_bins(d));
      CHECK(std::abs(fit.beta - beta) / beta < 1e-6);
      CHECK(fit.chi2 < 1e-12);
    }
  }
  SUBCASE("zero beta is recovered exactly") {
    PhysicalParams q = p;
    q.beta_rbcs = 0.0;
    const auto d = noiseless(q);
    CHECK(fit_beta(d, q, fit_loading_rate(d), all_bins(d)).beta == 0.0);
  }
  SUBCASE("unit weights when an error is missing") {
    auto d = noiseless(p);
    d.bins[3].mean_n_cs_se = 0.0;
    const auto fit = fit_beta(d, p, fit_loading_rate(d), all_bins(d));
    CHECK(fit.unit_weights);
    CHECK(std::abs(fit.beta - 1.6e-10) / 1.6e-10 < 1e-6);
  }
  SUBCASE("failure modes") {
    const auto d = noiseless(p);
    const auto loading = fit_loading_rate(d);
    CHECK_THROWS_AS(fit_beta(d, p, loading, std::vector<std::size_t>{}), std::invalid_argument);
    CHECK_THROWS_AS(fit_beta(d, p, loading, std::vector<std::size_t>{0}), std::domain_error);
    PhysicalParams no_gamma = p;
    no_gamma.gamma = 0.0;
    CHECK_THROWS_AS(fit_beta(d, no_gamma, loading, all_bins(d)), std::domain_error);
    LoadingFit flat;
    CHECK_THROWS_AS(fit_beta(d, p, flat, all_bins(d)), std::domain_error);
  }
  SUBCASE("model curve marks fitted bins") {
    const auto d = noiseless(p);
    const auto loading = fit_loading_rate(d);
    const std::vector<std::size_t> bins{10, 11, 12};
    const auto fit = fit_beta(d, p, loading, bins);
    const auto curve = model_curve(d, p, loading, fit);
    REQUIRE(curve.size() == d.bins.size());
    for (std::size_t i = 0; i < curve.size(); ++i) {
      CHECK(curve[i].fitted == (i >= 10 && i <= 12));
      CHECK(curve[i].model == doctest::Approx(curve[i].data).epsilon(1e-6));
    }
  }
}

TEST_CASE("systematics") {
  const auto p = paper_params();
  const auto d = noiseless(p);
  const auto fit = fit_beta(d, p, fit_loading_rate(d), all_bins(d));
  SUBCASE("no variation gives no error") {
    const auto s = propagate_systematics(d, p, fit, {1.0, 0.0});
    CHECK(s.corners.size() == 8);
    CHECK(s.syst_err < 1e-6 * fit.beta);
  }
  SUBCASE("Rb scaling without background loss is exactly 1/f") {
    PhysicalParams q = p;
    q.gamma = 0.0;
    const auto dq = noiseless(q, 220.0);
    for (double f : {1.3, 1.0 / 1.3, 2.0}) {
      const double b = refit_beta(dq, q, all_bins(dq), f, q.w_cs, q.w_rb);
      CHECK(b == doctest::Approx(1.6e-10 / f).epsilon(1e-6));
    }
  }
  SUBCASE("cloud radii rescale beta with the overlap volume") {
    PhysicalParams q = p;
    q.gamma = 0.0;
    const auto dq = noiseless(q, 220.0);
    const double b = refit_beta(dq, q, all_bins(dq), 1.0, 1.15 * q.w_cs, 0.85 * q.w_rb);
    const double ratio = pair_overlap_volume(1.15 * q.w_cs, 0.85 * q.w_rb) /
                         pair_overlap_volume(q.w_cs, q.w_rb);
    CHECK(b == doctest::Approx(1.6e-10 * ratio).epsilon(1e-6));
  }
}

TEST_CASE("bootstrap") {
  SUBCASE("identical traces have no spread") {
    std::vector<TraceSummary> t;
    const auto p = paper_params();
    for (double n = 0; n <= 3300; n += 220)
      for (int k = 0; k < 10; ++k) {
        const double load = loading_rate(n, p) * 3.0;
        t.push_back(summary(n, static_cast<std::size_t>(std::lround(load * 100)),
                            static_cast<std::size_t>(std::lround(load * 100)),
                            steady_state_mean(n, p)));
      }
    const auto d = bin_by_nrb(t);
    const auto bins = all_bins(d);
    CHECK(bootstrap_stat_error(d, p, bins, 20, 1) == doctest::Approx(0.0));
  }
  SUBCASE("needs trace-level data") {
    const auto d = noiseless(paper_params());
    CHECK_THROWS_AS(bootstrap_stat_error(d, paper_params(), all_bins(d), 10, 1),
                    std::invalid_argument);
  }
  SUBCASE("deterministic and close to the curvature error") {
    const auto& c = testing::default_campaign();
    const auto& d = c.analysis.binned;
    const auto p = c.cfg.physics.to_params();
    const auto loading = fit_loading_rate(d);
    const auto fit = fit_beta(d, p, loading, c.cfg.analysis.steady_tol);
    const double a = bootstrap_stat_error(d, p, fit.fitted_bins, 200, 5);
    CHECK(a == bootstrap_stat_error(d, p, fit.fitted_bins, 200, 5));
    MESSAGE("bootstrap " << a << " curvature " << fit.stat_err);
    CHECK(a == doctest::Approx(fit.stat_err).epsilon(0.5));
  }
}

TEST_CASE("campaign-level behaviour") {
  const auto& c = testing::default_campaign();
  const auto& d = c.analysis.binned;
  const auto p = c.cfg.physics.to_params();
  REQUIRE(d.bins.size() == 16);

  SUBCASE("loading rate falls with Rb number") {
    const auto fit = fit_loading_rate(d);
    CHECK(fit.alpha > 3.0 * fit.alpha_err);
    CHECK(d.bins.front().loading_rate > d.bins.back().loading_rate);
  }
  SUBCASE("loading balances loss above 1000 Rb atoms") {
    for (const auto& b : d.bins) {
      if (b.n_rb_center < 1000.0) continue;
      CHECK(std::abs(b.loading_rate / b.loss_rate - 1.0) < 0.3);
    }
  }
  SUBCASE("including transient bins biases beta") {
    const auto loading = fit_loading_rate(d);
    const auto steady = fit_beta(d, p, loading, c.cfg.analysis.steady_tol);
    const auto everything = fit_beta(d, p, loading, all_bins(d));
    MESSAGE("steady " << steady.beta << " +- " << steady.stat_err << ", all bins " << everything.beta);
    CHECK(std::abs(everything.beta - steady.beta) > 3.0 * steady.stat_err);
  }
}
