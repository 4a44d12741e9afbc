#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>

#include "csprobe/io.hpp"
#include "csprobe/oracle.hpp"
#include "csprobe/simulation.hpp"
#include "csprobe/stats.hpp"

using namespace csprobe;

namespace {

PhysicalParams immigration_death(double load, double loss) {
  PhysicalParams p;
  p.r0 = load;
  p.alpha = 0.0;
  p.gamma = loss;
  p.beta_rbcs = 0.0;
  p.beta_cscs = 0.0;
  return p;
}

void check_trajectory_invariants(const Trajectory& traj) {
  double t_prev = -1.0;
  int n_prev = 0;
  for (const auto& e : traj.events) {
    CHECK(e.t > t_prev);
    CHECK(e.t >= 0.0);
    CHECK(e.t <= traj.t_end);
    CHECK(e.n_after >= 0);
    CHECK(e.n_after - n_prev == delta_n(e.kind));
    if (e.kind == EventKind::LossCsCsPair) CHECK(n_prev >= 2);
    t_prev = e.t;
    n_prev = e.n_after;
  }
}

}  // namespace

TEST_CASE("event kinds round-trip through their names") {
  for (auto k : {EventKind::Load, EventKind::LossBackground, EventKind::LossRbCs,
                 EventKind::LossCsCsPair})
    CHECK(event_kind_from_string(to_string(k)) == k);
  CHECK_THROWS_AS(event_kind_from_string("teleport"), std::invalid_argument);
}

TEST_CASE("next_event signals the absorbing state") {
  PhysicalParams p = immigration_death(0.0, 0.1);
  Rng rng(1);
  CHECK_FALSE(next_event(0, 0.0, p, rng).has_value());
  // Loading clamped to zero at large N_Rb is absorbing as well.
  CHECK_FALSE(next_event(0, 1e5, PhysicalParams{}, rng).has_value());
}

TEST_CASE("next_event waiting times are exponential") {
  const auto p = immigration_death(1.0, 0.0);
  Rng rng(42);
  std::vector<double> dts;
  for (int i = 0; i < 100000; ++i) {
    const auto ev = next_event(0, 0.0, p, rng);
    REQUIRE(ev);
    CHECK(ev->kind == EventKind::Load);
    dts.push_back(ev->dt);
  }
  const double d = stats::ks_statistic(dts, [](double x) { return -std::expm1(-x); });
  CHECK(stats::ks_p_value(d, dts.size()) > 0.01);
}

TEST_CASE("next_event chooses kinds in proportion to rates") {
  const auto p = immigration_death(1.0, 3.0);
  Rng rng(43);
  const int draws = 100000;
  int loads = 0;
  for (int i = 0; i < draws; ++i) loads += next_event(1, 0.0, p, rng)->kind == EventKind::Load;
  const double sigma = std::sqrt(0.25 * 0.75 / draws);
  CHECK(std::abs(loads / double(draws) - 0.25) < 3.0 * sigma);
}

TEST_CASE("pair loss needs two atoms") {
  PhysicalParams p;
  p.beta_cscs = 1e-6;  // pair loss dominates once possible
  Rng rng(5);
  for (int i = 0; i < 2000; ++i) CHECK(next_event(1, 0.0, p, rng)->kind != EventKind::LossCsCsPair);
  int pairs = 0;
  for (int i = 0; i < 2000; ++i) pairs += next_event(2, 0.0, p, rng)->kind == EventKind::LossCsCsPair;
  CHECK(pairs > 1900);

  const auto traj = simulate_trajectory(0.0, p, ExperimentSchedule{}, 9);
  check_trajectory_invariants(traj);
}

TEST_CASE("trajectories") {
  SUBCASE("all rates zero gives no events") {
    PhysicalParams p = immigration_death(0.0, 0.0);
    const auto t = simulate_trajectory(0.0, p, ExperimentSchedule{}, 1);
    CHECK(t.events.empty());
    CHECK(t.t_end == 3.0);
  }
  SUBCASE("same seed, same trajectory") {
    const auto a = simulate_trajectory(550.0, PhysicalParams{}, ExperimentSchedule{}, 77);
    const auto b = simulate_trajectory(550.0, PhysicalParams{}, ExperimentSchedule{}, 77);
    CHECK(a == b);
    const auto c = simulate_trajectory(550.0, PhysicalParams{}, ExperimentSchedule{}, 78);
    CHECK_FALSE(a == c);
  }
  SUBCASE("invariants over many runs") {
    PhysicalParams p;
    p.beta_cscs = 2e-10;
    for (std::uint64_t s = 0; s < 300; ++s)
      check_trajectory_invariants(simulate_trajectory(double(s % 16) * 220.0, p, ExperimentSchedule{}, s));
  }
  SUBCASE("integral of the occupation") {
    Trajectory t;
    t.t_end = 3.0;
    t.events = {{0.5, EventKind::Load, 1}, {1.0, EventKind::Load, 2}, {2.0, EventKind::LossRbCs, 1}};
    CHECK(t.integral(0.0, 3.0) == doctest::Approx(0.5 + 2.0 + 1.0));
    CHECK(t.integral(0.75, 1.25) == doctest::Approx(0.25 + 0.5));
    CHECK(t.n_at(1.5) == 2);
    CHECK(t.n_at(0.1) == 0);
  }
}

TEST_CASE("ensemble mean follows the analytic transient mean") {
  const PhysicalParams p;
  SUBCASE("no Rb, end of detection") {
    const double t[] = {3.0};
    const auto pts = oracle::transient_check(0.0, p, t, 10000, 11);
    CHECK(pts[0].z < 3.0);
  }
  SUBCASE("550 Rb atoms at 1 s") {
    const double t[] = {1.0};
    const auto pts = oracle::transient_check(550.0, p, t, 10000, 12);
    CHECK(pts[0].z < 3.0);
  }
  SUBCASE("10 checkpoints") {
    std::vector<double> t;
    for (int i = 1; i <= 10; ++i) t.push_back(0.3 * i);
    for (const auto& pt : oracle::transient_check(1100.0, p, t, 10000, 13)) CHECK(pt.z < 3.0);
  }
}

TEST_CASE("stationary immigration-death law is Poisson(R / gamma)") {
  const auto res = oracle::stationary_check(5.0, 2.5, 3000, 10.0, 99);
  CHECK(res.lambda == 2.0);
  CHECK(res.test.p_value > 0.01);
}

TEST_CASE("long-run time average converges to R0 / gamma") {
  const auto p = immigration_death(5.0, 2.5);
  ExperimentSchedule s;
  s.detect_s = 4000.0;
  const auto traj = simulate_trajectory(0.0, p, s, 2024);
  // Batch means over 40 windows of 100 s (correlation time 0.4 s).
  std::vector<double> batches;
  for (int b = 0; b < 40; ++b) batches.push_back(traj.integral(100.0 * b, 100.0 * (b + 1)) / 100.0);
  const auto ms = stats::mean_and_se(batches);
  CHECK(std::abs(ms.mean - 2.0) < 3.0 * ms.se);
}

TEST_CASE("ensemble seeding and ordering") {
  const PhysicalParams p;
  const ExperimentSchedule s;
  SUBCASE("single trajectory equals simulate_trajectory with the derived seed") {
    const double grid[] = {0.0};
    EnsembleOptions opt;
    opt.master_seed = 5;
    opt.traces_per_bin = 1;
    const auto ens = simulate_ensemble(grid, p, s, opt);
    REQUIRE(ens.size() == 1);
    const auto direct = simulate_trajectory(0.0, p, s, derive_seed(5, Stream::Dynamics, 0, 0));
    CHECK(ens[0].events == direct.events);
    CHECK(ens[0].seed == direct.seed);
  }
  SUBCASE("output independent of thread count") {
    const auto grid = make_grid(0.0, 3300.0, 220.0);
    EnsembleOptions opt;
    opt.master_seed = 17;
    opt.traces_per_bin = 20;
    opt.threads = 1;
    std::ostringstream a, b;
    io::write_trajectories(a, simulate_ensemble(grid, p, s, opt));
    opt.threads = 4;
    io::write_trajectories(b, simulate_ensemble(grid, p, s, opt));
    CHECK(a.str() == b.str());
  }
  SUBCASE("derived seeds differ across bins, traces and streams") {
    CHECK(derive_seed(1, Stream::Dynamics, 0, 1) != derive_seed(1, Stream::Dynamics, 1, 0));
    CHECK(derive_seed(1, Stream::Dynamics, 0, 0) != derive_seed(1, Stream::Photons, 0, 0));
    CHECK(derive_seed(1, Stream::Dynamics, 0, 0) != derive_seed(2, Stream::Dynamics, 0, 0));
  }
  SUBCASE("bad arguments") {
    EnsembleOptions opt;
    CHECK_THROWS_AS(simulate_ensemble(std::span<const double>{}, p, s, opt), std::invalid_argument);
    opt.traces_per_bin = 0;
    const double grid[] = {0.0};
    CHECK_THROWS_AS(simulate_ensemble(grid, p, s, opt), std::invalid_argument);
  }
}

TEST_CASE("loss counts peak at low Rb number") {
  const auto grid = make_grid(0.0, 3300.0, 220.0);
  REQUIRE(grid.size() == 16);
  EnsembleOptions opt;
  opt.master_seed = 314;
  opt.traces_per_bin = 200;
  const auto ens = simulate_ensemble(grid, PhysicalParams{}, ExperimentSchedule{}, opt);
  std::vector<int> losses(grid.size(), 0);
  for (std::size_t i = 0; i < ens.size(); ++i)
    for (const auto& e : ens[i].events) losses[i / 200] += delta_n(e.kind) < 0;
  const auto peak = static_cast<std::size_t>(std::max_element(losses.begin(), losses.end()) - losses.begin());
  MESSAGE("loss counts peak at N_Rb = " << grid[peak]);
  CHECK(peak > 0);
  CHECK(grid[peak] < 1650.0);
  CHECK(losses.front() < losses[peak]);
  CHECK(losses.back() < losses[peak]);
}

TEST_CASE("grid construction") {
  const auto g = make_grid(0.0, 3300.0, 220.0);
  CHECK(g.size() == 16);
  CHECK(g.back() == 3300.0);
  CHECK(make_grid(0.0, 0.0, 1.0).size() == 1);
  CHECK_THROWS_AS(make_grid(0.0, 1.0, 0.0), std::invalid_argument);
}
