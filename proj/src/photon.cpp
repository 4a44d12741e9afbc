#include "csprobe/photon.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>

#include "csprobe/stats.hpp"

namespace csprobe {

namespace {

std::size_t bins_for(double duration, double bin_s) {
  return static_cast<std::size_t>(std::llround(duration / bin_s));
}

std::int64_t poisson_draw(double mean, Rng& rng) {
  if (!(mean > 0.0)) return 0;
  return std::poisson_distribution<std::int64_t>(mean)(rng);
}

std::vector<int> median_filter(const std::vector<int>& v, int window) {
  if (window <= 1 || v.size() < 3) return v;
  const auto half = static_cast<std::ptrdiff_t>(window / 2);
  const auto n = static_cast<std::ptrdiff_t>(v.size());
  std::vector<int> out(v.size());
  std::vector<int> buf;
  for (std::ptrdiff_t i = 0; i < n; ++i) {
    buf.clear();
    for (std::ptrdiff_t j = std::max<std::ptrdiff_t>(0, i - half);
         j <= std::min(n - 1, i + half); ++j)
      buf.push_back(v[static_cast<std::size_t>(j)]);
    std::nth_element(buf.begin(), buf.begin() + static_cast<std::ptrdiff_t>(buf.size() / 2),
                     buf.end());
    out[static_cast<std::size_t>(i)] = buf[buf.size() / 2];
  }
  return out;
}

}  // namespace

void DetectionCalibration::validate() const {
  if (!(rate_per_atom > 0.0)) throw std::invalid_argument("rate_per_atom must be positive");
  if (!(background_rate >= 0.0)) throw std::invalid_argument("background_rate must be >= 0");
  if (!(dark_rate >= 0.0)) throw std::invalid_argument("dark_rate must be >= 0");
  if (!(bin_s > 0.0)) throw std::invalid_argument("bin_s must be positive");
}

TraceSegments segment_layout(const ExperimentSchedule& schedule, double bin_s) {
  schedule.validate();
  if (!(bin_s > 0.0)) throw std::invalid_argument("bin_s must be positive");
  TraceSegments seg;
  seg.detect = {0, bins_for(schedule.detect_s, bin_s)};
  seg.off = {seg.detect.end, seg.detect.end + bins_for(schedule.off_s, bin_s)};
  seg.background = {seg.off.end, seg.off.end + bins_for(schedule.background_s, bin_s)};
  return seg;
}

void FluorescenceTrace::validate() const {
  const auto& s = segments;
  if (s.detect.begin != 0 || s.detect.end > s.off.begin || s.off.begin != s.detect.end ||
      s.off.end < s.off.begin || s.background.begin != s.off.end ||
      s.background.end < s.background.begin || s.background.end != counts.size())
    throw std::invalid_argument("trace segments must be ordered, disjoint and tile the counts");
  if (!(bin_s > 0.0)) throw std::invalid_argument("trace bin_s must be positive");
  for (auto c : counts)
    if (c < 0) throw std::invalid_argument("trace counts must be non-negative");
}

std::size_t AtomNumberEstimate::pair_candidates() const {
  return static_cast<std::size_t>(std::count_if(
      loss_events.begin(), loss_events.end(), [](const LossEvent& e) { return e.multiplicity == 2; }));
}

std::size_t AtomNumberEstimate::atoms_lost() const {
  std::size_t n = 0;
  for (const auto& e : loss_events) n += static_cast<std::size_t>(e.multiplicity);
  return n;
}

FluorescenceTrace synthesize_counts(const Trajectory& traj, const DetectionCalibration& cal,
                                    const ExperimentSchedule& schedule, std::uint64_t seed) {
  cal.validate();
  FluorescenceTrace trace;
  trace.trace_id = traj.trace_id;
  trace.n_rb = traj.n_rb;
  trace.bin_s = cal.bin_s;
  trace.segments = segment_layout(schedule, cal.bin_s);
  trace.counts.resize(trace.segments.background.end);

  Rng rng(seed);
  const double bin = cal.bin_s;
  for (std::size_t i = trace.segments.detect.begin; i < trace.segments.detect.end; ++i) {
    const double t0 = static_cast<double>(i) * bin;
    const double occupancy = traj.integral(t0, t0 + bin) / bin;
    trace.counts[i] = poisson_draw((occupancy * cal.rate_per_atom + cal.background_rate) * bin, rng);
  }
  for (std::size_t i = trace.segments.off.begin; i < trace.segments.off.end; ++i)
    trace.counts[i] = poisson_draw(cal.dark_rate * bin, rng);
  for (std::size_t i = trace.segments.background.begin; i < trace.segments.background.end; ++i)
    trace.counts[i] = poisson_draw(cal.background_rate * bin, rng);
  return trace;
}

double background_level(const FluorescenceTrace& trace) {
  const auto& bg = trace.segments.background;
  if (bg.size() == 0) throw std::invalid_argument("trace has an empty background segment");
  double sum = 0.0;
  for (std::size_t i = bg.begin; i < bg.end; ++i) sum += static_cast<double>(trace.counts.at(i));
  return sum / (static_cast<double>(bg.size()) * trace.bin_s);
}

std::vector<double> subtract_background(const FluorescenceTrace& trace) {
  const double bg = background_level(trace);
  const auto& det = trace.segments.detect;
  std::vector<double> out;
  out.reserve(det.size());
  for (std::size_t i = det.begin; i < det.end; ++i)
    out.push_back(static_cast<double>(trace.counts.at(i)) / trace.bin_s - bg);
  return out;
}

namespace {

/// Shot noise of a detect bin, in atoms, at a given level. Includes the shared
/// error of the trace's background estimate.
struct BinNoise {
  double bg_counts = 0.0;
  double bg_var = 0.0;
  double per_atom = 0.0;

  BinNoise(const FluorescenceTrace& trace, const DetectionCalibration& cal)
      : bg_counts(background_level(trace) * trace.bin_s),
        bg_var(bg_counts / static_cast<double>(trace.segments.background.size())),
        per_atom(cal.rate_per_atom * trace.bin_s) {}

  double sigma(double level) const {
    return std::sqrt(std::max(level * per_atom + bg_counts + bg_var, 1.0)) / per_atom;
  }
};

}  // namespace

double blind_time(const FluorescenceTrace& trace, const DetectionCalibration& cal, int level,
                  const StaircaseOptions& options) {
  if (options.median_window > 1) return 0.5 * (options.median_window + 1) * trace.bin_s;
  const double s = BinNoise(trace, cal).sigma(std::max(level, 0));
  // Depth (in bins) at which a two-event excursion inside one bin costs as
  // much as leaving the bin clean.
  const double z2 = 2.0 * (2.0 * options.event_penalty + std::log(2.0) -
                           2.0 * std::log(s * std::sqrt(2.0 * std::numbers::pi)));
  const double depth = z2 > 0.0 ? s * std::sqrt(z2) : 0.0;
  // Excursions straddling a bin edge split their depth over two bins and stay
  // hidden up to sqrt(2) * depth; averaging over the edge position adds
  // (pi/4 - 1/2) depth^2.
  return depth * (1.0 + (std::numbers::pi / 4.0 - 0.5) * depth) * trace.bin_s;
}

AtomNumberEstimate estimate_staircase(const FluorescenceTrace& trace,
                                      const DetectionCalibration& cal,
                                      const StaircaseOptions& options) {
  if (!(cal.rate_per_atom > 0.0))
    throw std::invalid_argument("estimate_staircase: rate_per_atom must be positive");
  const std::vector<double> rate = subtract_background(trace);
  const std::size_t n = rate.size();

  std::vector<double> x(n);
  std::vector<int> level(n);
  int top = 0;
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = rate[i] / cal.rate_per_atom;
    level[i] = std::max(0, static_cast<int>(std::lround(x[i])));
    top = std::max(top, level[i]);
  }
  level = median_filter(level, options.median_window);

  AtomNumberEstimate est;
  est.staircase = level;
  int current = 0;
  const auto emit = [&](int to, std::size_t at) {
    const int delta = to - current;
    if (delta > 0) {
      est.load_events.insert(est.load_events.end(), static_cast<std::size_t>(delta), at);
    } else if (delta == -2) {
      est.loss_events.push_back({at, 2});
    } else {
      for (int k = 0; k < -delta; ++k) est.loss_events.push_back({at, 1});
    }
    current = to;
  };

  if (options.median_window > 1) {
    for (std::size_t i = 0; i < n; ++i)
      if (level[i] != current) emit(level[i], i);
    return est;
  }

  // Most probable integer level at every bin edge, starting from an empty
  // trap. A bin either holds one level (Gaussian shot noise) or contains a
  // step, in which case its mean lies uniformly between the two levels.
  const BinNoise noise(trace, cal);
  const int levels = top + 3;
  const auto sigma_at = [&](double l) { return noise.sigma(l); };
  std::vector<double> sigma(static_cast<std::size_t>(levels));
  for (int l = 0; l < levels; ++l) sigma[static_cast<std::size_t>(l)] = sigma_at(l);

  const auto bin_cost = [&](double xi, int a, int b) {
    if (a == b) {
      const double s = sigma[static_cast<std::size_t>(a)];
      const double z = (xi - a) / s;
      return 0.5 * z * z + std::log(s * std::sqrt(2.0 * std::numbers::pi));
    }
    const int lo = std::min(a, b);
    const int hi = std::max(a, b);
    const double s = sigma_at(0.5 * (lo + hi));
    const double mass = 0.5 * (std::erfc((lo - xi) / (s * std::numbers::sqrt2)) -
                               std::erfc((hi - xi) / (s * std::numbers::sqrt2)));
    const double events = b - a == -2 ? options.event_penalty + options.pair_extra_penalty
                                      : (hi - lo) * options.event_penalty;
    return -std::log(std::max(mass, 1e-300) / (hi - lo)) + events;
  };

  const auto L = static_cast<std::size_t>(levels);
  std::vector<double> cost(L, INFINITY), next(L);
  std::vector<int> from(n * L);
  cost[0] = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(next.begin(), next.end(), INFINITY);
    for (std::size_t a = 0; a < L; ++a) {
      if (!std::isfinite(cost[a])) continue;
      for (std::size_t b = 0; b < L; ++b) {
        const double c = cost[a] + bin_cost(x[i], static_cast<int>(a), static_cast<int>(b));
        if (c < next[b]) {
          next[b] = c;
          from[i * L + b] = static_cast<int>(a);
        }
      }
    }
    cost.swap(next);
  }
  std::vector<int> edge(n + 1);
  edge[n] = static_cast<int>(std::min_element(cost.begin(), cost.end()) - cost.begin());
  for (std::size_t i = n; i-- > 0;) edge[i] = from[i * L + static_cast<std::size_t>(edge[i + 1])];
  for (std::size_t i = 0; i < n; ++i) {
    if (edge[i + 1] != edge[i]) emit(edge[i + 1], i);
    est.staircase[i] = std::clamp(est.staircase[i], std::min(edge[i], edge[i + 1]),
                                  std::max(edge[i], edge[i + 1]));
  }
  return est;
}

GaussianPeakFit fit_gaussian_peak(std::span<const double> x, std::span<const double> y,
                                  double center_guess, double sigma_guess) {
  GaussianPeakFit fit;
  if (x.size() != y.size() || x.size() < 3 || !(sigma_guess > 0.0)) return fit;

  const double ymax = *std::max_element(y.begin(), y.end());
  if (!(ymax > 0.0)) return fit;
  Eigen::Vector3d p(ymax, center_guess, sigma_guess);

  const auto residuals = [&](const Eigen::Vector3d& q, Eigen::VectorXd& r, Eigen::MatrixXd* jac) {
    r.resize(static_cast<Eigen::Index>(x.size()));
    if (jac) jac->resize(r.size(), 3);
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double z = (x[i] - q[1]) / q[2];
      const double g = std::exp(-0.5 * z * z);
      const auto row = static_cast<Eigen::Index>(i);
      r[row] = q[0] * g - y[i];
      if (jac) {
        (*jac)(row, 0) = g;
        (*jac)(row, 1) = q[0] * g * z / q[2];
        (*jac)(row, 2) = q[0] * g * z * z / q[2];
      }
    }
  };

  // Levenberg-Marquardt with multiplicative damping.
  Eigen::VectorXd r;
  Eigen::MatrixXd jac;
  residuals(p, r, &jac);
  double cost = r.squaredNorm();
  double lambda = 1e-3;
  for (int iter = 0; iter < 200; ++iter) {
    const Eigen::Matrix3d jtj = jac.transpose() * jac;
    const Eigen::Vector3d g = jac.transpose() * r;
    Eigen::Matrix3d a = jtj;
    a.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-12);
    const Eigen::Vector3d step = a.ldlt().solve(-g);
    const Eigen::Vector3d trial = p + step;
    if (!(trial[2] > 0.0) || !trial.allFinite()) {
      lambda *= 10.0;
      continue;
    }
    Eigen::VectorXd r_trial;
    residuals(trial, r_trial, nullptr);
    const double trial_cost = r_trial.squaredNorm();
    if (trial_cost < cost) {
      const bool small = step.cwiseAbs().maxCoeff() <= 1e-10 * (p.cwiseAbs().maxCoeff() + 1e-10);
      p = trial;
      cost = trial_cost;
      residuals(p, r, &jac);
      lambda = std::max(lambda / 10.0, 1e-12);
      if (small || (cost > 0.0 && step.norm() < 1e-12 * p.norm())) break;
    } else {
      lambda *= 10.0;
      if (lambda > 1e12) break;
    }
  }
  fit.amplitude = p[0];
  fit.center = p[1];
  fit.sigma = std::abs(p[2]);
  fit.converged = p.allFinite() && fit.sigma > 0.0 && fit.amplitude > 0.0;
  return fit;
}

TraceHistogram build_histogram(std::span<const FluorescenceTrace> traces,
                               const DetectionCalibration& cal, const HistogramOptions& options) {
  if (traces.empty()) throw std::invalid_argument("build_histogram: no traces");
  cal.validate();

  std::vector<double> samples;
  for (const auto& tr : traces) {
    const auto rates = subtract_background(tr);
    samples.insert(samples.end(), rates.begin(), rates.end());
  }
  TraceHistogram hist;
  hist.traces = traces.size();
  hist.samples = samples.size();
  if (samples.empty()) return hist;

  const double width = options.bin_width > 0.0 ? options.bin_width : cal.rate_per_atom / 50.0;
  const auto [lo_it, hi_it] = std::minmax_element(samples.begin(), samples.end());
  const double lo = std::floor(*lo_it / width) * width;
  const auto nbins = static_cast<std::size_t>(std::floor((*hi_it - lo) / width)) + 1;
  hist.edges.resize(nbins + 1);
  for (std::size_t i = 0; i <= nbins; ++i) hist.edges[i] = lo + width * static_cast<double>(i);
  hist.occurrences.assign(nbins, 0);
  for (double s : samples) {
    const auto idx = std::min(nbins - 1, static_cast<std::size_t>(std::floor((s - lo) / width)));
    ++hist.occurrences[idx];
  }

  // Non-overlapping windows around k * rate_per_atom; windows never overlap for
  // window_frac < 0.5, so a sample belongs to at most one peak.
  const double half = options.window_frac * cal.rate_per_atom;
  const int kmax = std::max(0, static_cast<int>(std::floor(*hi_it / cal.rate_per_atom + 0.5)));
  for (int k = 0; k <= kmax; ++k) {
    const double expected = k * cal.rate_per_atom;
    std::vector<double> in_window;
    for (double s : samples)
      if (s >= expected - half && s < expected + half) in_window.push_back(s);
    if (in_window.size() < options.min_peak_samples) continue;

    const auto ms = stats::mean_and_se(in_window);
    const double sd = ms.se * std::sqrt(static_cast<double>(in_window.size()));
    HistogramPeak peak{k, ms.mean, sd, static_cast<double>(in_window.size())};

    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < nbins; ++i) {
      const double c = 0.5 * (hist.edges[i] + hist.edges[i + 1]);
      if (c >= expected - half && c < expected + half) {
        xs.push_back(c);
        ys.push_back(static_cast<double>(hist.occurrences[i]));
      }
    }
    const auto g = fit_gaussian_peak(xs, ys, ms.mean, sd > 0.0 ? sd : width);
    if (g.converged && std::abs(g.center - expected) < half) {
      peak.center = g.center;
      peak.width = g.sigma;
    }
    hist.peaks.push_back(peak);
  }
  if (!hist.peaks.empty()) {
    double total = 0.0, first = 0.0;
    for (const auto& p : hist.peaks) {
      total += p.weight;
      first += p.atoms * p.weight;
    }
    hist.poisson_lambda = total > 0.0 ? first / total : 0.0;
  }
  return hist;
}

PoissonFit fit_poisson(const TraceHistogram& hist, double effective_samples) {
  if (hist.peaks.empty()) throw std::invalid_argument("fit_poisson: histogram has no peaks");
  int kmax = 0;
  double total = 0.0;
  for (const auto& p : hist.peaks) {
    if (!(p.weight >= 0.0) || p.atoms < 0)
      throw std::invalid_argument("fit_poisson: negative or invalid peak weight");
    kmax = std::max(kmax, p.atoms);
    total += p.weight;
  }
  if (!(total > 0.0)) throw std::invalid_argument("fit_poisson: degenerate peak weights");

  std::vector<double> prob(static_cast<std::size_t>(kmax) + 1, 0.0);
  for (const auto& p : hist.peaks) prob[static_cast<std::size_t>(p.atoms)] += p.weight / total;

  PoissonFit fit;
  for (std::size_t k = 0; k < prob.size(); ++k) fit.lambda += static_cast<double>(k) * prob[k];

  const double n = effective_samples > 0.0 ? effective_samples
                                           : static_cast<double>(std::max<std::size_t>(hist.traces, 1));
  std::vector<double> obs(prob.size() + 1, 0.0), exp(prob.size() + 1, 0.0);
  double cum = 0.0;
  for (std::size_t k = 0; k < prob.size(); ++k) {
    obs[k] = n * prob[k];
    exp[k] = n * stats::poisson_pmf(static_cast<int>(k), fit.lambda);
    cum += exp[k];
  }
  exp.back() = std::max(0.0, n - cum);
  const auto chi = stats::chi_square_test(obs, exp, 1);
  fit.chi2 = chi.statistic;
  fit.dof = chi.dof;
  fit.p_value = chi.p_value;
  return fit;
}

}  // namespace csprobe
