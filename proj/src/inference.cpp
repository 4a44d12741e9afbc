#include "csprobe/inference.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <boost/math/tools/minima.hpp>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

#include "csprobe/random.hpp"
#include "csprobe/stats.hpp"

namespace csprobe {

TraceSummary summarize_trace(const FluorescenceTrace& trace, const AtomNumberEstimate& est,
                             const DetectionCalibration& cal, const SummaryOptions& options) {
  TraceSummary s;
  s.trace_id = trace.trace_id;
  s.n_rb = trace.n_rb;
  s.detect_s = static_cast<double>(est.staircase.size()) * trace.bin_s;
  s.loads = est.load_events.size();
  s.atoms_lost = est.atoms_lost();
  s.pair_candidates = est.pair_candidates();

  double full = 0.0, settled = 0.0;
  std::size_t settled_bins = 0;
  for (std::size_t i = 0; i < est.staircase.size(); ++i) {
    const int level = est.staircase[i];
    full += level;
    // Bin i starts at i * bin_s; the small offset absorbs rounding of settle_s / bin_s.
    if (static_cast<double>(i) * trace.bin_s >= options.settle_s - 1e-9 * trace.bin_s) {
      settled += level;
      ++settled_bins;
    }
    const auto idx = static_cast<std::size_t>(level);
    if (s.level_counts.size() <= idx) s.level_counts.resize(idx + 1, 0);
    ++s.level_counts[idx];
  }
  for (std::size_t k = 0; k < s.level_counts.size(); ++k) {
    if (s.level_counts[k] == 0) continue;
    const int level = static_cast<int>(k);
    s.blind_exposure += static_cast<double>(s.level_counts[k]) * trace.bin_s *
                        blind_time(trace, cal, level, options.staircase) * (2.0 * level + 1.0);
  }
  if (!est.staircase.empty()) s.mean_n_full = full / static_cast<double>(est.staircase.size());
  s.mean_n = settled_bins > 0 ? settled / static_cast<double>(settled_bins) : s.mean_n_full;
  return s;
}

TraceSummary summarize_trace(const FluorescenceTrace& trace, const DetectionCalibration& cal,
                             const SummaryOptions& options) {
  return summarize_trace(trace, estimate_staircase(trace, cal, options.staircase), cal, options);
}

void aggregate_bin(RbBin& bin) {
  bin.n_traces = bin.traces.size();
  bin.detect_time_s = 0.0;
  bin.loads = 0.0;
  bin.atoms_lost = 0.0;
  std::vector<double> means;
  means.reserve(bin.traces.size());
  std::vector<std::size_t> levels;
  double occupancy = 0.0;  // atom-seconds
  double exposure = 0.0;
  for (const auto& t : bin.traces) {
    bin.detect_time_s += t.detect_s;
    bin.loads += static_cast<double>(t.loads);
    bin.atoms_lost += static_cast<double>(t.atoms_lost);
    occupancy += t.mean_n_full * t.detect_s;
    exposure += t.blind_exposure;
    means.push_back(t.mean_n);
    if (levels.size() < t.level_counts.size()) levels.resize(t.level_counts.size(), 0);
    for (std::size_t k = 0; k < t.level_counts.size(); ++k) levels[k] += t.level_counts[k];
  }
  // Hidden pairs occur at rate R kappa blind_time (2n + 1); R and the per-atom
  // loss rate kappa include the hidden events themselves, so iterate.
  bin.hidden_pairs = 0.0;
  if (bin.detect_time_s > 0.0 && occupancy > 0.0) {
    for (int it = 0; it < 50; ++it) {
      const double r = (bin.loads + bin.hidden_pairs) / bin.detect_time_s;
      const double kappa = (bin.atoms_lost + bin.hidden_pairs) / occupancy;
      const double h = r * kappa * exposure;
      const bool done = std::abs(h - bin.hidden_pairs) <= 1e-12 * (1.0 + h);
      bin.hidden_pairs = h;
      if (done) break;
    }
  }
  bin.loading_rate =
      bin.detect_time_s > 0.0 ? (bin.loads + bin.hidden_pairs) / bin.detect_time_s : 0.0;
  bin.loss_rate =
      bin.detect_time_s > 0.0 ? (bin.atoms_lost + bin.hidden_pairs) / bin.detect_time_s : 0.0;
  const auto ms = stats::mean_and_se(means);
  bin.mean_n_cs = ms.mean;
  bin.mean_n_cs_se = ms.se;
  double total = 0.0, first = 0.0;
  for (std::size_t k = 0; k < levels.size(); ++k) {
    total += static_cast<double>(levels[k]);
    first += static_cast<double>(k * levels[k]);
  }
  bin.poisson_lambda = total > 0.0 ? first / total : 0.0;
}

BinnedDataset bin_by_nrb(std::span<const TraceSummary> traces, double width) {
  if (!(width > 0.0)) throw std::invalid_argument("bin_by_nrb: width must be positive");
  BinnedDataset out;
  out.width = width;
  std::map<long long, RbBin> by_index;
  for (const auto& t : traces) {
    if (!(t.n_rb >= 0.0)) throw std::invalid_argument("bin_by_nrb: trace with invalid n_rb");
    const auto idx = std::llround(t.n_rb / width);
    auto& bin = by_index[idx];
    bin.n_rb_center = static_cast<double>(idx) * width;
    bin.traces.push_back(t);
  }
  long long prev = 0;
  bool first = true;
  for (auto& [idx, bin] : by_index) {
    if (!first)
      for (long long gap = prev + 1; gap < idx; ++gap)
        out.notices.push_back("no traces in bin N_Rb = " +
                              std::to_string(static_cast<long long>(std::llround(gap * width))) +
                              "; bin excluded");
    first = false;
    prev = idx;
    aggregate_bin(bin);
    out.bins.push_back(std::move(bin));
  }
  return out;
}

LoadingFit fit_loading_rate(const BinnedDataset& binned) {
  const auto n = static_cast<Eigen::Index>(binned.bins.size());
  if (n < 3) throw std::invalid_argument("fit_loading_rate: need at least 3 bins");

  Eigen::MatrixXd design(n, 2);
  Eigen::VectorXd y(n), w(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& b = binned.bins[static_cast<std::size_t>(i)];
    design(i, 0) = 1.0;
    design(i, 1) = -b.n_rb_center;
    y[i] = b.loading_rate;
    // Var(loads / T) = loads / T^2 for Poisson counting; an empty bin counts as one event.
    const double t = b.detect_time_s > 0.0 ? b.detect_time_s : 1.0;
    w[i] = t * t / std::max(b.loads, 1.0);
  }
  const Eigen::Matrix2d normal = design.transpose() * w.asDiagonal() * design;
  const Eigen::Vector2d rhs = design.transpose() * w.asDiagonal() * y;
  const Eigen::LDLT<Eigen::Matrix2d> ldlt(normal);
  if (ldlt.info() != Eigen::Success || std::abs(normal.determinant()) == 0.0)
    throw std::invalid_argument("fit_loading_rate: bins do not span distinct N_Rb values");
  const Eigen::Vector2d p = ldlt.solve(rhs);
  const Eigen::Matrix2d cov = normal.inverse();

  LoadingFit fit;
  fit.r0 = p[0];
  fit.alpha = p[1];
  fit.r0_err = std::sqrt(std::max(0.0, cov(0, 0)));
  fit.alpha_err = std::sqrt(std::max(0.0, cov(1, 1)));
  fit.covariance = cov(0, 1);
  const Eigen::VectorXd res = y - design * p;
  fit.residuals.assign(res.data(), res.data() + res.size());
  fit.chi2 = res.cwiseProduct(res).dot(w);
  return fit;
}

std::vector<BinState> classify_steady_state(const BinnedDataset& binned, double tol) {
  std::vector<std::size_t> order(binned.bins.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return binned.bins[a].n_rb_center < binned.bins[b].n_rb_center;
  });
  std::vector<BinState> labels(binned.bins.size(), BinState::Transient);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const auto& b = binned.bins[*it];
    const bool steady =
        b.loss_rate > 0.0 && std::abs(b.loading_rate / b.loss_rate - 1.0) <= tol;
    if (!steady) break;
    labels[*it] = BinState::Steady;
  }
  return labels;
}

std::vector<std::size_t> steady_bins(std::span<const BinState> labels) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] == BinState::Steady) out.push_back(i);
  return out;
}

PhysicalParams fitted_params(const PhysicalParams& known, const LoadingFit& loading,
                             double beta) {
  PhysicalParams p = known;
  p.r0 = loading.r0;
  p.alpha = loading.alpha;
  p.beta_rbcs = beta;
  return p;
}

namespace {

struct BetaObjective {
  std::vector<double> n_rb, data, weight;
  double load_r0, load_alpha, gamma, volume;

  double model(std::size_t i, double beta) const {
    const double load = std::max(0.0, load_r0 - load_alpha * n_rb[i]);
    const double denom = gamma + beta * n_rb[i] / volume;
    if (!(denom > 0.0)) {
      if (n_rb[i] == 0.0)
        throw std::domain_error("fit_beta: zero loss constant (gamma = 0 at N_Rb = 0)");
      // beta = 0 with gamma = 0: the mean diverges.
      return load > 0.0 ? std::numeric_limits<double>::infinity() : 0.0;
    }
    return load / denom;
  }
  double operator()(double beta) const {
    double j = 0.0;
    for (std::size_t i = 0; i < n_rb.size(); ++i) {
      const double r = data[i] - model(i, beta);
      j += weight[i] * r * r;
    }
    return j;
  }
  /// Sum of w (dm/dbeta)^2, the Gauss-Newton curvature.
  double information(double beta) const {
    double info = 0.0;
    for (std::size_t i = 0; i < n_rb.size(); ++i) {
      const double load = std::max(0.0, load_r0 - load_alpha * n_rb[i]);
      const double c = n_rb[i] / volume;
      const double denom = gamma + beta * c;
      const double dm = -load * c / (denom * denom);
      info += weight[i] * dm * dm;
    }
    return info;
  }
};

}  // namespace

BetaFit fit_beta(const BinnedDataset& binned, const PhysicalParams& known,
                 const LoadingFit& loading, std::span<const std::size_t> bins) {
  if (bins.empty()) throw std::invalid_argument("fit_beta: no steady-state bins to fit");

  BetaObjective obj;
  obj.load_r0 = loading.r0;
  obj.load_alpha = loading.alpha;
  obj.gamma = known.gamma;
  obj.volume = pair_overlap_volume(known.w_cs, known.w_rb);

  bool all_se = true;
  for (auto i : bins) {
    const auto& b = binned.bins.at(i);
    obj.n_rb.push_back(b.n_rb_center);
    obj.data.push_back(b.mean_n_cs);
    all_se = all_se && b.mean_n_cs_se > 0.0;
  }
  for (auto i : bins) {
    const double se = binned.bins[i].mean_n_cs_se;
    obj.weight.push_back(all_se ? 1.0 / (se * se) : 1.0);
  }

  const double n_max = *std::max_element(obj.n_rb.begin(), obj.n_rb.end());
  if (!(n_max > 0.0)) throw std::domain_error("fit_beta: ill-conditioned, all bins at N_Rb = 0");

  // Coarse log scan to bracket the minimum, then Brent inside the bracket.
  const double scale = obj.volume / n_max;  // beta giving 1/s loss at the largest N_Rb
  constexpr int kGrid = 240;
  std::vector<double> grid{0.0};
  for (int k = 0; k <= kGrid; ++k) grid.push_back(scale * std::pow(10.0, -8.0 + 12.0 * k / kGrid));
  std::vector<double> values;
  double v_max = 0.0;
  for (double b : grid) {
    values.push_back(obj(b));
    if (std::isfinite(values.back())) v_max = std::max(v_max, values.back());
  }
  const auto min_it = std::min_element(values.begin(), values.end());
  if (v_max - *min_it <= 1e-14 * (1.0 + v_max))
    throw std::domain_error("fit_beta: ill-conditioned, objective is flat in beta");

  const auto best = static_cast<std::size_t>(min_it - values.begin());
  const double lo = grid[best == 0 ? 0 : best - 1];
  const double hi = grid[std::min(best + 1, grid.size() - 1)];
  // Brent's tolerance has an absolute floor, so search in units of `scale`.
  std::uintmax_t max_iter = 500;
  auto [u, j] = boost::math::tools::brent_find_minima(
      [&](double v) { return obj(v * scale); }, lo / scale, hi / scale,
      std::numeric_limits<double>::digits / 2, max_iter);
  double beta = u * scale;
  if (values[0] <= j) {
    beta = 0.0;
    j = values[0];
  }

  BetaFit fit;
  fit.beta = beta;
  fit.fitted_bins.assign(bins.begin(), bins.end());
  fit.chi2 = j;
  fit.unit_weights = !all_se;
  const auto dof = std::max<std::size_t>(bins.size(), 2) - 1;
  fit.goodness = j / static_cast<double>(dof);
  const double info = obj.information(beta);
  fit.stat_err = info > 0.0 ? 1.0 / std::sqrt(info) : std::numeric_limits<double>::infinity();
  if (fit.unit_weights) fit.stat_err *= std::sqrt(fit.goodness);
  return fit;
}

BetaFit fit_beta(const BinnedDataset& binned, const PhysicalParams& known,
                 const LoadingFit& loading, double tol) {
  const auto labels = classify_steady_state(binned, tol);
  const auto bins = steady_bins(labels);
  return fit_beta(binned, known, loading, bins);
}

std::vector<CurvePoint> model_curve(const BinnedDataset& binned, const PhysicalParams& known,
                                    const LoadingFit& loading, const BetaFit& fit) {
  const PhysicalParams p = fitted_params(known, loading, fit.beta);
  std::vector<CurvePoint> out;
  for (std::size_t i = 0; i < binned.bins.size(); ++i) {
    const auto& b = binned.bins[i];
    CurvePoint c;
    c.n_rb = b.n_rb_center;
    c.model = steady_state_mean(b.n_rb_center, p);
    c.data = b.mean_n_cs;
    c.data_se = b.mean_n_cs_se;
    c.fitted = std::find(fit.fitted_bins.begin(), fit.fitted_bins.end(), i) != fit.fitted_bins.end();
    out.push_back(c);
  }
  return out;
}

double refit_beta(const BinnedDataset& binned, const PhysicalParams& known,
                  std::span<const std::size_t> bins, double nrb_scale, double w_cs, double w_rb) {
  BinnedDataset scaled;
  scaled.width = binned.width * nrb_scale;
  scaled.bins.reserve(binned.bins.size());
  for (const auto& b : binned.bins) {
    RbBin copy;
    copy = b;
    copy.traces.clear();
    copy.n_rb_center = b.n_rb_center * nrb_scale;
    scaled.bins.push_back(std::move(copy));
  }
  PhysicalParams p = known;
  p.w_cs = w_cs;
  p.w_rb = w_rb;
  const auto loading = fit_loading_rate(scaled);
  return fit_beta(scaled, p, loading, bins).beta;
}

SystematicsResult propagate_systematics(const BinnedDataset& binned, const PhysicalParams& known,
                                        const BetaFit& fit, const SystematicsOptions& options) {
  SystematicsResult out;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (double nrb : {options.nrb_factor, 1.0 / options.nrb_factor})
    for (double scs : {1.0 + options.size_frac, 1.0 - options.size_frac})
      for (double srb : {1.0 + options.size_frac, 1.0 - options.size_frac}) {
        SystematicCorner c{nrb, known.w_cs * scs, known.w_rb * srb, 0.0};
        c.beta = refit_beta(binned, known, fit.fitted_bins, nrb, c.w_cs, c.w_rb);
        lo = std::min(lo, c.beta);
        hi = std::max(hi, c.beta);
        out.corners.push_back(c);
      }
  out.syst_err = 0.5 * (hi - lo);
  return out;
}

double bootstrap_stat_error(const BinnedDataset& binned, const PhysicalParams& known,
                            std::span<const std::size_t> bins, std::size_t resamples,
                            std::uint64_t seed) {
  if (resamples < 2) throw std::invalid_argument("bootstrap_stat_error: need >= 2 resamples");
  for (const auto& b : binned.bins)
    if (b.traces.empty())
      throw std::invalid_argument("bootstrap_stat_error: bins carry no trace-level data");

  std::vector<double> betas;
  betas.reserve(resamples);
  for (std::size_t r = 0; r < resamples; ++r) {
    Rng rng(derive_seed(seed, Stream::Bootstrap, r, 0));
    BinnedDataset sample;
    sample.width = binned.width;
    for (const auto& b : binned.bins) {
      RbBin nb;
      nb.n_rb_center = b.n_rb_center;
      std::uniform_int_distribution<std::size_t> pick(0, b.traces.size() - 1);
      for (std::size_t k = 0; k < b.traces.size(); ++k) nb.traces.push_back(b.traces[pick(rng)]);
      aggregate_bin(nb);
      sample.bins.push_back(std::move(nb));
    }
    const auto loading = fit_loading_rate(sample);
    betas.push_back(fit_beta(sample, known, loading, bins).beta);
  }
  const auto ms = stats::mean_and_se(betas);
  return ms.se * std::sqrt(static_cast<double>(betas.size()));
}

}  // namespace csprobe
