#include "csprobe/config.hpp"

#include <fstream>
#include <functional>
#include <set>
#include <type_traits>
#include <stdexcept>

namespace csprobe {

using nlohmann::json;

PhysicalParams PhysicsConfig::to_params() const {
  PhysicalParams p;
  p.r0 = r0_per_s;
  p.alpha = alpha_per_s_per_atom;
  p.gamma = gamma_per_s;
  p.beta_rbcs = beta_rbcs_cm3_per_s;
  p.beta_cscs = beta_cscs_cm3_per_s;
  p.w_cs = w_cs_um * kCmPerUm;
  p.w_rb = w_rb_um * kCmPerUm;
  return p;
}

void RunConfig::validate() const {
  physics.to_params().validate();
  calibration.validate();
  schedule.validate();
  if (!(grid.n_rb_step > 0.0) || grid.n_rb_min < 0.0 || grid.n_rb_max < grid.n_rb_min)
    throw std::invalid_argument("grid requires 0 <= n_rb_min <= n_rb_max and n_rb_step > 0");
  if (traces_per_bin < 1) throw std::invalid_argument("traces_per_bin must be >= 1");
  if (!(analysis.bin_width_atoms > 0.0))
    throw std::invalid_argument("analysis.bin_width_atoms must be positive");
  if (!(analysis.steady_tol >= 0.0)) throw std::invalid_argument("analysis.steady_tol must be >= 0");
  if (!(analysis.settle_s >= 0.0) || analysis.settle_s >= schedule.detect_s)
    throw std::invalid_argument("analysis.settle_s must lie in [0, detect_s)");
  if (!(analysis.nrb_factor >= 1.0)) throw std::invalid_argument("analysis.nrb_factor must be >= 1");
  if (!(analysis.size_frac >= 0.0 && analysis.size_frac < 1.0))
    throw std::invalid_argument("analysis.size_frac must lie in [0, 1)");
  if (analysis.median_window < 1 || analysis.median_window % 2 == 0)
    throw std::invalid_argument("analysis.median_window must be a positive odd number");
}

namespace {

// Reads the keys of one JSON object into fields; anything not listed is an error.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw std::invalid_argument(where_ + ": expected a JSON object");
  }

  template <class T>
  ObjectReader& field(const char* key, T& out) {
    known_.emplace(key);
    if (auto it = j_.find(key); it != j_.end()) {
      try {
        if constexpr (std::is_floating_point_v<T>) {
          if (!it->is_number()) throw std::invalid_argument("not a number");
        } else if constexpr (std::is_integral_v<T>) {
          if (!it->is_number_integer()) throw std::invalid_argument("not an integer");
          if (std::is_unsigned_v<T> && it->is_number_integer() && !it->is_number_unsigned())
            throw std::invalid_argument("must be non-negative");
        } else {
          if (!it->is_string()) throw std::invalid_argument("not a string");
        }
        out = it->get<T>();
      } catch (const std::exception& e) {
        throw std::invalid_argument(where_ + "." + key + ": " + e.what());
      }
    }
    return *this;
  }

  ObjectReader& object(const char* key, const std::function<void(const json&, const std::string&)>& read) {
    known_.emplace(key);
    if (auto it = j_.find(key); it != j_.end()) read(*it, where_ + "." + key);
    return *this;
  }

  void finish() const {
    for (const auto& [key, _] : j_.items())
      if (!known_.contains(key)) throw std::invalid_argument(where_ + ": unknown key '" + key + "'");
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> known_;
};

}  // namespace

RunConfig config_from_json(const json& j) {
  RunConfig cfg;
  ObjectReader(j, "config")
      .object("physics",
              [&](const json& o, const std::string& w) {
                auto& p = cfg.physics;
                ObjectReader(o, w)
                    .field("r0_per_s", p.r0_per_s)
                    .field("alpha_per_s_per_atom", p.alpha_per_s_per_atom)
                    .field("gamma_per_s", p.gamma_per_s)
                    .field("beta_rbcs_cm3_per_s", p.beta_rbcs_cm3_per_s)
                    .field("beta_cscs_cm3_per_s", p.beta_cscs_cm3_per_s)
                    .field("w_cs_um", p.w_cs_um)
                    .field("w_rb_um", p.w_rb_um)
                    .finish();
              })
      .object("calibration",
              [&](const json& o, const std::string& w) {
                auto& c = cfg.calibration;
                ObjectReader(o, w)
                    .field("rate_per_atom_per_s", c.rate_per_atom)
                    .field("background_rate_per_s", c.background_rate)
                    .field("dark_rate_per_s", c.dark_rate)
                    .field("bin_s", c.bin_s)
                    .finish();
              })
      .object("schedule",
              [&](const json& o, const std::string& w) {
                auto& s = cfg.schedule;
                ObjectReader(o, w)
                    .field("detect_s", s.detect_s)
                    .field("off_s", s.off_s)
                    .field("background_s", s.background_s)
                    .finish();
              })
      .object("grid",
              [&](const json& o, const std::string& w) {
                ObjectReader(o, w)
                    .field("n_rb_min", cfg.grid.n_rb_min)
                    .field("n_rb_max", cfg.grid.n_rb_max)
                    .field("n_rb_step", cfg.grid.n_rb_step)
                    .finish();
              })
      .field("traces_per_bin", cfg.traces_per_bin)
      .field("master_seed", cfg.master_seed)
      .field("threads", cfg.threads)
      .object("analysis",
              [&](const json& o, const std::string& w) {
                auto& a = cfg.analysis;
                ObjectReader(o, w)
                    .field("bin_width_atoms", a.bin_width_atoms)
                    .field("steady_tol", a.steady_tol)
                    .field("settle_s", a.settle_s)
                    .field("nrb_factor", a.nrb_factor)
                    .field("size_frac", a.size_frac)
                    .field("bootstrap_resamples", a.bootstrap_resamples)
                    .field("median_window", a.median_window)
                    .finish();
              })
      .object("output",
              [&](const json& o, const std::string& w) {
                auto& out = cfg.output;
                ObjectReader(o, w)
                    .field("traces", out.traces)
                    .field("trajectories", out.trajectories)
                    .field("analysis_dir", out.analysis_dir)
                    .field("report", out.report)
                    .finish();
              })
      .finish();
  cfg.validate();
  return cfg;
}

json config_to_json(const RunConfig& cfg) {
  const auto& p = cfg.physics;
  const auto& c = cfg.calibration;
  const auto& a = cfg.analysis;
  return json{
      {"physics",
       {{"r0_per_s", p.r0_per_s},
        {"alpha_per_s_per_atom", p.alpha_per_s_per_atom},
        {"gamma_per_s", p.gamma_per_s},
        {"beta_rbcs_cm3_per_s", p.beta_rbcs_cm3_per_s},
        {"beta_cscs_cm3_per_s", p.beta_cscs_cm3_per_s},
        {"w_cs_um", p.w_cs_um},
        {"w_rb_um", p.w_rb_um}}},
      {"calibration",
       {{"rate_per_atom_per_s", c.rate_per_atom},
        {"background_rate_per_s", c.background_rate},
        {"dark_rate_per_s", c.dark_rate},
        {"bin_s", c.bin_s}}},
      {"schedule",
       {{"detect_s", cfg.schedule.detect_s},
        {"off_s", cfg.schedule.off_s},
        {"background_s", cfg.schedule.background_s}}},
      {"grid",
       {{"n_rb_min", cfg.grid.n_rb_min},
        {"n_rb_max", cfg.grid.n_rb_max},
        {"n_rb_step", cfg.grid.n_rb_step}}},
      {"traces_per_bin", cfg.traces_per_bin},
      {"master_seed", cfg.master_seed},
      {"threads", cfg.threads},
      {"analysis",
       {{"bin_width_atoms", a.bin_width_atoms},
        {"steady_tol", a.steady_tol},
        {"settle_s", a.settle_s},
        {"nrb_factor", a.nrb_factor},
        {"size_frac", a.size_frac},
        {"bootstrap_resamples", a.bootstrap_resamples},
        {"median_window", a.median_window}}},
      {"output",
       {{"traces", cfg.output.traces},
        {"trajectories", cfg.output.trajectories},
        {"analysis_dir", cfg.output.analysis_dir},
        {"report", cfg.output.report}}},
  };
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config " + path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

}  // namespace csprobe
