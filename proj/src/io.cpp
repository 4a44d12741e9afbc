#include "csprobe/io.hpp"

#include <charconv>
#include <istream>
#include <ostream>
#include <sstream>

namespace csprobe::io {

using nlohmann::json;

namespace {

const json& require(const json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw std::invalid_argument(std::string("missing key '") + key + "'");
  return *it;
}

BinRange range_from_json(const json& j, const char* name) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number_unsigned() || !j[1].is_number_unsigned())
    throw std::invalid_argument(std::string("segment '") + name + "' must be [begin, end]");
  return {j[0].get<std::size_t>(), j[1].get<std::size_t>()};
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

double parse_double(const std::string& s, std::size_t line) {
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || ptr != end) throw ParseError(line, "not a number: '" + s + "'");
  return v;
}

template <class Fn>
void for_each_line(std::istream& in, Fn&& fn) {
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    fn(line, number);
  }
}

}  // namespace

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

json trajectory_to_json(const Trajectory& traj) {
  json events = json::array();
  for (const auto& e : traj.events) events.push_back({e.t, to_string(e.kind), e.n_after});
  return json{{"trace_id", traj.trace_id},
              {"n_rb", traj.n_rb},
              {"seed", traj.seed},
              {"t_end_s", traj.t_end},
              {"events", std::move(events)}};
}

Trajectory trajectory_from_json(const json& j) {
  Trajectory traj;
  traj.trace_id = require(j, "trace_id").get<std::int64_t>();
  traj.n_rb = require(j, "n_rb").get<double>();
  traj.seed = require(j, "seed").get<std::uint64_t>();
  traj.t_end = require(j, "t_end_s").get<double>();
  for (const auto& e : require(j, "events")) {
    if (!e.is_array() || e.size() != 3) throw std::invalid_argument("event must be [t, kind, n_after]");
    traj.events.push_back(
        {e[0].get<double>(), event_kind_from_string(e[1].get<std::string>()), e[2].get<int>()});
  }
  return traj;
}

void write_trajectories(std::ostream& out, const std::vector<Trajectory>& trajs) {
  for (const auto& t : trajs) out << trajectory_to_json(t).dump() << '\n';
}

std::vector<Trajectory> read_trajectories(std::istream& in) {
  std::vector<Trajectory> out;
  for_each_line(in, [&](const std::string& line, std::size_t number) {
    try {
      out.push_back(trajectory_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw ParseError(number, e.what());
    }
  });
  return out;
}

json trace_to_json(const FluorescenceTrace& trace) {
  const auto& s = trace.segments;
  return json{{"trace_id", trace.trace_id},
              {"n_rb", trace.n_rb},
              {"bin_s", trace.bin_s},
              {"segments",
               {{"detect", {s.detect.begin, s.detect.end}},
                {"off", {s.off.begin, s.off.end}},
                {"background", {s.background.begin, s.background.end}}}},
              {"counts", trace.counts}};
}

FluorescenceTrace trace_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("trace must be a JSON object");
  FluorescenceTrace t;
  t.trace_id = require(j, "trace_id").get<std::int64_t>();
  t.n_rb = require(j, "n_rb").get<double>();
  t.bin_s = require(j, "bin_s").get<double>();
  const auto& seg = require(j, "segments");
  t.segments.detect = range_from_json(require(seg, "detect"), "detect");
  t.segments.off = range_from_json(require(seg, "off"), "off");
  t.segments.background = range_from_json(require(seg, "background"), "background");
  const auto& counts = require(j, "counts");
  if (!counts.is_array()) throw std::invalid_argument("counts must be an array");
  t.counts.reserve(counts.size());
  for (const auto& c : counts) {
    if (!c.is_number_integer()) throw std::invalid_argument("counts must be integers");
    t.counts.push_back(c.get<std::int64_t>());
  }
  t.validate();
  return t;
}

void write_trace_line(std::ostream& out, const FluorescenceTrace& trace) {
  out << trace_to_json(trace).dump() << '\n';
}

std::vector<FluorescenceTrace> read_traces(std::istream& in) {
  std::vector<FluorescenceTrace> out;
  for_each_line(in, [&](const std::string& line, std::size_t number) {
    try {
      out.push_back(trace_from_json(json::parse(line)));
    } catch (const std::exception& e) {
      throw ParseError(number, e.what());
    }
  });
  if (out.empty()) throw ParseError(0, "trace file contains no traces");
  return out;
}

namespace {
constexpr const char* kBinColumns =
    "n_rb_center,n_traces,detect_time_s,loads,atoms_lost,loading_rate,loss_rate,ratio,"
    "mean_n_cs,mean_n_cs_se,poisson_lambda,hidden_pairs,state";
}

void write_bins_csv(std::ostream& out, const BinnedDataset& binned,
                    const std::vector<BinState>* labels) {
  out << kBinColumns << '\n';
  for (std::size_t i = 0; i < binned.bins.size(); ++i) {
    const auto& b = binned.bins[i];
    const double ratio = b.loss_rate > 0.0 ? b.loading_rate / b.loss_rate : 0.0;
    const char* state = "";
    if (labels) state = (*labels)[i] == BinState::Steady ? "steady" : "transient";
    out << format_double(b.n_rb_center) << ',' << b.n_traces << ',' << format_double(b.detect_time_s)
        << ',' << format_double(b.loads) << ',' << format_double(b.atoms_lost) << ','
        << format_double(b.loading_rate) << ',' << format_double(b.loss_rate) << ','
        << format_double(ratio) << ',' << format_double(b.mean_n_cs) << ','
        << format_double(b.mean_n_cs_se) << ',' << format_double(b.poisson_lambda) << ','
        << format_double(b.hidden_pairs) << ',' << state
        << '\n';
  }
}

BinnedDataset read_bins_csv(std::istream& in) {
  BinnedDataset out;
  bool header = true;
  for_each_line(in, [&](const std::string& line, std::size_t number) {
    if (header) {
      if (line.rfind("n_rb_center,", 0) != 0) throw ParseError(number, "missing per-bin CSV header");
      header = false;
      return;
    }
    const auto cells = split_csv(line);
    if (cells.size() < 12) throw ParseError(number, "expected at least 12 columns");
    RbBin b;
    b.n_rb_center = parse_double(cells[0], number);
    b.n_traces = static_cast<std::size_t>(parse_double(cells[1], number));
    b.detect_time_s = parse_double(cells[2], number);
    b.loads = parse_double(cells[3], number);
    b.atoms_lost = parse_double(cells[4], number);
    b.loading_rate = parse_double(cells[5], number);
    b.loss_rate = parse_double(cells[6], number);
    b.mean_n_cs = parse_double(cells[8], number);
    b.mean_n_cs_se = parse_double(cells[9], number);
    b.poisson_lambda = parse_double(cells[10], number);
    b.hidden_pairs = parse_double(cells[11], number);
    out.bins.push_back(std::move(b));
  });
  if (out.bins.empty()) throw ParseError(0, "per-bin CSV contains no bins");
  if (out.bins.size() >= 2) out.width = out.bins[1].n_rb_center - out.bins[0].n_rb_center;
  return out;
}

void write_histogram_csv(std::ostream& out, const TraceHistogram& hist) {
  out << "bin_center,occurrences\n";
  for (std::size_t i = 0; i < hist.occurrences.size(); ++i)
    out << format_double(0.5 * (hist.edges[i] + hist.edges[i + 1])) << ',' << hist.occurrences[i]
        << '\n';
}

void write_staircase_csv(std::ostream& out, std::int64_t trace_id, const AtomNumberEstimate& est,
                         bool header) {
  if (header) out << "trace_id,bin_index,n_cs\n";
  for (std::size_t i = 0; i < est.staircase.size(); ++i)
    out << trace_id << ',' << i << ',' << est.staircase[i] << '\n';
}

void write_curve_csv(std::ostream& out, const std::vector<CurvePoint>& curve) {
  out << "n_rb,model,data,data_se,fitted\n";
  for (const auto& c : curve)
    out << format_double(c.n_rb) << ',' << format_double(c.model) << ',' << format_double(c.data)
        << ',' << format_double(c.data_se) << ',' << (c.fitted ? 1 : 0) << '\n';
}

}  // namespace csprobe::io
