#pragma once

// Trial artifacts: per-trial CSV (one row per control tick), key-value
// metadata sidecar, summary CSV and SVG panels.
//
// CSV headers read "name[unit]". Observation columns are filled only on
// observation ticks and left empty otherwise. Wall-clock solve times are only
// written when requested, so artifacts are reproducible byte for byte.

#include <charconv>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "slbal/errors.hpp"
#include "slbal/metrics.hpp"
#include "slbal/sim.hpp"

namespace slbal {

struct Column {
  std::string name;
  std::string unit;
  std::string header() const { return name + "[" + unit + "]"; }
};

namespace io_detail {

inline std::string num(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

inline const char* axis(int i) { return i == 0 ? "x" : (i == 1 ? "y" : "z"); }

/// Column names of the 48-vector with a prefix such as "true_" or "est_".
inline std::vector<Column> state_columns(const std::string& prefix) {
  std::vector<Column> c(kStateDim);
  auto pair2 = [&](int pos, int vel, const std::string& name) {
    for (int i = 0; i < 2; ++i) {
      c[pos + i] = {prefix + name + "_" + axis(i), "m"};
      c[vel + i] = {prefix + name + "_v" + axis(i), "m/s"};
    }
  };
  pair2(layout::kCom, layout::kComVel, "com");
  pair2(layout::kSup, layout::kSupVel, "sup");
  pair2(layout::kHcom, layout::kHcomVel, "hcom");
  const char* points[] = {"shoulder", "elbow", "wrist"};
  for (int a = 0; a < kArms; ++a)
    for (int p = 0; p < 3; ++p)
      for (int i = 0; i < 3; ++i) {
        const std::string base = prefix + "arm" + std::to_string(a + 1) + "_" + points[p] + "_";
        c[layout::arm_point(a, 3 * p) + i] = {base + axis(i), "m"};
        c[layout::arm_point_vel(a, 3 * p) + i] = {base + "v" + axis(i), "m/s"};
      }
  return c;
}

inline std::vector<Column> position_columns(const std::string& prefix) {
  const auto all = state_columns(prefix);
  std::vector<Column> c;
  for (const auto& pr : layout::pairs()) c.push_back(all[pr.pos]);
  return c;
}

inline std::vector<Column> reference_columns() {
  std::vector<Column> c(kTaskDim);
  for (int a = 0; a < kArms; ++a)
    for (int i = 0; i < 3; ++i) {
      const std::string arm = "ref_arm" + std::to_string(a + 1) + "_";
      c[task::elbow(a) + i] = {arm + "elbow_" + axis(i), "m"};
      c[task::elbow_vel(a) + i] = {arm + "elbow_v" + axis(i), "m/s"};
      c[task::wrist(a) + i] = {arm + "wrist_" + axis(i), "m"};
      c[task::wrist_vel(a) + i] = {arm + "wrist_v" + axis(i), "m/s"};
    }
  return c;
}

inline std::vector<Column> joint_columns() {
  std::vector<Column> c(kJointState);
  for (int i = 0; i < kJoints; ++i) {
    const std::string j = "arm" + std::to_string(i / kArmJoints + 1) + "_j" + std::to_string(i % kArmJoints + 1);
    c[joints::q_of(i)] = {"q_" + j, "rad"};
    c[joints::qd_of(i)] = {"qd_" + j, "rad/s"};
  }
  return c;
}

inline std::vector<Column> input_columns() {
  std::vector<Column> c;
  for (int i = 0; i < kJoints; ++i)
    c.push_back({"u_arm" + std::to_string(i / kArmJoints + 1) + "_j" + std::to_string(i % kArmJoints + 1), "rad/s^2"});
  return c;
}

}  // namespace io_detail

/// Full ordered column list of the trial CSV.
inline std::vector<Column> trial_columns(bool with_timing) {
  using namespace io_detail;
  std::vector<Column> c{{"time", "s"}};
  auto append = [&c](const std::vector<Column>& more) { c.insert(c.end(), more.begin(), more.end()); };
  append(state_columns("true_"));
  append(state_columns("est_"));
  c.push_back({"com_z", "m"});
  c.push_back({"pstar_vx", "m/s"});
  c.push_back({"pstar_vy", "m/s"});
  c.push_back({"planner_cost", "-"});
  append(reference_columns());
  append(joint_columns());
  append(input_columns());
  c.push_back({"mpc_status", "-"});
  c.push_back({"qp_iterations", "-"});
  c.push_back({"k_f", "-"});
  c.push_back({"q_factor", "-"});
  c.push_back({"r_factor", "-"});
  c.push_back({"cov_trace", "mixed"});
  if (with_timing) c.push_back({"solve_time", "s"});
  append(position_columns("obs_raw_"));
  append(position_columns("obs_noisy_"));
  return c;
}

inline void write_trial_csv(std::ostream& os, const TrialLog& log, bool with_timing = false) {
  using io_detail::num;
  const auto cols = trial_columns(with_timing);
  for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i].header();
  os << '\n';
  std::size_t next_obs = 0;
  std::string line;
  for (std::size_t t = 0; t < log.ticks.size(); ++t) {
    const TickRecord& r = log.ticks[t];
    line.clear();
    auto put = [&line](const std::string& s) {
      line += ',';
      line += s;
    };
    line += num(r.time);
    for (int i = 0; i < kStateDim; ++i) put(num(r.truth[i]));
    for (int i = 0; i < kStateDim; ++i) put(num(r.estimate[i]));
    put(num(r.com_height));
    put(num(r.p_star_dot.x()));
    put(num(r.p_star_dot.y()));
    put(num(r.planner_value));
    for (int i = 0; i < kTaskDim; ++i) put(num(r.reference[i]));
    for (int i = 0; i < kJointState; ++i) put(num(r.joints[i]));
    for (int i = 0; i < kJoints; ++i) put(num(r.u[i]));
    put(to_string(r.status));
    put(std::to_string(r.iterations));
    put(num(r.k_f));
    put(num(r.q_factor));
    put(num(r.r_factor));
    put(num(r.covariance_trace));
    if (with_timing) put(num(r.solve_time));
    const bool has_obs = next_obs < log.observations.size() && log.observations[next_obs].tick == static_cast<int>(t);
    for (int i = 0; i < kObsDim; ++i) put(has_obs ? num(log.observations[next_obs].raw[i]) : "");
    for (int i = 0; i < kObsDim; ++i) put(has_obs ? num(log.observations[next_obs].noisy[i]) : "");
    if (has_obs) ++next_obs;
    os << line << '\n';
  }
}

inline std::map<std::string, std::string> trial_metadata(const TrialLog& log) {
  using io_detail::num;
  std::map<std::string, std::string> m;
  m["scenario"] = to_string(log.scenario.kind);
  m["stance"] = to_string(log.scenario.stance);
  m["treadmill_speed"] = num(log.scenario.treadmill_speed);
  m["duration"] = num(log.scenario.duration);
  m["condition"] = to_string(log.condition);
  m["seed"] = std::to_string(log.seed);
  m["config_hash"] = log.config_hash;
  m["control_rate"] = num(log.control_rate);
  m["obs_rate"] = num(log.obs_rate);
  m["total_mass"] = num(log.total_mass);
  m["ticks"] = std::to_string(log.ticks.size());
  m["observations"] = std::to_string(log.observations.size());
  m["safe_stops"] = std::to_string(log.safe_stops);
  m["degraded"] = std::to_string(log.degraded);
  m["clip_events"] = std::to_string(log.clip_events);
  return m;
}

inline void write_metadata(std::ostream& os, const std::map<std::string, std::string>& meta) {
  for (const auto& [k, v] : meta) os << k << " = " << v << '\n';
}

inline std::map<std::string, std::string> read_metadata(std::istream& is) {
  std::map<std::string, std::string> m;
  std::string line;
  while (std::getline(is, line)) {
    const auto eq = line.find(" = ");
    if (eq == std::string::npos) continue;
    m[line.substr(0, eq)] = line.substr(eq + 3);
  }
  return m;
}

/// Rebuilds the logged fields of a trial from its CSV and metadata.
inline TrialLog read_trial_csv(std::istream& csv, const std::map<std::string, std::string>& meta) {
  auto get = [&meta](const std::string& k) {
    const auto it = meta.find(k);
    if (it == meta.end()) throw InvalidInput("trial metadata: missing '" + k + "'");
    return it->second;
  };
  TrialLog log;
  log.scenario = TrialScenario::of(parse_scenario_kind(get("scenario")));
  log.scenario.treadmill_speed = std::stod(get("treadmill_speed"));
  log.scenario.duration = std::stod(get("duration"));
  log.condition = parse_condition(get("condition"));
  log.seed = std::stoull(get("seed"));
  log.config_hash = get("config_hash");
  log.control_rate = std::stod(get("control_rate"));
  log.obs_rate = std::stod(get("obs_rate"));
  log.total_mass = std::stod(get("total_mass"));
  log.safe_stops = std::stoi(get("safe_stops"));
  log.degraded = std::stoi(get("degraded"));
  log.clip_events = std::stoi(get("clip_events"));

  std::string header;
  if (!std::getline(csv, header)) throw InvalidInput("trial csv: missing header");
  std::vector<std::string> names;
  {
    std::stringstream ss(header);
    std::string h;
    while (std::getline(ss, h, ',')) names.push_back(h);
  }
  const bool timing = names == [] {
    std::vector<std::string> v;
    for (const auto& c : trial_columns(true)) v.push_back(c.header());
    return v;
  }();
  std::vector<std::string> expected;
  for (const auto& c : trial_columns(timing)) expected.push_back(c.header());
  if (names != expected) throw InvalidInput("trial csv: unexpected header");

  std::string line;
  int row = 0;
  while (std::getline(csv, line)) {
    std::vector<std::string> f;
    f.reserve(names.size());
    std::size_t start = 0;
    for (;;) {
      const auto comma = line.find(',', start);
      f.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (f.size() != names.size()) throw InvalidInput("trial csv: row " + std::to_string(row + 2) + " has wrong field count");
    std::size_t k = 0;
    auto d = [&]() {
      const std::string& s = f[k++];
      double v = 0.0;
      const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
      if (res.ec != std::errc()) throw InvalidInput("trial csv: bad number '" + s + "' in row " + std::to_string(row + 2));
      return v;
    };
    TickRecord r;
    r.time = d();
    for (int i = 0; i < kStateDim; ++i) r.truth[i] = d();
    for (int i = 0; i < kStateDim; ++i) r.estimate[i] = d();
    r.com_height = d();
    r.p_star_dot.x() = d();
    r.p_star_dot.y() = d();
    r.planner_value = d();
    for (int i = 0; i < kTaskDim; ++i) r.reference[i] = d();
    for (int i = 0; i < kJointState; ++i) r.joints[i] = d();
    for (int i = 0; i < kJoints; ++i) r.u[i] = d();
    const std::string& st = f[k++];
    r.status = st == "solved" ? MpcStatus::solved : (st == "degraded" ? MpcStatus::degraded : MpcStatus::safe_stop);
    r.iterations = static_cast<int>(d());
    r.k_f = d();
    r.q_factor = d();
    r.r_factor = d();
    r.covariance_trace = d();
    if (timing) r.solve_time = d();
    if (!f[k].empty()) {
      ObservationRecord o;
      o.tick = row;
      o.time = r.time;
      for (int i = 0; i < kObsDim; ++i) o.raw[i] = d();
      for (int i = 0; i < kObsDim; ++i) o.noisy[i] = d();
      log.observations.push_back(o);
    }
    log.ticks.push_back(r);
    ++row;
  }
  return log;
}

inline void write_summary_csv(std::ostream& os, const std::vector<Summary>& summaries,
                              const std::vector<std::pair<std::string, std::string>>& leading = {}) {
  using io_detail::num;
  for (const auto& [k, v] : leading) os << k << ',';
  os << "scenario[-],condition[-],trials[-],com_sup_mean[m],com_sup_sd[m],cop_sup_mean[m],cop_sup_sd[m],"
        "mean_u[rad/s^2],grf_center_x[N],grf_center_y[N],grf_major[N],grf_minor[N]\n";
  for (const auto& s : summaries)
    for (const auto& r : s.rows) {
      for (const auto& [k, v] : leading) os << v << ',';
      os << to_string(s.scenario) << ',' << to_string(r.condition) << ',' << r.trials << ',' << num(r.com_sup.mean)
         << ',' << num(r.com_sup.sd) << ',' << num(r.cop_sup.mean) << ',' << num(r.cop_sup.sd) << ','
         << num(r.mean_u.mean) << ',' << num(r.ellipse_center_x.mean) << ',' << num(r.ellipse_center_y.mean) << ','
         << num(r.ellipse_major.mean) << ',' << num(r.ellipse_minor.mean) << '\n';
    }
}

namespace svg_detail {

inline std::string f4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline const char* color(Condition c) {
  switch (c) {
    case Condition::honly: return "#1f77b4";
    case Condition::nocomp: return "#d62728";
    case Condition::comp: return "#2ca02c";
  }
  return "#000";
}

struct Frame {
  double x0, x1, y0, y1;
  double w = 640, h = 400, pad = 50;
  double px(double x) const { return pad + (x - x0) / (x1 - x0) * (w - 2 * pad); }
  double py(double y) const { return h - pad - (y - y0) / (y1 - y0) * (h - 2 * pad); }
};

inline void open(std::ostream& os, const Frame& f, const std::string& title, const std::string& xl, const std::string& yl) {
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << f.w << "\" height=\"" << f.h << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << f.w / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  os << "<line x1=\"" << f.pad << "\" y1=\"" << f.h - f.pad << "\" x2=\"" << f.w - f.pad << "\" y2=\"" << f.h - f.pad
     << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << f.pad << "\" y1=\"" << f.pad << "\" x2=\"" << f.pad << "\" y2=\"" << f.h - f.pad
     << "\" stroke=\"black\"/>\n";
  os << "<text x=\"" << f.w / 2 << "\" y=\"" << f.h - 10 << "\" text-anchor=\"middle\" font-size=\"12\">" << xl << "</text>\n";
  os << "<text x=\"12\" y=\"" << f.h / 2 << "\" font-size=\"12\" transform=\"rotate(-90 12 " << f.h / 2 << ")\">" << yl
     << "</text>\n";
  os << "<text x=\"" << f.pad << "\" y=\"" << f.h - f.pad + 15 << "\" font-size=\"10\">" << f4(f.x0) << "</text>\n";
  os << "<text x=\"" << f.w - f.pad << "\" y=\"" << f.h - f.pad + 15 << "\" font-size=\"10\" text-anchor=\"end\">"
     << f4(f.x1) << "</text>\n";
  os << "<text x=\"" << f.pad - 4 << "\" y=\"" << f.pad << "\" font-size=\"10\" text-anchor=\"end\">" << f4(f.y1) << "</text>\n";
  os << "<text x=\"" << f.pad - 4 << "\" y=\"" << f.h - f.pad << "\" font-size=\"10\" text-anchor=\"end\">" << f4(f.y0)
     << "</text>\n";
}

inline void legend(std::ostream& os, const Frame& f, const std::vector<Condition>& conds) {
  double y = f.pad;
  for (Condition c : conds) {
    os << "<text x=\"" << f.w - f.pad - 60 << "\" y=\"" << y << "\" font-size=\"11\" fill=\"" << color(c) << "\">"
       << to_string(c) << "</text>\n";
    y += 14;
  }
}

}  // namespace svg_detail

/// CoM-SUP distance (mm) against time, one polyline per condition.
inline void write_distance_svg(std::ostream& os, const std::vector<DistanceSeries>& series, const std::string& title) {
  using namespace svg_detail;
  double tmax = 0, dmax = 0;
  for (const auto& s : series) {
    if (!s.times.empty()) tmax = std::max(tmax, s.times.back());
    for (double v : s.values) dmax = std::max(dmax, 1e3 * v);
  }
  Frame f{0.0, tmax > 0 ? tmax : 1.0, 0.0, dmax > 0 ? 1.1 * dmax : 1.0};
  open(os, f, title, "time [s]", "distance [mm]");
  std::vector<Condition> conds;
  for (const auto& s : series) {
    conds.push_back(s.condition);
    os << "<polyline fill=\"none\" stroke-width=\"1.5\" stroke=\"" << color(s.condition) << "\" points=\"";
    const std::size_t stride = std::max<std::size_t>(1, s.values.size() / 500);
    for (std::size_t i = 0; i < s.values.size(); i += stride)
      os << f4(f.px(s.times[i])) << ',' << f4(f.py(1e3 * s.values[i])) << ' ';
    os << "\"/>\n";
  }
  legend(os, f, conds);
  os << "</svg>\n";
}

/// Horizontal GRF samples and fitted ellipses per condition.
inline void write_grf_svg(std::ostream& os, const std::vector<std::pair<Condition, std::vector<Vec2>>>& forces,
                          const std::vector<std::pair<Condition, ForceEllipse>>& ellipses, const std::string& title) {
  using namespace svg_detail;
  double lim = 1e-3;
  for (const auto& [c, fs] : forces)
    for (const auto& v : fs) lim = std::max(lim, v.cwiseAbs().maxCoeff());
  for (const auto& [c, e] : ellipses) lim = std::max(lim, e.center.cwiseAbs().maxCoeff() + e.semi_axes.x());
  lim *= 1.1;
  Frame f{-lim, lim, -lim, lim, 420, 420, 50};
  open(os, f, title, "GRF x [N]", "GRF y [N]");
  std::vector<Condition> conds;
  for (const auto& [c, fs] : forces) {
    conds.push_back(c);
    const std::size_t stride = std::max<std::size_t>(1, fs.size() / 300);
    for (std::size_t i = 0; i < fs.size(); i += stride)
      os << "<circle r=\"1.2\" fill=\"" << color(c) << "\" fill-opacity=\"0.4\" cx=\"" << f4(f.px(fs[i].x())) << "\" cy=\""
         << f4(f.py(fs[i].y())) << "\"/>\n";
  }
  const double scale = (f.w - 2 * f.pad) / (f.x1 - f.x0);
  for (const auto& [c, e] : ellipses) {
    os << "<ellipse fill=\"none\" stroke-width=\"2\" stroke=\"" << color(c) << "\" cx=\"" << f4(f.px(e.center.x()))
       << "\" cy=\"" << f4(f.py(e.center.y())) << "\" rx=\"" << f4(e.semi_axes.x() * scale) << "\" ry=\""
       << f4(e.semi_axes.y() * scale) << "\" transform=\"rotate(" << f4(-e.orientation * 180.0 / M_PI) << ' '
       << f4(f.px(e.center.x())) << ' ' << f4(f.py(e.center.y())) << ")\"/>\n";
  }
  legend(os, f, conds);
  os << "</svg>\n";
}

}  // namespace slbal
