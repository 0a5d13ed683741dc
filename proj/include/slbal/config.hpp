#pragma once

// Key-value run configuration.
//
//   # comment
//   mpc.horizon = 0.5
//   arm.home = 0, 1.2, 0, 1.9
//
// Every key is declared once in `schema()` with its unit and a description.
// Unknown keys, malformed values and duplicate keys within one file are errors.

#include <charconv>
#include <cstdint>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "slbal/errors.hpp"
#include "slbal/sim.hpp"

namespace slbal {

/// Error with a 1-based source position (line 0 for command-line overrides).
class ConfigError : public InvalidInput {
 public:
  ConfigError(const std::string& source, int line, int column, const std::string& msg)
      : InvalidInput(format(source, line, column, msg)), line_(line), column_(column) {}
  int line() const { return line_; }
  int column() const { return column_; }

 private:
  static std::string format(const std::string& source, int line, int column, const std::string& msg) {
    std::ostringstream os;
    os << source;
    if (line > 0) os << ':' << line << ':' << column;
    os << ": " << msg;
    return os.str();
  }
  int line_;
  int column_;
};

struct RunSettings {
  SimConfig sim;
  double treadmill_speed = 0.04;
  double duration = 7.5;
  double q_pos = 100.0;
  double q_vel = 10.0;
  double r = 0.1;
  double w = 0.01;

  TrialScenario scenario(ScenarioKind kind) const {
    TrialScenario s = TrialScenario::of(kind);
    s.treadmill_speed = treadmill_speed;
    s.duration = duration;
    return s;
  }

  /// Simulation config with the derived MPC matrices filled in.
  SimConfig sim_config() const {
    SimConfig c = sim;
    c.mpc.set_diagonal_weights(q_pos, q_vel, r, w);
    c.mpc.bounds = JointBounds::from_arms(c.arms);
    return c;
  }
};

namespace config_detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline double to_double(const std::string& s) {
  const std::string t = trim(s);
  double v = 0.0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size() || !std::isfinite(v))
    throw InvalidInput("expected a finite number, got '" + t + "'");
  return v;
}

inline long long to_int(const std::string& s) {
  const std::string t = trim(s);
  long long v = 0;
  const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
  if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size())
    throw InvalidInput("expected an integer, got '" + t + "'");
  return v;
}

inline bool to_bool(const std::string& s) {
  const std::string t = trim(s);
  if (t == "true" || t == "1") return true;
  if (t == "false" || t == "0") return false;
  throw InvalidInput("expected true or false, got '" + t + "'");
}

inline std::vector<double> to_list(const std::string& s, std::size_t n) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(to_double(item));
  if (out.size() != n) throw InvalidInput("expected " + std::to_string(n) + " comma-separated numbers");
  return out;
}

/// Shortest round-trip representation.
inline std::string fmt(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <int N>
std::string fmt(const Eigen::Matrix<double, N, 1>& v) {
  std::string s;
  for (int i = 0; i < N; ++i) s += (i ? ", " : "") + fmt(v[i]);
  return s;
}

}  // namespace config_detail

struct ConfigKey {
  std::string key;
  std::string unit;
  std::string doc;
  std::function<void(RunSettings&, const std::string&)> set;
  std::function<std::string(const RunSettings&)> get;
};

inline const std::vector<ConfigKey>& schema() {
  using namespace config_detail;
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    auto num = [&k](std::string key, std::string unit, std::string doc, auto member) {
      k.push_back({std::move(key), std::move(unit), std::move(doc),
                   [member](RunSettings& s, const std::string& v) { member(s) = to_double(v); },
                   [member](const RunSettings& s) {
                     RunSettings c = s;
                     return fmt(member(c));
                   }});
    };
    auto integer = [&k](std::string key, std::string unit, std::string doc, auto member) {
      k.push_back({std::move(key), std::move(unit), std::move(doc),
                   [member](RunSettings& s, const std::string& v) {
                     const long long x = to_int(v);
                     if (x < 0) throw InvalidInput("expected a non-negative integer");
                     member(s) = static_cast<std::remove_reference_t<decltype(member(s))>>(x);
                   },
                   [member](const RunSettings& s) {
                     RunSettings c = s;
                     return std::to_string(member(c));
                   }});
    };
    auto flag = [&k](std::string key, std::string doc, auto member) {
      k.push_back({std::move(key), "-", std::move(doc),
                   [member](RunSettings& s, const std::string& v) { member(s) = to_bool(v); },
                   [member](const RunSettings& s) {
                     RunSettings c = s;
                     return std::string(member(c) ? "true" : "false");
                   }});
    };
    auto vec = [&k](std::string key, std::string unit, std::string doc, auto member) {
      k.push_back({std::move(key), std::move(unit), std::move(doc),
                   [member](RunSettings& s, const std::string& v) {
                     auto& m = member(s);
                     const auto xs = to_list(v, static_cast<std::size_t>(m.size()));
                     for (int i = 0; i < m.size(); ++i) m[i] = xs[static_cast<std::size_t>(i)];
                   },
                   [member](const RunSettings& s) {
                     RunSettings c = s;
                     return fmt(member(c));
                   }});
    };
    // Arm keys write both arms; the right arm mirrors the left mount across the sagittal plane.
    auto arm_num = [&k](std::string key, std::string unit, std::string doc, auto member) {
      k.push_back({std::move(key), std::move(unit), std::move(doc),
                   [member](RunSettings& s, const std::string& v) {
                     const double x = to_double(v);
                     for (auto& a : s.sim.arms) member(a) = x;
                   },
                   [member](const RunSettings& s) {
                     SlArmModel a = s.sim.arms[0];
                     return fmt(member(a));
                   }});
    };
    auto arm_vec = [&k](std::string key, std::string unit, std::string doc, auto member) {
      k.push_back({std::move(key), std::move(unit), std::move(doc),
                   [member](RunSettings& s, const std::string& v) {
                     const auto xs = to_list(v, kArmJoints);
                     for (auto& a : s.sim.arms)
                       for (int i = 0; i < kArmJoints; ++i) member(a)[i] = xs[static_cast<std::size_t>(i)];
                   },
                   [member](const RunSettings& s) {
                     SlArmModel a = s.sim.arms[0];
                     return fmt<kArmJoints>(member(a));
                   }});
    };

    num("sim.control_rate", "Hz", "control loop rate", [](RunSettings& s) -> double& { return s.sim.control_rate; });
    num("sim.obs_rate", "Hz", "marker observation rate; must divide the control rate", [](RunSettings& s) -> double& { return s.sim.obs_rate; });
    num("sim.noise_sigma", "m", "marker noise standard deviation", [](RunSettings& s) -> double& { return s.sim.noise_sigma; });
    integer("sim.seed", "-", "noise generator seed (overridden by --seed)", [](RunSettings& s) -> std::uint64_t& { return s.sim.seed; });

    num("scenario.treadmill_speed", "m/s", "treadmill belt speed driving the bow", [](RunSettings& s) -> double& { return s.treadmill_speed; });
    num("scenario.duration", "s", "trial length", [](RunSettings& s) -> double& { return s.duration; });

    num("anthro.body_mass", "kg", "participant body mass", [](RunSettings& s) -> double& { return s.sim.anthro.body_mass; });
    num("anthro.body_height", "m", "participant height", [](RunSettings& s) -> double& { return s.sim.anthro.body_height; });
    num("anthro.trunk_mass_fraction", "-", "trunk share of body mass", [](RunSettings& s) -> double& { return s.sim.anthro.trunk_mass_fraction; });
    num("anthro.legs_mass_fraction", "-", "legs share of body mass", [](RunSettings& s) -> double& { return s.sim.anthro.legs_mass_fraction; });
    num("anthro.trunk_com_ratio", "-", "trunk CoM position along the trunk from the hips", [](RunSettings& s) -> double& { return s.sim.anthro.trunk_com_ratio; });
    num("anthro.trunk_length", "m", "hip to shoulder-line distance", [](RunSettings& s) -> double& { return s.sim.anthro.trunk_length; });
    num("anthro.hip_height_ratio", "-", "hip height over body height", [](RunSettings& s) -> double& { return s.sim.anthro.hip_height_ratio; });
    num("anthro.legs_com_ratio", "-", "legs CoM height over hip height", [](RunSettings& s) -> double& { return s.sim.anthro.legs_com_ratio; });
    num("anthro.hip_width", "m", "distance between hip joint centers", [](RunSettings& s) -> double& { return s.sim.anthro.hip_width; });
    num("anthro.backpack_mass", "kg", "fixed backpack mass without the arms", [](RunSettings& s) -> double& { return s.sim.anthro.backpack_mass; });
    vec("anthro.backpack_com", "m", "backpack CoM in the trunk frame (x, y, z) from the hip midpoint", [](RunSettings& s) -> Vec3& { return s.sim.anthro.backpack_com_offset; });

    k.push_back({"arm.mount", "m", "left arm base in the trunk frame (x, y, z); the right arm uses (x, -y, z)",
                 [](RunSettings& s, const std::string& v) {
                   const auto xs = to_list(v, 3);
                   s.sim.arms[0].mount_pose.translation() = Vec3(xs[0], xs[1], xs[2]);
                   s.sim.arms[1].mount_pose.translation() = Vec3(xs[0], -xs[1], xs[2]);
                 },
                 [](const RunSettings& s) { return fmt<3>(Vec3(s.sim.arms[0].mount_pose.translation())); }});
    arm_num("arm.upper_length", "m", "shoulder to elbow", [](SlArmModel& a) -> double& { return a.upper_length; });
    arm_num("arm.fore_length", "m", "elbow to wrist", [](SlArmModel& a) -> double& { return a.fore_length; });
    arm_num("arm.upper_mass", "kg", "upper link mass", [](SlArmModel& a) -> double& { return a.upper_mass; });
    arm_num("arm.fore_mass", "kg", "fore link mass", [](SlArmModel& a) -> double& { return a.fore_mass; });
    arm_vec("arm.q_min", "rad", "lower joint limits (yaw, pitch, roll, elbow)", [](SlArmModel& a) -> JointVec& { return a.q_min; });
    arm_vec("arm.q_max", "rad", "upper joint limits", [](SlArmModel& a) -> JointVec& { return a.q_max; });
    arm_vec("arm.qd_max", "rad/s", "joint speed limits", [](SlArmModel& a) -> JointVec& { return a.qd_max; });
    arm_vec("arm.qdd_max", "rad/s^2", "joint acceleration limits", [](SlArmModel& a) -> JointVec& { return a.qdd_max; });
    vec("arm.home", "rad", "initial joint pose of both arms, held in nocomp", [](RunSettings& s) -> JointVec& { return s.sim.home; });

    num("planner.gamma", "1/m^2", "CoM-SUP distance weight", [](RunSettings& s) -> double& { return s.sim.planner.gamma; });
    num("planner.zeta", "s^2/m^2", "CoM velocity weight", [](RunSettings& s) -> double& { return s.sim.planner.zeta; });
    num("planner.step", "s", "planning step", [](RunSettings& s) -> double& { return s.sim.planner.step; });
    num("planner.v_max", "m/s", "commanded CoM speed limit", [](RunSettings& s) -> double& { return s.sim.planner.v_max; });

    num("mpc.horizon", "s", "prediction horizon", [](RunSettings& s) -> double& { return s.sim.mpc.horizon; });
    integer("mpc.n_steps", "-", "horizon samples", [](RunSettings& s) -> int& { return s.sim.mpc.n_steps; });
    num("mpc.q_pos", "1/m^2", "elbow/wrist position tracking weight", [](RunSettings& s) -> double& { return s.q_pos; });
    num("mpc.q_vel", "s^2/m^2", "elbow/wrist velocity tracking weight", [](RunSettings& s) -> double& { return s.q_vel; });
    num("mpc.r", "s^4/rad^2", "joint acceleration weight", [](RunSettings& s) -> double& { return s.r; });
    num("mpc.w", "s^6/rad^2", "joint jerk weight", [](RunSettings& s) -> double& { return s.w; });
    num("mpc.k0", "-", "Kalman gain norm at which tracking weights vanish", [](RunSettings& s) -> double& { return s.sim.mpc.k0; });
    num("mpc.epsilon_q", "-", "floor of the tracking weight factor", [](RunSettings& s) -> double& { return s.sim.mpc.epsilon_q; });

    integer("qp.max_iters", "-", "ADMM iteration cap per solve", [](RunSettings& s) -> int& { return s.sim.mpc.qp.max_iters; });
    num("qp.tol", "-", "primal/dual residual tolerance", [](RunSettings& s) -> double& { return s.sim.mpc.qp.tol; });
    num("qp.rho", "-", "initial ADMM penalty", [](RunSettings& s) -> double& { return s.sim.mpc.qp.rho; });
    num("qp.sigma", "-", "primal regularisation", [](RunSettings& s) -> double& { return s.sim.mpc.qp.sigma; });
    num("qp.alpha", "-", "over-relaxation factor in (0, 2)", [](RunSettings& s) -> double& { return s.sim.mpc.qp.alpha; });
    flag("qp.scaling", "Ruiz equilibration", [](RunSettings& s) -> bool& { return s.sim.mpc.qp.scaling; });
    flag("qp.adaptive_rho", "residual-balancing penalty updates", [](RunSettings& s) -> bool& { return s.sim.mpc.qp.adaptive_rho; });
    flag("qp.polish", "active-set refinement of converged solutions", [](RunSettings& s) -> bool& { return s.sim.mpc.qp.polish; });

    num("estimator.q_com", "m^2/s^3", "white-acceleration intensity, system CoM", [](RunSettings& s) -> double& { return s.sim.estimator.q_com; });
    num("estimator.q_sup", "m^2/s^3", "white-acceleration intensity, support center", [](RunSettings& s) -> double& { return s.sim.estimator.q_sup; });
    num("estimator.q_hcom", "m^2/s^3", "white-acceleration intensity, human CoM", [](RunSettings& s) -> double& { return s.sim.estimator.q_hcom; });
    num("estimator.q_sl", "m^2/s^3", "white-acceleration intensity, arm points", [](RunSettings& s) -> double& { return s.sim.estimator.q_sl; });
    num("estimator.measurement_sigma", "m", "assumed marker noise", [](RunSettings& s) -> double& { return s.sim.estimator.measurement_sigma; });
    num("estimator.initial_pos_sigma", "m", "prior position standard deviation", [](RunSettings& s) -> double& { return s.sim.estimator.initial_pos_sigma; });
    num("estimator.initial_vel_sigma", "m/s", "prior velocity standard deviation", [](RunSettings& s) -> double& { return s.sim.estimator.initial_vel_sigma; });
    return k;
  }();
  return keys;
}

inline const ConfigKey* find_key(const std::string& key) {
  for (const auto& k : schema())
    if (k.key == key) return &k;
  return nullptr;
}

/// Applies one "key = value" assignment; `source`, `line` and `column` locate errors.
inline void apply_assignment(RunSettings& s, const std::string& text, const std::string& source, int line) {
  const auto eq = text.find('=');
  if (eq == std::string::npos) throw ConfigError(source, line, 1, "expected 'key = value'");
  const std::string key = config_detail::trim(text.substr(0, eq));
  const std::string value = config_detail::trim(text.substr(eq + 1));
  const int key_col = static_cast<int>(text.find_first_not_of(" \t")) + 1;
  const int value_col = static_cast<int>(text.find_first_not_of(" \t", eq + 1)) + 1;
  const ConfigKey* k = find_key(key);
  if (!k) throw ConfigError(source, line, key_col, "unknown key '" + key + "'");
  try {
    k->set(s, value);
  } catch (const InvalidInput& e) {
    throw ConfigError(source, line, value_col > 0 ? value_col : static_cast<int>(eq) + 2, key + ": " + e.what());
  }
}

inline void apply_config_text(RunSettings& s, std::istream& in, const std::string& source) {
  std::string raw;
  std::vector<std::string> seen;
  for (int line = 1; std::getline(in, raw); ++line) {
    const auto hash = raw.find('#');
    const std::string body = hash == std::string::npos ? raw : raw.substr(0, hash);
    if (config_detail::trim(body).empty()) continue;
    const auto eq = body.find('=');
    if (eq != std::string::npos) {
      const std::string key = config_detail::trim(body.substr(0, eq));
      if (std::find(seen.begin(), seen.end(), key) != seen.end())
        throw ConfigError(source, line, static_cast<int>(body.find_first_not_of(" \t")) + 1, "duplicate key '" + key + "'");
      seen.push_back(key);
    }
    apply_assignment(s, body, source, line);
  }
}

inline void apply_config_file(RunSettings& s, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, 0, 0, "cannot open config file");
  apply_config_text(s, in, path);
}

/// Canonical dump: every schema key in declaration order, "key = value".
inline std::string dump_config(const RunSettings& s) {
  std::string out;
  for (const auto& k : schema()) out += k.key + " = " + k.get(s) + "\n";
  return out;
}

/// FNV-1a over the canonical dump, as 16 hex digits.
inline std::string config_hash(const RunSettings& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : dump_config(s)) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace slbal
