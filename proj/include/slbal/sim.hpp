#pragma once

// Closed-loop trial simulation: prescribed human bow, double-integrator arms,
// noisy 100 Hz position markers and the 1 kHz estimator/planner/MPC loop.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "slbal/errors.hpp"
#include "slbal/estimator.hpp"
#include "slbal/model.hpp"
#include "slbal/mpc.hpp"
#include "slbal/planner.hpp"

namespace slbal {

enum class ScenarioKind { frontal_bow, lateral_bow };
enum class Stance { side_by_side, in_line };
enum class Condition { honly, nocomp, comp };

inline const char* to_string(ScenarioKind k) { return k == ScenarioKind::frontal_bow ? "frontal" : "lateral"; }
inline const char* to_string(Stance s) { return s == Stance::side_by_side ? "side_by_side" : "in_line"; }
inline const char* to_string(Condition c) {
  switch (c) {
    case Condition::honly: return "honly";
    case Condition::nocomp: return "nocomp";
    case Condition::comp: return "comp";
  }
  return "?";
}

inline ScenarioKind parse_scenario_kind(const std::string& s) {
  if (s == "frontal") return ScenarioKind::frontal_bow;
  if (s == "lateral") return ScenarioKind::lateral_bow;
  throw InvalidInput("unknown scenario '" + s + "' (expected frontal or lateral)");
}

inline Condition parse_condition(const std::string& s) {
  if (s == "honly") return Condition::honly;
  if (s == "nocomp") return Condition::nocomp;
  if (s == "comp") return Condition::comp;
  throw InvalidInput("unknown condition '" + s + "' (expected honly, nocomp or comp)");
}

inline constexpr std::array<Condition, 3> kAllConditions{Condition::honly, Condition::nocomp, Condition::comp};

struct TrialScenario {
  ScenarioKind kind = ScenarioKind::frontal_bow;
  double treadmill_speed = 0.04;  // m/s
  double duration = 7.5;          // s
  // The narrow in-line stance of the lateral trials only changes which way
  // the trunk tips relative to the feet; the kinematic plant keeps the hips.
  Stance stance = Stance::side_by_side;

  static TrialScenario frontal() { return {}; }
  static TrialScenario lateral() { return {ScenarioKind::lateral_bow, 0.04, 7.5, Stance::in_line}; }
  static TrialScenario of(ScenarioKind k) { return k == ScenarioKind::frontal_bow ? frontal() : lateral(); }

  void validate() const {
    if (!(duration > 0) || !std::isfinite(duration)) throw InvalidInput("scenario: duration must be positive");
    if (!(treadmill_speed >= 0) || !std::isfinite(treadmill_speed))
      throw InvalidInput("scenario: treadmill speed must be non-negative");
  }
};

struct SimConfig {
  double control_rate = 1000.0;  // Hz
  double obs_rate = 100.0;       // Hz
  double noise_sigma = 1e-3;     // m
  std::uint64_t seed = 1;
  AnthropometricParams anthro;
  ArmPair arms = default_arms();
  JointVec home = JointVec(0.0, 1.2, 0.0, 1.9);  // rad, both arms; passive pose in nocomp
  PlannerWeights planner;
  MpcConfig mpc = MpcConfig::defaults();
  EstimatorNoise estimator;

  int obs_every() const { return static_cast<int>(std::lround(control_rate / obs_rate)); }

  void validate() const {
    if (!(control_rate > 0) || !(obs_rate > 0) || obs_rate > control_rate)
      throw InvalidInput("sim: rates must be positive with obs_rate <= control_rate");
    const double ratio = control_rate / obs_rate;
    if (std::abs(ratio - std::round(ratio)) > 1e-9) throw InvalidInput("sim: control_rate must be a multiple of obs_rate");
    if (!(noise_sigma >= 0)) throw InvalidInput("sim: noise_sigma must be non-negative");
    anthro.validate();
    for (const auto& a : arms) {
      a.validate();
      if (!a.within_limits(home)) throw InvalidInput("sim: home pose outside joint limits");
    }
    planner.validate();
    estimator.validate();
    MpcConfig m = mpc;
    m.bounds = JointBounds::from_arms(arms);
    m.validate();
  }
};

/// Trunk lean so that the top of the trunk follows a point receding at the treadmill speed.
inline double bow_angle(const TrialScenario& sc, double t, const AnthropometricParams& anthro) {
  return std::asin(std::min(1.0, sc.treadmill_speed * t / anthro.trunk_length));
}

inline double bow_rate(const TrialScenario& sc, double t, const AnthropometricParams& anthro) {
  const double s = sc.treadmill_speed * t / anthro.trunk_length;
  if (s >= 1.0) return 0.0;
  return sc.treadmill_speed / anthro.trunk_length / std::sqrt(1.0 - s * s);
}

/// Unit axis of the lean: pitch forward (frontal) or roll to the right (lateral).
inline Vec3 bow_axis(const TrialScenario& sc) { return sc.kind == ScenarioKind::frontal_bow ? Vec3::UnitY() : Vec3::UnitX(); }

inline HumanKinematicState bow_trajectory(const TrialScenario& sc, double t, const AnthropometricParams& anthro) {
  if (!(t >= 0) || t > sc.duration * (1 + 1e-12)) throw InvalidInput("bow_trajectory: t outside [0, duration]");
  HumanKinematicState h;
  const double z = anthro.hip_height();
  h.hip_left = Vec3(0, 0.5 * anthro.hip_width, z);
  h.hip_right = Vec3(0, -0.5 * anthro.hip_width, z);
  const double th = bow_angle(sc, t, anthro);
  h.trunk_orientation = Eigen::AngleAxisd(th, bow_axis(sc)).toRotationMatrix();
  h.treadmill_offset = sc.treadmill_speed * t;
  return h;
}

/// Human and arm models actually carried in a condition (honly: no backpack, massless arms).
inline AnthropometricParams condition_anthro(const AnthropometricParams& a, Condition c) {
  AnthropometricParams out = a;
  if (c == Condition::honly) out.backpack_mass = 0.0;
  return out;
}

inline ArmPair condition_arms(const ArmPair& arms, Condition c) {
  ArmPair out = arms;
  if (c == Condition::honly)
    for (auto& a : out) a.upper_mass = a.fore_mass = 0.0;
  return out;
}

struct PlantState {
  double time = 0.0;
  HumanKinematicState human;
  double trunk_rate = 0.0;  // rad/s about bow_axis
  SlJointState joints = SlJointState::Zero();
  int clip_events = 0;
};

inline PlantState initial_plant(const TrialScenario& sc, const SimConfig& cfg) {
  PlantState p;
  p.human = bow_trajectory(sc, 0.0, cfg.anthro);
  p.trunk_rate = bow_rate(sc, 0.0, cfg.anthro);
  for (int a = 0; a < kArms; ++a) p.joints.segment<kArmJoints>(joints::q_index(a)) = cfg.home;
  return p;
}

/// Advances the arms by the exact double integrator and re-poses the human at t + dt.
/// Frozen conditions ignore u. Positions and velocities are clipped to the arm limits.
inline PlantState step_plant(PlantState plant, const Vec8& u, double dt, const TrialScenario& sc,
                             const AnthropometricParams& anthro, const ArmPair& arms, Condition cond) {
  if (cond == Condition::comp) {
    for (int i = 0; i < kJoints; ++i) {
      const int a = i / kArmJoints, j = i % kArmJoints;
      double& q = plant.joints[joints::q_of(i)];
      double& qd = plant.joints[joints::qd_of(i)];
      q += qd * dt + 0.5 * u[i] * dt * dt;
      qd += u[i] * dt;
      const double lo = arms[a].q_min[j], hi = arms[a].q_max[j], vmax = arms[a].qd_max[j];
      if (q < lo || q > hi) {
        q = std::clamp(q, lo, hi);
        qd = 0.0;
        ++plant.clip_events;
      }
      if (std::abs(qd) > vmax) {
        qd = std::clamp(qd, -vmax, vmax);
        ++plant.clip_events;
      }
    }
  }
  plant.time += dt;
  const double t = std::min(plant.time, sc.duration);
  plant.human = bow_trajectory(sc, t, anthro);
  plant.trunk_rate = bow_rate(sc, t, anthro);
  return plant;
}

struct TrueState {
  StateVector48 x = StateVector48::Zero();
  SystemComBreakdown com;
  Vec3 com_velocity = Vec3::Zero();
};

/// Exact state of the plant in the estimator layout, velocities included.
inline TrueState true_state(const PlantState& plant, const TrialScenario& sc, const AnthropometricParams& anthro,
                            const ArmPair& arms) {
  TrueState ts;
  const Pose trunk = plant.human.trunk_pose();
  const Vec3 hips = plant.human.hip_center();
  const Vec3 omega = plant.trunk_rate * bow_axis(sc);
  const JointVec ql = joints::q(plant.joints, 0), qr = joints::q(plant.joints, 1);
  ts.com = system_com(plant.human, anthro, arms, ql, qr);

  // Trunk and backpack rotate about the hips; legs are static.
  const Vec3 trunk_c = trunk.linear() * Vec3(0, 0, anthro.trunk_com_ratio * anthro.trunk_length);
  const Vec3 pack_c = trunk.linear() * anthro.backpack_com_offset;
  const Vec3 v_h = omega.cross(anthro.trunk_mass() * trunk_c + anthro.backpack_mass * pack_c) / ts.com.human_mass;

  StateVector48& x = ts.x;
  Vec3 moment_rate = ts.com.human_mass * v_h;
  for (int a = 0; a < kArms; ++a) {
    const auto pts = sl_forward_kinematics(joints::q(plant.joints, a), arms[a], trunk);
    const Eigen::Matrix<double, 6, 1> jv = sl_task_jacobian(joints::q(plant.joints, a), arms[a], trunk) *
                                           joints::qd(plant.joints, a);
    const Vec3 vs = omega.cross(pts.shoulder - hips);
    const Vec3 ve = omega.cross(pts.elbow - hips) + jv.head<3>();
    const Vec3 vw = omega.cross(pts.wrist - hips) + jv.tail<3>();
    x.segment<3>(layout::arm_point(a, layout::kShoulder)) = pts.shoulder;
    x.segment<3>(layout::arm_point(a, layout::kElbow)) = pts.elbow;
    x.segment<3>(layout::arm_point(a, layout::kWrist)) = pts.wrist;
    x.segment<3>(layout::arm_point_vel(a, layout::kShoulder)) = vs;
    x.segment<3>(layout::arm_point_vel(a, layout::kElbow)) = ve;
    x.segment<3>(layout::arm_point_vel(a, layout::kWrist)) = vw;
    const auto c = lump_coefficients(arms[a]);
    moment_rate += c.shoulder * vs + c.elbow * ve + c.wrist * vw;
  }
  ts.com_velocity = moment_rate / ts.com.total_mass;
  x.segment<2>(layout::kCom) = ts.com.total_com_xy;
  x.segment<2>(layout::kComVel) = horizontal(ts.com_velocity);
  x.segment<2>(layout::kSup) = sup_center(plant.human.hip_left, plant.human.hip_right);
  x.segment<2>(layout::kSupVel).setZero();
  x.segment<2>(layout::kHcom) = horizontal(ts.com.human_com);
  x.segment<2>(layout::kHcomVel) = horizontal(v_h);
  return ts;
}

/// True marker positions plus i.i.d. Gaussian noise drawn from `rng`.
inline Observation observe(const StateVector48& truth, double time, double noise_sigma, std::mt19937_64& rng) {
  Observation z;
  z.time = time;
  z.positions = state48::positions(truth);
  if (noise_sigma > 0) {
    std::normal_distribution<double> n(0.0, noise_sigma);
    for (int k = 0; k < kObsDim; ++k) z.positions[k] += n(rng);
  }
  return z;
}

/// Horizontal ground reaction force of the whole system.
inline Vec2 grf_proxy(const Vec2& com_accel_xy, double total_mass) { return total_mass * com_accel_xy; }

/// Linear inverted pendulum center of pressure.
inline Vec2 cop_proxy(const Vec2& com_xy, const Vec2& com_accel_xy, double com_height) {
  if (!(com_height > 0)) throw InvalidInput("cop_proxy: com_height must be positive");
  return com_xy - (com_height / kGravity) * com_accel_xy;
}

struct TickRecord {
  double time = 0.0;
  StateVector48 truth = StateVector48::Zero();
  StateVector48 estimate = StateVector48::Zero();
  double com_height = 0.0;  // m, true system CoM
  Vec2 p_star_dot = Vec2::Zero();
  double planner_value = 0.0;
  Vec24 reference = Vec24::Zero();  // first horizon sample
  SlJointState joints = SlJointState::Zero();
  Vec8 u = Vec8::Zero();
  MpcStatus status = MpcStatus::solved;
  double solve_time = 0.0;
  int iterations = 0;
  double k_f = 0.0;
  double q_factor = 1.0;
  double r_factor = 1.0;
  double covariance_trace = 0.0;
};

struct ObservationRecord {
  int tick = 0;
  double time = 0.0;
  ObsVector raw = ObsVector::Zero();
  ObsVector noisy = ObsVector::Zero();
};

struct TrialLog {
  TrialScenario scenario;
  Condition condition = Condition::honly;
  std::uint64_t seed = 0;
  std::string config_hash;
  double control_rate = 0.0;
  double obs_rate = 0.0;
  double total_mass = 0.0;
  std::vector<TickRecord> ticks;
  std::vector<ObservationRecord> observations;
  int safe_stops = 0;
  int degraded = 0;
  int clip_events = 0;
};

/// Called after every controller solve with the controller that produced it.
using MpcObserver = std::function<void(const TickRecord&, const MpcController&)>;

inline TrialLog run_trial(const TrialScenario& sc, Condition cond, const SimConfig& cfg,
                          const MpcObserver& on_solve = nullptr) {
  sc.validate();
  cfg.validate();
  const AnthropometricParams anthro = condition_anthro(cfg.anthro, cond);
  const ArmPair arms = condition_arms(cfg.arms, cond);
  const double dt = 1.0 / cfg.control_rate;
  const int obs_every = cfg.obs_every();
  const long n_ticks = std::lround(sc.duration * cfg.control_rate);

  MpcConfig mcfg = cfg.mpc;
  mcfg.bounds = JointBounds::from_arms(cfg.arms);
  std::optional<MpcController> controller;
  if (cond == Condition::comp) controller.emplace(mcfg);
  const double dt_mpc = mcfg.dt();

  TrialLog log;
  log.scenario = sc;
  log.condition = cond;
  log.seed = cfg.seed;
  log.control_rate = cfg.control_rate;
  log.obs_rate = cfg.obs_rate;
  log.total_mass = anthro.human_mass() + arms[0].mass() + arms[1].mass();
  log.ticks.reserve(static_cast<std::size_t>(n_ticks));
  log.observations.reserve(static_cast<std::size_t>(n_ticks / obs_every + 1));

  std::mt19937_64 rng(cfg.seed);
  PlantState plant = initial_plant(sc, cfg);
  EstimatorState est;

  for (long i = 0; i < n_ticks; ++i) {
    const double t = static_cast<double>(i) * dt;
    plant.time = t;  // avoid accumulating rounding from repeated += dt
    const TrueState truth = true_state(plant, sc, anthro, arms);

    if (i > 0) est = lqe_predict(est, dt);
    if (i % obs_every == 0) {
      const Observation z = observe(truth.x, t, cfg.noise_sigma, rng);
      if (i == 0) est = make_estimator(z, cfg.estimator);
      est = lqe_update(est, z);
      log.observations.push_back({static_cast<int>(i), t, state48::positions(truth.x), z.positions});
    }

    TickRecord rec;
    rec.time = t;
    rec.truth = truth.x;
    rec.estimate = est.x_hat;
    rec.com_height = truth.com.total_com.z();
    rec.joints = plant.joints;
    rec.k_f = kalman_gain_norm(est);
    rec.covariance_trace = est.covariance.trace();

    Vec8 u = Vec8::Zero();
    if (controller) {
      const ComCommand cmd = optimal_com_velocity(state48::com(est.x_hat), state48::sup(est.x_hat), cfg.planner);
      const auto predicted = predict_horizon(est, mcfg.horizon, mcfg.n_steps);
      const Pose trunk = plant.human.trunk_pose();
      const std::array<Vec3, kArms> drift{state48::point_vel(est.x_hat, 0, layout::kShoulder),
                                          state48::point_vel(est.x_hat, 1, layout::kShoulder)};
      const TaskLinearization kin = linearize_task(plant.joints, arms, trunk, drift);
      const ReferenceTrajectory ref = reference_from_com_command(cmd, predicted, dt_mpc, truth.com, arms, kin.y0);
      const ControlCommand cc = controller->step(est, plant.joints, ref, kin, dt);
      u = cc.u;
      rec.p_star_dot = cmd.p_star_dot;
      rec.planner_value = cmd.value;
      rec.reference = ref.samples.front();
      rec.status = cc.status;
      rec.solve_time = cc.solve_time;
      rec.iterations = cc.iterations;
      rec.q_factor = cc.q_factor;
      rec.r_factor = cc.r_factor;
      if (cc.status == MpcStatus::safe_stop) ++log.safe_stops;
      if (cc.status == MpcStatus::degraded) ++log.degraded;
    } else {
      const auto f = weight_factors(rec.k_f, mcfg.k0, mcfg.epsilon_q);
      rec.q_factor = f.q_factor;
      rec.r_factor = f.r_factor;
    }
    rec.u = u;

    if (controller && on_solve) on_solve(rec, *controller);
    log.ticks.push_back(rec);
    plant = step_plant(plant, u, dt, sc, anthro, cfg.arms, cond);
  }
  log.clip_events = plant.clip_events;
  return log;
}

}  // namespace slbal
