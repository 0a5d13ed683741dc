#pragma once

// Receding-horizon tracking of the elbow/wrist references.
//
// Joints follow a double integrator (s = [q1, q1_dot, q2, q2_dot], u = joint
// accelerations). Task outputs are linearised once per solve around the
// current joints, states are eliminated through the dynamics (condensed QP)
// and the tracking/effort weights are scheduled on the Kalman gain norm.

#include <array>
#include <chrono>
#include <optional>
#include <utility>

#include "slbal/errors.hpp"
#include "slbal/estimator.hpp"
#include "slbal/model.hpp"
#include "slbal/planner.hpp"
#include "slbal/qp.hpp"

namespace slbal {

using SlJointState = Eigen::Matrix<double, kJointState, 1>;
using Mat16 = Eigen::Matrix<double, kJointState, kJointState>;
using Mat16x8 = Eigen::Matrix<double, kJointState, kJoints>;

namespace joints {
inline constexpr int q_index(int arm) { return 2 * kArmJoints * arm; }
inline constexpr int qd_index(int arm) { return 2 * kArmJoints * arm + kArmJoints; }
inline JointVec q(const SlJointState& s, int arm) { return s.segment<kArmJoints>(q_index(arm)); }
inline JointVec qd(const SlJointState& s, int arm) { return s.segment<kArmJoints>(qd_index(arm)); }
/// Position (or velocity) of flat joint i in 0..7 inside s.
inline constexpr int q_of(int i) { return q_index(i / kArmJoints) + i % kArmJoints; }
inline constexpr int qd_of(int i) { return qd_index(i / kArmJoints) + i % kArmJoints; }
}  // namespace joints

/// Flat 8-joint limits assembled from the two arms.
struct JointBounds {
  Vec8 q_min, q_max, qd_max, qdd_max;

  static JointBounds from_arms(const ArmPair& arms) {
    JointBounds b;
    for (int a = 0; a < kArms; ++a) {
      b.q_min.segment<kArmJoints>(kArmJoints * a) = arms[a].q_min;
      b.q_max.segment<kArmJoints>(kArmJoints * a) = arms[a].q_max;
      b.qd_max.segment<kArmJoints>(kArmJoints * a) = arms[a].qd_max;
      b.qdd_max.segment<kArmJoints>(kArmJoints * a) = arms[a].qdd_max;
    }
    return b;
  }
};

struct MpcConfig {
  double horizon = 0.5;  // s
  int n_steps = 10;
  Mat24 Q0 = Mat24::Identity();
  Mat8 R0 = Mat8::Identity();
  Mat8 W = Mat8::Identity();
  double k0 = 4.0;
  double epsilon_q = 0.05;
  JointBounds bounds = JointBounds::from_arms(default_arms());
  QpSettings qp;

  double dt() const { return horizon / n_steps; }

  /// Diagonal weights: position rows of Q0 get q_pos, velocity rows q_vel.
  void set_diagonal_weights(double q_pos, double q_vel, double r, double w) {
    Q0.setZero();
    for (int a = 0; a < kArms; ++a)
      for (int off : {task::elbow(a), task::wrist(a)})
        for (int i = 0; i < 3; ++i) {
          Q0(off + i, off + i) = q_pos;
          Q0(off + 3 + i, off + 3 + i) = q_vel;
        }
    R0 = r * Mat8::Identity();
    W = w * Mat8::Identity();
  }

  static MpcConfig defaults(const ArmPair& arms = default_arms()) {
    MpcConfig c;
    c.set_diagonal_weights(100.0, 10.0, 0.1, 0.01);
    c.bounds = JointBounds::from_arms(arms);
    c.qp.max_iters = 200;
    c.qp.polish = false;
    c.qp.scaling = false;
    return c;
  }

  void validate() const {
    if (!(horizon > 0) || n_steps < 2) throw InvalidInput("mpc: horizon must be positive and n_steps >= 2");
    if (!(k0 > 0) || !(epsilon_q > 0) || epsilon_q > 1) throw InvalidInput("mpc: k0 > 0 and epsilon_q in (0, 1] required");
    if (!Q0.allFinite() || !R0.allFinite() || !W.allFinite()) throw InvalidInput("mpc: non-finite weights");
    Eigen::SelfAdjointEigenSolver<Mat24> eq(0.5 * (Q0 + Q0.transpose()), Eigen::EigenvaluesOnly);
    Eigen::SelfAdjointEigenSolver<Mat8> er(0.5 * (R0 + R0.transpose()), Eigen::EigenvaluesOnly);
    Eigen::SelfAdjointEigenSolver<Mat8> ew(0.5 * (W + W.transpose()), Eigen::EigenvaluesOnly);
    if (eq.eigenvalues()[0] < -1e-12 || ew.eigenvalues()[0] < -1e-12) throw InvalidInput("mpc: Q0 and W must be PSD");
    if (er.eigenvalues()[0] <= 0) throw InvalidInput("mpc: R0 must be positive definite");
    const auto& b = bounds;
    if (!(b.q_min.array() < b.q_max.array()).all() || !(b.qd_max.array() > 0).all() || !(b.qdd_max.array() > 0).all() ||
        !b.q_min.allFinite() || !b.q_max.allFinite() || !b.qd_max.allFinite() || !b.qdd_max.allFinite())
      throw InvalidInput("mpc: invalid joint bounds");
  }
};

struct WeightFactors {
  double q_factor;
  double r_factor;
};

/// Q factor clamp(1 - k_f/k0, epsilon_q, 1), R factor 1 + k_f/k0.
inline WeightFactors weight_factors(double k_f, double k0, double epsilon_q) {
  if (!(k_f >= 0) || !(k0 > 0)) throw InvalidInput("adapt_weights: k_f >= 0 and k0 > 0 required");
  return {std::clamp(1.0 - k_f / k0, epsilon_q, 1.0), 1.0 + k_f / k0};
}

inline std::pair<Mat24, Mat8> adapt_weights(const Mat24& Q0, const Mat8& R0, double k_f, double k0, double epsilon_q) {
  const auto f = weight_factors(k_f, k0, epsilon_q);
  return {f.q_factor * Q0, f.r_factor * R0};
}

struct DiscreteDynamics {
  Mat16 A;
  Mat16x8 B;
};

/// Zero-order-hold double integrator: q+ = q + q_dot dt + u dt^2/2, q_dot+ = q_dot + u dt.
inline DiscreteDynamics discretize_dynamics(double dt) {
  if (!(dt > 0)) throw InvalidInput("discretize_dynamics: dt must be positive");
  DiscreteDynamics d{Mat16::Identity(), Mat16x8::Zero()};
  for (int i = 0; i < kJoints; ++i) {
    d.A(joints::q_of(i), joints::qd_of(i)) = dt;
    d.B(joints::q_of(i), i) = 0.5 * dt * dt;
    d.B(joints::qd_of(i), i) = dt;
  }
  return d;
}

/// First-order model of the task vector around the current joints:
/// positions  y0 + J (q - q0) + drift * t,  velocities  J q_dot + drift.
/// `drift` is the velocity the tracked points would have with frozen joints
/// (the trunk carrying the arms).
struct TaskLinearization {
  Vec24 y0 = Vec24::Zero();
  std::array<TaskJacobian, kArms> jac{TaskJacobian::Zero(), TaskJacobian::Zero()};
  std::array<JointVec, kArms> q0{JointVec::Zero(), JointVec::Zero()};
  std::array<Vec3, kArms> drift{Vec3::Zero(), Vec3::Zero()};
};

inline TaskLinearization linearize_task(const SlJointState& s, const ArmPair& arms, const Pose& trunk_pose,
                                        const std::array<Vec3, kArms>& drift = {Vec3::Zero(), Vec3::Zero()}) {
  TaskLinearization kin;
  kin.drift = drift;
  for (int a = 0; a < kArms; ++a) {
    const JointVec q = joints::q(s, a), qd = joints::qd(s, a);
    const auto pts = sl_forward_kinematics(q, arms[a], trunk_pose);
    kin.q0[a] = q;
    kin.jac[a] = sl_task_jacobian(q, arms[a], trunk_pose);
    const Eigen::Matrix<double, 6, 1> v = kin.jac[a] * qd;
    kin.y0.segment<3>(task::elbow(a)) = pts.elbow;
    kin.y0.segment<3>(task::elbow_vel(a)) = v.head<3>() + drift[a];
    kin.y0.segment<3>(task::wrist(a)) = pts.wrist;
    kin.y0.segment<3>(task::wrist_vel(a)) = v.tail<3>() + drift[a];
  }
  return kin;
}

namespace detail {

/// C such that the linear part of y is C s.
inline Eigen::Matrix<double, kTaskDim, kJointState> task_output_matrix(const TaskLinearization& kin) {
  Eigen::Matrix<double, kTaskDim, kJointState> c = Eigen::Matrix<double, kTaskDim, kJointState>::Zero();
  for (int a = 0; a < kArms; ++a) {
    const auto& j = kin.jac[a];
    c.block<3, kArmJoints>(task::elbow(a), joints::q_index(a)) = j.topRows<3>();
    c.block<3, kArmJoints>(task::elbow_vel(a), joints::qd_index(a)) = j.topRows<3>();
    c.block<3, kArmJoints>(task::wrist(a), joints::q_index(a)) = j.bottomRows<3>();
    c.block<3, kArmJoints>(task::wrist_vel(a), joints::qd_index(a)) = j.bottomRows<3>();
  }
  return c;
}

/// Affine part of y at time t.
inline Vec24 task_output_offset(const TaskLinearization& kin, double t) {
  Vec24 o = Vec24::Zero();
  for (int a = 0; a < kArms; ++a) {
    const auto& j = kin.jac[a];
    o.segment<3>(task::elbow(a)) = kin.y0.segment<3>(task::elbow(a)) - j.topRows<3>() * kin.q0[a] + kin.drift[a] * t;
    o.segment<3>(task::wrist(a)) = kin.y0.segment<3>(task::wrist(a)) - j.bottomRows<3>() * kin.q0[a] + kin.drift[a] * t;
    o.segment<3>(task::elbow_vel(a)) = kin.drift[a];
    o.segment<3>(task::wrist_vel(a)) = kin.drift[a];
  }
  return o;
}

}  // namespace detail

/// Condensed prediction: s_k = Phi_k s0 + Gamma_k z for k = 1..N, z = (u_0..u_{N-1}).
struct CondensedDynamics {
  std::vector<Mat16> phi;
  std::vector<MatX> gamma;  // 16 x 8N, nonzero in the first 8k columns

  static CondensedDynamics build(double dt, int n_steps) {
    const auto dyn = discretize_dynamics(dt);
    const int nz = kJoints * n_steps;
    CondensedDynamics c;
    Mat16 phi = Mat16::Identity();
    MatX gamma = MatX::Zero(kJointState, nz);
    for (int k = 1; k <= n_steps; ++k) {
      gamma = (dyn.A * gamma).eval();
      gamma.block(0, kJoints * (k - 1), kJointState, kJoints) = dyn.B;
      phi = (dyn.A * phi).eval();
      c.phi.push_back(phi);
      c.gamma.push_back(gamma);
    }
    return c;
  }
};

/// Rows of the constraint matrix: [u_0..u_{N-1}], then q_1..q_N, then q_dot_1..q_dot_N.
/// Position rows are divided by dt^2 and velocity rows by dt so every block has O(1) entries.
inline QpProblem build_qp(const SlJointState& s_now, const ReferenceTrajectory& r, const MpcConfig& cfg,
                          const TaskLinearization& kin, const Mat24& Q_r, const Mat8& R_r, const Vec8& u_prev,
                          const CondensedDynamics* condensed = nullptr) {
  const int n = cfg.n_steps;
  if (static_cast<int>(r.samples.size()) != n || static_cast<int>(r.times.size()) != n)
    throw InvalidInput("build_qp: reference length does not match the MPC grid");
  const double dt = cfg.dt();
  for (int k = 0; k < n; ++k)
    if (std::abs(r.times[k] - (k + 1) * dt) > 1e-9 * cfg.horizon)
      throw InvalidInput("build_qp: reference is not sampled on the MPC grid");

  std::optional<CondensedDynamics> local;
  if (!condensed) local = CondensedDynamics::build(dt, n);
  const CondensedDynamics& cd = condensed ? *condensed : *local;

  const int nz = kJoints * n;
  const auto c = detail::task_output_matrix(kin);
  QpProblem qp;
  qp.H = MatX::Zero(nz, nz);
  qp.g = VecX::Zero(nz);

  for (int k = 1; k <= n; ++k) {
    const int cols = kJoints * k;
    const MatX g_k = c * cd.gamma[k - 1].leftCols(cols);  // 24 x 8k
    const Vec24 free = c * (cd.phi[k - 1] * s_now) + detail::task_output_offset(kin, k * dt);
    const Vec24 err = free - r.samples[k - 1];
    const MatX qg = Q_r * g_k;
    qp.H.topLeftCorner(cols, cols).noalias() += g_k.transpose() * qg;
    qp.g.head(cols).noalias() += qg.transpose() * err;
  }
  const Mat8 w_rate = cfg.W / (dt * dt);
  for (int k = 0; k < n; ++k) {
    auto blk = [&](int i, int j) { return qp.H.block<kJoints, kJoints>(kJoints * i, kJoints * j); };
    blk(k, k) += R_r + (k + 1 < n ? 2.0 : 1.0) * w_rate;
    if (k + 1 < n) {
      blk(k, k + 1) -= w_rate;
      blk(k + 1, k) -= w_rate;
    }
  }
  qp.g.head<kJoints>() -= w_rate * u_prev;
  qp.H *= 2.0;
  qp.g *= 2.0;
  qp.H = 0.5 * (qp.H + qp.H.transpose()).eval();

  const auto& b = cfg.bounds;
  const int m = 3 * nz;
  qp.A = MatX::Zero(m, nz);
  qp.l.resize(m);
  qp.u.resize(m);
  qp.A.topRows(nz).setIdentity();
  for (int k = 0; k < n; ++k) {
    qp.l.segment<kJoints>(kJoints * k) = -b.qdd_max;
    qp.u.segment<kJoints>(kJoints * k) = b.qdd_max;
  }
  const double pos_scale = 1.0 / (dt * dt), vel_scale = 1.0 / dt;
  for (int k = 1; k <= n; ++k) {
    const SlJointState free = cd.phi[k - 1] * s_now;
    for (int i = 0; i < kJoints; ++i) {
      const int rp = nz + kJoints * (k - 1) + i;
      const int rv = 2 * nz + kJoints * (k - 1) + i;
      qp.A.row(rp) = pos_scale * cd.gamma[k - 1].row(joints::q_of(i));
      qp.A.row(rv) = vel_scale * cd.gamma[k - 1].row(joints::qd_of(i));
      qp.l[rp] = pos_scale * (b.q_min[i] - free[joints::q_of(i)]);
      qp.u[rp] = pos_scale * (b.q_max[i] - free[joints::q_of(i)]);
      qp.l[rv] = vel_scale * (-b.qd_max[i] - free[joints::qd_of(i)]);
      qp.u[rv] = vel_scale * (b.qd_max[i] - free[joints::qd_of(i)]);
    }
  }
  return qp;
}

enum class MpcStatus { solved, degraded, safe_stop };

inline const char* to_string(MpcStatus s) {
  switch (s) {
    case MpcStatus::solved: return "solved";
    case MpcStatus::degraded: return "degraded";
    case MpcStatus::safe_stop: return "safe_stop";
  }
  return "?";
}

struct ControlCommand {
  Vec8 u = Vec8::Zero();
  MpcStatus status = MpcStatus::solved;
  double solve_time = 0.0;  // s, wall clock
  int iterations = 0;
  double k_f = 0.0;
  double q_factor = 1.0;
  double r_factor = 1.0;
};

/// Moves the input sequence forward by `fraction` of an MPC step (linear
/// interpolation between neighbouring inputs); duals are carried over as is.
inline WarmStart shift_warm_start(const QpSolution& sol, int n_steps, double fraction) {
  WarmStart w{sol.z, sol.dual};
  const double f = std::clamp(fraction, 0.0, 1.0);
  for (int k = 0; k < n_steps; ++k) {
    const int next = std::min(k + 1, n_steps - 1);
    w.z_init.segment<kJoints>(kJoints * k) =
        (1.0 - f) * sol.z.segment<kJoints>(kJoints * k) + f * sol.z.segment<kJoints>(kJoints * next);
  }
  return w;
}

struct MpcStepResult {
  ControlCommand command;
  std::optional<WarmStart> next_warm;
  QpSolution solution;
  QpProblem problem;
};

/// One controller tick: schedule weights on the Kalman gain norm, build and
/// solve the condensed QP, return the first input. `elapsed` is the time until
/// the next solve and sets how far the warm start is shifted.
inline MpcStepResult mpc_step(const EstimatorState& est, const SlJointState& s_now, const ReferenceTrajectory& r,
                              const MpcConfig& cfg, const TaskLinearization& kin, const Vec8& u_prev,
                              const std::optional<WarmStart>& warm, QpSolver& solver, double elapsed,
                              const CondensedDynamics* condensed = nullptr) {
  MpcStepResult out;
  ControlCommand& cmd = out.command;
  cmd.k_f = kalman_gain_norm(est);
  const auto f = weight_factors(cmd.k_f, cfg.k0, cfg.epsilon_q);
  cmd.q_factor = f.q_factor;
  cmd.r_factor = f.r_factor;
  out.problem = build_qp(s_now, r, cfg, kin, f.q_factor * cfg.Q0, f.r_factor * cfg.R0, u_prev, condensed);
  const QpProblem& qp = out.problem;

  solver.settings() = cfg.qp;
  const auto t0 = std::chrono::steady_clock::now();
  out.solution = solver.solve(qp, warm ? &*warm : nullptr);
  cmd.solve_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  cmd.iterations = out.solution.iterations;

  switch (out.solution.status) {
    case QpStatus::infeasible:
      cmd.status = MpcStatus::safe_stop;
      cmd.u.setZero();
      return out;
    case QpStatus::max_iters: cmd.status = MpcStatus::degraded; break;
    case QpStatus::solved: cmd.status = MpcStatus::solved; break;
  }
  cmd.u = out.solution.z.head<kJoints>().cwiseMax(-cfg.bounds.qdd_max).cwiseMin(cfg.bounds.qdd_max);
  out.next_warm = shift_warm_start(out.solution, cfg.n_steps, elapsed / cfg.dt());
  return out;
}

/// Stateful wrapper carrying the warm start and previous input between ticks.
class MpcController {
 public:
  explicit MpcController(MpcConfig cfg)
      : cfg_(std::move(cfg)), condensed_(CondensedDynamics::build(cfg_.dt(), cfg_.n_steps)), solver_(cfg_.qp) {
    cfg_.validate();
  }

  const MpcConfig& config() const { return cfg_; }

  ControlCommand step(const EstimatorState& est, const SlJointState& s_now, const ReferenceTrajectory& r,
                      const TaskLinearization& kin, double elapsed) {
    auto res = mpc_step(est, s_now, r, cfg_, kin, u_prev_, warm_, solver_, elapsed, &condensed_);
    warm_ = std::move(res.next_warm);
    u_prev_ = res.command.u;
    last_solution_ = std::move(res.solution);
    last_problem_ = std::move(res.problem);
    return res.command;
  }

  const QpProblem& last_problem() const { return last_problem_; }

  const std::optional<WarmStart>& warm_start() const { return warm_; }
  const Vec8& previous_input() const { return u_prev_; }
  const QpSolution& last_solution() const { return last_solution_; }

  void reset() {
    warm_.reset();
    u_prev_.setZero();
  }

 private:
  MpcConfig cfg_;
  CondensedDynamics condensed_;
  QpSolver solver_;
  std::optional<WarmStart> warm_;
  Vec8 u_prev_ = Vec8::Zero();
  QpSolution last_solution_;
  QpProblem last_problem_;
};

}  // namespace slbal
