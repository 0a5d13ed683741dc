#pragma once

// CoM planning layer: pick the CoM velocity that pulls the system CoM back
// over the support center, then turn it into elbow/wrist references.

#include <cmath>
#include <span>
#include <vector>

#include "slbal/errors.hpp"
#include "slbal/estimator.hpp"
#include "slbal/model.hpp"

namespace slbal {

struct PlannerWeights {
  double gamma = 1.0;   // 1/m^2
  double zeta = 0.02;   // s^2/m^2
  double step = 0.01;   // s
  double v_max = 0.25;  // m/s

  void validate() const {
    if (!(gamma > 0) || !(zeta > 0) || !(step > 0) || !(v_max > 0))
      throw InvalidInput("planner weights: gamma, zeta, step and v_max must be positive");
  }
};

struct ComCommand {
  Vec2 p_star_dot = Vec2::Zero();
  double value = 0.0;  // V(p_hat, p_star_dot)
};

/// V(p, p_dot) = gamma |p - p_sup|^2 + zeta |p_dot|^2
inline double planner_cost(const Vec2& p, const Vec2& p_dot, const Vec2& p_sup, const PlannerWeights& w) {
  return w.gamma * (p - p_sup).squaredNorm() + w.zeta * p_dot.squaredNorm();
}

/// Exact minimiser of gamma |p + v*step - p_sup|^2 + zeta |v|^2, norm-clipped to v_max.
inline ComCommand optimal_com_velocity(const Vec2& p_hat, const Vec2& p_sup_hat, const PlannerWeights& w) {
  w.validate();
  const Vec2 offset = p_hat - p_sup_hat;
  Vec2 v = -w.gamma * w.step * offset / (w.gamma * w.step * w.step + w.zeta);
  const double speed = v.norm();
  if (speed > w.v_max) v *= w.v_max / speed;
  return {v, planner_cost(p_hat, v, p_sup_hat, w)};
}

/// y-layout offsets inside the 24-vector: per arm [elbow, elbow_dot, wrist, wrist_dot].
namespace task {
inline constexpr int kArmStride = 12;
inline constexpr int elbow(int arm) { return kArmStride * arm; }
inline constexpr int elbow_vel(int arm) { return kArmStride * arm + 3; }
inline constexpr int wrist(int arm) { return kArmStride * arm + 6; }
inline constexpr int wrist_vel(int arm) { return kArmStride * arm + 9; }
}  // namespace task

struct ReferenceTrajectory {
  std::vector<double> times;   // k * dt, k = 1..n
  std::vector<Vec24> samples;
  std::vector<Vec2> sl_velocity;  // required SL CoM velocity per sample
  bool clamped = false;
};

/// 2x8 map from the horizontal velocities of [e1, w1, e2, w2] to the SL CoM velocity.
inline Eigen::Matrix<double, 2, 8> lumped_velocity_map(const ArmPair& arms) {
  const double m = arms[0].mass() + arms[1].mass();
  if (m <= 0) throw DegenerateModel("lumped_velocity_map: arms have no mass");
  Eigen::Matrix<double, 2, 8> j = Eigen::Matrix<double, 2, 8>::Zero();
  for (int a = 0; a < kArms; ++a) {
    const auto c = lump_coefficients(arms[a]);
    j.block<2, 2>(0, 4 * a) = (c.elbow / m) * Eigen::Matrix2d::Identity();
    j.block<2, 2>(0, 4 * a + 2) = (c.wrist / m) * Eigen::Matrix2d::Identity();
  }
  return j;
}

/// Horizontal SL CoM velocity contributed by the (non-tracked) shoulders.
inline Vec2 shoulder_velocity_contribution(const StateVector48& x, const ArmPair& arms) {
  const double m = arms[0].mass() + arms[1].mass();
  Vec2 v = Vec2::Zero();
  for (int a = 0; a < kArms; ++a)
    v += lump_coefficients(arms[a]).shoulder / m * horizontal(state48::point_vel(x, a, layout::kShoulder));
  return v;
}

namespace detail {

inline void clamp_to_ball(Eigen::Ref<Vec3> p, const Vec3& center, double radius, bool& clamped) {
  const Vec3 d = p - center;
  const double n = d.norm();
  if (n > radius + 1e-12) {
    p = center + d * (radius / n);
    clamped = true;
  }
}

}  // namespace detail

/// Converts the CoM command into elbow/wrist references over the predicted
/// horizon. Per sample: v_sl = (m_tot p* - m_h p_h_dot) / m_sl, distributed
/// over the tracked points by the minimum-norm solution of J_lump y_dot = v_sl
/// (after removing the shoulders' share); vertical rates are zero and positions
/// integrate the rates from `current_y`.
inline ReferenceTrajectory reference_from_com_command(const ComCommand& cmd,
                                                      std::span<const StateVector48> predicted,
                                                      double sample_dt, const SystemComBreakdown& masses,
                                                      const ArmPair& arms, const Vec24& current_y) {
  const double m_sl = masses.sl_total_mass();
  if (!(m_sl > 0)) throw DegenerateModel("reference_from_com_command: SL mass is zero");
  if (predicted.empty() || !(sample_dt > 0)) throw InvalidInput("reference_from_com_command: empty horizon");

  const Eigen::Matrix<double, 2, 8> j_lump = lumped_velocity_map(arms);
  const Eigen::Matrix<double, 8, 2> j_pinv = j_lump.transpose() * (j_lump * j_lump.transpose()).inverse();

  const std::size_t n = predicted.size();
  ReferenceTrajectory ref;
  ref.times.resize(n);
  ref.samples.resize(n);
  ref.sl_velocity.resize(n);

  Vec24 prev = current_y;
  for (std::size_t k = 0; k < n; ++k) {
    const StateVector48& x = predicted[k];
    const Vec2 v_sl = (masses.total_mass * cmd.p_star_dot - masses.human_mass * state48::hcom_vel(x)) / m_sl;
    const Eigen::Matrix<double, 8, 1> rates = j_pinv * (v_sl - shoulder_velocity_contribution(x, arms));

    Vec24 y = Vec24::Zero();
    for (int a = 0; a < kArms; ++a) {
      y.segment<2>(task::elbow_vel(a)) = rates.segment<2>(4 * a);
      y.segment<2>(task::wrist_vel(a)) = rates.segment<2>(4 * a + 2);
    }
    if (k == 0) {
      // Anchor at the current position with the first commanded rate.
      for (int a = 0; a < kArms; ++a) {
        prev.segment<3>(task::elbow_vel(a)) = y.segment<3>(task::elbow_vel(a));
        prev.segment<3>(task::wrist_vel(a)) = y.segment<3>(task::wrist_vel(a));
      }
    }
    for (int a = 0; a < kArms; ++a) {
      for (int off : {task::elbow(a), task::wrist(a)})
        y.segment<3>(off) = prev.segment<3>(off) + 0.5 * sample_dt * (prev.segment<3>(off + 3) + y.segment<3>(off + 3));
      const Vec3 shoulder = state48::point(x, a, layout::kShoulder);
      detail::clamp_to_ball(y.segment<3>(task::elbow(a)), shoulder, arms[a].upper_length, ref.clamped);
      detail::clamp_to_ball(y.segment<3>(task::wrist(a)), shoulder, arms[a].reach(), ref.clamped);
    }
    ref.times[k] = static_cast<double>(k + 1) * sample_dt;
    ref.samples[k] = y;
    ref.sl_velocity[k] = v_sl;
    prev = y;
  }
  return ref;
}

}  // namespace slbal
