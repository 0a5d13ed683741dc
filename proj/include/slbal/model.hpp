#pragma once

// Geometric and mass model of the human wearing two supernumerary arms.
//
// Frames: z-up world, x forward, y left. The trunk frame has its origin at the
// hip midpoint and is rotated by the trunk orientation; each arm base sits on
// the backpack at `mount_pose` relative to the trunk frame.

#include <array>
#include <cmath>
#include <string>

#include "slbal/errors.hpp"
#include "slbal/types.hpp"

namespace slbal {

struct AnthropometricParams {
  double body_mass = 73.7;    // kg
  double body_height = 1.74;  // m
  double trunk_mass_fraction = 0.497;
  double legs_mass_fraction = 0.32;
  double trunk_com_ratio = 0.5;  // along the trunk, from the hips
  double trunk_length = 0.50;    // m, hip to shoulder line
  double hip_height_ratio = 0.53;  // hip height / body height
  double legs_com_ratio = 0.53;    // legs CoM height / hip height
  double hip_width = 0.20;         // m, between hip joint centers
  double backpack_mass = 14.0;     // kg, frame + electronics, arms excluded
  Vec3 backpack_com_offset{0.12, 0.0, 0.25};  // m, trunk frame, from the hip midpoint

  double trunk_mass() const { return body_mass * trunk_mass_fraction; }
  double legs_mass() const { return body_mass * legs_mass_fraction; }
  /// Trunk + legs + backpack. Head and arms are left out of the model.
  double human_mass() const { return trunk_mass() + legs_mass() + backpack_mass; }
  double hip_height() const { return body_height * hip_height_ratio; }

  void validate() const {
    if (!(body_mass > 0) || !(body_height > 0) || !(trunk_length > 0) || !(hip_width > 0))
      throw InvalidInput("anthropometrics: masses and lengths must be positive");
    auto in_unit = [](double f) { return f > 0.0 && f < 1.0; };
    if (!in_unit(trunk_mass_fraction) || !in_unit(legs_mass_fraction) || !in_unit(trunk_com_ratio) ||
        !in_unit(hip_height_ratio) || !in_unit(legs_com_ratio))
      throw InvalidInput("anthropometrics: fractions must lie in (0, 1)");
    if (trunk_mass_fraction + legs_mass_fraction > 1.0)
      throw InvalidInput("anthropometrics: trunk + legs mass fraction exceeds 1");
    if (backpack_mass < 0 || !backpack_com_offset.allFinite())
      throw InvalidInput("anthropometrics: invalid backpack");
  }
};

/// One supernumerary arm reduced to its four CoM-relevant joints:
/// shoulder yaw (base z), shoulder pitch (y), shoulder roll (along the upper
/// arm) and elbow pitch. At q = 0 both links point along the base -x axis,
/// i.e. backward and horizontal for an upright trunk.
struct SlArmModel {
  Pose mount_pose = Pose::Identity();
  double upper_length = 0.31;  // shoulder -> elbow
  double fore_length = 0.31;   // elbow -> wrist
  double upper_mass = 4.0;
  double fore_mass = 4.0;
  JointVec q_min = JointVec(-2.8, -2.2, -2.8, -2.5);
  JointVec q_max = JointVec(2.8, 2.2, 2.8, 2.5);
  JointVec qd_max = JointVec::Constant(1.2);   // rad/s, symmetric
  JointVec qdd_max = JointVec::Constant(5.0);  // rad/s^2, symmetric

  double mass() const { return upper_mass + fore_mass; }
  double reach() const { return upper_length + fore_length; }

  void validate() const {
    if (!(upper_length > 0) || !(fore_length > 0))
      throw InvalidInput("arm: link lengths must be positive");
    if (upper_mass < 0 || fore_mass < 0) throw InvalidInput("arm: negative link mass");
    if (!(q_min.array() < q_max.array()).all()) throw InvalidInput("arm: joint lower limit >= upper limit");
    if (!(qd_max.array() > 0).all() || !(qdd_max.array() > 0).all())
      throw InvalidInput("arm: velocity/acceleration limits must be positive");
    if (!q_min.allFinite() || !q_max.allFinite() || !qd_max.allFinite() || !qdd_max.allFinite())
      throw InvalidInput("arm: limits must be finite");
  }

  bool within_limits(const JointVec& q) const {
    return (q.array() >= q_min.array()).all() && (q.array() <= q_max.array()).all();
  }

  /// Default backpack mount: shoulder height, `lateral` metres to the left (negative: right).
  static SlArmModel mounted(double lateral, double back = -0.10, double height = 0.45) {
    SlArmModel arm;
    arm.mount_pose.translation() = Vec3(back, lateral, height);
    return arm;
  }
};

using ArmPair = std::array<SlArmModel, kArms>;

inline ArmPair default_arms() { return {SlArmModel::mounted(0.2), SlArmModel::mounted(-0.2)}; }

struct HumanKinematicState {
  Vec3 hip_left = Vec3::Zero();
  Vec3 hip_right = Vec3::Zero();
  Mat3 trunk_orientation = Mat3::Identity();
  double treadmill_offset = 0.0;

  Vec3 hip_center() const { return 0.5 * (hip_left + hip_right); }

  Pose trunk_pose() const {
    Pose pose = Pose::Identity();
    pose.linear() = trunk_orientation;
    pose.translation() = hip_center();
    return pose;
  }

  void validate() const {
    const Mat3& r = trunk_orientation;
    if (!r.allFinite() || !hip_left.allFinite() || !hip_right.allFinite())
      throw InvalidInput("human state: non-finite entries");
    if ((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9 || r.determinant() <= 0)
      throw InvalidInput("human state: trunk orientation is not a proper rotation");
  }
};

struct ArmPoints {
  Vec3 shoulder;
  Vec3 elbow;
  Vec3 wrist;
  bool within_limits = true;
};

struct ArmCom {
  Vec3 com;
  double mass;
};

struct SystemComBreakdown {
  Vec3 human_com = Vec3::Zero();
  std::array<Vec3, kArms> sl_com{Vec3::Zero(), Vec3::Zero()};
  Vec3 total_com = Vec3::Zero();
  Vec2 total_com_xy = Vec2::Zero();
  double human_mass = 0.0;
  std::array<double, kArms> sl_mass{0.0, 0.0};
  double total_mass = 0.0;

  double sl_total_mass() const { return sl_mass[0] + sl_mass[1]; }
};

inline Mat3 rot_x(double a) { return Eigen::AngleAxisd(a, Vec3::UnitX()).toRotationMatrix(); }
inline Mat3 rot_y(double a) { return Eigen::AngleAxisd(a, Vec3::UnitY()).toRotationMatrix(); }
inline Mat3 rot_z(double a) { return Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix(); }

inline Vec2 horizontal(const Vec3& p) { return p.head<2>(); }

/// Support center: midpoint of the hip projections on the ground plane.
inline Vec2 sup_center(const Vec3& hip_left, const Vec3& hip_right) {
  if (!hip_left.allFinite() || !hip_right.allFinite()) throw InvalidInput("sup_center: non-finite hip position");
  return 0.5 * (horizontal(hip_left) + horizontal(hip_right));
}

/// Barycenter of trunk (with backpack folded in) and legs.
/// Legs are straight and vertical: their CoM sits on the vertical through the
/// support center at `legs_com_ratio` of the hip height.
inline Vec3 human_com(const HumanKinematicState& state, const AnthropometricParams& anthro) {
  const Vec3 hips = state.hip_center();
  const Vec2 sup = sup_center(state.hip_left, state.hip_right);
  const Vec3 legs(sup.x(), sup.y(), anthro.legs_com_ratio * hips.z());
  const Vec3 trunk = hips + state.trunk_orientation * Vec3(0, 0, anthro.trunk_com_ratio * anthro.trunk_length);
  const Vec3 pack = hips + state.trunk_orientation * anthro.backpack_com_offset;
  const double mt = anthro.trunk_mass(), ml = anthro.legs_mass(), mb = anthro.backpack_mass;
  return (mt * trunk + ml * legs + mb * pack) / (mt + ml + mb);
}

namespace detail {

struct ArmFrames {
  Vec3 shoulder;
  Mat3 base;      // world rotation of the arm base
  Mat3 shoulder_rot;  // base * Rz * Ry * Rx
  Mat3 fore_rot;      // shoulder_rot * Ry(elbow)
};

inline ArmFrames arm_frames(const JointVec& q, const SlArmModel& arm, const Pose& trunk_pose) {
  const Pose base = trunk_pose * arm.mount_pose;
  ArmFrames f;
  f.shoulder = base.translation();
  f.base = base.linear();
  f.shoulder_rot = f.base * rot_z(q[0]) * rot_y(q[1]) * rot_x(q[2]);
  f.fore_rot = f.shoulder_rot * rot_y(q[3]);
  return f;
}

}  // namespace detail

inline ArmPoints sl_forward_kinematics(const JointVec& q, const SlArmModel& arm, const Pose& trunk_pose) {
  const auto f = detail::arm_frames(q, arm, trunk_pose);
  ArmPoints pts;
  pts.shoulder = f.shoulder;
  pts.elbow = f.shoulder + f.shoulder_rot * Vec3(-arm.upper_length, 0, 0);
  pts.wrist = pts.elbow + f.fore_rot * Vec3(-arm.fore_length, 0, 0);
  pts.within_limits = arm.within_limits(q);
  return pts;
}

using TaskJacobian = Eigen::Matrix<double, 6, kArmJoints>;

/// Rows 0-2: elbow velocity, rows 3-5: wrist velocity, per unit joint rate, trunk held fixed.
inline TaskJacobian sl_task_jacobian(const JointVec& q, const SlArmModel& arm, const Pose& trunk_pose) {
  const auto f = detail::arm_frames(q, arm, trunk_pose);
  const Vec3 elbow = f.shoulder + f.shoulder_rot * Vec3(-arm.upper_length, 0, 0);
  const Vec3 wrist = elbow + f.fore_rot * Vec3(-arm.fore_length, 0, 0);

  const Mat3 after_yaw = f.base * rot_z(q[0]);
  const std::array<Vec3, kArmJoints> axis{f.base * Vec3::UnitZ(), after_yaw * Vec3::UnitY(),
                                          f.shoulder_rot * Vec3::UnitX(), f.shoulder_rot * Vec3::UnitY()};
  TaskJacobian jac = TaskJacobian::Zero();
  for (int i = 0; i < 3; ++i) {
    jac.block<3, 1>(0, i) = axis[i].cross(elbow - f.shoulder);
    jac.block<3, 1>(3, i) = axis[i].cross(wrist - f.shoulder);
  }
  // The roll axis passes through the elbow, so it cannot move it.
  jac.block<3, 1>(0, 2).setZero();
  jac.block<3, 1>(3, 3) = axis[3].cross(wrist - elbow);
  return jac;
}

/// Segment masses lumped at the midpoints of the tracked joints.
inline ArmCom sl_com(const JointVec& q, const SlArmModel& arm, const Pose& trunk_pose) {
  const auto pts = sl_forward_kinematics(q, arm, trunk_pose);
  const double m = arm.mass();
  if (m <= 0.0) return {pts.shoulder, 0.0};
  const Vec3 com = (arm.upper_mass * 0.5 * (pts.shoulder + pts.elbow) + arm.fore_mass * 0.5 * (pts.elbow + pts.wrist)) / m;
  return {com, m};
}

/// Weights of shoulder, elbow and wrist in the arm's mass moment, i.e.
/// m_arm * com = c_s * shoulder + c_e * elbow + c_w * wrist.
struct LumpCoefficients {
  double shoulder, elbow, wrist;
};

inline LumpCoefficients lump_coefficients(const SlArmModel& arm) {
  return {0.5 * arm.upper_mass, 0.5 * (arm.upper_mass + arm.fore_mass), 0.5 * arm.fore_mass};
}

inline SystemComBreakdown system_com(const HumanKinematicState& human, const AnthropometricParams& anthro,
                                     const ArmPair& arms, const JointVec& q_left, const JointVec& q_right) {
  SystemComBreakdown out;
  out.human_com = human_com(human, anthro);
  out.human_mass = anthro.human_mass();
  const Pose trunk = human.trunk_pose();
  const std::array<const JointVec*, kArms> qs{&q_left, &q_right};
  Vec3 moment = out.human_mass * out.human_com;
  out.total_mass = out.human_mass;
  for (int j = 0; j < kArms; ++j) {
    const auto c = sl_com(*qs[j], arms[j], trunk);
    out.sl_com[j] = c.com;
    out.sl_mass[j] = c.mass;
    moment += c.mass * c.com;
    out.total_mass += c.mass;
  }
  out.total_com = moment / out.total_mass;
  out.total_com_xy = horizontal(out.total_com);
  return out;
}

}  // namespace slbal
