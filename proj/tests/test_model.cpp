#include <gtest/gtest.h>

#include <Eigen/SVD>
#include <cmath>

#include "slbal/model.hpp"
#include "support/oracles.hpp"

using namespace slbal;

namespace {

JointVec random_q(oracle::Gen& g, const SlArmModel& arm) {
  JointVec q;
  for (int i = 0; i < kArmJoints; ++i) q[i] = g.uniform(arm.q_min[i], arm.q_max[i]);
  return q;
}

Pose random_pose(oracle::Gen& g) {
  Pose p = Pose::Identity();
  p.linear() = Eigen::Quaterniond(g.normal(), g.normal(), g.normal(), g.normal()).normalized().toRotationMatrix();
  p.translation() = Vec3(g.uniform(-1, 1), g.uniform(-1, 1), g.uniform(0, 2));
  return p;
}

HumanKinematicState upright(double hip_z = 0.92) {
  HumanKinematicState h;
  h.hip_left = Vec3(0, 0.1, hip_z);
  h.hip_right = Vec3(0, -0.1, hip_z);
  return h;
}

}  // namespace

TEST(SupCenter, SymmetricHips) {
  const Vec2 c = sup_center(Vec3(-0.1, 0, 0.9), Vec3(0.1, 0, 0.9));
  EXPECT_DOUBLE_EQ(c.x(), 0.0);
  EXPECT_DOUBLE_EQ(c.y(), 0.0);
}

TEST(SupCenter, Midpoint) {
  const Vec2 c = sup_center(Vec3(0.2, 0.4, 0.9), Vec3(0.4, 0.4, 0.9));
  EXPECT_NEAR(c.x(), 0.3, 1e-15);
  EXPECT_NEAR(c.y(), 0.4, 1e-15);
}

TEST(SupCenter, RandomPairsMatchMidpointOfProjections) {
  oracle::Gen g(1);
  for (int k = 0; k < 100; ++k) {
    const Vec3 a(g.normal(), g.normal(), g.normal()), b(g.normal(), g.normal(), g.normal());
    const Vec2 c = sup_center(a, b);
    EXPECT_DOUBLE_EQ(c.x(), (a.x() + b.x()) / 2);
    EXPECT_DOUBLE_EQ(c.y(), (a.y() + b.y()) / 2);
  }
}

TEST(SupCenter, RejectsNonFinite) {
  EXPECT_THROW(sup_center(Vec3(NAN, 0, 0), Vec3::Zero()), InvalidInput);
  EXPECT_THROW(sup_center(Vec3::Zero(), Vec3(0, INFINITY, 0)), InvalidInput);
}

TEST(SupCenter, IgnoresHeight) {
  const Vec2 a = sup_center(Vec3(0.1, 0.2, 0.0), Vec3(0.3, -0.2, 5.0));
  const Vec2 b = sup_center(Vec3(0.1, 0.2, 9.0), Vec3(0.3, -0.2, -1.0));
  EXPECT_EQ(a, b);
}

TEST(HumanCom, UprightLiesOverSupport) {
  AnthropometricParams a;
  a.backpack_com_offset = Vec3(0, 0, 0.3);
  HumanKinematicState h = upright();
  h.hip_left += Vec3(0.05, 0.02, 0);
  h.hip_right += Vec3(0.05, 0.02, 0);
  const Vec3 c = human_com(h, a);
  const Vec2 s = sup_center(h.hip_left, h.hip_right);
  EXPECT_NEAR(c.x(), s.x(), 1e-14);
  EXPECT_NEAR(c.y(), s.y(), 1e-14);
}

TEST(HumanCom, PitchedTrunkHandBarycenter) {
  AnthropometricParams a;
  a.trunk_mass_fraction = 0.5;
  a.legs_mass_fraction = 0.5;
  a.backpack_mass = 0.0;
  HumanKinematicState h = upright();
  const double th = M_PI / 6;
  h.trunk_orientation = rot_y(th);
  const Vec3 c = human_com(h, a);
  // Trunk and legs weigh the same; only the trunk CoM leaves the support vertical.
  EXPECT_NEAR(c.x(), 0.5 * a.trunk_com_ratio * a.trunk_length * std::sin(th), 1e-14);
  EXPECT_NEAR(c.y(), 0.0, 1e-14);
}

TEST(HumanCom, LegsDominateInTheLimit) {
  AnthropometricParams a;
  a.trunk_mass_fraction = 1e-9;
  a.legs_mass_fraction = 1.0 - 1e-9;
  a.backpack_mass = 0.0;
  HumanKinematicState h = upright();
  h.trunk_orientation = rot_y(1.0);
  const Vec3 c = human_com(h, a);
  EXPECT_NEAR(c.x(), 0.0, 1e-9);
  EXPECT_NEAR(c.z(), a.legs_com_ratio * 0.92, 1e-9);
}

TEST(HumanCom, BackpackFoldedIntoTrunk) {
  AnthropometricParams a;
  a.backpack_mass = 30.0;
  a.backpack_com_offset = Vec3(-0.2, 0, 0.3);
  const HumanKinematicState h = upright();
  const Vec3 hips = h.hip_center();
  const Vec3 trunk = hips + Vec3(0, 0, a.trunk_com_ratio * a.trunk_length);
  const Vec3 legs(0, 0, a.legs_com_ratio * hips.z());
  const Vec3 pack = hips + a.backpack_com_offset;
  const double mt = a.trunk_mass(), ml = a.legs_mass(), mb = a.backpack_mass;
  const Vec3 expect = (mt * trunk + ml * legs + mb * pack) / (mt + ml + mb);
  EXPECT_LT((human_com(h, a) - expect).norm(), 1e-14);
}

TEST(Anthropometrics, ValidationRejectsBadFractions) {
  AnthropometricParams a;
  a.trunk_mass_fraction = 0.7;
  a.legs_mass_fraction = 0.4;
  EXPECT_THROW(a.validate(), InvalidInput);
  a = AnthropometricParams{};
  a.trunk_length = 0;
  EXPECT_THROW(a.validate(), InvalidInput);
  EXPECT_NO_THROW(AnthropometricParams{}.validate());
}

TEST(HumanState, RejectsImproperRotation) {
  HumanKinematicState h = upright();
  h.trunk_orientation = -Mat3::Identity();
  EXPECT_THROW(h.validate(), InvalidInput);
  h.trunk_orientation = 1.01 * Mat3::Identity();
  EXPECT_THROW(h.validate(), InvalidInput);
}

TEST(ArmModel, ValidationRejectsInvertedLimits) {
  SlArmModel arm;
  arm.q_min[1] = arm.q_max[1];
  EXPECT_THROW(arm.validate(), InvalidInput);
  arm = SlArmModel{};
  arm.upper_length = -0.1;
  EXPECT_THROW(arm.validate(), InvalidInput);
}

TEST(ForwardKinematics, ZeroConfigurationPointsBackward) {
  const SlArmModel arm = SlArmModel::mounted(0.2);
  const auto p = sl_forward_kinematics(JointVec::Zero(), arm, Pose::Identity());
  EXPECT_LT((p.shoulder - Vec3(-0.10, 0.2, 0.45)).norm(), 1e-15);
  EXPECT_LT((p.elbow - (p.shoulder + Vec3(-arm.upper_length, 0, 0))).norm(), 1e-15);
  EXPECT_LT((p.wrist - (p.elbow + Vec3(-arm.fore_length, 0, 0))).norm(), 1e-15);
}

TEST(ForwardKinematics, LinkLengthsConserved) {
  oracle::Gen g(2);
  const SlArmModel arm = SlArmModel::mounted(-0.2);
  for (int k = 0; k < 1000; ++k) {
    const auto p = sl_forward_kinematics(random_q(g, arm), arm, random_pose(g));
    EXPECT_NEAR((p.elbow - p.shoulder).norm(), arm.upper_length, 1e-12);
    EXPECT_NEAR((p.wrist - p.elbow).norm(), arm.fore_length, 1e-12);
  }
}

TEST(ForwardKinematics, FrameEquivariance) {
  oracle::Gen g(3);
  const SlArmModel arm = SlArmModel::mounted(0.2);
  for (int k = 0; k < 100; ++k) {
    const JointVec q = random_q(g, arm);
    const Pose trunk = random_pose(g), t = random_pose(g);
    const auto a = sl_forward_kinematics(q, arm, trunk);
    const auto b = sl_forward_kinematics(q, arm, t * trunk);
    EXPECT_LT((t * a.shoulder - b.shoulder).norm(), 1e-12);
    EXPECT_LT((t * a.elbow - b.elbow).norm(), 1e-12);
    EXPECT_LT((t * a.wrist - b.wrist).norm(), 1e-12);
  }
}

TEST(ForwardKinematics, ShoulderFixedToTrunk) {
  oracle::Gen g(4);
  const SlArmModel arm = SlArmModel::mounted(0.2);
  const Pose trunk = random_pose(g);
  const Vec3 s0 = sl_forward_kinematics(JointVec::Zero(), arm, trunk).shoulder;
  for (int k = 0; k < 20; ++k) EXPECT_EQ(sl_forward_kinematics(random_q(g, arm), arm, trunk).shoulder, s0);
}

TEST(ForwardKinematics, FlagsOutOfLimitConfigurations) {
  const SlArmModel arm;
  JointVec q = JointVec::Zero();
  EXPECT_TRUE(sl_forward_kinematics(q, arm, Pose::Identity()).within_limits);
  q[3] = arm.q_max[3] + 0.1;
  EXPECT_FALSE(sl_forward_kinematics(q, arm, Pose::Identity()).within_limits);
}

TEST(TaskJacobian, MatchesCentralDifferences) {
  oracle::Gen g(5);
  const SlArmModel arm = SlArmModel::mounted(0.2);
  for (int k = 0; k < 100; ++k) {
    const JointVec q = random_q(g, arm);
    const Pose trunk = random_pose(g);
    const TaskJacobian jac = sl_task_jacobian(q, arm, trunk);
    const double h = 1e-6;
    for (int i = 0; i < kArmJoints; ++i) {
      JointVec qp = q, qm = q;
      qp[i] += h;
      qm[i] -= h;
      const auto a = sl_forward_kinematics(qp, arm, trunk), b = sl_forward_kinematics(qm, arm, trunk);
      Eigen::Matrix<double, 6, 1> fd;
      fd << (a.elbow - b.elbow) / (2 * h), (a.wrist - b.wrist) / (2 * h);
      EXPECT_LE((fd - jac.col(i)).lpNorm<Eigen::Infinity>(), 1e-6);
    }
  }
}

TEST(TaskJacobian, ElbowIgnoresDistalJoints) {
  oracle::Gen g(6);
  const SlArmModel arm;
  for (int k = 0; k < 20; ++k) {
    const TaskJacobian jac = sl_task_jacobian(random_q(g, arm), arm, random_pose(g));
    // Roll spins the upper arm about its own axis; the elbow hinge is distal.
    EXPECT_LT((jac.block<3, 1>(0, 2).norm()), 1e-15);
    EXPECT_LT((jac.block<3, 1>(0, 3).norm()), 1e-15);
  }
}

TEST(TaskJacobian, StretchedArmIsSingular) {
  const SlArmModel arm;
  const JointVec q(0.3, 0.2, 0.0, 0.0);  // elbow straight
  const TaskJacobian jac = sl_task_jacobian(q, arm, Pose::Identity());
  Eigen::JacobiSVD<TaskJacobian> svd(jac);
  const auto s = svd.singularValues();
  EXPECT_LT(s[3] / s[0], 1e-12);
}

TEST(TaskJacobian, BentArmHasFullRank) {
  const SlArmModel arm;
  const JointVec q(0.3, 0.2, 0.4, 1.2);
  Eigen::JacobiSVD<TaskJacobian> svd(sl_task_jacobian(q, arm, Pose::Identity()));
  EXPECT_GT(svd.singularValues()[3], 1e-3);
}

TEST(SlCom, EqualMassesStraightArm) {
  SlArmModel arm;
  arm.upper_mass = arm.fore_mass = 4.0;
  const auto p = sl_forward_kinematics(JointVec::Zero(), arm, Pose::Identity());
  const auto c = sl_com(JointVec::Zero(), arm, Pose::Identity());
  EXPECT_LT((c.com - 0.5 * (p.shoulder + p.wrist)).norm(), 1e-15);
  EXPECT_DOUBLE_EQ(c.mass, 8.0);
}

TEST(SlCom, MasslessForearm) {
  SlArmModel arm;
  arm.upper_mass = 8.0;
  arm.fore_mass = 0.0;
  const JointVec q(0.4, -0.3, 0.2, 1.0);
  const auto p = sl_forward_kinematics(q, arm, Pose::Identity());
  EXPECT_LT((sl_com(q, arm, Pose::Identity()).com - 0.5 * (p.shoulder + p.elbow)).norm(), 1e-15);
}

TEST(SlCom, RandomConfigurationsMatchBarycenter) {
  oracle::Gen g(7);
  SlArmModel arm = SlArmModel::mounted(0.2);
  for (int k = 0; k < 100; ++k) {
    arm.upper_mass = g.uniform(0.5, 6);
    arm.fore_mass = g.uniform(0.0, 6);
    const JointVec q = random_q(g, arm);
    const Pose trunk = random_pose(g);
    const auto p = sl_forward_kinematics(q, arm, trunk);
    const Vec3 upper_mid = (p.shoulder + p.elbow) / 2, fore_mid = (p.elbow + p.wrist) / 2;
    const Vec3 expect = (arm.upper_mass * upper_mid + arm.fore_mass * fore_mid) / (arm.upper_mass + arm.fore_mass);
    EXPECT_LT((sl_com(q, arm, trunk).com - expect).norm(), 1e-13);
  }
}

TEST(LumpCoefficients, ReproduceArmMoment) {
  oracle::Gen g(8);
  const SlArmModel arm = SlArmModel::mounted(-0.2);
  const JointVec q = random_q(g, arm);
  const auto p = sl_forward_kinematics(q, arm, Pose::Identity());
  const auto c = lump_coefficients(arm);
  const Vec3 moment = c.shoulder * p.shoulder + c.elbow * p.elbow + c.wrist * p.wrist;
  EXPECT_LT((moment - arm.mass() * sl_com(q, arm, Pose::Identity()).com).norm(), 1e-13);
  EXPECT_NEAR(c.shoulder + c.elbow + c.wrist, arm.mass(), 1e-15);
}

TEST(SystemCom, MasslessArmsGiveHumanCom) {
  ArmPair arms = default_arms();
  for (auto& a : arms) a.upper_mass = a.fore_mass = 0.0;
  const AnthropometricParams anthro;
  HumanKinematicState h = upright();
  h.trunk_orientation = rot_y(0.4);
  const auto b = system_com(h, anthro, arms, JointVec(0.1, 1.0, 0, 1.5), JointVec(-0.3, 0.5, 0.2, 1.0));
  EXPECT_LT((b.total_com - b.human_com).norm(), 1e-15);
  EXPECT_DOUBLE_EQ(b.total_mass, anthro.human_mass());
}

TEST(SystemCom, MirroredArmsKeepLateralCoordinate) {
  const ArmPair arms = default_arms();
  const AnthropometricParams anthro;
  HumanKinematicState h = upright();
  const JointVec ql(0.3, 1.0, 0.2, 1.4);
  const JointVec qr(-0.3, 1.0, -0.2, 1.4);  // yaw and roll flip sign under the sagittal mirror
  const auto b = system_com(h, anthro, arms, ql, qr);
  EXPECT_NEAR(b.total_com_xy.y(), sup_center(h.hip_left, h.hip_right).y(), 1e-14);
}

TEST(SystemCom, MatchesFlatWeightedSum) {
  oracle::Gen g(9);
  for (int k = 0; k < 50; ++k) {
    AnthropometricParams a;
    a.body_mass = g.uniform(50, 100);
    a.backpack_mass = g.uniform(0, 30);
    a.backpack_com_offset = Vec3(g.uniform(-0.2, 0.2), g.uniform(-0.1, 0.1), g.uniform(0, 0.4));
    ArmPair arms = default_arms();
    for (auto& arm : arms) {
      arm.upper_mass = g.uniform(1, 6);
      arm.fore_mass = g.uniform(0, 6);
    }
    HumanKinematicState h;
    h.hip_left = Vec3(g.uniform(-0.1, 0.1), 0.1, 0.9);
    h.hip_right = Vec3(g.uniform(-0.1, 0.1), -0.1, 0.9);
    h.trunk_orientation = rot_x(g.uniform(-0.5, 0.5)) * rot_y(g.uniform(-0.5, 0.5));
    const JointVec ql = random_q(g, arms[0]), qr = random_q(g, arms[1]);
    const auto b = system_com(h, a, arms, ql, qr);

    // Flat sum over trunk, legs, backpack and the four arm segments.
    const Vec3 hips = h.hip_center();
    const Vec2 sup = sup_center(h.hip_left, h.hip_right);
    std::vector<std::pair<double, Vec3>> parts{
        {a.trunk_mass(), hips + h.trunk_orientation * Vec3(0, 0, a.trunk_com_ratio * a.trunk_length)},
        {a.legs_mass(), Vec3(sup.x(), sup.y(), a.legs_com_ratio * hips.z())},
        {a.backpack_mass, hips + h.trunk_orientation * a.backpack_com_offset}};
    const std::array<JointVec, 2> qs{ql, qr};
    for (int j = 0; j < 2; ++j) {
      const auto p = sl_forward_kinematics(qs[j], arms[j], h.trunk_pose());
      parts.push_back({arms[j].upper_mass, (p.shoulder + p.elbow) / 2});
      parts.push_back({arms[j].fore_mass, (p.elbow + p.wrist) / 2});
    }
    double m = 0;
    Vec3 moment = Vec3::Zero();
    for (const auto& [mi, ci] : parts) {
      m += mi;
      moment += mi * ci;
    }
    EXPECT_LE((b.total_com - moment / m).norm(), 1e-12 * (moment / m).norm());
    EXPECT_NEAR(b.total_mass, m, 1e-12 * m);
    EXPECT_EQ(b.total_com_xy, horizontal(b.total_com));
  }
}
