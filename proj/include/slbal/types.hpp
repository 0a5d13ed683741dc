#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace slbal {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Pose = Eigen::Isometry3d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

inline constexpr int kArmJoints = 4;
inline constexpr int kArms = 2;
inline constexpr int kJoints = kArms * kArmJoints;  // u in R^8
inline constexpr int kJointState = 2 * kJoints;     // s in R^16
inline constexpr int kTaskDim = 24;                 // y / r in R^24
inline constexpr int kStateDim = 48;                // x in R^48
inline constexpr int kObsDim = 24;

using JointVec = Eigen::Matrix<double, kArmJoints, 1>;
using Vec8 = Eigen::Matrix<double, kJoints, 1>;
using Vec24 = Eigen::Matrix<double, kTaskDim, 1>;
using Mat8 = Eigen::Matrix<double, kJoints, kJoints>;
using Mat24 = Eigen::Matrix<double, kTaskDim, kTaskDim>;

/// z-up world frame: x forward (facing direction at trial start), y left.
inline constexpr double kGravity = 9.81;

inline bool all_finite(const Eigen::Ref<const MatX>& m) { return m.allFinite(); }

}  // namespace slbal
