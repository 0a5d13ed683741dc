#pragma once

// Linear-quadratic estimation of the 48-dimensional human/arms state from
// 24 noisy position measurements.
//
// State layout (indices):
//   0-1  p        system CoM projection      2-3  p_dot
//   4-5  p_sup    support center             6-7  p_sup_dot
//   8-9  p_h      human CoM projection       10-11 p_h_dot
//   12 + 18*j + {0,3,6}   shoulder, elbow, wrist of arm j   (3 each)
//   12 + 18*j + {9,12,15} their velocities
// Observation layout: the 24 position entries in the order above.

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <array>
#include <cmath>
#include <limits>
#include <vector>

#include "slbal/errors.hpp"
#include "slbal/types.hpp"

namespace slbal {

using StateVector48 = Eigen::Matrix<double, kStateDim, 1>;
using ObsVector = Eigen::Matrix<double, kObsDim, 1>;
using Mat48 = Eigen::Matrix<double, kStateDim, kStateDim>;
using Gain = Eigen::Matrix<double, kStateDim, kObsDim>;

namespace layout {

inline constexpr int kCom = 0, kComVel = 2;
inline constexpr int kSup = 4, kSupVel = 6;
inline constexpr int kHcom = 8, kHcomVel = 10;
inline constexpr int kArmBase = 12, kArmStride = 18;
inline constexpr int kShoulder = 0, kElbow = 3, kWrist = 6, kArmVelOffset = 9;

inline constexpr int arm_point(int arm, int point) { return kArmBase + kArmStride * arm + point; }
inline constexpr int arm_point_vel(int arm, int point) { return arm_point(arm, point) + kArmVelOffset; }

enum class Group { com, sup, hcom, sl };

/// One position coordinate and its velocity partner.
struct Pair {
  int pos;
  int vel;
  Group group;
};

inline const std::array<Pair, kObsDim>& pairs() {
  static const std::array<Pair, kObsDim> table = [] {
    std::array<Pair, kObsDim> t{};
    int k = 0;
    for (int i = 0; i < 2; ++i) t[k++] = {kCom + i, kComVel + i, Group::com};
    for (int i = 0; i < 2; ++i) t[k++] = {kSup + i, kSupVel + i, Group::sup};
    for (int i = 0; i < 2; ++i) t[k++] = {kHcom + i, kHcomVel + i, Group::hcom};
    for (int j = 0; j < kArms; ++j)
      for (int i = 0; i < 9; ++i) t[k++] = {arm_point(j, i), arm_point(j, i) + kArmVelOffset, Group::sl};
    return t;
  }();
  return table;
}

}  // namespace layout

namespace state48 {

inline Vec2 com(const StateVector48& x) { return x.segment<2>(layout::kCom); }
inline Vec2 com_vel(const StateVector48& x) { return x.segment<2>(layout::kComVel); }
inline Vec2 sup(const StateVector48& x) { return x.segment<2>(layout::kSup); }
inline Vec2 sup_vel(const StateVector48& x) { return x.segment<2>(layout::kSupVel); }
inline Vec2 hcom(const StateVector48& x) { return x.segment<2>(layout::kHcom); }
inline Vec2 hcom_vel(const StateVector48& x) { return x.segment<2>(layout::kHcomVel); }
inline Vec3 point(const StateVector48& x, int arm, int which) { return x.segment<3>(layout::arm_point(arm, which)); }
inline Vec3 point_vel(const StateVector48& x, int arm, int which) {
  return x.segment<3>(layout::arm_point_vel(arm, which));
}

inline ObsVector positions(const StateVector48& x) {
  ObsVector z;
  const auto& p = layout::pairs();
  for (int k = 0; k < kObsDim; ++k) z[k] = x[p[k].pos];
  return z;
}

inline StateVector48 from_positions(const ObsVector& z) {
  StateVector48 x = StateVector48::Zero();
  const auto& p = layout::pairs();
  for (int k = 0; k < kObsDim; ++k) x[p[k].pos] = z[k];
  return x;
}

}  // namespace state48

struct Observation {
  ObsVector positions = ObsVector::Zero();
  double time = 0.0;
};

/// White-acceleration process noise intensities (m^2/s^3) per signal group and
/// measurement noise standard deviation (m).
struct EstimatorNoise {
  double q_com = 1e-5;
  double q_sup = 1e-5;
  double q_hcom = 1e-5;
  double q_sl = 1e-5;
  double measurement_sigma = 1e-3;
  double initial_pos_sigma = 0.01;
  double initial_vel_sigma = 0.05;

  double intensity(layout::Group g) const {
    switch (g) {
      case layout::Group::com: return q_com;
      case layout::Group::sup: return q_sup;
      case layout::Group::hcom: return q_hcom;
      case layout::Group::sl: return q_sl;
    }
    return q_sl;
  }

  void validate() const {
    if (q_com < 0 || q_sup < 0 || q_hcom < 0 || q_sl < 0 || measurement_sigma < 0 || !(initial_pos_sigma > 0) ||
        !(initial_vel_sigma > 0))
      throw InvalidInput("estimator noise: negative intensity or non-positive prior");
  }
};

struct EstimatorState {
  StateVector48 x_hat = StateVector48::Zero();
  Mat48 covariance = Mat48::Identity();
  Gain last_gain = Gain::Zero();
  bool has_gain = false;
  EstimatorNoise noise;
  double last_time = 0.0;
  double last_obs_time = -std::numeric_limits<double>::infinity();
};

/// Positions from the first observation, zero velocities, diagonal prior.
inline EstimatorState make_estimator(const Observation& first, const EstimatorNoise& noise) {
  noise.validate();
  EstimatorState est;
  est.noise = noise;
  est.x_hat = state48::from_positions(first.positions);
  est.covariance.setZero();
  for (const auto& pr : layout::pairs()) {
    est.covariance(pr.pos, pr.pos) = noise.initial_pos_sigma * noise.initial_pos_sigma;
    est.covariance(pr.vel, pr.vel) = noise.initial_vel_sigma * noise.initial_vel_sigma;
  }
  est.last_time = first.time;
  return est;
}

namespace detail {

inline double min_eigenvalue(const Mat48& p) {
  Eigen::SelfAdjointEigenSolver<Mat48> es(p, Eigen::EigenvaluesOnly);
  return es.eigenvalues()[0];
}

inline void symmetrize(Mat48& p) { p = 0.5 * (p + p.transpose()).eval(); }

}  // namespace detail

/// Constant-velocity propagation: P <- F P F' + Q(dt) with exact
/// white-acceleration discretisation per position/velocity pair.
inline EstimatorState lqe_predict(EstimatorState est, double dt) {
  if (!(dt > 0) || !std::isfinite(dt)) throw InvalidInput("lqe_predict: dt must be positive");
  Mat48& p = est.covariance;
  const auto& pairs = layout::pairs();
  for (const auto& pr : pairs) {
    est.x_hat[pr.pos] += dt * est.x_hat[pr.vel];
    p.row(pr.pos) += dt * p.row(pr.vel);
  }
  for (const auto& pr : pairs) p.col(pr.pos) += dt * p.col(pr.vel);
  const double dt2 = dt * dt, dt3 = dt2 * dt;
  for (const auto& pr : pairs) {
    const double q = est.noise.intensity(pr.group);
    p(pr.pos, pr.pos) += q * dt3 / 3.0;
    p(pr.pos, pr.vel) += q * dt2 / 2.0;
    p(pr.vel, pr.pos) += q * dt2 / 2.0;
    p(pr.vel, pr.vel) += q * dt;
  }
  est.last_time += dt;
  return est;
}

/// Kalman update with H selecting the 24 position entries (Joseph form).
inline EstimatorState lqe_update(EstimatorState est, const Observation& z) {
  if (!z.positions.allFinite()) throw InvalidInput("lqe_update: non-finite observation");
  if (!(z.time > est.last_obs_time)) throw InvalidInput("lqe_update: observation timestamps must increase");
  const auto& pairs = layout::pairs();
  std::array<int, kObsDim> idx{};
  for (int k = 0; k < kObsDim; ++k) idx[k] = pairs[k].pos;

  const Mat48& p = est.covariance;
  Gain pht;  // P H'
  for (int k = 0; k < kObsDim; ++k) pht.col(k) = p.col(idx[k]);
  Eigen::Matrix<double, kObsDim, kObsDim> s;
  for (int k = 0; k < kObsDim; ++k) s.row(k) = pht.row(idx[k]);
  const double r = est.noise.measurement_sigma * est.noise.measurement_sigma;
  s.diagonal().array() += r;
  s = 0.5 * (s + s.transpose()).eval();

  Eigen::LDLT<Eigen::Matrix<double, kObsDim, kObsDim>> ldlt(s);
  if (ldlt.info() != Eigen::Success) throw NumericalFailure("lqe_update: innovation covariance not invertible");
  const Gain k = ldlt.solve(pht.transpose()).transpose();

  ObsVector innovation = z.positions - state48::positions(est.x_hat);
  est.x_hat += k * innovation;

  // (I - K H) P (I - K H)' + K R K'
  Mat48 ikh = Mat48::Identity();
  for (int c = 0; c < kObsDim; ++c) ikh.col(idx[c]) -= k.col(c);
  Mat48 updated = ikh * p * ikh.transpose() + r * k * k.transpose();
  detail::symmetrize(updated);
  if (detail::min_eigenvalue(updated) < -1e-9) {
    // Retry from the symmetrised prior before giving up.
    Mat48 prior = p;
    detail::symmetrize(prior);
    updated = ikh * prior * ikh.transpose() + r * k * k.transpose();
    detail::symmetrize(updated);
    if (detail::min_eigenvalue(updated) < -1e-9)
      throw NumericalFailure("lqe_update: covariance lost positive semi-definiteness");
  }
  est.covariance = updated;
  est.last_gain = k;
  est.has_gain = true;
  est.last_obs_time = z.time;
  return est;
}

/// Open-loop means at horizon/n_steps spacing; the input estimate is untouched.
inline std::vector<StateVector48> predict_horizon(const EstimatorState& est, double horizon, int n_steps) {
  if (!(horizon > 0) || n_steps < 1) throw InvalidInput("predict_horizon: horizon and n_steps must be positive");
  const double h = horizon / n_steps;
  std::vector<StateVector48> out;
  out.reserve(static_cast<std::size_t>(n_steps));
  const auto& pairs = layout::pairs();
  for (int k = 1; k <= n_steps; ++k) {
    StateVector48 x = est.x_hat;
    const double t = k * h;
    for (const auto& pr : pairs) x[pr.pos] += t * x[pr.vel];
    out.push_back(x);
  }
  return out;
}

inline double kalman_gain_norm(const EstimatorState& est) {
  if (!est.has_gain) throw StateError("kalman_gain_norm: no measurement update performed yet");
  return est.last_gain.norm();
}

}  // namespace slbal
