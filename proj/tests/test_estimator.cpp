#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <cmath>

#include "slbal/estimator.hpp"
#include "support/oracles.hpp"

using namespace slbal;

namespace {

Observation obs(const StateVector48& x, double t) {
  Observation z;
  z.positions = state48::positions(x);
  z.time = t;
  return z;
}

EstimatorState started(const StateVector48& x0, EstimatorNoise noise = {}) {
  const Observation z = obs(x0, 0.0);
  return lqe_update(make_estimator(z, noise), z);
}

double min_eig(const Mat48& p) {
  return Eigen::SelfAdjointEigenSolver<Mat48>(p, Eigen::EigenvaluesOnly).eigenvalues()[0];
}

}  // namespace

TEST(Layout, FortyEightEntriesInDocumentedOrder) {
  EXPECT_EQ(kStateDim, 48);
  EXPECT_EQ(layout::arm_point(1, layout::kWrist) + 3 + layout::kArmVelOffset, 48);
  EXPECT_EQ(layout::arm_point(0, layout::kShoulder), 12);
  EXPECT_EQ(layout::arm_point_vel(0, layout::kShoulder), 21);
  EXPECT_EQ(layout::arm_point(1, layout::kShoulder), 30);
  // Every index is used exactly once by the position/velocity pairs.
  std::vector<int> hits(48, 0);
  for (const auto& pr : layout::pairs()) {
    ++hits[static_cast<std::size_t>(pr.pos)];
    ++hits[static_cast<std::size_t>(pr.vel)];
  }
  for (int h : hits) EXPECT_EQ(h, 1);
}

TEST(Layout, PositionsRoundTrip) {
  oracle::Gen g(1);
  ObsVector z;
  for (int k = 0; k < kObsDim; ++k) z[k] = g.normal();
  EXPECT_EQ(state48::positions(state48::from_positions(z)), z);
}

TEST(Predict, StationaryStateKeepsPositionsAndGrowsCovariance) {
  oracle::Gen g(2);
  StateVector48 x = StateVector48::Zero();
  for (const auto& pr : layout::pairs()) x[pr.pos] = g.normal();
  const EstimatorState e0 = started(x);
  const EstimatorState e1 = lqe_predict(e0, 0.01);
  EXPECT_EQ(state48::positions(e1.x_hat), state48::positions(e0.x_hat));
  EXPECT_GT(e1.covariance.trace(), e0.covariance.trace());
}

TEST(Predict, ConstantVelocity) {
  EstimatorState e = started(StateVector48::Zero());
  e.x_hat.segment<2>(layout::kComVel) = Vec2(0.1, 0.0);
  e = lqe_predict(e, 0.5);
  EXPECT_NEAR(e.x_hat[layout::kCom], 0.05, 1e-15);
  EXPECT_EQ(e.x_hat[layout::kCom + 1], 0.0);
}

TEST(Predict, RejectsNonPositiveStep) {
  const EstimatorState e = started(StateVector48::Zero());
  EXPECT_THROW(lqe_predict(e, 0.0), InvalidInput);
  EXPECT_THROW(lqe_predict(e, -1e-3), InvalidInput);
}

TEST(Predict, TwoHalfStepsEqualOneStep) {
  oracle::Gen g(3);
  for (int k = 0; k < 20; ++k) {
    StateVector48 x;
    for (int i = 0; i < kStateDim; ++i) x[i] = g.normal();
    EstimatorNoise noise;
    noise.q_com = g.uniform(0, 1);
    noise.q_sl = g.uniform(0, 1);
    EstimatorState e = started(x, noise);
    e.x_hat = x;
    const double dt = g.uniform(1e-3, 0.2);
    const EstimatorState one = lqe_predict(e, dt);
    const EstimatorState two = lqe_predict(lqe_predict(e, dt / 2), dt / 2);
    EXPECT_LT((one.x_hat - two.x_hat).lpNorm<Eigen::Infinity>(), 1e-14);
    EXPECT_LT((one.covariance - two.covariance).lpNorm<Eigen::Infinity>(), 1e-10);
  }
}

TEST(Predict, MatchesDenseTransitionOracle) {
  // P <- F P F' + Q built as explicit 48x48 matrices.
  oracle::Gen g(4);
  StateVector48 x;
  for (int i = 0; i < kStateDim; ++i) x[i] = g.normal();
  EstimatorNoise noise;
  noise.q_com = 0.3;
  noise.q_sup = 0.1;
  noise.q_hcom = 0.2;
  noise.q_sl = 0.05;
  EstimatorState e = started(x, noise);
  const double dt = 0.02;
  Mat48 f = Mat48::Identity(), q = Mat48::Zero();
  for (const auto& pr : layout::pairs()) {
    f(pr.pos, pr.vel) = dt;
    const double s = noise.intensity(pr.group);
    q(pr.pos, pr.pos) = s * dt * dt * dt / 3;
    q(pr.pos, pr.vel) = q(pr.vel, pr.pos) = s * dt * dt / 2;
    q(pr.vel, pr.vel) = s * dt;
  }
  const EstimatorState out = lqe_predict(e, dt);
  EXPECT_LT((out.x_hat - f * e.x_hat).norm(), 1e-14);
  EXPECT_LT((out.covariance - (f * e.covariance * f.transpose() + q)).lpNorm<Eigen::Infinity>(), 1e-14);
}

TEST(Update, UninformativeMeasurementLeavesEstimate) {
  EstimatorNoise noise;
  noise.measurement_sigma = 1e8;
  EstimatorState e = make_estimator(obs(StateVector48::Zero(), 0.0), noise);
  StateVector48 x = StateVector48::Zero();
  x[layout::kCom] = 1.0;
  e = lqe_update(e, obs(x, 0.01));
  EXPECT_LT(e.x_hat.norm(), 1e-15);
  EXPECT_LT(kalman_gain_norm(e), 1e-15);
}

TEST(Update, PerfectMeasurementIsAdopted) {
  EstimatorNoise noise;
  noise.measurement_sigma = 0.0;
  oracle::Gen g(5);
  EstimatorState e = make_estimator(obs(StateVector48::Zero(), 0.0), noise);
  StateVector48 x;
  for (int i = 0; i < kStateDim; ++i) x[i] = g.normal();
  e = lqe_update(lqe_predict(e, 0.01), obs(x, 0.01));
  EXPECT_LT((state48::positions(e.x_hat) - state48::positions(x)).lpNorm<Eigen::Infinity>(), 1e-12);
}

TEST(Update, ScalarKalmanGainByHand) {
  // Single pos/vel pair with prior P = diag(p0, v0), one predict of dt and one update.
  const double p0 = 0.04, v0 = 0.25, q = 0.3, r = 0.01, dt = 0.1;
  EstimatorNoise noise;
  noise.initial_pos_sigma = std::sqrt(p0);
  noise.initial_vel_sigma = std::sqrt(v0);
  noise.q_com = q;
  noise.measurement_sigma = std::sqrt(r);
  EstimatorState e = make_estimator(obs(StateVector48::Zero(), 0.0), noise);
  e = lqe_predict(e, dt);
  StateVector48 x = StateVector48::Zero();
  x[layout::kCom] = 0.2;
  e = lqe_update(e, obs(x, dt));

  const double ppp = p0 + dt * dt * v0 + q * dt * dt * dt / 3;
  const double ppv = dt * v0 + q * dt * dt / 2;
  const double s = ppp + r;
  const double k_pos = ppp / s, k_vel = ppv / s;
  EXPECT_NEAR(e.last_gain(layout::kCom, 0), k_pos, 1e-14);
  EXPECT_NEAR(e.last_gain(layout::kComVel, 0), k_vel, 1e-14);
  EXPECT_NEAR(e.x_hat[layout::kCom], k_pos * 0.2, 1e-14);
  EXPECT_NEAR(e.x_hat[layout::kComVel], k_vel * 0.2, 1e-14);
  EXPECT_NEAR(e.covariance(layout::kCom, layout::kCom), (1 - k_pos) * ppp, 1e-14);
}

TEST(Update, PredictedMeasurementLeavesEstimate) {
  oracle::Gen g(6);
  StateVector48 x;
  for (int i = 0; i < kStateDim; ++i) x[i] = g.normal();
  EstimatorState e = started(x);
  e.x_hat = x;
  e = lqe_predict(e, 0.01);
  const StateVector48 before = e.x_hat;
  e = lqe_update(e, obs(before, 0.01));
  EXPECT_LT((e.x_hat - before).lpNorm<Eigen::Infinity>(), 1e-15);
}

TEST(Update, TraceDoesNotIncrease) {
  oracle::Gen g(7);
  EstimatorState e = started(StateVector48::Zero());
  for (int k = 1; k <= 50; ++k) {
    e = lqe_predict(e, 0.01);
    const double before = e.covariance.trace();
    StateVector48 x;
    for (int i = 0; i < kStateDim; ++i) x[i] = g.normal();
    e = lqe_update(e, obs(x, 0.01 * k));
    EXPECT_LE(e.covariance.trace(), before);
  }
}

TEST(Update, RejectsOutOfOrderAndNonFinite) {
  EstimatorState e = started(StateVector48::Zero());
  EXPECT_THROW(lqe_update(e, obs(StateVector48::Zero(), 0.0)), InvalidInput);
  Observation bad = obs(StateVector48::Zero(), 1.0);
  bad.positions[3] = NAN;
  EXPECT_THROW(lqe_update(e, bad), InvalidInput);
}

TEST(Covariance, StaysSymmetricPsdUnderRandomSequences) {
  oracle::Gen g(8);
  EstimatorNoise noise;
  noise.measurement_sigma = 1e-4;
  EstimatorState e = started(StateVector48::Zero(), noise);
  double t = 0;
  for (int k = 0; k < 300; ++k) {
    if (g.coin(0.7)) {
      const double dt = g.uniform(1e-4, 0.05);
      e = lqe_predict(e, dt);
      t += dt;
    } else {
      StateVector48 x;
      for (int i = 0; i < kStateDim; ++i) x[i] = g.normal();
      t += 1e-6;
      e = lqe_update(e, obs(x, t));
    }
    EXPECT_LT((e.covariance - e.covariance.transpose()).lpNorm<Eigen::Infinity>(), 1e-12);
    EXPECT_GE(min_eig(e.covariance), -1e-9);
  }
}

TEST(Horizon, ModelMatchedTruthIsExact) {
  oracle::Gen g(9);
  StateVector48 x;
  for (int i = 0; i < kStateDim; ++i) x[i] = g.normal();
  EstimatorState e = started(x);
  e.x_hat = x;
  const auto pred = predict_horizon(e, 0.5, 10);
  ASSERT_EQ(pred.size(), 10u);
  for (int k = 0; k < 10; ++k) {
    const double t = 0.05 * (k + 1);
    for (const auto& pr : layout::pairs()) {
      EXPECT_NEAR(pred[static_cast<std::size_t>(k)][pr.pos], x[pr.pos] + t * x[pr.vel], 1e-14);
      EXPECT_EQ(pred[static_cast<std::size_t>(k)][pr.vel], x[pr.vel]);
    }
  }
  EXPECT_EQ(e.x_hat, x);  // input untouched
}

TEST(Horizon, SingleStepEqualsPredict) {
  oracle::Gen g(10);
  StateVector48 x;
  for (int i = 0; i < kStateDim; ++i) x[i] = g.normal();
  EstimatorState e = started(x);
  e.x_hat = x;
  const auto pred = predict_horizon(e, 0.3, 1);
  EXPECT_LT((pred[0] - lqe_predict(e, 0.3).x_hat).lpNorm<Eigen::Infinity>(), 1e-15);
}

TEST(Horizon, ErrorGrowsWithHorizonOnSinusoid) {
  // Track a 0.5 Hz sinusoid in the CoM x coordinate, then compare
  // open-loop predictions at 0.1 s and 0.5 s against the truth.
  const double w = M_PI, amp = 0.05;
  auto truth = [&](double t) {
    StateVector48 x = StateVector48::Zero();
    x[layout::kCom] = amp * std::sin(w * t);
    x[layout::kComVel] = amp * w * std::cos(w * t);
    return x;
  };
  EstimatorNoise noise;
  noise.q_com = 1e-2;
  EstimatorState e = started(truth(0), noise);
  double se_short = 0, se_long = 0;
  int n = 0;
  for (int k = 1; k <= 600; ++k) {
    const double t = 0.01 * k;
    e = lqe_update(lqe_predict(e, 0.01), obs(truth(t), t));
    if (t < 1.0) continue;
    const auto pred = predict_horizon(e, 0.5, 5);
    se_short += std::pow(pred[0][layout::kCom] - truth(t + 0.1)[layout::kCom], 2);
    se_long += std::pow(pred[4][layout::kCom] - truth(t + 0.5)[layout::kCom], 2);
    ++n;
  }
  EXPECT_GT(std::sqrt(se_long / n), std::sqrt(se_short / n));
}

TEST(Horizon, RejectsBadArguments) {
  const EstimatorState e = started(StateVector48::Zero());
  EXPECT_THROW(predict_horizon(e, 0.0, 10), InvalidInput);
  EXPECT_THROW(predict_horizon(e, 0.5, 0), InvalidInput);
}

TEST(GainNorm, RequiresAnUpdate) {
  const EstimatorState e = make_estimator(obs(StateVector48::Zero(), 0.0), {});
  EXPECT_THROW(kalman_gain_norm(e), StateError);
}

TEST(GainNorm, KnownMatrices) {
  EstimatorState e = started(StateVector48::Zero());
  e.last_gain.setZero();
  EXPECT_EQ(kalman_gain_norm(e), 0.0);
  e.last_gain(5, 7) = 3.0;
  EXPECT_EQ(kalman_gain_norm(e), 3.0);
}

TEST(GainNorm, DirectSummation) {
  oracle::Gen g(11);
  EstimatorState e = started(StateVector48::Zero());
  double ss = 0;
  for (int i = 0; i < kStateDim; ++i)
    for (int j = 0; j < kObsDim; ++j) {
      e.last_gain(i, j) = g.normal();
      ss += e.last_gain(i, j) * e.last_gain(i, j);
    }
  EXPECT_NEAR(kalman_gain_norm(e), std::sqrt(ss), 1e-12);
}

TEST(GainNorm, InvariantUnderRowPermutation) {
  oracle::Gen g(12);
  EstimatorState e = started(StateVector48::Zero());
  for (int i = 0; i < kStateDim; ++i)
    for (int j = 0; j < kObsDim; ++j) e.last_gain(i, j) = g.normal();
  const double before = kalman_gain_norm(e);
  Eigen::PermutationMatrix<kStateDim> perm;
  perm.setIdentity();
  std::shuffle(perm.indices().data(), perm.indices().data() + kStateDim, g.rng);
  e.last_gain = perm * e.last_gain;
  EXPECT_NEAR(kalman_gain_norm(e), before, 1e-12);
}

TEST(Tracking, ConstantVelocityStreamConverges) {
  oracle::Gen g(13);
  const double sigma = 1e-3;
  StateVector48 x0 = StateVector48::Zero();
  for (const auto& pr : layout::pairs()) {
    x0[pr.pos] = g.uniform(-0.5, 0.5);
    x0[pr.vel] = (g.coin(0.5) ? 1 : -1) * g.uniform(0.05, 0.2);
  }
  auto truth = [&](double t) {
    StateVector48 x = x0;
    for (const auto& pr : layout::pairs()) x[pr.pos] += t * x0[pr.vel];
    return x;
  };
  std::normal_distribution<double> nd(0.0, sigma);
  auto noisy = [&](double t) {
    Observation z = obs(truth(t), t);
    for (int k = 0; k < kObsDim; ++k) z.positions[k] += nd(g.rng);
    return z;
  };
  EstimatorState e = lqe_update(make_estimator(noisy(0), {}), noisy(0));
  double se = 0, ve = 0, vr = 0;
  int n = 0;
  for (int k = 1; k <= 600; ++k) {
    const double t = 0.01 * k;
    e = lqe_update(lqe_predict(e, 0.01), noisy(t));
    if (t < 2.0) continue;
    const StateVector48 x = truth(t);
    for (const auto& pr : layout::pairs()) {
      se += std::pow(e.x_hat[pr.pos] - x[pr.pos], 2);
      ve += std::pow(e.x_hat[pr.vel] - x[pr.vel], 2);
      vr += x[pr.vel] * x[pr.vel];
      ++n;
    }
  }
  EXPECT_LT(std::sqrt(se / n), sigma / 2);
  EXPECT_LT(std::sqrt(ve / vr), 0.05);
}
