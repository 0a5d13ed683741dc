#pragma once

// Offline outcome measures on trial logs.

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <vector>

#include "slbal/errors.hpp"
#include "slbal/sim.hpp"

namespace slbal {

inline constexpr double kMetricsCutoff = 2.0;  // Hz

/// Coefficients of the bilinear-transform first-order Butterworth low-pass:
/// y[n] = b (x[n] + x[n-1]) - a y[n-1].
struct Butterworth1 {
  double b;
  double a;

  static Butterworth1 design(double fc, double fs) {
    if (!(fc > 0) || !(fs > 2 * fc) || !std::isfinite(fs)) throw InvalidInput("butterworth: need fs > 2 fc > 0");
    const double k = std::tan(M_PI * fc / fs);
    return {k / (1 + k), (k - 1) / (k + 1)};
  }

  std::vector<double> pass(const std::vector<double>& x) const {
    std::vector<double> y(x.size());
    if (x.empty()) return y;
    double xp = x[0], yp = x[0];  // start in steady state on the first sample
    for (std::size_t i = 0; i < x.size(); ++i) {
      y[i] = b * (x[i] + xp) - a * yp;
      xp = x[i];
      yp = y[i];
    }
    return y;
  }
};

/// Zero-phase (forward-backward) first-order Butterworth.
inline std::vector<double> butterworth1_lowpass(const std::vector<double>& x, double fc, double fs) {
  const auto f = Butterworth1::design(fc, fs);
  std::vector<double> y = f.pass(x);
  std::reverse(y.begin(), y.end());
  y = f.pass(y);
  std::reverse(y.begin(), y.end());
  return y;
}

struct DistanceSeries {
  std::vector<double> times;
  std::vector<double> values;
  ScenarioKind scenario = ScenarioKind::frontal_bow;
  Condition condition = Condition::honly;
};

inline DistanceSeries com_sup_series(const TrialLog& log, bool use_truth = true) {
  DistanceSeries s{{}, {}, log.scenario.kind, log.condition};
  s.times.reserve(log.ticks.size());
  std::vector<double> raw;
  raw.reserve(log.ticks.size());
  for (const auto& r : log.ticks) {
    const StateVector48& x = use_truth ? r.truth : r.estimate;
    s.times.push_back(r.time);
    raw.push_back((state48::com(x) - state48::sup(x)).norm());
  }
  if (raw.size() >= 2) raw = butterworth1_lowpass(raw, kMetricsCutoff, log.control_rate);
  for (double& v : raw) v = std::max(v, 0.0);
  s.values = std::move(raw);
  return s;
}

/// Filtered true CoM path and its central-difference acceleration.
struct ComKinematics {
  std::vector<double> times;
  std::vector<Vec2> com;
  std::vector<Vec2> accel;
  std::vector<Vec2> sup;
  std::vector<double> height;
};

inline ComKinematics filtered_com(const TrialLog& log) {
  ComKinematics k;
  const std::size_t n = log.ticks.size();
  std::vector<double> px(n), py(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& r = log.ticks[i];
    k.times.push_back(r.time);
    px[i] = r.truth[layout::kCom];
    py[i] = r.truth[layout::kCom + 1];
    k.sup.push_back(state48::sup(r.truth));
    k.height.push_back(r.com_height);
  }
  if (n >= 2) {
    px = butterworth1_lowpass(px, kMetricsCutoff, log.control_rate);
    py = butterworth1_lowpass(py, kMetricsCutoff, log.control_rate);
  }
  k.com.resize(n);
  k.accel.assign(n, Vec2::Zero());
  for (std::size_t i = 0; i < n; ++i) k.com[i] = Vec2(px[i], py[i]);
  const double h = 1.0 / log.control_rate;
  for (std::size_t i = 1; i + 1 < n; ++i) k.accel[i] = (k.com[i + 1] - 2.0 * k.com[i] + k.com[i - 1]) / (h * h);
  if (n >= 3) {
    k.accel.front() = k.accel[1];
    k.accel.back() = k.accel[n - 2];
  }
  return k;
}

inline DistanceSeries cop_sup_series(const TrialLog& log) {
  const ComKinematics k = filtered_com(log);
  DistanceSeries s{k.times, {}, log.scenario.kind, log.condition};
  s.values.reserve(k.times.size());
  for (std::size_t i = 0; i < k.times.size(); ++i)
    s.values.push_back((cop_proxy(k.com[i], k.accel[i], k.height[i]) - k.sup[i]).norm());
  return s;
}

inline std::vector<Vec2> grf_series(const TrialLog& log) {
  const ComKinematics k = filtered_com(log);
  std::vector<Vec2> f;
  f.reserve(k.accel.size());
  for (const auto& a : k.accel) f.push_back(grf_proxy(a, log.total_mass));
  return f;
}

/// Trapezoidal time average.
inline double mean_distance(const DistanceSeries& s) {
  if (s.values.empty() || s.values.size() != s.times.size()) throw InvalidInput("mean_distance: empty or ragged series");
  if (s.values.size() == 1) return s.values[0];
  double area = 0.0;
  for (std::size_t i = 1; i < s.values.size(); ++i)
    area += 0.5 * (s.values[i] + s.values[i - 1]) * (s.times[i] - s.times[i - 1]);
  const double span = s.times.back() - s.times.front();
  if (!(span > 0)) throw InvalidInput("mean_distance: non-increasing time stamps");
  return area / span;
}

struct ForceEllipse {
  Vec2 center = Vec2::Zero();
  Vec2 semi_axes = Vec2::Zero();  // major, minor
  double orientation = 0.0;       // rad, major axis from +x
  bool degenerate = false;
};

/// Covariance ellipse scaled to the chi-square (2 dof) quantile for `coverage`.
inline ForceEllipse force_ellipse(const std::vector<Vec2>& f, double coverage = 0.95) {
  if (f.size() < 3) throw InvalidInput("force_ellipse: need at least 3 samples");
  if (!(coverage > 0) || !(coverage < 1)) throw InvalidInput("force_ellipse: coverage must lie in (0, 1)");
  ForceEllipse e;
  for (const auto& v : f) e.center += v;
  e.center /= static_cast<double>(f.size());
  Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
  for (const auto& v : f) cov += (v - e.center) * (v - e.center).transpose();
  cov /= static_cast<double>(f.size() - 1);

  const Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
  const double chi2 = -2.0 * std::log(1.0 - coverage);
  const double scale = std::max(1.0, e.center.norm() + std::sqrt(cov.trace()));
  const double floor = std::numeric_limits<double>::epsilon() * scale;
  const double lmax = es.eigenvalues()[1], lmin = es.eigenvalues()[0];
  if (!(lmin > floor * floor)) e.degenerate = true;
  e.semi_axes = Vec2(std::max(std::sqrt(std::max(lmax, 0.0) * chi2), floor), std::max(std::sqrt(std::max(lmin, 0.0) * chi2), floor));
  const Vec2 major = es.eigenvectors().col(1);
  e.orientation = std::atan2(major.y(), major.x());
  return e;
}

/// Per-trial scalars used in summaries.
struct TrialMetrics {
  double com_sup = 0.0;
  double cop_sup = 0.0;
  double mean_u = 0.0;  // rad/s^2, mean |u|
  ForceEllipse grf;
};

inline TrialMetrics trial_metrics(const TrialLog& log) {
  TrialMetrics m;
  m.com_sup = mean_distance(com_sup_series(log, true));
  m.cop_sup = mean_distance(cop_sup_series(log));
  m.grf = force_ellipse(grf_series(log));
  double s = 0.0;
  for (const auto& r : log.ticks) s += r.u.norm();
  m.mean_u = log.ticks.empty() ? 0.0 : s / static_cast<double>(log.ticks.size());
  return m;
}

struct Stat {
  double mean = 0.0;
  double sd = 0.0;
};

/// Mean and sample standard deviation; values are sorted first so the result
/// does not depend on trial order.
inline Stat mean_sd(std::vector<double> v) {
  if (v.empty()) throw InvalidInput("mean_sd: no values");
  std::sort(v.begin(), v.end());
  Stat s;
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - s.mean) * (x - s.mean);
    s.sd = std::sqrt(ss / static_cast<double>(v.size() - 1));
  }
  return s;
}

struct ConditionSummary {
  Condition condition = Condition::honly;
  int trials = 0;
  Stat com_sup;
  Stat cop_sup;
  Stat mean_u;
  Stat ellipse_center_x, ellipse_center_y, ellipse_major, ellipse_minor;
};

struct Summary {
  ScenarioKind scenario = ScenarioKind::frontal_bow;
  std::vector<ConditionSummary> rows;  // honly, nocomp, comp order
  bool comp_below_honly_com = false;
  bool honly_below_nocomp_com = false;
  bool comp_below_nocomp_com = false;
  bool comp_below_nocomp_cop = false;

  const ConditionSummary& row(Condition c) const {
    for (const auto& r : rows)
      if (r.condition == c) return r;
    throw InvalidInput("summary: condition missing");
  }
};

inline Summary condition_summary(const std::map<Condition, std::vector<TrialMetrics>>& per_condition,
                                 ScenarioKind scenario) {
  Summary s;
  s.scenario = scenario;
  for (Condition c : kAllConditions) {
    const auto it = per_condition.find(c);
    if (it == per_condition.end() || it->second.empty()) throw InvalidInput(std::string("summary: no trials for ") + to_string(c));
    const auto& ms = it->second;
    auto collect = [&](auto field) {
      std::vector<double> v;
      for (const auto& m : ms) v.push_back(field(m));
      return mean_sd(std::move(v));
    };
    ConditionSummary row;
    row.condition = c;
    row.trials = static_cast<int>(ms.size());
    row.com_sup = collect([](const TrialMetrics& m) { return m.com_sup; });
    row.cop_sup = collect([](const TrialMetrics& m) { return m.cop_sup; });
    row.mean_u = collect([](const TrialMetrics& m) { return m.mean_u; });
    row.ellipse_center_x = collect([](const TrialMetrics& m) { return m.grf.center.x(); });
    row.ellipse_center_y = collect([](const TrialMetrics& m) { return m.grf.center.y(); });
    row.ellipse_major = collect([](const TrialMetrics& m) { return m.grf.semi_axes.x(); });
    row.ellipse_minor = collect([](const TrialMetrics& m) { return m.grf.semi_axes.y(); });
    s.rows.push_back(row);
  }
  const auto& h = s.row(Condition::honly);
  const auto& n = s.row(Condition::nocomp);
  const auto& c = s.row(Condition::comp);
  s.comp_below_honly_com = c.com_sup.mean < h.com_sup.mean;
  s.honly_below_nocomp_com = h.com_sup.mean < n.com_sup.mean;
  s.comp_below_nocomp_com = c.com_sup.mean < n.com_sup.mean;
  s.comp_below_nocomp_cop = c.cop_sup.mean < n.cop_sup.mean;
  return s;
}

}  // namespace slbal
