#pragma once

// Convex QP solver
//
//   minimize   1/2 z' H z + g' z
//   subject to l <= A z <= u
//
// Operator-splitting (ADMM) iteration in the style of OSQP: one Cholesky
// factorisation of H + sigma I + A' diag(rho) A per penalty value, a box
// projection per iteration, Ruiz equilibration, optional active-set polish and
// primal infeasibility certificates. Dense storage; the controller's QPs have
// at most a few hundred rows.
//
// Dual sign convention: H z + g + A' y = 0 at the optimum, y_i > 0 when the
// upper bound is active and y_i < 0 when the lower bound is active.

#include <Eigen/Cholesky>
#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <tuple>
#include <string>
#include <vector>

#include "slbal/errors.hpp"
#include "slbal/types.hpp"

namespace slbal {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

struct QpProblem {
  MatX H;
  VecX g;
  MatX A;
  VecX l;
  VecX u;

  Eigen::Index n() const { return g.size(); }
  Eigen::Index m() const { return l.size(); }

  void validate() const {
    const auto nn = n(), mm = m();
    if (H.rows() != nn || H.cols() != nn || A.rows() != mm || A.cols() != nn || u.size() != mm)
      throw InvalidInput("qp: dimension mismatch");
    if (!H.allFinite() || !g.allFinite() || !A.allFinite()) throw InvalidInput("qp: non-finite data");
    if (nn > 0 && (H - H.transpose()).cwiseAbs().maxCoeff() > 1e-12) throw InvalidInput("qp: H is not symmetric");
    for (Eigen::Index i = 0; i < mm; ++i) {
      if (std::isnan(l[i]) || std::isnan(u[i]) || l[i] > u[i]) throw InvalidInput("qp: bound with l > u");
      if (l[i] == kInf || u[i] == -kInf) throw InvalidInput("qp: bound is empty");
    }
  }

  double objective(const VecX& z) const { return 0.5 * z.dot(H * z) + g.dot(z); }
};

enum class QpStatus { solved, max_iters, infeasible };

inline const char* to_string(QpStatus s) {
  switch (s) {
    case QpStatus::solved: return "solved";
    case QpStatus::max_iters: return "max_iters";
    case QpStatus::infeasible: return "infeasible";
  }
  return "?";
}

struct QpSolution {
  VecX z;
  VecX dual;
  QpStatus status = QpStatus::max_iters;
  int iterations = 0;
  double primal_residual = kInf;
  double dual_residual = kInf;
  bool polished = false;
  std::vector<double> residual_history;  // max(primal, dual) per iteration, if requested
};

struct WarmStart {
  VecX z_init;
  VecX dual_init;
};

struct QpSettings {
  double tol = 1e-6;
  int max_iters = 4000;
  double rho = 0.1;
  double sigma = 1e-6;
  double alpha = 1.6;
  bool scaling = true;
  int scaling_iters = 10;
  bool adaptive_rho = true;
  int adaptive_rho_interval = 25;
  bool polish = true;
  double infeasibility_tol = 1e-7;
  bool record_history = false;
};

/// ‖clamp(Az, l, u) - Az‖_inf
inline double primal_residual(const QpProblem& p, const VecX& z) {
  const VecX az = p.A * z;
  return (az.cwiseMax(p.l).cwiseMin(p.u) - az).lpNorm<Eigen::Infinity>();
}

/// ‖Hz + g + A'y‖_inf
inline double dual_residual(const QpProblem& p, const VecX& z, const VecX& y) {
  return (p.H * z + p.g + p.A.transpose() * y).lpNorm<Eigen::Infinity>();
}

/// Diagonal scaling: original z = d ∘ z̄, original y = e ∘ ȳ / cost.
struct QpScaling {
  VecX d;
  VecX e;
  double cost = 1.0;

  static QpScaling identity(Eigen::Index n, Eigen::Index m) { return {VecX::Ones(n), VecX::Ones(m), 1.0}; }

  VecX unscale_z(const VecX& zs) const { return d.cwiseProduct(zs); }
  VecX unscale_dual(const VecX& ys) const { return e.cwiseProduct(ys) / cost; }
  VecX scale_z(const VecX& z) const { return z.cwiseQuotient(d); }
  VecX scale_dual(const VecX& y) const { return cost * y.cwiseQuotient(e); }
};

struct ScaledProblem {
  QpProblem problem;
  QpScaling scaling;
};

/// Ruiz equilibration of the KKT matrix [H A'; A 0] followed by cost scaling.
inline ScaledProblem scale_problem(const QpProblem& p, int iterations = 10) {
  p.validate();
  const Eigen::Index n = p.n(), m = p.m();
  ScaledProblem out{p, QpScaling::identity(n, m)};
  QpProblem& s = out.problem;
  auto bounded = [](double v) { return std::clamp(v, 1e-4, 1e4); };
  for (int it = 0; it < iterations; ++it) {
    VecX dd(n), ee(m);
    for (Eigen::Index j = 0; j < n; ++j) {
      double norm = s.H.col(j).lpNorm<Eigen::Infinity>();
      if (m > 0) norm = std::max(norm, s.A.col(j).lpNorm<Eigen::Infinity>());
      dd[j] = norm < 1e-12 ? 1.0 : bounded(1.0 / std::sqrt(norm));
    }
    for (Eigen::Index i = 0; i < m; ++i) {
      const double norm = s.A.row(i).lpNorm<Eigen::Infinity>();
      ee[i] = norm < 1e-12 ? 1.0 : bounded(1.0 / std::sqrt(norm));
    }
    s.H = dd.asDiagonal() * s.H * dd.asDiagonal();
    s.g = dd.cwiseProduct(s.g);
    s.A = ee.asDiagonal() * s.A * dd.asDiagonal();
    out.scaling.d = out.scaling.d.cwiseProduct(dd);
    out.scaling.e = out.scaling.e.cwiseProduct(ee);
  }
  if (n > 0) {
    double mean_col = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) mean_col += s.H.col(j).lpNorm<Eigen::Infinity>();
    mean_col /= static_cast<double>(n);
    double scale = std::max(mean_col, s.g.lpNorm<Eigen::Infinity>());
    const double c = scale < 1e-12 ? 1.0 : bounded(1.0 / scale);
    s.H *= c;
    s.g *= c;
    out.scaling.cost = c;
  }
  s.H = 0.5 * (s.H + s.H.transpose()).eval();
  for (Eigen::Index i = 0; i < m; ++i) {
    const double e = out.scaling.e[i];
    if (std::isfinite(s.l[i])) s.l[i] *= e;
    if (std::isfinite(s.u[i])) s.u[i] *= e;
  }
  return out;
}

/// Plain-text problem dump: header line "qp <n> <m>", then H (n rows), g, A (m rows), l, u.
/// Row-major, one matrix row per line, infinities written as inf / -inf.
inline void write_qp_text(std::ostream& os, const QpProblem& p) {
  os << "qp " << p.n() << ' ' << p.m() << '\n' << std::setprecision(17);
  auto row = [&](const auto& r) {
    for (Eigen::Index j = 0; j < r.size(); ++j) os << (j ? " " : "") << r[j];
    os << '\n';
  };
  for (Eigen::Index i = 0; i < p.n(); ++i) row(p.H.row(i));
  row(p.g);
  for (Eigen::Index i = 0; i < p.m(); ++i) row(p.A.row(i));
  row(p.l);
  row(p.u);
}

inline QpProblem read_qp_text(std::istream& is) {
  std::string tag;
  Eigen::Index n = 0, m = 0;
  if (!(is >> tag >> n >> m) || tag != "qp" || n < 0 || m < 0) throw InvalidInput("read_qp_text: bad header");
  auto next = [&] {
    std::string tok;
    if (!(is >> tok)) throw InvalidInput("read_qp_text: truncated input");
    try {
      return std::stod(tok);
    } catch (const std::exception&) {
      throw InvalidInput("read_qp_text: bad number '" + tok + "'");
    }
  };
  QpProblem p{MatX(n, n), VecX(n), MatX(m, n), VecX(m), VecX(m)};
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < n; ++j) p.H(i, j) = next();
  for (Eigen::Index j = 0; j < n; ++j) p.g[j] = next();
  for (Eigen::Index i = 0; i < m; ++i)
    for (Eigen::Index j = 0; j < n; ++j) p.A(i, j) = next();
  for (Eigen::Index i = 0; i < m; ++i) p.l[i] = next();
  for (Eigen::Index i = 0; i < m; ++i) p.u[i] = next();
  p.validate();
  return p;
}

/// Reusable solver. Holds the workspace and caches A' diag(rho) A while the
/// (scaled) constraint matrix stays the same between calls, which is the
/// common case for the receding-horizon controller.
class QpSolver {
 public:
  explicit QpSolver(QpSettings settings = {}) : settings_(settings) {}

  const QpSettings& settings() const { return settings_; }
  QpSettings& settings() { return settings_; }

  QpSolution solve(const QpProblem& problem, const WarmStart* warm = nullptr) {
    problem.validate();
    const Eigen::Index n = problem.n(), m = problem.m();
    if (warm && (warm->z_init.size() != n || warm->dual_init.size() != m))
      throw InvalidInput("qp: warm start dimensions do not match the problem");

    ScaledProblem sp = settings_.scaling ? scale_problem(problem, settings_.scaling_iters)
                                         : ScaledProblem{problem, QpScaling::identity(n, m)};
    const QpProblem& s = sp.problem;
    const QpScaling& sc = sp.scaling;

    // Penalty pattern relative to rho: equality rows stiff, free rows nearly off.
    VecX rho_rel(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      if (!std::isfinite(s.l[i]) && !std::isfinite(s.u[i]))
        rho_rel[i] = 1e-6;
      else if (s.u[i] - s.l[i] < 1e-12)
        rho_rel[i] = 1e3;
      else
        rho_rel[i] = 1.0;
    }
    if (!(cached_a_.rows() == m && cached_a_.cols() == n && cached_a_ == s.A && cached_rho_rel_ == rho_rel)) {
      cached_a_ = s.A;
      cached_rho_rel_ = rho_rel;
      at_rho_a_ = s.A.transpose() * rho_rel.asDiagonal() * s.A;
    }

    // A warm start also resumes from the penalty the previous solve ended with.
    double rho = warm && last_rho_ > 0 ? last_rho_ : settings_.rho;
    const double sigma = settings_.sigma, alpha = settings_.alpha;
    Eigen::LLT<MatX> llt;
    auto factor = [&] {
      MatX k = s.H + rho * at_rho_a_;
      k.diagonal().array() += sigma;
      llt.compute(k);
      if (llt.info() != Eigen::Success) throw NumericalFailure("qp: KKT factorisation failed");
    };
    factor();

    VecX x = warm ? sc.scale_z(warm->z_init) : VecX::Zero(n);
    VecX y = warm ? sc.scale_dual(warm->dual_init) : VecX::Zero(m);
    VecX ax = s.A * x;
    VecX z = ax.cwiseMax(s.l).cwiseMin(s.u);
    VecX aty = s.A.transpose() * y;

    QpSolution sol;
    VecX best_x = x, best_y = y;
    double best_res = kInf, best_prim = kInf, best_dual = kInf;
    VecX rhs(n), xt(n), zt(m), zhat(m), z_new(m), y_prev(m), aty_prev(n);

    auto residuals = [&](const VecX& xs, const VecX& axs, const VecX& atys) {
      const VecX ax_orig = axs.cwiseQuotient(sc.e);
      const double prim = m > 0 ? (ax_orig.cwiseMax(problem.l).cwiseMin(problem.u) - ax_orig).lpNorm<Eigen::Infinity>() : 0.0;
      const VecX dres = (s.H * xs + s.g + atys).cwiseQuotient(sc.d) / sc.cost;
      return std::pair{prim, dres.lpNorm<Eigen::Infinity>()};
    };

    int iter = 0;
    sol.status = QpStatus::max_iters;
    for (iter = 1; iter <= settings_.max_iters; ++iter) {
      rhs = sigma * x - s.g + s.A.transpose() * (rho * rho_rel.cwiseProduct(z) - y);
      xt = llt.solve(rhs);
      zt = s.A * xt;
      x = alpha * xt + (1.0 - alpha) * x;
      ax = alpha * zt + (1.0 - alpha) * ax;
      zhat = alpha * zt + (1.0 - alpha) * z;
      const VecX rho_vec = rho * rho_rel;
      z_new = (zhat + y.cwiseQuotient(rho_vec)).cwiseMax(s.l).cwiseMin(s.u);
      y_prev = y;
      y += rho_vec.cwiseProduct(zhat - z_new);
      z = z_new;
      aty_prev = aty;
      aty = s.A.transpose() * y;

      const auto [prim, dual] = residuals(x, ax, aty);
      const double res = std::max(prim, dual);
      if (settings_.record_history) sol.residual_history.push_back(res);
      if (res < best_res) {
        best_res = res;
        best_prim = prim;
        best_dual = dual;
        best_x = x;
        best_y = y;
      }
      if (prim <= settings_.tol && dual <= settings_.tol) {
        sol.status = QpStatus::solved;
        break;
      }
      if (m > 0 && certifies_infeasibility(problem, sc, y - y_prev, aty - aty_prev)) {
        sol.status = QpStatus::infeasible;
        break;
      }
      if (settings_.adaptive_rho && iter % settings_.adaptive_rho_interval == 0 && m > 0) {
        const double prim_s = (ax - z).lpNorm<Eigen::Infinity>();
        const double dual_s = (s.H * x + s.g + aty).lpNorm<Eigen::Infinity>();
        const double prim_n = std::max(ax.lpNorm<Eigen::Infinity>(), z.lpNorm<Eigen::Infinity>()) + 1e-30;
        const double dual_n = std::max({(s.H * x).lpNorm<Eigen::Infinity>(), aty.lpNorm<Eigen::Infinity>(),
                                        s.g.lpNorm<Eigen::Infinity>()}) + 1e-30;
        double rho_new = rho * std::sqrt((prim_s / prim_n) / (dual_s / dual_n + 1e-30));
        rho_new = std::clamp(rho_new, 1e-6, 1e6);
        if (std::isfinite(rho_new) && (rho_new > 5.0 * rho || rho_new < 0.2 * rho)) {
          rho = rho_new;
          factor();
        }
      }
    }
    sol.iterations = std::min(iter, settings_.max_iters);
    last_rho_ = rho;

    if (sol.status == QpStatus::solved) {
      sol.z = sc.unscale_z(x);
      sol.dual = sc.unscale_dual(y);
      std::tie(sol.primal_residual, sol.dual_residual) = residuals(x, ax, aty);
    } else if (sol.status == QpStatus::infeasible) {
      sol.z = sc.unscale_z(x);
      sol.dual = sc.unscale_dual(y - y_prev);  // certificate direction
      std::tie(sol.primal_residual, sol.dual_residual) = residuals(x, ax, aty);
    } else {
      sol.z = sc.unscale_z(best_x);
      sol.dual = sc.unscale_dual(best_y);
      sol.primal_residual = best_prim;
      sol.dual_residual = best_dual;
    }
    if (settings_.polish && sol.status != QpStatus::infeasible) polish(problem, sol);
    return sol;
  }

 private:
  bool certifies_infeasibility(const QpProblem& p, const QpScaling& sc, const VecX& dy_s, const VecX& atdy_s) const {
    const VecX dy = sc.unscale_dual(dy_s);
    const double dy_norm = dy.lpNorm<Eigen::Infinity>();
    if (dy_norm < 1e-12) return false;
    const double eps = settings_.infeasibility_tol * dy_norm;
    const VecX atdy = atdy_s.cwiseQuotient(sc.d) / sc.cost;
    if (atdy.lpNorm<Eigen::Infinity>() > eps) return false;
    double support = 0.0;
    for (Eigen::Index i = 0; i < dy.size(); ++i) {
      if (dy[i] > 0) {
        if (!std::isfinite(p.u[i])) {
          if (dy[i] > eps) return false;
          continue;
        }
        support += p.u[i] * dy[i];
      } else if (dy[i] < 0) {
        if (!std::isfinite(p.l[i])) {
          if (-dy[i] > eps) return false;
          continue;
        }
        support += p.l[i] * dy[i];
      }
    }
    return support < -eps;
  }

  /// Guess the active set from the duals and solve the equality-constrained
  /// KKT system; keep the result only if it is at least as good.
  void polish(const QpProblem& p, QpSolution& sol) const {
    const Eigen::Index n = p.n(), m = p.m();
    const VecX az = p.A * sol.z;
    std::vector<Eigen::Index> active;
    VecX target(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const bool lower = std::isfinite(p.l[i]) && az[i] - p.l[i] < -sol.dual[i];
      const bool upper = std::isfinite(p.u[i]) && p.u[i] - az[i] < sol.dual[i];
      if (lower || upper) {
        active.push_back(i);
        target[static_cast<Eigen::Index>(active.size()) - 1] = lower ? p.l[i] : p.u[i];
      }
    }
    const auto na = static_cast<Eigen::Index>(active.size());
    MatX kkt = MatX::Zero(n + na, n + na);
    kkt.topLeftCorner(n, n) = p.H;
    VecX rhs(n + na);
    rhs.head(n) = -p.g;
    for (Eigen::Index k = 0; k < na; ++k) {
      kkt.block(n + k, 0, 1, n) = p.A.row(active[k]);
      kkt.block(0, n + k, n, 1) = p.A.row(active[k]).transpose();
      rhs[n + k] = target[k];
    }
    constexpr double delta = 1e-9;
    MatX reg = kkt;
    reg.topLeftCorner(n, n).diagonal().array() += delta;
    reg.bottomRightCorner(na, na).diagonal().array() -= delta;
    Eigen::PartialPivLU<MatX> lu(reg);
    VecX sol_kkt = lu.solve(rhs);
    for (int refine = 0; refine < 5; ++refine) sol_kkt += lu.solve(rhs - kkt * sol_kkt);
    if (!sol_kkt.allFinite()) return;

    VecX z = sol_kkt.head(n);
    VecX y = VecX::Zero(m);
    for (Eigen::Index k = 0; k < na; ++k) {
      const double yk = sol_kkt[n + k];
      const Eigen::Index i = active[k];
      const bool is_lower = target[k] == p.l[i] && p.l[i] != p.u[i];
      const bool is_upper = target[k] == p.u[i] && p.l[i] != p.u[i];
      if ((is_lower && yk > settings_.tol) || (is_upper && yk < -settings_.tol)) return;  // wrong sign
      y[i] = yk;
    }
    const double prim = primal_residual(p, z), dual = dual_residual(p, z, y);
    if (prim <= settings_.tol && dual <= settings_.tol &&
        std::max(prim, dual) <= std::max(sol.primal_residual, sol.dual_residual)) {
      sol.z = z;
      sol.dual = y;
      sol.primal_residual = prim;
      sol.dual_residual = dual;
      sol.polished = true;
      sol.status = QpStatus::solved;
    }
  }

  QpSettings settings_;
  double last_rho_ = 0.0;
  MatX cached_a_;
  VecX cached_rho_rel_;
  MatX at_rho_a_;
};

/// One-shot solve with default settings apart from tolerance and iteration cap.
inline QpSolution solve(const QpProblem& p, const std::optional<WarmStart>& warm = std::nullopt, double tol = 1e-6,
                        int max_iters = 4000) {
  QpSettings s;
  s.tol = tol;
  s.max_iters = max_iters;
  QpSolver solver(s);
  return solver.solve(p, warm ? &*warm : nullptr);
}

}  // namespace slbal
