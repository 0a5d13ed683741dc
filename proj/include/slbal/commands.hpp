#pragma once

// Command implementations behind the `slbal` executable.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "slbal/config.hpp"
#include "slbal/io.hpp"
#include "slbal/metrics.hpp"
#include "slbal/sim.hpp"

namespace slbal {

enum ExitCode : int { kExitOk = 0, kExitVerdictFail = 1, kExitUsage = 2 };

struct CommandOptions {
  ScenarioKind scenario = ScenarioKind::frontal_bow;
  Condition condition = Condition::comp;
  RunSettings settings;
  std::string out_dir = "out";
  int trials = 1;
  bool timing = false;
  bool write_trials = true;
  unsigned jobs = 0;  // 0: hardware concurrency
};

namespace cmd_detail {

namespace fs = std::filesystem;

inline std::string trial_stem(const TrialLog& log) {
  return std::string("trial_") + to_string(log.scenario.kind) + "_" + to_string(log.condition) + "_seed" +
         std::to_string(log.seed);
}

inline std::ofstream open_out(const fs::path& p) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw InvalidInput("cannot write " + p.string());
  return os;
}

inline void write_trial(const fs::path& dir, const TrialLog& log, const TrialMetrics& m, bool timing) {
  const std::string stem = trial_stem(log);
  {
    auto os = open_out(dir / (stem + ".csv"));
    write_trial_csv(os, log, timing);
  }
  auto meta = trial_metadata(log);
  meta["com_sup_mean"] = io_detail::num(m.com_sup);
  meta["cop_sup_mean"] = io_detail::num(m.cop_sup);
  auto os = open_out(dir / (stem + ".meta"));
  write_metadata(os, meta);
}

inline void write_config(const fs::path& dir, const RunSettings& s) {
  auto os = open_out(dir / "config.cfg");
  os << "# effective configuration, hash " << config_hash(s) << '\n' << dump_config(s);
}

/// Runs `jobs` independent tasks on worker threads; results land in task order.
template <typename F>
void parallel_for(std::size_t n, unsigned jobs, F&& body) {
  if (jobs == 0) jobs = std::max(1u, std::thread::hardware_concurrency());
  jobs = static_cast<unsigned>(std::min<std::size_t>(jobs, n));
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(jobs);
  for (unsigned w = 0; w < jobs; ++w)
    pool.emplace_back([&, w] {
      try {
        for (std::size_t i = w; i < n; i += jobs) body(i);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace cmd_detail

/// Single trial. Writes the trial CSV, its metadata and the effective config.
inline int cmd_run(const CommandOptions& opt, std::ostream& out) {
  namespace fs = std::filesystem;
  const SimConfig cfg = opt.settings.sim_config();
  const TrialScenario sc = opt.settings.scenario(opt.scenario);
  TrialLog log = run_trial(sc, opt.condition, cfg);
  log.config_hash = config_hash(opt.settings);
  const TrialMetrics m = trial_metrics(log);

  fs::create_directories(opt.out_dir);
  cmd_detail::write_trial(opt.out_dir, log, m, opt.timing);
  cmd_detail::write_config(opt.out_dir, opt.settings);

  out << "scenario " << to_string(sc.kind) << ", condition " << to_string(opt.condition) << ", seed " << log.seed << '\n';
  out << "mean CoM-SUP distance: " << m.com_sup << " m\n";
  out << "mean CoP-SUP distance: " << m.cop_sup << " m\n";
  if (log.safe_stops > 0) out << "note: " << log.safe_stops << " solver safe-stop tick(s)\n";
  if (log.degraded > 0) out << "note: " << log.degraded << " tick(s) used an unconverged QP iterate\n";
  out << "wrote " << (fs::path(opt.out_dir) / (cmd_detail::trial_stem(log) + ".csv")).string() << '\n';
  return kExitOk;
}

struct CompareResult {
  Summary summary;
  std::map<Condition, std::vector<TrialLog>> logs;
  std::map<Condition, std::vector<TrialMetrics>> metrics;
};

/// All three conditions, `trials` seeds each (seed, seed + 1, ...).
inline CompareResult run_comparison(const RunSettings& settings, ScenarioKind kind, int trials, unsigned jobs,
                                    bool keep_logs) {
  if (trials < 1) throw InvalidInput("trials must be at least 1");
  const SimConfig base = settings.sim_config();
  const TrialScenario sc = settings.scenario(kind);
  const std::string hash = config_hash(settings);

  struct Task {
    Condition cond;
    int trial;
  };
  std::vector<Task> tasks;
  for (Condition c : kAllConditions)
    for (int t = 0; t < trials; ++t) tasks.push_back({c, t});
  std::vector<TrialLog> logs(tasks.size());
  std::vector<TrialMetrics> metrics(tasks.size());
  cmd_detail::parallel_for(tasks.size(), jobs, [&](std::size_t i) {
    SimConfig cfg = base;
    cfg.seed = base.seed + static_cast<std::uint64_t>(tasks[i].trial);
    TrialLog log = run_trial(sc, tasks[i].cond, cfg);
    log.config_hash = hash;
    metrics[i] = trial_metrics(log);
    if (keep_logs) logs[i] = std::move(log);
  });

  CompareResult r;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    r.metrics[tasks[i].cond].push_back(metrics[i]);
    if (keep_logs) r.logs[tasks[i].cond].push_back(std::move(logs[i]));
  }
  r.summary = condition_summary(r.metrics, kind);
  return r;
}

inline const char* verdict(bool ok) { return ok ? "PASS" : "FAIL"; }

/// Comparison across conditions with summary CSV and SVG panels.
/// Exit status 0 iff Comp's mean CoM-SUP distance beats both other conditions.
inline int cmd_compare(const CommandOptions& opt, std::ostream& out) {
  namespace fs = std::filesystem;
  const CompareResult r = run_comparison(opt.settings, opt.scenario, opt.trials, opt.jobs, true);
  const Summary& s = r.summary;
  const fs::path dir = opt.out_dir;
  fs::create_directories(dir);
  cmd_detail::write_config(dir, opt.settings);
  if (opt.write_trials)
    for (const auto& [c, logs] : r.logs)
      for (std::size_t i = 0; i < logs.size(); ++i) cmd_detail::write_trial(dir, logs[i], r.metrics.at(c)[i], opt.timing);

  const std::string tag = to_string(opt.scenario);
  {
    auto os = cmd_detail::open_out(dir / ("summary_" + tag + ".csv"));
    write_summary_csv(os, {s});
  }
  {
    std::vector<DistanceSeries> series;
    std::vector<std::pair<Condition, std::vector<Vec2>>> forces;
    std::vector<std::pair<Condition, ForceEllipse>> ellipses;
    for (const auto& [c, logs] : r.logs) {
      series.push_back(com_sup_series(logs.front()));
      forces.emplace_back(c, grf_series(logs.front()));
      ellipses.emplace_back(c, r.metrics.at(c).front().grf);
    }
    auto d = cmd_detail::open_out(dir / ("com_sup_" + tag + ".svg"));
    write_distance_svg(d, series, "CoM-SUP distance, " + tag + " bow");
    auto g = cmd_detail::open_out(dir / ("grf_" + tag + ".svg"));
    write_grf_svg(g, forces, ellipses, "Horizontal GRF, " + tag + " bow");
  }

  for (const auto& row : s.rows)
    out << to_string(row.condition) << ": CoM-SUP " << row.com_sup.mean << " +- " << row.com_sup.sd << " m, CoP-SUP "
        << row.cop_sup.mean << " +- " << row.cop_sup.sd << " m (" << row.trials << " trial(s))\n";
  const bool comp_best = s.comp_below_honly_com && s.comp_below_nocomp_com;
  out << "CoM-SUP Comp < HOnly < NoComp: " << verdict(comp_best && s.honly_below_nocomp_com) << '\n';
  out << "CoM-SUP Comp < min(HOnly, NoComp): " << verdict(comp_best) << '\n';
  out << "CoP-SUP Comp < NoComp: " << verdict(s.comp_below_nocomp_cop) << '\n';
  return comp_best ? kExitOk : kExitVerdictFail;
}

/// One comparison per value of `key`; writes sweep_<scenario>.csv.
inline int cmd_sweep(const CommandOptions& opt, const std::string& key, const std::vector<std::string>& values,
                     std::ostream& out) {
  namespace fs = std::filesystem;
  if (!find_key(key)) throw ConfigError("--param", 0, 0, "unknown key '" + key + "'");
  if (values.empty()) throw InvalidInput("sweep needs at least one value");
  std::vector<Summary> rows;
  std::vector<std::string> labels;
  for (const auto& v : values) {
    RunSettings s = opt.settings;
    apply_assignment(s, key + " = " + v, "--values", 0);
    rows.push_back(run_comparison(s, opt.scenario, opt.trials, opt.jobs, false).summary);
    labels.push_back(config_detail::trim(v));
  }
  fs::create_directories(opt.out_dir);
  auto os = cmd_detail::open_out(fs::path(opt.out_dir) / ("sweep_" + std::string(to_string(opt.scenario)) + ".csv"));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::ostringstream part;
    write_summary_csv(part, {rows[i]}, {{key + "[" + find_key(key)->unit + "]", labels[i]}});
    std::string text = part.str();
    if (i > 0) text = text.substr(text.find('\n') + 1);  // header once
    os << text;
  }
  out << key << " sweep (" << to_string(opt.scenario) << "):\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& s = rows[i];
    out << "  " << labels[i] << ": honly " << s.row(Condition::honly).com_sup.mean << " m, nocomp "
        << s.row(Condition::nocomp).com_sup.mean << " m, comp " << s.row(Condition::comp).com_sup.mean
        << " m, comp mean |u| " << s.row(Condition::comp).mean_u.mean << " rad/s^2\n";
  }
  return kExitOk;
}

}  // namespace slbal
