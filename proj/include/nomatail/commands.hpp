#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "nomatail/csv.hpp"
#include "nomatail/opt.hpp"
#include "nomatail/scenario.hpp"
#include "nomatail/sim.hpp"
#include "nomatail/snc.hpp"

namespace nomatail {

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

namespace detail {

/// Owns the optional file stream; stream() is stdout when no path was given.
class OutStream {
 public:
  explicit OutStream(const std::string& path) {
    if (!path.empty()) {
      file_.open(path);
      if (!file_) throw ConfigError("cannot open output file '" + path + "'");
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

inline bool metric_is_delay(const std::string& metric) {
  if (metric == "sdvp") return true;
  if (metric == "savp") return false;
  throw ConfigError("--metric must be sdvp or savp");
}

inline std::vector<double> parse_target_grid(const std::string& s) {
  try {
    return parse_grid_at(0, s);
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("--targets: ") + e.what());
  }
}

inline std::vector<double> resolve_targets(const Scenario& sc, bool delay_metric,
                                           const std::string& flag) {
  if (!flag.empty()) return parse_target_grid(flag);
  const auto& g = delay_metric ? sc.sweep_delay_targets_s : sc.sweep_aoi_targets_s;
  if (g.empty())
    throw ConfigError(std::string("no targets: pass --targets or set sweep.") +
                      (delay_metric ? "delay_targets_s" : "aoi_targets_s"));
  return g;
}

inline BoundResult compute_bound(const AllocationProblem& prob, Role role,
                                 bool delay_metric, double target_s, double p_wu,
                                 double p_su) {
  const auto env = role_env(prob, Scheme::noma, role, p_wu, p_su);
  return delay_metric
             ? delay_violation_bound(target_s / prob.sys.slot_s, env.traffic,
                                     env.svc, env.opts)
             : aoi_violation_bound(target_s, env.traffic, env.svc, env.opts);
}

inline UeSetup make_ue_setup(const AllocationProblem& prob, Role role, double p_wu,
                             double p_su) {
  const auto env = role_env(prob, Scheme::noma, role, p_wu, p_su);
  UeSetup u;
  u.role = role;
  u.sinr = env.svc.sinr;
  u.code = env.svc.code;
  u.code.validate();
  u.attempt_s = env.svc.attempt_s;
  u.arrival_rate_hz = env.traffic.interarrival_rate_hz;
  return u;
}

inline std::string join_role_tags(const std::vector<std::string>& tags, Role role) {
  std::string out;
  const std::string prefix = std::string(role_name(role)) + "_";
  for (const auto& t : tags) {
    if (t.rfind(prefix, 0) != 0) continue;
    if (!out.empty()) out += ';';
    out += t;
  }
  return out;
}

/// One CSV row per (role, configured target).  `saving` is the fractional
/// per-role power saving against a matching orthogonal run; NaN when not
/// applicable (orthogonal rows, infeasible runs, no reference).
inline void write_alloc_rows(std::ostream& os, const AllocationProblem& prob,
                             const AllocationResult& res, bool sweep_cols,
                             const AllocationResult* oma_ref) {
  for (Role role : {Role::wu, Role::su}) {
    const RoleParams& rp = prob.params(role);
    const RoleCheck& chk = role == Role::wu ? res.wu : res.su;
    const double p_star = role == Role::wu ? res.p_wu_w : res.p_su_w;
    const int iters = role == Role::wu ? res.wu_iters : res.su_iters;
    std::vector<std::pair<std::string, double>> targets;
    if (rp.qos.delay) targets.emplace_back("delay", rp.qos.delay->threshold_s);
    if (rp.qos.aoi) targets.emplace_back("aoi", rp.qos.aoi->threshold_s);
    if (targets.empty()) targets.emplace_back("none", kNaN);
    double saving = kNaN;
    if (sweep_cols && oma_ref && res.scheme == Scheme::noma &&
        res.status == AllocStatus::optimal && oma_ref->status == AllocStatus::optimal) {
      const double p_oma = role == Role::wu ? oma_ref->p_wu_w : oma_ref->p_su_w;
      saving = (p_oma - p_star) / p_oma;
    }
    for (const auto& [kind, thr] : targets) {
      os << scheme_name(res.scheme) << ',' << role_name(role) << ',' << kind << ','
         << csv_num(thr) << ',' << csv_num(p_star) << ','
         << (res.status == AllocStatus::optimal ? "optimal" : "infeasible") << ','
         << join_role_tags(res.binding, role) << ','
         << csv_num(chk.delay ? chk.delay->value : kNaN) << ','
         << csv_num(chk.aoi ? chk.aoi->value : kNaN) << ',' << iters;
      if (sweep_cols) os << ',' << csv_num(saving);
      os << '\n';
    }
  }
}

inline constexpr const char* kAllocHeader =
    "scheme,role,target_kind,target_s,p_star_w,status,binding,sdvp,savp,iters";

}  // namespace detail

// ---------------------------------------------------------------------------
// bound: tail bounds on a target grid at fixed powers
// ---------------------------------------------------------------------------

struct BoundArgs {
  std::string config;
  std::string metric = "sdvp";
  std::string targets;  // optional lo:step:hi / list; else scenario sweep grid
  std::string out;
};

inline int cmd_bound(const BoundArgs& args) {
  const Scenario sc = parse_scenario_file(args.config);
  const bool delay = detail::metric_is_delay(args.metric);
  const std::vector<double> targets = detail::resolve_targets(sc, delay, args.targets);
  const AllocationProblem prob = make_problem(sc);
  detail::OutStream out(args.out);
  std::ostream& os = out.stream();
  os << "role,metric,target_s,bound,theta_star,theta_hi,stable,kernel_evals\n";
  long rows = 0;
  for (Role role : {Role::wu, Role::su}) {
    for (double t : targets) {
      const BoundResult b =
          detail::compute_bound(prob, role, delay, t, sc.p_wu_w, sc.p_su_w);
      os << role_name(role) << ',' << args.metric << ',' << csv_num(t) << ','
         << csv_num(b.value) << ',' << csv_num(b.theta_star) << ','
         << csv_num(b.theta_hi) << ',' << (b.stable ? 1 : 0) << ','
         << b.kernel_evals << '\n';
      ++rows;
    }
  }
  std::cerr << "bound: " << rows << " rows ("
            << (args.out.empty() ? "stdout" : args.out) << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------
// validate: Monte-Carlo tails against the bounds at fixed powers
// ---------------------------------------------------------------------------

struct ValidateArgs {
  std::string config;
  std::string metric = "sdvp";
  std::string targets;
  std::string out;
  long samples = 1'000'000;  // tallied packets per UE (after warmup)
  std::uint64_t seed = 1;
  int workers = 1;
};

namespace detail {

inline constexpr const char* kValidatePlotScript = R"PY(#!/usr/bin/env python3
"""Overlay the analytical tail bound on the simulated tail, per role,
with the 95% Wilson upper limit as the sampling-error band."""
import csv
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

csv_path = Path(str(Path(__file__)).removesuffix(".plot.py"))
rows = []
with open(csv_path, newline="") as fh:
    for row in csv.DictReader(fh):
        rows.append(row)

fig, ax = plt.subplots(figsize=(6.4, 4.4))
colors = {"wu": "tab:blue", "su": "tab:orange"}
for role in ("wu", "su"):
    sub = sorted(
        (float(r["threshold_s"]), float(r["p_hat"]), float(r["wilson_hi"]),
         float(r["ub"]))
        for r in rows if r["role"] == role
    )
    if not sub:
        continue
    t, p_hat, wil, ub = zip(*sub)
    c = colors[role]
    ax.plot(t, ub, "-", color=c, label=f"{role} bound")
    ax.plot(t, p_hat, "o", color=c, ms=4, label=f"{role} simulated")
    ax.plot(t, wil, ":", color=c, lw=1, label=f"{role} Wilson 95%")
metric = rows[0]["metric"] if rows else "tail"
ax.set_xlabel("threshold [s]")
ax.set_ylabel(f"{metric} tail probability")
ax.set_yscale("log")
ax.legend(fontsize=8)
ax.grid(True, which="both", alpha=0.3)
fig.tight_layout()
out = Path(str(csv_path) + ".png")
fig.savefig(out, dpi=150)
print(out)
)PY";

}  // namespace detail

inline int cmd_validate(const ValidateArgs& args) {
  const Scenario sc = parse_scenario_file(args.config);
  const bool delay = detail::metric_is_delay(args.metric);
  const std::vector<double> targets = detail::resolve_targets(sc, delay, args.targets);
  if (args.samples < 100000)
    throw ConfigError("--samples must be >= 1e5 for stable tail estimates");
  const AllocationProblem prob = make_problem(sc);

  CampaignSpec spec;
  spec.base_seed = args.seed;
  spec.workers = args.workers;
  spec.packets_per_replication = std::min<long>(args.samples, 250000);
  spec.replications = static_cast<int>(
      (args.samples + spec.packets_per_replication - 1) / spec.packets_per_replication);
  for (Role role : {Role::wu, Role::su}) {
    CampaignUe cue;
    cue.setup = detail::make_ue_setup(prob, role, sc.p_wu_w, sc.p_su_w);
    (delay ? cue.delay_thresholds_s : cue.aoi_thresholds_s) = targets;
    spec.ues.push_back(std::move(cue));
  }
  const CampaignResult sim = run_campaign(spec);

  detail::OutStream out(args.out);
  std::ostream& os = out.stream();
  os << "role,threshold_s,metric,count_exceed,count_total,p_hat,wilson_hi,seed,"
        "ub,theta_star,stable\n";
  long breaches = 0, rows = 0;
  for (std::size_t u = 0; u < spec.ues.size(); ++u) {
    const Role role = spec.ues[u].setup.role;
    const auto& tallies = delay ? sim.merged[u].delay : sim.merged[u].aoi;
    for (const auto& tt : tallies) {
      const TailEstimate est = make_tail_estimate(tt.threshold_s, tt.exceed, tt.total);
      const BoundResult b = detail::compute_bound(prob, role, delay, tt.threshold_s,
                                                  sc.p_wu_w, sc.p_su_w);
      os << role_name(role) << ',' << csv_num(est.threshold_s) << ',' << args.metric
         << ',' << est.count_exceed << ',' << est.count_total << ','
         << csv_num(est.p_hat) << ',' << csv_num(est.wilson_hi) << ','
         << sim.base_seed << ',' << csv_num(b.value) << ','
         << csv_num(b.theta_star) << ',' << (b.stable ? 1 : 0) << '\n';
      ++rows;
      if (est.p_hat > b.value) ++breaches;
    }
  }
  if (!args.out.empty()) {
    std::ofstream py(args.out + ".plot.py");
    py << detail::kValidatePlotScript;
  }
  std::cerr << "validate: " << rows << " rows, " << breaches
            << " with empirical tail above the bound ("
            << (args.out.empty() ? "stdout" : args.out) << ")\n";
  return 0;
}

// ---------------------------------------------------------------------------
// optimize: minimum powers for the scenario QoS, superposed and orthogonal
// ---------------------------------------------------------------------------

struct OptimizeArgs {
  std::string config;
  std::string out;
};

inline int cmd_optimize(const OptimizeArgs& args) {
  const Scenario sc = parse_scenario_file(args.config);
  const AllocationProblem prob = make_problem(sc);
  const AllocationResult noma = allocate(prob);
  const AllocationResult oma = allocate_oma(prob, sc.oma_mode);
  detail::OutStream out(args.out);
  std::ostream& os = out.stream();
  os << detail::kAllocHeader << '\n';
  detail::write_alloc_rows(os, prob, noma, false, nullptr);
  detail::write_alloc_rows(os, prob, oma, false, nullptr);
  std::cerr << "optimize: noma "
            << (noma.status == AllocStatus::optimal ? "optimal" : "infeasible") << ", "
            << scheme_name(oma.scheme) << ' '
            << (oma.status == AllocStatus::optimal ? "optimal" : "infeasible") << " ("
            << (args.out.empty() ? "stdout" : args.out) << ")\n";
  return noma.status == AllocStatus::optimal ? 0 : 2;
}

// ---------------------------------------------------------------------------
// sweep: minimum powers across a QoS-target grid, with orthogonal reference
// ---------------------------------------------------------------------------

struct SweepArgs {
  std::string config;
  std::string metric = "sdvp";
  std::string targets;
  std::string out;
  int workers = 1;
};

namespace detail {

inline AllocationProblem with_target(const AllocationProblem& base, bool delay_metric,
                                     double t) {
  AllocationProblem p = base;
  for (RoleParams* rp : {&p.wu, &p.su}) {
    auto& tgt = delay_metric ? rp->qos.delay : rp->qos.aoi;
    if (tgt) tgt->threshold_s = t;
  }
  return p;
}

inline constexpr const char* kPlotScript = R"PY(#!/usr/bin/env python3
"""Plot a minimum-power sweep: p* per role and scheme, and the per-role
fractional power saving of the superposed scheme over the orthogonal one."""
import csv
import math
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

csv_path = Path(str(Path(__file__)).removesuffix(".plot.py"))
rows = []
with open(csv_path, newline="") as fh:
    for row in csv.DictReader(fh):
        rows.append(row)

fig, (ax_p, ax_s) = plt.subplots(1, 2, figsize=(11, 4.2))
styles = {"noma": "-o", "oma_freq": "--s", "oma_time": "--s"}
for scheme in sorted({r["scheme"] for r in rows}):
    for role in ("wu", "su"):
        pts = sorted(
            (float(r["target_s"]), float(r["p_star_w"]))
            for r in rows
            if r["scheme"] == scheme and r["role"] == role and r["status"] == "optimal"
        )
        if pts:
            ax_p.plot(*zip(*pts), styles.get(scheme, "-"), label=f"{scheme} {role}")
for role in ("wu", "su"):
    pts = sorted(
        (float(r["target_s"]), 100.0 * float(r["saving"]))
        for r in rows
        if r["scheme"] == "noma" and r["role"] == role
        and not math.isnan(float(r["saving"]))
    )
    if pts:
        ax_s.plot(*zip(*pts), "-o", label=role)
ax_p.set_xlabel("target [s]")
ax_p.set_ylabel("p* [W]")
ax_p.set_yscale("log")
ax_p.legend(fontsize=8)
ax_p.grid(True, alpha=0.3)
ax_s.set_xlabel("target [s]")
ax_s.set_ylabel("power saving [%]")
ax_s.axhline(0.0, color="k", lw=0.8)
ax_s.legend(fontsize=8)
ax_s.grid(True, alpha=0.3)
fig.tight_layout()
out = Path(str(csv_path) + ".png")
fig.savefig(out, dpi=150)
print(out)
)PY";

}  // namespace detail

inline int cmd_sweep(const SweepArgs& args) {
  const Scenario sc = parse_scenario_file(args.config);
  const bool delay = detail::metric_is_delay(args.metric);
  const std::vector<double> targets = detail::resolve_targets(sc, delay, args.targets);
  const AllocationProblem base = make_problem(sc);
  const bool any_target = delay ? (base.wu.qos.delay || base.su.qos.delay)
                                : (base.wu.qos.aoi || base.su.qos.aoi);
  if (!any_target)
    throw ConfigError("sweep: no role has the swept metric configured under qos.*");

  struct Point {
    AllocationProblem prob;
    AllocationResult noma, oma;
  };
  std::vector<Point> points(targets.size());
  std::atomic<std::size_t> next{0};
  auto body = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= targets.size()) return;
      points[i].prob = detail::with_target(base, delay, targets[i]);
      points[i].noma = allocate(points[i].prob);
      points[i].oma = allocate_oma(points[i].prob, sc.oma_mode);
    }
  };
  const int workers = std::max(1, args.workers);
  if (workers == 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(body);
    for (auto& th : pool) th.join();
  }

  detail::OutStream out(args.out);
  std::ostream& os = out.stream();
  os << detail::kAllocHeader << ",saving\n";
  long infeasible = 0;
  for (const auto& pt : points) {
    detail::write_alloc_rows(os, pt.prob, pt.noma, true, &pt.oma);
    detail::write_alloc_rows(os, pt.prob, pt.oma, true, nullptr);
    if (pt.noma.status != AllocStatus::optimal) ++infeasible;
  }
  if (!args.out.empty()) {
    std::ofstream py(args.out + ".plot.py");
    py << detail::kPlotScript;
  }
  std::cerr << "sweep: " << targets.size() << " targets, " << infeasible
            << " infeasible (" << (args.out.empty() ? "stdout" : args.out) << ")\n";
  return 0;
}

}  // namespace nomatail
