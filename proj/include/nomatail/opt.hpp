#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nomatail/channel.hpp"
#include "nomatail/snc.hpp"

namespace nomatail {

// ---------------------------------------------------------------------------
// QoS targets and per-role parameters
// ---------------------------------------------------------------------------

struct TailTarget {
  double threshold_s = 0.0;
  double eps = 0.0;
};

/// Per-role statistical QoS: any subset of a delay tail target and a peak-age
/// tail target.  An absent target is unconstrained.
struct QosSpec {
  std::optional<TailTarget> delay;
  std::optional<TailTarget> aoi;
  double theta_max_hint = 50.0;
};

struct RoleParams {
  double arrival_rate_bps = 0.0;
  int ps_bits = 0;
  QosSpec qos;
};

struct AllocationProblem {
  SystemConfig sys;
  LinkBudget su_link, wu_link;
  RoleParams su, wu;
  BoundOptions bound_opts;
  double power_rel_tol = 1e-4;  // bisection stops at power_rel_tol * pmax

  const RoleParams& params(Role r) const { return r == Role::su ? su : wu; }
  const LinkBudget& link(Role r) const { return r == Role::su ? su_link : wu_link; }
};

enum class Scheme { noma, oma_freq, oma_time };

inline const char* scheme_name(Scheme s) {
  switch (s) {
    case Scheme::noma: return "noma";
    case Scheme::oma_freq: return "oma_freq";
    case Scheme::oma_time: return "oma_time";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Feasibility checks
// ---------------------------------------------------------------------------

/// Bound values for one role at one power point; an absent entry means the
/// corresponding target was unconstrained.
struct RoleCheck {
  std::optional<BoundResult> delay;
  std::optional<BoundResult> aoi;
  bool feasible = false;
};

namespace detail {

struct RoleEnv {
  TrafficModel traffic;
  ServiceModel svc;
  BoundOptions opts;
};

/// Builds the bound inputs for one role of one scheme at the given powers.
/// superposed transmission: the strong user is decoded first under the weak
/// user's interference, the weak user is decoded clean after cancellation.
inline RoleEnv role_env(const AllocationProblem& prob, Scheme scheme, Role role,
                        double p_wu, double p_su) {
  const RoleParams& rp = prob.params(role);
  SystemConfig sys = prob.sys;
  sys.arrival_rate_bps = rp.arrival_rate_bps;
  sys.ps_bits = rp.ps_bits;
  SinrModel sinr;
  switch (scheme) {
    case Scheme::noma: {
      const double sigma2 = noise_power_w(sys);
      sinr = role == Role::wu
                 ? sinr_wu(p_wu, prob.wu_link.gain, sigma2)
                 : sinr_su(p_su, prob.su_link.gain, p_wu, prob.wu_link.gain, sigma2);
      break;
    }
    case Scheme::oma_freq: {
      // Half the band per user: half the noise power, half the blocklength,
      // same attempt duration and attempts per slot.
      if (sys.cus_per_packet < 2)
        throw ConfigError("oma_freq: needs blocklength >= 2");
      sys.bandwidth_hz *= 0.5;
      sys.cus_per_packet /= 2;
      const double p = role == Role::wu ? p_wu : p_su;
      sinr = sinr_wu(p, prob.link(role).gain, noise_power_w(sys));
      break;
    }
    case Scheme::oma_time: {
      // Full band in half the slots: full noise and blocklength, attempts
      // per slot halved.
      if (prob.sys.attempts_per_slot() < 2)
        throw ConfigError("oma_time: needs >= 2 attempts per slot");
      const double p = role == Role::wu ? p_wu : p_su;
      sinr = sinr_wu(p, prob.link(role).gain, noise_power_w(sys));
      break;
    }
  }
  sys.validate();
  ServiceModel svc = ServiceModel::from_config(sys, sinr);
  if (scheme == Scheme::oma_time) svc.attempts_per_slot /= 2;
  BoundOptions opts = prob.bound_opts;
  opts.theta_max_hint = rp.qos.theta_max_hint;
  return {TrafficModel::from_config(sys), svc, opts};
}

}  // namespace detail

/// Evaluates both configured tail bounds for one role at the given powers.
inline RoleCheck check_role(const AllocationProblem& prob, Scheme scheme, Role role,
                            double p_wu, double p_su) {
  const auto env = detail::role_env(prob, scheme, role, p_wu, p_su);
  const QosSpec& qos = prob.params(role).qos;
  RoleCheck out;
  out.feasible = true;
  if (qos.delay) {
    const double w_slots = qos.delay->threshold_s / prob.sys.slot_s;
    out.delay = delay_violation_bound(w_slots, env.traffic, env.svc, env.opts);
    out.feasible = out.feasible && out.delay->value <= qos.delay->eps;
  }
  if (qos.aoi) {
    out.aoi = aoi_violation_bound(qos.aoi->threshold_s, env.traffic, env.svc, env.opts);
    out.feasible = out.feasible && out.aoi->value <= qos.aoi->eps;
  }
  return out;
}

struct FeasibilityCheck {
  RoleCheck wu, su;
  bool feasible = false;
};

inline FeasibilityCheck check_feasible(const AllocationProblem& prob, Scheme scheme,
                                       double p_wu, double p_su) {
  FeasibilityCheck out;
  out.wu = check_role(prob, scheme, Role::wu, p_wu, p_su);
  out.su = check_role(prob, scheme, Role::su, p_wu, p_su);
  out.feasible = out.wu.feasible && out.su.feasible;
  return out;
}

// ---------------------------------------------------------------------------
// Sequential minimum-power allocation
// ---------------------------------------------------------------------------

enum class AllocStatus { optimal, infeasible };

struct AllocationResult {
  Scheme scheme = Scheme::noma;
  AllocStatus status = AllocStatus::infeasible;
  Role failed_stage = Role::wu;     // meaningful when infeasible
  double p_wu_w = 0.0, p_su_w = 0.0;  // pinned to (pmax, pmax) when infeasible
  RoleCheck wu, su;                   // bounds at the returned powers
  std::vector<std::string> binding;   // constraints within 5% of their budget
  int wu_iters = 0, su_iters = 0;
  long feasibility_evals = 0;
};

namespace detail {

/// Smallest power in (pmax * 1e-6, pmax] accepted by `ok`, by bisection to a
/// relative tolerance measured against the answer itself: on return the lower
/// bracket hi*(1 - rel_tol) is known infeasible, so the result certifiably
/// sits within rel_tol of the true boundary.  The returned point is always
/// feasible (upper bracket).
template <class Ok>
std::optional<double> min_power(Ok&& ok, double pmax, double rel_tol, int& iters) {
  iters = 0;
  if (!ok(pmax)) return std::nullopt;
  double lo = pmax * 1e-6, hi = pmax;
  if (ok(lo)) return lo;
  while (hi - lo > rel_tol * hi) {
    const double mid = 0.5 * (lo + hi);
    ++iters;
    if (ok(mid))
      hi = mid;
    else
      lo = mid;
  }
  return hi;
}

inline void add_binding(std::vector<std::string>& tags, const AllocationProblem& prob,
                        Role role, const RoleCheck& check, double p) {
  const QosSpec& qos = prob.params(role).qos;
  const std::string r = role_name(role);
  if (qos.delay && check.delay && check.delay->value >= 0.95 * qos.delay->eps)
    tags.push_back(r + "_sdvp");
  if (qos.aoi && check.aoi && check.aoi->value >= 0.95 * qos.aoi->eps)
    tags.push_back(r + "_savp");
  if (p >= 0.999 * prob.sys.pmax_w) tags.push_back(r + "_pmax");
}

}  // namespace detail

/// Two-stage allocation: the weak user's power is minimized first (its bounds
/// do not depend on the strong user), then the strong user's power under the
/// interference that choice implies.  Lower weak-user power only helps the
/// strong user, so the stages compose into the componentwise minimum.
/// Infeasibility at either stage pins the report to the (pmax, pmax) corner.
inline AllocationResult allocate(const AllocationProblem& prob) {
  const double pmax = prob.sys.pmax_w;
  AllocationResult res;
  res.scheme = Scheme::noma;
  long evals = 0;
  auto wu_ok = [&](double p) {
    ++evals;
    return check_role(prob, Scheme::noma, Role::wu, p, pmax).feasible;
  };
  const auto p_wu = detail::min_power(wu_ok, pmax, prob.power_rel_tol, res.wu_iters);
  if (!p_wu) {
    res.status = AllocStatus::infeasible;
    res.failed_stage = Role::wu;
    res.p_wu_w = res.p_su_w = pmax;
  } else {
    auto su_ok = [&](double p) {
      ++evals;
      return check_role(prob, Scheme::noma, Role::su, *p_wu, p).feasible;
    };
    const auto p_su = detail::min_power(su_ok, pmax, prob.power_rel_tol, res.su_iters);
    if (!p_su) {
      res.status = AllocStatus::infeasible;
      res.failed_stage = Role::su;
      res.p_wu_w = res.p_su_w = pmax;
    } else {
      res.status = AllocStatus::optimal;
      res.p_wu_w = *p_wu;
      res.p_su_w = *p_su;
    }
  }
  res.wu = check_role(prob, Scheme::noma, Role::wu, res.p_wu_w, res.p_su_w);
  res.su = check_role(prob, Scheme::noma, Role::su, res.p_wu_w, res.p_su_w);
  evals += 2;
  detail::add_binding(res.binding, prob, Role::wu, res.wu, res.p_wu_w);
  detail::add_binding(res.binding, prob, Role::su, res.su, res.p_su_w);
  res.feasibility_evals = evals;
  return res;
}

/// Orthogonal baseline: both users run interference-free on half the radio
/// resource (frequency split or time split), so the two stages are fully
/// independent single-user problems.
inline AllocationResult allocate_oma(const AllocationProblem& prob, Scheme scheme) {
  if (scheme == Scheme::noma)
    throw std::invalid_argument("allocate_oma: pass oma_freq or oma_time");
  const double pmax = prob.sys.pmax_w;
  AllocationResult res;
  res.scheme = scheme;
  long evals = 0;
  auto role_ok = [&](Role role) {
    return [&prob, scheme, role, &evals](double p) {
      ++evals;
      return check_role(prob, scheme, role, p, p).feasible;
    };
  };
  const auto p_wu = detail::min_power(role_ok(Role::wu), pmax, prob.power_rel_tol,
                                      res.wu_iters);
  const auto p_su = detail::min_power(role_ok(Role::su), pmax, prob.power_rel_tol,
                                      res.su_iters);
  if (!p_wu || !p_su) {
    res.status = AllocStatus::infeasible;
    res.failed_stage = !p_wu ? Role::wu : Role::su;
    res.p_wu_w = res.p_su_w = pmax;
  } else {
    res.status = AllocStatus::optimal;
    res.p_wu_w = *p_wu;
    res.p_su_w = *p_su;
  }
  res.wu = check_role(prob, scheme, Role::wu, res.p_wu_w, res.p_su_w);
  res.su = check_role(prob, scheme, Role::su, res.p_wu_w, res.p_su_w);
  evals += 2;
  detail::add_binding(res.binding, prob, Role::wu, res.wu, res.p_wu_w);
  detail::add_binding(res.binding, prob, Role::su, res.su, res.p_su_w);
  res.feasibility_evals = evals;
  return res;
}

}  // namespace nomatail
