#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "nomatail/channel.hpp"
#include "nomatail/numeric.hpp"

namespace nomatail {

struct DegenerateService : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Traffic and service models
// ---------------------------------------------------------------------------

/// Per-UE traffic in the two clocks the analysis uses: packets per slot for
/// the slotted delay bound, packets per second for the inter-arrival process.
struct TrafficModel {
  double pkts_per_slot = 0.0;        // Poisson mean per slot
  double interarrival_rate_hz = 0.0; // exponential gap rate

  static TrafficModel from_config(const SystemConfig& cfg) {
    return {cfg.arrival_rate_bps * cfg.slot_s / cfg.ps_bits,
            cfg.arrival_rate_bps / cfg.ps_bits};
  }
};

/// Slotted retransmission service: up to attempts_per_slot attempts per slot,
/// each lasting attempt_s, each decoded against `code` at an instantaneous
/// SINR drawn from `sinr`.
struct ServiceModel {
  int attempts_per_slot = 0;
  double attempt_s = 0.0;
  SinrModel sinr;
  FbcCode code;

  static ServiceModel from_config(const SystemConfig& cfg, const SinrModel& sinr) {
    ServiceModel m{cfg.attempts_per_slot(), cfg.attempt_s(), sinr,
                   FbcCode{cfg.cus_per_packet, cfg.ps_bits}};
    if (m.attempts_per_slot < 1)
      throw ConfigError("service model: no attempt fits into one slot");
    return m;
  }
};

// ---------------------------------------------------------------------------
// Expectations over the SINR law
// ---------------------------------------------------------------------------

/// Gauss-Kronrod panel quadrature against the SINR density, with the panel
/// partition cached so that repeated expectations over the same law (one per
/// theta while minimizing a kernel) cost one pass over precomputed nodes.
///
/// The integration range [0, z_hi] is chosen so the truncated tail mass is
/// below the error budget; the tail contribution of a [0,1]-bounded integrand
/// is accounted into the error estimate rather than the value, which keeps
/// every expectation a guaranteed lower bracket of the true value within the
/// reported tolerance.
class SinrQuadrature {
 public:
  explicit SinrQuadrature(const SinrModel& model, double rel_tol = 1e-9,
                          int max_panels = 4000)
      : model_(model), rel_tol_(rel_tol), max_panels_(max_panels) {
    if (model_.mean_snr <= 0.0) return;  // degenerate: point mass at zero
    const double s = model_.mean_snr;
    const double decades = std::max(15.0, -std::log10(rel_tol) + 4.0);
    z_hi_ = s * decades * std::log(10.0);
    tail_mass_ = sinr_ccdf(model_, z_hi_);
    double edge = z_hi_;
    std::vector<double> edges{z_hi_};
    for (int j = 0; j < 15; ++j) {
      edge *= 0.1;
      edges.push_back(edge);
    }
    edges.push_back(0.0);
    for (std::size_t i = edges.size(); i-- > 1;)
      panels_.push_back(make_panel(edges[i], edges[i - 1]));
  }

  bool degenerate() const { return model_.mean_snr <= 0.0; }
  const SinrModel& model() const { return model_; }
  double tail_mass() const { return tail_mass_; }
  long node_evals() const { return node_evals_; }

  /// E[h(SINR)] for h bounded by [0, 1].  Refines the cached partition until
  /// the embedded error estimate (plus truncated tail) meets rel_tol.
  template <class H>
  double expect(H&& h) {
    if (degenerate()) return h(0.0);
    while (true) {
      double total = 0.0, err = tail_mass_;
      std::size_t worst = 0;
      double worst_err = -1.0;
      for (std::size_t i = 0; i < panels_.size(); ++i) {
        const auto [v, e] = panel_sums(panels_[i], h);
        total += v;
        err += e;
        if (e > worst_err) {
          worst_err = e;
          worst = i;
        }
      }
      if (err <= std::max(rel_tol_ * std::abs(total), 1e-300) || worst_err <= 0.0)
        return total;
      if (static_cast<int>(panels_.size()) >= max_panels_)
        throw QuadratureFailure("SINR expectation: panel budget exhausted");
      split(worst);
    }
  }

  struct Node {
    double gamma;
    double w15;  // Kronrod weight x density x halfwidth
    double w7;   // embedded Gauss weight x density x halfwidth (0 off the G7 set)
  };

  /// Flattened view of the current partition; `panel_of[i]` groups nodes for
  /// per-panel error estimation.  Invalidated by the next expect()/split().
  void flatten(std::vector<Node>& nodes, std::vector<int>& panel_of) const {
    nodes.clear();
    panel_of.clear();
    for (std::size_t p = 0; p < panels_.size(); ++p)
      for (const auto& n : panels_[p].nodes) {
        nodes.push_back(n);
        panel_of.push_back(static_cast<int>(p));
      }
  }

  int panel_count() const { return static_cast<int>(panels_.size()); }

  void refine_against(const std::function<double(double)>& h) { expect(h); }

 private:
  struct Panel {
    double a, b;
    std::vector<Node> nodes;  // 15 entries
  };

  Panel make_panel(double a, double b) {
    Panel p{a, b, {}};
    p.nodes.reserve(15);
    const double c = 0.5 * (a + b), hw = 0.5 * (b - a);
    for (int j = 0; j < detail::kGkHalf; ++j) {
      const double x = detail::kGkNode[j];
      const double wk = detail::kGkWeight[j] * hw;
      const double wg = detail::kG7Weight[j] * hw;
      if (j == detail::kGkHalf - 1) {
        p.nodes.push_back({c, wk * sinr_pdf(model_, c), wg * sinr_pdf(model_, c)});
      } else {
        for (const double g : {c - hw * x, c + hw * x})
          p.nodes.push_back({g, wk * sinr_pdf(model_, g), wg * sinr_pdf(model_, g)});
      }
    }
    return p;
  }

  template <class H>
  std::pair<double, double> panel_sums(const Panel& p, H&& h) {
    double i15 = 0.0, i7 = 0.0;
    for (const auto& n : p.nodes) {
      const double hv = h(n.gamma);
      i15 += n.w15 * hv;
      i7 += n.w7 * hv;
    }
    node_evals_ += static_cast<long>(p.nodes.size());
    const double diff = std::abs(i15 - i7);
    const double err = diff > 0.0 ? std::min(diff, diff * std::sqrt(diff * 200.0)) : 0.0;
    return {i15, err};
  }

  void split(std::size_t i) {
    const double a = panels_[i].a, b = panels_[i].b;
    const double mid = 0.5 * (a + b);
    if (!(mid > a && mid < b))
      throw QuadratureFailure("SINR expectation: panel collapsed before tolerance met");
    panels_[i] = make_panel(a, mid);
    panels_.push_back(make_panel(mid, b));
  }

  SinrModel model_;
  double rel_tol_;
  int max_panels_;
  double z_hi_ = 0.0;
  double tail_mass_ = 0.0;
  long node_evals_ = 0;
  std::vector<Panel> panels_;
};

/// Per-slot success factor at a fixed SINR: with per-attempt error eps and K
/// attempts per slot sharing that SINR, E[e^{-theta * served}] for one slot is
/// (eps + (1-eps) e^{-theta})^K.
inline double slot_service_factor(double theta, double eps, int attempts) {
  return std::pow(eps + (1.0 - eps) * std::exp(-theta), attempts);
}

/// Caches the decoding-error profile over the quadrature nodes so that the
/// per-slot service inverse MGF and the mean decoding success probability are
/// cheap to evaluate for many theta against one ServiceModel.
class ServiceKernel {
 public:
  explicit ServiceKernel(const ServiceModel& svc, double rel_tol = 1e-9)
      : svc_(svc), rel_tol_(rel_tol), quad_(svc.sinr, rel_tol) {
    svc_.code.validate();
    if (!quad_.degenerate()) {
      // Resolve the partition against the sharpest integrands this kernel
      // will see before freezing the node set: the raw mass, the
      // theta -> infinity limit, and a mid-range mix.
      const int K = svc_.attempts_per_slot;
      const FbcCode code = svc_.code;
      quad_.refine_against([](double) { return 1.0; });
      quad_.refine_against(
          [&](double g) { return std::pow(fbc_error_prob(code, g), K); });
      quad_.refine_against([&](double g) {
        return slot_service_factor(0.7, fbc_error_prob(code, g), K);
      });
    }
    freeze();
  }

  const ServiceModel& model() const { return svc_; }
  long theta_evals() const { return theta_evals_; }

  /// E[(eps + (1-eps) e^{-theta})^K] over the SINR law.
  double inv_mgf(double theta) {
    ++theta_evals_;
    if (quad_.degenerate())
      return slot_service_factor(theta, fbc_error_prob(svc_.code, 0.0),
                                 svc_.attempts_per_slot);
    const double et = std::exp(-theta);
    const int K = svc_.attempts_per_slot;
    for (int round = 0;; ++round) {
      double total = 0.0, err = quad_.tail_mass();
      double p15 = 0.0, p7 = 0.0;
      int cur = 0;
      auto close_panel = [&] {
        total += p15;
        const double diff = std::abs(p15 - p7);
        err += diff > 0.0 ? std::min(diff, diff * std::sqrt(diff * 200.0)) : 0.0;
        p15 = p7 = 0.0;
      };
      for (std::size_t i = 0; i < nodes_.size(); ++i) {
        if (panel_of_[i] != cur) {
          close_panel();
          cur = panel_of_[i];
        }
        const double f = std::pow(eps_[i] + (1.0 - eps_[i]) * et, K);
        p15 += nodes_[i].w15 * f;
        p7 += nodes_[i].w7 * f;
      }
      close_panel();
      if (err <= std::max(rel_tol_ * std::abs(total), 1e-300)) return total;
      if (round > 0)
        throw QuadratureFailure("service inverse MGF: tolerance not met after refinement");
      quad_.refine_against([&](double g) {
        return slot_service_factor(theta, fbc_error_prob(svc_.code, g), K);
      });
      freeze();
    }
  }

  /// Mean single-attempt decoding success probability, E[1 - eps(SINR)].
  double success_mean() {
    if (quad_.degenerate()) return 1.0 - fbc_error_prob(svc_.code, 0.0);
    const FbcCode code = svc_.code;
    return quad_.expect([&](double g) { return 1.0 - fbc_error_prob(code, g); });
  }

 private:
  void freeze() {
    quad_.flatten(nodes_, panel_of_);
    eps_.resize(nodes_.size());
    for (std::size_t i = 0; i < nodes_.size(); ++i)
      eps_[i] = fbc_error_prob(svc_.code, nodes_[i].gamma);
  }

  ServiceModel svc_;
  double rel_tol_;
  SinrQuadrature quad_;
  std::vector<SinrQuadrature::Node> nodes_;
  std::vector<int> panel_of_;
  std::vector<double> eps_;
  long theta_evals_ = 0;
};

// ---------------------------------------------------------------------------
// Moment generating functions
// ---------------------------------------------------------------------------

/// Per-slot arrival MGF of Poisson packet arrivals: exp(lambda (e^theta - 1)).
/// Returns +inf when the exponent overflows.
inline double arrival_mgf(double theta, const TrafficModel& traffic) {
  if (theta < 0.0) throw std::domain_error("arrival_mgf: theta < 0");
  const double ex = traffic.pkts_per_slot * std::expm1(theta);
  return ex > 709.0 ? kInf : std::exp(ex);
}

/// Per-slot service inverse MGF; convenience wrapper building a fresh kernel.
inline double service_inv_mgf(double theta, const ServiceModel& svc,
                              double rel_tol = 1e-9) {
  ServiceKernel k(svc, rel_tol);
  return k.inv_mgf(theta);
}

/// Mean decoding success per attempt for a service model.
inline double decode_success_mean(const ServiceModel& svc, double rel_tol = 1e-9) {
  ServiceKernel k(svc, rel_tol);
  return k.success_mean();
}

/// MGF of the geometric retransmission time: attempts ~ Geometric(qbar) on
/// {1, 2, ...}, each lasting tau.  +inf sentinel outside the convergence
/// region (1-qbar) e^{theta tau} >= 1.
inline double service_time_mgf(double theta, double qbar, double tau) {
  if (!(qbar > 0.0))
    throw DegenerateService("service time MGF: zero decoding success probability");
  if (theta < 0.0) throw std::domain_error("service_time_mgf: theta < 0");
  const double et = std::exp(theta * tau);
  const double tail = (1.0 - qbar) * et;
  if (tail >= 1.0) return kInf;
  return qbar * et / (1.0 - tail);
}

inline double service_time_mgf(double theta, const ServiceModel& svc,
                               double rel_tol = 1e-9) {
  return service_time_mgf(theta, decode_success_mean(svc, rel_tol), svc.attempt_s);
}

/// MGF of the exponential inter-arrival gap: nu/(nu - theta) for theta < nu,
/// +inf sentinel at and above nu.
inline double interarrival_mgf(double theta, const TrafficModel& traffic) {
  const double nu = traffic.interarrival_rate_hz;
  if (theta < 0.0) throw std::domain_error("interarrival_mgf: theta < 0");
  return theta < nu ? nu / (nu - theta) : kInf;
}

/// E[e^{-theta Y}] of the exponential gap: nu/(nu + theta), finite for all
/// theta >= 0.
inline double interarrival_inv_mgf(double theta, const TrafficModel& traffic) {
  const double nu = traffic.interarrival_rate_hz;
  if (theta < 0.0) throw std::domain_error("interarrival_inv_mgf: theta < 0");
  return nu / (nu + theta);
}

// ---------------------------------------------------------------------------
// Stability region and kernel infima
// ---------------------------------------------------------------------------

/// Maximal interval (0, hi) on which a convex stability margin is negative.
struct ThetaRegion {
  double lo = 0.0;
  double hi = 0.0;
  bool capped = false;  // hi is the search cap, not a margin root
};

/// Finds the maximal (0, hi), hi <= theta_max_hint, with margin(theta) < 0.
/// Relies on convexity of the margin (margin(0) = 0 for MGF products), so the
/// negative set is a single interval anchored at zero.  Empty -> nullopt.
template <class F>
std::optional<ThetaRegion> stability_region(F&& margin, double theta_max_hint,
                                            double rel_tol = 1e-9) {
  if (!(theta_max_hint > 0.0))
    throw std::invalid_argument("stability_region: hint must be > 0");
  if (margin(theta_max_hint) < 0.0) return ThetaRegion{0.0, theta_max_hint, true};
  double above = theta_max_hint;
  double probe = theta_max_hint;
  for (int j = 0; j < 60; ++j) {
    probe *= 0.5;
    if (margin(probe) < 0.0) {
      const double hi = bisect_last_negative(margin, probe, above, rel_tol);
      return ThetaRegion{0.0, hi, false};
    }
    above = probe;
  }
  return std::nullopt;
}

/// Result of a kernel infimum: the bound value (clamped to 1), the minimizing
/// QoS exponent, the stability interval searched, and the evaluation count.
struct BoundResult {
  double value = 1.0;
  double theta_star = kNaN;
  double theta_lo = 0.0;
  double theta_hi = 0.0;
  bool stable = false;
  long kernel_evals = 0;
};

struct BoundOptions {
  double theta_max_hint = 50.0;
  double golden_rel_tol = 1e-6;
  int golden_max_iter = 200;
  double quad_rel_tol = 1e-9;
  double region_rel_tol = 1e-9;
};

namespace detail {

/// Shared infimum driver: locate the stability region of `margin`, then
/// golden-section the (unimodal on that region) kernel.
template <class Margin, class Kernel>
BoundResult minimize_kernel(Margin&& margin, Kernel&& kernel,
                            const BoundOptions& opt) {
  long evals = 0;
  auto counted_margin = [&](double th) {
    ++evals;
    return margin(th);
  };
  auto region = stability_region(counted_margin, opt.theta_max_hint,
                                 opt.region_rel_tol);
  BoundResult res;
  res.kernel_evals = evals;
  if (!region) return res;  // empty region: vacuous bound, value stays 1
  const double hi_end = region->capped ? region->hi : region->hi * (1.0 - 1e-9);
  const double lo_end = region->hi * 1e-9;
  auto counted_kernel = [&](double th) {
    ++evals;
    const double v = kernel(th);
    return std::isfinite(v) ? v : kInf;
  };
  auto min = golden_section_minimize(counted_kernel, lo_end, hi_end,
                                     opt.golden_rel_tol, opt.golden_max_iter);
  res.value = std::min(1.0, min.fx);
  res.theta_star = min.x;
  res.theta_lo = region->lo;
  res.theta_hi = region->hi;
  res.stable = true;
  res.kernel_evals = evals;
  return res;
}

}  // namespace detail

/// Upper bound on the steady-state probability that a packet's delay exceeds
/// w_slots slots:
///
///   inf_theta  Ms(theta)^w / (1 - Ma(theta) Ms(theta)),
///
/// over the region where Ma Ms < 1, with Ma the per-slot arrival MGF and Ms
/// the per-slot service inverse MGF.  Fractional w is meaningful (targets are
/// not slot-aligned) and enters as a real power.  An empty stability region
/// yields the vacuous bound 1 with stable = false.
inline BoundResult delay_violation_bound(double w_slots, const TrafficModel& traffic,
                                         const ServiceModel& svc,
                                         const BoundOptions& opt = {}) {
  if (w_slots < 0.0) throw std::invalid_argument("delay bound: w_slots < 0");
  ServiceKernel kernel(svc, opt.quad_rel_tol);
  auto ms = [&](double th) { return kernel.inv_mgf(th); };
  auto margin = [&](double th) {
    const double prod = arrival_mgf(th, traffic) * ms(th);
    return std::isfinite(prod) ? prod - 1.0 : kInf;
  };
  auto kd = [&](double th) {
    const double msv = ms(th);
    const double denom = 1.0 - arrival_mgf(th, traffic) * msv;
    if (!(denom > 0.0)) return kInf;
    return std::pow(msv, w_slots) / denom;
  };
  return detail::minimize_kernel(margin, kd, opt);
}

/// Upper bound on the steady-state probability that a packet's peak age
/// exceeds d_s seconds.  Peak age decomposes into waiting + retransmission
/// time + preceding inter-arrival gap; Chernoff over that sum gives
///
///   inf_theta  e^{-theta d} Mt(theta) My(theta) / (1 - Mt(theta) Mybar(theta)),
///
/// over the region where Mt Mybar < 1 and My is finite (theta < nu).  A
/// degenerate service (zero decoding success) is permanently unstable.
inline BoundResult aoi_violation_bound(double d_s, const TrafficModel& traffic,
                                       const ServiceModel& svc,
                                       const BoundOptions& opt = {}) {
  if (d_s < 0.0) throw std::invalid_argument("aoi bound: d_s < 0");
  ServiceKernel kernel(svc, opt.quad_rel_tol);
  const double qbar = kernel.success_mean();
  if (!(qbar > 0.0)) return BoundResult{};  // never decodes: vacuous bound
  const double tau = svc.attempt_s;
  // The region cannot extend past nu (the gap MGF diverges there), so start
  // the probe above nu; theta here is in 1/seconds, not per-slot units.
  BoundOptions aopt = opt;
  aopt.theta_max_hint =
      std::max(opt.theta_max_hint, 2.0 * traffic.interarrival_rate_hz);
  auto margin = [&](double th) {
    if (th >= traffic.interarrival_rate_hz) return kInf;
    const double mt = service_time_mgf(th, qbar, tau);
    if (!std::isfinite(mt)) return kInf;
    return mt * interarrival_inv_mgf(th, traffic) - 1.0;
  };
  auto ka = [&](double th) {
    const double mt = service_time_mgf(th, qbar, tau);
    const double my = interarrival_mgf(th, traffic);
    if (!std::isfinite(mt) || !std::isfinite(my)) return kInf;
    const double denom = 1.0 - mt * interarrival_inv_mgf(th, traffic);
    if (!(denom > 0.0)) return kInf;
    return std::exp(-th * d_s) * mt * my / denom;
  };
  return detail::minimize_kernel(margin, ka, aopt);
}

}  // namespace nomatail
