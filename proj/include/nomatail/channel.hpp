#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nomatail/numeric.hpp"
#include "nomatail/units.hpp"

namespace nomatail {

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Uplink pair roles.  The strong user (SU) is decoded first and therefore
/// sees the weak user's signal as interference; after cancellation the weak
/// user (WU) is decoded interference-free.
enum class Role { su, wu };

inline const char* role_name(Role r) { return r == Role::su ? "su" : "wu"; }

// ---------------------------------------------------------------------------
// System configuration
// ---------------------------------------------------------------------------

/// Radio and traffic parameters shared by both users of a subchannel.
/// Units are carried in the field names; everything internal is SI linear.
struct SystemConfig {
  double bandwidth_hz = 0.0;       // subchannel bandwidth
  double slot_s = 0.0;             // scheduling slot length
  int ps_bits = 0;                 // packet size (information bits)
  double arrival_rate_bps = 0.0;   // mean arrival rate per UE
  double noise_psd_dbm_hz = 0.0;   // one-sided noise PSD
  double pmax_w = 0.0;             // per-UE transmit power cap
  double cell_radius_m = 0.0;      // UEs dropped in [min_drop_m, cell_radius_m]
  double pathloss_exp = 0.0;
  double shadow_sigma_db = 0.0;    // lognormal shadowing std dev
  int cus_per_packet = 0;          // channel uses per transmission attempt

  double min_drop_m = 10.0;

  /// Attempts that fit into one slot.  cus_per_packet <= bandwidth*slot is a
  /// config invariant, so this is >= 1 for a valid config.
  int attempts_per_slot() const {
    return static_cast<int>(std::floor(bandwidth_hz * slot_s / cus_per_packet));
  }

  /// Duration of one transmission attempt.
  double attempt_s() const { return cus_per_packet / bandwidth_hz; }

  void validate() const {
    auto need_pos = [](double v, const char* name) {
      if (!(v > 0.0)) throw ConfigError(std::string(name) + " must be > 0");
    };
    need_pos(bandwidth_hz, "bandwidth_hz");
    need_pos(slot_s, "slot_s");
    need_pos(arrival_rate_bps, "arrival_rate_bps");
    need_pos(pmax_w, "pmax_w");
    need_pos(cell_radius_m, "cell_radius_m");
    need_pos(pathloss_exp, "pathloss_exp");
    need_pos(min_drop_m, "min_drop_m");
    if (shadow_sigma_db < 0.0) throw ConfigError("shadow_sigma_db must be >= 0");
    if (ps_bits < 1) throw ConfigError("ps_bits must be >= 1");
    if (cus_per_packet < 1) throw ConfigError("cus_per_packet must be >= 1");
    if (ps_bits > 2 * cus_per_packet)
      throw ConfigError("ps_bits exceeds 2 bits per channel use");
    if (cus_per_packet > bandwidth_hz * slot_s)
      throw ConfigError("cus_per_packet does not fit into one slot");
    if (cell_radius_m <= min_drop_m)
      throw ConfigError("cell_radius_m must exceed min_drop_m");
  }
};

/// Thermal noise power over a bandwidth, from a dBm/Hz PSD.
inline double noise_power_w(double noise_psd_dbm_hz, double bandwidth_hz) {
  return dbm_to_watt(noise_psd_dbm_hz) * bandwidth_hz;
}

inline double noise_power_w(const SystemConfig& cfg) {
  return noise_power_w(cfg.noise_psd_dbm_hz, cfg.bandwidth_hz);
}

// ---------------------------------------------------------------------------
// Large-scale link budget
// ---------------------------------------------------------------------------

struct LinkBudget {
  double distance_m = 0.0;
  double gain = 0.0;  // linear large-scale power gain, pathloss x shadowing
};

/// Draws one UE position and its large-scale gain.
/// Distance density is proportional to r on [min_drop_m, cell_radius_m]
/// (uniform over the annulus area); shadowing is lognormal with
/// shadow_sigma_db in dB.  Fast fading is not part of the link budget.
template <class Rng>
LinkBudget draw_link_budget(const SystemConfig& cfg, Rng& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double r0sq = cfg.min_drop_m * cfg.min_drop_m;
  const double r1sq = cfg.cell_radius_m * cfg.cell_radius_m;
  const double d = std::sqrt(r0sq + u01(rng) * (r1sq - r0sq));
  std::normal_distribution<double> shadow_db(0.0, cfg.shadow_sigma_db);
  const double gain = std::pow(d, -cfg.pathloss_exp) * db_to_linear(shadow_db(rng));
  return {d, gain};
}

/// Pairs 2m UEs for power-domain multiplexing: sort by large-scale gain
/// descending and pair the i-th strongest with the i-th weakest.  Ties keep
/// input order.  Returns (strong_index, weak_index) pairs into `gains`.
inline std::vector<std::pair<int, int>> pair_ues(const std::vector<double>& gains) {
  if (gains.size() % 2 != 0)
    throw std::invalid_argument("pair_ues: odd number of UEs");
  std::vector<int> idx(gains.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(),
                   [&](int a, int b) { return gains[a] > gains[b]; });
  std::vector<std::pair<int, int>> out;
  const std::size_t m = gains.size() / 2;
  out.reserve(m);
  for (std::size_t i = 0; i < m; ++i)
    out.emplace_back(idx[i], idx[gains.size() - 1 - i]);
  return out;
}

// ---------------------------------------------------------------------------
// Post-detection SINR
// ---------------------------------------------------------------------------

/// Distribution of the instantaneous post-detection SINR of one user under
/// Rayleigh fading.  mean_snr is the mean own-signal SNR p*g/sigma^2;
/// interference_ratio is the mean received interference over the mean
/// received signal (0 for the interference-free user).
///
/// With unit-exponential fades H_s, H_i the instantaneous SINR is
///   Z = mean_snr * H_s / (1 + mean_snr * interference_ratio * H_i),
/// whose CCDF is exp(-z/mean_snr) / (1 + interference_ratio * z).
struct SinrModel {
  Role role = Role::wu;
  double mean_snr = 0.0;
  double interference_ratio = 0.0;
};

/// Weak user after interference cancellation: interference-free.
inline SinrModel sinr_wu(double p_w, double g_w, double sigma2_w) {
  if (p_w < 0.0 || g_w < 0.0 || !(sigma2_w > 0.0))
    throw std::invalid_argument("sinr_wu: bad power/gain/noise");
  return {Role::wu, p_w * g_w / sigma2_w, 0.0};
}

/// Strong user, decoded first: the weak user's received power is interference.
inline SinrModel sinr_su(double p_s, double g_s, double p_w, double g_w,
                         double sigma2_w) {
  if (p_s < 0.0 || g_s < 0.0 || p_w < 0.0 || g_w < 0.0 || !(sigma2_w > 0.0))
    throw std::invalid_argument("sinr_su: bad power/gain/noise");
  const double own = p_s * g_s;
  SinrModel m{Role::su, own / sigma2_w, 0.0};
  if (own > 0.0) m.interference_ratio = (p_w * g_w) / own;
  return m;
}

/// P(SINR > z).  Degenerate (mean_snr = 0) models carry all mass at zero.
inline double sinr_ccdf(const SinrModel& m, double z) {
  if (z < 0.0) throw std::domain_error("sinr_ccdf: z < 0");
  if (m.mean_snr <= 0.0) return 0.0;
  return std::exp(-z / m.mean_snr) / (1.0 + m.interference_ratio * z);
}

/// Density of the SINR, the negative derivative of the CCDF:
///   f(z) = exp(-z/s) * [ 1/(s*(1+r z)) + r/(1+r z)^2 ].
inline double sinr_pdf(const SinrModel& m, double z) {
  if (z < 0.0) throw std::domain_error("sinr_pdf: z < 0");
  if (m.mean_snr <= 0.0) return 0.0;
  const double s = m.mean_snr, r = m.interference_ratio;
  const double den = 1.0 + r * z;
  return std::exp(-z / s) * (1.0 / (s * den) + r / (den * den));
}

/// One fading realization of the instantaneous SINR.
template <class Rng>
double sample_sinr(const SinrModel& m, Rng& rng) {
  if (m.mean_snr <= 0.0) return 0.0;
  std::exponential_distribution<double> unit_exp(1.0);
  const double own = m.mean_snr * unit_exp(rng);
  const double inr = m.mean_snr * m.interference_ratio;  // mean interference/noise
  return inr > 0.0 ? own / (1.0 + inr * unit_exp(rng)) : own;
}

// ---------------------------------------------------------------------------
// Finite-blocklength decoding error
// ---------------------------------------------------------------------------

/// A single-attempt codeword: info_bits carried over blocklength channel uses.
struct FbcCode {
  int blocklength = 0;  // channel uses
  int info_bits = 0;

  void validate() const {
    if (blocklength < 1) throw ConfigError("blocklength must be >= 1");
    if (info_bits < 1) throw ConfigError("info_bits must be >= 1");
    if (info_bits >= 2 * blocklength)
      throw ConfigError("code rate must be below 2 bits per channel use");
  }
};

/// Decoding error probability under the normal approximation,
///   eps = Q( (n C(g) - k) / sqrt(n V(g)) ),
/// with capacity C = log2(1+g) and dispersion V = (1 - (1+g)^-2) log2(e)^2.
/// No higher-order (log n) correction term is applied.  Clamped to [0, 1];
/// a zero-SINR channel cannot deliver k >= 1 bits, so eps(0) = 1.
inline double fbc_error_prob(const FbcCode& code, double sinr) {
  if (sinr < 0.0) throw std::domain_error("fbc_error_prob: sinr < 0");
  const double n = code.blocklength, k = code.info_bits;
  if (sinr == 0.0) return 1.0;
  static const double log2e = 1.4426950408889634;
  const double onep = 1.0 + sinr;
  const double cap = std::log2(onep);
  const double disp = (1.0 - 1.0 / (onep * onep)) * log2e * log2e;
  if (disp <= 0.0) return cap * n >= k ? 0.0 : 1.0;
  const double arg = (n * cap - k) / std::sqrt(n * disp);
  return std::clamp(gaussian_q(arg), 0.0, 1.0);
}

}  // namespace nomatail
