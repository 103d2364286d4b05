#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <thread>
#include <vector>

#include "nomatail/channel.hpp"

namespace nomatail {

struct InsufficientSamples : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Single-UE packet dynamics
// ---------------------------------------------------------------------------

/// One simulated UE: exponential inter-arrival gaps at arrival_rate_hz, FCFS
/// queue, persistent retransmission where every attempt lasts attempt_s and
/// decodes against `code` at a freshly drawn SINR.  force_error_prob replaces
/// the channel draw with a fixed per-attempt error (test hook; 0 makes the
/// service deterministic at one attempt).
struct UeSetup {
  Role role = Role::su;
  SinrModel sinr;
  FbcCode code;
  double attempt_s = 0.0;
  double arrival_rate_hz = 0.0;
  std::optional<double> force_error_prob;
};

struct PacketRecord {
  double arrival_s = 0.0;
  double service_start_s = 0.0;
  double departure_s = 0.0;
  double prev_arrival_s = 0.0;  // NaN for the first packet
  int attempts = 0;
};

inline double packet_delay(const PacketRecord& p) {
  return p.departure_s - p.arrival_s;
}

/// Peak age sampled at this packet's departure: time since the previous
/// packet's arrival.  Undefined (NaN) for the first packet.
inline double packet_peak_age(const PacketRecord& p) {
  return p.departure_s - p.prev_arrival_s;
}

/// Core dynamics, shared by the record-collecting and streaming paths.
/// Service starts at max(arrival, previous departure) exactly; attempts run
/// back to back.  Calls visit(record) once per departed packet in order.
template <class URBG, class Visit>
void simulate_packets(const UeSetup& ue, long n_packets, URBG&& rng, Visit&& visit) {
  if (ue.arrival_rate_hz <= 0.0 || ue.attempt_s <= 0.0)
    throw ConfigError("simulate_packets: rates and attempt duration must be > 0");
  std::exponential_distribution<double> gap(ue.arrival_rate_hz);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  constexpr long kAttemptCap = 10'000'000;
  double clock = 0.0;
  double prev_departure = 0.0;
  double prev_arrival = std::numeric_limits<double>::quiet_NaN();
  for (long i = 0; i < n_packets; ++i) {
    clock += gap(rng);
    PacketRecord rec;
    rec.arrival_s = clock;
    rec.prev_arrival_s = prev_arrival;
    rec.service_start_s = std::max(clock, prev_departure);
    long attempts = 0;
    for (;;) {
      ++attempts;
      const double eps = ue.force_error_prob
                             ? *ue.force_error_prob
                             : fbc_error_prob(ue.code, sample_sinr(ue.sinr, rng));
      if (u01(rng) >= eps) break;
      if (attempts >= kAttemptCap)
        throw std::runtime_error("simulate_packets: packet never decoded");
    }
    rec.attempts = static_cast<int>(attempts);
    rec.departure_s = rec.service_start_s + static_cast<double>(attempts) * ue.attempt_s;
    prev_departure = rec.departure_s;
    prev_arrival = rec.arrival_s;
    visit(rec);
  }
}

inline std::vector<PacketRecord> run_replication(const UeSetup& ue, long n_packets,
                                                 std::uint64_t seed) {
  std::vector<PacketRecord> out;
  out.reserve(static_cast<std::size_t>(n_packets));
  std::mt19937_64 rng(seed);
  simulate_packets(ue, n_packets, rng, [&](const PacketRecord& r) { out.push_back(r); });
  return out;
}

// ---------------------------------------------------------------------------
// Tail estimates
// ---------------------------------------------------------------------------

struct TailEstimate {
  double threshold_s = 0.0;
  long count_exceed = 0;
  long count_total = 0;
  double p_hat = 0.0;
  double wilson_hi = 0.0;
};

/// Wilson score 95% upper limit for a binomial proportion; well behaved at
/// k = 0 where the naive normal interval collapses.
inline double wilson_upper(long k, long n) {
  if (n <= 0) throw std::invalid_argument("wilson_upper: n must be > 0");
  constexpr double z = 1.959963984540054;  // Phi^-1(0.975)
  const double nn = static_cast<double>(n);
  const double p = static_cast<double>(k) / nn;
  const double z2n = z * z / nn;
  const double center = p + 0.5 * z2n;
  const double half = z * std::sqrt(p * (1.0 - p) / nn + 0.25 * z2n / nn);
  return std::min(1.0, (center + half) / (1.0 + z2n));
}

inline TailEstimate make_tail_estimate(double threshold_s, long exceed, long total) {
  TailEstimate e;
  e.threshold_s = threshold_s;
  e.count_exceed = exceed;
  e.count_total = total;
  e.p_hat = total > 0 ? static_cast<double>(exceed) / static_cast<double>(total) : 0.0;
  e.wilson_hi = wilson_upper(exceed, total);
  return e;
}

inline TailEstimate estimate_delay_tail(std::span<const PacketRecord> records,
                                        double threshold_s, long min_samples = 10000) {
  if (static_cast<long>(records.size()) < min_samples)
    throw InsufficientSamples("delay tail: too few packets for a stable estimate");
  long exceed = 0;
  for (const auto& r : records)
    if (packet_delay(r) > threshold_s) ++exceed;
  return make_tail_estimate(threshold_s, exceed, static_cast<long>(records.size()));
}

inline TailEstimate estimate_aoi_tail(std::span<const PacketRecord> records,
                                      double threshold_s, long min_samples = 10000) {
  long exceed = 0, total = 0;
  for (const auto& r : records) {
    if (std::isnan(r.prev_arrival_s)) continue;  // first packet has no peak age
    ++total;
    if (packet_peak_age(r) > threshold_s) ++exceed;
  }
  if (total < min_samples)
    throw InsufficientSamples("aoi tail: too few packets for a stable estimate");
  return make_tail_estimate(threshold_s, exceed, total);
}

// ---------------------------------------------------------------------------
// Replicated campaigns
// ---------------------------------------------------------------------------

struct CampaignUe {
  UeSetup setup;
  std::vector<double> delay_thresholds_s;
  std::vector<double> aoi_thresholds_s;
};

struct CampaignSpec {
  std::vector<CampaignUe> ues;
  long packets_per_replication = 250000;
  long warmup_packets = 10000;  // dropped from every tally
  int replications = 4;
  std::uint64_t base_seed = 1;
  int workers = 1;
};

struct TailTally {
  double threshold_s = 0.0;
  long exceed = 0;
  long total = 0;
};

struct UeTallies {
  std::vector<TailTally> delay;
  std::vector<TailTally> aoi;
  double sum_wait_s = 0.0;      // service_start - arrival
  double sum_attempts = 0.0;
  long packets = 0;
};

struct CampaignResult {
  // per_rep[r][u]: tallies of replication r for UE u; merged: folded 0..R-1.
  std::vector<std::vector<UeTallies>> per_rep;
  std::vector<UeTallies> merged;
  std::uint64_t base_seed = 0;
};

namespace detail {

inline std::uint64_t replication_seed(const CampaignSpec& spec, int rep, std::size_t ue) {
  return spec.base_seed + static_cast<std::uint64_t>(rep) * spec.ues.size() + ue;
}

inline UeTallies run_one(const CampaignSpec& spec, int rep, std::size_t u) {
  const CampaignUe& cue = spec.ues[u];
  UeTallies t;
  t.delay.reserve(cue.delay_thresholds_s.size());
  for (double th : cue.delay_thresholds_s) t.delay.push_back({th, 0, 0});
  t.aoi.reserve(cue.aoi_thresholds_s.size());
  for (double th : cue.aoi_thresholds_s) t.aoi.push_back({th, 0, 0});
  std::mt19937_64 rng(replication_seed(spec, rep, u));
  long index = 0;
  simulate_packets(cue.setup, spec.warmup_packets + spec.packets_per_replication, rng,
                   [&](const PacketRecord& r) {
                     const long i = index++;
                     if (i < spec.warmup_packets) return;
                     ++t.packets;
                     t.sum_wait_s += r.service_start_s - r.arrival_s;
                     t.sum_attempts += r.attempts;
                     const double d = packet_delay(r);
                     for (auto& tt : t.delay) {
                       ++tt.total;
                       if (d > tt.threshold_s) ++tt.exceed;
                     }
                     if (!std::isnan(r.prev_arrival_s)) {
                       const double a = packet_peak_age(r);
                       for (auto& tt : t.aoi) {
                         ++tt.total;
                         if (a > tt.threshold_s) ++tt.exceed;
                       }
                     }
                   });
  return t;
}

inline void fold_into(UeTallies& acc, const UeTallies& part) {
  if (acc.delay.empty() && acc.aoi.empty() && acc.packets == 0) {
    acc = part;
    return;
  }
  for (std::size_t i = 0; i < acc.delay.size(); ++i) {
    acc.delay[i].exceed += part.delay[i].exceed;
    acc.delay[i].total += part.delay[i].total;
  }
  for (std::size_t i = 0; i < acc.aoi.size(); ++i) {
    acc.aoi[i].exceed += part.aoi[i].exceed;
    acc.aoi[i].total += part.aoi[i].total;
  }
  acc.sum_wait_s += part.sum_wait_s;
  acc.sum_attempts += part.sum_attempts;
  acc.packets += part.packets;
}

}  // namespace detail

/// Runs spec.replications independent replications per UE and folds them in
/// replication order.  The fold order and the per-replication seeds depend
/// only on the spec, so the result is identical for any worker count.
inline CampaignResult run_campaign(const CampaignSpec& spec) {
  if (spec.ues.empty()) throw ConfigError("campaign: no UEs configured");
  if (spec.replications < 1 || spec.packets_per_replication < 1)
    throw ConfigError("campaign: replications and packet counts must be >= 1");
  if (spec.replications * spec.packets_per_replication < 100000)
    throw ConfigError("campaign: fewer than 1e5 tallied packets per UE");
  if (spec.warmup_packets < 0) throw ConfigError("campaign: negative warmup");
  CampaignResult res;
  res.base_seed = spec.base_seed;
  res.per_rep.assign(static_cast<std::size_t>(spec.replications),
                     std::vector<UeTallies>(spec.ues.size()));
  const int workers = std::max(1, spec.workers);
  std::atomic<long> next{0};
  const long jobs = static_cast<long>(spec.replications) *
                    static_cast<long>(spec.ues.size());
  auto body = [&] {
    for (;;) {
      const long j = next.fetch_add(1);
      if (j >= jobs) return;
      const int rep = static_cast<int>(j / static_cast<long>(spec.ues.size()));
      const std::size_t u = static_cast<std::size_t>(j % static_cast<long>(spec.ues.size()));
      res.per_rep[static_cast<std::size_t>(rep)][u] = detail::run_one(spec, rep, u);
    }
  };
  if (workers == 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(body);
    for (auto& th : pool) th.join();
  }
  res.merged.assign(spec.ues.size(), UeTallies{});
  for (int r = 0; r < spec.replications; ++r)
    for (std::size_t u = 0; u < spec.ues.size(); ++u)
      detail::fold_into(res.merged[u], res.per_rep[static_cast<std::size_t>(r)][u]);
  return res;
}

}  // namespace nomatail
