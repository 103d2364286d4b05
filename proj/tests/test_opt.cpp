#include <algorithm>
#include <cmath>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "nomatail/opt.hpp"
#include "power_scan.hpp"

using namespace nomatail;
using Catch::Matchers::WithinRel;

namespace {

AllocationProblem base_problem() {
  AllocationProblem prob;
  prob.sys.bandwidth_hz = 2e6;
  prob.sys.slot_s = 1e-3;
  prob.sys.ps_bits = 150;
  prob.sys.arrival_rate_bps = 250e3;
  prob.sys.noise_psd_dbm_hz = -176.0;
  prob.sys.pmax_w = 2.0;
  prob.sys.cell_radius_m = 500.0;
  prob.sys.pathloss_exp = 2.5;
  prob.sys.shadow_sigma_db = 8.0;
  prob.sys.cus_per_packet = 200;
  prob.su_link = {100.0, 1e-9};
  prob.wu_link = {300.0, 1e-10};
  prob.su.arrival_rate_bps = 250e3;
  prob.su.ps_bits = 150;
  prob.wu.arrival_rate_bps = 250e3;
  prob.wu.ps_bits = 150;
  prob.su.qos.delay = TailTarget{1.5e-3, 1e-4};
  prob.wu.qos.delay = TailTarget{1.5e-3, 1e-4};
  return prob;
}

bool has_tag(const AllocationResult& r, const std::string& tag) {
  return std::find(r.binding.begin(), r.binding.end(), tag) != r.binding.end();
}

}  // namespace

TEST_CASE("role check evaluates exactly the configured targets") {
  const AllocationProblem prob = base_problem();
  const RoleCheck wu = check_role(prob, Scheme::noma, Role::wu, 1.0, 2.0);
  REQUIRE(wu.delay.has_value());
  CHECK_FALSE(wu.aoi.has_value());
  CHECK(wu.delay->stable);
  CHECK(wu.feasible == (wu.delay->value <= 1e-4));

  AllocationProblem both = prob;
  both.wu.qos.aoi = TailTarget{8e-3, 1e-3};
  const RoleCheck wu2 = check_role(both, Scheme::noma, Role::wu, 1.0, 2.0);
  CHECK(wu2.delay.has_value());
  CHECK(wu2.aoi.has_value());
}

TEST_CASE("weak-user bounds ignore the strong user's power") {
  const AllocationProblem prob = base_problem();
  const RoleCheck a = check_role(prob, Scheme::noma, Role::wu, 0.7, 0.01);
  const RoleCheck b = check_role(prob, Scheme::noma, Role::wu, 0.7, 2.0);
  REQUIRE(a.delay.has_value());
  REQUIRE(b.delay.has_value());
  CHECK(a.delay->value == b.delay->value);  // identical inputs, identical bound
}

TEST_CASE("feasibility is monotone in own power") {
  const AllocationProblem prob = base_problem();
  for (Role role : {Role::wu, Role::su}) {
    bool seen_feasible = false;
    for (double p : {1e-4, 1e-3, 1e-2, 0.1, 0.5, 1.0, 2.0}) {
      const bool f = role == Role::wu
                         ? check_role(prob, Scheme::noma, Role::wu, p, 2.0).feasible
                         : check_role(prob, Scheme::noma, Role::su, 0.02, p).feasible;
      if (seen_feasible) CHECK(f);
      seen_feasible = seen_feasible || f;
    }
    CHECK(seen_feasible);  // pmax must qualify, or the sweep says nothing
  }
}

TEST_CASE("allocation result carries its own certificates") {
  AllocationProblem prob = base_problem();
  SECTION("delay-only targets") {}
  SECTION("mixed delay and age targets") {
    prob.wu.qos.aoi = TailTarget{8e-3, 1e-3};
    prob.su.qos.aoi = TailTarget{8e-3, 1e-3};
  }
  const AllocationResult res = allocate(prob);
  REQUIRE(res.status == AllocStatus::optimal);
  CHECK(res.p_wu_w > 0.0);
  CHECK(res.p_su_w > 0.0);
  CHECK(res.wu.feasible);
  CHECK(res.su.feasible);
  CHECK(check_feasible(prob, Scheme::noma, res.p_wu_w, res.p_su_w).feasible);

  // Shaving 10x the bisection tolerance off either stage must break it.
  const double shave = 1.0 - 10.0 * prob.power_rel_tol;
  CHECK_FALSE(
      check_role(prob, Scheme::noma, Role::wu, res.p_wu_w * shave, res.p_su_w).feasible);
  CHECK_FALSE(
      check_role(prob, Scheme::noma, Role::su, res.p_wu_w, res.p_su_w * shave).feasible);
}

TEST_CASE("allocated power responds monotonically to the targets") {
  AllocationProblem prob = base_problem();
  SECTION("looser violation budget needs no more power") {
    double prev_wu = kInf, prev_total = kInf;
    for (double eps : {3e-5, 1e-4, 1e-3}) {
      prob.wu.qos.delay->eps = eps;
      prob.su.qos.delay->eps = eps;
      const AllocationResult res = allocate(prob);
      REQUIRE(res.status == AllocStatus::optimal);
      CHECK(res.p_wu_w <= prev_wu * (1.0 + 2e-4));
      CHECK(res.p_wu_w + res.p_su_w <= prev_total * (1.0 + 2e-4));
      prev_wu = res.p_wu_w;
      prev_total = res.p_wu_w + res.p_su_w;
    }
  }
  SECTION("looser delay target needs no more power") {
    double prev_wu = kInf;
    for (double t : {1.2e-3, 1.5e-3, 1.9e-3}) {
      prob.wu.qos.delay->threshold_s = t;
      prob.su.qos.delay->threshold_s = t;
      const AllocationResult res = allocate(prob);
      REQUIRE(res.status == AllocStatus::optimal);
      CHECK(res.p_wu_w <= prev_wu * (1.0 + 2e-4));
      prev_wu = res.p_wu_w;
    }
  }
  SECTION("strong-user minimum grows with the interferer's power") {
    double prev = 0.0;
    for (double p_wu : {0.005, 0.05, 0.5}) {
      int iters = 0;
      const auto p = detail::min_power(
          [&](double ps) {
            return check_role(prob, Scheme::noma, Role::su, p_wu, ps).feasible;
          },
          prob.sys.pmax_w, prob.power_rel_tol, iters);
      REQUIRE(p.has_value());
      CHECK(*p >= prev * (1.0 - 2e-4));
      prev = *p;
    }
  }
}

TEST_CASE("allocator total power matches an independent grid scan") {
  std::vector<AllocationProblem> instances;
  {
    AllocationProblem p = base_problem();
    instances.push_back(p);
    p.wu.qos.delay->eps = 1e-3;
    p.su.qos.delay->eps = 1e-3;
    instances.push_back(p);
    p = base_problem();
    p.su_link.gain = 3e-9;
    p.wu_link.gain = 4e-10;
    p.wu.qos.delay->threshold_s = 1.2e-3;
    p.su.qos.delay->threshold_s = 1.2e-3;
    instances.push_back(p);
  }
  for (const auto& prob : instances) {
    const AllocationResult res = allocate(prob);
    REQUIRE(res.status == AllocStatus::optimal);
    const auto grid = refscan::grid_min_total(prob);
    REQUIRE(grid.has_value());
    CHECK(std::abs(res.p_wu_w + res.p_su_w - *grid) <= 4e-4 * prob.sys.pmax_w);
  }
}

TEST_CASE("infeasible problems pin the report to the power corner") {
  SECTION("weak user cannot make its target at pmax") {
    AllocationProblem prob = base_problem();
    prob.wu_link.gain = 1e-14;
    const AllocationResult res = allocate(prob);
    CHECK(res.status == AllocStatus::infeasible);
    CHECK(res.failed_stage == Role::wu);
    CHECK(res.p_wu_w == prob.sys.pmax_w);
    CHECK(res.p_su_w == prob.sys.pmax_w);
    CHECK_FALSE(res.wu.feasible);
    CHECK(has_tag(res, "wu_pmax"));
    CHECK(has_tag(res, "su_pmax"));
  }
  SECTION("strong user drowns in the weak user's interference") {
    AllocationProblem prob = base_problem();
    prob.su_link.gain = 1e-13;
    prob.wu_link.gain = 1e-9;
    const AllocationResult res = allocate(prob);
    CHECK(res.status == AllocStatus::infeasible);
    CHECK(res.failed_stage == Role::su);
    CHECK(res.p_wu_w == prob.sys.pmax_w);
    CHECK_FALSE(res.su.feasible);
  }
}

TEST_CASE("near-boundary constraints are reported as binding") {
  const AllocationProblem prob = base_problem();
  const AllocationResult res = allocate(prob);
  REQUIRE(res.status == AllocStatus::optimal);
  // Bisection stops a fraction of a percent above the boundary, so the
  // delay constraints sit within 5% of their budgets.
  CHECK(has_tag(res, "wu_sdvp"));
  CHECK(has_tag(res, "su_sdvp"));
  CHECK_FALSE(has_tag(res, "wu_pmax"));
}

TEST_CASE("orthogonal baselines") {
  SECTION("frequency split equals an interference-free user on half the band") {
    // A full-band config whose oma_freq halves land exactly on the reference
    // narrowband config: the two service environments must be identical.
    AllocationProblem wide = base_problem();
    wide.sys.bandwidth_hz = 4e6;
    wide.sys.cus_per_packet = 400;
    AllocationProblem narrow = base_problem();

    for (double p : {0.05, 0.7}) {
      const auto oma = detail::role_env(wide, Scheme::oma_freq, Role::wu, p, p);
      const auto ref = detail::role_env(narrow, Scheme::noma, Role::wu, p, 2.0);
      CHECK(oma.svc.attempts_per_slot == ref.svc.attempts_per_slot);
      CHECK(oma.svc.attempt_s == ref.svc.attempt_s);
      CHECK(oma.svc.sinr.mean_snr == ref.svc.sinr.mean_snr);
      CHECK(oma.svc.code.blocklength == ref.svc.code.blocklength);
      CHECK(oma.traffic.pkts_per_slot == ref.traffic.pkts_per_slot);
      CHECK_THAT(service_inv_mgf(1.0, oma.svc),
                 WithinRel(service_inv_mgf(1.0, ref.svc), 1e-12));
    }
  }
  SECTION("time split halves the attempts per slot at full band") {
    const AllocationProblem prob = base_problem();
    const auto env = detail::role_env(prob, Scheme::oma_time, Role::wu, 0.5, 0.5);
    CHECK(env.svc.attempts_per_slot == prob.sys.attempts_per_slot() / 2);
    CHECK(env.svc.attempt_s == prob.sys.attempt_s());
    CHECK(env.svc.code.blocklength == prob.sys.cus_per_packet);
  }
  SECTION("splits that leave no resource are rejected") {
    AllocationProblem thin = base_problem();
    thin.sys.ps_bits = 2;
    thin.sys.cus_per_packet = 1;
    CHECK_THROWS_AS(detail::role_env(thin, Scheme::oma_freq, Role::wu, 1.0, 1.0),
                    ConfigError);
    AllocationProblem slow = base_problem();
    slow.sys.bandwidth_hz = 2e5;  // exactly one attempt per slot
    CHECK_THROWS_AS(detail::role_env(slow, Scheme::oma_time, Role::wu, 1.0, 1.0),
                    ConfigError);
  }
  SECTION("the orthogonal allocator rejects the superposed scheme") {
    CHECK_THROWS_AS(allocate_oma(base_problem(), Scheme::noma), std::invalid_argument);
  }
  SECTION("orthogonal allocation is optimal with certificates of its own") {
    AllocationProblem prob = base_problem();
    const AllocationResult res = allocate_oma(prob, Scheme::oma_freq);
    REQUIRE(res.status == AllocStatus::optimal);
    const double shave = 1.0 - 10.0 * prob.power_rel_tol;
    CHECK_FALSE(check_role(prob, Scheme::oma_freq, Role::wu, res.p_wu_w * shave,
                           res.p_su_w)
                    .feasible);
    CHECK_FALSE(check_role(prob, Scheme::oma_freq, Role::su, res.p_wu_w,
                           res.p_su_w * shave)
                    .feasible);
  }
}
