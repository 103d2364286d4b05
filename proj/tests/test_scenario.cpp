#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

#include <catch2/catch_amalgamated.hpp>

#include "nomatail/scenario.hpp"

using namespace nomatail;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinRel;

namespace {

// 13 lines: the ten required system keys plus an explicit link block.
const std::string kBase =
    "system.bandwidth_hz = 2e6\n"
    "system.slot_s = 1e-3\n"
    "system.ps_bits = 150\n"
    "system.arrival_rate_bps = 250e3\n"
    "system.noise_psd_dbm_hz = -176\n"
    "system.pmax_w = 2.0\n"
    "system.cell_radius_m = 500\n"
    "system.pathloss_exp = 2.5\n"
    "system.shadow_sigma_db = 8\n"
    "system.cus_per_packet = 200\n"
    "links.mode = explicit\n"
    "links.su_gain = 1e-9\n"
    "links.wu_gain = 1e-10\n";

std::filesystem::path temp_path(const std::string& stem) {
  static int counter = 0;
  return std::filesystem::temp_directory_path() /
         ("nomatail_test_" + std::to_string(::getpid()) + "_" +
          std::to_string(counter++) + "_" + stem);
}

std::filesystem::path write_temp(const std::string& stem, const std::string& text) {
  const auto p = temp_path(stem);
  std::ofstream out(p);
  out << text;
  return p;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string l;
  while (std::getline(in, l))
    if (!l.empty()) out.push_back(l);
  return out;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(NOMATAIL_CLI_PATH) + " " + args + " 2>/dev/null";
  const int rc = std::system(cmd.c_str());
  REQUIRE(rc != -1);
  REQUIRE(WIFEXITED(rc));
  return WEXITSTATUS(rc);
}

}  // namespace

TEST_CASE("scenario parser fills every block") {
  const Scenario sc = parse_scenario_text(kBase +
                                          "powers.su_w = 0.25\n"
                                          "powers.wu_w = 0.125\n"
                                          "qos.su.target_delay_s = 1.2e-3\n"
                                          "qos.su.eps_delay = 1e-5\n"
                                          "qos.wu.target_aoi_s = 6e-3\n"
                                          "qos.wu.eps_aoi = 1e-3\n"
                                          "qos.wu.theta_max_hint = 80\n"
                                          "traffic.wu.arrival_rate_bps = 100e3\n"
                                          "traffic.wu.ps_bits = 120\n"
                                          "sweep.delay_targets_s = 1.1e-3:1e-4:1.4e-3\n"
                                          "sweep.aoi_targets_s = 2e-3, 3e-3, 4.5e-3\n"
                                          "sweep.arrival_rates_bps = 250e3\n"
                                          "sweep.ps_bits = 125:25:175\n"
                                          "oma.mode = time\n"
                                          "# trailing comment\n");
  CHECK(sc.sys.bandwidth_hz == 2e6);
  CHECK(sc.sys.ps_bits == 150);
  CHECK(sc.sys.cus_per_packet == 200);
  CHECK(sc.link_mode == Scenario::LinkMode::explicit_gains);
  CHECK(sc.su_gain == 1e-9);
  CHECK(sc.wu_gain == 1e-10);
  CHECK(sc.p_su_w == 0.25);
  CHECK(sc.p_wu_w == 0.125);

  REQUIRE(sc.su.qos.delay.has_value());
  CHECK(sc.su.qos.delay->threshold_s == 1.2e-3);
  CHECK(sc.su.qos.delay->eps == 1e-5);
  CHECK_FALSE(sc.su.qos.aoi.has_value());
  REQUIRE(sc.wu.qos.aoi.has_value());
  CHECK(sc.wu.qos.aoi->threshold_s == 6e-3);
  CHECK_FALSE(sc.wu.qos.delay.has_value());
  CHECK(sc.wu.qos.theta_max_hint == 80.0);
  CHECK(sc.su.qos.theta_max_hint == 50.0);  // untouched default

  // Explicit traffic override for one role, system defaults for the other.
  CHECK(sc.wu.arrival_rate_bps == 100e3);
  CHECK(sc.wu.ps_bits == 120);
  CHECK(sc.su.arrival_rate_bps == 250e3);
  CHECK(sc.su.ps_bits == 150);

  REQUIRE(sc.sweep_delay_targets_s.size() == 4);
  CHECK_THAT(sc.sweep_delay_targets_s[3], WithinRel(1.4e-3, 1e-12));
  REQUIRE(sc.sweep_aoi_targets_s.size() == 3);
  CHECK(sc.sweep_aoi_targets_s[1] == 3e-3);
  REQUIRE(sc.sweep_arrival_rates_bps.size() == 1);
  REQUIRE(sc.sweep_ps_bits.size() == 3);
  CHECK(sc.sweep_ps_bits[0] == 125);
  CHECK(sc.sweep_ps_bits[2] == 175);
  CHECK(sc.oma_mode == Scheme::oma_time);
}

TEST_CASE("scenario defaults when optional blocks are absent") {
  const Scenario sc = parse_scenario_text(kBase);
  CHECK(sc.p_su_w == 2.0);  // pmax
  CHECK(sc.p_wu_w == 2.0);
  CHECK(sc.su.arrival_rate_bps == 250e3);
  CHECK(sc.wu.ps_bits == 150);
  CHECK_FALSE(sc.su.qos.delay.has_value());
  CHECK(sc.oma_mode == Scheme::oma_freq);
  CHECK(sc.sweep_delay_targets_s.empty());
}

namespace {

void expect_error(const std::string& text, const std::string& fragment) {
  try {
    parse_scenario_text(text);
    FAIL("expected ConfigError containing '" << fragment << "'");
  } catch (const ConfigError& e) {
    CHECK_THAT(e.what(), ContainsSubstring(fragment));
  }
}

}  // namespace

TEST_CASE("scenario parser pins errors to their line") {
  expect_error("zzz.unknown = 1\n", "line 1");
  expect_error("zzz.unknown = 1\n", "unknown key");
  expect_error(kBase + "system.slot_s = 2e-3\n", "line 14");
  expect_error(kBase + "system.slot_s = 2e-3\n", "duplicate");
  expect_error(kBase + "just words\n", "expected key = value");
  expect_error(kBase + "system.pmax_w = abc\n", "duplicate key");  // dup beats parse
  expect_error("system.pmax_w = abc\n", "expected a number");
  expect_error("system.ps_bits = 1.5\n", "expected an integer");
  expect_error(kBase + "sweep.delay_targets_s = 2e-3:0:1e-3\n", "step > 0");
  expect_error(kBase + "sweep.delay_targets_s = 1:2\n", "lo:step:hi");
  expect_error(kBase + "sweep.ps_bits = 100.5\n", "must be integers");
  expect_error("links.mode = maybe\n", "must be explicit or draw");
  expect_error(kBase + "oma.mode = both\n", "freq or time");
  expect_error(kBase + "qos.su.volume = 11\n", "unknown key");
}

TEST_CASE("scenario-level validation") {
  expect_error("", "missing required key");
  {
    // Drop one required key.
    std::string text;
    for (const auto& l : lines_of(kBase))
      if (l.find("system.slot_s") == std::string::npos) text += l + "\n";
    expect_error(text, "missing required key 'system.slot_s'");
  }
  {
    std::string text;
    for (const auto& l : lines_of(kBase))
      if (l.find("links.su_gain") == std::string::npos) text += l + "\n";
    expect_error(text, "needs links.su_gain");
  }
  {
    // Swap the gains: the strong user must have the stronger channel.
    std::string text;
    for (const auto& l : lines_of(kBase)) {
      if (l.find("links.su_gain") != std::string::npos)
        text += "links.su_gain = 1e-11\n";
      else
        text += l + "\n";
    }
    expect_error(text, "su_gain must be >= wu_gain");
  }
  {
    std::string text;
    for (const auto& l : lines_of(kBase)) {
      if (l.find("links.mode") != std::string::npos)
        text += "links.mode = draw\n";
      else if (l.find("links.") == std::string::npos)
        text += l + "\n";
    }
    expect_error(text, "needs links.seed");
  }
  expect_error(kBase + "qos.su.target_delay_s = 1e-3\nqos.su.eps_delay = 1.5\n",
               "eps in (0,1)");
  expect_error(kBase + "qos.su.eps_delay = 1e-5\n", "target > 0");
  expect_error(kBase + "powers.su_w = 3\n", "exceed system.pmax_w");
  expect_error(kBase + "system.extra = 1\n", "unknown key");
  {
    std::string text;
    for (const auto& l : lines_of(kBase)) {
      if (l.find("cus_per_packet") != std::string::npos)
        text += "system.cus_per_packet = 3000\n";
      else
        text += l + "\n";
    }
    expect_error(text, "does not fit into one slot");
  }
}

TEST_CASE("grid syntax") {
  auto grid = [](const std::string& v) { return detail::parse_grid_at(1, v); };
  CHECK(grid("5e-3") == std::vector<double>{5e-3});
  CHECK(grid("1, 2, 3") == std::vector<double>{1.0, 2.0, 3.0});
  const auto r = grid("1.1e-3:1e-4:2.0e-3");
  REQUIRE(r.size() == 10);
  CHECK(r.front() == 1.1e-3);
  CHECK(r.back() == 2.0e-3);  // clamped to hi exactly
  for (std::size_t i = 1; i < r.size(); ++i) CHECK(r[i] > r[i - 1]);
}

TEST_CASE("link resolution") {
  SECTION("explicit gains pass through") {
    const Scenario sc = parse_scenario_text(kBase);
    const ResolvedLinks links = resolve_links(sc);
    CHECK(links.su.gain == 1e-9);
    CHECK(links.wu.gain == 1e-10);
    const AllocationProblem prob = make_problem(sc);
    CHECK(prob.su_link.gain == 1e-9);
    CHECK(prob.sys.pmax_w == 2.0);
    CHECK(prob.su.arrival_rate_bps == 250e3);
  }
  SECTION("drawn links are deterministic in the seed and ordered by gain") {
    std::string text;
    for (const auto& l : lines_of(kBase)) {
      if (l.find("links.mode") != std::string::npos)
        text += "links.mode = draw\nlinks.seed = 5\n";
      else if (l.find("links.") == std::string::npos)
        text += l + "\n";
    }
    const Scenario sc = parse_scenario_text(text);
    const ResolvedLinks a = resolve_links(sc);
    const ResolvedLinks b = resolve_links(sc);
    CHECK(a.su.gain == b.su.gain);
    CHECK(a.wu.gain == b.wu.gain);
    CHECK(a.su.gain >= a.wu.gain);
    CHECK(a.su.distance_m > 0.0);
  }
}

TEST_CASE("shipped scenario files parse") {
  const std::filesystem::path dir(NOMATAIL_SCENARIO_DIR);
  const Scenario def = parse_scenario_file((dir / "default.scn").string());
  CHECK(def.link_mode == Scenario::LinkMode::draw);
  CHECK(def.sweep_delay_targets_s.size() == 9);
  const Scenario val = parse_scenario_file((dir / "validation.scn").string());
  CHECK(val.sweep_delay_targets_s.size() == 10);
  CHECK(val.sweep_aoi_targets_s.size() == 10);
  CHECK(val.p_wu_w < val.sys.pmax_w);  // fixed powers, not the cap
  const Scenario dly = parse_scenario_file((dir / "delay_sweep.scn").string());
  CHECK(dly.link_mode == Scenario::LinkMode::explicit_gains);
  CHECK(dly.sweep_delay_targets_s.size() == 9);
  const Scenario aoi = parse_scenario_file((dir / "aoi_sweep.scn").string());
  CHECK(aoi.sweep_aoi_targets_s.size() == 9);
  REQUIRE(aoi.su.qos.aoi.has_value());
  CHECK(aoi.su.qos.aoi->eps == 1e-3);
}

TEST_CASE("command line end to end") {
  const auto scn = write_temp("cli.scn", kBase +
                                             "qos.wu.target_delay_s = 1.5e-3\n"
                                             "qos.wu.eps_delay = 1e-4\n"
                                             "qos.su.target_delay_s = 1.5e-3\n"
                                             "qos.su.eps_delay = 1e-4\n"
                                             "sweep.delay_targets_s = 1.3e-3:2e-4:1.7e-3\n");

  SECTION("bound writes one row per role and target") {
    const auto out = temp_path("bound.csv");
    REQUIRE(run_cli("bound --config " + scn.string() +
                    " --metric sdvp --targets 1.2e-3,1.5e-3 --out " + out.string()) == 0);
    const auto rows = lines_of(slurp(out));
    REQUIRE(rows.size() == 5);
    CHECK(rows[0] == "role,metric,target_s,bound,theta_star,theta_hi,stable,kernel_evals");
    CHECK_THAT(rows[1], ContainsSubstring("wu,sdvp,"));
    CHECK_THAT(rows[4], ContainsSubstring("su,sdvp,"));
  }
  SECTION("bound uses the scenario sweep grid when no targets are passed") {
    const auto out = temp_path("bound_grid.csv");
    REQUIRE(run_cli("bound --config " + scn.string() + " --out " + out.string()) == 0);
    REQUIRE(lines_of(slurp(out)).size() == 7);  // header + 2 roles x 3 grid points
  }
  SECTION("validate overlays simulation and bound, and emits a plot script") {
    const auto out = temp_path("validate.csv");
    REQUIRE(run_cli("validate --config " + scn.string() +
                    " --metric sdvp --targets 1.5e-3 --samples 100000 --seed 3"
                    " --workers 2 --out " +
                    out.string()) == 0);
    const auto rows = lines_of(slurp(out));
    REQUIRE(rows.size() == 3);
    CHECK(rows[0] ==
          "role,threshold_s,metric,count_exceed,count_total,p_hat,wilson_hi,seed,"
          "ub,theta_star,stable");
    CHECK_THAT(rows[1], ContainsSubstring(",3,"));  // seed column
    const std::string plot = slurp(out.string() + ".plot.py");
    CHECK_THAT(plot, ContainsSubstring("matplotlib"));
    CHECK_THAT(plot, ContainsSubstring("wilson_hi"));
  }
  SECTION("optimize reports both schemes and exits by feasibility") {
    const auto out = temp_path("opt.csv");
    REQUIRE(run_cli("optimize --config " + scn.string() + " --out " + out.string()) == 0);
    const auto rows = lines_of(slurp(out));
    REQUIRE(rows.size() == 5);  // header + 2 schemes x 2 roles
    CHECK(rows[0] ==
          "scheme,role,target_kind,target_s,p_star_w,status,binding,sdvp,savp,iters");
    CHECK_THAT(rows[1], ContainsSubstring("noma,wu,delay,"));
    CHECK_THAT(rows[3], ContainsSubstring("oma_freq,wu,"));
    CHECK_THAT(rows[1], ContainsSubstring(",optimal,"));
  }
  SECTION("optimize exits 2 when the targets cannot be met") {
    const auto bad = write_temp("cli_bad.scn", [] {
      std::string text;
      for (const auto& l : lines_of(kBase)) {
        if (l.find("links.su_gain") != std::string::npos)
          text += "links.su_gain = 1e-14\n";
        else if (l.find("links.wu_gain") != std::string::npos)
          text += "links.wu_gain = 1e-15\n";
        else
          text += l + "\n";
      }
      return text + "qos.wu.target_delay_s = 1.2e-3\nqos.wu.eps_delay = 1e-6\n";
    }());
    const auto out = temp_path("opt_bad.csv");
    REQUIRE(run_cli("optimize --config " + bad.string() + " --out " + out.string()) == 2);
    CHECK_THAT(slurp(out), ContainsSubstring(",infeasible,"));
  }
  SECTION("sweep crosses targets with both schemes and emits a plot script") {
    const auto out = temp_path("sweep.csv");
    REQUIRE(run_cli("sweep --config " + scn.string() +
                    " --metric sdvp --workers 4 --out " + out.string()) == 0);
    const auto rows = lines_of(slurp(out));
    REQUIRE(rows.size() == 13);  // header + 3 targets x 2 schemes x 2 roles
    CHECK(rows[0] ==
          "scheme,role,target_kind,target_s,p_star_w,status,binding,sdvp,savp,iters,"
          "saving");
    CHECK_THAT(slurp(out.string() + ".plot.py"), ContainsSubstring("power saving"));
  }
  SECTION("usage errors exit 3") {
    CHECK(run_cli("bound --config " + scn.string() + " --metric bogus") == 3);
    CHECK(run_cli("bound --config /nonexistent.scn") == 3);
    CHECK(run_cli("validate --config " + scn.string() +
                  " --targets 1e-3 --samples 50000") == 3);
    CHECK(run_cli("sweep --config " + scn.string() + " --metric savp") == 3);
  }
}
