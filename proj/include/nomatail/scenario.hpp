#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "nomatail/channel.hpp"
#include "nomatail/opt.hpp"

namespace nomatail {

/// Parsed scenario file: the system block plus everything the four CLI modes
/// need (link realization, fixed powers, per-role QoS and traffic overrides,
/// sweep grids).
struct Scenario {
  SystemConfig sys;

  enum class LinkMode { explicit_gains, draw } link_mode = LinkMode::explicit_gains;
  std::uint64_t link_seed = 1;
  double su_gain = 0.0, wu_gain = 0.0;

  double p_su_w = -1.0, p_wu_w = -1.0;  // negative: default to pmax

  RoleParams su, wu;

  std::vector<double> sweep_delay_targets_s;
  std::vector<double> sweep_aoi_targets_s;
  std::vector<double> sweep_arrival_rates_bps;
  std::vector<int> sweep_ps_bits;
  Scheme oma_mode = Scheme::oma_freq;

  RoleParams& params(Role r) { return r == Role::su ? su : wu; }
  const RoleParams& params(Role r) const { return r == Role::su ? su : wu; }
};

namespace detail {

inline std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

[[noreturn]] inline void fail_at(int line, const std::string& what) {
  throw ConfigError("scenario line " + std::to_string(line) + ": " + what);
}

inline double parse_double_at(int line, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) fail_at(line, "trailing characters in number '" + v + "'");
    return x;
  } catch (const std::logic_error&) {
    fail_at(line, "expected a number, got '" + v + "'");
  }
}

inline long long parse_int_at(int line, const std::string& v) {
  const double x = parse_double_at(line, v);
  const long long n = static_cast<long long>(x);
  if (static_cast<double>(n) != x) fail_at(line, "expected an integer, got '" + v + "'");
  return n;
}

/// Grid syntax: a single number, a comma list, or lo:step:hi (inclusive).
inline std::vector<double> parse_grid_at(int line, const std::string& v) {
  std::vector<double> out;
  if (v.find(':') != std::string::npos) {
    std::istringstream ss(v);
    std::string lo_s, step_s, hi_s;
    if (!std::getline(ss, lo_s, ':') || !std::getline(ss, step_s, ':') ||
        !std::getline(ss, hi_s))
      fail_at(line, "range must be lo:step:hi");
    const double lo = parse_double_at(line, trim(lo_s));
    const double step = parse_double_at(line, trim(step_s));
    const double hi = parse_double_at(line, trim(hi_s));
    if (!(step > 0.0) || hi < lo) fail_at(line, "range needs step > 0 and hi >= lo");
    for (double x = lo; x <= hi + 0.5 * step; x += step) out.push_back(std::min(x, hi));
    return out;
  }
  std::istringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double_at(line, trim(item)));
  if (out.empty()) fail_at(line, "empty list");
  return out;
}

}  // namespace detail

inline Scenario parse_scenario_text(const std::string& text) {
  using detail::fail_at;
  Scenario sc;
  std::set<std::string> seen;
  std::set<std::string> required = {
      "system.bandwidth_hz",     "system.slot_s",
      "system.ps_bits",          "system.arrival_rate_bps",
      "system.noise_psd_dbm_hz", "system.pmax_w",
      "system.cell_radius_m",    "system.pathloss_exp",
      "system.shadow_sigma_db",  "system.cus_per_packet",
      "links.mode"};

  std::istringstream in(text);
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const std::size_t hash = raw.find('#');
    if (hash != std::string::npos) raw.erase(hash);
    const std::string stripped = detail::trim(raw);
    if (stripped.empty()) continue;
    const std::size_t eq = stripped.find('=');
    if (eq == std::string::npos) fail_at(line, "expected key = value");
    const std::string key = detail::trim(stripped.substr(0, eq));
    const std::string val = detail::trim(stripped.substr(eq + 1));
    if (key.empty() || val.empty()) fail_at(line, "expected key = value");
    if (!seen.insert(key).second) fail_at(line, "duplicate key '" + key + "'");

    auto num = [&] { return detail::parse_double_at(line, val); };
    auto integer = [&] { return detail::parse_int_at(line, val); };
    auto grid = [&] { return detail::parse_grid_at(line, val); };
    auto qos_role = [&](const std::string& prefix) -> QosSpec* {
      if (key.rfind(prefix + "su.", 0) == 0) return &sc.su.qos;
      if (key.rfind(prefix + "wu.", 0) == 0) return &sc.wu.qos;
      return nullptr;
    };

    if (key == "system.bandwidth_hz") sc.sys.bandwidth_hz = num();
    else if (key == "system.slot_s") sc.sys.slot_s = num();
    else if (key == "system.ps_bits") sc.sys.ps_bits = static_cast<int>(integer());
    else if (key == "system.arrival_rate_bps") sc.sys.arrival_rate_bps = num();
    else if (key == "system.noise_psd_dbm_hz") sc.sys.noise_psd_dbm_hz = num();
    else if (key == "system.pmax_w") sc.sys.pmax_w = num();
    else if (key == "system.cell_radius_m") sc.sys.cell_radius_m = num();
    else if (key == "system.pathloss_exp") sc.sys.pathloss_exp = num();
    else if (key == "system.shadow_sigma_db") sc.sys.shadow_sigma_db = num();
    else if (key == "system.cus_per_packet") sc.sys.cus_per_packet = static_cast<int>(integer());
    else if (key == "links.mode") {
      if (val == "explicit") sc.link_mode = Scenario::LinkMode::explicit_gains;
      else if (val == "draw") sc.link_mode = Scenario::LinkMode::draw;
      else fail_at(line, "links.mode must be explicit or draw");
    } else if (key == "links.seed") sc.link_seed = static_cast<std::uint64_t>(integer());
    else if (key == "links.su_gain") sc.su_gain = num();
    else if (key == "links.wu_gain") sc.wu_gain = num();
    else if (key == "powers.su_w") sc.p_su_w = num();
    else if (key == "powers.wu_w") sc.p_wu_w = num();
    else if (QosSpec* q = qos_role("qos.")) {
      const std::string leaf = key.substr(key.find('.', 4) + 1);
      auto target = [&](std::optional<TailTarget>& t) -> TailTarget& {
        if (!t) t = TailTarget{};
        return *t;
      };
      if (leaf == "target_delay_s") target(q->delay).threshold_s = num();
      else if (leaf == "eps_delay") target(q->delay).eps = num();
      else if (leaf == "target_aoi_s") target(q->aoi).threshold_s = num();
      else if (leaf == "eps_aoi") target(q->aoi).eps = num();
      else if (leaf == "theta_max_hint") q->theta_max_hint = num();
      else fail_at(line, "unknown key '" + key + "'");
    } else if (key.rfind("traffic.", 0) == 0) {
      RoleParams* rp = nullptr;
      if (key.rfind("traffic.su.", 0) == 0) rp = &sc.su;
      else if (key.rfind("traffic.wu.", 0) == 0) rp = &sc.wu;
      else fail_at(line, "unknown key '" + key + "'");
      const std::string leaf = key.substr(11);
      if (leaf == "arrival_rate_bps") rp->arrival_rate_bps = num();
      else if (leaf == "ps_bits") rp->ps_bits = static_cast<int>(integer());
      else fail_at(line, "unknown key '" + key + "'");
    } else if (key == "sweep.delay_targets_s") sc.sweep_delay_targets_s = grid();
    else if (key == "sweep.aoi_targets_s") sc.sweep_aoi_targets_s = grid();
    else if (key == "sweep.arrival_rates_bps") sc.sweep_arrival_rates_bps = grid();
    else if (key == "sweep.ps_bits") {
      for (double x : grid()) {
        const int b = static_cast<int>(x);
        if (static_cast<double>(b) != x) fail_at(line, "sweep.ps_bits must be integers");
        sc.sweep_ps_bits.push_back(b);
      }
    } else if (key == "oma.mode") {
      if (val == "freq") sc.oma_mode = Scheme::oma_freq;
      else if (val == "time") sc.oma_mode = Scheme::oma_time;
      else fail_at(line, "oma.mode must be freq or time");
    } else {
      fail_at(line, "unknown key '" + key + "'");
    }
  }

  for (const auto& k : required)
    if (!seen.count(k)) throw ConfigError("scenario: missing required key '" + k + "'");
  if (sc.link_mode == Scenario::LinkMode::explicit_gains) {
    if (!seen.count("links.su_gain") || !seen.count("links.wu_gain"))
      throw ConfigError("scenario: links.mode=explicit needs links.su_gain and links.wu_gain");
    if (!(sc.su_gain > 0.0) || !(sc.wu_gain > 0.0))
      throw ConfigError("scenario: link gains must be > 0");
    if (sc.su_gain < sc.wu_gain)
      throw ConfigError("scenario: su_gain must be >= wu_gain (strong user decodes first)");
  } else if (!seen.count("links.seed")) {
    throw ConfigError("scenario: links.mode=draw needs links.seed");
  }
  sc.sys.validate();

  // Role traffic defaults to the system block; explicit overrides win.
  for (Role r : {Role::su, Role::wu}) {
    RoleParams& rp = sc.params(r);
    if (rp.arrival_rate_bps <= 0.0) rp.arrival_rate_bps = sc.sys.arrival_rate_bps;
    if (rp.ps_bits <= 0) rp.ps_bits = sc.sys.ps_bits;
    for (const auto& t : {rp.qos.delay, rp.qos.aoi})
      if (t && !(t->threshold_s > 0.0 && t->eps > 0.0 && t->eps < 1.0))
        throw ConfigError(std::string("scenario: qos.") + role_name(r) +
                          " needs target > 0 and eps in (0,1)");
  }
  if (sc.p_su_w < 0.0) sc.p_su_w = sc.sys.pmax_w;
  if (sc.p_wu_w < 0.0) sc.p_wu_w = sc.sys.pmax_w;
  if (sc.p_su_w > sc.sys.pmax_w || sc.p_wu_w > sc.sys.pmax_w)
    throw ConfigError("scenario: powers exceed system.pmax_w");
  return sc;
}

inline Scenario parse_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("scenario: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario_text(buf.str());
}

struct ResolvedLinks {
  LinkBudget su, wu;
};

/// Explicit gains pass through; drawn links place two UEs in the cell and
/// give the stronger channel the strong-user role.
inline ResolvedLinks resolve_links(const Scenario& sc) {
  if (sc.link_mode == Scenario::LinkMode::explicit_gains)
    return {LinkBudget{0.0, sc.su_gain}, LinkBudget{0.0, sc.wu_gain}};
  std::mt19937_64 rng(sc.link_seed);
  LinkBudget a = draw_link_budget(sc.sys, rng);
  LinkBudget b = draw_link_budget(sc.sys, rng);
  if (a.gain >= b.gain) return {a, b};
  return {b, a};
}

inline AllocationProblem make_problem(const Scenario& sc) {
  const ResolvedLinks links = resolve_links(sc);
  AllocationProblem prob;
  prob.sys = sc.sys;
  prob.su_link = links.su;
  prob.wu_link = links.wu;
  prob.su = sc.su;
  prob.wu = sc.wu;
  return prob;
}

}  // namespace nomatail
