// Command line front end: delay/peak-age tail bounds, Monte-Carlo validation,
// and minimum-power allocation for a two-user superposed uplink.
//
// Exit codes: 0 success, 2 infeasible allocation, 3 configuration error,
// 4 numerical failure, 1 anything else.

#include <exception>
#include <iostream>

#include <CLI11.hpp>

#include "nomatail/commands.hpp"

int main(int argc, char** argv) {
  CLI::App app{"tail bounds and power allocation for a two-user uplink"};
  app.require_subcommand(1);

  nomatail::BoundArgs bound;
  CLI::App* cb = app.add_subcommand("bound", "tail bounds on a target grid");
  cb->add_option("--config", bound.config, "scenario file")->required();
  cb->add_option("--metric", bound.metric, "sdvp (delay) or savp (peak age)");
  cb->add_option("--targets", bound.targets, "lo:step:hi or comma list [s]");
  cb->add_option("--out", bound.out, "output CSV (default stdout)");

  nomatail::ValidateArgs val;
  CLI::App* cv = app.add_subcommand("validate", "simulate tails against the bounds");
  cv->add_option("--config", val.config, "scenario file")->required();
  cv->add_option("--metric", val.metric, "sdvp (delay) or savp (peak age)");
  cv->add_option("--targets", val.targets, "lo:step:hi or comma list [s]");
  cv->add_option("--samples", val.samples, "tallied packets per UE");
  cv->add_option("--seed", val.seed, "base replication seed");
  cv->add_option("--workers", val.workers, "worker threads");
  cv->add_option("--out", val.out, "output CSV (default stdout)");

  nomatail::OptimizeArgs opt;
  CLI::App* co = app.add_subcommand("optimize", "minimum powers for the scenario QoS");
  co->add_option("--config", opt.config, "scenario file")->required();
  co->add_option("--out", opt.out, "output CSV (default stdout)");

  nomatail::SweepArgs sweep;
  CLI::App* cs = app.add_subcommand("sweep", "minimum powers across a target grid");
  cs->add_option("--config", sweep.config, "scenario file")->required();
  cs->add_option("--metric", sweep.metric, "sdvp (delay) or savp (peak age)");
  cs->add_option("--targets", sweep.targets, "lo:step:hi or comma list [s]");
  cs->add_option("--workers", sweep.workers, "worker threads");
  cs->add_option("--out", sweep.out, "output CSV (default stdout)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (cb->parsed()) return nomatail::cmd_bound(bound);
    if (cv->parsed()) return nomatail::cmd_validate(val);
    if (co->parsed()) return nomatail::cmd_optimize(opt);
    return nomatail::cmd_sweep(sweep);
  } catch (const nomatail::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 3;
  } catch (const nomatail::QuadratureFailure& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
