#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "rscran/conic/cbf.hpp"
#include "rscran/harness/config.hpp"
#include "rscran/harness/experiment.hpp"
#include "rscran/harness/validation.hpp"

using namespace rscran;
using namespace rscran::harness;

namespace {

struct RunArgs {
  std::string config;
  std::string out = "out";
  std::optional<std::uint64_t> seed;
  std::optional<int> parallel;
  bool no_timing = false;
};

void add_run_args(CLI::App* cmd, RunArgs& a) {
  cmd->add_option("--config", a.config, "JSON config file (built-in desk defaults when omitted)");
  cmd->add_option("--out", a.out, "output directory")->capture_default_str();
  cmd->add_option("--seed", a.seed, "override the master seed");
  cmd->add_option("--parallel", a.parallel, "drop workers")->check(CLI::PositiveNumber);
  cmd->add_flag("--no-timing", a.no_timing, "write seconds = 0 so repeated runs are byte-identical");
}

ExperimentConfig resolve(const RunArgs& a) {
  ExperimentConfig c = a.config.empty() ? ExperimentConfig{} : load_config(a.config);
  if (a.seed) c.seed = *a.seed;
  if (a.parallel) c.parallel = *a.parallel;
  if (a.no_timing) c.record_timing = false;
  c.validate();
  return c;
}

int report(const ExperimentResult& r, const std::string& out) {
  write_outputs(r, out);
  for (const auto& s : r.summary) {
    if (!r.axis.empty()) std::cout << r.axis << "=" << fmt_num(s.axis_value) << "  ";
    std::cout << to_string(s.scheme) << "  mean ESR " << s.mean_esr_bps / 1e6 << " Mbps  SE "
              << s.se_esr_bps / 1e6 << " Mbps  (" << s.drops << " drops)\n";
  }
  std::cout << "failed drops: " << r.failed_drops() << "/" << r.total_drops() << "\n";
  std::cout << "wrote " << out << "/results.csv, summary.csv, result.json, trace/\n";
  if (r.too_many_failures()) {
    std::cerr << "error: more than 10% of drops failed\n";
    return 2;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Rate-splitting cloud-RAN beamforming experiments"};
  app.require_subcommand(1);

  RunArgs run_args;
  auto* run = app.add_subcommand("run", "run all drops of a config");
  add_run_args(run, run_args);

  RunArgs sweep_args;
  std::string axis;
  std::vector<double> values;
  auto* sw = app.add_subcommand("sweep", "run a config at each value of one axis");
  add_run_args(sw, sweep_args);
  sw->add_option("--axis", axis, "users, bs or fronthaul (defaults to the config's sweep)");
  sw->add_option("--values", values, "ascending axis values, comma separated")->delimiter(',');

  std::string suite;
  auto* val = app.add_subcommand("validate", "built-in oracle and invariant checks");
  val->add_option("--suite", suite, "oracle or invariants")->required();

  std::string dump_config, dump_out = "subproblem.cbf", dump_scheme = "RS_CMD";
  int dump_drop = 0;
  auto* dump = app.add_subcommand("dump-subproblem", "write the first convex subproblem of a drop in CBF");
  dump->add_option("--config", dump_config, "JSON config file");
  dump->add_option("--drop", dump_drop, "drop index")->capture_default_str();
  dump->add_option("--scheme", dump_scheme, "scheme kind")->capture_default_str();
  dump->add_option("--out", dump_out, "output file")->capture_default_str();

  std::string show_config;
  auto* show = app.add_subcommand("show-config", "print a config with all defaults filled in");
  show->add_option("--config", show_config, "JSON config file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const auto cfg = resolve(run_args);
      return report(run_experiment(cfg), run_args.out);
    }
    if (*sw) {
      const auto cfg = resolve(sweep_args);
      const std::string a = axis.empty() ? cfg.sweep_axis : axis;
      const std::vector<double> v = values.empty() ? cfg.sweep_values : values;
      if (a.empty()) throw std::invalid_argument("sweep: no --axis given and the config has no sweep section");
      return report(sweep(cfg, parse_axis(a), v), sweep_args.out);
    }
    if (*val) {
      bool all = true;
      for (const auto& c : run_validation(suite)) {
        std::cout << (c.pass ? "PASS " : "FAIL ") << c.name << ": " << c.detail << "\n";
        all = all && c.pass;
      }
      return all ? 0 : 2;
    }
    if (*dump) {
      const auto cfg = dump_config.empty() ? ExperimentConfig{} : load_config(dump_config);
      const auto seed = drop_seed(cfg, dump_drop);
      const auto in = drop_inputs(cfg, seed, drop_geometry(cfg, seed));
      const auto scheme = build_scheme(parse_scheme_kind(dump_scheme), in.topology, cfg.delta_m, cfg.generalized_rs_cap);
      const auto clusters = run_clustering(in.csi, scheme, ClusterParams::uniform(cfg.num_bs, cfg.a_max, cfg.mu_db));
      const auto internal = rscran::detail::make_internal(scheme, clusters, in.samples, in.topology);
      const auto w = rscran::detail::to_internal(initial_beamformers(scheme, clusters, in.samples, in.topology),
                                                 internal.p_ref);
      const auto prog = build_subproblem(scheme, internal.ctx,
                                         update_aux(scheme, w, internal.samples, internal.ctx.noise_var));
      std::ofstream os(dump_out);
      if (!os) throw std::runtime_error("cannot write '" + dump_out + "'");
      conic::write_cbf(os, conic::lift(prog).qcqp);
      std::cout << "wrote " << dump_out << " (" << prog.constraint_count() << " constraints, "
                << prog.real_dimension() << " real variables)\n";
      return 0;
    }
    if (*show) {
      const auto cfg = show_config.empty() ? ExperimentConfig{} : load_config(show_config);
      std::cout << config_to_json(cfg).dump(2) << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
