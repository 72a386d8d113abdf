#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "rscran/channel.hpp"
#include "rscran/clustering.hpp"
#include "rscran/harness/config.hpp"
#include "rscran/harness/drop.hpp"
#include "rscran/optimizer.hpp"
#include "rscran/rng.hpp"
#include "rscran/scheme.hpp"

namespace rscran::harness {

inline constexpr std::string_view kVersion = "0.1.0";
inline constexpr std::string_view kResultsHeader =
    "drop,scheme,axis_value,esr_bps,mean_Rp,mean_Rc,iterations,seconds,num_streams,converged";

struct SchemeOutcome {
  SchemeKind scheme = SchemeKind::tin;
  bool ok = false;
  std::string error;
  std::string start;  // which starting point produced the kept solution
  int num_streams = 0;
  double esr_bps = 0.0;
  std::vector<double> stream_bps;
  std::vector<double> private_bps;  // per user
  std::vector<double> common_bps;   // per user, common rates split equally among owners
  ServingClusters clusters;
  int iterations = 0;
  bool converged = false;
  double seconds = 0.0;
  std::vector<IterationTrace> trace;
};

struct DropRecord {
  int value_index = 0;
  double axis_value = std::nan("");
  int drop = 0;
  std::uint64_t seed = 0;
  std::vector<Point> bs;
  std::vector<Point> users;
  std::vector<SchemeOutcome> outcomes;

  bool failed() const {
    return std::any_of(outcomes.begin(), outcomes.end(), [](const SchemeOutcome& o) { return !o.ok; });
  }
};

struct SummaryRow {
  double axis_value = std::nan("");
  SchemeKind scheme = SchemeKind::tin;
  int drops = 0;
  double mean_esr_bps = 0.0;
  double se_esr_bps = 0.0;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::string axis;  // empty for a plain run
  std::vector<double> axis_values;
  std::vector<DropRecord> drops;  // sorted by (value index, drop)
  std::vector<SummaryRow> summary;

  int total_drops() const { return static_cast<int>(drops.size()); }
  int failed_drops() const {
    return static_cast<int>(std::count_if(drops.begin(), drops.end(), [](const DropRecord& d) { return d.failed(); }));
  }
  /// More than 10% failed drops makes the whole experiment count as failed.
  bool too_many_failures() const { return 10 * failed_drops() > total_drops(); }
};

inline NetworkTopology topology_for(const ExperimentConfig& cfg, const std::vector<Point>& bs,
                                    const std::vector<Point>& users) {
  NetworkTopology t;
  t.bs_positions = bs;
  t.user_positions = users;
  t.antennas = cfg.antennas;
  t.p_max_w.assign(bs.size(), dbm_to_watts(cfg.p_max_dbm));
  t.fronthaul_bps.assign(bs.size(), cfg.fronthaul_mbps * 1e6);
  t.bandwidth_hz = cfg.bandwidth_hz;
  t.noise_psd_w_per_hz = dbm_to_watts(cfg.noise_psd_dbm_per_hz);
  t.validate();
  return t;
}

/// Sub-seed streams of one drop. User positions are drawn sequentially, so the first K users
/// of a drop are identical for every larger K.
inline DropGeometry drop_geometry(const ExperimentConfig& cfg, std::uint64_t drop_seed) {
  DropGeometry g;
  g.bs = cfg.bs_layout == "grid" ? bs_grid(cfg.num_bs, cfg.area_km)
                                 : uniform_users(cfg.num_bs, cfg.area_km, derive_seed(drop_seed, 2));
  g.users = uniform_users(cfg.num_users, cfg.area_km, derive_seed(drop_seed, 1));
  return g;
}

inline std::uint64_t drop_seed(const ExperimentConfig& cfg, int drop) {
  return derive_seed(cfg.seed, static_cast<std::uint64_t>(drop));
}

inline BcaOptions bca_options(const ExperimentConfig& cfg) {
  BcaOptions o;
  o.eps = cfg.solver.eps;
  o.max_outer = cfg.solver.max_outer;
  o.solver.tol = cfg.solver.tol;
  o.solver.max_iter = cfg.solver.max_iter;
  o.record_timing = cfg.record_timing;
  return o;
}

struct DropInputs {
  NetworkTopology topology;
  LargeScaleCsi csi;
  ChannelSampleSet samples;
};

inline DropInputs drop_inputs(const ExperimentConfig& cfg, std::uint64_t seed, const DropGeometry& g) {
  DropInputs in;
  in.topology = topology_for(cfg, g.bs, g.users);
  ShadowingConfig sh;
  sh.sigma_db = cfg.shadowing_sigma_db;
  sh.min_distance_km = cfg.min_distance_m / 1000.0;
  sh.seed = derive_seed(seed, 3);
  in.csi = build_large_scale_csi(in.topology, sh);
  in.samples = sample_channels(in.csi, cfg.samples, derive_seed(seed, 4));
  return in;
}

namespace detail {

inline void fill_outcome(SchemeOutcome& o, const SchemeInstance& scheme, const BeamformingSolution& sol) {
  o.esr_bps = sol.rates.total_bps();
  o.stream_bps = sol.rates.stream_bps;
  o.private_bps.assign(scheme.num_users, 0.0);
  o.common_bps.assign(scheme.num_users, 0.0);
  for (UserIndex k = 0; k < scheme.num_users; ++k) {
    o.private_bps[k] = sol.rates.private_bps(scheme, k);
    o.common_bps[k] = sol.rates.common_bps(scheme, k);
  }
  o.iterations = sol.iterations;
  o.converged = sol.converged;
  o.trace = sol.trace;
}

}  // namespace detail

/// Solves every configured scheme on one drop. TIN is solved first when any rate-splitting
/// scheme warm-starts from it; each warm-started scheme keeps the best of its starts.
inline DropRecord run_drop(const ExperimentConfig& cfg, int drop, int value_index = 0,
                           double axis_value = std::nan("")) {
  DropRecord rec;
  rec.value_index = value_index;
  rec.axis_value = axis_value;
  rec.drop = drop;
  rec.seed = drop_seed(cfg, drop);
  const DropGeometry g = drop_geometry(cfg, rec.seed);
  rec.bs = g.bs;
  rec.users = g.users;

  std::optional<DropInputs> inputs;
  std::string setup_error;
  try {
    inputs = drop_inputs(cfg, rec.seed, g);
  } catch (const std::exception& e) {
    setup_error = e.what();
  }

  const BcaOptions opts = bca_options(cfg);
  const ClusterParams params = ClusterParams::uniform(cfg.num_bs, cfg.a_max, cfg.mu_db);
  std::optional<BeamformingSolution> tin;
  double tin_seconds = 0.0;
  auto solve_tin = [&]() -> const BeamformingSolution& {
    if (!tin) {
      const auto s = build_scheme(SchemeKind::tin, inputs->topology, cfg.delta_m, cfg.generalized_rs_cap);
      const auto c = run_clustering(inputs->csi, s, params);
      tin = bca_solve(s, c, inputs->samples, inputs->topology, opts);
      tin_seconds = tin->trace.empty() ? 0.0 : tin->trace.back().seconds;
    }
    return *tin;
  };

  for (SchemeKind kind : cfg.schemes) {
    SchemeOutcome o;
    o.scheme = kind;
    if (!inputs) {
      o.error = setup_error;
      rec.outcomes.push_back(std::move(o));
      continue;
    }
    try {
      const auto scheme = build_scheme(kind, inputs->topology, cfg.delta_m, cfg.generalized_rs_cap);
      o.num_streams = scheme.num_streams();
      o.clusters = run_clustering(inputs->csi, scheme, params);
      if (kind == SchemeKind::tin) {
        const auto& t = solve_tin();
        o.seconds = tin_seconds;
        if (t.status == "ok") {
          o.ok = true;
          o.start = "statistical";
          detail::fill_outcome(o, scheme, t);
        } else {
          o.error = t.status;
        }
        rec.outcomes.push_back(std::move(o));
        continue;
      }
      std::vector<std::pair<std::string, std::optional<BeamformerSet>>> starts;
      if (cfg.warm_start.enabled) {
        const auto& t = solve_tin();
        o.seconds += tin_seconds;
        if (t.status == "ok") {
          starts.push_back({"tin", embed_tin_solution(scheme, o.clusters, t.w, cfg.antennas, 0.0)});
          if (cfg.warm_start.common_power_fraction > 0.0)
            starts.push_back({"tin_split", embed_tin_solution(scheme, o.clusters, t.w, cfg.antennas,
                                                              cfg.warm_start.common_power_fraction)});
        }
      }
      if (!cfg.warm_start.enabled || cfg.warm_start.include_statistical_start || starts.empty())
        starts.push_back({"statistical", std::nullopt});
      std::string last_error;
      for (auto& [label, init] : starts) {
        const auto sol = bca_solve(scheme, o.clusters, inputs->samples, inputs->topology, opts, init);
        o.seconds += sol.trace.empty() ? 0.0 : sol.trace.back().seconds;
        if (sol.status != "ok") {
          last_error = label + ": " + sol.status;
          continue;
        }
        if (!o.ok || sol.rates.total_bps() > o.esr_bps) {
          o.ok = true;
          o.start = label;
          detail::fill_outcome(o, scheme, sol);
        }
      }
      if (!o.ok) o.error = last_error;
    } catch (const std::exception& e) {
      o.ok = false;
      o.error = e.what();
    }
    rec.outcomes.push_back(std::move(o));
  }
  return rec;
}

inline std::vector<SummaryRow> summarize(const std::vector<DropRecord>& drops, const std::vector<SchemeKind>& schemes) {
  std::map<int, std::map<int, std::vector<double>>> esr;  // value index -> scheme position -> ESR per drop
  std::map<int, double> axis;
  for (const auto& d : drops) {
    axis[d.value_index] = d.axis_value;
    if (d.failed()) continue;
    for (std::size_t i = 0; i < d.outcomes.size(); ++i) esr[d.value_index][static_cast<int>(i)].push_back(d.outcomes[i].esr_bps);
  }
  std::vector<SummaryRow> out;
  for (const auto& [vi, av] : axis) {
    for (std::size_t i = 0; i < schemes.size(); ++i) {
      SummaryRow r;
      r.axis_value = av;
      r.scheme = schemes[i];
      const auto& v = esr[vi][static_cast<int>(i)];
      r.drops = static_cast<int>(v.size());
      if (!v.empty()) {
        double s = 0.0;
        for (double x : v) s += x;
        r.mean_esr_bps = s / v.size();
        if (v.size() > 1) {
          double ss = 0.0;
          for (double x : v) ss += (x - r.mean_esr_bps) * (x - r.mean_esr_bps);
          r.se_esr_bps = std::sqrt(ss / (v.size() - 1) / v.size());
        }
      }
      out.push_back(r);
    }
  }
  return out;
}

/// Runs all (value, drop) tasks on `parallel` workers; results are placed by index, so the
/// output does not depend on scheduling.
inline ExperimentResult run_points(const ExperimentConfig& cfg, const std::string& axis,
                                   const std::vector<double>& values) {
  cfg.validate();
  ExperimentResult res;
  res.config = cfg;
  res.axis = axis;
  res.axis_values = values;
  const int points = axis.empty() ? 1 : static_cast<int>(values.size());
  std::vector<ExperimentConfig> per_value;
  for (int v = 0; v < points; ++v)
    per_value.push_back(axis.empty() ? cfg : cfg.at_axis(parse_axis(axis), values[v]));
  const int tasks = points * cfg.drops;
  res.drops.resize(tasks);
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int t = next++; t < tasks; t = next++) {
      const int v = t / cfg.drops;
      const int d = t % cfg.drops;
      res.drops[t] = run_drop(per_value[v], d, v, axis.empty() ? std::nan("") : values[v]);
    }
  };
  const int workers = std::min(cfg.parallel, tasks);
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int i = 0; i < workers; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  res.summary = summarize(res.drops, cfg.schemes);
  return res;
}

inline ExperimentResult run_experiment(const ExperimentConfig& cfg) { return run_points(cfg, "", {}); }

inline ExperimentResult sweep(const ExperimentConfig& cfg, SweepAxis axis, const std::vector<double>& values) {
  ExperimentConfig c = cfg;
  c.sweep_axis = std::string(to_string(axis));
  c.sweep_values = values;
  c.validate();
  return run_points(c, c.sweep_axis, values);
}

// ---- serialization ----

inline std::string fmt_num(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  double s = 0.0;
  for (double x : v) s += x;
  return s / v.size();
}

/// Long-format table, one row per successful (drop, scheme); failed drops are skipped.
inline std::string results_csv(const ExperimentResult& r) {
  std::ostringstream os;
  os << kResultsHeader << "\n";
  for (const auto& d : r.drops) {
    if (d.failed()) continue;
    for (const auto& o : d.outcomes) {
      os << d.drop << "," << to_string(o.scheme) << "," << fmt_num(d.axis_value) << "," << fmt_num(o.esr_bps) << ","
         << fmt_num(mean_of(o.private_bps)) << "," << fmt_num(mean_of(o.common_bps)) << "," << o.iterations << ","
         << fmt_num(o.seconds) << "," << o.num_streams << "," << (o.converged ? 1 : 0) << "\n";
    }
  }
  return os.str();
}

inline std::string summary_csv(const ExperimentResult& r) {
  std::ostringstream os;
  os << "axis_value,scheme,drops,mean_esr_bps,se_esr_bps\n";
  for (const auto& s : r.summary)
    os << fmt_num(s.axis_value) << "," << to_string(s.scheme) << "," << s.drops << "," << fmt_num(s.mean_esr_bps)
       << "," << fmt_num(s.se_esr_bps) << "\n";
  return os.str();
}

inline std::string trace_csv(const SchemeOutcome& o) {
  std::ostringstream os;
  os << "iteration,esr_bps,violation,seconds,solver_iterations,solver_status,monotone\n";
  for (const auto& t : o.trace)
    os << t.iteration << "," << fmt_num(t.esr_bps) << "," << fmt_num(t.violation) << "," << fmt_num(t.seconds) << ","
       << t.solver_iterations << "," << t.solver_status << "," << (t.monotone ? 1 : 0) << "\n";
  return os.str();
}

inline nlohmann::json points_json(const std::vector<Point>& pts) {
  auto j = nlohmann::json::array();
  for (const auto& p : pts) j.push_back({p.x_km, p.y_km});
  return j;
}

inline nlohmann::json result_json(const ExperimentResult& r) {
  using nlohmann::json;
  json j;
  j["metadata"] = {{"version", kVersion},
                   {"schema_version", kSchemaVersion},
                   {"master_seed", r.config.seed},
                   {"rng_algorithm", kRngAlgorithm},
                   {"seed_derivation", "drop seed = derive_seed(master, drop); users/bs/shadowing/samples use "
                                       "derive_seed(drop seed, 1/2/3/4)"}};
  j["config"] = config_to_json(r.config);
  if (!r.axis.empty()) j["sweep"] = {{"axis", r.axis}, {"values", r.axis_values}};
  j["drops"] = json::array();
  j["failures"] = json::array();
  for (const auto& d : r.drops) {
    json dj;
    dj["drop"] = d.drop;
    if (!std::isnan(d.axis_value)) dj["axis_value"] = d.axis_value;
    dj["seed"] = d.seed;
    dj["failed"] = d.failed();
    dj["bs_positions_km"] = points_json(d.bs);
    dj["user_positions_km"] = points_json(d.users);
    dj["schemes"] = json::array();
    for (const auto& o : d.outcomes) {
      json oj;
      oj["scheme"] = std::string(to_string(o.scheme));
      oj["ok"] = o.ok;
      if (!o.ok) {
        oj["error"] = o.error;
        json fj = {{"drop", d.drop}, {"scheme", std::string(to_string(o.scheme))}, {"error", o.error}};
        if (!std::isnan(d.axis_value)) fj["axis_value"] = d.axis_value;
        j["failures"].push_back(fj);
      }
      oj["num_streams"] = o.num_streams;
      oj["esr_bps"] = o.esr_bps;
      oj["stream_bps"] = o.stream_bps;
      oj["private_bps"] = o.private_bps;
      oj["common_bps"] = o.common_bps;
      oj["start"] = o.start;
      oj["iterations"] = o.iterations;
      oj["converged"] = o.converged;
      oj["seconds"] = o.seconds;
      oj["clusters"] = {{"cluster_of", o.clusters.cluster_of},
                        {"served_by", o.clusters.served_by},
                        {"unserved", o.clusters.unserved},
                        {"rounds", o.clusters.rounds}};
      if (!o.trace.empty()) {
        const auto& last = o.trace.back();
        const bool monotone =
            std::all_of(o.trace.begin(), o.trace.end(), [](const IterationTrace& t) { return t.monotone; });
        oj["trace_summary"] = {{"entries", o.trace.size()},
                               {"initial_esr_bps", o.trace.front().esr_bps},
                               {"final_esr_bps", last.esr_bps},
                               {"final_violation", last.violation},
                               {"monotone", monotone}};
      }
      dj["schemes"].push_back(oj);
    }
    j["drops"].push_back(dj);
  }
  j["summary"] = json::array();
  for (const auto& s : r.summary) {
    json sj = {{"scheme", std::string(to_string(s.scheme))},
               {"drops", s.drops},
               {"mean_esr_bps", s.mean_esr_bps},
               {"se_esr_bps", s.se_esr_bps}};
    if (!std::isnan(s.axis_value)) sj["axis_value"] = s.axis_value;
    j["summary"].push_back(sj);
  }
  j["failed_drops"] = r.failed_drops();
  j["total_drops"] = r.total_drops();
  return j;
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write '" + p.string() + "'");
  os << text;
}

/// Writes results.csv, summary.csv, result.json and trace/ under `dir`. Sweep traces go to
/// trace/<axis>_<value>/.
inline void write_outputs(const ExperimentResult& r, const std::filesystem::path& dir) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "trace");
  write_text(dir / "results.csv", results_csv(r));
  write_text(dir / "summary.csv", summary_csv(r));
  write_text(dir / "result.json", result_json(r).dump(1) + "\n");
  for (const auto& d : r.drops) {
    fs::path tdir = dir / "trace";
    if (!r.axis.empty()) tdir /= r.axis + "_" + fmt_num(d.axis_value);
    fs::create_directories(tdir);
    for (const auto& o : d.outcomes)
      if (o.ok) write_text(tdir / (std::to_string(d.drop) + "_" + std::string(to_string(o.scheme)) + ".csv"), trace_csv(o));
  }
}

}  // namespace rscran::harness
