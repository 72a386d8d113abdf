#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "rscran/channel.hpp"
#include "rscran/scheme.hpp"
#include "rscran/types.hpp"

namespace rscran::harness {

inline constexpr int kSchemaVersion = 1;

enum class SweepAxis { users, bs, fronthaul };

inline std::string_view to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::users: return "users";
    case SweepAxis::bs: return "bs";
    case SweepAxis::fronthaul: return "fronthaul";
  }
  return "?";
}

inline SweepAxis parse_axis(std::string_view s) {
  if (s == "users") return SweepAxis::users;
  if (s == "bs") return SweepAxis::bs;
  if (s == "fronthaul") return SweepAxis::fronthaul;
  throw std::invalid_argument("unknown sweep axis '" + std::string(s) + "' (expected users, bs or fronthaul)");
}

struct WarmStartConfig {
  bool enabled = true;                 // start rate-splitting schemes from the TIN solution
  double common_power_fraction = 0.2;  // second start: this share of each private power moves to the commons
  bool include_statistical_start = true;
};

struct SolverConfig {
  double tol = 1e-9;
  int max_iter = 200;
  double eps = 1e-5;
  int max_outer = 100;
};

/// Everything a run needs; defaults are the desk-scale setup. Power and noise are given in
/// dBm, fronthaul in Mbps, and converted once by `topology_for`.
struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  std::string name = "desk";
  std::string bs_layout = "grid";  // grid | uniform
  double area_km = 2.0;
  int num_bs = 3;
  int num_users = 4;
  int antennas = 2;
  std::vector<SchemeKind> schemes{kAllSchemeKinds, kAllSchemeKinds + 5};
  double delta_m = 100.0;
  double mu_db = 3.0;
  int a_max = 10;
  int generalized_rs_cap = 8;
  double p_max_dbm = 20.0;
  double fronthaul_mbps = 200.0;
  double noise_psd_dbm_per_hz = -169.0;
  double bandwidth_hz = 10e6;
  double shadowing_sigma_db = 0.0;
  double min_distance_m = 10.0;
  int samples = 50;
  int drops = 20;
  std::uint64_t seed = 1;
  int parallel = 1;
  bool record_timing = true;
  SolverConfig solver;
  WarmStartConfig warm_start;
  std::string sweep_axis;  // empty: no sweep
  std::vector<double> sweep_values;

  void validate() const {
    auto need = [](bool ok, const std::string& msg) {
      if (!ok) throw std::invalid_argument("config: " + msg);
    };
    need(schema_version == kSchemaVersion, "schema_version must be " + std::to_string(kSchemaVersion));
    need(bs_layout == "grid" || bs_layout == "uniform", "bs_layout must be 'grid' or 'uniform'");
    need(area_km > 0.0, "area_km must be positive");
    need(num_bs >= 1 && num_users >= 1 && antennas >= 1, "num_bs, num_users and antennas must be >= 1");
    need(!schemes.empty(), "at least one scheme required");
    need(delta_m >= 0.0 && mu_db >= 0.0 && a_max >= 0, "delta_m, mu_db and a_max must be >= 0");
    need(fronthaul_mbps >= 0.0, "fronthaul_mbps must be >= 0");
    need(bandwidth_hz > 0.0, "bandwidth_hz must be positive");
    need(std::isfinite(p_max_dbm) && std::isfinite(noise_psd_dbm_per_hz), "power and noise must be finite");
    need(shadowing_sigma_db >= 0.0 && min_distance_m > 0.0, "shadowing sigma >= 0 and distance floor > 0 required");
    need(samples >= 1 && drops >= 1, "samples and drops must be >= 1");
    need(parallel >= 1, "parallel must be >= 1");
    need(solver.tol > 0.0 && solver.max_iter >= 1 && solver.eps > 0.0 && solver.max_outer >= 1,
         "solver options must be positive");
    need(warm_start.common_power_fraction >= 0.0 && warm_start.common_power_fraction < 1.0,
         "warm_start.common_power_fraction must be in [0, 1)");
    if (!sweep_axis.empty()) {
      const SweepAxis axis = parse_axis(sweep_axis);
      need(!sweep_values.empty(), "sweep values must be non-empty");
      for (std::size_t i = 1; i < sweep_values.size(); ++i)
        need(sweep_values[i] > sweep_values[i - 1], "sweep values must be strictly ascending");
      for (double v : sweep_values) {
        if (axis == SweepAxis::fronthaul) {
          need(v >= 0.0, "fronthaul sweep values must be >= 0");
        } else {
          need(v >= 1.0 && v == std::floor(v), "users/bs sweep values must be positive integers");
        }
      }
    }
  }

  /// Copy of this config at one sweep point.
  ExperimentConfig at_axis(SweepAxis axis, double value) const {
    ExperimentConfig c = *this;
    switch (axis) {
      case SweepAxis::users: c.num_users = static_cast<int>(value); break;
      case SweepAxis::bs: c.num_bs = static_cast<int>(value); break;
      case SweepAxis::fronthaul: c.fronthaul_mbps = value; break;
    }
    return c;
  }
};

namespace detail {

template <class T>
void read(const nlohmann::json& j, const char* key, T& out, std::set<std::string>& seen) {
  seen.insert(key);
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void reject_unknown(const nlohmann::json& j, const std::set<std::string>& seen, const std::string& where) {
  for (const auto& [k, v] : j.items())
    if (!seen.count(k)) throw std::invalid_argument("config: unknown key '" + where + k + "'");
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("config: top level must be an object");
  if (!j.contains("schema_version")) throw std::invalid_argument("config: schema_version is required");
  ExperimentConfig c;
  std::set<std::string> seen;
  try {
    detail::read(j, "schema_version", c.schema_version, seen);
    detail::read(j, "name", c.name, seen);
    detail::read(j, "bs_layout", c.bs_layout, seen);
    detail::read(j, "area_km", c.area_km, seen);
    detail::read(j, "num_bs", c.num_bs, seen);
    detail::read(j, "num_users", c.num_users, seen);
    detail::read(j, "antennas", c.antennas, seen);
    seen.insert("schemes");
    if (j.contains("schemes")) {
      c.schemes.clear();
      for (const auto& s : j.at("schemes")) c.schemes.push_back(parse_scheme_kind(s.get<std::string>()));
    }
    detail::read(j, "delta_m", c.delta_m, seen);
    detail::read(j, "mu_db", c.mu_db, seen);
    detail::read(j, "a_max", c.a_max, seen);
    detail::read(j, "generalized_rs_cap", c.generalized_rs_cap, seen);
    detail::read(j, "p_max_dbm", c.p_max_dbm, seen);
    detail::read(j, "fronthaul_mbps", c.fronthaul_mbps, seen);
    detail::read(j, "noise_psd_dbm_per_hz", c.noise_psd_dbm_per_hz, seen);
    detail::read(j, "bandwidth_hz", c.bandwidth_hz, seen);
    detail::read(j, "shadowing_sigma_db", c.shadowing_sigma_db, seen);
    detail::read(j, "min_distance_m", c.min_distance_m, seen);
    detail::read(j, "samples", c.samples, seen);
    detail::read(j, "drops", c.drops, seen);
    detail::read(j, "seed", c.seed, seen);
    detail::read(j, "parallel", c.parallel, seen);
    detail::read(j, "record_timing", c.record_timing, seen);
    seen.insert("solver");
    if (j.contains("solver")) {
      const auto& s = j.at("solver");
      std::set<std::string> ss;
      detail::read(s, "tol", c.solver.tol, ss);
      detail::read(s, "max_iter", c.solver.max_iter, ss);
      detail::read(s, "eps", c.solver.eps, ss);
      detail::read(s, "max_outer", c.solver.max_outer, ss);
      detail::reject_unknown(s, ss, "solver.");
    }
    seen.insert("warm_start");
    if (j.contains("warm_start")) {
      const auto& s = j.at("warm_start");
      std::set<std::string> ss;
      detail::read(s, "enabled", c.warm_start.enabled, ss);
      detail::read(s, "common_power_fraction", c.warm_start.common_power_fraction, ss);
      detail::read(s, "include_statistical_start", c.warm_start.include_statistical_start, ss);
      detail::reject_unknown(s, ss, "warm_start.");
    }
    seen.insert("sweep");
    if (j.contains("sweep")) {
      const auto& s = j.at("sweep");
      std::set<std::string> ss;
      detail::read(s, "axis", c.sweep_axis, ss);
      detail::read(s, "values", c.sweep_values, ss);
      detail::reject_unknown(s, ss, "sweep.");
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  detail::reject_unknown(j, seen, "");
  c.validate();
  return c;
}

inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  j["schema_version"] = c.schema_version;
  j["name"] = c.name;
  j["bs_layout"] = c.bs_layout;
  j["area_km"] = c.area_km;
  j["num_bs"] = c.num_bs;
  j["num_users"] = c.num_users;
  j["antennas"] = c.antennas;
  j["schemes"] = nlohmann::json::array();
  for (SchemeKind k : c.schemes) j["schemes"].push_back(std::string(to_string(k)));
  j["delta_m"] = c.delta_m;
  j["mu_db"] = c.mu_db;
  j["a_max"] = c.a_max;
  j["generalized_rs_cap"] = c.generalized_rs_cap;
  j["p_max_dbm"] = c.p_max_dbm;
  j["fronthaul_mbps"] = c.fronthaul_mbps;
  j["noise_psd_dbm_per_hz"] = c.noise_psd_dbm_per_hz;
  j["bandwidth_hz"] = c.bandwidth_hz;
  j["shadowing_sigma_db"] = c.shadowing_sigma_db;
  j["min_distance_m"] = c.min_distance_m;
  j["samples"] = c.samples;
  j["drops"] = c.drops;
  j["seed"] = c.seed;
  j["parallel"] = c.parallel;
  j["record_timing"] = c.record_timing;
  j["solver"] = {{"tol", c.solver.tol}, {"max_iter", c.solver.max_iter}, {"eps", c.solver.eps},
                 {"max_outer", c.solver.max_outer}};
  j["warm_start"] = {{"enabled", c.warm_start.enabled},
                     {"common_power_fraction", c.warm_start.common_power_fraction},
                     {"include_statistical_start", c.warm_start.include_statistical_start}};
  if (!c.sweep_axis.empty()) j["sweep"] = {{"axis", c.sweep_axis}, {"values", c.sweep_values}};
  return j;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("config '" + path + "': " + e.what());
  }
  return config_from_json(j);
}

/// Deterministic placement of BSs (grid or uniform) and users for drop seed `drop_seed`.
struct DropGeometry {
  std::vector<Point> bs;
  std::vector<Point> users;
};

}  // namespace rscran::harness
