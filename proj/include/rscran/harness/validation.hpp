#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rscran/harness/experiment.hpp"

namespace rscran::harness {

struct Check {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct FeasibilityReport {
  double worst_power_excess_w = 0.0;     // max_n (power_n - P_n), absolute
  double worst_fronthaul_ratio = 0.0;    // max_n load_n / F_n (0 when F_n = 0 and load is 0)
  double worst_structural_entry = 0.0;   // largest |w| entry outside a stream's cluster
  bool ok(double power_tol = 1e-8, double fronthaul_tol = 1e-6) const {
    return worst_power_excess_w <= power_tol && worst_fronthaul_ratio <= 1.0 + fronthaul_tol &&
           worst_structural_entry == 0.0;
  }
};

inline FeasibilityReport feasibility(const SchemeInstance& scheme, const ServingClusters& clusters,
                                     const NetworkTopology& topology, const BeamformingSolution& sol) {
  FeasibilityReport r;
  const int l = topology.antennas;
  r.worst_power_excess_w = -1e300;
  for (BsIndex n = 0; n < topology.num_bs(); ++n) {
    double power = 0.0;
    double load = 0.0;
    for (StreamId s = 0; s < scheme.num_streams(); ++s) {
      const auto seg = sol.w.w[s].segment(n * l, l);
      if (clusters.serves(n, s)) {
        power += seg.squaredNorm();
        load += sol.rates.stream_bps[s];
      } else {
        r.worst_structural_entry = std::max(r.worst_structural_entry, seg.cwiseAbs().maxCoeff());
      }
    }
    r.worst_power_excess_w = std::max(r.worst_power_excess_w, power - topology.p_max_w[n]);
    const double f = topology.fronthaul_bps[n];
    r.worst_fronthaul_ratio = std::max(r.worst_fronthaul_ratio, f > 0.0 ? load / f : (load > 0.0 ? 1e300 : 0.0));
  }
  return r;
}

namespace detail {

inline std::string num(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

inline ExperimentConfig tiny_config() {
  ExperimentConfig c;
  c.name = "scalar";
  c.num_bs = 1;
  c.num_users = 1;
  c.antennas = 1;
  c.area_km = 0.5;
  c.samples = 1;
  c.drops = 1;
  c.schemes = {SchemeKind::tin};
  c.record_timing = false;
  return c;
}

inline Check scalar_closed_form() {
  const ExperimentConfig c = tiny_config();
  const auto rec = run_drop(c, 0);
  const auto in = drop_inputs(c, rec.seed, drop_geometry(c, rec.seed));
  const double g = std::norm(in.samples.samples[0][0]);
  const double expect = c.bandwidth_hz * std::log2(1.0 + in.topology.p_max_w[0] * g / in.topology.noise_variance());
  const double got = rec.outcomes.at(0).esr_bps;
  const double rel = std::abs(got - expect) / expect;
  return {"scalar_closed_form", rec.outcomes[0].ok && rel <= 1e-6, "relative error " + num(rel)};
}

inline Check rate_bound_equivalence() {
  Rng rng(77);
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const int dim = 1 + static_cast<int>(rng.uniform() * 4);
    VectorXcd h(dim), w(dim);
    for (int d = 0; d < dim; ++d) {
      h[d] = rng.complex_normal();
      w[d] = rng.complex_normal();
    }
    const double noise = std::pow(10.0, rng.uniform(-3.0, 2.0));
    const double interference = noise + std::pow(10.0, rng.uniform(-3.0, 1.0));
    const double signal = std::norm(h.dot(w));
    const double total = signal + interference;
    const double e = mmse_error(interference, total);
    const double bound = wmmse_bound(optimal_weight(e), e);
    worst = std::max(worst, std::abs(std::log2(1.0 + signal / interference) - bound));
  }
  return {"rate_bound_equivalence", worst <= 1e-9, "max gap " + num(worst)};
}

inline Check ergodic_rayleigh() {
  LargeScaleCsi csi;
  csi.amplitude = MatrixXd::Ones(1, 1);
  csi.distance_km = MatrixXd::Ones(1, 1);
  csi.antennas = 1;
  const auto s = sample_channels(csi, 100000, 5);
  double acc = 0.0;
  for (const auto& h : s.samples) acc += std::log2(1.0 + std::norm(h[0]));
  acc /= s.size();
  const double oracle = std::exp(1.0) * -std::expint(-1.0) / kLn2;
  const double rel = std::abs(acc - oracle) / oracle;
  return {"ergodic_rayleigh", rel <= 0.01, "relative error " + num(rel)};
}

inline Check small_instance_random_search() {
  NetworkTopology t;
  t.bs_positions = {{0.0, 0.0}};
  t.user_positions = {{0.15, 0.05}, {-0.1, 0.2}};
  t.p_max_w = {dbm_to_watts(20.0)};
  t.fronthaul_bps = {1e9};
  const auto scheme = build_scheme(SchemeKind::tin, t);
  const auto csi = build_large_scale_csi(t);
  const auto clusters = run_clustering(csi, scheme, ClusterParams::uniform(1, 10));
  const auto samples = sample_channels(csi, 1, 11);
  BcaOptions o;
  o.record_timing = false;
  const auto sol = bca_solve(scheme, clusters, samples, t, o);
  const double nv = t.noise_variance();
  Rng rng(12);
  double best = 0.0;
  for (int i = 0; i < 10000; ++i) {
    BeamformerSet w = BeamformerSet::zeros(2, 2);
    double p = 0.0;
    for (auto& v : w.w) {
      for (int d = 0; d < 2; ++d) v[d] = rng.complex_normal();
      p += v.squaredNorm();
    }
    const double scale = std::sqrt(t.p_max_w[0] * rng.uniform() / p);
    for (auto& v : w.w) v *= scale;
    double esr = 0.0;
    for (UserIndex k = 0; k < 2; ++k) esr += t.bandwidth_hz * rate_bits(received_powers(samples.user_channel(0, k), scheme, w, k, nv));
    best = std::max(best, std::min(esr, t.fronthaul_bps[0]));
  }
  const double got = sol.rates.total_bps();
  return {"small_instance_random_search", got >= best * 0.99,
          "solver " + num(got) + " bps, best random " + num(best) + " bps"};
}

inline Check stream_counts() {
  for (int k = 1; k <= 8; ++k) {
    NetworkTopology t;
    t.bs_positions = {{0.0, 0.0}};
    for (int i = 0; i < k; ++i) t.user_positions.push_back({0.1 * i, 0.0});
    t.p_max_w = {0.1};
    t.fronthaul_bps = {1e8};
    const long long want[] = {k, 2LL * k, k * (k + 1LL) / 2, k + 1LL, (1LL << k) - 1};
    for (int i = 0; i < 5; ++i)
      if (build_scheme(kAllSchemeKinds[i], t).num_streams() != want[i])
        return {"stream_counts", false, "K=" + std::to_string(k) + " " + std::string(to_string(kAllSchemeKinds[i]))};
  }
  return {"stream_counts", true, "K=1..8, five scheme kinds"};
}

inline Check clustering_capacity() {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const int n_bs = 1 + static_cast<int>(rng.uniform() * 5);
    const int n_streams = 1 + static_cast<int>(rng.uniform() * 16);
    MatrixXd q(n_bs, n_streams);
    for (int n = 0; n < n_bs; ++n)
      for (int s = 0; s < n_streams; ++s) q(n, s) = rng.uniform(-150.0, -90.0);
    ClusterParams p;
    p.mu_db = rng.uniform(0.0, 8.0);
    for (int n = 0; n < n_bs; ++n) p.a_max.push_back(static_cast<int>(rng.uniform() * 5));
    const auto c = run_clustering(q, p);
    for (BsIndex n = 0; n < n_bs; ++n)
      if (static_cast<int>(c.served_by[n].size()) > p.a_max[n])
        return {"clustering_capacity", false, "trial " + std::to_string(trial)};
  }
  return {"clustering_capacity", true, "200 random instances"};
}

inline Check desk_drop_invariants() {
  ExperimentConfig c;
  c.schemes = {SchemeKind::tin, SchemeKind::rs_cmd};
  c.record_timing = false;
  c.drops = 1;
  const auto rec = run_drop(c, 0);
  const auto in = drop_inputs(c, rec.seed, drop_geometry(c, rec.seed));
  std::string why;
  for (const auto& o : rec.outcomes) {
    const std::string tag = std::string(to_string(o.scheme)) + ": ";
    if (!o.ok) {
      why += tag + o.error + "; ";
      continue;
    }
    for (std::size_t i = 1; i < o.trace.size(); ++i)
      if (o.trace[i].esr_bps < o.trace[i - 1].esr_bps * (1.0 - 1e-6)) why += tag + "trace decreases; ";
  }
  if (why.empty()) {
    for (SchemeKind kind : c.schemes) {
      const auto scheme = build_scheme(kind, in.topology, c.delta_m);
      const auto clusters = run_clustering(in.csi, scheme, ClusterParams::uniform(c.num_bs, c.a_max, c.mu_db));
      BcaOptions o = bca_options(c);
      const auto sol = bca_solve(scheme, clusters, in.samples, in.topology, o);
      if (!feasibility(scheme, clusters, in.topology, sol).ok()) why += std::string(to_string(kind)) + " infeasible; ";
    }
    if (rec.outcomes[1].esr_bps < rec.outcomes[0].esr_bps * (1.0 - 1e-6)) why += "RS_CMD below TIN; ";
  }
  return {"desk_drop_invariants", why.empty(), why.empty() ? "monotone, feasible, RS_CMD >= TIN" : why};
}

inline Check determinism() {
  ExperimentConfig c = tiny_config();
  c.num_users = 2;
  c.num_bs = 2;
  c.samples = 4;
  c.drops = 2;
  c.schemes = {SchemeKind::tin, SchemeKind::rs2};
  const auto a = results_csv(run_experiment(c));
  c.parallel = 2;
  const auto b = results_csv(run_experiment(c));
  return {"determinism", a == b, a == b ? "identical CSV for 1 and 2 workers" : "CSV differs"};
}

}  // namespace detail

/// `oracle` compares against closed forms and brute force; `invariants` checks structural
/// properties on generated instances.
inline std::vector<Check> run_validation(const std::string& suite) {
  if (suite == "oracle")
    return {detail::scalar_closed_form(), detail::rate_bound_equivalence(), detail::ergodic_rayleigh(),
            detail::small_instance_random_search()};
  if (suite == "invariants")
    return {detail::stream_counts(), detail::clustering_capacity(), detail::desk_drop_invariants(),
            detail::determinism()};
  throw std::invalid_argument("unknown validation suite '" + suite + "' (expected oracle or invariants)");
}

}  // namespace rscran::harness
