#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Eigenvalues>

#include "rscran/channel.hpp"
#include "rscran/clustering.hpp"
#include "rscran/conic/program.hpp"
#include "rscran/conic/solver.hpp"
#include "rscran/scheme.hpp"
#include "rscran/types.hpp"
#include "rscran/wmmse.hpp"

namespace rscran {

/// Sample-averaged WMMSE coefficients of one (stream, decoding user) pair.
struct AuxPair {
  StreamId stream = 0;
  UserIndex decoder = 0;
  double t_bar = 0.0;
  double z_bar = 0.0;
  VectorXcd f_bar;
  MatrixXcd y_bar;
};

struct AuxCoefficients {
  std::vector<AuxPair> pairs;  // ordered by stream id, then decoder

  const AuxPair& at(StreamId s, UserIndex i) const {
    for (const auto& p : pairs)
      if (p.stream == s && p.decoder == i) return p;
    throw std::out_of_range("AuxCoefficients: no pair for stream " + std::to_string(s) + ", user " +
                            std::to_string(i));
  }
};

namespace detail {

struct AuxPartial {
  std::vector<double> t, z;
  std::vector<VectorXcd> f;
  std::vector<MatrixXcd> y;
};

inline std::vector<std::pair<StreamId, UserIndex>> decoding_pairs(const SchemeInstance& scheme) {
  std::vector<std::pair<StreamId, UserIndex>> out;
  for (const auto& s : scheme.streams)
    for (UserIndex i : s.decoders) out.emplace_back(s.id, i);
  return out;
}

}  // namespace detail

/// Step 1 of the block coordinate ascent: MMSE receivers and weights per sample, then the
/// sample averages of t, z, f and Y for every (stream, decoder) pair. Samples are processed
/// in fixed chunks whose partial sums are added in chunk order, so the result does not depend
/// on `threads`.
inline AuxCoefficients update_aux(const SchemeInstance& scheme, const BeamformerSet& w,
                                  const ChannelSampleSet& samples, double noise_var, int threads = 1) {
  const auto pairs = detail::decoding_pairs(scheme);
  const int np = static_cast<int>(pairs.size());
  const int dim = samples.user_dim();
  const int m_count = samples.size();
  constexpr int kChunk = 32;
  const int chunks = (m_count + kChunk - 1) / kChunk;

  std::vector<detail::AuxPartial> partial(chunks);
  auto work = [&](int c) {
    auto& acc = partial[c];
    acc.t.assign(np, 0.0);
    acc.z.assign(np, 0.0);
    acc.f.assign(np, VectorXcd::Zero(dim));
    acc.y.assign(np, MatrixXcd::Zero(dim, dim));
    std::vector<VectorXd> gains(scheme.num_users);
    for (int m = c * kChunk; m < std::min(m_count, (c + 1) * kChunk); ++m) {
      for (UserIndex k = 0; k < scheme.num_users; ++k) gains[k] = stream_gains(samples.user_channel(m, k), w);
      for (int p = 0; p < np; ++p) {
        const auto [s, i] = pairs[p];
        const auto h = samples.user_channel(m, i);
        const ReceivedPowers pw = received_powers_from_gains(gains[i], scheme, i, s, noise_var);
        const cdouble u = mmse_receiver(h, w.w[s], pw.total);
        const double rho = optimal_weight(mmse_error(pw.interference, pw.total));
        const double c_m = rho * std::norm(u);
        acc.t[p] += c_m;
        acc.z[p] += 1.0 - rho + std::log(rho);
        acc.f[p] += (rho * std::conj(u)) * h;
        acc.y[p].selfadjointView<Eigen::Lower>().rankUpdate(VectorXcd(h), c_m);
      }
    }
  };
  threads = std::clamp(threads, 1, std::max(chunks, 1));
  if (threads == 1) {
    for (int c = 0; c < chunks; ++c) work(c);
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        for (int c = t; c < chunks; c += threads) work(c);
      });
    for (auto& th : pool) th.join();
  }

  AuxCoefficients aux;
  aux.pairs.resize(np);
  for (int p = 0; p < np; ++p) {
    auto& a = aux.pairs[p];
    a.stream = pairs[p].first;
    a.decoder = pairs[p].second;
    a.f_bar = VectorXcd::Zero(dim);
    a.y_bar = MatrixXcd::Zero(dim, dim);
    for (const auto& acc : partial) {
      a.t_bar += acc.t[p];
      a.z_bar += acc.z[p];
      a.f_bar += acc.f[p];
      a.y_bar += acc.y[p];
    }
    a.t_bar /= m_count;
    a.z_bar /= m_count;
    a.f_bar /= m_count;
    a.y_bar = MatrixXcd(a.y_bar.selfadjointView<Eigen::Lower>()) / static_cast<double>(m_count);
  }
  return aux;
}

/// Everything the subproblem needs besides the coefficients. Powers and rates are in the
/// optimizer's internal units: beamformers divided by sqrt(p_ref), channels multiplied by
/// sqrt(p_ref)/sigma (so the noise variance is 1), and rates in bits/s/Hz.
struct SubproblemContext {
  int num_bs = 0;
  int antennas = 1;
  std::vector<double> power;      // P_n / p_ref
  std::vector<double> fronthaul;  // F_n / B
  double noise_var = 1.0;
  std::vector<StreamId> active;               // streams carried as variables
  std::vector<std::vector<int>> coords;       // per stream: coordinates of its cluster in the NL vector
  std::vector<int> block_of;                  // per stream: variable block or -1
  std::vector<std::vector<BsIndex>> cluster;  // per stream
};

/// Streams that can carry a positive rate: served by at least one BS and not routed through
/// a BS without fronthaul capacity.
inline SubproblemContext make_context(const SchemeInstance& scheme, const ServingClusters& clusters,
                                      const NetworkTopology& topology, double p_ref) {
  SubproblemContext ctx;
  ctx.num_bs = topology.num_bs();
  ctx.antennas = topology.antennas;
  ctx.noise_var = 1.0;
  for (BsIndex n = 0; n < ctx.num_bs; ++n) {
    ctx.power.push_back(topology.p_max_w[n] / p_ref);
    ctx.fronthaul.push_back(topology.fronthaul_bps[n] / topology.bandwidth_hz);
  }
  const int S = scheme.num_streams();
  ctx.coords.assign(S, {});
  ctx.block_of.assign(S, -1);
  ctx.cluster = clusters.cluster_of;
  for (StreamId s = 0; s < S; ++s) {
    const auto& cl = clusters.cluster_of.at(s);
    bool live = !cl.empty();
    for (BsIndex n : cl)
      if (topology.fronthaul_bps[n] <= 0.0) live = false;
    for (BsIndex n : cl)
      for (int l = 0; l < ctx.antennas; ++l) ctx.coords[s].push_back(n * ctx.antennas + l);
    if (live) {
      ctx.block_of[s] = static_cast<int>(ctx.active.size());
      ctx.active.push_back(s);
    }
  }
  return ctx;
}

/// C with C^H C = Y restricted to `coords`.
inline MatrixXcd restricted_factor(const MatrixXcd& y, const std::vector<int>& coords) {
  const auto d = static_cast<Eigen::Index>(coords.size());
  MatrixXcd sub(d, d);
  for (Eigen::Index a = 0; a < d; ++a)
    for (Eigen::Index b = 0; b < d; ++b) sub(a, b) = y(coords[a], coords[b]);
  Eigen::SelfAdjointEigenSolver<MatrixXcd> es(sub);
  const VectorXd& ev = es.eigenvalues();
  const double top = std::max(ev.maxCoeff(), 0.0);
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < d; ++i)
    if (ev[i] > 1e-13 * top && ev[i] > 0.0) keep.push_back(i);
  MatrixXcd f(static_cast<Eigen::Index>(keep.size()), d);
  for (std::size_t r = 0; r < keep.size(); ++r)
    f.row(static_cast<Eigen::Index>(r)) = std::sqrt(ev[keep[r]]) * es.eigenvectors().col(keep[r]).adjoint();
  return f;
}

inline VectorXcd gather(const VectorXcd& v, const std::vector<int>& coords) {
  VectorXcd out(static_cast<Eigen::Index>(coords.size()));
  for (std::size_t i = 0; i < coords.size(); ++i) out[static_cast<Eigen::Index>(i)] = v[coords[i]];
  return out;
}

/// The convex subproblem for fixed receivers and weights: one rate constraint per (stream,
/// decoder) pair, then N power and N fronthaul constraints. Variables are the cluster blocks
/// of the active streams and one rate per active stream (same order).
inline conic::ConicProgram build_subproblem(const SchemeInstance& scheme, const SubproblemContext& ctx,
                                            const AuxCoefficients& aux) {
  conic::ConicProgram prog;
  for (StreamId s : ctx.active) prog.block_dims.push_back(static_cast<int>(ctx.coords[s].size()));
  prog.num_rates = static_cast<int>(ctx.active.size());
  prog.rate_objective = VectorXd::Ones(prog.num_rates);

  for (const auto& pair : aux.pairs) {
    const StreamId s = pair.stream;
    const int b = ctx.block_of[s];
    if (b < 0) continue;
    const UserIndex i = pair.decoder;
    std::vector<char> removed(scheme.num_streams(), 0);
    for (StreamId c : scheme.cancelled_before(i, s)) removed[c] = 1;
    conic::ConicConstraint con;
    for (StreamId t : ctx.active) {
      if (removed[t]) continue;
      MatrixXcd f = restricted_factor(pair.y_bar, ctx.coords[t]);
      if (f.rows() > 0) con.quad.push_back({ctx.block_of[t], std::move(f)});
    }
    con.linear.push_back({b, -2.0 * gather(pair.f_bar, ctx.coords[s])});
    con.rate_terms = {{b, kLn2}};
    con.constant = ctx.noise_var * pair.t_bar - pair.z_bar;
    con.role = conic::ConstraintRole::rate;
    con.label = "rate s" + std::to_string(s) + " u" + std::to_string(i);
    prog.constraints.push_back(std::move(con));
  }
  for (BsIndex n = 0; n < ctx.num_bs; ++n) {
    conic::ConicConstraint con;
    for (StreamId s : ctx.active) {
      const auto& cl = ctx.cluster[s];
      const auto it = std::find(cl.begin(), cl.end(), n);
      if (it == cl.end()) continue;
      const auto pos = static_cast<Eigen::Index>(it - cl.begin()) * ctx.antennas;
      MatrixXcd sel = MatrixXcd::Zero(ctx.antennas, static_cast<Eigen::Index>(ctx.coords[s].size()));
      for (int l = 0; l < ctx.antennas; ++l) sel(l, pos + l) = 1.0;
      con.quad.push_back({ctx.block_of[s], std::move(sel)});
    }
    con.constant = -ctx.power[n];
    con.role = conic::ConstraintRole::power;
    con.label = "power bs" + std::to_string(n);
    prog.constraints.push_back(std::move(con));
  }
  for (BsIndex n = 0; n < ctx.num_bs; ++n) {
    conic::ConicConstraint con;
    for (StreamId s : ctx.active) {
      const auto& cl = ctx.cluster[s];
      if (std::find(cl.begin(), cl.end(), n) != cl.end()) con.rate_terms.emplace_back(ctx.block_of[s], 1.0);
    }
    con.constant = -ctx.fronthaul[n];
    con.role = conic::ConstraintRole::fronthaul;
    con.label = "fronthaul bs" + std::to_string(n);
    prog.constraints.push_back(std::move(con));
  }
  return prog;
}

struct BcaOptions {
  double eps = 1e-5;
  int max_outer = 100;
  conic::SolverOptions solver;
  int threads = 1;
  bool record_timing = true;
  bool trace_kkt = false;
  // Tolerance of the extra subproblem solved at the returned point for its multipliers; <= 0 skips it.
  double certificate_tol = 1e-10;
};

struct IterationTrace {
  int iteration = 0;
  double esr_bps = 0.0;
  double violation = 0.0;  // largest relative violation of power, fronthaul and rate constraints
  double seconds = 0.0;
  double kkt_residual = -1.0;  // filled when BcaOptions::trace_kkt is set; -1 otherwise
  int solver_iterations = 0;
  std::string solver_status;
  bool monotone = true;
};

struct BeamformingSolution {
  BeamformerSet w;  // watts^(1/2), full N*L vectors
  RateAllocation rates;
  std::vector<IterationTrace> trace;
  bool converged = false;
  int iterations = 0;
  std::string status = "ok";
  // From the last subproblem, in internal units and its constraint order.
  std::vector<double> multipliers;
  std::vector<double> bound_multipliers;

  double esr_bps() const { return rates.total_bps(); }
};

namespace detail {

struct Internal {
  double p_ref = 1.0;
  double sigma = 1.0;
  double bandwidth = 1.0;
  ChannelSampleSet samples;  // normalized
  SubproblemContext ctx;
};

inline Internal make_internal(const SchemeInstance& scheme, const ServingClusters& clusters,
                              const ChannelSampleSet& samples, const NetworkTopology& topology) {
  Internal in;
  in.p_ref = *std::max_element(topology.p_max_w.begin(), topology.p_max_w.end());
  in.sigma = std::sqrt(topology.noise_variance());
  in.bandwidth = topology.bandwidth_hz;
  in.samples = samples;
  const double scale = std::sqrt(in.p_ref) / in.sigma;
  for (auto& h : in.samples.samples) h *= scale;
  in.ctx = make_context(scheme, clusters, topology, in.p_ref);
  return in;
}

inline BeamformerSet to_internal(const BeamformerSet& w, double p_ref) {
  BeamformerSet out = w;
  for (auto& v : out.w) v /= std::sqrt(p_ref);
  return out;
}

inline BeamformerSet to_physical(const BeamformerSet& w, double p_ref) {
  BeamformerSet out = w;
  for (auto& v : out.w) v *= std::sqrt(p_ref);
  return out;
}

inline BeamformerSet beamformers_from(const conic::ConicSolution& sol, const SubproblemContext& ctx, int streams,
                                      int dim) {
  BeamformerSet w = BeamformerSet::zeros(streams, dim);
  for (std::size_t b = 0; b < ctx.active.size(); ++b) {
    const StreamId s = ctx.active[b];
    for (std::size_t c = 0; c < ctx.coords[s].size(); ++c) w.w[s][ctx.coords[s][c]] = sol.blocks[b][c];
  }
  return w;
}

inline conic::ConicSolution blocks_from(const BeamformerSet& w, const std::vector<double>& rates,
                                        const SubproblemContext& ctx) {
  conic::ConicSolution sol;
  for (StreamId s : ctx.active) {
    sol.blocks.push_back(gather(w.w[s], ctx.coords[s]));
  }
  sol.rates.resize(static_cast<Eigen::Index>(ctx.active.size()));
  for (std::size_t b = 0; b < ctx.active.size(); ++b) sol.rates[static_cast<Eigen::Index>(b)] = rates[ctx.active[b]];
  return sol;
}

// Zero every coordinate outside the stream's cluster and every inactive stream.
inline void enforce_structure(BeamformerSet& w, const SubproblemContext& ctx) {
  for (StreamId s = 0; s < w.num_streams(); ++s) {
    if (ctx.block_of[s] < 0) {
      w.w[s].setZero();
      continue;
    }
    VectorXcd kept = VectorXcd::Zero(w.w[s].size());
    for (int c : ctx.coords[s]) kept[c] = w.w[s][c];
    w.w[s] = kept;
  }
}

// Scale each BS's blocks down to its power budget.
inline void enforce_power(BeamformerSet& w, const SubproblemContext& ctx) {
  for (BsIndex n = 0; n < ctx.num_bs; ++n) {
    const double p = w.bs_power(n, ctx.antennas);
    if (p > ctx.power[n]) {
      const double f = std::sqrt(ctx.power[n] / p) * (1.0 - 1e-12);
      for (auto& v : w.w) v.segment(n * ctx.antennas, ctx.antennas) *= f;
    }
  }
}

// Per-stream achievable SAA rates in bits/s/Hz (minimum over decoders).
inline std::vector<double> achievable_rates(const SchemeInstance& scheme, const BeamformerSet& w,
                                            const ChannelSampleSet& samples, double noise_var) {
  return saa_rates(scheme, w, samples, noise_var, 1.0).achievable_bps;
}

// Scale rates down at every BS whose fronthaul sum exceeds its capacity.
inline void scale_to_fronthaul(std::vector<double>& rates, const SubproblemContext& ctx) {
  for (BsIndex n = 0; n < ctx.num_bs; ++n) {
    double sum = 0.0;
    for (StreamId s : ctx.active)
      if (std::find(ctx.cluster[s].begin(), ctx.cluster[s].end(), n) != ctx.cluster[s].end()) sum += rates[s];
    if (sum > ctx.fronthaul[n]) {
      const double f = sum > 0.0 ? ctx.fronthaul[n] / sum : 0.0;
      for (StreamId s : ctx.active)
        if (std::find(ctx.cluster[s].begin(), ctx.cluster[s].end(), n) != ctx.cluster[s].end()) rates[s] *= f;
    }
  }
}

// Largest rates with R_s <= bound_s and every fronthaul budget respected.
inline std::vector<double> allocate_rates(const std::vector<double>& bound, const SubproblemContext& ctx,
                                          const conic::SolverOptions& opts) {
  std::vector<double> rates(bound.size(), 0.0);
  const int na = static_cast<int>(ctx.active.size());
  if (na == 0) return rates;
  conic::RealQcqp lp;
  lp.num_vars = na;
  lp.cost = -VectorXd::Ones(na);
  for (int b = 0; b < na; ++b) {
    lp.nonnegative.push_back(b);
    conic::RealConstraint c;
    c.linear = {{b, 1.0}};
    c.constant = -std::max(bound[ctx.active[b]], 0.0);
    lp.constraints.push_back(std::move(c));
  }
  for (BsIndex n = 0; n < ctx.num_bs; ++n) {
    conic::RealConstraint c;
    for (int b = 0; b < na; ++b) {
      const auto& cl = ctx.cluster[ctx.active[b]];
      if (std::find(cl.begin(), cl.end(), n) != cl.end()) c.linear.emplace_back(b, 1.0);
    }
    c.constant = -ctx.fronthaul[n];
    lp.constraints.push_back(std::move(c));
  }
  const auto r = conic::solve(lp, opts);
  for (int b = 0; b < na; ++b) {
    const StreamId s = ctx.active[b];
    rates[s] = std::clamp(r.x.size() ? r.x[b] : 0.0, 0.0, std::max(bound[s], 0.0));
  }
  scale_to_fronthaul(rates, ctx);
  return rates;
}

inline double max_violation(const BeamformerSet& w, const std::vector<double>& rates,
                            const std::vector<double>& bound, const SubproblemContext& ctx) {
  double v = 0.0;
  for (BsIndex n = 0; n < ctx.num_bs; ++n) {
    v = std::max(v, (w.bs_power(n, ctx.antennas) - ctx.power[n]) / ctx.power[n]);
    double sum = 0.0;
    for (StreamId s : ctx.active)
      if (std::find(ctx.cluster[s].begin(), ctx.cluster[s].end(), n) != ctx.cluster[s].end()) sum += rates[s];
    v = std::max(v, (sum - ctx.fronthaul[n]) / std::max(ctx.fronthaul[n], 1e-12));
  }
  for (StreamId s : ctx.active) v = std::max(v, (rates[s] - bound[s]) / std::max(1.0, bound[s]));
  return std::max(v, 0.0);
}

}  // namespace detail

/// Feasible starting point from statistics only: for each stream, the dominant eigenvector of
/// the sample covariance of its decoders' channels on the cluster coordinates, rescaled so
/// every BS splits its full power equally among the active streams it serves.
inline BeamformerSet initial_beamformers(const SchemeInstance& scheme, const ServingClusters& clusters,
                                         const ChannelSampleSet& samples, const NetworkTopology& topology) {
  const int dim = samples.user_dim();
  const auto ctx = make_context(scheme, clusters, topology, 1.0);
  BeamformerSet w = BeamformerSet::zeros(scheme.num_streams(), dim);
  std::vector<int> load(ctx.num_bs, 0);
  for (StreamId s : ctx.active)
    for (BsIndex n : ctx.cluster[s]) ++load[n];
  for (StreamId s : ctx.active) {
    const auto& coords = ctx.coords[s];
    const auto d = static_cast<Eigen::Index>(coords.size());
    MatrixXcd cov = MatrixXcd::Zero(d, d);
    for (int m = 0; m < samples.size(); ++m)
      for (UserIndex i : scheme.streams[s].decoders) {
        const VectorXcd h = gather(VectorXcd(samples.user_channel(m, i)), coords);
        cov.selfadjointView<Eigen::Lower>().rankUpdate(h, 1.0);
      }
    cov = MatrixXcd(cov.selfadjointView<Eigen::Lower>());
    Eigen::SelfAdjointEigenSolver<MatrixXcd> es(cov);
    VectorXcd v = es.eigenvectors().col(d - 1);
    for (std::size_t c = 0; c < ctx.cluster[s].size(); ++c) {
      const BsIndex n = ctx.cluster[s][c];
      auto blk = v.segment(static_cast<Eigen::Index>(c) * ctx.antennas, ctx.antennas);
      const double nrm = blk.norm();
      VectorXcd dir = nrm > 0.0 ? VectorXcd(blk / nrm) : VectorXcd::Constant(ctx.antennas, 1.0 / std::sqrt(ctx.antennas));
      w.w[s].segment(n * ctx.antennas, ctx.antennas) = std::sqrt(topology.p_max_w[n] / load[n]) * dir;
    }
  }
  return w;
}

namespace detail {

// Residual of the sample-average problem at (w, rates) in internal units; `prog` must be the
// subproblem built from the coefficients at w.
inline double kkt_residual_at(const conic::ConicProgram& prog, const SubproblemContext& ctx, const BeamformerSet& w,
                              const std::vector<double>& rates, const std::vector<double>& multipliers,
                              const std::vector<double>& bound_multipliers) {
  const auto lifted = conic::lift(prog);
  const VectorXd x = conic::lift_solution(lifted, blocks_from(w, rates, ctx));
  const auto& q = lifted.qcqp;
  VectorXd grad = q.cost;
  double comp = 0.0;
  double viol = 0.0;
  for (std::size_t c = 0; c < q.constraints.size(); ++c) {
    const double mu = c < multipliers.size() ? multipliers[c] : 0.0;
    const double g = q.constraints[c].evaluate(x);
    grad += mu * q.constraints[c].gradient(x);
    comp += std::abs(mu * g);
    viol = std::max(viol, g);
  }
  for (std::size_t j = 0; j < q.nonnegative.size(); ++j) {
    const double pi = j < bound_multipliers.size() ? bound_multipliers[j] : 0.0;
    const int v = q.nonnegative[j];
    grad[v] -= pi;
    comp += std::abs(pi * x[v]);
    viol = std::max(viol, -x[v]);
  }
  return grad.norm() + comp + viol;
}

inline BeamformingSolution finalize(const SchemeInstance& scheme, const Internal& in, BeamformerSet w,
                                    const conic::SolverOptions& opts) {
  enforce_structure(w, in.ctx);
  enforce_power(w, in.ctx);
  const auto bound = achievable_rates(scheme, w, in.samples, in.ctx.noise_var);
  const auto rates = allocate_rates(bound, in.ctx, opts);
  BeamformingSolution sol;
  sol.w = to_physical(w, in.p_ref);
  sol.rates.stream_bps.resize(rates.size());
  for (std::size_t s = 0; s < rates.size(); ++s) sol.rates.stream_bps[s] = rates[s] * in.bandwidth;
  return sol;
}

}  // namespace detail

/// Alternates update_aux and the convex subproblem until the relative change of the
/// objective drops below `eps` or `max_outer` iterations have run. The returned rates are
/// the largest fronthaul-feasible rates supported by the final beamformers.
inline BeamformingSolution bca_solve(const SchemeInstance& scheme, const ServingClusters& clusters,
                                     const ChannelSampleSet& samples, const NetworkTopology& topology,
                                     const BcaOptions& opts = {},
                                     const std::optional<BeamformerSet>& initial = std::nullopt) {
  topology.validate();
  using clock = std::chrono::steady_clock;
  const auto t0 = clock::now();
  auto elapsed = [&] {
    return opts.record_timing ? std::chrono::duration<double>(clock::now() - t0).count() : 0.0;
  };

  const detail::Internal in = detail::make_internal(scheme, clusters, samples, topology);
  const auto& ctx = in.ctx;
  const int S = scheme.num_streams();
  const int dim = samples.user_dim();

  BeamformerSet w = detail::to_internal(initial ? *initial : initial_beamformers(scheme, clusters, samples, topology),
                                        in.p_ref);
  if (w.num_streams() != S) throw std::invalid_argument("bca_solve: initial beamformers must cover every stream");
  detail::enforce_structure(w, ctx);
  detail::enforce_power(w, ctx);

  std::vector<double> bound = detail::achievable_rates(scheme, w, in.samples, ctx.noise_var);
  std::vector<double> rates = bound;
  for (double& r : rates) r = std::max(r, 0.0);
  for (StreamId s = 0; s < S; ++s)
    if (ctx.block_of[s] < 0) rates[s] = 0.0;
  detail::scale_to_fronthaul(rates, ctx);

  std::vector<IterationTrace> trace;
  auto total = [&](const std::vector<double>& r) {
    double t = 0.0;
    for (double v : r) t += v;
    return t;
  };
  trace.push_back({0, total(rates) * in.bandwidth, detail::max_violation(w, rates, bound, ctx), elapsed(), -1.0, 0,
                   "init", true});

  BeamformingSolution result;
  result.status = "ok";
  std::string status = "ok";
  bool converged = ctx.active.empty();
  int iter = 0;
  std::vector<double> mult, bmult;
  while (!converged && iter < opts.max_outer) {
    ++iter;
    const auto aux = update_aux(scheme, w, in.samples, ctx.noise_var, opts.threads);
    const auto prog = build_subproblem(scheme, ctx, aux);
    if (opts.trace_kkt && iter > 1) trace.back().kkt_residual = detail::kkt_residual_at(prog, ctx, w, rates, mult, bmult);
    const auto res = conic::solve(prog, opts.solver);
    if (!res.raw.usable() && res.raw.status != conic::SolveStatus::max_iter) {
      status = "subproblem " + std::string(conic::to_string(res.raw.status)) + " at iteration " + std::to_string(iter);
      break;
    }
    const double prev = total(rates);
    BeamformerSet next = detail::beamformers_from(res.solution, ctx, S, dim);
    std::vector<double> next_rates(S, 0.0);
    for (std::size_t b = 0; b < ctx.active.size(); ++b)
      next_rates[ctx.active[b]] = std::max(res.solution.rates[static_cast<Eigen::Index>(b)], 0.0);
    const double cur = total(next_rates);
    const double rel_drop = (prev - cur) / std::max(prev, 1e-300);
    const bool monotone = !(rel_drop > 1e-6);
    if (!monotone && !res.raw.usable()) {
      status = "subproblem max_iter without progress at iteration " + std::to_string(iter);
      trace.push_back({iter, cur * in.bandwidth, 0.0, elapsed(), -1.0, res.raw.iterations,
                       std::string(conic::to_string(res.raw.status)), false});
      break;
    }
    w = std::move(next);
    rates = std::move(next_rates);
    mult = res.raw.multipliers;
    bmult = res.raw.bound_multipliers;
    bound = detail::achievable_rates(scheme, w, in.samples, ctx.noise_var);
    trace.push_back({iter, cur * in.bandwidth, detail::max_violation(w, rates, bound, ctx), elapsed(),
                     -1.0, res.raw.iterations, std::string(conic::to_string(res.raw.status)), monotone});
    const double change = std::abs(cur - prev) / std::max(std::abs(cur), 1e-300);
    if (change < opts.eps || cur == prev) converged = true;
  }

  if (opts.trace_kkt && iter > 0 && !mult.empty()) {
    const auto aux = update_aux(scheme, w, in.samples, ctx.noise_var, opts.threads);
    trace.back().kkt_residual = detail::kkt_residual_at(build_subproblem(scheme, ctx, aux), ctx, w, rates, mult, bmult);
  }
  result = detail::finalize(scheme, in, w, opts.solver);
  if (iter > 0 && opts.certificate_tol > 0.0 && !ctx.active.empty()) {
    const BeamformerSet wf = detail::to_internal(result.w, in.p_ref);
    conic::SolverOptions so = opts.solver;
    so.tol = opts.certificate_tol;
    const auto cert = conic::solve(build_subproblem(scheme, ctx, update_aux(scheme, wf, in.samples, ctx.noise_var, opts.threads)), so);
    if (cert.raw.usable()) {
      mult = cert.raw.multipliers;
      bmult = cert.raw.bound_multipliers;
    }
  }
  result.trace = std::move(trace);
  result.converged = converged;
  result.iterations = iter;
  result.status = status;
  result.multipliers = std::move(mult);
  result.bound_multipliers = std::move(bmult);
  return result;
}

/// Stationarity, complementarity and feasibility residual of the sample-average problem at
/// the returned point, in internal units. The constraints are linearized through the
/// subproblem rebuilt at the solution (whose rate constraints then equal ln 2 times the
/// sample-average rate constraints, with matching gradients), using the multipliers of the
/// last subproblem.
inline double kkt_residual(const BeamformingSolution& sol, const SchemeInstance& scheme,
                           const ServingClusters& clusters, const ChannelSampleSet& samples,
                           const NetworkTopology& topology) {
  const detail::Internal in = detail::make_internal(scheme, clusters, samples, topology);
  const auto& ctx = in.ctx;
  if (ctx.active.empty()) return 0.0;
  const BeamformerSet w = detail::to_internal(sol.w, in.p_ref);
  const auto aux = update_aux(scheme, w, in.samples, ctx.noise_var);
  std::vector<double> rates(scheme.num_streams(), 0.0);
  for (StreamId s = 0; s < scheme.num_streams(); ++s) rates[s] = sol.rates.stream_bps.at(s) / in.bandwidth;
  return detail::kkt_residual_at(build_subproblem(scheme, ctx, aux), ctx, w, rates, sol.multipliers,
                                 sol.bound_multipliers);
}

/// RS-CMD starting point built from a TIN solution: private beamformers keep the TIN
/// directions with a (1 - alpha) share of their power, and each user's common stream gets
/// alpha times the private stream's power along the same direction, on the common
/// stream's cluster. alpha = 0 embeds the TIN point exactly (zero common streams).
inline BeamformerSet embed_tin_solution(const SchemeInstance& target, const ServingClusters& target_clusters,
                                        const BeamformerSet& tin, int antennas, double alpha) {
  if (!(alpha >= 0.0 && alpha < 1.0)) throw std::invalid_argument("embed_tin_solution: alpha must be in [0, 1)");
  const int dim = tin.w.empty() ? 0 : static_cast<int>(tin.w[0].size());
  BeamformerSet w = BeamformerSet::zeros(target.num_streams(), dim);
  for (UserIndex k = 0; k < target.num_users; ++k) w.w[target.private_stream(k)] = std::sqrt(1.0 - alpha) * tin.w.at(k);
  if (alpha > 0.0) {
    for (const auto& s : target.streams) {
      if (!s.is_common()) continue;
      VectorXcd v = VectorXcd::Zero(dim);
      for (UserIndex o : s.owners) v += tin.w.at(o);
      v *= std::sqrt(alpha / static_cast<double>(s.owners.size()));
      VectorXcd kept = VectorXcd::Zero(dim);
      for (BsIndex n : target_clusters.cluster_of.at(s.id))
        kept.segment(n * antennas, antennas) = v.segment(n * antennas, antennas);
      w.w[s.id] = kept;
    }
  }
  return w;
}

}  // namespace rscran
