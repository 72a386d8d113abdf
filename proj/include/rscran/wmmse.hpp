#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "rscran/channel.hpp"
#include "rscran/scheme.hpp"
#include "rscran/types.hpp"

namespace rscran {

inline constexpr double kRhoMin = 1e-8;
inline constexpr double kRhoMax = 1e12;

/// Aggregate beamformers, one length-NL vector per stream. Blocks of BSs outside a
/// stream's serving cluster are exactly zero.
struct BeamformerSet {
  std::vector<VectorXcd> w;

  static BeamformerSet zeros(int num_streams, int dim) {
    return {std::vector<VectorXcd>(num_streams, VectorXcd::Zero(dim))};
  }
  int num_streams() const { return static_cast<int>(w.size()); }

  /// Transmit power of BS n: sum of squared norms of its L-blocks over all streams.
  double bs_power(BsIndex n, int antennas) const {
    double p = 0.0;
    for (const auto& ws : w) p += ws.segment(n * antennas, antennas).squaredNorm();
    return p;
  }
};

struct ReceivedPowers {
  double signal = 0.0;
  double interference = 0.0;  // interference plus noise
  double total = 0.0;
};

/// |h_k^H w_t|^2 for every stream t.
inline VectorXd stream_gains(const Eigen::Ref<const VectorXcd>& h_k, const BeamformerSet& w) {
  VectorXd g(w.num_streams());
  for (int t = 0; t < w.num_streams(); ++t) g[t] = std::norm(h_k.dot(w.w[t]));
  return g;
}

/// Signal and interference-plus-noise seen by user k when decoding stream s, given the
/// per-stream gains. Streams already cancelled by SIC do not interfere.
inline ReceivedPowers received_powers_from_gains(const VectorXd& gains, const SchemeInstance& scheme, UserIndex k,
                                                 StreamId s, double noise_var) {
  std::vector<char> removed(scheme.num_streams(), 0);
  for (StreamId c : scheme.cancelled_before(k, s)) removed[c] = 1;
  removed[s] = 1;
  double interference = noise_var;
  for (StreamId t = 0; t < scheme.num_streams(); ++t)
    if (!removed[t]) interference += gains[t];
  return {gains[s], interference, gains[s] + interference};
}

/// Powers for user k decoding its private stream, or common stream `common` when given.
inline ReceivedPowers received_powers(const Eigen::Ref<const VectorXcd>& h_k, const SchemeInstance& scheme,
                                      const BeamformerSet& w, UserIndex k, double noise_var,
                                      std::optional<StreamId> common = std::nullopt) {
  const StreamId s = common.value_or(scheme.private_stream(k));
  return received_powers_from_gains(stream_gains(h_k, w), scheme, k, s, noise_var);
}

inline double sinr(double signal, double interference) {
  if (!(interference > 0.0)) throw std::domain_error("sinr: interference-plus-noise must be positive");
  return signal / interference;
}

/// u = (w_s^H h_k) / T
inline cdouble mmse_receiver(const Eigen::Ref<const VectorXcd>& h_k, const Eigen::Ref<const VectorXcd>& w_s,
                             double total) {
  return w_s.dot(h_k) / total;
}

inline double mmse_error(double interference, double total) { return interference / total; }

/// MSE of receiver u: |u|^2 T - 2 Re{u h^H w} + 1.
inline double mse(cdouble u, const Eigen::Ref<const VectorXcd>& h_k, const Eigen::Ref<const VectorXcd>& w_s,
                  double total) {
  return std::norm(u) * total - 2.0 * std::real(u * h_k.dot(w_s)) + 1.0;
}

/// Rate lower bound in bits/s/Hz; equals log2(1 + sinr) at the MMSE receiver and rho = 1/e.
inline double wmmse_bound(double rho, double e) { return (std::log(rho) - rho * e + 1.0) / kLn2; }

inline double optimal_weight(double e_mmse) {
  if (!(e_mmse > 0.0)) return kRhoMax;
  return std::clamp(1.0 / e_mmse, kRhoMin, kRhoMax);
}

inline double rate_bits(const ReceivedPowers& p) { return std::log2(1.0 + sinr(p.signal, p.interference)); }

/// Per-stream SAA rates. `decoder_rate_bps[s][j]` averages the rate of the j-th decoder of
/// stream s over the samples; `achievable_bps[s]` is their minimum (one constraint per
/// decoder). `multicast_bps[s]` takes the minimum inside the sample average instead.
struct SaaRates {
  std::vector<std::vector<double>> decoder_rate_bps;
  std::vector<double> achievable_bps;
  std::vector<double> multicast_bps;
};

inline SaaRates saa_rates(const SchemeInstance& scheme, const BeamformerSet& w, const ChannelSampleSet& samples,
                          double noise_var, double bandwidth_hz) {
  const int n_streams = scheme.num_streams();
  SaaRates out;
  out.decoder_rate_bps.resize(n_streams);
  out.multicast_bps.assign(n_streams, 0.0);
  for (const auto& s : scheme.streams) out.decoder_rate_bps[s.id].assign(s.decoders.size(), 0.0);

  const int m_count = samples.size();
  std::vector<VectorXd> gains(scheme.num_users);
  for (int m = 0; m < m_count; ++m) {
    for (UserIndex k = 0; k < scheme.num_users; ++k) gains[k] = stream_gains(samples.user_channel(m, k), w);
    for (const auto& s : scheme.streams) {
      double worst = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < s.decoders.size(); ++j) {
        const UserIndex k = s.decoders[j];
        const double r = rate_bits(received_powers_from_gains(gains[k], scheme, k, s.id, noise_var));
        out.decoder_rate_bps[s.id][j] += r;
        worst = std::min(worst, r);
      }
      out.multicast_bps[s.id] += worst;
    }
  }
  const double scale = bandwidth_hz / m_count;
  out.achievable_bps.assign(n_streams, 0.0);
  for (StreamId s = 0; s < n_streams; ++s) {
    out.multicast_bps[s] *= scale;
    double lo = std::numeric_limits<double>::infinity();
    for (double& r : out.decoder_rate_bps[s]) {
      r *= scale;
      lo = std::min(lo, r);
    }
    out.achievable_bps[s] = lo;
  }
  return out;
}

struct UserRateBounds {
  double private_bps = 0.0;
  double common_bps = 0.0;
};

/// SAA ergodic rate bounds of user k: the private-stream rate and the common rate of the
/// streams it owns (the minimum over decoders taken per sample). Multi-owner streams are
/// attributed in equal shares to their owners.
inline UserRateBounds saa_rate(const SchemeInstance& scheme, const BeamformerSet& w, const ChannelSampleSet& samples,
                               UserIndex k, double noise_var, double bandwidth_hz) {
  const SaaRates r = saa_rates(scheme, w, samples, noise_var, bandwidth_hz);
  UserRateBounds out;
  out.private_bps = r.multicast_bps[scheme.private_stream(k)];
  for (const auto& s : scheme.streams) {
    if (!s.is_common()) continue;
    if (std::binary_search(s.owners.begin(), s.owners.end(), k))
      out.common_bps += r.multicast_bps[s.id] / static_cast<double>(s.owners.size());
  }
  return out;
}

/// Ergodic rates allocated to streams (bits/s) with per-user private/common views.
struct RateAllocation {
  std::vector<double> stream_bps;

  double total_bps() const {
    double t = 0.0;
    for (double r : stream_bps) t += r;
    return t;
  }
  double private_bps(const SchemeInstance& scheme, UserIndex k) const { return stream_bps.at(scheme.private_stream(k)); }
  double common_bps(const SchemeInstance& scheme, UserIndex k) const {
    double c = 0.0;
    for (const auto& s : scheme.streams)
      if (s.is_common() && std::binary_search(s.owners.begin(), s.owners.end(), k))
        c += stream_bps.at(s.id) / static_cast<double>(s.owners.size());
    return c;
  }
};

}  // namespace rscran
