#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "rscran/rng.hpp"
#include "rscran/types.hpp"

namespace rscran {

struct NetworkTopology {
  std::vector<Point> bs_positions;
  std::vector<Point> user_positions;
  int antennas = 2;
  std::vector<double> p_max_w;        // per BS, linear watts
  std::vector<double> fronthaul_bps;  // per BS
  double bandwidth_hz = 10e6;
  double noise_psd_w_per_hz = 1.2589254117941713e-20;  // -169 dBm/Hz

  int num_bs() const { return static_cast<int>(bs_positions.size()); }
  int num_users() const { return static_cast<int>(user_positions.size()); }
  double noise_variance() const { return noise_psd_w_per_hz * bandwidth_hz; }

  void validate() const {
    if (bs_positions.empty()) throw std::invalid_argument("topology: at least one BS required");
    if (user_positions.empty()) throw std::invalid_argument("topology: at least one user required");
    if (antennas < 1) throw std::invalid_argument("topology: antennas per BS must be >= 1");
    if (p_max_w.size() != bs_positions.size() || fronthaul_bps.size() != bs_positions.size())
      throw std::invalid_argument("topology: per-BS power and fronthaul lists must have N entries");
    for (double p : p_max_w)
      if (!(p > 0.0)) throw std::invalid_argument("topology: P_max must be positive");
    for (double f : fronthaul_bps)
      if (!(f >= 0.0)) throw std::invalid_argument("topology: fronthaul capacity must be >= 0");
    if (!(bandwidth_hz > 0.0)) throw std::invalid_argument("topology: bandwidth must be positive");
    if (!(noise_psd_w_per_hz > 0.0)) throw std::invalid_argument("topology: noise PSD must be positive");
  }
};

/// Large-scale fading parameters. With `sigma_db == 0` shadowing is disabled (g = 1).
/// Explicit per-link matrices, when given, override the random draw.
struct ShadowingConfig {
  double sigma_db = 0.0;
  double antenna_gain = 1.0;
  double min_distance_km = 0.010;
  std::uint64_t seed = 0;
  std::optional<MatrixXd> shadowing_gain;  // N x K, linear
  std::optional<MatrixXd> antenna_gains;   // N x K, linear
};

struct LargeScaleCsi {
  MatrixXd amplitude;    // D[n][k], N x K
  MatrixXd distance_km;  // clamped to the distance floor
  int antennas = 1;

  int num_bs() const { return static_cast<int>(amplitude.rows()); }
  int num_users() const { return static_cast<int>(amplitude.cols()); }
};

/// Path loss in dB for a BS-user distance in km.
inline double path_loss_db(double d_km) {
  if (!(d_km > 0.0)) throw std::domain_error("path_loss_db: distance must be positive, got " + std::to_string(d_km));
  return 148.1 + 37.6 * std::log10(d_km);
}

inline double large_scale_amplitude(double d_km, double shadowing_gain, double antenna_gain) {
  return std::pow(10.0, -path_loss_db(d_km) / 20.0) * std::sqrt(shadowing_gain * antenna_gain);
}

inline LargeScaleCsi build_large_scale_csi(const NetworkTopology& topology, const ShadowingConfig& shadowing = {}) {
  topology.validate();
  const int n_bs = topology.num_bs();
  const int n_users = topology.num_users();
  auto check_shape = [&](const std::optional<MatrixXd>& m, const char* what) {
    if (m && (m->rows() != n_bs || m->cols() != n_users))
      throw std::invalid_argument(std::string("build_large_scale_csi: ") + what + " must be N x K");
  };
  check_shape(shadowing.shadowing_gain, "shadowing_gain");
  check_shape(shadowing.antenna_gains, "antenna_gains");

  LargeScaleCsi csi;
  csi.antennas = topology.antennas;
  csi.amplitude.resize(n_bs, n_users);
  csi.distance_km.resize(n_bs, n_users);
  Rng rng(derive_seed(shadowing.seed, 0x5ad0));
  for (int n = 0; n < n_bs; ++n) {
    for (int k = 0; k < n_users; ++k) {
      const double d = std::max(distance_km(topology.bs_positions[n], topology.user_positions[k]),
                                shadowing.min_distance_km);
      double g = 1.0;
      if (shadowing.shadowing_gain) {
        g = (*shadowing.shadowing_gain)(n, k);
      } else if (shadowing.sigma_db > 0.0) {
        g = db_to_linear(shadowing.sigma_db * rng.normal());
      }
      const double s = shadowing.antenna_gains ? (*shadowing.antenna_gains)(n, k) : shadowing.antenna_gain;
      csi.distance_km(n, k) = d;
      csi.amplitude(n, k) = large_scale_amplitude(d, g, s);
    }
  }
  return csi;
}

/// M frozen realisations of the aggregate channel h = [h_1; ...; h_K], each h_k = [h_{1,k}; ...; h_{N,k}].
struct ChannelSampleSet {
  int num_bs = 0;
  int num_users = 0;
  int antennas = 0;
  std::uint64_t seed = 0;
  std::vector<VectorXcd> samples;

  int size() const { return static_cast<int>(samples.size()); }
  int user_dim() const { return num_bs * antennas; }

  auto user_channel(int m, UserIndex k) const { return samples[m].segment(k * user_dim(), user_dim()); }
  auto user_channel(int m, UserIndex k) { return samples[m].segment(k * user_dim(), user_dim()); }
};

/// Draws sample `m` of the set identified by `seed`; independent of every other index.
inline VectorXcd sample_channel(const LargeScaleCsi& csi, std::uint64_t seed, int m) {
  const int n_bs = csi.num_bs();
  const int n_users = csi.num_users();
  const int l = csi.antennas;
  VectorXcd h(static_cast<Eigen::Index>(n_bs) * l * n_users);
  Rng rng(derive_seed(seed, static_cast<std::uint64_t>(m)));
  Eigen::Index idx = 0;
  for (int k = 0; k < n_users; ++k)
    for (int n = 0; n < n_bs; ++n)
      for (int a = 0; a < l; ++a) h[idx++] = csi.amplitude(n, k) * rng.complex_normal();
  return h;
}

inline ChannelSampleSet sample_channels(const LargeScaleCsi& csi, int count, std::uint64_t seed, int threads = 1) {
  if (count < 1) throw std::invalid_argument("sample_channels: sample count must be >= 1");
  ChannelSampleSet set;
  set.num_bs = csi.num_bs();
  set.num_users = csi.num_users();
  set.antennas = csi.antennas;
  set.seed = seed;
  set.samples.resize(count);
  threads = std::clamp(threads, 1, count);
  if (threads == 1) {
    for (int m = 0; m < count; ++m) set.samples[m] = sample_channel(csi, seed, m);
    return set;
  }
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      for (int m = t; m < count; m += threads) set.samples[m] = sample_channel(csi, seed, m);
    });
  }
  for (auto& th : pool) th.join();
  return set;
}

}  // namespace rscran
