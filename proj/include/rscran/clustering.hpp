#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <span>
#include <stdexcept>
#include <vector>

#include "rscran/channel.hpp"
#include "rscran/scheme.hpp"
#include "rscran/types.hpp"

namespace rscran {

inline constexpr double kNoLink = -std::numeric_limits<double>::infinity();

struct ClusterParams {
  double mu_db = 3.0;
  std::vector<int> a_max;  // per BS

  static ClusterParams uniform(int num_bs, int a_max, double mu_db = 3.0) {
    return {mu_db, std::vector<int>(num_bs, a_max)};
  }
};

struct ServingClusters {
  std::vector<std::vector<StreamId>> served_by;  // per BS, sorted
  std::vector<std::vector<BsIndex>> cluster_of;  // per stream, sorted
  std::vector<StreamId> unserved;
  int rounds = 0;

  bool is_served(StreamId s) const { return !cluster_of.at(s).empty(); }
  bool serves(BsIndex n, StreamId s) const {
    const auto& c = cluster_of.at(s);
    return std::binary_search(c.begin(), c.end(), n);
  }
};

/// Statistical link quality in dB; proportional to -path loss plus shadowing/gain terms.
inline double channel_quality(const LargeScaleCsi& csi, BsIndex n, UserIndex j) {
  const double d = csi.amplitude(n, j);
  return d > 0.0 ? 20.0 * std::log10(d) : kNoLink;
}

inline double collective_quality(const LargeScaleCsi& csi, BsIndex n, std::span<const UserIndex> decoders) {
  if (decoders.empty()) throw std::invalid_argument("collective_quality: decoder set must be non-empty");
  double sum = 0.0;
  for (UserIndex j : decoders) {
    const double q = channel_quality(csi, n, j);
    if (q == kNoLink) return kNoLink;
    sum += q;
  }
  return sum / static_cast<double>(decoders.size());
}

/// BSs within `mu_db` of the best collective quality. Links with no signal never qualify.
inline std::vector<BsIndex> candidate_clusters(std::span<const double> quality_per_bs, double mu_db) {
  double best = kNoLink;
  for (double q : quality_per_bs) best = std::max(best, q);
  std::vector<BsIndex> out;
  if (best == kNoLink) return out;
  for (BsIndex n = 0; n < static_cast<BsIndex>(quality_per_bs.size()); ++n)
    if (quality_per_bs[n] != kNoLink && best - quality_per_bs[n] <= mu_db) out.push_back(n);
  return out;
}

inline std::vector<BsIndex> candidate_clusters(const LargeScaleCsi& csi, const Stream& stream, double mu_db) {
  std::vector<double> q(csi.num_bs());
  for (BsIndex n = 0; n < csi.num_bs(); ++n) q[n] = collective_quality(csi, n, stream.decoders);
  return candidate_clusters(q, mu_db);
}

/// Collective quality of every (BS, stream) pair, N x S.
inline MatrixXd stream_quality_table(const LargeScaleCsi& csi, const SchemeInstance& scheme) {
  MatrixXd q(csi.num_bs(), scheme.num_streams());
  for (const auto& s : scheme.streams)
    for (BsIndex n = 0; n < csi.num_bs(); ++n) q(n, s.id) = collective_quality(csi, n, s.decoders);
  return q;
}

/// Stream-to-BS association with load balancing from statistical CSI only.
///
/// Each round, every stream still in the pool takes its strongest remaining candidate BS
/// (ties to the lower BS index); a stream whose candidate set is exhausted leaves the pool.
/// Then every BS above its limit drops its weakest streams (ascending quality, ties to the
/// higher stream id) and leaves the BS pool. Stops when either pool is empty.
inline ServingClusters run_clustering(const MatrixXd& quality, const ClusterParams& params) {
  const int n_bs = static_cast<int>(quality.rows());
  const int n_streams = static_cast<int>(quality.cols());
  if (static_cast<int>(params.a_max.size()) != n_bs)
    throw std::invalid_argument("run_clustering: A_max must have one entry per BS");
  if (params.mu_db < 0.0) throw std::invalid_argument("run_clustering: mu must be >= 0");

  std::vector<std::set<BsIndex>> candidates(n_streams);
  for (StreamId s = 0; s < n_streams; ++s) {
    std::vector<double> q(n_bs);
    for (BsIndex n = 0; n < n_bs; ++n) q[n] = quality(n, s);
    for (BsIndex n : candidate_clusters(q, params.mu_db)) candidates[s].insert(n);
  }

  std::set<StreamId> stream_pool;
  for (StreamId s = 0; s < n_streams; ++s) stream_pool.insert(s);
  std::set<BsIndex> bs_pool;
  for (BsIndex n = 0; n < n_bs; ++n) bs_pool.insert(n);
  std::vector<std::set<StreamId>> served(n_bs);

  ServingClusters out;
  while (!stream_pool.empty() && !bs_pool.empty()) {
    ++out.rounds;
    for (auto it = stream_pool.begin(); it != stream_pool.end();) {
      const StreamId s = *it;
      if (candidates[s].empty()) {
        it = stream_pool.erase(it);
        continue;
      }
      BsIndex strongest = *candidates[s].begin();
      for (BsIndex n : candidates[s])
        if (quality(n, s) > quality(strongest, s)) strongest = n;
      served[strongest].insert(s);
      candidates[s].erase(strongest);
      ++it;
    }
    for (auto it = bs_pool.begin(); it != bs_pool.end();) {
      const BsIndex n = *it;
      const int load = static_cast<int>(served[n].size());
      if (load <= params.a_max[n]) {
        ++it;
        continue;
      }
      std::vector<StreamId> order(served[n].begin(), served[n].end());
      std::sort(order.begin(), order.end(), [&](StreamId a, StreamId b) {
        return quality(n, a) != quality(n, b) ? quality(n, a) < quality(n, b) : a > b;
      });
      const int excess = load - std::max(params.a_max[n], 0);
      for (int i = 0; i < excess; ++i) served[n].erase(order[i]);
      for (auto& c : candidates) c.erase(n);
      it = bs_pool.erase(it);
    }
  }

  out.served_by.resize(n_bs);
  out.cluster_of.assign(n_streams, {});
  for (BsIndex n = 0; n < n_bs; ++n) {
    out.served_by[n].assign(served[n].begin(), served[n].end());
    for (StreamId s : served[n]) out.cluster_of[s].push_back(n);
  }
  for (StreamId s = 0; s < n_streams; ++s)
    if (out.cluster_of[s].empty()) out.unserved.push_back(s);
  return out;
}

inline ServingClusters run_clustering(const LargeScaleCsi& csi, const SchemeInstance& scheme,
                                      const ClusterParams& params) {
  return run_clustering(stream_quality_table(csi, scheme), params);
}

/// Every stream served by every BS; used for dense-cluster analyses.
inline ServingClusters full_clusters(int num_bs, int num_streams) {
  ServingClusters c;
  c.served_by.assign(num_bs, {});
  c.cluster_of.assign(num_streams, {});
  for (BsIndex n = 0; n < num_bs; ++n)
    for (StreamId s = 0; s < num_streams; ++s) {
      c.served_by[n].push_back(s);
      c.cluster_of[s].push_back(n);
    }
  return c;
}

}  // namespace rscran
