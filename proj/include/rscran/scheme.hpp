#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <vector>

#include "rscran/channel.hpp"
#include "rscran/types.hpp"

namespace rscran {

enum class SchemeKind { tin, rs_cmd, rs1, rs2, generalized_rs };
enum class StreamKind { private_stream, common_stream };

inline constexpr SchemeKind kAllSchemeKinds[] = {SchemeKind::tin, SchemeKind::rs_cmd, SchemeKind::rs1,
                                                 SchemeKind::rs2, SchemeKind::generalized_rs};

inline std::string_view to_string(SchemeKind kind) {
  switch (kind) {
    case SchemeKind::tin: return "TIN";
    case SchemeKind::rs_cmd: return "RS_CMD";
    case SchemeKind::rs1: return "RS1";
    case SchemeKind::rs2: return "RS2";
    case SchemeKind::generalized_rs: return "GENERALIZED_RS";
  }
  return "?";
}

inline SchemeKind parse_scheme_kind(std::string_view name) {
  for (SchemeKind k : kAllSchemeKinds)
    if (to_string(k) == name) return k;
  throw std::invalid_argument("unknown scheme kind '" + std::string(name) +
                              "' (expected TIN, RS_CMD, RS1, RS2 or GENERALIZED_RS)");
}

/// Closed-form stream count of each scheme for K users.
inline long long expected_stream_count(SchemeKind kind, int users) {
  const long long k = users;
  switch (kind) {
    case SchemeKind::tin: return k;
    case SchemeKind::rs_cmd: return 2 * k;
    case SchemeKind::rs1: return k * (k + 1) / 2;
    case SchemeKind::rs2: return k + 1;
    case SchemeKind::generalized_rs: return (1LL << k) - 1;
  }
  return 0;
}

struct Stream {
  StreamId id = 0;
  StreamKind kind = StreamKind::private_stream;
  std::vector<UserIndex> owners;    // users whose message parts the stream carries (sorted)
  std::vector<UserIndex> decoders;  // users that must decode it (sorted)

  bool is_common() const { return kind == StreamKind::common_stream; }
};

struct InterferencePartition {
  std::vector<StreamId> cancelled;  // decoded before the stream, removed by SIC
  std::vector<StreamId> residual;   // decoded after it, still interfering
};

/// Stream structure of one transmission scheme. Stream ids index `streams`; the private
/// stream of user k has id k.
struct SchemeInstance {
  SchemeKind kind = SchemeKind::tin;
  int num_users = 0;
  std::vector<Stream> streams;
  std::vector<std::vector<StreamId>> phi;    // common streams user k decodes, in decoding order
  std::vector<std::vector<StreamId>> omega;  // common streams user k does not decode

  int num_streams() const { return static_cast<int>(streams.size()); }
  int num_common() const { return num_streams() - num_users; }
  StreamId private_stream(UserIndex k) const { return k; }

  /// Number of (stream, decoding user) pairs: K + sum_k |M_k| for RS-CMD.
  int num_decoding_pairs() const {
    int total = 0;
    for (const auto& s : streams) total += static_cast<int>(s.decoders.size());
    return total;
  }

  /// Position of stream `s` in user k's decoding order, or -1 when k does not decode it.
  int decode_position(UserIndex k, StreamId s) const {
    const auto& order = phi.at(k);
    auto it = std::find(order.begin(), order.end(), s);
    return it == order.end() ? -1 : static_cast<int>(it - order.begin());
  }

  /// Streams already removed by SIC when user k decodes stream s (all of phi[k] for its
  /// private stream).
  std::vector<StreamId> cancelled_before(UserIndex k, StreamId s) const {
    if (s == private_stream(k)) return phi.at(k);
    const int pos = decode_position(k, s);
    if (pos < 0)
      throw std::invalid_argument("stream " + std::to_string(s) + " is not decoded by user " + std::to_string(k));
    return {phi[k].begin(), phi[k].begin() + pos};
  }
};

inline InterferencePartition interference_partition(const SchemeInstance& scheme, UserIndex k, StreamId i) {
  const int pos = scheme.decode_position(k, i);
  if (pos < 0)
    throw std::invalid_argument("interference_partition: stream " + std::to_string(i) + " not in phi[" +
                                std::to_string(k) + "]");
  const auto& order = scheme.phi[k];
  return {{order.begin(), order.begin() + pos}, {order.begin() + pos + 1, order.end()}};
}

inline double user_distance_m(const NetworkTopology& topology, UserIndex a, UserIndex b) {
  return 1000.0 * distance_km(topology.user_positions.at(a), topology.user_positions.at(b));
}

/// Orders the common streams user k decodes: larger owner sets first, then nearer owners,
/// then lexicographically smaller owner set. For single-owner streams this is ascending
/// owner distance with ties to the lower user index; the user's own stream (distance 0)
/// comes first.
inline std::vector<StreamId> decode_order(const NetworkTopology& topology, const std::vector<Stream>& streams,
                                          UserIndex k, std::vector<StreamId> unordered) {
  auto key = [&](StreamId id) {
    const Stream& s = streams.at(id);
    double nearest = std::numeric_limits<double>::infinity();
    for (UserIndex o : s.owners) nearest = std::min(nearest, user_distance_m(topology, o, k));
    return std::tuple(-static_cast<int>(s.owners.size()), nearest, s.owners);
  };
  std::stable_sort(unordered.begin(), unordered.end(), [&](StreamId a, StreamId b) { return key(a) < key(b); });
  return unordered;
}

inline SchemeInstance build_scheme(SchemeKind kind, const NetworkTopology& topology, double delta_m = 100.0,
                                   int generalized_rs_cap = 8) {
  if (!(delta_m >= 0.0)) throw std::invalid_argument("build_scheme: delta must be >= 0");
  const int users = topology.num_users();
  if (users < 1) throw std::invalid_argument("build_scheme: at least one user required");
  if (kind == SchemeKind::generalized_rs && (users > generalized_rs_cap || users > 30)) {
    throw std::invalid_argument("build_scheme: generalized RS with K=" + std::to_string(users) +
                                " users needs 2^K-1 streams (exponential in K); cap is K <= " +
                                std::to_string(generalized_rs_cap));
  }

  SchemeInstance scheme;
  scheme.kind = kind;
  scheme.num_users = users;
  for (UserIndex k = 0; k < users; ++k)
    scheme.streams.push_back({k, StreamKind::private_stream, {k}, {k}});

  auto add_common = [&](std::vector<UserIndex> owners, std::vector<UserIndex> decoders) {
    const auto id = static_cast<StreamId>(scheme.streams.size());
    scheme.streams.push_back({id, StreamKind::common_stream, std::move(owners), std::move(decoders)});
  };

  switch (kind) {
    case SchemeKind::tin:
      break;
    case SchemeKind::rs_cmd:
      for (UserIndex k = 0; k < users; ++k) {
        std::vector<UserIndex> common_set;
        for (UserIndex j = 0; j < users; ++j)
          if (j == k || user_distance_m(topology, j, k) <= delta_m) common_set.push_back(j);
        add_common({k}, std::move(common_set));
      }
      break;
    case SchemeKind::rs1:
      for (UserIndex i = 0; i < users; ++i)
        for (UserIndex j = i + 1; j < users; ++j) add_common({i, j}, {i, j});
      break;
    case SchemeKind::rs2: {
      std::vector<UserIndex> all(users);
      for (UserIndex k = 0; k < users; ++k) all[k] = k;
      add_common(all, all);
      break;
    }
    case SchemeKind::generalized_rs: {
      std::vector<std::vector<UserIndex>> subsets;
      for (std::uint64_t mask = 1; mask < (1ULL << users); ++mask) {
        std::vector<UserIndex> subset;
        for (UserIndex k = 0; k < users; ++k)
          if (mask & (1ULL << k)) subset.push_back(k);
        if (subset.size() >= 2) subsets.push_back(std::move(subset));
      }
      std::stable_sort(subsets.begin(), subsets.end(), [](const auto& a, const auto& b) {
        return a.size() != b.size() ? a.size() < b.size() : a < b;
      });
      for (auto& s : subsets) add_common(s, s);
      break;
    }
  }

  scheme.phi.assign(users, {});
  scheme.omega.assign(users, {});
  for (UserIndex k = 0; k < users; ++k) {
    std::vector<StreamId> decoded;
    for (const auto& s : scheme.streams) {
      if (!s.is_common()) continue;
      if (std::binary_search(s.decoders.begin(), s.decoders.end(), k)) decoded.push_back(s.id);
      else scheme.omega[k].push_back(s.id);
    }
    scheme.phi[k] = decode_order(topology, scheme.streams, k, std::move(decoded));
  }
  return scheme;
}

}  // namespace rscran
