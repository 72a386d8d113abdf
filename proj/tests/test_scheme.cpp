#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <stdexcept>

#include "rscran/scheme.hpp"

using namespace rscran;

namespace {

NetworkTopology users_at(const std::vector<Point>& users) {
  NetworkTopology t;
  t.bs_positions = {{0.0, 0.0}};
  t.user_positions = users;
  t.p_max_w = {0.1};
  t.fronthaul_bps = {1e8};
  return t;
}

NetworkTopology spread_users(int k, double spacing_km = 1.0) {
  std::vector<Point> u;
  for (int i = 0; i < k; ++i) u.push_back({spacing_km * i, 0.0});
  return users_at(u);
}

}  // namespace

TEST(SchemeCatalogue, StreamCountsForAllKindsUpToEightUsers) {
  for (int k = 1; k <= 8; ++k) {
    const auto topo = spread_users(k);
    for (SchemeKind kind : kAllSchemeKinds) {
      const auto s = build_scheme(kind, topo);
      EXPECT_EQ(s.num_streams(), expected_stream_count(kind, k)) << to_string(kind) << " K=" << k;
    }
    EXPECT_EQ(build_scheme(SchemeKind::tin, topo).num_streams(), k);
    EXPECT_EQ(build_scheme(SchemeKind::rs_cmd, topo).num_streams(), 2 * k);
    EXPECT_EQ(build_scheme(SchemeKind::rs1, topo).num_streams(), k * (k + 1) / 2);
    EXPECT_EQ(build_scheme(SchemeKind::rs2, topo).num_streams(), k + 1);
    EXPECT_EQ(build_scheme(SchemeKind::generalized_rs, topo).num_streams(), (1 << k) - 1);
  }
}

TEST(SchemeCatalogue, GeneralizedRsAtFourUsers) {
  const auto s = build_scheme(SchemeKind::generalized_rs, spread_users(4));
  EXPECT_EQ(s.num_streams(), 15);
  EXPECT_EQ(s.num_common(), 11);
  std::set<std::vector<UserIndex>> owner_sets;
  for (const auto& st : s.streams) owner_sets.insert(st.owners);
  EXPECT_EQ(owner_sets.size(), 15u);
}

TEST(SchemeCatalogue, GeneralizedRsRefusesAboveCap) {
  EXPECT_THROW(build_scheme(SchemeKind::generalized_rs, spread_users(9)), std::invalid_argument);
  EXPECT_THROW(build_scheme(SchemeKind::generalized_rs, spread_users(5), 100.0, 4), std::invalid_argument);
  try {
    build_scheme(SchemeKind::generalized_rs, spread_users(9));
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("exponential"), std::string::npos);
  }
}

TEST(SchemeCatalogue, RejectsNegativeDelta) {
  EXPECT_THROW(build_scheme(SchemeKind::rs_cmd, spread_users(2), -1.0), std::invalid_argument);
}

TEST(SchemeCatalogue, ParseRoundTrip) {
  for (SchemeKind kind : kAllSchemeKinds) EXPECT_EQ(parse_scheme_kind(to_string(kind)), kind);
  EXPECT_THROW(parse_scheme_kind("NOMA"), std::invalid_argument);
}

TEST(SchemeStructure, TinSingleUserHasNoCommonStreams) {
  const auto s = build_scheme(SchemeKind::tin, spread_users(1));
  EXPECT_EQ(s.num_streams(), 1);
  EXPECT_TRUE(s.phi[0].empty());
  EXPECT_TRUE(s.omega[0].empty());
}

TEST(SchemeStructure, PrivateStreamsComeFirst) {
  for (SchemeKind kind : kAllSchemeKinds) {
    const auto s = build_scheme(kind, spread_users(4));
    for (UserIndex k = 0; k < 4; ++k) {
      const auto& st = s.streams[s.private_stream(k)];
      EXPECT_FALSE(st.is_common());
      EXPECT_EQ(st.owners, std::vector<UserIndex>{k});
      EXPECT_EQ(st.decoders, std::vector<UserIndex>{k});
    }
    for (StreamId id = 0; id < s.num_streams(); ++id) EXPECT_EQ(s.streams[id].id, id);
  }
}

TEST(SchemeStructure, PhiAndOmegaPartitionCommonStreams) {
  const auto topo = users_at({{0.0, 0.0}, {0.05, 0.0}, {0.12, 0.0}, {1.0, 1.0}, {1.02, 1.0}});
  for (SchemeKind kind : kAllSchemeKinds) {
    const auto s = build_scheme(kind, topo);
    for (UserIndex k = 0; k < s.num_users; ++k) {
      std::vector<StreamId> all(s.phi[k]);
      all.insert(all.end(), s.omega[k].begin(), s.omega[k].end());
      std::sort(all.begin(), all.end());
      std::vector<StreamId> common;
      for (const auto& st : s.streams)
        if (st.is_common()) common.push_back(st.id);
      EXPECT_EQ(all, common);
      for (const auto& st : s.streams) {
        const bool decodes = std::binary_search(st.decoders.begin(), st.decoders.end(), k);
        if (st.is_common()) {
          EXPECT_EQ(decodes, s.decode_position(k, st.id) >= 0);
        }
      }
    }
  }
}

TEST(RsCmd, CommonSetsFollowDistanceThreshold) {
  // users 0 and 1 are 50 m apart, user 2 is 120 m from user 0 and 70 m from user 1
  const auto topo = users_at({{0.0, 0.0}, {0.05, 0.0}, {0.12, 0.0}});
  const auto s = build_scheme(SchemeKind::rs_cmd, topo, 100.0);
  EXPECT_EQ(s.streams[3].decoders, (std::vector<UserIndex>{0, 1}));
  EXPECT_EQ(s.streams[4].decoders, (std::vector<UserIndex>{0, 1, 2}));
  EXPECT_EQ(s.streams[5].decoders, (std::vector<UserIndex>{1, 2}));
  for (UserIndex k = 0; k < 3; ++k) EXPECT_EQ(s.streams[3 + k].owners, std::vector<UserIndex>{k});
  EXPECT_EQ(s.num_decoding_pairs(), 3 + 2 + 3 + 2);
}

TEST(RsCmd, ExtremeDeltas) {
  const auto topo = users_at({{0.0, 0.0}, {0.5, 0.0}, {0.0, 0.7}, {0.3, 0.3}});
  const auto wide = build_scheme(SchemeKind::rs_cmd, topo, 1e9);
  const auto none = build_scheme(SchemeKind::rs_cmd, topo, 0.0);
  for (UserIndex k = 0; k < 4; ++k) {
    EXPECT_EQ(wide.streams[4 + k].decoders.size(), 4u);
    EXPECT_EQ(none.streams[4 + k].decoders, std::vector<UserIndex>{k});
    EXPECT_EQ(none.phi[k], std::vector<StreamId>{4 + k});
  }
}

TEST(DecodeOrder, OwnStreamThenNearestNeighbours) {
  // neighbours of user 0 at 80 m (user 1) and 30 m (user 2)
  const auto topo = users_at({{0.0, 0.0}, {0.08, 0.0}, {0.0, 0.03}});
  const auto s = build_scheme(SchemeKind::rs_cmd, topo, 100.0);
  EXPECT_EQ(s.phi[0], (std::vector<StreamId>{3, 5, 4}));
}

TEST(DecodeOrder, SingleUserRsCmd) {
  const auto s = build_scheme(SchemeKind::rs_cmd, spread_users(1));
  EXPECT_EQ(s.phi[0], std::vector<StreamId>{1});
}

TEST(DecodeOrder, EquidistantTieGoesToLowerIndex) {
  const auto topo = users_at({{0.0, 0.0}, {0.05, 0.0}, {-0.05, 0.0}});
  const auto s = build_scheme(SchemeKind::rs_cmd, topo, 100.0);
  EXPECT_EQ(s.phi[0], (std::vector<StreamId>{3, 4, 5}));
}

TEST(DecodeOrder, LargerOwnerSetsFirstForLayeredSchemes) {
  const auto topo = users_at({{0.0, 0.0}, {0.3, 0.0}, {0.1, 0.0}});
  const auto s = build_scheme(SchemeKind::generalized_rs, topo);
  // common streams: {0,1}=3, {0,2}=4, {1,2}=5, {0,1,2}=6
  EXPECT_EQ(s.phi[0], (std::vector<StreamId>{6, 3, 4}));
  EXPECT_EQ(s.phi[1], (std::vector<StreamId>{6, 3, 5}));
  // user 2: {0,2} and {1,2} both contain user 2 (distance 0); lexicographic tie-break
  EXPECT_EQ(s.phi[2], (std::vector<StreamId>{6, 4, 5}));
}

TEST(DecodeOrder, Rs2BroadcastDecodedByAll) {
  const auto s = build_scheme(SchemeKind::rs2, spread_users(3));
  ASSERT_EQ(s.num_common(), 1);
  for (UserIndex k = 0; k < 3; ++k) EXPECT_EQ(s.phi[k], std::vector<StreamId>{3});
  EXPECT_EQ(s.streams[3].decoders, (std::vector<UserIndex>{0, 1, 2}));
}

TEST(InterferencePartition, PositionsSplitCancelledAndResidual) {
  const auto topo = users_at({{0.0, 0.0}, {0.08, 0.0}, {0.0, 0.03}});
  const auto s = build_scheme(SchemeKind::rs_cmd, topo, 100.0);
  // user 0 order: 3, 5, 4
  auto first = interference_partition(s, 0, 3);
  EXPECT_TRUE(first.cancelled.empty());
  EXPECT_EQ(first.residual, (std::vector<StreamId>{5, 4}));
  auto mid = interference_partition(s, 0, 5);
  EXPECT_EQ(mid.cancelled, std::vector<StreamId>{3});
  EXPECT_EQ(mid.residual, std::vector<StreamId>{4});
  auto last = interference_partition(s, 0, 4);
  EXPECT_EQ(last.cancelled, (std::vector<StreamId>{3, 5}));
  EXPECT_TRUE(last.residual.empty());
  EXPECT_THROW(interference_partition(s, 0, 0), std::invalid_argument);
}

TEST(InterferencePartition, PartitionCoversPhiMinusStream) {
  const auto topo = users_at({{0.0, 0.0}, {0.04, 0.0}, {0.0, 0.06}, {0.05, 0.05}});
  for (SchemeKind kind : {SchemeKind::rs_cmd, SchemeKind::rs1, SchemeKind::generalized_rs}) {
    const auto s = build_scheme(kind, topo);
    for (UserIndex k = 0; k < 4; ++k)
      for (StreamId i : s.phi[k]) {
        const auto p = interference_partition(s, k, i);
        EXPECT_EQ(p.cancelled.size() + p.residual.size() + 1, s.phi[k].size());
        EXPECT_EQ(s.cancelled_before(k, i), p.cancelled);
      }
  }
}

TEST(InterferencePartition, PrivateStreamSeesAllDecodedCommonsCancelled) {
  const auto topo = users_at({{0.0, 0.0}, {0.04, 0.0}});
  const auto s = build_scheme(SchemeKind::rs_cmd, topo);
  EXPECT_EQ(s.cancelled_before(0, 0), s.phi[0]);
  EXPECT_THROW(s.cancelled_before(0, 1), std::invalid_argument);
}
