#include "doctest.h"
#include "oracles.hpp"
#include "support.hpp"

using namespace peer_sentinel;
using namespace testing_support;

namespace {

IdObservation obs(double ts, const char* a, std::uint64_t id, IdSource s = IdSource::Handshake) {
  return {ts, ip(a), id, s};
}

}  // namespace

TEST_CASE("temporal identifier anomaly") {
  SUBCASE("A B A is flagged") {
    const std::vector<IdObservation> o{obs(0, "1.1.1.1", 0xA), obs(10, "1.1.1.1", 0xB), obs(20, "1.1.1.1", 0xA)};
    const auto f = detect_temporal_id_anomaly(o);
    REQUIRE(f.size() == 1);
    CHECK(f[0].category == Category::PeerIdTemporal);
    CHECK(f[0].evidence["revisited_id"] == format_peer_id(0xA));
  }
  SUBCASE("A A B is not") {
    const std::vector<IdObservation> o{obs(0, "1.1.1.1", 0xA), obs(10, "1.1.1.1", 0xA), obs(20, "1.1.1.1", 0xB)};
    CHECK(detect_temporal_id_anomaly(o).empty());
  }
  SUBCASE("order matters") {
    const std::vector<IdObservation> aba{obs(0, "1.1.1.1", 1), obs(1, "1.1.1.1", 2), obs(2, "1.1.1.1", 1)};
    const std::vector<IdObservation> aab{obs(0, "1.1.1.1", 1), obs(1, "1.1.1.1", 1), obs(2, "1.1.1.1", 2)};
    CHECK(detect_temporal_id_anomaly(aba).size() == 1);
    CHECK(detect_temporal_id_anomaly(aab).empty());
  }
  SUBCASE("single observation and empty input") {
    CHECK(detect_temporal_id_anomaly(std::vector<IdObservation>{obs(0, "1.1.1.1", 1)}).empty());
    CHECK(detect_temporal_id_anomaly({}).empty());
  }
}

TEST_CASE("identifier clusters") {
  SUBCASE("two ips sharing two ids") {
    const std::vector<IdObservation> o{obs(0, "1.1.1.1", 1), obs(1, "1.1.1.1", 2), obs(2, "2.2.2.2", 1)};
    const auto c = build_id_clusters(o);
    REQUIRE(c.size() == 1);
    CHECK(c[0].ips == std::set<Ipv4>{ip("1.1.1.1"), ip("2.2.2.2")});
    CHECK(c[0].ids == std::set<std::uint64_t>{1, 2});
    CHECK(c[0].edge_count == 3);
    const auto f = cluster_findings(c, o);
    CHECK(f.size() == 2);
  }
  SUBCASE("one id shared by two ips is not a cluster") {
    const std::vector<IdObservation> o{obs(0, "1.1.1.1", 1), obs(2, "2.2.2.2", 1)};
    CHECK(build_id_clusters(o).empty());
  }
  SUBCASE("matches connected components computed by relaxation") {
    Rng rng(11);
    for (int round = 0; round < 50; ++round) {
      std::vector<IdObservation> o;
      std::vector<std::pair<std::uint32_t, std::uint64_t>> edges;
      const auto n = 1 + rng.below(40);
      for (std::uint64_t i = 0; i < n; ++i) {
        const auto a = Ipv4(45, 0, 0, static_cast<std::uint8_t>(1 + rng.below(15)));
        const auto id = 1 + rng.below(15);
        o.push_back({static_cast<double>(i), a, id, IdSource::Handshake});
        edges.emplace_back(a.value(), id);
      }
      const auto got = build_id_clusters(o);
      const auto want = oracle::id_components(edges);
      REQUIRE(got.size() == want.size());
      std::set<std::pair<std::set<std::uint32_t>, std::set<std::uint64_t>>> g, w;
      for (const auto& c : got) {
        std::set<std::uint32_t> ips;
        for (const auto& a : c.ips) ips.insert(a.value());
        g.emplace(ips, c.ids);
      }
      for (const auto& c : want) w.emplace(c.ips, c.ids);
      CHECK(g == w);
    }
  }
}

TEST_CASE("identifier collection") {
  ConnBuilder b(ip("45.10.0.1"));
  b.handshake(0, Sender::Remote, 0xAA).ping(5, Sender::Local, 0xBB);
  const std::vector<Connection> conns{b.build()};
  auto list = make_list(ip("45.10.0.1"), {ip("45.20.0.1")});
  list.entries[0].peer_id = 0xCC;
  const std::vector<PeerList> lists{list};
  const auto all = collect_id_observations(conns, lists);
  REQUIRE(all.size() == 3);
  CHECK(all[0].source == IdSource::Handshake);
  CHECK(all[0].peer_id == 0xAA);
  CHECK(all[1].source == IdSource::PeerListEntry);
  CHECK(all[1].ip == ip("45.20.0.1"));
  CHECK(all[2].source == IdSource::Pong);
  CHECK(flagging_observations(all, false).size() == 2);
  CHECK(flagging_observations(all, true).size() == 3);
  CHECK(format_peer_id(0xAA) == "00000000000000aa");
}

TEST_CASE("identifier multiplicity") {
  CHECK_FALSE(id_multiplicity_stats({}));
  const std::vector<IdObservation> o{obs(0, "1.1.1.1", 1), obs(1, "1.1.1.1", 2), obs(2, "2.2.2.2", 3),
                                     obs(3, "3.3.3.3", 4)};
  const auto m = id_multiplicity_stats(o);
  REQUIRE(m);
  CHECK(m->fraction_single_id == doctest::Approx(2.0 / 3.0));
  CHECK(m->histogram.at(1) == 2);
  CHECK(m->histogram.at(2) == 1);
}
