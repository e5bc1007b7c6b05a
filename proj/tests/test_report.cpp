#include <cmath>
#include <sstream>

#include "doctest.h"
#include "oracles.hpp"
#include "support.hpp"

using namespace peer_sentinel;
using namespace testing_support;

namespace {

BanList parse(const std::string& text) {
  std::istringstream in(text);
  return parse_banlist(in);
}

Connection conn(const char* remote, std::uint64_t stream, double start, double end, Sender initiator) {
  ConnBuilder b(ip(remote), stream);
  b.handshake(start, initiator);
  b.ping(end - 0.05, Sender::Local);
  return b.build();
}

}  // namespace

TEST_CASE("ban list arithmetic") {
  SUBCASE("three singles and one /24") {
    const auto l = parse("1.1.1.1\n2.2.2.2\n3.3.3.3\n10.0.0.0/24\n");
    CHECK(l.expanded_size() == 3 + 254);
    CHECK(l.expand().size() == 257);
  }
  SUBCASE("covered single collapses") {
    const auto l = parse("10.0.0.5\n10.0.0.0/24\n");
    CHECK(l.ips.empty());
    CHECK(l.expanded_size() == 254);
  }
  SUBCASE("417 singles plus six /24s") {
    std::string text;
    for (int i = 0; i < 417; ++i) text += "80." + std::to_string(i / 200) + "." + std::to_string(i % 200) + ".1\n";
    for (int i = 0; i < 6; ++i) text += "90.0." + std::to_string(i) + ".0/24\n";
    const auto l = parse(text);
    CHECK(l.ips.size() == 417);
    CHECK(l.subnets.size() == 6);
    CHECK(l.expanded_size() == 1941);
  }
  SUBCASE("network and broadcast addresses are outside the expansion") {
    const auto l = parse("10.0.0.0/24\n");
    CHECK_FALSE(l.covers(ip("10.0.0.0")));
    CHECK_FALSE(l.covers(ip("10.0.0.255")));
    CHECK(l.covers(ip("10.0.0.254")));
  }
  SUBCASE("empty list") {
    const auto l = parse("");
    CHECK(l.expanded_size() == 0);
    CHECK(render_banlist(l).empty());
  }
}

TEST_CASE("ban list parsing") {
  const auto l = parse("# comment\n\n1.2.3.4/32  # trailing\n5.6.7.0/24\n");
  CHECK(l.ips == std::set<Ipv4>{ip("1.2.3.4")});
  CHECK(render_banlist(l) == "1.2.3.4\n5.6.7.0/24\n");
  CHECK(parse(render_banlist(l)) == l);

  try {
    parse("1.1.1.1\n2.2.2.2\n10.0.0.0/23\n");
    FAIL("no error");
  } catch (const BanListParseError& e) {
    CHECK(e.line() == 3);
  }
  CHECK_THROWS_AS(parse("not-an-ip\n"), BanListParseError);
  CHECK_THROWS_AS(parse("10.0.0.7/24\n"), BanListParseError);
}

TEST_CASE("ban list diff") {
  const auto a = parse("10.0.0.0/24\n");
  const auto b = parse("10.0.0.5\n");
  const auto d = expand_and_diff(a, b);
  CHECK(d.only_a.size() == 253);
  CHECK(d.only_b.empty());
  CHECK(d.both == std::set<Ipv4>{ip("10.0.0.5")});
  CHECK(d.expanded_a == 254);
  CHECK(d.expanded_b == 1);
}

TEST_CASE("profiles, overlap and ban-list emission") {
  std::vector<AnomalyFinding> findings(3);
  findings[0].ip = ip("45.0.0.1");
  findings[0].category = Category::PingFlooding;
  findings[1].ip = ip("45.0.0.1");
  findings[1].category = Category::SequenceViolation;
  findings[2].ip = ip("45.0.0.2");
  findings[2].category = Category::PingFlooding;
  const std::vector<Connection> conns{conn("45.0.0.1", 1, 0, 100, Sender::Remote),
                                      conn("45.0.0.3", 2, 0, 50, Sender::Local)};
  const std::vector<PeerList> lists{make_list(ip("45.0.0.3"), {ip("45.0.0.4")})};
  const auto profiles = build_profiles(findings, conns, {}, lists);
  REQUIRE(profiles.size() == 4);
  CHECK(profiles[0].categories.size() == 2);
  CHECK(profiles[0].incoming == 1);
  CHECK(profiles[0].max_duration == doctest::Approx(100.0));
  CHECK(profiles[3].promoted);
  CHECK_FALSE(profiles[3].connected);
  CHECK(*flagged_fraction(profiles) == doctest::Approx(0.5));
  CHECK(flagged_set(profiles) == std::set<Ipv4>{ip("45.0.0.1"), ip("45.0.0.2")});
  CHECK_FALSE(flagged_fraction({}));
  CHECK(profile_to_json(profiles[0])["flagged"] == true);

  const auto external = parse("45.0.0.0/24\n");
  const auto m = overlap_matrix(profiles, &external);
  REQUIRE(m.labels.size() == kCategoryCount + 1);
  const auto ping = static_cast<std::size_t>(Category::PingFlooding);
  const auto seq = static_cast<std::size_t>(Category::SequenceViolation);
  CHECK(m.ips[ping][ping] == 2);
  CHECK(m.ips[ping][seq] == 1);
  CHECK(m.ips[seq][ping] == 1);
  CHECK(m.ips.back().back() == 4);

  const auto banlist = emit_banlist(profiles, {});
  CHECK(render_banlist(banlist) == "45.0.0.1\n45.0.0.2\n");
}

TEST_CASE("exposure timeline") {
  const std::vector<Connection> conns{conn("45.0.0.1", 1, 0, 300, Sender::Remote),
                                      conn("45.0.0.2", 2, 0, 300, Sender::Remote),
                                      conn("45.0.0.3", 3, 120, 300, Sender::Remote),
                                      conn("45.0.0.4", 4, 0, 300, Sender::Local)};
  const std::set<Ipv4> flagged{ip("45.0.0.1"), ip("45.0.0.4")};
  const auto t = exposure_timeline(conns, flagged, 60.0);
  REQUIRE(t.points.size() == 6);
  CHECK(*t.points[0].incoming == doctest::Approx(0.5));
  CHECK(*t.points[2].incoming == doctest::Approx(1.0 / 3.0));
  CHECK(*t.points[0].outgoing == 1.0);

  const auto want = oracle::incoming_exposure(conns, flagged, 60.0);
  REQUIRE(want.size() == t.points.size());
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(*t.points[i].incoming == doctest::Approx(want[i]));

  CHECK(exposure_timeline({}, flagged).points.empty());
  CHECK_THROWS(exposure_timeline(conns, flagged, 0.0));
}

TEST_CASE("peer-list exposure") {
  auto full = make_list(ip("45.0.0.9"), spread(250, 100));
  std::set<Ipv4> flagged;
  for (std::size_t i = 0; i < 50; ++i) flagged.insert(*full.entries[i].ip);
  const std::vector<PeerList> lists{full, make_list(ip("45.0.0.8"), spread(10, 2))};
  const auto e = peer_list_exposure(lists, flagged);
  REQUIRE(e);
  REQUIRE(e->lists.size() == 1);
  CHECK(e->mean == doctest::Approx(0.2));
  CHECK(e->min == doctest::Approx(0.2));
  CHECK_FALSE(peer_list_exposure(std::vector<PeerList>{lists[1]}, flagged));
}
