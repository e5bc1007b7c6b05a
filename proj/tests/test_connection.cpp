#include "doctest.h"
#include "support.hpp"

using namespace peer_sentinel;
using namespace testing_support;

namespace {

std::vector<PacketRecord> concat(std::initializer_list<const ConnBuilder*> builders) {
  std::vector<PacketRecord> out;
  for (const auto* b : builders) out.insert(out.end(), b->records().begin(), b->records().end());
  return out;
}

Grouping group(std::vector<PacketRecord> records) {
  GroupingOptions o;
  o.local_ip = kLocal;
  return group_connections(std::move(records), o);
}

}  // namespace

TEST_CASE("grouping by stream id") {
  ConnBuilder a(ip("45.1.1.1"), 1), b(ip("45.1.1.1"), 2);
  a.handshake(0, Sender::Remote).timed_sync(60, Sender::Remote);
  b.handshake(5, Sender::Local);
  const auto g = group(concat({&a, &b}));
  REQUIRE(g.connections.size() == 2);
  CHECK(g.connections[0].direction == Direction::Incoming);
  CHECK(g.connections[1].direction == Direction::Outgoing);
  CHECK(g.connections[0].handshake_completed);
  CHECK(g.connections[0].complete);
  CHECK(g.connections[0].start_ts == 0.0);
  CHECK(g.connections[0].end_ts == doctest::Approx(60.1));
}

TEST_CASE("grouping by five-tuple splits at silence") {
  auto records = concat({});
  ConnBuilder a(ip("45.1.1.1"), 0);
  a.handshake(0, Sender::Remote).timed_sync(300, Sender::Remote);
  for (auto r : a.records()) {
    r.stream_id.reset();
    records.push_back(r);
  }
  const auto g = group(records);
  CHECK(g.connections.size() == 2);
  CHECK(g.connections[0].id != g.connections[1].id);
}

TEST_CASE("local ip inference") {
  ConnBuilder a(ip("45.1.1.1"), 1), b(ip("45.2.2.2"), 2);
  a.handshake(0, Sender::Remote);
  b.handshake(1, Sender::Local);
  const auto both = concat({&a, &b});
  CHECK(infer_local_ip(both) == kLocal);
  CHECK(group_connections(both).local_ip == kLocal);

  // A single conversation leaves both endpoints as candidates.
  CHECK_THROWS_AS(infer_local_ip(a.records()), AmbiguousLocalIp);
  CHECK_THROWS_AS(infer_local_ip(std::vector<PacketRecord>{}), AmbiguousLocalIp);

  auto stray = both;
  stray.push_back(stray.front());
  stray.back().src_ip = ip("1.1.1.1");
  stray.back().dst_ip = ip("2.2.2.2");
  CHECK_THROWS_AS(infer_local_ip(stray), AmbiguousLocalIp);
  CHECK(group(stray).unassigned_records == 1);
}

TEST_CASE("incomplete connections are dropped") {
  ConnBuilder full(ip("45.1.1.1"), 1), late(ip("45.2.2.2"), 2);
  full.handshake(0, Sender::Remote);
  late.timed_sync(10, Sender::Remote);
  const auto g = group(concat({&full, &late}));
  const auto f = filter_incomplete(g.connections);
  CHECK(f.kept.size() == 1);
  CHECK(f.dropped == 1);
  CHECK(f.kept[0].remote_ip == ip("45.1.1.1"));

  const auto none = filter_incomplete({});
  CHECK(none.kept.empty());
  CHECK(none.dropped == 0);

  ConnBuilder broken(ip("45.3.3.3"), 3);
  broken.handshake(0, Sender::Remote);
  auto records = broken.records();
  records[1].decode_error = "MalformedStorage";
  CHECK(filter_incomplete(group(records).connections).dropped == 1);
}

TEST_CASE("timed sync statistics") {
  ConnBuilder b(ip("45.1.1.1"));
  b.handshake(0, Sender::Remote).timed_sync(10, Sender::Remote).timed_sync(70, Sender::Remote);
  b.timed_sync(130, Sender::Remote).timed_sync(40, Sender::Local);
  const auto s = timed_sync_stats(b.build());
  REQUIRE(s);
  CHECK(s->request_intervals_remote == std::vector<double>{60.0, 60.0});
  CHECK(s->mean_remote_interval == doctest::Approx(60.0));
  CHECK(s->count_remote_requests == 3);

  ConnBuilder two(ip("45.1.1.1"));
  two.handshake(0, Sender::Remote).timed_sync(0.5, Sender::Remote).timed_sync(600.5, Sender::Remote);
  CHECK(timed_sync_stats(two.build())->mean_remote_interval == doctest::Approx(600.0));

  ConnBuilder one(ip("45.1.1.1"));
  one.handshake(0, Sender::Remote).timed_sync(5, Sender::Remote);
  CHECK_FALSE(timed_sync_stats(one.build()));
}

TEST_CASE("command sequence") {
  ConnBuilder b(ip("45.1.1.1"));
  b.handshake(0, Sender::Local);
  const auto seq = command_sequence(b.build());
  REQUIRE(seq.size() == 2);
  CHECK(seq[0] == SequenceStep{levin::command::kHandshake, levin::Kind::Request, Sender::Local});
  CHECK(seq[1] == SequenceStep{levin::command::kHandshake, levin::Kind::Response, Sender::Remote});
  CHECK(command_sequence(Connection{}).empty());
}

TEST_CASE("grouping partitions the records") {
  Rng rng(5);
  std::vector<PacketRecord> records;
  for (int c = 0; c < 40; ++c) {
    ConnBuilder b(Ipv4(45, 0, static_cast<std::uint8_t>(c), 1), static_cast<std::uint64_t>(c + 1));
    const double start = static_cast<double>(rng.below(1000));
    b.handshake(start, rng.coin() ? Sender::Local : Sender::Remote);
    const auto extra = rng.below(6);
    for (std::uint64_t i = 0; i < extra; ++i)
      b.timed_sync(start + 1 + 60.0 * static_cast<double>(i), rng.coin() ? Sender::Local : Sender::Remote);
    records.insert(records.end(), b.records().begin(), b.records().end());
  }
  const auto total = records.size();
  const auto g = group(records);
  std::size_t assigned = 0;
  for (const auto& c : g.connections) {
    assigned += c.messages.size();
    double lo = c.messages.front().record.ts, hi = lo;
    for (const auto& m : c.messages) {
      lo = std::min(lo, m.record.ts);
      hi = std::max(hi, m.record.ts);
      CHECK((m.record.src_ip == c.remote_ip || m.record.dst_ip == c.remote_ip));
    }
    CHECK(c.start_ts == lo);
    CHECK(c.end_ts == hi);
  }
  CHECK(g.connections.size() == 40);
  CHECK(assigned + g.unassigned_records == total);
}
