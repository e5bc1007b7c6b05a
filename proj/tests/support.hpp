// Shared builders and random generators for the test binaries.
#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "peer_sentinel/analysis.hpp"
#include "peer_sentinel/synth.hpp"

namespace testing_support {

using namespace peer_sentinel;
using levin::Kind;
namespace cmd = levin::command;

inline Ipv4 ip(const char* text) { return *Ipv4::parse(text); }

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  std::uint64_t bits() { return engine_(); }
  std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : engine_() % n; }
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  bool coin() { return (engine_() & 1) != 0; }
  Ipv4 address() { return Ipv4(static_cast<std::uint32_t>(1 + below(0xDFFFFFFF))); }

 private:
  std::mt19937_64 engine_;
};

// ---------------------------------------------------------------------------
// Random epee values restricted to what the wire format can carry.

inline std::string random_name(Rng& rng) {
  static const char kAlphabet[] = "abcdefghijklmnopqrstuvwxyz_0123456789";
  std::string s(1 + rng.below(12), 'a');
  for (auto& c : s) c = kAlphabet[rng.below(sizeof kAlphabet - 1)];
  return s;
}

inline std::string random_octets(Rng& rng, std::size_t max_len) {
  std::string s(rng.below(max_len + 1), '\0');
  for (auto& c : s) c = static_cast<char>(rng.below(256));
  return s;
}

inline levin::EpeeValue random_scalar(Rng& rng, levin::EpeeType type) {
  using levin::EpeeType;
  switch (type) {
    case EpeeType::Int64: return static_cast<std::int64_t>(rng.bits());
    case EpeeType::Int32: return static_cast<std::int32_t>(rng.bits());
    case EpeeType::Int16: return static_cast<std::int16_t>(rng.bits());
    case EpeeType::Int8: return static_cast<std::int8_t>(rng.bits());
    case EpeeType::UInt64: return rng.bits();
    case EpeeType::UInt32: return static_cast<std::uint32_t>(rng.bits());
    case EpeeType::UInt16: return static_cast<std::uint16_t>(rng.bits());
    case EpeeType::UInt8: return static_cast<std::uint8_t>(rng.bits());
    case EpeeType::Double: return static_cast<double>(static_cast<std::int64_t>(rng.bits() >> 12)) / 1024.0;
    case EpeeType::String: return levin::epee_string(random_octets(rng, 40));
    case EpeeType::Bool: return rng.coin();
    default: return std::uint8_t{0};
  }
}

levin::EpeeSection random_section(Rng& rng, int depth);

inline levin::EpeeValue random_value(Rng& rng, int depth) {
  using levin::EpeeType;
  const auto pick = rng.below(depth > 0 ? 13 : 11);
  if (pick < 11) return random_scalar(rng, static_cast<EpeeType>(pick + 1));
  if (pick == 11) return random_section(rng, depth - 1);
  levin::EpeeArray arr;
  const auto element = rng.below(depth > 1 ? 12 : 11);
  arr.element = static_cast<EpeeType>(element + 1);
  const auto n = rng.below(5);
  for (std::size_t i = 0; i < n; ++i) {
    if (arr.element == EpeeType::Section) {
      arr.items.emplace_back(random_section(rng, depth - 1));
    } else {
      arr.items.push_back(random_scalar(rng, arr.element));
    }
  }
  return arr;
}

inline levin::EpeeSection random_section(Rng& rng, int depth) {
  levin::EpeeSection s;
  std::set<std::string> used;
  const auto n = rng.below(6);
  for (std::size_t i = 0; i < n; ++i) {
    auto name = random_name(rng);
    if (!used.insert(name).second) continue;
    s.entries.emplace_back(std::move(name), random_value(rng, depth));
  }
  return s;
}

inline levin::LevinFrame random_frame(Rng& rng) {
  levin::LevinFrame f;
  f.payload.resize(rng.below(64));
  for (auto& b : f.payload) b = static_cast<std::uint8_t>(rng.bits());
  f.payload_size = f.payload.size();
  f.expect_response = rng.coin();
  f.command = static_cast<levin::CommandCode>(rng.bits());
  f.return_code = static_cast<std::int32_t>(rng.bits());
  f.flags = rng.coin() ? levin::kPacketRequest : levin::kPacketResponse;
  f.protocol_version = static_cast<std::uint32_t>(rng.bits());
  return f;
}

// ---------------------------------------------------------------------------
// Record and connection builders. The local endpoint is 10.0.0.1:18080.

inline const Ipv4 kLocal = Ipv4(10, 0, 0, 1);

inline Json sync_fields() {
  return Json{{"payload_data.current_height", 3300000u},
              {"payload_data.cumulative_difficulty", 1000u},
              {"payload_data.top_id", "hex:00"},
              {"payload_data.top_version", 16u}};
}

inline Json node_fields(std::uint64_t peer_id, bool support_flags = true) {
  Json j = sync_fields();
  j["node_data.network_id"] = "hex:1230f171";
  j["node_data.my_port"] = 18080u;
  j["node_data.peer_id"] = peer_id;
  if (support_flags) j["node_data.support_flags"] = 1u;
  return j;
}

inline Json list_json(const std::vector<Ipv4>& ips, std::optional<std::int64_t> last_seen = std::nullopt) {
  Json arr = Json::array();
  std::uint64_t id = 1;
  for (const auto& a : ips) {
    Json e{{"ip", a.to_string()}, {"port", 18080}, {"peer_id", id++}};
    if (last_seen) e["last_seen"] = *last_seen;
    arr.push_back(std::move(e));
  }
  return arr;
}

/// Accumulates the messages of one connection with a remote peer.
class ConnBuilder {
 public:
  explicit ConnBuilder(Ipv4 remote, std::uint64_t stream = 1, std::uint16_t remote_port = 40000)
      : remote_(remote), stream_(stream), remote_port_(remote_port) {}

  ConnBuilder& add(double ts, Sender sender, levin::CommandCode command, Kind kind, Json fields = Json::object()) {
    PacketRecord r;
    r.ts = ts;
    const bool local = sender == Sender::Local;
    r.src_ip = local ? kLocal : remote_;
    r.src_port = local ? 18080 : remote_port_;
    r.dst_ip = local ? remote_ : kLocal;
    r.dst_port = local ? remote_port_ : 18080;
    r.stream_id = stream_;
    r.command = command;
    r.kind = kind;
    r.fields = std::move(fields);
    records_.push_back(std::move(r));
    return *this;
  }

  /// Handshake initiated by `initiator`, answered 0.1 s later.
  ConnBuilder& handshake(double ts, Sender initiator, std::uint64_t remote_id = 7, bool support_flags = true) {
    const Sender other = initiator == Sender::Local ? Sender::Remote : Sender::Local;
    auto fields_for = [&](Sender s) { return s == Sender::Remote ? node_fields(remote_id, support_flags) : node_fields(99); };
    add(ts, initiator, cmd::kHandshake, Kind::Request, fields_for(initiator));
    Json res = fields_for(other);
    res[kPeerListPath] = Json::array();
    return add(ts + 0.1, other, cmd::kHandshake, Kind::Response, std::move(res));
  }

  ConnBuilder& timed_sync(double ts, Sender requester) {
    const Sender other = requester == Sender::Local ? Sender::Remote : Sender::Local;
    add(ts, requester, cmd::kTimedSync, Kind::Request, sync_fields());
    Json res = sync_fields();
    res[kPeerListPath] = Json::array();
    return add(ts + 0.1, other, cmd::kTimedSync, Kind::Response, std::move(res));
  }

  ConnBuilder& ping(double ts, Sender requester, std::uint64_t pong_id = 7) {
    const Sender other = requester == Sender::Local ? Sender::Remote : Sender::Local;
    add(ts, requester, cmd::kPing, Kind::Request);
    return add(ts + 0.05, other, cmd::kPing, Kind::Response, Json{{"status", "OK"}, {"peer_id", pong_id}});
  }

  const std::vector<PacketRecord>& records() const { return records_; }

  Connection build() const {
    GroupingOptions o;
    o.local_ip = kLocal;
    auto g = group_connections(records_, o);
    return g.connections.at(0);
  }

 private:
  Ipv4 remote_;
  std::uint64_t stream_;
  std::uint16_t remote_port_;
  std::vector<PacketRecord> records_;
};

inline PeerList make_list(Ipv4 source, const std::vector<Ipv4>& ips, double ts = 0.0) {
  PeerList l;
  l.source_ip = source;
  l.ts = ts;
  l.carrier = ListCarrier::TimedSyncResponse;
  for (const auto& a : ips) {
    PeerListEntry e;
    e.address = a.to_string();
    e.ip = a;
    e.port = 18080;
    l.entries.push_back(e);
  }
  return l;
}

/// `n` addresses spread round-robin over `subnets` consecutive /24s starting at base.
inline std::vector<Ipv4> spread(std::size_t n, std::size_t subnets, Ipv4 base = Ipv4(20, 0, 0, 0)) {
  std::vector<Ipv4> out;
  for (std::size_t i = 0; i < n; ++i) {
    const auto subnet = static_cast<std::uint32_t>(i % subnets);
    const auto host = static_cast<std::uint32_t>(1 + i / subnets);
    out.emplace_back(base.value() + (subnet << 8) + host);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Detector boundary fixtures.

/// Full list of 250 entries spread round-robin over the /24s 30.<s>.0.0 for s in `subnets`.
inline PeerList list_over(Ipv4 source, const std::vector<int>& subnets) {
  std::vector<Ipv4> ips;
  for (std::size_t i = 0; i < kFullPeerList; ++i) {
    const int s = subnets[i % subnets.size()];
    ips.emplace_back(30, static_cast<std::uint8_t>(s >> 8), static_cast<std::uint8_t>(s & 0xFF),
                     static_cast<std::uint8_t>(1 + i / subnets.size()));
  }
  return make_list(source, ips);
}

inline std::vector<int> range(int lo, int hi) {
  std::vector<int> v;
  for (int i = lo; i < hi; ++i) v.push_back(i);
  return v;
}

inline std::vector<Connection> short_lived(Ipv4 remote, int n) {
  std::vector<Connection> out;
  for (int i = 0; i < n; ++i) {
    ConnBuilder b(remote, static_cast<std::uint64_t>(i + 1));
    b.handshake(10.0 * i, Sender::Remote);
    out.push_back(b.build());
  }
  return out;
}

inline Connection throttled(double period) {
  ConnBuilder b(ip("45.8.8.8"));
  b.handshake(0, Sender::Remote);
  for (int i = 0; i < 9; ++i) b.timed_sync(10.0 + period * i, Sender::Remote);
  b.timed_sync(650, Sender::Local);
  return b.build();
}

inline Connection ping_burst(int pings, double gap) {
  ConnBuilder b(ip("45.9.9.9"));
  b.handshake(0, Sender::Remote);
  for (int i = 0; i < pings; ++i) b.ping(1.0 + gap * i, Sender::Remote);
  return b.build();
}

// ---------------------------------------------------------------------------
// Scenarios used by several tests.

inline synth::Scenario twelve_peer_scenario(std::uint64_t seed = 20250301) {
  using synth::Behavior;
  synth::Scenario s;
  s.seed = seed;
  s.duration = 1300.0;
  s.local_ip = ip("192.0.2.1");
  auto add = [&s](const char* a, Behavior b, Direction d = Direction::Incoming, std::vector<Ipv4> comp = {}) {
    s.peers.push_back({ip(a), b, d, std::move(comp)});
  };
  add("45.10.1.10", Behavior::Standard);
  add("45.10.2.10", Behavior::SupportFlagsOmitter);
  add("45.10.3.10", Behavior::LastSeenSender, Direction::Outgoing);
  add("45.10.4.10", Behavior::SigOnlyFragmenter);
  add("45.10.5.10", Behavior::LowDiversityPromoter, Direction::Outgoing);
  add("45.10.6.10", Behavior::ListCloner, Direction::Incoming, {ip("45.10.6.11")});
  add("45.10.7.10", Behavior::ShortLivedFlooder);
  add("45.10.8.10", Behavior::Throttler);
  add("45.10.9.10", Behavior::PingFlooder);
  add("45.10.10.10", Behavior::IdFlipper);
  add("45.10.11.10", Behavior::IdClusterMember, Direction::Incoming, {ip("45.10.11.20")});
  add("45.10.12.10", Behavior::SaturatedSubnet);
  return s;
}

inline synth::Scenario standard_scenario(std::size_t peers, std::uint64_t seed, double duration = 1300.0) {
  synth::Scenario s;
  s.seed = seed;
  s.duration = duration;
  s.local_ip = ip("192.0.2.1");
  for (std::size_t i = 0; i < peers; ++i) {
    synth::PeerSpec p;
    p.ip = Ipv4(static_cast<std::uint32_t>(Ipv4(51, 0, 0, 10).value() + (i << 8)));
    p.direction = i % 3 == 0 ? Direction::Outgoing : Direction::Incoming;
    s.peers.push_back(p);
  }
  return s;
}

inline std::set<synth::Label> finding_labels(const std::vector<AnomalyFinding>& findings) {
  std::set<synth::Label> out;
  for (const auto& f : findings) out.emplace(f.ip, f.category);
  return out;
}

}  // namespace testing_support
