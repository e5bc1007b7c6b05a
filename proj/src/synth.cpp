#include "peer_sentinel/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <istream>
#include <map>
#include <random>
#include <sstream>

namespace peer_sentinel::synth {

namespace {

using levin::EpeeArray;
using levin::EpeeSection;
using levin::EpeeType;
using levin::EpeeValue;
using levin::Kind;
using levin::ParsedMessage;
namespace cmd = levin::command;

constexpr std::array<std::string_view, 12> kBehaviorNames = {
    "standard",        "support-flags-omitter", "last-seen-sender", "sig-only-fragmenter",
    "low-diversity-promoter", "list-cloner",    "short-lived-flooder", "throttler",
    "ping-flooder",    "id-flipper",            "id-cluster-member", "saturated-subnet",
};

constexpr std::uint16_t kP2pPort = 18080;
constexpr std::uint32_t kMtuPayload = 1448;
constexpr std::size_t kLocalListSize = 16;
constexpr std::size_t kSaturatedSiblings = 120;
constexpr std::size_t kLowDiversitySubnets = 7;
constexpr std::size_t kShortLivedConnections = 15;
constexpr std::size_t kFloodPings = 50;
constexpr double kFloodPingGap = 2.0;
constexpr double kThrottledPeriod = 600.0;
constexpr double kTimedSyncPeriod = 60.0;
constexpr double kMinAnomalyDuration = 180.0;
constexpr double kMinThrottlerDuration = 700.0;
constexpr double kMinFlipperDuration = 300.0;
constexpr std::uint64_t kBaseHeight = 3'300'000;

// Main-net network id.
constexpr std::array<std::uint8_t, 16> kNetworkId = {0x12, 0x30, 0xF1, 0x71, 0x61, 0x04, 0x41, 0x61,
                                                     0x17, 0x31, 0x00, 0x82, 0x16, 0xA1, 0xA1, 0x10};

/// mt19937_64 with hand-written draws so output does not depend on the
/// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t bits() { return engine_(); }
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t v;
    do v = engine_();
    while (v >= limit);
    return v % n;
  }
  std::uint64_t nonzero() {
    std::uint64_t v;
    do v = engine_();
    while (v == 0);
    return v;
  }
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
  }

 private:
  std::mt19937_64 engine_;
};

double micro(double t) { return std::round(t * 1e6) / 1e6; }

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

bool has_companions(Behavior b) { return b == Behavior::ListCloner || b == Behavior::IdClusterMember; }

std::optional<Category> label_of(Behavior b) {
  switch (b) {
    case Behavior::Standard: return std::nullopt;
    case Behavior::SupportFlagsOmitter: return Category::SupportFlagsOmission;
    case Behavior::LastSeenSender: return Category::DeprecatedLastSeen;
    case Behavior::SigOnlyFragmenter: return Category::SignatureOnlyFragment;
    case Behavior::LowDiversityPromoter: return Category::LowDiversityPeerList;
    case Behavior::ListCloner: return Category::HighSimilarityPeerList;
    case Behavior::ShortLivedFlooder: return Category::ShortLivedFlooding;
    case Behavior::Throttler: return Category::ThrottledTimedSync;
    case Behavior::PingFlooder: return Category::PingFlooding;
    case Behavior::IdFlipper: return Category::PeerIdTemporal;
    case Behavior::IdClusterMember: return Category::PeerIdCluster;
    case Behavior::SaturatedSubnet: return Category::SaturatedSubnetMember;
  }
  return std::nullopt;
}

/// The 120 sibling hosts a saturated-subnet peer promotes. Derived from the
/// seed and the peer address alone so labels can be computed without a run.
std::vector<Ipv4> saturated_siblings(const Scenario& s, Ipv4 ip) {
  std::vector<Ipv4> hosts;
  for (int h = 1; h <= 254; ++h)
    if (h != ip.octet(3)) hosts.push_back(subnet_of(ip).host(static_cast<std::uint8_t>(h)));
  Rng rng(splitmix(s.seed ^ ip.value()));
  rng.shuffle(hosts);
  hosts.resize(kSaturatedSiblings);
  std::sort(hosts.begin(), hosts.end());
  return hosts;
}

Ipv4 parse_ip(const Json& j, const std::string& what) {
  if (!j.is_string()) throw InvalidScenario(what + " must be a dotted-quad string");
  auto ip = Ipv4::parse(j.get<std::string>());
  if (!ip) throw InvalidScenario(what + " '" + j.get<std::string>() + "' is not an IPv4 address");
  return *ip;
}

// ---------------------------------------------------------------------------
// Traffic plan shared by the JSONL and raw renderings.

struct PlannedConn {
  std::uint64_t id = 0;
  Ipv4 remote;
  std::uint16_t remote_port = 0;
  std::uint16_t local_port = 0;
  Direction direction = Direction::Incoming;
};

struct Event {
  std::size_t conn = 0;
  Sender sender = Sender::Remote;
  double ts = 0.0;
  ParsedMessage message;
  std::vector<std::uint32_t> segments;
};

struct Actor {
  Ipv4 ip;
  std::uint64_t peer_id = 0;
  bool omit_support_flags = false;
  bool last_seen = false;
  bool sig_split = false;
  double remote_ts_period = kTimedSyncPeriod;
  const std::vector<Ipv4>* fixed_list = nullptr;
  std::vector<Ipv4> first_list_extra;
};

class Planner {
 public:
  explicit Planner(const Scenario& s) : s_(s), rng_(s.seed) {
    for (const auto& p : s.peers) {
      reserved_.insert(subnet_of(p.ip));
      for (const auto& c : p.companions) reserved_.insert(subnet_of(c));
    }
    reserved_.insert(subnet_of(s.local_ip));
    for (const auto& [ip, _] : expected_labels(s)) pool_.push_back(ip);
    pool_.erase(std::unique(pool_.begin(), pool_.end()), pool_.end());
    local_id_ = rng_.nonzero();
  }

  void run() {
    for (const auto& p : s_.peers) plan_peer(p);
    std::stable_sort(events_.begin(), events_.end(), [](const Event& a, const Event& b) { return a.ts < b.ts; });
  }

  std::vector<PlannedConn> conns;
  std::vector<Event> events_;

 private:
  const Scenario& s_;
  Rng rng_;
  std::set<Subnet24> reserved_;
  std::vector<Ipv4> pool_;
  std::uint64_t local_id_ = 0;
  // A deque so the pointers handed to actors stay valid as lists are added.
  std::deque<std::vector<Ipv4>> fixed_lists_;

  double end() const { return s_.start_ts + s_.duration; }
  double latency() { return rng_.uniform(0.02, 0.25); }
  double jitter() { return rng_.uniform(-s_.timed_sync_jitter, s_.timed_sync_jitter); }

  Ipv4 random_ip() {
    for (;;) {
      const Ipv4 ip(static_cast<std::uint32_t>(rng_.bits() >> 32));
      const auto host = ip.octet(3);
      if (!ip.is_unicast() || host == 0 || host == 255 || reserved_.count(subnet_of(ip))) continue;
      return ip;
    }
  }

  std::vector<Ipv4> random_ips(std::size_t n, std::set<Ipv4> taken = {}) {
    std::vector<Ipv4> out;
    while (out.size() < n) {
      const Ipv4 ip = random_ip();
      if (taken.insert(ip).second) out.push_back(ip);
    }
    return out;
  }

  std::vector<Ipv4> low_diversity_list() {
    std::vector<Ipv4> out;
    std::vector<Subnet24> subnets;
    while (subnets.size() < kLowDiversitySubnets) {
      const Subnet24 sn = subnet_of(random_ip());
      if (std::find(subnets.begin(), subnets.end(), sn) == subnets.end()) subnets.push_back(sn);
    }
    for (const auto& sn : subnets) reserved_.insert(sn);
    for (std::size_t k = 0; k < kFullPeerList; ++k) {
      const auto& sn = subnets[k % subnets.size()];
      out.push_back(sn.host(static_cast<std::uint8_t>(1 + k / subnets.size())));
    }
    return out;
  }

  /// A remote list: contaminated share from the labeled pool, rest random.
  std::vector<Ipv4> remote_list(Actor& actor) {
    if (actor.fixed_list) return *actor.fixed_list;
    std::set<Ipv4> taken{actor.ip, s_.local_ip};
    std::vector<Ipv4> out;
    if (!actor.first_list_extra.empty()) {
      out = std::move(actor.first_list_extra);
      actor.first_list_extra.clear();
      taken.insert(out.begin(), out.end());
    } else if (s_.list_contamination > 0.0) {
      const double want = s_.list_contamination * static_cast<double>(kFullPeerList);
      auto k = static_cast<std::size_t>(std::floor(want));
      if (rng_.uniform() < want - std::floor(want)) ++k;
      std::vector<Ipv4> candidates;
      std::copy_if(pool_.begin(), pool_.end(), std::back_inserter(candidates),
                   [&actor](Ipv4 ip) { return ip != actor.ip; });
      for (std::size_t i = 0; i < k && i < candidates.size(); ++i) {
        std::swap(candidates[i], candidates[i + rng_.below(candidates.size() - i)]);
        out.push_back(candidates[i]);
        taken.insert(candidates[i]);
      }
    }
    auto rest = random_ips(kFullPeerList - out.size(), taken);
    out.insert(out.end(), rest.begin(), rest.end());
    rng_.shuffle(out);
    return out;
  }

  EpeeValue peer_list(const std::vector<Ipv4>& ips, bool with_last_seen) {
    EpeeArray arr;
    arr.element = EpeeType::Section;
    for (const auto& ip : ips) {
      const std::uint32_t m_ip = std::uint32_t{ip.octet(0)} | (std::uint32_t{ip.octet(1)} << 8) |
                                 (std::uint32_t{ip.octet(2)} << 16) | (std::uint32_t{ip.octet(3)} << 24);
      EpeeSection addr{{{"m_ip", EpeeValue(m_ip)}, {"m_port", EpeeValue(kP2pPort)}}};
      EpeeSection adr{{{"type", EpeeValue(std::uint8_t{1})}, {"addr", EpeeValue(std::move(addr))}}};
      EpeeSection entry{{{"adr", EpeeValue(std::move(adr))}, {"id", EpeeValue(rng_.nonzero())}}};
      if (with_last_seen)
        entry.entries.emplace_back("last_seen", EpeeValue(static_cast<std::int64_t>(s_.start_ts) - 3600));
      entry.entries.emplace_back("pruning_seed", EpeeValue(std::uint32_t{0}));
      arr.items.emplace_back(std::move(entry));
    }
    return EpeeValue(std::move(arr));
  }

  void add_sync_data(ParsedMessage& m, double ts) const {
    const auto height = kBaseHeight + static_cast<std::uint64_t>(std::max(0.0, ts - s_.start_ts) / 120.0);
    std::string top_id;
    for (int w = 0; w < 4; ++w) {
      const std::uint64_t v = splitmix(height * 4 + static_cast<std::uint64_t>(w));
      for (int b = 0; b < 8; ++b) top_id.push_back(static_cast<char>(v >> (8 * b)));
    }
    m.fields["payload_data.current_height"] = EpeeValue(height);
    m.fields["payload_data.cumulative_difficulty"] = EpeeValue(height * 300'000'000'000ULL);
    m.fields["payload_data.cumulative_difficulty_top64"] = EpeeValue(std::uint64_t{0});
    m.fields["payload_data.top_id"] = levin::epee_string(std::move(top_id));
    m.fields["payload_data.top_version"] = EpeeValue(std::uint8_t{16});
    m.fields["payload_data.pruning_seed"] = EpeeValue(std::uint32_t{0});
  }

  void add_node_data(ParsedMessage& m, Sender sender, const Actor& actor, std::uint64_t peer_id) const {
    m.fields["node_data.network_id"] = levin::epee_string(std::string(kNetworkId.begin(), kNetworkId.end()));
    m.fields["node_data.my_port"] = EpeeValue(std::uint32_t{kP2pPort});
    m.fields["node_data.peer_id"] = EpeeValue(sender == Sender::Local ? local_id_ : peer_id);
    if (sender == Sender::Local || !actor.omit_support_flags)
      m.fields["node_data.support_flags"] = EpeeValue(std::uint32_t{1});
  }

  ParsedMessage message(levin::CommandCode command, Kind kind) const {
    ParsedMessage m;
    m.command = command;
    m.kind = kind;
    return m;
  }

  void emit(std::size_t conn, Sender sender, double ts, ParsedMessage m, const Actor& actor) {
    Event e{conn, sender, micro(ts), std::move(m), {}};
    const auto size = static_cast<std::uint32_t>(levin::encode_payload(e.message).size() + levin::kHeaderSize);
    if (sender == Sender::Remote && actor.sig_split) {
      e.segments = {8, size - 8};
    } else {
      for (std::uint32_t left = size; left > 0;) {
        const auto part = std::min(left, kMtuPayload);
        e.segments.push_back(part);
        left -= part;
      }
    }
    events_.push_back(std::move(e));
  }

  std::size_t open(Ipv4 remote, Direction d) {
    PlannedConn c;
    c.id = conns.size() + 1;
    c.remote = remote;
    c.direction = d;
    const auto ephemeral = static_cast<std::uint16_t>(32768 + rng_.below(28000));
    c.remote_port = d == Direction::Incoming ? ephemeral : kP2pPort;
    c.local_port = d == Direction::Incoming ? kP2pPort : ephemeral;
    conns.push_back(c);
    return conns.size() - 1;
  }

  void handshake(std::size_t c, Actor& actor, std::uint64_t peer_id, double& t, Sender init) {
    const Sender resp = init == Sender::Local ? Sender::Remote : Sender::Local;
    auto req = message(cmd::kHandshake, Kind::Request);
    add_node_data(req, init, actor, peer_id);
    add_sync_data(req, t);
    emit(c, init, t, std::move(req), actor);

    t += latency();
    auto res = message(cmd::kHandshake, Kind::Response);
    add_node_data(res, resp, actor, peer_id);
    add_sync_data(res, t);
    res.fields[kPeerListPath] = list_from(resp, actor);
    emit(c, resp, t, std::move(res), actor);
  }

  EpeeValue list_from(Sender sender, Actor& actor) {
    if (sender == Sender::Local) return peer_list(random_ips(kLocalListSize), false);
    return peer_list(remote_list(actor), actor.last_seen);
  }

  void ping_exchange(std::size_t c, Actor& actor, std::uint64_t peer_id, double& t, Sender pinger) {
    const Sender ponger = pinger == Sender::Local ? Sender::Remote : Sender::Local;
    t += latency();
    emit(c, pinger, t, message(cmd::kPing, Kind::Request), actor);
    t += latency();
    auto pong = message(cmd::kPing, Kind::Response);
    pong.fields["status"] = levin::epee_string("OK");
    pong.fields["peer_id"] = EpeeValue(ponger == Sender::Local ? local_id_ : peer_id);
    emit(c, ponger, t, std::move(pong), actor);
  }

  void timed_sync(std::size_t c, Actor& actor, double ts, Sender requester, bool answered) {
    auto req = message(cmd::kTimedSync, Kind::Request);
    add_sync_data(req, ts);
    emit(c, requester, ts, std::move(req), actor);
    if (!answered) return;
    const Sender responder = requester == Sender::Local ? Sender::Remote : Sender::Local;
    const double rt = ts + latency();
    auto res = message(cmd::kTimedSync, Kind::Response);
    add_sync_data(res, rt);
    res.fields[kPeerListPath] = list_from(responder, actor);
    emit(c, responder, rt, std::move(res), actor);
  }

  /// A protocol-conforming connection from t0 until just before t_end.
  void session(Actor& actor, Direction d, double t0, double t_end, std::uint64_t peer_id) {
    const auto c = open(actor.ip, d);
    const Sender init = d == Direction::Incoming ? Sender::Remote : Sender::Local;
    const Sender resp = d == Direction::Incoming ? Sender::Local : Sender::Remote;
    double t = t0;
    handshake(c, actor, peer_id, t, init);
    ping_exchange(c, actor, peer_id, t, resp);
    if (actor.omit_support_flags) {
      t += latency();
      emit(c, Sender::Local, t, message(cmd::kSupportFlags, Kind::Request), actor);
      t += latency();
      auto res = message(cmd::kSupportFlags, Kind::Response);
      res.fields["support_flags"] = EpeeValue(std::uint32_t{1});
      emit(c, Sender::Remote, t, std::move(res), actor);
    }
    // Each side runs its own Timed Sync clock; the latency margin keeps the
    // response inside the connection.
    for (const Sender side : {Sender::Local, Sender::Remote}) {
      const double period = side == Sender::Remote ? actor.remote_ts_period : kTimedSyncPeriod;
      double next = t0 + kTimedSyncPeriod + jitter();
      while (next + 1.0 < t_end) {
        timed_sync(c, actor, next, side, true);
        next += period + jitter();
      }
    }
  }

  void ping_flood(Actor& actor, double t0) {
    const auto c = open(actor.ip, Direction::Incoming);
    double t = t0;
    handshake(c, actor, actor.peer_id, t, Sender::Remote);
    ping_exchange(c, actor, actor.peer_id, t, Sender::Local);
    const double burst = t + 1.0;
    for (std::size_t k = 0; k < kFloodPings; ++k) {
      const double pt = burst + static_cast<double>(k) * kFloodPingGap;
      emit(c, Sender::Remote, pt, message(cmd::kPing, Kind::Request), actor);
      auto pong = message(cmd::kPing, Kind::Response);
      pong.fields["status"] = levin::epee_string("OK");
      pong.fields["peer_id"] = EpeeValue(local_id_);
      emit(c, Sender::Local, pt + latency(), std::move(pong), actor);
    }
    // The flooder never answers; the node gives up at the inactivity limit.
    for (double ts = t0 + kTimedSyncPeriod; ts < t0 + kInactivityDrop + 1.0; ts += kTimedSyncPeriod)
      timed_sync(c, actor, ts, Sender::Local, false);
  }

  void short_lived(Actor& actor) {
    const double spacing = std::min(10.0, (s_.duration - 2.0) / static_cast<double>(kShortLivedConnections));
    for (std::size_t k = 0; k < kShortLivedConnections; ++k) {
      const auto c = open(actor.ip, Direction::Incoming);
      double t = s_.start_ts + 1.0 + static_cast<double>(k) * spacing;
      handshake(c, actor, actor.peer_id, t, Sender::Remote);
    }
  }

  Actor actor_for(Ipv4 ip, Behavior b) {
    Actor a;
    a.ip = ip;
    a.peer_id = rng_.nonzero();
    a.omit_support_flags = b == Behavior::SupportFlagsOmitter;
    a.last_seen = b == Behavior::LastSeenSender;
    a.sig_split = b == Behavior::SigOnlyFragmenter;
    if (b == Behavior::Throttler) a.remote_ts_period = kThrottledPeriod;
    return a;
  }

  double start_offset() { return s_.start_ts + rng_.uniform(0.0, 2.0); }

  void plan_peer(const PeerSpec& p) {
    Actor actor = actor_for(p.ip, p.behavior);
    switch (p.behavior) {
      case Behavior::ShortLivedFlooder:
        short_lived(actor);
        return;
      case Behavior::PingFlooder:
        ping_flood(actor, start_offset());
        return;
      case Behavior::IdFlipper: {
        const double len = (s_.duration - 20.0) / 3.0;
        const std::uint64_t a = actor.peer_id, b = rng_.nonzero();
        const std::array<std::uint64_t, 3> ids = {a, b, a};
        for (std::size_t k = 0; k < ids.size(); ++k) {
          const double t0 = s_.start_ts + 1.0 + static_cast<double>(k) * (len + 5.0);
          session(actor, p.direction, t0, t0 + len, ids[k]);
        }
        return;
      }
      case Behavior::IdClusterMember: {
        const double len = (s_.duration - 10.0) / 2.0;
        const std::uint64_t i1 = actor.peer_id, i2 = rng_.nonzero();
        session(actor, p.direction, s_.start_ts + 1.0, s_.start_ts + 1.0 + len, i1);
        session(actor, p.direction, s_.start_ts + 6.0 + len, s_.start_ts + 6.0 + 2.0 * len, i2);
        for (const auto& companion : p.companions) {
          Actor other = actor_for(companion, Behavior::Standard);
          session(other, p.direction, start_offset(), end(), i1);
        }
        return;
      }
      case Behavior::LowDiversityPromoter:
        fixed_lists_.push_back(low_diversity_list());
        actor.fixed_list = &fixed_lists_.back();
        break;
      case Behavior::ListCloner: {
        fixed_lists_.push_back(random_ips(kFullPeerList));
        for (const auto& companion : p.companions) {
          Actor other = actor_for(companion, Behavior::Standard);
          other.fixed_list = &fixed_lists_.back();
          session(other, p.direction, start_offset(), end(), other.peer_id);
        }
        actor.fixed_list = &fixed_lists_.back();
        break;
      }
      case Behavior::SaturatedSubnet: {
        actor.first_list_extra = saturated_siblings(s_, p.ip);
        std::set<Ipv4> taken(actor.first_list_extra.begin(), actor.first_list_extra.end());
        taken.insert(p.ip);
        auto rest = random_ips(kFullPeerList - kSaturatedSiblings, taken);
        actor.first_list_extra.insert(actor.first_list_extra.end(), rest.begin(), rest.end());
        break;
      }
      default:
        break;
    }
    session(actor, p.direction, start_offset(), end(), actor.peer_id);
  }
};

PacketRecord to_record(const PlannedConn& c, const Event& e, const Scenario& s) {
  PacketRecord r;
  r.ts = e.ts;
  const bool local = e.sender == Sender::Local;
  r.src_ip = local ? s.local_ip : c.remote;
  r.src_port = local ? c.local_port : c.remote_port;
  r.dst_ip = local ? c.remote : s.local_ip;
  r.dst_port = local ? c.remote_port : c.local_port;
  r.stream_id = c.id;
  r.command = e.message.command;
  r.kind = e.message.kind;
  r.fields = fields_from_message(e.message);
  r.segment_lengths = e.segments;
  return r;
}

Planner plan(const Scenario& s) {
  validate(s);
  Planner p(s);
  p.run();
  return p;
}

}  // namespace

std::string_view behavior_name(Behavior b) { return kBehaviorNames[static_cast<std::size_t>(b)]; }

std::optional<Behavior> behavior_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kBehaviorNames.size(); ++i)
    if (kBehaviorNames[i] == name) return static_cast<Behavior>(i);
  return std::nullopt;
}

const std::vector<Behavior>& all_behaviors() {
  static const std::vector<Behavior> kAll = [] {
    std::vector<Behavior> v;
    for (std::size_t i = 0; i < kBehaviorNames.size(); ++i) v.push_back(static_cast<Behavior>(i));
    return v;
  }();
  return kAll;
}

void validate(const Scenario& s) {
  if (!(s.duration > 0.0) || !std::isfinite(s.duration)) throw InvalidScenario("duration must be positive");
  if (!(s.list_contamination >= 0.0 && s.list_contamination < 1.0))
    throw InvalidScenario("list_contamination must lie in [0, 1)");
  if (!(s.timed_sync_jitter >= 0.0 && s.timed_sync_jitter < kTimedSyncPeriod / 2.0))
    throw InvalidScenario("timed_sync_jitter must lie in [0, 30)");
  if (!s.local_ip.is_unicast()) throw InvalidScenario("local_ip must be a unicast address");

  std::set<Ipv4> seen{s.local_ip};
  auto claim = [&seen](Ipv4 ip) {
    if (!ip.is_unicast()) throw InvalidScenario(ip.to_string() + " is not a unicast address");
    if (!seen.insert(ip).second) throw InvalidScenario(ip.to_string() + " appears more than once");
  };
  for (const auto& p : s.peers) {
    claim(p.ip);
    for (const auto& c : p.companions) claim(c);
  }

  for (const auto& p : s.peers) {
    const std::string who = p.ip.to_string() + " (" + std::string(behavior_name(p.behavior)) + ")";
    if (has_companions(p.behavior) && p.companions.empty()) throw InvalidScenario(who + " needs at least one companion");
    if (!has_companions(p.behavior) && !p.companions.empty()) throw InvalidScenario(who + " takes no companions");
    if (p.behavior == Behavior::PingFlooder && p.direction != Direction::Incoming)
      throw InvalidScenario(who + " must be incoming");
    if (p.behavior == Behavior::Throttler && s.duration < kMinThrottlerDuration)
      throw InvalidScenario(who + " needs a duration of at least 700 s");
    if (p.behavior == Behavior::IdFlipper && s.duration < kMinFlipperDuration)
      throw InvalidScenario(who + " needs a duration of at least 300 s");
    if (p.behavior != Behavior::Standard && s.duration < kMinAnomalyDuration)
      throw InvalidScenario(who + " needs a duration of at least 180 s");
    if (p.behavior == Behavior::SaturatedSubnet) {
      for (const auto& other : seen)
        if (other != p.ip && subnet_of(other) == subnet_of(p.ip))
          throw InvalidScenario(who + " shares its /24 with " + other.to_string());
    }
  }

  if (s.list_contamination > 0.0) {
    const auto need = static_cast<std::size_t>(std::ceil(s.list_contamination * static_cast<double>(kFullPeerList)));
    std::set<Ipv4> pool;
    for (const auto& [ip, _] : expected_labels(s)) pool.insert(ip);
    if (pool.size() < need + 1)
      throw InvalidScenario("list_contamination needs at least " + std::to_string(need + 1) + " labeled addresses");
  }
}

std::set<Label> expected_labels(const Scenario& s) {
  std::set<Label> out;
  for (const auto& p : s.peers) {
    const auto category = label_of(p.behavior);
    if (!category) continue;
    out.emplace(p.ip, *category);
    for (const auto& c : p.companions) out.emplace(c, *category);
    if (p.behavior == Behavior::SaturatedSubnet)
      for (const auto& sib : saturated_siblings(s, p.ip)) out.emplace(sib, *category);
  }
  return out;
}

std::string render_labels(const std::set<Label>& labels) {
  std::string out;
  for (const auto& [ip, c] : labels) out += ip.to_string() + " " + std::string(category_name(c)) + "\n";
  return out;
}

std::set<Label> parse_labels(std::istream& in) {
  std::set<Label> out;
  std::string ip_text, cat_text;
  while (in >> ip_text >> cat_text) {
    auto ip = Ipv4::parse(ip_text);
    auto c = category_from_name(cat_text);
    if (!ip || !c) throw std::runtime_error("bad label line: " + ip_text + " " + cat_text);
    out.emplace(*ip, *c);
  }
  return out;
}

Scenario scenario_from_json(const Json& j) {
  if (!j.is_object()) throw InvalidScenario("scenario must be a JSON object");
  Scenario s;
  auto number = [&j](const char* key, double fallback) {
    auto it = j.find(key);
    if (it == j.end()) return fallback;
    if (!it->is_number()) throw InvalidScenario(std::string(key) + " must be a number");
    return it->get<double>();
  };
  if (auto it = j.find("seed"); it != j.end()) {
    if (!it->is_number_unsigned()) throw InvalidScenario("seed must be a non-negative integer");
    s.seed = it->get<std::uint64_t>();
  }
  s.duration = number("duration", s.duration);
  s.start_ts = number("start_ts", s.start_ts);
  s.timed_sync_jitter = number("timed_sync_jitter", s.timed_sync_jitter);
  s.list_contamination = number("list_contamination", s.list_contamination);
  if (auto it = j.find("local_ip"); it != j.end()) s.local_ip = parse_ip(*it, "local_ip");

  auto peers = j.find("peers");
  if (peers == j.end() || !peers->is_array()) throw InvalidScenario("peers must be an array");
  for (const auto& pj : *peers) {
    if (!pj.is_object()) throw InvalidScenario("each peer must be an object");
    PeerSpec p;
    p.ip = parse_ip(pj.value("ip", Json()), "peer ip");
    const auto bname = pj.value("behavior", std::string("standard"));
    auto b = behavior_from_name(bname);
    if (!b) throw InvalidScenario("unknown behavior '" + bname + "'");
    p.behavior = *b;
    const auto dname = pj.value("direction", std::string("incoming"));
    if (dname == "incoming") {
      p.direction = Direction::Incoming;
    } else if (dname == "outgoing") {
      p.direction = Direction::Outgoing;
    } else {
      throw InvalidScenario("direction must be incoming or outgoing, got '" + dname + "'");
    }
    if (auto cj = pj.find("companions"); cj != pj.end()) {
      if (!cj->is_array()) throw InvalidScenario("companions must be an array");
      for (const auto& c : *cj) p.companions.push_back(parse_ip(c, "companion"));
    }
    s.peers.push_back(std::move(p));
  }
  validate(s);

  if (auto lj = j.find("labels"); lj != j.end()) {
    std::set<Label> declared;
    if (!lj->is_array()) throw InvalidScenario("labels must be an array of [ip, category] pairs");
    for (const auto& item : *lj) {
      if (!item.is_array() || item.size() != 2 || !item[1].is_string())
        throw InvalidScenario("labels must be an array of [ip, category] pairs");
      auto c = category_from_name(item[1].get<std::string>());
      if (!c) throw InvalidScenario("unknown category '" + item[1].get<std::string>() + "'");
      declared.emplace(parse_ip(item[0], "label ip"), *c);
    }
    if (declared != expected_labels(s)) throw InvalidScenario("labels disagree with the peer behaviors");
  }
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidScenario("cannot open scenario " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::exception& e) {
    throw InvalidScenario("scenario is not valid JSON: " + std::string(e.what()));
  }
  return scenario_from_json(j);
}

Json scenario_to_json(const Scenario& s) {
  Json peers = Json::array();
  for (const auto& p : s.peers) {
    Json pj{{"ip", p.ip.to_string()},
            {"behavior", std::string(behavior_name(p.behavior))},
            {"direction", std::string(direction_name(p.direction))}};
    if (!p.companions.empty()) {
      Json cs = Json::array();
      for (const auto& c : p.companions) cs.push_back(c.to_string());
      pj["companions"] = std::move(cs);
    }
    peers.push_back(std::move(pj));
  }
  return Json{{"seed", s.seed},
              {"duration", s.duration},
              {"start_ts", s.start_ts},
              {"local_ip", s.local_ip.to_string()},
              {"timed_sync_jitter", s.timed_sync_jitter},
              {"list_contamination", s.list_contamination},
              {"peers", std::move(peers)}};
}

Corpus generate(const Scenario& s) {
  const Planner p = plan(s);
  Corpus out;
  out.labels = expected_labels(s);
  out.records.reserve(p.events_.size());
  for (const auto& e : p.events_) out.records.push_back(to_record(p.conns[e.conn], e, s));
  return out;
}

std::vector<RawStream> generate_raw(const Scenario& s) {
  const Planner p = plan(s);
  std::map<std::pair<std::size_t, int>, RawStream> streams;
  for (const auto& e : p.events_) {
    const auto& c = p.conns[e.conn];
    const bool local = e.sender == Sender::Local;
    auto [it, inserted] = streams.try_emplace({e.conn, local ? 0 : 1});
    auto& st = it->second;
    if (inserted) {
      char name[48];
      std::snprintf(name, sizeof name, "c%05llu-%s", static_cast<unsigned long long>(c.id), local ? "local" : "remote");
      st.name = name;
      st.meta.src_ip = local ? s.local_ip : c.remote;
      st.meta.src_port = local ? c.local_port : c.remote_port;
      st.meta.dst_ip = local ? c.remote : s.local_ip;
      st.meta.dst_port = local ? c.remote_port : c.local_port;
      st.meta.stream_id = c.id;
      st.meta.ts_base = e.ts;
    }
    const auto bytes = levin::encode_frame(levin::frame_message(e.message));
    st.bytes.insert(st.bytes.end(), bytes.begin(), bytes.end());
    st.meta.frame_ts.push_back(e.ts);
    st.meta.segment_lengths.push_back(e.segments);
  }
  std::vector<RawStream> out;
  out.reserve(streams.size());
  for (auto& [_, st] : streams) out.push_back(std::move(st));
  return out;
}

void write_corpus(const Scenario& s, const std::filesystem::path& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir / "raw");
  const auto corpus = generate(s);
  {
    std::ofstream out(out_dir / "capture.jsonl", std::ios::binary);
    write_jsonl(out, corpus.records);
    if (!out) throw std::runtime_error("cannot write " + (out_dir / "capture.jsonl").string());
  }
  {
    std::ofstream out(out_dir / "labels.txt", std::ios::binary);
    out << render_labels(corpus.labels);
  }
  for (const auto& st : generate_raw(s)) {
    std::ofstream bin(out_dir / "raw" / (st.name + ".levin"), std::ios::binary);
    bin.write(reinterpret_cast<const char*>(st.bytes.data()), static_cast<std::streamsize>(st.bytes.size()));
    std::ofstream meta(out_dir / "raw" / (st.name + ".meta.json"), std::ios::binary);
    meta << meta_to_json(st.meta).dump() << '\n';
  }
}

}  // namespace peer_sentinel::synth
