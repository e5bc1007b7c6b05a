#include "peer_sentinel/connection.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <tuple>

namespace peer_sentinel {

namespace {

using levin::Kind;
namespace cmd = levin::command;

bool is_handshake_request(const PacketRecord& r) { return r.command == cmd::kHandshake && r.kind == Kind::Request; }

struct TupleKey {
  std::uint32_t remote_ip;
  std::uint16_t remote_port;
  std::uint16_t local_port;
  auto operator<=>(const TupleKey&) const = default;
};

void finish(Connection& c) {
  std::stable_sort(c.messages.begin(), c.messages.end(),
                   [](const Message& a, const Message& b) { return a.record.ts < b.record.ts; });
  c.start_ts = c.messages.front().record.ts;
  c.end_ts = c.messages.back().record.ts;

  const Message* first_hs = nullptr;
  for (const auto& m : c.messages) {
    if (m.record.decode_error) ++c.decode_errors;
    if (!first_hs && is_handshake_request(m.record)) first_hs = &m;
  }
  const Sender initiator = first_hs ? first_hs->sender : c.messages.front().sender;
  c.direction = initiator == Sender::Remote ? Direction::Incoming : Direction::Outgoing;
  c.complete = is_handshake_request(c.messages.front().record) && !c.messages.front().record.decode_error;

  if (first_hs) {
    for (const auto& m : c.messages) {
      if (m.record.command == cmd::kHandshake && m.record.kind == Kind::Response && m.sender != initiator &&
          m.record.ts >= first_hs->record.ts) {
        c.handshake_completed = true;
        break;
      }
    }
  }
}

}  // namespace

std::string_view direction_name(Direction d) { return d == Direction::Incoming ? "incoming" : "outgoing"; }
std::string_view sender_name(Sender s) { return s == Sender::Local ? "local" : "remote"; }

Ipv4 infer_local_ip(std::span<const PacketRecord> records) {
  if (records.empty()) throw AmbiguousLocalIp("no records to infer the local endpoint from");
  std::set<Ipv4> candidates{records.front().src_ip, records.front().dst_ip};
  for (const auto& r : records) {
    std::erase_if(candidates, [&r](Ipv4 ip) { return ip != r.src_ip && ip != r.dst_ip; });
    if (candidates.empty()) break;
  }
  if (candidates.size() != 1) {
    throw AmbiguousLocalIp(candidates.empty() ? "no endpoint is common to every record"
                                              : "several endpoints are common to every record; pass --local-ip");
  }
  return *candidates.begin();
}

Grouping group_connections(std::vector<PacketRecord> records, const GroupingOptions& options) {
  Grouping out;
  out.local_ip = options.local_ip ? *options.local_ip : infer_local_ip(records);
  const Ipv4 local = out.local_ip;

  std::map<std::uint64_t, Connection> by_stream;
  std::map<TupleKey, std::vector<Connection>> by_tuple;

  for (auto& r : records) {
    Sender sender;
    if (r.src_ip == local) {
      sender = Sender::Local;
    } else if (r.dst_ip == local) {
      sender = Sender::Remote;
    } else {
      ++out.unassigned_records;
      continue;
    }
    const Ipv4 remote = sender == Sender::Local ? r.dst_ip : r.src_ip;
    const std::uint16_t remote_port = sender == Sender::Local ? r.dst_port : r.src_port;
    const std::uint16_t local_port = sender == Sender::Local ? r.src_port : r.dst_port;

    Connection* conn = nullptr;
    if (r.stream_id) {
      auto [it, inserted] = by_stream.try_emplace(*r.stream_id);
      conn = &it->second;
      if (inserted) conn->id = "s" + std::to_string(*r.stream_id);
    } else {
      auto& sessions = by_tuple[TupleKey{remote.value(), remote_port, local_port}];
      if (sessions.empty() || r.ts - sessions.back().messages.back().record.ts > options.session_gap) {
        sessions.emplace_back();
        sessions.back().id = remote.to_string() + ":" + std::to_string(remote_port) + "->" +
                             std::to_string(local_port) + "#" + std::to_string(sessions.size() - 1);
      }
      conn = &sessions.back();
    }
    if (conn->messages.empty()) {
      conn->local_ip = local;
      conn->remote_ip = remote;
      conn->remote_port = remote_port;
    }
    conn->messages.push_back({sender, std::move(r)});
  }

  for (auto& [_, c] : by_stream) out.connections.push_back(std::move(c));
  for (auto& [_, sessions] : by_tuple)
    for (auto& c : sessions) out.connections.push_back(std::move(c));
  for (auto& c : out.connections) finish(c);
  std::sort(out.connections.begin(), out.connections.end(), [](const Connection& a, const Connection& b) {
    return std::tie(a.start_ts, a.id) < std::tie(b.start_ts, b.id);
  });
  return out;
}

FilterResult filter_incomplete(std::vector<Connection> connections) {
  FilterResult out;
  for (auto& c : connections) {
    if (c.complete && c.decode_errors == 0) {
      out.kept.push_back(std::move(c));
    } else {
      ++out.dropped;
    }
  }
  return out;
}

std::optional<TimedSyncStats> timed_sync_stats(const Connection& conn) {
  TimedSyncStats stats;
  std::optional<double> last_local;
  std::optional<double> last_remote;
  for (const auto& m : conn.messages) {
    if (m.record.command != cmd::kTimedSync || m.record.kind != Kind::Request) continue;
    auto& last = m.sender == Sender::Local ? last_local : last_remote;
    auto& intervals = m.sender == Sender::Local ? stats.request_intervals_local : stats.request_intervals_remote;
    if (m.sender == Sender::Remote) ++stats.count_remote_requests;
    if (last && m.record.ts > *last) intervals.push_back(m.record.ts - *last);
    last = m.record.ts;
  }
  if (stats.count_remote_requests < 2 || stats.request_intervals_remote.empty()) return std::nullopt;
  const auto& r = stats.request_intervals_remote;
  stats.mean_remote_interval = std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size());
  return stats;
}

std::vector<SequenceStep> command_sequence(const Connection& conn) {
  std::vector<SequenceStep> out;
  out.reserve(conn.messages.size());
  for (const auto& m : conn.messages) out.push_back({m.record.command, m.record.kind, m.sender});
  return out;
}

}  // namespace peer_sentinel
