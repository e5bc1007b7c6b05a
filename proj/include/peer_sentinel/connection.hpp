#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "peer_sentinel/capture.hpp"

namespace peer_sentinel {

inline constexpr double kInactivityDrop = 120.0;

enum class Direction { Incoming, Outgoing };
enum class Sender { Local, Remote };

std::string_view direction_name(Direction d);
std::string_view sender_name(Sender s);

struct Message {
  Sender sender = Sender::Remote;
  PacketRecord record;
};

struct Connection {
  /// "s<stream_id>" or "<remote ip>:<port>-><local port>#<epoch>".
  std::string id;
  Ipv4 local_ip;
  Ipv4 remote_ip;
  std::uint16_t remote_port = 0;
  Direction direction = Direction::Incoming;
  double start_ts = 0.0;
  double end_ts = 0.0;
  std::vector<Message> messages;
  bool handshake_completed = false;
  /// The capture saw the opening handshake request.
  bool complete = false;
  /// Records (or stream-level framing errors) that failed to decode.
  std::size_t decode_errors = 0;

  double duration() const { return end_ts - start_ts; }
};

struct TimedSyncStats {
  std::vector<double> request_intervals_local;
  std::vector<double> request_intervals_remote;
  double mean_remote_interval = 0.0;
  std::size_t count_remote_requests = 0;
};

struct SequenceStep {
  levin::CommandCode command = 0;
  levin::Kind kind = levin::Kind::Request;
  Sender sender = Sender::Remote;

  bool operator==(const SequenceStep&) const = default;
};

class AmbiguousLocalIp : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GroupingOptions {
  std::optional<Ipv4> local_ip;
  /// Silence that splits a 5-tuple session when records carry no stream_id.
  double session_gap = kInactivityDrop;
};

struct Grouping {
  std::vector<Connection> connections;
  Ipv4 local_ip;
  /// Records that do not involve the local endpoint.
  std::size_t unassigned_records = 0;
};

/// The single endpoint present in every record; AmbiguousLocalIp when zero
/// or several candidates remain.
Ipv4 infer_local_ip(std::span<const PacketRecord> records);

/// One connection per stream_id, or per 5-tuple session split at silence
/// gaps longer than `session_gap`. Connections are ordered by (start_ts, id).
Grouping group_connections(std::vector<PacketRecord> records, const GroupingOptions& options = {});

struct FilterResult {
  std::vector<Connection> kept;
  std::size_t dropped = 0;
};

/// Drops connections that lack a decodable opening handshake request or
/// contain decode errors.
FilterResult filter_incomplete(std::vector<Connection> connections);

/// Nullopt when the remote sent fewer than two Timed Sync requests.
std::optional<TimedSyncStats> timed_sync_stats(const Connection& conn);

std::vector<SequenceStep> command_sequence(const Connection& conn);

}  // namespace peer_sentinel
