#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "peer_sentinel/ipv4.hpp"
#include "peer_sentinel/levin.hpp"

namespace peer_sentinel {

using Json = nlohmann::json;

inline constexpr std::size_t kFullPeerList = 250;
inline constexpr const char* kPeerListPath = "local_peerlist_new";

/// One protocol message as seen on the wire, normalized.
///
/// `fields` maps flattened epee paths to JSON values. Octet strings that are
/// not printable ASCII are rendered as "hex:<lowercase hex>". The peer list
/// under "local_peerlist_new" is an array of entry objects with keys ip, port,
/// peer_id, last_seen, pruning_seed, rpc_port, rpc_credits_per_hash; any other
/// entry keys are kept under their flattened epee path.
struct PacketRecord {
  double ts = 0.0;
  Ipv4 src_ip;
  std::uint16_t src_port = 0;
  Ipv4 dst_ip;
  std::uint16_t dst_port = 0;
  std::optional<std::uint64_t> stream_id;
  levin::CommandCode command = 0;
  levin::Kind kind = levin::Kind::Request;
  Json fields = Json::object();
  /// TCP segment sizes that made up the reassembled message; empty when unknown.
  std::vector<std::uint32_t> segment_lengths;
  /// Set when the frame arrived but its payload could not be decoded.
  std::optional<std::string> decode_error;

  bool operator==(const PacketRecord&) const = default;
};

struct PeerListEntry {
  /// Dotted quad for IPv4; opaque text for IPv6/onion/i2p or garbage.
  std::string address;
  std::optional<Ipv4> ip;
  std::uint16_t port = 0;
  std::optional<std::uint64_t> peer_id;
  std::optional<std::int64_t> last_seen;
  std::optional<std::uint32_t> pruning_seed;
  std::optional<std::uint16_t> rpc_port;
  std::optional<std::uint32_t> rpc_credits_per_hash;

  /// IPv4 and unicast; loopback/multicast entries are kept but invalid.
  bool valid() const { return ip && ip->is_unicast(); }
};

enum class ListCarrier { HandshakeResponse, TimedSyncResponse, Other };

std::string_view carrier_name(ListCarrier carrier);

struct PeerList {
  Ipv4 source_ip;
  double ts = 0.0;
  ListCarrier carrier = ListCarrier::Other;
  std::vector<PeerListEntry> entries;
  /// Entries whose address could not be read as IPv4.
  std::size_t invalid_entries = 0;

  bool is_full(std::size_t full_size = kFullPeerList) const { return entries.size() == full_size; }
};

// ---------------------------------------------------------------------------
// JSONL

struct IngestStats {
  std::size_t lines = 0;
  std::size_t records = 0;
  std::size_t skipped = 0;
  /// Records whose ts went backwards relative to their stream.
  std::size_t order_violations = 0;
  std::vector<std::string> errors;  // first few, "line N: reason"
};

struct JsonlCapture {
  std::vector<PacketRecord> records;
  IngestStats stats;
};

class IngestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Json record_to_json(const PacketRecord& record);
/// Nullopt and a reason when the object does not satisfy the record schema.
std::optional<PacketRecord> record_from_json(const Json& object, std::string* reason = nullptr);

/// Reads records in file order. Malformed lines are skipped and counted;
/// more than one malformed line exceeding 1% of all lines raises IngestError.
JsonlCapture read_jsonl(const std::filesystem::path& path);
JsonlCapture parse_jsonl(std::istream& in);
void write_jsonl(std::ostream& out, std::span<const PacketRecord> records);

// ---------------------------------------------------------------------------
// Raw Levin streams

/// Sidecar describing one direction of one connection. `frame_ts` and
/// `segment_lengths`, when present, are per decoded frame.
struct StreamMeta {
  Ipv4 src_ip;
  std::uint16_t src_port = 0;
  Ipv4 dst_ip;
  std::uint16_t dst_port = 0;
  std::optional<std::uint64_t> stream_id;
  double ts_base = 0.0;
  std::vector<double> frame_ts;
  std::vector<std::vector<std::uint32_t>> segment_lengths;
};

Json meta_to_json(const StreamMeta& meta);
StreamMeta meta_from_json(const Json& object);

struct StreamError {
  std::size_t offset = 0;
  levin::ErrorKind kind = levin::ErrorKind::MalformedStorage;
  std::string message;
  /// UnknownCommand is informational; everything else marks the stream damaged.
  bool fatal = true;
};

struct StreamDecode {
  std::vector<PacketRecord> records;
  std::vector<StreamError> errors;
};

/// Record-level fields for a decoded message (see PacketRecord::fields).
Json fields_from_message(const levin::ParsedMessage& message);

/// Field paths present in a record's fields. Entries of arrays of objects
/// contribute "<array>[].<key>".
std::set<std::string> field_domain(const Json& fields);

StreamDecode decode_stream(std::span<const std::uint8_t> payload, const StreamMeta& meta,
                           const levin::DecodeLimits& limits = {});

struct RawCapture {
  std::vector<PacketRecord> records;
  /// Fatal decode errors per stream id (streams without an id use the file index).
  std::map<std::uint64_t, std::size_t> stream_errors;
  std::vector<std::string> error_reports;
  std::size_t files = 0;
};

/// `path` is one "<name>.levin" file or a directory of them; each may have a
/// "<name>.meta.json" sidecar. Records are merged and stably sorted by ts.
RawCapture read_raw_streams(const std::filesystem::path& path, const levin::DecodeLimits& limits = {});

// ---------------------------------------------------------------------------

PeerListEntry entry_from_json(const Json& object);
/// One PeerList per record that carries "local_peerlist_new".
std::vector<PeerList> extract_peer_lists(std::span<const PacketRecord> records);

}  // namespace peer_sentinel
