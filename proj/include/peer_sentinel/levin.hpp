#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace peer_sentinel::levin {

// Wire constants of the Monero reference client. Sources, relative to the
// monero-project/monero tree:
//   contrib/epee/include/net/levin_base.h          (signature, header, flags)
//   src/p2p/p2p_protocol_defs.h                    (P2P_COMMANDS_POOL_BASE = 1000)
//   src/cryptonote_protocol/cryptonote_protocol_defs.h  (BC_COMMANDS_POOL_BASE = 2000)
//   contrib/epee/include/storages/portable_storage_base.h  (storage signatures, type tags)
// docs/levin_constants.md lists the same values with their on-wire byte order.

inline constexpr std::uint64_t kSignature = 0x0101010101012101ULL;
inline constexpr std::size_t kHeaderSize = 33;
inline constexpr std::uint32_t kPacketRequest = 0x00000001;
inline constexpr std::uint32_t kPacketResponse = 0x00000002;
inline constexpr std::uint32_t kProtocolVersion1 = 1;
inline constexpr std::int32_t kReturnOk = 1;

using CommandCode = std::uint32_t;

namespace command {
inline constexpr CommandCode kHandshake = 1001;
inline constexpr CommandCode kTimedSync = 1002;
inline constexpr CommandCode kPing = 1003;
inline constexpr CommandCode kRequestStatInfo = 1004;
inline constexpr CommandCode kRequestNetworkState = 1005;
inline constexpr CommandCode kRequestPeerId = 1006;
inline constexpr CommandCode kSupportFlags = 1007;
inline constexpr CommandCode kNewBlock = 2001;
inline constexpr CommandCode kNewTransactions = 2002;
inline constexpr CommandCode kRequestGetObjects = 2003;
inline constexpr CommandCode kResponseGetObjects = 2004;
inline constexpr CommandCode kRequestChain = 2006;
inline constexpr CommandCode kResponseChainEntry = 2007;
inline constexpr CommandCode kNewFluffyBlock = 2008;
inline constexpr CommandCode kRequestFluffyMissingTx = 2009;
inline constexpr CommandCode kGetTxPoolComplement = 2010;
}  // namespace command

/// Handshake, Timed Sync, Ping and Support Flags.
bool is_base_command(CommandCode code);
/// Any command code present in the table above.
bool is_known_command(CommandCode code);
/// Short stable name ("handshake", "timed_sync", ...) or "unknown".
std::string_view command_name(CommandCode code);
std::optional<CommandCode> command_from_name(std::string_view name);

inline constexpr std::uint32_t kStorageSignatureA = 0x01011101;
inline constexpr std::uint32_t kStorageSignatureB = 0x01020101;
inline constexpr std::uint8_t kStorageFormatVersion = 1;
inline constexpr std::size_t kStorageHeaderSize = 9;
inline constexpr std::uint8_t kArrayFlag = 0x80;

inline constexpr std::size_t kDefaultMaxPayload = 100u * 1024u * 1024u;
inline constexpr std::size_t kDefaultMaxDepth = 16;

enum class Kind { Request, Response };

std::string_view kind_name(Kind kind);

enum class ErrorKind {
  MalformedSignature,
  Incomplete,
  OversizedPayload,
  InvalidFlags,
  MalformedStorage,
  DepthExceeded,
  UnknownCommand,
  UnsupportedValue,
};

std::string_view error_kind_name(ErrorKind kind);

class CodecError : public std::runtime_error {
 public:
  CodecError(ErrorKind kind, const std::string& what, std::size_t needed = 0)
      : std::runtime_error(what), kind_(kind), needed_(needed) {}

  ErrorKind kind() const { return kind_; }
  /// For Incomplete: how many more octets the decoder needs.
  std::size_t needed() const { return needed_; }

 private:
  ErrorKind kind_;
  std::size_t needed_;
};

struct DecodeLimits {
  std::size_t max_payload = kDefaultMaxPayload;
  std::size_t max_depth = kDefaultMaxDepth;
};

struct LevinFrame {
  std::uint64_t signature = kSignature;
  std::uint64_t payload_size = 0;
  bool expect_response = false;
  CommandCode command = 0;
  std::int32_t return_code = 0;
  std::uint32_t flags = 0;
  std::uint32_t protocol_version = kProtocolVersion1;
  std::vector<std::uint8_t> payload;

  static LevinFrame request(CommandCode command, std::vector<std::uint8_t> payload, bool expect_response = true);
  static LevinFrame response(CommandCode command, std::vector<std::uint8_t> payload,
                             std::int32_t return_code = kReturnOk);

  bool operator==(const LevinFrame&) const = default;
};

struct DecodedFrame {
  LevinFrame frame;
  std::size_t consumed = 0;
};

/// Decodes the first complete frame at the start of `bytes`.
DecodedFrame decode_frame(std::span<const std::uint8_t> bytes, const DecodeLimits& limits = {});
std::vector<std::uint8_t> encode_frame(const LevinFrame& frame);

// ---------------------------------------------------------------------------
// epee portable storage

enum class EpeeType : std::uint8_t {
  Int64 = 1,
  Int32 = 2,
  Int16 = 3,
  Int8 = 4,
  UInt64 = 5,
  UInt32 = 6,
  UInt16 = 7,
  UInt8 = 8,
  Double = 9,
  String = 10,
  Bool = 11,
  Section = 12,
  Array = 13,
};

struct EpeeValue;

/// Ordered name/value entries, as they appear on the wire.
struct EpeeSection {
  std::vector<std::pair<std::string, EpeeValue>> entries;
};

/// Homogeneous array; `element` is the tag every item carries.
struct EpeeArray {
  EpeeType element = EpeeType::UInt8;
  std::vector<EpeeValue> items;
};

bool operator==(const EpeeSection& a, const EpeeSection& b);
bool operator==(const EpeeArray& a, const EpeeArray& b);

struct EpeeValue {
  // Alternative order mirrors EpeeType (index + 1 == tag).
  using Storage = std::variant<std::int64_t, std::int32_t, std::int16_t, std::int8_t, std::uint64_t, std::uint32_t,
                               std::uint16_t, std::uint8_t, double, std::string, bool, EpeeSection, EpeeArray>;
  Storage data;

  EpeeValue() = default;
  template <typename T>
    requires std::is_constructible_v<Storage, T&&>
  EpeeValue(T&& value) : data(std::forward<T>(value)) {}

  EpeeType type() const { return static_cast<EpeeType>(data.index() + 1); }

  template <typename T>
  const T* get_if() const {
    return std::get_if<T>(&data);
  }

  /// Any integer alternative that is non-negative, widened.
  std::optional<std::uint64_t> as_unsigned() const;

  bool operator==(const EpeeValue&) const = default;
};

/// Convenience for string (octet) values, which otherwise collide with bool.
inline EpeeValue epee_string(std::string bytes) { return EpeeValue(std::move(bytes)); }

struct ParsedMessage {
  CommandCode command = 0;
  Kind kind = Kind::Request;
  /// Dot-separated paths to leaves. Nested sections are flattened; arrays
  /// (including arrays of sections such as "local_peerlist_new") stay whole.
  /// An empty nested section is kept as a leaf so it survives a round-trip.
  std::map<std::string, EpeeValue> fields;

  bool operator==(const ParsedMessage&) const = default;
};

EpeeSection decode_storage(std::span<const std::uint8_t> bytes, const DecodeLimits& limits = {});
std::vector<std::uint8_t> encode_storage(const EpeeSection& root);

std::map<std::string, EpeeValue> flatten(const EpeeSection& root);
EpeeSection unflatten(const std::map<std::string, EpeeValue>& fields);

/// Request/response from the header flag bits; InvalidFlags when not exactly one is set.
Kind kind_from_flags(std::uint32_t flags);

/// Decodes a frame's payload. Throws UnknownCommand for codes outside the
/// constants table; use decode_payload_any to decode those anyway.
ParsedMessage decode_payload(const LevinFrame& frame, const DecodeLimits& limits = {});
ParsedMessage decode_payload_any(const LevinFrame& frame, const DecodeLimits& limits = {});
std::vector<std::uint8_t> encode_payload(const ParsedMessage& message);

/// Wraps an encoded message in a frame with the conventional header values.
LevinFrame frame_message(const ParsedMessage& message);

}  // namespace peer_sentinel::levin
