#include "peer_sentinel/levin.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cstring>

namespace peer_sentinel::levin {

namespace {

struct CommandInfo {
  CommandCode code;
  std::string_view name;
  bool base;
};

constexpr std::array<CommandInfo, 16> kCommands{{
    {command::kHandshake, "handshake", true},
    {command::kTimedSync, "timed_sync", true},
    {command::kPing, "ping", true},
    {command::kRequestStatInfo, "request_stat_info", false},
    {command::kRequestNetworkState, "request_network_state", false},
    {command::kRequestPeerId, "request_peer_id", false},
    {command::kSupportFlags, "support_flags", true},
    {command::kNewBlock, "new_block", false},
    {command::kNewTransactions, "new_transactions", false},
    {command::kRequestGetObjects, "request_get_objects", false},
    {command::kResponseGetObjects, "response_get_objects", false},
    {command::kRequestChain, "request_chain", false},
    {command::kResponseChainEntry, "response_chain_entry", false},
    {command::kNewFluffyBlock, "new_fluffy_block", false},
    {command::kRequestFluffyMissingTx, "request_fluffy_missing_tx", false},
    {command::kGetTxPoolComplement, "get_txpool_complement", false},
}};

const CommandInfo* find_command(CommandCode code) {
  for (const auto& c : kCommands)
    if (c.code == code) return &c;
  return nullptr;
}

[[noreturn]] void storage_error(const std::string& what) {
  throw CodecError(ErrorKind::MalformedStorage, "malformed storage: " + what);
}

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  using U = std::make_unsigned_t<T>;
  U bits = static_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
}

template <typename T>
T get_le(const std::uint8_t* p) {
  using U = std::make_unsigned_t<T>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(static_cast<U>(p[i]) << (8 * i));
  return static_cast<T>(bits);
}

std::size_t fixed_size(EpeeType t) {
  switch (t) {
    case EpeeType::Int64:
    case EpeeType::UInt64:
    case EpeeType::Double:
      return 8;
    case EpeeType::Int32:
    case EpeeType::UInt32:
      return 4;
    case EpeeType::Int16:
    case EpeeType::UInt16:
      return 2;
    case EpeeType::Int8:
    case EpeeType::UInt8:
    case EpeeType::Bool:
      return 1;
    default:
      return 0;
  }
}

bool valid_tag(std::uint8_t tag) { return tag >= 1 && tag <= 13; }

class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, const DecodeLimits& limits) : bytes_(bytes), limits_(limits) {}

  std::size_t remaining() const { return bytes_.size() - pos_; }

  const std::uint8_t* take(std::size_t n) {
    if (n > remaining()) storage_error("truncated at offset " + std::to_string(pos_));
    const std::uint8_t* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }

  std::uint8_t u8() { return *take(1); }

  std::uint64_t varint() {
    const std::uint8_t first = *take(1);
    --pos_;
    const std::size_t width = std::size_t{1} << (first & 0x03);
    const std::uint8_t* p = take(width);
    std::uint64_t raw = 0;
    for (std::size_t i = 0; i < width; ++i) raw |= std::uint64_t{p[i]} << (8 * i);
    return raw >> 2;
  }

  EpeeSection section(std::size_t depth) {
    enter(depth);
    const std::uint64_t count = varint();
    // Each entry needs at least a name length, a tag and one value octet.
    if (count > remaining()) storage_error("entry count exceeds input");
    EpeeSection out;
    out.entries.reserve(static_cast<std::size_t>(count));
    for (std::uint64_t i = 0; i < count; ++i) {
      const std::uint8_t name_len = u8();
      const std::uint8_t* name = take(name_len);
      std::string key(reinterpret_cast<const char*>(name), name_len);
      for (const auto& [existing, _] : out.entries)
        if (existing == key) storage_error("duplicate entry '" + key + "'");
      out.entries.emplace_back(std::move(key), entry_value(depth));
    }
    return out;
  }

 private:
  void enter(std::size_t depth) {
    if (depth > limits_.max_depth)
      throw CodecError(ErrorKind::DepthExceeded, "storage nesting exceeds " + std::to_string(limits_.max_depth));
  }

  EpeeValue entry_value(std::size_t depth) {
    std::uint8_t tag = u8();
    if (tag == static_cast<std::uint8_t>(EpeeType::Array)) {
      tag = u8();
      if (!(tag & kArrayFlag)) storage_error("array marker without array flag");
    }
    if (tag & kArrayFlag) return array(static_cast<std::uint8_t>(tag & ~kArrayFlag), depth + 1);
    return scalar(tag, depth);
  }

  EpeeValue array(std::uint8_t element_tag, std::size_t depth) {
    enter(depth);
    if (!valid_tag(element_tag)) storage_error("bad array element tag " + std::to_string(element_tag));
    const auto element = static_cast<EpeeType>(element_tag);
    const std::uint64_t count = varint();
    const std::size_t width = std::max<std::size_t>(fixed_size(element), 1);
    if (count > remaining() / width) storage_error("array length exceeds input");
    EpeeArray out;
    out.element = element;
    out.items.reserve(static_cast<std::size_t>(count));
    for (std::uint64_t i = 0; i < count; ++i) {
      if (element == EpeeType::Array) {
        const std::uint8_t inner = u8();
        if (!(inner & kArrayFlag)) storage_error("nested array without array flag");
        out.items.push_back(array(static_cast<std::uint8_t>(inner & ~kArrayFlag), depth + 1));
      } else {
        out.items.push_back(scalar(element_tag, depth));
      }
    }
    return out;
  }

  EpeeValue scalar(std::uint8_t tag, std::size_t depth) {
    switch (static_cast<EpeeType>(tag)) {
      case EpeeType::Int64: return get_le<std::int64_t>(take(8));
      case EpeeType::Int32: return get_le<std::int32_t>(take(4));
      case EpeeType::Int16: return get_le<std::int16_t>(take(2));
      case EpeeType::Int8: return static_cast<std::int8_t>(*take(1));
      case EpeeType::UInt64: return get_le<std::uint64_t>(take(8));
      case EpeeType::UInt32: return get_le<std::uint32_t>(take(4));
      case EpeeType::UInt16: return get_le<std::uint16_t>(take(2));
      case EpeeType::UInt8: return *take(1);
      case EpeeType::Double: return std::bit_cast<double>(get_le<std::uint64_t>(take(8)));
      case EpeeType::String: {
        const std::uint64_t len = varint();
        if (len > remaining()) storage_error("string length exceeds input");
        const std::uint8_t* p = take(static_cast<std::size_t>(len));
        return std::string(reinterpret_cast<const char*>(p), static_cast<std::size_t>(len));
      }
      case EpeeType::Bool: return *take(1) != 0;
      case EpeeType::Section: return section(depth + 1);
      default: storage_error("bad type tag " + std::to_string(tag));
    }
  }

  std::span<const std::uint8_t> bytes_;
  const DecodeLimits& limits_;
  std::size_t pos_ = 0;
};

void put_varint(std::vector<std::uint8_t>& out, std::uint64_t v) {
  if (v <= 63) {
    out.push_back(static_cast<std::uint8_t>(v << 2));
  } else if (v <= 16383) {
    put_le<std::uint16_t>(out, static_cast<std::uint16_t>((v << 2) | 1));
  } else if (v <= 1073741823) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>((v << 2) | 2));
  } else if (v <= 4611686018427387903ULL) {
    put_le<std::uint64_t>(out, (v << 2) | 3);
  } else {
    throw CodecError(ErrorKind::UnsupportedValue, "length too large for varint");
  }
}

void write_value(std::vector<std::uint8_t>& out, const EpeeValue& value);
void write_array_body(std::vector<std::uint8_t>& out, const EpeeArray& array);

void write_section(std::vector<std::uint8_t>& out, const EpeeSection& section) {
  put_varint(out, section.entries.size());
  for (const auto& [name, value] : section.entries) {
    if (name.size() > 255) throw CodecError(ErrorKind::UnsupportedValue, "entry name longer than 255 octets");
    out.push_back(static_cast<std::uint8_t>(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    if (const auto* array = value.get_if<EpeeArray>()) {
      out.push_back(static_cast<std::uint8_t>(array->element) | kArrayFlag);
      write_array_body(out, *array);
    } else {
      out.push_back(static_cast<std::uint8_t>(value.type()));
      write_value(out, value);
    }
  }
}

void write_array_body(std::vector<std::uint8_t>& out, const EpeeArray& array) {
  put_varint(out, array.items.size());
  for (const auto& item : array.items) {
    if (item.type() != array.element) throw CodecError(ErrorKind::UnsupportedValue, "heterogeneous array");
    if (const auto* inner = item.get_if<EpeeArray>()) {
      out.push_back(static_cast<std::uint8_t>(inner->element) | kArrayFlag);
      write_array_body(out, *inner);
    } else {
      write_value(out, item);
    }
  }
}

void write_value(std::vector<std::uint8_t>& out, const EpeeValue& value) {
  std::visit(
      [&out](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, bool>) {
          out.push_back(v ? 1 : 0);
        } else if constexpr (std::is_same_v<T, double>) {
          put_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
        } else if constexpr (std::is_integral_v<T>) {
          put_le<T>(out, v);
        } else if constexpr (std::is_same_v<T, std::string>) {
          put_varint(out, v.size());
          out.insert(out.end(), v.begin(), v.end());
        } else if constexpr (std::is_same_v<T, EpeeSection>) {
          write_section(out, v);
        } else {
          write_array_body(out, v);
        }
      },
      value.data);
}

void flatten_into(std::map<std::string, EpeeValue>& out, const EpeeSection& section, const std::string& prefix) {
  for (const auto& [name, value] : section.entries) {
    std::string path = prefix.empty() ? name : prefix + "." + name;
    const auto* nested = value.get_if<EpeeSection>();
    if (nested && !nested->entries.empty()) {
      flatten_into(out, *nested, path);
    } else if (!out.emplace(path, value).second) {
      throw CodecError(ErrorKind::MalformedStorage, "field path '" + path + "' is ambiguous");
    }
  }
}

EpeeSection* child_section(EpeeSection& parent, const std::string& name) {
  for (auto& [key, value] : parent.entries) {
    if (key != name) continue;
    auto* section = std::get_if<EpeeSection>(&value.data);
    if (!section) throw CodecError(ErrorKind::UnsupportedValue, "path '" + name + "' is both a leaf and a section");
    return section;
  }
  parent.entries.emplace_back(name, EpeeSection{});
  return std::get_if<EpeeSection>(&parent.entries.back().second.data);
}

}  // namespace

bool is_base_command(CommandCode code) {
  const auto* c = find_command(code);
  return c && c->base;
}

bool is_known_command(CommandCode code) { return find_command(code) != nullptr; }

std::string_view command_name(CommandCode code) {
  const auto* c = find_command(code);
  return c ? c->name : std::string_view("unknown");
}

std::optional<CommandCode> command_from_name(std::string_view name) {
  for (const auto& c : kCommands)
    if (c.name == name) return c.code;
  return std::nullopt;
}

std::string_view kind_name(Kind kind) { return kind == Kind::Request ? "request" : "response"; }

std::string_view error_kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::MalformedSignature: return "MalformedSignature";
    case ErrorKind::Incomplete: return "Incomplete";
    case ErrorKind::OversizedPayload: return "OversizedPayload";
    case ErrorKind::InvalidFlags: return "InvalidFlags";
    case ErrorKind::MalformedStorage: return "MalformedStorage";
    case ErrorKind::DepthExceeded: return "DepthExceeded";
    case ErrorKind::UnknownCommand: return "UnknownCommand";
    case ErrorKind::UnsupportedValue: return "UnsupportedValue";
  }
  return "Unknown";
}

bool operator==(const EpeeSection& a, const EpeeSection& b) { return a.entries == b.entries; }
bool operator==(const EpeeArray& a, const EpeeArray& b) { return a.element == b.element && a.items == b.items; }

std::optional<std::uint64_t> EpeeValue::as_unsigned() const {
  return std::visit(
      [](const auto& v) -> std::optional<std::uint64_t> {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
          if constexpr (std::is_signed_v<T>) {
            if (v < 0) return std::nullopt;
          }
          return static_cast<std::uint64_t>(v);
        } else {
          return std::nullopt;
        }
      },
      data);
}

LevinFrame LevinFrame::request(CommandCode command, std::vector<std::uint8_t> payload, bool expect_response) {
  LevinFrame f;
  f.payload_size = payload.size();
  f.expect_response = expect_response;
  f.command = command;
  f.return_code = 0;
  f.flags = kPacketRequest;
  f.payload = std::move(payload);
  return f;
}

LevinFrame LevinFrame::response(CommandCode command, std::vector<std::uint8_t> payload, std::int32_t return_code) {
  LevinFrame f;
  f.payload_size = payload.size();
  f.expect_response = false;
  f.command = command;
  f.return_code = return_code;
  f.flags = kPacketResponse;
  f.payload = std::move(payload);
  return f;
}

DecodedFrame decode_frame(std::span<const std::uint8_t> bytes, const DecodeLimits& limits) {
  if (bytes.empty()) throw CodecError(ErrorKind::Incomplete, "no input", kHeaderSize);

  std::array<std::uint8_t, 8> magic{};
  for (std::size_t i = 0; i < 8; ++i) magic[i] = static_cast<std::uint8_t>(kSignature >> (8 * i));
  const std::size_t probe = std::min<std::size_t>(8, bytes.size());
  if (!std::equal(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(probe), magic.begin()))
    throw CodecError(ErrorKind::MalformedSignature, "levin signature mismatch");
  if (bytes.size() < kHeaderSize)
    throw CodecError(ErrorKind::Incomplete, "truncated levin header", kHeaderSize - bytes.size());

  const std::uint8_t* p = bytes.data();
  DecodedFrame out;
  LevinFrame& f = out.frame;
  f.signature = get_le<std::uint64_t>(p);
  f.payload_size = get_le<std::uint64_t>(p + 8);
  f.expect_response = p[16] != 0;
  f.command = get_le<std::uint32_t>(p + 17);
  f.return_code = get_le<std::int32_t>(p + 21);
  f.flags = get_le<std::uint32_t>(p + 25);
  f.protocol_version = get_le<std::uint32_t>(p + 29);

  if (f.payload_size > limits.max_payload)
    throw CodecError(ErrorKind::OversizedPayload,
                     "payload of " + std::to_string(f.payload_size) + " octets exceeds cap");
  const std::size_t total = kHeaderSize + static_cast<std::size_t>(f.payload_size);
  if (bytes.size() < total) throw CodecError(ErrorKind::Incomplete, "truncated levin payload", total - bytes.size());

  f.payload.assign(p + kHeaderSize, p + total);
  out.consumed = total;
  return out;
}

std::vector<std::uint8_t> encode_frame(const LevinFrame& frame) {
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderSize + frame.payload.size());
  put_le<std::uint64_t>(out, frame.signature);
  put_le<std::uint64_t>(out, frame.payload.size());
  out.push_back(frame.expect_response ? 1 : 0);
  put_le<std::uint32_t>(out, frame.command);
  put_le<std::int32_t>(out, frame.return_code);
  put_le<std::uint32_t>(out, frame.flags);
  put_le<std::uint32_t>(out, frame.protocol_version);
  out.insert(out.end(), frame.payload.begin(), frame.payload.end());
  return out;
}

EpeeSection decode_storage(std::span<const std::uint8_t> bytes, const DecodeLimits& limits) {
  if (bytes.size() < kStorageHeaderSize) storage_error("storage header truncated");
  if (get_le<std::uint32_t>(bytes.data()) != kStorageSignatureA ||
      get_le<std::uint32_t>(bytes.data() + 4) != kStorageSignatureB)
    storage_error("bad storage signature");
  if (bytes[8] != kStorageFormatVersion) storage_error("unsupported storage version " + std::to_string(bytes[8]));
  Reader reader(bytes.subspan(kStorageHeaderSize), limits);
  EpeeSection root = reader.section(0);
  if (reader.remaining() != 0) storage_error(std::to_string(reader.remaining()) + " trailing octets");
  return root;
}

std::vector<std::uint8_t> encode_storage(const EpeeSection& root) {
  std::vector<std::uint8_t> out;
  put_le<std::uint32_t>(out, kStorageSignatureA);
  put_le<std::uint32_t>(out, kStorageSignatureB);
  out.push_back(kStorageFormatVersion);
  write_section(out, root);
  return out;
}

std::map<std::string, EpeeValue> flatten(const EpeeSection& root) {
  std::map<std::string, EpeeValue> out;
  flatten_into(out, root, "");
  return out;
}

EpeeSection unflatten(const std::map<std::string, EpeeValue>& fields) {
  EpeeSection root;
  for (const auto& [path, value] : fields) {
    EpeeSection* parent = &root;
    std::size_t start = 0;
    for (std::size_t dot = path.find('.'); dot != std::string::npos; dot = path.find('.', start)) {
      parent = child_section(*parent, path.substr(start, dot - start));
      start = dot + 1;
    }
    std::string leaf = path.substr(start);
    for (const auto& entry : parent->entries)
      if (entry.first == leaf) throw CodecError(ErrorKind::UnsupportedValue, "path '" + path + "' collides");
    parent->entries.emplace_back(std::move(leaf), value);
  }
  return root;
}

Kind kind_from_flags(std::uint32_t flags) {
  const bool req = flags & kPacketRequest;
  const bool res = flags & kPacketResponse;
  if (req == res) throw CodecError(ErrorKind::InvalidFlags, "exactly one of request/response flags must be set");
  return req ? Kind::Request : Kind::Response;
}

ParsedMessage decode_payload_any(const LevinFrame& frame, const DecodeLimits& limits) {
  ParsedMessage msg;
  msg.command = frame.command;
  msg.kind = kind_from_flags(frame.flags);
  // A zero-length payload carries no storage at all; treat it as an empty section.
  if (!frame.payload.empty()) msg.fields = flatten(decode_storage(frame.payload, limits));
  return msg;
}

ParsedMessage decode_payload(const LevinFrame& frame, const DecodeLimits& limits) {
  if (!is_known_command(frame.command))
    throw CodecError(ErrorKind::UnknownCommand, "unknown command " + std::to_string(frame.command));
  return decode_payload_any(frame, limits);
}

std::vector<std::uint8_t> encode_payload(const ParsedMessage& message) {
  return encode_storage(unflatten(message.fields));
}

LevinFrame frame_message(const ParsedMessage& message) {
  auto payload = encode_payload(message);
  if (message.kind == Kind::Request) return LevinFrame::request(message.command, std::move(payload));
  return LevinFrame::response(message.command, std::move(payload));
}

}  // namespace peer_sentinel::levin
