#include "peer_sentinel/capture.hpp"

#include <algorithm>
#include <fstream>
#include <istream>
#include <iterator>
#include <ostream>
#include <sstream>
#include <unordered_map>

namespace peer_sentinel {

namespace {

constexpr std::size_t kMaxReportedErrors = 20;

std::string render_octets(const std::string& bytes) {
  const bool printable =
      std::all_of(bytes.begin(), bytes.end(), [](char c) { return c >= 0x20 && c <= 0x7e; });
  if (printable) return bytes;
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out = "hex:";
  out.reserve(4 + bytes.size() * 2);
  for (unsigned char c : bytes) {
    out.push_back(kHex[c >> 4]);
    out.push_back(kHex[c & 0xF]);
  }
  return out;
}

Json value_to_json(const levin::EpeeValue& value);

Json section_to_json(const levin::EpeeSection& section) {
  Json out = Json::object();
  for (const auto& [path, value] : levin::flatten(section)) out[path] = value_to_json(value);
  return out;
}

Json value_to_json(const levin::EpeeValue& value) {
  return std::visit(
      [](const auto& v) -> Json {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, std::string>) {
          return render_octets(v);
        } else if constexpr (std::is_same_v<T, levin::EpeeSection>) {
          return section_to_json(v);
        } else if constexpr (std::is_same_v<T, levin::EpeeArray>) {
          Json arr = Json::array();
          for (const auto& item : v.items) arr.push_back(value_to_json(item));
          return arr;
        } else if constexpr (std::is_same_v<T, std::int8_t> || std::is_same_v<T, std::int16_t> ||
                             std::is_same_v<T, std::int32_t> || std::is_same_v<T, std::int64_t>) {
          return static_cast<std::int64_t>(v);
        } else if constexpr (std::is_same_v<T, std::uint8_t> || std::is_same_v<T, std::uint16_t> ||
                             std::is_same_v<T, std::uint32_t> || std::is_same_v<T, std::uint64_t>) {
          return static_cast<std::uint64_t>(v);
        } else {
          return v;  // bool, double
        }
      },
      value.data);
}

// Peer-list entry: {adr: {type, addr: {m_ip, m_port}}, id, last_seen, pruning_seed,
// rpc_port, rpc_credits_per_hash} on the wire; canonical object in records.
Json entry_to_json(const levin::EpeeSection& section) {
  auto flat = levin::flatten(section);
  Json out = Json::object();
  auto take = [&flat](const std::string& key) -> const levin::EpeeValue* {
    auto it = flat.find(key);
    return it == flat.end() ? nullptr : &it->second;
  };

  std::uint64_t type = 1;
  if (const auto* t = take("adr.type")) type = t->as_unsigned().value_or(0);
  const levin::EpeeValue* m_ip = take("adr.addr.m_ip");
  if (type == 1 && m_ip && m_ip->as_unsigned()) {
    // m_ip is the in_addr value: first octet in the lowest byte.
    const auto raw = static_cast<std::uint32_t>(*m_ip->as_unsigned());
    out["ip"] = Ipv4(static_cast<std::uint8_t>(raw), static_cast<std::uint8_t>(raw >> 8),
                     static_cast<std::uint8_t>(raw >> 16), static_cast<std::uint8_t>(raw >> 24))
                    .to_string();
    flat.erase("adr.addr.m_ip");
    flat.erase("adr.type");
    if (const auto* port = take("adr.addr.m_port")) {
      out["port"] = port->as_unsigned().value_or(0);
      flat.erase("adr.addr.m_port");
    }
  } else if (type == 2) {
    if (const auto* addr = take("adr.addr.addr")) {
      if (const auto* bytes = addr->get_if<std::string>()) {
        out["ip"] = "ipv6:" + render_octets(*bytes);
        flat.erase("adr.addr.addr");
        flat.erase("adr.type");
      }
    }
    if (const auto* port = take("adr.addr.m_port")) {
      out["port"] = port->as_unsigned().value_or(0);
      flat.erase("adr.addr.m_port");
    }
  } else if (type == 3 || type == 4) {
    if (const auto* host = take("adr.addr.host")) {
      if (const auto* text = host->get_if<std::string>()) {
        out["ip"] = render_octets(*text);
        flat.erase("adr.addr.host");
        flat.erase("adr.type");
      }
    }
    if (const auto* port = take("adr.addr.port")) {
      out["port"] = port->as_unsigned().value_or(0);
      flat.erase("adr.addr.port");
    }
  }

  static const std::pair<const char*, const char*> kRenames[] = {
      {"id", "peer_id"},
      {"last_seen", "last_seen"},
      {"pruning_seed", "pruning_seed"},
      {"rpc_port", "rpc_port"},
      {"rpc_credits_per_hash", "rpc_credits_per_hash"},
  };
  for (const auto& [wire, canonical] : kRenames) {
    auto it = flat.find(wire);
    if (it == flat.end()) continue;
    out[canonical] = value_to_json(it->second);
    flat.erase(it);
  }
  for (const auto& [path, value] : flat) out[path] = value_to_json(value);
  return out;
}

template <typename T>
std::optional<T> json_unsigned(const Json& j, std::uint64_t max) {
  if (!j.is_number_integer()) return std::nullopt;
  if (j.is_number_unsigned()) {
    auto v = j.get<std::uint64_t>();
    if (v > max) return std::nullopt;
    return static_cast<T>(v);
  }
  auto v = j.get<std::int64_t>();
  if (v < 0 || static_cast<std::uint64_t>(v) > max) return std::nullopt;
  return static_cast<T>(v);
}

std::optional<Ipv4> json_ip(const Json& j) {
  if (!j.is_string()) return std::nullopt;
  return Ipv4::parse(j.get_ref<const std::string&>());
}

void add_domain(std::set<std::string>& out, const Json& value, const std::string& path) {
  out.insert(path);
  if (!value.is_array()) return;
  for (const auto& item : value) {
    if (!item.is_object()) continue;
    for (const auto& [key, inner] : item.items()) add_domain(out, inner, path + "[]." + key);
  }
}

}  // namespace

std::string_view carrier_name(ListCarrier carrier) {
  switch (carrier) {
    case ListCarrier::HandshakeResponse: return "handshake-response";
    case ListCarrier::TimedSyncResponse: return "timed-sync-response";
    case ListCarrier::Other: return "other";
  }
  return "other";
}

Json fields_from_message(const levin::ParsedMessage& message) {
  Json out = Json::object();
  for (const auto& [path, value] : message.fields) {
    const auto* array = value.get_if<levin::EpeeArray>();
    if (path == kPeerListPath && array && array->element == levin::EpeeType::Section) {
      Json entries = Json::array();
      for (const auto& item : array->items) entries.push_back(entry_to_json(*item.get_if<levin::EpeeSection>()));
      out[path] = std::move(entries);
    } else {
      out[path] = value_to_json(value);
    }
  }
  return out;
}

std::set<std::string> field_domain(const Json& fields) {
  std::set<std::string> out;
  for (const auto& [key, value] : fields.items()) add_domain(out, value, key);
  return out;
}

Json record_to_json(const PacketRecord& r) {
  Json j = Json::object();
  j["ts"] = r.ts;
  j["src_ip"] = r.src_ip.to_string();
  j["src_port"] = r.src_port;
  j["dst_ip"] = r.dst_ip.to_string();
  j["dst_port"] = r.dst_port;
  if (r.stream_id) j["stream_id"] = *r.stream_id;
  j["command"] = r.command;
  j["kind"] = std::string(levin::kind_name(r.kind));
  j["fields"] = r.fields;
  if (!r.segment_lengths.empty()) j["segment_lengths"] = r.segment_lengths;
  if (r.decode_error) j["decode_error"] = *r.decode_error;
  return j;
}

std::optional<PacketRecord> record_from_json(const Json& j, std::string* reason) {
  auto fail = [reason](const std::string& why) -> std::optional<PacketRecord> {
    if (reason) *reason = why;
    return std::nullopt;
  };
  if (!j.is_object()) return fail("not an object");
  PacketRecord r;

  auto ts = j.find("ts");
  if (ts == j.end() || !ts->is_number()) return fail("missing or non-numeric ts");
  r.ts = ts->get<double>();

  auto endpoint = [&j](const char* ip_key, const char* port_key, Ipv4& ip, std::uint16_t& port) {
    auto ip_it = j.find(ip_key);
    auto port_it = j.find(port_key);
    if (ip_it == j.end() || port_it == j.end()) return false;
    auto parsed_ip = json_ip(*ip_it);
    auto parsed_port = json_unsigned<std::uint16_t>(*port_it, 65535);
    if (!parsed_ip || !parsed_port) return false;
    ip = *parsed_ip;
    port = *parsed_port;
    return true;
  };
  if (!endpoint("src_ip", "src_port", r.src_ip, r.src_port)) return fail("bad source endpoint");
  if (!endpoint("dst_ip", "dst_port", r.dst_ip, r.dst_port)) return fail("bad destination endpoint");

  if (auto it = j.find("stream_id"); it != j.end() && !it->is_null()) {
    auto id = json_unsigned<std::uint64_t>(*it, UINT64_MAX);
    if (!id) return fail("bad stream_id");
    r.stream_id = id;
  }

  auto cmd = j.find("command");
  if (cmd == j.end()) return fail("missing command");
  if (cmd->is_string()) {
    auto code = levin::command_from_name(cmd->get_ref<const std::string&>());
    if (!code) return fail("unknown command name");
    r.command = *code;
  } else if (auto code = json_unsigned<std::uint32_t>(*cmd, UINT32_MAX)) {
    r.command = *code;
  } else {
    return fail("bad command");
  }

  auto kind = j.find("kind");
  if (kind == j.end() || !kind->is_string()) return fail("missing kind");
  if (*kind == "request") {
    r.kind = levin::Kind::Request;
  } else if (*kind == "response") {
    r.kind = levin::Kind::Response;
  } else {
    return fail("kind must be request or response");
  }

  if (auto it = j.find("fields"); it != j.end()) {
    if (!it->is_object()) return fail("fields must be an object");
    r.fields = *it;
  }
  if (auto it = j.find("segment_lengths"); it != j.end() && !it->is_null()) {
    if (!it->is_array()) return fail("segment_lengths must be an array");
    for (const auto& s : *it) {
      auto len = json_unsigned<std::uint32_t>(s, UINT32_MAX);
      if (!len) return fail("bad segment length");
      r.segment_lengths.push_back(*len);
    }
  }
  if (auto it = j.find("decode_error"); it != j.end() && it->is_string()) r.decode_error = it->get<std::string>();
  return r;
}

JsonlCapture parse_jsonl(std::istream& in) {
  JsonlCapture out;
  std::unordered_map<std::uint64_t, double> last_ts;
  std::string line;
  while (std::getline(in, line)) {
    ++out.stats.lines;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::string reason;
    std::optional<PacketRecord> record;
    Json parsed = Json::parse(line, nullptr, false);
    if (parsed.is_discarded()) {
      reason = "invalid JSON";
    } else {
      record = record_from_json(parsed, &reason);
    }
    if (!record) {
      ++out.stats.skipped;
      if (out.stats.errors.size() < kMaxReportedErrors)
        out.stats.errors.push_back("line " + std::to_string(out.stats.lines) + ": " + reason);
      continue;
    }
    if (record->stream_id) {
      auto [it, inserted] = last_ts.emplace(*record->stream_id, record->ts);
      if (!inserted) {
        if (record->ts < it->second) ++out.stats.order_violations;
        it->second = std::max(it->second, record->ts);
      }
    }
    out.records.push_back(std::move(*record));
    ++out.stats.records;
  }
  const double ratio = out.stats.lines ? static_cast<double>(out.stats.skipped) / out.stats.lines : 0.0;
  if (out.stats.skipped > 1 && ratio > 0.01) {
    throw IngestError("schema violation: " + std::to_string(out.stats.skipped) + " of " +
                      std::to_string(out.stats.lines) + " lines malformed (" +
                      (out.stats.errors.empty() ? std::string() : out.stats.errors.front()) + ")");
  }
  return out;
}

JsonlCapture read_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open " + path.string());
  return parse_jsonl(in);
}

void write_jsonl(std::ostream& out, std::span<const PacketRecord> records) {
  for (const auto& r : records) out << record_to_json(r).dump() << '\n';
}

Json meta_to_json(const StreamMeta& m) {
  Json j = Json::object();
  j["src_ip"] = m.src_ip.to_string();
  j["src_port"] = m.src_port;
  j["dst_ip"] = m.dst_ip.to_string();
  j["dst_port"] = m.dst_port;
  if (m.stream_id) j["stream_id"] = *m.stream_id;
  j["ts_base"] = m.ts_base;
  if (!m.frame_ts.empty()) j["frame_ts"] = m.frame_ts;
  if (!m.segment_lengths.empty()) j["segment_lengths"] = m.segment_lengths;
  return j;
}

StreamMeta meta_from_json(const Json& j) {
  StreamMeta m;
  auto ip = [&j](const char* key) {
    auto it = j.find(key);
    if (it == j.end()) return Ipv4();
    auto parsed = json_ip(*it);
    if (!parsed) throw IngestError(std::string("stream meta: bad ") + key);
    return *parsed;
  };
  auto port = [&j](const char* key) -> std::uint16_t {
    auto it = j.find(key);
    if (it == j.end()) return 0;
    auto parsed = json_unsigned<std::uint16_t>(*it, 65535);
    if (!parsed) throw IngestError(std::string("stream meta: bad ") + key);
    return *parsed;
  };
  m.src_ip = ip("src_ip");
  m.dst_ip = ip("dst_ip");
  m.src_port = port("src_port");
  m.dst_port = port("dst_port");
  if (auto it = j.find("stream_id"); it != j.end()) m.stream_id = it->get<std::uint64_t>();
  if (auto it = j.find("ts_base"); it != j.end()) m.ts_base = it->get<double>();
  if (auto it = j.find("frame_ts"); it != j.end()) m.frame_ts = it->get<std::vector<double>>();
  if (auto it = j.find("segment_lengths"); it != j.end())
    m.segment_lengths = it->get<std::vector<std::vector<std::uint32_t>>>();
  return m;
}

StreamDecode decode_stream(std::span<const std::uint8_t> payload, const StreamMeta& meta,
                           const levin::DecodeLimits& limits) {
  StreamDecode out;
  std::size_t offset = 0;
  std::size_t index = 0;
  while (offset < payload.size()) {
    levin::DecodedFrame decoded;
    try {
      decoded = levin::decode_frame(payload.subspan(offset), limits);
    } catch (const levin::CodecError& e) {
      // No way to resynchronise after a framing error.
      out.errors.push_back({offset, e.kind(), e.what(), true});
      break;
    }

    PacketRecord r;
    r.ts = index < meta.frame_ts.size() ? meta.frame_ts[index] : meta.ts_base;
    r.src_ip = meta.src_ip;
    r.src_port = meta.src_port;
    r.dst_ip = meta.dst_ip;
    r.dst_port = meta.dst_port;
    r.stream_id = meta.stream_id;
    r.command = decoded.frame.command;
    if (index < meta.segment_lengths.size()) r.segment_lengths = meta.segment_lengths[index];

    try {
      levin::ParsedMessage msg;
      try {
        msg = levin::decode_payload(decoded.frame, limits);
      } catch (const levin::CodecError& e) {
        if (e.kind() != levin::ErrorKind::UnknownCommand) throw;
        out.errors.push_back({offset, e.kind(), e.what(), false});
        msg = levin::decode_payload_any(decoded.frame, limits);
      }
      r.kind = msg.kind;
      r.fields = fields_from_message(msg);
    } catch (const levin::CodecError& e) {
      out.errors.push_back({offset, e.kind(), e.what(), true});
      r.kind = (decoded.frame.flags & levin::kPacketResponse) ? levin::Kind::Response : levin::Kind::Request;
      r.decode_error = std::string(levin::error_kind_name(e.kind()));
    }
    out.records.push_back(std::move(r));
    offset += decoded.consumed;
    ++index;
  }
  return out;
}

RawCapture read_raw_streams(const std::filesystem::path& path, const levin::DecodeLimits& limits) {
  namespace fs = std::filesystem;
  std::vector<fs::path> files;
  if (fs::is_directory(path)) {
    for (const auto& entry : fs::directory_iterator(path))
      if (entry.is_regular_file() && entry.path().extension() == ".levin") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
  } else if (fs::exists(path)) {
    files.push_back(path);
  } else {
    throw IngestError("cannot open " + path.string());
  }

  RawCapture out;
  for (std::size_t i = 0; i < files.size(); ++i) {
    const auto& file = files[i];
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IngestError("cannot open " + file.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    StreamMeta meta;
    fs::path sidecar = file;
    sidecar.replace_extension(".meta.json");
    if (fs::exists(sidecar)) {
      std::ifstream meta_in(sidecar);
      Json j = Json::parse(meta_in, nullptr, false);
      if (j.is_discarded()) throw IngestError("invalid JSON in " + sidecar.string());
      meta = meta_from_json(j);
    }

    auto decoded = decode_stream(bytes, meta, limits);
    const std::uint64_t key = meta.stream_id.value_or(i);
    for (const auto& err : decoded.errors) {
      if (err.fatal) ++out.stream_errors[key];
      out.error_reports.push_back(file.filename().string() + " @" + std::to_string(err.offset) + ": " + err.message);
    }
    for (auto& r : decoded.records) out.records.push_back(std::move(r));
    ++out.files;
  }
  std::stable_sort(out.records.begin(), out.records.end(),
                   [](const PacketRecord& a, const PacketRecord& b) { return a.ts < b.ts; });
  return out;
}

PeerListEntry entry_from_json(const Json& j) {
  PeerListEntry e;
  if (auto it = j.find("ip"); it != j.end() && it->is_string()) {
    e.address = it->get<std::string>();
    e.ip = Ipv4::parse(e.address);
  }
  if (auto it = j.find("port"); it != j.end()) e.port = json_unsigned<std::uint16_t>(*it, 65535).value_or(0);
  if (auto it = j.find("peer_id"); it != j.end()) e.peer_id = json_unsigned<std::uint64_t>(*it, UINT64_MAX);
  if (auto it = j.find("last_seen"); it != j.end() && it->is_number_integer()) e.last_seen = it->get<std::int64_t>();
  if (auto it = j.find("pruning_seed"); it != j.end())
    e.pruning_seed = json_unsigned<std::uint32_t>(*it, UINT32_MAX);
  if (auto it = j.find("rpc_port"); it != j.end()) e.rpc_port = json_unsigned<std::uint16_t>(*it, 65535);
  if (auto it = j.find("rpc_credits_per_hash"); it != j.end())
    e.rpc_credits_per_hash = json_unsigned<std::uint32_t>(*it, UINT32_MAX);
  return e;
}

std::vector<PeerList> extract_peer_lists(std::span<const PacketRecord> records) {
  std::vector<PeerList> out;
  for (const auto& r : records) {
    auto it = r.fields.find(kPeerListPath);
    if (it == r.fields.end() || !it->is_array()) continue;
    PeerList list;
    list.source_ip = r.src_ip;
    list.ts = r.ts;
    if (r.command == levin::command::kHandshake && r.kind == levin::Kind::Response) {
      list.carrier = ListCarrier::HandshakeResponse;
    } else if (r.command == levin::command::kTimedSync && r.kind == levin::Kind::Response) {
      list.carrier = ListCarrier::TimedSyncResponse;
    }
    list.entries.reserve(it->size());
    for (const auto& item : *it) {
      PeerListEntry entry = item.is_object() ? entry_from_json(item) : PeerListEntry{};
      if (!entry.ip) ++list.invalid_entries;
      list.entries.push_back(std::move(entry));
    }
    out.push_back(std::move(list));
  }
  return out;
}

}  // namespace peer_sentinel
