#include "peer_sentinel/config.hpp"

#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <istream>
#include <sstream>
#include <vector>

namespace peer_sentinel {

namespace {

struct Field {
  const char* key;
  const char* comment;
  std::function<std::string(const DetectorConfig&)> get;
  std::function<void(DetectorConfig&, const std::string&)> set;
};

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

double parse_double(const std::string& key, const std::string& text) {
  char* end = nullptr;
  const double v = std::strtod(text.c_str(), &end);
  if (text.empty() || end != text.c_str() + text.size()) throw ConfigError(key + ": expected a number, got '" + text + "'");
  return v;
}

std::size_t parse_count(const std::string& key, const std::string& text) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw ConfigError(key + ": expected a non-negative integer, got '" + text + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError(key + ": expected true or false, got '" + text + "'");
}

#define PS_DOUBLE(name, comment)                                                                 \
  Field {                                                                                        \
    #name, comment, [](const DetectorConfig& c) { return format_double(c.name); },               \
        [](DetectorConfig& c, const std::string& v) { c.name = parse_double(#name, v); }         \
  }
#define PS_COUNT(name, comment)                                                                  \
  Field {                                                                                        \
    #name, comment, [](const DetectorConfig& c) { return std::to_string(c.name); },              \
        [](DetectorConfig& c, const std::string& v) { c.name = parse_count(#name, v); }          \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> kFields = {
      PS_DOUBLE(diversity_threshold, "full lists with fewer distinct /24s per entry than this are flagged (<10 of 250)"),
      PS_DOUBLE(similarity_threshold, "subnet-reduced Jaccard above this counts as a similar pair; random lists sit below 0.2"),
      PS_COUNT(similarity_min_repeats, "similar pairs a source needs before it is flagged"),
      PS_DOUBLE(short_lived_max, "seconds; handshake-completed connections shorter than this are short-lived"),
      PS_COUNT(short_lived_peer_min, "flag peers with strictly more short-lived connections than this"),
      PS_DOUBLE(throttle_threshold, "seconds; mean remote Timed Sync interval above this is throttled"),
      PS_DOUBLE(throttle_min_duration, "seconds; only connections at least this long are assessed for throttling"),
      PS_COUNT(ping_flood_min_pings, "remote Ping requests on one incoming connection before it can be a flood"),
      PS_DOUBLE(ping_flood_max_mean_gap, "seconds; mean gap between those Pings must be below this"),
      PS_COUNT(full_list_size, "entries in a full peer list"),
      PS_DOUBLE(timed_sync_standard, "seconds; protocol Timed Sync period"),
      PS_DOUBLE(timing_tolerance, "seconds; tolerated deviation from the Timed Sync period"),
      Field{"sequence_template", "message-order template; only monero-default is built in",
            [](const DetectorConfig& c) { return c.sequence_template; },
            [](DetectorConfig& c, const std::string& v) { c.sequence_template = v; }},
      PS_COUNT(fragment_min_messages, "multi-segment messages needed to judge a peer's fragmentation"),
      PS_DOUBLE(fragment_min_ratio, "share of those whose first segment is the bare 8-octet signature"),
      PS_COUNT(saturation_threshold, "distinct addresses in one /24 that mark it saturated"),
      PS_DOUBLE(session_gap, "seconds of silence that split a 5-tuple session (protocol inactivity drop)"),
      PS_DOUBLE(exposure_bucket, "seconds per connection-pool exposure bucket"),
      Field{"list_ids_drive_flagging", "let identifiers from peer-list entries raise PeerId findings",
            [](const DetectorConfig& c) { return std::string(c.list_ids_drive_flagging ? "true" : "false"); },
            [](DetectorConfig& c, const std::string& v) {
              c.list_ids_drive_flagging = parse_bool("list_ids_drive_flagging", v);
            }},
  };
  return kFields;
}

#undef PS_DOUBLE
#undef PS_COUNT

void assign(DetectorConfig& config, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(config, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

void DetectorConfig::validate() const {
  auto positive = [](const char* name, double v) {
    if (!(v > 0.0)) throw ConfigError(std::string(name) + " must be positive");
  };
  auto ratio = [](const char* name, double v) {
    if (!(v > 0.0 && v <= 1.0)) throw ConfigError(std::string(name) + " must lie in (0, 1]");
  };
  ratio("diversity_threshold", diversity_threshold);
  ratio("similarity_threshold", similarity_threshold);
  ratio("fragment_min_ratio", fragment_min_ratio);
  positive("similarity_min_repeats", static_cast<double>(similarity_min_repeats));
  positive("short_lived_max", short_lived_max);
  positive("short_lived_peer_min", static_cast<double>(short_lived_peer_min));
  positive("throttle_threshold", throttle_threshold);
  positive("throttle_min_duration", throttle_min_duration);
  positive("ping_flood_min_pings", static_cast<double>(ping_flood_min_pings));
  positive("ping_flood_max_mean_gap", ping_flood_max_mean_gap);
  positive("full_list_size", static_cast<double>(full_list_size));
  positive("timed_sync_standard", timed_sync_standard);
  positive("timing_tolerance", timing_tolerance);
  positive("fragment_min_messages", static_cast<double>(fragment_min_messages));
  positive("saturation_threshold", static_cast<double>(saturation_threshold));
  positive("session_gap", session_gap);
  positive("exposure_bucket", exposure_bucket);
  if (sequence_template != "monero-default")
    throw ConfigError("sequence_template '" + sequence_template + "' is not built in");
}

DetectorConfig parse_config(std::istream& in, DetectorConfig base) {
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(number) + ": expected key = value");
    try {
      assign(base, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(number) + ": " + e.what());
    }
  }
  base.validate();
  return base;
}

DetectorConfig load_config(const std::filesystem::path& path, DetectorConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  return parse_config(in, std::move(base));
}

void apply_config_override(DetectorConfig& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  assign(config, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

std::string dump_config(const DetectorConfig& config, bool with_comments) {
  std::ostringstream out;
  for (const auto& f : fields()) {
    if (with_comments) out << "# " << f.comment << '\n';
    out << f.key << " = " << f.get(config) << '\n';
  }
  return out.str();
}

std::string config_hash(const DetectorConfig& config) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : dump_config(config, false)) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace peer_sentinel
