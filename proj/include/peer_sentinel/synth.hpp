#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "peer_sentinel/capture.hpp"
#include "peer_sentinel/connection.hpp"
#include "peer_sentinel/detectors.hpp"

namespace peer_sentinel::synth {

enum class Behavior {
  Standard,
  SupportFlagsOmitter,
  LastSeenSender,
  SigOnlyFragmenter,
  LowDiversityPromoter,
  ListCloner,
  ShortLivedFlooder,
  Throttler,
  PingFlooder,
  IdFlipper,
  IdClusterMember,
  SaturatedSubnet,
};

std::string_view behavior_name(Behavior b);
std::optional<Behavior> behavior_from_name(std::string_view name);
const std::vector<Behavior>& all_behaviors();

struct PeerSpec {
  Ipv4 ip;
  Behavior behavior = Behavior::Standard;
  Direction direction = Direction::Incoming;
  /// Extra addresses taking part in the pattern: the other members of a
  /// cloning group, or the peer sharing identifiers with an id-cluster member.
  std::vector<Ipv4> companions;
};

struct Scenario {
  std::uint64_t seed = 1;
  double duration = 1300.0;
  double start_ts = 1740700800.0;
  Ipv4 local_ip{10, 0, 0, 1};
  /// Half-width of the uniform jitter on every Timed Sync period.
  double timed_sync_jitter = 2.0;
  /// Share of every randomly drawn remote peer list taken from labeled ips.
  double list_contamination = 0.0;
  std::vector<PeerSpec> peers;
};

class InvalidScenario : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Parses and validates; an optional "labels" array ([ip, category] pairs)
/// must equal the labels implied by the behaviors.
Scenario scenario_from_json(const Json& j);
Scenario load_scenario(const std::filesystem::path& path);
Json scenario_to_json(const Scenario& s);

/// Throws InvalidScenario on inconsistent input.
void validate(const Scenario& s);

using Label = std::pair<Ipv4, Category>;

/// Ground truth implied by the peer behaviors.
std::set<Label> expected_labels(const Scenario& s);
/// "ip category" lines sorted by ip then category.
std::string render_labels(const std::set<Label>& labels);
std::set<Label> parse_labels(std::istream& in);

struct Corpus {
  /// Sorted by ts; each carries its stream_id and TCP segment sizes.
  std::vector<PacketRecord> records;
  std::set<Label> labels;
};

Corpus generate(const Scenario& s);

struct RawStream {
  /// File stem, e.g. "c0003-remote".
  std::string name;
  std::vector<std::uint8_t> bytes;
  StreamMeta meta;
};

/// The same traffic as `generate`, one octet stream per connection direction.
std::vector<RawStream> generate_raw(const Scenario& s);

/// Writes capture.jsonl, labels.txt and raw/<name>.levin with sidecars.
void write_corpus(const Scenario& s, const std::filesystem::path& out_dir);

}  // namespace peer_sentinel::synth
