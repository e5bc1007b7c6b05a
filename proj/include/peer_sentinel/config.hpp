#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>

namespace peer_sentinel {

/// Every tunable of the analysis. Defaults reproduce the published
/// thresholds; the Ping-flood and fragmentation numbers are local choices.
struct DetectorConfig {
  double diversity_threshold = 0.04;
  double similarity_threshold = 0.3;
  std::size_t similarity_min_repeats = 2;
  double short_lived_max = 1.0;
  /// A peer is flagged with strictly more short-lived connections than this.
  std::size_t short_lived_peer_min = 10;
  double throttle_threshold = 90.0;
  double throttle_min_duration = 600.0;
  std::size_t ping_flood_min_pings = 20;
  double ping_flood_max_mean_gap = 5.0;
  std::size_t full_list_size = 250;
  /// Expected Timed Sync period and tolerated deviation (reported as evidence).
  double timed_sync_standard = 60.0;
  double timing_tolerance = 30.0;
  std::string sequence_template = "monero-default";
  std::size_t fragment_min_messages = 5;
  double fragment_min_ratio = 0.9;
  std::size_t saturation_threshold = 100;
  double session_gap = 120.0;
  double exposure_bucket = 60.0;
  /// Let peer-list-sourced identifiers drive PeerId findings.
  bool list_ids_drive_flagging = false;

  /// Throws ConfigError when a threshold is non-positive or a ratio is outside (0, 1].
  void validate() const;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// `key = value` lines; `#` starts a comment. Unknown keys are errors.
DetectorConfig parse_config(std::istream& in, DetectorConfig base = {});
DetectorConfig load_config(const std::filesystem::path& path, DetectorConfig base = {});
/// Applies one `key=value` override.
void apply_config_override(DetectorConfig& config, const std::string& assignment);

/// Canonical text form; with comments it is the `config --defaults` output.
std::string dump_config(const DetectorConfig& config, bool with_comments);
/// FNV-1a over the canonical form without comments, as 16 hex digits.
std::string config_hash(const DetectorConfig& config);

}  // namespace peer_sentinel
