#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "peer_sentinel/config.hpp"
#include "peer_sentinel/identity.hpp"
#include "peer_sentinel/network.hpp"
#include "peer_sentinel/report.hpp"

namespace peer_sentinel {

std::string_view tool_version();

enum class InputFormat { Jsonl, RawStream };

std::optional<InputFormat> input_format_from_name(std::string_view name);
std::string_view input_format_name(InputFormat f);

struct AnalysisOptions {
  DetectorConfig config;
  std::optional<Ipv4> local_ip;
  const AsnDatabase* asn_db = nullptr;
  /// External ban list compared in the overlap matrix.
  const BanList* external_banlist = nullptr;
  unsigned jobs = 1;
};

struct IngestSummary {
  std::size_t records = 0;
  std::size_t skipped_lines = 0;
  std::size_t order_violations = 0;
  std::size_t stream_errors = 0;
  std::size_t connections = 0;
  std::size_t dropped_connections = 0;
  std::size_t unassigned_records = 0;
  std::size_t peer_lists = 0;
  std::vector<std::string> warnings;
};

struct AnalysisResult {
  Ipv4 local_ip;
  IngestSummary ingest;
  std::vector<Connection> connections;
  /// Lists received from remote peers.
  std::vector<PeerList> lists;
  std::vector<IdObservation> id_observations;
  std::vector<IdCluster> id_clusters;
  std::optional<IdMultiplicity> id_multiplicity;
  /// Sorted by (ip, category), one per pair.
  std::vector<AnomalyFinding> findings;
  /// Categories that could not be assessed on this input, with the reason.
  std::map<Category, std::string> not_assessable;
  std::vector<PeerProfile> profiles;
  std::optional<double> flagged_fraction;
  OverlapMatrix overlap;
  ExposureTimeline timeline;
  std::optional<PeerListExposure> list_exposure;
  PromotionGraph promotion;
  std::optional<InDegreeStats> in_degree;
  std::vector<SubnetCount> saturation;
  BanList banlist;
  /// Median over connections of the mean remote Timed Sync interval.
  std::optional<double> timed_sync_median;
  std::size_t timed_sync_assessed = 0;
};

/// Runs every detector over already-ingested records.
AnalysisResult analyze_records(std::vector<PacketRecord> records, const AnalysisOptions& options);

/// Reads a capture in the given format, then analyzes it.
AnalysisResult analyze_capture(const std::filesystem::path& input, InputFormat format,
                               const AnalysisOptions& options);

struct RunMeta {
  std::vector<std::string> inputs;
  InputFormat format = InputFormat::Jsonl;
  std::string config_hash;
  /// ISO-8601 UTC; the only non-deterministic report field.
  std::string generated_at;
};

Json findings_json(const AnalysisResult& r);
Json report_json(const AnalysisResult& r, const RunMeta& meta, const AnalysisOptions& options);
std::string summary_text(const AnalysisResult& r);

/// Current time as ISO-8601 UTC with second resolution.
std::string utc_now();

}  // namespace peer_sentinel
