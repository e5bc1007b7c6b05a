#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "peer_sentinel/connection.hpp"
#include "peer_sentinel/detectors.hpp"

namespace peer_sentinel {

enum class IdSource { Handshake, Pong, PeerListEntry };

std::string_view id_source_name(IdSource s);

/// One announcement of a node identifier by (or on behalf of) an address.
struct IdObservation {
  double ts = 0.0;
  Ipv4 ip;
  std::uint64_t peer_id = 0;  // never 0; zero means "not announced"
  IdSource source = IdSource::Handshake;

  bool operator==(const IdObservation&) const = default;
};

/// Identifier as 16 lowercase hex digits, the form used in reports.
std::string format_peer_id(std::uint64_t id);

/// Remote handshake node_data.peer_id, remote Ping-response peer_id, and the
/// peer_id of every valid entry in the given lists. Sorted by (ts, ip, id).
std::vector<IdObservation> collect_id_observations(std::span<const Connection> conns,
                                                   std::span<const PeerList> lists);

/// Keeps handshake and pong observations; list-sourced ones only when asked.
std::vector<IdObservation> flagging_observations(std::span<const IdObservation> all, bool include_lists);

/// Flags an ip whose identifier sequence revisits an earlier identifier
/// after announcing a different one (A..B..A). Input must be time-sorted.
std::vector<AnomalyFinding> detect_temporal_id_anomaly(std::span<const IdObservation> observations);

struct IdCluster {
  std::set<Ipv4> ips;
  std::set<std::uint64_t> ids;
  /// Distinct (ip, id) pairs inside the component.
  std::size_t edge_count = 0;

  bool operator==(const IdCluster&) const = default;
};

/// Connected components of the ip/id bipartite graph having at least two of
/// each side, ordered by their smallest ip.
std::vector<IdCluster> build_id_clusters(std::span<const IdObservation> observations);

/// One PeerIdCluster finding per cluster member.
std::vector<AnomalyFinding> cluster_findings(std::span<const IdCluster> clusters,
                                             std::span<const IdObservation> observations);

struct IdMultiplicity {
  double fraction_single_id = 0.0;
  /// distinct-id count -> number of ips
  std::map<std::size_t, std::size_t> histogram;
};

/// Nullopt for an empty input.
std::optional<IdMultiplicity> id_multiplicity_stats(std::span<const IdObservation> observations);

}  // namespace peer_sentinel
