#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "peer_sentinel/connection.hpp"
#include "peer_sentinel/detectors.hpp"

namespace peer_sentinel {

// ---------------------------------------------------------------------------
// Promotion topology

/// Directed graph promoter -> promoted, one edge per (source, entry) pair with
/// multiplicity accumulated over lists. Self-promotions are kept apart.
struct PromotionGraph {
  std::set<Ipv4> nodes;
  std::map<std::pair<Ipv4, Ipv4>, std::size_t> edges;
  std::map<Ipv4, std::size_t> self_edges;
};

PromotionGraph build_promotion_graph(std::span<const PeerList> lists);

class EmptyGraph : public std::invalid_argument {
 public:
  EmptyGraph() : std::invalid_argument("promotion graph has no nodes") {}
};

struct InDegreeStats {
  std::size_t node_count = 0;
  double mean = 0.0;
  double median = 0.0;
  std::size_t max = 0;
  /// Highest in-degrees first; ties by ascending ip.
  std::vector<std::pair<Ipv4, std::size_t>> top;
};

/// In-degree = distinct promoters other than the node itself.
std::map<Ipv4, std::size_t> in_degrees(const PromotionGraph& g);
InDegreeStats in_degree_stats(const PromotionGraph& g, std::size_t top_k = 10);

// ---------------------------------------------------------------------------
// ASN lookup

struct AsnInfo {
  std::uint32_t asn = 0;
  std::string org = "unknown";
};

class AsnDatabase {
 public:
  /// CSV with header `prefix,asn,org`. Throws std::runtime_error naming the line.
  static AsnDatabase parse(std::istream& in);
  static AsnDatabase load(const std::filesystem::path& path);

  void add(std::uint32_t prefix, int length, std::uint32_t asn, std::string org);
  /// Longest-prefix match; ASN 0 "unknown" when nothing matches.
  AsnInfo lookup(Ipv4 ip) const;
  std::size_t size() const { return count_; }

 private:
  // One table per prefix length, keyed by the masked network address.
  std::vector<std::map<std::uint32_t, AsnInfo>> by_length_ = std::vector<std::map<std::uint32_t, AsnInfo>>(33);
  std::size_t count_ = 0;
};

class DbMissing : public std::runtime_error {
 public:
  DbMissing() : std::runtime_error("an ASN database is required (--asn-db)") {}
};

// ---------------------------------------------------------------------------
// Subnet saturation

struct SubnetCount {
  Subnet24 subnet;
  std::size_t unique_ips = 0;
  AsnInfo as;
  bool saturated = false;
};

/// Counts distinct ips per /24, largest first (ties by subnet). `db` may be null.
std::vector<SubnetCount> subnet_saturation(std::span<const Ipv4> all_ips, std::size_t threshold,
                                           const AsnDatabase* db = nullptr);

/// First and last time each address was seen, either connected or promoted.
using Sightings = std::map<Ipv4, std::pair<double, double>>;

/// Remote ips of connections plus valid entries of every list.
Sightings collect_sightings(std::span<const Connection> conns, std::span<const PeerList> lists);

/// One SaturatedSubnetMember finding per observed ip inside a saturated /24.
std::vector<AnomalyFinding> saturation_findings(std::span<const SubnetCount> counts, const Sightings& sightings);

struct AsnRollup {
  AsnInfo as;
  std::set<Ipv4> ips;
  std::set<Subnet24> subnets;
};

/// Groups addresses by origin AS. Throws DbMissing when `db` is null.
std::map<std::uint32_t, AsnRollup> asn_rollup(std::span<const Ipv4> ips, const AsnDatabase* db);

}  // namespace peer_sentinel
