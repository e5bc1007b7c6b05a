#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "peer_sentinel/identity.hpp"
#include "peer_sentinel/network.hpp"

namespace peer_sentinel {

// ---------------------------------------------------------------------------
// Ban lists

/// Single addresses plus /24 ranges. A /24 stands for its 254 host addresses
/// .1 through .254; network and broadcast addresses are not counted.
struct BanList {
  std::set<Ipv4> ips;
  std::set<Subnet24> subnets;

  /// True when the ip is listed or is a host address of a listed /24.
  bool covers(Ipv4 ip) const;
  /// Drops single addresses already covered by a listed /24.
  void normalize();
  std::set<Ipv4> expand() const;
  std::size_t expanded_size() const;

  bool operator==(const BanList&) const = default;
};

inline constexpr std::uint8_t kFirstHost = 1;
inline constexpr std::uint8_t kLastHost = 254;

class BanListParseError : public std::runtime_error {
 public:
  BanListParseError(std::size_t line, const std::string& what)
      : std::runtime_error("ban list line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// One entry per line: dotted quad, `a.b.c.d/32`, or `a.b.c.0/24`. `#` starts a comment.
BanList parse_banlist(std::istream& in);
BanList load_banlist(const std::filesystem::path& path);
/// Entries in address order, one per line; empty text for an empty list.
std::string render_banlist(const BanList& list);

struct BanListDiff {
  std::set<Ipv4> only_a;
  std::set<Ipv4> only_b;
  std::set<Ipv4> both;
  std::size_t expanded_a = 0;
  std::size_t expanded_b = 0;
};

BanListDiff expand_and_diff(const BanList& a, const BanList& b);

// ---------------------------------------------------------------------------
// Profiles

struct PeerProfile {
  Ipv4 ip;
  AsnInfo as;
  /// Category -> evidence of the finding.
  std::map<Category, Json> categories;
  std::size_t connections = 0;
  std::size_t incoming = 0;
  std::size_t outgoing = 0;
  double total_duration = 0.0;
  double max_duration = 0.0;
  std::set<std::uint64_t> ids;
  bool connected = false;
  bool promoted = false;

  Subnet24 subnet() const { return subnet_of(ip); }
  bool flagged() const { return !categories.empty(); }
};

/// One profile per ip that was connected, promoted, or named by a finding,
/// ordered by ip. `db` may be null.
std::vector<PeerProfile> build_profiles(std::span<const AnomalyFinding> findings, std::span<const Connection> conns,
                                        std::span<const IdObservation> ids, std::span<const PeerList> lists,
                                        const AsnDatabase* db = nullptr);

/// |flagged and connected| / |connected|; nullopt without connected peers.
std::optional<double> flagged_fraction(std::span<const PeerProfile> profiles);

std::set<Ipv4> flagged_set(std::span<const PeerProfile> profiles);

Json profile_to_json(const PeerProfile& p);

// ---------------------------------------------------------------------------
// Overlap

/// Square matrices over `labels`: the twelve categories, plus "BanList" when
/// an external list was supplied. Cell (i, j) counts members of both.
struct OverlapMatrix {
  std::vector<std::string> labels;
  std::vector<std::vector<std::size_t>> ips;
  std::vector<std::vector<std::size_t>> ases;
};

OverlapMatrix overlap_matrix(std::span<const PeerProfile> profiles, const BanList* external = nullptr);

Json overlap_to_json(const OverlapMatrix& m, bool with_as);

// ---------------------------------------------------------------------------
// Exposure

struct ExposurePoint {
  double t = 0.0;
  std::size_t incoming_active = 0;
  std::size_t incoming_flagged = 0;
  std::size_t outgoing_active = 0;
  std::size_t outgoing_flagged = 0;
  /// Null when the bucket had no connection in that direction.
  std::optional<double> incoming;
  std::optional<double> outgoing;
};

struct ExposureTimeline {
  double bucket = 60.0;
  std::vector<ExposurePoint> points;
  std::optional<double> mean_incoming;
  std::optional<double> mean_outgoing;
};

/// Buckets [t, t + bucket) from the earliest start; a connection is active in
/// a bucket when start < t + bucket and end >= t.
ExposureTimeline exposure_timeline(std::span<const Connection> conns, const std::set<Ipv4>& flagged,
                                   double bucket = 60.0);

struct ListExposure {
  Ipv4 source;
  double ts = 0.0;
  double fraction = 0.0;
};

struct PeerListExposure {
  std::vector<ListExposure> lists;
  double mean = 0.0;
  double min = 0.0;
  /// The list attaining `min`.
  std::size_t min_index = 0;
};

/// Full lists only; nullopt when there are none.
std::optional<PeerListExposure> peer_list_exposure(std::span<const PeerList> lists, const std::set<Ipv4>& flagged,
                                                   std::size_t full_size = kFullPeerList);

/// Flagged ips plus saturated /24s, normalized.
BanList emit_banlist(std::span<const PeerProfile> profiles, std::span<const SubnetCount> saturation);

}  // namespace peer_sentinel
