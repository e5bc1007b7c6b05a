#pragma once

#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "peer_sentinel/capture.hpp"
#include "peer_sentinel/config.hpp"
#include "peer_sentinel/connection.hpp"

namespace peer_sentinel {

enum class Category {
  SupportFlagsOmission,
  DeprecatedLastSeen,
  SignatureOnlyFragment,
  LowDiversityPeerList,
  HighSimilarityPeerList,
  ShortLivedFlooding,
  ThrottledTimedSync,
  PingFlooding,
  SequenceViolation,
  PeerIdTemporal,
  PeerIdCluster,
  SaturatedSubnetMember,
};

inline constexpr std::size_t kCategoryCount = 12;

std::string_view category_name(Category c);
std::optional<Category> category_from_name(std::string_view name);
const std::vector<Category>& all_categories();

struct AnomalyFinding {
  Ipv4 ip;
  Category category = Category::SequenceViolation;
  /// Category-specific measurements; never empty.
  Json evidence = Json::object();
  double first_seen = 0.0;
  double last_seen = 0.0;
};

Json finding_to_json(const AnomalyFinding& f);

/// Sorts by (ip, category) and merges duplicates; evidence of later
/// duplicates is folded under "merged".
std::vector<AnomalyFinding> normalize_findings(std::vector<AnomalyFinding> findings);

// ---------------------------------------------------------------------------
// Syntactic checks

/// Required and optional field paths for one (command, kind). Peer-list entry
/// fields are addressed as "local_peerlist_new[].<key>".
struct FieldSpec {
  std::set<std::string> required;
  std::set<std::string> optional;
};

class FieldSpecTable {
 public:
  /// Field sets of the current reference client for the four base commands.
  static FieldSpecTable monero_default();

  void set(levin::CommandCode command, levin::Kind kind, FieldSpec spec);
  const FieldSpec* find(levin::CommandCode command, levin::Kind kind) const;

 private:
  std::map<std::pair<levin::CommandCode, levin::Kind>, FieldSpec> specs_;
};

struct SyntaxViolation {
  std::set<std::string> missing;
  std::set<std::string> unexpected;
};

class UnknownCommandError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Violation iff a required path is absent or a present path is neither
/// required nor optional.
std::optional<SyntaxViolation> check_syntax(const std::set<std::string>& domain, const FieldSpec& spec);
std::optional<SyntaxViolation> check_syntax(const levin::ParsedMessage& message, const FieldSpecTable& table);
std::optional<SyntaxViolation> check_syntax(const PacketRecord& record, const FieldSpecTable& table);

// ---------------------------------------------------------------------------
// Detectors. Each returns at most one finding per remote ip, sorted by ip.

std::vector<AnomalyFinding> detect_support_flags_omission(std::span<const Connection> conns,
                                                          const FieldSpecTable& table = FieldSpecTable::monero_default());

std::vector<AnomalyFinding> detect_deprecated_last_seen(std::span<const PeerList> lists);

/// Nullopt when no message carries segment data (raw-stream captures).
std::optional<std::vector<AnomalyFinding>> detect_signature_only_fragments(std::span<const Connection> conns,
                                                                           const DetectorConfig& cfg = {});

/// |distinct /24s| / |entries|; nullopt unless the list is full.
std::optional<double> peer_list_diversity(const PeerList& list, std::size_t full_size = kFullPeerList);

std::vector<AnomalyFinding> detect_low_diversity(std::span<const PeerList> lists, const DetectorConfig& cfg = {});

class BothEmptyError : public std::invalid_argument {
 public:
  BothEmptyError() : std::invalid_argument("jaccard of two empty sets") {}
};

/// |a ∩ b| / |a ∪ b| over sorted, de-duplicated ranges.
template <typename T>
double jaccard(std::span<const T> a, std::span<const T> b) {
  if (a.empty() && b.empty()) throw BothEmptyError();
  std::size_t i = 0, j = 0, shared = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] < b[j]) {
      ++i;
    } else if (b[j] < a[i]) {
      ++j;
    } else {
      ++shared;
      ++i;
      ++j;
    }
  }
  return static_cast<double>(shared) / static_cast<double>(a.size() + b.size() - shared);
}

template <typename T>
double jaccard(const std::set<T>& a, const std::set<T>& b) {
  std::vector<T> va(a.begin(), a.end()), vb(b.begin(), b.end());
  return jaccard<T>(std::span<const T>(va), std::span<const T>(vb));
}

/// Cross-source comparison of full lists. A source is flagged when at least
/// `similarity_min_repeats` of its list pairs exceed the threshold on the
/// /24-reduced sets. `jobs` > 1 shards the pair scan across threads.
std::vector<AnomalyFinding> detect_similar_lists(std::span<const PeerList> lists, const DetectorConfig& cfg = {},
                                                 unsigned jobs = 1);

std::vector<AnomalyFinding> detect_short_lived(std::span<const Connection> conns, const DetectorConfig& cfg = {});
std::vector<AnomalyFinding> detect_throttled_timed_sync(std::span<const Connection> conns,
                                                        const DetectorConfig& cfg = {});

/// True for an incoming connection whose remote sent a Ping burst.
bool is_ping_flood(const Connection& conn, const DetectorConfig& cfg);
std::vector<AnomalyFinding> detect_ping_flooding(std::span<const Connection> conns, const DetectorConfig& cfg = {});

/// Empty when the base-command order fits the template, else the reason.
std::optional<std::string> sequence_violation(const Connection& conn);
/// Handshake-completed connections only. Incoming Ping floods belong to
/// PingFlooding and are not reported here.
std::vector<AnomalyFinding> detect_sequence_violations(std::span<const Connection> conns,
                                                       const DetectorConfig& cfg = {});

}  // namespace peer_sentinel
