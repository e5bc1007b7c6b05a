#include "peer_sentinel/detectors.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <thread>
#include <unordered_map>
#include <unordered_set>

namespace peer_sentinel {

namespace {

using levin::Kind;
namespace cmd = levin::command;

constexpr std::array<std::string_view, kCategoryCount> kCategoryNames = {
    "SupportFlagsOmission", "DeprecatedLastSeen",  "SignatureOnlyFragment", "LowDiversityPeerList",
    "HighSimilarityPeerList", "ShortLivedFlooding", "ThrottledTimedSync",   "PingFlooding",
    "SequenceViolation",    "PeerIdTemporal",      "PeerIdCluster",         "SaturatedSubnetMember",
};

constexpr std::size_t kMaxListedPartners = 64;

struct Span {
  double first = 0.0;
  double last = 0.0;
  bool set = false;

  void see(double ts) {
    if (!set) {
      first = last = ts;
      set = true;
    } else {
      first = std::min(first, ts);
      last = std::max(last, ts);
    }
  }
};

AnomalyFinding make_finding(Ipv4 ip, Category c, Json evidence, const Span& span) {
  AnomalyFinding f;
  f.ip = ip;
  f.category = c;
  f.evidence = std::move(evidence);
  f.first_seen = span.first;
  f.last_seen = span.last;
  return f;
}

std::set<std::string> prefixed(std::initializer_list<const char*> names, const std::string& prefix) {
  std::set<std::string> out;
  for (const char* n : names) out.insert(prefix + n);
  return out;
}

void merge_into(std::set<std::string>& dst, const std::set<std::string>& src) { dst.insert(src.begin(), src.end()); }

FieldSpec node_and_sync(bool with_node_data) {
  FieldSpec spec;
  if (with_node_data) {
    merge_into(spec.required, prefixed({"network_id", "my_port", "peer_id", "support_flags"}, "node_data."));
    merge_into(spec.optional, prefixed({"rpc_port", "rpc_credits_per_hash"}, "node_data."));
  }
  merge_into(spec.required, prefixed({"current_height", "cumulative_difficulty", "top_id", "top_version"},
                                     "payload_data."));
  merge_into(spec.optional, prefixed({"cumulative_difficulty_top64", "pruning_seed"}, "payload_data."));
  return spec;
}

void add_peer_list(FieldSpec& spec) {
  const std::string entry = std::string(kPeerListPath) + "[].";
  spec.required.insert(kPeerListPath);
  merge_into(spec.required, prefixed({"ip", "port", "peer_id"}, entry));
  merge_into(spec.optional, prefixed({"pruning_seed", "rpc_port", "rpc_credits_per_hash"}, entry));
}

bool is_base(const PacketRecord& r, levin::CommandCode c, Kind k) { return r.command == c && r.kind == k; }

std::vector<AnomalyFinding> sorted(std::vector<AnomalyFinding> v) {
  std::sort(v.begin(), v.end(), [](const AnomalyFinding& a, const AnomalyFinding& b) {
    return std::tie(a.ip, a.category) < std::tie(b.ip, b.category);
  });
  return v;
}

}  // namespace

std::string_view category_name(Category c) { return kCategoryNames[static_cast<std::size_t>(c)]; }

std::optional<Category> category_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kCategoryNames.size(); ++i)
    if (kCategoryNames[i] == name) return static_cast<Category>(i);
  return std::nullopt;
}

const std::vector<Category>& all_categories() {
  static const std::vector<Category> kAll = [] {
    std::vector<Category> v;
    for (std::size_t i = 0; i < kCategoryCount; ++i) v.push_back(static_cast<Category>(i));
    return v;
  }();
  return kAll;
}

Json finding_to_json(const AnomalyFinding& f) {
  return Json{{"ip", f.ip.to_string()},
              {"category", std::string(category_name(f.category))},
              {"evidence", f.evidence},
              {"first_seen", f.first_seen},
              {"last_seen", f.last_seen}};
}

std::vector<AnomalyFinding> normalize_findings(std::vector<AnomalyFinding> findings) {
  findings = sorted(std::move(findings));
  std::vector<AnomalyFinding> out;
  for (auto& f : findings) {
    if (!out.empty() && out.back().ip == f.ip && out.back().category == f.category) {
      auto& prev = out.back();
      prev.evidence["merged"].push_back(std::move(f.evidence));
      prev.first_seen = std::min(prev.first_seen, f.first_seen);
      prev.last_seen = std::max(prev.last_seen, f.last_seen);
    } else {
      out.push_back(std::move(f));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------

FieldSpecTable FieldSpecTable::monero_default() {
  FieldSpecTable t;
  FieldSpec hs_res = node_and_sync(true);
  add_peer_list(hs_res);
  FieldSpec ts_res = node_and_sync(false);
  add_peer_list(ts_res);

  t.set(cmd::kHandshake, Kind::Request, node_and_sync(true));
  t.set(cmd::kHandshake, Kind::Response, std::move(hs_res));
  t.set(cmd::kTimedSync, Kind::Request, node_and_sync(false));
  t.set(cmd::kTimedSync, Kind::Response, std::move(ts_res));
  t.set(cmd::kPing, Kind::Request, {});
  t.set(cmd::kPing, Kind::Response, FieldSpec{{"status", "peer_id"}, {}});
  t.set(cmd::kSupportFlags, Kind::Request, {});
  t.set(cmd::kSupportFlags, Kind::Response, FieldSpec{{"support_flags"}, {}});
  return t;
}

void FieldSpecTable::set(levin::CommandCode command, Kind kind, FieldSpec spec) {
  specs_[{command, kind}] = std::move(spec);
}

const FieldSpec* FieldSpecTable::find(levin::CommandCode command, Kind kind) const {
  auto it = specs_.find({command, kind});
  return it == specs_.end() ? nullptr : &it->second;
}

std::optional<SyntaxViolation> check_syntax(const std::set<std::string>& domain, const FieldSpec& spec) {
  SyntaxViolation v;
  std::set_difference(spec.required.begin(), spec.required.end(), domain.begin(), domain.end(),
                      std::inserter(v.missing, v.missing.end()));
  for (const auto& path : domain)
    if (!spec.required.contains(path) && !spec.optional.contains(path)) v.unexpected.insert(path);
  if (v.missing.empty() && v.unexpected.empty()) return std::nullopt;
  return v;
}

std::optional<SyntaxViolation> check_syntax(const PacketRecord& record, const FieldSpecTable& table) {
  const FieldSpec* spec = table.find(record.command, record.kind);
  if (!spec) throw UnknownCommandError("no field spec for command " + std::to_string(record.command));

  // Message level: everything except array-entry paths.
  FieldSpec top;
  std::map<std::string, FieldSpec> per_array;
  auto split = [&](const std::set<std::string>& src, bool required) {
    for (const auto& path : src) {
      auto marker = path.find("[].");
      if (marker == std::string::npos) {
        (required ? top.required : top.optional).insert(path);
      } else {
        auto& s = per_array[path.substr(0, marker)];
        (required ? s.required : s.optional).insert(path);
      }
    }
  };
  split(spec->required, true);
  split(spec->optional, false);

  std::set<std::string> top_domain;
  SyntaxViolation out;
  for (const auto& [key, value] : record.fields.items()) {
    top_domain.insert(key);
    if (!value.is_array()) continue;
    const auto entry_spec_it = per_array.find(key);
    const FieldSpec empty;
    const FieldSpec& entry_spec = entry_spec_it == per_array.end() ? empty : entry_spec_it->second;
    for (const auto& item : value) {
      if (!item.is_object()) continue;
      std::set<std::string> entry_domain;
      for (const auto& [k, inner] : item.items()) entry_domain.insert(key + "[]." + k);
      if (auto v = check_syntax(entry_domain, entry_spec)) {
        merge_into(out.missing, v->missing);
        merge_into(out.unexpected, v->unexpected);
      }
    }
  }
  if (auto v = check_syntax(top_domain, top)) {
    merge_into(out.missing, v->missing);
    merge_into(out.unexpected, v->unexpected);
  }
  if (out.missing.empty() && out.unexpected.empty()) return std::nullopt;
  return out;
}

std::optional<SyntaxViolation> check_syntax(const levin::ParsedMessage& message, const FieldSpecTable& table) {
  PacketRecord r;
  r.command = message.command;
  r.kind = message.kind;
  r.fields = fields_from_message(message);
  return check_syntax(r, table);
}

// ---------------------------------------------------------------------------

std::vector<AnomalyFinding> detect_support_flags_omission(std::span<const Connection> conns,
                                                          const FieldSpecTable& table) {
  struct Tally {
    std::size_t handshakes = 0, omitted = 0, explicit_zero = 0, exchanges = 0;
    std::set<std::string> connections;
    Span span;
  };
  std::map<Ipv4, Tally> by_ip;
  const std::string flag_path = "node_data.support_flags";

  for (const auto& c : conns) {
    bool offending = false;
    std::size_t exchanges = 0;
    for (const auto& m : c.messages) {
      const auto& r = m.record;
      if (r.command == cmd::kSupportFlags && r.kind == Kind::Request) ++exchanges;
      if (m.sender != Sender::Remote || r.command != cmd::kHandshake || r.decode_error) continue;
      auto& t = by_ip[c.remote_ip];
      ++t.handshakes;
      auto violation = check_syntax(r, table);
      if (violation && violation->missing.contains(flag_path)) {
        ++t.omitted;
      } else if (auto it = r.fields.find(flag_path); it != r.fields.end() && *it == 0) {
        ++t.explicit_zero;
      } else {
        continue;
      }
      offending = true;
      t.span.see(r.ts);
    }
    if (offending) {
      auto& t = by_ip[c.remote_ip];
      t.exchanges += exchanges;
      t.connections.insert(c.id);
    }
  }

  std::vector<AnomalyFinding> out;
  for (const auto& [ip, t] : by_ip) {
    if (t.omitted + t.explicit_zero == 0) continue;
    Json ev{{"handshakes", t.handshakes},
            {"omitted", t.omitted},
            {"explicit_zero", t.explicit_zero},
            {"support_flags_exchanges", t.exchanges},
            {"connections", t.connections}};
    out.push_back(make_finding(ip, Category::SupportFlagsOmission, std::move(ev), t.span));
  }
  return out;
}

std::vector<AnomalyFinding> detect_deprecated_last_seen(std::span<const PeerList> lists) {
  struct Tally {
    std::size_t lists = 0, tainted_lists = 0, entries = 0;
    std::set<std::int64_t> values;
    Span span;
  };
  std::map<Ipv4, Tally> by_ip;
  for (const auto& list : lists) {
    auto& t = by_ip[list.source_ip];
    ++t.lists;
    std::size_t with = 0;
    for (const auto& e : list.entries) {
      if (!e.last_seen) continue;
      ++with;
      t.values.insert(*e.last_seen);
    }
    if (with) {
      ++t.tainted_lists;
      t.entries += with;
      t.span.see(list.ts);
    }
  }
  std::vector<AnomalyFinding> out;
  for (const auto& [ip, t] : by_ip) {
    if (!t.tainted_lists) continue;
    Json values = Json::array();
    for (auto v : t.values) {
      if (values.size() >= 16) break;
      values.push_back(v);
    }
    Json ev{{"lists", t.lists},
            {"tainted_lists", t.tainted_lists},
            {"entries_with_last_seen", t.entries},
            {"distinct_values", t.values.size()},
            {"values", values}};
    out.push_back(make_finding(ip, Category::DeprecatedLastSeen, std::move(ev), t.span));
  }
  return out;
}

std::optional<std::vector<AnomalyFinding>> detect_signature_only_fragments(std::span<const Connection> conns,
                                                                           const DetectorConfig& cfg) {
  struct Tally {
    std::size_t messages = 0, multi = 0, signature_only = 0;
    Span span;
  };
  bool any_segments = false;
  std::map<Ipv4, Tally> by_ip;
  for (const auto& c : conns) {
    for (const auto& m : c.messages) {
      const auto& seg = m.record.segment_lengths;
      if (!seg.empty()) any_segments = true;
      if (m.sender != Sender::Remote || seg.empty()) continue;
      auto& t = by_ip[c.remote_ip];
      ++t.messages;
      if (seg.size() < 2) continue;
      ++t.multi;
      if (seg.front() == 8) {
        ++t.signature_only;
        t.span.see(m.record.ts);
      }
    }
  }
  if (!any_segments) return std::nullopt;

  std::vector<AnomalyFinding> out;
  for (const auto& [ip, t] : by_ip) {
    if (t.multi < cfg.fragment_min_messages) continue;
    const double ratio = static_cast<double>(t.signature_only) / static_cast<double>(t.multi);
    if (ratio < cfg.fragment_min_ratio) continue;
    Json ev{{"messages_with_segments", t.messages},
            {"multi_segment_messages", t.multi},
            {"signature_only_first_segment", t.signature_only},
            {"ratio", ratio}};
    out.push_back(make_finding(ip, Category::SignatureOnlyFragment, std::move(ev), t.span));
  }
  return out;
}

std::optional<double> peer_list_diversity(const PeerList& list, std::size_t full_size) {
  if (list.entries.empty() || list.entries.size() != full_size) return std::nullopt;
  std::unordered_set<Subnet24> subnets;
  for (const auto& e : list.entries)
    if (e.ip) subnets.insert(Subnet24(*e.ip));
  return static_cast<double>(subnets.size()) / static_cast<double>(list.entries.size());
}

std::vector<AnomalyFinding> detect_low_diversity(std::span<const PeerList> lists, const DetectorConfig& cfg) {
  struct Tally {
    std::size_t full = 0, flagged = 0;
    double min_diversity = 1.0;
    Span span;
  };
  std::map<Ipv4, Tally> by_ip;
  for (const auto& list : lists) {
    auto d = peer_list_diversity(list, cfg.full_list_size);
    if (!d) continue;
    auto& t = by_ip[list.source_ip];
    ++t.full;
    t.min_diversity = std::min(t.min_diversity, *d);
    if (*d < cfg.diversity_threshold) {
      ++t.flagged;
      t.span.see(list.ts);
    }
  }
  std::vector<AnomalyFinding> out;
  for (const auto& [ip, t] : by_ip) {
    if (!t.flagged) continue;
    Json ev{{"full_lists", t.full}, {"flagged_lists", t.flagged}, {"min_diversity", t.min_diversity}};
    out.push_back(make_finding(ip, Category::LowDiversityPeerList, std::move(ev), t.span));
  }
  return out;
}

std::vector<AnomalyFinding> detect_similar_lists(std::span<const PeerList> lists, const DetectorConfig& cfg,
                                                 unsigned jobs) {
  struct Prepared {
    const PeerList* list;
    std::vector<std::uint32_t> subnets;
    std::vector<std::uint32_t> ips;
  };
  std::vector<Prepared> full;
  for (const auto& list : lists) {
    if (!list.is_full(cfg.full_list_size)) continue;
    Prepared p{&list, {}, {}};
    for (const auto& e : list.entries) {
      if (!e.ip) continue;
      p.ips.push_back(e.ip->value());
      p.subnets.push_back(Subnet24(*e.ip).prefix());
    }
    for (auto* v : {&p.ips, &p.subnets}) {
      std::sort(v->begin(), v->end());
      v->erase(std::unique(v->begin(), v->end()), v->end());
    }
    if (!p.subnets.empty()) full.push_back(std::move(p));
  }

  // Inverted index over subnets: only lists sharing a subnet can exceed a
  // positive threshold, and the shared counts are exact intersections.
  std::unordered_map<std::uint32_t, std::vector<std::uint32_t>> postings;
  for (std::uint32_t i = 0; i < full.size(); ++i)
    for (auto s : full[i].subnets) postings[s].push_back(i);

  struct Pair {
    std::uint32_t a, b;
    double similarity;
  };
  const unsigned workers = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(full.size())));
  std::vector<std::vector<Pair>> shards(workers);
  auto scan = [&](unsigned shard) {
    std::vector<std::uint32_t> shared(full.size(), 0);
    std::vector<std::uint32_t> touched;
    for (std::uint32_t i = shard; i < full.size(); i += workers) {
      touched.clear();
      for (auto s : full[i].subnets) {
        for (auto j : postings[s]) {
          if (j <= i || full[j].list->source_ip == full[i].list->source_ip) continue;
          if (shared[j]++ == 0) touched.push_back(j);
        }
      }
      std::sort(touched.begin(), touched.end());
      for (auto j : touched) {
        const double inter = shared[j];
        const double sim = inter / (static_cast<double>(full[i].subnets.size() + full[j].subnets.size()) - inter);
        if (sim > cfg.similarity_threshold) shards[shard].push_back({i, j, sim});
        shared[j] = 0;
      }
    }
  };
  if (workers == 1) {
    scan(0);
  } else {
    std::vector<std::thread> threads;
    for (unsigned w = 0; w < workers; ++w) threads.emplace_back(scan, w);
    for (auto& t : threads) t.join();
  }
  std::vector<Pair> pairs;
  for (auto& s : shards) pairs.insert(pairs.end(), s.begin(), s.end());
  std::sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) { return std::tie(x.a, x.b) < std::tie(y.a, y.b); });

  struct Tally {
    std::size_t pairs = 0;
    double max_subnet = 0.0, max_ip = 0.0;
    std::set<Ipv4> partners;
    Span span;
  };
  std::map<Ipv4, Tally> by_ip;
  for (const auto& p : pairs) {
    const auto& x = full[p.a];
    const auto& y = full[p.b];
    const double ip_sim = jaccard<std::uint32_t>(x.ips, y.ips);
    for (auto [self, other] : {std::pair{&x, &y}, std::pair{&y, &x}}) {
      auto& t = by_ip[self->list->source_ip];
      ++t.pairs;
      t.max_subnet = std::max(t.max_subnet, p.similarity);
      t.max_ip = std::max(t.max_ip, ip_sim);
      t.partners.insert(other->list->source_ip);
      t.span.see(self->list->ts);
    }
  }

  std::vector<AnomalyFinding> out;
  for (const auto& [ip, t] : by_ip) {
    if (t.pairs < cfg.similarity_min_repeats) continue;
    Json partners = Json::array();
    for (const auto& p : t.partners) {
      if (partners.size() >= kMaxListedPartners) break;
      partners.push_back(p.to_string());
    }
    Json ev{{"similar_pairs", t.pairs},
            {"max_subnet_similarity", t.max_subnet},
            {"max_ip_similarity", t.max_ip},
            {"partner_count", t.partners.size()},
            {"partners", partners}};
    out.push_back(make_finding(ip, Category::HighSimilarityPeerList, std::move(ev), t.span));
  }
  return out;
}

std::vector<AnomalyFinding> detect_short_lived(std::span<const Connection> conns, const DetectorConfig& cfg) {
  struct Tally {
    std::size_t total = 0, short_lived = 0, without_handshake = 0;
    Span span;
  };
  std::map<Ipv4, Tally> by_ip;
  for (const auto& c : conns) {
    auto& t = by_ip[c.remote_ip];
    ++t.total;
    if (!(c.duration() < cfg.short_lived_max)) continue;
    if (!c.handshake_completed) {
      ++t.without_handshake;
      continue;
    }
    ++t.short_lived;
    t.span.see(c.start_ts);
  }
  std::vector<AnomalyFinding> out;
  for (const auto& [ip, t] : by_ip) {
    if (t.short_lived <= cfg.short_lived_peer_min) continue;
    Json ev{{"short_lived_connections", t.short_lived},
            {"short_lived_without_handshake", t.without_handshake},
            {"connections", t.total}};
    out.push_back(make_finding(ip, Category::ShortLivedFlooding, std::move(ev), t.span));
  }
  return out;
}

std::vector<AnomalyFinding> detect_throttled_timed_sync(std::span<const Connection> conns,
                                                        const DetectorConfig& cfg) {
  struct Tally {
    std::size_t assessed = 0;
    Json flagged = Json::array();
    Span span;
  };
  std::map<Ipv4, Tally> by_ip;
  for (const auto& c : conns) {
    if (c.duration() < cfg.throttle_min_duration) continue;
    auto stats = timed_sync_stats(c);
    if (!stats) continue;
    auto& t = by_ip[c.remote_ip];
    ++t.assessed;
    if (!(stats->mean_remote_interval > cfg.throttle_threshold)) continue;
    t.flagged.push_back(Json{{"connection", c.id},
                             {"mean_interval", stats->mean_remote_interval},
                             {"deviation", stats->mean_remote_interval - cfg.timed_sync_standard},
                             {"remote_requests", stats->count_remote_requests},
                             {"duration", c.duration()}});
    t.span.see(c.start_ts);
    t.span.see(c.end_ts);
  }
  std::vector<AnomalyFinding> out;
  for (auto& [ip, t] : by_ip) {
    if (t.flagged.empty()) continue;
    Json ev{{"assessed_connections", t.assessed}, {"flagged_connections", t.flagged}};
    out.push_back(make_finding(ip, Category::ThrottledTimedSync, std::move(ev), t.span));
  }
  return out;
}

bool is_ping_flood(const Connection& conn, const DetectorConfig& cfg) {
  if (conn.direction != Direction::Incoming) return false;
  std::size_t pings = 0;
  double first = 0.0, last = 0.0;
  for (const auto& m : conn.messages) {
    if (m.sender != Sender::Remote || !is_base(m.record, cmd::kPing, Kind::Request)) continue;
    if (pings++ == 0) first = m.record.ts;
    last = m.record.ts;
  }
  if (pings < cfg.ping_flood_min_pings || pings < 2) return false;
  return (last - first) / static_cast<double>(pings - 1) < cfg.ping_flood_max_mean_gap;
}

std::vector<AnomalyFinding> detect_ping_flooding(std::span<const Connection> conns, const DetectorConfig& cfg) {
  struct Tally {
    Json flagged = Json::array();
    Span span;
  };
  std::map<Ipv4, Tally> by_ip;
  for (const auto& c : conns) {
    if (!is_ping_flood(c, cfg)) continue;
    std::size_t pings = 0, local_ts = 0, remote_ts_responses = 0;
    for (const auto& m : c.messages) {
      if (m.sender == Sender::Remote && is_base(m.record, cmd::kPing, Kind::Request)) ++pings;
      if (m.sender == Sender::Local && is_base(m.record, cmd::kTimedSync, Kind::Request)) ++local_ts;
      if (m.sender == Sender::Remote && is_base(m.record, cmd::kTimedSync, Kind::Response)) ++remote_ts_responses;
    }
    auto& t = by_ip[c.remote_ip];
    t.flagged.push_back(Json{{"connection", c.id},
                             {"pings", pings},
                             {"duration", c.duration()},
                             {"timed_sync_unanswered", local_ts > remote_ts_responses}});
    t.span.see(c.start_ts);
    t.span.see(c.end_ts);
  }
  std::vector<AnomalyFinding> out;
  for (auto& [ip, t] : by_ip) {
    Json ev{{"flood_connections", t.flagged}};
    out.push_back(make_finding(ip, Category::PingFlooding, std::move(ev), t.span));
  }
  return out;
}

std::optional<std::string> sequence_violation(const Connection& conn) {
  bool request_seen = false, handshake_done = false;
  Sender initiator = Sender::Remote;
  std::size_t pings = 0, support_requests = 0;
  // Outstanding requests per sender: [local, remote].
  std::array<std::size_t, 2> ts_pending{}, ping_pending{}, sf_pending{};
  auto slot = [](Sender s) { return s == Sender::Local ? 0 : 1; };
  auto other = [](Sender s) { return s == Sender::Local ? 1 : 0; };

  for (const auto& m : conn.messages) {
    const auto& r = m.record;
    if (!levin::is_base_command(r.command)) continue;
    const std::string what = std::string(levin::command_name(r.command)) + " " +
                             std::string(levin::kind_name(r.kind)) + " from " + std::string(sender_name(m.sender));
    if (!request_seen) {
      if (!is_base(r, cmd::kHandshake, Kind::Request)) return what + " before handshake request";
      request_seen = true;
      initiator = m.sender;
      continue;
    }
    if (!handshake_done) {
      if (is_base(r, cmd::kHandshake, Kind::Response) && m.sender != initiator) {
        handshake_done = true;
        continue;
      }
      return what + " before handshake response";
    }
    if (r.command == cmd::kHandshake) return "repeated handshake: " + what;

    auto respond = [&](std::array<std::size_t, 2>& pending) -> bool {
      if (pending[other(m.sender)] == 0) return false;
      --pending[other(m.sender)];
      return true;
    };
    if (r.command == cmd::kTimedSync) {
      if (r.kind == Kind::Request) {
        ++ts_pending[slot(m.sender)];
      } else if (!respond(ts_pending)) {
        return "unsolicited " + what;
      }
    } else if (r.command == cmd::kPing) {
      if (r.kind == Kind::Request) {
        if (++pings > 1) return "more than one ping: " + what;
        ++ping_pending[slot(m.sender)];
      } else if (!respond(ping_pending)) {
        return "unsolicited " + what;
      }
    } else if (r.command == cmd::kSupportFlags) {
      if (r.kind == Kind::Request) {
        if (++support_requests > 1) return "repeated support flags request: " + what;
        ++sf_pending[slot(m.sender)];
      } else if (!respond(sf_pending)) {
        return "unsolicited " + what;
      }
    }
  }
  return std::nullopt;
}

std::vector<AnomalyFinding> detect_sequence_violations(std::span<const Connection> conns, const DetectorConfig& cfg) {
  struct Tally {
    Json flagged = Json::array();
    Span span;
  };
  std::map<Ipv4, Tally> by_ip;
  for (const auto& c : conns) {
    if (!c.handshake_completed || is_ping_flood(c, cfg)) continue;
    auto reason = sequence_violation(c);
    if (!reason) continue;
    auto& t = by_ip[c.remote_ip];
    t.flagged.push_back(Json{{"connection", c.id}, {"reason", *reason}});
    t.span.see(c.start_ts);
    t.span.see(c.end_ts);
  }
  std::vector<AnomalyFinding> out;
  for (auto& [ip, t] : by_ip) {
    Json ev{{"violations", t.flagged}};
    out.push_back(make_finding(ip, Category::SequenceViolation, std::move(ev), t.span));
  }
  return out;
}

}  // namespace peer_sentinel
