#include "peer_sentinel/identity.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <tuple>
#include <unordered_map>

namespace peer_sentinel {

namespace {

using levin::Kind;
namespace cmd = levin::command;

std::optional<std::uint64_t> id_field(const Json& fields, const char* key) {
  auto it = fields.find(key);
  if (it == fields.end() || !it->is_number_unsigned()) return std::nullopt;
  const auto v = it->get<std::uint64_t>();
  if (v == 0) return std::nullopt;
  return v;
}

struct DisjointSet {
  std::vector<std::size_t> parent;

  std::size_t add() {
    parent.push_back(parent.size());
    return parent.size() - 1;
  }
  std::size_t find(std::size_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace

std::string_view id_source_name(IdSource s) {
  switch (s) {
    case IdSource::Handshake: return "handshake";
    case IdSource::Pong: return "pong";
    case IdSource::PeerListEntry: return "peer-list-entry";
  }
  return "handshake";
}

std::string format_peer_id(std::uint64_t id) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(id));
  return buf;
}

std::vector<IdObservation> collect_id_observations(std::span<const Connection> conns,
                                                   std::span<const PeerList> lists) {
  std::vector<IdObservation> out;
  for (const auto& c : conns) {
    for (const auto& m : c.messages) {
      if (m.sender != Sender::Remote || m.record.decode_error) continue;
      const auto& r = m.record;
      if (r.command == cmd::kHandshake) {
        if (auto id = id_field(r.fields, "node_data.peer_id")) out.push_back({r.ts, c.remote_ip, *id, IdSource::Handshake});
      } else if (r.command == cmd::kPing && r.kind == Kind::Response) {
        if (auto id = id_field(r.fields, "peer_id")) out.push_back({r.ts, c.remote_ip, *id, IdSource::Pong});
      }
    }
  }
  for (const auto& list : lists) {
    for (const auto& e : list.entries) {
      if (!e.valid() || !e.peer_id || *e.peer_id == 0) continue;
      out.push_back({list.ts, *e.ip, *e.peer_id, IdSource::PeerListEntry});
    }
  }
  std::stable_sort(out.begin(), out.end(), [](const IdObservation& a, const IdObservation& b) {
    return std::tie(a.ts, a.ip, a.peer_id) < std::tie(b.ts, b.ip, b.peer_id);
  });
  return out;
}

std::vector<IdObservation> flagging_observations(std::span<const IdObservation> all, bool include_lists) {
  std::vector<IdObservation> out;
  std::copy_if(all.begin(), all.end(), std::back_inserter(out), [include_lists](const IdObservation& o) {
    return include_lists || o.source != IdSource::PeerListEntry;
  });
  return out;
}

std::vector<AnomalyFinding> detect_temporal_id_anomaly(std::span<const IdObservation> observations) {
  struct Track {
    std::vector<std::uint64_t> sequence;  // consecutive repeats collapsed
    std::vector<double> change_ts;
    double first = 0.0;
    double last = 0.0;
  };
  std::map<Ipv4, Track> tracks;
  for (const auto& o : observations) {
    auto [it, inserted] = tracks.try_emplace(o.ip);
    auto& t = it->second;
    if (inserted) t.first = o.ts;
    t.last = o.ts;
    if (t.sequence.empty() || t.sequence.back() != o.peer_id) {
      t.sequence.push_back(o.peer_id);
      t.change_ts.push_back(o.ts);
    }
  }

  std::vector<AnomalyFinding> out;
  for (const auto& [ip, t] : tracks) {
    std::set<std::uint64_t> seen;
    std::optional<std::size_t> revisit;
    for (std::size_t i = 0; i < t.sequence.size() && !revisit; ++i)
      if (!seen.insert(t.sequence[i]).second) revisit = i;
    if (!revisit) continue;

    Json seq = Json::array();
    for (std::size_t i = 0; i < t.sequence.size(); ++i)
      seq.push_back(Json{{"ts", t.change_ts[i]}, {"peer_id", format_peer_id(t.sequence[i])}});
    AnomalyFinding f;
    f.ip = ip;
    f.category = Category::PeerIdTemporal;
    f.evidence = Json{{"sequence", std::move(seq)},
                      {"revisited_id", format_peer_id(t.sequence[*revisit])},
                      {"revisited_at", t.change_ts[*revisit]},
                      {"distinct_ids", seen.size()}};
    f.first_seen = t.first;
    f.last_seen = t.last;
    out.push_back(std::move(f));
  }
  return out;
}

std::vector<IdCluster> build_id_clusters(std::span<const IdObservation> observations) {
  std::map<Ipv4, std::size_t> ip_node;
  std::map<std::uint64_t, std::size_t> id_node;
  std::set<std::pair<Ipv4, std::uint64_t>> edges;
  DisjointSet dsu;
  for (const auto& o : observations) {
    auto [ip_it, new_ip] = ip_node.try_emplace(o.ip, 0);
    if (new_ip) ip_it->second = dsu.add();
    auto [id_it, new_id] = id_node.try_emplace(o.peer_id, 0);
    if (new_id) id_it->second = dsu.add();
    dsu.unite(ip_it->second, id_it->second);
    edges.emplace(o.ip, o.peer_id);
  }

  std::map<std::size_t, IdCluster> components;
  for (const auto& [ip, node] : ip_node) components[dsu.find(node)].ips.insert(ip);
  for (const auto& [id, node] : id_node) components[dsu.find(node)].ids.insert(id);
  for (const auto& [ip, id] : edges) ++components[dsu.find(ip_node.at(ip))].edge_count;

  std::vector<IdCluster> out;
  for (auto& [_, c] : components)
    if (c.ips.size() >= 2 && c.ids.size() >= 2) out.push_back(std::move(c));
  std::sort(out.begin(), out.end(),
            [](const IdCluster& a, const IdCluster& b) { return *a.ips.begin() < *b.ips.begin(); });
  return out;
}

std::vector<AnomalyFinding> cluster_findings(std::span<const IdCluster> clusters,
                                             std::span<const IdObservation> observations) {
  std::map<Ipv4, std::pair<double, double>> spans;
  for (const auto& o : observations) {
    auto [it, inserted] = spans.try_emplace(o.ip, o.ts, o.ts);
    if (!inserted) {
      it->second.first = std::min(it->second.first, o.ts);
      it->second.second = std::max(it->second.second, o.ts);
    }
  }

  std::vector<AnomalyFinding> out;
  for (std::size_t k = 0; k < clusters.size(); ++k) {
    const auto& c = clusters[k];
    Json ips = Json::array(), ids = Json::array();
    for (const auto& ip : c.ips) ips.push_back(ip.to_string());
    for (auto id : c.ids) ids.push_back(format_peer_id(id));
    for (const auto& ip : c.ips) {
      AnomalyFinding f;
      f.ip = ip;
      f.category = Category::PeerIdCluster;
      f.evidence = Json{{"cluster", k}, {"ips", ips}, {"ids", ids}, {"edge_count", c.edge_count}};
      if (auto it = spans.find(ip); it != spans.end()) std::tie(f.first_seen, f.last_seen) = it->second;
      out.push_back(std::move(f));
    }
  }
  std::sort(out.begin(), out.end(), [](const AnomalyFinding& a, const AnomalyFinding& b) { return a.ip < b.ip; });
  return out;
}

std::optional<IdMultiplicity> id_multiplicity_stats(std::span<const IdObservation> observations) {
  if (observations.empty()) return std::nullopt;
  std::map<Ipv4, std::set<std::uint64_t>> per_ip;
  for (const auto& o : observations) per_ip[o.ip].insert(o.peer_id);
  IdMultiplicity out;
  for (const auto& [_, ids] : per_ip) ++out.histogram[ids.size()];
  const auto single = out.histogram.count(1) ? out.histogram.at(1) : 0;
  out.fraction_single_id = static_cast<double>(single) / static_cast<double>(per_ip.size());
  return out;
}

}  // namespace peer_sentinel
