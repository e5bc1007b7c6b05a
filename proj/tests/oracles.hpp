// Brute-force reference computations. Each one is written from the
// definitions with plain containers and linear scans, sharing no code with
// the library beyond its data types.
#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "support.hpp"

namespace oracle {

using namespace peer_sentinel;

inline bool contains(const std::vector<std::string>& v, const std::string& s) {
  for (const auto& x : v)
    if (x == s) return true;
  return false;
}

/// Field check on one domain: missing = required not in domain; unexpected =
/// domain entries in neither list.
struct FieldCheck {
  std::vector<std::string> missing;
  std::vector<std::string> unexpected;
};

inline FieldCheck field_check(const std::vector<std::string>& domain, const std::vector<std::string>& required,
               const std::vector<std::string>& optional) {
  FieldCheck out;
  for (const auto& r : required)
    if (!contains(domain, r) && !contains(out.missing, r)) out.missing.push_back(r);
  for (const auto& d : domain)
    if (!contains(required, d) && !contains(optional, d) && !contains(out.unexpected, d)) out.unexpected.push_back(d);
  return out;
}

/// The field check applied to the message's top-level keys and, separately, to every
/// object inside an array, whose keys are written "<array>[].<key>".
inline FieldCheck field_check_record(const Json& fields, const FieldSpec& spec) {
  std::vector<std::string> top_req, top_opt, entry_req, entry_opt;
  for (const auto& r : spec.required) (r.find("[].") == std::string::npos ? top_req : entry_req).push_back(r);
  for (const auto& o : spec.optional) (o.find("[].") == std::string::npos ? top_opt : entry_opt).push_back(o);

  FieldCheck total;
  auto fold = [&total](const FieldCheck& part) {
    for (const auto& m : part.missing)
      if (!contains(total.missing, m)) total.missing.push_back(m);
    for (const auto& u : part.unexpected)
      if (!contains(total.unexpected, u)) total.unexpected.push_back(u);
  };
  std::vector<std::string> top_domain;
  for (auto it = fields.begin(); it != fields.end(); ++it) {
    top_domain.push_back(it.key());
    if (!it->is_array()) continue;
    const std::string prefix = it.key() + "[].";
    std::vector<std::string> req, opt;
    for (const auto& r : entry_req)
      if (r.rfind(prefix, 0) == 0) req.push_back(r);
    for (const auto& o : entry_opt)
      if (o.rfind(prefix, 0) == 0) opt.push_back(o);
    for (const auto& item : *it) {
      if (!item.is_object()) continue;
      std::vector<std::string> d;
      for (auto e = item.begin(); e != item.end(); ++e) d.push_back(prefix + e.key());
      fold(field_check(d, req, opt));
    }
  }
  fold(field_check(top_domain, top_req, top_opt));
  std::sort(total.missing.begin(), total.missing.end());
  std::sort(total.unexpected.begin(), total.unexpected.end());
  return total;
}

// ---------------------------------------------------------------------------

/// Connected components of the ip/id bipartite graph by repeated relaxation.
struct Component {
  std::set<std::uint32_t> ips;
  std::set<std::uint64_t> ids;
  std::size_t edges = 0;
};

inline std::vector<Component> id_components(const std::vector<std::pair<std::uint32_t, std::uint64_t>>& raw_edges) {
  std::vector<std::pair<std::uint32_t, std::uint64_t>> edges;
  for (const auto& e : raw_edges)
    if (std::find(edges.begin(), edges.end(), e) == edges.end()) edges.push_back(e);
  std::vector<int> label(edges.size());
  for (std::size_t i = 0; i < edges.size(); ++i) label[i] = static_cast<int>(i);
  bool changed = true;
  while (changed) {
    changed = false;
    for (std::size_t i = 0; i < edges.size(); ++i)
      for (std::size_t j = 0; j < edges.size(); ++j)
        if ((edges[i].first == edges[j].first || edges[i].second == edges[j].second) && label[j] < label[i]) {
          label[i] = label[j];
          changed = true;
        }
  }
  std::map<int, Component> by_label;
  for (std::size_t i = 0; i < edges.size(); ++i) {
    auto& c = by_label[label[i]];
    c.ips.insert(edges[i].first);
    c.ids.insert(edges[i].second);
    ++c.edges;
  }
  std::vector<Component> out;
  for (auto& [_, c] : by_label)
    if (c.ips.size() >= 2 && c.ids.size() >= 2) out.push_back(c);
  return out;
}

// ---------------------------------------------------------------------------

struct DegreeSummary {
  std::size_t nodes = 0;
  double mean = 0.0;
  double median = 0.0;
  std::map<std::uint32_t, std::size_t> degree;
};

/// In-degree = number of distinct other sources that listed the node.
inline DegreeSummary in_degree(const std::vector<PeerList>& lists) {
  std::vector<std::uint32_t> nodes;
  auto add_node = [&nodes](std::uint32_t v) {
    if (std::find(nodes.begin(), nodes.end(), v) == nodes.end()) nodes.push_back(v);
  };
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  for (const auto& l : lists) {
    add_node(l.source_ip.value());
    for (const auto& e : l.entries) {
      if (!e.valid()) continue;
      add_node(e.ip->value());
      if (*e.ip == l.source_ip) continue;
      std::pair<std::uint32_t, std::uint32_t> p{l.source_ip.value(), e.ip->value()};
      if (std::find(pairs.begin(), pairs.end(), p) == pairs.end()) pairs.push_back(p);
    }
  }
  DegreeSummary s;
  s.nodes = nodes.size();
  std::vector<double> values;
  for (auto n : nodes) {
    std::size_t d = 0;
    for (const auto& p : pairs)
      if (p.second == n) ++d;
    s.degree[n] = d;
    values.push_back(static_cast<double>(d));
  }
  if (values.empty()) return s;
  double sum = 0.0;
  for (double v : values) sum += v;
  s.mean = sum / static_cast<double>(values.size());
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  s.median = n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  return s;
}

/// Distinct addresses per "a.b.c" text prefix.
inline std::map<std::string, std::size_t> subnet_counts(const std::vector<Ipv4>& ips) {
  std::map<std::string, std::set<std::string>> members;
  for (const auto& a : ips) {
    const std::string text = a.to_string();
    members[text.substr(0, text.rfind('.'))].insert(text);
  }
  std::map<std::string, std::size_t> out;
  for (const auto& [k, v] : members) out[k] = v.size();
  return out;
}

// ---------------------------------------------------------------------------

/// Fraction of active incoming connections with a flagged remote per bucket,
/// recomputed from scratch; NaN marks an empty bucket.
inline std::vector<double> incoming_exposure(const std::vector<Connection>& conns, const std::set<Ipv4>& flagged,
                                             double bucket) {
  if (conns.empty()) return {};
  double begin = conns[0].start_ts, end = conns[0].end_ts;
  for (const auto& c : conns) {
    begin = std::min(begin, c.start_ts);
    end = std::max(end, c.end_ts);
  }
  std::vector<double> out;
  for (std::size_t k = 0; begin + static_cast<double>(k) * bucket <= end; ++k) {
    const double t = begin + static_cast<double>(k) * bucket;
    std::size_t active = 0, bad = 0;
    for (const auto& c : conns) {
      if (c.direction != Direction::Incoming) continue;
      if (c.start_ts < t + bucket && c.end_ts >= t) {
        ++active;
        if (flagged.count(c.remote_ip)) ++bad;
      }
    }
    out.push_back(active ? static_cast<double>(bad) / static_cast<double>(active) : std::nan(""));
  }
  return out;
}

}  // namespace oracle
