#include "peer_sentinel/network.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <istream>
#include <numeric>

namespace peer_sentinel {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  return std::string(s.substr(b, s.find_last_not_of(" \t\r") - b + 1));
}

std::uint32_t mask_for(int length) { return length == 0 ? 0u : ~0u << (32 - length); }

void see(Sightings& s, Ipv4 ip, double ts) {
  auto [it, inserted] = s.try_emplace(ip, ts, ts);
  if (!inserted) {
    it->second.first = std::min(it->second.first, ts);
    it->second.second = std::max(it->second.second, ts);
  }
}

}  // namespace

PromotionGraph build_promotion_graph(std::span<const PeerList> lists) {
  PromotionGraph g;
  for (const auto& list : lists) {
    g.nodes.insert(list.source_ip);
    for (const auto& e : list.entries) {
      if (!e.valid()) continue;
      g.nodes.insert(*e.ip);
      if (*e.ip == list.source_ip) {
        ++g.self_edges[list.source_ip];
      } else {
        ++g.edges[{list.source_ip, *e.ip}];
      }
    }
  }
  return g;
}

std::map<Ipv4, std::size_t> in_degrees(const PromotionGraph& g) {
  std::map<Ipv4, std::size_t> deg;
  for (const auto& ip : g.nodes) deg[ip] = 0;
  for (const auto& [edge, _] : g.edges) ++deg[edge.second];
  return deg;
}

InDegreeStats in_degree_stats(const PromotionGraph& g, std::size_t top_k) {
  if (g.nodes.empty()) throw EmptyGraph();
  const auto deg = in_degrees(g);
  InDegreeStats s;
  s.node_count = deg.size();

  std::vector<std::size_t> values;
  values.reserve(deg.size());
  for (const auto& [_, d] : deg) values.push_back(d);
  s.mean = static_cast<double>(std::accumulate(values.begin(), values.end(), std::size_t{0})) /
           static_cast<double>(values.size());
  std::sort(values.begin(), values.end());
  const auto n = values.size();
  s.median = n % 2 ? static_cast<double>(values[n / 2])
                   : (static_cast<double>(values[n / 2 - 1]) + static_cast<double>(values[n / 2])) / 2.0;
  s.max = values.back();

  s.top.assign(deg.begin(), deg.end());
  std::stable_sort(s.top.begin(), s.top.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  if (s.top.size() > top_k) s.top.resize(top_k);
  return s;
}

// ---------------------------------------------------------------------------

void AsnDatabase::add(std::uint32_t prefix, int length, std::uint32_t asn, std::string org) {
  if (length < 0 || length > 32) throw std::invalid_argument("prefix length out of range");
  auto& slot = by_length_[static_cast<std::size_t>(length)];
  auto [it, inserted] = slot.insert_or_assign(prefix & mask_for(length), AsnInfo{asn, std::move(org)});
  (void)it;
  if (inserted) ++count_;
}

AsnInfo AsnDatabase::lookup(Ipv4 ip) const {
  for (int length = 32; length >= 0; --length) {
    const auto& slot = by_length_[static_cast<std::size_t>(length)];
    if (slot.empty()) continue;
    if (auto it = slot.find(ip.value() & mask_for(length)); it != slot.end()) return it->second;
  }
  return {};
}

AsnDatabase AsnDatabase::parse(std::istream& in) {
  AsnDatabase db;
  std::string line;
  std::size_t number = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++number;
    const std::string text = trim(line);
    if (text.empty() || text[0] == '#') continue;
    auto fail = [number](const std::string& why) {
      return std::runtime_error("asn db line " + std::to_string(number) + ": " + why);
    };
    if (!header_seen) {
      header_seen = true;
      if (text.rfind("prefix,asn", 0) == 0) continue;
    }
    const auto c1 = text.find(',');
    const auto c2 = c1 == std::string::npos ? std::string::npos : text.find(',', c1 + 1);
    if (c2 == std::string::npos) throw fail("expected prefix,asn,org");

    const std::string cidr = trim(std::string_view(text).substr(0, c1));
    const auto slash = cidr.find('/');
    if (slash == std::string::npos) throw fail("prefix '" + cidr + "' lacks a length");
    const auto net = Ipv4::parse(std::string_view(cidr).substr(0, slash));
    int length = -1;
    const auto len_text = std::string_view(cidr).substr(slash + 1);
    auto [lp, lec] = std::from_chars(len_text.data(), len_text.data() + len_text.size(), length);
    if (!net || lec != std::errc() || lp != len_text.data() + len_text.size() || length < 0 || length > 32)
      throw fail("invalid prefix '" + cidr + "'");

    std::string asn_text = trim(std::string_view(text).substr(c1 + 1, c2 - c1 - 1));
    if (asn_text.size() > 2 && (asn_text[0] == 'A' || asn_text[0] == 'a') && (asn_text[1] == 'S' || asn_text[1] == 's'))
      asn_text.erase(0, 2);
    std::uint32_t asn = 0;
    auto [ap, aec] = std::from_chars(asn_text.data(), asn_text.data() + asn_text.size(), asn);
    if (aec != std::errc() || ap != asn_text.data() + asn_text.size()) throw fail("invalid asn '" + asn_text + "'");

    std::string org = trim(std::string_view(text).substr(c2 + 1));
    if (org.size() >= 2 && org.front() == '"' && org.back() == '"') org = org.substr(1, org.size() - 2);
    db.add(net->value(), length, asn, std::move(org));
  }
  return db;
}

AsnDatabase AsnDatabase::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open asn db " + path.string());
  return parse(in);
}

// ---------------------------------------------------------------------------

std::vector<SubnetCount> subnet_saturation(std::span<const Ipv4> all_ips, std::size_t threshold,
                                           const AsnDatabase* db) {
  std::set<Ipv4> unique(all_ips.begin(), all_ips.end());
  std::map<Subnet24, std::size_t> counts;
  for (const auto& ip : unique) ++counts[subnet_of(ip)];

  std::vector<SubnetCount> out;
  out.reserve(counts.size());
  for (const auto& [subnet, n] : counts) {
    SubnetCount c;
    c.subnet = subnet;
    c.unique_ips = n;
    c.saturated = n >= threshold;
    if (db) c.as = db->lookup(subnet.host(0));
    out.push_back(std::move(c));
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const SubnetCount& a, const SubnetCount& b) { return a.unique_ips > b.unique_ips; });
  return out;
}

Sightings collect_sightings(std::span<const Connection> conns, std::span<const PeerList> lists) {
  Sightings s;
  for (const auto& c : conns) {
    see(s, c.remote_ip, c.start_ts);
    see(s, c.remote_ip, c.end_ts);
  }
  for (const auto& list : lists)
    for (const auto& e : list.entries)
      if (e.valid()) see(s, *e.ip, list.ts);
  return s;
}

std::vector<AnomalyFinding> saturation_findings(std::span<const SubnetCount> counts, const Sightings& sightings) {
  std::map<Subnet24, const SubnetCount*> saturated;
  for (const auto& c : counts)
    if (c.saturated) saturated[c.subnet] = &c;

  std::vector<AnomalyFinding> out;
  if (saturated.empty()) return out;
  for (const auto& [ip, span] : sightings) {
    auto it = saturated.find(subnet_of(ip));
    if (it == saturated.end()) continue;
    AnomalyFinding f;
    f.ip = ip;
    f.category = Category::SaturatedSubnetMember;
    f.evidence = Json{{"subnet", it->first.to_string()},
                      {"unique_ips", it->second->unique_ips},
                      {"asn", it->second->as.asn},
                      {"org", it->second->as.org}};
    f.first_seen = span.first;
    f.last_seen = span.second;
    out.push_back(std::move(f));
  }
  return out;
}

std::map<std::uint32_t, AsnRollup> asn_rollup(std::span<const Ipv4> ips, const AsnDatabase* db) {
  if (!db) throw DbMissing();
  std::map<std::uint32_t, AsnRollup> out;
  for (const auto& ip : ips) {
    const auto info = db->lookup(ip);
    auto& slot = out[info.asn];
    slot.as = info;
    slot.ips.insert(ip);
    slot.subnets.insert(subnet_of(ip));
  }
  return out;
}

}  // namespace peer_sentinel
