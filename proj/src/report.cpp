#include "peer_sentinel/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <sstream>

namespace peer_sentinel {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  return std::string(s.substr(b, s.find_last_not_of(" \t\r") - b + 1));
}

bool is_host(Ipv4 ip) { return ip.octet(3) >= kFirstHost && ip.octet(3) <= kLastHost; }

std::size_t intersection_size(const std::set<std::uint32_t>& a, const std::set<std::uint32_t>& b) {
  std::size_t n = 0;
  for (auto v : a) n += b.count(v);
  return n;
}

}  // namespace

// ---------------------------------------------------------------------------

bool BanList::covers(Ipv4 ip) const {
  return ips.count(ip) > 0 || (is_host(ip) && subnets.count(subnet_of(ip)) > 0);
}

void BanList::normalize() {
  std::erase_if(ips, [this](Ipv4 ip) { return is_host(ip) && subnets.count(subnet_of(ip)) > 0; });
}

std::set<Ipv4> BanList::expand() const {
  std::set<Ipv4> out(ips.begin(), ips.end());
  for (const auto& s : subnets)
    for (int h = kFirstHost; h <= kLastHost; ++h) out.insert(s.host(static_cast<std::uint8_t>(h)));
  return out;
}

std::size_t BanList::expanded_size() const { return expand().size(); }

BanList parse_banlist(std::istream& in) {
  BanList out;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string text = trim(line);
    if (text.empty()) continue;
    const auto slash = text.find('/');
    const auto ip = Ipv4::parse(std::string_view(text).substr(0, slash));
    if (!ip) throw BanListParseError(number, "'" + text + "' is not an IPv4 address");
    if (slash == std::string::npos) {
      out.ips.insert(*ip);
      continue;
    }
    const std::string len = text.substr(slash + 1);
    if (len == "32") {
      out.ips.insert(*ip);
    } else if (len == "24") {
      if (ip->octet(3) != 0) throw BanListParseError(number, "'" + text + "' has host bits set");
      out.subnets.insert(subnet_of(*ip));
    } else {
      throw BanListParseError(number, "only /24 and /32 prefixes are supported, got '" + text + "'");
    }
  }
  out.normalize();
  return out;
}

BanList load_banlist(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open ban list " + path.string());
  return parse_banlist(in);
}

std::string render_banlist(const BanList& list) {
  // Merge by numeric address so a /24 sits where its network address would.
  std::vector<std::pair<std::uint32_t, std::string>> lines;
  for (const auto& ip : list.ips) lines.emplace_back(ip.value(), ip.to_string());
  for (const auto& s : list.subnets) lines.emplace_back(s.prefix(), s.to_string());
  std::sort(lines.begin(), lines.end());
  std::string out;
  for (const auto& [_, text] : lines) out += text + "\n";
  return out;
}

BanListDiff expand_and_diff(const BanList& a, const BanList& b) {
  const auto ea = a.expand();
  const auto eb = b.expand();
  BanListDiff d;
  d.expanded_a = ea.size();
  d.expanded_b = eb.size();
  std::set_difference(ea.begin(), ea.end(), eb.begin(), eb.end(), std::inserter(d.only_a, d.only_a.end()));
  std::set_difference(eb.begin(), eb.end(), ea.begin(), ea.end(), std::inserter(d.only_b, d.only_b.end()));
  std::set_intersection(ea.begin(), ea.end(), eb.begin(), eb.end(), std::inserter(d.both, d.both.end()));
  return d;
}

// ---------------------------------------------------------------------------

std::vector<PeerProfile> build_profiles(std::span<const AnomalyFinding> findings, std::span<const Connection> conns,
                                        std::span<const IdObservation> ids, std::span<const PeerList> lists,
                                        const AsnDatabase* db) {
  std::map<Ipv4, PeerProfile> by_ip;
  auto at = [&by_ip](Ipv4 ip) -> PeerProfile& {
    auto [it, inserted] = by_ip.try_emplace(ip);
    if (inserted) it->second.ip = ip;
    return it->second;
  };

  for (const auto& c : conns) {
    auto& p = at(c.remote_ip);
    p.connected = true;
    ++p.connections;
    ++(c.direction == Direction::Incoming ? p.incoming : p.outgoing);
    p.total_duration += c.duration();
    p.max_duration = std::max(p.max_duration, c.duration());
  }
  for (const auto& list : lists)
    for (const auto& e : list.entries)
      if (e.valid()) at(*e.ip).promoted = true;
  for (const auto& o : ids)
    if (o.source != IdSource::PeerListEntry) at(o.ip).ids.insert(o.peer_id);
  for (const auto& f : findings) {
    auto& slot = at(f.ip).categories[f.category];
    if (slot.is_null()) {
      slot = f.evidence;
    } else {
      slot["merged"].push_back(f.evidence);
    }
  }

  std::vector<PeerProfile> out;
  out.reserve(by_ip.size());
  for (auto& [ip, p] : by_ip) {
    if (db) p.as = db->lookup(ip);
    out.push_back(std::move(p));
  }
  return out;
}

std::optional<double> flagged_fraction(std::span<const PeerProfile> profiles) {
  std::size_t connected = 0, flagged = 0;
  for (const auto& p : profiles) {
    if (!p.connected) continue;
    ++connected;
    if (p.flagged()) ++flagged;
  }
  if (connected == 0) return std::nullopt;
  return static_cast<double>(flagged) / static_cast<double>(connected);
}

std::set<Ipv4> flagged_set(std::span<const PeerProfile> profiles) {
  std::set<Ipv4> out;
  for (const auto& p : profiles)
    if (p.flagged()) out.insert(p.ip);
  return out;
}

Json profile_to_json(const PeerProfile& p) {
  Json categories = Json::object();
  for (const auto& [c, evidence] : p.categories) categories[std::string(category_name(c))] = evidence;
  Json ids = Json::array();
  for (auto id : p.ids) ids.push_back(format_peer_id(id));
  return Json{{"ip", p.ip.to_string()},
              {"subnet", p.subnet().to_string()},
              {"asn", p.as.asn},
              {"org", p.as.org},
              {"categories", std::move(categories)},
              {"connections",
               Json{{"count", p.connections},
                    {"incoming", p.incoming},
                    {"outgoing", p.outgoing},
                    {"total_duration", p.total_duration},
                    {"max_duration", p.max_duration}}},
              {"ids", std::move(ids)},
              {"connected", p.connected},
              {"promoted", p.promoted},
              {"flagged", p.flagged()}};
}

// ---------------------------------------------------------------------------

OverlapMatrix overlap_matrix(std::span<const PeerProfile> profiles, const BanList* external) {
  OverlapMatrix m;
  std::vector<std::set<std::uint32_t>> ip_sets, as_sets;
  for (auto c : all_categories()) m.labels.emplace_back(category_name(c));
  if (external) m.labels.emplace_back("BanList");
  ip_sets.resize(m.labels.size());
  as_sets.resize(m.labels.size());

  for (const auto& p : profiles) {
    for (const auto& [c, _] : p.categories) {
      ip_sets[static_cast<std::size_t>(c)].insert(p.ip.value());
      as_sets[static_cast<std::size_t>(c)].insert(p.as.asn);
    }
    if (external && external->covers(p.ip)) {
      ip_sets.back().insert(p.ip.value());
      as_sets.back().insert(p.as.asn);
    }
  }

  const auto n = m.labels.size();
  m.ips.assign(n, std::vector<std::size_t>(n, 0));
  m.ases.assign(n, std::vector<std::size_t>(n, 0));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      m.ips[i][j] = m.ips[j][i] = intersection_size(ip_sets[i], ip_sets[j]);
      m.ases[i][j] = m.ases[j][i] = intersection_size(as_sets[i], as_sets[j]);
    }
  }
  return m;
}

Json overlap_to_json(const OverlapMatrix& m, bool with_as) {
  Json out{{"labels", m.labels}, {"ips", m.ips}};
  if (with_as) out["ases"] = m.ases;
  return out;
}

// ---------------------------------------------------------------------------

ExposureTimeline exposure_timeline(std::span<const Connection> conns, const std::set<Ipv4>& flagged, double bucket) {
  if (!(bucket > 0.0)) throw std::invalid_argument("exposure bucket must be positive");
  ExposureTimeline out;
  out.bucket = bucket;
  if (conns.empty()) return out;

  double begin = conns.front().start_ts, end = conns.front().end_ts;
  for (const auto& c : conns) {
    begin = std::min(begin, c.start_ts);
    end = std::max(end, c.end_ts);
  }
  const auto count = static_cast<std::size_t>(std::floor((end - begin) / bucket)) + 1;
  out.points.resize(count);
  for (std::size_t k = 0; k < count; ++k) out.points[k].t = begin + static_cast<double>(k) * bucket;

  for (const auto& c : conns) {
    const bool bad = flagged.count(c.remote_ip) > 0;
    // Scan from the bucket holding start_ts until buckets begin after end_ts.
    const auto first = static_cast<std::size_t>(std::max(0.0, std::floor((c.start_ts - begin) / bucket)));
    for (std::size_t k = first; k < count; ++k) {
      auto& p = out.points[k];
      if (p.t > c.end_ts) break;
      if (!(c.start_ts < p.t + bucket)) continue;
      if (c.direction == Direction::Incoming) {
        ++p.incoming_active;
        if (bad) ++p.incoming_flagged;
      } else {
        ++p.outgoing_active;
        if (bad) ++p.outgoing_flagged;
      }
    }
  }

  double in_sum = 0.0, out_sum = 0.0;
  std::size_t in_n = 0, out_n = 0;
  for (auto& p : out.points) {
    if (p.incoming_active) {
      p.incoming = static_cast<double>(p.incoming_flagged) / static_cast<double>(p.incoming_active);
      in_sum += *p.incoming;
      ++in_n;
    }
    if (p.outgoing_active) {
      p.outgoing = static_cast<double>(p.outgoing_flagged) / static_cast<double>(p.outgoing_active);
      out_sum += *p.outgoing;
      ++out_n;
    }
  }
  if (in_n) out.mean_incoming = in_sum / static_cast<double>(in_n);
  if (out_n) out.mean_outgoing = out_sum / static_cast<double>(out_n);
  return out;
}

std::optional<PeerListExposure> peer_list_exposure(std::span<const PeerList> lists, const std::set<Ipv4>& flagged,
                                                   std::size_t full_size) {
  PeerListExposure out;
  double sum = 0.0;
  for (const auto& list : lists) {
    if (!list.is_full(full_size)) continue;
    std::size_t bad = 0;
    for (const auto& e : list.entries)
      if (e.valid() && flagged.count(*e.ip)) ++bad;
    const double fraction = static_cast<double>(bad) / static_cast<double>(list.entries.size());
    if (out.lists.empty() || fraction < out.min) {
      out.min = fraction;
      out.min_index = out.lists.size();
    }
    out.lists.push_back({list.source_ip, list.ts, fraction});
    sum += fraction;
  }
  if (out.lists.empty()) return std::nullopt;
  out.mean = sum / static_cast<double>(out.lists.size());
  return out;
}

BanList emit_banlist(std::span<const PeerProfile> profiles, std::span<const SubnetCount> saturation) {
  BanList out;
  for (const auto& p : profiles)
    if (p.flagged()) out.ips.insert(p.ip);
  for (const auto& s : saturation)
    if (s.saturated) out.subnets.insert(s.subnet);
  out.normalize();
  return out;
}

}  // namespace peer_sentinel
