#include "peer_sentinel/analysis.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <sstream>

#ifndef PEER_SENTINEL_VERSION
#define PEER_SENTINEL_VERSION "0.0.0"
#endif

namespace peer_sentinel {

namespace {

constexpr int kSchemaVersion = 1;
constexpr std::size_t kReportedSubnets = 25;

void append(std::vector<AnomalyFinding>& dst, std::vector<AnomalyFinding> src) {
  dst.insert(dst.end(), std::make_move_iterator(src.begin()), std::make_move_iterator(src.end()));
}

Json optional_number(const std::optional<double>& v) { return v ? Json(*v) : Json(nullptr); }

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

std::string_view tool_version() { return PEER_SENTINEL_VERSION; }

std::optional<InputFormat> input_format_from_name(std::string_view name) {
  if (name == "jsonl") return InputFormat::Jsonl;
  if (name == "raw-stream") return InputFormat::RawStream;
  return std::nullopt;
}

std::string_view input_format_name(InputFormat f) { return f == InputFormat::Jsonl ? "jsonl" : "raw-stream"; }

AnalysisResult analyze_records(std::vector<PacketRecord> records, const AnalysisOptions& options) {
  const auto& cfg = options.config;
  cfg.validate();
  AnalysisResult r;
  r.ingest.records = records.size();

  GroupingOptions grouping;
  grouping.local_ip = options.local_ip;
  grouping.session_gap = cfg.session_gap;
  auto grouped = group_connections(std::move(records), grouping);
  r.local_ip = grouped.local_ip;
  r.ingest.unassigned_records = grouped.unassigned_records;
  auto filtered = filter_incomplete(std::move(grouped.connections));
  r.connections = std::move(filtered.kept);
  r.ingest.connections = r.connections.size();
  r.ingest.dropped_connections = filtered.dropped;

  // Only lists the remote side sent; the node's own lists describe itself.
  std::vector<PacketRecord> remote_records;
  for (const auto& c : r.connections)
    for (const auto& m : c.messages)
      if (m.sender == Sender::Remote && m.record.fields.contains(kPeerListPath)) remote_records.push_back(m.record);
  std::stable_sort(remote_records.begin(), remote_records.end(),
                   [](const PacketRecord& a, const PacketRecord& b) { return a.ts < b.ts; });
  r.lists = extract_peer_lists(remote_records);
  r.ingest.peer_lists = r.lists.size();

  std::vector<AnomalyFinding> findings;
  append(findings, detect_support_flags_omission(r.connections));
  append(findings, detect_deprecated_last_seen(r.lists));
  if (auto frag = detect_signature_only_fragments(r.connections, cfg)) {
    append(findings, std::move(*frag));
  } else {
    r.not_assessable[Category::SignatureOnlyFragment] = "capture carries no TCP segment sizes";
  }
  append(findings, detect_low_diversity(r.lists, cfg));
  append(findings, detect_similar_lists(r.lists, cfg, std::max(1u, options.jobs)));
  append(findings, detect_short_lived(r.connections, cfg));
  append(findings, detect_throttled_timed_sync(r.connections, cfg));
  append(findings, detect_ping_flooding(r.connections, cfg));
  append(findings, detect_sequence_violations(r.connections, cfg));

  r.id_observations = collect_id_observations(r.connections, r.lists);
  const auto driving = flagging_observations(r.id_observations, cfg.list_ids_drive_flagging);
  append(findings, detect_temporal_id_anomaly(driving));
  r.id_clusters = build_id_clusters(driving);
  append(findings, cluster_findings(r.id_clusters, driving));
  r.id_multiplicity = id_multiplicity_stats(driving);

  const auto sightings = collect_sightings(r.connections, r.lists);
  std::vector<Ipv4> all_ips;
  all_ips.reserve(sightings.size());
  for (const auto& [ip, _] : sightings) all_ips.push_back(ip);
  r.saturation = subnet_saturation(all_ips, cfg.saturation_threshold, options.asn_db);
  append(findings, saturation_findings(r.saturation, sightings));

  r.findings = normalize_findings(std::move(findings));

  r.profiles = build_profiles(r.findings, r.connections, r.id_observations, r.lists, options.asn_db);
  r.flagged_fraction = flagged_fraction(r.profiles);
  r.overlap = overlap_matrix(r.profiles, options.external_banlist);
  const auto flagged = flagged_set(r.profiles);
  r.timeline = exposure_timeline(r.connections, flagged, cfg.exposure_bucket);
  r.list_exposure = peer_list_exposure(r.lists, flagged, cfg.full_list_size);

  r.promotion = build_promotion_graph(r.lists);
  if (!r.promotion.nodes.empty()) r.in_degree = in_degree_stats(r.promotion);

  r.banlist = emit_banlist(r.profiles, r.saturation);

  std::vector<double> means;
  for (const auto& c : r.connections) {
    if (auto s = timed_sync_stats(c)) means.push_back(s->mean_remote_interval);
  }
  r.timed_sync_assessed = means.size();
  if (!means.empty()) {
    std::sort(means.begin(), means.end());
    const auto n = means.size();
    r.timed_sync_median = n % 2 ? means[n / 2] : (means[n / 2 - 1] + means[n / 2]) / 2.0;
  }
  return r;
}

AnalysisResult analyze_capture(const std::filesystem::path& input, InputFormat format,
                               const AnalysisOptions& options) {
  if (!std::filesystem::exists(input)) throw IngestError("input " + input.string() + " does not exist");
  if (format == InputFormat::Jsonl) {
    auto capture = read_jsonl(input);
    auto r = analyze_records(std::move(capture.records), options);
    r.ingest.skipped_lines = capture.stats.skipped;
    r.ingest.order_violations = capture.stats.order_violations;
    r.ingest.warnings = capture.stats.errors;
    return r;
  }
  auto raw = read_raw_streams(input);
  auto r = analyze_records(std::move(raw.records), options);
  for (const auto& [_, n] : raw.stream_errors) r.ingest.stream_errors += n;
  r.ingest.warnings = raw.error_reports;
  return r;
}

// ---------------------------------------------------------------------------

Json findings_json(const AnalysisResult& r) {
  Json list = Json::array();
  for (const auto& f : r.findings) list.push_back(finding_to_json(f));
  Json skipped = Json::object();
  for (const auto& [c, why] : r.not_assessable) skipped[std::string(category_name(c))] = why;
  return Json{{"schema_version", kSchemaVersion}, {"findings", std::move(list)}, {"not_assessable", std::move(skipped)}};
}

Json report_json(const AnalysisResult& r, const RunMeta& meta, const AnalysisOptions& options) {
  Json report = Json::object();
  report["schema_version"] = kSchemaVersion;
  report["run_meta"] = Json{{"tool", "peer-sentinel"},
                            {"version", std::string(tool_version())},
                            {"config_hash", meta.config_hash},
                            {"inputs", meta.inputs},
                            {"format", std::string(input_format_name(meta.format))},
                            {"local_ip", r.local_ip.to_string()},
                            {"generated_at", meta.generated_at}};

  const auto& in = r.ingest;
  report["ingest"] = Json{{"records", in.records},
                          {"skipped_lines", in.skipped_lines},
                          {"order_violations", in.order_violations},
                          {"stream_errors", in.stream_errors},
                          {"connections", in.connections},
                          {"dropped_connections", in.dropped_connections},
                          {"unassigned_records", in.unassigned_records},
                          {"peer_lists", in.peer_lists},
                          {"warnings", in.warnings}};

  Json profiles = Json::array();
  for (const auto& p : r.profiles)
    if (p.connected || p.flagged()) profiles.push_back(profile_to_json(p));
  report["profiles"] = std::move(profiles);
  const auto f = findings_json(r);
  report["findings"] = f["findings"];
  report["not_assessable"] = f["not_assessable"];

  std::map<std::string, std::size_t> per_category;
  for (const auto& finding : r.findings) ++per_category[std::string(category_name(finding.category))];
  std::size_t connected = 0, promoted_only = 0;
  for (const auto& p : r.profiles) (p.connected ? connected : promoted_only) += 1;
  report["summary"] = Json{{"flagged_ips", flagged_set(r.profiles).size()},
                           {"connected_ips", connected},
                           {"promoted_only_ips", promoted_only},
                           {"flagged_fraction", optional_number(r.flagged_fraction)},
                           {"findings_per_category", per_category}};

  report["overlap"] = overlap_to_json(r.overlap, options.asn_db != nullptr);

  Json timeline = Json::array();
  for (const auto& p : r.timeline.points) {
    timeline.push_back(Json{{"t", p.t},
                            {"incoming", optional_number(p.incoming)},
                            {"outgoing", optional_number(p.outgoing)},
                            {"incoming_active", p.incoming_active},
                            {"outgoing_active", p.outgoing_active}});
  }
  Json lists = nullptr;
  if (r.list_exposure) {
    const auto& e = *r.list_exposure;
    const auto& witness = e.lists[e.min_index];
    lists = Json{{"full_lists", e.lists.size()},
                 {"mean", e.mean},
                 {"min", e.min},
                 {"min_witness", Json{{"source", witness.source.to_string()}, {"ts", witness.ts}}},
                 {"every_list_exposed", e.min > 0.0}};
  }
  report["exposure"] = Json{{"bucket", r.timeline.bucket},
                            {"mean_incoming", optional_number(r.timeline.mean_incoming)},
                            {"mean_outgoing", optional_number(r.timeline.mean_outgoing)},
                            {"timeline", std::move(timeline)},
                            {"peer_lists", std::move(lists)}};

  Json promo = Json{{"nodes", r.promotion.nodes.size()}, {"edges", r.promotion.edges.size()}};
  std::size_t self_edges = 0;
  for (const auto& [_, n] : r.promotion.self_edges) self_edges += n;
  promo["self_edges"] = self_edges;
  if (r.in_degree) {
    Json top = Json::array();
    for (const auto& [ip, d] : r.in_degree->top) top.push_back(Json{{"ip", ip.to_string()}, {"in_degree", d}});
    promo["in_degree"] = Json{{"mean", r.in_degree->mean},
                              {"median", r.in_degree->median},
                              {"max", r.in_degree->max},
                              {"top", std::move(top)}};
  } else {
    promo["in_degree"] = nullptr;
  }
  report["promotion_stats"] = std::move(promo);

  Json subnets = Json::array();
  std::size_t saturated = 0;
  for (std::size_t i = 0; i < r.saturation.size(); ++i) {
    const auto& s = r.saturation[i];
    if (s.saturated) ++saturated;
    if (!s.saturated && i >= kReportedSubnets) continue;
    subnets.push_back(Json{{"subnet", s.subnet.to_string()},
                           {"unique_ips", s.unique_ips},
                           {"asn", s.as.asn},
                           {"org", s.as.org},
                           {"saturated", s.saturated}});
  }
  Json saturation{{"threshold", options.config.saturation_threshold},
                  {"observed_subnets", r.saturation.size()},
                  {"saturated_subnets", saturated},
                  {"subnets", std::move(subnets)}};
  if (options.asn_db) {
    std::vector<Ipv4> flagged_ips;
    for (const auto& p : r.profiles)
      if (p.flagged()) flagged_ips.push_back(p.ip);
    Json rollup = Json::array();
    for (const auto& [asn, roll] : asn_rollup(flagged_ips, options.asn_db)) {
      rollup.push_back(
          Json{{"asn", asn}, {"org", roll.as.org}, {"ips", roll.ips.size()}, {"subnets", roll.subnets.size()}});
    }
    saturation["flagged_by_asn"] = std::move(rollup);
  }
  report["saturation"] = std::move(saturation);

  Json clusters = Json::array();
  for (const auto& c : r.id_clusters) {
    Json ips = Json::array(), ids = Json::array();
    std::set<std::uint32_t> asns;
    for (const auto& ip : c.ips) {
      ips.push_back(ip.to_string());
      if (options.asn_db) asns.insert(options.asn_db->lookup(ip).asn);
    }
    for (auto id : c.ids) ids.push_back(format_peer_id(id));
    Json cj{{"ips", std::move(ips)}, {"ids", std::move(ids)}, {"edge_count", c.edge_count}};
    // Several ASes argue against a single shared VPN exit behind the cluster.
    if (options.asn_db) cj["distinct_asns"] = asns.size();
    clusters.push_back(std::move(cj));
  }
  Json multiplicity = nullptr;
  if (r.id_multiplicity) {
    Json hist = Json::object();
    for (const auto& [k, n] : r.id_multiplicity->histogram) hist[std::to_string(k)] = n;
    multiplicity = Json{{"fraction_single_id", r.id_multiplicity->fraction_single_id}, {"histogram", std::move(hist)}};
  }
  report["identity"] = Json{{"observations", r.id_observations.size()},
                            {"multiplicity", std::move(multiplicity)},
                            {"clusters", std::move(clusters)}};

  report["timing"] = Json{{"assessed_connections", r.timed_sync_assessed},
                          {"median_mean_remote_interval", optional_number(r.timed_sync_median)},
                          {"standard_interval", options.config.timed_sync_standard}};
  report["banlist"] = Json{{"ips", r.banlist.ips.size()},
                           {"subnets", r.banlist.subnets.size()},
                           {"expanded_size", r.banlist.expanded_size()}};
  return report;
}

std::string summary_text(const AnalysisResult& r) {
  std::ostringstream out;
  out << "peer-sentinel " << tool_version() << "\n";
  out << "local endpoint     " << r.local_ip.to_string() << "\n";
  out << "records            " << r.ingest.records << "\n";
  out << "connections        " << r.ingest.connections << " (dropped incomplete: " << r.ingest.dropped_connections
      << ")\n";
  out << "peer lists         " << r.ingest.peer_lists << "\n";

  std::size_t connected = 0, flagged_connected = 0;
  for (const auto& p : r.profiles) {
    if (!p.connected) continue;
    ++connected;
    if (p.flagged()) ++flagged_connected;
  }
  out << "connected peers    " << connected << ", flagged " << flagged_connected;
  if (r.flagged_fraction) out << " (" << fixed(100.0 * *r.flagged_fraction, 2) << "%)";
  out << "\n\nfindings by category\n";
  std::map<Category, std::size_t> counts;
  for (const auto& f : r.findings) ++counts[f.category];
  for (auto c : all_categories()) {
    out << "  " << category_name(c);
    for (auto pad = category_name(c).size(); pad < 24; ++pad) out << ' ';
    if (auto it = r.not_assessable.find(c); it != r.not_assessable.end()) {
      out << "not assessable: " << it->second << "\n";
    } else {
      out << (counts.count(c) ? counts[c] : 0) << "\n";
    }
  }

  out << "\nexposure\n";
  auto pct = [](const std::optional<double>& v) { return v ? fixed(100.0 * *v, 2) + "%" : std::string("n/a"); };
  out << "  incoming pool      " << pct(r.timeline.mean_incoming) << "\n";
  out << "  outgoing pool      " << pct(r.timeline.mean_outgoing) << "\n";
  out << "  peer lists (mean)  "
      << pct(r.list_exposure ? std::optional<double>(r.list_exposure->mean) : std::nullopt) << "\n";
  if (r.timed_sync_median)
    out << "\nmedian Timed Sync interval " << fixed(*r.timed_sync_median, 2) << " s over " << r.timed_sync_assessed
        << " connections\n";
  out << "\nban list           " << r.banlist.ips.size() << " addresses, " << r.banlist.subnets.size()
      << " /24 ranges (" << r.banlist.expanded_size() << " hosts)\n";
  return out.str();
}

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace peer_sentinel
