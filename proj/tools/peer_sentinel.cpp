#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "peer_sentinel/analysis.hpp"
#include "peer_sentinel/synth.hpp"

namespace fs = std::filesystem;
using namespace peer_sentinel;

namespace {

constexpr int kExitClean = 0;
constexpr int kExitError = 1;
constexpr int kExitFindings = 2;

/// Adds the failing stage to any exception escaping it.
class StageError : public std::runtime_error {
 public:
  StageError(const std::string& stage, const std::string& what) : std::runtime_error(stage + ": " + what) {}
};

template <typename F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + path.string());
}

Json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  return Json::parse(in);
}

struct AnalyzeArgs {
  std::string input;
  std::string format = "jsonl";
  std::string config;
  std::vector<std::string> overrides;
  std::string asn_db;
  std::string banlist;
  std::string out_dir;
  std::string local_ip;
  unsigned jobs = std::max(1u, std::thread::hardware_concurrency());
};

int run_analyze(const AnalyzeArgs& a) {
  AnalysisOptions options;
  options.jobs = std::max(1u, a.jobs);
  options.config = stage("config", [&] {
    DetectorConfig cfg = a.config.empty() ? DetectorConfig{} : load_config(a.config);
    for (const auto& o : a.overrides) apply_config_override(cfg, o);
    cfg.validate();
    return cfg;
  });
  if (!a.local_ip.empty()) {
    options.local_ip = Ipv4::parse(a.local_ip);
    if (!options.local_ip) throw StageError("arguments", "--local-ip '" + a.local_ip + "' is not an IPv4 address");
  }
  const auto format = input_format_from_name(a.format);
  if (!format) throw StageError("arguments", "--format must be jsonl or raw-stream");

  std::optional<AsnDatabase> db;
  if (!a.asn_db.empty()) db = stage("asn-db", [&] { return AsnDatabase::load(a.asn_db); });
  options.asn_db = db ? &*db : nullptr;
  std::optional<BanList> external;
  if (!a.banlist.empty()) external = stage("banlist", [&] { return load_banlist(a.banlist); });
  options.external_banlist = external ? &*external : nullptr;

  const auto result = stage("analyze", [&] { return analyze_capture(a.input, *format, options); });

  RunMeta meta;
  meta.inputs = {a.input};
  meta.format = *format;
  meta.config_hash = config_hash(options.config);
  meta.generated_at = utc_now();

  stage("output", [&] {
    const fs::path out(a.out_dir);
    fs::create_directories(out);
    write_file(out / "report.json", report_json(result, meta, options).dump(2) + "\n");
    write_file(out / "findings.json", findings_json(result).dump(2) + "\n");
    write_file(out / "banlist.txt", render_banlist(result.banlist));
    write_file(out / "summary.txt", summary_text(result));
    return 0;
  });
  std::cout << summary_text(result);
  for (const auto& w : result.ingest.warnings) std::cerr << "warning: " << w << "\n";
  return result.findings.empty() ? kExitClean : kExitFindings;
}

int run_decode(const std::string& input, const std::string& output) {
  const auto raw = stage("decode", [&] { return read_raw_streams(input); });
  std::size_t fatal = 0;
  for (const auto& [_, n] : raw.stream_errors) fatal += n;
  stage("output", [&] {
    if (output.empty() || output == "-") {
      write_jsonl(std::cout, raw.records);
    } else {
      std::ofstream out(output, std::ios::binary);
      write_jsonl(out, raw.records);
      if (!out) throw std::runtime_error("cannot write " + output);
    }
    return 0;
  });
  std::cerr << "decoded " << raw.records.size() << " records from " << raw.files << " stream(s); " << fatal
            << " stream(s) damaged\n";
  for (const auto& e : raw.error_reports) std::cerr << "  " << e << "\n";
  return kExitClean;
}

/// Flagged ips from a findings.json or report.json; saturated /24s too when
/// the document is a report.
BanList banlist_from_document(const Json& doc) {
  BanList out;
  if (!doc.contains("findings") || !doc["findings"].is_array())
    throw std::runtime_error("document has no findings array");
  for (const auto& f : doc["findings"]) {
    auto ip = Ipv4::parse(f.at("ip").get<std::string>());
    if (!ip) throw std::runtime_error("finding with invalid ip");
    out.ips.insert(*ip);
  }
  if (auto sat = doc.find("saturation"); sat != doc.end() && sat->contains("subnets")) {
    for (const auto& s : (*sat)["subnets"]) {
      if (!s.value("saturated", false)) continue;
      if (auto sn = Subnet24::parse(s.at("subnet").get<std::string>())) out.subnets.insert(*sn);
    }
  }
  out.normalize();
  return out;
}

int run_banlist_emit(const std::string& findings, const std::string& output) {
  const auto list = stage("banlist", [&] { return banlist_from_document(read_json(findings)); });
  const auto text = render_banlist(list);
  if (output.empty() || output == "-") {
    std::cout << text;
  } else {
    stage("output", [&] {
      write_file(output, text);
      return 0;
    });
  }
  return kExitClean;
}

int run_banlist_diff(const std::string& a_path, const std::string& b_path, const std::string& show) {
  const auto a = stage("banlist " + a_path, [&] { return load_banlist(a_path); });
  const auto b = stage("banlist " + b_path, [&] { return load_banlist(b_path); });
  const auto d = expand_and_diff(a, b);
  std::cout << "expanded_a " << d.expanded_a << "\n"
            << "expanded_b " << d.expanded_b << "\n"
            << "only_a " << d.only_a.size() << "\n"
            << "only_b " << d.only_b.size() << "\n"
            << "both " << d.both.size() << "\n";
  const std::set<Ipv4>* listed = show == "only-a" ? &d.only_a : show == "only-b" ? &d.only_b
                                 : show == "both"  ? &d.both
                                                   : nullptr;
  if (listed)
    for (const auto& ip : *listed) std::cout << ip.to_string() << "\n";
  return kExitClean;
}

int run_simulate(const std::string& scenario_path, const std::string& out_dir) {
  const auto scenario = stage("scenario", [&] { return synth::load_scenario(scenario_path); });
  stage("simulate", [&] {
    synth::write_corpus(scenario, out_dir);
    return 0;
  });
  const auto labels = synth::expected_labels(scenario);
  std::cout << "wrote " << (fs::path(out_dir) / "capture.jsonl").string() << ", labels.txt (" << labels.size()
            << " labels) and raw/\n";
  return kExitClean;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Offline anomaly detection for Monero peer-to-peer captures", "peer-sentinel"};
  app.set_version_flag("--version", std::string(tool_version()));
  app.require_subcommand(1);

  AnalyzeArgs analyze;
  auto* cmd_analyze = app.add_subcommand("analyze", "Run every detector and write report, findings and ban list");
  cmd_analyze->add_option("--input", analyze.input, "Capture: JSONL file, or .levin file/directory")->required();
  cmd_analyze->add_option("--format", analyze.format, "jsonl or raw-stream")
      ->check(CLI::IsMember({"jsonl", "raw-stream"}))
      ->capture_default_str();
  cmd_analyze->add_option("--config", analyze.config, "Detector configuration file (key = value)");
  cmd_analyze->add_option("--set", analyze.overrides, "Override one configuration key, key=value");
  cmd_analyze->add_option("--asn-db", analyze.asn_db, "CSV prefix,asn,org");
  cmd_analyze->add_option("--banlist", analyze.banlist, "External ban list to compare against");
  cmd_analyze->add_option("--out-dir", analyze.out_dir, "Directory for the output files")->required();
  cmd_analyze->add_option("--local-ip", analyze.local_ip, "Address of the capturing node");
  cmd_analyze->add_option("--jobs", analyze.jobs, "Worker threads")->capture_default_str();

  std::string decode_input, decode_out;
  auto* cmd_decode = app.add_subcommand("decode", "Decode raw Levin streams into normalized JSONL");
  cmd_decode->add_option("--input", decode_input, ".levin file or directory")->required();
  cmd_decode->add_option("--out", decode_out, "Output JSONL path; '-' for stdout");

  auto* cmd_banlist = app.add_subcommand("banlist", "Emit or compare ban lists");
  cmd_banlist->require_subcommand(1);
  std::string emit_findings, emit_out;
  auto* cmd_emit = cmd_banlist->add_subcommand("emit", "Ban list from findings.json or report.json");
  cmd_emit->add_option("--findings", emit_findings, "findings.json or report.json")->required();
  cmd_emit->add_option("--out", emit_out, "Output path; '-' for stdout");
  std::string diff_a, diff_b, diff_show;
  auto* cmd_diff = cmd_banlist->add_subcommand("diff", "Expand /24s to 254 hosts and compare two lists");
  cmd_diff->add_option("a", diff_a, "First ban list")->required();
  cmd_diff->add_option("b", diff_b, "Second ban list")->required();
  cmd_diff->add_option("--show", diff_show, "Also list the addresses of one part")
      ->check(CLI::IsMember({"only-a", "only-b", "both"}));

  std::string scenario_path, simulate_out;
  auto* cmd_simulate = app.add_subcommand("simulate", "Generate a synthetic capture with ground-truth labels");
  cmd_simulate->add_option("--scenario", scenario_path, "Scenario JSON")->required();
  cmd_simulate->add_option("--out", simulate_out, "Output directory")->required();

  bool show_defaults = false;
  std::string check_config;
  auto* cmd_config = app.add_subcommand("config", "Show or check detector configuration");
  cmd_config->add_flag("--defaults", show_defaults, "Print the built-in defaults with comments");
  cmd_config->add_option("--check", check_config, "Validate a configuration file and print it resolved");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitClean : kExitError;
  }

  try {
    if (*cmd_analyze) return run_analyze(analyze);
    if (*cmd_decode) return run_decode(decode_input, decode_out);
    if (*cmd_emit) return run_banlist_emit(emit_findings, emit_out);
    if (*cmd_diff) return run_banlist_diff(diff_a, diff_b, diff_show);
    if (*cmd_simulate) return run_simulate(scenario_path, simulate_out);
    if (*cmd_config) {
      if (!check_config.empty()) {
        const auto cfg = stage("config", [&] { return load_config(check_config); });
        std::cout << dump_config(cfg, false);
      } else if (show_defaults) {
        std::cout << dump_config(DetectorConfig{}, true);
      } else {
        std::cerr << "config: pass --defaults or --check <file>\n";
        return kExitError;
      }
      return kExitClean;
    }
  } catch (const std::exception& e) {
    std::cerr << "peer-sentinel: " << e.what() << "\n";
    return kExitError;
  }
  return kExitError;
}
