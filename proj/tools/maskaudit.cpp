// maskaudit: build, verify, evaluate and refine mask quality benchmarks.
//
// Exit codes: 0 success, 1 verification/evaluation violations, 2 input
// errors. All randomness flows from --seed; machine outputs go to files,
// logs are line-delimited JSON on stderr (MASKAUDIT_LOG sets verbosity).

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "maskaudit/auditors.hpp"
#include "maskaudit/dataset.hpp"
#include "maskaudit/manifest.hpp"
#include "maskaudit/metrics.hpp"

namespace fs = std::filesystem;
using namespace maskaudit;

namespace {

enum class LogLevel { debug = 0, info = 1, warn = 2, error = 3 };

LogLevel log_threshold() {
    const char* env = std::getenv("MASKAUDIT_LOG");
    if (!env) return LogLevel::warn;
    const std::string v(env);
    if (v == "debug") return LogLevel::debug;
    if (v == "info") return LogLevel::info;
    if (v == "error") return LogLevel::error;
    return LogLevel::warn;
}

const char* level_name(LogLevel l) {
    switch (l) {
        case LogLevel::debug: return "debug";
        case LogLevel::info: return "info";
        case LogLevel::warn: return "warning";
        case LogLevel::error: return "error";
    }
    return "?";
}

void log_line(LogLevel level, const std::string& event, json fields = json::object()) {
    static const LogLevel threshold = log_threshold();
    if (level < threshold) return;
    fields["event"] = event;
    fields["level"] = level_name(level);
    std::cerr << fields.dump() << "\n";
}

std::pair<double, double> parse_range(const std::string& text, const std::string& flag) {
    const std::size_t comma = text.find(',');
    if (comma == std::string::npos) {
        throw Error(flag + " expects two comma-separated numbers, got '" + text + "'");
    }
    try {
        return {std::stod(text.substr(0, comma)), std::stod(text.substr(comma + 1))};
    } catch (const std::exception&) {
        throw Error(flag + " expects two comma-separated numbers, got '" + text + "'");
    }
}

struct PredictionFileStats {
    long lines = 0;
    long bad_lines = 0;
    long duplicates = 0;
};

PredictionMap load_predictions(const fs::path& path, PredictionFileStats& stats) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open predictions file: " + path.string());
    PredictionMap out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        ++stats.lines;
        json record;
        try {
            record = json::parse(line);
        } catch (const json::exception&) {
            ++stats.bad_lines;
            log_line(LogLevel::warn, "bad_prediction_line", {{"line_number", stats.lines}});
            continue;
        }
        if (!record.is_object() || !record.contains("sample_id")) {
            ++stats.bad_lines;
            log_line(LogLevel::warn, "prediction_without_sample_id",
                     {{"line_number", stats.lines}});
            continue;
        }
        const std::string sample_id = record.at("sample_id").get<std::string>();
        AuditPrediction pred;
        if (record.contains("raw_text") && record.at("raw_text").is_string()) {
            pred = parse_audit(record.at("raw_text").get<std::string>());
        } else {
            std::optional<double> iou;
            std::optional<std::string> type_s, action_s;
            if (record.contains("iou") && record.at("iou").is_number()) {
                iou = record.at("iou").get<double>();
            }
            if (record.contains("mask_type") && record.at("mask_type").is_string()) {
                type_s = record.at("mask_type").get<std::string>();
            }
            if (record.contains("action") && record.at("action").is_string()) {
                action_s = record.at("action").get<std::string>();
            }
            pred = structured_prediction(iou, type_s, action_s);
        }
        // Optional sidecar target hint for the refine loop.
        if (record.contains("target") && record.at("target").is_string() &&
            pred.reasoning.empty()) {
            pred.reasoning = "target: " + record.at("target").get<std::string>();
        }
        if (!out.emplace(sample_id, pred).second) {
            ++stats.duplicates;
            out[sample_id] = pred; // last record wins
            log_line(LogLevel::warn, "duplicate_prediction", {{"sample_id", sample_id}});
        }
    }
    return out;
}

void print_composition(std::ostream& os, const Composition& comp) {
    for (const auto& [protocol, splits] : comp) {
        os << "protocol: " << protocol << "\n";
        char header[160];
        std::snprintf(header, sizeof(header), "%-12s %8s %8s %8s %8s %8s %8s %9s %10s %7s\n",
                      "split", "total", "perfect", "cutout", "dilate", "erode", "merge",
                      "full_neg", "instances", "videos");
        os << header;
        for (const auto& [split, row] : splits) {
            char buf[160];
            std::snprintf(buf, sizeof(buf), "%-12s %8ld %8ld %8ld %8ld %8ld %8ld %9ld %10ld %7ld\n",
                          split.c_str(), row.total, row.perfect, row.cutout, row.dilate,
                          row.erode, row.merge, row.full_neg, row.instances, row.videos);
            os << buf;
        }
    }
}

int cmd_build(const std::string& instances_file, const std::string& out_dir,
              std::uint64_t seed, const std::string& protocol, int jobs,
              const std::optional<std::string>& hard_range,
              const std::optional<std::string>& medium_range,
              const std::optional<std::string>& merge_thresholds,
              const std::optional<int>& max_neg) {
    BuildConfig cfg;
    cfg.global_seed = seed;
    cfg.jobs = jobs;
    if (protocol == "image") {
        cfg.image_protocol = true;
        cfg.video_protocol = false;
    } else if (protocol == "video") {
        cfg.image_protocol = false;
        cfg.video_protocol = true;
    } else if (protocol == "both") {
        cfg.image_protocol = true;
        cfg.video_protocol = true;
    } else {
        throw Error("unknown protocol '" + protocol + "' (expected image, video or both)");
    }
    if (hard_range) {
        const auto [lo, hi] = parse_range(*hard_range, "--hard-range");
        cfg.hard = IoUTarget{lo, hi};
        cfg.thresholds.geometric_minor_min = lo;
        cfg.overrides.push_back("hard_range");
    }
    if (medium_range) {
        const auto [lo, hi] = parse_range(*medium_range, "--medium-range");
        cfg.medium = IoUTarget{lo, hi};
        cfg.overrides.push_back("medium_range");
    }
    if (merge_thresholds) {
        const auto [minor, major] = parse_range(*merge_thresholds, "--merge-thresholds");
        cfg.thresholds.merge_minor_min = minor;
        cfg.thresholds.merge_major_min = major;
        cfg.overrides.push_back("merge_thresholds");
    }
    if (max_neg) {
        cfg.max_negatives = *max_neg;
        cfg.overrides.push_back("max_negatives");
    }
    if (!(cfg.hard.lo > 0 && cfg.hard.lo < cfg.hard.hi && cfg.hard.hi <= 1.0) ||
        !(cfg.medium.lo > 0 && cfg.medium.lo < cfg.medium.hi && cfg.medium.hi <= 1.0)) {
        throw Error("IoU ranges must satisfy 0 < lo < hi <= 1");
    }

    const std::vector<InstanceRecord> instances = load_instances_file(instances_file);
    log_line(LogLevel::info, "build_start",
             {{"instances", instances.size()}, {"out", out_dir}, {"seed", seed}});
    const Manifest manifest =
        build_benchmark(instances, cfg, out_dir, [](std::string_view level, std::string_view msg) {
            log_line(level == "warning" ? LogLevel::warn : LogLevel::info, "build",
                     {{"message", std::string(msg)}});
        });

    long dropped = 0, partial = 0;
    for (const InstanceRecord& r : manifest.instances) {
        dropped += static_cast<long>(r.dropped.size());
        if (r.partial) ++partial;
    }
    print_composition(std::cout, manifest.composition);
    std::cout << "samples: " << manifest.samples.size() << ", partial instances: " << partial
              << ", dropped samples: " << dropped << "\n";
    std::cout << "manifest: " << (fs::path(out_dir) / "manifest.json").string() << "\n";
    return 0;
}

int cmd_verify(const std::string& manifest_path, const std::optional<std::string>& report_path,
               int jobs) {
    const VerificationReport report = verify_manifest(manifest_path, jobs);
    print_composition(std::cout, report.recounted);
    for (const std::string& note : report.notes) std::cout << "note: " << note << "\n";
    const std::size_t shown = std::min<std::size_t>(report.violations.size(), 50);
    for (std::size_t i = 0; i < shown; ++i) {
        const Violation& v = report.violations[i];
        std::cout << "violation [" << v.kind << "] " << v.id << ": " << v.message << "\n";
    }
    if (report.violations.size() > shown) {
        std::cout << "... and " << report.violations.size() - shown << " more\n";
    }
    std::cout << "samples checked: " << report.samples_checked
              << ", violations: " << report.violations.size() << "\n";
    if (report_path) {
        json violations = json::array();
        for (const Violation& v : report.violations) {
            violations.push_back(json{{"id", v.id}, {"kind", v.kind}, {"message", v.message}});
        }
        json notes = json::array();
        for (const std::string& n : report.notes) notes.push_back(n);
        const json doc{{"composition", to_json(report.recounted)},
                       {"notes", notes},
                       {"samples_checked", report.samples_checked},
                       {"violations", violations}};
        write_text_file(*report_path, doc.dump(2) + "\n");
    }
    return report.violations.empty() ? 0 : 1;
}

int cmd_evaluate(const std::string& manifest_path, const std::string& predictions_path,
                 const std::string& protocol, bool subset_precision, bool strict_parse,
                 const std::string& out_dir) {
    const Manifest manifest = load_manifest(manifest_path);
    PredictionFileStats stats;
    const PredictionMap predictions = load_predictions(predictions_path, stats);
    log_line(LogLevel::info, "predictions_loaded",
             {{"lines", stats.lines}, {"bad_lines", stats.bad_lines},
              {"duplicates", stats.duplicates}});

    MetricsOptions options;
    options.subset_precision = subset_precision;
    options.strict_parse = strict_parse;

    const std::string_view proto_name = protocol == "video" ? kVideoProtocol : kImageProtocol;
    const std::vector<ScoredSample> scored =
        join_predictions(manifest, predictions, proto_name);
    const MetricReport report = protocol == "video" ? evaluate_video_based(scored, options)
                                                    : evaluate_image_based(scored, options);

    fs::create_directories(out_dir);
    const fs::path json_path = fs::path(out_dir) / ("report_" + std::string(proto_name) + ".json");
    const fs::path md_path = fs::path(out_dir) / ("report_" + std::string(proto_name) + ".md");
    write_text_file(json_path, report_to_json(report).dump(2) + "\n");
    const std::string markdown = report_to_markdown(report);
    write_text_file(md_path, markdown);
    std::cout << markdown;
    std::cout << "\nreports: " << json_path.string() << ", " << md_path.string() << "\n";
    return 0;
}

int cmd_baseline(const std::string& manifest_path, const std::string& kind,
                 double iou_sigma, double flip_prob, std::uint64_t seed,
                 const std::string& out_path) {
    const Manifest manifest = load_manifest(manifest_path);
    std::unique_ptr<Auditor> auditor;
    if (kind == "oracle") {
        auditor = std::make_unique<OracleAuditor>();
    } else if (kind == "noisy") {
        auditor = std::make_unique<NoisyOracleAuditor>(
            NoiseParams{iou_sigma, flip_prob, flip_prob}, seed);
    } else if (kind == "accept") {
        auditor = std::make_unique<ConstantAuditor>(ConstantPolicy::always_accept);
    } else if (kind == "reject") {
        auditor = std::make_unique<ConstantAuditor>(ConstantPolicy::always_reject);
    } else {
        throw Error("unknown baseline kind '" + kind + "'");
    }

    const PredictionMap predictions = run_auditor(manifest, *auditor);
    std::ostringstream out;
    for (const auto& [sample_id, pred] : predictions) {
        out << json{{"raw_text", pred.raw_text}, {"sample_id", sample_id}}.dump() << "\n";
    }
    write_text_file(out_path, out.str());
    std::cout << "predictions: " << out_path << " (" << predictions.size() << " samples)\n";
    return 0;
}

int cmd_refine(const std::string& manifest_path, const std::string& predictions_path,
               const std::string& regen_cmd, int iterations, bool trigger_reject,
               const std::string& out_dir) {
    const Manifest manifest = load_manifest(manifest_path);
    PredictionFileStats stats;
    const PredictionMap predictions = load_predictions(predictions_path, stats);

    fs::create_directories(out_dir);
    CommandRegenerator regenerator(regen_cmd, fs::path(out_dir) / "requests");
    RefineOptions options;
    options.iterations = iterations;
    options.trigger_on_reject_action = trigger_reject;

    const RefineReport report = refine_loop(manifest, fs::path(manifest_path).parent_path(),
                                            predictions, regenerator, options, out_dir);
    const json doc = refine_report_to_json(report, options);
    write_text_file(fs::path(out_dir) / "refine_report.json", doc.dump(2) + "\n");

    char buf[256];
    std::snprintf(buf, sizeof(buf), "%-8s %8s %8s %8s\n", "", "J", "F", "J&F");
    std::cout << buf;
    std::snprintf(buf, sizeof(buf), "%-8s %8.4f %8.4f %8.4f\n", "before", report.before.mean_j,
                  report.before.mean_f, report.before.mean_jf);
    std::cout << buf;
    std::snprintf(buf, sizeof(buf), "%-8s %8.4f %8.4f %8.4f\n", "after", report.after.mean_j,
                  report.after.mean_f, report.after.mean_jf);
    std::cout << buf;
    std::cout << "flagged: " << report.flagged << ", regenerated: " << report.regenerated
              << ", failures: " << report.failures << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"mask quality benchmark toolkit"};
    app.require_subcommand(1);

    // build
    auto* build = app.add_subcommand("build", "generate a benchmark tree from an instances file");
    std::string instances_file, build_out;
    std::uint64_t seed = 0;
    std::string protocol = "image";
    int jobs = 1;
    std::optional<std::string> hard_range, medium_range, merge_thresholds;
    std::optional<int> max_neg;
    build->add_option("--instances", instances_file, "instances JSON file")->required();
    build->add_option("--out", build_out, "output directory")->required();
    build->add_option("--seed", seed, "global seed (all randomness derives from it)");
    build->add_option("--protocol", protocol, "image, video or both")
        ->check(CLI::IsMember({"image", "video", "both"}));
    build->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
    build->add_option("--hard-range", hard_range, "hard IoU interval, e.g. 0.85,0.90");
    build->add_option("--medium-range", medium_range, "medium IoU interval, e.g. 0.75,0.80");
    build->add_option("--merge-thresholds", merge_thresholds,
                      "merge minor,major thresholds, e.g. 0.9,0.75");
    build->add_option("--max-neg", max_neg, "max full_neg candidates kept per instance");

    // verify
    auto* verify = app.add_subcommand("verify", "recheck every invariant of a built benchmark");
    std::string verify_manifest_path;
    std::optional<std::string> verify_report;
    int verify_jobs = static_cast<int>(std::thread::hardware_concurrency());
    verify->add_option("manifest", verify_manifest_path, "manifest.json path")->required();
    verify->add_option("--report", verify_report, "write the verification report JSON here");
    verify->add_option("--jobs", verify_jobs, "worker threads")->check(CLI::PositiveNumber);

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "score a predictions file against a manifest");
    std::string eval_manifest, eval_predictions, eval_protocol, eval_out = ".";
    bool subset_precision = false, strict_parse = false;
    evaluate->add_option("manifest", eval_manifest, "manifest.json path")->required();
    evaluate->add_option("predictions", eval_predictions, "line-delimited predictions file")
        ->required();
    evaluate->add_option("--protocol", eval_protocol, "image or video")
        ->required()
        ->check(CLI::IsMember({"image", "video"}));
    evaluate->add_flag("--subset-precision", subset_precision,
                       "per-difficulty cells use within-subset precision");
    evaluate->add_flag("--strict-parse", strict_parse,
                       "score recovered parses like failed ones");
    evaluate->add_option("--out", eval_out, "report output directory");

    // baseline
    auto* baseline = app.add_subcommand("baseline", "run a built-in auditor over a manifest");
    std::string base_manifest, base_kind, base_out;
    double iou_sigma = 0.0, flip_prob = 0.0;
    std::uint64_t base_seed = 0;
    baseline->add_option("manifest", base_manifest, "manifest.json path")->required();
    baseline->add_option("--kind", base_kind, "oracle, noisy, accept or reject")
        ->required()
        ->check(CLI::IsMember({"oracle", "noisy", "accept", "reject"}));
    baseline->add_option("--iou-sigma", iou_sigma, "gaussian IoU noise (noisy baseline)");
    baseline->add_option("--flip-prob", flip_prob, "type/action flip probability (noisy)");
    baseline->add_option("--seed", base_seed, "baseline seed");
    baseline->add_option("--out", base_out, "predictions output file")->required();

    // refine
    auto* refine = app.add_subcommand("refine", "regenerate masks flagged by an auditor");
    std::string ref_manifest, ref_predictions, regen_cmd, ref_out = "refine_out";
    int iterations = 1;
    bool trigger_reject = false;
    refine->add_option("manifest", ref_manifest, "manifest.json path")->required();
    refine->add_option("predictions", ref_predictions, "line-delimited predictions file")
        ->required();
    refine->add_option("--regen-cmd", regen_cmd, "regenerator command (gets a request JSON path)")
        ->required();
    refine->add_option("--iterations", iterations, "regeneration passes (retries failures)")
        ->check(CLI::PositiveNumber);
    refine->add_flag("--trigger-reject", trigger_reject,
                     "also trigger on reject-action predictions");
    refine->add_option("--out", ref_out, "output directory for refined masks and the report");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (build->parsed()) {
            return cmd_build(instances_file, build_out, seed, protocol, jobs, hard_range,
                             medium_range, merge_thresholds, max_neg);
        }
        if (verify->parsed()) {
            return cmd_verify(verify_manifest_path, verify_report, verify_jobs);
        }
        if (evaluate->parsed()) {
            return cmd_evaluate(eval_manifest, eval_predictions, eval_protocol, subset_precision,
                                strict_parse, eval_out);
        }
        if (baseline->parsed()) {
            return cmd_baseline(base_manifest, base_kind, iou_sigma, flip_prob, base_seed,
                                base_out);
        }
        if (refine->parsed()) {
            return cmd_refine(ref_manifest, ref_predictions, regen_cmd, iterations,
                              trigger_reject, ref_out);
        }
    } catch (const UnscoredSample& e) {
        log_line(LogLevel::error, "unscored_samples", {{"message", e.what()}});
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        log_line(LogLevel::error, "fatal", {{"message", e.what()}});
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        log_line(LogLevel::error, "fatal", {{"message", e.what()}});
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;
}
