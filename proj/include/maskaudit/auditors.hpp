#pragma once

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "maskaudit/audit.hpp"
#include "maskaudit/dataset.hpp"
#include "maskaudit/manifest.hpp"
#include "maskaudit/mask.hpp"
#include "maskaudit/metrics.hpp"
#include "maskaudit/png_io.hpp"
#include "maskaudit/rng.hpp"

namespace maskaudit {

struct SampleContext {
    const InstanceRecord& instance;
    const SampleRecord& sample;
};

/// Maps (instance context, frame, candidate mask) to an audit prediction.
/// Implementations must be deterministic given their seed.
class Auditor {
public:
    virtual ~Auditor() = default;
    virtual AuditPrediction audit(const SampleContext& ctx) const = 0;
};

/// Replays the ground-truth (s, m, a) triple through the audit grammar.
/// Harness self-test: composed with the evaluator it must reach RMSE 0 /
/// F2 100 on every generated benchmark.
class OracleAuditor final : public Auditor {
public:
    AuditPrediction audit(const SampleContext& ctx) const override {
        const QualityLabel& label = ctx.sample.label;
        const std::string reasoning = "target: " + ctx.instance.object_category;
        return parse_audit(
            serialize_audit(label.iou, label.mask_type, label.action, reasoning));
    }
};

struct NoiseParams {
    double iou_sigma = 0.0;
    double type_flip_prob = 0.0;
    double action_flip_prob = 0.0;
};

/// Ground truth corrupted by Gaussian IoU noise (clamped to [0, 1]) and
/// uniform label flips; deterministic per (seed, sample_id).
class NoisyOracleAuditor final : public Auditor {
public:
    NoisyOracleAuditor(NoiseParams params, std::uint64_t seed)
        : params_(params), seed_(seed) {}

    AuditPrediction audit(const SampleContext& ctx) const override {
        const QualityLabel& label = ctx.sample.label;
        SplitMix64 rng(hash_mix(seed_, hash_string(ctx.sample.sample_id)));

        double iou = label.iou;
        if (params_.iou_sigma > 0.0) {
            iou = std::min(1.0, std::max(0.0, iou + params_.iou_sigma * rng.gaussian()));
        }
        MaskType type = label.mask_type;
        if (params_.type_flip_prob > 0.0 && rng.unit() < params_.type_flip_prob) {
            const auto offset = 1 + rng.below(kAllMaskTypes.size() - 1);
            type = static_cast<MaskType>((static_cast<std::size_t>(type) + offset) %
                                         kAllMaskTypes.size());
        }
        Action action = label.action;
        if (params_.action_flip_prob > 0.0 && rng.unit() < params_.action_flip_prob) {
            const auto offset = 1 + rng.below(kAllActions.size() - 1);
            action = static_cast<Action>((static_cast<std::size_t>(action) + offset) %
                                         kAllActions.size());
        }
        const std::string reasoning = "target: " + ctx.instance.object_category;
        return parse_audit(serialize_audit(iou, type, action, reasoning));
    }

private:
    NoiseParams params_;
    std::uint64_t seed_;
};

enum class ConstantPolicy { always_accept, always_reject };

/// The two degenerate judge behaviors: everything is fine, or nothing is.
class ConstantAuditor final : public Auditor {
public:
    explicit ConstantAuditor(ConstantPolicy policy) : policy_(policy) {}

    AuditPrediction audit(const SampleContext&) const override {
        if (policy_ == ConstantPolicy::always_accept) {
            return parse_audit(serialize_audit(1.0, MaskType::perfect, Action::accept));
        }
        return parse_audit(serialize_audit(0.0, MaskType::full_neg, Action::reject));
    }

private:
    ConstantPolicy policy_;
};

/// Runs an auditor over every sample of a manifest.
inline PredictionMap run_auditor(const Manifest& manifest, const Auditor& auditor) {
    std::map<std::string, const InstanceRecord*> by_id;
    for (const InstanceRecord& r : manifest.instances) by_id.emplace(r.instance_id, &r);
    PredictionMap out;
    for (const SampleRecord& s : manifest.samples) {
        out[s.sample_id] = auditor.audit(SampleContext{*by_id.at(s.instance_id), s});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Regeneration.

/// Stands in for an external segmenter: given the instance context, a frame
/// and a target-object hint, produce a replacement mask. nullopt means the
/// regeneration failed and the original mask is kept.
class Regenerator {
public:
    virtual ~Regenerator() = default;
    virtual std::optional<BinaryMask> regenerate(const InstanceRecord& instance, int frame_index,
                                                 const std::string& hint) const = 0;
};

/// Test/reference regenerator that returns the ground-truth mask.
class GroundTruthRegenerator final : public Regenerator {
public:
    std::optional<BinaryMask> regenerate(const InstanceRecord& instance, int frame_index,
                                         const std::string&) const override {
        const auto it = instance.gt_mask_paths.find(frame_index);
        if (it == instance.gt_mask_paths.end()) return std::nullopt;
        try {
            return load_mask(it->second);
        } catch (const Error&) {
            return std::nullopt;
        }
    }
};

/// Subprocess adapter: writes a request record, runs the command with the
/// request path as its argument and reads the replacement mask path from
/// the command's last stdout line. Lets external segmenters plug in
/// without linking.
class CommandRegenerator final : public Regenerator {
public:
    CommandRegenerator(std::string command, std::filesystem::path request_dir)
        : command_(std::move(command)), request_dir_(std::move(request_dir)) {
        std::filesystem::create_directories(request_dir_);
    }

    std::optional<BinaryMask> regenerate(const InstanceRecord& instance, int frame_index,
                                         const std::string& hint) const override {
        const int id = counter_.fetch_add(1);
        const std::filesystem::path request_path =
            request_dir_ / ("request_" + std::to_string(id) + ".json");
        const json request{{"audio_path", instance.audio_path},
                           {"frame_index", frame_index},
                           {"hint", hint},
                           {"instance_id", instance.instance_id},
                           {"reference_text", instance.reference_text},
                           {"video_path", instance.video_path}};
        try {
            write_text_file(request_path, request.dump(2) + "\n");
        } catch (const Error&) {
            return std::nullopt;
        }

        const std::string cmdline = command_ + " " + request_path.string();
        std::FILE* pipe = popen(cmdline.c_str(), "r");
        if (!pipe) return std::nullopt;
        std::string output;
        char buf[256];
        while (std::fgets(buf, sizeof(buf), pipe)) output += buf;
        const int status = pclose(pipe);
        if (status != 0) return std::nullopt;

        // Last non-empty line is the produced mask path.
        std::string path_line;
        std::size_t end = output.size();
        while (end > 0) {
            std::size_t begin = output.rfind('\n', end - 1);
            begin = begin == std::string::npos ? 0 : begin + 1;
            std::string line = output.substr(begin, end - begin);
            while (!line.empty() && (line.back() == '\n' || line.back() == '\r' || line.back() == ' ')) {
                line.pop_back();
            }
            if (!line.empty()) {
                path_line = line;
                break;
            }
            if (begin == 0) break;
            end = begin - 1;
        }
        if (path_line.empty()) return std::nullopt;
        try {
            return load_mask(path_line);
        } catch (const Error&) {
            return std::nullopt;
        }
    }

private:
    std::string command_;
    std::filesystem::path request_dir_;
    mutable std::atomic<int> counter_{0};
};

// ---------------------------------------------------------------------------
// Audit-then-refine orchestration.

struct RefineOptions {
    MaskType trigger = MaskType::full_neg;
    bool trigger_on_reject_action = false; // extend triggering to reject-action predictions
    int iterations = 1;                    // >1 retries failed regenerations
    std::optional<int> boundary_tolerance;
};

struct RefineAggregate {
    double mean_j = 0.0;
    double mean_f = 0.0;
    double mean_jf = 0.0;
};

struct SampleRefineOutcome {
    std::string sample_id;
    bool flagged = false;
    bool regenerated = false;
    std::string refined_mask_path; // relative to out_dir when regenerated
    JFScore before;
    JFScore after;
};

struct RefineReport {
    RefineAggregate before;
    RefineAggregate after;
    long total = 0;
    long flagged = 0;
    long regenerated = 0;
    long failures = 0;
    std::vector<SampleRefineOutcome> samples;
};

/// Flags samples whose predicted mask type matches the trigger, asks the
/// regenerator for replacements, and reports mean J, F and (J+F)/2 over all
/// samples before and after. Untouched samples keep their original masks
/// and scores bit-identically.
inline RefineReport refine_loop(const Manifest& manifest,
                                const std::filesystem::path& manifest_dir,
                                const PredictionMap& predictions, const Regenerator& regenerator,
                                const RefineOptions& options,
                                const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    std::map<std::string, const InstanceRecord*> by_id;
    for (const InstanceRecord& r : manifest.instances) by_id.emplace(r.instance_id, &r);
    std::map<std::string, const SampleRecord*> sample_by_id;
    for (const SampleRecord& s : manifest.samples) sample_by_id.emplace(s.sample_id, &s);

    RefineReport report;
    std::vector<std::size_t> pending; // flagged, not yet regenerated

    for (const SampleRecord& s : manifest.samples) {
        const auto pred_it = predictions.find(s.sample_id);
        if (pred_it == predictions.end()) {
            throw UnscoredSample("no prediction for sample " + s.sample_id);
        }
        const AuditPrediction& pred = pred_it->second;
        const InstanceRecord* inst = by_id.at(s.instance_id);

        const auto gt_it = inst->gt_mask_paths.find(s.frame_index);
        if (gt_it == inst->gt_mask_paths.end()) {
            throw UnreadableMask("no gt mask path for sample " + s.sample_id);
        }
        const BinaryMask gt = load_mask(gt_it->second);
        const BinaryMask candidate = load_mask(manifest_dir / s.mask_path);
        const int tolerance = options.boundary_tolerance
                                  ? *options.boundary_tolerance
                                  : default_boundary_tolerance(gt.width(), gt.height());

        SampleRefineOutcome outcome;
        outcome.sample_id = s.sample_id;
        outcome.before = jaccard_and_boundary_f(candidate, gt, tolerance);
        outcome.after = outcome.before;
        outcome.flagged =
            (pred.mask_type && *pred.mask_type == options.trigger) ||
            (options.trigger_on_reject_action && pred.action && *pred.action == Action::reject);
        if (outcome.flagged) pending.push_back(report.samples.size());
        report.samples.push_back(std::move(outcome));
    }

    const int iterations = std::max(1, options.iterations);
    for (int iter = 0; iter < iterations && !pending.empty(); ++iter) {
        std::vector<std::size_t> still_pending;
        for (std::size_t idx : pending) {
            SampleRefineOutcome& outcome = report.samples[idx];
            const SampleRecord& s = *sample_by_id.at(outcome.sample_id);
            const InstanceRecord* inst = by_id.at(s.instance_id);
            const AuditPrediction& pred = predictions.at(s.sample_id);

            std::string hint;
            if (auto h = extract_target_hint(pred.reasoning)) {
                hint = *h;
            } else if (auto h2 = extract_target_hint(pred.raw_text)) {
                hint = *h2;
            }

            std::optional<BinaryMask> replacement =
                regenerator.regenerate(*inst, s.frame_index, hint);
            const BinaryMask gt = load_mask(inst->gt_mask_paths.at(s.frame_index));
            if (replacement && !replacement->same_size(gt)) replacement.reset();
            if (!replacement) {
                still_pending.push_back(idx);
                continue;
            }
            const int tolerance = options.boundary_tolerance
                                      ? *options.boundary_tolerance
                                      : default_boundary_tolerance(gt.width(), gt.height());
            outcome.after = jaccard_and_boundary_f(*replacement, gt, tolerance);
            outcome.regenerated = true;
            const fs::path rel = fs::path("refined") / s.instance_id;
            fs::create_directories(out_dir / rel);
            const fs::path file = rel / fs::path(s.mask_path).filename();
            store_mask(*replacement, out_dir / file);
            outcome.refined_mask_path = file.string();
        }
        pending = std::move(still_pending);
    }

    report.total = static_cast<long>(report.samples.size());
    for (const SampleRefineOutcome& o : report.samples) {
        report.before.mean_j += o.before.j;
        report.before.mean_f += o.before.f;
        report.after.mean_j += o.after.j;
        report.after.mean_f += o.after.f;
        if (o.flagged) ++report.flagged;
        if (o.regenerated) ++report.regenerated;
    }
    report.failures = report.flagged - report.regenerated;
    if (report.total > 0) {
        report.before.mean_j /= report.total;
        report.before.mean_f /= report.total;
        report.after.mean_j /= report.total;
        report.after.mean_f /= report.total;
    }
    report.before.mean_jf = (report.before.mean_j + report.before.mean_f) / 2.0;
    report.after.mean_jf = (report.after.mean_j + report.after.mean_f) / 2.0;
    return report;
}

inline json refine_report_to_json(const RefineReport& r, const RefineOptions& options) {
    auto agg = [](const RefineAggregate& a) {
        return json{{"j", a.mean_j}, {"f", a.mean_f}, {"jf", a.mean_jf}};
    };
    return json{{"after", agg(r.after)},
                {"before", agg(r.before)},
                {"failures", r.failures},
                {"flagged", r.flagged},
                {"regenerated", r.regenerated},
                {"total", r.total},
                {"trigger", mask_type_name(options.trigger)},
                {"trigger_on_reject_action", options.trigger_on_reject_action}};
}

} // namespace maskaudit
