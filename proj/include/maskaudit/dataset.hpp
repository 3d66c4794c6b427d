#pragma once

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "maskaudit/manifest.hpp"
#include "maskaudit/mask.hpp"
#include "maskaudit/perturb.hpp"
#include "maskaudit/png_io.hpp"
#include "maskaudit/rng.hpp"

namespace maskaudit {

using LogFn = std::function<void(std::string_view level, std::string_view message)>;

namespace detail {

inline void parallel_over(std::size_t n, int jobs, const std::function<void(std::size_t)>& fn) {
    const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(n)));
    if (workers == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;
    auto run = [&]() {
        for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
            if (first_error) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(run);
    for (std::thread& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

inline std::string frame_tag(int frame) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "f%02d", frame);
    return buf;
}

struct InstanceBuild {
    InstanceRecord record;
    std::vector<SampleRecord> samples;
};

} // namespace detail

inline InstanceConfig instance_config_of(const BuildConfig& cfg) {
    InstanceConfig icfg;
    icfg.hard = cfg.hard;
    icfg.medium = cfg.medium;
    icfg.thresholds = cfg.thresholds;
    icfg.max_negatives = cfg.max_negatives;
    return icfg;
}

inline Composition recount_composition(const Manifest& manifest);

/// Builds the benchmark tree: generated mask PNGs under out_dir/masks/ and
/// manifest.json at the root. Per-instance generation failures are recorded
/// on the instance and skipped; an unreadable input mask aborts the build.
inline Manifest build_benchmark(std::vector<InstanceRecord> instances, const BuildConfig& cfg,
                                const std::filesystem::path& out_dir, const LogFn& log = {}) {
    namespace fs = std::filesystem;

    std::sort(instances.begin(), instances.end(),
              [](const InstanceRecord& a, const InstanceRecord& b) {
                  return a.instance_id < b.instance_id;
              });
    for (std::size_t i = 1; i < instances.size(); ++i) {
        if (instances[i].instance_id == instances[i - 1].instance_id) {
            throw Error("duplicate instance_id: " + instances[i].instance_id);
        }
    }

    fs::create_directories(out_dir / "masks");

    const InstanceConfig icfg = instance_config_of(cfg);
    std::vector<detail::InstanceBuild> built(instances.size());
    std::mutex log_mutex;
    auto emit = [&](std::string_view level, const std::string& msg) {
        if (!log) return;
        std::lock_guard lock(log_mutex);
        log(level, msg);
    };

    detail::parallel_over(instances.size(), cfg.jobs, [&](std::size_t idx) {
        detail::InstanceBuild out;
        out.record = instances[idx];
        InstanceRecord& rec = out.record;
        rec.partial = false;
        rec.dropped.clear();

        auto instance_failed = [&](const std::string& reason) {
            rec.partial = true;
            rec.dropped.push_back({"*", rec.key_frame_index.value_or(-1), reason});
            emit("warning", "instance " + rec.instance_id + " skipped: " + reason);
            built[idx] = std::move(out);
        };

        std::map<int, BinaryMask> gt_cache;
        auto load_gt = [&](int frame) -> const BinaryMask& {
            auto it = gt_cache.find(frame);
            if (it != gt_cache.end()) return it->second;
            const auto path_it = rec.gt_mask_paths.find(frame);
            if (path_it == rec.gt_mask_paths.end()) {
                throw UnreadableMask("instance " + rec.instance_id + ": no gt mask path for frame " +
                                     std::to_string(frame));
            }
            return gt_cache.emplace(frame, load_mask(path_it->second)).first->second;
        };

        // Key frame: required input, with a max-gt-area fallback flagged as
        // heuristic in the manifest.
        if (!rec.key_frame_index) {
            int best_frame = -1;
            int best_area = -1;
            for (const auto& [frame, path] : rec.gt_mask_paths) {
                const int a = load_gt(frame).area();
                if (a > best_area) {
                    best_area = a;
                    best_frame = frame;
                }
            }
            if (best_frame < 0) {
                instance_failed("no gt mask paths provided");
                return;
            }
            rec.key_frame_index = best_frame;
            rec.key_frame_heuristic = true;
        }
        const int key = *rec.key_frame_index;
        if (key < 0 || key >= rec.frame_count) {
            instance_failed("key_frame_index " + std::to_string(key) + " out of range");
            return;
        }

        BinaryMask gt_key(1, 1);
        try {
            gt_key = load_gt(key);
        } catch (const UnreadableMask&) {
            throw; // aborts the build with the offending path
        }
        if (gt_key.empty()) {
            instance_failed("ground truth empty on key frame");
            return;
        }

        // Negative candidates are ranked on the key frame; selected ids are
        // then reused on every frame of the instance.
        std::vector<NegativeCandidate> candidates;
        for (const NegativeSeries& n : rec.negatives) {
            const auto it = n.mask_paths.find(key);
            if (it == n.mask_paths.end()) {
                emit("info", "instance " + rec.instance_id + ": negative '" + n.id +
                                 "' has no key-frame mask, ignored");
                continue;
            }
            candidates.push_back({n.id, load_mask(it->second)});
        }

        std::vector<SlotPlan> plans;
        try {
            plans = plan_instance_slots(gt_key, candidates, icfg);
        } catch (const EmptyGroundTruth& e) {
            instance_failed(e.what());
            return;
        }

        std::map<std::string, const NegativeSeries*> neg_by_id;
        for (const NegativeSeries& n : rec.negatives) neg_by_id.emplace(n.id, &n);

        std::vector<int> frames;
        if (cfg.video_protocol) {
            for (int f = 0; f < rec.frame_count; ++f) frames.push_back(f);
        } else {
            frames.push_back(key);
        }

        const fs::path instance_dir = out_dir / "masks" / rec.instance_id;
        fs::create_directories(instance_dir);

        for (int frame : frames) {
            const bool image_member = cfg.image_protocol && frame == key;
            const bool video_member = cfg.video_protocol;
            if (!image_member && !video_member) continue;

            const BinaryMask& gt = load_gt(frame);
            if (gt.empty()) {
                rec.partial = true;
                rec.dropped.push_back({"*", frame, "ground truth empty on frame"});
                continue;
            }

            const std::uint64_t frame_seed =
                instance_frame_seed(cfg.global_seed, rec.instance_id, frame);
            for (const SlotPlan& plan : plans) {
                std::optional<BinaryMask> negative;
                if (!plan.negative_id.empty()) {
                    const NegativeSeries* series = neg_by_id.at(plan.negative_id);
                    const auto it = series->mask_paths.find(frame);
                    if (it == series->mask_paths.end()) {
                        rec.partial = true;
                        rec.dropped.push_back(
                            {plan.slot_id, frame, "negative mask missing on frame"});
                        continue;
                    }
                    negative = load_mask(it->second);
                }
                try {
                    GeneratedSample g =
                        generate_slot(gt, plan, negative ? &*negative : nullptr,
                                      slot_seed(frame_seed, plan), icfg);
                    SampleRecord s;
                    s.instance_id = rec.instance_id;
                    s.slot_id = plan.slot_id;
                    s.frame_index = frame;
                    s.sample_id =
                        rec.instance_id + "__" + detail::frame_tag(frame) + "__" + plan.slot_id;
                    s.image_based = image_member;
                    s.video_based = video_member;
                    if (video_member) s.series_id = rec.instance_id + "__" + plan.slot_id;
                    s.label = g.label;
                    s.spec = g.spec;
                    const std::string file_name =
                        detail::frame_tag(frame) + "_" + plan.slot_id + ".png";
                    s.mask_path = "masks/" + rec.instance_id + "/" + file_name;
                    store_mask(g.mask, instance_dir / file_name);
                    out.samples.push_back(std::move(s));
                } catch (const DegenerateObject& e) {
                    rec.partial = true;
                    rec.dropped.push_back({plan.slot_id, frame, e.what()});
                } catch (const UnreachableTarget& e) {
                    rec.partial = true;
                    rec.dropped.push_back({plan.slot_id, frame, e.what()});
                } catch (const OverlapViolation& e) {
                    rec.partial = true;
                    rec.dropped.push_back({plan.slot_id, frame, e.what()});
                } catch (const EmptyMask& e) {
                    rec.partial = true;
                    rec.dropped.push_back({plan.slot_id, frame, e.what()});
                }
            }
        }
        built[idx] = std::move(out);
    });

    Manifest manifest;
    manifest.config = cfg;
    manifest.config.jobs = 1; // execution detail, not provenance
    for (detail::InstanceBuild& b : built) {
        manifest.instances.push_back(std::move(b.record));
        for (SampleRecord& s : b.samples) manifest.samples.push_back(std::move(s));
    }
    manifest.composition = recount_composition(manifest);
    save_manifest(manifest, out_dir / "manifest.json");
    return manifest;
}

inline Composition recount_composition(const Manifest& manifest) {
    Composition comp;
    if (manifest.config.image_protocol) comp[std::string(kImageProtocol)];
    if (manifest.config.video_protocol) comp[std::string(kVideoProtocol)];

    std::map<std::string, const InstanceRecord*> by_id;
    for (const InstanceRecord& r : manifest.instances) by_id.emplace(r.instance_id, &r);

    struct Members {
        std::set<std::string> instances;
        std::set<std::string> videos;
    };
    std::map<std::string, std::map<std::string, Members>> members;

    for (const SampleRecord& s : manifest.samples) {
        const InstanceRecord* inst = by_id.at(s.instance_id);
        const std::string split(split_name(inst->split));
        for (const std::string_view proto : {kImageProtocol, kVideoProtocol}) {
            const bool member = proto == kImageProtocol ? s.image_based : s.video_based;
            if (!member) continue;
            CompositionRow& row = comp[std::string(proto)][split];
            ++row.total;
            switch (s.label.mask_type) {
                case MaskType::perfect: ++row.perfect; break;
                case MaskType::cutout: ++row.cutout; break;
                case MaskType::dilate: ++row.dilate; break;
                case MaskType::erode: ++row.erode; break;
                case MaskType::merge: ++row.merge; break;
                case MaskType::full_neg: ++row.full_neg; break;
            }
            if (s.label.difficulty != Difficulty::not_applicable) {
                ++row.difficulty[std::string(mask_type_name(s.label.mask_type)) + "_" +
                                 std::string(difficulty_name(s.label.difficulty))];
            }
            Members& m = members[std::string(proto)][split];
            m.instances.insert(s.instance_id);
            m.videos.insert(inst->video_id);
        }
    }
    for (auto& [proto, splits] : comp) {
        for (auto& [split, row] : splits) {
            row.instances = static_cast<long>(members[proto][split].instances.size());
            row.videos = static_cast<long>(members[proto][split].videos.size());
        }
    }
    return comp;
}

struct Violation {
    std::string id;   // sample id, or a scope tag for cross-sample checks
    std::string kind;
    std::string message;

    friend bool operator==(const Violation&, const Violation&) = default;
};

struct VerificationReport {
    std::vector<Violation> violations;
    Composition recounted;
    std::vector<std::string> notes;
    long samples_checked = 0;

    bool clean() const { return violations.empty(); }
};

/// Re-reads every generated mask, recomputes its IoU against the ground
/// truth and rechecks every label invariant plus the cross-sample
/// composition arithmetic. Per-sample checks report the first failure only,
/// so one injected fault yields exactly one violation.
inline VerificationReport verify_manifest(const std::filesystem::path& manifest_path,
                                          int jobs = static_cast<int>(
                                              std::thread::hardware_concurrency())) {
    namespace fs = std::filesystem;
    const Manifest manifest = load_manifest(manifest_path);
    const fs::path base = manifest_path.parent_path();
    const BuildConfig& cfg = manifest.config;

    std::map<std::string, const InstanceRecord*> by_id;
    for (const InstanceRecord& r : manifest.instances) by_id.emplace(r.instance_id, &r);

    // Group sample indices by instance so each worker loads gt frames once.
    std::map<std::string, std::vector<std::size_t>> by_instance;
    for (std::size_t i = 0; i < manifest.samples.size(); ++i) {
        by_instance[manifest.samples[i].instance_id].push_back(i);
    }
    std::vector<const std::vector<std::size_t>*> groups;
    groups.reserve(by_instance.size());
    for (const auto& [id, idxs] : by_instance) groups.push_back(&idxs);

    std::vector<std::optional<Violation>> per_sample(manifest.samples.size());

    detail::parallel_over(groups.size(), std::max(1, jobs), [&](std::size_t g) {
        const std::vector<std::size_t>& idxs = *groups[g];
        const InstanceRecord* inst = by_id.at(manifest.samples[idxs.front()].instance_id);
        std::map<int, std::optional<BinaryMask>> gt_cache;
        auto gt_for = [&](int frame) -> const std::optional<BinaryMask>& {
            auto it = gt_cache.find(frame);
            if (it != gt_cache.end()) return it->second;
            std::optional<BinaryMask> loaded;
            const auto path_it = inst->gt_mask_paths.find(frame);
            if (path_it != inst->gt_mask_paths.end()) {
                try {
                    loaded = load_mask(path_it->second);
                } catch (const Error&) {
                }
            }
            return gt_cache.emplace(frame, std::move(loaded)).first->second;
        };

        for (std::size_t i : idxs) {
            const SampleRecord& s = manifest.samples[i];
            auto fail = [&](std::string kind, std::string message) {
                per_sample[i] = Violation{s.sample_id, std::move(kind), std::move(message)};
            };

            std::optional<BinaryMask> mask;
            try {
                mask = load_mask(base / s.mask_path);
            } catch (const Error& e) {
                fail("unreadable_mask", e.what());
                continue;
            }
            const std::optional<BinaryMask>& gt = gt_for(s.frame_index);
            if (!gt) {
                fail("gt_unreadable", "ground truth unreadable for frame " +
                                          std::to_string(s.frame_index));
                continue;
            }
            if (!mask->same_size(*gt)) {
                fail("dimension_mismatch", "candidate and gt dimensions differ");
                continue;
            }

            // Structure first: each mask type has a containment contract.
            bool structure_ok = true;
            switch (s.label.mask_type) {
                case MaskType::perfect:
                    if (!(*mask == *gt)) {
                        fail("perfect_identity", "perfect mask differs from ground truth");
                        structure_ok = false;
                    }
                    break;
                case MaskType::cutout:
                    if (!is_subset(*mask, *gt)) {
                        fail("containment", "cutout mask is not a subset of gt");
                        structure_ok = false;
                    } else if (!is_subset(boundary(*gt), *mask)) {
                        fail("cutout_boundary", "cutout hole touches the gt boundary ring");
                        structure_ok = false;
                    }
                    break;
                case MaskType::erode:
                    if (!is_subset(*mask, *gt)) {
                        fail("containment", "erode mask is not a subset of gt");
                        structure_ok = false;
                    }
                    break;
                case MaskType::dilate:
                    if (!is_subset(*gt, *mask)) {
                        fail("containment", "dilate mask is not a superset of gt");
                        structure_ok = false;
                    }
                    break;
                case MaskType::merge:
                    if (!is_subset(*gt, *mask)) {
                        fail("containment", "merge mask is not a superset of gt");
                        structure_ok = false;
                    }
                    break;
                case MaskType::full_neg:
                    if (mask->empty()) {
                        fail("full_neg_empty", "full_neg mask is empty");
                        structure_ok = false;
                    } else if (!is_disjoint(*mask, *gt)) {
                        fail("full_neg_overlap", "full_neg mask overlaps the ground truth");
                        structure_ok = false;
                    }
                    break;
            }
            if (!structure_ok) continue;

            double recomputed = 0.0;
            try {
                recomputed = mask_iou(*mask, *gt);
            } catch (const BothEmpty& e) {
                fail("iou_undefined", e.what());
                continue;
            }
            if (std::abs(recomputed - s.label.iou) > 1e-12) {
                fail("iou_mismatch", "label iou " + std::to_string(s.label.iou) +
                                         " vs recomputed " + std::to_string(recomputed));
                continue;
            }

            bool bucket_ok = true;
            switch (s.label.mask_type) {
                case MaskType::cutout:
                case MaskType::dilate:
                case MaskType::erode: {
                    if (s.label.difficulty != Difficulty::hard &&
                        s.label.difficulty != Difficulty::medium) {
                        fail("difficulty_mismatch", "geometric sample must be hard or medium");
                        bucket_ok = false;
                        break;
                    }
                    const IoUTarget& target =
                        s.label.difficulty == Difficulty::hard ? cfg.hard : cfg.medium;
                    if (!target.contains(s.label.iou)) {
                        fail("interval", "iou " + std::to_string(s.label.iou) +
                                             " outside declared interval");
                        bucket_ok = false;
                    }
                    break;
                }
                case MaskType::merge:
                    if (merge_difficulty(s.label.iou, cfg.thresholds) != s.label.difficulty) {
                        fail("difficulty_mismatch", "merge difficulty does not match iou");
                        bucket_ok = false;
                    }
                    break;
                default:
                    if (s.label.difficulty != Difficulty::not_applicable) {
                        fail("difficulty_mismatch", "difficulty must be n/a for this type");
                        bucket_ok = false;
                    }
                    break;
            }
            if (!bucket_ok) continue;

            if (derive_action(s.label.mask_type, s.label.iou, cfg.thresholds) != s.label.action) {
                fail("action_mismatch",
                     "action inconsistent with (mask_type, iou) thresholds");
                continue;
            }
        }
    });

    VerificationReport report;
    report.samples_checked = static_cast<long>(manifest.samples.size());
    for (auto& v : per_sample) {
        if (v) report.violations.push_back(std::move(*v));
    }

    // Cross-sample checks.
    {
        std::set<std::string> seen_ids;
        for (const SampleRecord& s : manifest.samples) {
            if (!seen_ids.insert(s.sample_id).second) {
                report.violations.push_back(
                    {s.sample_id, "duplicate_sample_id", "sample id appears more than once"});
            }
        }
    }
    {
        std::map<std::string, std::set<MaskType>> series_types;
        for (const SampleRecord& s : manifest.samples) {
            if (s.video_based && !s.series_id.empty()) {
                series_types[s.series_id].insert(s.label.mask_type);
            }
        }
        for (const auto& [series, types] : series_types) {
            if (types.size() > 1) {
                report.violations.push_back(
                    {series, "series_type", "frames of one series carry different mask types"});
            }
        }
    }
    {
        // Non-partial instances must carry the exact slot structure
        // 1 perfect : 2 cutout : 2 dilate : 2 erode : <=k merge : <=k
        // full_neg (k = max negatives), which also bounds the total to
        // [7, 13]. Merge/full_neg equality is reported via notes, never
        // enforced.
        struct TypeTally {
            std::map<MaskType, long> counts;
        };
        std::map<std::string, TypeTally> image_counts;
        std::map<std::string, std::map<std::string, MaskType>> video_series;
        for (const SampleRecord& s : manifest.samples) {
            if (s.image_based) ++image_counts[s.instance_id].counts[s.label.mask_type];
            if (s.video_based) video_series[s.instance_id].emplace(s.series_id, s.label.mask_type);
        }
        auto check_tally = [&](const std::string& instance_id, const std::string& scope,
                               const std::map<MaskType, long>& counts) {
            auto of = [&](MaskType t) {
                const auto it = counts.find(t);
                return it == counts.end() ? 0L : it->second;
            };
            const long k = cfg.max_negatives;
            const bool ok = of(MaskType::perfect) == 1 && of(MaskType::cutout) == 2 &&
                            of(MaskType::dilate) == 2 && of(MaskType::erode) == 2 &&
                            of(MaskType::merge) <= k && of(MaskType::full_neg) <= k;
            if (!ok) {
                report.violations.push_back(
                    {instance_id, "instance_count",
                     scope + " slot structure is not 1:2:2:2:<=" + std::to_string(k) +
                         ":<=" + std::to_string(k)});
            }
        };
        for (const InstanceRecord& r : manifest.instances) {
            if (r.partial) continue;
            if (const auto it = image_counts.find(r.instance_id); it != image_counts.end()) {
                check_tally(r.instance_id, "image", it->second.counts);
            }
            if (const auto it = video_series.find(r.instance_id); it != video_series.end()) {
                std::map<MaskType, long> counts;
                for (const auto& [series, type] : it->second) ++counts[type];
                check_tally(r.instance_id, "video", counts);
            }
        }
    }
    {
        std::set<std::string> train_categories;
        for (const InstanceRecord& r : manifest.instances) {
            if (r.split == Split::train && !r.object_category.empty()) {
                train_categories.insert(r.object_category);
            }
        }
        for (const InstanceRecord& r : manifest.instances) {
            if (r.split == Split::test_unseen && train_categories.count(r.object_category)) {
                report.violations.push_back({r.instance_id, "split_category_overlap",
                                             "unseen category '" + r.object_category +
                                                 "' appears in the train split"});
            }
        }
    }

    report.recounted = recount_composition(manifest);
    if (report.recounted != manifest.composition) {
        report.violations.push_back(
            {"composition", "composition_mismatch",
             "stored composition differs from the recount over samples"});
    }
    for (const auto& [proto, splits] : report.recounted) {
        for (const auto& [split, row] : splits) {
            if (row.merge != row.full_neg) {
                report.notes.push_back(proto + "/" + split + ": merge (" +
                                       std::to_string(row.merge) + ") and full_neg (" +
                                       std::to_string(row.full_neg) + ") counts differ");
            }
        }
    }

    std::sort(report.violations.begin(), report.violations.end(),
              [](const Violation& a, const Violation& b) {
                  return std::tie(a.id, a.kind) < std::tie(b.id, b.kind);
              });
    return report;
}

/// Checks the composition identity Σ per-type counts = total on a single
/// row; used both by the verifier and as a standalone arithmetic check on
/// shipped composition fixtures.
inline bool composition_identity_holds(const CompositionRow& row) {
    return row.type_sum() == row.total;
}

} // namespace maskaudit
