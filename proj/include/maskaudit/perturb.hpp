#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "maskaudit/error.hpp"
#include "maskaudit/label.hpp"
#include "maskaudit/mask.hpp"
#include "maskaudit/rng.hpp"

namespace maskaudit {

// Below this area a single pixel flip can move IoU by more than the 0.05
// interval width, so the target interval may be unreachable.
inline constexpr int kMinGeometricArea = 20;
inline constexpr int kFlipCapFactor = 4;

struct GeneratedSample {
    BinaryMask mask;
    QualityLabel label;
    PerturbationSpec spec;
};

inline GeneratedSample gen_perfect(const BinaryMask& gt) {
    if (gt.empty()) {
        throw EmptyGroundTruth("perfect mask requires a non-empty ground truth");
    }
    PerturbationSpec spec;
    spec.kind = MaskType::perfect;
    return {gt, QualityLabel{1.0, MaskType::perfect, Action::accept, Difficulty::not_applicable},
            spec};
}

namespace detail {

// Candidate-mask family indexed by integer element half-size. IoU is
// non-increasing in the level, which is what the bracketing search relies
// on.
class GeometricFamily {
public:
    GeometricFamily(const BinaryMask& gt, MaskType kind, ElementShape shape,
                    std::optional<Pixel> seed_point)
        : gt_(gt), kind_(kind), shape_(shape), seed_(seed_point), gt_area_(gt.area()) {
        if (kind_ == MaskType::cutout) {
            interior_ = erode(gt_, StructuringElement{ElementShape::rectangle, 1, 1});
        }
    }

    int min_level() const { return kind_ == MaskType::cutout ? -1 : 0; }

    int max_level() const { return std::max(gt_.width(), gt_.height()); }

    const BinaryMask& mask_at(int level) {
        auto it = cache_.find(level);
        if (it != cache_.end()) return it->second;
        BinaryMask m = build(level);
        return cache_.emplace(level, std::move(m)).first->second;
    }

    double iou_at(int level) {
        const BinaryMask& m = mask_at(level);
        switch (kind_) {
            case MaskType::dilate:
                return static_cast<double>(gt_area_) / m.area();
            default: // erode, cutout: candidate is a subset of gt
                return static_cast<double>(m.area()) / gt_area_;
        }
    }

    // Pixels that change between `level` and `level + 1`, row-major.
    std::vector<Pixel> ring(int level) {
        const BinaryMask& a = mask_at(level);
        const BinaryMask& b = mask_at(level + 1);
        return kind_ == MaskType::dilate ? mask_difference(b, a).foreground()
                                         : mask_difference(a, b).foreground();
    }

    StructuringElement element(int level) const {
        const int k = std::max(level, 0);
        return StructuringElement{shape_, k, k};
    }

private:
    BinaryMask build(int level) {
        if (kind_ == MaskType::cutout) {
            if (level < 0) return gt_;
            const StructuringElement e = element(level);
            BinaryMask out = gt_;
            // Hole footprint centered at the seed, restricted to the
            // interior so the hole never touches the boundary ring.
            for (int y = 0; y < gt_.height(); ++y) {
                for (int x = 0; x < gt_.width(); ++x) {
                    if (interior_->at(x, y) && e.contains(x - seed_->x, y - seed_->y)) {
                        out.set(x, y, false);
                    }
                }
            }
            return out;
        }
        const StructuringElement e = element(level);
        return kind_ == MaskType::dilate ? dilate(gt_, e) : erode(gt_, e);
    }

    const BinaryMask& gt_;
    MaskType kind_;
    ElementShape shape_;
    std::optional<Pixel> seed_;
    int gt_area_;
    std::optional<BinaryMask> interior_;
    std::map<int, BinaryMask> cache_;
};

} // namespace detail

/// Corrupts gt with one of the geometric error kinds so that the resulting
/// IoU lands inside [target.lo, target.hi). Integer element half-sizes are
/// bracketed first; when the discrete IoU steps jump over the interval,
/// single pixels from the next delta ring are flipped (added for dilate,
/// removed for erode/cutout) until the IoU enters it.
inline GeneratedSample gen_geometric(const BinaryMask& gt, MaskType kind, const IoUTarget& target,
                                     Difficulty difficulty, std::uint64_t rng_seed,
                                     const LabelThresholds& thresholds = LabelThresholds{}) {
    if (kind != MaskType::cutout && kind != MaskType::dilate && kind != MaskType::erode) {
        throw std::invalid_argument("gen_geometric expects cutout, dilate or erode");
    }
    if (gt.empty()) {
        throw EmptyGroundTruth("geometric corruption requires a non-empty ground truth");
    }
    if (!(target.lo > 0.0 && target.lo < target.hi && target.hi <= 1.0)) {
        throw std::invalid_argument("invalid IoU target interval");
    }
    const int gt_area = gt.area();
    if (gt_area < kMinGeometricArea) {
        throw DegenerateObject("object area " + std::to_string(gt_area) + " below minimum " +
                               std::to_string(kMinGeometricArea));
    }

    SplitMix64 rng(rng_seed);
    const ElementShape shape =
        rng.below(2) == 0 ? ElementShape::rectangle : ElementShape::ellipse;

    std::optional<Pixel> seed_point;
    if (kind == MaskType::cutout) {
        const StructuringElement unit{ElementShape::rectangle, 1, 1};
        const std::vector<Pixel> interior = erode(gt, unit).foreground();
        if (interior.empty()) {
            throw UnreachableTarget("object has no interior pixels for a cutout hole");
        }
        seed_point = interior[rng.below(interior.size())];
    }

    detail::GeometricFamily family(gt, kind, shape, seed_point);
    const int lo_level = family.min_level();
    const int cap = family.max_level();

    // Smallest level whose IoU drops below target.hi (IoU is non-increasing
    // in the level). Exponential probe clamped to the cap, then bisection.
    int probe = std::min(lo_level + 1, cap);
    int step = 1;
    int below_hi = -1;
    int above = lo_level; // iou_at(lo_level) == 1 for dilate/erode/cutout(-1)
    while (probe <= cap) {
        if (family.iou_at(probe) < target.hi) {
            below_hi = probe;
            break;
        }
        above = probe;
        if (probe == cap) break;
        probe = std::min(probe + step, cap);
        step *= 2;
    }
    if (below_hi < 0) {
        // Even the largest element cannot push IoU under the interval.
        throw UnreachableTarget("IoU never drops below " + std::to_string(target.hi) +
                                " for any element size");
    }
    while (below_hi - above > 1) {
        const int mid = above + (below_hi - above) / 2;
        if (family.iou_at(mid) < target.hi) {
            below_hi = mid;
        } else {
            above = mid;
        }
    }

    BinaryMask result(1, 1);
    int flips = 0;
    int base_level;
    if (target.contains(family.iou_at(below_hi))) {
        result = family.mask_at(below_hi);
        base_level = below_hi;
    } else {
        // Discrete jump over the interval: start just above it and flip
        // ring pixels one at a time.
        base_level = above;
        result = family.mask_at(base_level);
        int cur_area = result.area();
        const bool growing = kind == MaskType::dilate;
        const int flip_cap = kFlipCapFactor * gt_area;
        int level = base_level;
        std::vector<Pixel> queue;
        std::size_t qi = 0;
        auto cur_iou = [&]() {
            return growing ? static_cast<double>(gt_area) / cur_area
                           : static_cast<double>(cur_area) / gt_area;
        };
        while (cur_iou() >= target.hi) {
            if (qi == queue.size()) {
                if (level >= cap) {
                    throw UnreachableTarget("ring pixels exhausted before reaching target");
                }
                queue = family.ring(level);
                ++level;
                qi = 0;
                if (queue.empty()) continue;
                rng.shuffle(queue);
            }
            const Pixel p = queue[qi++];
            result.set(p.x, p.y, growing);
            cur_area += growing ? 1 : -1;
            if (++flips > flip_cap) {
                throw UnreachableTarget("flip cap exceeded: " + std::to_string(flip_cap));
            }
        }
    }

    const double iou = mask_iou(result, gt);
    if (!target.contains(iou)) {
        throw UnreachableTarget("single-pixel steps overshoot the interval [" +
                                std::to_string(target.lo) + ", " + std::to_string(target.hi) +
                                ")");
    }

    PerturbationSpec spec;
    spec.kind = kind;
    spec.element = family.element(base_level);
    spec.seed_point = seed_point;
    spec.fine_tune_flips = flips;
    return {std::move(result),
            QualityLabel{iou, kind, derive_action(kind, iou, thresholds), difficulty}, spec};
}

struct NegativeCandidate {
    std::string id;
    BinaryMask mask;
};

struct RankedNegative {
    std::string id;
    BinaryMask mask;
    QualityLabel label;
};

/// Keeps candidates that are non-empty and pixel-disjoint from gt, ranked
/// by bounding-box IoU against gt (descending, ties by id ascending); at
/// most k survive. The result may be empty.
inline std::vector<RankedNegative> select_full_negs(const BinaryMask& gt,
                                                    const std::vector<NegativeCandidate>& candidates,
                                                    int k = 3) {
    const BoundingBox gt_box = bbox(gt);
    std::vector<std::pair<double, const NegativeCandidate*>> ranked;
    for (const NegativeCandidate& c : candidates) {
        require_same_size(gt, c.mask);
        if (c.mask.empty() || !is_disjoint(c.mask, gt)) continue;
        ranked.emplace_back(bbox_iou(bbox(c.mask), gt_box), &c);
    }
    std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second->id < b.second->id;
    });
    if (static_cast<int>(ranked.size()) > k) ranked.resize(k);

    std::vector<RankedNegative> out;
    out.reserve(ranked.size());
    for (const auto& [score, cand] : ranked) {
        out.push_back({cand->id, cand->mask,
                       QualityLabel{0.0, MaskType::full_neg, Action::reject,
                                    Difficulty::not_applicable}});
    }
    return out;
}

/// gt ∪ H for one disjoint distractor H. The IoU is |gt| / (|gt| + |H|).
inline GeneratedSample gen_merge_one(const BinaryMask& gt, const std::string& negative_id,
                                     const BinaryMask& negative,
                                     const LabelThresholds& thresholds = LabelThresholds{}) {
    require_same_size(gt, negative);
    if (!is_disjoint(gt, negative)) {
        throw OverlapViolation("merge negative '" + negative_id + "' overlaps the ground truth");
    }
    if (negative.empty()) {
        throw EmptyMask("merge negative '" + negative_id + "' is empty");
    }
    BinaryMask merged = mask_union(gt, negative);
    const double iou =
        static_cast<double>(gt.area()) / static_cast<double>(gt.area() + negative.area());
    PerturbationSpec spec;
    spec.kind = MaskType::merge;
    spec.negative_id = negative_id;
    return {std::move(merged),
            QualityLabel{iou, MaskType::merge, derive_action(MaskType::merge, iou, thresholds),
                         merge_difficulty(iou, thresholds)},
            spec};
}

inline std::vector<GeneratedSample> gen_merges(
    const BinaryMask& gt, const std::vector<std::pair<std::string, BinaryMask>>& negatives,
    const LabelThresholds& thresholds = LabelThresholds{}) {
    std::vector<GeneratedSample> out;
    out.reserve(negatives.size());
    for (const auto& [id, mask] : negatives) {
        out.push_back(gen_merge_one(gt, id, mask, thresholds));
    }
    return out;
}

struct InstanceConfig {
    IoUTarget hard = kHardTarget;
    IoUTarget medium = kMediumTarget;
    LabelThresholds thresholds;
    int max_negatives = 3;
};

/// One sample slot of an instance. The slot id is stable across frames so
/// that video series can share a mask type.
struct SlotPlan {
    std::string slot_id;
    MaskType kind = MaskType::perfect;
    Difficulty difficulty = Difficulty::not_applicable;
    std::string negative_id; // merge / full_neg only
};

inline std::vector<SlotPlan> plan_instance_slots(const BinaryMask& gt_key,
                                                 const std::vector<NegativeCandidate>& negatives,
                                                 const InstanceConfig& cfg = InstanceConfig{}) {
    if (gt_key.empty()) {
        throw EmptyGroundTruth("cannot plan slots for an empty ground truth");
    }
    std::vector<SlotPlan> plans;
    plans.push_back({"perfect", MaskType::perfect, Difficulty::not_applicable, ""});
    for (MaskType kind : {MaskType::cutout, MaskType::dilate, MaskType::erode}) {
        for (Difficulty d : {Difficulty::hard, Difficulty::medium}) {
            plans.push_back({std::string(mask_type_name(kind)) + "_" +
                                 std::string(difficulty_name(d)),
                             kind, d, ""});
        }
    }
    const auto selected = select_full_negs(gt_key, negatives, cfg.max_negatives);
    for (const RankedNegative& n : selected) {
        plans.push_back({"merge_" + n.id, MaskType::merge, Difficulty::not_applicable, n.id});
    }
    for (const RankedNegative& n : selected) {
        plans.push_back({"full_neg_" + n.id, MaskType::full_neg, Difficulty::not_applicable, n.id});
    }
    return plans;
}

/// Generates one planned slot on one frame. `negative` must be the plan's
/// negative mask on that frame (merge / full_neg), null otherwise.
inline GeneratedSample generate_slot(const BinaryMask& gt, const SlotPlan& plan,
                                     const BinaryMask* negative, std::uint64_t slot_seed,
                                     const InstanceConfig& cfg = InstanceConfig{}) {
    switch (plan.kind) {
        case MaskType::perfect:
            return gen_perfect(gt);
        case MaskType::cutout:
        case MaskType::dilate:
        case MaskType::erode: {
            const IoUTarget& target = plan.difficulty == Difficulty::hard ? cfg.hard : cfg.medium;
            return gen_geometric(gt, plan.kind, target, plan.difficulty, slot_seed,
                                 cfg.thresholds);
        }
        case MaskType::merge:
            if (negative == nullptr) throw EmptyMask("merge slot without a negative mask");
            return gen_merge_one(gt, plan.negative_id, *negative, cfg.thresholds);
        case MaskType::full_neg: {
            if (negative == nullptr) throw EmptyMask("full_neg slot without a negative mask");
            require_same_size(gt, *negative);
            if (negative->empty()) {
                throw EmptyMask("full_neg '" + plan.negative_id + "' is empty on this frame");
            }
            if (!is_disjoint(*negative, gt)) {
                throw OverlapViolation("full_neg '" + plan.negative_id +
                                       "' overlaps the ground truth on this frame");
            }
            PerturbationSpec spec;
            spec.kind = MaskType::full_neg;
            spec.negative_id = plan.negative_id;
            return {*negative,
                    QualityLabel{0.0, MaskType::full_neg, Action::reject,
                                 Difficulty::not_applicable},
                    spec};
        }
    }
    throw std::invalid_argument("unknown slot kind");
}

inline std::uint64_t slot_seed(std::uint64_t instance_seed, const SlotPlan& plan) {
    std::uint64_t h = hash_mix(instance_seed, static_cast<int>(plan.kind) + 1);
    h = hash_mix(h, static_cast<int>(plan.difficulty) + 1);
    if (!plan.negative_id.empty()) h = hash_mix(h, hash_string(plan.negative_id));
    return h;
}

struct SlotSample {
    std::string slot_id;
    BinaryMask mask;
    QualityLabel label;
    PerturbationSpec spec;
};

struct DroppedSlot {
    std::string slot_id;
    std::string reason;
};

struct InstanceSamples {
    std::vector<SlotSample> samples;
    std::vector<DroppedSlot> dropped;
    bool partial = false;
};

/// Full per-instance sample set on one frame: 1 perfect + 2 cutout +
/// 2 dilate + 2 erode + up to 3 merge + up to 3 full_neg, i.e. 7..13
/// samples. Geometric slots that cannot reach their interval are dropped
/// and the instance is flagged partial.
inline InstanceSamples gen_instance(const BinaryMask& gt,
                                    const std::vector<NegativeCandidate>& negatives,
                                    std::uint64_t rng_seed,
                                    const InstanceConfig& cfg = InstanceConfig{}) {
    if (gt.empty()) {
        throw EmptyGroundTruth("cannot generate samples for an empty ground truth");
    }
    std::map<std::string, const BinaryMask*> neg_by_id;
    for (const NegativeCandidate& n : negatives) neg_by_id.emplace(n.id, &n.mask);

    InstanceSamples out;
    for (const SlotPlan& plan : plan_instance_slots(gt, negatives, cfg)) {
        const BinaryMask* neg =
            plan.negative_id.empty() ? nullptr : neg_by_id.at(plan.negative_id);
        try {
            GeneratedSample g = generate_slot(gt, plan, neg, slot_seed(rng_seed, plan), cfg);
            out.samples.push_back(
                {plan.slot_id, std::move(g.mask), g.label, std::move(g.spec)});
        } catch (const DegenerateObject& e) {
            out.dropped.push_back({plan.slot_id, e.what()});
            out.partial = true;
        } catch (const UnreachableTarget& e) {
            out.dropped.push_back({plan.slot_id, e.what()});
            out.partial = true;
        }
    }
    return out;
}

} // namespace maskaudit
