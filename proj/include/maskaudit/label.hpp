#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>

#include "maskaudit/error.hpp"
#include "maskaudit/mask.hpp"

namespace maskaudit {

enum class MaskType { perfect, cutout, dilate, erode, merge, full_neg };
enum class Action { accept, minor_revision, major_revision, reject };
enum class Difficulty { hard, medium, easy, not_applicable };

inline constexpr std::array<MaskType, 6> kAllMaskTypes = {
    MaskType::perfect, MaskType::cutout, MaskType::dilate,
    MaskType::erode,   MaskType::merge,  MaskType::full_neg};

inline constexpr std::array<Action, 4> kAllActions = {
    Action::accept, Action::minor_revision, Action::major_revision, Action::reject};

inline std::string_view mask_type_name(MaskType t) {
    switch (t) {
        case MaskType::perfect: return "perfect";
        case MaskType::cutout: return "cutout";
        case MaskType::dilate: return "dilate";
        case MaskType::erode: return "erode";
        case MaskType::merge: return "merge";
        case MaskType::full_neg: return "full_neg";
    }
    return "?";
}

inline std::optional<MaskType> mask_type_from_name(std::string_view s) {
    for (MaskType t : kAllMaskTypes) {
        if (s == mask_type_name(t)) return t;
    }
    return std::nullopt;
}

// Identifier form, used in manifests and reports.
inline std::string_view action_name(Action a) {
    switch (a) {
        case Action::accept: return "accept";
        case Action::minor_revision: return "minor_revision";
        case Action::major_revision: return "major_revision";
        case Action::reject: return "reject";
    }
    return "?";
}

// Audit-text form.
inline std::string_view action_title(Action a) {
    switch (a) {
        case Action::accept: return "Accept";
        case Action::minor_revision: return "Minor Revision";
        case Action::major_revision: return "Major Revision";
        case Action::reject: return "Reject";
    }
    return "?";
}

inline std::optional<Action> action_from_name(std::string_view s) {
    for (Action a : kAllActions) {
        if (s == action_name(a)) return a;
    }
    return std::nullopt;
}

inline std::string_view difficulty_name(Difficulty d) {
    switch (d) {
        case Difficulty::hard: return "hard";
        case Difficulty::medium: return "medium";
        case Difficulty::easy: return "easy";
        case Difficulty::not_applicable: return "n/a";
    }
    return "?";
}

inline std::optional<Difficulty> difficulty_from_name(std::string_view s) {
    for (Difficulty d : {Difficulty::hard, Difficulty::medium, Difficulty::easy,
                         Difficulty::not_applicable}) {
        if (s == difficulty_name(d)) return d;
    }
    return std::nullopt;
}

/// Half-open IoU interval [lo, hi).
struct IoUTarget {
    double lo = 0.0;
    double hi = 1.0;

    bool contains(double v) const { return v >= lo && v < hi; }

    friend bool operator==(const IoUTarget&, const IoUTarget&) = default;
};

inline constexpr IoUTarget kHardTarget{0.85, 0.90};
inline constexpr IoUTarget kMediumTarget{0.75, 0.80};

/// Action/difficulty boundaries. geometric_minor_min is the lower edge of
/// the hard interval; merge thresholds follow the same scheme.
struct LabelThresholds {
    double geometric_minor_min = 0.85;
    double merge_minor_min = 0.90;
    double merge_major_min = 0.75;

    friend bool operator==(const LabelThresholds&, const LabelThresholds&) = default;
};

inline Action derive_action(MaskType type, double iou,
                            const LabelThresholds& thresholds = LabelThresholds{}) {
    switch (type) {
        case MaskType::perfect:
            return Action::accept;
        case MaskType::full_neg:
            return Action::reject;
        case MaskType::cutout:
        case MaskType::dilate:
        case MaskType::erode:
            return iou >= thresholds.geometric_minor_min ? Action::minor_revision
                                                         : Action::major_revision;
        case MaskType::merge:
            if (iou >= thresholds.merge_minor_min && iou < 1.0) return Action::minor_revision;
            if (iou >= thresholds.merge_major_min) return Action::major_revision;
            return Action::reject;
    }
    return Action::reject;
}

inline Difficulty merge_difficulty(double iou,
                                   const LabelThresholds& thresholds = LabelThresholds{}) {
    if (iou >= thresholds.merge_minor_min && iou < 1.0) return Difficulty::hard;
    if (iou >= thresholds.merge_major_min) return Difficulty::medium;
    return Difficulty::easy;
}

/// Ground-truth (s, m, a) triple plus the difficulty bucket.
struct QualityLabel {
    double iou = 0.0;
    MaskType mask_type = MaskType::perfect;
    Action action = Action::accept;
    Difficulty difficulty = Difficulty::not_applicable;

    friend bool operator==(const QualityLabel&, const QualityLabel&) = default;
};

/// Replay recipe: together with (gt, rng seed) this fully determines the
/// generated mask.
struct PerturbationSpec {
    MaskType kind = MaskType::perfect;
    std::optional<StructuringElement> element;
    std::optional<Pixel> seed_point;
    int fine_tune_flips = 0;
    std::optional<std::string> negative_id;

    friend bool operator==(const PerturbationSpec&, const PerturbationSpec&) = default;
};

inline std::string_view element_shape_name(ElementShape s) {
    return s == ElementShape::rectangle ? "rectangle" : "ellipse";
}

inline std::optional<ElementShape> element_shape_from_name(std::string_view s) {
    if (s == "rectangle") return ElementShape::rectangle;
    if (s == "ellipse") return ElementShape::ellipse;
    return std::nullopt;
}

} // namespace maskaudit
