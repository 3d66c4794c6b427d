#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "maskaudit/label.hpp"

namespace maskaudit {

enum class ParseStatus { clean, recovered, failed };

inline std::string_view parse_status_name(ParseStatus s) {
    switch (s) {
        case ParseStatus::clean: return "clean";
        case ParseStatus::recovered: return "recovered";
        case ParseStatus::failed: return "failed";
    }
    return "?";
}

/// A parsed auditor output. Failed parses leave all three fields absent;
/// the evaluator then scores them as maximally wrong (iou 0.5, no class
/// credit).
struct AuditPrediction {
    std::string raw_text;
    std::optional<double> iou;
    std::optional<MaskType> mask_type;
    std::optional<Action> action;
    std::string reasoning;
    ParseStatus parse_status = ParseStatus::failed;
};

inline std::string format_iou(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

/// Emits the canonical tagged audit block. IoU is rendered to four decimal
/// places, the mask type lowercase and the action in title case.
inline std::string serialize_audit(double iou, MaskType type, Action action,
                                   std::string_view reasoning = {}) {
    std::string out = "<audit> ";
    if (!reasoning.empty()) {
        out += reasoning;
        out += ' ';
    }
    out += "The IoU with GT is <iou> ";
    out += format_iou(iou);
    out += " </iou>, its mask type belongs to <mask_type> ";
    out += mask_type_name(type);
    out += " </mask_type>, and the recommend action is <action> ";
    out += action_title(action);
    out += " </action> </audit>";
    return out;
}

namespace audit_detail {

inline std::string to_lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

// Lowercase, separators to single spaces, surrounding punctuation stripped.
inline std::string normalize_token(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    bool pending_space = false;
    for (char raw : s) {
        const unsigned char c = static_cast<unsigned char>(raw);
        if (std::isalnum(c)) {
            if (pending_space && !out.empty()) out += ' ';
            pending_space = false;
            out += static_cast<char>(std::tolower(c));
        } else if (std::isspace(c) || raw == '_' || raw == '-') {
            pending_space = true;
        }
        // other punctuation is dropped
    }
    return out;
}

struct TagSpan {
    std::size_t open = std::string::npos;    // position of '<'
    std::size_t begin = std::string::npos;   // content begin
    std::size_t end = std::string::npos;     // content end
};

inline std::size_t count_occurrences(std::string_view hay, std::string_view needle) {
    std::size_t n = 0;
    for (std::size_t pos = hay.find(needle); pos != std::string_view::npos;
         pos = hay.find(needle, pos + 1)) {
        ++n;
    }
    return n;
}

// Last complete <name>...</name> pair inside [scope_begin, scope_end).
inline std::optional<TagSpan> find_last_tag(std::string_view text, std::string_view name,
                                            std::size_t scope_begin, std::size_t scope_end) {
    const std::string open = "<" + std::string(name) + ">";
    const std::string close = "</" + std::string(name) + ">";
    std::optional<TagSpan> found;
    std::size_t pos = scope_begin;
    while (pos < scope_end) {
        const std::size_t o = text.find(open, pos);
        if (o == std::string_view::npos || o >= scope_end) break;
        const std::size_t c = text.find(close, o + open.size());
        if (c == std::string_view::npos || c + close.size() > scope_end) break;
        found = TagSpan{o, o + open.size(), c};
        pos = c + close.size();
    }
    return found;
}

// Locale-independent full-string number parse. Non-finite values are
// rejected so hostile "nan"/"inf" text cannot reach the scoring math.
inline std::optional<double> parse_number_exact(std::string_view s) {
    s = trim(s);
    if (s.empty()) return std::nullopt;
    if (s.front() == '+') s.remove_prefix(1);
    double value = 0.0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(value)) {
        return std::nullopt;
    }
    return value;
}

// First parseable number anywhere in the window.
inline std::optional<double> first_number_in(std::string_view s) {
    for (std::size_t i = 0; i < s.size(); ++i) {
        const char c = s[i];
        const bool digit = std::isdigit(static_cast<unsigned char>(c));
        const bool sign_or_dot = (c == '-' || c == '+' || c == '.');
        if (!digit && !sign_or_dot) continue;
        std::size_t start = i;
        if (c == '+') start = i + 1;
        if (start >= s.size()) break;
        double value = 0.0;
        const auto [ptr, ec] = std::from_chars(s.data() + start, s.data() + s.size(), value);
        if (ec == std::errc{} && ptr != s.data() + start && std::isfinite(value)) return value;
    }
    return std::nullopt;
}

inline std::optional<MaskType> match_mask_type(std::string_view raw) {
    const std::string norm = normalize_token(raw);
    if (norm.empty()) return std::nullopt;
    struct Alias {
        std::string_view text;
        MaskType type;
    };
    static constexpr Alias kAliases[] = {
        {"full neg", MaskType::full_neg}, {"fullneg", MaskType::full_neg},
        {"perfect", MaskType::perfect},   {"cutout", MaskType::cutout},
        {"dilate", MaskType::dilate},     {"erode", MaskType::erode},
        {"merge", MaskType::merge},
    };
    std::size_t best_pos = std::string::npos;
    std::size_t best_len = 0;
    std::optional<MaskType> best;
    for (const Alias& a : kAliases) {
        const std::size_t pos = norm.find(a.text);
        if (pos == std::string::npos) continue;
        if (pos < best_pos || (pos == best_pos && a.text.size() > best_len)) {
            best_pos = pos;
            best_len = a.text.size();
            best = a.type;
        }
    }
    return best;
}

inline std::optional<Action> match_action(std::string_view raw) {
    const std::string norm = normalize_token(raw);
    if (norm.empty()) return std::nullopt;
    struct Alias {
        std::string_view text;
        Action action;
    };
    // "minor"/"major" prefixes stand in for the full revision phrases.
    static constexpr Alias kAliases[] = {
        {"minor", Action::minor_revision},
        {"major", Action::major_revision},
        {"accept", Action::accept},
        {"reject", Action::reject},
    };
    std::size_t best_pos = std::string::npos;
    std::optional<Action> best;
    for (const Alias& a : kAliases) {
        const std::size_t pos = norm.find(a.text);
        if (pos != std::string::npos && pos < best_pos) {
            best_pos = pos;
            best = a.action;
        }
    }
    return best;
}

// Last keyword occurrence whose trailing window yields a value. Keyword
// hits must start at a word boundary ("reaction" is not an action).
template <typename Matcher>
inline auto keyword_fallback(std::string_view lower, std::size_t scope_begin,
                             std::size_t scope_end, std::initializer_list<std::string_view> keys,
                             Matcher&& matcher) -> decltype(matcher(std::string_view{})) {
    constexpr std::size_t kWindow = 64;
    std::vector<std::size_t> hits;
    for (std::string_view key : keys) {
        for (std::size_t pos = lower.find(key, scope_begin);
             pos != std::string_view::npos && pos < scope_end; pos = lower.find(key, pos + 1)) {
            if (pos > 0 && std::isalnum(static_cast<unsigned char>(lower[pos - 1]))) continue;
            hits.push_back(pos + key.size());
        }
    }
    std::sort(hits.begin(), hits.end());
    for (auto it = hits.rbegin(); it != hits.rend(); ++it) {
        const std::size_t end = std::min(scope_end, *it + kWindow);
        if (auto v = matcher(lower.substr(*it, end - *it))) return v;
    }
    return std::nullopt;
}

inline double clamp_unit(double v) { return std::min(1.0, std::max(0.0, v)); }

inline double imputed_iou(MaskType t) {
    switch (t) {
        case MaskType::perfect: return 1.0;
        case MaskType::full_neg: return 0.0;
        case MaskType::merge: return 0.8;
        default: return 0.825; // cutout / dilate / erode midpoint
    }
}

// Reasoning prefix: block content up to the canonical connective phrase,
// or up to the first tag when the phrase is absent.
inline std::string reasoning_prefix(std::string_view scope_text, std::string_view scope_lower) {
    std::size_t cut = scope_lower.find("the iou with gt is");
    if (cut == std::string_view::npos) cut = scope_lower.find('<');
    if (cut == std::string_view::npos) cut = scope_text.size();
    return std::string(trim(scope_text.substr(0, cut)));
}

} // namespace audit_detail

/// Total parser for auditor output. Clean requires exactly one audit block
/// with well-formed lowercase tags and canonical values; the recovery path
/// tolerates missing outer tags, case variance, the <mask> tag alias,
/// prose-style "mask type:/iou/action" fields, out-of-range IoU (clamped)
/// and missing IoU (imputed from the type's canonical midpoint). Failed
/// means neither a type nor an action could be extracted. Never throws.
inline AuditPrediction parse_audit(const std::string& text) {
    using namespace audit_detail;

    AuditPrediction out;
    out.raw_text = text;

    // Strict pass over the text as written.
    {
        const std::size_t audit_open = text.find("<audit>");
        const std::size_t audit_close = text.find("</audit>");
        const bool one_block = count_occurrences(text, "<audit>") == 1 &&
                               count_occurrences(text, "</audit>") == 1 &&
                               audit_open != std::string::npos && audit_open < audit_close;
        if (one_block) {
            const std::size_t begin = audit_open + 7;
            const std::string_view scope = std::string_view(text).substr(begin, audit_close - begin);
            const bool unique_tags =
                count_occurrences(scope, "<iou>") == 1 && count_occurrences(scope, "</iou>") == 1 &&
                count_occurrences(scope, "<mask_type>") == 1 &&
                count_occurrences(scope, "</mask_type>") == 1 &&
                count_occurrences(scope, "<action>") == 1 &&
                count_occurrences(scope, "</action>") == 1;
            if (unique_tags) {
                const auto iou_tag = find_last_tag(text, "iou", begin, audit_close);
                const auto type_tag = find_last_tag(text, "mask_type", begin, audit_close);
                const auto act_tag = find_last_tag(text, "action", begin, audit_close);
                if (iou_tag && type_tag && act_tag) {
                    const auto iou_v = parse_number_exact(
                        std::string_view(text).substr(iou_tag->begin, iou_tag->end - iou_tag->begin));
                    const auto type_s = trim(
                        std::string_view(text).substr(type_tag->begin, type_tag->end - type_tag->begin));
                    const auto act_s = trim(
                        std::string_view(text).substr(act_tag->begin, act_tag->end - act_tag->begin));
                    std::optional<MaskType> type_v;
                    for (MaskType t : kAllMaskTypes) {
                        if (type_s == mask_type_name(t)) type_v = t;
                    }
                    std::optional<Action> act_v;
                    for (Action a : kAllActions) {
                        if (act_s == action_title(a)) act_v = a;
                    }
                    if (iou_v && *iou_v >= 0.0 && *iou_v <= 1.0 && type_v && act_v) {
                        out.iou = iou_v;
                        out.mask_type = type_v;
                        out.action = act_v;
                        out.parse_status = ParseStatus::clean;
                        const std::string scope_lower = to_lower(scope);
                        out.reasoning = reasoning_prefix(scope, scope_lower);
                        return out;
                    }
                }
            }
        }
    }

    // Recovery pass, case-insensitive, last audit block wins.
    const std::string lower = to_lower(text);
    std::size_t scope_begin = 0;
    std::size_t scope_end = lower.size();
    if (const auto block = find_last_tag(lower, "audit", 0, lower.size())) {
        scope_begin = block->begin;
        scope_end = block->end;
    } else {
        const std::size_t open = lower.rfind("<audit>");
        if (open != std::string::npos) scope_begin = open + 7; // unterminated block
    }

    std::optional<double> iou;
    if (const auto tag = find_last_tag(lower, "iou", scope_begin, scope_end)) {
        iou = first_number_in(lower.substr(tag->begin, tag->end - tag->begin));
    }
    if (!iou) {
        iou = keyword_fallback(lower, scope_begin, scope_end, {"iou"}, first_number_in);
    }

    std::optional<MaskType> type;
    for (std::string_view tag_name : {"mask_type", "mask"}) {
        if (type) break;
        if (const auto tag = find_last_tag(lower, tag_name, scope_begin, scope_end)) {
            type = match_mask_type(lower.substr(tag->begin, tag->end - tag->begin));
        }
    }
    if (!type) {
        type = keyword_fallback(lower, scope_begin, scope_end, {"mask_type", "mask type"},
                                match_mask_type);
    }

    std::optional<Action> action;
    if (const auto tag = find_last_tag(lower, "action", scope_begin, scope_end)) {
        action = match_action(lower.substr(tag->begin, tag->end - tag->begin));
    }
    if (!action) {
        action = keyword_fallback(lower, scope_begin, scope_end, {"action"}, match_action);
    }

    if (!type && !action) {
        out.parse_status = ParseStatus::failed;
        return out;
    }

    out.parse_status = ParseStatus::recovered;
    out.mask_type = type;
    out.action = action;
    if (iou) {
        out.iou = clamp_unit(*iou);
    } else if (type) {
        out.iou = imputed_iou(*type);
    }
    const std::string_view scope_text = std::string_view(text).substr(scope_begin, scope_end - scope_begin);
    out.reasoning = reasoning_prefix(scope_text, lower.substr(scope_begin, scope_end - scope_begin));
    return out;
}

/// Builds a prediction from pre-structured record fields, applying the same
/// value normalization as the text parser.
inline AuditPrediction structured_prediction(std::optional<double> iou,
                                             std::optional<std::string> type_s,
                                             std::optional<std::string> action_s) {
    using namespace audit_detail;
    AuditPrediction out;
    bool canonical = iou.has_value() && *iou >= 0.0 && *iou <= 1.0;
    if (type_s) {
        if (auto t = mask_type_from_name(*type_s)) {
            out.mask_type = t;
        } else if (auto t2 = match_mask_type(*type_s)) {
            out.mask_type = t2;
            canonical = false;
        }
    }
    if (action_s) {
        if (auto a = action_from_name(*action_s)) {
            out.action = a;
        } else if (auto a2 = match_action(*action_s)) {
            out.action = a2;
            canonical = false;
        }
    }
    if (!out.mask_type && !out.action) {
        out.parse_status = ParseStatus::failed;
        return out;
    }
    canonical = canonical && out.mask_type.has_value() && out.action.has_value() &&
                type_s.has_value() && action_s.has_value();
    if (iou) {
        out.iou = clamp_unit(*iou);
    } else if (out.mask_type) {
        out.iou = imputed_iou(*out.mask_type);
    }
    out.parse_status = canonical ? ParseStatus::clean : ParseStatus::recovered;
    return out;
}

/// Pulls a target-object hint out of free text using the "target:" marker
/// convention; used to brief external mask regenerators.
inline std::optional<std::string> extract_target_hint(std::string_view text) {
    using namespace audit_detail;
    const std::string lower = to_lower(text);
    const std::size_t key = lower.rfind("target:");
    if (key == std::string::npos) return std::nullopt;
    std::size_t begin = key + 7;
    std::size_t end = begin;
    while (end < text.size() && text[end] != '.' && text[end] != ';' && text[end] != ',' &&
           text[end] != '\n' && text[end] != '<') {
        ++end;
    }
    const std::string_view hint = trim(std::string_view(text).substr(begin, end - begin));
    if (hint.empty()) return std::nullopt;
    return std::string(hint);
}

} // namespace maskaudit
