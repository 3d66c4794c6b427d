#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "maskaudit/audit.hpp"
#include "maskaudit/error.hpp"
#include "maskaudit/label.hpp"
#include "maskaudit/manifest.hpp"

namespace maskaudit {

/// One-vs-rest confusion counts for a single class.
struct ClassCounts {
    long tp = 0;
    long fp = 0;
    long fn = 0;

    bool any() const { return tp != 0 || fp != 0 || fn != 0; }
};

inline double precision_of(const ClassCounts& c) {
    return (c.tp + c.fp) > 0 ? static_cast<double>(c.tp) / (c.tp + c.fp) : 0.0;
}

inline double recall_of(const ClassCounts& c) {
    return (c.tp + c.fn) > 0 ? static_cast<double>(c.tp) / (c.tp + c.fn) : 0.0;
}

inline double f_beta_pr(double precision, double recall, double beta = 2.0) {
    const double b2 = beta * beta;
    const double denom = b2 * precision + recall;
    if (denom == 0.0) return 0.0;
    return (1.0 + b2) * precision * recall / denom;
}

inline double f_beta(long tp, long fp, long fn, double beta = 2.0) {
    const ClassCounts c{tp, fp, fn};
    return f_beta_pr(precision_of(c), recall_of(c), beta);
}

/// The paper-table reporting columns.
enum class ReportColumn {
    perfect = 0,
    cutout_hard,
    cutout_medium,
    dilate_hard,
    dilate_medium,
    erode_hard,
    erode_medium,
    merge,
    full_neg,
};

inline constexpr int kColumnCount = 9;

inline std::string_view column_title(ReportColumn c) {
    switch (c) {
        case ReportColumn::perfect: return "Perfect";
        case ReportColumn::cutout_hard: return "Cutout H";
        case ReportColumn::cutout_medium: return "Cutout M";
        case ReportColumn::dilate_hard: return "Dilate H";
        case ReportColumn::dilate_medium: return "Dilate M";
        case ReportColumn::erode_hard: return "Erode H";
        case ReportColumn::erode_medium: return "Erode M";
        case ReportColumn::merge: return "Merge";
        case ReportColumn::full_neg: return "Full_neg";
    }
    return "?";
}

inline std::string_view column_key(ReportColumn c) {
    switch (c) {
        case ReportColumn::perfect: return "perfect";
        case ReportColumn::cutout_hard: return "cutout_hard";
        case ReportColumn::cutout_medium: return "cutout_medium";
        case ReportColumn::dilate_hard: return "dilate_hard";
        case ReportColumn::dilate_medium: return "dilate_medium";
        case ReportColumn::erode_hard: return "erode_hard";
        case ReportColumn::erode_medium: return "erode_medium";
        case ReportColumn::merge: return "merge";
        case ReportColumn::full_neg: return "full_neg";
    }
    return "?";
}

inline MaskType column_class(ReportColumn c) {
    switch (c) {
        case ReportColumn::perfect: return MaskType::perfect;
        case ReportColumn::cutout_hard:
        case ReportColumn::cutout_medium: return MaskType::cutout;
        case ReportColumn::dilate_hard:
        case ReportColumn::dilate_medium: return MaskType::dilate;
        case ReportColumn::erode_hard:
        case ReportColumn::erode_medium: return MaskType::erode;
        case ReportColumn::merge: return MaskType::merge;
        case ReportColumn::full_neg: return MaskType::full_neg;
    }
    return MaskType::perfect;
}

inline ReportColumn column_of(MaskType type, Difficulty difficulty) {
    switch (type) {
        case MaskType::perfect: return ReportColumn::perfect;
        case MaskType::cutout:
            return difficulty == Difficulty::hard ? ReportColumn::cutout_hard
                                                  : ReportColumn::cutout_medium;
        case MaskType::dilate:
            return difficulty == Difficulty::hard ? ReportColumn::dilate_hard
                                                  : ReportColumn::dilate_medium;
        case MaskType::erode:
            return difficulty == Difficulty::hard ? ReportColumn::erode_hard
                                                  : ReportColumn::erode_medium;
        case MaskType::merge: return ReportColumn::merge;
        case MaskType::full_neg: return ReportColumn::full_neg;
    }
    return ReportColumn::perfect;
}

/// One scored sample: ground-truth label joined with a parsed prediction.
struct ScoredSample {
    std::string sample_id;
    std::string series_id;
    Split split = Split::train;
    QualityLabel gt;
    AuditPrediction pred;
};

struct MetricsOptions {
    bool subset_precision = false; // per-difficulty cells: precision within the subset
    bool strict_parse = false;     // recovered parses score like failed ones
    double beta = 2.0;
};

struct CellResult {
    bool present = false;
    long n = 0;
    double rmse = 0.0;
    double f2_type = 0.0;   // percent
    double f2_action = 0.0; // percent
};

struct SplitReport {
    std::array<CellResult, kColumnCount> cells;
    CellResult avg; // arithmetic mean over the present reporting columns
    double overall_rmse = 0.0;
    double macro_f2_type = 0.0;   // percent, over classes with support
    double macro_f2_action = 0.0; // percent
    std::array<ClassCounts, 6> confusion_type;
    std::array<ClassCounts, 4> confusion_action;
    std::array<double, 6> per_class_f2_type{};   // percent
    std::array<double, 4> per_class_f2_action{}; // percent
    long n_scored = 0;
    long n_series = 0; // video protocol only
    long n_failed = 0;
    long n_recovered = 0;
};

struct MetricReport {
    std::string protocol;
    MetricsOptions options;
    std::map<std::string, SplitReport> splits; // split name -> report
};

namespace metrics_detail {

// Strict mode discards fields recovered by parser heuristics.
inline AuditPrediction effective_prediction(const AuditPrediction& p, bool strict) {
    if (!strict || p.parse_status != ParseStatus::recovered) return p;
    AuditPrediction out;
    out.raw_text = p.raw_text;
    out.parse_status = ParseStatus::failed;
    return out;
}

inline double iou_or_neutral(const AuditPrediction& p) { return p.iou.value_or(0.5); }

inline void sort_and_check_unique(std::vector<ScoredSample>& samples) {
    std::sort(samples.begin(), samples.end(),
              [](const ScoredSample& a, const ScoredSample& b) {
                  return a.sample_id < b.sample_id;
              });
    for (std::size_t i = 1; i < samples.size(); ++i) {
        if (samples[i].sample_id == samples[i - 1].sample_id) {
            throw UnscoredSample("sample scored more than once: " + samples[i].sample_id);
        }
    }
}

struct Confusions {
    std::array<ClassCounts, 6> type;
    std::array<ClassCounts, 4> action;

    void add(const QualityLabel& gt, const AuditPrediction& pred) {
        const int g = static_cast<int>(gt.mask_type);
        if (pred.mask_type) {
            const int p = static_cast<int>(*pred.mask_type);
            if (p == g) {
                ++type[g].tp;
            } else {
                ++type[p].fp;
                ++type[g].fn;
            }
        } else {
            ++type[g].fn; // absent prediction: FN for the true class only
        }
        const int ga = static_cast<int>(gt.action);
        if (pred.action) {
            const int pa = static_cast<int>(*pred.action);
            if (pa == ga) {
                ++action[ga].tp;
            } else {
                ++action[pa].fp;
                ++action[ga].fn;
            }
        } else {
            ++action[ga].fn;
        }
    }
};

template <std::size_t N>
inline double macro_f2(const std::array<ClassCounts, N>& counts, double beta) {
    double sum = 0.0;
    int supported = 0;
    for (const ClassCounts& c : counts) {
        if (!c.any()) continue;
        sum += f_beta_pr(precision_of(c), recall_of(c), beta);
        ++supported;
    }
    return supported > 0 ? 100.0 * sum / supported : 0.0;
}

} // namespace metrics_detail

/// Image-based protocol: RMSE over all frame samples; F2 from one-vs-rest
/// counts accumulated over the split. Per-difficulty columns use recall
/// restricted to the column subset with split-level precision (the
/// subset_precision option switches to within-subset precision).
inline MetricReport evaluate_image_based(std::vector<ScoredSample> samples,
                                         const MetricsOptions& options = MetricsOptions{}) {
    using namespace metrics_detail;
    sort_and_check_unique(samples);

    MetricReport report;
    report.protocol = std::string(kImageProtocol);
    report.options = options;

    std::map<std::string, std::vector<const ScoredSample*>> by_split;
    for (const ScoredSample& s : samples) {
        by_split[std::string(split_name(s.split))].push_back(&s);
    }

    for (const auto& [split, list] : by_split) {
        SplitReport& sr = report.splits[split];
        sr.n_scored = static_cast<long>(list.size());

        Confusions global;
        std::array<Confusions, kColumnCount> cell_conf;
        std::array<long, kColumnCount> cell_n{};
        std::array<double, kColumnCount> cell_sq{};
        double total_sq = 0.0;

        for (const ScoredSample* s : list) {
            const AuditPrediction pred = effective_prediction(s->pred, options.strict_parse);
            if (s->pred.parse_status == ParseStatus::failed) ++sr.n_failed;
            if (s->pred.parse_status == ParseStatus::recovered) ++sr.n_recovered;

            const double residual = iou_or_neutral(pred) - s->gt.iou;
            total_sq += residual * residual;
            global.add(s->gt, pred);

            const int col = static_cast<int>(column_of(s->gt.mask_type, s->gt.difficulty));
            ++cell_n[col];
            cell_sq[col] += residual * residual;
            cell_conf[col].add(s->gt, pred);
        }

        sr.overall_rmse = list.empty() ? 0.0 : std::sqrt(total_sq / list.size());
        sr.confusion_type = global.type;
        sr.confusion_action = global.action;
        for (int c = 0; c < 6; ++c) {
            sr.per_class_f2_type[c] = 100.0 * f_beta_pr(precision_of(global.type[c]),
                                                        recall_of(global.type[c]), options.beta);
        }
        for (int c = 0; c < 4; ++c) {
            sr.per_class_f2_action[c] = 100.0 * f_beta_pr(precision_of(global.action[c]),
                                                          recall_of(global.action[c]),
                                                          options.beta);
        }
        sr.macro_f2_type = macro_f2(global.type, options.beta);
        sr.macro_f2_action = macro_f2(global.action, options.beta);

        int present = 0;
        double avg_rmse = 0.0, avg_ft = 0.0, avg_fa = 0.0;
        for (int col = 0; col < kColumnCount; ++col) {
            CellResult& cell = sr.cells[col];
            cell.n = cell_n[col];
            if (cell.n == 0) continue;
            cell.present = true;
            cell.rmse = std::sqrt(cell_sq[col] / cell.n);

            const int cls = static_cast<int>(column_class(static_cast<ReportColumn>(col)));
            const ClassCounts& cell_type = cell_conf[col].type[cls];
            const double recall = recall_of(cell_type);
            const double precision = options.subset_precision ? precision_of(cell_type)
                                                              : precision_of(global.type[cls]);
            cell.f2_type = 100.0 * f_beta_pr(precision, recall, options.beta);

            double fa_sum = 0.0;
            int fa_classes = 0;
            for (int a = 0; a < 4; ++a) {
                const ClassCounts& ca = cell_conf[col].action[a];
                if (ca.tp + ca.fn == 0) continue; // no gt support for this action in the cell
                const double ra = recall_of(ca);
                const double pa = options.subset_precision ? precision_of(ca)
                                                           : precision_of(global.action[a]);
                fa_sum += f_beta_pr(pa, ra, options.beta);
                ++fa_classes;
            }
            cell.f2_action = fa_classes > 0 ? 100.0 * fa_sum / fa_classes : 0.0;

            avg_rmse += cell.rmse;
            avg_ft += cell.f2_type;
            avg_fa += cell.f2_action;
            ++present;
        }
        if (present > 0) {
            sr.avg.present = true;
            sr.avg.n = sr.n_scored;
            sr.avg.rmse = avg_rmse / present;
            sr.avg.f2_type = avg_ft / present;
            sr.avg.f2_action = avg_fa / present;
        }
    }
    return report;
}

/// Video-based protocol: frame predictions aggregate per mask series
/// first. RMSE compares per-series mean IoUs; F2 is computed per series
/// over the classes with support in that series, then averaged across the
/// series of a column.
inline MetricReport evaluate_video_based(std::vector<ScoredSample> samples,
                                         const MetricsOptions& options = MetricsOptions{}) {
    using namespace metrics_detail;
    sort_and_check_unique(samples);

    MetricReport report;
    report.protocol = std::string(kVideoProtocol);
    report.options = options;

    struct Series {
        std::string split;
        std::vector<const ScoredSample*> frames;
    };
    std::map<std::string, Series> series_map;
    for (const ScoredSample& s : samples) {
        if (s.series_id.empty()) {
            throw EmptyVideo("sample " + s.sample_id + " carries no series id");
        }
        Series& v = series_map[s.series_id];
        v.split = std::string(split_name(s.split));
        v.frames.push_back(&s);
    }

    struct SeriesScore {
        int column;
        double gt_mean;
        double pred_mean;
        double f2_type;   // unit scale
        double f2_action; // unit scale
    };
    std::map<std::string, std::vector<SeriesScore>> by_split;

    for (const auto& [series_id, series] : series_map) {
        if (series.frames.empty()) {
            throw EmptyVideo("series " + series_id + " has no scored frames");
        }
        SplitReport& sr = report.splits[series.split];
        ++sr.n_series;

        Confusions conf;
        double gt_sum = 0.0, pred_sum = 0.0;
        std::map<Difficulty, int> difficulties;
        for (const ScoredSample* s : series.frames) {
            const AuditPrediction pred = effective_prediction(s->pred, options.strict_parse);
            if (s->pred.parse_status == ParseStatus::failed) ++sr.n_failed;
            if (s->pred.parse_status == ParseStatus::recovered) ++sr.n_recovered;
            gt_sum += s->gt.iou;
            pred_sum += iou_or_neutral(pred);
            conf.add(s->gt, pred);
            ++difficulties[s->gt.difficulty];
            ++sr.n_scored;
        }
        const double gt_mean = gt_sum / series.frames.size();
        const double pred_mean = pred_sum / series.frames.size();

        const MaskType type = series.frames.front()->gt.mask_type;
        // Frames of one series share the type by construction; a merge
        // series may still cross action thresholds, so its difficulty is
        // derived from the mean gt IoU when frames disagree.
        Difficulty difficulty = series.frames.front()->gt.difficulty;
        if (difficulties.size() > 1) {
            difficulty = type == MaskType::merge ? merge_difficulty(gt_mean)
                                                 : series.frames.front()->gt.difficulty;
        }

        for (int c = 0; c < 6; ++c) {
            sr.confusion_type[c].tp += conf.type[c].tp;
            sr.confusion_type[c].fp += conf.type[c].fp;
            sr.confusion_type[c].fn += conf.type[c].fn;
        }
        for (int c = 0; c < 4; ++c) {
            sr.confusion_action[c].tp += conf.action[c].tp;
            sr.confusion_action[c].fp += conf.action[c].fp;
            sr.confusion_action[c].fn += conf.action[c].fn;
        }

        SeriesScore score;
        score.column = static_cast<int>(column_of(type, difficulty));
        score.gt_mean = gt_mean;
        score.pred_mean = pred_mean;
        score.f2_type = macro_f2(conf.type, options.beta) / 100.0;
        score.f2_action = macro_f2(conf.action, options.beta) / 100.0;
        by_split[series.split].push_back(score);
    }

    for (auto& [split, scores] : by_split) {
        SplitReport& sr = report.splits[split];

        std::array<long, kColumnCount> cell_n{};
        std::array<double, kColumnCount> cell_sq{}, cell_ft{}, cell_fa{};
        double total_sq = 0.0;
        for (const SeriesScore& s : scores) {
            const double residual = s.pred_mean - s.gt_mean;
            total_sq += residual * residual;
            ++cell_n[s.column];
            cell_sq[s.column] += residual * residual;
            cell_ft[s.column] += s.f2_type;
            cell_fa[s.column] += s.f2_action;
        }
        sr.overall_rmse = scores.empty() ? 0.0 : std::sqrt(total_sq / scores.size());
        for (int c = 0; c < 6; ++c) {
            sr.per_class_f2_type[c] =
                100.0 * f_beta_pr(precision_of(sr.confusion_type[c]),
                                  recall_of(sr.confusion_type[c]), options.beta);
        }
        for (int c = 0; c < 4; ++c) {
            sr.per_class_f2_action[c] =
                100.0 * f_beta_pr(precision_of(sr.confusion_action[c]),
                                  recall_of(sr.confusion_action[c]), options.beta);
        }
        sr.macro_f2_type = macro_f2(sr.confusion_type, options.beta);
        sr.macro_f2_action = macro_f2(sr.confusion_action, options.beta);

        int present = 0;
        double avg_rmse = 0.0, avg_ft = 0.0, avg_fa = 0.0;
        for (int col = 0; col < kColumnCount; ++col) {
            CellResult& cell = sr.cells[col];
            cell.n = cell_n[col];
            if (cell.n == 0) continue;
            cell.present = true;
            cell.rmse = std::sqrt(cell_sq[col] / cell.n);
            cell.f2_type = 100.0 * cell_ft[col] / cell.n;
            cell.f2_action = 100.0 * cell_fa[col] / cell.n;
            avg_rmse += cell.rmse;
            avg_ft += cell.f2_type;
            avg_fa += cell.f2_action;
            ++present;
        }
        if (present > 0) {
            sr.avg.present = true;
            sr.avg.n = sr.n_scored;
            sr.avg.rmse = avg_rmse / present;
            sr.avg.f2_type = avg_ft / present;
            sr.avg.f2_action = avg_fa / present;
        }
    }
    return report;
}

// ---------------------------------------------------------------------------
// Report rendering. Percentages are reported to 2 decimals and RMSE to 3;
// the JSON and markdown outputs carry identical (rounded) numbers.

inline double round_to(double v, int decimals) {
    const double scale = std::pow(10.0, decimals);
    return std::round(v * scale) / scale;
}

inline std::string format_fixed(double v, int decimals) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
    return buf;
}

inline json report_to_json(const MetricReport& report) {
    json splits = json::object();
    for (const auto& [split, sr] : report.splits) {
        json cells = json::object();
        for (int col = 0; col < kColumnCount; ++col) {
            const CellResult& cell = sr.cells[col];
            if (!cell.present) continue;
            cells[std::string(column_key(static_cast<ReportColumn>(col)))] =
                json{{"f2_action", round_to(cell.f2_action, 2)},
                     {"f2_mask_type", round_to(cell.f2_type, 2)},
                     {"n", cell.n},
                     {"rmse", round_to(cell.rmse, 3)}};
        }
        json per_class_type = json::object();
        json confusion_type = json::object();
        for (int c = 0; c < 6; ++c) {
            const auto name = std::string(mask_type_name(static_cast<MaskType>(c)));
            per_class_type[name] = round_to(sr.per_class_f2_type[c], 2);
            confusion_type[name] = json{{"fn", sr.confusion_type[c].fn},
                                        {"fp", sr.confusion_type[c].fp},
                                        {"tp", sr.confusion_type[c].tp}};
        }
        json per_class_action = json::object();
        json confusion_action = json::object();
        for (int c = 0; c < 4; ++c) {
            const auto name = std::string(action_name(static_cast<Action>(c)));
            per_class_action[name] = round_to(sr.per_class_f2_action[c], 2);
            confusion_action[name] = json{{"fn", sr.confusion_action[c].fn},
                                          {"fp", sr.confusion_action[c].fp},
                                          {"tp", sr.confusion_action[c].tp}};
        }
        json js{{"avg",
                 json{{"f2_action", round_to(sr.avg.f2_action, 2)},
                      {"f2_mask_type", round_to(sr.avg.f2_type, 2)},
                      {"rmse", round_to(sr.avg.rmse, 3)}}},
                {"cells", cells},
                {"confusion_action", confusion_action},
                {"confusion_mask_type", confusion_type},
                {"macro_f2_action", round_to(sr.macro_f2_action, 2)},
                {"macro_f2_mask_type", round_to(sr.macro_f2_type, 2)},
                {"n_failed_parse", sr.n_failed},
                {"n_recovered_parse", sr.n_recovered},
                {"n_scored", sr.n_scored},
                {"overall_rmse", round_to(sr.overall_rmse, 3)},
                {"per_class_f2_action", per_class_action},
                {"per_class_f2_mask_type", per_class_type}};
        if (report.protocol == kVideoProtocol) js["n_series"] = sr.n_series;
        splits[split] = js;
    }
    return json{{"options",
                 json{{"beta", report.options.beta},
                      {"strict_parse", report.options.strict_parse},
                      {"subset_precision", report.options.subset_precision}}},
                {"protocol", report.protocol},
                {"splits", splits}};
}

inline std::string report_to_markdown(const MetricReport& report) {
    std::string out = "# Evaluation report (" + report.protocol + ")\n";
    for (const auto& [split, sr] : report.splits) {
        out += "\n## " + split + " (n=" + std::to_string(sr.n_scored) +
               ", failed_parse=" + std::to_string(sr.n_failed) +
               ", recovered=" + std::to_string(sr.n_recovered) + ")\n\n";
        out += "| Metric |";
        for (int col = 0; col < kColumnCount; ++col) {
            out += " " + std::string(column_title(static_cast<ReportColumn>(col))) + " |";
        }
        out += " Avg. |\n|---|";
        for (int col = 0; col <= kColumnCount; ++col) out += "---|";
        out += "\n";

        auto row = [&](const std::string& name, auto value_of, int decimals) {
            out += "| " + name + " |";
            for (int col = 0; col < kColumnCount; ++col) {
                const CellResult& cell = sr.cells[col];
                out += cell.present ? " " + format_fixed(value_of(cell), decimals) + " |" : " - |";
            }
            out += sr.avg.present ? " " + format_fixed(value_of(sr.avg), decimals) + " |\n"
                                  : " - |\n";
        };
        row("RMSE", [](const CellResult& c) { return c.rmse; }, 3);
        row("F2-M (%)", [](const CellResult& c) { return c.f2_type; }, 2);
        row("F2-A (%)", [](const CellResult& c) { return c.f2_action; }, 2);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Prediction joining.

/// Parsed predictions keyed by sample id.
using PredictionMap = std::map<std::string, AuditPrediction>;

/// Joins manifest samples of one protocol with predictions. Every selected
/// sample must be covered, otherwise UnscoredSample is thrown.
inline std::vector<ScoredSample> join_predictions(const Manifest& manifest,
                                                  const PredictionMap& predictions,
                                                  std::string_view protocol) {
    std::map<std::string, Split> split_of;
    for (const InstanceRecord& r : manifest.instances) split_of[r.instance_id] = r.split;

    std::vector<ScoredSample> out;
    std::vector<std::string> missing;
    for (const SampleRecord& s : manifest.samples) {
        const bool member = protocol == kImageProtocol ? s.image_based : s.video_based;
        if (!member) continue;
        const auto it = predictions.find(s.sample_id);
        if (it == predictions.end()) {
            missing.push_back(s.sample_id);
            continue;
        }
        ScoredSample scored;
        scored.sample_id = s.sample_id;
        scored.series_id = s.series_id;
        scored.split = split_of.at(s.instance_id);
        scored.gt = s.label;
        scored.pred = it->second;
        out.push_back(std::move(scored));
    }
    if (!missing.empty()) {
        std::string msg = std::to_string(missing.size()) + " samples without predictions:";
        for (std::size_t i = 0; i < missing.size() && i < 5; ++i) msg += " " + missing[i];
        throw UnscoredSample(msg);
    }
    return out;
}

} // namespace maskaudit
