#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "maskaudit/error.hpp"
#include "maskaudit/label.hpp"

namespace maskaudit {

using json = nlohmann::json;

enum class Split { train, test_seen, test_unseen };

inline std::string_view split_name(Split s) {
    switch (s) {
        case Split::train: return "train";
        case Split::test_seen: return "test_seen";
        case Split::test_unseen: return "test_unseen";
    }
    return "?";
}

inline std::optional<Split> split_from_name(std::string_view s) {
    for (Split v : {Split::train, Split::test_seen, Split::test_unseen}) {
        if (s == split_name(v)) return v;
    }
    return std::nullopt;
}

inline constexpr std::string_view kImageProtocol = "image_based";
inline constexpr std::string_view kVideoProtocol = "video_based";

struct NegativeSeries {
    std::string id;
    std::map<int, std::string> mask_paths; // frame index -> path
};

struct DroppedSample {
    std::string slot_id;
    int frame_index = 0;
    std::string reason;
};

/// One <video, reference> instance. Media paths are opaque; this toolkit
/// never decodes them.
struct InstanceRecord {
    std::string instance_id;
    std::string video_id;
    std::string reference_text;
    std::string object_category;
    Split split = Split::train;
    std::optional<int> key_frame_index; // absent: fall back to max-area frame
    bool key_frame_heuristic = false;
    int frame_count = 10;
    std::string video_path;
    std::string audio_path;
    std::map<int, std::string> gt_mask_paths;  // frame index -> path
    std::vector<NegativeSeries> negatives;
    bool partial = false;
    std::vector<DroppedSample> dropped;
};

struct SampleRecord {
    std::string sample_id;
    std::string instance_id;
    std::string slot_id;
    std::string series_id; // set for video-protocol members
    int frame_index = 0;
    std::string mask_path; // relative to the manifest directory
    QualityLabel label;
    PerturbationSpec spec;
    bool image_based = false;
    bool video_based = false;
};

struct BuildConfig {
    bool image_protocol = true;
    bool video_protocol = false;
    IoUTarget hard = kHardTarget;
    IoUTarget medium = kMediumTarget;
    LabelThresholds thresholds;
    int max_negatives = 3;
    std::uint64_t global_seed = 0;
    int jobs = 1;                        // execution detail; not serialized
    std::vector<std::string> overrides;  // flags changed from their defaults
};

struct CompositionRow {
    long total = 0;
    long perfect = 0;
    long cutout = 0;
    long dilate = 0;
    long erode = 0;
    long merge = 0;
    long full_neg = 0;
    long instances = 0;
    long videos = 0;
    // "<type>_<difficulty>" -> count, for the types that carry one.
    std::map<std::string, long> difficulty;

    long type_sum() const { return perfect + cutout + dilate + erode + merge + full_neg; }

    friend bool operator==(const CompositionRow&, const CompositionRow&) = default;
};

// protocol name -> split name -> row
using Composition = std::map<std::string, std::map<std::string, CompositionRow>>;

struct Manifest {
    int schema_version = 1;
    BuildConfig config;
    std::vector<InstanceRecord> instances;
    std::vector<SampleRecord> samples;
    Composition composition;
};

// ---------------------------------------------------------------------------
// JSON mapping. nlohmann's default object is key-sorted, which gives the
// canonical ordering the round-trip contract relies on.

inline json to_json(const IoUTarget& t) { return json{{"hi", t.hi}, {"lo", t.lo}}; }

inline IoUTarget iou_target_from_json(const json& j) {
    return IoUTarget{j.at("lo").get<double>(), j.at("hi").get<double>()};
}

inline json to_json(const QualityLabel& l) {
    return json{{"action", action_name(l.action)},
                {"difficulty", difficulty_name(l.difficulty)},
                {"iou", l.iou},
                {"mask_type", mask_type_name(l.mask_type)}};
}

inline QualityLabel quality_label_from_json(const json& j) {
    QualityLabel l;
    l.iou = j.at("iou").get<double>();
    const auto type = mask_type_from_name(j.at("mask_type").get<std::string>());
    const auto action = action_from_name(j.at("action").get<std::string>());
    const auto diff = difficulty_from_name(j.at("difficulty").get<std::string>());
    if (!type || !action || !diff) throw Error("invalid quality label in manifest");
    l.mask_type = *type;
    l.action = *action;
    l.difficulty = *diff;
    return l;
}

inline json to_json(const PerturbationSpec& s) {
    json j{{"kind", mask_type_name(s.kind)}, {"fine_tune_flips", s.fine_tune_flips}};
    if (s.element) {
        j["element"] = json{{"half_height", s.element->half_height},
                            {"half_width", s.element->half_width},
                            {"shape", element_shape_name(s.element->shape)}};
    }
    if (s.seed_point) j["seed_point"] = json::array({s.seed_point->x, s.seed_point->y});
    if (s.negative_id) j["negative_id"] = *s.negative_id;
    return j;
}

inline PerturbationSpec perturbation_spec_from_json(const json& j) {
    PerturbationSpec s;
    const auto kind = mask_type_from_name(j.at("kind").get<std::string>());
    if (!kind) throw Error("invalid perturbation kind in manifest");
    s.kind = *kind;
    s.fine_tune_flips = j.value("fine_tune_flips", 0);
    if (j.contains("element")) {
        const json& e = j.at("element");
        const auto shape = element_shape_from_name(e.at("shape").get<std::string>());
        if (!shape) throw Error("invalid element shape in manifest");
        s.element = StructuringElement{*shape, e.at("half_width").get<int>(),
                                       e.at("half_height").get<int>()};
    }
    if (j.contains("seed_point")) {
        s.seed_point = Pixel{j.at("seed_point").at(0).get<int>(),
                             j.at("seed_point").at(1).get<int>()};
    }
    if (j.contains("negative_id")) s.negative_id = j.at("negative_id").get<std::string>();
    return s;
}

inline json frame_path_map_to_json(const std::map<int, std::string>& m) {
    json j = json::object();
    for (const auto& [frame, path] : m) j[std::to_string(frame)] = path;
    return j;
}

inline std::map<int, std::string> frame_path_map_from_json(const json& j) {
    std::map<int, std::string> m;
    for (const auto& [key, value] : j.items()) m[std::stoi(key)] = value.get<std::string>();
    return m;
}

inline json to_json(const InstanceRecord& r) {
    json j{{"audio_path", r.audio_path},
           {"frame_count", r.frame_count},
           {"gt_mask_paths", frame_path_map_to_json(r.gt_mask_paths)},
           {"instance_id", r.instance_id},
           {"object_category", r.object_category},
           {"reference_text", r.reference_text},
           {"split", split_name(r.split)},
           {"video_id", r.video_id},
           {"video_path", r.video_path}};
    if (r.key_frame_index) j["key_frame_index"] = *r.key_frame_index;
    if (r.key_frame_heuristic) j["key_frame_heuristic"] = true;
    if (r.partial) j["partial"] = true;
    if (!r.dropped.empty()) {
        json arr = json::array();
        for (const DroppedSample& d : r.dropped) {
            arr.push_back(json{{"frame_index", d.frame_index},
                               {"reason", d.reason},
                               {"slot_id", d.slot_id}});
        }
        j["dropped"] = arr;
    }
    json negs = json::array();
    for (const NegativeSeries& n : r.negatives) {
        negs.push_back(json{{"id", n.id}, {"mask_paths", frame_path_map_to_json(n.mask_paths)}});
    }
    j["negative_mask_paths"] = negs;
    return j;
}

inline InstanceRecord instance_from_json(const json& j) {
    InstanceRecord r;
    r.instance_id = j.at("instance_id").get<std::string>();
    r.video_id = j.value("video_id", r.instance_id);
    r.reference_text = j.value("reference_text", std::string{});
    r.object_category = j.value("object_category", std::string{});
    const auto split = split_from_name(j.value("split", "train"));
    if (!split) throw Error("invalid split for instance " + r.instance_id);
    r.split = *split;
    if (j.contains("key_frame_index")) r.key_frame_index = j.at("key_frame_index").get<int>();
    r.key_frame_heuristic = j.value("key_frame_heuristic", false);
    r.frame_count = j.value("frame_count", 10);
    r.video_path = j.value("video_path", std::string{});
    r.audio_path = j.value("audio_path", std::string{});
    if (j.contains("gt_mask_paths")) {
        r.gt_mask_paths = frame_path_map_from_json(j.at("gt_mask_paths"));
    }
    if (j.contains("negative_mask_paths")) {
        for (const json& n : j.at("negative_mask_paths")) {
            NegativeSeries series;
            series.id = n.at("id").get<std::string>();
            series.mask_paths = frame_path_map_from_json(n.at("mask_paths"));
            r.negatives.push_back(std::move(series));
        }
    }
    r.partial = j.value("partial", false);
    if (j.contains("dropped")) {
        for (const json& d : j.at("dropped")) {
            r.dropped.push_back({d.at("slot_id").get<std::string>(),
                                 d.at("frame_index").get<int>(),
                                 d.at("reason").get<std::string>()});
        }
    }
    return r;
}

inline json to_json(const SampleRecord& s) {
    json protocols = json::array();
    if (s.image_based) protocols.push_back(std::string(kImageProtocol));
    if (s.video_based) protocols.push_back(std::string(kVideoProtocol));
    json j{{"frame_index", s.frame_index},
           {"instance_id", s.instance_id},
           {"label", to_json(s.label)},
           {"mask_path", s.mask_path},
           {"protocols", protocols},
           {"sample_id", s.sample_id},
           {"slot_id", s.slot_id},
           {"spec", to_json(s.spec)}};
    if (!s.series_id.empty()) j["series_id"] = s.series_id;
    return j;
}

inline SampleRecord sample_from_json(const json& j) {
    SampleRecord s;
    s.sample_id = j.at("sample_id").get<std::string>();
    s.instance_id = j.at("instance_id").get<std::string>();
    s.slot_id = j.at("slot_id").get<std::string>();
    s.series_id = j.value("series_id", std::string{});
    s.frame_index = j.at("frame_index").get<int>();
    s.mask_path = j.at("mask_path").get<std::string>();
    s.label = quality_label_from_json(j.at("label"));
    s.spec = perturbation_spec_from_json(j.at("spec"));
    for (const json& p : j.at("protocols")) {
        const std::string name = p.get<std::string>();
        if (name == kImageProtocol) s.image_based = true;
        if (name == kVideoProtocol) s.video_based = true;
    }
    return s;
}

inline json to_json(const BuildConfig& c) {
    json protocols = json::array();
    if (c.image_protocol) protocols.push_back(std::string(kImageProtocol));
    if (c.video_protocol) protocols.push_back(std::string(kVideoProtocol));
    return json{{"global_seed", c.global_seed},
                {"hard_range", to_json(c.hard)},
                {"max_negatives", c.max_negatives},
                {"medium_range", to_json(c.medium)},
                {"merge_thresholds",
                 json{{"major_min", c.thresholds.merge_major_min},
                      {"minor_min", c.thresholds.merge_minor_min}}},
                {"overrides", c.overrides},
                {"protocols", protocols}};
}

inline BuildConfig build_config_from_json(const json& j) {
    BuildConfig c;
    c.image_protocol = false;
    c.video_protocol = false;
    for (const json& p : j.at("protocols")) {
        const std::string name = p.get<std::string>();
        if (name == kImageProtocol) c.image_protocol = true;
        if (name == kVideoProtocol) c.video_protocol = true;
    }
    c.hard = iou_target_from_json(j.at("hard_range"));
    c.medium = iou_target_from_json(j.at("medium_range"));
    c.thresholds.geometric_minor_min = c.hard.lo;
    c.thresholds.merge_minor_min = j.at("merge_thresholds").at("minor_min").get<double>();
    c.thresholds.merge_major_min = j.at("merge_thresholds").at("major_min").get<double>();
    c.max_negatives = j.at("max_negatives").get<int>();
    c.global_seed = j.at("global_seed").get<std::uint64_t>();
    c.overrides = j.value("overrides", std::vector<std::string>{});
    return c;
}

inline json to_json(const CompositionRow& r) {
    json difficulty = json::object();
    for (const auto& [key, count] : r.difficulty) difficulty[key] = count;
    return json{{"cutout", r.cutout},   {"difficulty", difficulty}, {"dilate", r.dilate},
                {"erode", r.erode},     {"full_neg", r.full_neg},   {"instances", r.instances},
                {"merge", r.merge},     {"perfect", r.perfect},     {"total", r.total},
                {"videos", r.videos}};
}

inline CompositionRow composition_row_from_json(const json& j) {
    CompositionRow r;
    r.total = j.at("total").get<long>();
    r.perfect = j.at("perfect").get<long>();
    r.cutout = j.at("cutout").get<long>();
    r.dilate = j.at("dilate").get<long>();
    r.erode = j.at("erode").get<long>();
    r.merge = j.at("merge").get<long>();
    r.full_neg = j.at("full_neg").get<long>();
    r.instances = j.value("instances", 0L);
    r.videos = j.value("videos", 0L);
    if (j.contains("difficulty")) {
        for (const auto& [key, count] : j.at("difficulty").items()) {
            r.difficulty[key] = count.get<long>();
        }
    }
    return r;
}

inline json to_json(const Composition& c) {
    json j = json::object();
    for (const auto& [protocol, splits] : c) {
        json s = json::object();
        for (const auto& [split, row] : splits) s[split] = to_json(row);
        j[protocol] = s;
    }
    return j;
}

inline Composition composition_from_json(const json& j) {
    Composition c;
    for (const auto& [protocol, splits] : j.items()) {
        for (const auto& [split, row] : splits.items()) {
            c[protocol][split] = composition_row_from_json(row);
        }
    }
    return c;
}

inline json to_json(const Manifest& m) {
    json instances = json::array();
    for (const InstanceRecord& r : m.instances) instances.push_back(to_json(r));
    json samples = json::array();
    for (const SampleRecord& s : m.samples) samples.push_back(to_json(s));
    return json{{"composition", to_json(m.composition)},
                {"config", to_json(m.config)},
                {"global_seed", m.config.global_seed},
                {"instances", instances},
                {"samples", samples},
                {"schema_version", m.schema_version}};
}

inline Manifest manifest_from_json(const json& j) {
    Manifest m;
    m.schema_version = j.at("schema_version").get<int>();
    m.config = build_config_from_json(j.at("config"));
    for (const json& r : j.at("instances")) m.instances.push_back(instance_from_json(r));
    for (const json& s : j.at("samples")) m.samples.push_back(sample_from_json(s));
    m.composition = composition_from_json(j.at("composition"));
    return m;
}

inline std::string manifest_to_string(const Manifest& m) { return to_json(m).dump(2) + "\n"; }

inline void write_text_file(const std::filesystem::path& path, std::string_view content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot open for writing: " + path.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw Error("write failed: " + path.string());
}

inline std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open: " + path.string());
    return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void save_manifest(const Manifest& m, const std::filesystem::path& path) {
    write_text_file(path, manifest_to_string(m));
}

inline Manifest load_manifest(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw Error("manifest parse error in " + path.string() + ": " + e.what());
    }
    try {
        return manifest_from_json(j);
    } catch (const json::exception& e) {
        throw Error("manifest schema error in " + path.string() + ": " + e.what());
    }
}

/// Instances input file: {"instances": [...]}. Relative media and mask
/// paths are resolved against the file's directory.
inline std::vector<InstanceRecord> load_instances_file(const std::filesystem::path& path) {
    json j;
    try {
        j = json::parse(read_text_file(path));
    } catch (const json::exception& e) {
        throw Error("instances parse error in " + path.string() + ": " + e.what());
    }
    std::vector<InstanceRecord> out;
    try {
        for (const json& r : j.at("instances")) out.push_back(instance_from_json(r));
    } catch (const json::exception& e) {
        throw Error("instances schema error in " + path.string() + ": " + e.what());
    }
    const std::filesystem::path base = path.parent_path();
    auto resolve = [&](std::string& p) {
        if (p.empty()) return;
        std::filesystem::path fp(p);
        if (fp.is_relative()) p = (base / fp).lexically_normal().string();
    };
    for (InstanceRecord& r : out) {
        resolve(r.video_path);
        resolve(r.audio_path);
        for (auto& [frame, p] : r.gt_mask_paths) resolve(p);
        for (NegativeSeries& n : r.negatives) {
            for (auto& [frame, p] : n.mask_paths) resolve(p);
        }
    }
    return out;
}

} // namespace maskaudit
