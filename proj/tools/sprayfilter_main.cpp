// Command line front end for the spray filtering pipeline. Every subcommand
// takes one JSON config file; unknown keys are rejected so a typo can't
// silently fall back to a default. Exit codes: 0 success, 2 bad config,
// 3 bad input data, 4 internal error.

#include <algorithm>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "sprayfilter/sprayfilter.hpp"

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using namespace sprayfilter;

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitInternal = 4;

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

json load_config(const fs::path& path) {
    try {
        return json::parse(detail::read_file_bytes(path));
    } catch (const IoError& e) {
        throw ConfigError(e.what());
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": bad JSON: " + e.what());
    }
}

void require_object(const json& j, const char* ctx) {
    if (!j.is_object()) {
        throw ConfigError(std::string(ctx) + ": expected a JSON object");
    }
}

void reject_unknown_keys(const json& j, std::initializer_list<std::string_view> allowed,
                         const char* ctx) {
    require_object(j, ctx);
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
            throw ConfigError(std::string(ctx) + ": unknown key \"" + it.key() + "\"");
        }
    }
}

template <typename T>
T get_as(const json& j, const char* key, const char* ctx) {
    if (!j.contains(key)) {
        throw ConfigError(std::string(ctx) + ": missing key \"" + key + "\"");
    }
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string(ctx) + ": key \"" + key + "\" has the wrong type");
    }
}

template <typename T>
T get_or(const json& j, const char* key, T fallback, const char* ctx) {
    if (!j.contains(key)) {
        return fallback;
    }
    return get_as<T>(j, key, ctx);
}

std::size_t resolve_workers(const json& j, const char* ctx) {
    std::size_t workers = get_or<std::size_t>(j, "workers", 1, ctx);
    if (const char* env = std::getenv("SPRAYFILTER_WORKERS")) {
        try {
            workers = static_cast<std::size_t>(std::stoul(env));
        } catch (const std::exception&) {
            throw ConfigError(std::string("SPRAYFILTER_WORKERS is not a number: ") + env);
        }
    }
    if (workers < 1) {
        throw ConfigError(std::string(ctx) + ": workers must be >= 1");
    }
    return workers;
}

// ---- config section parsers; each also re-emits the resolved section ----

FilterMethod parse_filter_method(const std::string& name, const char* ctx) {
    if (name == "none") return FilterMethod::None;
    if (name == "threshold") return FilterMethod::Threshold;
    if (name == "dsor") return FilterMethod::Dsor;
    if (name == "dror") return FilterMethod::Dror;
    throw ConfigError(std::string(ctx) +
                      ": method must be one of none, threshold, dsor, dror; got \"" + name + "\"");
}

FilterStageConfig parse_filter_section(const json& j) {
    reject_unknown_keys(j, {"method", "tau", "calibrate_tpr", "dsor", "dror"}, "filter");
    FilterStageConfig cfg;
    cfg.method = parse_filter_method(get_as<std::string>(j, "method", "filter"), "filter");
    if (j.contains("calibrate_tpr")) {
        cfg.calibrate_tpr = get_as<double>(j, "calibrate_tpr", "filter");
        if (!(*cfg.calibrate_tpr > 0.0) || !(*cfg.calibrate_tpr <= 1.0)) {
            throw ConfigError("filter: calibrate_tpr must be in (0, 1]");
        }
    }
    cfg.tau = get_or<float>(j, "tau", 0.0f, "filter");
    if (cfg.method == FilterMethod::Threshold && !j.contains("tau") &&
        !j.contains("calibrate_tpr")) {
        throw ConfigError("filter: threshold method needs tau or calibrate_tpr");
    }
    if (j.contains("dsor")) {
        const json& d = j.at("dsor");
        reject_unknown_keys(d, {"k", "s", "m"}, "filter.dsor");
        cfg.dsor.k = get_or<std::size_t>(d, "k", cfg.dsor.k, "filter.dsor");
        cfg.dsor.s = get_or<double>(d, "s", cfg.dsor.s, "filter.dsor");
        cfg.dsor.m = get_or<double>(d, "m", cfg.dsor.m, "filter.dsor");
    }
    if (j.contains("dror")) {
        const json& d = j.at("dror");
        reject_unknown_keys(d, {"alpha", "min_radius", "min_neighbors"}, "filter.dror");
        cfg.dror.alpha = get_or<double>(d, "alpha", cfg.dror.alpha, "filter.dror");
        cfg.dror.min_radius = get_or<double>(d, "min_radius", cfg.dror.min_radius, "filter.dror");
        cfg.dror.min_neighbors =
            get_or<std::size_t>(d, "min_neighbors", cfg.dror.min_neighbors, "filter.dror");
    }
    return cfg;
}

ordered_json filter_section_json(const FilterStageConfig& cfg, std::optional<float> resolved_tau) {
    ordered_json out;
    out["method"] = filter_method_name(cfg.method);
    if (cfg.calibrate_tpr) {
        out["calibrate_tpr"] = *cfg.calibrate_tpr;
    }
    if (cfg.method == FilterMethod::Threshold) {
        out["tau"] = resolved_tau ? *resolved_tau : cfg.tau;
    }
    if (cfg.method == FilterMethod::Dsor) {
        out["dsor"] = {{"k", cfg.dsor.k}, {"s", cfg.dsor.s}, {"m", cfg.dsor.m}};
    }
    if (cfg.method == FilterMethod::Dror) {
        out["dror"] = {{"alpha", cfg.dror.alpha},
                       {"min_radius", cfg.dror.min_radius},
                       {"min_neighbors", cfg.dror.min_neighbors}};
    }
    return out;
}

ClusterParams parse_detector_section(const json& j) {
    reject_unknown_keys(j, {"link_radius", "min_points", "ground_z", "max_w", "max_l", "max_h"},
                        "detector");
    ClusterParams p;
    p.link_radius = get_or<double>(j, "link_radius", p.link_radius, "detector");
    p.min_points = get_or<std::size_t>(j, "min_points", p.min_points, "detector");
    p.ground_z = get_or<double>(j, "ground_z", p.ground_z, "detector");
    p.max_w = get_or<double>(j, "max_w", p.max_w, "detector");
    p.max_l = get_or<double>(j, "max_l", p.max_l, "detector");
    p.max_h = get_or<double>(j, "max_h", p.max_h, "detector");
    return p;
}

ordered_json detector_section_json(const ClusterParams& p) {
    return ordered_json{{"link_radius", p.link_radius}, {"min_points", p.min_points},
                        {"ground_z", p.ground_z},       {"max_w", p.max_w},
                        {"max_l", p.max_l},             {"max_h", p.max_h}};
}

GateConfig parse_gate_section(const json& j, bool* enabled) {
    reject_unknown_keys(j, {"enabled", "gamma", "require_count", "ignore_target_z"}, "gate");
    if (enabled != nullptr) {
        *enabled = get_or<bool>(j, "enabled", true, "gate");
    }
    GateConfig g;
    g.gamma = get_or<double>(j, "gamma", g.gamma, "gate");
    g.require_count = get_or<std::size_t>(j, "require_count", g.require_count, "gate");
    g.ignore_target_z = get_or<bool>(j, "ignore_target_z", g.ignore_target_z, "gate");
    try {
        validate_gate_config(g);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return g;
}

ordered_json gate_section_json(const GateConfig& g, std::optional<bool> enabled) {
    ordered_json out;
    if (enabled) {
        out["enabled"] = *enabled;
    }
    out["gamma"] = g.gamma;
    out["require_count"] = g.require_count;
    out["ignore_target_z"] = g.ignore_target_z;
    return out;
}

EvalConfig parse_eval_section(const json& j) {
    reject_unknown_keys(j, {"iou_threshold", "range_bins", "interpolation"}, "eval");
    EvalConfig cfg;
    cfg.iou_threshold = get_or<double>(j, "iou_threshold", cfg.iou_threshold, "eval");
    if (j.contains("range_bins")) {
        if (!j.at("range_bins").is_array()) {
            throw ConfigError("eval: range_bins must be an array of [lo, hi] pairs");
        }
        cfg.range_bins.clear();
        for (const json& pair : j.at("range_bins")) {
            if (!pair.is_array() || pair.size() != 2) {
                throw ConfigError("eval: each range bin must be a [lo, hi] pair");
            }
            RangeBin bin;
            try {
                bin.lo = pair.at(0).get<double>();
                if (pair.at(1).is_string() && pair.at(1).get<std::string>() == "inf") {
                    bin.hi = std::numeric_limits<double>::infinity();
                } else {
                    bin.hi = pair.at(1).get<double>();
                }
            } catch (const json::exception&) {
                throw ConfigError("eval: range bin bounds must be numbers or \"inf\"");
            }
            cfg.range_bins.push_back(bin);
        }
    }
    const std::string interp = get_or<std::string>(j, "interpolation", "all", "eval");
    if (interp == "all") {
        cfg.interpolation = Interpolation::AllPoint;
    } else if (interp == "40") {
        cfg.interpolation = Interpolation::FortyPoint;
    } else {
        throw ConfigError("eval: interpolation must be \"all\" or \"40\"");
    }
    try {
        validate_eval_config(cfg);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

ordered_json eval_section_json(const EvalConfig& cfg) {
    ordered_json bins = ordered_json::array();
    for (const RangeBin& b : cfg.range_bins) {
        ordered_json pair = ordered_json::array();
        pair.push_back(b.lo);
        if (std::isinf(b.hi)) {
            pair.push_back("inf");
        } else {
            pair.push_back(b.hi);
        }
        bins.push_back(std::move(pair));
    }
    return ordered_json{
        {"iou_threshold", cfg.iou_threshold},
        {"range_bins", std::move(bins)},
        {"interpolation", cfg.interpolation == Interpolation::AllPoint ? "all" : "40"}};
}

SceneConfig parse_scene_section(const json& j) {
    reject_unknown_keys(j,
                        {"lead_distance", "speed_kmh", "spray_points", "vehicle_surface_points",
                         "ground_points", "ground_noise_sigma", "radar_targets_on_vehicle",
                         "clutter_target_prob", "score_separation"},
                        "scene");
    SceneConfig cfg;
    cfg.lead_distance = get_or<double>(j, "lead_distance", cfg.lead_distance, "scene");
    if (j.contains("speed_kmh")) {
        try {
            cfg.speed = speed_class_from_kmh(get_as<int>(j, "speed_kmh", "scene"));
        } catch (const std::invalid_argument& e) {
            throw ConfigError(std::string("scene: ") + e.what());
        }
    }
    cfg.spray_points = get_or<std::size_t>(j, "spray_points", cfg.spray_points, "scene");
    cfg.vehicle_surface_points =
        get_or<std::size_t>(j, "vehicle_surface_points", cfg.vehicle_surface_points, "scene");
    cfg.ground_points = get_or<std::size_t>(j, "ground_points", cfg.ground_points, "scene");
    cfg.ground_noise_sigma =
        get_or<double>(j, "ground_noise_sigma", cfg.ground_noise_sigma, "scene");
    cfg.radar_targets_on_vehicle = get_or<std::size_t>(j, "radar_targets_on_vehicle",
                                                       cfg.radar_targets_on_vehicle, "scene");
    cfg.clutter_target_prob =
        get_or<double>(j, "clutter_target_prob", cfg.clutter_target_prob, "scene");
    cfg.score_separation = get_or<double>(j, "score_separation", cfg.score_separation, "scene");
    try {
        validate_scene_config(cfg);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    return cfg;
}

ordered_json scene_section_json(const SceneConfig& cfg) {
    return ordered_json{{"lead_distance", cfg.lead_distance},
                        {"speed_kmh", static_cast<int>(speed_kmh(cfg.speed))},
                        {"spray_points", cfg.spray_points},
                        {"vehicle_surface_points", cfg.vehicle_surface_points},
                        {"ground_points", cfg.ground_points},
                        {"ground_noise_sigma", cfg.ground_noise_sigma},
                        {"radar_targets_on_vehicle", cfg.radar_targets_on_vehicle},
                        {"clutter_target_prob", cfg.clutter_target_prob},
                        {"score_separation", cfg.score_separation}};
}

fs::path require_out_dir(const json& j, const char* ctx) {
    const auto dir = fs::path(get_as<std::string>(j, "out_dir", ctx));
    fs::create_directories(dir);
    return dir;
}

void write_resolved_config(const fs::path& out_dir, const ordered_json& resolved) {
    detail::write_file_atomic(out_dir / "resolved_config.json", resolved.dump(2) + "\n");
}

std::vector<FrameBundle> load_frames_for(const json& j, const char* ctx) {
    const auto manifest_path = fs::path(get_as<std::string>(j, "manifest", ctx));
    const DatasetManifest manifest = load_manifest(manifest_path);
    return load_all_frames(manifest);
}

// ---- subcommands ----

int run_simulate(const fs::path& config_path) {
    const json j = load_config(config_path);
    reject_unknown_keys(j, {"out_dir", "frames", "base_seed", "scene"}, "simulate");
    const auto frame_count = get_as<std::size_t>(j, "frames", "simulate");
    const auto base_seed = get_or<std::uint64_t>(j, "base_seed", 1, "simulate");
    const SceneConfig scene =
        j.contains("scene") ? parse_scene_section(j.at("scene")) : SceneConfig{};
    const fs::path out_dir = require_out_dir(j, "simulate");

    generate_dataset(scene, frame_count, base_seed, out_dir);

    ordered_json resolved;
    resolved["frames"] = frame_count;
    resolved["base_seed"] = base_seed;
    resolved["scene"] = scene_section_json(scene);
    write_resolved_config(out_dir, resolved);
    std::cout << "wrote " << frame_count << " frames to " << out_dir.string() << "\n";
    return 0;
}

int run_calibrate(const fs::path& config_path) {
    const json j = load_config(config_path);
    reject_unknown_keys(j, {"manifest", "out_dir", "tpr"}, "calibrate");
    const double tpr = get_as<double>(j, "tpr", "calibrate");
    if (!(tpr > 0.0) || !(tpr <= 1.0)) {
        throw ConfigError("calibrate: tpr must be in (0, 1]");
    }
    const std::vector<FrameBundle> frames = load_frames_for(j, "calibrate");
    const ScoreArray pool = pool_valid_scores(frames);
    const float tau = calibrate_threshold(pool, tpr);

    const fs::path out_dir = require_out_dir(j, "calibrate");
    ordered_json resolved;
    resolved["tpr"] = tpr;
    resolved["tau"] = tau;
    resolved["valid_score_count"] = pool.size();
    detail::write_file_atomic(out_dir / "calibration.json", resolved.dump(2) + "\n");
    std::cout << "tau " << float_to_text(tau) << " keeps at least " << double_to_text(tpr)
              << " of " << pool.size() << " valid scores\n";
    return 0;
}

int run_filter(const fs::path& config_path) {
    const json j = load_config(config_path);
    reject_unknown_keys(j, {"manifest", "out_dir", "filter", "workers"}, "filter");
    if (!j.contains("filter")) {
        throw ConfigError("filter: missing \"filter\" section");
    }
    const FilterStageConfig cfg = parse_filter_section(j.at("filter"));
    const std::size_t workers = resolve_workers(j, "filter");
    const std::vector<FrameBundle> frames = load_frames_for(j, "filter");
    const fs::path out_dir = require_out_dir(j, "filter");
    fs::create_directories(out_dir / "masks");
    fs::create_directories(out_dir / "filtered");

    std::optional<float> tau;
    if (cfg.method == FilterMethod::Threshold) {
        tau = cfg.calibrate_tpr ? calibrate_threshold(pool_valid_scores(frames), *cfg.calibrate_tpr)
                                : cfg.tau;
    }
    struct Row {
        std::string frame_id;
        std::size_t kept = 0;
        std::size_t total = 0;
        FilterMetrics metrics;
        bool has_metrics = false;
    };
    std::vector<Row> rows(frames.size());
    detail::for_each_frame(frames.size(), workers, [&](std::size_t i) {
        const FrameBundle& frame = frames[i];
        const FilterResult res = apply_filter_stage(frame, cfg, tau);
        write_mask(out_dir / "masks" / (frame.frame_id + ".mask"), res.keep_mask);
        write_cloud_bin(out_dir / "filtered" / (frame.frame_id + ".bin"), res.filtered);
        Row& row = rows[i];
        row.frame_id = frame.frame_id;
        row.kept = res.kept_count;
        row.total = frame.cloud.size();
        if (frame.labels) {
            row.metrics = compute_filter_metrics(res.keep_mask, *frame.labels);
            row.has_metrics = true;
        }
    });

    std::string csv = "frame_id,kept,total,valid_tpr,noise_recall,noise_precision\n";
    const auto cell = [](const std::optional<double>& v) {
        return v ? double_to_text(*v) : std::string("undefined");
    };
    for (const Row& row : rows) {
        csv += row.frame_id;
        csv += ',';
        csv += std::to_string(row.kept);
        csv += ',';
        csv += std::to_string(row.total);
        if (row.has_metrics) {
            csv += ',';
            csv += cell(row.metrics.valid_tpr);
            csv += ',';
            csv += cell(row.metrics.noise_recall);
            csv += ',';
            csv += cell(row.metrics.noise_precision);
        } else {
            csv += ",,,";
        }
        csv += '\n';
    }
    detail::write_file_atomic(out_dir / "metrics.csv", csv);

    ordered_json resolved;
    resolved["manifest"] = get_as<std::string>(j, "manifest", "filter");
    resolved["filter"] = filter_section_json(cfg, tau);
    write_resolved_config(out_dir, resolved);
    std::size_t kept = 0;
    std::size_t total = 0;
    for (const Row& row : rows) {
        kept += row.kept;
        total += row.total;
    }
    std::cout << "kept " << kept << " of " << total << " points across " << frames.size()
              << " frames\n";
    return 0;
}

int run_detect(const fs::path& config_path) {
    const json j = load_config(config_path);
    reject_unknown_keys(j, {"manifest", "out_dir", "filter", "detector", "workers"}, "detect");
    FilterStageConfig filter;  // defaults to pass-through
    if (j.contains("filter")) {
        filter = parse_filter_section(j.at("filter"));
    }
    const ClusterParams detector =
        j.contains("detector") ? parse_detector_section(j.at("detector")) : ClusterParams{};
    const std::size_t workers = resolve_workers(j, "detect");
    const std::vector<FrameBundle> frames = load_frames_for(j, "detect");
    const fs::path out_dir = require_out_dir(j, "detect");

    std::optional<float> tau;
    if (filter.method == FilterMethod::Threshold) {
        tau = filter.calibrate_tpr
                  ? calibrate_threshold(pool_valid_scores(frames), *filter.calibrate_tpr)
                  : filter.tau;
    }
    std::vector<FrameDetections> out(frames.size());
    detail::for_each_frame(frames.size(), workers, [&](std::size_t i) {
        const FilterResult res = apply_filter_stage(frames[i], filter, tau);
        out[i] = {frames[i].frame_id, cluster_detect(res.filtered, detector)};
    });
    write_detections_jsonl(out_dir / "detections.jsonl", out);

    ordered_json resolved;
    resolved["manifest"] = get_as<std::string>(j, "manifest", "detect");
    resolved["filter"] = filter_section_json(filter, tau);
    resolved["detector"] = detector_section_json(detector);
    write_resolved_config(out_dir, resolved);
    std::size_t count = 0;
    for (const FrameDetections& f : out) {
        count += f.detections.size();
    }
    std::cout << count << " detections across " << frames.size() << " frames\n";
    return 0;
}

int run_gate(const fs::path& config_path) {
    const json j = load_config(config_path);
    reject_unknown_keys(j, {"manifest", "detections", "out_dir", "gate"}, "gate");
    const GateConfig gate =
        j.contains("gate") ? parse_gate_section(j.at("gate"), nullptr) : GateConfig{};
    const auto det_path = fs::path(get_as<std::string>(j, "detections", "gate"));
    const std::vector<FrameBundle> frames = load_frames_for(j, "gate");
    const fs::path out_dir = require_out_dir(j, "gate");

    const std::vector<FrameDetections> groups = read_detections_jsonl(det_path);
    std::unordered_map<std::string, const FrameDetections*> by_id;
    for (const FrameDetections& g : groups) {
        by_id[g.frame_id] = &g;
    }
    for (const FrameDetections& g : groups) {
        const bool known = std::any_of(frames.begin(), frames.end(), [&](const FrameBundle& f) {
            return f.frame_id == g.frame_id;
        });
        if (!known) {
            throw IoError(det_path.string() + ": detections for frame " + g.frame_id +
                          " which is not in the manifest");
        }
    }

    std::vector<FrameDetections> gated;
    std::string csv = "frame_id,before,after\n";
    for (const FrameBundle& frame : frames) {
        const auto it = by_id.find(frame.frame_id);
        const std::vector<Detection> before =
            it == by_id.end() ? std::vector<Detection>{} : it->second->detections;
        if (!frame.radar) {
            throw IoError("gate: frame " + frame.frame_id + " has no radar targets in the manifest");
        }
        std::vector<Detection> after = gate_detections(before, *frame.radar, gate);
        csv += frame.frame_id;
        csv += ',';
        csv += std::to_string(before.size());
        csv += ',';
        csv += std::to_string(after.size());
        csv += '\n';
        gated.push_back({frame.frame_id, std::move(after)});
    }
    write_detections_jsonl(out_dir / "gated.jsonl", gated);
    detail::write_file_atomic(out_dir / "gate_stats.csv", csv);

    ordered_json resolved;
    resolved["manifest"] = get_as<std::string>(j, "manifest", "gate");
    resolved["detections"] = det_path.string();
    resolved["gate"] = gate_section_json(gate, std::nullopt);
    write_resolved_config(out_dir, resolved);
    std::size_t before_total = 0;
    std::size_t after_total = 0;
    for (const FrameDetections& g : groups) {
        before_total += g.detections.size();
    }
    for (const FrameDetections& g : gated) {
        after_total += g.detections.size();
    }
    std::cout << "kept " << after_total << " of " << before_total << " detections\n";
    return 0;
}

PipelineConfig parse_pipeline_config(const json& j, const char* ctx) {
    PipelineConfig cfg;
    if (j.contains("filter")) {
        cfg.filter = parse_filter_section(j.at("filter"));
    }
    if (j.contains("detector")) {
        cfg.detector = parse_detector_section(j.at("detector"));
    }
    if (j.contains("gate")) {
        cfg.gate = parse_gate_section(j.at("gate"), &cfg.gate_enabled);
    }
    if (j.contains("eval")) {
        cfg.eval = parse_eval_section(j.at("eval"));
    }
    cfg.workers = resolve_workers(j, ctx);
    return cfg;
}

ordered_json pipeline_config_json(const json& j, const PipelineConfig& cfg,
                                  std::optional<float> tau, const char* ctx) {
    ordered_json resolved;
    resolved["manifest"] = get_as<std::string>(j, "manifest", ctx);
    resolved["filter"] = filter_section_json(cfg.filter, tau);
    resolved["detector"] = detector_section_json(cfg.detector);
    resolved["gate"] = gate_section_json(cfg.gate, cfg.gate_enabled);
    resolved["eval"] = eval_section_json(cfg.eval);
    return resolved;
}

int run_pipeline_cmd(const fs::path& config_path) {
    const json j = load_config(config_path);
    reject_unknown_keys(
        j, {"manifest", "out_dir", "filter", "detector", "gate", "eval", "workers",
            "compare_variants"},
        "pipeline");
    PipelineConfig cfg = parse_pipeline_config(j, "pipeline");
    const bool compare = get_or<bool>(j, "compare_variants", false, "pipeline");
    const std::vector<FrameBundle> frames = load_frames_for(j, "pipeline");
    const fs::path out_dir = require_out_dir(j, "pipeline");

    std::vector<std::pair<std::string, EvalReport>> table;
    std::optional<float> tau;
    if (compare) {
        if (cfg.filter.method == FilterMethod::None) {
            throw ConfigError("pipeline: compare_variants needs a non-none filter method");
        }
        struct Variant {
            const char* name;
            bool use_filter;
            bool use_gate;
        };
        const Variant variants[] = {{"none", false, false},
                                    {"filter", true, false},
                                    {"gate", false, true},
                                    {"filter+gate", true, true}};
        for (const Variant& v : variants) {
            PipelineConfig vc = cfg;
            if (!v.use_filter) {
                vc.filter = FilterStageConfig{};
            }
            vc.gate_enabled = v.use_gate;
            const PipelineResult res = run_pipeline(frames, vc);
            if (v.use_filter && res.tau) {
                tau = res.tau;
            }
            table.emplace_back(v.name, res.report);
        }
    } else {
        const PipelineResult res = run_pipeline(frames, cfg);
        tau = res.tau;
        fs::create_directories(out_dir / "masks");
        std::vector<FrameDetections> dets;
        dets.reserve(res.frames.size());
        for (const FrameOutput& f : res.frames) {
            write_mask(out_dir / "masks" / (f.frame_id + ".mask"), f.keep_mask);
            dets.push_back({f.frame_id, f.detections});
            if (!f.filter_warning.empty()) {
                std::cerr << f.frame_id << ": " << f.filter_warning << "\n";
            }
        }
        write_detections_jsonl(out_dir / "detections.jsonl", dets);
        table.emplace_back("pipeline", res.report);
    }

    detail::write_file_atomic(out_dir / "report.txt", render_report_table(table));
    detail::write_file_atomic(out_dir / "report.csv", render_report_csv(table));
    ordered_json resolved = pipeline_config_json(j, cfg, tau, "pipeline");
    resolved["compare_variants"] = compare;
    write_resolved_config(out_dir, resolved);
    std::cout << render_report_table(table);
    return 0;
}

int run_sweep(const fs::path& config_path) {
    const json j = load_config(config_path);
    reject_unknown_keys(j,
                        {"manifest", "out_dir", "mode", "tpr_levels", "gamma_levels", "filter",
                         "detector", "gate", "eval", "workers"},
                        "sweep");
    const std::string mode = get_as<std::string>(j, "mode", "sweep");
    PipelineConfig cfg = parse_pipeline_config(j, "sweep");
    const std::vector<FrameBundle> frames = load_frames_for(j, "sweep");
    const fs::path out_dir = require_out_dir(j, "sweep");

    std::vector<std::pair<std::string, EvalReport>> table;
    std::vector<double> levels;
    if (mode == "tau") {
        levels = get_or<std::vector<double>>(j, "tpr_levels", {0.90, 0.95, 0.99}, "sweep");
        if (levels.empty()) {
            throw ConfigError("sweep: tpr_levels is empty");
        }
        for (const TauSweepEntry& e : sweep_tau(frames, levels, cfg)) {
            table.emplace_back("tpr=" + double_to_text(e.tpr) + " tau=" + float_to_text(e.tau),
                               e.report);
        }
    } else if (mode == "gamma") {
        levels = get_or<std::vector<double>>(j, "gamma_levels", {0.0, 0.5, 1.0, 1.5}, "sweep");
        if (levels.empty()) {
            throw ConfigError("sweep: gamma_levels is empty");
        }
        // Detections are produced once with the configured filter, then
        // re-gated at each padding.
        std::optional<float> tau;
        if (cfg.filter.method == FilterMethod::Threshold) {
            tau = cfg.filter.calibrate_tpr
                      ? calibrate_threshold(pool_valid_scores(frames), *cfg.filter.calibrate_tpr)
                      : cfg.filter.tau;
        }
        std::vector<FrameBundle> with_dets = frames;
        detail::for_each_frame(with_dets.size(), cfg.workers, [&](std::size_t i) {
            const FilterResult res = apply_filter_stage(with_dets[i], cfg.filter, tau);
            with_dets[i].detections = cluster_detect(res.filtered, cfg.detector);
        });
        for (const GammaSweepEntry& e : sweep_gamma(with_dets, levels, cfg.gate, cfg.eval)) {
            table.emplace_back("gamma=" + double_to_text(e.gamma), e.report);
        }
    } else {
        throw ConfigError("sweep: mode must be \"tau\" or \"gamma\"");
    }

    detail::write_file_atomic(out_dir / "sweep.txt", render_report_table(table));
    detail::write_file_atomic(out_dir / "sweep.csv", render_report_csv(table));
    ordered_json resolved = pipeline_config_json(j, cfg, std::nullopt, "sweep");
    resolved["mode"] = mode;
    resolved[mode == "tau" ? "tpr_levels" : "gamma_levels"] = levels;
    write_resolved_config(out_dir, resolved);
    std::cout << render_report_table(table);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"lidar spray filtering, radar gating and range-binned AP evaluation"};
    app.require_subcommand(1);

    struct Sub {
        const char* name;
        const char* help;
        int (*run)(const fs::path&);
    };
    const Sub subs[] = {
        {"simulate", "generate a synthetic wet-highway dataset", run_simulate},
        {"filter", "apply a point filter and write keep masks", run_filter},
        {"detect", "cluster points into boxes, optionally filtering first", run_detect},
        {"gate", "drop detections with no radar target inside", run_gate},
        {"pipeline", "filter, detect, gate and evaluate in one pass", run_pipeline_cmd},
        {"sweep", "evaluate across tau or gamma settings", run_sweep},
        {"calibrate", "pick a score threshold from labeled frames", run_calibrate},
    };
    std::string configs[std::size(subs)];
    CLI::App* parsed[std::size(subs)];
    for (std::size_t i = 0; i < std::size(subs); ++i) {
        parsed[i] = app.add_subcommand(subs[i].name, subs[i].help);
        parsed[i]->add_option("--config", configs[i], "JSON config file")->required();
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    for (std::size_t i = 0; i < std::size(subs); ++i) {
        if (!parsed[i]->parsed()) {
            continue;
        }
        try {
            return subs[i].run(configs[i]);
        } catch (const ConfigError& e) {
            std::cerr << "config error: " << e.what() << "\n";
            return kExitConfig;
        } catch (const IoError& e) {
            std::cerr << "data error: " << e.what() << "\n";
            return kExitData;
        } catch (const std::invalid_argument& e) {
            std::cerr << "data error: " << e.what() << "\n";
            return kExitData;
        } catch (const std::exception& e) {
            std::cerr << "internal error: " << e.what() << "\n";
            return kExitInternal;
        }
    }
    return kExitInternal;  // unreachable: a subcommand is required
}
