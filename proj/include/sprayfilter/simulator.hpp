#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "sprayfilter/geometry.hpp"
#include "sprayfilter/io.hpp"
#include "sprayfilter/rng.hpp"
#include "sprayfilter/types.hpp"

namespace sprayfilter {

// Highway scene: an ego sensor at the origin following one lead vehicle,
// with water spray trailing both vehicles in wet conditions. Spray density
// scales with speed.

enum class SpeedClass {
    Kmh50,
    Kmh70,
    Kmh90,
    Kmh110,
    Kmh130,
};

inline double speed_kmh(SpeedClass c) {
    switch (c) {
        case SpeedClass::Kmh50: return 50.0;
        case SpeedClass::Kmh70: return 70.0;
        case SpeedClass::Kmh90: return 90.0;
        case SpeedClass::Kmh110: return 110.0;
        case SpeedClass::Kmh130: return 130.0;
    }
    throw std::invalid_argument("speed_kmh: bad speed class");
}

inline double speed_factor(SpeedClass c) { return speed_kmh(c) / 130.0; }

inline SpeedClass speed_class_from_kmh(int kmh) {
    switch (kmh) {
        case 50: return SpeedClass::Kmh50;
        case 70: return SpeedClass::Kmh70;
        case 90: return SpeedClass::Kmh90;
        case 110: return SpeedClass::Kmh110;
        case 130: return SpeedClass::Kmh130;
    }
    throw std::invalid_argument("speed class must be one of 50, 70, 90, 110, 130 km/h");
}

struct SceneConfig {
    double lead_distance = 24.0;  // mean gap to the lead vehicle, meters
    SpeedClass speed = SpeedClass::Kmh90;
    std::size_t spray_points = 160;  // per spray corridor at 130 km/h
    std::size_t vehicle_surface_points = 120;
    std::size_t ground_points = 400;
    double ground_noise_sigma = 0.03;
    std::size_t radar_targets_on_vehicle = 2;
    double clutter_target_prob = 0.0;  // chance of one stray radar target in the spray
    double score_separation = 4.0;     // mean anomaly score gap, spray vs everything else
    std::uint64_t seed = 0;
};

inline void validate_scene_config(const SceneConfig& cfg) {
    if (!(cfg.lead_distance > 0.0) || !std::isfinite(cfg.lead_distance)) {
        throw std::invalid_argument("scene: lead_distance must be positive");
    }
    if (!(cfg.ground_noise_sigma >= 0.0) || !std::isfinite(cfg.ground_noise_sigma)) {
        throw std::invalid_argument("scene: ground_noise_sigma must be >= 0");
    }
    if (!(cfg.clutter_target_prob >= 0.0) || !(cfg.clutter_target_prob <= 1.0)) {
        throw std::invalid_argument("scene: clutter_target_prob must be in [0, 1]");
    }
    if (!(cfg.score_separation >= 0.0) || !std::isfinite(cfg.score_separation)) {
        throw std::invalid_argument("scene: score_separation must be >= 0");
    }
}

struct Scene {
    PointCloud cloud;
    PointLabelArray labels;
    ScoreArray scores;
    std::vector<Box3D> gt_boxes;
    RadarTargetList radar;
};

namespace detail {

constexpr double kVehicleL = 4.5;
constexpr double kVehicleW = 1.9;
constexpr double kVehicleH = 1.6;
constexpr double kVehicleCenterZ = 0.8;  // box bottom sits on the ground
// Spray points never land inside the lead box grown by this much, which
// keeps spray clusters clear of the vehicle and of its padded gate box.
constexpr double kSprayClearance = 2.0;

struct Corridor {
    double cx, cy, cz;
    double sx, sy, sz;
};

inline void add_spray(Rng& rng, const Box3D& exclusion, const Corridor& c, std::size_t count,
                      PointCloud& cloud, PointLabelArray& labels) {
    for (std::size_t i = 0; i < count; ++i) {
        for (int tries = 0;; ++tries) {
            const double x = rng.normal(c.cx, c.sx);
            const double y = rng.normal(c.cy, c.sy);
            const double z = std::max(0.05, rng.normal(c.cz, c.sz));
            if (!box_contains_point(exclusion, x, y, z)) {
                const auto intensity = static_cast<float>(rng.uniform(0.02, 0.15));
                cloud.points.push_back({static_cast<float>(x), static_cast<float>(y),
                                        static_cast<float>(z), intensity});
                labels.push_back(PointClass::Spray);
                break;
            }
            if (tries >= 1000) {
                throw std::runtime_error("spray sampling failed to clear the lead vehicle");
            }
        }
    }
}

}  // namespace detail

inline Scene generate_scene(const SceneConfig& cfg) {
    validate_scene_config(cfg);
    Rng rng(cfg.seed);
    Scene scene;

    // Lead vehicle pose.
    const double gap = cfg.lead_distance * rng.uniform(0.75, 1.25);
    const double cy = rng.uniform(-1.0, 1.0);
    const double yaw = rng.uniform(-0.08, 0.08);
    const Box3D gt = make_box(gap, cy, detail::kVehicleCenterZ, detail::kVehicleW,
                              detail::kVehicleL, detail::kVehicleH, yaw);
    scene.gt_boxes.push_back(gt);
    const double cos_y = std::cos(yaw);
    const double sin_y = std::sin(yaw);
    const double rear_x = gt.x - cos_y * gt.l / 2.0;
    const double rear_y = gt.y - sin_y * gt.l / 2.0;

    // Spray rises with speed and hides the lower part of the vehicle.
    const double sf = speed_factor(cfg.speed);
    const auto spray_count = static_cast<std::size_t>(std::llround(
        static_cast<double>(cfg.spray_points) * sf));
    const double occlusion_height = 0.2 + 0.48 * sf * rng.uniform(0.4, 1.0);
    const bool spray_active = spray_count > 0;

    // Road surface.
    for (std::size_t i = 0; i < cfg.ground_points; ++i) {
        const double x = rng.uniform(-10.0, gap + 20.0);
        const double y = rng.uniform(-8.0, 8.0);
        const double z = rng.normal(0.0, cfg.ground_noise_sigma);
        const auto intensity = static_cast<float>(rng.uniform(0.05, 0.3));
        scene.cloud.points.push_back(
            {static_cast<float>(x), static_cast<float>(y), static_cast<float>(z), intensity});
        scene.labels.push_back(PointClass::Background);
    }

    // Lidar returns off the vehicle, sampled per face in proportion to face
    // area. Returns below the occlusion height are lost into the spray.
    {
        const double area_end = detail::kVehicleW * detail::kVehicleH;   // rear or front
        const double area_side = detail::kVehicleL * detail::kVehicleH;  // left or right
        const double area_top = detail::kVehicleL * detail::kVehicleW;
        const double total = 2.0 * area_end + 2.0 * area_side + area_top;
        const double hl = gt.l / 2.0;
        const double hw = gt.w / 2.0;
        for (std::size_t i = 0; i < cfg.vehicle_surface_points; ++i) {
            const double pick = rng.uniform(0.0, total);
            const double u = rng.uniform01();
            const double v = rng.uniform01();
            double lx;
            double ly;
            double lz;
            if (pick < area_end) {  // rear
                lx = -hl;
                ly = (u - 0.5) * gt.w;
                lz = v * gt.h;
            } else if (pick < 2.0 * area_end) {  // front
                lx = hl;
                ly = (u - 0.5) * gt.w;
                lz = v * gt.h;
            } else if (pick < 2.0 * area_end + area_side) {  // left
                ly = hw;
                lx = (u - 0.5) * gt.l;
                lz = v * gt.h;
            } else if (pick < 2.0 * area_end + 2.0 * area_side) {  // right
                ly = -hw;
                lx = (u - 0.5) * gt.l;
                lz = v * gt.h;
            } else {  // top
                lx = (u - 0.5) * gt.l;
                ly = (v - 0.5) * gt.w;
                lz = gt.h;
            }
            const auto intensity = static_cast<float>(rng.uniform(0.3, 0.9));
            if (spray_active && lz < occlusion_height) {
                continue;
            }
            const double x = gt.x + cos_y * lx - sin_y * ly;
            const double y = gt.y + sin_y * lx + cos_y * ly;
            const double z = gt.z - gt.h / 2.0 + lz;
            scene.cloud.points.push_back(
                {static_cast<float>(x), static_cast<float>(y), static_cast<float>(z), intensity});
            scene.labels.push_back(PointClass::Vehicle);
        }
    }

    // Two spray corridors: a tight one behind the ego vehicle and a wider,
    // more diffuse one trailing the lead vehicle.
    const Box3D exclusion = pad_box(gt, detail::kSprayClearance);
    const detail::Corridor ego{-1.5, 0.0, 0.42, 0.8, 0.3, 0.2};
    const detail::Corridor lead{rear_x - 4.2 * cos_y, rear_y - 4.2 * sin_y, 0.42, 1.6, 0.55, 0.28};
    detail::add_spray(rng, exclusion, ego, spray_count, scene.cloud, scene.labels);
    detail::add_spray(rng, exclusion, lead, spray_count, scene.cloud, scene.labels);

    // Radar returns from the lead vehicle's rear bumper, a little inside the
    // face plane so containment at zero padding is unambiguous.
    constexpr double kRadarInset = 0.01;
    for (std::size_t i = 0; i < cfg.radar_targets_on_vehicle; ++i) {
        const double ly = rng.uniform(-0.4, 0.4) * gt.w;
        const double lz = rng.uniform(0.25, 0.60);
        RadarTarget t;
        t.x = rear_x + cos_y * kRadarInset - sin_y * ly;
        t.y = rear_y + sin_y * kRadarInset + cos_y * ly;
        t.z = lz;
        t.v = speed_kmh(cfg.speed) / 3.6 + rng.normal(0.0, 0.3);
        scene.radar.push_back(t);
    }

    // Occasionally the radar picks up a stray return inside the spray.
    if (rng.uniform01() < cfg.clutter_target_prob) {
        for (int tries = 0;; ++tries) {
            const double x = rng.normal(lead.cx, lead.sx);
            const double y = rng.normal(lead.cy, lead.sy);
            const double z = std::max(0.05, rng.normal(lead.cz, lead.sz));
            if (!box_contains_point(exclusion, x, y, z)) {
                scene.radar.push_back({x, y, z, rng.normal(0.0, 2.0)});
                break;
            }
            if (tries >= 1000) {
                throw std::runtime_error("clutter sampling failed to clear the lead vehicle");
            }
        }
    }

    // Per-point anomaly scores: spray scores sit score_separation above the
    // rest, both with unit spread.
    scene.scores.reserve(scene.cloud.size());
    for (const PointClass label : scene.labels) {
        const double mean = label == PointClass::Spray ? cfg.score_separation : 0.0;
        scene.scores.push_back(static_cast<float>(rng.normal(mean, 1.0)));
    }
    return scene;
}

inline std::string frame_name(std::size_t index) {
    char buf[24];
    std::snprintf(buf, sizeof(buf), "%06zu", index);
    return buf;
}

inline FrameBundle scene_to_bundle(Scene scene, std::string frame_id) {
    FrameBundle b;
    b.frame_id = std::move(frame_id);
    b.cloud = std::move(scene.cloud);
    b.labels = std::move(scene.labels);
    b.scores = std::move(scene.scores);
    b.gt_boxes = std::move(scene.gt_boxes);
    b.radar = std::move(scene.radar);
    return b;
}

// Bundles straight from the generator, frame ids 000000, 000001, ...
inline std::vector<FrameBundle> generate_bundles(const SceneConfig& tmpl, std::size_t frame_count,
                                                 std::uint64_t base_seed) {
    std::vector<FrameBundle> out;
    out.reserve(frame_count);
    for (std::size_t i = 0; i < frame_count; ++i) {
        SceneConfig cfg = tmpl;
        cfg.seed = base_seed + i;
        out.push_back(scene_to_bundle(generate_scene(cfg), frame_name(i)));
    }
    return out;
}

// Writes frame_count scenes under out_dir (clouds, labels, scores, ground
// truth, radar and a manifest). Frame i uses seed base_seed + i, so any
// prefix of a dataset is reproducible on its own.
inline DatasetManifest generate_dataset(const SceneConfig& tmpl, std::size_t frame_count,
                                        std::uint64_t base_seed,
                                        const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir / "clouds");
    fs::create_directories(out_dir / "labels");
    fs::create_directories(out_dir / "scores");
    fs::create_directories(out_dir / "gt");
    fs::create_directories(out_dir / "radar");
    DatasetManifest manifest;
    manifest.root = out_dir;
    for (std::size_t i = 0; i < frame_count; ++i) {
        SceneConfig cfg = tmpl;
        cfg.seed = base_seed + i;
        const Scene scene = generate_scene(cfg);
        const std::string name = frame_name(i);
        FrameRecord rec;
        rec.frame_id = name;
        rec.cloud = "clouds/" + name + ".bin";
        rec.labels = "labels/" + name + ".label";
        rec.scores = "scores/" + name + ".score";
        rec.gt = "gt/" + name + ".jsonl";
        rec.radar = "radar/" + name + ".csv";
        write_cloud_bin(out_dir / rec.cloud, scene.cloud);
        write_labels(out_dir / *rec.labels, scene.labels);
        write_scores(out_dir / *rec.scores, scene.scores);
        write_gt_jsonl(out_dir / *rec.gt, name, scene.gt_boxes);
        write_radar_csv(out_dir / *rec.radar, scene.radar);
        manifest.frames.push_back(std::move(rec));
    }
    save_manifest(out_dir / "manifest.json", manifest);
    return manifest;
}

// In-memory variant for tests and sweeps that never touch the filesystem.
inline std::vector<Scene> generate_scenes(const SceneConfig& tmpl, std::size_t frame_count,
                                          std::uint64_t base_seed) {
    std::vector<Scene> out;
    out.reserve(frame_count);
    for (std::size_t i = 0; i < frame_count; ++i) {
        SceneConfig cfg = tmpl;
        cfg.seed = base_seed + i;
        out.push_back(generate_scene(cfg));
    }
    return out;
}

}  // namespace sprayfilter
