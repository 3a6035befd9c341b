#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "sprayfilter/geometry.hpp"
#include "sprayfilter/types.hpp"

namespace sprayfilter {

struct GateConfig {
    double gamma = 1.0;             // padding added to each box dimension, meters
    std::size_t require_count = 1;  // targets that must fall inside the padded box
    bool ignore_target_z = false;   // compare in the ground plane only
};

inline void validate_gate_config(const GateConfig& cfg) {
    if (!(cfg.gamma >= 0.0) || !std::isfinite(cfg.gamma)) {
        throw std::invalid_argument("gate: gamma must be >= 0");
    }
    if (cfg.require_count < 1) {
        throw std::invalid_argument("gate: require_count must be >= 1");
    }
}

// One keep flag per detection: set when at least require_count radar targets
// lie inside the detection's box padded by gamma.
inline std::vector<std::uint8_t> gate_keep_mask(const std::vector<Detection>& detections,
                                                const RadarTargetList& targets,
                                                const GateConfig& cfg = {}) {
    validate_gate_config(cfg);
    std::vector<std::uint8_t> keep(detections.size(), 0);
    for (std::size_t i = 0; i < detections.size(); ++i) {
        const Box3D padded = pad_box(detections[i].box, cfg.gamma);
        std::size_t inside = 0;
        for (const RadarTarget& t : targets) {
            const double tz = cfg.ignore_target_z ? padded.z : t.z;
            if (box_contains_point(padded, t.x, t.y, tz)) {
                ++inside;
                if (inside >= cfg.require_count) {
                    break;
                }
            }
        }
        keep[i] = inside >= cfg.require_count ? 1 : 0;
    }
    return keep;
}

// The surviving detections, in their original order and otherwise unchanged.
inline std::vector<Detection> gate_detections(const std::vector<Detection>& detections,
                                              const RadarTargetList& targets,
                                              const GateConfig& cfg = {}) {
    const auto keep = gate_keep_mask(detections, targets, cfg);
    std::vector<Detection> out;
    for (std::size_t i = 0; i < detections.size(); ++i) {
        if (keep[i]) {
            out.push_back(detections[i]);
        }
    }
    return out;
}

}  // namespace sprayfilter
