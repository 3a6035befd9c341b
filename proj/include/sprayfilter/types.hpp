#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

namespace sprayfilter {

constexpr double kPi = 3.14159265358979323846;

// One LiDAR return: position in meters plus return intensity.
struct Point4 {
    float x = 0.0f;
    float y = 0.0f;
    float z = 0.0f;
    float intensity = 0.0f;
};

// N x 4 point cloud (x, y, z, intensity).
struct PointCloud {
    std::vector<Point4> points;

    std::size_t size() const noexcept { return points.size(); }
    bool empty() const noexcept { return points.empty(); }
};

// Wraps an angle to [-pi, pi).
inline double normalize_angle(double a) {
    a = std::fmod(a + kPi, 2.0 * kPi);
    if (a < 0.0) {
        a += 2.0 * kPi;
    }
    return a - kPi;
}

// Oriented box: center, extents and yaw about the vertical axis.
// l runs along the heading, w is the lateral extent.
struct Box3D {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    double w = 1.0;
    double l = 1.0;
    double h = 1.0;
    double theta = 0.0;  // in [-pi, pi)
};

inline void validate_box(const Box3D& b) {
    if (!(b.w > 0.0) || !(b.l > 0.0) || !(b.h > 0.0)) {
        throw std::invalid_argument("Box3D: extents must be positive");
    }
    if (!std::isfinite(b.x) || !std::isfinite(b.y) || !std::isfinite(b.z) ||
        !std::isfinite(b.w) || !std::isfinite(b.l) || !std::isfinite(b.h) ||
        !std::isfinite(b.theta)) {
        throw std::invalid_argument("Box3D: non-finite field");
    }
}

inline Box3D make_box(double x, double y, double z, double w, double l, double h, double theta) {
    Box3D b{x, y, z, w, l, h, normalize_angle(theta)};
    validate_box(b);
    return b;
}

enum class ObjectClass : std::uint8_t {
    Vehicle = 0,
};

struct Detection {
    Box3D box;
    double confidence = 0.0;  // in [0, 1]
    ObjectClass class_id = ObjectClass::Vehicle;
};

inline void validate_detection(const Detection& d) {
    validate_box(d.box);
    if (!(d.confidence >= 0.0 && d.confidence <= 1.0)) {
        throw std::invalid_argument("Detection: confidence outside [0, 1]");
    }
}

// One radar return: position in meters, radial velocity in m/s.
struct RadarTarget {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;
    double v = 0.0;
};

using RadarTargetList = std::vector<RadarTarget>;

// Per-point anomaly scores; larger means more anomalous.
using ScoreArray = std::vector<float>;

enum class PointClass : std::uint8_t {
    Background = 0,
    Vehicle = 1,
    Spray = 2,
};

using PointLabelArray = std::vector<PointClass>;

}  // namespace sprayfilter
