#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "sprayfilter/geometry.hpp"
#include "sprayfilter/io.hpp"
#include "sprayfilter/spatial_index.hpp"
#include "sprayfilter/types.hpp"

namespace sprayfilter {

struct ClusterParams {
    double link_radius = 0.7;   // points closer than this join a cluster
    std::size_t min_points = 8;
    double ground_z = 0.2;      // points at or below this height are ignored
    double max_w = 6.0;         // clusters fitting a larger box are discarded
    double max_l = 10.0;
    double max_h = 3.5;
};

namespace detail {

struct FittedBox {
    Box3D box;
    bool ok = false;
};

// Oriented bounding box from a cluster: yaw from the BEV covariance's
// principal axis, extents from the rotated-frame min/max.
inline FittedBox fit_cluster_box(const PointCloud& pts, const std::vector<std::uint32_t>& member,
                                 const ClusterParams& params) {
    double mx = 0.0;
    double my = 0.0;
    for (const std::uint32_t i : member) {
        mx += pts.points[i].x;
        my += pts.points[i].y;
    }
    const auto n = static_cast<double>(member.size());
    mx /= n;
    my /= n;
    double cxx = 0.0;
    double cxy = 0.0;
    double cyy = 0.0;
    for (const std::uint32_t i : member) {
        const double dx = pts.points[i].x - mx;
        const double dy = pts.points[i].y - my;
        cxx += dx * dx;
        cxy += dx * dy;
        cyy += dy * dy;
    }
    double yaw = 0.5 * std::atan2(2.0 * cxy, cxx - cyy);
    if (yaw >= kPi / 2.0) {
        yaw -= kPi;
    }
    const double c = std::cos(yaw);
    const double s = std::sin(yaw);
    double lo_x = std::numeric_limits<double>::max();
    double hi_x = std::numeric_limits<double>::lowest();
    double lo_y = lo_x;
    double hi_y = hi_x;
    double lo_z = lo_x;
    double hi_z = hi_x;
    for (const std::uint32_t i : member) {
        const Point4& p = pts.points[i];
        const double lx = c * p.x + s * p.y;
        const double ly = -s * p.x + c * p.y;
        lo_x = std::min(lo_x, lx);
        hi_x = std::max(hi_x, lx);
        lo_y = std::min(lo_y, ly);
        hi_y = std::max(hi_y, ly);
        lo_z = std::min(lo_z, static_cast<double>(p.z));
        hi_z = std::max(hi_z, static_cast<double>(p.z));
    }
    // A degenerate flat cluster still gets a thin but valid box.
    constexpr double kMinExtent = 0.05;
    const double l = std::max(hi_x - lo_x, kMinExtent);
    const double w = std::max(hi_y - lo_y, kMinExtent);
    const double h = std::max(hi_z - lo_z, kMinExtent);
    FittedBox out;
    if (w > params.max_w || l > params.max_l || h > params.max_h) {
        return out;
    }
    const double mid_x = (lo_x + hi_x) / 2.0;
    const double mid_y = (lo_y + hi_y) / 2.0;
    out.box = make_box(c * mid_x - s * mid_y, s * mid_x + c * mid_y, (lo_z + hi_z) / 2.0, w, l, h,
                       yaw);
    out.ok = true;
    return out;
}

}  // namespace detail

// The above-ground subset of a cloud plus its connected components under the
// link radius. Component order follows the lowest member index; members are
// sorted ascending.
struct ClusterSet {
    PointCloud above;
    std::vector<std::vector<std::uint32_t>> components;
};

inline ClusterSet cluster_components(const PointCloud& cloud, double link_radius,
                                     double ground_z) {
    if (!(link_radius > 0.0)) {
        throw std::invalid_argument("cluster_components: link_radius must be positive");
    }
    ClusterSet out;
    for (const Point4& p : cloud.points) {
        if (p.z > ground_z) {
            out.above.points.push_back(p);
        }
    }
    if (out.above.size() == 0) {
        return out;
    }
    const SpatialIndex index(out.above);
    std::vector<std::uint8_t> visited(out.above.size(), 0);
    std::vector<std::uint32_t> queue;
    for (std::uint32_t seed = 0; seed < out.above.size(); ++seed) {
        if (visited[seed]) {
            continue;
        }
        visited[seed] = 1;
        queue.assign(1, seed);
        std::vector<std::uint32_t> member;
        while (!queue.empty()) {
            const std::uint32_t cur = queue.back();
            queue.pop_back();
            member.push_back(cur);
            for (const std::uint32_t nb : index.radius_indices(cur, link_radius)) {
                if (!visited[nb]) {
                    visited[nb] = 1;
                    queue.push_back(nb);
                }
            }
        }
        std::sort(member.begin(), member.end());
        out.components.push_back(std::move(member));
    }
    return out;
}

// Connected-component clustering over the above-ground points, one box per
// surviving cluster. Confidence grows with cluster size and saturates at 100
// points.
inline std::vector<Detection> cluster_detect(const PointCloud& cloud,
                                             const ClusterParams& params = {}) {
    if (params.min_points < 3) {
        throw std::invalid_argument("cluster_detect: min_points must be >= 3");
    }
    const ClusterSet set = cluster_components(cloud, params.link_radius, params.ground_z);
    std::vector<Detection> out;
    for (const std::vector<std::uint32_t>& member : set.components) {
        if (member.size() < params.min_points) {
            continue;
        }
        const auto fitted = detail::fit_cluster_box(set.above, member, params);
        if (!fitted.ok) {
            continue;
        }
        Detection det;
        det.box = fitted.box;
        det.confidence = std::min(1.0, static_cast<double>(member.size()) / 100.0);
        det.class_id = ObjectClass::Vehicle;
        out.push_back(det);
    }
    std::sort(out.begin(), out.end(), [](const Detection& a, const Detection& b) {
        if (a.confidence != b.confidence) {
            return a.confidence > b.confidence;
        }
        if (a.box.x != b.box.x) {
            return a.box.x < b.box.x;
        }
        return a.box.y < b.box.y;
    });
    return out;
}

// Stores detections produced outside this library on the frame they belong to.
inline void attach_external_detections(FrameBundle& bundle, const FrameDetections& frame) {
    if (frame.frame_id != bundle.frame_id) {
        throw std::invalid_argument("attach_external_detections: detections are for frame " +
                                    frame.frame_id + ", bundle is frame " + bundle.frame_id);
    }
    for (const Detection& d : frame.detections) {
        validate_detection(d);
    }
    bundle.detections = frame.detections;
}

}  // namespace sprayfilter
