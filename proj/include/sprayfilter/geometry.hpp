#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

#include "sprayfilter/types.hpp"

namespace sprayfilter {

// Bird's-eye distance from the sensor origin; vertical offset is ignored.
inline double bev_range(double x, double y) {
    return std::hypot(x, y);
}

inline double bev_range(const Point4& p) {
    return bev_range(static_cast<double>(p.x), static_cast<double>(p.y));
}

inline double bev_range(const Box3D& b) {
    return bev_range(b.x, b.y);
}

// Grows every box dimension by gamma (gamma/2 per side); center and yaw stay.
inline Box3D pad_box(const Box3D& box, double gamma) {
    if (!(gamma >= 0.0)) {
        throw std::invalid_argument("pad_box: gamma must be >= 0");
    }
    Box3D out = box;
    out.w += gamma;
    out.l += gamma;
    out.h += gamma;
    return out;
}

// Boundary-inclusive containment test in the box frame.
inline bool box_contains_point(const Box3D& box, double px, double py, double pz) {
    const double c = std::cos(box.theta);
    const double s = std::sin(box.theta);
    const double dx = px - box.x;
    const double dy = py - box.y;
    const double dz = pz - box.z;
    const double lx = c * dx + s * dy;
    const double ly = -s * dx + c * dy;
    return std::abs(lx) <= 0.5 * box.l && std::abs(ly) <= 0.5 * box.w &&
           std::abs(dz) <= 0.5 * box.h;
}

inline bool box_contains_point(const Box3D& box, const Point4& p) {
    return box_contains_point(box, p.x, p.y, p.z);
}

struct Vec2d {
    double x = 0.0;
    double y = 0.0;
};

// BEV footprint corners in counter-clockwise order.
inline std::array<Vec2d, 4> box_bev_corners(const Box3D& b) {
    const double c = std::cos(b.theta);
    const double s = std::sin(b.theta);
    const double hl = 0.5 * b.l;
    const double hw = 0.5 * b.w;
    const auto world = [&](double lx, double ly) {
        return Vec2d{b.x + c * lx - s * ly, b.y + s * lx + c * ly};
    };
    return {world(hl, hw), world(-hl, hw), world(-hl, -hw), world(hl, -hw)};
}

inline double polygon_area(std::span<const Vec2d> poly) {
    if (poly.size() < 3) {
        return 0.0;
    }
    double s = 0.0;
    for (std::size_t i = 0; i < poly.size(); ++i) {
        const Vec2d& p = poly[i];
        const Vec2d& q = poly[(i + 1) % poly.size()];
        s += p.x * q.y - q.x * p.y;
    }
    return std::abs(s) * 0.5;
}

namespace detail {

// Sutherland-Hodgman step: clip `poly` to the half-plane left of edge a->b.
inline void clip_halfplane(const std::vector<Vec2d>& poly, Vec2d a, Vec2d b,
                           std::vector<Vec2d>& out) {
    out.clear();
    const double ex = b.x - a.x;
    const double ey = b.y - a.y;
    const auto side = [&](const Vec2d& p) { return ex * (p.y - a.y) - ey * (p.x - a.x); };
    const std::size_t n = poly.size();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2d& p = poly[i];
        const Vec2d& q = poly[(i + 1) % n];
        const double sp = side(p);
        const double sq = side(q);
        if (sp >= 0.0) {
            out.push_back(p);
            if (sq < 0.0) {
                const double t = sp / (sp - sq);
                out.push_back({p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)});
            }
        } else if (sq >= 0.0) {
            const double t = sp / (sp - sq);
            out.push_back({p.x + t * (q.x - p.x), p.y + t * (q.y - p.y)});
        }
    }
}

}  // namespace detail

// Area of the intersection of the two yaw-rotated BEV rectangles.
inline double bev_intersection_area(const Box3D& a, const Box3D& b) {
    const auto ca = box_bev_corners(a);
    const auto cb = box_bev_corners(b);
    std::vector<Vec2d> poly(ca.begin(), ca.end());
    std::vector<Vec2d> tmp;
    for (std::size_t e = 0; e < 4 && !poly.empty(); ++e) {
        detail::clip_halfplane(poly, cb[e], cb[(e + 1) % 4], tmp);
        poly.swap(tmp);
    }
    return polygon_area(poly);
}

// 3D IoU of two oriented boxes: BEV polygon intersection times vertical
// interval overlap. Volumes run through the same polygon-area path so that
// identical boxes give exactly 1.
inline double box_iou_3d(const Box3D& a, const Box3D& b) {
    validate_box(a);
    validate_box(b);
    const auto ca = box_bev_corners(a);
    const auto cb = box_bev_corners(b);
    const double area_a = polygon_area(ca);
    const double area_b = polygon_area(cb);
    const double vol_a = area_a * a.h;
    const double vol_b = area_b * b.h;

    const double zlo = std::max(a.z - 0.5 * a.h, b.z - 0.5 * b.h);
    const double zhi = std::min(a.z + 0.5 * a.h, b.z + 0.5 * b.h);
    const double dz = zhi - zlo;
    double inter = 0.0;
    if (dz > 0.0) {
        inter = bev_intersection_area(a, b) * dz;
    }
    const double uni = vol_a + vol_b - inter;
    if (!(uni > 0.0)) {
        return 0.0;
    }
    return std::clamp(inter / uni, 0.0, 1.0);
}

}  // namespace sprayfilter
