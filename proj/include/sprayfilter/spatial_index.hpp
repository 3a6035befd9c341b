#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "sprayfilter/geometry.hpp"
#include "sprayfilter/types.hpp"

namespace sprayfilter {

struct Neighbor {
    std::uint32_t index = 0;
    double dist2 = 0.0;
};

// Static k-d tree over a point cloud's (x, y, z). Read-only after build;
// k-nearest and fixed-radius queries return exactly what a brute-force
// scan returns.
class SpatialIndex {
public:
    static constexpr std::uint32_t kNone = std::numeric_limits<std::uint32_t>::max();

    explicit SpatialIndex(const PointCloud& cloud) : cloud_(&cloud) {
        const std::size_t n = cloud.size();
        order_.resize(n);
        std::iota(order_.begin(), order_.end(), 0u);
        if (n > 0) {
            nodes_.reserve(2 * n / kLeafSize + 8);
            root_ = build(0, n);
        }
    }

    std::size_t size() const noexcept { return cloud_->size(); }

    // The k nearest points to cloud[query], excluding query itself,
    // sorted by (distance, index).
    std::vector<Neighbor> knn(std::uint32_t query, std::size_t k) const {
        const Point4& p = cloud_->points[query];
        return knn_around(p.x, p.y, p.z, k, query);
    }

    std::vector<Neighbor> knn_around(float x, float y, float z, std::size_t k,
                                     std::uint32_t exclude = kNone) const {
        std::vector<Neighbor> heap;
        if (k == 0 || size() == 0) {
            return heap;
        }
        heap.reserve(k + 1);
        const double q[3] = {x, y, z};
        knn_visit(root_, q, k, exclude, heap);
        std::sort(heap.begin(), heap.end(), [](const Neighbor& a, const Neighbor& b) {
            return a.dist2 != b.dist2 ? a.dist2 < b.dist2 : a.index < b.index;
        });
        return heap;
    }

    // Indices of the other points within `radius` of cloud[query]
    // (boundary inclusive), sorted ascending.
    std::vector<std::uint32_t> radius_indices(std::uint32_t query, double radius) const {
        const Point4& p = cloud_->points[query];
        return radius_indices_around(p.x, p.y, p.z, radius, query);
    }

    std::vector<std::uint32_t> radius_indices_around(float x, float y, float z, double radius,
                                                     std::uint32_t exclude = kNone) const {
        std::vector<std::uint32_t> out;
        if (size() == 0 || !(radius >= 0.0)) {
            return out;
        }
        const double q[3] = {x, y, z};
        radius_visit(root_, q, radius, radius * radius, exclude, out);
        std::sort(out.begin(), out.end());
        return out;
    }

    std::size_t radius_count(std::uint32_t query, double radius) const {
        return radius_indices(query, radius).size();
    }

private:
    static constexpr std::size_t kLeafSize = 16;

    struct Node {
        float split = 0.0f;
        std::int32_t left = -1;
        std::int32_t right = -1;
        std::uint32_t begin = 0;
        std::uint32_t end = 0;
        std::uint8_t axis = 0;
        bool leaf = false;
    };

    float coord(std::uint32_t idx, unsigned axis) const {
        const Point4& p = cloud_->points[idx];
        return axis == 0 ? p.x : (axis == 1 ? p.y : p.z);
    }

    double dist2_to(std::uint32_t idx, const double q[3]) const {
        const Point4& p = cloud_->points[idx];
        const double dx = q[0] - p.x;
        const double dy = q[1] - p.y;
        const double dz = q[2] - p.z;
        return dx * dx + dy * dy + dz * dz;
    }

    std::int32_t build(std::size_t begin, std::size_t end) {
        if (end - begin <= kLeafSize) {
            Node node;
            node.leaf = true;
            node.begin = static_cast<std::uint32_t>(begin);
            node.end = static_cast<std::uint32_t>(end);
            nodes_.push_back(node);
            return static_cast<std::int32_t>(nodes_.size() - 1);
        }
        // Split on the widest axis at the median.
        float lo[3] = {std::numeric_limits<float>::max(), std::numeric_limits<float>::max(),
                       std::numeric_limits<float>::max()};
        float hi[3] = {std::numeric_limits<float>::lowest(), std::numeric_limits<float>::lowest(),
                       std::numeric_limits<float>::lowest()};
        for (std::size_t i = begin; i < end; ++i) {
            for (unsigned a = 0; a < 3; ++a) {
                const float c = coord(order_[i], a);
                lo[a] = std::min(lo[a], c);
                hi[a] = std::max(hi[a], c);
            }
        }
        unsigned axis = 0;
        for (unsigned a = 1; a < 3; ++a) {
            if (hi[a] - lo[a] > hi[axis] - lo[axis]) {
                axis = a;
            }
        }
        const std::size_t mid = begin + (end - begin) / 2;
        std::nth_element(order_.begin() + static_cast<std::ptrdiff_t>(begin),
                         order_.begin() + static_cast<std::ptrdiff_t>(mid),
                         order_.begin() + static_cast<std::ptrdiff_t>(end),
                         [&](std::uint32_t a, std::uint32_t b) {
                             return coord(a, axis) < coord(b, axis);
                         });
        Node node;
        node.axis = static_cast<std::uint8_t>(axis);
        node.split = coord(order_[mid], axis);
        const std::size_t self = nodes_.size();
        nodes_.push_back(node);
        const std::int32_t left = build(begin, mid);
        const std::int32_t right = build(mid, end);
        nodes_[self].left = left;
        nodes_[self].right = right;
        return static_cast<std::int32_t>(self);
    }

    void knn_visit(std::int32_t ni, const double q[3], std::size_t k, std::uint32_t exclude,
                   std::vector<Neighbor>& heap) const {
        const Node& nd = nodes_[static_cast<std::size_t>(ni)];
        if (nd.leaf) {
            for (std::uint32_t i = nd.begin; i < nd.end; ++i) {
                const std::uint32_t idx = order_[i];
                if (idx == exclude) {
                    continue;
                }
                const Neighbor cand{idx, dist2_to(idx, q)};
                if (heap.size() < k) {
                    heap.push_back(cand);
                    std::push_heap(heap.begin(), heap.end(), closer);
                } else if (closer(cand, heap.front())) {
                    std::pop_heap(heap.begin(), heap.end(), closer);
                    heap.back() = cand;
                    std::push_heap(heap.begin(), heap.end(), closer);
                }
            }
            return;
        }
        const double diff = q[nd.axis] - nd.split;
        const std::int32_t near = diff < 0.0 ? nd.left : nd.right;
        const std::int32_t far = diff < 0.0 ? nd.right : nd.left;
        knn_visit(near, q, k, exclude, heap);
        // <= keeps equal-distance candidates on the far side reachable.
        if (heap.size() < k || diff * diff <= heap.front().dist2) {
            knn_visit(far, q, k, exclude, heap);
        }
    }

    void radius_visit(std::int32_t ni, const double q[3], double radius, double r2,
                      std::uint32_t exclude, std::vector<std::uint32_t>& out) const {
        const Node& nd = nodes_[static_cast<std::size_t>(ni)];
        if (nd.leaf) {
            for (std::uint32_t i = nd.begin; i < nd.end; ++i) {
                const std::uint32_t idx = order_[i];
                if (idx != exclude && dist2_to(idx, q) <= r2) {
                    out.push_back(idx);
                }
            }
            return;
        }
        const double diff = q[nd.axis] - nd.split;
        if (diff <= radius) {
            radius_visit(nd.left, q, radius, r2, exclude, out);
        }
        if (diff >= -radius) {
            radius_visit(nd.right, q, radius, r2, exclude, out);
        }
    }

    // Total order on candidates; the heap evicts the (dist2, index)-largest,
    // so ties at the k-th slot resolve the same way a sorted scan would.
    static bool closer(const Neighbor& a, const Neighbor& b) {
        return a.dist2 != b.dist2 ? a.dist2 < b.dist2 : a.index < b.index;
    }

    const PointCloud* cloud_;
    std::vector<std::uint32_t> order_;
    std::vector<Node> nodes_;
    std::int32_t root_ = -1;
};

// Per-point mean Euclidean distance to the k nearest neighbors.
inline std::vector<double> knn_mean_distance(const SpatialIndex& index, std::size_t k) {
    const std::size_t n = index.size();
    if (k < 1) {
        throw std::invalid_argument("knn_mean_distance: k must be >= 1");
    }
    if (k >= n) {
        throw std::invalid_argument("knn_mean_distance: need k < point count");
    }
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        const auto nb = index.knn(static_cast<std::uint32_t>(i), k);
        double sum = 0.0;
        for (const Neighbor& m : nb) {
            sum += std::sqrt(m.dist2);
        }
        out[i] = sum / static_cast<double>(nb.size());
    }
    return out;
}

}  // namespace sprayfilter
