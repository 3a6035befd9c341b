#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sprayfilter/geometry.hpp"
#include "sprayfilter/spatial_index.hpp"
#include "sprayfilter/types.hpp"

namespace sprayfilter {

struct FilterResult {
    std::vector<std::uint8_t> keep_mask;  // one byte per input point
    PointCloud filtered;                  // kept points, input order preserved
    std::size_t kept_count = 0;
    std::string warning;  // non-empty when the filter degraded to pass-through
};

inline PointCloud apply_mask(const PointCloud& cloud, const std::vector<std::uint8_t>& keep_mask) {
    if (cloud.size() != keep_mask.size()) {
        throw std::invalid_argument("apply_mask: mask length does not match cloud");
    }
    PointCloud out;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (keep_mask[i]) {
            out.points.push_back(cloud.points[i]);
        }
    }
    return out;
}

namespace detail {

inline FilterResult from_mask(const PointCloud& cloud, std::vector<std::uint8_t> mask,
                              std::string warning = {}) {
    FilterResult r;
    r.keep_mask = std::move(mask);
    r.filtered = apply_mask(cloud, r.keep_mask);
    r.kept_count = r.filtered.size();
    r.warning = std::move(warning);
    return r;
}

}  // namespace detail

// Keeps points whose anomaly score is at or below tau. Larger scores mean
// more anomalous, so raising tau keeps more points.
inline FilterResult threshold_filter(const PointCloud& cloud, const ScoreArray& scores, float tau) {
    if (cloud.size() != scores.size()) {
        throw std::invalid_argument("threshold_filter: score length does not match cloud");
    }
    if (!std::isfinite(tau)) {
        throw std::invalid_argument("threshold_filter: tau must be finite");
    }
    std::vector<std::uint8_t> mask(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        mask[i] = scores[i] <= tau ? 1 : 0;
    }
    return detail::from_mask(cloud, std::move(mask));
}

// Smallest tau that keeps at least the requested fraction of these scores,
// which are assumed to come from points worth keeping. With n scores the
// achievable keep fractions are m/n, so the realized rate lands in
// [tpr, tpr + 1/n].
inline float calibrate_threshold(ScoreArray valid_scores, double tpr) {
    if (valid_scores.empty()) {
        throw std::invalid_argument("calibrate_threshold: no scores given");
    }
    if (!(tpr > 0.0) || !(tpr <= 1.0)) {
        throw std::invalid_argument("calibrate_threshold: tpr must be in (0, 1]");
    }
    std::sort(valid_scores.begin(), valid_scores.end());
    const auto n = static_cast<double>(valid_scores.size());
    // The epsilon absorbs cases like 0.9 * 10 evaluating to just above 9.
    auto m = static_cast<std::size_t>(std::ceil(tpr * n - 1e-9));
    m = std::clamp<std::size_t>(m, 1, valid_scores.size());
    return valid_scores[m - 1];
}

// Statistical outlier removal with a range-scaled cutoff. Lidar returns thin
// out with distance, so a fixed mean-kNN-distance cutoff would strip sparse
// far geometry; scaling the cutoff by range keeps it and still drops dense
// nearby noise.
struct DsorParams {
    std::size_t k = 5;       // neighbors per point
    double s = 1.0;          // global cutoff = mean + s * stddev
    double m = 0.3;          // range multiplier
};

inline FilterResult dsor_filter(const PointCloud& cloud, const DsorParams& params = {}) {
    if (params.k < 1) {
        throw std::invalid_argument("dsor_filter: k must be >= 1");
    }
    if (!std::isfinite(params.s)) {
        throw std::invalid_argument("dsor_filter: s must be finite");
    }
    if (!(params.m > 0.0) || !std::isfinite(params.m)) {
        throw std::invalid_argument("dsor_filter: m must be positive");
    }
    const std::size_t n = cloud.size();
    if (n == 0) {
        return detail::from_mask(cloud, {});
    }
    if (n <= params.k) {
        return detail::from_mask(cloud, std::vector<std::uint8_t>(n, 1),
                                 "dsor: cloud has too few points for k neighbors, passed through");
    }
    const SpatialIndex index(cloud);
    const std::vector<double> d = knn_mean_distance(index, params.k);
    double mean = 0.0;
    for (const double v : d) {
        mean += v;
    }
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (const double v : d) {
        var += (v - mean) * (v - mean);
    }
    var /= static_cast<double>(n);
    const double global_cutoff = mean + params.s * std::sqrt(var);
    std::vector<std::uint8_t> mask(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double range = std::max(1.0, bev_range(cloud.points[i]));
        mask[i] = d[i] < global_cutoff * params.m * range ? 1 : 0;
    }
    return detail::from_mask(cloud, std::move(mask));
}

// Radius outlier removal with a range-proportional search radius.
struct DrorParams {
    double alpha = 0.0084;       // radians; radius grows with range
    double min_radius = 0.04;    // meters
    std::size_t min_neighbors = 3;
};

inline FilterResult dror_filter(const PointCloud& cloud, const DrorParams& params = {}) {
    if (!(params.alpha > 0.0) || !std::isfinite(params.alpha)) {
        throw std::invalid_argument("dror_filter: alpha must be positive");
    }
    if (!(params.min_radius > 0.0) || !std::isfinite(params.min_radius)) {
        throw std::invalid_argument("dror_filter: min_radius must be positive");
    }
    if (params.min_neighbors < 1) {
        throw std::invalid_argument("dror_filter: min_neighbors must be >= 1");
    }
    const std::size_t n = cloud.size();
    if (n == 0) {
        return detail::from_mask(cloud, {});
    }
    const SpatialIndex index(cloud);
    std::vector<std::uint8_t> mask(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double radius = std::max(params.min_radius, params.alpha * bev_range(cloud.points[i]));
        mask[i] = index.radius_count(static_cast<std::uint32_t>(i), radius) >= params.min_neighbors
                      ? 1
                      : 0;
    }
    return detail::from_mask(cloud, std::move(mask));
}

// How a keep mask treats labeled points. Spray is the noise class; everything
// else counts as valid. Ratios whose denominator is zero are left unset.
struct FilterMetrics {
    std::optional<double> valid_tpr;        // kept valid / all valid
    std::optional<double> noise_recall;     // removed spray / all spray
    std::optional<double> noise_precision;  // removed spray / all removed
};

inline FilterMetrics compute_filter_metrics(const std::vector<std::uint8_t>& keep_mask,
                                            const PointLabelArray& labels) {
    if (keep_mask.size() != labels.size()) {
        throw std::invalid_argument("compute_filter_metrics: mask length does not match labels");
    }
    std::size_t valid_total = 0;
    std::size_t valid_kept = 0;
    std::size_t spray_total = 0;
    std::size_t spray_removed = 0;
    std::size_t removed_total = 0;
    for (std::size_t i = 0; i < keep_mask.size(); ++i) {
        const bool kept = keep_mask[i] != 0;
        const bool spray = labels[i] == PointClass::Spray;
        if (spray) {
            ++spray_total;
            if (!kept) {
                ++spray_removed;
            }
        } else {
            ++valid_total;
            if (kept) {
                ++valid_kept;
            }
        }
        if (!kept) {
            ++removed_total;
        }
    }
    FilterMetrics m;
    if (valid_total > 0) {
        m.valid_tpr = static_cast<double>(valid_kept) / static_cast<double>(valid_total);
    }
    if (spray_total > 0) {
        m.noise_recall = static_cast<double>(spray_removed) / static_cast<double>(spray_total);
    }
    if (removed_total > 0) {
        m.noise_precision = static_cast<double>(spray_removed) / static_cast<double>(removed_total);
    }
    return m;
}

}  // namespace sprayfilter
