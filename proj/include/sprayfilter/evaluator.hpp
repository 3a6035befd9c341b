#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "sprayfilter/geometry.hpp"
#include "sprayfilter/io.hpp"
#include "sprayfilter/types.hpp"

namespace sprayfilter {

enum class Interpolation {
    AllPoint,
    FortyPoint,
};

struct RankedDetection {
    double confidence = 0.0;
    bool is_tp = false;
};

struct PrPoint {
    double recall = 0.0;
    double precision = 0.0;
};

// Raw precision/recall after each detection in rank order. Ties keep their
// incoming order, so callers control tie placement by how they pool frames.
inline std::vector<PrPoint> pr_curve(std::vector<RankedDetection> ranked, std::size_t gt_count) {
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const RankedDetection& a, const RankedDetection& b) {
                         return a.confidence > b.confidence;
                     });
    std::vector<PrPoint> out;
    out.reserve(ranked.size());
    double tp = 0.0;
    double fp = 0.0;
    for (const RankedDetection& r : ranked) {
        (r.is_tp ? tp : fp) += 1.0;
        out.push_back({gt_count > 0 ? tp / static_cast<double>(gt_count) : 0.0, tp / (tp + fp)});
    }
    return out;
}

// Area under the interpolated precision/recall curve. Undefined when there
// is no ground truth, and the caller has to deal with that; it is not zero.
inline std::optional<double> average_precision(const std::vector<RankedDetection>& ranked,
                                               std::size_t gt_count,
                                               Interpolation interp = Interpolation::AllPoint) {
    if (gt_count == 0) {
        return std::nullopt;
    }
    const std::vector<PrPoint> pr = pr_curve(ranked, gt_count);
    const std::size_t n = pr.size();
    if (n == 0) {
        return 0.0;
    }
    std::vector<double> best(n);  // best achievable precision at or past each rank
    best[n - 1] = pr[n - 1].precision;
    for (std::size_t i = n - 1; i-- > 0;) {
        best[i] = std::max(pr[i].precision, best[i + 1]);
    }
    if (interp == Interpolation::AllPoint) {
        double ap = 0.0;
        double prev_recall = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            ap += (pr[i].recall - prev_recall) * best[i];
            prev_recall = pr[i].recall;
        }
        return ap;
    }
    double sum = 0.0;
    for (int j = 1; j <= 40; ++j) {
        const double want = static_cast<double>(j) / 40.0;
        double p = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            if (pr[i].recall >= want) {
                p = best[i];
                break;
            }
        }
        sum += p;
    }
    return sum / 40.0;
}

// Greedy matching within one frame: detections claim ground truth in
// confidence order, each taking the free box it overlaps most. det_gt holds
// the matched ground-truth index per detection (original order), -1 for none
// at or above the IoU threshold.
struct FrameMatch {
    std::vector<int> det_gt;
};

inline FrameMatch match_frame(const std::vector<Detection>& detections,
                              const std::vector<Box3D>& gt_boxes, double iou_threshold) {
    if (!(iou_threshold > 0.0) || !(iou_threshold <= 1.0)) {
        throw std::invalid_argument("match_frame: iou_threshold must be in (0, 1]");
    }
    std::vector<std::size_t> order(detections.size());
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return detections[a].confidence > detections[b].confidence;
    });
    FrameMatch m;
    m.det_gt.assign(detections.size(), -1);
    std::vector<std::uint8_t> taken(gt_boxes.size(), 0);
    for (const std::size_t di : order) {
        double best_iou = 0.0;
        int best_gt = -1;
        for (std::size_t gi = 0; gi < gt_boxes.size(); ++gi) {
            if (taken[gi]) {
                continue;
            }
            const double iou = box_iou_3d(detections[di].box, gt_boxes[gi]);
            if (iou > best_iou) {
                best_iou = iou;
                best_gt = static_cast<int>(gi);
            }
        }
        if (best_gt >= 0 && best_iou >= iou_threshold) {
            m.det_gt[di] = best_gt;
            taken[static_cast<std::size_t>(best_gt)] = 1;
        }
    }
    return m;
}

struct RangeBin {
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
};

struct EvalConfig {
    double iou_threshold = 0.7;
    std::vector<RangeBin> range_bins = {{0.0, 25.0}, {25.0, std::numeric_limits<double>::infinity()}};
    Interpolation interpolation = Interpolation::AllPoint;
};

inline void validate_eval_config(const EvalConfig& cfg) {
    if (!(cfg.iou_threshold > 0.0) || !(cfg.iou_threshold <= 1.0)) {
        throw std::invalid_argument("evaluate: iou_threshold must be in (0, 1]");
    }
    for (const RangeBin& b : cfg.range_bins) {
        if (!(b.lo >= 0.0) || !(b.hi > b.lo)) {
            throw std::invalid_argument("evaluate: range bin needs 0 <= lo < hi");
        }
    }
    for (std::size_t i = 0; i < cfg.range_bins.size(); ++i) {
        for (std::size_t j = i + 1; j < cfg.range_bins.size(); ++j) {
            const RangeBin& a = cfg.range_bins[i];
            const RangeBin& b = cfg.range_bins[j];
            if (a.lo < b.hi && b.lo < a.hi) {
                throw std::invalid_argument("evaluate: range bins overlap");
            }
        }
    }
}

struct EvalFrame {
    std::vector<Detection> detections;
    std::vector<Box3D> gt_boxes;
};

inline EvalFrame to_eval_frame(const FrameBundle& bundle) {
    EvalFrame f;
    if (bundle.detections) {
        f.detections = *bundle.detections;
    }
    f.gt_boxes = bundle.gt_boxes;
    return f;
}

struct RangeBinResult {
    RangeBin bin;
    std::optional<double> ap;  // unset when the bin holds no ground truth
    std::size_t gt_count = 0;
    std::size_t tp_count = 0;
    std::size_t fp_count = 0;
    std::size_t fn_count = 0;  // gt_count - tp_count
    std::vector<PrPoint> pr;   // raw curve the AP integrates
};

struct EvalReport {
    std::vector<RangeBinResult> bins;  // configured bins, then the overall bin
    std::size_t ghost_count = 0;       // detections matching no ground truth, all frames
    std::size_t frame_count = 0;
};

// Matches each frame once against all of its ground truth, then scores each
// range bin separately. A true positive lands in the bin of the ground-truth
// box it matched; a false positive lands in the bin of its own center. Bin
// membership is lo <= bev_range < hi.
inline EvalReport evaluate_ranges(const std::vector<EvalFrame>& frames,
                                  const EvalConfig& cfg = {}) {
    validate_eval_config(cfg);
    std::vector<RangeBin> bins = cfg.range_bins;
    bins.push_back({0.0, std::numeric_limits<double>::infinity()});
    const auto bin_of = [&](double range, std::size_t bin_idx) {
        return range >= bins[bin_idx].lo && range < bins[bin_idx].hi;
    };
    std::vector<std::vector<RankedDetection>> ranked(bins.size());
    std::vector<std::size_t> gt_counts(bins.size(), 0);
    EvalReport report;
    report.frame_count = frames.size();
    for (const EvalFrame& frame : frames) {
        const FrameMatch match = match_frame(frame.detections, frame.gt_boxes, cfg.iou_threshold);
        for (const Box3D& gt : frame.gt_boxes) {
            const double r = bev_range(gt);
            for (std::size_t b = 0; b < bins.size(); ++b) {
                if (bin_of(r, b)) {
                    ++gt_counts[b];
                }
            }
        }
        for (std::size_t di = 0; di < frame.detections.size(); ++di) {
            const Detection& det = frame.detections[di];
            const int gi = match.det_gt[di];
            const bool tp = gi >= 0;
            const double r =
                tp ? bev_range(frame.gt_boxes[static_cast<std::size_t>(gi)]) : bev_range(det.box);
            if (!tp) {
                ++report.ghost_count;
            }
            for (std::size_t b = 0; b < bins.size(); ++b) {
                if (bin_of(r, b)) {
                    ranked[b].push_back({det.confidence, tp});
                }
            }
        }
    }
    for (std::size_t b = 0; b < bins.size(); ++b) {
        RangeBinResult res;
        res.bin = bins[b];
        res.gt_count = gt_counts[b];
        res.ap = average_precision(ranked[b], gt_counts[b], cfg.interpolation);
        res.pr = pr_curve(ranked[b], gt_counts[b]);
        for (const RankedDetection& r : ranked[b]) {
            (r.is_tp ? res.tp_count : res.fp_count) += 1;
        }
        res.fn_count = res.gt_count - res.tp_count;
        report.bins.push_back(std::move(res));
    }
    return report;
}

}  // namespace sprayfilter
