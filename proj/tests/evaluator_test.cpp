#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>
#include <sprayfilter/evaluator.hpp>
#include <sprayfilter/rng.hpp>

#include "oracles.hpp"

using namespace sprayfilter;

namespace {

Detection det_at(double x, double conf, double w = 1.0, double l = 1.0, double h = 1.0) {
    Detection d;
    d.box = make_box(x, 0.0, 0.0, w, l, h, 0.0);
    d.confidence = conf;
    return d;
}

std::vector<RankedDetection> random_ranked(Rng& rng, std::size_t n, bool with_ties) {
    std::vector<RankedDetection> out;
    for (std::size_t i = 0; i < n; ++i) {
        const double conf = with_ties ? 0.1 * static_cast<double>(rng.uniform_index(6))
                                      : rng.uniform01();
        out.push_back({conf, rng.uniform01() < 0.5});
    }
    return out;
}

}  // namespace

TEST(AveragePrecision, HandComputedCases) {
    // Single true positive over one ground truth box.
    EXPECT_DOUBLE_EQ(*average_precision({{0.9, true}}, 1), 1.0);
    // A lower-confidence false positive after the hit changes nothing.
    EXPECT_DOUBLE_EQ(*average_precision({{0.9, true}, {0.5, false}}, 1), 1.0);
    // Only half the ground truth found.
    EXPECT_DOUBLE_EQ(*average_precision({{0.9, true}}, 2), 0.5);
    // A false positive ranked first costs precision at full recall.
    EXPECT_DOUBLE_EQ(*average_precision({{0.9, false}, {0.5, true}}, 1), 0.5);

    EXPECT_FALSE(average_precision({{0.9, true}}, 0).has_value());
    EXPECT_DOUBLE_EQ(*average_precision({}, 3), 0.0);

    EXPECT_DOUBLE_EQ(*average_precision({{0.9, true}}, 1, Interpolation::FortyPoint), 1.0);
    EXPECT_DOUBLE_EQ(*average_precision({{0.9, true}}, 2, Interpolation::FortyPoint), 0.5);
}

TEST(AveragePrecision, MatchesDirectRecomputation) {
    Rng rng(71);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = rng.uniform_index(12);
        const std::size_t gt = 1 + rng.uniform_index(6);
        const auto ranked = random_ranked(rng, n, trial % 2 == 0);
        for (const Interpolation interp : {Interpolation::AllPoint, Interpolation::FortyPoint}) {
            const auto got = average_precision(ranked, gt, interp);
            const auto want = oracle::direct_ap(ranked, gt, interp);
            ASSERT_TRUE(got.has_value());
            ASSERT_TRUE(want.has_value());
            EXPECT_EQ(*got, *want) << "trial " << trial;  // identical to the last bit
        }
    }
}

TEST(AveragePrecision, InvariantUnderMonotoneConfidenceTransform) {
    Rng rng(72);
    for (int trial = 0; trial < 50; ++trial) {
        const auto ranked = random_ranked(rng, 10, true);
        auto rescaled = ranked;
        for (RankedDetection& r : rescaled) {
            r.confidence = 2.0 * r.confidence + 1.0;
        }
        EXPECT_EQ(*average_precision(ranked, 4), *average_precision(rescaled, 4));
    }
}

TEST(AveragePrecision, TrailingFalsePositiveNeverHelps) {
    Rng rng(73);
    for (int trial = 0; trial < 50; ++trial) {
        auto ranked = random_ranked(rng, 8, false);
        const double base = *average_precision(ranked, 3);
        ranked.push_back({-1.0, false});  // ranked last
        EXPECT_LE(*average_precision(ranked, 3), base + 1e-15);
    }
}

TEST(PrCurve, TracksCumulativeCounts) {
    const auto pr = pr_curve({{0.9, true}, {0.8, false}, {0.7, true}}, 2);
    ASSERT_EQ(pr.size(), 3u);
    EXPECT_DOUBLE_EQ(pr[0].recall, 0.5);
    EXPECT_DOUBLE_EQ(pr[0].precision, 1.0);
    EXPECT_DOUBLE_EQ(pr[1].recall, 0.5);
    EXPECT_DOUBLE_EQ(pr[1].precision, 0.5);
    EXPECT_DOUBLE_EQ(pr[2].recall, 1.0);
    EXPECT_DOUBLE_EQ(pr[2].precision, 2.0 / 3.0);
}

TEST(MatchFrame, GreedyByConfidenceThenIou) {
    const std::vector<Box3D> gt = {make_box(0, 0, 0, 1, 1, 1, 0), make_box(5, 0, 0, 1, 1, 1, 0)};
    // Both detections overlap only the first box; the confident one claims it.
    const std::vector<Detection> dets = {det_at(0.2, 0.5), det_at(0.1, 0.9)};
    const FrameMatch m = match_frame(dets, gt, 0.5);
    ASSERT_EQ(m.det_gt.size(), 2u);
    EXPECT_EQ(m.det_gt[0], -1);
    EXPECT_EQ(m.det_gt[1], 0);
}

TEST(MatchFrame, PrefersLargerOverlap) {
    const std::vector<Box3D> gt = {make_box(0, 0, 0, 1, 1, 1, 0), make_box(0.5, 0, 0, 1, 1, 1, 0)};
    // Closer to the second box, so it takes that one and leaves the first.
    const std::vector<Detection> dets = {det_at(0.45, 0.9)};
    const FrameMatch m = match_frame(dets, gt, 0.3);
    EXPECT_EQ(m.det_gt[0], 1);
}

TEST(MatchFrame, IouTieTakesLowestGtIndex) {
    // Two identical ground-truth boxes produce exactly equal IoU.
    const std::vector<Box3D> gt = {make_box(0, 0, 0, 2, 2, 2, 0.3),
                                   make_box(0, 0, 0, 2, 2, 2, 0.3)};
    const FrameMatch m = match_frame(
        {Detection{make_box(0, 0, 0, 2, 2, 2, 0.3), 0.9, ObjectClass::Vehicle},
         Detection{make_box(0, 0, 0, 2, 2, 2, 0.3), 0.8, ObjectClass::Vehicle}},
        gt, 0.5);
    EXPECT_EQ(m.det_gt[0], 0);
    EXPECT_EQ(m.det_gt[1], 1);  // first box taken, second det gets the other
}

TEST(MatchFrame, ThresholdGatesMatches) {
    const std::vector<Box3D> gt = {make_box(0, 0, 0, 1, 1, 1, 0)};
    const std::vector<Detection> low = {det_at(0.6, 0.9)};  // IoU = 0.25
    EXPECT_EQ(match_frame(low, gt, 0.5).det_gt[0], -1);
    EXPECT_EQ(match_frame(low, gt, 0.2).det_gt[0], 0);

    const std::vector<Detection> exact = {
        Detection{make_box(0, 0, 0, 1, 1, 1, 0), 0.9, ObjectClass::Vehicle}};
    EXPECT_EQ(match_frame(exact, gt, 1.0).det_gt[0], 0);  // self IoU is exactly 1

    EXPECT_THROW(match_frame(low, gt, 0.0), std::invalid_argument);
    EXPECT_THROW(match_frame(low, gt, 1.2), std::invalid_argument);
}

TEST(EvaluateRanges, SplitsByRangeAndPoolsOverall) {
    std::vector<EvalFrame> frames(2);
    frames[0].gt_boxes = {make_box(10, 0, 0, 2, 4, 2, 0)};
    frames[0].detections = {
        Detection{make_box(10, 0, 0, 2, 4, 2, 0), 0.9, ObjectClass::Vehicle},     // TP at 10 m
        Detection{make_box(30, 0, 0, 2, 4, 2, 0), 0.8, ObjectClass::Vehicle}};    // FP at 30 m
    frames[1].gt_boxes = {make_box(30, 0, 0, 2, 4, 2, 0)};
    frames[1].detections = {
        Detection{make_box(30, 0, 0, 2, 4, 2, 0), 0.7, ObjectClass::Vehicle}};    // TP at 30 m

    const EvalReport rep = evaluate_ranges(frames);
    ASSERT_EQ(rep.bins.size(), 3u);  // two configured bins plus overall
    EXPECT_EQ(rep.frame_count, 2u);
    EXPECT_EQ(rep.ghost_count, 1u);

    const RangeBinResult& near = rep.bins[0];
    EXPECT_EQ(near.gt_count, 1u);
    EXPECT_EQ(near.tp_count, 1u);
    EXPECT_EQ(near.fp_count, 0u);
    EXPECT_EQ(near.fn_count, 0u);
    EXPECT_DOUBLE_EQ(*near.ap, 1.0);

    const RangeBinResult& far = rep.bins[1];
    EXPECT_EQ(far.gt_count, 1u);
    EXPECT_EQ(far.tp_count, 1u);
    EXPECT_EQ(far.fp_count, 1u);
    EXPECT_DOUBLE_EQ(*far.ap, 0.5);

    const RangeBinResult& overall = rep.bins[2];
    EXPECT_EQ(overall.gt_count, 2u);
    EXPECT_EQ(overall.tp_count, 2u);
    EXPECT_EQ(overall.fp_count, 1u);
    EXPECT_DOUBLE_EQ(*overall.ap, 0.5 + 1.0 / 3.0);
    EXPECT_EQ(overall.pr.size(), 3u);
}

TEST(EvaluateRanges, TruePositiveLandsInGroundTruthBin) {
    // Ground truth just inside the near bin; the matching detection's own
    // center is past the edge, which must not move the hit to the far bin.
    std::vector<EvalFrame> frames(1);
    frames[0].gt_boxes = {make_box(24.0, 0, 0, 2, 6, 2, 0)};
    frames[0].detections = {
        Detection{make_box(25.6, 0, 0, 2, 6, 2, 0), 0.9, ObjectClass::Vehicle}};
    EvalConfig cfg;
    cfg.iou_threshold = 0.5;
    const EvalReport rep = evaluate_ranges(frames, cfg);
    EXPECT_EQ(rep.bins[0].tp_count, 1u);
    EXPECT_EQ(rep.bins[0].gt_count, 1u);
    EXPECT_EQ(rep.bins[1].tp_count, 0u);
    EXPECT_EQ(rep.bins[1].fp_count, 0u);
    EXPECT_EQ(rep.ghost_count, 0u);
}

TEST(EvaluateRanges, BinEdgesAreLoInclusiveHiExclusive) {
    std::vector<EvalFrame> frames(1);
    frames[0].gt_boxes = {make_box(25.0, 0, 0, 2, 4, 2, 0)};  // exactly on the edge
    frames[0].detections = {};
    const EvalReport rep = evaluate_ranges(frames);
    EXPECT_EQ(rep.bins[0].gt_count, 0u);
    EXPECT_EQ(rep.bins[1].gt_count, 1u);
    EXPECT_FALSE(rep.bins[0].ap.has_value());  // no ground truth, undefined
    EXPECT_DOUBLE_EQ(*rep.bins[1].ap, 0.0);    // ground truth but nothing found
}

TEST(EvaluateRanges, UndefinedApStaysUndefinedDespiteFalsePositives) {
    std::vector<EvalFrame> frames(1);
    frames[0].gt_boxes = {make_box(5.0, 0, 0, 2, 4, 2, 0)};
    frames[0].detections = {
        Detection{make_box(5.0, 0, 0, 2, 4, 2, 0), 0.9, ObjectClass::Vehicle},
        Detection{make_box(40.0, 0, 0, 2, 4, 2, 0), 0.8, ObjectClass::Vehicle}};
    const EvalReport rep = evaluate_ranges(frames);
    EXPECT_FALSE(rep.bins[1].ap.has_value());
    EXPECT_EQ(rep.bins[1].fp_count, 1u);
    EXPECT_EQ(rep.ghost_count, 1u);
}

TEST(EvaluateRanges, CountsStayConsistentOnRandomScenes) {
    Rng rng(74);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<EvalFrame> frames(3 + rng.uniform_index(3));
        for (EvalFrame& f : frames) {
            const std::size_t ng = rng.uniform_index(4);
            for (std::size_t g = 0; g < ng; ++g) {
                const double r = rng.uniform(2.0, 45.0);
                const double ang = rng.uniform(-0.5, 0.5);
                f.gt_boxes.push_back(make_box(r * std::cos(ang), r * std::sin(ang), 0.5, 1.9,
                                              4.5, 1.6, rng.uniform(-0.3, 0.3)));
                if (rng.uniform01() < 0.7) {  // found with a small jitter
                    Detection d;
                    d.box = f.gt_boxes.back();
                    d.box.x += rng.uniform(-0.2, 0.2);
                    d.confidence = rng.uniform01();
                    f.detections.push_back(d);
                }
            }
            const std::size_t nfp = rng.uniform_index(3);
            for (std::size_t k = 0; k < nfp; ++k) {
                Detection d;
                d.box = make_box(rng.uniform(1.0, 48.0), rng.uniform(-8.0, 8.0), 0.5, 1.0, 2.0,
                                 1.0, 0.0);
                d.confidence = rng.uniform01();
                f.detections.push_back(d);
            }
        }
        EvalConfig cfg;
        cfg.iou_threshold = 0.5;
        const EvalReport rep = evaluate_ranges(frames, cfg);
        std::size_t frame_gt = 0;
        std::size_t frame_det = 0;
        for (const EvalFrame& f : frames) {
            frame_gt += f.gt_boxes.size();
            frame_det += f.detections.size();
        }
        const RangeBinResult& overall = rep.bins.back();
        EXPECT_EQ(overall.gt_count, frame_gt);
        EXPECT_EQ(overall.tp_count + overall.fp_count, frame_det);
        EXPECT_EQ(overall.fp_count, rep.ghost_count);
        for (const RangeBinResult& bin : rep.bins) {
            EXPECT_EQ(bin.tp_count + bin.fn_count, bin.gt_count);
            EXPECT_EQ(bin.pr.size(), bin.tp_count + bin.fp_count);
        }
        // The two configured bins partition the overall pool.
        EXPECT_EQ(rep.bins[0].gt_count + rep.bins[1].gt_count, overall.gt_count);
        EXPECT_EQ(rep.bins[0].tp_count + rep.bins[1].tp_count, overall.tp_count);
        EXPECT_EQ(rep.bins[0].fp_count + rep.bins[1].fp_count, overall.fp_count);
    }
}

TEST(EvaluateRanges, FrameOrderIrrelevantForDistinctConfidences) {
    Rng rng(75);
    std::vector<EvalFrame> frames(4);
    double conf = 0.99;
    for (EvalFrame& f : frames) {
        const double r = rng.uniform(5.0, 40.0);
        f.gt_boxes.push_back(make_box(r, 0, 0.5, 1.9, 4.5, 1.6, 0));
        Detection d;
        d.box = f.gt_boxes.back();
        d.confidence = conf;
        conf -= 0.07;
        f.detections.push_back(d);
        d.box = make_box(r, 6.0, 0.5, 1.0, 2.0, 1.0, 0);
        d.confidence = conf;
        conf -= 0.07;
        f.detections.push_back(d);
    }
    const EvalReport fwd = evaluate_ranges(frames);
    std::reverse(frames.begin(), frames.end());
    const EvalReport rev = evaluate_ranges(frames);
    for (std::size_t b = 0; b < fwd.bins.size(); ++b) {
        ASSERT_EQ(fwd.bins[b].ap.has_value(), rev.bins[b].ap.has_value());
        if (fwd.bins[b].ap) {
            EXPECT_EQ(*fwd.bins[b].ap, *rev.bins[b].ap);
        }
    }
}

TEST(EvaluateRanges, RejectsBadConfig) {
    EvalConfig cfg;
    cfg.iou_threshold = 0.0;
    EXPECT_THROW(evaluate_ranges({}, cfg), std::invalid_argument);
    cfg = {};
    cfg.range_bins = {{0.0, 30.0}, {25.0, 50.0}};
    EXPECT_THROW(evaluate_ranges({}, cfg), std::invalid_argument);
    cfg = {};
    cfg.range_bins = {{10.0, 10.0}};
    EXPECT_THROW(evaluate_ranges({}, cfg), std::invalid_argument);
    cfg = {};
    EXPECT_NO_THROW(evaluate_ranges({}, cfg));
}
