#include "sprayfilter/pipeline.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cstring>
#include <string>
#include <vector>

#include "sprayfilter/simulator.hpp"
#include "test_util.hpp"

namespace sf = sprayfilter;

namespace {

std::vector<sf::FrameBundle> wet_frames(std::size_t count, std::uint64_t base_seed,
                                        double clutter_prob = 0.0) {
    sf::SceneConfig cfg;
    cfg.speed = sf::SpeedClass::Kmh130;
    cfg.score_separation = 5.0;
    cfg.clutter_target_prob = clutter_prob;
    return sf::generate_bundles(cfg, count, base_seed);
}

bool same_detections(const std::vector<sf::Detection>& a, const std::vector<sf::Detection>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        // Field-wise: the struct has tail padding after the class enum.
        if (std::memcmp(&a[i].box, &b[i].box, sizeof(sf::Box3D)) != 0 ||
            a[i].confidence != b[i].confidence || a[i].class_id != b[i].class_id) {
            return false;
        }
    }
    return true;
}

void expect_same_report(const sf::EvalReport& a, const sf::EvalReport& b) {
    ASSERT_EQ(a.bins.size(), b.bins.size());
    for (std::size_t i = 0; i < a.bins.size(); ++i) {
        EXPECT_EQ(a.bins[i].ap.has_value(), b.bins[i].ap.has_value());
        if (a.bins[i].ap && b.bins[i].ap) {
            EXPECT_EQ(*a.bins[i].ap, *b.bins[i].ap);
        }
        EXPECT_EQ(a.bins[i].gt_count, b.bins[i].gt_count);
        EXPECT_EQ(a.bins[i].tp_count, b.bins[i].tp_count);
        EXPECT_EQ(a.bins[i].fp_count, b.bins[i].fp_count);
    }
    EXPECT_EQ(a.ghost_count, b.ghost_count);
    EXPECT_EQ(a.frame_count, b.frame_count);
}

}  // namespace

TEST(Pipeline, NoneFilterMatchesDirectDetector) {
    const auto frames = wet_frames(4, 10);
    sf::PipelineConfig cfg;
    const sf::PipelineResult res = sf::run_pipeline(frames, cfg);
    ASSERT_EQ(res.frames.size(), frames.size());
    EXPECT_FALSE(res.tau.has_value());
    for (std::size_t i = 0; i < frames.size(); ++i) {
        const sf::FrameOutput& out = res.frames[i];
        EXPECT_EQ(out.frame_id, frames[i].frame_id);
        EXPECT_EQ(out.keep_mask.size(), frames[i].cloud.size());
        EXPECT_TRUE(std::all_of(out.keep_mask.begin(), out.keep_mask.end(),
                                [](std::uint8_t v) { return v == 1; }));
        EXPECT_TRUE(same_detections(out.detections,
                                    sf::cluster_detect(frames[i].cloud, cfg.detector)));
        EXPECT_EQ(out.gated_away, 0u);
    }
}

TEST(Pipeline, ThresholdFilterCutsGhostDetections) {
    const auto frames = wet_frames(30, 20);
    sf::PipelineConfig raw;
    sf::PipelineConfig filtered = raw;
    filtered.filter.method = sf::FilterMethod::Threshold;
    filtered.filter.calibrate_tpr = 0.99;
    const sf::EvalReport none = sf::run_pipeline(frames, raw).report;
    const sf::PipelineResult with_filter = sf::run_pipeline(frames, filtered);
    ASSERT_TRUE(with_filter.tau.has_value());
    EXPECT_GT(none.ghost_count, 0u) << "spray should produce ghost detections unfiltered";
    EXPECT_LT(with_filter.report.ghost_count, none.ghost_count);
}

TEST(Pipeline, WorkerCountDoesNotChangeOutput) {
    const auto frames = wet_frames(6, 30, 0.5);
    sf::PipelineConfig cfg;
    cfg.filter.method = sf::FilterMethod::Threshold;
    cfg.filter.calibrate_tpr = 0.95;
    cfg.gate_enabled = true;
    cfg.gate.gamma = 1.0;
    cfg.workers = 1;
    const sf::PipelineResult serial = sf::run_pipeline(frames, cfg);
    cfg.workers = 3;
    const sf::PipelineResult parallel = sf::run_pipeline(frames, cfg);
    ASSERT_EQ(serial.frames.size(), parallel.frames.size());
    EXPECT_EQ(serial.tau, parallel.tau);
    for (std::size_t i = 0; i < serial.frames.size(); ++i) {
        EXPECT_EQ(serial.frames[i].frame_id, parallel.frames[i].frame_id);
        EXPECT_EQ(serial.frames[i].keep_mask, parallel.frames[i].keep_mask);
        EXPECT_TRUE(same_detections(serial.frames[i].detections, parallel.frames[i].detections));
        EXPECT_EQ(serial.frames[i].gated_away, parallel.frames[i].gated_away);
    }
    expect_same_report(serial.report, parallel.report);
}

TEST(Pipeline, CalibratedTauMatchesManualCalibration) {
    const auto frames = wet_frames(8, 40);
    sf::PipelineConfig cfg;
    cfg.filter.method = sf::FilterMethod::Threshold;
    cfg.filter.calibrate_tpr = 0.95;
    const sf::PipelineResult res = sf::run_pipeline(frames, cfg);
    ASSERT_TRUE(res.tau.has_value());
    EXPECT_EQ(*res.tau, sf::calibrate_threshold(sf::pool_valid_scores(frames), 0.95));

    cfg.filter.calibrate_tpr.reset();
    cfg.filter.tau = 1.25f;
    const sf::PipelineResult fixed = sf::run_pipeline(frames, cfg);
    ASSERT_TRUE(fixed.tau.has_value());
    EXPECT_EQ(*fixed.tau, 1.25f);
}

TEST(Pipeline, GateDropsGhostsThatLackRadarSupport) {
    const auto frames = wet_frames(30, 50);
    sf::PipelineConfig cfg;
    const sf::EvalReport open = sf::run_pipeline(frames, cfg).report;
    cfg.gate_enabled = true;
    cfg.gate.gamma = 1.0;
    const sf::PipelineResult gated = sf::run_pipeline(frames, cfg);
    ASSERT_GT(open.ghost_count, 0u);
    EXPECT_LT(gated.report.ghost_count, open.ghost_count);
    std::size_t gated_away = 0;
    for (const sf::FrameOutput& f : gated.frames) {
        gated_away += f.gated_away;
    }
    EXPECT_GT(gated_away, 0u);
}

TEST(Pipeline, MissingInputsThrow) {
    auto frames = wet_frames(2, 60);
    sf::PipelineConfig cfg;
    cfg.filter.method = sf::FilterMethod::Threshold;
    cfg.filter.tau = 0.0f;
    frames[1].scores.reset();
    EXPECT_THROW(sf::run_pipeline(frames, cfg), std::invalid_argument);

    frames = wet_frames(2, 60);
    cfg = {};
    cfg.gate_enabled = true;
    frames[0].radar.reset();
    EXPECT_THROW(sf::run_pipeline(frames, cfg), std::invalid_argument);

    cfg = {};
    cfg.eval.iou_threshold = 0.0;
    EXPECT_THROW(sf::run_pipeline(frames, cfg), std::invalid_argument);
}

TEST(PoolValidScores, SkipsSprayPoints) {
    auto frames = wet_frames(3, 70);
    const sf::ScoreArray pool = sf::pool_valid_scores(frames);
    std::size_t valid = 0;
    for (const sf::FrameBundle& f : frames) {
        for (const sf::PointClass c : *f.labels) {
            valid += c != sf::PointClass::Spray;
        }
    }
    EXPECT_EQ(pool.size(), valid);
    frames[0].labels.reset();
    EXPECT_THROW(sf::pool_valid_scores(frames), std::invalid_argument);
}

TEST(SweepTau, SingleLevelMatchesDirectRun) {
    const auto frames = wet_frames(10, 80);
    sf::PipelineConfig base;
    const auto entries = sf::sweep_tau(frames, {0.95}, base);
    ASSERT_EQ(entries.size(), 1u);
    sf::PipelineConfig direct = base;
    direct.filter.method = sf::FilterMethod::Threshold;
    direct.filter.calibrate_tpr = 0.95;
    const sf::PipelineResult res = sf::run_pipeline(frames, direct);
    EXPECT_EQ(entries[0].tpr, 0.95);
    EXPECT_EQ(entries[0].tau, *res.tau);
    expect_same_report(entries[0].report, res.report);
}

TEST(SweepTau, TauRisesWithKeepRate) {
    const auto frames = wet_frames(10, 90);
    const auto entries = sf::sweep_tau(frames, {0.90, 0.95, 0.99}, sf::PipelineConfig{});
    ASSERT_EQ(entries.size(), 3u);
    EXPECT_LE(entries[0].tau, entries[1].tau);
    EXPECT_LE(entries[1].tau, entries[2].tau);
}

TEST(SweepGamma, SurvivorCountsGrowWithPadding) {
    auto frames = wet_frames(20, 100);
    const sf::ClusterParams det;
    for (sf::FrameBundle& f : frames) {
        f.detections = sf::cluster_detect(f.cloud, det);
    }
    const auto entries =
        sf::sweep_gamma(frames, {0.0, 0.5, 1.5}, sf::GateConfig{}, sf::EvalConfig{});
    ASSERT_EQ(entries.size(), 3u);
    std::size_t prev = 0;
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const sf::RangeBinResult& overall = entries[i].report.bins.back();
        const std::size_t survivors = overall.tp_count + overall.fp_count;
        EXPECT_GE(survivors, prev) << "gamma " << entries[i].gamma;
        prev = survivors;
    }
}

TEST(SweepGamma, RequiresDetectionsAndRadar) {
    auto frames = wet_frames(2, 110);
    EXPECT_THROW(sf::sweep_gamma(frames, {0.0}, sf::GateConfig{}, sf::EvalConfig{}),
                 std::invalid_argument);
    for (sf::FrameBundle& f : frames) {
        f.detections = std::vector<sf::Detection>{};
    }
    frames[1].radar.reset();
    EXPECT_THROW(sf::sweep_gamma(frames, {0.0}, sf::GateConfig{}, sf::EvalConfig{}),
                 std::invalid_argument);
}

TEST(ReportRendering, TableMarksMissingBinsAndAlignsColumns) {
    // One detection, one nearby ground-truth box, nothing in the far bin.
    sf::EvalFrame frame;
    frame.gt_boxes.push_back(sf::make_box(10, 0, 0.8, 1.9, 4.5, 1.6, 0.0));
    frame.detections.push_back({frame.gt_boxes.front(), 0.9});
    const sf::EvalReport report = sf::evaluate_ranges({frame}, sf::EvalConfig{});
    const std::string table = sf::render_report_table({{"run", report}});
    EXPECT_NE(table.find("variant"), std::string::npos);
    EXPECT_NE(table.find("0-25 m"), std::string::npos);
    EXPECT_NE(table.find("25-inf m"), std::string::npos);
    EXPECT_NE(table.find("overall"), std::string::npos);
    EXPECT_NE(table.find("ghosts"), std::string::npos);
    EXPECT_NE(table.find("undefined"), std::string::npos) << table;
    EXPECT_NE(table.find("1.0000"), std::string::npos) << table;

    const std::string csv = sf::render_report_csv({{"run", report}});
    EXPECT_EQ(csv.rfind("variant,bin_lo,bin_hi,ap,gt,tp,fp,ghosts\n", 0), 0u);
    EXPECT_NE(csv.find("run,25,inf,undefined,0,0,0,0"), std::string::npos) << csv;
    EXPECT_NE(csv.find("run,0,25,1,1,1,0,0"), std::string::npos) << csv;
    EXPECT_TRUE(sf::render_report_table({}).empty());
}

#ifdef SPRAYFILTER_CLI_PATH

namespace {

std::string q(const std::filesystem::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST(Cli, FullToolChainProducesExpectedFiles) {
    testutil::TempDir dir("cli_chain");
    const auto data = dir / "data";
    testutil::write_text(dir / "simulate.json",
                         R"({"out_dir": ")" + data.string() + R"(", "frames": 4, "base_seed": 7,
                             "scene": {"speed_kmh": 130, "score_separation": 6.0,
                                       "clutter_target_prob": 0.5}})");
    auto res = testutil::run_cli("simulate --config " + q(dir / "simulate.json"), dir.path());
    ASSERT_EQ(res.exit_code, 0) << res.output;
    ASSERT_TRUE(std::filesystem::exists(data / "manifest.json"));
    ASSERT_TRUE(std::filesystem::exists(data / "clouds" / "000003.bin"));

    const std::string manifest = (data / "manifest.json").string();
    testutil::write_text(dir / "calibrate.json", R"({"manifest": ")" + manifest +
                                                     R"(", "out_dir": ")" + (dir / "cal").string() +
                                                     R"(", "tpr": 0.99})");
    res = testutil::run_cli("calibrate --config " + q(dir / "calibrate.json"), dir.path());
    ASSERT_EQ(res.exit_code, 0) << res.output;
    EXPECT_TRUE(std::filesystem::exists(dir / "cal" / "calibration.json"));

    testutil::write_text(dir / "filter.json",
                         R"({"manifest": ")" + manifest + R"(", "out_dir": ")" +
                             (dir / "filt").string() +
                             R"(", "filter": {"method": "threshold", "calibrate_tpr": 0.99}})");
    res = testutil::run_cli("filter --config " + q(dir / "filter.json"), dir.path());
    ASSERT_EQ(res.exit_code, 0) << res.output;
    EXPECT_TRUE(std::filesystem::exists(dir / "filt" / "masks" / "000000.mask"));
    EXPECT_TRUE(std::filesystem::exists(dir / "filt" / "filtered" / "000002.bin"));
    const std::string metrics = testutil::read_text(dir / "filt" / "metrics.csv");
    EXPECT_EQ(metrics.rfind("frame_id,kept,total,valid_tpr,noise_recall,noise_precision\n", 0),
              0u);

    testutil::write_text(dir / "detect.json", R"({"manifest": ")" + manifest +
                                                  R"(", "out_dir": ")" + (dir / "det").string() +
                                                  R"(", "detector": {"min_points": 8}})");
    res = testutil::run_cli("detect --config " + q(dir / "detect.json"), dir.path());
    ASSERT_EQ(res.exit_code, 0) << res.output;
    const auto det_path = dir / "det" / "detections.jsonl";
    ASSERT_TRUE(std::filesystem::exists(det_path));

    testutil::write_text(dir / "gate.json", R"({"manifest": ")" + manifest +
                                                R"(", "detections": ")" + det_path.string() +
                                                R"(", "out_dir": ")" + (dir / "gated").string() +
                                                R"(", "gate": {"gamma": 1.0}})");
    res = testutil::run_cli("gate --config " + q(dir / "gate.json"), dir.path());
    ASSERT_EQ(res.exit_code, 0) << res.output;
    EXPECT_TRUE(std::filesystem::exists(dir / "gated" / "gated.jsonl"));
    EXPECT_TRUE(std::filesystem::exists(dir / "gated" / "gate_stats.csv"));

    testutil::write_text(dir / "pipeline.json",
                         R"({"manifest": ")" + manifest + R"(", "out_dir": ")" +
                             (dir / "pipe").string() +
                             R"(", "filter": {"method": "threshold", "calibrate_tpr": 0.99},
                                  "gate": {"gamma": 1.0}, "eval": {"iou_threshold": 0.5}})");
    res = testutil::run_cli("pipeline --config " + q(dir / "pipeline.json"), dir.path());
    ASSERT_EQ(res.exit_code, 0) << res.output;
    EXPECT_TRUE(std::filesystem::exists(dir / "pipe" / "report.txt"));
    EXPECT_TRUE(std::filesystem::exists(dir / "pipe" / "detections.jsonl"));
    EXPECT_NE(res.output.find("overall"), std::string::npos);
    const std::string resolved = testutil::read_text(dir / "pipe" / "resolved_config.json");
    EXPECT_NE(resolved.find("\"iou_threshold\": 0.5"), std::string::npos);
    // Run-specific paths stay out of the resolved config so reruns into
    // different directories stay byte-identical.
    EXPECT_EQ(resolved.find("out_dir"), std::string::npos);
    EXPECT_EQ(resolved.find("workers"), std::string::npos);

    testutil::write_text(dir / "sweep.json",
                         R"({"manifest": ")" + manifest + R"(", "out_dir": ")" +
                             (dir / "sweep").string() +
                             R"(", "mode": "tau", "tpr_levels": [0.9, 0.99]})");
    res = testutil::run_cli("sweep --config " + q(dir / "sweep.json"), dir.path());
    ASSERT_EQ(res.exit_code, 0) << res.output;
    const std::string sweep_csv = testutil::read_text(dir / "sweep" / "sweep.csv");
    EXPECT_NE(sweep_csv.find("tpr=0.9 "), std::string::npos);
    EXPECT_NE(sweep_csv.find("tpr=0.99 "), std::string::npos);
}

TEST(Cli, CompareVariantsReportsFourRows) {
    testutil::TempDir dir("cli_compare");
    const auto data = dir / "data";
    testutil::write_text(dir / "simulate.json", R"({"out_dir": ")" + data.string() +
                                                    R"(", "frames": 3, "base_seed": 3,
                                                     "scene": {"speed_kmh": 130}})");
    auto res = testutil::run_cli("simulate --config " + q(dir / "simulate.json"), dir.path());
    ASSERT_EQ(res.exit_code, 0) << res.output;
    testutil::write_text(dir / "pipeline.json",
                         R"({"manifest": ")" + (data / "manifest.json").string() +
                             R"(", "out_dir": ")" + (dir / "pipe").string() +
                             R"(", "compare_variants": true,
                                  "filter": {"method": "threshold", "calibrate_tpr": 0.99},
                                  "gate": {"gamma": 1.0}})");
    res = testutil::run_cli("pipeline --config " + q(dir / "pipeline.json"), dir.path());
    ASSERT_EQ(res.exit_code, 0) << res.output;
    const std::string csv = testutil::read_text(dir / "pipe" / "report.csv");
    for (const char* variant : {"\nnone,", "\nfilter,", "\ngate,", "\nfilter+gate,"}) {
        EXPECT_NE(csv.find(variant), std::string::npos) << csv;
    }
    // Per-frame artifacts only make sense for a single configured variant.
    EXPECT_FALSE(std::filesystem::exists(dir / "pipe" / "detections.jsonl"));
}

TEST(Cli, RerunsAreByteIdenticalAcrossDirsAndWorkerCounts) {
    testutil::TempDir dir("cli_rerun");
    const auto write_sim = [&](const std::string& name, const std::filesystem::path& out) {
        testutil::write_text(dir / name, R"({"out_dir": ")" + out.string() +
                                             R"(", "frames": 3, "base_seed": 21,
                                              "scene": {"speed_kmh": 110,
                                                        "clutter_target_prob": 0.4}})");
    };
    write_sim("sim_a.json", dir / "data_a");
    write_sim("sim_b.json", dir / "data_b");
    ASSERT_EQ(testutil::run_cli("simulate --config " + q(dir / "sim_a.json"), dir.path()).exit_code,
              0);
    ASSERT_EQ(testutil::run_cli("simulate --config " + q(dir / "sim_b.json"), dir.path()).exit_code,
              0);
    EXPECT_EQ(testutil::snapshot_tree(dir / "data_a"), testutil::snapshot_tree(dir / "data_b"));

    // Same dataset for both runs; the configs differ only in out_dir.
    const auto write_pipe = [&](const std::string& name, const std::filesystem::path& out) {
        testutil::write_text(dir / name,
                             R"({"manifest": ")" + (dir / "data_a" / "manifest.json").string() +
                                 R"(", "out_dir": ")" + out.string() +
                                 R"(", "filter": {"method": "threshold", "calibrate_tpr": 0.95},
                                      "gate": {"gamma": 1.0}})");
    };
    write_pipe("pipe_a.json", dir / "out_a");
    write_pipe("pipe_b.json", dir / "out_b");
    auto res = testutil::run_cli("pipeline --config " + q(dir / "pipe_a.json"), dir.path());
    ASSERT_EQ(res.exit_code, 0) << res.output;
    res = testutil::run_command("SPRAYFILTER_WORKERS=4 " + std::string(SPRAYFILTER_CLI_PATH) +
                                    " pipeline --config " + q(dir / "pipe_b.json"),
                                dir.path());
    ASSERT_EQ(res.exit_code, 0) << res.output;
    EXPECT_EQ(testutil::snapshot_tree(dir / "out_a"), testutil::snapshot_tree(dir / "out_b"));
}

TEST(Cli, ErrorsMapToDistinctExitCodes) {
    testutil::TempDir dir("cli_errors");
    testutil::write_text(dir / "unknown.json", R"({"out_dir": "x", "frames": 1, "sceen": {}})");
    EXPECT_EQ(testutil::run_cli("simulate --config " + q(dir / "unknown.json"), dir.path())
                  .exit_code,
              2);

    testutil::write_text(dir / "missing_manifest.json",
                         R"({"manifest": ")" + (dir / "nope" / "manifest.json").string() +
                             R"(", "out_dir": ")" + (dir / "out").string() + R"(", "tpr": 0.9})");
    EXPECT_EQ(testutil::run_cli("calibrate --config " + q(dir / "missing_manifest.json"),
                                dir.path())
                  .exit_code,
              3);

    testutil::write_text(dir / "bad_method.json",
                         R"({"manifest": "m.json", "out_dir": "o",
                             "filter": {"method": "median"}})");
    EXPECT_EQ(testutil::run_cli("filter --config " + q(dir / "bad_method.json"), dir.path())
                  .exit_code,
              2);

    EXPECT_EQ(testutil::run_cli("simulate --config " + q(dir / "absent.json"), dir.path())
                  .exit_code,
              2);
    EXPECT_NE(testutil::run_cli("frobnicate", dir.path()).exit_code, 0);
    EXPECT_EQ(testutil::run_cli("--help", dir.path()).exit_code, 0);
}

#endif  // SPRAYFILTER_CLI_PATH
