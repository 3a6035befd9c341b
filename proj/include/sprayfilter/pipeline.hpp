#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "sprayfilter/detector.hpp"
#include "sprayfilter/evaluator.hpp"
#include "sprayfilter/io.hpp"
#include "sprayfilter/radar_gate.hpp"
#include "sprayfilter/types.hpp"
#include "sprayfilter/weather_filter.hpp"

namespace sprayfilter {

enum class FilterMethod {
    None,  // pass-through baseline, still a real pipeline variant
    Threshold,
    Dsor,
    Dror,
};

inline const char* filter_method_name(FilterMethod m) {
    switch (m) {
        case FilterMethod::None: return "none";
        case FilterMethod::Threshold: return "threshold";
        case FilterMethod::Dsor: return "dsor";
        case FilterMethod::Dror: return "dror";
    }
    throw std::invalid_argument("bad filter method");
}

struct FilterStageConfig {
    FilterMethod method = FilterMethod::None;
    float tau = 0.0f;  // threshold method; ignored when calibrate_tpr is set
    std::optional<double> calibrate_tpr;
    DsorParams dsor;
    DrorParams dror;
};

struct PipelineConfig {
    FilterStageConfig filter;
    ClusterParams detector;
    bool gate_enabled = false;
    GateConfig gate;
    EvalConfig eval;
    std::size_t workers = 1;
};

struct FrameOutput {
    std::string frame_id;
    std::vector<std::uint8_t> keep_mask;
    std::vector<Detection> detections;  // post-gate when the gate is enabled
    std::size_t gated_away = 0;
    std::string filter_warning;
};

struct PipelineResult {
    std::optional<float> tau;  // resolved threshold, when the method uses one
    std::vector<FrameOutput> frames;
    EvalReport report;
};

// Valid-point scores pooled across frames, in frame order then point order.
// Spray-labeled points are excluded; these are the scores a threshold is
// calibrated against.
inline ScoreArray pool_valid_scores(const std::vector<FrameBundle>& frames) {
    ScoreArray pool;
    for (const FrameBundle& f : frames) {
        if (!f.scores || !f.labels) {
            throw std::invalid_argument("calibration needs scores and labels on frame " +
                                        f.frame_id);
        }
        for (std::size_t i = 0; i < f.scores->size(); ++i) {
            if ((*f.labels)[i] != PointClass::Spray) {
                pool.push_back((*f.scores)[i]);
            }
        }
    }
    return pool;
}

// One frame through the configured filter stage. For the threshold method
// the caller passes the resolved tau (fixed or calibrated).
inline FilterResult apply_filter_stage(const FrameBundle& frame, const FilterStageConfig& cfg,
                                       std::optional<float> tau) {
    switch (cfg.method) {
        case FilterMethod::None: {
            FilterResult r;
            r.keep_mask.assign(frame.cloud.size(), 1);
            r.filtered = frame.cloud;
            r.kept_count = frame.cloud.size();
            return r;
        }
        case FilterMethod::Threshold: {
            if (!frame.scores) {
                throw std::invalid_argument("threshold filter needs scores on frame " +
                                            frame.frame_id);
            }
            return threshold_filter(frame.cloud, *frame.scores, *tau);
        }
        case FilterMethod::Dsor:
            return dsor_filter(frame.cloud, cfg.dsor);
        case FilterMethod::Dror:
            return dror_filter(frame.cloud, cfg.dror);
    }
    throw std::invalid_argument("bad filter method");
}

namespace detail {

template <typename Fn>
void for_each_frame(std::size_t frame_count, std::size_t workers, Fn&& fn) {
    if (workers <= 1 || frame_count <= 1) {
        for (std::size_t i = 0; i < frame_count; ++i) {
            fn(i);
        }
        return;
    }
    std::atomic<std::size_t> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    const std::size_t thread_count = std::min(workers, frame_count);
    std::vector<std::thread> threads;
    threads.reserve(thread_count);
    for (std::size_t t = 0; t < thread_count; ++t) {
        threads.emplace_back([&] {
            while (true) {
                const std::size_t i = next.fetch_add(1);
                if (i >= frame_count) {
                    return;
                }
                try {
                    fn(i);
                } catch (...) {
                    const std::lock_guard<std::mutex> lock(err_mutex);
                    if (!first_error) {
                        first_error = std::current_exception();
                    }
                    return;
                }
            }
        });
    }
    for (std::thread& t : threads) {
        t.join();
    }
    if (first_error) {
        std::rethrow_exception(first_error);
    }
}

}  // namespace detail

// Filter, detect, optionally gate, then score against ground truth. Frames
// are processed independently and written to indexed slots, so the worker
// count changes wall time only, never the output.
inline PipelineResult run_pipeline(const std::vector<FrameBundle>& frames,
                                   const PipelineConfig& cfg) {
    validate_eval_config(cfg.eval);
    if (cfg.gate_enabled) {
        validate_gate_config(cfg.gate);
    }
    PipelineResult result;
    if (cfg.filter.method == FilterMethod::Threshold) {
        if (cfg.filter.calibrate_tpr) {
            result.tau = calibrate_threshold(pool_valid_scores(frames), *cfg.filter.calibrate_tpr);
        } else {
            result.tau = cfg.filter.tau;
        }
    }
    result.frames.resize(frames.size());
    detail::for_each_frame(frames.size(), cfg.workers, [&](std::size_t i) {
        const FrameBundle& frame = frames[i];
        FrameOutput& out = result.frames[i];
        out.frame_id = frame.frame_id;
        FilterResult filtered = apply_filter_stage(frame, cfg.filter, result.tau);
        out.keep_mask = std::move(filtered.keep_mask);
        out.filter_warning = std::move(filtered.warning);
        out.detections = cluster_detect(filtered.filtered, cfg.detector);
        if (cfg.gate_enabled) {
            if (!frame.radar) {
                throw std::invalid_argument("gate needs radar targets on frame " + frame.frame_id);
            }
            const std::size_t before = out.detections.size();
            out.detections = gate_detections(out.detections, *frame.radar, cfg.gate);
            out.gated_away = before - out.detections.size();
        }
    });
    std::vector<EvalFrame> eval_frames;
    eval_frames.reserve(frames.size());
    for (std::size_t i = 0; i < frames.size(); ++i) {
        eval_frames.push_back({result.frames[i].detections, frames[i].gt_boxes});
    }
    result.report = evaluate_ranges(eval_frames, cfg.eval);
    return result;
}

// ---- sweeps ----

struct TauSweepEntry {
    double tpr = 0.0;
    float tau = 0.0f;
    EvalReport report;
};

// One pipeline run per requested keep rate, each with a threshold calibrated
// on the same pooled valid scores.
inline std::vector<TauSweepEntry> sweep_tau(const std::vector<FrameBundle>& frames,
                                            const std::vector<double>& tpr_levels,
                                            const PipelineConfig& base) {
    const ScoreArray pool = pool_valid_scores(frames);
    std::vector<TauSweepEntry> out;
    for (const double tpr : tpr_levels) {
        PipelineConfig cfg = base;
        cfg.filter.method = FilterMethod::Threshold;
        cfg.filter.calibrate_tpr.reset();
        cfg.filter.tau = calibrate_threshold(pool, tpr);
        const PipelineResult run = run_pipeline(frames, cfg);
        out.push_back({tpr, cfg.filter.tau, run.report});
    }
    return out;
}

struct GammaSweepEntry {
    double gamma = 0.0;
    EvalReport report;
};

// Re-gates already-computed detections at each padding and rescores. Frames
// must carry detections and radar.
inline std::vector<GammaSweepEntry> sweep_gamma(const std::vector<FrameBundle>& frames,
                                                const std::vector<double>& gamma_levels,
                                                const GateConfig& gate_base,
                                                const EvalConfig& eval) {
    validate_eval_config(eval);
    for (const FrameBundle& f : frames) {
        if (!f.detections) {
            throw std::invalid_argument("gamma sweep needs detections on frame " + f.frame_id);
        }
        if (!f.radar) {
            throw std::invalid_argument("gamma sweep needs radar targets on frame " + f.frame_id);
        }
    }
    std::vector<GammaSweepEntry> out;
    for (const double gamma : gamma_levels) {
        GateConfig gate = gate_base;
        gate.gamma = gamma;
        std::vector<EvalFrame> eval_frames;
        eval_frames.reserve(frames.size());
        for (const FrameBundle& f : frames) {
            eval_frames.push_back({gate_detections(*f.detections, *f.radar, gate), f.gt_boxes});
        }
        out.push_back({gamma, evaluate_ranges(eval_frames, eval)});
    }
    return out;
}

// ---- report rendering ----

namespace detail {

inline std::string bin_label(const RangeBin& bin, bool overall) {
    if (overall) {
        return "overall";
    }
    std::ostringstream os;
    os << bin.lo << "-";
    if (std::isinf(bin.hi)) {
        os << "inf";
    } else {
        os << bin.hi;
    }
    os << " m";
    return os.str();
}

inline std::string ap_cell(const std::optional<double>& ap) {
    if (!ap) {
        return "undefined";
    }
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", *ap);
    return buf;
}

}  // namespace detail

// Fixed-width text table, one row per named report, one AP column per bin.
inline std::string render_report_table(
    const std::vector<std::pair<std::string, EvalReport>>& rows) {
    if (rows.empty()) {
        return "";
    }
    const EvalReport& first = rows.front().second;
    std::vector<std::string> headers{"variant"};
    for (std::size_t b = 0; b < first.bins.size(); ++b) {
        headers.push_back(
            detail::bin_label(first.bins[b].bin, b + 1 == first.bins.size()));
    }
    headers.push_back("ghosts");
    std::vector<std::vector<std::string>> cells;
    for (const auto& [name, report] : rows) {
        std::vector<std::string> row{name};
        for (const RangeBinResult& bin : report.bins) {
            row.push_back(detail::ap_cell(bin.ap));
        }
        row.push_back(std::to_string(report.ghost_count));
        cells.push_back(std::move(row));
    }
    std::vector<std::size_t> width(headers.size());
    for (std::size_t c = 0; c < headers.size(); ++c) {
        width[c] = headers[c].size();
        for (const auto& row : cells) {
            width[c] = std::max(width[c], row[c].size());
        }
    }
    std::ostringstream os;
    const auto emit = [&](const std::vector<std::string>& row) {
        for (std::size_t c = 0; c < row.size(); ++c) {
            os << (c == 0 ? "" : "  ");
            os << row[c];
            for (std::size_t pad = row[c].size(); pad < width[c]; ++pad) {
                os << ' ';
            }
        }
        os << '\n';
    };
    emit(headers);
    for (const auto& row : cells) {
        emit(row);
    }
    return os.str();
}

// Machine form: one row per variant and bin, shortest round-trip numbers.
inline std::string render_report_csv(const std::vector<std::pair<std::string, EvalReport>>& rows) {
    std::string out = "variant,bin_lo,bin_hi,ap,gt,tp,fp,ghosts\n";
    for (const auto& [name, report] : rows) {
        for (const RangeBinResult& bin : report.bins) {
            out += name;
            out += ',';
            out += double_to_text(bin.bin.lo);
            out += ',';
            out += std::isinf(bin.bin.hi) ? "inf" : double_to_text(bin.bin.hi);
            out += ',';
            out += bin.ap ? double_to_text(*bin.ap) : "undefined";
            out += ',';
            out += std::to_string(bin.gt_count);
            out += ',';
            out += std::to_string(bin.tp_count);
            out += ',';
            out += std::to_string(bin.fp_count);
            out += ',';
            out += std::to_string(report.ghost_count);
            out += '\n';
        }
    }
    return out;
}

}  // namespace sprayfilter
