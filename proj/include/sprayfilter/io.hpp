#pragma once

#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "sprayfilter/types.hpp"

namespace sprayfilter {

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

template <typename... Parts>
std::string cat(const Parts&... parts) {
    std::ostringstream os;
    (os << ... << parts);
    return os.str();
}

inline void encode_u32le(std::uint32_t v, char* out) {
    out[0] = static_cast<char>(v & 0xffu);
    out[1] = static_cast<char>((v >> 8) & 0xffu);
    out[2] = static_cast<char>((v >> 16) & 0xffu);
    out[3] = static_cast<char>((v >> 24) & 0xffu);
}

inline std::uint32_t decode_u32le(const char* in) {
    return static_cast<std::uint32_t>(static_cast<unsigned char>(in[0])) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(in[1])) << 8) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(in[2])) << 16) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(in[3])) << 24);
}

inline void encode_f32le(float v, char* out) { encode_u32le(std::bit_cast<std::uint32_t>(v), out); }

inline float decode_f32le(const char* in) { return std::bit_cast<float>(decode_u32le(in)); }

inline std::string read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError(cat("cannot open ", path.string()));
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    if (in.bad()) {
        throw IoError(cat("read failed on ", path.string()));
    }
    return std::move(buf).str();
}

// Write to a sibling temp file and rename over the target, so a crash
// mid-write never leaves a half-written file at `path`.
inline void write_file_atomic(const std::filesystem::path& path, std::string_view data) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError(cat("cannot open ", tmp.string(), " for writing"));
        }
        out.write(data.data(), static_cast<std::streamsize>(data.size()));
        out.flush();
        if (!out) {
            throw IoError(cat("write failed on ", tmp.string()));
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw IoError(cat("rename ", tmp.string(), " -> ", path.string(), ": ", ec.message()));
    }
}

}  // namespace detail

// Shortest text form that parses back to the same value.
inline std::string double_to_text(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline std::string float_to_text(float v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

// ---- point clouds: packed float32 little-endian x, y, z, intensity ----

struct CloudReadResult {
    PointCloud cloud;
    std::size_t dropped_channels = 0;  // per-point channels beyond the four kept
};

// Source data sometimes stores more than four float channels per point;
// channels past intensity are dropped and the drop is reported back.
inline CloudReadResult read_cloud_bin_channels(const std::filesystem::path& path,
                                               std::size_t file_channels) {
    if (file_channels < 4) {
        throw std::invalid_argument("read_cloud_bin_channels: need at least 4 channels");
    }
    const std::string raw = detail::read_file_bytes(path);
    const std::size_t stride = file_channels * 4;
    if (raw.size() % stride != 0) {
        throw IoError(detail::cat(path.string(), ": truncated cloud, ", raw.size(),
                                  " bytes is not a multiple of the ", stride, "-byte record"));
    }
    CloudReadResult out;
    out.dropped_channels = file_channels - 4;
    const std::size_t n = raw.size() / stride;
    out.cloud.points.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const char* rec = raw.data() + i * stride;
        Point4& p = out.cloud.points[i];
        p.x = detail::decode_f32le(rec);
        p.y = detail::decode_f32le(rec + 4);
        p.z = detail::decode_f32le(rec + 8);
        p.intensity = detail::decode_f32le(rec + 12);
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z) ||
            !std::isfinite(p.intensity)) {
            throw IoError(detail::cat(path.string(), ": non-finite value at point ", i));
        }
    }
    return out;
}

inline PointCloud read_cloud_bin(const std::filesystem::path& path) {
    return read_cloud_bin_channels(path, 4).cloud;
}

inline void write_cloud_bin(const std::filesystem::path& path, const PointCloud& cloud) {
    std::string raw(cloud.size() * 16, '\0');
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        char* rec = raw.data() + i * 16;
        const Point4& p = cloud.points[i];
        detail::encode_f32le(p.x, rec);
        detail::encode_f32le(p.y, rec + 4);
        detail::encode_f32le(p.z, rec + 8);
        detail::encode_f32le(p.intensity, rec + 12);
    }
    detail::write_file_atomic(path, raw);
}

// ---- per-point labels: packed uint32 little-endian class codes ----

struct LabelRemap {
    std::unordered_map<std::uint32_t, PointClass> codes = {
        {0u, PointClass::Background},
        {1u, PointClass::Vehicle},
        {2u, PointClass::Spray},
    };
};

struct LabelReadResult {
    PointLabelArray labels;
    std::size_t unknown_count = 0;  // codes outside the remap, stored as Background
};

inline LabelReadResult read_labels(const std::filesystem::path& path, const LabelRemap& remap = {},
                                   std::optional<std::size_t> expected_count = std::nullopt) {
    const std::string raw = detail::read_file_bytes(path);
    if (raw.size() % 4 != 0) {
        throw IoError(detail::cat(path.string(), ": truncated label file, ", raw.size(),
                                  " bytes is not a multiple of 4"));
    }
    const std::size_t n = raw.size() / 4;
    if (expected_count && n != *expected_count) {
        throw IoError(detail::cat(path.string(), ": ", n, " labels, expected ", *expected_count));
    }
    LabelReadResult out;
    out.labels.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint32_t code = detail::decode_u32le(raw.data() + i * 4);
        const auto it = remap.codes.find(code);
        if (it == remap.codes.end()) {
            out.labels[i] = PointClass::Background;
            ++out.unknown_count;
        } else {
            out.labels[i] = it->second;
        }
    }
    return out;
}

inline void write_labels(const std::filesystem::path& path, const PointLabelArray& labels) {
    std::string raw(labels.size() * 4, '\0');
    for (std::size_t i = 0; i < labels.size(); ++i) {
        detail::encode_u32le(static_cast<std::uint32_t>(labels[i]), raw.data() + i * 4);
    }
    detail::write_file_atomic(path, raw);
}

// ---- per-point anomaly scores: packed float32 little-endian ----

inline ScoreArray read_scores(const std::filesystem::path& path,
                              std::optional<std::size_t> expected_count = std::nullopt) {
    const std::string raw = detail::read_file_bytes(path);
    if (raw.size() % 4 != 0) {
        throw IoError(detail::cat(path.string(), ": truncated score file, ", raw.size(),
                                  " bytes is not a multiple of 4"));
    }
    const std::size_t n = raw.size() / 4;
    if (expected_count && n != *expected_count) {
        throw IoError(detail::cat(path.string(), ": ", n, " scores, expected ", *expected_count));
    }
    ScoreArray scores(n);
    for (std::size_t i = 0; i < n; ++i) {
        scores[i] = detail::decode_f32le(raw.data() + i * 4);
        if (!std::isfinite(scores[i])) {
            throw IoError(detail::cat(path.string(), ": non-finite score at index ", i));
        }
    }
    return scores;
}

inline void write_scores(const std::filesystem::path& path, const ScoreArray& scores) {
    std::string raw(scores.size() * 4, '\0');
    for (std::size_t i = 0; i < scores.size(); ++i) {
        detail::encode_f32le(scores[i], raw.data() + i * 4);
    }
    detail::write_file_atomic(path, raw);
}

// ---- keep masks: one byte per point, 0 = dropped, 1 = kept ----

inline std::vector<std::uint8_t> read_mask(const std::filesystem::path& path,
                                           std::optional<std::size_t> expected_count = std::nullopt) {
    const std::string raw = detail::read_file_bytes(path);
    if (expected_count && raw.size() != *expected_count) {
        throw IoError(
            detail::cat(path.string(), ": ", raw.size(), " mask bytes, expected ", *expected_count));
    }
    std::vector<std::uint8_t> mask(raw.size());
    for (std::size_t i = 0; i < raw.size(); ++i) {
        const auto b = static_cast<std::uint8_t>(raw[i]);
        if (b > 1) {
            throw IoError(detail::cat(path.string(), ": mask byte at index ", i, " is ",
                                      static_cast<int>(b), ", expected 0 or 1"));
        }
        mask[i] = b;
    }
    return mask;
}

inline void write_mask(const std::filesystem::path& path, const std::vector<std::uint8_t>& mask) {
    std::string raw(mask.size(), '\0');
    for (std::size_t i = 0; i < mask.size(); ++i) {
        raw[i] = static_cast<char>(mask[i] ? 1 : 0);
    }
    detail::write_file_atomic(path, raw);
}

// ---- detections: one JSON object per line ----

struct FrameDetections {
    std::string frame_id;
    std::vector<Detection> detections;
};

inline nlohmann::ordered_json detection_to_json(const std::string& frame_id, const Detection& d) {
    nlohmann::ordered_json j;
    j["frame_id"] = frame_id;
    j["x"] = d.box.x;
    j["y"] = d.box.y;
    j["z"] = d.box.z;
    j["w"] = d.box.w;
    j["l"] = d.box.l;
    j["h"] = d.box.h;
    j["theta"] = d.box.theta;
    j["confidence"] = d.confidence;
    j["class"] = static_cast<int>(d.class_id);
    return j;
}

// Groups rows by frame_id in order of first appearance; later rows for an
// already-seen frame append to its group.
inline std::vector<FrameDetections> read_detections_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError(detail::cat("cannot open ", path.string()));
    }
    std::vector<FrameDetections> frames;
    std::unordered_map<std::string, std::size_t> frame_slot;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw IoError(detail::cat(path.string(), ":", line_no, ": bad JSON: ", e.what()));
        }
        Detection det;
        std::string frame_id;
        try {
            frame_id = j.at("frame_id").get<std::string>();
            det.box.x = j.at("x").get<double>();
            det.box.y = j.at("y").get<double>();
            det.box.z = j.at("z").get<double>();
            det.box.w = j.at("w").get<double>();
            det.box.l = j.at("l").get<double>();
            det.box.h = j.at("h").get<double>();
            det.box.theta = normalize_angle(j.at("theta").get<double>());
            det.confidence = j.at("confidence").get<double>();
            const int cls = j.at("class").get<int>();
            if (cls != static_cast<int>(ObjectClass::Vehicle)) {
                throw IoError(detail::cat(path.string(), ":", line_no, ": unknown class ", cls));
            }
            det.class_id = ObjectClass::Vehicle;
        } catch (const nlohmann::json::exception& e) {
            throw IoError(detail::cat(path.string(), ":", line_no, ": ", e.what()));
        }
        try {
            validate_detection(det);
        } catch (const std::invalid_argument& e) {
            throw IoError(detail::cat(path.string(), ":", line_no, ": ", e.what()));
        }
        auto [it, inserted] = frame_slot.try_emplace(frame_id, frames.size());
        if (inserted) {
            frames.push_back({frame_id, {}});
        }
        frames[it->second].detections.push_back(det);
    }
    if (in.bad()) {
        throw IoError(detail::cat("read failed on ", path.string()));
    }
    return frames;
}

inline void write_detections_jsonl(const std::filesystem::path& path,
                                   std::span<const FrameDetections> frames) {
    std::string out;
    for (const FrameDetections& f : frames) {
        for (const Detection& d : f.detections) {
            out += detection_to_json(f.frame_id, d).dump();
            out += '\n';
        }
    }
    detail::write_file_atomic(path, out);
}

inline void write_detections_jsonl(const std::filesystem::path& path, const FrameDetections& frame) {
    write_detections_jsonl(path, std::span<const FrameDetections>(&frame, 1));
}

// Ground truth uses the detection row format with confidence pinned to 1.
inline void write_gt_jsonl(const std::filesystem::path& path, const std::string& frame_id,
                           std::span<const Box3D> boxes) {
    FrameDetections f;
    f.frame_id = frame_id;
    f.detections.reserve(boxes.size());
    for (const Box3D& b : boxes) {
        f.detections.push_back({b, 1.0, ObjectClass::Vehicle});
    }
    write_detections_jsonl(path, f);
}

// ---- radar targets: CSV with header x,y,z,v ----

inline RadarTargetList read_radar_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError(detail::cat("cannot open ", path.string()));
    }
    std::string line;
    std::size_t line_no = 0;
    RadarTargetList targets;
    bool saw_header = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (!saw_header) {
            if (line != "x,y,z,v") {
                throw IoError(detail::cat(path.string(), ":1: expected header \"x,y,z,v\", got \"",
                                          line, "\""));
            }
            saw_header = true;
            continue;
        }
        if (line.empty()) {
            continue;
        }
        std::vector<std::string_view> toks;
        std::size_t pos = 0;
        const std::string_view sv(line);
        while (true) {
            const std::size_t next = sv.find(',', pos);
            toks.push_back(sv.substr(pos, next == std::string_view::npos ? std::string_view::npos
                                                                         : next - pos));
            if (next == std::string_view::npos) {
                break;
            }
            pos = next + 1;
        }
        if (toks.size() != 4) {
            throw IoError(detail::cat(path.string(), ":", line_no, ": expected 4 fields, got ",
                                      toks.size()));
        }
        double vals[4];
        for (std::size_t f = 0; f < 4; ++f) {
            const auto res = std::from_chars(toks[f].data(), toks[f].data() + toks[f].size(),
                                             vals[f]);
            if (res.ec != std::errc() || res.ptr != toks[f].data() + toks[f].size()) {
                throw IoError(detail::cat(path.string(), ":", line_no, ": field ", f + 1,
                                          " is not a number: \"", std::string(toks[f]), "\""));
            }
            if (!std::isfinite(vals[f])) {
                throw IoError(detail::cat(path.string(), ":", line_no, ": field ", f + 1,
                                          " is not finite"));
            }
        }
        targets.push_back({vals[0], vals[1], vals[2], vals[3]});
    }
    if (!saw_header) {
        throw IoError(detail::cat(path.string(), ": empty file, expected header \"x,y,z,v\""));
    }
    if (in.bad()) {
        throw IoError(detail::cat("read failed on ", path.string()));
    }
    return targets;
}

inline void write_radar_csv(const std::filesystem::path& path, const RadarTargetList& targets) {
    std::string out = "x,y,z,v\n";
    for (const RadarTarget& t : targets) {
        out += double_to_text(t.x);
        out += ',';
        out += double_to_text(t.y);
        out += ',';
        out += double_to_text(t.z);
        out += ',';
        out += double_to_text(t.v);
        out += '\n';
    }
    detail::write_file_atomic(path, out);
}

// ---- dataset manifest ----

struct FrameRecord {
    std::string frame_id;
    std::string cloud;  // paths relative to the manifest's directory
    std::optional<std::string> labels;
    std::optional<std::string> scores;
    std::optional<std::string> gt;
    std::optional<std::string> detections;
    std::optional<std::string> radar;
};

struct DatasetManifest {
    std::filesystem::path root;
    std::vector<FrameRecord> frames;
};

inline DatasetManifest load_manifest(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(detail::read_file_bytes(path));
    } catch (const nlohmann::json::exception& e) {
        throw IoError(detail::cat(path.string(), ": bad JSON: ", e.what()));
    }
    DatasetManifest m;
    m.root = path.parent_path();
    if (!j.contains("frames") || !j["frames"].is_array()) {
        throw IoError(detail::cat(path.string(), ": missing \"frames\" array"));
    }
    const auto opt_path = [&](const nlohmann::json& rec, const char* key,
                              std::optional<std::string>& slot) {
        if (rec.contains(key)) {
            slot = rec.at(key).get<std::string>();
            const auto full = m.root / *slot;
            if (!std::filesystem::exists(full)) {
                throw IoError(detail::cat(path.string(), ": frame references missing file ",
                                          full.string()));
            }
        }
    };
    for (const auto& rec : j["frames"]) {
        FrameRecord fr;
        try {
            fr.frame_id = rec.at("frame_id").get<std::string>();
            fr.cloud = rec.at("cloud").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw IoError(detail::cat(path.string(), ": bad frame record: ", e.what()));
        }
        if (!std::filesystem::exists(m.root / fr.cloud)) {
            throw IoError(detail::cat(path.string(), ": frame ", fr.frame_id,
                                      " references missing file ", (m.root / fr.cloud).string()));
        }
        opt_path(rec, "labels", fr.labels);
        opt_path(rec, "scores", fr.scores);
        opt_path(rec, "gt", fr.gt);
        opt_path(rec, "detections", fr.detections);
        opt_path(rec, "radar", fr.radar);
        m.frames.push_back(std::move(fr));
    }
    return m;
}

inline void save_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
    nlohmann::ordered_json j;
    j["frames"] = nlohmann::ordered_json::array();
    for (const FrameRecord& fr : manifest.frames) {
        nlohmann::ordered_json rec;
        rec["frame_id"] = fr.frame_id;
        rec["cloud"] = fr.cloud;
        if (fr.labels) rec["labels"] = *fr.labels;
        if (fr.scores) rec["scores"] = *fr.scores;
        if (fr.gt) rec["gt"] = *fr.gt;
        if (fr.detections) rec["detections"] = *fr.detections;
        if (fr.radar) rec["radar"] = *fr.radar;
        j["frames"].push_back(std::move(rec));
    }
    detail::write_file_atomic(path, j.dump(2) + "\n");
}

// ---- a frame with everything attached ----

struct FrameBundle {
    std::string frame_id;
    PointCloud cloud;
    std::optional<PointLabelArray> labels;
    std::optional<ScoreArray> scores;
    std::vector<Box3D> gt_boxes;
    std::optional<std::vector<Detection>> detections;
    std::optional<RadarTargetList> radar;
};

inline FrameBundle load_frame(const DatasetManifest& manifest, std::size_t index) {
    if (index >= manifest.frames.size()) {
        throw IoError(detail::cat("frame index ", index, " out of range, manifest has ",
                                  manifest.frames.size(), " frames"));
    }
    const FrameRecord& fr = manifest.frames[index];
    FrameBundle b;
    b.frame_id = fr.frame_id;
    b.cloud = read_cloud_bin(manifest.root / fr.cloud);
    if (fr.labels) {
        b.labels = read_labels(manifest.root / *fr.labels, {}, b.cloud.size()).labels;
    }
    if (fr.scores) {
        b.scores = read_scores(manifest.root / *fr.scores, b.cloud.size());
    }
    const auto single_frame = [&](const std::string& rel, const char* what) {
        const auto groups = read_detections_jsonl(manifest.root / rel);
        std::vector<Detection> out;
        for (const FrameDetections& g : groups) {
            if (g.frame_id != fr.frame_id) {
                throw IoError(detail::cat((manifest.root / rel).string(), ": ", what,
                                          " row for frame ", g.frame_id, " in file for frame ",
                                          fr.frame_id));
            }
            out.insert(out.end(), g.detections.begin(), g.detections.end());
        }
        return out;
    };
    if (fr.gt) {
        for (const Detection& d : single_frame(*fr.gt, "ground truth")) {
            b.gt_boxes.push_back(d.box);
        }
    }
    if (fr.detections) {
        b.detections = single_frame(*fr.detections, "detection");
    }
    if (fr.radar) {
        b.radar = read_radar_csv(manifest.root / *fr.radar);
    }
    return b;
}

inline std::vector<FrameBundle> load_all_frames(const DatasetManifest& manifest) {
    std::vector<FrameBundle> out;
    out.reserve(manifest.frames.size());
    for (std::size_t i = 0; i < manifest.frames.size(); ++i) {
        out.push_back(load_frame(manifest, i));
    }
    return out;
}

}  // namespace sprayfilter
