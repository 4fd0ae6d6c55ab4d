#ifndef FLOWTRACK_SEQIO_HPP
#define FLOWTRACK_SEQIO_HPP

#include <algorithm>
#include <filesystem>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "flowtrack/jsonio.hpp"
#include "flowtrack/metrics.hpp"
#include "flowtrack/pgm.hpp"
#include "flowtrack/synth.hpp"
#include "flowtrack/tracker.hpp"
#include "flowtrack/version.hpp"

namespace flowtrack {

// On-disk sequence: 000000.pgm, 000001.pgm, ... plus gt.jsonl with one
// {frame, x, y, w, h, occluded} line per frame and a meta.json describing
// provenance.

inline std::string frame_filename(int index) {
    std::ostringstream os;
    os << std::setw(6) << std::setfill('0') << index << ".pgm";
    return os.str();
}

inline void write_sequence_dir(const std::string& dir, const Sequence& seq, const json& meta) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (!fs::is_directory(dir)) throw IoError("cannot create output directory: " + dir);
    std::string comment = "flowtrack " + meta.dump();
    for (std::size_t i = 0; i < seq.frames.size(); ++i) {
        std::string path = (fs::path(dir) / frame_filename(static_cast<int>(i))).string();
        atomic_write_file(path, [&](std::ostream& os) { write_pgm(os, seq.frames[i], comment); });
    }
    std::ostringstream gt;
    for (std::size_t i = 0; i < seq.gt.size(); ++i) {
        json line;
        line["frame"] = static_cast<int>(i);
        line["x"] = seq.gt[i].box.x;
        line["y"] = seq.gt[i].box.y;
        line["w"] = seq.gt[i].box.w;
        line["h"] = seq.gt[i].box.h;
        line["occluded"] = seq.gt[i].occluded;
        gt << line.dump() << "\n";
    }
    atomic_write_text((fs::path(dir) / "gt.jsonl").string(), gt.str());
    atomic_write_text((fs::path(dir) / "meta.json").string(), meta.dump(2) + "\n");
}

inline std::vector<std::string> list_frame_files(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) throw IoError("not a directory: " + dir);
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        std::string name = e.path().filename().string();
        if (name.size() > 4 && (name.ends_with(".pgm") || name.ends_with(".ppm")))
            files.push_back(e.path().string());
    }
    std::sort(files.begin(), files.end());
    return files;
}

inline std::vector<Tensor> load_frames(const std::string& dir) {
    std::vector<std::string> files = list_frame_files(dir);
    if (files.empty()) throw ValidationError("no frames found in " + dir);
    std::vector<Tensor> frames;
    frames.reserve(files.size());
    for (const std::string& f : files) frames.push_back(read_pnm_file(f));
    return frames;
}

inline std::vector<GroundTruthEntry> load_gt(const std::string& path) {
    std::vector<GroundTruthEntry> out;
    for (const json& j : read_jsonl(path)) {
        if (j.contains("meta")) continue;
        GroundTruthEntry e;
        e.box.x = get_required<double>(j, "x", "gt line");
        e.box.y = get_required<double>(j, "y", "gt line");
        e.box.w = get_required<double>(j, "w", "gt line");
        e.box.h = get_required<double>(j, "h", "gt line");
        e.occluded = get_or<bool>(j, "occluded", false);
        out.push_back(e);
    }
    if (out.empty()) throw ValidationError("no gt records in " + path);
    return out;
}

// ---- tracker results -------------------------------------------------------
// JSON Lines; the first line is a meta record, then one record per live
// track per frame: {frame_index, track_id, state, x, y, w, h, score}.

inline void write_results_jsonl(const std::string& path, const FrameRecords& records,
                                const json& meta) {
    std::ostringstream os;
    json m;
    m["meta"] = meta;
    m["meta"]["frames"] = static_cast<int>(records.size());
    os << m.dump() << "\n";
    for (const auto& frame : records) {
        for (const TrackSnapshot& s : frame) {
            json j;
            j["frame_index"] = s.frame_index;
            j["track_id"] = s.track_id;
            j["state"] = track_state_name(s.state);
            j["x"] = s.box.x;
            j["y"] = s.box.y;
            j["w"] = s.box.w;
            j["h"] = s.box.h;
            j["score"] = s.score;
            os << j.dump() << "\n";
        }
    }
    atomic_write_text(path, os.str());
}

inline FrameRecords read_results_jsonl(const std::string& path, json* meta_out = nullptr) {
    std::vector<json> lines = read_jsonl(path);
    int frames = -1;
    FrameRecords records;
    for (const json& j : lines) {
        if (j.contains("meta")) {
            if (meta_out) *meta_out = j.at("meta");
            frames = get_or<int>(j.at("meta"), "frames", -1);
            if (frames >= 0) records.resize(frames);
            continue;
        }
        TrackSnapshot s;
        s.frame_index = get_required<int>(j, "frame_index", "results line");
        s.track_id = get_required<int>(j, "track_id", "results line");
        s.state = track_state_from_name(get_required<std::string>(j, "state", "results line"));
        s.box.x = get_required<double>(j, "x", "results line");
        s.box.y = get_required<double>(j, "y", "results line");
        s.box.w = get_required<double>(j, "w", "results line");
        s.box.h = get_required<double>(j, "h", "results line");
        s.score = get_or<double>(j, "score", 0.0);
        if (s.frame_index < 0) throw ValidationError("negative frame_index in " + path);
        if (s.frame_index >= static_cast<int>(records.size()))
            records.resize(s.frame_index + 1);
        records[s.frame_index].push_back(s);
    }
    return records;
}

inline void write_timing_jsonl(const std::string& path, const std::vector<StageTimings>& timings,
                               const json& meta) {
    std::ostringstream os;
    json m;
    m["meta"] = meta;
    os << m.dump() << "\n";
    for (const StageTimings& t : timings) {
        json j;
        j["frame_index"] = t.frame_index;
        j["flow_ms"] = t.flow_ms;
        j["detect_ms"] = t.detect_ms;
        j["associate_ms"] = t.associate_ms;
        j["refine_ms"] = t.refine_ms;
        j["update_ms"] = t.update_ms;
        j["total_ms"] = t.total_ms;
        os << j.dump() << "\n";
    }
    atomic_write_text(path, os.str());
}

inline std::vector<StageTimings> read_timing_jsonl(const std::string& path) {
    std::vector<StageTimings> out;
    for (const json& j : read_jsonl(path)) {
        if (j.contains("meta")) continue;
        StageTimings t;
        t.frame_index = get_required<int>(j, "frame_index", "timing line");
        t.flow_ms = get_or<double>(j, "flow_ms", 0.0);
        t.detect_ms = get_or<double>(j, "detect_ms", 0.0);
        t.associate_ms = get_or<double>(j, "associate_ms", 0.0);
        t.refine_ms = get_or<double>(j, "refine_ms", 0.0);
        t.update_ms = get_or<double>(j, "update_ms", 0.0);
        t.total_ms = get_or<double>(j, "total_ms", 0.0);
        out.push_back(t);
    }
    return out;
}

// Standard provenance block embedded in every structured output file.
inline json make_meta(const std::string& config_hash_hex, std::uint64_t seed,
                      const std::string& convention) {
    json m;
    m["tool_version"] = tool_version();
    m["config_hash"] = config_hash_hex;
    m["seed"] = seed;
    m["convention"] = convention;
    return m;
}

}  // namespace flowtrack

#endif  // FLOWTRACK_SEQIO_HPP
