#ifndef FLOWTRACK_BENCH_HPP
#define FLOWTRACK_BENCH_HPP

#include <atomic>
#include <chrono>
#include <filesystem>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "flowtrack/baseline.hpp"
#include "flowtrack/config.hpp"
#include "flowtrack/metrics.hpp"
#include "flowtrack/seqio.hpp"
#include "flowtrack/synth.hpp"
#include "flowtrack/tracker.hpp"
#include "flowtrack/train.hpp"

namespace flowtrack {

constexpr int kReportSchemaVersion = 1;
constexpr const char* kBaselineNote =
    "baseline is NCC template matching standing in for the SIFT tracker";
constexpr const char* kExclusionNote =
    "success denominator excludes frames where gt is occluded and the tracker reports occluded";

struct SuiteSpec {
    std::string name = "suite";
    std::vector<Scenario> scenarios;
    std::vector<std::uint64_t> seeds;  // empty -> use each scenario's own seed
    bool run_proposed = true;
    bool run_baseline = true;
};

inline SuiteSpec parse_suite(const json& root, const std::string& base_dir = "") {
    SuiteSpec suite;
    reject_unknown_keys(root, {"name", "scenarios", "seeds", "methods"}, "suite");
    suite.name = get_or<std::string>(root, "name", "suite");
    if (!root.contains("scenarios") || !root.at("scenarios").is_array() ||
        root.at("scenarios").empty())
        throw ValidationError("suite needs a non-empty scenarios array");
    for (const auto& sj : root.at("scenarios")) {
        if (sj.is_string()) {
            namespace fs = std::filesystem;
            fs::path p = sj.get<std::string>();
            if (p.is_relative() && !base_dir.empty()) p = fs::path(base_dir) / p;
            suite.scenarios.push_back(parse_scenario(parse_json_file(p.string())));
        } else {
            suite.scenarios.push_back(parse_scenario(sj));
        }
    }
    if (root.contains("seeds")) {
        if (!root.at("seeds").is_array()) throw ValidationError("suite.seeds must be an array");
        for (const auto& s : root.at("seeds")) suite.seeds.push_back(s.get<std::uint64_t>());
    }
    if (root.contains("methods")) {
        suite.run_proposed = false;
        suite.run_baseline = false;
        for (const auto& m : root.at("methods")) {
            std::string name = m.get<std::string>();
            if (name == "proposed")
                suite.run_proposed = true;
            else if (name == "baseline")
                suite.run_baseline = true;
            else
                throw ValidationError("unknown suite method '" + name + "'");
        }
        if (!suite.run_proposed && !suite.run_baseline)
            throw ValidationError("suite.methods selects no method");
    }
    return suite;
}

struct CellOutcome {
    std::string scenario;
    std::uint64_t seed = 0;
    std::string method;
    int frames = 0;
    SuccessCurve success;
    RecallFailures rf;
    std::vector<StageTimings> timings;
};

// Run the proposed tracker over an in-memory sequence.
inline CellOutcome run_proposed_cell(const Config& cfg, const Network& detector,
                                     const Scenario& scenario, const Sequence& seq) {
    CellOutcome out;
    out.scenario = scenario.name;
    out.seed = scenario.seed;
    out.method = "proposed";
    out.frames = static_cast<int>(seq.frames.size());
    Tracker tracker(cfg, detector);
    FrameRecords records(seq.frames.size());
    out.timings.reserve(seq.frames.size());
    for (std::size_t f = 0; f < seq.frames.size(); ++f) {
        Tracker::StepResult r = tracker.step(seq.frames[f]);
        records[f] = std::move(r.snapshots);
        out.timings.push_back(r.timings);
    }
    out.success = success_curve(pick_primary(records), seq.gt);
    out.rf = recall_and_failures(records, seq.gt);
    return out;
}

inline CellOutcome run_baseline_cell(const Scenario& scenario, const Sequence& seq) {
    using clock = std::chrono::steady_clock;
    CellOutcome out;
    out.scenario = scenario.name;
    out.seed = scenario.seed;
    out.method = "baseline";
    out.frames = static_cast<int>(seq.frames.size());
    auto t0 = clock::now();
    std::vector<Box> boxes = ncc_baseline_track(seq.frames, seq.gt[0].box);
    auto t1 = clock::now();
    StageTimings t;
    t.frame_index = 0;
    t.total_ms = std::chrono::duration<double, std::milli>(t1 - t0).count() /
                 static_cast<double>(seq.frames.size());
    out.timings.assign(1, t);
    FrameRecords records = records_from_boxes(boxes);
    out.success = success_curve(pick_primary(records), seq.gt);
    out.rf = recall_and_failures(records, seq.gt);
    return out;
}

// Deterministic metrics document; timing lives in a sidecar file because
// wall-clock numbers cannot be byte-stable across reruns.
inline json metrics_report_json(const json& meta, const CellOutcome& cell) {
    json j;
    j["schema_version"] = kReportSchemaVersion;
    j["meta"] = meta;
    j["meta"]["scenario"] = cell.scenario;
    j["meta"]["method"] = cell.method;
    j["meta"]["baseline_note"] = kBaselineNote;
    j["meta"]["evaluation_note"] = kExclusionNote;
    j["frames"] = cell.frames;
    j["evaluated_frames"] = cell.success.evaluated_frames;
    j["excluded_occluded_frames"] = cell.success.excluded_frames;
    j["success"]["thresholds"] = cell.success.thresholds;
    j["success"]["values"] = cell.success.values;
    j["success"]["auc"] = cell.success.auc;
    j["recall"] = cell.rf.recall;
    j["visible_frames"] = cell.rf.visible_frames;
    j["failures"] = cell.rf.failures;
    return j;
}

inline json timing_report_json(const json& meta, const CellOutcome& cell) {
    json j;
    j["schema_version"] = kReportSchemaVersion;
    j["meta"] = meta;
    j["meta"]["scenario"] = cell.scenario;
    j["meta"]["method"] = cell.method;
    FpsReport fps = fps_report(cell.timings);
    j["mean_fps"] = fps.mean_fps;
    j["median_fps"] = fps.median_fps;
    j["mean_total_ms"] = fps.mean_total_ms;
    j["stage_means_ms"] = {{"flow", fps.flow_ms},         {"detect", fps.detect_ms},
                           {"associate", fps.associate_ms}, {"refine", fps.refine_ms},
                           {"update", fps.update_ms}};
    j["frames_timed"] = fps.frames;
    j["hardware"] = fps.hardware;
    return j;
}

inline std::string cell_file_stem(const CellOutcome& cell) {
    return cell.scenario + "_s" + std::to_string(cell.seed) + "_" + cell.method;
}

// One report (and timing sidecar) per (scenario, seed, method) cell. Cells
// are independent; with threads > 1 they fan out, which leaves the metrics
// reports unchanged but makes timing sidecars unreliable for FPS claims.
inline std::vector<CellOutcome> run_suite(const Config& cfg, const TrainedModel& model,
                                          const SuiteSpec& suite, const std::string& out_dir,
                                          int threads = 1) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);

    struct CellJob {
        Scenario scenario;
        bool baseline = false;
    };
    std::vector<CellJob> jobs;
    std::vector<std::uint64_t> seeds = suite.seeds;
    for (const Scenario& base : suite.scenarios) {
        std::vector<std::uint64_t> cell_seeds = seeds.empty() ? std::vector<std::uint64_t>{base.seed}
                                                              : seeds;
        for (std::uint64_t seed : cell_seeds) {
            Scenario s = base;
            s.seed = seed;
            if (suite.run_proposed) jobs.push_back({s, false});
            if (suite.run_baseline) jobs.push_back({s, true});
        }
    }

    std::vector<CellOutcome> outcomes(jobs.size());
    json meta = make_meta(config_hash(cfg), cfg.seed, convention_name(cfg.convention));
    meta["suite"] = suite.name;

    auto run_job = [&](std::size_t i) {
        const CellJob& job = jobs[i];
        Sequence seq = generate_sequence(job.scenario);
        CellOutcome cell = job.baseline ? run_baseline_cell(job.scenario, seq)
                                        : run_proposed_cell(cfg, model.detector, job.scenario, seq);
        json cell_meta = meta;
        cell_meta["seed"] = job.scenario.seed;
        cell_meta["scenario_hash"] = scenario_hash(job.scenario);
        std::string stem = (fs::path(out_dir) / cell_file_stem(cell)).string();
        atomic_write_text(stem + ".report.json", metrics_report_json(cell_meta, cell).dump(2) + "\n");
        atomic_write_text(stem + ".timing.json", timing_report_json(cell_meta, cell).dump(2) + "\n");
        outcomes[i] = std::move(cell);
    };

    if (threads <= 1) {
        for (std::size_t i = 0; i < jobs.size(); ++i) run_job(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        int n = std::min<std::size_t>(threads, jobs.size());
        for (int w = 0; w < n; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next.fetch_add(1); i < jobs.size(); i = next.fetch_add(1))
                    run_job(i);
            });
        for (auto& th : pool) th.join();
    }
    return outcomes;
}

}  // namespace flowtrack

#endif  // FLOWTRACK_BENCH_HPP
