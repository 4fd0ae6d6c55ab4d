// flowtrack CLI: synthetic sequences, training, tracking, evaluation and the
// benchmark suite. Exit codes: 0 success, 2 input/validation error, 3 data
// integrity error, 1 internal error.

#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "flowtrack/bench.hpp"
#include "flowtrack/config.hpp"
#include "flowtrack/seqio.hpp"
#include "flowtrack/synth.hpp"
#include "flowtrack/tracker.hpp"
#include "flowtrack/train.hpp"
#include "flowtrack/version.hpp"

namespace {

using namespace flowtrack;

struct CommonOpts {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> convention;
    int threads = 1;
};

Config load_effective_config(const CommonOpts& opts) {
    Config cfg = opts.config_path.empty() ? Config() : load_config(opts.config_path);
    if (opts.seed) cfg.seed = *opts.seed;
    if (opts.convention) cfg.convention = convention_from_name(*opts.convention);
    cfg.validate();
    return cfg;
}

void add_common(CLI::App* cmd, CommonOpts& opts, bool with_threads = false) {
    cmd->add_option("--config", opts.config_path, "config JSON path (defaults apply when omitted)");
    cmd->add_option("--seed", opts.seed, "override the config seed");
    cmd->add_option("--convention", opts.convention,
                    "box offset encoding: paper-literal or rcnn-standard")
        ->check(CLI::IsMember({"paper-literal", "rcnn-standard"}));
    if (with_threads) cmd->add_option("--threads", opts.threads, "worker threads for suite cells");
}

int cmd_synth(const std::string& scenario_path, const std::string& out_dir,
              const CommonOpts& opts) {
    Config cfg = load_effective_config(opts);
    Scenario scenario = parse_scenario(parse_json_file(scenario_path));
    if (opts.seed) scenario.seed = *opts.seed;
    Sequence seq = generate_sequence(scenario);
    json meta = make_meta(scenario_hash(scenario), scenario.seed, convention_name(cfg.convention));
    meta["scenario"] = scenario.name;
    write_sequence_dir(out_dir, seq, meta);
    std::cout << seq.frames.size() << " frames written to " << out_dir << "\n";
    return 0;
}

TrainingSequence load_training_sequence(const std::string& dir) {
    TrainingSequence s;
    s.name = std::filesystem::path(dir).filename().string();
    s.frames = load_frames(dir);
    s.gt = load_gt((std::filesystem::path(dir) / "gt.jsonl").string());
    return s;
}

int cmd_train(const std::vector<std::string>& seq_dirs, const std::string& out_weights,
              const std::string& log_path, const std::string& init_weights,
              std::optional<int> iterations, const CommonOpts& opts) {
    Config cfg = load_effective_config(opts);
    std::vector<TrainingSequence> sequences;
    for (const std::string& d : seq_dirs) sequences.push_back(load_training_sequence(d));

    TrainedModel model = build_model(cfg);
    if (!init_weights.empty()) model = load_model_file(init_weights, cfg);

    int iters = iterations.value_or(cfg.train.iterations);
    std::ostringstream log;
    json meta = make_meta(config_hash(cfg), cfg.seed, convention_name(cfg.convention));
    meta["iterations"] = iters;
    json meta_line;
    meta_line["meta"] = meta;
    log << meta_line.dump() << "\n";

    std::vector<TrainLogEntry> entries =
        train_model(cfg, sequences, model, iters, [&](const TrainLogEntry& e) {
            json j;
            j["iteration"] = e.iteration;
            j["total"] = e.total;
            j["cls"] = e.cls;
            j["reg"] = e.reg;
            j["frm"] = e.frm;
            log << j.dump() << "\n";
        });

    save_model_file(out_weights, model);
    if (!log_path.empty()) atomic_write_text(log_path, log.str());
    double first = entries.empty() ? 0.0 : entries.front().total;
    double last = entries.empty() ? 0.0 : entries.back().total;
    std::cout << "trained " << entries.size() << " iterations, loss " << first << " -> " << last
              << ", weights: " << out_weights << "\n";
    return 0;
}

int cmd_track(const std::string& seq_dir, const std::string& weights_path,
              const std::string& out_results, const std::string& out_timing,
              const CommonOpts& opts) {
    Config cfg = load_effective_config(opts);
    TrainedModel model = load_model_file(weights_path, cfg);
    std::vector<Tensor> frames = load_frames(seq_dir);

    Tracker tracker(cfg, model.detector);
    FrameRecords records(frames.size());
    std::vector<StageTimings> timings;
    timings.reserve(frames.size());
    for (std::size_t f = 0; f < frames.size(); ++f) {
        Tracker::StepResult r = tracker.step(frames[f]);
        records[f] = std::move(r.snapshots);
        timings.push_back(r.timings);
    }

    json meta = make_meta(config_hash(cfg), cfg.seed, convention_name(cfg.convention));
    meta["sequence"] = seq_dir;
    write_results_jsonl(out_results, records, meta);
    if (!out_timing.empty()) {
        json tmeta = meta;
        tmeta["hardware"] = hardware_descriptor();
        write_timing_jsonl(out_timing, timings, tmeta);
    }
    FpsReport fps = fps_report(timings);
    std::cout << frames.size() << " frames, mean " << fps.mean_fps << " FPS (flow "
              << fps.flow_ms << " ms, detect " << fps.detect_ms << " ms per frame)\n";
    return 0;
}

int cmd_eval(const std::string& results_path, const std::string& gt_path,
             const std::string& out_report, const std::string& timing_path,
             const std::string& csv_path, const CommonOpts& opts) {
    Config cfg = load_effective_config(opts);
    json results_meta;
    FrameRecords records = read_results_jsonl(results_path, &results_meta);
    std::vector<GroundTruthEntry> gt = load_gt(gt_path);
    if (records.size() != gt.size())
        throw ValidationError("results cover " + std::to_string(records.size()) +
                              " frames but gt has " + std::to_string(gt.size()));

    CellOutcome cell;
    cell.scenario = results_meta.is_object() ? get_or<std::string>(results_meta, "sequence", "sequence")
                                             : "sequence";
    cell.seed = cfg.seed;
    cell.method = "proposed";
    cell.frames = static_cast<int>(records.size());
    cell.success = success_curve(pick_primary(records), gt);
    cell.rf = recall_and_failures(records, gt);

    json meta = make_meta(config_hash(cfg), cfg.seed, convention_name(cfg.convention));
    json report = metrics_report_json(meta, cell);
    if (!timing_path.empty()) {
        std::vector<StageTimings> timings = read_timing_jsonl(timing_path);
        FpsReport fps = fps_report(timings);
        report["fps"]["mean"] = fps.mean_fps;
        report["fps"]["median"] = fps.median_fps;
        report["fps"]["mean_total_ms"] = fps.mean_total_ms;
        report["fps"]["hardware"] = fps.hardware;
    }
    atomic_write_text(out_report, report.dump(2) + "\n");
    if (!csv_path.empty()) {
        std::ostringstream csv;
        csv << "threshold,success\n";
        for (std::size_t i = 0; i < cell.success.thresholds.size(); ++i)
            csv << cell.success.thresholds[i] << "," << cell.success.values[i] << "\n";
        atomic_write_text(csv_path, csv.str());
    }
    std::cout << "AUC " << cell.success.auc << ", recall " << cell.rf.recall << ", failures "
              << cell.rf.failures << "\n";
    return 0;
}

int cmd_bench(const std::string& suite_path, const std::string& weights_path,
              const std::string& out_dir, const CommonOpts& opts) {
    Config cfg = load_effective_config(opts);
    SuiteSpec suite = parse_suite(parse_json_file(suite_path),
                                  std::filesystem::path(suite_path).parent_path().string());
    TrainedModel model = load_model_file(weights_path, cfg);
    std::vector<CellOutcome> cells = run_suite(cfg, model, suite, out_dir, opts.threads);
    for (const CellOutcome& c : cells)
        std::cout << cell_file_stem(c) << ": auc " << c.success.auc << ", recall " << c.rf.recall
                  << ", failures " << c.rf.failures << "\n";
    std::cout << cells.size() << " report files in " << out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"flowtrack: CNN + optical-flow video target tracker"};
    app.set_version_flag("--version", FLOWTRACK_VERSION_STRING);
    app.require_subcommand(1);

    CommonOpts synth_opts, train_opts, track_opts, eval_opts, bench_opts;

    std::string scenario_path, synth_out;
    CLI::App* synth = app.add_subcommand("synth", "render a synthetic sequence to disk");
    synth->add_option("scenario", scenario_path, "scenario JSON file")->required();
    synth->add_option("--out", synth_out, "output sequence directory")->required();
    add_common(synth, synth_opts);

    std::vector<std::string> train_dirs;
    std::string train_out, train_log, train_init;
    std::optional<int> train_iters;
    CLI::App* train = app.add_subcommand("train", "train detector and offset heads by SGD");
    train->add_option("sequences", train_dirs, "sequence directories with gt.jsonl")->required();
    train->add_option("--out", train_out, "output weights file")->required();
    train->add_option("--log", train_log, "JSONL loss log path");
    train->add_option("--init-weights", train_init, "resume from an existing weights file");
    train->add_option("--iterations", train_iters, "override config train.iterations");
    add_common(train, train_opts);

    std::string track_dir, track_weights, track_out, track_timing;
    CLI::App* track = app.add_subcommand("track", "run the tracker over a sequence directory");
    track->add_option("sequence", track_dir, "sequence directory")->required();
    track->add_option("--weights", track_weights, "weights file")->required();
    track->add_option("--out", track_out, "results JSONL path")->required();
    track->add_option("--timing-out", track_timing, "per-frame timing JSONL path");
    add_common(track, track_opts);

    std::string eval_results, eval_gt, eval_out, eval_timing, eval_csv;
    CLI::App* eval = app.add_subcommand("eval", "score results against ground truth");
    eval->add_option("--results", eval_results, "results JSONL")->required();
    eval->add_option("--gt", eval_gt, "gt JSONL")->required();
    eval->add_option("--out", eval_out, "report JSON path")->required();
    eval->add_option("--timing", eval_timing, "timing JSONL to fold into the report");
    eval->add_option("--csv", eval_csv, "optional success-curve CSV export");
    add_common(eval, eval_opts);

    std::string bench_suite, bench_weights, bench_out;
    CLI::App* bench = app.add_subcommand("bench", "run a scenario suite and write reports");
    bench->add_option("--suite", bench_suite, "suite JSON file")->required();
    bench->add_option("--weights", bench_weights, "weights file")->required();
    bench->add_option("--out", bench_out, "output report directory")->required();
    add_common(bench, bench_opts, true);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (synth->parsed()) return cmd_synth(scenario_path, synth_out, synth_opts);
        if (train->parsed())
            return cmd_train(train_dirs, train_out, train_log, train_init, train_iters, train_opts);
        if (track->parsed())
            return cmd_track(track_dir, track_weights, track_out, track_timing, track_opts);
        if (eval->parsed())
            return cmd_eval(eval_results, eval_gt, eval_out, eval_timing, eval_csv, eval_opts);
        if (bench->parsed()) return cmd_bench(bench_suite, bench_weights, bench_out, bench_opts);
    } catch (const DataIntegrityError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const TrainingError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const GeometryError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
