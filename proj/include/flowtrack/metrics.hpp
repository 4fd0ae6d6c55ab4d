#ifndef FLOWTRACK_METRICS_HPP
#define FLOWTRACK_METRICS_HPP

#include <algorithm>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

#include "flowtrack/box.hpp"
#include "flowtrack/errors.hpp"
#include "flowtrack/synth.hpp"
#include "flowtrack/tracker.hpp"

namespace flowtrack {

// Track emissions grouped per frame; baseline boxes are wrapped in the same
// shape with a single always-active track.
using FrameRecords = std::vector<std::vector<TrackSnapshot>>;

struct FramePrediction {
    bool has = false;
    Box box;
    TrackState state = TrackState::Tentative;
};

// Single-target reduction: the oldest (lowest id) Active track, else the
// oldest Occluded one. Tentative tracks are unconfirmed and never primary.
inline std::vector<FramePrediction> pick_primary(const FrameRecords& records) {
    std::vector<FramePrediction> out(records.size());
    for (std::size_t f = 0; f < records.size(); ++f) {
        const TrackSnapshot* best = nullptr;
        for (const TrackSnapshot& s : records[f]) {
            if (s.state != TrackState::Active) continue;
            if (!best || s.track_id < best->track_id) best = &s;
        }
        if (!best) {
            for (const TrackSnapshot& s : records[f]) {
                if (s.state != TrackState::Occluded) continue;
                if (!best || s.track_id < best->track_id) best = &s;
            }
        }
        if (best) out[f] = FramePrediction{true, best->box, best->state};
    }
    return out;
}

inline FrameRecords records_from_boxes(const std::vector<Box>& boxes) {
    FrameRecords rec(boxes.size());
    for (std::size_t f = 0; f < boxes.size(); ++f)
        rec[f].push_back(TrackSnapshot{static_cast<int>(f), 0, TrackState::Active, boxes[f], 1.0});
    return rec;
}

constexpr double kSuccessThresholdStep = 0.05;
constexpr int kSuccessThresholdCount = 19;  // 0.05 .. 0.95

struct SuccessCurve {
    std::vector<double> thresholds;
    std::vector<double> values;
    double auc = 0.0;
    int evaluated_frames = 0;
    int excluded_frames = 0;
};

// success(theta) = fraction of evaluated frames with IoU >= theta; the AUC is
// the mean over the threshold grid. Frames where the gt is occluded and the
// tracker itself reports Occluded are excluded from the denominator.
inline SuccessCurve success_curve(const std::vector<FramePrediction>& pred,
                                  const std::vector<GroundTruthEntry>& gt) {
    if (pred.size() != gt.size())
        throw ValidationError("success_curve: prediction/gt length mismatch");
    SuccessCurve out;
    std::vector<double> ious;
    ious.reserve(pred.size());
    for (std::size_t f = 0; f < pred.size(); ++f) {
        if (gt[f].occluded && pred[f].has && pred[f].state == TrackState::Occluded) {
            ++out.excluded_frames;
            continue;
        }
        ious.push_back(pred[f].has ? iou(pred[f].box, gt[f].box) : 0.0);
    }
    out.evaluated_frames = static_cast<int>(ious.size());
    double auc_sum = 0.0;
    for (int i = 0; i < kSuccessThresholdCount; ++i) {
        double theta = kSuccessThresholdStep * (i + 1);
        int ok = 0;
        for (double v : ious) ok += v >= theta ? 1 : 0;
        double frac = ious.empty() ? 0.0 : static_cast<double>(ok) / ious.size();
        out.thresholds.push_back(theta);
        out.values.push_back(frac);
        auc_sum += frac;
    }
    out.auc = auc_sum / kSuccessThresholdCount;
    return out;
}

inline SuccessCurve success_curve(const std::vector<Box>& pred,
                                  const std::vector<GroundTruthEntry>& gt) {
    std::vector<FramePrediction> fp(pred.size());
    for (std::size_t i = 0; i < pred.size(); ++i) fp[i] = FramePrediction{true, pred[i], TrackState::Active};
    return success_curve(fp, gt);
}

struct RecallFailures {
    double recall = 0.0;  // visible-gt frames with any track box at IoU >= 0.5
    int failures = 0;     // divergence episodes (center error > 2 * gt diagonal)
    int visible_frames = 0;
};

constexpr double kRecallIou = 0.5;
constexpr double kFailureDiagonalFactor = 2.0;

// Recall counts any emitted track; failures are counted once per continuous
// run of frames where the primary prediction's center error exceeds twice
// the gt diagonal (a missing prediction counts as a violation).
inline RecallFailures recall_and_failures(const FrameRecords& records,
                                          const std::vector<GroundTruthEntry>& gt) {
    if (records.size() != gt.size())
        throw ValidationError("recall_and_failures: records/gt length mismatch");
    RecallFailures out;
    int hit = 0;
    for (std::size_t f = 0; f < gt.size(); ++f) {
        if (gt[f].occluded) continue;
        ++out.visible_frames;
        bool any = false;
        for (const TrackSnapshot& s : records[f])
            if (iou(s.box, gt[f].box) >= kRecallIou) {
                any = true;
                break;
            }
        hit += any ? 1 : 0;
    }
    out.recall = out.visible_frames > 0 ? static_cast<double>(hit) / out.visible_frames : 0.0;

    std::vector<FramePrediction> primary = pick_primary(records);
    bool in_violation = false;
    for (std::size_t f = 0; f < gt.size(); ++f) {
        double limit = kFailureDiagonalFactor * gt[f].box.diagonal();
        bool violated = true;
        if (primary[f].has) {
            double dx = primary[f].box.x - gt[f].box.x;
            double dy = primary[f].box.y - gt[f].box.y;
            violated = std::sqrt(dx * dx + dy * dy) > limit;
        }
        if (violated && !in_violation) ++out.failures;
        in_violation = violated;
    }
    return out;
}

struct FpsReport {
    double mean_fps = 0.0;
    double median_fps = 0.0;
    double mean_total_ms = 0.0;
    double flow_ms = 0.0;
    double detect_ms = 0.0;
    double associate_ms = 0.0;
    double refine_ms = 0.0;
    double update_ms = 0.0;
    int frames = 0;
    std::string hardware;
};

inline std::string hardware_descriptor() {
    std::string model = "unknown-cpu";
    std::ifstream f("/proc/cpuinfo");
    std::string line;
    while (std::getline(f, line)) {
        auto pos = line.find("model name");
        if (pos != std::string::npos) {
            auto colon = line.find(':');
            if (colon != std::string::npos) {
                model = line.substr(colon + 1);
                while (!model.empty() && model.front() == ' ') model.erase(model.begin());
            }
            break;
        }
    }
    return model;
}

inline FpsReport fps_report(const std::vector<StageTimings>& timings) {
    if (timings.empty()) throw ValidationError("fps_report: no timing records");
    FpsReport out;
    out.frames = static_cast<int>(timings.size());
    std::vector<double> totals;
    totals.reserve(timings.size());
    for (const StageTimings& t : timings) {
        totals.push_back(t.total_ms);
        out.mean_total_ms += t.total_ms;
        out.flow_ms += t.flow_ms;
        out.detect_ms += t.detect_ms;
        out.associate_ms += t.associate_ms;
        out.refine_ms += t.refine_ms;
        out.update_ms += t.update_ms;
    }
    double n = static_cast<double>(timings.size());
    out.mean_total_ms /= n;
    out.flow_ms /= n;
    out.detect_ms /= n;
    out.associate_ms /= n;
    out.refine_ms /= n;
    out.update_ms /= n;
    std::sort(totals.begin(), totals.end());
    double median = totals.size() % 2 == 1
                        ? totals[totals.size() / 2]
                        : 0.5 * (totals[totals.size() / 2 - 1] + totals[totals.size() / 2]);
    out.mean_fps = out.mean_total_ms > 0.0 ? 1000.0 / out.mean_total_ms : 0.0;
    out.median_fps = median > 0.0 ? 1000.0 / median : 0.0;
    out.hardware = hardware_descriptor();
    return out;
}

}  // namespace flowtrack

#endif  // FLOWTRACK_METRICS_HPP
