#ifndef FLOWTRACK_TRACKER_HPP
#define FLOWTRACK_TRACKER_HPP

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "flowtrack/box.hpp"
#include "flowtrack/config.hpp"
#include "flowtrack/detect.hpp"
#include "flowtrack/errors.hpp"
#include "flowtrack/flow.hpp"
#include "flowtrack/network.hpp"
#include "flowtrack/tensor.hpp"

namespace flowtrack {

enum class TrackState { Tentative, Active, Occluded, Lost };

inline const char* track_state_name(TrackState s) {
    switch (s) {
        case TrackState::Tentative: return "tentative";
        case TrackState::Active: return "active";
        case TrackState::Occluded: return "occluded";
        case TrackState::Lost: return "lost";
    }
    return "lost";
}

inline TrackState track_state_from_name(const std::string& s) {
    if (s == "tentative") return TrackState::Tentative;
    if (s == "active") return TrackState::Active;
    if (s == "occluded") return TrackState::Occluded;
    if (s == "lost") return TrackState::Lost;
    throw ValidationError("unknown track state '" + s + "'");
}

struct Track {
    int id = 0;
    TrackState state = TrackState::Tentative;
    Box box;
    double vx = 0.0;  // EMA of refined center deltas, px/frame
    double vy = 0.0;
    std::vector<float> tmpl;  // unit-norm appearance template
    int hits = 1;             // consecutive
    int misses = 0;           // consecutive
    int age = 0;              // frames since creation
    double score = 0.0;       // last associated detection score
};

inline double cosine_similarity(const std::vector<float>& a, const std::vector<float>& b) {
    if (a.size() != b.size()) throw ShapeError("embedding size mismatch");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += static_cast<double>(a[i]) * b[i];
        na += static_cast<double>(a[i]) * a[i];
        nb += static_cast<double>(b[i]) * b[i];
    }
    if (na < 1e-24 || nb < 1e-24) return 0.0;
    return dot / std::sqrt(na * nb);
}

struct Association {
    std::vector<std::pair<int, int>> matches;  // (track index, detection index)
    std::vector<int> unmatched_tracks;
    std::vector<int> unmatched_detections;
};

// Greedy on descending IoU between (already flow-propagated) track boxes and
// detections. A pair is eligible only if IoU clears the threshold and the
// appearance cosine clears the gate. Ties break to the lower track id, then
// the lower detection index.
inline Association associate(const std::vector<Track>& tracks, const std::vector<Detection>& dets,
                             const TrackerConfig& cfg) {
    struct Cand {
        double iou;
        int track_idx;
        int det_idx;
    };
    std::vector<Cand> cands;
    for (std::size_t ti = 0; ti < tracks.size(); ++ti) {
        for (std::size_t di = 0; di < dets.size(); ++di) {
            double v = iou(tracks[ti].box, dets[di].box);
            if (v < cfg.iou_match_threshold) continue;
            if (cosine_similarity(tracks[ti].tmpl, dets[di].embedding) < cfg.appearance_gate)
                continue;
            cands.push_back({v, static_cast<int>(ti), static_cast<int>(di)});
        }
    }
    std::sort(cands.begin(), cands.end(), [&](const Cand& a, const Cand& b) {
        if (a.iou != b.iou) return a.iou > b.iou;
        if (tracks[a.track_idx].id != tracks[b.track_idx].id)
            return tracks[a.track_idx].id < tracks[b.track_idx].id;
        return a.det_idx < b.det_idx;
    });
    Association out;
    std::vector<bool> track_used(tracks.size(), false), det_used(dets.size(), false);
    for (const Cand& c : cands) {
        if (track_used[c.track_idx] || det_used[c.det_idx]) continue;
        track_used[c.track_idx] = true;
        det_used[c.det_idx] = true;
        out.matches.emplace_back(c.track_idx, c.det_idx);
    }
    for (std::size_t ti = 0; ti < tracks.size(); ++ti)
        if (!track_used[ti]) out.unmatched_tracks.push_back(static_cast<int>(ti));
    for (std::size_t di = 0; di < dets.size(); ++di)
        if (!det_used[di]) out.unmatched_detections.push_back(static_cast<int>(di));
    return out;
}

// Matched: center blends detection and flow prior, size comes from the
// detection. Unmatched: the flow-propagated box coasts unchanged.
inline Box refine_with_flow(const Track&, const Detection* matched_det, const Box& flow_box,
                            const TrackerConfig& cfg) {
    if (!matched_det) return flow_box;
    const double a = cfg.flow_blend;
    Box out;
    out.x = a * matched_det->box.x + (1.0 - a) * flow_box.x;
    out.y = a * matched_det->box.y + (1.0 - a) * flow_box.y;
    out.w = matched_det->box.w;
    out.h = matched_det->box.h;
    return out;
}

// template <- normalize((1-eta) * template + eta * embedding)
inline Track update_online_model(Track track, const std::vector<float>& embedding,
                                 const TrackerConfig& cfg) {
    if (embedding.size() != track.tmpl.size()) throw ShapeError("embedding size mismatch");
    const double eta = cfg.template_update_rate;
    std::vector<double> blend(track.tmpl.size());
    double norm2 = 0.0;
    for (std::size_t i = 0; i < blend.size(); ++i) {
        blend[i] = (1.0 - eta) * track.tmpl[i] + eta * embedding[i];
        norm2 += blend[i] * blend[i];
    }
    if (norm2 < 1e-12) {
        std::cerr << "flowtrack: warning: degenerate template blend on track " << track.id
                  << ", keeping previous template\n";
    } else {
        double inv = 1.0 / std::sqrt(norm2);
        for (std::size_t i = 0; i < blend.size(); ++i)
            track.tmpl[i] = static_cast<float>(blend[i] * inv);
    }
    track.hits += 1;
    track.misses = 0;
    return track;
}

// State transitions only; hit bookkeeping for matched tracks happens in
// update_online_model, miss bookkeeping happens here.
inline Track lifecycle_step(Track track, bool matched, const TrackerConfig& cfg) {
    track.age += 1;
    if (matched) {
        if (track.state == TrackState::Tentative && track.hits >= cfg.confirm_hits)
            track.state = TrackState::Active;
        else if (track.state == TrackState::Occluded)
            track.state = TrackState::Active;
    } else {
        track.misses += 1;
        track.hits = 0;
        if (track.misses >= cfg.lost_after_misses)
            track.state = TrackState::Lost;
        else if (track.misses >= cfg.occlude_after_misses && track.state != TrackState::Lost)
            track.state = TrackState::Occluded;
    }
    return track;
}

struct TrackSnapshot {
    int frame_index = 0;
    int track_id = 0;
    TrackState state = TrackState::Tentative;
    Box box;
    double score = 0.0;
};

struct StageTimings {
    int frame_index = 0;
    double flow_ms = 0.0;
    double detect_ms = 0.0;
    double associate_ms = 0.0;
    double refine_ms = 0.0;
    double update_ms = 0.0;
    double total_ms = 0.0;
};

// Per-stream tracker; single writer. Stage order per frame:
//   flow -> propagate -> detect -> associate -> refine -> template update
//   -> lifecycle -> spawn
class Tracker {
public:
    Tracker(const Config& cfg, Network detector)
        : cfg_(cfg), detector_(std::move(detector)) {
        cfg_.validate();
        if (detector_.layers().empty()) throw ValidationError("tracker needs a detector network");
    }

    struct StepResult {
        std::vector<TrackSnapshot> snapshots;
        StageTimings timings;
        std::vector<Detection> detections;  // post-NMS, for diagnostics
    };

    const std::vector<Track>& tracks() const { return tracks_; }
    int frame_index() const { return frame_index_; }

    StepResult step(const Tensor& frame_raw) {
        using clock = std::chrono::steady_clock;
        auto ms_between = [](clock::time_point a, clock::time_point b) {
            return std::chrono::duration<double, std::milli>(b - a).count();
        };

        Tensor frame = to_grayscale(frame_raw);
        if (frame_index_ == 0) {
            frame_w_ = frame.w;
            frame_h_ = frame.h;
            anchors_ = anchors_for_frame(cfg_, frame_w_, frame_h_);
        } else if (frame.w != frame_w_ || frame.h != frame_h_) {
            throw StateError("frame dims changed mid-stream: expected " +
                             std::to_string(frame_w_) + "x" + std::to_string(frame_h_));
        }

        StepResult result;
        result.timings.frame_index = frame_index_;
        const auto t0 = clock::now();

        // (1) optical flow against the previous frame
        FlowField flow_field;
        bool has_flow = false;
        if (has_prev_) {
            flow_field = estimate_flow(prev_frame_, frame, cfg_.flow);
            has_flow = true;
        }
        const auto t1 = clock::now();
        result.timings.flow_ms = ms_between(t0, t1);

        // (2) propagate live track boxes by the flow prior (velocity once a
        // track is already coasting under occlusion, or when flow is absent)
        const double vclamp = cfg_.flow.aggregate_range();
        std::vector<Box> flow_boxes(tracks_.size());
        std::vector<Box> prev_boxes(tracks_.size());
        for (std::size_t i = 0; i < tracks_.size(); ++i) {
            Track& tr = tracks_[i];
            prev_boxes[i] = tr.box;
            double dx = std::clamp(tr.vx, -vclamp, vclamp);
            double dy = std::clamp(tr.vy, -vclamp, vclamp);
            bool inside = tr.box.right() > 0.0 && tr.box.left() < frame_w_ &&
                          tr.box.bottom() > 0.0 && tr.box.top() < frame_h_;
            if (has_flow && inside && tr.state != TrackState::Occluded) {
                auto [fu, fv] = flow_offset_for_box(flow_field, tr.box);
                dx = fu;
                dy = fv;
            }
            flow_boxes[i] = propagate_box(tr.box, dx, dy);
            tr.box = flow_boxes[i];
        }

        // (3) detector forward + decode + NMS + appearance embeddings
        Tensor input(frame.h, frame.w, 1);
        for (std::size_t i = 0; i < frame.data.size(); ++i) input.data[i] = frame.data[i] / 255.0f;
        ForwardCache cache;
        Tensor head = detector_.forward(input, &cache);
        const Tensor& penult = cache.inputs.back();
        std::vector<Detection> dets =
            decode_all(head, anchors_, cfg_.detector.score_threshold, cfg_.detector.class_count);
        dets = nms(dets, cfg_.detector.nms_iou_threshold);
        for (Detection& d : dets)
            d.embedding = box_feature_embedding(penult, d.box, anchors_.cell_size);
        const auto t2 = clock::now();
        result.timings.detect_ms = ms_between(t1, t2);

        // (4) associate propagated tracks with detections
        Association assoc = associate(tracks_, dets, cfg_.tracker);
        const auto t3 = clock::now();
        result.timings.associate_ms = ms_between(t2, t3);

        // (5) refine matched tracks; unmatched keep the flow box
        std::vector<int> matched_det(tracks_.size(), -1);
        for (const auto& [ti, di] : assoc.matches) matched_det[ti] = di;
        for (std::size_t i = 0; i < tracks_.size(); ++i) {
            Track& tr = tracks_[i];
            const Detection* det = matched_det[i] >= 0 ? &dets[matched_det[i]] : nullptr;
            tr.box = refine_with_flow(tr, det, flow_boxes[i], cfg_.tracker);
            if (det) {
                double dx = tr.box.x - prev_boxes[i].x;
                double dy = tr.box.y - prev_boxes[i].y;
                tr.vx = std::clamp(0.5 * tr.vx + 0.5 * dx, -vclamp, vclamp);
                tr.vy = std::clamp(0.5 * tr.vy + 0.5 * dy, -vclamp, vclamp);
                tr.score = det->score;
            }
        }
        const auto t4 = clock::now();
        result.timings.refine_ms = ms_between(t3, t4);

        // (6) template update for matched, (7) lifecycle for all, (8) spawn
        for (std::size_t i = 0; i < tracks_.size(); ++i)
            if (matched_det[i] >= 0)
                tracks_[i] = update_online_model(std::move(tracks_[i]),
                                                 dets[matched_det[i]].embedding, cfg_.tracker);
        for (std::size_t i = 0; i < tracks_.size(); ++i)
            tracks_[i] = lifecycle_step(std::move(tracks_[i]), matched_det[i] >= 0, cfg_.tracker);
        for (int di : assoc.unmatched_detections) {
            Track tr;
            tr.id = next_id_++;
            tr.state = TrackState::Tentative;
            tr.box = dets[di].box;
            tr.tmpl = dets[di].embedding;
            tr.hits = 1;
            tr.misses = 0;
            tr.age = 0;
            tr.score = dets[di].score;
            tracks_.push_back(std::move(tr));
        }

        for (const Track& tr : tracks_) {
            if (tr.state == TrackState::Lost) continue;
            TrackSnapshot s;
            s.frame_index = frame_index_;
            s.track_id = tr.id;
            s.state = tr.state;
            s.box = tr.box;
            s.score = tr.score;
            result.snapshots.push_back(s);
        }
        std::erase_if(tracks_, [](const Track& t) { return t.state == TrackState::Lost; });

        prev_frame_ = std::move(frame);
        has_prev_ = true;
        ++frame_index_;

        const auto t5 = clock::now();
        result.timings.update_ms = ms_between(t4, t5);
        result.timings.total_ms = ms_between(t0, t5);
        result.detections = std::move(dets);
        return result;
    }

private:
    Config cfg_;
    Network detector_;
    AnchorSet anchors_;
    Tensor prev_frame_;
    bool has_prev_ = false;
    std::vector<Track> tracks_;
    int next_id_ = 1;
    int frame_index_ = 0;
    int frame_w_ = 0;
    int frame_h_ = 0;
};

}  // namespace flowtrack

#endif  // FLOWTRACK_TRACKER_HPP
