#ifndef FLOWTRACK_DETECT_HPP
#define FLOWTRACK_DETECT_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <vector>

#include "flowtrack/box.hpp"
#include "flowtrack/errors.hpp"
#include "flowtrack/tensor.hpp"

namespace flowtrack {

constexpr int kAnchorsPerCell = 3;

struct AnchorPrior {
    double w = 0.0;
    double h = 0.0;
};

// One detection scale: a G_x x G_y grid of cells, three priors per cell.
struct AnchorSet {
    int grid_x = 0;
    int grid_y = 0;
    double cell_size = 0.0;  // px
    std::array<AnchorPrior, kAnchorsPerCell> priors;

    void validate() const {
        if (grid_x <= 0 || grid_y <= 0 || cell_size <= 0.0)
            throw ValidationError("anchor grid must have positive dims and cell size");
        for (const auto& p : priors)
            if (p.w <= 0.0 || p.h <= 0.0) throw ValidationError("anchor priors must be positive");
    }

    int slot_count() const { return grid_x * grid_y * kAnchorsPerCell; }

    // Prior-sized box centered on a cell.
    Box anchor_box(int cx, int cy, int a) const {
        return Box{(cx + 0.5) * cell_size, (cy + 0.5) * cell_size, priors[a].w, priors[a].h};
    }
};

struct Detection {
    Box box;
    double score = 0.0;   // sigmoid(objectness) * softmax class prob
    int class_id = 1;     // foreground label space; 0 is background
    int slot_index = 0;   // row-major (cell, anchor) decode order
    std::vector<float> embedding;  // filled by the tracking pipeline
};

// Head tensor layout: raw(cy, cx, a*(5+K)+f) with f = t_x, t_y, t_w, t_h,
// objectness, then K class logits.
inline int head_channels(int class_count) { return kAnchorsPerCell * (5 + class_count); }

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline double logit(double p) { return std::log(p / (1.0 - p)); }

// Raw slot values -> box in pixels: center at (sigma(t)+cell offset) scaled
// by the cell size, size as the prior scaled by exp(t).
inline Box decode_cell(const std::array<double, 4>& t, int cx, int cy, const AnchorPrior& prior,
                       double cell_size) {
    Box b;
    b.x = (sigmoid(t[0]) + cx) * cell_size;
    b.y = (sigmoid(t[1]) + cy) * cell_size;
    b.w = prior.w * std::exp(t[2]);
    b.h = prior.h * std::exp(t[3]);
    return b;
}

namespace detail {

inline void check_raw_shape(const Tensor& raw, const AnchorSet& anchors, int class_count) {
    anchors.validate();
    if (class_count < 1) throw ValidationError("class count must be >= 1");
    if (raw.h != anchors.grid_y || raw.w != anchors.grid_x || raw.c != head_channels(class_count))
        throw ShapeError("raw prediction " + raw.shape_str() + " does not match grid " +
                         std::to_string(anchors.grid_x) + "x" + std::to_string(anchors.grid_y) +
                         " with " + std::to_string(head_channels(class_count)) + " channels");
}

}  // namespace detail

// Decode every (cell, anchor) slot in row-major cell order, then anchor
// index; keep those scoring at or above the threshold.
inline std::vector<Detection> decode_all(const Tensor& raw, const AnchorSet& anchors,
                                         double score_threshold, int class_count) {
    detail::check_raw_shape(raw, anchors, class_count);
    std::vector<Detection> dets;
    int per_anchor = 5 + class_count;
    std::vector<double> cls(class_count);
    int slot = 0;
    for (int cy = 0; cy < anchors.grid_y; ++cy) {
        for (int cx = 0; cx < anchors.grid_x; ++cx) {
            for (int a = 0; a < kAnchorsPerCell; ++a, ++slot) {
                int base = a * per_anchor;
                double obj = sigmoid(raw.at(cy, cx, base + 4));
                double mx = -std::numeric_limits<double>::infinity();
                for (int k = 0; k < class_count; ++k)
                    mx = std::max(mx, static_cast<double>(raw.at(cy, cx, base + 5 + k)));
                double denom = 0.0;
                for (int k = 0; k < class_count; ++k) {
                    cls[k] = std::exp(static_cast<double>(raw.at(cy, cx, base + 5 + k)) - mx);
                    denom += cls[k];
                }
                int best_k = 0;
                for (int k = 1; k < class_count; ++k)
                    if (cls[k] > cls[best_k]) best_k = k;
                double score = obj * (cls[best_k] / denom);
                if (score < score_threshold) continue;
                Detection d;
                d.box = decode_cell({raw.at(cy, cx, base + 0), raw.at(cy, cx, base + 1),
                                     raw.at(cy, cx, base + 2), raw.at(cy, cx, base + 3)},
                                    cx, cy, anchors.priors[a], anchors.cell_size);
                d.score = score;
                d.class_id = best_k + 1;
                d.slot_index = slot;
                dets.push_back(std::move(d));
            }
        }
    }
    return dets;
}

struct SlotAssignment {
    int label = 0;                    // 0 background, >= 1 class id
    std::array<double, 4> t{};        // regression target, fg slots only
    int gt_index = -1;
};

struct TargetAssignment {
    std::vector<SlotAssignment> slots;  // row-major (cell, anchor) order
    int fg_count = 0;
};

struct GtBox {
    Box box;
    int class_id = 1;
};

// Cell owning a center coordinate. Boundaries belong to the smaller index.
inline int owning_cell(double coord, double cell_size, int grid_extent) {
    int c = static_cast<int>(std::ceil(coord / cell_size)) - 1;
    if (coord <= 0.0 || c < 0 || c >= grid_extent)
        throw ValidationError("gt center coordinate " + std::to_string(coord) + " outside grid");
    return c;
}

// Each gt claims, in the cell containing its center, the free prior with
// highest shape IoU (ties -> lowest anchor index). Remaining slots stay
// background. Regression targets invert the decode exactly; the center
// fraction is clamped away from 0/1 so the logit stays finite.
inline TargetAssignment assign_targets(const std::vector<GtBox>& gts, const AnchorSet& anchors) {
    anchors.validate();
    TargetAssignment out;
    out.slots.assign(static_cast<std::size_t>(anchors.slot_count()), SlotAssignment{});
    for (std::size_t gi = 0; gi < gts.size(); ++gi) {
        const Box& g = gts[gi].box;
        if (!g.valid()) throw ValidationError("invalid gt box");
        if (gts[gi].class_id < 1) throw ValidationError("gt class id must be >= 1");
        int cx = owning_cell(g.x, anchors.cell_size, anchors.grid_x);
        int cy = owning_cell(g.y, anchors.cell_size, anchors.grid_y);
        int slot_base = (cy * anchors.grid_x + cx) * kAnchorsPerCell;
        int best_a = -1;
        double best_iou = -1.0;
        for (int a = 0; a < kAnchorsPerCell; ++a) {
            if (out.slots[slot_base + a].label != 0) continue;  // already claimed
            Box prior_at_center{g.x, g.y, anchors.priors[a].w, anchors.priors[a].h};
            double v = iou(g, prior_at_center);
            if (v > best_iou) {
                best_iou = v;
                best_a = a;
            }
        }
        if (best_a < 0) continue;  // all three priors taken in this cell
        SlotAssignment& s = out.slots[slot_base + best_a];
        s.label = gts[gi].class_id;
        s.gt_index = static_cast<int>(gi);
        double fx = g.x / anchors.cell_size - cx;
        double fy = g.y / anchors.cell_size - cy;
        fx = std::clamp(fx, 1e-6, 1.0 - 1e-6);
        fy = std::clamp(fy, 1e-6, 1.0 - 1e-6);
        s.t[0] = logit(fx);
        s.t[1] = logit(fy);
        s.t[2] = std::log(g.w / anchors.priors[best_a].w);
        s.t[3] = std::log(g.h / anchors.priors[best_a].h);
        ++out.fg_count;
    }
    return out;
}

// Greedy non-maximum suppression within each class. Ties in score keep the
// earlier decode-order detection first. A detection is suppressed only when
// its IoU with an already kept same-class detection exceeds the threshold.
inline std::vector<Detection> nms(const std::vector<Detection>& dets, double iou_threshold) {
    std::vector<std::size_t> order(dets.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (dets[a].score != dets[b].score) return dets[a].score > dets[b].score;
        return dets[a].slot_index < dets[b].slot_index;
    });
    std::vector<Detection> kept;
    for (std::size_t idx : order) {
        const Detection& d = dets[idx];
        bool suppressed = false;
        for (const Detection& k : kept) {
            if (k.class_id == d.class_id && iou(k.box, d.box) > iou_threshold) {
                suppressed = true;
                break;
            }
        }
        if (!suppressed) kept.push_back(d);
    }
    return kept;
}

// Mean-pool a feature map over a box given the map's stride in pixels, then
// L2-normalize. Used as the appearance embedding of a detection.
inline std::vector<float> box_feature_embedding(const Tensor& feat, const Box& box_px, double stride) {
    int x0 = static_cast<int>(std::floor(box_px.left() / stride));
    int x1 = static_cast<int>(std::ceil(box_px.right() / stride)) - 1;
    int y0 = static_cast<int>(std::floor(box_px.top() / stride));
    int y1 = static_cast<int>(std::ceil(box_px.bottom() / stride)) - 1;
    x0 = std::clamp(x0, 0, feat.w - 1);
    x1 = std::clamp(x1, x0, feat.w - 1);
    y0 = std::clamp(y0, 0, feat.h - 1);
    y1 = std::clamp(y1, y0, feat.h - 1);
    std::vector<double> acc(feat.c, 0.0);
    int n = 0;
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x, ++n)
            for (int ch = 0; ch < feat.c; ++ch) acc[ch] += feat.at(y, x, ch);
    double norm2 = 0.0;
    for (double v : acc) norm2 += v * v;
    std::vector<float> e(feat.c);
    if (norm2 < 1e-24) {
        e.assign(feat.c, 0.0f);
        e[0] = 1.0f;  // deterministic unit fallback for all-zero features
        return e;
    }
    double inv = 1.0 / std::sqrt(norm2);
    for (int ch = 0; ch < feat.c; ++ch) e[ch] = static_cast<float>(acc[ch] * inv);
    return e;
}

}  // namespace flowtrack

#endif  // FLOWTRACK_DETECT_HPP
