#ifndef FLOWTRACK_TRAIN_HPP
#define FLOWTRACK_TRAIN_HPP

#include <array>
#include <cmath>
#include <fstream>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "flowtrack/config.hpp"
#include "flowtrack/detect.hpp"
#include "flowtrack/errors.hpp"
#include "flowtrack/flow.hpp"
#include "flowtrack/losses.hpp"
#include "flowtrack/network.hpp"
#include "flowtrack/synth.hpp"
#include "flowtrack/tensor.hpp"

namespace flowtrack {

struct TrainingSequence {
    std::string name;
    std::vector<Tensor> frames;  // grayscale, 0..255
    std::vector<GroundTruthEntry> gt;
};

struct TrainedModel {
    Network detector;
    Network offset_head;
};

inline TrainedModel build_model(const Config& cfg) {
    return TrainedModel{build_detector(cfg), build_offset_head(cfg)};
}

inline void save_model(std::ostream& os, const TrainedModel& model) {
    save_networks(os, {&model.detector, &model.offset_head});
}

inline void save_model_file(const std::string& path, const TrainedModel& model) {
    atomic_write_file(path, [&](std::ostream& os) { save_model(os, model); });
}

namespace detail {

inline void check_layers_match(const std::vector<Layer>& got, const std::vector<Layer>& want,
                               const std::string& what) {
    if (got.size() != want.size())
        throw DataIntegrityError("weight file " + what + " layer count mismatch");
    for (std::size_t i = 0; i < got.size(); ++i) {
        if (got[i].index() != want[i].index())
            throw DataIntegrityError("weight file " + what + " layer " + std::to_string(i) +
                                     " type mismatch");
        bool ok = true;
        if (std::holds_alternative<ConvLayer>(got[i])) {
            const auto& a = std::get<ConvLayer>(got[i]);
            const auto& b = std::get<ConvLayer>(want[i]);
            ok = a.kernel_h == b.kernel_h && a.kernel_w == b.kernel_w &&
                 a.in_channels == b.in_channels && a.out_channels == b.out_channels &&
                 a.stride == b.stride && a.padding == b.padding && a.activation == b.activation &&
                 a.depthwise_separable == b.depthwise_separable;
        } else if (std::holds_alternative<DenseLayer>(got[i])) {
            const auto& a = std::get<DenseLayer>(got[i]);
            const auto& b = std::get<DenseLayer>(want[i]);
            ok = a.in_dim == b.in_dim && a.out_dim == b.out_dim && a.activation == b.activation;
        } else {
            const auto& a = std::get<MaxPoolLayer>(got[i]);
            const auto& b = std::get<MaxPoolLayer>(want[i]);
            ok = a.window == b.window && a.stride == b.stride;
        }
        if (!ok)
            throw DataIntegrityError("weight file " + what + " layer " + std::to_string(i) +
                                     " does not match the configured architecture");
    }
}

}  // namespace detail

// Load and split a weight file into detector + offset head, checking the
// geometry against the configured architecture.
inline TrainedModel load_model(std::istream& is, const Config& cfg) {
    std::vector<Layer> layers = load_layers(is);
    TrainedModel ref = build_model(cfg);
    std::size_t det_n = ref.detector.layers().size();
    std::size_t off_n = ref.offset_head.layers().size();
    if (layers.size() != det_n + off_n)
        throw DataIntegrityError("weight file holds " + std::to_string(layers.size()) +
                                 " layers, expected " + std::to_string(det_n + off_n));
    std::vector<Layer> det(layers.begin(), layers.begin() + det_n);
    std::vector<Layer> off(layers.begin() + det_n, layers.end());
    detail::check_layers_match(det, ref.detector.layers(), "detector");
    detail::check_layers_match(off, ref.offset_head.layers(), "offset head");
    ref.detector.layers() = std::move(det);
    ref.offset_head.layers() = std::move(off);
    return ref;
}

inline TrainedModel load_model_file(const std::string& path, const Config& cfg) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open weights file: " + path);
    return load_model(f, cfg);
}

struct TrainLogEntry {
    int iteration = 0;
    double total = 0.0;
    double cls = 0.0;
    double reg = 0.0;
    double frm = 0.0;
};

namespace detail {

struct SlotView {
    std::array<double, 4> t;
    double obj_logit;
    std::vector<double> class_logits;
};

inline SlotView read_slot(const Tensor& head, int cy, int cx, int a, int class_count) {
    int base = a * (5 + class_count);
    SlotView v;
    for (int k = 0; k < 4; ++k) v.t[k] = head.at(cy, cx, base + k);
    v.obj_logit = head.at(cy, cx, base + 4);
    v.class_logits.resize(class_count);
    for (int k = 0; k < class_count; ++k) v.class_logits[k] = head.at(cy, cx, base + 5 + k);
    return v;
}

// (K+1)-way distribution: background absorbs 1 - sigma(objectness), the
// foreground mass splits by the class softmax.
inline std::vector<double> slot_probs(const SlotView& v, std::vector<double>* softmax_out = nullptr) {
    double obj = sigmoid(v.obj_logit);
    double mx = v.class_logits[0];
    for (double c : v.class_logits) mx = std::max(mx, c);
    std::vector<double> sm(v.class_logits.size());
    double denom = 0.0;
    for (std::size_t k = 0; k < sm.size(); ++k) {
        sm[k] = std::exp(v.class_logits[k] - mx);
        denom += sm[k];
    }
    for (double& s : sm) s /= denom;
    std::vector<double> probs(sm.size() + 1);
    probs[0] = 1.0 - obj;
    for (std::size_t k = 0; k < sm.size(); ++k) probs[k + 1] = obj * sm[k];
    if (softmax_out) *softmax_out = sm;
    return probs;
}

// Chain dL/dprobs and dL/dt back to head-map logits; adds into dhead.
inline void scatter_slot_grad(Tensor& dhead, int cy, int cx, int a, int class_count,
                              const SlotView& v, const std::vector<double>& softmax,
                              const RoiGrad& g) {
    int base = a * (5 + class_count);
    dhead.at(cy, cx, base + 0) += static_cast<float>(g.dpred_box.dx);
    dhead.at(cy, cx, base + 1) += static_cast<float>(g.dpred_box.dy);
    dhead.at(cy, cx, base + 2) += static_cast<float>(g.dpred_box.dw);
    dhead.at(cy, cx, base + 3) += static_cast<float>(g.dpred_box.dh);
    double obj = sigmoid(v.obj_logit);
    double dsig = obj * (1.0 - obj);
    double fg_dot = 0.0;
    for (int k = 0; k < class_count; ++k) fg_dot += g.dprobs[k + 1] * softmax[k];
    dhead.at(cy, cx, base + 4) += static_cast<float>(dsig * (fg_dot - g.dprobs[0]));
    for (int j = 0; j < class_count; ++j)
        dhead.at(cy, cx, base + 5 + j) +=
            static_cast<float>(obj * softmax[j] * (g.dprobs[j + 1] - fg_dot));
}

inline std::pair<double, double> flow_mean_for_box(const FlowField& field, const Box& box) {
    int x0 = std::clamp(static_cast<int>(std::floor(box.left())), 0, field.w - 1);
    int x1 = std::clamp(static_cast<int>(std::ceil(box.right())) - 1, x0, field.w - 1);
    int y0 = std::clamp(static_cast<int>(std::floor(box.top())), 0, field.h - 1);
    int y1 = std::clamp(static_cast<int>(std::ceil(box.bottom())) - 1, y0, field.h - 1);
    double su = 0.0, sv = 0.0;
    int n = 0;
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x, ++n) {
            su += field.u(y, x);
            sv += field.v(y, x);
        }
    return {su / std::max(1, n), sv / std::max(1, n)};
}

inline Tensor normalized_input(const Tensor& frame) {
    Tensor in(frame.h, frame.w, 1);
    for (std::size_t i = 0; i < frame.data.size(); ++i) in.data[i] = frame.data[i] / 255.0f;
    return in;
}

}  // namespace detail

// One SGD pass over the multi-task objective. Every iteration takes one
// frame pair per sequence (frames cycle deterministically), collects all
// foreground slots plus a seeded background sample into one RoI batch, and
// steps both the detector and the inter-frame offset head.
inline std::vector<TrainLogEntry> train_model(
    const Config& cfg, const std::vector<TrainingSequence>& sequences, TrainedModel& model,
    int iterations, const std::function<void(const TrainLogEntry&)>& on_iteration = {}) {
    if (sequences.empty()) throw ValidationError("training needs at least one sequence");
    const int tau = cfg.train.tau;
    for (const auto& s : sequences) {
        if (static_cast<int>(s.frames.size()) <= tau)
            throw ValidationError("sequence '" + s.name + "' shorter than tau+1 frames");
        if (s.gt.size() < s.frames.size())
            throw ValidationError("sequence '" + s.name + "' lacks gt for every frame");
    }
    bool any_fg = false;
    for (const auto& s : sequences)
        for (std::size_t t = 0; t + tau < s.frames.size() && !any_fg; ++t)
            any_fg = !s.gt[t].occluded;
    if (!any_fg) throw TrainingError("no foreground samples found in the training sequences");

    const int K = cfg.detector.class_count;
    std::vector<TrainLogEntry> log;
    log.reserve(iterations);

    struct RowRef {
        std::size_t seq;
        int cy, cx, a;
        detail::SlotView view;
        std::vector<double> softmax;
        bool has_motion = false;
        std::vector<float> offset_features;
        ForwardCache offset_cache;
    };

    for (int it = 0; it < iterations; ++it) {
        RoiBatch batch;
        std::vector<RowRef> refs;
        std::vector<ForwardCache> caches(sequences.size());
        std::vector<AnchorSet> anchors(sequences.size());
        std::vector<Tensor> heads(sequences.size());

        for (std::size_t si = 0; si < sequences.size(); ++si) {
            const TrainingSequence& s = sequences[si];
            const int usable = static_cast<int>(s.frames.size()) - tau;
            const int t = it % usable;

            anchors[si] = anchors_for_frame(cfg, s.frames[t].w, s.frames[t].h);
            heads[si] = model.detector.forward(detail::normalized_input(s.frames[t]), &caches[si]);
            detail::check_raw_shape(heads[si], anchors[si], K);

            std::vector<GtBox> gts;
            if (!s.gt[t].occluded) gts.push_back(GtBox{s.gt[t].box, 1});
            TargetAssignment assign = assign_targets(gts, anchors[si]);

            bool cor_ok = !s.gt[t].occluded && !s.gt[t + tau].occluded;
            FlowField flow;
            bool flow_ready = false;

            std::set<int> fg_slots;
            for (int slot = 0; slot < anchors[si].slot_count(); ++slot) {
                const SlotAssignment& sa = assign.slots[slot];
                if (sa.label == 0) continue;
                fg_slots.insert(slot);
                int cy = slot / (anchors[si].grid_x * kAnchorsPerCell);
                int rem = slot % (anchors[si].grid_x * kAnchorsPerCell);
                int cx = rem / kAnchorsPerCell;
                int a = rem % kAnchorsPerCell;

                RowRef ref;
                ref.seq = si;
                ref.cy = cy;
                ref.cx = cx;
                ref.a = a;
                ref.view = detail::read_slot(heads[si], cy, cx, a, K);

                RoiEntry row;
                row.probs = detail::slot_probs(ref.view, &ref.softmax);
                row.label = sa.label;
                row.pred_box = Delta{ref.view.t[0], ref.view.t[1], ref.view.t[2], ref.view.t[3]};
                row.target_box = Delta{sa.t[0], sa.t[1], sa.t[2], sa.t[3]};
                row.correspondence_valid = cor_ok;
                if (cor_ok) {
                    if (!flow_ready) {
                        flow = estimate_flow(s.frames[t], s.frames[t + tau], cfg.flow);
                        flow_ready = true;
                    }
                    Box anchor_box = anchors[si].anchor_box(cx, cy, a);
                    auto [med_u, med_v] = flow_offset_for_box(flow, anchor_box);
                    auto [mean_u, mean_v] = detail::flow_mean_for_box(flow, anchor_box);
                    const double cell = anchors[si].cell_size;
                    ref.offset_features = {
                        static_cast<float>(ref.view.t[0]), static_cast<float>(ref.view.t[1]),
                        static_cast<float>(ref.view.t[2]), static_cast<float>(ref.view.t[3]),
                        static_cast<float>(med_u / cell),  static_cast<float>(med_v / cell),
                        static_cast<float>(mean_u / cell), static_cast<float>(mean_v / cell)};
                    Tensor out = model.offset_head.forward(Tensor::vec(ref.offset_features),
                                                           &ref.offset_cache);
                    row.pred_motion = Delta{out.data[0], out.data[1], out.data[2], out.data[3]};
                    row.target_motion =
                        encode_target(s.gt[t + tau].box, anchor_box, cfg.convention);
                    ref.has_motion = true;
                }
                batch.rois.push_back(std::move(row));
                refs.push_back(std::move(ref));
            }

            // background rows: all remaining slots by default (keeps batches
            // a pure function of the frame, so a zero learning rate yields a
            // constant loss log), or a seeded per-frame sample when capped
            std::set<int> chosen;
            if (cfg.train.background_per_frame == 0) {
                for (int slot = 0; slot < anchors[si].slot_count(); ++slot)
                    if (!fg_slots.count(slot)) chosen.insert(slot);
            } else {
                Rng rng(cfg.seed ^ mix64(si * 1000003ull + static_cast<std::uint64_t>(t)),
                        0x6267736d706cull);
                int want = std::min(cfg.train.background_per_frame,
                                    anchors[si].slot_count() - static_cast<int>(fg_slots.size()));
                while (static_cast<int>(chosen.size()) < want) {
                    int slot = static_cast<int>(rng.uniform_index(anchors[si].slot_count()));
                    if (fg_slots.count(slot) || chosen.count(slot)) continue;
                    chosen.insert(slot);
                }
            }
            for (int slot : chosen) {
                int cy = slot / (anchors[si].grid_x * kAnchorsPerCell);
                int rem = slot % (anchors[si].grid_x * kAnchorsPerCell);
                RowRef ref;
                ref.seq = si;
                ref.cy = cy;
                ref.cx = rem / kAnchorsPerCell;
                ref.a = rem % kAnchorsPerCell;
                ref.view = detail::read_slot(heads[si], ref.cy, ref.cx, ref.a, K);
                RoiEntry row;
                row.probs = detail::slot_probs(ref.view, &ref.softmax);
                row.label = 0;
                batch.rois.push_back(std::move(row));
                refs.push_back(std::move(ref));
            }
        }

        if (batch.rois.empty()) throw TrainingError("empty RoI batch at iteration " + std::to_string(it));

        LossBreakdown breakdown = total_loss(batch, cfg.loss);
        std::vector<RoiGrad> grads = total_loss_grad(batch, cfg.loss);

        // detector update: scatter per-slot gradients into each head map
        Gradients det_acc;
        for (std::size_t si = 0; si < sequences.size(); ++si) {
            Tensor dhead(heads[si].h, heads[si].w, heads[si].c);
            bool any = false;
            for (std::size_t r = 0; r < refs.size(); ++r) {
                if (refs[r].seq != si) continue;
                detail::scatter_slot_grad(dhead, refs[r].cy, refs[r].cx, refs[r].a, K, refs[r].view,
                                          refs[r].softmax, grads[r]);
                any = true;
            }
            if (!any) continue;
            det_acc.accumulate(model.detector.backward(caches[si], dhead));
        }

        Gradients off_acc;
        for (std::size_t r = 0; r < refs.size(); ++r) {
            if (!refs[r].has_motion) continue;
            const RoiGrad& g = grads[r];
            Tensor up = Tensor::vec({static_cast<float>(g.dpred_motion.dx),
                                     static_cast<float>(g.dpred_motion.dy),
                                     static_cast<float>(g.dpred_motion.dw),
                                     static_cast<float>(g.dpred_motion.dh)});
            off_acc.accumulate(model.offset_head.backward(refs[r].offset_cache, up));
        }

        const float lr = static_cast<float>(cfg.train.learning_rate / (1.0 + cfg.train.lr_decay * it));
        if (!det_acc.layers.empty()) model.detector.apply_sgd(det_acc, lr);
        if (!off_acc.layers.empty()) model.offset_head.apply_sgd(off_acc, lr);

        TrainLogEntry entry{it, breakdown.total, breakdown.cls, breakdown.reg, breakdown.frm};
        log.push_back(entry);
        if (on_iteration) on_iteration(entry);
    }
    return log;
}

}  // namespace flowtrack

#endif  // FLOWTRACK_TRAIN_HPP
