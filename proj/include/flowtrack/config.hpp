#ifndef FLOWTRACK_CONFIG_HPP
#define FLOWTRACK_CONFIG_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "flowtrack/box.hpp"
#include "flowtrack/detect.hpp"
#include "flowtrack/errors.hpp"
#include "flowtrack/flow.hpp"
#include "flowtrack/jsonio.hpp"
#include "flowtrack/losses.hpp"
#include "flowtrack/network.hpp"

namespace flowtrack {

struct ConvSpec {
    int kernel = 3;
    int out_channels = 8;
    int stride = 1;
    int padding = 1;
    std::string activation = "leaky_relu";
    bool depthwise = false;
};

struct PoolSpec {
    int window = 2;
    int stride = 2;
};

struct LayerSpec {
    bool is_pool = false;
    ConvSpec conv;
    PoolSpec pool;
};

struct DetectorConfig {
    int class_count = 1;
    double score_threshold = 0.3;
    double nms_iou_threshold = 0.45;
    std::vector<LayerSpec> layers;  // backbone + 1x1 head, conv/pool only

    int stride_product() const {
        int s = 1;
        for (const auto& l : layers) s *= l.is_pool ? l.pool.stride : l.conv.stride;
        return s;
    }
};

struct AnchorConfig {
    double cell_size = 8.0;
    std::array<AnchorPrior, kAnchorsPerCell> priors{{{12.0, 12.0}, {24.0, 24.0}, {40.0, 40.0}}};
};

struct TrackerConfig {
    double iou_match_threshold = 0.3;
    double template_update_rate = 0.1;  // eta
    double flow_blend = 0.7;            // alpha, detection weight
    int confirm_hits = 2;
    int occlude_after_misses = 1;
    int lost_after_misses = 10;
    double appearance_gate = 0.5;  // min cosine similarity

    void validate() const {
        if (iou_match_threshold < 0.0 || iou_match_threshold > 1.0 ||
            template_update_rate < 0.0 || template_update_rate > 1.0 || flow_blend < 0.0 ||
            flow_blend > 1.0 || appearance_gate < -1.0 || appearance_gate > 1.0)
            throw ValidationError("tracker thresholds out of range");
        if (confirm_hits < 1 || occlude_after_misses < 1 ||
            lost_after_misses < occlude_after_misses)
            throw ValidationError("tracker lifecycle counts out of range");
    }
};

struct TrainConfig {
    int iterations = 300;
    double learning_rate = 0.05;
    double lr_decay = 0.01;        // lr_i = lr / (1 + decay * i)
    int background_per_frame = 0;  // 0 = every background slot; > 0 caps the sample
    int tau = 1;                   // inter-frame gap
    int offset_hidden = 16;

    void validate() const {
        if (iterations < 0 || learning_rate < 0.0 || lr_decay < 0.0 || background_per_frame < 0 ||
            tau < 1 || offset_hidden < 1)
            throw ValidationError("train config out of range");
    }
};

// Every tunable in one place; parsing is strict (unknown keys rejected) and
// hashes of the canonical serialization are embedded in all outputs.
struct Config {
    std::uint64_t seed = 1;
    EncodingConvention convention = EncodingConvention::RcnnStandard;
    DetectorConfig detector;
    AnchorConfig anchors;
    LossConfig loss;
    TrackerConfig tracker;
    FlowParams flow;
    TrainConfig train;

    Config() { detector.layers = default_layers(); }

    static std::vector<LayerSpec> default_layers() {
        std::vector<LayerSpec> out;
        ConvSpec c1{3, 8, 2, 1, "leaky_relu", false};
        ConvSpec c2{3, 16, 2, 1, "leaky_relu", false};
        ConvSpec c3{3, 32, 2, 1, "leaky_relu", false};
        ConvSpec head{1, head_channels(1), 1, 0, "identity", false};
        for (const ConvSpec& c : {c1, c2, c3, head}) out.push_back(LayerSpec{false, c, {}});
        return out;
    }

    void validate() const {
        tracker.validate();
        train.validate();
        loss.validate();
        flow.validate();
        if (detector.class_count < 1) throw ValidationError("detector class_count must be >= 1");
        if (detector.layers.empty()) throw ValidationError("detector needs at least one layer");
        if (detector.layers.back().is_pool)
            throw ValidationError("detector must end in a conv head layer");
        int want = head_channels(detector.class_count);
        if (detector.layers.back().conv.out_channels != want)
            throw ValidationError("detector head must emit " + std::to_string(want) +
                                  " channels for " + std::to_string(detector.class_count) +
                                  " classes");
        if (detector.layers.size() < 2)
            throw ValidationError("detector needs a backbone layer before the head");
        if (static_cast<double>(detector.stride_product()) != anchors.cell_size)
            throw ValidationError("anchors.cell_size must equal the detector stride product (" +
                                  std::to_string(detector.stride_product()) + ")");
        for (const auto& p : anchors.priors)
            if (p.w <= 0.0 || p.h <= 0.0) throw ValidationError("anchor priors must be positive");
        if (detector.score_threshold < 0.0 || detector.score_threshold > 1.0 ||
            detector.nms_iou_threshold < 0.0 || detector.nms_iou_threshold > 1.0)
            throw ValidationError("detector thresholds out of range");
    }
};

namespace detail {

inline LayerSpec parse_layer_spec(const json& j, int index) {
    const std::string ctx = "detector.layers[" + std::to_string(index) + "]";
    std::string type = get_required<std::string>(j, "type", ctx);
    LayerSpec out;
    if (type == "conv") {
        reject_unknown_keys(
            j, {"type", "kernel", "out_channels", "stride", "padding", "activation", "depthwise"},
            ctx);
        out.is_pool = false;
        out.conv.kernel = get_or<int>(j, "kernel", 3);
        out.conv.out_channels = get_required<int>(j, "out_channels", ctx);
        out.conv.stride = get_or<int>(j, "stride", 1);
        out.conv.padding = get_or<int>(j, "padding", 0);
        out.conv.activation = get_or<std::string>(j, "activation", "leaky_relu");
        out.conv.depthwise = get_or<bool>(j, "depthwise", false);
        activation_from_name(out.conv.activation);  // validates
    } else if (type == "pool") {
        reject_unknown_keys(j, {"type", "window", "stride"}, ctx);
        out.is_pool = true;
        out.pool.window = get_or<int>(j, "window", 2);
        out.pool.stride = get_or<int>(j, "stride", 2);
    } else {
        throw ValidationError(ctx + ": unknown layer type '" + type + "'");
    }
    return out;
}

inline json layer_spec_to_json(const LayerSpec& l) {
    json j;
    if (l.is_pool) {
        j["type"] = "pool";
        j["window"] = l.pool.window;
        j["stride"] = l.pool.stride;
    } else {
        j["type"] = "conv";
        j["kernel"] = l.conv.kernel;
        j["out_channels"] = l.conv.out_channels;
        j["stride"] = l.conv.stride;
        j["padding"] = l.conv.padding;
        j["activation"] = l.conv.activation;
        j["depthwise"] = l.conv.depthwise;
    }
    return j;
}

}  // namespace detail

inline Config parse_config(const json& root) {
    Config cfg;
    reject_unknown_keys(root, {"seed", "convention", "detector", "anchors", "loss", "tracker",
                               "flow", "train"},
                        "config");
    cfg.seed = get_or<std::uint64_t>(root, "seed", 1);
    cfg.convention =
        convention_from_name(get_or<std::string>(root, "convention", "rcnn-standard"));

    if (root.contains("detector")) {
        const json& d = root.at("detector");
        reject_unknown_keys(d, {"class_count", "score_threshold", "nms_iou_threshold", "layers"},
                            "detector");
        cfg.detector.class_count = get_or<int>(d, "class_count", 1);
        cfg.detector.score_threshold = get_or<double>(d, "score_threshold", 0.3);
        cfg.detector.nms_iou_threshold = get_or<double>(d, "nms_iou_threshold", 0.45);
        if (d.contains("layers")) {
            if (!d.at("layers").is_array()) throw ValidationError("detector.layers must be an array");
            cfg.detector.layers.clear();
            int i = 0;
            for (const auto& lj : d.at("layers"))
                cfg.detector.layers.push_back(detail::parse_layer_spec(lj, i++));
        } else if (cfg.detector.class_count != 1) {
            // default architecture is built for the configured class count
            cfg.detector.layers.back().conv.out_channels = head_channels(cfg.detector.class_count);
        }
    }
    if (root.contains("anchors")) {
        const json& a = root.at("anchors");
        reject_unknown_keys(a, {"cell_size", "priors"}, "anchors");
        cfg.anchors.cell_size = get_or<double>(a, "cell_size", 8.0);
        if (a.contains("priors")) {
            const json& p = a.at("priors");
            if (!p.is_array() || p.size() != kAnchorsPerCell)
                throw ValidationError("anchors.priors must list exactly 3 [w, h] pairs");
            for (int i = 0; i < kAnchorsPerCell; ++i) {
                if (!p[i].is_array() || p[i].size() != 2)
                    throw ValidationError("anchors.priors entries must be [w, h] pairs");
                cfg.anchors.priors[i] = AnchorPrior{p[i][0].get<double>(), p[i][1].get<double>()};
            }
        }
    }
    if (root.contains("loss")) {
        const json& l = root.at("loss");
        reject_unknown_keys(l, {"lambda_reg", "lambda_frm", "beta"}, "loss");
        cfg.loss.lambda_reg = get_or<double>(l, "lambda_reg", 1.0);
        cfg.loss.lambda_frm = get_or<double>(l, "lambda_frm", 1.0);
        cfg.loss.beta = get_or<double>(l, "beta", 1.0);
    }
    if (root.contains("tracker")) {
        const json& t = root.at("tracker");
        reject_unknown_keys(t,
                            {"iou_match_threshold", "template_update_rate", "flow_blend",
                             "confirm_hits", "occlude_after_misses", "lost_after_misses",
                             "appearance_gate"},
                            "tracker");
        cfg.tracker.iou_match_threshold = get_or<double>(t, "iou_match_threshold", 0.3);
        cfg.tracker.template_update_rate = get_or<double>(t, "template_update_rate", 0.1);
        cfg.tracker.flow_blend = get_or<double>(t, "flow_blend", 0.7);
        cfg.tracker.confirm_hits = get_or<int>(t, "confirm_hits", 2);
        cfg.tracker.occlude_after_misses = get_or<int>(t, "occlude_after_misses", 1);
        cfg.tracker.lost_after_misses = get_or<int>(t, "lost_after_misses", 10);
        cfg.tracker.appearance_gate = get_or<double>(t, "appearance_gate", 0.5);
    }
    if (root.contains("flow")) {
        const json& f = root.at("flow");
        reject_unknown_keys(f, {"pyramid_levels", "block_size", "search_radius", "subpixel_refine"},
                            "flow");
        cfg.flow.pyramid_levels = get_or<int>(f, "pyramid_levels", 3);
        cfg.flow.block_size = get_or<int>(f, "block_size", 8);
        cfg.flow.search_radius = get_or<int>(f, "search_radius", 4);
        cfg.flow.subpixel_refine = get_or<bool>(f, "subpixel_refine", true);
    }
    if (root.contains("train")) {
        const json& t = root.at("train");
        reject_unknown_keys(t,
                            {"iterations", "learning_rate", "lr_decay", "background_per_frame",
                             "tau", "offset_hidden"},
                            "train");
        cfg.train.iterations = get_or<int>(t, "iterations", 300);
        cfg.train.learning_rate = get_or<double>(t, "learning_rate", 0.05);
        cfg.train.lr_decay = get_or<double>(t, "lr_decay", 0.01);
        cfg.train.background_per_frame = get_or<int>(t, "background_per_frame", 8);
        cfg.train.tau = get_or<int>(t, "tau", 1);
        cfg.train.offset_hidden = get_or<int>(t, "offset_hidden", 16);
    }
    cfg.validate();
    return cfg;
}

inline Config load_config(const std::string& path) { return parse_config(parse_json_file(path)); }

// Canonical serialization: every field materialized, keys sorted by the JSON
// library. The 64-bit config hash is FNV-1a over this dump.
inline json config_to_json(const Config& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["convention"] = convention_name(cfg.convention);
    j["detector"]["class_count"] = cfg.detector.class_count;
    j["detector"]["score_threshold"] = cfg.detector.score_threshold;
    j["detector"]["nms_iou_threshold"] = cfg.detector.nms_iou_threshold;
    j["detector"]["layers"] = json::array();
    for (const auto& l : cfg.detector.layers)
        j["detector"]["layers"].push_back(detail::layer_spec_to_json(l));
    j["anchors"]["cell_size"] = cfg.anchors.cell_size;
    j["anchors"]["priors"] = json::array();
    for (const auto& p : cfg.anchors.priors) j["anchors"]["priors"].push_back({p.w, p.h});
    j["loss"]["lambda_reg"] = cfg.loss.lambda_reg;
    j["loss"]["lambda_frm"] = cfg.loss.lambda_frm;
    j["loss"]["beta"] = cfg.loss.beta;
    j["tracker"]["iou_match_threshold"] = cfg.tracker.iou_match_threshold;
    j["tracker"]["template_update_rate"] = cfg.tracker.template_update_rate;
    j["tracker"]["flow_blend"] = cfg.tracker.flow_blend;
    j["tracker"]["confirm_hits"] = cfg.tracker.confirm_hits;
    j["tracker"]["occlude_after_misses"] = cfg.tracker.occlude_after_misses;
    j["tracker"]["lost_after_misses"] = cfg.tracker.lost_after_misses;
    j["tracker"]["appearance_gate"] = cfg.tracker.appearance_gate;
    j["flow"]["pyramid_levels"] = cfg.flow.pyramid_levels;
    j["flow"]["block_size"] = cfg.flow.block_size;
    j["flow"]["search_radius"] = cfg.flow.search_radius;
    j["flow"]["subpixel_refine"] = cfg.flow.subpixel_refine;
    j["train"]["iterations"] = cfg.train.iterations;
    j["train"]["learning_rate"] = cfg.train.learning_rate;
    j["train"]["lr_decay"] = cfg.train.lr_decay;
    j["train"]["background_per_frame"] = cfg.train.background_per_frame;
    j["train"]["tau"] = cfg.train.tau;
    j["train"]["offset_hidden"] = cfg.train.offset_hidden;
    return j;
}

inline std::string config_hash(const Config& cfg) { return hash_hex(json_hash(config_to_json(cfg))); }

// Instantiate the detector network from the architecture spec. Input is one
// grayscale channel on the [0, 1] scale.
inline Network build_detector(const Config& cfg) {
    std::vector<Layer> layers;
    int in_c = 1;
    for (const auto& spec : cfg.detector.layers) {
        if (spec.is_pool) {
            MaxPoolLayer p;
            p.window = spec.pool.window;
            p.stride = spec.pool.stride;
            layers.emplace_back(p);
        } else {
            ConvLayer c;
            c.kernel_h = c.kernel_w = spec.conv.kernel;
            c.in_channels = in_c;
            c.out_channels = spec.conv.out_channels;
            c.stride = spec.conv.stride;
            c.padding = spec.conv.padding;
            c.activation = activation_from_name(spec.conv.activation);
            c.depthwise_separable = spec.conv.depthwise;
            in_c = c.out_channels;
            layers.emplace_back(c);
        }
    }
    return Network(std::move(layers), cfg.seed);
}

constexpr int kOffsetFeatureDim = 8;  // predicted single-frame t (4) + flow stats (4)

// Small MLP regressing the inter-frame offset from flow statistics plus the
// detached single-frame prediction.
inline Network build_offset_head(const Config& cfg) {
    DenseLayer h1;
    h1.in_dim = kOffsetFeatureDim;
    h1.out_dim = cfg.train.offset_hidden;
    h1.activation = Activation::Relu;
    DenseLayer h2;
    h2.in_dim = cfg.train.offset_hidden;
    h2.out_dim = 4;
    h2.activation = Activation::Identity;
    return Network({Layer(h1), Layer(h2)}, cfg.seed ^ 0x5851f42d4c957f2dull);
}

// Anchor grid for a given frame size; frame dims must be divisible by the
// detector stride so head cells align with pixels.
inline AnchorSet anchors_for_frame(const Config& cfg, int frame_w, int frame_h) {
    int stride = cfg.detector.stride_product();
    if (frame_w % stride != 0 || frame_h % stride != 0)
        throw ValidationError("frame dims " + std::to_string(frame_w) + "x" +
                              std::to_string(frame_h) + " not divisible by detector stride " +
                              std::to_string(stride));
    AnchorSet a;
    a.grid_x = frame_w / stride;
    a.grid_y = frame_h / stride;
    a.cell_size = cfg.anchors.cell_size;
    a.priors = cfg.anchors.priors;
    return a;
}

}  // namespace flowtrack

#endif  // FLOWTRACK_CONFIG_HPP
