#ifndef FLOWTRACK_SYNTH_HPP
#define FLOWTRACK_SYNTH_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "flowtrack/box.hpp"
#include "flowtrack/errors.hpp"
#include "flowtrack/jsonio.hpp"
#include "flowtrack/rng.hpp"
#include "flowtrack/tensor.hpp"

namespace flowtrack {

enum class MotionType { Static, Linear, Sinusoidal, PiecewiseFast };

struct MotionModel {
    MotionType type = MotionType::Static;
    double vx = 0.0, vy = 0.0;   // linear
    double amp = 0.0;            // sinusoidal, px
    double period = 40.0;        // sinusoidal, frames
    double speed = 4.0;          // piecewise-fast, px/frame
};

struct TargetSpec {
    int width = 24;
    int height = 24;
    std::uint64_t texture_seed = 1;
    MotionModel motion;
    bool has_start = false;
    double start_x = 0.0, start_y = 0.0;
};

struct OccluderSpec {
    bool present = false;
    Box box;
    int from = 0, to = 0;   // inclusive frame interval
    double opacity = 1.0;
    double level = 96.0;    // flat fill value
};

enum class BackgroundType { Flat, Noise, Clutter };

struct BackgroundSpec {
    BackgroundType type = BackgroundType::Flat;
    double level = 40.0;
    double sigma = 4.0;              // noise
    int count = 3;                   // clutter distractors
    std::uint64_t texture_seed = 7;  // clutter
};

struct IlluminationSpec {
    bool present = false;
    double gain_end = 1.0;  // linear ramp from 1 at frame 0
};

struct Scenario {
    std::string name = "scenario";
    int width = 320;
    int height = 240;
    int frames = 100;
    std::uint64_t seed = 1;
    TargetSpec target;
    OccluderSpec occluder;
    BackgroundSpec background;
    IlluminationSpec illumination;
};

struct GroundTruthEntry {
    Box box;
    bool occluded = false;  // > half the target covered by the occluder
};

struct Sequence {
    std::vector<Tensor> frames;  // 8-bit grayscale values held as float
    std::vector<GroundTruthEntry> gt;
};

// Closed-form target center for frame t.
inline std::pair<double, double> target_center_at(const Scenario& s, int t) {
    double sx = s.target.has_start ? s.target.start_x : s.width / 2.0;
    double sy = s.target.has_start ? s.target.start_y : s.height / 2.0;
    const MotionModel& m = s.target.motion;
    switch (m.type) {
        case MotionType::Static:
            return {sx, sy};
        case MotionType::Linear: {
            if (!s.target.has_start) {
                // center the trajectory inside the frame
                sx -= m.vx * (s.frames - 1) / 2.0;
                sy -= m.vy * (s.frames - 1) / 2.0;
            }
            return {sx + m.vx * t, sy + m.vy * t};
        }
        case MotionType::Sinusoidal:
            return {sx + m.amp * std::sin(2.0 * M_PI * t / m.period), sy};
        case MotionType::PiecewiseFast: {
            // horizontal triangle wave between 2 px margins; direction flips
            // at the rails, giving sustained fast motion with abrupt reversals
            double lo = s.target.width / 2.0 + 2.0;
            double hi = s.width - s.target.width / 2.0 - 2.0;
            double range = hi - lo;
            if (range <= 0.0) throw ValidationError("scenario: target too wide for piecewise-fast motion");
            double phase = s.target.has_start ? (s.target.start_x - lo) : range / 2.0;
            phase = std::clamp(phase, 0.0, range);
            double u = std::fmod(phase + m.speed * t, 2.0 * range);
            double x = range - std::fabs(range - u);
            return {lo + x, sy};
        }
    }
    return {sx, sy};
}

inline Box target_box_at(const Scenario& s, int t) {
    auto [cx, cy] = target_center_at(s, t);
    return Box{cx, cy, static_cast<double>(s.target.width), static_cast<double>(s.target.height)};
}

inline double coverage_fraction(const Box& target, const Box& occluder) {
    double ix = std::min(target.right(), occluder.right()) - std::max(target.left(), occluder.left());
    double iy = std::min(target.bottom(), occluder.bottom()) - std::max(target.top(), occluder.top());
    if (ix <= 0.0 || iy <= 0.0) return 0.0;
    return (ix * iy) / target.area();
}

inline void validate_scenario(const Scenario& s) {
    if (s.width < 16 || s.height < 16) throw ValidationError("scenario: frame dims too small");
    if (s.frames < 1) throw ValidationError("scenario: needs at least one frame");
    if (s.target.width < 4 || s.target.height < 4)
        throw ValidationError("scenario: target smaller than 4 px");
    if (s.target.width >= s.width || s.target.height >= s.height)
        throw ValidationError("scenario: target does not fit in the frame");
    for (int t = 0; t < s.frames; ++t) {
        Box b = target_box_at(s, t);
        if (b.left() < 1.0 || b.top() < 1.0 || b.right() > s.width - 1.0 || b.bottom() > s.height - 1.0)
            throw ValidationError("scenario: target leaves the frame at frame " + std::to_string(t));
    }
    if (s.occluder.present) {
        if (s.occluder.from < 0 || s.occluder.to >= s.frames || s.occluder.from > s.occluder.to)
            throw ValidationError("scenario: occlusion interval outside the sequence");
        if (s.occluder.opacity < 0.0 || s.occluder.opacity > 1.0)
            throw ValidationError("scenario: occluder opacity must be in [0, 1]");
    }
}

namespace detail {

inline Tensor make_texture(int h, int w, std::uint64_t seed, float lo, float hi) {
    Tensor t(h, w, 1);
    Rng rng(seed, 0x7478747265ull);
    for (float& v : t.data) v = rng.uniform_f(lo, hi);
    return t;
}

// Paint a texture patch with its top-left at fractional (left, top).
// Bilinear sampling with edge clamp; integer placement reduces to a copy.
inline void paint_patch(Tensor& frame, const Tensor& tex, double left, double top) {
    int x0 = static_cast<int>(std::ceil(left));
    int y0 = static_cast<int>(std::ceil(top));
    int x1 = static_cast<int>(std::floor(left + tex.w - 1));
    int y1 = static_cast<int>(std::floor(top + tex.h - 1));
    x0 = std::max(x0, 0);
    y0 = std::max(y0, 0);
    x1 = std::min(x1, frame.w - 1);
    y1 = std::min(y1, frame.h - 1);
    for (int y = y0; y <= y1; ++y) {
        double v = y - top;
        int vy = static_cast<int>(std::floor(v));
        double fy = v - vy;
        int vy1 = std::min(vy + 1, tex.h - 1);
        for (int x = x0; x <= x1; ++x) {
            double u = x - left;
            int ux = static_cast<int>(std::floor(u));
            double fx = u - ux;
            int ux1 = std::min(ux + 1, tex.w - 1);
            double s = (1.0 - fy) * ((1.0 - fx) * tex.at(vy, ux, 0) + fx * tex.at(vy, ux1, 0)) +
                       fy * ((1.0 - fx) * tex.at(vy1, ux, 0) + fx * tex.at(vy1, ux1, 0));
            frame.at(y, x, 0) = static_cast<float>(s);
        }
    }
}

}  // namespace detail

// Frames are rendered as 8-bit grayscale; ground truth comes from the motion
// model in closed form. Bit-identical for identical (scenario, seed).
inline Sequence generate_sequence(const Scenario& s) {
    validate_scenario(s);
    Sequence seq;
    seq.frames.reserve(s.frames);
    seq.gt.reserve(s.frames);

    Tensor target_tex =
        detail::make_texture(s.target.height, s.target.width, s.seed ^ mix64(s.target.texture_seed),
                             64.0f, 240.0f);

    struct Distractor {
        Tensor tex;
        double x0, y0, vx, vy;
    };
    std::vector<Distractor> clutter;
    if (s.background.type == BackgroundType::Clutter) {
        Rng rng(s.seed ^ mix64(s.background.texture_seed), 0x636c75ull);
        for (int i = 0; i < s.background.count; ++i) {
            int dw = std::max(6, static_cast<int>(std::lround(s.target.width * rng.uniform(0.7, 1.3))));
            int dh = std::max(6, static_cast<int>(std::lround(s.target.height * rng.uniform(0.7, 1.3))));
            Distractor d;
            d.tex = detail::make_texture(dh, dw, rng.next_u64(), 56.0f, 232.0f);
            d.x0 = rng.uniform(0.0, s.width);
            d.y0 = rng.uniform(0.0, s.height);
            d.vx = rng.uniform(-2.0, 2.0);
            d.vy = rng.uniform(-2.0, 2.0);
            clutter.push_back(std::move(d));
        }
    }

    for (int t = 0; t < s.frames; ++t) {
        Tensor frame(s.height, s.width, 1, static_cast<float>(s.background.level));
        if (s.background.type == BackgroundType::Noise) {
            Rng rng(s.seed ^ mix64(0xb6 + static_cast<std::uint64_t>(t)), 0x6e6f697365ull);
            for (float& v : frame.data)
                v = static_cast<float>(s.background.level + rng.gaussian(0.0, s.background.sigma));
        }
        for (const auto& d : clutter) {
            double cx = std::fmod(d.x0 + d.vx * t, static_cast<double>(s.width));
            double cy = std::fmod(d.y0 + d.vy * t, static_cast<double>(s.height));
            if (cx < 0) cx += s.width;
            if (cy < 0) cy += s.height;
            detail::paint_patch(frame, d.tex, cx - d.tex.w / 2.0, cy - d.tex.h / 2.0);
        }

        Box gt_box = target_box_at(s, t);
        detail::paint_patch(frame, target_tex, gt_box.left(), gt_box.top());

        bool occluded = false;
        if (s.occluder.present && t >= s.occluder.from && t <= s.occluder.to) {
            const Box& ob = s.occluder.box;
            int ox0 = std::max(0, static_cast<int>(std::floor(ob.left())));
            int oy0 = std::max(0, static_cast<int>(std::floor(ob.top())));
            int ox1 = std::min(s.width - 1, static_cast<int>(std::ceil(ob.right())) - 1);
            int oy1 = std::min(s.height - 1, static_cast<int>(std::ceil(ob.bottom())) - 1);
            const double op = s.occluder.opacity;
            for (int y = oy0; y <= oy1; ++y)
                for (int x = ox0; x <= ox1; ++x)
                    frame.at(y, x, 0) =
                        static_cast<float>((1.0 - op) * frame.at(y, x, 0) + op * s.occluder.level);
            occluded = coverage_fraction(gt_box, ob) > 0.5;
        }

        if (s.illumination.present && s.frames > 1) {
            double gain = 1.0 + (s.illumination.gain_end - 1.0) * t / (s.frames - 1.0);
            for (float& v : frame.data) v = static_cast<float>(v * gain);
        }

        for (float& v : frame.data) v = std::clamp(std::round(v), 0.0f, 255.0f);
        seq.frames.push_back(std::move(frame));
        seq.gt.push_back(GroundTruthEntry{gt_box, occluded});
    }
    return seq;
}

// ---- scenario JSON ---------------------------------------------------------

inline Scenario parse_scenario(const json& root) {
    Scenario s;
    reject_unknown_keys(root,
                        {"name", "width", "height", "frames", "seed", "target", "occluder",
                         "background", "illumination"},
                        "scenario");
    s.name = get_or<std::string>(root, "name", "scenario");
    s.width = get_required<int>(root, "width", "scenario");
    s.height = get_required<int>(root, "height", "scenario");
    s.frames = get_required<int>(root, "frames", "scenario");
    s.seed = get_or<std::uint64_t>(root, "seed", 1);

    if (root.contains("target")) {
        const json& t = root.at("target");
        reject_unknown_keys(t, {"width", "height", "texture_seed", "motion", "start"}, "target");
        s.target.width = get_or<int>(t, "width", 24);
        s.target.height = get_or<int>(t, "height", 24);
        s.target.texture_seed = get_or<std::uint64_t>(t, "texture_seed", 1);
        if (t.contains("start")) {
            const json& st = t.at("start");
            if (!st.is_array() || st.size() != 2)
                throw ValidationError("target.start must be [x, y]");
            s.target.has_start = true;
            s.target.start_x = st[0].get<double>();
            s.target.start_y = st[1].get<double>();
        }
        if (t.contains("motion")) {
            const json& m = t.at("motion");
            reject_unknown_keys(m, {"type", "vx", "vy", "amp", "period", "speed"}, "target.motion");
            std::string type = get_or<std::string>(m, "type", "static");
            if (type == "static") {
                s.target.motion.type = MotionType::Static;
            } else if (type == "linear") {
                s.target.motion.type = MotionType::Linear;
                s.target.motion.vx = get_or<double>(m, "vx", 1.0);
                s.target.motion.vy = get_or<double>(m, "vy", 0.0);
            } else if (type == "sinusoidal") {
                s.target.motion.type = MotionType::Sinusoidal;
                s.target.motion.amp = get_or<double>(m, "amp", 30.0);
                s.target.motion.period = get_or<double>(m, "period", 40.0);
                if (s.target.motion.period <= 0.0)
                    throw ValidationError("target.motion.period must be > 0");
            } else if (type == "piecewise-fast" || type == "piecewise_fast") {
                s.target.motion.type = MotionType::PiecewiseFast;
                s.target.motion.speed = get_or<double>(m, "speed", 4.0);
                if (s.target.motion.speed <= 0.0)
                    throw ValidationError("target.motion.speed must be > 0");
            } else {
                throw ValidationError("unknown motion type '" + type + "'");
            }
        }
    }
    if (root.contains("occluder")) {
        const json& o = root.at("occluder");
        reject_unknown_keys(o, {"x", "y", "w", "h", "from", "to", "opacity", "level"}, "occluder");
        s.occluder.present = true;
        s.occluder.box.x = get_required<double>(o, "x", "occluder");
        s.occluder.box.y = get_required<double>(o, "y", "occluder");
        s.occluder.box.w = get_required<double>(o, "w", "occluder");
        s.occluder.box.h = get_required<double>(o, "h", "occluder");
        s.occluder.from = get_required<int>(o, "from", "occluder");
        s.occluder.to = get_required<int>(o, "to", "occluder");
        s.occluder.opacity = get_or<double>(o, "opacity", 1.0);
        s.occluder.level = get_or<double>(o, "level", 96.0);
    }
    if (root.contains("background")) {
        const json& b = root.at("background");
        reject_unknown_keys(b, {"type", "level", "sigma", "count", "texture_seed"}, "background");
        std::string type = get_or<std::string>(b, "type", "flat");
        if (type == "flat")
            s.background.type = BackgroundType::Flat;
        else if (type == "noise")
            s.background.type = BackgroundType::Noise;
        else if (type == "clutter" || type == "moving-clutter")
            s.background.type = BackgroundType::Clutter;
        else
            throw ValidationError("unknown background type '" + type + "'");
        s.background.level = get_or<double>(b, "level", 40.0);
        s.background.sigma = get_or<double>(b, "sigma", 4.0);
        s.background.count = get_or<int>(b, "count", 3);
        s.background.texture_seed = get_or<std::uint64_t>(b, "texture_seed", 7);
    }
    if (root.contains("illumination")) {
        const json& i = root.at("illumination");
        reject_unknown_keys(i, {"gain_end"}, "illumination");
        s.illumination.present = true;
        s.illumination.gain_end = get_or<double>(i, "gain_end", 1.0);
    }
    validate_scenario(s);
    return s;
}

inline json scenario_to_json(const Scenario& s) {
    json j;
    j["name"] = s.name;
    j["width"] = s.width;
    j["height"] = s.height;
    j["frames"] = s.frames;
    j["seed"] = s.seed;
    j["target"]["width"] = s.target.width;
    j["target"]["height"] = s.target.height;
    j["target"]["texture_seed"] = s.target.texture_seed;
    switch (s.target.motion.type) {
        case MotionType::Static:
            j["target"]["motion"]["type"] = "static";
            break;
        case MotionType::Linear:
            j["target"]["motion"] = {{"type", "linear"}, {"vx", s.target.motion.vx},
                                     {"vy", s.target.motion.vy}};
            break;
        case MotionType::Sinusoidal:
            j["target"]["motion"] = {{"type", "sinusoidal"}, {"amp", s.target.motion.amp},
                                     {"period", s.target.motion.period}};
            break;
        case MotionType::PiecewiseFast:
            j["target"]["motion"] = {{"type", "piecewise-fast"}, {"speed", s.target.motion.speed}};
            break;
    }
    if (s.target.has_start) j["target"]["start"] = {s.target.start_x, s.target.start_y};
    if (s.occluder.present)
        j["occluder"] = {{"x", s.occluder.box.x}, {"y", s.occluder.box.y}, {"w", s.occluder.box.w},
                         {"h", s.occluder.box.h}, {"from", s.occluder.from}, {"to", s.occluder.to},
                         {"opacity", s.occluder.opacity}, {"level", s.occluder.level}};
    switch (s.background.type) {
        case BackgroundType::Flat:
            j["background"] = {{"type", "flat"}, {"level", s.background.level}};
            break;
        case BackgroundType::Noise:
            j["background"] = {{"type", "noise"}, {"level", s.background.level},
                               {"sigma", s.background.sigma}};
            break;
        case BackgroundType::Clutter:
            j["background"] = {{"type", "clutter"}, {"level", s.background.level},
                               {"count", s.background.count},
                               {"texture_seed", s.background.texture_seed}};
            break;
    }
    if (s.illumination.present) j["illumination"] = {{"gain_end", s.illumination.gain_end}};
    return j;
}

inline std::string scenario_hash(const Scenario& s) { return hash_hex(json_hash(scenario_to_json(s))); }

}  // namespace flowtrack

#endif  // FLOWTRACK_SYNTH_HPP
