#ifndef FLOWTRACK_BASELINE_HPP
#define FLOWTRACK_BASELINE_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "flowtrack/box.hpp"
#include "flowtrack/errors.hpp"
#include "flowtrack/tensor.hpp"

namespace flowtrack {

constexpr int kNccSearchRadius = 16;  // px around the previous position
constexpr double kNccDegenerate = -2.0;  // below any valid correlation

namespace detail {

// Zero-normalized cross-correlation of a template against a frame window.
inline double zncc(const Tensor& frame, int fx, int fy, const std::vector<float>& tmpl,
                   double tmpl_mean, double tmpl_var, int tw, int th) {
    double mean = 0.0;
    for (int y = 0; y < th; ++y) {
        const float* row = &frame.data[(static_cast<std::size_t>(fy + y) * frame.w + fx)];
        for (int x = 0; x < tw; ++x) mean += row[x];
    }
    mean /= static_cast<double>(tw) * th;
    double cov = 0.0, var = 0.0;
    const float* tp = tmpl.data();
    for (int y = 0; y < th; ++y) {
        const float* row = &frame.data[(static_cast<std::size_t>(fy + y) * frame.w + fx)];
        for (int x = 0; x < tw; ++x) {
            double a = row[x] - mean;
            double b = *tp++ - tmpl_mean;
            cov += a * b;
            var += a * a;
        }
    }
    if (var < 1e-9 || tmpl_var < 1e-9) return kNccDegenerate;
    return cov / std::sqrt(var * tmpl_var);
}

}  // namespace detail

// Classical fixed-template tracker: the template is cropped once from frame
// 0 and matched exhaustively in a +/-16 px window around the previous
// position. No occlusion model and no template update, which is exactly the
// weakness the benchmark comparisons exercise. Ties resolve to the smallest
// displacement, then lexicographic (dy, dx).
inline std::vector<Box> ncc_baseline_track(const std::vector<Tensor>& frames, const Box& init_box) {
    if (frames.empty()) throw ValidationError("baseline needs at least one frame");
    const Tensor& f0 = frames[0];
    if (f0.c != 1) throw ShapeError("baseline expects grayscale frames");
    int tw = std::max(1, static_cast<int>(std::lround(init_box.w)));
    int th = std::max(1, static_cast<int>(std::lround(init_box.h)));
    int x0 = static_cast<int>(std::lround(init_box.left()));
    int y0 = static_cast<int>(std::lround(init_box.top()));
    x0 = std::clamp(x0, 0, f0.w - tw);
    y0 = std::clamp(y0, 0, f0.h - th);
    if (init_box.left() >= f0.w || init_box.right() <= 0 || init_box.top() >= f0.h ||
        init_box.bottom() <= 0)
        throw GeometryError("baseline init box outside frame 0");

    std::vector<float> tmpl;
    tmpl.reserve(static_cast<std::size_t>(tw) * th);
    double tmpl_mean = 0.0;
    for (int y = 0; y < th; ++y)
        for (int x = 0; x < tw; ++x) {
            float v = f0.at(y0 + y, x0 + x, 0);
            tmpl.push_back(v);
            tmpl_mean += v;
        }
    tmpl_mean /= tmpl.size();
    double tmpl_var = 0.0;
    for (float v : tmpl) tmpl_var += (v - tmpl_mean) * (v - tmpl_mean);

    std::vector<Box> out;
    out.reserve(frames.size());
    out.push_back(init_box);
    int px = x0, py = y0;
    for (std::size_t t = 1; t < frames.size(); ++t) {
        const Tensor& fr = frames[t];
        if (fr.h != f0.h || fr.w != f0.w || fr.c != 1)
            throw ShapeError("baseline frames must share dims");
        double best = -std::numeric_limits<double>::infinity();
        long best_mag = 0;
        int bx = px, by = py;
        for (int dy = -kNccSearchRadius; dy <= kNccSearchRadius; ++dy) {
            int cy = py + dy;
            if (cy < 0 || cy + th > fr.h) continue;
            for (int dx = -kNccSearchRadius; dx <= kNccSearchRadius; ++dx) {
                int cx = px + dx;
                if (cx < 0 || cx + tw > fr.w) continue;
                double s = detail::zncc(fr, cx, cy, tmpl, tmpl_mean, tmpl_var, tw, th);
                long mag = static_cast<long>(dx) * dx + static_cast<long>(dy) * dy;
                bool better =
                    s > best || (s == best && (mag < best_mag ||
                                               (mag == best_mag &&
                                                (cy < by || (cy == by && cx < bx)))));
                if (better) {
                    best = s;
                    best_mag = mag;
                    bx = cx;
                    by = cy;
                }
            }
        }
        px = bx;
        py = by;
        out.push_back(Box{init_box.x + (bx - x0), init_box.y + (by - y0), init_box.w, init_box.h});
    }
    return out;
}

}  // namespace flowtrack

#endif  // FLOWTRACK_BASELINE_HPP
