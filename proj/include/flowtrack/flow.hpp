#ifndef FLOWTRACK_FLOW_HPP
#define FLOWTRACK_FLOW_HPP

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <limits>
#include <ostream>
#include <utility>
#include <vector>

#include "flowtrack/box.hpp"
#include "flowtrack/errors.hpp"
#include "flowtrack/network.hpp"
#include "flowtrack/tensor.hpp"

namespace flowtrack {

// Per-pixel displacement map, px/frame. A vector at p says where the content
// of prev(p) is found in the current frame: cur(p + v) ~ prev(p).
struct FlowField {
    int h = 0;
    int w = 0;
    std::vector<float> uv;  // interleaved (u, v) pairs, row-major

    FlowField() = default;
    FlowField(int height, int width) : h(height), w(width), uv(2ull * height * width, 0.0f) {}

    float& u(int y, int x) { return uv[2 * (static_cast<std::size_t>(y) * w + x)]; }
    float& v(int y, int x) { return uv[2 * (static_cast<std::size_t>(y) * w + x) + 1]; }
    float u(int y, int x) const { return uv[2 * (static_cast<std::size_t>(y) * w + x)]; }
    float v(int y, int x) const { return uv[2 * (static_cast<std::size_t>(y) * w + x) + 1]; }
};

struct FlowParams {
    int pyramid_levels = 3;
    int block_size = 8;
    int search_radius = 4;  // per level
    bool subpixel_refine = true;

    void validate() const {
        if (pyramid_levels < 1) throw ValidationError("flow pyramid_levels must be >= 1");
        if (block_size < 3) throw ValidationError("flow block_size must be >= 3");
        if (search_radius < 1) throw ValidationError("flow search_radius must be >= 1");
    }

    // Largest displacement representable after coarse-to-fine propagation.
    double aggregate_range() const {
        double r = search_radius * (std::pow(2.0, pyramid_levels) - 1.0);
        return subpixel_refine ? r + 0.5 : r;
    }
};

// Luminance conversion for color frames; single-channel input passes through.
inline Tensor to_grayscale(const Tensor& img) {
    if (img.c == 1) return img;
    if (img.c != 3) throw ShapeError("grayscale conversion expects 1 or 3 channels, got " +
                                     std::to_string(img.c));
    Tensor g(img.h, img.w, 1);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            g.at(y, x, 0) = 0.299f * img.at(y, x, 0) + 0.587f * img.at(y, x, 1) +
                            0.114f * img.at(y, x, 2);
    return g;
}

namespace detail {

inline Tensor downsample2(const Tensor& in) {
    int oh = in.h / 2, ow = in.w / 2;
    Tensor out(oh, ow, 1);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x)
            out.at(y, x, 0) = 0.25f * (in.at(2 * y, 2 * x, 0) + in.at(2 * y, 2 * x + 1, 0) +
                                       in.at(2 * y + 1, 2 * x, 0) + in.at(2 * y + 1, 2 * x + 1, 0));
    return out;
}

inline double block_sad(const Tensor& a, const Tensor& b, int ax, int ay, int bx, int by, int size) {
    double s = 0.0;
    for (int y = 0; y < size; ++y) {
        const float* pa = &a.data[(static_cast<std::size_t>(ay + y) * a.w + ax)];
        const float* pb = &b.data[(static_cast<std::size_t>(by + y) * b.w + bx)];
        for (int x = 0; x < size; ++x) s += std::fabs(static_cast<double>(pa[x]) - pb[x]);
    }
    return s;
}

struct BlockGrid {
    int nbx = 0, nby = 0;
    std::vector<float> u, v;  // per block
};

}  // namespace detail

// Coarse-to-fine block matching minimizing SAD. Deterministic: ties resolve
// to the smallest displacement magnitude, then lexicographic (u, v). Border
// pixels outside the block tiling inherit the nearest block's vector.
inline FlowField estimate_flow(const Tensor& prev, const Tensor& cur, const FlowParams& params) {
    params.validate();
    if (prev.c != 1 || cur.c != 1) throw ShapeError("flow expects single-channel frames");
    if (prev.h != cur.h || prev.w != cur.w)
        throw ShapeError("flow frames differ: " + prev.shape_str() + " vs " + cur.shape_str());
    if (prev.h < params.block_size || prev.w < params.block_size)
        throw ShapeError("frame " + prev.shape_str() + " smaller than flow block " +
                         std::to_string(params.block_size));

    const int B = params.block_size;
    const int R = params.search_radius;

    std::vector<Tensor> pyr_prev{prev}, pyr_cur{cur};
    for (int l = 1; l < params.pyramid_levels; ++l) {
        const Tensor& p = pyr_prev.back();
        if (p.h / 2 < B || p.w / 2 < B) break;
        pyr_prev.push_back(detail::downsample2(pyr_prev.back()));
        pyr_cur.push_back(detail::downsample2(pyr_cur.back()));
    }
    const int levels = static_cast<int>(pyr_prev.size());

    std::vector<detail::BlockGrid> grids(levels);
    std::vector<double> sad;

    for (int l = levels - 1; l >= 0; --l) {
        const Tensor& pimg = pyr_prev[l];
        const Tensor& cimg = pyr_cur[l];
        detail::BlockGrid& g = grids[l];
        g.nbx = (pimg.w + B - 1) / B;
        g.nby = (pimg.h + B - 1) / B;
        g.u.assign(static_cast<std::size_t>(g.nbx) * g.nby, 0.0f);
        g.v.assign(static_cast<std::size_t>(g.nbx) * g.nby, 0.0f);
        const detail::BlockGrid* coarse = l + 1 < levels ? &grids[l + 1] : nullptr;

        for (int bi = 0; bi < g.nby; ++bi) {
            for (int bj = 0; bj < g.nbx; ++bj) {
                int sx = std::min(bj * B, pimg.w - B);
                int sy = std::min(bi * B, pimg.h - B);

                int gx = 0, gy = 0;
                if (coarse) {
                    int ccx = (sx + B / 2) / 2;
                    int ccy = (sy + B / 2) / 2;
                    int cbj = std::min(ccx / B, coarse->nbx - 1);
                    int cbi = std::min(ccy / B, coarse->nby - 1);
                    std::size_t ci = static_cast<std::size_t>(cbi) * coarse->nbx + cbj;
                    gx = static_cast<int>(std::lround(2.0 * coarse->u[ci]));
                    gy = static_cast<int>(std::lround(2.0 * coarse->v[ci]));
                }

                // Search the union of two windows: one around the propagated
                // guess and one around zero. The zero window recovers blocks
                // whose coarse guess was corrupted by content leaving the
                // frame at a coarser level.
                const int ulo = std::min(gx, 0) - R, uhi = std::max(gx, 0) + R;
                const int vlo = std::min(gy, 0) - R, vhi = std::max(gy, 0) + R;
                const int uspan = uhi - ulo + 1, vspan = vhi - vlo + 1;
                sad.assign(static_cast<std::size_t>(uspan) * vspan,
                           std::numeric_limits<double>::infinity());
                auto in_windows = [&](int u, int v) {
                    bool near_guess = std::abs(u - gx) <= R && std::abs(v - gy) <= R;
                    bool near_zero = std::abs(u) <= R && std::abs(v) <= R;
                    return near_guess || near_zero;
                };

                double best_sad = std::numeric_limits<double>::infinity();
                long best_mag = 0;
                int best_u = 0, best_v = 0;
                bool found = false;
                for (int v = vlo; v <= vhi; ++v) {
                    for (int u = ulo; u <= uhi; ++u) {
                        if (!in_windows(u, v)) continue;
                        int tx = sx + u;
                        int ty = sy + v;
                        if (tx < 0 || ty < 0 || tx + B > cimg.w || ty + B > cimg.h) continue;
                        double s = detail::block_sad(pimg, cimg, sx, sy, tx, ty, B);
                        sad[static_cast<std::size_t>(v - vlo) * uspan + (u - ulo)] = s;
                        long mag = static_cast<long>(u) * u + static_cast<long>(v) * v;
                        bool better =
                            !found || s < best_sad ||
                            (s == best_sad &&
                             (mag < best_mag ||
                              (mag == best_mag && (u < best_u || (u == best_u && v < best_v)))));
                        if (better) {
                            found = true;
                            best_sad = s;
                            best_mag = mag;
                            best_u = u;
                            best_v = v;
                        }
                    }
                }
                if (!found) {  // degenerate tiny frames: stay put
                    best_u = 0;
                    best_v = 0;
                    best_sad = 0.0;
                }

                float fu = static_cast<float>(best_u);
                float fv = static_cast<float>(best_v);
                if (l == 0 && params.subpixel_refine && best_sad > 0.0) {
                    auto at = [&](int u, int v) -> double {
                        if (u < ulo || u > uhi || v < vlo || v > vhi)
                            return std::numeric_limits<double>::infinity();
                        return sad[static_cast<std::size_t>(v - vlo) * uspan + (u - ulo)];
                    };
                    double sm = at(best_u - 1, best_v), sp = at(best_u + 1, best_v);
                    if (std::isfinite(sm) && std::isfinite(sp)) {
                        double den = sm - 2.0 * best_sad + sp;
                        if (den > 0.0)
                            fu += static_cast<float>(std::clamp(0.5 * (sm - sp) / den, -0.5, 0.5));
                    }
                    sm = at(best_u, best_v - 1), sp = at(best_u, best_v + 1);
                    if (std::isfinite(sm) && std::isfinite(sp)) {
                        double den = sm - 2.0 * best_sad + sp;
                        if (den > 0.0)
                            fv += static_cast<float>(std::clamp(0.5 * (sm - sp) / den, -0.5, 0.5));
                    }
                }
                std::size_t bidx = static_cast<std::size_t>(bi) * g.nbx + bj;
                g.u[bidx] = fu;
                g.v[bidx] = fv;
            }
        }
    }

    FlowField field(prev.h, prev.w);
    const detail::BlockGrid& g0 = grids[0];
    for (int y = 0; y < prev.h; ++y) {
        int bi = std::min(y / B, g0.nby - 1);
        for (int x = 0; x < prev.w; ++x) {
            int bj = std::min(x / B, g0.nbx - 1);
            std::size_t bidx = static_cast<std::size_t>(bi) * g0.nbx + bj;
            field.u(y, x) = g0.u[bidx];
            field.v(y, x) = g0.v[bidx];
        }
    }
    return field;
}

namespace detail {

inline double median_of(std::vector<float>& vals) {
    std::sort(vals.begin(), vals.end());
    std::size_t n = vals.size();
    if (n % 2 == 1) return vals[n / 2];
    return 0.5 * (static_cast<double>(vals[n / 2 - 1]) + vals[n / 2]);
}

}  // namespace detail

// Componentwise median of the flow vectors covered by box (intersected with
// the image). Median, not mean: background pixels inside the box during
// partial occlusion should not drag the offset.
inline std::pair<double, double> flow_offset_for_box(const FlowField& field, const Box& box) {
    if (box.right() <= 0.0 || box.left() >= field.w || box.bottom() <= 0.0 || box.top() >= field.h)
        throw GeometryError("box does not intersect the image");
    int x0 = std::clamp(static_cast<int>(std::floor(box.left())), 0, field.w - 1);
    int x1 = std::clamp(static_cast<int>(std::ceil(box.right())) - 1, x0, field.w - 1);
    int y0 = std::clamp(static_cast<int>(std::floor(box.top())), 0, field.h - 1);
    int y1 = std::clamp(static_cast<int>(std::ceil(box.bottom())) - 1, y0, field.h - 1);
    std::vector<float> us, vs;
    us.reserve(static_cast<std::size_t>(x1 - x0 + 1) * (y1 - y0 + 1));
    vs.reserve(us.capacity());
    for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
            us.push_back(field.u(y, x));
            vs.push_back(field.v(y, x));
        }
    return {detail::median_of(us), detail::median_of(vs)};
}

// Translate the center; size unchanged.
inline Box propagate_box(const Box& box, double dx, double dy) {
    return Box{box.x + dx, box.y + dy, box.w, box.h};
}

// ---- debug dump ----------------------------------------------------------
// Little-endian: magic "FTFL", height u32, width u32, then row-major raw
// f32 (u, v) pairs.

constexpr char kFlowMagic[4] = {'F', 'T', 'F', 'L'};

inline void write_flow(std::ostream& os, const FlowField& field) {
    os.write(kFlowMagic, 4);
    wire::put_u32(os, static_cast<std::uint32_t>(field.h));
    wire::put_u32(os, static_cast<std::uint32_t>(field.w));
    for (float f : field.uv) wire::put_f32(os, f);
    if (!os) throw IoError("failed writing flow dump");
}

inline FlowField read_flow(std::istream& is) {
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kFlowMagic, 4) != 0)
        throw DataIntegrityError("bad flow dump magic");
    int h = static_cast<int>(wire::get_u32(is));
    int w = static_cast<int>(wire::get_u32(is));
    if (h <= 0 || w <= 0 || h > (1 << 20) || w > (1 << 20))
        throw DataIntegrityError("flow dump: implausible dims");
    FlowField f(h, w);
    for (float& v : f.uv) v = wire::get_f32(is);
    return f;
}

}  // namespace flowtrack

#endif  // FLOWTRACK_FLOW_HPP
