#ifndef FLOWTRACK_BOX_HPP
#define FLOWTRACK_BOX_HPP

#include <algorithm>
#include <cmath>
#include <string>

#include "flowtrack/errors.hpp"

namespace flowtrack {

// Axis-aligned box in center format, pixels. Origin top-left, x rightward,
// y downward.
struct Box {
    double x = 0.0;
    double y = 0.0;
    double w = 0.0;
    double h = 0.0;

    double left() const { return x - w / 2.0; }
    double right() const { return x + w / 2.0; }
    double top() const { return y - h / 2.0; }
    double bottom() const { return y + h / 2.0; }
    double area() const { return w * h; }
    double diagonal() const { return std::sqrt(w * w + h * h); }

    bool valid() const {
        return w > 0.0 && h > 0.0 && std::isfinite(x) && std::isfinite(y) && std::isfinite(w) &&
               std::isfinite(h);
    }
};

// Dimensionless regression offsets: relative center shift + log size ratio.
struct Delta {
    double dx = 0.0;
    double dy = 0.0;
    double dw = 0.0;
    double dh = 0.0;
};

// paper_literal divides center offsets by the anchor's center coordinates;
// rcnn_standard divides by the anchor's width/height. Both are kept and
// selectable; the convention in force is recorded in every results file.
enum class EncodingConvention { PaperLiteral, RcnnStandard };

inline const char* convention_name(EncodingConvention c) {
    return c == EncodingConvention::PaperLiteral ? "paper-literal" : "rcnn-standard";
}

inline EncodingConvention convention_from_name(const std::string& s) {
    if (s == "paper-literal" || s == "paper_literal") return EncodingConvention::PaperLiteral;
    if (s == "rcnn-standard" || s == "rcnn_standard") return EncodingConvention::RcnnStandard;
    throw ValidationError("unknown encoding convention '" + s + "'");
}

// Intersection over union; 0 for disjoint or degenerate overlap. Identical
// boxes return exactly 1.
inline double iou(const Box& a, const Box& b) {
    if (a.x == b.x && a.y == b.y && a.w == b.w && a.h == b.h) return 1.0;
    double ix = std::min(a.right(), b.right()) - std::max(a.left(), b.left());
    double iy = std::min(a.bottom(), b.bottom()) - std::max(a.top(), b.top());
    if (ix <= 0.0 || iy <= 0.0) return 0.0;
    double inter = ix * iy;
    double uni = a.area() + b.area() - inter;
    if (uni <= 0.0) return 0.0;
    return inter / uni;
}

namespace detail {

inline void check_anchor(const Box& a, EncodingConvention c) {
    if (a.w <= 0.0 || a.h <= 0.0) throw GeometryError("anchor has non-positive size");
    if (c == EncodingConvention::PaperLiteral && (a.x == 0.0 || a.y == 0.0))
        throw GeometryError("degenerate anchor: paper-literal encoding divides by anchor center");
}

}  // namespace detail

// Box -> offsets relative to an anchor. Computed in double precision.
inline Delta encode_delta(const Box& p, const Box& a, EncodingConvention c) {
    detail::check_anchor(a, c);
    Delta d;
    if (c == EncodingConvention::PaperLiteral) {
        d.dx = (p.x - a.x) / a.x;
        d.dy = (p.y - a.y) / a.y;
    } else {
        d.dx = (p.x - a.x) / a.w;
        d.dy = (p.y - a.y) / a.h;
    }
    d.dw = std::log(p.w / a.w);
    d.dh = std::log(p.h / a.h);
    return d;
}

// Target encoding is formally identical to the prediction encoding.
inline Delta encode_target(const Box& b, const Box& a, EncodingConvention c) {
    return encode_delta(b, a, c);
}

// Exact algebraic inverse of encode_delta.
inline Box decode_delta(const Delta& d, const Box& a, EncodingConvention c) {
    detail::check_anchor(a, c);
    Box p;
    if (c == EncodingConvention::PaperLiteral) {
        p.x = a.x * (1.0 + d.dx);
        p.y = a.y * (1.0 + d.dy);
    } else {
        p.x = a.x + d.dx * a.w;
        p.y = a.y + d.dy * a.h;
    }
    p.w = a.w * std::exp(d.dw);
    p.h = a.h * std::exp(d.dh);
    return p;
}

}  // namespace flowtrack

#endif  // FLOWTRACK_BOX_HPP
