// Independent brute-force oracles for the test suite. These deliberately
// re-derive results with naive scalar loops and must stay decoupled from the
// library implementations they check.

#ifndef FLOWTRACK_TESTS_ORACLES_HPP
#define FLOWTRACK_TESTS_ORACLES_HPP

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "flowtrack/box.hpp"
#include "flowtrack/detect.hpp"
#include "flowtrack/layers.hpp"
#include "flowtrack/losses.hpp"
#include "flowtrack/network.hpp"
#include "flowtrack/rng.hpp"
#include "flowtrack/tensor.hpp"

namespace oracle {

using flowtrack::Box;
using flowtrack::Tensor;

inline Tensor random_tensor(int h, int w, int c, flowtrack::Rng& rng, float lo = -1.0f,
                            float hi = 1.0f) {
    Tensor t(h, w, c);
    for (float& v : t.data) v = rng.uniform_f(lo, hi);
    return t;
}

inline double activate_ref(flowtrack::Activation a, double z) {
    using flowtrack::Activation;
    switch (a) {
        case Activation::Identity: return z;
        case Activation::Relu: return z > 0 ? z : 0;
        case Activation::LeakyRelu: return z > 0 ? z : 0.1 * z;
        case Activation::Sigmoid: return 1.0 / (1.0 + std::exp(-z));
    }
    return z;
}

// Six nested loops, double accumulation, zero padding.
inline Tensor conv_forward_ref(const flowtrack::ConvLayer& l, const Tensor& in) {
    int oh = (in.h + 2 * l.padding - l.kernel_h) / l.stride + 1;
    int ow = (in.w + 2 * l.padding - l.kernel_w) / l.stride + 1;
    Tensor out(oh, ow, l.out_channels);
    for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox)
            for (int oc = 0; oc < l.out_channels; ++oc) {
                double acc = l.bias[oc];
                for (int ky = 0; ky < l.kernel_h; ++ky)
                    for (int kx = 0; kx < l.kernel_w; ++kx)
                        for (int ic = 0; ic < l.in_channels; ++ic) {
                            int iy = oy * l.stride - l.padding + ky;
                            int ix = ox * l.stride - l.padding + kx;
                            double v = 0.0;
                            if (iy >= 0 && iy < in.h && ix >= 0 && ix < in.w) v = in.at(iy, ix, ic);
                            double w = l.weights[((static_cast<std::size_t>(ky) * l.kernel_w + kx) *
                                                      l.in_channels +
                                                  ic) *
                                                     l.out_channels +
                                                 oc];
                            acc += w * v;
                        }
                out.at(oy, ox, oc) = static_cast<float>(activate_ref(l.activation, acc));
            }
    return out;
}

inline std::vector<float> dense_forward_ref(const flowtrack::DenseLayer& l,
                                            const std::vector<float>& x) {
    std::vector<float> y(l.out_dim);
    for (int j = 0; j < l.out_dim; ++j) {
        double acc = l.bias[j];
        for (int i = 0; i < l.in_dim; ++i)
            acc += static_cast<double>(l.weights[static_cast<std::size_t>(i) * l.out_dim + j]) * x[i];
        y[j] = static_cast<float>(activate_ref(l.activation, acc));
    }
    return y;
}

inline Tensor max_pool_ref(const Tensor& in, int window, int stride) {
    int oh = (in.h - window) / stride + 1;
    int ow = (in.w - window) / stride + 1;
    Tensor out(oh, ow, in.c);
    for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox)
            for (int ch = 0; ch < in.c; ++ch) {
                float best = in.at(oy * stride, ox * stride, ch);
                for (int ky = 0; ky < window; ++ky)
                    for (int kx = 0; kx < window; ++kx)
                        best = std::max(best, in.at(oy * stride + ky, ox * stride + kx, ch));
                out.at(oy, ox, ch) = best;
            }
    return out;
}

// Scalar loss L = sum(out * weight_map); its gradient w.r.t. the output is
// exactly weight_map, so the network's backward can be checked against
// central finite differences of L over every parameter.
inline double weighted_output_sum(const flowtrack::Network& net, const Tensor& in,
                                  const Tensor& weight_map) {
    Tensor out = net.forward(in);
    double s = 0.0;
    for (std::size_t i = 0; i < out.data.size(); ++i)
        s += static_cast<double>(out.data[i]) * weight_map.data[i];
    return s;
}

struct FdStats {
    std::size_t checked = 0;
    std::size_t passed = 0;
    double worst_rel = 0.0;
};

template <typename GetSet>
void fd_check_param(flowtrack::Network& net, const Tensor& in, const Tensor& wmap, double analytic,
                    GetSet&& getset, double step, double rel_tol, double abs_tol, FdStats& stats) {
    float orig = getset(std::nullopt);
    getset(orig + static_cast<float>(step));
    double up = weighted_output_sum(net, in, wmap);
    getset(orig - static_cast<float>(step));
    double dn = weighted_output_sum(net, in, wmap);
    getset(orig);
    double numeric = (up - dn) / (2.0 * step);
    double denom = std::max(std::fabs(analytic), std::fabs(numeric));
    double abs_err = std::fabs(analytic - numeric);
    double rel = denom > 0 ? abs_err / denom : 0.0;
    ++stats.checked;
    if (abs_err <= abs_tol || rel <= rel_tol) ++stats.passed;
    stats.worst_rel = std::max(stats.worst_rel, rel);
}

// Finite-difference sweep over every parameter of every layer.
inline FdStats fd_check_network(flowtrack::Network& net, const Tensor& in, const Tensor& wmap,
                                double step, double rel_tol, double abs_tol) {
    flowtrack::ForwardCache cache;
    net.forward(in, &cache);
    flowtrack::Gradients g = net.backward(cache, wmap);
    FdStats stats;
    for (std::size_t li = 0; li < net.layers().size(); ++li) {
        auto visit_params = [&](std::vector<float>& params, const std::vector<float>& analytic) {
            for (std::size_t k = 0; k < params.size(); ++k) {
                fd_check_param(
                    net, in, wmap, analytic[k],
                    [&params, k](std::optional<float> v) -> float {
                        if (v) params[k] = *v;
                        return params[k];
                    },
                    step, rel_tol, abs_tol, stats);
            }
        };
        std::visit(
            [&](auto& layer) {
                using T = std::decay_t<decltype(layer)>;
                if constexpr (!std::is_same_v<T, flowtrack::MaxPoolLayer>) {
                    visit_params(layer.weights, g.layers[li].dweights);
                    visit_params(layer.bias, g.layers[li].dbias);
                }
            },
            net.layers()[li]);
    }
    return stats;
}

// Scalar re-derivation of the three-term objective, written independently of
// the library's batch walk.
inline double total_loss_ref(const flowtrack::RoiBatch& batch, const flowtrack::LossConfig& cfg) {
    auto sl1 = [&](double a, double b) {
        double e = std::fabs(a - b);
        return e < cfg.beta ? 0.5 * e * e / cfg.beta : e - 0.5 * cfg.beta;
    };
    double cls = 0.0;
    int n_fg = 0, n_cor = 0;
    for (const auto& r : batch.rois) {
        cls += -std::log(std::max(r.probs[r.label], 1e-12));
        if (r.label >= 1) {
            ++n_fg;
            if (r.correspondence_valid) ++n_cor;
        }
    }
    double reg = 0.0, frm = 0.0;
    for (const auto& r : batch.rois) {
        if (r.label < 1) continue;
        reg += sl1(r.pred_box.dx, r.target_box.dx) + sl1(r.pred_box.dy, r.target_box.dy) +
               sl1(r.pred_box.dw, r.target_box.dw) + sl1(r.pred_box.dh, r.target_box.dh);
        if (r.correspondence_valid)
            frm += sl1(r.pred_motion.dx, r.target_motion.dx) + sl1(r.pred_motion.dy, r.target_motion.dy) +
                   sl1(r.pred_motion.dw, r.target_motion.dw) + sl1(r.pred_motion.dh, r.target_motion.dh);
    }
    double total = cls / batch.rois.size();
    if (n_fg > 0) total += cfg.lambda_reg * reg / n_fg;
    if (n_cor > 0) total += cfg.lambda_frm * frm / n_cor;
    return total;
}

// O(n^2) reference NMS.
inline std::vector<flowtrack::Detection> nms_ref(std::vector<flowtrack::Detection> dets,
                                                 double thr) {
    std::stable_sort(dets.begin(), dets.end(),
                     [](const flowtrack::Detection& a, const flowtrack::Detection& b) {
                         if (a.score != b.score) return a.score > b.score;
                         return a.slot_index < b.slot_index;
                     });
    std::vector<flowtrack::Detection> kept;
    for (const auto& d : dets) {
        bool ok = true;
        for (const auto& k : kept)
            if (k.class_id == d.class_id && flowtrack::iou(k.box, d.box) > thr) ok = false;
        if (ok) kept.push_back(d);
    }
    return kept;
}

inline double median_ref(std::vector<float> vals) {
    std::sort(vals.begin(), vals.end());
    std::size_t n = vals.size();
    if (n % 2 == 1) return vals[n / 2];
    return 0.5 * (static_cast<double>(vals[n / 2 - 1]) + vals[n / 2]);
}

inline Box random_box(flowtrack::Rng& rng, double lo = 5.0, double hi = 200.0) {
    return Box{rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(2.0, 60.0),
               rng.uniform(2.0, 60.0)};
}

}  // namespace oracle

#endif  // FLOWTRACK_TESTS_ORACLES_HPP
