#ifndef FLOWTRACK_LAYERS_HPP
#define FLOWTRACK_LAYERS_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "flowtrack/errors.hpp"
#include "flowtrack/rng.hpp"
#include "flowtrack/tensor.hpp"

namespace flowtrack {

enum class Activation { Identity, Relu, LeakyRelu, Sigmoid };

constexpr float kLeakySlope = 0.1f;

inline float activate(Activation a, float z) {
    switch (a) {
        case Activation::Identity: return z;
        case Activation::Relu: return z > 0.0f ? z : 0.0f;
        case Activation::LeakyRelu: return z > 0.0f ? z : kLeakySlope * z;
        case Activation::Sigmoid: return 1.0f / (1.0f + std::exp(-z));
    }
    return z;
}

// Derivative w.r.t. the preactivation z.
inline float activate_grad(Activation a, float z) {
    switch (a) {
        case Activation::Identity: return 1.0f;
        case Activation::Relu: return z > 0.0f ? 1.0f : 0.0f;
        case Activation::LeakyRelu: return z > 0.0f ? 1.0f : kLeakySlope;
        case Activation::Sigmoid: {
            float s = 1.0f / (1.0f + std::exp(-z));
            return s * (1.0f - s);
        }
    }
    return 1.0f;
}

inline const char* activation_name(Activation a) {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::Relu: return "relu";
        case Activation::LeakyRelu: return "leaky_relu";
        case Activation::Sigmoid: return "sigmoid";
    }
    return "identity";
}

inline Activation activation_from_name(const std::string& name) {
    if (name == "identity") return Activation::Identity;
    if (name == "relu") return Activation::Relu;
    if (name == "leaky_relu") return Activation::LeakyRelu;
    if (name == "sigmoid") return Activation::Sigmoid;
    throw ValidationError("unknown activation '" + name + "'");
}

inline int conv_out_extent(int in, int kernel, int stride, int padding) {
    return (in + 2 * padding - kernel) / stride + 1;
}

// 2-D cross-correlation layer. In depthwise-separable mode the kernel is
// factored into a per-channel spatial filter followed by a 1x1 projection;
// stride and padding apply to the spatial stage.
struct ConvLayer {
    int kernel_h = 0;
    int kernel_w = 0;
    int in_channels = 0;
    int out_channels = 0;
    int stride = 1;
    int padding = 0;
    Activation activation = Activation::Identity;
    bool depthwise_separable = false;
    std::vector<float> weights;  // standard: [((ky*kw+kx)*in + ic)*out + oc]
                                 // separable: depth [(ky*kw+kx)*in + ic] then point [ic*out + oc]
    std::vector<float> bias;     // per output channel

    std::size_t depth_weight_count() const {
        return static_cast<std::size_t>(kernel_h) * kernel_w * in_channels;
    }
    std::size_t point_weight_count() const {
        return static_cast<std::size_t>(in_channels) * out_channels;
    }
    std::size_t weight_count() const {
        if (depthwise_separable) return depth_weight_count() + point_weight_count();
        return static_cast<std::size_t>(kernel_h) * kernel_w * in_channels * out_channels;
    }
    std::size_t param_count() const { return weight_count() + static_cast<std::size_t>(out_channels); }

    void validate() const {
        if (kernel_h <= 0 || kernel_w <= 0 || in_channels <= 0 || out_channels <= 0 ||
            stride <= 0 || padding < 0)
            throw ShapeError("invalid conv layer geometry");
        if (weights.size() != weight_count())
            throw ShapeError("conv weight count " + std::to_string(weights.size()) +
                             " does not match layout " + std::to_string(weight_count()));
        if (bias.size() != static_cast<std::size_t>(out_channels))
            throw ShapeError("conv bias count mismatch");
    }
};

struct DenseLayer {
    int in_dim = 0;
    int out_dim = 0;
    Activation activation = Activation::Identity;
    std::vector<float> weights;  // [i*out_dim + j]
    std::vector<float> bias;     // out_dim

    std::size_t weight_count() const { return static_cast<std::size_t>(in_dim) * out_dim; }
    std::size_t param_count() const { return weight_count() + static_cast<std::size_t>(out_dim); }

    void validate() const {
        if (in_dim <= 0 || out_dim <= 0) throw ShapeError("invalid dense layer dims");
        if (weights.size() != weight_count()) throw ShapeError("dense weight count mismatch");
        if (bias.size() != static_cast<std::size_t>(out_dim)) throw ShapeError("dense bias count mismatch");
    }
};

struct MaxPoolLayer {
    int window = 2;
    int stride = 2;

    std::size_t param_count() const { return 0; }

    void validate() const {
        if (window <= 0 || stride <= 0) throw ShapeError("invalid pool geometry");
    }
};

inline void glorot_init(std::vector<float>& w, int fan_in, int fan_out, Rng& rng) {
    double s = std::sqrt(6.0 / (static_cast<double>(fan_in) + fan_out));
    for (float& v : w) v = rng.uniform_f(static_cast<float>(-s), static_cast<float>(s));
}

inline void init_params(ConvLayer& l, Rng& rng) {
    l.weights.resize(l.weight_count());
    l.bias.assign(l.out_channels, 0.0f);
    if (l.depthwise_separable) {
        int spatial = l.kernel_h * l.kernel_w;
        std::vector<float> depth(l.depth_weight_count());
        std::vector<float> point(l.point_weight_count());
        glorot_init(depth, spatial, spatial, rng);
        glorot_init(point, l.in_channels, l.out_channels, rng);
        std::copy(depth.begin(), depth.end(), l.weights.begin());
        std::copy(point.begin(), point.end(), l.weights.begin() + depth.size());
    } else {
        glorot_init(l.weights, l.kernel_h * l.kernel_w * l.in_channels,
                    l.kernel_h * l.kernel_w * l.out_channels, rng);
    }
}

inline void init_params(DenseLayer& l, Rng& rng) {
    l.weights.resize(l.weight_count());
    l.bias.assign(l.out_dim, 0.0f);
    glorot_init(l.weights, l.in_dim, l.out_dim, rng);
}

// Per-layer forward state kept for the backward pass.
struct ConvCache {
    Tensor preact;
    Tensor depth_mid;  // separable mode only
};

namespace detail {

inline void conv_check_input(const ConvLayer& l, const Tensor& in, int& oh, int& ow) {
    l.validate();
    if (in.c != l.in_channels)
        throw ShapeError("conv expects " + std::to_string(l.in_channels) + " channels, got " +
                         std::to_string(in.c));
    oh = conv_out_extent(in.h, l.kernel_h, l.stride, l.padding);
    ow = conv_out_extent(in.w, l.kernel_w, l.stride, l.padding);
    if (oh < 1 || ow < 1)
        throw ShapeError("conv kernel " + std::to_string(l.kernel_h) + "x" + std::to_string(l.kernel_w) +
                         " does not fit input " + in.shape_str());
}

inline Tensor conv_forward_standard(const ConvLayer& l, const Tensor& in, ConvCache* cache) {
    int oh = 0, ow = 0;
    conv_check_input(l, in, oh, ow);
    Tensor out(oh, ow, l.out_channels);
    std::vector<float> acc(l.out_channels);
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            for (int oc = 0; oc < l.out_channels; ++oc) acc[oc] = l.bias[oc];
            for (int ky = 0; ky < l.kernel_h; ++ky) {
                int iy = oy * l.stride - l.padding + ky;
                if (iy < 0 || iy >= in.h) continue;
                for (int kx = 0; kx < l.kernel_w; ++kx) {
                    int ix = ox * l.stride - l.padding + kx;
                    if (ix < 0 || ix >= in.w) continue;
                    const float* inp = &in.data[(static_cast<std::size_t>(iy) * in.w + ix) * in.c];
                    const float* wbase =
                        &l.weights[(static_cast<std::size_t>(ky) * l.kernel_w + kx) * l.in_channels *
                                   l.out_channels];
                    for (int ic = 0; ic < l.in_channels; ++ic) {
                        float v = inp[ic];
                        const float* wrow = wbase + static_cast<std::size_t>(ic) * l.out_channels;
                        for (int oc = 0; oc < l.out_channels; ++oc) acc[oc] += v * wrow[oc];
                    }
                }
            }
            float* op = &out.data[(static_cast<std::size_t>(oy) * ow + ox) * l.out_channels];
            for (int oc = 0; oc < l.out_channels; ++oc) op[oc] = acc[oc];
        }
    }
    if (cache) cache->preact = out;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = activate(l.activation, out.data[i]);
    return out;
}

inline Tensor conv_forward_separable(const ConvLayer& l, const Tensor& in, ConvCache* cache) {
    int oh = 0, ow = 0;
    conv_check_input(l, in, oh, ow);
    const float* wd = l.weights.data();
    const float* wp = l.weights.data() + l.depth_weight_count();
    Tensor mid(oh, ow, l.in_channels);
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            float* mp = &mid.data[(static_cast<std::size_t>(oy) * ow + ox) * l.in_channels];
            for (int ky = 0; ky < l.kernel_h; ++ky) {
                int iy = oy * l.stride - l.padding + ky;
                if (iy < 0 || iy >= in.h) continue;
                for (int kx = 0; kx < l.kernel_w; ++kx) {
                    int ix = ox * l.stride - l.padding + kx;
                    if (ix < 0 || ix >= in.w) continue;
                    const float* inp = &in.data[(static_cast<std::size_t>(iy) * in.w + ix) * in.c];
                    const float* wrow = wd + (static_cast<std::size_t>(ky) * l.kernel_w + kx) * l.in_channels;
                    for (int ic = 0; ic < l.in_channels; ++ic) mp[ic] += inp[ic] * wrow[ic];
                }
            }
        }
    }
    Tensor out(oh, ow, l.out_channels);
    std::vector<float> acc(l.out_channels);
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            for (int oc = 0; oc < l.out_channels; ++oc) acc[oc] = l.bias[oc];
            const float* mp = &mid.data[(static_cast<std::size_t>(oy) * ow + ox) * l.in_channels];
            for (int ic = 0; ic < l.in_channels; ++ic) {
                float v = mp[ic];
                const float* wrow = wp + static_cast<std::size_t>(ic) * l.out_channels;
                for (int oc = 0; oc < l.out_channels; ++oc) acc[oc] += v * wrow[oc];
            }
            float* op = &out.data[(static_cast<std::size_t>(oy) * ow + ox) * l.out_channels];
            for (int oc = 0; oc < l.out_channels; ++oc) op[oc] = acc[oc];
        }
    }
    if (cache) {
        cache->preact = out;
        cache->depth_mid = mid;
    }
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] = activate(l.activation, out.data[i]);
    return out;
}

}  // namespace detail

inline Tensor conv2d_forward(const ConvLayer& l, const Tensor& in, ConvCache* cache = nullptr) {
    return l.depthwise_separable ? detail::conv_forward_separable(l, in, cache)
                                 : detail::conv_forward_standard(l, in, cache);
}

// Gradient of the activated output -> gradients of weights, bias and input.
// dW/db are accumulated into, so callers can sum over multiple examples.
inline Tensor conv2d_backward(const ConvLayer& l, const Tensor& in, const ConvCache& cache,
                              const Tensor& dout, std::vector<float>& dweights,
                              std::vector<float>& dbias) {
    int oh = 0, ow = 0;
    detail::conv_check_input(l, in, oh, ow);
    if (dout.h != oh || dout.w != ow || dout.c != l.out_channels)
        throw ShapeError("conv backward: upstream gradient shape mismatch");
    dweights.resize(l.weight_count(), 0.0f);
    dbias.resize(l.out_channels, 0.0f);
    Tensor din(in.h, in.w, in.c);
    std::vector<float> g(l.out_channels);

    if (!l.depthwise_separable) {
        for (int oy = 0; oy < oh; ++oy) {
            for (int ox = 0; ox < ow; ++ox) {
                const float* dp = &dout.data[(static_cast<std::size_t>(oy) * ow + ox) * l.out_channels];
                const float* zp = &cache.preact.data[(static_cast<std::size_t>(oy) * ow + ox) * l.out_channels];
                for (int oc = 0; oc < l.out_channels; ++oc) {
                    g[oc] = dp[oc] * activate_grad(l.activation, zp[oc]);
                    dbias[oc] += g[oc];
                }
                for (int ky = 0; ky < l.kernel_h; ++ky) {
                    int iy = oy * l.stride - l.padding + ky;
                    if (iy < 0 || iy >= in.h) continue;
                    for (int kx = 0; kx < l.kernel_w; ++kx) {
                        int ix = ox * l.stride - l.padding + kx;
                        if (ix < 0 || ix >= in.w) continue;
                        const float* inp = &in.data[(static_cast<std::size_t>(iy) * in.w + ix) * in.c];
                        float* dinp = &din.data[(static_cast<std::size_t>(iy) * in.w + ix) * in.c];
                        std::size_t wb = (static_cast<std::size_t>(ky) * l.kernel_w + kx) *
                                         l.in_channels * l.out_channels;
                        for (int ic = 0; ic < l.in_channels; ++ic) {
                            const float* wrow = &l.weights[wb + static_cast<std::size_t>(ic) * l.out_channels];
                            float* dwrow = &dweights[wb + static_cast<std::size_t>(ic) * l.out_channels];
                            float v = inp[ic];
                            float acc = 0.0f;
                            for (int oc = 0; oc < l.out_channels; ++oc) {
                                dwrow[oc] += v * g[oc];
                                acc += wrow[oc] * g[oc];
                            }
                            dinp[ic] += acc;
                        }
                    }
                }
            }
        }
        return din;
    }

    // Separable: activation/bias sit after the pointwise stage.
    const float* wd = l.weights.data();
    const float* wp = l.weights.data() + l.depth_weight_count();
    float* dwd = dweights.data();
    float* dwp = dweights.data() + l.depth_weight_count();
    Tensor dmid(oh, ow, l.in_channels);
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            const float* dp = &dout.data[(static_cast<std::size_t>(oy) * ow + ox) * l.out_channels];
            const float* zp = &cache.preact.data[(static_cast<std::size_t>(oy) * ow + ox) * l.out_channels];
            for (int oc = 0; oc < l.out_channels; ++oc) {
                g[oc] = dp[oc] * activate_grad(l.activation, zp[oc]);
                dbias[oc] += g[oc];
            }
            const float* mp = &cache.depth_mid.data[(static_cast<std::size_t>(oy) * ow + ox) * l.in_channels];
            float* dmp = &dmid.data[(static_cast<std::size_t>(oy) * ow + ox) * l.in_channels];
            for (int ic = 0; ic < l.in_channels; ++ic) {
                const float* wrow = wp + static_cast<std::size_t>(ic) * l.out_channels;
                float* dwrow = dwp + static_cast<std::size_t>(ic) * l.out_channels;
                float v = mp[ic];
                float acc = 0.0f;
                for (int oc = 0; oc < l.out_channels; ++oc) {
                    dwrow[oc] += v * g[oc];
                    acc += wrow[oc] * g[oc];
                }
                dmp[ic] = acc;
            }
        }
    }
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            const float* dmp = &dmid.data[(static_cast<std::size_t>(oy) * ow + ox) * l.in_channels];
            for (int ky = 0; ky < l.kernel_h; ++ky) {
                int iy = oy * l.stride - l.padding + ky;
                if (iy < 0 || iy >= in.h) continue;
                for (int kx = 0; kx < l.kernel_w; ++kx) {
                    int ix = ox * l.stride - l.padding + kx;
                    if (ix < 0 || ix >= in.w) continue;
                    const float* inp = &in.data[(static_cast<std::size_t>(iy) * in.w + ix) * in.c];
                    float* dinp = &din.data[(static_cast<std::size_t>(iy) * in.w + ix) * in.c];
                    const float* wrow = wd + (static_cast<std::size_t>(ky) * l.kernel_w + kx) * l.in_channels;
                    float* dwrow = dwd + (static_cast<std::size_t>(ky) * l.kernel_w + kx) * l.in_channels;
                    for (int ic = 0; ic < l.in_channels; ++ic) {
                        dwrow[ic] += dmp[ic] * inp[ic];
                        dinp[ic] += dmp[ic] * wrow[ic];
                    }
                }
            }
        }
    }
    return din;
}

inline std::vector<float> dense_forward(const DenseLayer& l, const std::vector<float>& x,
                                        std::vector<float>* preact = nullptr) {
    l.validate();
    if (x.size() != static_cast<std::size_t>(l.in_dim))
        throw ShapeError("dense expects " + std::to_string(l.in_dim) + " inputs, got " +
                         std::to_string(x.size()));
    std::vector<float> z(l.bias);
    for (int i = 0; i < l.in_dim; ++i) {
        float v = x[i];
        const float* wrow = &l.weights[static_cast<std::size_t>(i) * l.out_dim];
        for (int j = 0; j < l.out_dim; ++j) z[j] += v * wrow[j];
    }
    if (preact) *preact = z;
    for (float& v : z) v = activate(l.activation, v);
    return z;
}

inline std::vector<float> dense_backward(const DenseLayer& l, const std::vector<float>& x,
                                         const std::vector<float>& preact,
                                         const std::vector<float>& dout,
                                         std::vector<float>& dweights, std::vector<float>& dbias) {
    if (dout.size() != static_cast<std::size_t>(l.out_dim))
        throw ShapeError("dense backward: upstream gradient size mismatch");
    dweights.resize(l.weight_count(), 0.0f);
    dbias.resize(l.out_dim, 0.0f);
    std::vector<float> g(l.out_dim);
    for (int j = 0; j < l.out_dim; ++j) {
        g[j] = dout[j] * activate_grad(l.activation, preact[j]);
        dbias[j] += g[j];
    }
    std::vector<float> dx(l.in_dim, 0.0f);
    for (int i = 0; i < l.in_dim; ++i) {
        const float* wrow = &l.weights[static_cast<std::size_t>(i) * l.out_dim];
        float* dwrow = &dweights[static_cast<std::size_t>(i) * l.out_dim];
        float v = x[i];
        float acc = 0.0f;
        for (int j = 0; j < l.out_dim; ++j) {
            dwrow[j] += v * g[j];
            acc += wrow[j] * g[j];
        }
        dx[i] = acc;
    }
    return dx;
}

// Per-channel window maximum. argmax (flat data index, first hit in scan
// order) is recorded when a cache is supplied so backward can route gradients.
inline Tensor max_pool(const Tensor& in, int window, int stride,
                       std::vector<std::size_t>* argmax = nullptr) {
    if (window <= 0 || stride <= 0) throw ShapeError("invalid pool window/stride");
    if (window > in.h || window > in.w)
        throw ShapeError("pool window " + std::to_string(window) + " larger than input " + in.shape_str());
    int oh = (in.h - window) / stride + 1;
    int ow = (in.w - window) / stride + 1;
    Tensor out(oh, ow, in.c);
    if (argmax) argmax->assign(out.size(), 0);
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            for (int ch = 0; ch < in.c; ++ch) {
                float best = -std::numeric_limits<float>::infinity();
                std::size_t best_idx = 0;
                for (int ky = 0; ky < window; ++ky) {
                    for (int kx = 0; kx < window; ++kx) {
                        int iy = oy * stride + ky;
                        int ix = ox * stride + kx;
                        std::size_t idx = (static_cast<std::size_t>(iy) * in.w + ix) * in.c + ch;
                        float v = in.data[idx];
                        if (v > best) {
                            best = v;
                            best_idx = idx;
                        }
                    }
                }
                std::size_t oidx = (static_cast<std::size_t>(oy) * ow + ox) * in.c + ch;
                out.data[oidx] = best;
                if (argmax) (*argmax)[oidx] = best_idx;
            }
        }
    }
    return out;
}

inline Tensor max_pool_backward(const Tensor& in, const Tensor& dout,
                                const std::vector<std::size_t>& argmax) {
    Tensor din(in.h, in.w, in.c);
    for (std::size_t i = 0; i < dout.data.size(); ++i) din.data[argmax[i]] += dout.data[i];
    return din;
}

}  // namespace flowtrack

#endif  // FLOWTRACK_LAYERS_HPP
