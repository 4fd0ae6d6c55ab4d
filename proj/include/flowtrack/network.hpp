#ifndef FLOWTRACK_NETWORK_HPP
#define FLOWTRACK_NETWORK_HPP

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <variant>
#include <vector>

#include "flowtrack/errors.hpp"
#include "flowtrack/layers.hpp"
#include "flowtrack/tensor.hpp"

namespace flowtrack {

using Layer = std::variant<ConvLayer, DenseLayer, MaxPoolLayer>;

struct LayerGrad {
    std::vector<float> dweights;
    std::vector<float> dbias;
};

struct Gradients {
    std::vector<LayerGrad> layers;
    Tensor dinput;

    void accumulate(const Gradients& o) {
        if (layers.empty()) {
            *this = o;
            return;
        }
        if (layers.size() != o.layers.size()) throw ShapeError("gradient accumulate: layer count mismatch");
        for (std::size_t i = 0; i < layers.size(); ++i) {
            if (layers[i].dweights.size() != o.layers[i].dweights.size() ||
                layers[i].dbias.size() != o.layers[i].dbias.size())
                throw ShapeError("gradient accumulate: shape mismatch at layer " + std::to_string(i));
            for (std::size_t k = 0; k < layers[i].dweights.size(); ++k)
                layers[i].dweights[k] += o.layers[i].dweights[k];
            for (std::size_t k = 0; k < layers[i].dbias.size(); ++k)
                layers[i].dbias[k] += o.layers[i].dbias[k];
        }
    }

    void scale(float s) {
        for (auto& lg : layers) {
            for (float& v : lg.dweights) v *= s;
            for (float& v : lg.dbias) v *= s;
        }
    }
};

// All per-call forward state lives here, so forward() is const and a frozen
// network can serve inference from several threads at once.
struct ForwardCache {
    bool valid = false;
    std::vector<Tensor> inputs;  // what each layer saw
    std::vector<ConvCache> conv;
    std::vector<std::vector<float>> dense_pre;
    std::vector<std::vector<std::size_t>> pool_argmax;
    Tensor output;
};

class Network {
public:
    Network() = default;
    Network(std::vector<Layer> layers, std::uint64_t seed) : layers_(std::move(layers)), seed_(seed) {
        int idx = 0;
        for (auto& l : layers_) {
            Rng rng(seed, static_cast<std::uint64_t>(idx) + 1);
            std::visit(
                [&](auto& layer) {
                    using T = std::decay_t<decltype(layer)>;
                    if constexpr (!std::is_same_v<T, MaxPoolLayer>) init_params(layer, rng);
                },
                l);
            ++idx;
        }
    }

    const std::vector<Layer>& layers() const { return layers_; }
    std::vector<Layer>& layers() { return layers_; }
    std::uint64_t seed() const { return seed_; }

    std::size_t param_count() const {
        std::size_t n = 0;
        for (const auto& l : layers_) n += std::visit([](const auto& layer) { return layer.param_count(); }, l);
        return n;
    }

    Tensor forward(const Tensor& in, ForwardCache* cache = nullptr) const {
        Tensor cur = in;
        if (cache) {
            cache->valid = false;
            cache->inputs.assign(layers_.size(), Tensor());
            cache->conv.assign(layers_.size(), ConvCache());
            cache->dense_pre.assign(layers_.size(), {});
            cache->pool_argmax.assign(layers_.size(), {});
        }
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            if (cache) cache->inputs[i] = cur;
            const Layer& l = layers_[i];
            if (std::holds_alternative<ConvLayer>(l)) {
                cur = conv2d_forward(std::get<ConvLayer>(l), cur, cache ? &cache->conv[i] : nullptr);
            } else if (std::holds_alternative<DenseLayer>(l)) {
                const auto& d = std::get<DenseLayer>(l);
                std::vector<float> y =
                    dense_forward(d, cur.data, cache ? &cache->dense_pre[i] : nullptr);
                cur = Tensor::vec(y);
            } else {
                const auto& p = std::get<MaxPoolLayer>(l);
                cur = max_pool(cur, p.window, p.stride, cache ? &cache->pool_argmax[i] : nullptr);
            }
        }
        if (cache) {
            cache->output = cur;
            cache->valid = true;
        }
        return cur;
    }

    // Exact analytic gradients for every parameter plus the input gradient.
    Gradients backward(const ForwardCache& cache, const Tensor& upstream) const {
        if (!cache.valid) throw StateError("backward called without a cached forward pass");
        if (!upstream.same_shape(cache.output))
            throw ShapeError("upstream gradient shape " + upstream.shape_str() + " does not match output " +
                             cache.output.shape_str());
        Gradients g;
        g.layers.resize(layers_.size());
        Tensor dcur = upstream;
        for (std::size_t ri = layers_.size(); ri-- > 0;) {
            const Layer& l = layers_[ri];
            const Tensor& lin = cache.inputs[ri];
            if (std::holds_alternative<ConvLayer>(l)) {
                dcur = conv2d_backward(std::get<ConvLayer>(l), lin, cache.conv[ri], dcur,
                                       g.layers[ri].dweights, g.layers[ri].dbias);
            } else if (std::holds_alternative<DenseLayer>(l)) {
                const auto& d = std::get<DenseLayer>(l);
                std::vector<float> dx = dense_backward(d, lin.data, cache.dense_pre[ri], dcur.data,
                                                       g.layers[ri].dweights, g.layers[ri].dbias);
                Tensor t(lin.h, lin.w, lin.c);
                t.data = std::move(dx);
                dcur = std::move(t);
            } else {
                dcur = max_pool_backward(lin, dcur, cache.pool_argmax[ri]);
            }
        }
        g.dinput = std::move(dcur);
        return g;
    }

    // theta <- theta - lr * g, elementwise.
    void apply_sgd(const Gradients& g, float lr) {
        if (g.layers.size() != layers_.size()) throw ShapeError("sgd: gradient layer count mismatch");
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const LayerGrad& lg = g.layers[i];
            for (float v : lg.dweights)
                if (!std::isfinite(v))
                    throw TrainingError("non-finite weight gradient at layer " + std::to_string(i));
            for (float v : lg.dbias)
                if (!std::isfinite(v))
                    throw TrainingError("non-finite bias gradient at layer " + std::to_string(i));
            std::visit(
                [&](auto& layer) {
                    using T = std::decay_t<decltype(layer)>;
                    if constexpr (std::is_same_v<T, MaxPoolLayer>) {
                        if (!lg.dweights.empty() || !lg.dbias.empty())
                            throw ShapeError("sgd: pool layer has no parameters");
                    } else {
                        if (lg.dweights.size() != layer.weights.size() || lg.dbias.size() != layer.bias.size())
                            throw ShapeError("sgd: gradient shape mismatch at layer " + std::to_string(i));
                        for (std::size_t k = 0; k < layer.weights.size(); ++k)
                            layer.weights[k] -= lr * lg.dweights[k];
                        for (std::size_t k = 0; k < layer.bias.size(); ++k)
                            layer.bias[k] -= lr * lg.dbias[k];
                    }
                },
                layers_[i]);
        }
    }

private:
    std::vector<Layer> layers_;
    std::uint64_t seed_ = 0;
};

inline Network sgd_step(Network net, const Gradients& g, float lr) {
    net.apply_sgd(g, lr);
    return net;
}

// ---- binary weight format ----------------------------------------------
// Little-endian: magic "FTW1", version u32, layer count u32, then per layer
// a type tag u8, shape u32s and raw f32 parameters.

namespace wire {

constexpr char kWeightMagic[4] = {'F', 'T', 'W', '1'};
constexpr std::uint32_t kWeightVersion = 1;

inline void put_u8(std::ostream& os, std::uint8_t v) { os.put(static_cast<char>(v)); }

inline void put_u32(std::ostream& os, std::uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                 static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    os.write(b, 4);
}

inline void put_f32(std::ostream& os, float f) {
    std::uint32_t v;
    static_assert(sizeof(v) == sizeof(f));
    std::memcpy(&v, &f, 4);
    put_u32(os, v);
}

inline std::uint8_t get_u8(std::istream& is) {
    int c = is.get();
    if (c == EOF) throw DataIntegrityError("weight stream truncated");
    return static_cast<std::uint8_t>(c);
}

inline std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw DataIntegrityError("weight stream truncated");
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline float get_f32(std::istream& is) {
    std::uint32_t v = get_u32(is);
    float f;
    std::memcpy(&f, &v, 4);
    return f;
}

inline void put_f32_block(std::ostream& os, const std::vector<float>& v) {
    for (float f : v) put_f32(os, f);
}

inline void get_f32_block(std::istream& is, std::vector<float>& v, std::size_t n) {
    v.resize(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = get_f32(is);
}

constexpr std::uint8_t kTagConv = 1;
constexpr std::uint8_t kTagDense = 2;
constexpr std::uint8_t kTagPool = 3;

inline void write_layer(std::ostream& os, const Layer& l) {
    if (std::holds_alternative<ConvLayer>(l)) {
        const auto& c = std::get<ConvLayer>(l);
        put_u8(os, kTagConv);
        put_u32(os, static_cast<std::uint32_t>(c.kernel_h));
        put_u32(os, static_cast<std::uint32_t>(c.kernel_w));
        put_u32(os, static_cast<std::uint32_t>(c.in_channels));
        put_u32(os, static_cast<std::uint32_t>(c.out_channels));
        put_u32(os, static_cast<std::uint32_t>(c.stride));
        put_u32(os, static_cast<std::uint32_t>(c.padding));
        put_u32(os, static_cast<std::uint32_t>(c.activation));
        put_u32(os, c.depthwise_separable ? 1u : 0u);
        put_f32_block(os, c.weights);
        put_f32_block(os, c.bias);
    } else if (std::holds_alternative<DenseLayer>(l)) {
        const auto& d = std::get<DenseLayer>(l);
        put_u8(os, kTagDense);
        put_u32(os, static_cast<std::uint32_t>(d.in_dim));
        put_u32(os, static_cast<std::uint32_t>(d.out_dim));
        put_u32(os, static_cast<std::uint32_t>(d.activation));
        put_f32_block(os, d.weights);
        put_f32_block(os, d.bias);
    } else {
        const auto& p = std::get<MaxPoolLayer>(l);
        put_u8(os, kTagPool);
        put_u32(os, static_cast<std::uint32_t>(p.window));
        put_u32(os, static_cast<std::uint32_t>(p.stride));
    }
}

inline Layer read_layer(std::istream& is) {
    std::uint8_t tag = get_u8(is);
    if (tag == kTagConv) {
        ConvLayer c;
        c.kernel_h = static_cast<int>(get_u32(is));
        c.kernel_w = static_cast<int>(get_u32(is));
        c.in_channels = static_cast<int>(get_u32(is));
        c.out_channels = static_cast<int>(get_u32(is));
        c.stride = static_cast<int>(get_u32(is));
        c.padding = static_cast<int>(get_u32(is));
        c.activation = static_cast<Activation>(get_u32(is));
        c.depthwise_separable = get_u32(is) != 0;
        if (c.kernel_h <= 0 || c.kernel_w <= 0 || c.in_channels <= 0 || c.out_channels <= 0 ||
            c.kernel_h > 1 << 16 || c.kernel_w > 1 << 16 || c.in_channels > 1 << 16 ||
            c.out_channels > 1 << 16)
            throw DataIntegrityError("weight file: implausible conv geometry");
        get_f32_block(is, c.weights, c.weight_count());
        get_f32_block(is, c.bias, static_cast<std::size_t>(c.out_channels));
        return c;
    }
    if (tag == kTagDense) {
        DenseLayer d;
        d.in_dim = static_cast<int>(get_u32(is));
        d.out_dim = static_cast<int>(get_u32(is));
        d.activation = static_cast<Activation>(get_u32(is));
        if (d.in_dim <= 0 || d.out_dim <= 0 || d.in_dim > 1 << 24 || d.out_dim > 1 << 24)
            throw DataIntegrityError("weight file: implausible dense geometry");
        get_f32_block(is, d.weights, d.weight_count());
        get_f32_block(is, d.bias, static_cast<std::size_t>(d.out_dim));
        return d;
    }
    if (tag == kTagPool) {
        MaxPoolLayer p;
        p.window = static_cast<int>(get_u32(is));
        p.stride = static_cast<int>(get_u32(is));
        return p;
    }
    throw DataIntegrityError("weight file: unknown layer tag " + std::to_string(tag));
}

}  // namespace wire

// One file may carry several networks back to back (detector first, then the
// smaller heads); the layer count covers all of them and readers split by
// the architecture they expect.
inline void save_networks(std::ostream& os, const std::vector<const Network*>& nets) {
    os.write(wire::kWeightMagic, 4);
    wire::put_u32(os, wire::kWeightVersion);
    std::uint32_t total = 0;
    for (const Network* n : nets) total += static_cast<std::uint32_t>(n->layers().size());
    wire::put_u32(os, total);
    for (const Network* n : nets)
        for (const Layer& l : n->layers()) wire::write_layer(os, l);
    if (!os) throw IoError("failed writing weight stream");
}

inline std::vector<Layer> load_layers(std::istream& is) {
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, wire::kWeightMagic, 4) != 0)
        throw DataIntegrityError("bad weight file magic");
    std::uint32_t version = wire::get_u32(is);
    if (version != wire::kWeightVersion)
        throw DataIntegrityError("unsupported weight file version " + std::to_string(version));
    std::uint32_t count = wire::get_u32(is);
    std::vector<Layer> layers;
    layers.reserve(count);
    for (std::uint32_t i = 0; i < count; ++i) layers.push_back(wire::read_layer(is));
    return layers;
}

}  // namespace flowtrack

#endif  // FLOWTRACK_NETWORK_HPP
