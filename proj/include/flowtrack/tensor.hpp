#ifndef FLOWTRACK_TENSOR_HPP
#define FLOWTRACK_TENSOR_HPP

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "flowtrack/errors.hpp"

namespace flowtrack {

// Dense rank-3 array in row-major (h, w, c) order, single precision.
// Images, feature maps and gradients all use this one shape.
struct Tensor {
    int h = 0;
    int w = 0;
    int c = 0;
    std::vector<float> data;

    Tensor() = default;
    Tensor(int height, int width, int channels, float fill = 0.0f)
        : h(height), w(width), c(channels) {
        if (height <= 0 || width <= 0 || channels <= 0)
            throw ShapeError("tensor dims must be positive, got " + shape_str(height, width, channels));
        data.assign(static_cast<std::size_t>(height) * width * channels, fill);
    }

    static Tensor vec(const std::vector<float>& values) {
        Tensor t(1, 1, static_cast<int>(values.size()));
        t.data = values;
        return t;
    }

    std::size_t size() const { return data.size(); }

    float& at(int y, int x, int ch) {
        return data[(static_cast<std::size_t>(y) * w + x) * c + ch];
    }
    float at(int y, int x, int ch) const {
        return data[(static_cast<std::size_t>(y) * w + x) * c + ch];
    }

    bool same_shape(const Tensor& o) const { return h == o.h && w == o.w && c == o.c; }

    bool all_finite() const {
        for (float v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const { return shape_str(h, w, c); }

    static std::string shape_str(int h, int w, int c) {
        return std::to_string(h) + "x" + std::to_string(w) + "x" + std::to_string(c);
    }
};

}  // namespace flowtrack

#endif  // FLOWTRACK_TENSOR_HPP
