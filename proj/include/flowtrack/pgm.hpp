#ifndef FLOWTRACK_PGM_HPP
#define FLOWTRACK_PGM_HPP

#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "flowtrack/errors.hpp"
#include "flowtrack/tensor.hpp"

namespace flowtrack {

// Frames travel as 8-bit grayscale PGM (P5). Color PPM (P6) is accepted on
// load with luminance conversion. Tensors hold values on the 0..255 scale.

inline std::vector<std::uint8_t> quantize_u8(const Tensor& img) {
    std::vector<std::uint8_t> out(img.size());
    for (std::size_t i = 0; i < img.data.size(); ++i) {
        float v = std::round(img.data[i]);
        out[i] = static_cast<std::uint8_t>(v < 0.0f ? 0.0f : (v > 255.0f ? 255.0f : v));
    }
    return out;
}

inline void write_pgm(std::ostream& os, const Tensor& img, const std::string& comment = "") {
    if (img.c != 1) throw ShapeError("PGM writer expects a single-channel image");
    os << "P5\n";
    if (!comment.empty()) os << "# " << comment << "\n";
    os << img.w << " " << img.h << "\n255\n";
    std::vector<std::uint8_t> bytes = quantize_u8(img);
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("failed writing PGM stream");
}

namespace detail {

inline int pnm_next_int(std::istream& is) {
    // skip whitespace and '#' comment lines
    int c = is.get();
    while (c != EOF) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = is.get();
        } else if (!std::isspace(c)) {
            break;
        }
        c = is.get();
    }
    if (c == EOF || !std::isdigit(c)) throw DataIntegrityError("malformed PNM header");
    int value = 0;
    while (c != EOF && std::isdigit(c)) {
        value = value * 10 + (c - '0');
        c = is.get();
    }
    return value;
}

}  // namespace detail

inline Tensor read_pnm(std::istream& is) {
    char m0 = static_cast<char>(is.get());
    char m1 = static_cast<char>(is.get());
    if (!is || m0 != 'P' || (m1 != '5' && m1 != '6'))
        throw DataIntegrityError("not a binary PGM/PPM file");
    int channels = m1 == '5' ? 1 : 3;
    int w = detail::pnm_next_int(is);
    int h = detail::pnm_next_int(is);
    int maxval = detail::pnm_next_int(is);
    if (w <= 0 || h <= 0 || maxval <= 0 || maxval > 255)
        throw DataIntegrityError("unsupported PNM geometry or maxval");
    std::vector<std::uint8_t> bytes(static_cast<std::size_t>(w) * h * channels);
    if (!is.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size())))
        throw DataIntegrityError("truncated PNM payload");
    if (channels == 1) {
        Tensor img(h, w, 1);
        for (std::size_t i = 0; i < bytes.size(); ++i) img.data[i] = static_cast<float>(bytes[i]);
        return img;
    }
    Tensor img(h, w, 1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            std::size_t i = (static_cast<std::size_t>(y) * w + x) * 3;
            img.at(y, x, 0) = 0.299f * bytes[i] + 0.587f * bytes[i + 1] + 0.114f * bytes[i + 2];
        }
    return img;
}

inline Tensor read_pnm_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open image file: " + path);
    return read_pnm(f);
}

}  // namespace flowtrack

#endif  // FLOWTRACK_PGM_HPP
