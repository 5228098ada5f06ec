#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "convcrf/rng.hpp"
#include "convcrf/util.hpp"

namespace convcrf {

// Dense 4-D array in row-major [bs][c][h][w] order. Spatial coordinates are
// written (x, y) with x indexing rows (0..h) and y indexing columns (0..w).
template <typename T>
struct Tensor {
    int bs = 0, c = 0, h = 0, w = 0;
    std::vector<T> data;

    Tensor() = default;
    Tensor(int bs_, int c_, int h_, int w_) : bs(bs_), c(c_), h(h_), w(w_) {
        if (bs < 0 || c < 0 || h < 0 || w < 0) throw ShapeError("negative tensor dimension");
        data.assign(static_cast<std::size_t>(bs) * c * h * w, T(0));
    }

    std::int64_t size() const { return static_cast<std::int64_t>(bs) * c * h * w; }
    bool same_shape(const Tensor& o) const { return bs == o.bs && c == o.c && h == o.h && w == o.w; }

    T& at(int b, int ch, int x, int y) {
        return data[((static_cast<std::size_t>(b) * c + ch) * h + x) * w + y];
    }
    const T& at(int b, int ch, int x, int y) const {
        return data[((static_cast<std::size_t>(b) * c + ch) * h + x) * w + y];
    }

    void fill_uniform(Rng& rng, double lo = 0.0, double hi = 1.0) {
        for (auto& v : data) v = static_cast<T>(rng.uniform(lo, hi));
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(bs, c, h, w);
        for (std::int64_t i = 0; i < size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

// Tiled tensor [bs][c][k*k][h][w]; the offset axis flattens (dx, dy) as
// (dy + r) * k + (dx + r) with r = k / 2 (dy is the slower index).
template <typename T>
struct TensorTiled {
    int bs = 0, c = 0, k = 0, h = 0, w = 0;
    std::vector<T> data;

    TensorTiled() = default;
    TensorTiled(int bs_, int c_, int k_, int h_, int w_) : bs(bs_), c(c_), k(k_), h(h_), w(w_) {
        if (k < 1 || k % 2 == 0) throw std::invalid_argument("tile size k must be odd and >= 1");
        data.assign(static_cast<std::size_t>(bs) * c * k * k * h * w, T(0));
    }

    int kk() const { return k * k; }

    T& at(int b, int ch, int off, int x, int y) {
        return data[(((static_cast<std::size_t>(b) * c + ch) * kk() + off) * h + x) * w + y];
    }
    const T& at(int b, int ch, int off, int x, int y) const {
        return data[(((static_cast<std::size_t>(b) * c + ch) * kk() + off) * h + x) * w + y];
    }
};

inline int offset_index(int k, int dx, int dy) {
    int r = k / 2;
    return (dy + r) * k + (dx + r);
}

inline int center_offset(int k) { return offset_index(k, 0, 0); }

template <typename T>
Tensor<T> softmax_channels(const Tensor<T>& t) {
    if (t.size() == 0 || t.c < 1) throw ShapeError("softmax_channels: empty tensor");
    Tensor<T> out(t.bs, t.c, t.h, t.w);
    std::int64_t pixels = static_cast<std::int64_t>(t.bs) * t.h * t.w;
    parallel_for(pixels, [&](std::int64_t lo, std::int64_t hi) {
        std::int64_t plane = static_cast<std::int64_t>(t.h) * t.w;
        for (std::int64_t p = lo; p < hi; ++p) {
            int b = static_cast<int>(p / plane);
            std::int64_t xy = p % plane;
            int x = static_cast<int>(xy / t.w);
            int y = static_cast<int>(xy % t.w);
            T mx = t.at(b, 0, x, y);
            for (int ch = 1; ch < t.c; ++ch) mx = std::max(mx, t.at(b, ch, x, y));
            double sum = 0.0;
            for (int ch = 0; ch < t.c; ++ch) {
                double e = std::exp(static_cast<double>(t.at(b, ch, x, y) - mx));
                out.at(b, ch, x, y) = static_cast<T>(e);
                sum += e;
            }
            for (int ch = 0; ch < t.c; ++ch)
                out.at(b, ch, x, y) = static_cast<T>(static_cast<double>(out.at(b, ch, x, y)) / sum);
        }
    });
    return out;
}

template <typename T>
Tensor<T> pad_zero(const Tensor<T>& t, int margin) {
    if (margin < 0) throw std::invalid_argument("pad_zero: negative margin");
    Tensor<T> out(t.bs, t.c, t.h + 2 * margin, t.w + 2 * margin);
    for (int b = 0; b < t.bs; ++b)
        for (int ch = 0; ch < t.c; ++ch)
            for (int x = 0; x < t.h; ++x)
                for (int y = 0; y < t.w; ++y)
                    out.at(b, ch, x + margin, y + margin) = t.at(b, ch, x, y);
    return out;
}

template <typename T>
Tensor<T> crop(const Tensor<T>& t, int x0, int y0, int h, int w) {
    if (x0 < 0 || y0 < 0 || x0 + h > t.h || y0 + w > t.w) throw ShapeError("crop out of range");
    Tensor<T> out(t.bs, t.c, h, w);
    for (int b = 0; b < t.bs; ++b)
        for (int ch = 0; ch < t.c; ++ch)
            for (int x = 0; x < h; ++x)
                for (int y = 0; y < w; ++y) out.at(b, ch, x, y) = t.at(b, ch, x + x0, y + y0);
    return out;
}

// tiled[b,c,off(dx,dy),x,y] = t[b,c,x+dx,y+dy] with zero padding outside the image.
template <typename T>
TensorTiled<T> im2col_tile(const Tensor<T>& t, int k) {
    if (k < 1 || k % 2 == 0) throw std::invalid_argument("im2col_tile: k must be odd and >= 1");
    TensorTiled<T> out(t.bs, t.c, k, t.h, t.w);
    int r = k / 2;
    std::int64_t rows = static_cast<std::int64_t>(t.bs) * t.c;
    parallel_for(rows, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t bc = lo; bc < hi; ++bc) {
            int b = static_cast<int>(bc / t.c);
            int ch = static_cast<int>(bc % t.c);
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    int off = offset_index(k, dx, dy);
                    for (int x = 0; x < t.h; ++x) {
                        int sx = x + dx;
                        if (sx < 0 || sx >= t.h) continue;
                        for (int y = 0; y < t.w; ++y) {
                            int sy = y + dy;
                            if (sy < 0 || sy >= t.w) continue;
                            out.at(b, ch, off, x, y) = t.at(b, ch, sx, sy);
                        }
                    }
                }
        }
    });
    return out;
}

template <typename T>
Tensor<T> avg_pool(const Tensor<T>& t, int factor) {
    if (factor <= 0) throw std::invalid_argument("avg_pool: factor must be positive");
    if (factor == 1) return t;
    int oh = (t.h + factor - 1) / factor;
    int ow = (t.w + factor - 1) / factor;
    Tensor<T> out(t.bs, t.c, oh, ow);
    for (int b = 0; b < t.bs; ++b)
        for (int ch = 0; ch < t.c; ++ch)
            for (int x = 0; x < oh; ++x)
                for (int y = 0; y < ow; ++y) {
                    int x1 = std::min(t.h, (x + 1) * factor);
                    int y1 = std::min(t.w, (y + 1) * factor);
                    double acc = 0.0;
                    for (int sx = x * factor; sx < x1; ++sx)
                        for (int sy = y * factor; sy < y1; ++sy) acc += t.at(b, ch, sx, sy);
                    out.at(b, ch, x, y) =
                        static_cast<T>(acc / ((x1 - x * factor) * (y1 - y * factor)));
                }
    return out;
}

template <typename T>
Tensor<T> nearest_upsample(const Tensor<T>& t, int factor) {
    if (factor <= 0) throw std::invalid_argument("nearest_upsample: factor must be positive");
    if (factor == 1) return t;
    Tensor<T> out(t.bs, t.c, t.h * factor, t.w * factor);
    for (int b = 0; b < t.bs; ++b)
        for (int ch = 0; ch < t.c; ++ch)
            for (int x = 0; x < out.h; ++x)
                for (int y = 0; y < out.w; ++y)
                    out.at(b, ch, x, y) = t.at(b, ch, x / factor, y / factor);
    return out;
}

// align-corners=false convention: output coordinate x samples the source at
// (x + 0.5) / factor - 0.5, clamped to the image.
template <typename T>
Tensor<T> bilinear_upsample(const Tensor<T>& t, int factor) {
    if (factor <= 0) throw std::invalid_argument("bilinear_upsample: factor must be positive");
    if (factor == 1) return t;
    Tensor<T> out(t.bs, t.c, t.h * factor, t.w * factor);
    for (int b = 0; b < t.bs; ++b)
        for (int ch = 0; ch < t.c; ++ch)
            for (int x = 0; x < out.h; ++x) {
                double sx = (x + 0.5) / factor - 0.5;
                double fx = std::clamp(sx, 0.0, static_cast<double>(t.h - 1));
                int x0 = static_cast<int>(std::floor(fx));
                int x1 = std::min(x0 + 1, t.h - 1);
                double ax = fx - x0;
                for (int y = 0; y < out.w; ++y) {
                    double sy = (y + 0.5) / factor - 0.5;
                    double fy = std::clamp(sy, 0.0, static_cast<double>(t.w - 1));
                    int y0 = static_cast<int>(std::floor(fy));
                    int y1 = std::min(y0 + 1, t.w - 1);
                    double ay = fy - y0;
                    double v = (1 - ax) * (1 - ay) * t.at(b, ch, x0, y0) +
                               (1 - ax) * ay * t.at(b, ch, x0, y1) +
                               ax * (1 - ay) * t.at(b, ch, x1, y0) +
                               ax * ay * t.at(b, ch, x1, y1);
                    out.at(b, ch, x, y) = static_cast<T>(v);
                }
            }
    return out;
}

using TensorF = Tensor<float>;
using TensorTiledF = TensorTiled<float>;

}  // namespace convcrf
