#pragma once

#include <string>
#include <vector>

#include "convcrf/tensor.hpp"

namespace convcrf {

// Named per-pixel feature planes, each shaped [bs][h][w]. Inputs to the
// Gaussian kernels: spatial coordinates and raw color channels.
template <typename T>
struct FeatureStack {
    int bs = 0, h = 0, w = 0;
    std::vector<std::string> names;
    std::vector<std::vector<T>> planes;

    FeatureStack() = default;
    FeatureStack(int bs_, int h_, int w_) : bs(bs_), h(h_), w(w_) {}

    int count() const { return static_cast<int>(planes.size()); }

    void add_plane(const std::string& name, std::vector<T> values) {
        if (values.size() != static_cast<std::size_t>(bs) * h * w)
            throw ShapeError("feature plane size mismatch for " + name);
        names.push_back(name);
        planes.push_back(std::move(values));
    }

    int index_of(const std::string& name) const {
        for (int i = 0; i < count(); ++i)
            if (names[i] == name) return i;
        return -1;
    }

    T& at(int d, int b, int x, int y) {
        return planes[d][(static_cast<std::size_t>(b) * h + x) * w + y];
    }
    T at(int d, int b, int x, int y) const {
        return planes[d][(static_cast<std::size_t>(b) * h + x) * w + y];
    }
};

// pos_x[b,x,y] = x (row index), pos_y[b,x,y] = y (column index), in pixels.
template <typename T>
FeatureStack<T> spatial_features(int bs, int h, int w) {
    if (h < 1 || w < 1) throw ShapeError("spatial_features: empty image");
    FeatureStack<T> fs(bs, h, w);
    std::vector<T> px(static_cast<std::size_t>(bs) * h * w), py(px.size());
    std::size_t i = 0;
    for (int b = 0; b < bs; ++b)
        for (int x = 0; x < h; ++x)
            for (int y = 0; y < w; ++y, ++i) {
                px[i] = static_cast<T>(x);
                py[i] = static_cast<T>(y);
            }
    fs.add_plane("pos_x", std::move(px));
    fs.add_plane("pos_y", std::move(py));
    return fs;
}

// Copies the three color channels into planes r, g, b. Values stay on the
// image's native 0..255 scale.
template <typename T>
FeatureStack<T> color_features(const Tensor<T>& image) {
    if (image.c != 3) throw std::invalid_argument("color_features: image must have 3 channels");
    FeatureStack<T> fs(image.bs, image.h, image.w);
    const char* names[3] = {"r", "g", "b"};
    for (int ch = 0; ch < 3; ++ch) {
        std::vector<T> plane(static_cast<std::size_t>(image.bs) * image.h * image.w);
        std::size_t i = 0;
        for (int b = 0; b < image.bs; ++b)
            for (int x = 0; x < image.h; ++x)
                for (int y = 0; y < image.w; ++y, ++i) plane[i] = image.at(b, ch, x, y);
        fs.add_plane(names[ch], std::move(plane));
    }
    return fs;
}

template <typename T>
FeatureStack<T> merge_stacks(const FeatureStack<T>& a, const FeatureStack<T>& b) {
    if (a.bs != b.bs || a.h != b.h || a.w != b.w) throw ShapeError("merge_stacks: shape mismatch");
    FeatureStack<T> fs = a;
    for (int i = 0; i < b.count(); ++i) fs.add_plane(b.names[i], b.planes[i]);
    return fs;
}

// Average-pools every plane by the given factor (used by the blur pipeline).
template <typename T>
FeatureStack<T> pool_stack(const FeatureStack<T>& fs, int factor) {
    if (factor == 1) return fs;
    Tensor<T> t(fs.bs, fs.count(), fs.h, fs.w);
    for (int d = 0; d < fs.count(); ++d)
        for (int b = 0; b < fs.bs; ++b)
            for (int x = 0; x < fs.h; ++x)
                for (int y = 0; y < fs.w; ++y) t.at(b, d, x, y) = fs.at(d, b, x, y);
    Tensor<T> p = avg_pool(t, factor);
    FeatureStack<T> out(p.bs, p.h, p.w);
    for (int d = 0; d < fs.count(); ++d) {
        std::vector<T> plane(static_cast<std::size_t>(p.bs) * p.h * p.w);
        std::size_t i = 0;
        for (int b = 0; b < p.bs; ++b)
            for (int x = 0; x < p.h; ++x)
                for (int y = 0; y < p.w; ++y, ++i) plane[i] = p.at(b, d, x, y);
        out.add_plane(fs.names[d], std::move(plane));
    }
    return out;
}

}  // namespace convcrf
