#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "convcrf/features.hpp"
#include "convcrf/tensor.hpp"

namespace convcrf {

// One Gaussian kernel: which feature planes it looks at, the bandwidth for
// each, and its mixture weight.
struct KernelSpec {
    std::vector<std::string> feature_selector;
    std::vector<double> thetas;  // one per selected feature, all > 0
    double weight = 1.0;
    bool learnable = true;

    void validate() const {
        if (feature_selector.empty()) throw ConfigError("KernelSpec: empty feature selector");
        if (thetas.size() != feature_selector.size())
            throw ConfigError("KernelSpec: thetas must match selected features");
        for (double t : thetas)
            if (!(t > 0.0)) throw std::invalid_argument("KernelSpec: theta must be positive");
    }
};

// Per-pixel truncated kernel weights, shape [bs][k*k][h][w]. Offsets use the
// same flattened (dx, dy) axis as TensorTiled. Out-of-image entries are
// stored as exact 0 so the message-pass dot product needs no masking.
template <typename T>
struct KernelMatrix {
    int k = 0;
    Tensor<T> values;

    KernelMatrix() = default;
    KernelMatrix(int k_, int bs, int h, int w) : k(k_), values(bs, k_ * k_, h, w) {
        if (k < 1 || k % 2 == 0) throw std::invalid_argument("KernelMatrix: k must be odd");
    }
};

// k_g[b,off(dx,dy),x,y] = exp(-sum_i (f_i[b,x,y] - f_i[b,x+dx,y+dy])^2 / (2 theta_i^2))
template <typename T>
KernelMatrix<T> kernel_matrix(const FeatureStack<T>& features, const KernelSpec& spec, int k) {
    spec.validate();
    if (k < 1 || k % 2 == 0) throw std::invalid_argument("kernel_matrix: k must be odd");
    std::vector<int> sel;
    for (const auto& name : spec.feature_selector) {
        int idx = features.index_of(name);
        if (idx < 0) throw ConfigError("kernel_matrix: missing feature plane " + name);
        sel.push_back(idx);
    }
    const int r = k / 2, h = features.h, w = features.w;
    KernelMatrix<T> km(k, features.bs, h, w);
    parallel_for(static_cast<std::int64_t>(features.bs) * h, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t bx = lo; bx < hi; ++bx) {
            int b = static_cast<int>(bx / h);
            int x = static_cast<int>(bx % h);
            for (int dy = -r; dy <= r; ++dy)
                for (int dx = -r; dx <= r; ++dx) {
                    int nx = x + dx;
                    if (nx < 0 || nx >= h) continue;
                    int off = offset_index(k, dx, dy);
                    for (int y = 0; y < w; ++y) {
                        int ny = y + dy;
                        if (ny < 0 || ny >= w) continue;
                        double s = 0.0;
                        for (std::size_t i = 0; i < sel.size(); ++i) {
                            double diff = static_cast<double>(features.at(sel[i], b, x, y)) -
                                          features.at(sel[i], b, nx, ny);
                            s += diff * diff / (2.0 * spec.thetas[i] * spec.thetas[i]);
                        }
                        km.values.at(b, off, x, y) = static_cast<T>(std::exp(-s));
                    }
                }
        }
    });
    return km;
}

template <typename T>
KernelMatrix<T> merge_kernels(const std::vector<std::pair<double, const KernelMatrix<T>*>>& kernels) {
    if (kernels.empty()) throw std::invalid_argument("merge_kernels: empty kernel list");
    const KernelMatrix<T>& first = *kernels.front().second;
    KernelMatrix<T> out(first.k, first.values.bs, first.values.h, first.values.w);
    for (const auto& [weight, km] : kernels) {
        if (km->k != first.k || !km->values.same_shape(first.values))
            throw std::invalid_argument("merge_kernels: shape mismatch");
        for (std::int64_t i = 0; i < out.values.size(); ++i)
            out.values.data[i] += static_cast<T>(weight * km->values.data[i]);
    }
    return out;
}

// Zeroes the self-contribution (dx = dy = 0) plane.
template <typename T>
KernelMatrix<T> exclude_center(const KernelMatrix<T>& km) {
    KernelMatrix<T> out = km;
    int off = center_offset(km.k);
    int h = km.values.h, w = km.values.w;
    for (int b = 0; b < km.values.bs; ++b)
        for (int x = 0; x < h; ++x)
            for (int y = 0; y < w; ++y) out.values.at(b, off, x, y) = T(0);
    return out;
}

template <typename T>
struct KernelGrads {
    std::vector<double> dthetas;      // one per selected feature
    FeatureStack<T> dfeatures;        // gradients for the selected planes, same order
};

// Reverse-mode through kernel_matrix: given d(loss)/d(kernel entries) and the
// forward entries themselves, produce bandwidth and feature-plane gradients.
template <typename T>
KernelGrads<T> kernel_matrix_backward(const FeatureStack<T>& features, const KernelSpec& spec,
                                      const KernelMatrix<T>& km, const Tensor<T>& d_entries) {
    spec.validate();
    if (!d_entries.same_shape(km.values))
        throw std::invalid_argument("kernel_matrix_backward: gradient shape mismatch");
    std::vector<int> sel;
    for (const auto& name : spec.feature_selector) sel.push_back(features.index_of(name));
    const int k = km.k, r = k / 2, h = features.h, w = features.w;

    KernelGrads<T> g;
    g.dthetas.assign(sel.size(), 0.0);
    g.dfeatures = FeatureStack<T>(features.bs, h, w);
    for (std::size_t i = 0; i < sel.size(); ++i)
        g.dfeatures.add_plane(spec.feature_selector[i],
                              std::vector<T>(static_cast<std::size_t>(features.bs) * h * w, T(0)));

    // Serial scatter in fixed order; backward runs on desk-scale instances.
    for (int b = 0; b < features.bs; ++b)
        for (int dy = -r; dy <= r; ++dy)
            for (int dx = -r; dx <= r; ++dx) {
                int off = offset_index(k, dx, dy);
                for (int x = 0; x < h; ++x) {
                    int nx = x + dx;
                    if (nx < 0 || nx >= h) continue;
                    for (int y = 0; y < w; ++y) {
                        int ny = y + dy;
                        if (ny < 0 || ny >= w) continue;
                        double ds = -static_cast<double>(km.values.at(b, off, x, y)) *
                                    d_entries.at(b, off, x, y);
                        if (ds == 0.0) continue;
                        for (std::size_t i = 0; i < sel.size(); ++i) {
                            double theta = spec.thetas[i];
                            double diff = static_cast<double>(features.at(sel[i], b, x, y)) -
                                          features.at(sel[i], b, nx, ny);
                            g.dthetas[i] += ds * (-(diff * diff) / (theta * theta * theta));
                            double dd = ds * diff / (theta * theta);
                            g.dfeatures.at(static_cast<int>(i), b, x, y) += static_cast<T>(dd);
                            g.dfeatures.at(static_cast<int>(i), b, nx, ny) -= static_cast<T>(dd);
                        }
                    }
                }
            }
    return g;
}

}  // namespace convcrf
