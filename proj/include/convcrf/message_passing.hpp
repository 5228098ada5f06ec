#pragma once

#include <functional>

#include "convcrf/kernels.hpp"
#include "convcrf/tensor.hpp"

namespace convcrf {

// Q[b,c,x,y] = sum_{dx,dy} K[b,off(dx,dy),x,y] * P[b,c,x+dx,y+dy]
//
// Production path: tile P (im2col), then a batched dot product over the
// offset axis. The kernel is shared across the channel dimension. Offset
// accumulation runs in fixed row-major order so results are bit-reproducible.
template <typename T>
Tensor<T> message_pass_tiled(const KernelMatrix<T>& K, const TensorTiled<T>& tiled) {
    if (tiled.k != K.k || tiled.bs != K.values.bs || tiled.h != K.values.h ||
        tiled.w != K.values.w)
        throw std::invalid_argument("message_pass: kernel/input shape mismatch");
    const int kk = K.k * K.k, h = tiled.h, w = tiled.w;
    Tensor<T> out(tiled.bs, tiled.c, h, w);
    parallel_for(static_cast<std::int64_t>(tiled.bs) * tiled.c,
                 [&](std::int64_t lo, std::int64_t hi) {
                     for (std::int64_t bc = lo; bc < hi; ++bc) {
                         int b = static_cast<int>(bc / tiled.c);
                         int ch = static_cast<int>(bc % tiled.c);
                         for (int x = 0; x < h; ++x)
                             for (int y = 0; y < w; ++y) {
                                 double acc = 0.0;
                                 for (int off = 0; off < kk; ++off)
                                     acc += static_cast<double>(K.values.at(b, off, x, y)) *
                                            tiled.at(b, ch, off, x, y);
                                 out.at(b, ch, x, y) = static_cast<T>(acc);
                             }
                     }
                 });
    return out;
}

template <typename T>
Tensor<T> message_pass(const KernelMatrix<T>& K, const Tensor<T>& P) {
    return message_pass_tiled(K, im2col_tile(P, K.k));
}

// Caches the tiled input so backward can reuse it. Inference-only callers
// should use the free message_pass and skip the cache.
template <typename T>
struct MessagePassContext {
    const KernelMatrix<T>* kernel = nullptr;
    TensorTiled<T> tiled_input;

    Tensor<T> forward(const KernelMatrix<T>& K, const Tensor<T>& P) {
        kernel = &K;
        tiled_input = im2col_tile(P, K.k);
        return message_pass_tiled(K, tiled_input);
    }
};

template <typename T>
struct MessagePassGrads {
    Tensor<T> d_input;   // dP, shape of P
    Tensor<T> d_kernel;  // dK, shape of K.values
};

// Transpose of the forward dot product, written as gathers so every output
// element is produced independently (deterministic under parallelism):
//   dP[b,c,x',y'] = sum_{dx,dy} K[b,off(dx,dy),x'-dx,y'-dy] * dQ[b,c,x'-dx,y'-dy]
//   dK[b,off,x,y] = sum_c dQ[b,c,x,y] * P[b,c,x+dx,y+dy]
template <typename T>
MessagePassGrads<T> message_pass_backward(const MessagePassContext<T>& ctx, const Tensor<T>& dQ) {
    if (ctx.kernel == nullptr) throw std::logic_error("message_pass_backward: no forward context");
    const KernelMatrix<T>& K = *ctx.kernel;
    const TensorTiled<T>& tiled = ctx.tiled_input;
    if (dQ.bs != tiled.bs || dQ.c != tiled.c || dQ.h != tiled.h || dQ.w != tiled.w)
        throw std::invalid_argument("message_pass_backward: dQ shape mismatch");
    const int k = K.k, r = k / 2, h = dQ.h, w = dQ.w;

    MessagePassGrads<T> g{Tensor<T>(dQ.bs, dQ.c, h, w), Tensor<T>(dQ.bs, k * k, h, w)};

    parallel_for(static_cast<std::int64_t>(dQ.bs) * dQ.c, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t bc = lo; bc < hi; ++bc) {
            int b = static_cast<int>(bc / dQ.c);
            int ch = static_cast<int>(bc % dQ.c);
            for (int x = 0; x < h; ++x)
                for (int y = 0; y < w; ++y) {
                    double acc = 0.0;
                    for (int dy = -r; dy <= r; ++dy) {
                        int qy = y - dy;
                        if (qy < 0 || qy >= w) continue;
                        for (int dx = -r; dx <= r; ++dx) {
                            int qx = x - dx;
                            if (qx < 0 || qx >= h) continue;
                            acc += static_cast<double>(
                                       K.values.at(b, offset_index(k, dx, dy), qx, qy)) *
                                   dQ.at(b, ch, qx, qy);
                        }
                    }
                    g.d_input.at(b, ch, x, y) = static_cast<T>(acc);
                }
        }
    });

    parallel_for(static_cast<std::int64_t>(dQ.bs) * k * k, [&](std::int64_t lo, std::int64_t hi) {
        for (std::int64_t bo = lo; bo < hi; ++bo) {
            int b = static_cast<int>(bo / (k * k));
            int off = static_cast<int>(bo % (k * k));
            for (int x = 0; x < h; ++x)
                for (int y = 0; y < w; ++y) {
                    double acc = 0.0;
                    for (int ch = 0; ch < dQ.c; ++ch)
                        acc += static_cast<double>(dQ.at(b, ch, x, y)) *
                               tiled.at(b, ch, off, x, y);
                    g.d_kernel.at(b, off, x, y) = static_cast<T>(acc);
                }
        }
    });
    return g;
}

// Quadratic double loop over pixel pairs inside the truncation window.
// Testing oracle only; K_pair(b, x, y, nx, ny, off) returns the kernel value
// coupling pixel (x, y) with its in-window neighbor (nx, ny).
template <typename T>
Tensor<T> brute_force_message_pass(
    const std::function<double(int, int, int, int, int, int)>& K_pair, const Tensor<T>& P, int k) {
    if (k < 1 || k % 2 == 0) throw std::invalid_argument("brute_force_message_pass: k must be odd");
    const int r = k / 2;
    Tensor<T> out(P.bs, P.c, P.h, P.w);
    for (int b = 0; b < P.bs; ++b)
        for (int ch = 0; ch < P.c; ++ch)
            for (int x = 0; x < P.h; ++x)
                for (int y = 0; y < P.w; ++y) {
                    double acc = 0.0;
                    for (int nx = 0; nx < P.h; ++nx)
                        for (int ny = 0; ny < P.w; ++ny) {
                            int dx = nx - x, dy = ny - y;
                            if (dx < -r || dx > r || dy < -r || dy > r) continue;
                            acc += K_pair(b, x, y, nx, ny, offset_index(k, dx, dy)) *
                                   P.at(b, ch, nx, ny);
                        }
                    out.at(b, ch, x, y) = static_cast<T>(acc);
                }
    return out;
}

}  // namespace convcrf
