#pragma once

#include <string>
#include <vector>

#include "convcrf/features.hpp"
#include "convcrf/kernels.hpp"
#include "convcrf/label_map.hpp"
#include "convcrf/message_passing.hpp"
#include "convcrf/params.hpp"
#include "convcrf/tensor.hpp"

namespace convcrf {

enum class CompatVariant { Potts, LearnableMatrix };

template <typename T>
struct CompatibilityTransform {
    CompatVariant variant = CompatVariant::Potts;
    int c = 0;                  // class count, LearnableMatrix only
    std::vector<T> matrix;      // row-major c x c, LearnableMatrix only

    static CompatibilityTransform potts() { return {}; }

    static CompatibilityTransform learnable(int classes, std::vector<T> m) {
        if (m.size() != static_cast<std::size_t>(classes) * classes)
            throw std::invalid_argument("compatibility matrix must be c x c");
        return {CompatVariant::LearnableMatrix, classes, std::move(m)};
    }
};

// Potts: out[l] = sum_{l' != l} in[l'].  LearnableMatrix: out[l] = sum_{l'} M[l][l'] in[l'].
// The output is a per-pixel penalty added to the energy.
template <typename T>
Tensor<T> apply_compatibility(const Tensor<T>& q_msg, const CompatibilityTransform<T>& ct) {
    Tensor<T> out(q_msg.bs, q_msg.c, q_msg.h, q_msg.w);
    if (ct.variant == CompatVariant::LearnableMatrix && ct.c != q_msg.c)
        throw std::invalid_argument("apply_compatibility: matrix dimension mismatch");
    for (int b = 0; b < q_msg.bs; ++b)
        for (int x = 0; x < q_msg.h; ++x)
            for (int y = 0; y < q_msg.w; ++y) {
                if (ct.variant == CompatVariant::Potts) {
                    double total = 0.0;
                    for (int l = 0; l < q_msg.c; ++l) total += q_msg.at(b, l, x, y);
                    for (int l = 0; l < q_msg.c; ++l)
                        out.at(b, l, x, y) = static_cast<T>(total - q_msg.at(b, l, x, y));
                } else {
                    for (int l = 0; l < q_msg.c; ++l) {
                        double acc = 0.0;
                        for (int lp = 0; lp < q_msg.c; ++lp)
                            acc += static_cast<double>(
                                       ct.matrix[static_cast<std::size_t>(l) * ct.c + lp]) *
                                   q_msg.at(b, lp, x, y);
                        out.at(b, l, x, y) = static_cast<T>(acc);
                    }
                }
            }
    return out;
}

struct ConvCrfConfig {
    int filter_size = 7;       // odd truncation window k
    int iterations = 5;
    int blur_factor = 1;       // >1 runs the loop at pooled resolution
    bool exclude_center = true;
    std::string normalization = "softmax";
    CompatVariant compat_variant = CompatVariant::Potts;
    std::vector<KernelSpec> kernels;  // optional custom kernels; empty = standard pair

    void validate() const {
        if (filter_size < 1 || filter_size % 2 == 0)
            throw ConfigError("filter_size must be odd and >= 1");
        if (iterations < 1) throw ConfigError("iterations must be >= 1");
        if (blur_factor < 1) throw ConfigError("blur_factor must be >= 1");
        if (normalization != "softmax") throw ConfigError("unsupported normalization");
        for (const auto& ks : config_kernels()) ks.validate();
    }

    const std::vector<KernelSpec>& config_kernels() const { return kernels; }
};

template <typename T>
struct MeanFieldState {
    Tensor<T> q;
    int iteration = 0;
};

template <typename T>
MeanFieldState<T> init_state(const Tensor<T>& unary_logits) {
    return {softmax_channels(unary_logits), 0};
}

// One mean-field update: Q' = softmax(unary_logits - compat(message_pass(K, Q))).
template <typename T>
MeanFieldState<T> mean_field_step(const MeanFieldState<T>& state, const Tensor<T>& unary_logits,
                                  const KernelMatrix<T>& K, const CompatibilityTransform<T>& ct,
                                  const ConvCrfConfig& config) {
    (void)config;
    Tensor<T> msg = message_pass(K, state.q);
    Tensor<T> penalty = apply_compatibility(msg, ct);
    Tensor<T> logits(unary_logits.bs, unary_logits.c, unary_logits.h, unary_logits.w);
    if (!penalty.same_shape(unary_logits)) throw ShapeError("mean_field_step: shape mismatch");
    for (std::int64_t i = 0; i < logits.size(); ++i)
        logits.data[i] = unary_logits.data[i] - penalty.data[i];
    return {softmax_channels(logits), state.iteration + 1};
}

// Builds the smoothness-kernel feature planes: either the fixed mesh
// coordinates or the learnable replacement planes (shared across the batch).
template <typename T>
FeatureStack<T> smoothness_feature_stack(int bs, int h, int w, const CrfParams<T>& params) {
    if (!params.learn_smoothness || params.smoothness_features.size() == 0)
        return spatial_features<T>(bs, h, w);
    const Tensor<T>& sf = params.smoothness_features;
    if (sf.h != h || sf.w != w)
        throw ShapeError("smoothness features do not match the image size");
    FeatureStack<T> fs(bs, h, w);
    for (int plane = 0; plane < 2; ++plane) {
        std::vector<T> p(static_cast<std::size_t>(bs) * h * w);
        std::size_t i = 0;
        for (int b = 0; b < bs; ++b)
            for (int x = 0; x < h; ++x)
                for (int y = 0; y < w; ++y, ++i) p[i] = sf.at(0, plane, x, y);
        fs.add_plane(plane == 0 ? "pos_x" : "pos_y", std::move(p));
    }
    return fs;
}

template <typename T>
struct BuiltKernels {
    KernelSpec appearance_spec, smoothness_spec;
    FeatureStack<T> appearance_features, smoothness_features;
    KernelMatrix<T> appearance, smoothness;
    KernelMatrix<T> merged;  // weighted sum, center excluded when configured
};

// Standard two-kernel construction (appearance over position+color,
// smoothness over position). Features are taken at the resolution of `image`.
template <typename T>
BuiltKernels<T> build_kernels(const Tensor<T>& image, const CrfParams<T>& params,
                              const ConvCrfConfig& config) {
    const int bs = image.bs, h = image.h, w = image.w, k = config.filter_size;
    BuiltKernels<T> bk;
    bk.appearance_spec = {{"pos_x", "pos_y", "r", "g", "b"},
                          {params.theta_alpha(), params.theta_alpha(), params.theta_beta(),
                           params.theta_beta(), params.theta_beta()},
                          params.w1(),
                          true};
    bk.smoothness_spec = {{"pos_x", "pos_y"},
                          {params.theta_gamma(), params.theta_gamma()},
                          params.w2(),
                          true};
    bk.appearance_features = merge_stacks(spatial_features<T>(bs, h, w), color_features(image));
    bk.smoothness_features = smoothness_feature_stack(bs, h, w, params);
    bk.appearance = kernel_matrix(bk.appearance_features, bk.appearance_spec, k);
    bk.smoothness = kernel_matrix(bk.smoothness_features, bk.smoothness_spec, k);
    bk.merged = merge_kernels<T>(
        {{params.w1(), &bk.appearance}, {params.w2(), &bk.smoothness}});
    if (config.exclude_center) bk.merged = exclude_center(bk.merged);
    return bk;
}

// Merged kernel from an explicit KernelSpec list (run-config custom kernels).
template <typename T>
KernelMatrix<T> build_custom_kernels(const Tensor<T>& image, const ConvCrfConfig& config) {
    FeatureStack<T> fs =
        merge_stacks(spatial_features<T>(image.bs, image.h, image.w), color_features(image));
    std::vector<KernelMatrix<T>> parts;
    parts.reserve(config.kernels.size());
    for (const auto& spec : config.kernels) parts.push_back(kernel_matrix(fs, spec, config.filter_size));
    std::vector<std::pair<double, const KernelMatrix<T>*>> weighted;
    for (std::size_t i = 0; i < parts.size(); ++i)
        weighted.emplace_back(config.kernels[i].weight, &parts[i]);
    KernelMatrix<T> merged = merge_kernels(weighted);
    if (config.exclude_center) merged = exclude_center(merged);
    return merged;
}

template <typename T>
CompatibilityTransform<T> make_compatibility(const CrfParams<T>& params,
                                             const ConvCrfConfig& config, int classes) {
    if (config.compat_variant == CompatVariant::Potts) return CompatibilityTransform<T>::potts();
    if (params.compat_matrix.empty()) {
        CrfParams<T> tmp;
        tmp.init_compat_matrix(classes);
        return CompatibilityTransform<T>::learnable(classes, tmp.compat_matrix);
    }
    if (params.compat_classes != classes)
        throw ConfigError("compatibility matrix size does not match class count");
    return CompatibilityTransform<T>::learnable(classes, params.compat_matrix);
}

// Per-pixel renormalization to a distribution (used after bilinear upsampling).
template <typename T>
Tensor<T> renormalize_channels(const Tensor<T>& t) {
    Tensor<T> out(t.bs, t.c, t.h, t.w);
    for (int b = 0; b < t.bs; ++b)
        for (int x = 0; x < t.h; ++x)
            for (int y = 0; y < t.w; ++y) {
                double sum = 0.0;
                for (int ch = 0; ch < t.c; ++ch) sum += std::max<double>(t.at(b, ch, x, y), 0.0);
                if (sum <= 0.0) sum = 1.0;
                for (int ch = 0; ch < t.c; ++ch)
                    out.at(b, ch, x, y) =
                        static_cast<T>(std::max<double>(t.at(b, ch, x, y), 0.0) / sum);
            }
    return out;
}

// Full mean-field inference: kernels are built once and reused across iterations.
// With blur_factor > 1 the whole loop runs at pooled resolution and the final
// Q is bilinearly upsampled and renormalized.
template <typename T>
Tensor<T> inference(const Tensor<T>& unary_logits, const Tensor<T>& image,
                    const CrfParams<T>& params, const ConvCrfConfig& config) {
    config.validate();
    if (unary_logits.bs != image.bs || unary_logits.h != image.h || unary_logits.w != image.w)
        throw ShapeError("inference: unary and image are not spatially aligned");
    const int bf = config.blur_factor;
    Tensor<T> unary = bf > 1 ? avg_pool(unary_logits, bf) : unary_logits;
    Tensor<T> img = bf > 1 ? avg_pool(image, bf) : image;

    KernelMatrix<T> merged;
    if (!config.kernels.empty()) {
        merged = build_custom_kernels(img, config);
    } else {
        CrfParams<T> p = params;
        if (bf > 1 && p.learn_smoothness && p.smoothness_features.size() > 0)
            p.smoothness_features = avg_pool(p.smoothness_features, bf);
        merged = build_kernels(img, p, config).merged;
    }
    CompatibilityTransform<T> ct = make_compatibility(params, config, unary.c);

    MeanFieldState<T> state = init_state(unary);
    for (int it = 0; it < config.iterations; ++it)
        state = mean_field_step(state, unary, merged, ct, config);

    if (bf == 1) return state.q;
    Tensor<T> up = bilinear_upsample(state.q, bf);
    up = crop(up, 0, 0, unary_logits.h, unary_logits.w);
    return renormalize_channels(up);
}

// Per-pixel argmax over channels; ties break toward the lowest class index.
template <typename T>
LabelMap argmax_labels(const Tensor<T>& q) {
    LabelMap lm(q.bs, q.h, q.w);
    for (int b = 0; b < q.bs; ++b)
        for (int x = 0; x < q.h; ++x)
            for (int y = 0; y < q.w; ++y) {
                int best = 0;
                T bv = q.at(b, 0, x, y);
                for (int ch = 1; ch < q.c; ++ch)
                    if (q.at(b, ch, x, y) > bv) {
                        bv = q.at(b, ch, x, y);
                        best = ch;
                    }
                lm.at(b, x, y) = static_cast<std::uint8_t>(best);
            }
    return lm;
}

}  // namespace convcrf
