#pragma once

#include <cmath>
#include <sstream>
#include <string>
#include <vector>

#include "convcrf/label_map.hpp"
#include "convcrf/mean_field.hpp"
#include "convcrf/message_passing.hpp"
#include "convcrf/params.hpp"
#include "convcrf/rng.hpp"
#include "convcrf/tensor.hpp"

namespace convcrf {

// ---------------------------------------------------------------------------
// Loss

// Mean over non-ignored pixels of -log Q[true class], floored at log(1e-8).
template <typename T>
double loss_cross_entropy(const Tensor<T>& q, const LabelMap& labels, int ignore_index = kIgnoreLabel) {
    if (q.bs != labels.bs || q.h != labels.h || q.w != labels.w)
        throw ShapeError("loss_cross_entropy: shape mismatch");
    double total = 0.0;
    std::int64_t n = 0;
    for (int b = 0; b < q.bs; ++b)
        for (int x = 0; x < q.h; ++x)
            for (int y = 0; y < q.w; ++y) {
                int l = labels.at(b, x, y);
                if (l == ignore_index) continue;
                if (l < 0 || l >= q.c) throw DataError("loss_cross_entropy: label out of range");
                total += -std::log(std::max<double>(q.at(b, l, x, y), 1e-8));
                ++n;
            }
    if (n == 0) throw DataError("loss_cross_entropy: no evaluated pixels");
    return total / static_cast<double>(n);
}

template <typename T>
Tensor<T> loss_cross_entropy_backward(const Tensor<T>& q, const LabelMap& labels,
                                      int ignore_index = kIgnoreLabel) {
    Tensor<T> dq(q.bs, q.c, q.h, q.w);
    std::int64_t n = 0;
    for (int b = 0; b < q.bs; ++b)
        for (int x = 0; x < q.h; ++x)
            for (int y = 0; y < q.w; ++y)
                if (labels.at(b, x, y) != ignore_index) ++n;
    if (n == 0) throw DataError("loss_cross_entropy_backward: no evaluated pixels");
    for (int b = 0; b < q.bs; ++b)
        for (int x = 0; x < q.h; ++x)
            for (int y = 0; y < q.w; ++y) {
                int l = labels.at(b, x, y);
                if (l == ignore_index) continue;
                double qv = q.at(b, l, x, y);
                if (qv > 1e-8)  // below the floor the loss is clamped, gradient 0
                    dq.at(b, l, x, y) = static_cast<T>(-1.0 / (qv * static_cast<double>(n)));
            }
    return dq;
}

// ---------------------------------------------------------------------------
// Tape

// Activations recorded by a training-mode inference; the unrolled graph is
// small and fixed, so an explicit tape replaces a general autodiff framework.
template <typename T>
struct InferenceTape {
    ConvCrfConfig config;
    int full_h = 0, full_w = 0;
    Tensor<T> unary;             // at working (possibly pooled) resolution
    BuiltKernels<T> kernels;
    CompatibilityTransform<T> ct;
    std::vector<Tensor<T>> q;    // q[0] .. q[iterations]
    std::vector<Tensor<T>> msg;  // message-pass output per iteration
    Tensor<T> q_final;           // full-resolution output
};

template <typename T>
InferenceTape<T> forward_with_tape(const Tensor<T>& unary_logits, const Tensor<T>& image,
                                   const CrfParams<T>& params, const ConvCrfConfig& config) {
    config.validate();
    if (!config.kernels.empty())
        throw ConfigError("training supports the standard two-kernel parameterization only");
    if (unary_logits.bs != image.bs || unary_logits.h != image.h || unary_logits.w != image.w)
        throw ShapeError("forward_with_tape: unary and image are not spatially aligned");

    InferenceTape<T> tape;
    tape.config = config;
    tape.full_h = unary_logits.h;
    tape.full_w = unary_logits.w;
    const int bf = config.blur_factor;
    tape.unary = bf > 1 ? avg_pool(unary_logits, bf) : unary_logits;
    Tensor<T> img = bf > 1 ? avg_pool(image, bf) : image;

    CrfParams<T> p = params;
    if (bf > 1 && p.learn_smoothness && p.smoothness_features.size() > 0)
        p.smoothness_features = avg_pool(p.smoothness_features, bf);
    tape.kernels = build_kernels(img, p, config);
    tape.ct = make_compatibility(params, config, tape.unary.c);

    tape.q.push_back(softmax_channels(tape.unary));
    for (int it = 0; it < config.iterations; ++it) {
        Tensor<T> m = message_pass(tape.kernels.merged, tape.q.back());
        Tensor<T> penalty = apply_compatibility(m, tape.ct);
        Tensor<T> logits(tape.unary.bs, tape.unary.c, tape.unary.h, tape.unary.w);
        for (std::int64_t i = 0; i < logits.size(); ++i)
            logits.data[i] = tape.unary.data[i] - penalty.data[i];
        tape.msg.push_back(std::move(m));
        tape.q.push_back(softmax_channels(logits));
    }

    if (bf == 1) {
        tape.q_final = tape.q.back();
    } else {
        Tensor<T> up = bilinear_upsample(tape.q.back(), bf);
        tape.q_final = renormalize_channels(crop(up, 0, 0, tape.full_h, tape.full_w));
    }
    return tape;
}

// ---------------------------------------------------------------------------
// Gradients

template <typename T>
struct ParamGradients {
    // Gradients with respect to the *stored* (log-space) scalars.
    double d_log_w1 = 0.0, d_log_w2 = 0.0;
    double d_log_theta_alpha = 0.0, d_log_theta_beta = 0.0, d_log_theta_gamma = 0.0;
    Tensor<T> d_smoothness;          // (1, 2, h, w) when smoothness is learnable
    std::vector<double> d_compat;    // c x c when the compatibility matrix is learnable

    void check_finite() const {
        auto ok = [](double v) { return std::isfinite(v); };
        if (!ok(d_log_w1) || !ok(d_log_w2) || !ok(d_log_theta_alpha) || !ok(d_log_theta_beta) ||
            !ok(d_log_theta_gamma))
            throw DataError("non-finite scalar gradient");
        for (const auto& v : d_smoothness.data)
            if (!std::isfinite(static_cast<double>(v))) throw DataError("non-finite smoothness gradient");
        for (double v : d_compat)
            if (!ok(v)) throw DataError("non-finite compatibility gradient");
    }
};

namespace detail {

// dz = q * (dq - sum_ch dq * q), per pixel
template <typename T>
Tensor<T> softmax_backward(const Tensor<T>& q, const Tensor<T>& dq) {
    Tensor<T> dz(q.bs, q.c, q.h, q.w);
    for (int b = 0; b < q.bs; ++b)
        for (int x = 0; x < q.h; ++x)
            for (int y = 0; y < q.w; ++y) {
                double dot = 0.0;
                for (int ch = 0; ch < q.c; ++ch)
                    dot += static_cast<double>(dq.at(b, ch, x, y)) * q.at(b, ch, x, y);
                for (int ch = 0; ch < q.c; ++ch)
                    dz.at(b, ch, x, y) =
                        static_cast<T>(q.at(b, ch, x, y) * (dq.at(b, ch, x, y) - dot));
            }
    return dz;
}

// Transpose of apply_compatibility with respect to its input.
template <typename T>
Tensor<T> compatibility_backward_input(const Tensor<T>& d_out, const CompatibilityTransform<T>& ct) {
    Tensor<T> d_in(d_out.bs, d_out.c, d_out.h, d_out.w);
    for (int b = 0; b < d_out.bs; ++b)
        for (int x = 0; x < d_out.h; ++x)
            for (int y = 0; y < d_out.w; ++y) {
                if (ct.variant == CompatVariant::Potts) {
                    double total = 0.0;
                    for (int l = 0; l < d_out.c; ++l) total += d_out.at(b, l, x, y);
                    for (int l = 0; l < d_out.c; ++l)
                        d_in.at(b, l, x, y) = static_cast<T>(total - d_out.at(b, l, x, y));
                } else {
                    for (int lp = 0; lp < d_out.c; ++lp) {
                        double acc = 0.0;
                        for (int l = 0; l < d_out.c; ++l)
                            acc += static_cast<double>(
                                       ct.matrix[static_cast<std::size_t>(l) * ct.c + lp]) *
                                   d_out.at(b, l, x, y);
                        d_in.at(b, lp, x, y) = static_cast<T>(acc);
                    }
                }
            }
    return d_in;
}

// dMat[l][lp] += sum_pixels d_out[l] * in[lp]
template <typename T>
void compatibility_accumulate_matrix(const Tensor<T>& d_out, const Tensor<T>& in,
                                     std::vector<double>& d_mat) {
    const int c = d_out.c;
    for (int b = 0; b < d_out.bs; ++b)
        for (int x = 0; x < d_out.h; ++x)
            for (int y = 0; y < d_out.w; ++y)
                for (int l = 0; l < c; ++l) {
                    double dv = d_out.at(b, l, x, y);
                    if (dv == 0.0) continue;
                    for (int lp = 0; lp < c; ++lp)
                        d_mat[static_cast<std::size_t>(l) * c + lp] += dv * in.at(b, lp, x, y);
                }
}

template <typename T>
Tensor<T> avg_pool_backward(const Tensor<T>& d_out, int src_h, int src_w, int factor) {
    if (factor == 1) return d_out;
    Tensor<T> d_in(d_out.bs, d_out.c, src_h, src_w);
    for (int b = 0; b < d_out.bs; ++b)
        for (int ch = 0; ch < d_out.c; ++ch)
            for (int x = 0; x < d_out.h; ++x)
                for (int y = 0; y < d_out.w; ++y) {
                    int x1 = std::min(src_h, (x + 1) * factor);
                    int y1 = std::min(src_w, (y + 1) * factor);
                    int count = (x1 - x * factor) * (y1 - y * factor);
                    double share = static_cast<double>(d_out.at(b, ch, x, y)) / count;
                    for (int sx = x * factor; sx < x1; ++sx)
                        for (int sy = y * factor; sy < y1; ++sy)
                            d_in.at(b, ch, sx, sy) += static_cast<T>(share);
                }
    return d_in;
}

template <typename T>
Tensor<T> bilinear_upsample_backward(const Tensor<T>& d_out, int src_h, int src_w, int factor) {
    if (factor == 1) return d_out;
    Tensor<T> d_in(d_out.bs, d_out.c, src_h, src_w);
    for (int b = 0; b < d_out.bs; ++b)
        for (int ch = 0; ch < d_out.c; ++ch)
            for (int x = 0; x < d_out.h; ++x) {
                double fx = std::clamp((x + 0.5) / factor - 0.5, 0.0,
                                       static_cast<double>(src_h - 1));
                int x0 = static_cast<int>(std::floor(fx));
                int x1 = std::min(x0 + 1, src_h - 1);
                double ax = fx - x0;
                for (int y = 0; y < d_out.w; ++y) {
                    double fy = std::clamp((y + 0.5) / factor - 0.5, 0.0,
                                           static_cast<double>(src_w - 1));
                    int y0 = static_cast<int>(std::floor(fy));
                    int y1 = std::min(y0 + 1, src_w - 1);
                    double ay = fy - y0;
                    double dv = d_out.at(b, ch, x, y);
                    d_in.at(b, ch, x0, y0) += static_cast<T>((1 - ax) * (1 - ay) * dv);
                    d_in.at(b, ch, x0, y1) += static_cast<T>((1 - ax) * ay * dv);
                    d_in.at(b, ch, x1, y0) += static_cast<T>(ax * (1 - ay) * dv);
                    d_in.at(b, ch, x1, y1) += static_cast<T>(ax * ay * dv);
                }
            }
    return d_in;
}

// Backward of renormalize_channels for non-negative inputs:
// d_in[ch] = (d_out[ch] - sum_j d_out[j] * out[j]) / sum_in
template <typename T>
Tensor<T> renormalize_backward(const Tensor<T>& in, const Tensor<T>& out, const Tensor<T>& d_out) {
    Tensor<T> d_in(in.bs, in.c, in.h, in.w);
    for (int b = 0; b < in.bs; ++b)
        for (int x = 0; x < in.h; ++x)
            for (int y = 0; y < in.w; ++y) {
                double sum = 0.0, dot = 0.0;
                for (int ch = 0; ch < in.c; ++ch) {
                    sum += std::max<double>(in.at(b, ch, x, y), 0.0);
                    dot += static_cast<double>(d_out.at(b, ch, x, y)) * out.at(b, ch, x, y);
                }
                if (sum <= 0.0) continue;
                for (int ch = 0; ch < in.c; ++ch)
                    d_in.at(b, ch, x, y) =
                        static_cast<T>((d_out.at(b, ch, x, y) - dot) / sum);
            }
    return d_in;
}

}  // namespace detail

// Exact reverse-mode gradients through the unrolled inference for every
// learnable parameter. `d_q_final` is the loss gradient at the tape's output.
template <typename T>
ParamGradients<T> backward(const InferenceTape<T>& tape, const CrfParams<T>& params,
                           const Tensor<T>& d_q_final) {
    if (tape.q.empty()) throw std::logic_error("backward: tape has no recorded forward pass");
    const ConvCrfConfig& config = tape.config;
    const int bf = config.blur_factor;
    const int iters = config.iterations;

    ParamGradients<T> grads;
    const bool learn_compat = tape.ct.variant == CompatVariant::LearnableMatrix;
    if (learn_compat) grads.d_compat.assign(static_cast<std::size_t>(tape.ct.c) * tape.ct.c, 0.0);

    // Output head: renormalize + upsample + crop, when blurred.
    Tensor<T> dq;
    if (bf == 1) {
        dq = d_q_final;
    } else {
        Tensor<T> up = bilinear_upsample(tape.q.back(), bf);
        Tensor<T> cropped = crop(up, 0, 0, tape.full_h, tape.full_w);
        Tensor<T> d_cropped = detail::renormalize_backward(cropped, tape.q_final, d_q_final);
        Tensor<T> d_up(up.bs, up.c, up.h, up.w);
        for (int b = 0; b < d_cropped.bs; ++b)
            for (int ch = 0; ch < d_cropped.c; ++ch)
                for (int x = 0; x < d_cropped.h; ++x)
                    for (int y = 0; y < d_cropped.w; ++y)
                        d_up.at(b, ch, x, y) = d_cropped.at(b, ch, x, y);
        dq = detail::bilinear_upsample_backward(d_up, tape.q.back().h, tape.q.back().w, bf);
    }

    // Unrolled iterations in reverse.
    Tensor<T> d_kernel_total(tape.kernels.merged.values.bs, tape.kernels.merged.values.c,
                             tape.kernels.merged.values.h, tape.kernels.merged.values.w);
    for (int t = iters; t >= 1; --t) {
        Tensor<T> dz = detail::softmax_backward(tape.q[t], dq);
        Tensor<T> d_penalty(dz.bs, dz.c, dz.h, dz.w);
        for (std::int64_t i = 0; i < dz.size(); ++i) d_penalty.data[i] = -dz.data[i];
        if (learn_compat)
            detail::compatibility_accumulate_matrix(d_penalty, tape.msg[t - 1], grads.d_compat);
        Tensor<T> d_msg = detail::compatibility_backward_input(d_penalty, tape.ct);

        MessagePassContext<T> ctx;
        ctx.kernel = &tape.kernels.merged;
        ctx.tiled_input = im2col_tile(tape.q[t - 1], config.filter_size);
        MessagePassGrads<T> mg = message_pass_backward(ctx, d_msg);
        for (std::int64_t i = 0; i < d_kernel_total.size(); ++i)
            d_kernel_total.data[i] += mg.d_kernel.data[i];
        dq = std::move(mg.d_input);
    }
    // dq now holds d(loss)/d(q[0]); the unary is fixed input, nothing to update.

    // Merged kernel -> per-kernel weights and entries.
    if (config.exclude_center) {
        int off = center_offset(config.filter_size);
        for (int b = 0; b < d_kernel_total.bs; ++b)
            for (int x = 0; x < d_kernel_total.h; ++x)
                for (int y = 0; y < d_kernel_total.w; ++y) d_kernel_total.at(b, off, x, y) = T(0);
    }
    const Tensor<T>& app = tape.kernels.appearance.values;
    const Tensor<T>& smo = tape.kernels.smoothness.values;
    double d_w1 = 0.0, d_w2 = 0.0;
    Tensor<T> d_app(app.bs, app.c, app.h, app.w), d_smo(smo.bs, smo.c, smo.h, smo.w);
    const double w1 = params.w1(), w2 = params.w2();
    for (std::int64_t i = 0; i < d_kernel_total.size(); ++i) {
        double dk = d_kernel_total.data[i];
        d_w1 += dk * app.data[i];
        d_w2 += dk * smo.data[i];
        d_app.data[i] = static_cast<T>(dk * w1);
        d_smo.data[i] = static_cast<T>(dk * w2);
    }

    KernelGrads<T> ag = kernel_matrix_backward(tape.kernels.appearance_features,
                                               tape.kernels.appearance_spec,
                                               tape.kernels.appearance, d_app);
    KernelGrads<T> sg = kernel_matrix_backward(tape.kernels.smoothness_features,
                                               tape.kernels.smoothness_spec,
                                               tape.kernels.smoothness, d_smo);
    double d_theta_alpha = ag.dthetas[0] + ag.dthetas[1];
    double d_theta_beta = ag.dthetas[2] + ag.dthetas[3] + ag.dthetas[4];
    double d_theta_gamma = sg.dthetas[0] + sg.dthetas[1];

    // Chain through the log-space storage: d(log p) = d(p) * p.
    grads.d_log_w1 = d_w1 * w1;
    grads.d_log_w2 = d_w2 * w2;
    grads.d_log_theta_alpha = d_theta_alpha * params.theta_alpha();
    grads.d_log_theta_beta = d_theta_beta * params.theta_beta();
    grads.d_log_theta_gamma = d_theta_gamma * params.theta_gamma();

    if (params.learn_smoothness && params.smoothness_features.size() > 0) {
        // Sum the per-batch plane gradients into the shared planes, then
        // unpool if the loop ran at reduced resolution.
        const FeatureStack<T>& df = sg.dfeatures;
        Tensor<T> shared(1, 2, df.h, df.w);
        for (int plane = 0; plane < 2; ++plane)
            for (int b = 0; b < df.bs; ++b)
                for (int x = 0; x < df.h; ++x)
                    for (int y = 0; y < df.w; ++y)
                        shared.at(0, plane, x, y) += df.at(plane, b, x, y);
        if (bf > 1)
            shared = detail::avg_pool_backward(shared, params.smoothness_features.h,
                                               params.smoothness_features.w, bf);
        grads.d_smoothness = std::move(shared);
    }

    grads.check_finite();
    return grads;
}

// ---------------------------------------------------------------------------
// Optimizers and fit

enum class OptimizerKind { SGD, Adam };

struct TrainConfig {
    double learning_rate = 1e-3;
    int steps = 1;
    int batch_size = 1;
    OptimizerKind optimizer = OptimizerKind::Adam;
    double beta1 = 0.9, beta2 = 0.999, epsilon = 1e-8;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(learning_rate >= 0.0)) throw ConfigError("learning_rate must be >= 0");
        if (steps < 0) throw ConfigError("steps must be >= 0");
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    }
};

template <typename T>
struct TrainSample {
    Tensor<T> image;
    Tensor<T> unary_logits;
    LabelMap labels;
};

namespace detail {

// Flat double view over every trainable degree of freedom.
template <typename T>
std::vector<double> flatten_params(const CrfParams<T>& p) {
    std::vector<double> v = {p.log_w1, p.log_w2, p.log_theta_alpha, p.log_theta_beta,
                             p.log_theta_gamma};
    if (p.learn_smoothness)
        for (const auto& x : p.smoothness_features.data) v.push_back(static_cast<double>(x));
    for (const auto& x : p.compat_matrix) v.push_back(static_cast<double>(x));
    return v;
}

template <typename T>
void unflatten_params(const std::vector<double>& v, CrfParams<T>& p) {
    std::size_t i = 0;
    p.log_w1 = v[i++];
    p.log_w2 = v[i++];
    p.log_theta_alpha = v[i++];
    p.log_theta_beta = v[i++];
    p.log_theta_gamma = v[i++];
    if (p.learn_smoothness)
        for (auto& x : p.smoothness_features.data) x = static_cast<T>(v[i++]);
    for (auto& x : p.compat_matrix) x = static_cast<T>(v[i++]);
}

template <typename T>
std::vector<double> flatten_grads(const ParamGradients<T>& g, const CrfParams<T>& p) {
    std::vector<double> v = {g.d_log_w1, g.d_log_w2, g.d_log_theta_alpha, g.d_log_theta_beta,
                             g.d_log_theta_gamma};
    if (p.learn_smoothness) {
        if (g.d_smoothness.size() != p.smoothness_features.size())
            throw ShapeError("smoothness gradient shape mismatch");
        for (const auto& x : g.d_smoothness.data) v.push_back(static_cast<double>(x));
    }
    if (!p.compat_matrix.empty()) {
        if (g.d_compat.size() != p.compat_matrix.size())
            throw ShapeError("compatibility gradient shape mismatch");
        v.insert(v.end(), g.d_compat.begin(), g.d_compat.end());
    }
    return v;
}

}  // namespace detail

template <typename T>
struct FitResult {
    CrfParams<T> params;
    std::vector<double> losses;  // one entry per optimizer step
};

// Decoupled training: unary inputs are read-only, only the internal CRF
// parameters move. Mini-batches cycle through the dataset in order; gradient
// accumulation is a fixed ordered sum, so a given seed reproduces the loss
// curve bit-for-bit.
template <typename T>
FitResult<T> fit(const CrfParams<T>& initial, const std::vector<TrainSample<T>>& dataset,
                 const TrainConfig& tc, const ConvCrfConfig& config) {
    tc.validate();
    if (dataset.empty()) throw DataError("fit: empty dataset");
    if (!initial.compat_matrix.empty() && config.compat_variant != CompatVariant::LearnableMatrix)
        throw ConfigError("fit: compatibility matrix present but variant is Potts");
    for (const auto& s : dataset) {
        if (s.unary_logits.bs != s.labels.bs || s.unary_logits.h != s.labels.h ||
            s.unary_logits.w != s.labels.w)
            throw ShapeError("fit: sample unary/label shape mismatch");
    }

    FitResult<T> result;
    result.params = initial;
    std::vector<double> theta = detail::flatten_params(result.params);
    std::vector<double> m(theta.size(), 0.0), vv(theta.size(), 0.0);

    for (int step = 0; step < tc.steps; ++step) {
        std::vector<double> grad(theta.size(), 0.0);
        double batch_loss = 0.0;
        for (int i = 0; i < tc.batch_size; ++i) {
            const TrainSample<T>& sample =
                dataset[(static_cast<std::size_t>(step) * tc.batch_size + i) % dataset.size()];
            InferenceTape<T> tape =
                forward_with_tape(sample.unary_logits, sample.image, result.params, config);
            double loss = loss_cross_entropy(tape.q_final, sample.labels);
            if (!std::isfinite(loss)) {
                std::ostringstream os;
                os << "fit: non-finite loss at step " << step << " (w1=" << result.params.w1()
                   << " w2=" << result.params.w2() << " ta=" << result.params.theta_alpha()
                   << " tb=" << result.params.theta_beta()
                   << " tg=" << result.params.theta_gamma() << ")";
                throw DataError(os.str());
            }
            batch_loss += loss;
            Tensor<T> dq = loss_cross_entropy_backward(tape.q_final, sample.labels);
            ParamGradients<T> g = backward(tape, result.params, dq);
            std::vector<double> gflat = detail::flatten_grads(g, result.params);
            for (std::size_t j = 0; j < grad.size(); ++j) grad[j] += gflat[j];
        }
        batch_loss /= tc.batch_size;
        for (auto& gj : grad) gj /= tc.batch_size;
        result.losses.push_back(batch_loss);

        if (tc.optimizer == OptimizerKind::SGD) {
            for (std::size_t j = 0; j < theta.size(); ++j)
                theta[j] -= tc.learning_rate * grad[j];
        } else {
            double t = step + 1;
            double bc1 = 1.0 - std::pow(tc.beta1, t);
            double bc2 = 1.0 - std::pow(tc.beta2, t);
            for (std::size_t j = 0; j < theta.size(); ++j) {
                m[j] = tc.beta1 * m[j] + (1.0 - tc.beta1) * grad[j];
                vv[j] = tc.beta2 * vv[j] + (1.0 - tc.beta2) * grad[j] * grad[j];
                theta[j] -= tc.learning_rate * (m[j] / bc1) /
                            (std::sqrt(vv[j] / bc2) + tc.epsilon);
            }
        }
        detail::unflatten_params(theta, result.params);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Finite-difference verification

struct FdGroupReport {
    std::string name;
    double max_rel_error = 0.0;
    bool flagged = false;  // exceeds 1e-2
};

struct FdReport {
    std::vector<FdGroupReport> groups;
    double max_rel_error = 0.0;
};

namespace detail {

inline double rel_error(double a, double b) {
    double denom = std::max({std::abs(a), std::abs(b), 1e-4});
    return std::abs(a - b) / denom;
}

}  // namespace detail

// Central differences against the analytic gradients, per parameter group.
// Plane-valued groups probe a deterministic subset of entries.
template <typename T>
FdReport finite_difference_check(const CrfParams<T>& params, const TrainSample<T>& sample,
                                 const ConvCrfConfig& config, double eps = 1e-3) {
    auto loss_at = [&](const CrfParams<T>& p) {
        InferenceTape<T> tape = forward_with_tape(sample.unary_logits, sample.image, p, config);
        return loss_cross_entropy(tape.q_final, sample.labels);
    };
    InferenceTape<T> tape = forward_with_tape(sample.unary_logits, sample.image, params, config);
    Tensor<T> dq = loss_cross_entropy_backward(tape.q_final, sample.labels);
    ParamGradients<T> g = backward(tape, params, dq);

    FdReport report;
    auto check_scalar = [&](const std::string& name, double CrfParams<T>::* field, double analytic) {
        CrfParams<T> lo = params, hi = params;
        lo.*field -= eps;
        hi.*field += eps;
        double fd = (loss_at(hi) - loss_at(lo)) / (2.0 * eps);
        report.groups.push_back({name, detail::rel_error(analytic, fd), false});
    };
    check_scalar("w1", &CrfParams<T>::log_w1, g.d_log_w1);
    check_scalar("w2", &CrfParams<T>::log_w2, g.d_log_w2);
    check_scalar("theta_alpha", &CrfParams<T>::log_theta_alpha, g.d_log_theta_alpha);
    check_scalar("theta_beta", &CrfParams<T>::log_theta_beta, g.d_log_theta_beta);
    check_scalar("theta_gamma", &CrfParams<T>::log_theta_gamma, g.d_log_theta_gamma);

    if (params.learn_smoothness && params.smoothness_features.size() > 0) {
        FdGroupReport gr{"smoothness_features", 0.0, false};
        std::int64_t n = params.smoothness_features.size();
        std::int64_t stride = std::max<std::int64_t>(1, n / 8);
        for (std::int64_t i = 0; i < n; i += stride) {
            CrfParams<T> lo = params, hi = params;
            lo.smoothness_features.data[i] -= static_cast<T>(eps);
            hi.smoothness_features.data[i] += static_cast<T>(eps);
            double fd = (loss_at(hi) - loss_at(lo)) / (2.0 * eps);
            gr.max_rel_error = std::max(
                gr.max_rel_error, detail::rel_error(static_cast<double>(g.d_smoothness.data[i]), fd));
        }
        report.groups.push_back(gr);
    }
    if (!params.compat_matrix.empty() && config.compat_variant == CompatVariant::LearnableMatrix) {
        FdGroupReport gr{"compat_matrix", 0.0, false};
        for (std::size_t i = 0; i < params.compat_matrix.size(); ++i) {
            CrfParams<T> lo = params, hi = params;
            lo.compat_matrix[i] -= static_cast<T>(eps);
            hi.compat_matrix[i] += static_cast<T>(eps);
            double fd = (loss_at(hi) - loss_at(lo)) / (2.0 * eps);
            gr.max_rel_error = std::max(gr.max_rel_error, detail::rel_error(g.d_compat[i], fd));
        }
        report.groups.push_back(gr);
    }

    for (auto& gr : report.groups) {
        gr.flagged = gr.max_rel_error > 1e-2;
        report.max_rel_error = std::max(report.max_rel_error, gr.max_rel_error);
    }
    return report;
}

}  // namespace convcrf
