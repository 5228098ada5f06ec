#pragma once

#include <cmath>
#include <vector>

#include "convcrf/label_map.hpp"
#include "convcrf/rng.hpp"
#include "convcrf/tensor.hpp"

namespace convcrf {

struct NoiseConfig {
    int down_factor = 8;
    double flip_prob = 0.1;
    int num_classes = 2;
    std::uint64_t seed = 0;

    void validate() const {
        if (down_factor < 1) throw ConfigError("down_factor must be >= 1");
        if (flip_prob < 0.0 || flip_prob > 1.0) throw ConfigError("flip_prob must be in [0,1]");
        if (num_classes < 2 && flip_prob > 0.0)
            throw ConfigError("flipping needs at least 2 classes");
    }
};

namespace detail {

// Nearest-neighbor label downsample: each low-res pixel takes the top-left
// source pixel of its block.
inline LabelMap nearest_down(const LabelMap& gt, int factor) {
    int oh = (gt.h + factor - 1) / factor, ow = (gt.w + factor - 1) / factor;
    LabelMap out(gt.bs, oh, ow);
    for (int b = 0; b < gt.bs; ++b)
        for (int x = 0; x < oh; ++x)
            for (int y = 0; y < ow; ++y) out.at(b, x, y) = gt.at(b, x * factor, y * factor);
    return out;
}

inline LabelMap nearest_up(const LabelMap& lm, int factor, int h, int w) {
    LabelMap out(lm.bs, h, w);
    for (int b = 0; b < lm.bs; ++b)
        for (int x = 0; x < h; ++x)
            for (int y = 0; y < w; ++y)
                out.at(b, x, y) = lm.at(b, std::min(x / factor, lm.h - 1),
                                        std::min(y / factor, lm.w - 1));
    return out;
}

}  // namespace detail

// Simulates coarse, checkerboard-style prediction errors: downsample the
// ground truth, flip each low-resolution pixel to a uniformly random *other*
// class with probability flip_prob, then upsample back. Ignore pixels pass
// through untouched.
inline LabelMap corrupt_labels(const LabelMap& gt, const NoiseConfig& nc) {
    nc.validate();
    if (gt.h < nc.down_factor || gt.w < nc.down_factor)
        throw ShapeError("corrupt_labels: image smaller than down_factor");
    LabelMap low = detail::nearest_down(gt, nc.down_factor);
    Rng rng(nc.seed);
    for (int b = 0; b < low.bs; ++b)
        for (int x = 0; x < low.h; ++x)
            for (int y = 0; y < low.w; ++y) {
                double draw = rng.uniform();  // one draw per pixel, flipped or not
                std::uint64_t pick = rng.uniform_int(static_cast<std::uint64_t>(nc.num_classes - 1));
                std::uint8_t cur = low.at(b, x, y);
                if (cur == kIgnoreLabel || draw >= nc.flip_prob) continue;
                int other = static_cast<int>(pick);
                if (other >= cur) ++other;  // skip the current class
                low.at(b, x, y) = static_cast<std::uint8_t>(other);
            }
    return detail::nearest_up(low, nc.down_factor, gt.h, gt.w);
}

// Inverse-softmax construction: logits = ln q with q = tau on the labeled
// class and (1 - tau) / (c - 1) elsewhere. Ignore pixels get uniform logits.
template <typename T>
Tensor<T> labels_to_unary(const LabelMap& labels, double confidence, int num_classes) {
    if (!(confidence > 0.5 && confidence < 1.0))
        throw std::invalid_argument("labels_to_unary: confidence must be in (0.5, 1)");
    if (num_classes < 2) throw std::invalid_argument("labels_to_unary: need >= 2 classes");
    const double on = std::log(confidence);
    const double off = std::log((1.0 - confidence) / (num_classes - 1));
    Tensor<T> unary(labels.bs, num_classes, labels.h, labels.w);
    for (int b = 0; b < labels.bs; ++b)
        for (int x = 0; x < labels.h; ++x)
            for (int y = 0; y < labels.w; ++y) {
                int l = labels.at(b, x, y);
                if (l == kIgnoreLabel) continue;  // zero logits = uniform
                if (l >= num_classes) throw DataError("labels_to_unary: label out of range");
                for (int ch = 0; ch < num_classes; ++ch)
                    unary.at(b, ch, x, y) = static_cast<T>(ch == l ? on : off);
            }
    return unary;
}

template <typename T>
struct ToySample {
    Tensor<T> image;  // (1, 3, h, w), colors on the 0..255 scale
    LabelMap gt;      // (1, h, w)
};

// Deterministic scenes of colored rectangles and ellipses on a background.
// Class colors are fixed so the appearance kernel carries signal; a small
// per-pixel color jitter keeps images from being piecewise constant.
template <typename T>
std::vector<ToySample<T>> make_toy_dataset(int n, int h, int w, int c, std::uint64_t seed) {
    if (c < 2) throw std::invalid_argument("make_toy_dataset: need >= 2 classes");
    // Well-separated palette, repeated with perturbation beyond 8 classes.
    const double base_palette[8][3] = {{40, 40, 48},   {220, 60, 50},  {60, 200, 70},
                                       {60, 80, 230},  {230, 210, 60}, {200, 70, 210},
                                       {70, 210, 220}, {240, 150, 60}};
    std::vector<ToySample<T>> out;
    out.reserve(n);
    for (int idx = 0; idx < n; ++idx) {
        Rng rng(seed + static_cast<std::uint64_t>(idx));  // per-sample derived seed
        ToySample<T> s{Tensor<T>(1, 3, h, w), LabelMap(1, h, w)};
        int shapes = 3 + static_cast<int>(rng.uniform_int(4));
        struct Shape {
            bool ellipse;
            int cls, x0, y0, x1, y1;
        };
        std::vector<Shape> placed;
        for (int i = 0; i < shapes; ++i) {
            Shape sh;
            sh.ellipse = rng.uniform() < 0.5;
            sh.cls = 1 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(c - 1)));
            int sh_h = h / 4 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(h / 3)));
            int sh_w = w / 4 + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(w / 3)));
            sh.x0 = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(std::max(1, h - sh_h))));
            sh.y0 = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(std::max(1, w - sh_w))));
            sh.x1 = std::min(h, sh.x0 + sh_h);
            sh.y1 = std::min(w, sh.y0 + sh_w);
            placed.push_back(sh);
        }
        for (int x = 0; x < h; ++x)
            for (int y = 0; y < w; ++y) {
                int cls = 0;
                for (const auto& sh : placed) {
                    if (x < sh.x0 || x >= sh.x1 || y < sh.y0 || y >= sh.y1) continue;
                    if (sh.ellipse) {
                        double cx = 0.5 * (sh.x0 + sh.x1 - 1), cy = 0.5 * (sh.y0 + sh.y1 - 1);
                        double rx = 0.5 * (sh.x1 - sh.x0), ry = 0.5 * (sh.y1 - sh.y0);
                        double dx = (x - cx) / rx, dy = (y - cy) / ry;
                        if (dx * dx + dy * dy > 1.0) continue;
                    }
                    cls = sh.cls;  // later shapes draw on top
                }
                s.gt.at(0, x, y) = static_cast<std::uint8_t>(cls);
                const double* base = base_palette[cls % 8];
                double shift = cls >= 8 ? 25.0 * (cls / 8) : 0.0;
                for (int ch = 0; ch < 3; ++ch) {
                    double v = base[ch] + shift + rng.uniform(-12.0, 12.0);
                    s.image.at(0, ch, x, y) = static_cast<T>(std::clamp(v, 0.0, 255.0));
                }
            }
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace convcrf
