#pragma once

#include <cstdint>
#include <vector>

#include "convcrf/label_map.hpp"

namespace convcrf {

// counts[t][p] = number of evaluated pixels with true class t predicted as p.
// Accumulation is associative, so per-sample matrices can be summed in any
// grouping.
struct ConfusionMatrix {
    int c = 0;
    std::vector<std::uint64_t> counts;

    ConfusionMatrix() = default;
    explicit ConfusionMatrix(int classes) : c(classes) {
        counts.assign(static_cast<std::size_t>(c) * c, 0);
    }

    std::uint64_t& at(int t, int p) { return counts[static_cast<std::size_t>(t) * c + p]; }
    std::uint64_t at(int t, int p) const { return counts[static_cast<std::size_t>(t) * c + p]; }

    std::uint64_t total() const {
        std::uint64_t n = 0;
        for (auto v : counts) n += v;
        return n;
    }

    ConfusionMatrix& operator+=(const ConfusionMatrix& o) {
        if (c != o.c) throw ShapeError("ConfusionMatrix: class count mismatch");
        for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += o.counts[i];
        return *this;
    }
};

// Ignore pixels (in the ground truth) are skipped.
inline void accumulate(ConfusionMatrix& cm, const LabelMap& pred, const LabelMap& gt) {
    if (!pred.same_shape(gt)) throw ShapeError("accumulate: prediction/gt shape mismatch");
    for (int b = 0; b < gt.bs; ++b)
        for (int x = 0; x < gt.h; ++x)
            for (int y = 0; y < gt.w; ++y) {
                int t = gt.at(b, x, y);
                if (t == kIgnoreLabel) continue;
                int p = pred.at(b, x, y);
                if (t >= cm.c || p >= cm.c) throw DataError("accumulate: class out of range");
                ++cm.at(t, p);
            }
}

// Per-class IoU; classes with zero union get -1 and are excluded from the mean.
inline std::vector<double> per_class_iou(const ConfusionMatrix& cm) {
    std::vector<double> iou(cm.c, -1.0);
    for (int l = 0; l < cm.c; ++l) {
        std::uint64_t tp = cm.at(l, l), fp = 0, fn = 0;
        for (int o = 0; o < cm.c; ++o) {
            if (o == l) continue;
            fp += cm.at(o, l);
            fn += cm.at(l, o);
        }
        std::uint64_t uni = tp + fp + fn;
        if (uni > 0) iou[l] = static_cast<double>(tp) / static_cast<double>(uni);
    }
    return iou;
}

inline double miou(const ConfusionMatrix& cm) {
    if (cm.total() == 0) throw DataError("miou: no evaluated pixels");
    double sum = 0.0;
    int n = 0;
    for (double v : per_class_iou(cm))
        if (v >= 0.0) {
            sum += v;
            ++n;
        }
    if (n == 0) throw DataError("miou: no class has a nonzero union");
    return sum / n;
}

inline double pixel_accuracy(const ConfusionMatrix& cm) {
    std::uint64_t n = cm.total();
    if (n == 0) throw DataError("pixel_accuracy: no evaluated pixels");
    std::uint64_t diag = 0;
    for (int l = 0; l < cm.c; ++l) diag += cm.at(l, l);
    return static_cast<double>(diag) / static_cast<double>(n);
}

}  // namespace convcrf
