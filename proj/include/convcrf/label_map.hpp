#pragma once

#include <cstdint>
#include <vector>

#include "convcrf/util.hpp"

namespace convcrf {

constexpr std::uint8_t kIgnoreLabel = 255;

// Integer class index per pixel; 255 marks void/ignore pixels.
struct LabelMap {
    int bs = 0, h = 0, w = 0;
    std::vector<std::uint8_t> values;

    LabelMap() = default;
    LabelMap(int bs_, int h_, int w_) : bs(bs_), h(h_), w(w_) {
        values.assign(static_cast<std::size_t>(bs) * h * w, 0);
    }

    std::uint8_t& at(int b, int x, int y) {
        return values[(static_cast<std::size_t>(b) * h + x) * w + y];
    }
    std::uint8_t at(int b, int x, int y) const {
        return values[(static_cast<std::size_t>(b) * h + x) * w + y];
    }

    bool same_shape(const LabelMap& o) const { return bs == o.bs && h == o.h && w == o.w; }
};

}  // namespace convcrf
