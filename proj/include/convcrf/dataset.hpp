#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "convcrf/ctf_io.hpp"
#include "convcrf/label_map.hpp"
#include "convcrf/png_io.hpp"
#include "convcrf/tensor.hpp"

namespace convcrf {

// Dataset directory layout:
//   images/NNNN.png  8-bit RGB
//   labels/NNNN.png  8-bit grayscale class indices (255 = ignore)
//   unary/NNNN.ctf   CTF1 logits
//   manifest.json    counts, class count, seed, noise settings (written last)

inline std::string sample_id(int index) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%04d", index);
    return buf;
}

inline ImageU8 tensor_to_image(const Tensor<float>& t) {
    if (t.bs != 1 || t.c != 3) throw ShapeError("tensor_to_image: expected (1,3,h,w)");
    ImageU8 img;
    img.h = t.h;
    img.w = t.w;
    img.channels = 3;
    img.pixels.resize(static_cast<std::size_t>(t.h) * t.w * 3);
    for (int x = 0; x < t.h; ++x)
        for (int y = 0; y < t.w; ++y)
            for (int ch = 0; ch < 3; ++ch)
                img.at(x, y, ch) = static_cast<std::uint8_t>(
                    std::clamp(std::lround(t.at(0, ch, x, y)), 0l, 255l));
    return img;
}

inline Tensor<float> image_to_tensor(const ImageU8& img) {
    if (img.channels != 3) throw ShapeError("image_to_tensor: expected RGB");
    Tensor<float> t(1, 3, img.h, img.w);
    for (int x = 0; x < img.h; ++x)
        for (int y = 0; y < img.w; ++y)
            for (int ch = 0; ch < 3; ++ch) t.at(0, ch, x, y) = img.at(x, y, ch);
    return t;
}

inline ImageU8 labels_to_image(const LabelMap& lm) {
    if (lm.bs != 1) throw ShapeError("labels_to_image: expected bs=1");
    ImageU8 img;
    img.h = lm.h;
    img.w = lm.w;
    img.channels = 1;
    img.pixels.assign(lm.values.begin(), lm.values.end());
    return img;
}

inline LabelMap image_to_labels(const ImageU8& img) {
    if (img.channels != 1) throw ShapeError("image_to_labels: expected grayscale");
    LabelMap lm(1, img.h, img.w);
    lm.values.assign(img.pixels.begin(), img.pixels.end());
    return lm;
}

struct Dataset {
    std::string dir;
    int count = 0;
    int num_classes = 0;
    int height = 0, width = 0;
    nlohmann::json manifest;

    static Dataset open(const std::string& dir) {
        namespace fs = std::filesystem;
        std::ifstream f(fs::path(dir) / "manifest.json");
        if (!f) throw DataError("no manifest.json in " + dir + " (incomplete dataset?)");
        Dataset ds;
        ds.dir = dir;
        ds.manifest = nlohmann::json::parse(f);
        ds.count = ds.manifest.at("count").get<int>();
        ds.num_classes = ds.manifest.at("num_classes").get<int>();
        ds.height = ds.manifest.at("height").get<int>();
        ds.width = ds.manifest.at("width").get<int>();
        return ds;
    }

    std::string image_path(int i) const { return dir + "/images/" + sample_id(i) + ".png"; }
    std::string label_path(int i) const { return dir + "/labels/" + sample_id(i) + ".png"; }
    std::string unary_path(int i) const { return dir + "/unary/" + sample_id(i) + ".ctf"; }

    Tensor<float> load_image(int i) const { return image_to_tensor(read_png(image_path(i))); }
    LabelMap load_labels(int i) const { return image_to_labels(read_png(label_path(i))); }
    Tensor<float> load_unary(int i) const { return read_ctf(unary_path(i)); }
    bool has_labels() const {
        return std::filesystem::exists(std::filesystem::path(dir) / "labels");
    }
};

}  // namespace convcrf
