#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>

#include "convcrf/tensor.hpp"

namespace convcrf {

// CTF1 tensor file: magic "CTF1", four little-endian u32 dims (bs, c, h, w),
// then bs*c*h*w little-endian f32 values. Round trips must be bit-exact.

inline void write_ctf(const std::string& path, const Tensor<float>& t) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open for writing: " + path);
    f.write("CTF1", 4);
    std::uint32_t dims[4] = {static_cast<std::uint32_t>(t.bs), static_cast<std::uint32_t>(t.c),
                             static_cast<std::uint32_t>(t.h), static_cast<std::uint32_t>(t.w)};
    f.write(reinterpret_cast<const char*>(dims), sizeof(dims));
    f.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!f) throw DataError("write failed: " + path);
}

inline Tensor<float> read_ctf(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, "CTF1", 4) != 0) throw DataError("bad CTF1 magic in " + path);
    std::uint32_t dims[4];
    f.read(reinterpret_cast<char*>(dims), sizeof(dims));
    if (!f) throw DataError("truncated CTF1 header in " + path);
    Tensor<float> t(static_cast<int>(dims[0]), static_cast<int>(dims[1]),
                    static_cast<int>(dims[2]), static_cast<int>(dims[3]));
    f.read(reinterpret_cast<char*>(t.data.data()),
           static_cast<std::streamsize>(t.data.size() * sizeof(float)));
    if (!f) throw DataError("truncated CTF1 payload in " + path);
    return t;
}

}  // namespace convcrf
