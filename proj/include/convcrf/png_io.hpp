#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "convcrf/util.hpp"

namespace convcrf {

// Minimal PNG codec for the two pixel formats the datasets use: 8-bit
// grayscale (label maps) and 8-bit RGB (images). Non-interlaced only.
// The encoder always emits filter type 0; the decoder handles all five
// standard filters so third-party files load too.

struct ImageU8 {
    int h = 0, w = 0, channels = 0;  // channels: 1 (gray) or 3 (rgb)
    std::vector<std::uint8_t> pixels;  // row-major, interleaved

    std::uint8_t& at(int x, int y, int ch = 0) {
        return pixels[(static_cast<std::size_t>(x) * w + y) * channels + ch];
    }
    std::uint8_t at(int x, int y, int ch = 0) const {
        return pixels[(static_cast<std::size_t>(x) * w + y) * channels + ch];
    }
};

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

inline void put_chunk(std::vector<std::uint8_t>& out, const char type[4],
                      const std::uint8_t* payload, std::size_t n) {
    put_u32(out, static_cast<std::uint32_t>(n));
    std::size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    if (n > 0) out.insert(out.end(), payload, payload + n);
    std::uint32_t crc = static_cast<std::uint32_t>(
        ::crc32(0, out.data() + start, static_cast<uInt>(4 + n)));
    put_u32(out, crc);
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) | (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | p[3];
}

inline int paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace detail

inline void write_png(const std::string& path, const ImageU8& img) {
    if (img.channels != 1 && img.channels != 3) throw DataError("write_png: 1 or 3 channels only");
    const int bpp = img.channels;
    std::vector<std::uint8_t> raw;
    raw.reserve(static_cast<std::size_t>(img.h) * (img.w * bpp + 1));
    for (int x = 0; x < img.h; ++x) {
        raw.push_back(0);  // filter type 0
        const std::uint8_t* row = img.pixels.data() + static_cast<std::size_t>(x) * img.w * bpp;
        raw.insert(raw.end(), row, row + static_cast<std::size_t>(img.w) * bpp);
    }
    uLongf zlen = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> zbuf(zlen);
    if (compress2(zbuf.data(), &zlen, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw DataError("write_png: deflate failed");
    zbuf.resize(zlen);

    std::vector<std::uint8_t> out;
    const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    out.insert(out.end(), sig, sig + 8);
    std::vector<std::uint8_t> hdr;
    detail::put_u32(hdr, static_cast<std::uint32_t>(img.w));
    detail::put_u32(hdr, static_cast<std::uint32_t>(img.h));
    hdr.push_back(8);                                    // bit depth
    hdr.push_back(img.channels == 1 ? 0 : 2);            // color type
    hdr.push_back(0);                                    // compression
    hdr.push_back(0);                                    // filter
    hdr.push_back(0);                                    // interlace
    detail::put_chunk(out, "IHDR", hdr.data(), hdr.size());
    detail::put_chunk(out, "IDAT", zbuf.data(), zbuf.size());
    detail::put_chunk(out, "IEND", nullptr, 0);

    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open for writing: " + path);
    f.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!f) throw DataError("write failed: " + path);
}

inline ImageU8 read_png(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open: " + path);
    std::vector<std::uint8_t> buf((std::istreambuf_iterator<char>(f)),
                                  std::istreambuf_iterator<char>());
    const std::uint8_t sig[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    if (buf.size() < 8 || std::memcmp(buf.data(), sig, 8) != 0)
        throw DataError("not a PNG file: " + path);

    ImageU8 img;
    std::vector<std::uint8_t> idat;
    std::size_t pos = 8;
    while (pos + 12 <= buf.size()) {
        std::uint32_t len = detail::get_u32(&buf[pos]);
        const char* type = reinterpret_cast<const char*>(&buf[pos + 4]);
        const std::uint8_t* payload = &buf[pos + 8];
        if (pos + 12 + len > buf.size()) throw DataError("truncated PNG chunk in " + path);
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw DataError("bad IHDR in " + path);
            img.w = static_cast<int>(detail::get_u32(payload));
            img.h = static_cast<int>(detail::get_u32(payload + 4));
            int depth = payload[8], color = payload[9], interlace = payload[12];
            if (depth != 8 || interlace != 0 || (color != 0 && color != 2))
                throw DataError("unsupported PNG format in " + path);
            img.channels = color == 0 ? 1 : 3;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    if (img.w <= 0 || img.h <= 0 || idat.empty()) throw DataError("incomplete PNG: " + path);

    const int bpp = img.channels;
    const std::size_t stride = static_cast<std::size_t>(img.w) * bpp;
    std::vector<std::uint8_t> raw(static_cast<std::size_t>(img.h) * (stride + 1));
    uLongf rawlen = static_cast<uLongf>(raw.size());
    if (uncompress(raw.data(), &rawlen, idat.data(), static_cast<uLong>(idat.size())) != Z_OK ||
        rawlen != raw.size())
        throw DataError("PNG inflate failed: " + path);

    img.pixels.assign(static_cast<std::size_t>(img.h) * stride, 0);
    std::vector<std::uint8_t> prev(stride, 0);
    for (int x = 0; x < img.h; ++x) {
        const std::uint8_t* src = &raw[static_cast<std::size_t>(x) * (stride + 1)];
        std::uint8_t filter = src[0];
        std::uint8_t* dst = &img.pixels[static_cast<std::size_t>(x) * stride];
        for (std::size_t i = 0; i < stride; ++i) {
            int a = i >= static_cast<std::size_t>(bpp) ? dst[i - bpp] : 0;
            int b = prev[i];
            int c = i >= static_cast<std::size_t>(bpp) ? prev[i - bpp] : 0;
            int v = src[1 + i];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += detail::paeth(a, b, c); break;
                default: throw DataError("bad PNG filter type in " + path);
            }
            dst[i] = static_cast<std::uint8_t>(v);
        }
        std::memcpy(prev.data(), dst, stride);
    }
    return img;
}

}  // namespace convcrf
