// Copyright (C) 2026 the ornatry authors
// SPDX-License-Identifier: Apache-2.0

#include "ornatry/png_io.hpp"

#include <zlib.h>

#include <cstdio>
#include <cstring>
#include <fstream>

#include "ornatry/errors.hpp"

namespace ornatry {

namespace {

const uint8_t kSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};

uint32_t crc_of(const uint8_t* type, const std::vector<uint8_t>& data) {
    uLong crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, type, 4);
    if (!data.empty()) crc = crc32(crc, data.data(), static_cast<uInt>(data.size()));
    return static_cast<uint32_t>(crc);
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
    out.push_back(static_cast<uint8_t>(v >> 24));
    out.push_back(static_cast<uint8_t>(v >> 16));
    out.push_back(static_cast<uint8_t>(v >> 8));
    out.push_back(static_cast<uint8_t>(v));
}

void write_chunk(std::ofstream& f, const char* type, const std::vector<uint8_t>& data) {
    std::vector<uint8_t> hdr;
    put_u32(hdr, static_cast<uint32_t>(data.size()));
    f.write(reinterpret_cast<const char*>(hdr.data()), 4);
    f.write(type, 4);
    if (!data.empty()) f.write(reinterpret_cast<const char*>(data.data()), data.size());
    std::vector<uint8_t> crc;
    put_u32(crc, crc_of(reinterpret_cast<const uint8_t*>(type), data));
    f.write(reinterpret_cast<const char*>(crc.data()), 4);
}

std::vector<uint8_t> deflate_bytes(const std::vector<uint8_t>& raw) {
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<uint8_t> out(bound);
    if (compress2(out.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw IoError("png: deflate failed");
    out.resize(bound);
    return out;
}

std::vector<uint8_t> inflate_bytes(const std::vector<uint8_t>& comp, size_t expected) {
    std::vector<uint8_t> out(expected);
    uLongf len = static_cast<uLongf>(expected);
    int rc = uncompress(out.data(), &len, comp.data(), static_cast<uLong>(comp.size()));
    if (rc != Z_OK || len != expected) throw IoError("png: inflate failed");
    return out;
}

void write_png_bytes(const std::string& path, const uint8_t* bytes, int w, int h, int channels) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for write: " + path);
    f.write(reinterpret_cast<const char*>(kSignature), 8);

    std::vector<uint8_t> ihdr;
    put_u32(ihdr, static_cast<uint32_t>(w));
    put_u32(ihdr, static_cast<uint32_t>(h));
    ihdr.push_back(8);                                    // bit depth
    ihdr.push_back(channels == 1 ? 0 : 2);                // color type
    ihdr.push_back(0);                                    // compression
    ihdr.push_back(0);                                    // filter
    ihdr.push_back(0);                                    // no interlace
    write_chunk(f, "IHDR", ihdr);

    size_t stride = static_cast<size_t>(w) * channels;
    std::vector<uint8_t> raw;
    raw.reserve((stride + 1) * h);
    for (int y = 0; y < h; ++y) {
        raw.push_back(0);  // filter: none
        raw.insert(raw.end(), bytes + y * stride, bytes + (y + 1) * stride);
    }
    write_chunk(f, "IDAT", deflate_bytes(raw));
    write_chunk(f, "IEND", {});
    if (!f) throw IoError("write failed: " + path);
}

int paeth(int a, int b, int c) {
    int p = a + b - c;
    int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace

void write_png(const std::string& path, const Image& img) {
    if (img.c != 1 && img.c != 3) throw ParamError("write_png: expected 1 or 3 channels");
    std::vector<uint8_t> bytes(img.px.size());
    for (size_t i = 0; i < img.px.size(); ++i) bytes[i] = to_byte(img.px[i]);
    write_png_bytes(path, bytes.data(), img.w, img.h, img.c);
}

void write_png(const std::string& path, const Mask& mask) {
    std::vector<uint8_t> bytes(mask.px.size());
    for (size_t i = 0; i < mask.px.size(); ++i) bytes[i] = mask.px[i] ? 255 : 0;
    write_png_bytes(path, bytes.data(), mask.w, mask.h, 1);
}

Image read_png(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    uint8_t sig[8];
    f.read(reinterpret_cast<char*>(sig), 8);
    if (!f || std::memcmp(sig, kSignature, 8) != 0) throw IoError("not a PNG file: " + path);

    int w = 0, h = 0, bit_depth = 0, color_type = 0, interlace = 0;
    std::vector<uint8_t> idat;
    std::vector<uint8_t> palette;  // rgb triples
    bool seen_iend = false;
    while (!seen_iend) {
        uint8_t lenb[4], type[4];
        f.read(reinterpret_cast<char*>(lenb), 4);
        f.read(reinterpret_cast<char*>(type), 4);
        if (!f) throw IoError("png: truncated chunk header: " + path);
        uint32_t len = (lenb[0] << 24) | (lenb[1] << 16) | (lenb[2] << 8) | lenb[3];
        std::vector<uint8_t> data(len);
        if (len) f.read(reinterpret_cast<char*>(data.data()), len);
        f.ignore(4);  // crc
        if (!f) throw IoError("png: truncated chunk: " + path);
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw IoError("png: bad IHDR");
            w = (data[0] << 24) | (data[1] << 16) | (data[2] << 8) | data[3];
            h = (data[4] << 24) | (data[5] << 16) | (data[6] << 8) | data[7];
            bit_depth = data[8];
            color_type = data[9];
            interlace = data[12];
        } else if (std::memcmp(type, "PLTE", 4) == 0) {
            palette = data;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data.begin(), data.end());
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            seen_iend = true;
        }
    }
    if (w <= 0 || h <= 0) throw IoError("png: bad dimensions: " + path);
    if (bit_depth != 8) throw IoError("png: only 8-bit depth supported: " + path);
    if (interlace != 0) throw IoError("png: interlaced images not supported: " + path);

    int src_ch;
    switch (color_type) {
        case 0: src_ch = 1; break;  // gray
        case 2: src_ch = 3; break;  // rgb
        case 3: src_ch = 1; break;  // palette index
        case 4: src_ch = 2; break;  // gray+alpha
        case 6: src_ch = 4; break;  // rgba
        default: throw IoError("png: unsupported color type: " + path);
    }

    size_t stride = static_cast<size_t>(w) * src_ch;
    std::vector<uint8_t> raw = inflate_bytes(idat, (stride + 1) * h);

    // undo per-row filters in place into `pix`
    std::vector<uint8_t> pix(stride * h);
    int bpp = src_ch;
    for (int y = 0; y < h; ++y) {
        uint8_t filter = raw[y * (stride + 1)];
        const uint8_t* src = raw.data() + y * (stride + 1) + 1;
        uint8_t* cur = pix.data() + y * stride;
        const uint8_t* up = y > 0 ? pix.data() + (y - 1) * stride : nullptr;
        for (size_t i = 0; i < stride; ++i) {
            int a = i >= static_cast<size_t>(bpp) ? cur[i - bpp] : 0;
            int b = up ? up[i] : 0;
            int c = (up && i >= static_cast<size_t>(bpp)) ? up[i - bpp] : 0;
            int v;
            switch (filter) {
                case 0: v = src[i]; break;
                case 1: v = src[i] + a; break;
                case 2: v = src[i] + b; break;
                case 3: v = src[i] + (a + b) / 2; break;
                case 4: v = src[i] + paeth(a, b, c); break;
                default: throw IoError("png: bad filter type: " + path);
            }
            cur[i] = static_cast<uint8_t>(v);
        }
    }

    int out_ch = (color_type == 0 || color_type == 4) ? 1 : 3;
    Image img(w, h, out_ch);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const uint8_t* p = pix.data() + y * stride + static_cast<size_t>(x) * src_ch;
            if (color_type == 3) {
                size_t idx = static_cast<size_t>(p[0]) * 3;
                if (idx + 2 >= palette.size()) throw IoError("png: palette index out of range");
                for (int ch = 0; ch < 3; ++ch) img.at(x, y, ch) = palette[idx + ch] / 255.f;
            } else {
                for (int ch = 0; ch < out_ch; ++ch) img.at(x, y, ch) = p[ch] / 255.f;
            }
        }
    }
    return img;
}

Mask read_png_mask(const std::string& path) {
    Image img = read_png(path);
    Mask m(img.w, img.h);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) m.at(x, y) = img.at(x, y, 0) >= 128.f / 255.f ? 1 : 0;
    return m;
}

}  // namespace ornatry
