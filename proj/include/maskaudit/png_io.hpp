#pragma once

#include <cstdio>
#include <csetjmp>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include <fcntl.h>
#include <unistd.h>

#include <png.h>
#include <zlib.h>

#include "maskaudit/error.hpp"
#include "maskaudit/mask.hpp"

namespace maskaudit {

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] inline void png_throw(png_structp, png_const_charp msg) {
    throw UnreadableMask(msg ? msg : "libpng error");
}

inline void png_ignore_warning(png_structp, png_const_charp) {}

} // namespace detail

/// Reads an 8-bit single-channel PNG; any nonzero sample maps to
/// foreground. Other bit depths or color types are refused.
inline BinaryMask load_mask(const std::filesystem::path& path) {
    detail::FilePtr file(std::fopen(path.string().c_str(), "rb"));
    if (!file) {
        throw UnreadableMask("cannot open mask file: " + path.string());
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr,
                                             detail::png_throw, detail::png_ignore_warning);
    if (!png) throw UnreadableMask("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw UnreadableMask("png_create_info_struct failed");
    }
    try {
        png_init_io(png, file.get());
        png_read_info(png, info);

        const png_uint_32 width = png_get_image_width(png, info);
        const png_uint_32 height = png_get_image_height(png, info);
        const int depth = png_get_bit_depth(png, info);
        const int color = png_get_color_type(png, info);
        if (color != PNG_COLOR_TYPE_GRAY) {
            throw UnsupportedDepth("mask must be single-channel grayscale: " + path.string());
        }
        if (depth != 8) {
            if (depth < 8) {
                png_set_expand_gray_1_2_4_to_8(png);
            } else {
                throw UnsupportedDepth("mask must be 8-bit: " + path.string());
            }
        }
        png_read_update_info(png, info);

        BinaryMask mask(static_cast<int>(width), static_cast<int>(height));
        std::vector<png_byte> row(width);
        for (png_uint_32 y = 0; y < height; ++y) {
            png_read_row(png, row.data(), nullptr);
            for (png_uint_32 x = 0; x < width; ++x) {
                if (row[x] != 0) mask.set(static_cast<int>(x), static_cast<int>(y), true);
            }
        }
        png_read_end(png, nullptr);
        png_destroy_read_struct(&png, &info, nullptr);
        return mask;
    } catch (...) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw;
    }
}

namespace detail {

inline void put_be32(std::vector<unsigned char>& out, std::uint32_t v) {
    out.push_back(static_cast<unsigned char>(v >> 24));
    out.push_back(static_cast<unsigned char>(v >> 16));
    out.push_back(static_cast<unsigned char>(v >> 8));
    out.push_back(static_cast<unsigned char>(v));
}

inline void put_chunk(std::vector<unsigned char>& out, const char type[4],
                      const unsigned char* data, std::size_t len) {
    put_be32(out, static_cast<std::uint32_t>(len));
    const std::size_t type_pos = out.size();
    out.insert(out.end(), type, type + 4);
    if (len > 0) out.insert(out.end(), data, data + len);
    std::uint32_t crc = static_cast<std::uint32_t>(
        ::crc32(0L, out.data() + type_pos, static_cast<uInt>(4 + len)));
    put_be32(out, crc);
}

} // namespace detail

/// Writes an 8-bit grayscale PNG, 0 background / 255 foreground. A minimal
/// in-memory encoder with fixed deflate settings: one write syscall per
/// mask and byte-reproducible trees.
inline void store_mask(const BinaryMask& mask, const std::filesystem::path& path) {
    const int w = mask.width();
    const int h = mask.height();

    // Scanlines with filter byte 0.
    std::vector<unsigned char> raw(static_cast<std::size_t>(h) * (w + 1));
    for (int y = 0; y < h; ++y) {
        unsigned char* row = raw.data() + static_cast<std::size_t>(y) * (w + 1);
        row[0] = 0;
        for (int x = 0; x < w; ++x) row[1 + x] = mask.at(x, y) ? 255 : 0;
    }
    // One deflate stream per thread; per-call stream setup costs more than
    // the compression itself on these small rasters.
    struct DeflateStream {
        z_stream zs{};
        bool ready = false;
        ~DeflateStream() {
            if (ready) ::deflateEnd(&zs);
        }
    };
    thread_local DeflateStream ctx;
    if (!ctx.ready) {
        if (::deflateInit2(&ctx.zs, 1, Z_DEFLATED, 15, 8, Z_DEFAULT_STRATEGY) != Z_OK) {
            throw UnreadableMask("deflate init failed for: " + path.string());
        }
        ctx.ready = true;
    } else {
        ::deflateReset(&ctx.zs);
    }
    std::vector<unsigned char> compressed(::deflateBound(&ctx.zs, static_cast<uLong>(raw.size())));
    ctx.zs.next_in = raw.data();
    ctx.zs.avail_in = static_cast<uInt>(raw.size());
    ctx.zs.next_out = compressed.data();
    ctx.zs.avail_out = static_cast<uInt>(compressed.size());
    if (::deflate(&ctx.zs, Z_FINISH) != Z_STREAM_END) {
        throw UnreadableMask("deflate failed for: " + path.string());
    }
    const uLongf compressed_len = ctx.zs.total_out;

    std::vector<unsigned char> out;
    out.reserve(64 + compressed_len);
    static constexpr unsigned char kSignature[8] = {137, 80, 78, 71, 13, 10, 26, 10};
    out.insert(out.end(), kSignature, kSignature + 8);
    unsigned char ihdr[13];
    ihdr[0] = static_cast<unsigned char>(w >> 24);
    ihdr[1] = static_cast<unsigned char>(w >> 16);
    ihdr[2] = static_cast<unsigned char>(w >> 8);
    ihdr[3] = static_cast<unsigned char>(w);
    ihdr[4] = static_cast<unsigned char>(h >> 24);
    ihdr[5] = static_cast<unsigned char>(h >> 16);
    ihdr[6] = static_cast<unsigned char>(h >> 8);
    ihdr[7] = static_cast<unsigned char>(h);
    ihdr[8] = 8;                          // bit depth
    ihdr[9] = 0;                          // grayscale
    ihdr[10] = ihdr[11] = ihdr[12] = 0;   // compression, filter, interlace
    detail::put_chunk(out, "IHDR", ihdr, sizeof(ihdr));
    detail::put_chunk(out, "IDAT", compressed.data(), compressed_len);
    detail::put_chunk(out, "IEND", nullptr, 0);

    const int fd = ::open(path.string().c_str(), O_WRONLY | O_CREAT | O_TRUNC, 0644);
    if (fd < 0) {
        throw UnreadableMask("cannot open mask file for writing: " + path.string());
    }
    const ssize_t written = ::write(fd, out.data(), out.size());
    ::close(fd);
    if (written != static_cast<ssize_t>(out.size())) {
        throw UnreadableMask("short write: " + path.string());
    }
}

/// Interleaved 8-bit RGB raster.
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> data; // 3 * width * height

    RgbImage() = default;
    RgbImage(int w, int h) : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, 0) {}

    std::uint8_t* pixel(int x, int y) {
        return data.data() + (static_cast<std::size_t>(y) * width + x) * 3;
    }
    const std::uint8_t* pixel(int x, int y) const {
        return data.data() + (static_cast<std::size_t>(y) * width + x) * 3;
    }

    friend bool operator==(const RgbImage&, const RgbImage&) = default;
};

/// Element-wise multiplication of a frame with a binary mask: pixels under
/// the mask are kept losslessly, everything else goes black.
inline RgbImage render_masked_frame(const RgbImage& frame, const BinaryMask& mask) {
    if (frame.width != mask.width() || frame.height != mask.height()) {
        throw DimensionMismatch("frame and mask dimensions differ");
    }
    RgbImage out(frame.width, frame.height);
    for (int y = 0; y < frame.height; ++y) {
        for (int x = 0; x < frame.width; ++x) {
            if (!mask.at(x, y)) continue;
            const std::uint8_t* src = frame.pixel(x, y);
            std::uint8_t* dst = out.pixel(x, y);
            dst[0] = src[0];
            dst[1] = src[1];
            dst[2] = src[2];
        }
    }
    return out;
}

} // namespace maskaudit
