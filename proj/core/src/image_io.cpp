#include "cex/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iterator>

#include "cex/error.hpp"

namespace cex {
namespace {

struct ReadCursor {
    std::span<const std::uint8_t> bytes;
    std::size_t offset = 0;
};

void read_callback(png_structp png, png_bytep out, png_size_t length) {
    auto* cursor = static_cast<ReadCursor*>(png_get_io_ptr(png));
    if (cursor->offset + length > cursor->bytes.size()) png_error(png, "truncated PNG data");
    std::memcpy(out, cursor->bytes.data() + cursor->offset, length);
    cursor->offset += length;
}

void write_callback(png_structp png, png_bytep data, png_size_t length) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + length);
}

void flush_callback(png_structp) {}

[[noreturn]] void error_callback(png_structp, png_const_charp message) {
    throw Error(Errc::parse, std::string("PNG: ") + message);
}

void warning_callback(png_structp, png_const_charp) {}

// RAII wrapper for the libpng read/write structs.
class PngReader {
public:
    explicit PngReader(std::span<const std::uint8_t> bytes) : cursor_{bytes} {
        if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
            fail(Errc::parse, "not a PNG stream");
        }
        png_ = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, error_callback, warning_callback);
        info_ = png_create_info_struct(png_);
        png_set_read_fn(png_, &cursor_, read_callback);
    }
    ~PngReader() { png_destroy_read_struct(&png_, &info_, nullptr); }
    PngReader(const PngReader&) = delete;
    PngReader& operator=(const PngReader&) = delete;

    png_structp png() const { return png_; }
    png_infop info() const { return info_; }

private:
    ReadCursor cursor_;
    png_structp png_ = nullptr;
    png_infop info_ = nullptr;
};

class PngWriter {
public:
    PngWriter() {
        png_ = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, error_callback, warning_callback);
        info_ = png_create_info_struct(png_);
        png_set_write_fn(png_, &out_, write_callback, flush_callback);
    }
    ~PngWriter() { png_destroy_write_struct(&png_, &info_); }
    PngWriter(const PngWriter&) = delete;
    PngWriter& operator=(const PngWriter&) = delete;

    png_structp png() const { return png_; }
    png_infop info() const { return info_; }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    std::vector<std::uint8_t> out_;
    png_structp png_ = nullptr;
    png_infop info_ = nullptr;
};

std::vector<std::uint8_t> write_rows(int width, int height, int bit_depth, int color_type,
                                     const std::uint8_t* data, std::size_t row_bytes) {
    PngWriter w;
    png_set_IHDR(w.png(), w.info(), static_cast<png_uint_32>(width), static_cast<png_uint_32>(height),
                 bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(w.png(), w.info());
    if (bit_depth == 16) png_set_swap(w.png());
    for (int y = 0; y < height; ++y) {
        png_write_row(w.png(), const_cast<png_bytep>(data + static_cast<std::size_t>(y) * row_bytes));
    }
    png_write_end(w.png(), nullptr);
    return w.take();
}

}  // namespace

Image decode_png(std::span<const std::uint8_t> bytes) {
    PngReader r(bytes);
    png_read_info(r.png(), r.info());
    const int color_type = png_get_color_type(r.png(), r.info());
    const int bit_depth = png_get_bit_depth(r.png(), r.info());

    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(r.png());
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(r.png());
    if (png_get_valid(r.png(), r.info(), PNG_INFO_tRNS)) png_set_tRNS_to_alpha(r.png());
    if (bit_depth == 16) png_set_strip_16(r.png());
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA) {
        png_set_gray_to_rgb(r.png());
    }
    png_set_strip_alpha(r.png());
    png_read_update_info(r.png(), r.info());

    Image image(static_cast<int>(png_get_image_width(r.png(), r.info())),
                static_cast<int>(png_get_image_height(r.png(), r.info())));
    if (png_get_rowbytes(r.png(), r.info()) != static_cast<std::size_t>(image.width) * 3) {
        fail(Errc::parse, "PNG: unexpected row layout after conversion");
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(image.height));
    for (int y = 0; y < image.height; ++y) {
        rows[static_cast<std::size_t>(y)] = image.pixels.data() + static_cast<std::size_t>(y) * image.width * 3;
    }
    png_read_image(r.png(), rows.data());
    png_read_end(r.png(), nullptr);
    return image;
}

std::vector<std::uint8_t> encode_png(const Image& image) {
    return write_rows(image.width, image.height, 8, PNG_COLOR_TYPE_RGB, image.pixels.data(),
                      static_cast<std::size_t>(image.width) * 3);
}

Image read_png(const std::string& path) { return decode_png(read_file(path)); }

void write_png(const Image& image, const std::string& path) { write_file(path, encode_png(image)); }

Mask read_mask_png(const std::string& path) {
    const Image rgb = read_png(path);
    Mask mask(rgb.width, rgb.height);
    for (std::size_t i = 0; i < mask.bits.size(); ++i) mask.bits[i] = rgb.pixels[i * 3] >= 128 ? 1 : 0;
    return mask;
}

void write_mask_png(const Mask& mask, const std::string& path) {
    std::vector<std::uint8_t> gray(mask.bits.size());
    for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = mask.bits[i] ? 255 : 0;
    write_file(path, write_rows(mask.width, mask.height, 8, PNG_COLOR_TYPE_GRAY, gray.data(),
                                static_cast<std::size_t>(mask.width)));
}

std::vector<std::uint8_t> encode_png_gray16(int width, int height, std::span<const std::uint16_t> values) {
    if (values.size() != static_cast<std::size_t>(width) * height) {
        fail(Errc::shape, "gray16 buffer does not match dimensions");
    }
    // libpng expects big-endian samples; png_set_swap handles little-endian hosts.
    return write_rows(width, height, 16, PNG_COLOR_TYPE_GRAY,
                      reinterpret_cast<const std::uint8_t*>(values.data()),
                      static_cast<std::size_t>(width) * 2);
}

std::vector<std::uint16_t> decode_png_gray16(std::span<const std::uint8_t> bytes, int& width, int& height) {
    PngReader r(bytes);
    png_read_info(r.png(), r.info());
    if (png_get_color_type(r.png(), r.info()) != PNG_COLOR_TYPE_GRAY ||
        png_get_bit_depth(r.png(), r.info()) != 16) {
        fail(Errc::parse, "expected a 16-bit grayscale PNG");
    }
    png_set_swap(r.png());
    png_read_update_info(r.png(), r.info());
    width = static_cast<int>(png_get_image_width(r.png(), r.info()));
    height = static_cast<int>(png_get_image_height(r.png(), r.info()));
    std::vector<std::uint16_t> values(static_cast<std::size_t>(width) * height);
    std::vector<png_bytep> rows(static_cast<std::size_t>(height));
    for (int y = 0; y < height; ++y) {
        rows[static_cast<std::size_t>(y)] = reinterpret_cast<png_bytep>(values.data() + static_cast<std::size_t>(y) * width);
    }
    png_read_image(r.png(), rows.data());
    png_read_end(r.png(), nullptr);
    return values;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::not_found, "cannot open " + path);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::io, "cannot write " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(Errc::io, "short write to " + path);
}

void write_text(const std::string& path, const std::string& text) {
    write_file(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

Image resample_nearest(const Image& image, int width, int height) {
    if (image.width == width && image.height == height) return image;
    Image out(width, height);
    for (int y = 0; y < height; ++y) {
        const int sy = std::min(image.height - 1, static_cast<int>((static_cast<long>(y) * image.height) / height));
        for (int x = 0; x < width; ++x) {
            const int sx = std::min(image.width - 1, static_cast<int>((static_cast<long>(x) * image.width) / width));
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = image.at(sx, sy, c);
        }
    }
    return out;
}

}  // namespace cex
