#include "stitch/png_io.hpp"

#include <png.h>

#include <cstring>
#include <fstream>

#include "stitch/errors.hpp"

namespace stitch {

namespace {

struct MemWriter {
    std::vector<uint8_t>* out;
};

void write_cb(png_structp png, png_bytep data, png_size_t len) {
    auto* w = static_cast<MemWriter*>(png_get_io_ptr(png));
    w->out->insert(w->out->end(), data, data + len);
}

void flush_cb(png_structp) {}

struct MemReader {
    const uint8_t* data;
    size_t size;
    size_t pos;
};

void read_cb(png_structp png, png_bytep data, png_size_t len) {
    auto* r = static_cast<MemReader*>(png_get_io_ptr(png));
    if (r->pos + len > r->size) {
        png_error(png, "read past end of buffer");
    }
    std::memcpy(data, r->data + r->pos, len);
    r->pos += len;
}

}  // namespace

std::vector<uint8_t> encode_png(const Raster& img) {
    if (img.empty()) throw ContractError("encode_png: empty raster");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw FormatError("encode_png: png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw FormatError("encode_png: png_create_info_struct failed");
    }

    std::vector<uint8_t> out;
    MemWriter writer{&out};

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw FormatError("encode_png: libpng error");
    }

    png_set_write_fn(png, &writer, write_cb, flush_cb);
    // Fixed compression settings keep the byte stream reproducible.
    png_set_compression_level(png, 6);
    png_set_filter(png, 0, PNG_FILTER_NONE);
    png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<png_bytep> rows(img.height);
    for (int r = 0; r < img.height; ++r) {
        rows[r] = const_cast<png_bytep>(img.px(r, 0));
    }
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

Raster decode_png(const std::vector<uint8_t>& bytes) {
    if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
        throw FormatError("decode_png: not a PNG stream");
    }
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw FormatError("decode_png: png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw FormatError("decode_png: png_create_info_struct failed");
    }

    MemReader reader{bytes.data(), bytes.size(), 0};
    Raster img;

    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("decode_png: corrupt or truncated PNG");
    }

    png_set_read_fn(png, &reader, read_cb);
    png_read_info(png, info);

    // Normalise every supported colour layout to 8-bit RGB.
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));
    if (png_get_channels(png, info) != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("decode_png: unsupported channel layout");
    }

    img = Raster(height, width);
    std::vector<png_bytep> rows(height);
    for (int r = 0; r < height; ++r) rows[r] = img.px(r, 0);
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_png(const std::filesystem::path& path, const Raster& img) {
    const std::vector<uint8_t> bytes = encode_png(img);
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw FormatError("write_png: cannot open " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw FormatError("write_png: short write to " + path.string());
}

Raster read_png(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("read_png: cannot open " + path.string());
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_png(bytes);
}

}  // namespace stitch
