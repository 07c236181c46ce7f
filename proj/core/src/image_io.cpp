#include "crowdkd/image_io.hpp"

#include <jpeglib.h>
#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>
#include <stdexcept>
#include <vector>

namespace crowdkd {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::string& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) throw std::runtime_error("cannot open file: " + path);
    return f;
}

Tensor rgb_rows_to_tensor(const std::vector<std::vector<unsigned char>>& rows, int h, int w) {
    Tensor img({3, h, w});
    for (int y = 0; y < h; ++y) {
        const unsigned char* r = rows[static_cast<std::size_t>(y)].data();
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                img.at(c, y, x) = r[3 * x + c] / 255.0;
            }
        }
    }
    return img;
}

Tensor read_png(const std::string& path) {
    FilePtr f = open_file(path, "rb");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png: allocation failure");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("png: allocation failure");
    }
    std::vector<std::vector<unsigned char>> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw std::runtime_error("png: failed to decode " + path);
    }
    png_init_io(png, f.get());
    png_read_info(png, info);

    const png_uint_32 w = png_get_image_width(png, info);
    const png_uint_32 h = png_get_image_height(png, info);
    const png_byte color = png_get_color_type(png, info);
    const png_byte depth = png_get_bit_depth(png, info);

    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    rows.assign(h, std::vector<unsigned char>(png_get_rowbytes(png, info)));
    std::vector<png_bytep> row_ptrs(h);
    for (png_uint_32 y = 0; y < h; ++y) row_ptrs[y] = rows[y].data();
    png_read_image(png, row_ptrs.data());
    png_destroy_read_struct(&png, &info, nullptr);
    return rgb_rows_to_tensor(rows, static_cast<int>(h), static_cast<int>(w));
}

struct JpegErrorMgr {
    jpeg_error_mgr pub;
    std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    std::longjmp(err->jump, 1);
}

Tensor read_jpeg(const std::string& path) {
    FilePtr f = open_file(path, "rb");
    jpeg_decompress_struct cinfo;
    JpegErrorMgr jerr;
    cinfo.err = jpeg_std_error(&jerr.pub);
    jerr.pub.error_exit = jpeg_error_exit;
    if (setjmp(jerr.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw std::runtime_error("jpeg: failed to decode " + path);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, f.get());
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);

    const int w = static_cast<int>(cinfo.output_width);
    const int h = static_cast<int>(cinfo.output_height);
    std::vector<std::vector<unsigned char>> rows(static_cast<std::size_t>(h),
                                                 std::vector<unsigned char>(static_cast<std::size_t>(w) * 3));
    while (cinfo.output_scanline < cinfo.output_height) {
        unsigned char* rp = rows[cinfo.output_scanline].data();
        jpeg_read_scanlines(&cinfo, &rp, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return rgb_rows_to_tensor(rows, h, w);
}

unsigned char to_byte(double v) {
    const double scaled = std::lround(std::fmin(std::fmax(v, 0.0), 1.0) * 255.0);
    return static_cast<unsigned char>(scaled);
}

void write_png(const std::string& path, const std::vector<std::vector<unsigned char>>& rows, int w, int h,
               int color_type) {
    FilePtr f = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png: allocation failure");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("png: allocation failure");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("png: failed to encode " + path);
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (const auto& row : rows) {
        png_write_row(png, const_cast<png_bytep>(row.data()));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace

Tensor read_image(const std::string& path) {
    FilePtr f = open_file(path, "rb");
    unsigned char magic[8] = {0};
    const std::size_t got = std::fread(magic, 1, sizeof(magic), f.get());
    f.reset();
    static const unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    if (got >= 8 && std::memcmp(magic, png_sig, 8) == 0) return read_png(path);
    if (got >= 2 && magic[0] == 0xff && magic[1] == 0xd8) return read_jpeg(path);
    throw std::runtime_error("unsupported image format (expect PNG or JPEG): " + path);
}

void write_png_rgb(const std::string& path, const Tensor& image) {
    if (image.rank() != 3 || image.dim(0) != 3) throw std::invalid_argument("write_png_rgb: expected {3,H,W}");
    const int h = image.dim(1), w = image.dim(2);
    std::vector<std::vector<unsigned char>> rows(static_cast<std::size_t>(h),
                                                 std::vector<unsigned char>(static_cast<std::size_t>(w) * 3));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                rows[static_cast<std::size_t>(y)][3 * static_cast<std::size_t>(x) + static_cast<std::size_t>(c)] =
                    to_byte(image.at(c, y, x));
            }
        }
    }
    write_png(path, rows, w, h, PNG_COLOR_TYPE_RGB);
}

void write_png_gray(const std::string& path, const Tensor& grid, double vmax) {
    if (grid.rank() != 2) throw std::invalid_argument("write_png_gray: expected {H,W}");
    const int h = grid.dim(0), w = grid.dim(1);
    double scale = vmax;
    if (scale <= 0.0) scale = grid.max();
    if (scale <= 0.0) scale = 1.0;
    std::vector<std::vector<unsigned char>> rows(static_cast<std::size_t>(h),
                                                 std::vector<unsigned char>(static_cast<std::size_t>(w)));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            rows[static_cast<std::size_t>(y)][static_cast<std::size_t>(x)] = to_byte(grid.at(y, x) / scale);
        }
    }
    write_png(path, rows, w, h, PNG_COLOR_TYPE_GRAY);
}

}  // namespace crowdkd
