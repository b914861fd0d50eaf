#include "udgan/image.hpp"

#include <jpeglib.h>
#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>

namespace udgan {

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

Image read_png_file(const std::filesystem::path& path, FILE* fp) {
    png_structp png =
        png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw DataError("png: allocation failure");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw DataError("png: allocation failure");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw DataError("png: failed to decode " + path.string());
    }
    png_init_io(png, fp);
    png_read_info(png, info);

    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    if (png_get_interlace_type(png, info) != PNG_INTERLACE_NONE) {
        png_set_interlace_handling(png);
    }
    png_read_update_info(png, info);

    Image img;
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.rgb.resize(static_cast<std::size_t>(img.height) * img.width * 3);
    std::vector<png_bytep> rows(img.height);
    for (int y = 0; y < img.height; ++y) {
        rows[y] = img.rgb.data() + static_cast<std::size_t>(y) * img.width * 3;
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

struct JpegErrorMgr {
    jpeg_error_mgr pub;
    std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* mgr = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    std::longjmp(mgr->jump, 1);
}

Image read_jpeg_file(const std::filesystem::path& path, FILE* fp) {
    jpeg_decompress_struct cinfo;
    JpegErrorMgr jerr;
    cinfo.err = jpeg_std_error(&jerr.pub);
    jerr.pub.error_exit = jpeg_error_exit;
    if (setjmp(jerr.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw DataError("jpeg: failed to decode " + path.string());
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, fp);
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);

    Image img;
    img.height = static_cast<int>(cinfo.output_height);
    img.width = static_cast<int>(cinfo.output_width);
    img.rgb.resize(static_cast<std::size_t>(img.height) * img.width * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = img.rgb.data() +
                       static_cast<std::size_t>(cinfo.output_scanline) *
                           img.width * 3;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return img;
}

}  // namespace

Image read_image(const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.string().c_str(), "rb"));
    if (!fp) throw DataError("cannot open image " + path.string());
    unsigned char magic[4] = {0, 0, 0, 0};
    if (std::fread(magic, 1, 4, fp.get()) != 4) {
        throw DataError("image too short: " + path.string());
    }
    std::rewind(fp.get());
    if (magic[0] == 0x89 && magic[1] == 'P') {
        return read_png_file(path, fp.get());
    }
    if (magic[0] == 0xFF && magic[1] == 0xD8) {
        return read_jpeg_file(path, fp.get());
    }
    throw DataError("unsupported image format: " + path.string());
}

void write_png(const std::filesystem::path& path, const Image& img) {
    if (img.height <= 0 || img.width <= 0 ||
        img.rgb.size() !=
            static_cast<std::size_t>(img.height) * img.width * 3) {
        throw DataError("write_png: malformed image buffer");
    }
    FilePtr fp(std::fopen(path.string().c_str(), "wb"));
    if (!fp) throw DataError("cannot write image " + path.string());
    png_structp png =
        png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw DataError("png: allocation failure");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw DataError("png: allocation failure");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw DataError("png: failed to encode " + path.string());
    }
    png_init_io(png, fp.get());
    // fixed settings keep the encoder byte-deterministic
    png_set_compression_level(png, 6);
    png_set_filter(png, 0, PNG_FILTER_NONE);
    png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.height; ++y) {
        png_write_row(png, const_cast<png_bytep>(
                               img.rgb.data() +
                               static_cast<std::size_t>(y) * img.width * 3));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Image resize_bilinear(const Image& img, int out_h, int out_w) {
    if (out_h <= 0 || out_w <= 0) throw DataError("resize: bad target size");
    if (img.height == out_h && img.width == out_w) return img;
    Image out;
    out.height = out_h;
    out.width = out_w;
    out.rgb.resize(static_cast<std::size_t>(out_h) * out_w * 3);
    const double sy = static_cast<double>(img.height) / out_h;
    const double sx = static_cast<double>(img.width) / out_w;
    for (int y = 0; y < out_h; ++y) {
        double fy = (y + 0.5) * sy - 0.5;
        fy = std::min(std::max(fy, 0.0), static_cast<double>(img.height - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < out_w; ++x) {
            double fx = (x + 0.5) * sx - 0.5;
            fx = std::min(std::max(fx, 0.0),
                          static_cast<double>(img.width - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const double wx = fx - x0;
            for (int c = 0; c < 3; ++c) {
                const double v =
                    (1 - wy) * ((1 - wx) * img.at(y0, x0, c) +
                                wx * img.at(y0, x1, c)) +
                    wy * ((1 - wx) * img.at(y1, x0, c) +
                          wx * img.at(y1, x1, c));
                out.at(y, x, c) =
                    static_cast<std::uint8_t>(std::lround(v));
            }
        }
    }
    return out;
}

Tensor image_to_tensor(const Image& img, double mean, double stddev) {
    std::vector<double> data(static_cast<std::size_t>(3) * img.height *
                             img.width);
    const std::int64_t plane =
        static_cast<std::int64_t>(img.height) * img.width;
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                const double v = img.at(y, x, c) / 255.0;
                data[c * plane + static_cast<std::int64_t>(y) * img.width + x] =
                    (v - mean) / stddev;
            }
        }
    }
    return Tensor::from_vector({3, img.height, img.width}, std::move(data));
}

Image tensor_to_image(const Tensor& chw, double mean, double stddev) {
    if (chw.ndim() != 3 || chw.dim(0) != 3) {
        throw ShapeError("tensor_to_image: expects [3,H,W]");
    }
    Image img;
    img.height = static_cast<int>(chw.dim(1));
    img.width = static_cast<int>(chw.dim(2));
    img.rgb.resize(static_cast<std::size_t>(img.height) * img.width * 3);
    const std::int64_t plane =
        static_cast<std::int64_t>(img.height) * img.width;
    for (int c = 0; c < 3; ++c) {
        for (std::int64_t i = 0; i < plane; ++i) {
            double v = chw.data()[c * plane + i] * stddev + mean;
            v = std::min(std::max(v, 0.0), 1.0);
            img.rgb[static_cast<std::size_t>(i) * 3 + c] =
                static_cast<std::uint8_t>(std::lround(v * 255.0));
        }
    }
    return img;
}

Image make_montage(const std::vector<Image>& tiles, int rows, int cols) {
    if (tiles.empty() || rows * cols < static_cast<int>(tiles.size())) {
        throw DataError("make_montage: grid too small for tile count");
    }
    const int th = tiles[0].height, tw = tiles[0].width;
    for (const auto& t : tiles) {
        if (t.height != th || t.width != tw) {
            throw DataError("make_montage: tiles must share one size");
        }
    }
    const int gutter = 2;
    Image out;
    out.height = rows * th + (rows + 1) * gutter;
    out.width = cols * tw + (cols + 1) * gutter;
    out.rgb.assign(static_cast<std::size_t>(out.height) * out.width * 3, 32);
    for (std::size_t i = 0; i < tiles.size(); ++i) {
        const int r = static_cast<int>(i) / cols;
        const int c = static_cast<int>(i) % cols;
        const int oy = gutter + r * (th + gutter);
        const int ox = gutter + c * (tw + gutter);
        for (int y = 0; y < th; ++y) {
            for (int x = 0; x < tw; ++x) {
                for (int ch = 0; ch < 3; ++ch) {
                    out.at(oy + y, ox + x, ch) = tiles[i].at(y, x, ch);
                }
            }
        }
    }
    return out;
}

}  // namespace udgan
