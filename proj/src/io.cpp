#include "bv/io.hpp"

#include <png.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "bv/errors.hpp"
#include "bv/rng.hpp"

namespace bv {

void write_pfm(const std::filesystem::path& path, const Grid<float>& g) {
    std::ostringstream out;
    out << "Pf\n" << g.cols << " " << g.rows << "\n-1.0\n";
    // PFM stores rows bottom-up
    for (int r = g.rows - 1; r >= 0; --r)
        out.write(reinterpret_cast<const char*>(&g.v[size_t(r) * g.cols]),
                  std::streamsize(sizeof(float)) * g.cols);
    atomic_write(path, out.str());
}

Grid<float> read_pfm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingInput("cannot open PFM file: " + path.string());
    std::string magic;
    in >> magic;
    if (magic != "Pf") throw ParseError("not a grayscale PFM file: " + path.string());
    int cols = 0, rows = 0;
    double scale = 0;
    in >> cols >> rows >> scale;
    if (cols <= 0 || rows <= 0) throw ParseError("bad PFM dimensions in " + path.string());
    if (scale >= 0) throw ParseError("big-endian PFM not supported: " + path.string());
    in.get();  // single whitespace after the header
    Grid<float> g(rows, cols);
    for (int r = rows - 1; r >= 0; --r) {
        in.read(reinterpret_cast<char*>(&g.v[size_t(r) * cols]),
                std::streamsize(sizeof(float)) * cols);
        if (!in) throw ParseError("truncated PFM data in " + path.string());
    }
    return g;
}

namespace {

struct PngWriteCtx {
    std::string bytes;
};

void png_write_cb(png_structp png, png_bytep data, png_size_t n) {
    auto* ctx = static_cast<PngWriteCtx*>(png_get_io_ptr(png));
    ctx->bytes.append(reinterpret_cast<char*>(data), n);
}

void png_flush_cb(png_structp) {}

}  // namespace

void write_png(const std::filesystem::path& path, const RgbImage& img) {
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    PngWriteCtx ctx;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("libpng error while writing " + path.string());
    }
    png_set_write_fn(png, &ctx, png_write_cb, png_flush_cb);
    png_set_IHDR(png, info, png_uint_32(img.width), png_uint_32(img.height), 8,
                 PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<png_byte> row(size_t(img.width) * 3);
    for (int r = 0; r < img.height; ++r) {
        const float* src = img.at(r, 0);
        for (int i = 0; i < img.width * 3; ++i) {
            float v = src[i];
            v = v < 0.f ? 0.f : (v > 1.f ? 1.f : v);
            row[size_t(i)] = png_byte(std::lround(v * 255.f));
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    atomic_write(path, ctx.bytes);
}

namespace {

struct PngReadCtx {
    const std::string* bytes;
    size_t pos;
};

void png_read_cb(png_structp png, png_bytep out, png_size_t n) {
    auto* ctx = static_cast<PngReadCtx*>(png_get_io_ptr(png));
    if (ctx->pos + n > ctx->bytes->size()) png_error(png, "png: unexpected end of data");
    std::memcpy(out, ctx->bytes->data() + ctx->pos, n);
    ctx->pos += n;
}

}  // namespace

RgbImage read_png(const std::filesystem::path& path) {
    std::string bytes = read_text_file(path);
    if (bytes.size() < 8 || png_sig_cmp(reinterpret_cast<png_const_bytep>(bytes.data()), 0, 8))
        throw ParseError("not a PNG file: " + path.string());

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw std::runtime_error("png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw std::runtime_error("png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ParseError("libpng error while reading " + path.string());
    }
    PngReadCtx ctx{&bytes, 0};
    png_set_read_fn(png, &ctx, png_read_cb);
    png_read_info(png, info);

    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    int color = png_get_color_type(png, info);
    int depth = png_get_bit_depth(png, info);

    if (depth == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
    png_read_update_info(png, info);

    RgbImage img{int(w), int(h)};
    std::vector<png_byte> row(size_t(w) * 3);
    for (png_uint_32 r = 0; r < h; ++r) {
        png_read_row(png, row.data(), nullptr);
        float* dst = img.at(int(r), 0);
        for (size_t i = 0; i < size_t(w) * 3; ++i) dst[i] = float(row[i]) / 255.f;
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingInput("cannot open file: " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, const std::string& content) {
    atomic_write(path, content);
}

void atomic_write(const std::filesystem::path& path, const std::string& bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write file: " + tmp.string());
        out.write(bytes.data(), std::streamsize(bytes.size()));
        if (!out) throw std::runtime_error("short write to " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

std::optional<uint64_t> file_content_hash(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    uint64_t h = 0xcbf29ce484222325ull;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof(buf));
        std::streamsize n = in.gcount();
        if (n > 0) h = fnv1a(buf, size_t(n), h);
    }
    return h;
}

}  // namespace bv
