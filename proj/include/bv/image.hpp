#ifndef BV_IMAGE_HPP
#define BV_IMAGE_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <vector>

namespace bv {

// Row-major 2D grid. Row 0 is the top row for image-like data.
template <typename T>
struct Grid {
    int rows = 0, cols = 0;
    std::vector<T> v;

    Grid() = default;
    Grid(int r, int c, T fill = T{}) : rows(r), cols(c), v(size_t(r) * c, fill) {}

    T& at(int r, int c) { return v[size_t(r) * cols + c]; }
    const T& at(int r, int c) const { return v[size_t(r) * cols + c]; }
    bool inside(int r, int c) const { return r >= 0 && r < rows && c >= 0 && c < cols; }
    size_t size() const { return v.size(); }
    bool empty() const { return v.empty(); }
};

// Interleaved RGB image with float channels in [0,1].
struct RgbImage {
    int width = 0, height = 0;
    std::vector<float> pix;  // 3 * width * height, rgb interleaved

    RgbImage() = default;
    RgbImage(int w, int h) : width(w), height(h), pix(size_t(w) * h * 3, 0.f) {}

    float* at(int r, int c) { return &pix[(size_t(r) * width + c) * 3]; }
    const float* at(int r, int c) const { return &pix[(size_t(r) * width + c) * 3]; }
    bool empty() const { return pix.empty(); }
};

// Bilinear sample of one channel at continuous pixel coordinates (x right, y
// down, pixel centers at (c + 0.5, r + 0.5)). Returns NaN outside the image.
inline double bilinear_sample(const float* data, int width, int height, int stride, int chan,
                              double x, double y) {
    double fx = x - 0.5, fy = y - 0.5;
    int x0 = int(std::floor(fx)), y0 = int(std::floor(fy));
    double wx = fx - x0, wy = fy - y0;
    int x1 = x0 + 1, y1 = y0 + 1;
    if (x0 < 0 || y0 < 0 || x1 >= width || y1 >= height) {
        // clamp to edge when only the fractional neighbor is outside
        if (fx >= -0.5 && fy >= -0.5 && fx <= width - 0.5 && fy <= height - 0.5) {
            x0 = std::max(0, std::min(width - 1, x0));
            x1 = std::max(0, std::min(width - 1, x1));
            y0 = std::max(0, std::min(height - 1, y0));
            y1 = std::max(0, std::min(height - 1, y1));
        } else {
            return std::numeric_limits<double>::quiet_NaN();
        }
    }
    auto px = [&](int yy, int xx) -> double {
        return data[(size_t(yy) * width + xx) * stride + chan];
    };
    double a = (1 - wx) * px(y0, x0) + wx * px(y0, x1);
    double b = (1 - wx) * px(y1, x0) + wx * px(y1, x1);
    return (1 - wy) * a + wy * b;
}

inline double bilinear_sample_rgb(const RgbImage& img, int chan, double x, double y) {
    return bilinear_sample(img.pix.data(), img.width, img.height, 3, chan, x, y);
}

struct BBox {
    int min_x = 0, min_y = 0, max_x = 0, max_y = 0;  // inclusive

    int width() const { return max_x - min_x + 1; }
    int height() const { return max_y - min_y + 1; }
};

}  // namespace bv

#endif
