#ifndef BV_GEOMETRY_HPP
#define BV_GEOMETRY_HPP

#include <array>
#include <cmath>
#include <vector>

namespace bv {

struct Vec2 {
    double x = 0, y = 0;

    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double dot(Vec2 o) const { return x * o.x + y * o.y; }
    double cross(Vec2 o) const { return x * o.y - y * o.x; }
    double norm() const { return std::sqrt(x * x + y * y); }
    Vec2 normalized() const {
        double n = norm();
        return n > 0 ? Vec2{x / n, y / n} : Vec2{};
    }
};

struct Vec3 {
    double x = 0, y = 0, z = 0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    Vec3 operator-() const { return {-x, -y, -z}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    Vec3 cross(const Vec3& o) const {
        return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
    }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const {
        double n = norm();
        return n > 0 ? Vec3{x / n, y / n, z / n} : Vec3{};
    }
};

// Homogeneous point. w == 0 encodes a point at infinity.
struct Vec4 {
    double x = 0, y = 0, z = 0, w = 1;

    Vec4() = default;
    Vec4(double x_, double y_, double z_, double w_) : x(x_), y(y_), z(z_), w(w_) {}
    explicit Vec4(const Vec3& p, double w_ = 1.0) : x(p.x), y(p.y), z(p.z), w(w_) {}
    Vec3 xyz() const { return {x, y, z}; }
};

// 4x4 matrix, row-major storage, column-vector convention: y = M * x.
struct Mat4 {
    std::array<double, 16> m{};

    static Mat4 identity() {
        Mat4 r;
        r.m = {1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1};
        return r;
    }

    double& at(int r, int c) { return m[r * 4 + c]; }
    double at(int r, int c) const { return m[r * 4 + c]; }

    Mat4 operator*(const Mat4& o) const {
        Mat4 r;
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 4; ++j) {
                double s = 0;
                for (int k = 0; k < 4; ++k) s += at(i, k) * o.at(k, j);
                r.at(i, j) = s;
            }
        return r;
    }

    Vec4 operator*(const Vec4& v) const {
        Vec4 r;
        r.x = m[0] * v.x + m[1] * v.y + m[2] * v.z + m[3] * v.w;
        r.y = m[4] * v.x + m[5] * v.y + m[6] * v.z + m[7] * v.w;
        r.z = m[8] * v.x + m[9] * v.y + m[10] * v.z + m[11] * v.w;
        r.w = m[12] * v.x + m[13] * v.y + m[14] * v.z + m[15] * v.w;
        return r;
    }

    bool finite() const {
        for (double v : m)
            if (!std::isfinite(v)) return false;
        return true;
    }

    double det3() const {
        return at(0, 0) * (at(1, 1) * at(2, 2) - at(1, 2) * at(2, 1)) -
               at(0, 1) * (at(1, 0) * at(2, 2) - at(1, 2) * at(2, 0)) +
               at(0, 2) * (at(1, 0) * at(2, 1) - at(1, 1) * at(2, 0));
    }
};

struct Mat3 {
    std::array<double, 9> m{};

    static Mat3 identity() {
        Mat3 r;
        r.m = {1, 0, 0, 0, 1, 0, 0, 0, 1};
        return r;
    }

    double& at(int r, int c) { return m[r * 3 + c]; }
    double at(int r, int c) const { return m[r * 3 + c]; }

    Mat3 operator*(const Mat3& o) const {
        Mat3 r;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                double s = 0;
                for (int k = 0; k < 3; ++k) s += at(i, k) * o.at(k, j);
                r.at(i, j) = s;
            }
        return r;
    }

    double det() const {
        return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
               m[2] * (m[3] * m[7] - m[4] * m[6]);
    }

    Mat3 inverse() const;

    // Applies the projective map to (x, y, 1) and dehomogenizes.
    Vec2 apply(Vec2 p) const {
        double u = m[0] * p.x + m[1] * p.y + m[2];
        double v = m[3] * p.x + m[4] * p.y + m[5];
        double w = m[6] * p.x + m[7] * p.y + m[8];
        return {u / w, v / w};
    }
};

// Signed polygon area (shoelace); positive for CCW vertex order.
double polygon_signed_area(const std::vector<Vec2>& poly);

// Even-odd point-in-polygon test.
bool point_in_polygon(Vec2 p, const std::vector<Vec2>& poly);

// True when no two non-adjacent edges intersect.
bool polygon_is_simple(const std::vector<Vec2>& poly);

Vec2 polygon_centroid(const std::vector<Vec2>& poly);

// Ear-clipping triangulation of a simple CCW polygon. Returns vertex index triples.
std::vector<std::array<int, 3>> triangulate_polygon(const std::vector<Vec2>& poly);

}  // namespace bv

#endif
