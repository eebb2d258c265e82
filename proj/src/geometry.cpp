#include "bv/geometry.hpp"

#include <cmath>
#include <stdexcept>

namespace bv {

Mat3 Mat3::inverse() const {
    double d = det();
    if (std::abs(d) < 1e-300) throw std::runtime_error("Mat3::inverse: singular matrix");
    Mat3 r;
    r.m[0] = (m[4] * m[8] - m[5] * m[7]) / d;
    r.m[1] = (m[2] * m[7] - m[1] * m[8]) / d;
    r.m[2] = (m[1] * m[5] - m[2] * m[4]) / d;
    r.m[3] = (m[5] * m[6] - m[3] * m[8]) / d;
    r.m[4] = (m[0] * m[8] - m[2] * m[6]) / d;
    r.m[5] = (m[2] * m[3] - m[0] * m[5]) / d;
    r.m[6] = (m[3] * m[7] - m[4] * m[6]) / d;
    r.m[7] = (m[1] * m[6] - m[0] * m[7]) / d;
    r.m[8] = (m[0] * m[4] - m[1] * m[3]) / d;
    return r;
}

double polygon_signed_area(const std::vector<Vec2>& poly) {
    double a = 0;
    size_t n = poly.size();
    for (size_t i = 0; i < n; ++i) {
        const Vec2& p = poly[i];
        const Vec2& q = poly[(i + 1) % n];
        a += p.x * q.y - q.x * p.y;
    }
    return 0.5 * a;
}

bool point_in_polygon(Vec2 p, const std::vector<Vec2>& poly) {
    bool inside = false;
    size_t n = poly.size();
    for (size_t i = 0, j = n - 1; i < n; j = i++) {
        const Vec2& a = poly[i];
        const Vec2& b = poly[j];
        if ((a.y > p.y) != (b.y > p.y)) {
            double x = (b.x - a.x) * (p.y - a.y) / (b.y - a.y) + a.x;
            if (p.x < x) inside = !inside;
        }
    }
    return inside;
}

namespace {

bool segments_intersect(Vec2 a, Vec2 b, Vec2 c, Vec2 d) {
    auto orient = [](Vec2 p, Vec2 q, Vec2 r) {
        double v = (q - p).cross(r - p);
        if (v > 1e-12) return 1;
        if (v < -1e-12) return -1;
        return 0;
    };
    int o1 = orient(a, b, c), o2 = orient(a, b, d);
    int o3 = orient(c, d, a), o4 = orient(c, d, b);
    if (o1 != o2 && o3 != o4) return true;
    auto on_seg = [](Vec2 p, Vec2 q, Vec2 r) {
        return std::min(p.x, q.x) - 1e-12 <= r.x && r.x <= std::max(p.x, q.x) + 1e-12 &&
               std::min(p.y, q.y) - 1e-12 <= r.y && r.y <= std::max(p.y, q.y) + 1e-12;
    };
    if (o1 == 0 && on_seg(a, b, c)) return true;
    if (o2 == 0 && on_seg(a, b, d)) return true;
    if (o3 == 0 && on_seg(c, d, a)) return true;
    if (o4 == 0 && on_seg(c, d, b)) return true;
    return false;
}

}  // namespace

bool polygon_is_simple(const std::vector<Vec2>& poly) {
    size_t n = poly.size();
    if (n < 3) return false;
    for (size_t i = 0; i < n; ++i) {
        for (size_t j = i + 1; j < n; ++j) {
            // skip adjacent edges (they share a vertex)
            if (j == i || (j + 1) % n == i || (i + 1) % n == j) continue;
            if (segments_intersect(poly[i], poly[(i + 1) % n], poly[j], poly[(j + 1) % n]))
                return false;
        }
    }
    return true;
}

Vec2 polygon_centroid(const std::vector<Vec2>& poly) {
    double a = 0, cx = 0, cy = 0;
    size_t n = poly.size();
    for (size_t i = 0; i < n; ++i) {
        const Vec2& p = poly[i];
        const Vec2& q = poly[(i + 1) % n];
        double w = p.x * q.y - q.x * p.y;
        a += w;
        cx += (p.x + q.x) * w;
        cy += (p.y + q.y) * w;
    }
    if (std::abs(a) < 1e-300) {
        // degenerate: fall back to vertex mean
        Vec2 m{};
        for (const Vec2& p : poly) m = m + p;
        return m * (1.0 / double(n));
    }
    return {cx / (3 * a), cy / (3 * a)};
}

std::vector<std::array<int, 3>> triangulate_polygon(const std::vector<Vec2>& poly) {
    int n = int(poly.size());
    std::vector<std::array<int, 3>> tris;
    if (n < 3) return tris;
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;

    auto is_convex = [&](int a, int b, int c) {
        return (poly[b] - poly[a]).cross(poly[c] - poly[b]) > 1e-12;
    };
    auto in_tri = [&](Vec2 p, int a, int b, int c) {
        double d1 = (poly[b] - poly[a]).cross(p - poly[a]);
        double d2 = (poly[c] - poly[b]).cross(p - poly[b]);
        double d3 = (poly[a] - poly[c]).cross(p - poly[c]);
        return d1 >= -1e-12 && d2 >= -1e-12 && d3 >= -1e-12;
    };

    int guard = 0;
    while (idx.size() > 3 && guard++ < 10000) {
        bool clipped = false;
        int m = int(idx.size());
        for (int i = 0; i < m; ++i) {
            int a = idx[(i + m - 1) % m], b = idx[i], c = idx[(i + 1) % m];
            if (!is_convex(a, b, c)) continue;
            bool ear = true;
            for (int v : idx) {
                if (v == a || v == b || v == c) continue;
                if (in_tri(poly[v], a, b, c)) {
                    ear = false;
                    break;
                }
            }
            if (ear) {
                tris.push_back({a, b, c});
                idx.erase(idx.begin() + i);
                clipped = true;
                break;
            }
        }
        if (!clipped) break;  // numerically stuck; fall through with the remainder fan
    }
    if (idx.size() == 3) {
        tris.push_back({idx[0], idx[1], idx[2]});
    } else if (idx.size() > 3) {
        for (size_t i = 1; i + 1 < idx.size(); ++i) tris.push_back({idx[0], idx[int(i)], idx[int(i + 1)]});
    }
    return tris;
}

}  // namespace bv
