#include "bv/render.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bv/errors.hpp"
#include "bv/io.hpp"

namespace bv {

double DepthMap::metric(int r, int c) const {
    double v = at(r, c);
    if (v >= kNoHit) return std::numeric_limits<double>::quiet_NaN();
    return 2.0 * near_clip * far_clip / (far_clip + near_clip - v * (far_clip - near_clip));
}

namespace {

struct ScreenVertex {
    double x, y;  // pixel coordinates, y down
    double z;     // normalized depth
};

// Rasterizes one screen triangle into the z-buffer with min composition.
// Interior test uses edge functions with the top-left rule; NDC depth is
// affine in screen space for a planar triangle, so barycentric interpolation
// of the vertex depths is perspective-correct.
void raster_triangle(ScreenVertex v0, ScreenVertex v1, ScreenVertex v2, DepthMap& buf,
                     Grid<int32_t>* ids, int32_t tri_id) {
    double area2 = (v1.x - v0.x) * (v2.y - v0.y) - (v1.y - v0.y) * (v2.x - v0.x);
    if (area2 == 0) return;
    if (area2 < 0) {
        std::swap(v1, v2);
        area2 = -area2;
    }

    auto edge = [](const ScreenVertex& a, const ScreenVertex& b, double px, double py) {
        return (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x);
    };
    auto topleft = [](const ScreenVertex& a, const ScreenVertex& b) {
        double dx = b.x - a.x, dy = b.y - a.y;
        return dy < 0 || (dy == 0 && dx > 0);
    };
    bool tl01 = topleft(v0, v1), tl12 = topleft(v1, v2), tl20 = topleft(v2, v0);

    double min_x = std::min({v0.x, v1.x, v2.x}), max_x = std::max({v0.x, v1.x, v2.x});
    double min_y = std::min({v0.y, v1.y, v2.y}), max_y = std::max({v0.y, v1.y, v2.y});
    int c0 = std::max(0, int(std::ceil(min_x - 0.5)));
    int c1 = std::min(buf.width - 1, int(std::floor(max_x - 0.5)));
    int r0 = std::max(0, int(std::ceil(min_y - 0.5)));
    int r1 = std::min(buf.height - 1, int(std::floor(max_y - 0.5)));

    for (int r = r0; r <= r1; ++r) {
        double py = r + 0.5;
        for (int c = c0; c <= c1; ++c) {
            double px = c + 0.5;
            double e01 = edge(v0, v1, px, py);
            double e12 = edge(v1, v2, px, py);
            double e20 = edge(v2, v0, px, py);
            bool in = (e01 > 0 || (e01 == 0 && tl01)) && (e12 > 0 || (e12 == 0 && tl12)) &&
                      (e20 > 0 || (e20 == 0 && tl20));
            if (!in) continue;
            double z = (e12 * v0.z + e20 * v1.z + e01 * v2.z) / area2;
            if (z >= DepthMap::kNoHit) continue;  // beyond the far plane
            if (z < -1.0) z = -1.0;
            double& slot = buf.at(r, c);
            if (z < slot) {
                slot = z;
                if (ids) ids->at(r, c) = tri_id;
            }
        }
    }
}

void render_triangle(const Vec3& a, const Vec3& b, const Vec3& c, const CameraView& view,
                     DepthMap& buf, Grid<int32_t>* ids, int32_t tri_id) {
    Vec3 eye[3] = {view.world_to_eye(a), view.world_to_eye(b), view.world_to_eye(c)};

    // Clip against the near plane (keep z_eye <= -near) so w stays positive.
    double plane = -view.near_clip;
    Vec3 poly[4];
    int n = 0;
    for (int i = 0; i < 3; ++i) {
        const Vec3& p = eye[i];
        const Vec3& q = eye[(i + 1) % 3];
        bool pin = p.z <= plane, qin = q.z <= plane;
        if (pin) poly[n++] = p;
        if (pin != qin) {
            double t = (plane - p.z) / (q.z - p.z);
            poly[n++] = p + (q - p) * t;
        }
    }
    if (n < 3) return;

    ScreenVertex sv[4];
    for (int i = 0; i < n; ++i) {
        Vec4 clip = view.proj * Vec4(poly[i]);
        double inv_w = 1.0 / clip.w;  // w >= near after clipping
        Vec3 ndc{clip.x * inv_w, clip.y * inv_w, clip.z * inv_w};
        Vec2 px = ndc_to_pixel(ndc, view);
        // snap to a 1/256 px grid: edge functions of snapped coordinates are
        // exact in doubles, so shared edges classify consistently and the
        // top-left rule assigns every boundary pixel exactly once
        sv[i] = {std::round(px.x * 256.0) / 256.0, std::round(px.y * 256.0) / 256.0, ndc.z};
    }
    for (int i = 1; i + 1 < n; ++i) raster_triangle(sv[0], sv[i], sv[i + 1], buf, ids, tri_id);
}

}  // namespace

DepthMap render_depth(const TriangleMesh& mesh, const CameraView& view, Grid<int32_t>* tri_ids) {
    DepthMap buf(view.width, view.height, view.near_clip, view.far_clip);
    if (tri_ids) *tri_ids = Grid<int32_t>(view.height, view.width, -1);
    for (size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto& tri = mesh.triangles[t];
        render_triangle(mesh.vertices[size_t(tri[0])], mesh.vertices[size_t(tri[1])],
                        mesh.vertices[size_t(tri[2])], view, buf, tri_ids, int32_t(t));
    }
    return buf;
}

DepthMap render_face_depth(const Face& face, const CameraView& view) {
    DepthMap buf(view.width, view.height, view.near_clip, view.far_clip);
    const auto& loop = face.loop;
    int n = int(loop.size());
    if (n < 3) return buf;

    if (n <= 4) {
        for (int i = 1; i + 1 < n; ++i)
            render_triangle(loop[0], loop[size_t(i)], loop[size_t(i + 1)], view, buf, nullptr, 0);
        return buf;
    }
    // general polygon: triangulate in the face plane basis
    Vec3 e1 = (loop[1] - loop[0]).normalized();
    Vec3 e2 = face.normal.cross(e1);
    std::vector<Vec2> plane(loop.size());
    for (size_t i = 0; i < loop.size(); ++i) {
        Vec3 d = loop[i] - loop[0];
        plane[i] = {d.dot(e1), d.dot(e2)};
    }
    for (const auto& tri : triangulate_polygon(plane))
        render_triangle(loop[size_t(tri[0])], loop[size_t(tri[1])], loop[size_t(tri[2])], view,
                        buf, nullptr, 0);
    return buf;
}

void pixel_ray(const CameraView& view, double px, double py, Vec3& origin, Vec3& dir) {
    double x_ndc = 2.0 * px / view.width - 1.0;
    double y_ndc = 1.0 - 2.0 * py / view.height;
    // invert the projective x/y map at the z_eye = -1 slice
    double x_e = (x_ndc + view.proj.at(0, 2)) / view.proj.at(0, 0);
    double y_e = (y_ndc + view.proj.at(1, 2)) / view.proj.at(1, 1);
    // direction scaled so the ray parameter is metric eye depth
    Vec3 d_eye{x_e, y_e, -1.0};
    const Mat4& v = view.view;
    dir = {v.at(0, 0) * d_eye.x + v.at(1, 0) * d_eye.y + v.at(2, 0) * d_eye.z,
           v.at(0, 1) * d_eye.x + v.at(1, 1) * d_eye.y + v.at(2, 1) * d_eye.z,
           v.at(0, 2) * d_eye.x + v.at(1, 2) * d_eye.y + v.at(2, 2) * d_eye.z};
    origin = view.camera_center();
}

bool ray_triangle_intersect(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b,
                            const Vec3& c, double& t) {
    const double eps = 1e-12;
    Vec3 e1 = b - a, e2 = c - a;
    Vec3 h = dir.cross(e2);
    double det = e1.dot(h);
    if (std::abs(det) < eps) return false;
    double f = 1.0 / det;
    Vec3 s = origin - a;
    double u = f * s.dot(h);
    if (u < 0.0 || u > 1.0) return false;
    Vec3 q = s.cross(e1);
    double v = f * dir.dot(q);
    if (v < 0.0 || u + v > 1.0) return false;
    double tt = f * e2.dot(q);
    if (tt <= eps) return false;
    t = tt;
    return true;
}

std::optional<double> raycast_depth(const TriangleMesh& mesh, const CameraView& view, double px,
                                    double py) {
    Vec3 origin, dir;
    pixel_ray(view, px, py, origin, dir);
    double best = std::numeric_limits<double>::infinity();
    for (const auto& tri : mesh.triangles) {
        double t;
        if (ray_triangle_intersect(origin, dir, mesh.vertices[size_t(tri[0])],
                                   mesh.vertices[size_t(tri[1])], mesh.vertices[size_t(tri[2])],
                                   t))
            best = std::min(best, t);
    }
    if (!std::isfinite(best)) return std::nullopt;
    return best;
}

void save_depth_pfm(const std::filesystem::path& path, const DepthMap& d) {
    Grid<float> g(d.height, d.width);
    for (size_t i = 0; i < d.z.size(); ++i) g.v[i] = float(d.z[i]);
    write_pfm(path, g);
}

DepthMap load_depth_pfm(const std::filesystem::path& path, double near_clip, double far_clip) {
    Grid<float> g = read_pfm(path);
    DepthMap d(g.cols, g.rows, near_clip, far_clip);
    for (size_t i = 0; i < g.v.size(); ++i) d.z[i] = double(g.v[i]);
    return d;
}

HeightGrid rasterize_dsm(const TriangleMesh& mesh, double cell, double margin) {
    if (mesh.empty()) throw EmptyGrid();
    double min_x = mesh.vertices[0].x, max_x = min_x, min_y = mesh.vertices[0].y, max_y = min_y;
    for (const Vec3& v : mesh.vertices) {
        min_x = std::min(min_x, v.x);
        max_x = std::max(max_x, v.x);
        min_y = std::min(min_y, v.y);
        max_y = std::max(max_y, v.y);
    }
    min_x -= margin;
    min_y -= margin;
    max_x += margin;
    max_y += margin;

    HeightGrid g;
    g.origin_x = min_x;
    g.origin_y = min_y;
    g.cell = cell;
    int cols = std::max(1, int(std::ceil((max_x - min_x) / cell)));
    int rows = std::max(1, int(std::ceil((max_y - min_y) / cell)));
    g.z = Grid<float>(rows, cols, std::numeric_limits<float>::quiet_NaN());

    for (const auto& tri : mesh.triangles) {
        Vec3 a = mesh.vertices[size_t(tri[0])];
        Vec3 b = mesh.vertices[size_t(tri[1])];
        Vec3 c = mesh.vertices[size_t(tri[2])];
        double area2 = (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x);
        if (std::abs(area2) < 1e-12) continue;  // vertical faces have no plan area

        double tmin_x = std::min({a.x, b.x, c.x}), tmax_x = std::max({a.x, b.x, c.x});
        double tmin_y = std::min({a.y, b.y, c.y}), tmax_y = std::max({a.y, b.y, c.y});
        int c0 = std::max(0, int(std::floor((tmin_x - g.origin_x) / cell - 0.5)));
        int c1 = std::min(cols - 1, int(std::ceil((tmax_x - g.origin_x) / cell - 0.5)));
        int r0 = std::max(0, int(std::floor((tmin_y - g.origin_y) / cell - 0.5)));
        int r1 = std::min(rows - 1, int(std::ceil((tmax_y - g.origin_y) / cell - 0.5)));
        for (int r = r0; r <= r1; ++r) {
            double py = g.center_y(r);
            for (int ccol = c0; ccol <= c1; ++ccol) {
                double px = g.center_x(ccol);
                double w0 = (b.x - a.x) * (py - a.y) - (b.y - a.y) * (px - a.x);
                double w1 = (c.x - b.x) * (py - b.y) - (c.y - b.y) * (px - b.x);
                double w2 = (a.x - c.x) * (py - c.y) - (a.y - c.y) * (px - c.x);
                bool in = area2 > 0 ? (w0 >= 0 && w1 >= 0 && w2 >= 0)
                                    : (w0 <= 0 && w1 <= 0 && w2 <= 0);
                if (!in) continue;
                double z = (w1 * a.z + w2 * b.z + w0 * c.z) / area2;
                float& slot = g.z.at(r, ccol);
                if (std::isnan(slot) || z > slot) slot = float(z);
            }
        }
    }
    return g;
}

}  // namespace bv
