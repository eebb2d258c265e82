#include "bv/patch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "bv/errors.hpp"

namespace bv {

FaceProjection project_face(const Face& face, const CameraView& view) {
    FaceProjection fp;
    fp.face_id = face.id;
    fp.view_id = view.id;
    bool in_front = true;
    for (const Vec3& v : face.loop) {
        Vec3 eye = view.world_to_eye(v);
        if (eye.z > -view.near_clip) in_front = false;
    }
    // backface cull: the face must present its outward side to the camera
    Vec3 center{0, 0, 0};
    for (const Vec3& v : face.loop) center = center + v;
    center = center * (1.0 / double(face.loop.size()));
    if (face.normal.dot(view.camera_center() - center) <= 0) in_front = false;
    if (!in_front) return fp;  // not projectable; area 0, out of frustum

    double min_x = 1e300, max_x = -1e300, min_y = 1e300, max_y = -1e300;
    for (const Vec3& v : face.loop) {
        ScreenPoint sp = project_point(view, v);
        Vec2 px = ndc_to_pixel(sp.ndc, view);
        fp.pixels.push_back(px);
        min_x = std::min(min_x, px.x);
        max_x = std::max(max_x, px.x);
        min_y = std::min(min_y, px.y);
        max_y = std::max(max_y, px.y);
    }
    fp.area_px2 = std::abs(polygon_signed_area(fp.pixels));
    fp.in_frustum = max_x > 0 && min_x < view.width && max_y > 0 && min_y < view.height;
    return fp;
}

Homography Homography::inverse() const {
    Homography out;
    out.h = h.inverse();
    double s = out.h.m[8];
    if (std::abs(s) > 1e-300)
        for (double& v : out.h.m) v /= s;
    return out;
}

namespace {

// Cyclic Jacobi eigen decomposition of a symmetric matrix; returns the
// eigenvector of the smallest eigenvalue.
std::vector<double> smallest_eigenvector(std::vector<double> a, int n) {
    std::vector<double> v(size_t(n) * n, 0.0);
    for (int i = 0; i < n; ++i) v[size_t(i) * n + i] = 1.0;

    for (int sweep = 0; sweep < 60; ++sweep) {
        double off = 0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += a[size_t(p) * n + q] * a[size_t(p) * n + q];
        if (off < 1e-28) break;
        for (int p = 0; p < n; ++p) {
            for (int q = p + 1; q < n; ++q) {
                double apq = a[size_t(p) * n + q];
                if (std::abs(apq) < 1e-300) continue;
                double app = a[size_t(p) * n + p], aqq = a[size_t(q) * n + q];
                double theta = 0.5 * (aqq - app) / apq;
                double t = (theta >= 0 ? 1.0 : -1.0) /
                           (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                double c = 1.0 / std::sqrt(t * t + 1.0);
                double s = t * c;
                for (int k = 0; k < n; ++k) {
                    double akp = a[size_t(k) * n + p], akq = a[size_t(k) * n + q];
                    a[size_t(k) * n + p] = c * akp - s * akq;
                    a[size_t(k) * n + q] = s * akp + c * akq;
                }
                for (int k = 0; k < n; ++k) {
                    double apk = a[size_t(p) * n + k], aqk = a[size_t(q) * n + k];
                    a[size_t(p) * n + k] = c * apk - s * aqk;
                    a[size_t(q) * n + k] = s * apk + c * aqk;
                }
                for (int k = 0; k < n; ++k) {
                    double vkp = v[size_t(k) * n + p], vkq = v[size_t(k) * n + q];
                    v[size_t(k) * n + p] = c * vkp - s * vkq;
                    v[size_t(k) * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    int best = 0;
    for (int i = 1; i < n; ++i)
        if (a[size_t(i) * n + i] < a[size_t(best) * n + best]) best = i;
    std::vector<double> out(size_t(n), 0.0);
    for (int i = 0; i < n; ++i) out[size_t(i)] = v[size_t(i) * n + best];
    return out;
}

struct NormXform {
    double scale = 1, tx = 0, ty = 0;

    Vec2 apply(Vec2 p) const { return {(p.x - tx) * scale, (p.y - ty) * scale}; }
};

NormXform hartley_norm(const std::vector<Vec2>& pts) {
    NormXform n;
    double cx = 0, cy = 0;
    for (const Vec2& p : pts) {
        cx += p.x;
        cy += p.y;
    }
    cx /= double(pts.size());
    cy /= double(pts.size());
    double mean_d = 0;
    for (const Vec2& p : pts) mean_d += std::hypot(p.x - cx, p.y - cy);
    mean_d /= double(pts.size());
    n.tx = cx;
    n.ty = cy;
    n.scale = mean_d > 1e-300 ? std::sqrt(2.0) / mean_d : 1.0;
    return n;
}

bool points_collinear(const std::vector<Vec2>& pts, double tol) {
    for (size_t i = 0; i < pts.size(); ++i)
        for (size_t j = i + 1; j < pts.size(); ++j)
            for (size_t k = j + 1; k < pts.size(); ++k)
                if (std::abs((pts[j] - pts[i]).cross(pts[k] - pts[i])) > tol) return false;
    return true;
}

}  // namespace

Homography dlt_homography(const std::vector<Vec2>& src, const std::vector<Vec2>& dst) {
    if (src.size() != dst.size() || src.size() < 4)
        throw DegenerateConfiguration("homography needs >= 4 correspondences");
    if (points_collinear(src, 1e-9) || points_collinear(dst, 1e-9))
        throw DegenerateConfiguration("homography correspondences are collinear");

    NormXform ns = hartley_norm(src), nd = hartley_norm(dst);

    // rows of A^T A accumulated directly (A is 2n x 9)
    std::vector<double> ata(81, 0.0);
    auto accumulate = [&](const std::array<double, 9>& row) {
        for (int i = 0; i < 9; ++i)
            for (int j = 0; j < 9; ++j) ata[size_t(i) * 9 + j] += row[size_t(i)] * row[size_t(j)];
    };
    for (size_t i = 0; i < src.size(); ++i) {
        Vec2 s = ns.apply(src[i]), d = nd.apply(dst[i]);
        accumulate({s.x, s.y, 1, 0, 0, 0, -d.x * s.x, -d.x * s.y, -d.x});
        accumulate({0, 0, 0, s.x, s.y, 1, -d.y * s.x, -d.y * s.y, -d.y});
    }
    std::vector<double> h9 = smallest_eigenvector(std::move(ata), 9);

    Mat3 hn;
    for (int i = 0; i < 9; ++i) hn.m[size_t(i)] = h9[size_t(i)];
    // denormalize: H = T_dst^-1 * Hn * T_src
    Mat3 ts, td_inv;
    ts.m = {ns.scale, 0, -ns.scale * ns.tx, 0, ns.scale, -ns.scale * ns.ty, 0, 0, 1};
    td_inv.m = {1.0 / nd.scale, 0, nd.tx, 0, 1.0 / nd.scale, nd.ty, 0, 0, 1};
    Mat3 h = td_inv * hn * ts;

    if (std::abs(h.det()) < 1e-12)
        throw DegenerateConfiguration("homography is singular");
    Homography out;
    out.h = h;
    if (std::abs(h.m[8]) > 1e-300)
        for (int i = 0; i < 9; ++i) out.h.m[size_t(i)] = h.m[size_t(i)] / h.m[8];
    return out;
}

RectPlan plan_rectification(const Face& face, double gsd, int max_side) {
    RectPlan p;
    p.origin = face.loop[0];
    p.e1 = (face.loop[1] - face.loop[0]).normalized();
    p.e2 = face.normal.cross(p.e1);

    p.umin = p.umax = 0;
    p.vmin = p.vmax = 0;
    for (const Vec3& v : face.loop) {
        Vec3 d = v - p.origin;
        double u = d.dot(p.e1), w = d.dot(p.e2);
        p.umin = std::min(p.umin, u);
        p.umax = std::max(p.umax, u);
        p.vmin = std::min(p.vmin, w);
        p.vmax = std::max(p.vmax, w);
    }

    double eu = p.umax - p.umin, ev = p.vmax - p.vmin;
    p.gsd = gsd;
    double side = std::max(eu, ev) / gsd;
    if (side > max_side) p.gsd = std::max(eu, ev) / max_side;
    p.width = std::max(1, int(std::ceil(eu / p.gsd - 1e-9)));
    p.height = std::max(1, int(std::ceil(ev / p.gsd - 1e-9)));

    p.corners3d = {p.origin + p.e1 * p.umin + p.e2 * p.vmax,   // TL
                   p.origin + p.e1 * p.umax + p.e2 * p.vmax,   // TR
                   p.origin + p.e1 * p.umax + p.e2 * p.vmin,   // BR
                   p.origin + p.e1 * p.umin + p.e2 * p.vmin};  // BL
    return p;
}

Homography compute_homography(const Face& face, const CameraView& view, const RectPlan& plan) {
    (void)face;  // the plan already carries the face's frame and corners
    std::vector<Vec2> img, rect;
    double w = (plan.umax - plan.umin) / plan.gsd;
    double h = (plan.vmax - plan.vmin) / plan.gsd;
    const Vec2 rect_pts[4] = {{0, 0}, {w, 0}, {w, h}, {0, h}};
    for (int i = 0; i < 4; ++i) {
        ScreenPoint sp = project_point(view, plan.corners3d[size_t(i)]);
        img.push_back(ndc_to_pixel(sp.ndc, view));
        rect.push_back(rect_pts[i]);
    }
    return dlt_homography(img, rect);
}

Homography compute_homography(const Face& face, const CameraView& view, double gsd) {
    return compute_homography(face, view, plan_rectification(face, gsd));
}

RectifiedPatch rectify_patch(const RgbImage& color, const DepthMap& depth, const Homography& h,
                             int out_width, int out_height) {
    Homography inv = h.inverse();
    RectifiedPatch out;
    out.color = RgbImage(out_width, out_height);
    out.color_valid = Grid<uint8_t>(out_height, out_width, 0);
    out.depth_m = Grid<double>(out_height, out_width, std::numeric_limits<double>::quiet_NaN());

    // metric conversion happens before resampling
    Grid<double> metric(depth.height, depth.width);
    for (int r = 0; r < depth.height; ++r)
        for (int c = 0; c < depth.width; ++c)
            metric.at(r, c) = depth.hit(r, c) ? depth.metric(r, c)
                                              : std::numeric_limits<double>::quiet_NaN();

    auto sample_metric = [&](double x, double y) -> double {
        double fx = x - 0.5, fy = y - 0.5;
        int x0 = int(std::floor(fx)), y0 = int(std::floor(fy));
        double wx = fx - x0, wy = fy - y0;
        if (x0 < 0 || y0 < 0 || x0 + 1 >= metric.cols || y0 + 1 >= metric.rows) {
            if (fx < -0.5 || fy < -0.5 || fx > metric.cols - 0.5 || fy > metric.rows - 0.5)
                return std::numeric_limits<double>::quiet_NaN();
            x0 = std::max(0, std::min(metric.cols - 2, x0));
            y0 = std::max(0, std::min(metric.rows - 2, y0));
            wx = std::min(1.0, std::max(0.0, fx - x0));
            wy = std::min(1.0, std::max(0.0, fy - y0));
        }
        double a = (1 - wx) * metric.at(y0, x0) + wx * metric.at(y0, x0 + 1);
        double b = (1 - wx) * metric.at(y0 + 1, x0) + wx * metric.at(y0 + 1, x0 + 1);
        return (1 - wy) * a + wy * b;  // NaN taps poison the sample
    };

    for (int r = 0; r < out_height; ++r) {
        for (int c = 0; c < out_width; ++c) {
            Vec2 src = inv.apply({c + 0.5, r + 0.5});
            float* dst = out.color.at(r, c);
            bool valid = true;
            for (int ch = 0; ch < 3; ++ch) {
                double v = bilinear_sample_rgb(color, ch, src.x, src.y);
                if (std::isnan(v)) {
                    valid = false;
                    v = 0;
                }
                dst[ch] = float(v);
            }
            out.color_valid.at(r, c) = valid ? 1 : 0;
            out.depth_m.at(r, c) = sample_metric(src.x, src.y);
        }
    }
    return out;
}

double bilinear_corners(const std::array<double, 4>& corners, double s, double t) {
    // corners: TL, TR, BR, BL; s right, t down
    double top = (1 - s) * corners[0] + s * corners[1];
    double bottom = (1 - s) * corners[3] + s * corners[2];
    return (1 - t) * top + t * bottom;
}

Grid<double> interpolate_face_depth(const std::array<double, 4>& corner_depths, int width,
                                    int height) {
    Grid<double> g(height, width);
    for (int r = 0; r < height; ++r) {
        double t = (r + 0.5) / height;
        for (int c = 0; c < width; ++c) {
            double s = (c + 0.5) / width;
            g.at(r, c) = bilinear_corners(corner_depths, s, t);
        }
    }
    return g;
}

Grid<uint8_t> occlusion_mask(const Grid<double>& expected, const Grid<double>& rendered,
                             double threshold_m) {
    if (expected.rows != rendered.rows || expected.cols != rendered.cols)
        throw DimensionMismatch("occlusion_mask: expected " + std::to_string(expected.rows) + "x" +
                                std::to_string(expected.cols) + " vs rendered " +
                                std::to_string(rendered.rows) + "x" +
                                std::to_string(rendered.cols));
    Grid<uint8_t> mask(expected.rows, expected.cols, 0);
    for (size_t i = 0; i < mask.v.size(); ++i) {
        double rend = rendered.v[i];
        bool occluded = std::isnan(rend) || (expected.v[i] - rend > threshold_m);
        mask.v[i] = occluded ? 0 : 1;
    }
    return mask;
}

std::optional<BBox> visible_bbox(const Grid<uint8_t>& mask) {
    BBox b{mask.cols, mask.rows, -1, -1};
    for (int r = 0; r < mask.rows; ++r)
        for (int c = 0; c < mask.cols; ++c)
            if (mask.at(r, c)) {
                b.min_x = std::min(b.min_x, c);
                b.min_y = std::min(b.min_y, r);
                b.max_x = std::max(b.max_x, c);
                b.max_y = std::max(b.max_y, r);
            }
    if (b.max_x < 0) return std::nullopt;
    return b;
}

SampleImage assemble_sample(const PatchSample& patch, int target) {
    if (!patch.bbox) throw PatchTooSmall("patch has no visible pixels");
    const BBox& b = *patch.bbox;
    if (b.width() < 8 || b.height() < 8)
        throw PatchTooSmall("visible bbox " + std::to_string(b.width()) + "x" +
                            std::to_string(b.height()) + " is below the 8 px minimum");

    int cw = b.width(), ch = b.height();
    // per-patch min-max depth over visible pixels
    double dmin = std::numeric_limits<double>::infinity(), dmax = -dmin;
    for (int r = b.min_y; r <= b.max_y; ++r)
        for (int c = b.min_x; c <= b.max_x; ++c)
            if (patch.mask.at(r, c)) {
                double d = patch.rendered_depth.at(r, c);
                if (std::isnan(d)) continue;
                dmin = std::min(dmin, d);
                dmax = std::max(dmax, d);
            }
    double scale = (dmax > dmin) ? 1.0 / (dmax - dmin) : 0.0;  // constant patch -> all zeros

    // cropped 4-channel buffer
    std::vector<float> crop(size_t(4) * ch * cw, 0.f);
    auto cr = [&](int chn, int r, int c) -> float& {
        return crop[(size_t(chn) * ch + r) * cw + c];
    };
    for (int r = 0; r < ch; ++r) {
        for (int c = 0; c < cw; ++c) {
            const float* px = patch.color.at(b.min_y + r, b.min_x + c);
            cr(0, r, c) = px[0];
            cr(1, r, c) = px[1];
            cr(2, r, c) = px[2];
            if (patch.mask.at(b.min_y + r, b.min_x + c)) {
                double d = patch.rendered_depth.at(b.min_y + r, b.min_x + c);
                cr(3, r, c) = std::isnan(d) ? 0.f : float((d - dmin) * scale);
            }
        }
    }

    SampleImage out;
    out.size = target;
    out.chw.assign(size_t(4) * target * target, 0.f);
    for (int chn = 0; chn < 4; ++chn) {
        const float* src = &crop[size_t(chn) * ch * cw];
        for (int r = 0; r < target; ++r) {
            double sy = (r + 0.5) * double(ch) / target;
            for (int c = 0; c < target; ++c) {
                double sx = (c + 0.5) * double(cw) / target;
                double v = bilinear_sample(src, cw, ch, 1, 0, sx, sy);
                out.chw[(size_t(chn) * target + r) * target + c] = std::isnan(v) ? 0.f : float(v);
            }
        }
    }
    return out;
}

PatchSample extract_patch(const Face& face, const CameraView& view, const RgbImage& color,
                          const DepthMap& scene_depth, double gsd, double occlusion_threshold_m,
                          int max_side) {
    PatchSample s;
    s.building_id = face.building_id;
    s.face_id = face.id;
    s.view_id = view.id;
    s.kind = face.kind;

    FaceProjection proj = project_face(face, view);
    s.projected_area_px2 = proj.area_px2;
    if (!proj.in_frustum) return s;  // empty sample, no bbox

    RectPlan plan = plan_rectification(face, gsd, max_side);
    Homography h = compute_homography(face, view, plan);
    RectifiedPatch rect = rectify_patch(color, scene_depth, h, plan.width, plan.height);

    std::array<double, 4> corner_depths;
    for (int i = 0; i < 4; ++i)
        corner_depths[size_t(i)] = -view.world_to_eye(plan.corners3d[size_t(i)]).z;
    Grid<double> expected = interpolate_face_depth(corner_depths, plan.width, plan.height);
    Grid<uint8_t> occ = occlusion_mask(expected, rect.depth_m, occlusion_threshold_m);

    // interior mask: the face polygon in rectified pixel coordinates
    std::vector<Vec2> poly_rect;
    for (const Vec3& v : face.loop) {
        Vec3 d = v - plan.origin;
        double u = d.dot(plan.e1), w = d.dot(plan.e2);
        poly_rect.push_back({(u - plan.umin) / plan.gsd, (plan.vmax - w) / plan.gsd});
    }

    s.mask = Grid<uint8_t>(plan.height, plan.width, 0);
    long interior = 0, visible = 0;
    for (int r = 0; r < plan.height; ++r) {
        for (int c = 0; c < plan.width; ++c) {
            if (!point_in_polygon({c + 0.5, r + 0.5}, poly_rect)) continue;
            ++interior;
            if (occ.at(r, c) && rect.color_valid.at(r, c)) {
                s.mask.at(r, c) = 1;
                ++visible;
            }
        }
    }
    s.color = std::move(rect.color);
    s.rendered_depth = std::move(rect.depth_m);
    s.expected_depth = std::move(expected);
    s.bbox = visible_bbox(s.mask);
    s.visible_area_px2 = interior > 0 ? proj.area_px2 * double(visible) / double(interior) : 0.0;
    return s;
}

}  // namespace bv
