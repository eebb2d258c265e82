#include "bv/camera.hpp"

#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "bv/errors.hpp"
#include "bv/io.hpp"

namespace bv {

using nlohmann::json;

Vec2 BrownDistortion::distort(Vec2 pixel) const {
    double x = (pixel.x - cx) / f;
    double y = (pixel.y - cy) / f;
    double r2 = x * x + y * y;
    double radial = 1.0 + r2 * (k1 + r2 * (k2 + r2 * k3));
    double xd = x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x);
    double yd = y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y;
    return {cx + f * xd, cy + f * yd};
}

Vec3 CameraView::camera_center() const {
    // V = [R | t] with t = -R*C, so C = -R^T * t.
    Vec3 t{view.at(0, 3), view.at(1, 3), view.at(2, 3)};
    return {-(view.at(0, 0) * t.x + view.at(1, 0) * t.y + view.at(2, 0) * t.z),
            -(view.at(0, 1) * t.x + view.at(1, 1) * t.y + view.at(2, 1) * t.z),
            -(view.at(0, 2) * t.x + view.at(1, 2) * t.y + view.at(2, 2) * t.z)};
}

Vec3 CameraView::view_direction() const {
    // eye space looks down -Z; the world direction is -R^T * (0,0,1) = -third row of R
    return Vec3{-view.at(2, 0), -view.at(2, 1), -view.at(2, 2)}.normalized();
}

Vec3 CameraView::world_to_eye(const Vec3& p) const {
    Vec4 e = view * Vec4(p);
    return e.xyz();
}

ScreenPoint project_point(const CameraView& view, const Vec3& x) {
    return project_point(view, Vec4(x));
}

ScreenPoint project_point(const CameraView& view, const Vec4& x) {
    Vec4 clip = view.proj * (view.view * x);
    if (std::abs(clip.w) < 1e-12) throw PointAtCameraPlane();
    Vec3 ndc{clip.x / clip.w, clip.y / clip.w, clip.z / clip.w};
    bool in = clip.w > 0 && std::abs(ndc.x) <= 1 && std::abs(ndc.y) <= 1 && std::abs(ndc.z) <= 1;
    return {ndc, in};
}

Vec2 ndc_to_pixel(const Vec3& ndc, const CameraView& view) {
    return {(ndc.x + 1.0) * 0.5 * view.width, (1.0 - ndc.y) * 0.5 * view.height};
}

double depth_to_metric(double z_ndc, const CameraView& view) {
    if (z_ndc < -1.0 || z_ndc > 1.0)
        throw DomainError("normalized depth outside [-1,1]: " + std::to_string(z_ndc));
    double n = view.near_clip, f = view.far_clip;
    return 2.0 * n * f / (f + n - z_ndc * (f - n));
}

RgbImage undistort_image(const RgbImage& image, const BrownDistortion& d) {
    if (d.is_identity()) return image;
    RgbImage out(image.width, image.height);
    for (int r = 0; r < image.height; ++r) {
        for (int c = 0; c < image.width; ++c) {
            Vec2 src = d.distort({c + 0.5, r + 0.5});
            float* dst = out.at(r, c);
            for (int ch = 0; ch < 3; ++ch) {
                double v = bilinear_sample_rgb(image, ch, src.x, src.y);
                dst[ch] = std::isnan(v) ? 0.f : float(v);
            }
        }
    }
    return out;
}

Mat4 projection_from_intrinsics(double fx, double fy, double cx, double cy, int width,
                                int height, double near_clip, double far_clip) {
    double n = near_clip, f = far_clip;
    Mat4 p;  // zero-initialized
    p.at(0, 0) = 2.0 * fx / width;
    p.at(0, 2) = 1.0 - 2.0 * cx / width;
    p.at(1, 1) = 2.0 * fy / height;
    p.at(1, 2) = 2.0 * cy / height - 1.0;
    p.at(2, 2) = -(f + n) / (f - n);
    p.at(2, 3) = -2.0 * f * n / (f - n);
    p.at(3, 2) = -1.0;
    return p;
}

Mat4 view_from_pose(const std::array<double, 9>& rotation, const Vec3& center) {
    Mat4 v = Mat4::identity();
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) v.at(r, c) = rotation[size_t(r) * 3 + c];
    v.at(0, 3) = -(rotation[0] * center.x + rotation[1] * center.y + rotation[2] * center.z);
    v.at(1, 3) = -(rotation[3] * center.x + rotation[4] * center.y + rotation[5] * center.z);
    v.at(2, 3) = -(rotation[6] * center.x + rotation[7] * center.y + rotation[8] * center.z);
    return v;
}

namespace {

void check_rotation_orthonormal(const std::array<double, 9>& r, const std::string& ctx) {
    // R * R^T must equal I within 1e-6 per entry
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            double s = 0;
            for (int k = 0; k < 3; ++k) s += r[size_t(i) * 3 + k] * r[size_t(j) * 3 + k];
            double expect = (i == j) ? 1.0 : 0.0;
            if (std::abs(s - expect) > 1e-6)
                throw ValidationError(ctx + ": rotation is not orthonormal (R*R^T deviates by " +
                                      std::to_string(std::abs(s - expect)) + ")");
        }
    }
}

CameraView view_from_fields(const std::string& id, int width, int height, double fx, double fy,
                            double cx, double cy, const std::array<double, 9>& rot,
                            const Vec3& center, const BrownDistortion& dist,
                            const std::string& angle_class, double near_clip, double far_clip,
                            const std::string& ctx) {
    if (width <= 0 || height <= 0)
        throw ValidationError(ctx + ": image dimensions must be positive");
    if (!(fx > 0) || !(fy > 0) || !std::isfinite(cx) || !std::isfinite(cy))
        throw ValidationError(ctx + ": intrinsics must be positive and finite");
    if (!(near_clip > 0) || !(far_clip > near_clip))
        throw ValidationError(ctx + ": requires 0 < near < far");
    check_rotation_orthonormal(rot, ctx);

    CameraView v;
    v.id = id;
    v.width = width;
    v.height = height;
    v.near_clip = near_clip;
    v.far_clip = far_clip;
    v.view = view_from_pose(rot, center);
    v.proj = projection_from_intrinsics(fx, fy, cx, cy, width, height, near_clip, far_clip);
    v.distortion = dist;
    if (angle_class == "nadir")
        v.angle_class = AngleClass::Nadir;
    else if (angle_class == "oblique")
        v.angle_class = AngleClass::Oblique;
    else
        throw ValidationError(ctx + ": angle_class must be \"nadir\" or \"oblique\", got \"" +
                              angle_class + "\"");
    return v;
}

}  // namespace

std::vector<CameraView> load_poses(const std::filesystem::path& path, double near_clip,
                                   double far_clip) {
    json doc;
    try {
        doc = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw ParseError("pose file " + path.string() + ": " + e.what());
    }
    if (!doc.is_array()) throw ParseError("pose file " + path.string() + ": expected an array");

    std::vector<CameraView> views;
    views.reserve(doc.size());
    for (size_t i = 0; i < doc.size(); ++i) {
        const json& e = doc[i];
        std::string ctx = path.string() + " entry " + std::to_string(i);
        try {
            std::array<double, 9> rot{};
            const json& rj = e.at("rotation");
            if (!rj.is_array() || rj.size() != 9)
                throw ParseError(ctx + ": rotation must be 9 floats");
            for (size_t k = 0; k < 9; ++k) rot[k] = rj[k].get<double>();
            const json& cj = e.at("center");
            if (!cj.is_array() || cj.size() != 3)
                throw ParseError(ctx + ": center must be 3 floats");
            Vec3 center{cj[0].get<double>(), cj[1].get<double>(), cj[2].get<double>()};

            BrownDistortion dist;
            dist.k1 = e.value("k1", 0.0);
            dist.k2 = e.value("k2", 0.0);
            dist.k3 = e.value("k3", 0.0);
            dist.p1 = e.value("p1", 0.0);
            dist.p2 = e.value("p2", 0.0);
            dist.cx = e.at("cx").get<double>();
            dist.cy = e.at("cy").get<double>();
            dist.f = e.at("fx").get<double>();

            views.push_back(view_from_fields(
                e.at("id").get<std::string>(), e.at("width").get<int>(), e.at("height").get<int>(),
                e.at("fx").get<double>(), e.at("fy").get<double>(), e.at("cx").get<double>(),
                e.at("cy").get<double>(), rot, center, dist,
                e.at("angle_class").get<std::string>(), near_clip, far_clip, ctx));
        } catch (const json::exception& ex) {
            throw ParseError(ctx + ": " + ex.what());
        }
    }
    return views;
}

namespace {

// Tiny forgiving scanner for the XML subset: extracts the text content of
// <tag>...</tag> occurrences in order, scoped within [begin, end).
std::vector<std::pair<size_t, std::string>> find_elements(const std::string& s,
                                                          const std::string& tag, size_t begin,
                                                          size_t end) {
    std::vector<std::pair<size_t, std::string>> out;
    std::string open = "<" + tag + ">";
    std::string close = "</" + tag + ">";
    size_t pos = begin;
    while (true) {
        size_t a = s.find(open, pos);
        if (a == std::string::npos || a >= end) break;
        size_t b = s.find(close, a);
        if (b == std::string::npos || b > end) break;
        out.emplace_back(a, s.substr(a + open.size(), b - a - open.size()));
        pos = b + close.size();
    }
    return out;
}

double xml_number(const std::string& block, const std::string& tag, const std::string& ctx) {
    auto es = find_elements(block, tag, 0, block.size());
    if (es.empty()) throw ParseError(ctx + ": missing <" + tag + ">");
    try {
        return std::stod(es[0].second);
    } catch (...) {
        throw ParseError(ctx + ": bad number in <" + tag + ">");
    }
}

double xml_number_or(const std::string& block, const std::string& tag, double fallback) {
    auto es = find_elements(block, tag, 0, block.size());
    if (es.empty()) return fallback;
    return std::stod(es[0].second);
}

}  // namespace

std::vector<CameraView> load_poses_xml(const std::filesystem::path& path, double near_clip,
                                       double far_clip) {
    std::string xml = read_text_file(path);
    std::vector<CameraView> views;

    auto groups = find_elements(xml, "Photogroup", 0, xml.size());
    for (auto& [gpos, group] : groups) {
        std::string gctx = path.string();
        int width = int(xml_number(group, "Width", gctx));
        int height = int(xml_number(group, "Height", gctx));
        double f = xml_number(group, "FocalLengthPixels", gctx);
        double cx = xml_number(group, "PrincipalPointX", gctx);
        double cy = xml_number(group, "PrincipalPointY", gctx);
        BrownDistortion dist;
        dist.k1 = xml_number_or(group, "K1", 0.0);
        dist.k2 = xml_number_or(group, "K2", 0.0);
        dist.k3 = xml_number_or(group, "K3", 0.0);
        dist.p1 = xml_number_or(group, "P1", 0.0);
        dist.p2 = xml_number_or(group, "P2", 0.0);
        dist.cx = cx;
        dist.cy = cy;
        dist.f = f;
        auto classes = find_elements(group, "AngleClass", 0, group.size());
        std::string angle_class = classes.empty() ? "oblique" : classes[0].second;

        auto photos = find_elements(group, "Photo", 0, group.size());
        for (auto& [ppos, photo] : photos) {
            auto ids = find_elements(photo, "Id", 0, photo.size());
            std::string id = ids.empty() ? "photo" : ids[0].second;
            std::string ctx = path.string() + " photo " + id;
            std::array<double, 9> rot{};
            static const char* kRot[9] = {"M_00", "M_01", "M_02", "M_10", "M_11",
                                          "M_12", "M_20", "M_21", "M_22"};
            for (int k = 0; k < 9; ++k) rot[size_t(k)] = xml_number(photo, kRot[k], ctx);
            Vec3 center{xml_number(photo, "x", ctx), xml_number(photo, "y", ctx),
                        xml_number(photo, "z", ctx)};
            views.push_back(view_from_fields(id, width, height, f, f, cx, cy, rot, center, dist,
                                             angle_class, near_clip, far_clip, ctx));
        }
    }
    return views;
}

}  // namespace bv
