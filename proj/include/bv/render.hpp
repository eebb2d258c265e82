#ifndef BV_RENDER_HPP
#define BV_RENDER_HPP

#include <filesystem>
#include <optional>

#include "bv/camera.hpp"
#include "bv/image.hpp"
#include "bv/lod1.hpp"
#include "bv/mesh.hpp"

namespace bv {

// Per-pixel normalized depth; +1 marks no coverage. Non-sentinel values lie
// in [-1, 1).
struct DepthMap {
    static constexpr double kNoHit = 1.0;

    int width = 0, height = 0;
    std::vector<double> z;
    double near_clip = 1.0, far_clip = 5000.0;

    DepthMap() = default;
    DepthMap(int w, int h, double n, double f)
        : width(w), height(h), z(size_t(w) * h, kNoHit), near_clip(n), far_clip(f) {}

    double at(int r, int c) const { return z[size_t(r) * width + c]; }
    double& at(int r, int c) { return z[size_t(r) * width + c]; }
    bool hit(int r, int c) const { return at(r, c) < kNoHit; }

    // Metric (eye-space) depth in meters; NaN where there is no hit.
    double metric(int r, int c) const;
};

// Z-buffer rasterization: per pixel the minimum normalized depth over all
// covering triangles. Triangles are clipped at the near plane; culled past
// the far plane; pixel ownership follows the top-left fill rule. The id
// buffer, when given, receives the winning triangle index (-1 none).
DepthMap render_depth(const TriangleMesh& mesh, const CameraView& view,
                      Grid<int32_t>* tri_ids = nullptr);

// Renders one planar face alone (the "expected" layer of the occlusion test).
DepthMap render_face_depth(const Face& face, const CameraView& view);

// Independent ray-casting oracle: nearest ray-triangle intersection along the
// pixel center's view ray, returned as metric eye depth.
std::optional<double> raycast_depth(const TriangleMesh& mesh, const CameraView& view,
                                    double px, double py);

// World-space ray through a pixel: origin is the camera center; direction is
// scaled so the ray parameter equals metric eye depth.
void pixel_ray(const CameraView& view, double px, double py, Vec3& origin, Vec3& dir);

// Möller-Trumbore test; t is the ray parameter at the hit.
bool ray_triangle_intersect(const Vec3& origin, const Vec3& dir, const Vec3& a, const Vec3& b,
                            const Vec3& c, double& t);

// Depth map persistence as PFM (normalized depth; sentinel stored as +1.0).
void save_depth_pfm(const std::filesystem::path& path, const DepthMap& d);
DepthMap load_depth_pfm(const std::filesystem::path& path, double near_clip, double far_clip);

// Top-down orthographic maximum-elevation rasterization of a mesh (a DSM).
HeightGrid rasterize_dsm(const TriangleMesh& mesh, double cell,
                         double margin = 0.0);

}  // namespace bv

#endif
