#ifndef BV_CAMERA_HPP
#define BV_CAMERA_HPP

#include <filesystem>
#include <string>
#include <vector>

#include "bv/geometry.hpp"
#include "bv/image.hpp"

namespace bv {

// Brown polynomial lens model. Coefficients are applied to focal-normalized
// coordinates; zero coefficients give the identity mapping.
struct BrownDistortion {
    double k1 = 0, k2 = 0, k3 = 0;  // radial
    double p1 = 0, p2 = 0;          // tangential
    double cx = 0, cy = 0;          // principal point, pixels
    double f = 1;                   // focal length, pixels

    bool is_identity() const { return k1 == 0 && k2 == 0 && k3 == 0 && p1 == 0 && p2 == 0; }

    // Forward model: ideal pixel -> distorted pixel.
    Vec2 distort(Vec2 pixel) const;
};

enum class AngleClass { Nadir, Oblique };

// One aerial photograph: OpenGL-style view/projection pair plus the lens
// model and image frame. Eye space looks down -Z; NDC axes span [-1,1] with
// depth -1 at the near plane.
struct CameraView {
    std::string id;
    Mat4 view = Mat4::identity();  // world -> eye
    Mat4 proj = Mat4::identity();  // eye -> clip
    BrownDistortion distortion;
    int width = 0, height = 0;
    double near_clip = 1.0, far_clip = 5000.0;
    AngleClass angle_class = AngleClass::Nadir;

    Vec3 camera_center() const;      // world coordinates
    Vec3 view_direction() const;     // world-space principal ray (unit)
    Vec3 world_to_eye(const Vec3& p) const;
};

struct ScreenPoint {
    Vec3 ndc;          // x, y in [-1,1] when visible; z is normalized depth
    bool in_frustum;   // all three NDC components within [-1,1]
};

// Projection onto the normalized screen cube: dehomogenize(P * V * x~).
// Throws PointAtCameraPlane when the transformed w is within 1e-12 of zero.
ScreenPoint project_point(const CameraView& view, const Vec3& x);
ScreenPoint project_point(const CameraView& view, const Vec4& x);

// Affine NDC -> pixel map; y flipped so row 0 is the image top. Out-of-image
// coordinates are returned as-is.
Vec2 ndc_to_pixel(const Vec3& ndc, const CameraView& view);

// Inverts the perspective depth mapping:
//   z_eye = 2 * near * far / (far + near - z_ndc * (far - near))
// Throws DomainError for z_ndc outside [-1,1].
double depth_to_metric(double z_ndc, const CameraView& view);

// Destination-driven undistortion: output pixel (u,v) samples the input at
// the Brown forward-model location, bilinearly; out-of-source samples are
// zero-filled. With all-zero coefficients the output is a bit-exact copy.
RgbImage undistort_image(const RgbImage& image, const BrownDistortion& d);

// Builds the projection matrix used project-wide from pinhole intrinsics.
Mat4 projection_from_intrinsics(double fx, double fy, double cx, double cy, int width,
                                int height, double near_clip, double far_clip);

// View matrix from a world-to-camera rotation (row-major 3x3) and camera
// center: V = [R | -R*C].
Mat4 view_from_pose(const std::array<double, 9>& rotation, const Vec3& center);

// Loads the JSON pose schema (array of {id, width, height, fx, fy, cx, cy,
// k1..k3, p1, p2, rotation[9] row-major world-to-camera, center[3],
// angle_class}). Near/far are dataset configuration, not pose data.
std::vector<CameraView> load_poses(const std::filesystem::path& path, double near_clip = 1.0,
                                   double far_clip = 5000.0);

// Minimal importer for the XML block-exchange subset documented in the
// README (Photogroups/Photogroup/Photo elements). Same validation rules as
// the JSON loader.
std::vector<CameraView> load_poses_xml(const std::filesystem::path& path, double near_clip = 1.0,
                                       double far_clip = 5000.0);

}  // namespace bv

#endif
