#ifndef BV_PATCH_HPP
#define BV_PATCH_HPP

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "bv/camera.hpp"
#include "bv/image.hpp"
#include "bv/lod1.hpp"
#include "bv/render.hpp"

namespace bv {

// Projection of one face into one view. Area is the shoelace area of the
// projected vertex polygon in square pixels.
struct FaceProjection {
    std::string face_id;
    std::string view_id;
    std::vector<Vec2> pixels;
    double area_px2 = 0;
    bool in_frustum = false;
};

FaceProjection project_face(const Face& face, const CameraView& view);

// 3x3 projective map from image pixels to rectified face-plane pixels,
// normalized so the bottom-right entry is 1 when nonzero.
struct Homography {
    Mat3 h = Mat3::identity();

    Vec2 apply(Vec2 image_px) const { return h.apply(image_px); }
    Homography inverse() const;
};

// Least-squares DLT with Hartley normalization. Throws
// DegenerateConfiguration when the correspondences are collinear within 1e-9
// or the solution is not invertible.
Homography dlt_homography(const std::vector<Vec2>& src, const std::vector<Vec2>& dst);

// Rectified-frame layout for a face: orthonormal in-plane basis (e1 along the
// first edge, e2 = normal x e1, which points up for facades), the plane-space
// bounding rectangle, and the raster size at the requested ground sample
// distance (uniformly coarsened when a side would exceed max_side).
struct RectPlan {
    Vec3 origin, e1, e2;
    double umin = 0, umax = 0, vmin = 0, vmax = 0;
    double gsd = 1;                    // effective meters/pixel
    int width = 0, height = 0;
    std::array<Vec3, 4> corners3d;     // TL, TR, BR, BL of the bounding quad
};

RectPlan plan_rectification(const Face& face, double gsd, int max_side = 1024);

// Homography mapping image pixels onto the face's rectified frame, built from
// the projected bounding-quad corners.
Homography compute_homography(const Face& face, const CameraView& view, const RectPlan& plan);
Homography compute_homography(const Face& face, const CameraView& view, double gsd);

struct RectifiedPatch {
    RgbImage color;             // destination-driven warp, bilinear
    Grid<uint8_t> color_valid;  // 0 where the source sample fell outside
    Grid<double> depth_m;       // metric depth; NaN where invalid
};

// Destination-driven warp of the color image and the rendered depth map into
// the rectified frame. Depth is converted to meters before resampling.
RectifiedPatch rectify_patch(const RgbImage& color, const DepthMap& depth, const Homography& h,
                             int out_width, int out_height);

// Bilinear surface from the four bounding-quad corner depths (TL, TR, BR, BL)
// evaluated at pixel centers of a width x height raster.
Grid<double> interpolate_face_depth(const std::array<double, 4>& corner_depths, int width,
                                    int height);
double bilinear_corners(const std::array<double, 4>& corners, double s, double t);

// Visible = expected - rendered <= threshold (strict inequality marks
// occlusion); invalid rendered pixels are occluded. Returns 1 for visible.
Grid<uint8_t> occlusion_mask(const Grid<double>& expected, const Grid<double>& rendered,
                             double threshold_m = 2.0);

std::optional<BBox> visible_bbox(const Grid<uint8_t>& mask);

// Rectified, co-registered classifier sample with provenance.
struct PatchSample {
    RgbImage color;
    Grid<double> rendered_depth;   // meters
    Grid<double> expected_depth;   // meters
    Grid<uint8_t> mask;            // 1 = visible face pixel
    std::optional<BBox> bbox;
    std::string building_id, face_id, view_id;
    FaceKind kind = FaceKind::Roof;
    double projected_area_px2 = 0;  // image-plane shoelace area
    double visible_area_px2 = 0;    // projected area scaled by the visible fraction
};

// 4-channel CHW tensor: RGB in [0,1] plus min-max normalized depth.
struct SampleImage {
    int size = 0;
    std::vector<float> chw;  // 4 * size * size

    float at(int c, int r, int col) const { return chw[(size_t(c) * size + r) * size + col]; }
};

// Crops to the visible bounding box, resizes bilinearly to target x target,
// and normalizes depth per patch (min-max over visible pixels; occluded
// pixels 0; a constant patch maps to all zeros). Throws PatchTooSmall when
// the bbox spans less than 8 px on either axis.
SampleImage assemble_sample(const PatchSample& patch, int target = 224);

// Full per-(face, view) extraction: projection, rectification, expected
// depth, occlusion test, interior mask, bounding box.
PatchSample extract_patch(const Face& face, const CameraView& view, const RgbImage& color,
                          const DepthMap& scene_depth, double gsd, double occlusion_threshold_m,
                          int max_side = 1024);

}  // namespace bv

#endif
