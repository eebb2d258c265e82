#ifndef BV_LOD1_HPP
#define BV_LOD1_HPP

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bv/geometry.hpp"
#include "bv/image.hpp"

namespace bv {

// 2D building outline, CCW exterior ring, meters.
struct Footprint {
    std::string id;
    std::vector<Vec2> polygon;
    std::optional<int> floors;
};

// Elevation raster. origin is the world position of the lower-left corner of
// cell (row 0, col 0); rows grow toward +y. Holes are NaN.
struct HeightGrid {
    double origin_x = 0, origin_y = 0;
    double cell = 1.0;
    Grid<float> z;

    int rows() const { return z.rows; }
    int cols() const { return z.cols; }
    double center_x(int col) const { return origin_x + (col + 0.5) * cell; }
    double center_y(int row) const { return origin_y + (row + 0.5) * cell; }

    // Bilinear sample at world coordinates; NaN outside or on holes.
    double sample(double x, double y) const;
};

struct GroundFilterParams {
    double max_object_size = 200.0;     // meters
    double min_window = 10.0;           // meters
    double elevation_threshold = 0.2;   // meters
};

struct GroundFilterResult {
    HeightGrid ground;        // bare-earth estimate
    Grid<uint8_t> is_ground;  // 1 where the input cell is ground
};

// Progressive morphological ground filter: opening with window sizes doubling
// from min_window up to max_object_size; cells left above the opened surface
// by more than the threshold are non-ground, and the ground surface takes the
// opened value there. Objects wider than max_object_size survive the opening
// and are (by the parameter semantics) kept as ground.
GroundFilterResult filter_ground(const HeightGrid& grid, const GroundFilterParams& params);

// Vertical quad between base and roof along one footprint edge. Corners are
// ordered base_a, base_b, roof_b, roof_a so the outward normal matches the
// edge's outward 2D normal.
struct FacadeQuad {
    std::array<Vec3, 4> corners;
    Vec2 outward;  // unit 2D normal pointing away from the footprint interior
};

struct Lod1Building {
    std::string id;
    double base_elev = 0;
    double roof_elev = 0;
    std::vector<Vec2> footprint;     // CCW
    std::vector<Vec3> roof_face;     // CCW seen from above, at roof_elev
    std::vector<FacadeQuad> facades; // one per footprint edge
};

// Extrusion per the LOD-1 recipe: roof = mean surface elevation over cell
// centers inside the polygon, base = minimum ground elevation inside. With no
// covered cell center, a declared fallback applies: base sampled at the
// centroid, roof = base + floors * 3 m (NoCoverage without a floor count).
Lod1Building extrude_footprint(const Footprint& fp, const HeightGrid& surface,
                               const HeightGrid& ground);

enum class FaceKind { Roof, Facade };

struct Face {
    std::string id;
    std::string building_id;
    FaceKind kind = FaceKind::Roof;
    std::vector<Vec3> loop;   // closed vertex loop (first vertex not repeated)
    Vec3 normal;              // outward unit normal
    Vec2 outward2d;           // facade only: outward 2D edge normal
};

std::vector<Face> enumerate_faces(const Lod1Building& b);

// GeoJSON FeatureCollection of Polygon features; properties: "id" (string),
// optional "floors" (int >= 1). Rings with holes are rejected; exterior rings
// are normalized to CCW.
std::vector<Footprint> load_footprints(const std::filesystem::path& path);
void save_footprints(const std::filesystem::path& path, const std::vector<Footprint>& fps);

// Height grid persistence: single-channel PFM plus a JSON sidecar
// (<path>.json) holding origin and cell size.
void save_height_grid(const std::filesystem::path& pfm_path, const HeightGrid& g);
HeightGrid load_height_grid(const std::filesystem::path& pfm_path);

}  // namespace bv

#endif
