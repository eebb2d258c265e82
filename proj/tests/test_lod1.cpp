#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "bv/errors.hpp"
#include "bv/io.hpp"
#include "bv/lod1.hpp"
#include "bv/rng.hpp"

using namespace bv;

namespace {

HeightGrid flat_grid(int rows, int cols, double cell, float z) {
    HeightGrid g;
    g.cell = cell;
    g.z = Grid<float>(rows, cols, z);
    return g;
}

// Brute-force O(n^2 w^2) morphological opening oracle mirroring the
// progressive window schedule, kept independent of the library code.
Grid<float> oracle_opening(const Grid<float>& in, int win) {
    int half = win / 2;
    Grid<float> eroded(in.rows, in.cols), opened(in.rows, in.cols);
    for (int r = 0; r < in.rows; ++r)
        for (int c = 0; c < in.cols; ++c) {
            float m = std::numeric_limits<float>::infinity();
            for (int dr = -half; dr <= half; ++dr)
                for (int dc = -half; dc <= half; ++dc) {
                    int rr = r + dr, cc = c + dc;
                    if (rr < 0 || cc < 0 || rr >= in.rows || cc >= in.cols) continue;
                    m = std::min(m, in.at(rr, cc));
                }
            eroded.at(r, c) = m;
        }
    for (int r = 0; r < in.rows; ++r)
        for (int c = 0; c < in.cols; ++c) {
            float m = -std::numeric_limits<float>::infinity();
            for (int dr = -half; dr <= half; ++dr)
                for (int dc = -half; dc <= half; ++dc) {
                    int rr = r + dr, cc = c + dc;
                    if (rr < 0 || cc < 0 || rr >= in.rows || cc >= in.cols) continue;
                    m = std::max(m, eroded.at(rr, cc));
                }
            opened.at(r, c) = m;
        }
    return opened;
}

Footprint square_footprint(const std::string& id, double x0, double y0, double side) {
    Footprint fp;
    fp.id = id;
    fp.polygon = {{x0, y0}, {x0 + side, y0}, {x0 + side, y0 + side}, {x0, y0 + side}};
    return fp;
}

}  // namespace

TEST_CASE("filter_ground keeps a perfectly flat grid as ground") {
    HeightGrid g = flat_grid(40, 40, 1.0, 10.f);
    GroundFilterResult res = filter_ground(g, {});
    for (size_t i = 0; i < res.is_ground.v.size(); ++i) {
        CHECK(res.is_ground.v[i] == 1);
        CHECK(res.ground.z.v[i] == 10.f);
    }
}

TEST_CASE("filter_ground rejects empty grids and bad parameters") {
    CHECK_THROWS_AS(filter_ground(HeightGrid{}, {}), EmptyGrid);
    HeightGrid g = flat_grid(8, 8, 1.0, 0.f);
    GroundFilterParams p;
    p.min_window = 300;  // window above max object size
    CHECK_THROWS_AS(filter_ground(g, p), ValidationError);
}

TEST_CASE("filter_ground removes a 50 m block and matches the brute-force oracle") {
    // 64x64 grid at 4 m cells = 256 m extent; block ~52 m wide raised 30 m
    const int n = 64;
    const double cell = 4.0;
    HeightGrid g = flat_grid(n, n, cell, 5.f);
    for (int r = 20; r < 33; ++r)
        for (int c = 24; c < 37; ++c) g.z.at(r, c) = 35.f;

    GroundFilterParams params;
    GroundFilterResult res = filter_ground(g, params);

    // block cells non-ground, the rest ground
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            bool on_block = r >= 20 && r < 33 && c >= 24 && c < 37;
            CHECK(res.is_ground.at(r, c) == (on_block ? 0 : 1));
        }
    // ground surface flat at 5 m everywhere
    for (float z : res.ground.z.v) CHECK(z == doctest::Approx(5.0));

    // oracle comparison: run the same progressive schedule by brute force
    auto to_cells = [&](double meters) {
        int w = int(std::ceil(meters / cell));
        if (w % 2 == 0) ++w;
        return std::max(w, 3);
    };
    int max_win = to_cells(params.max_object_size);
    std::vector<int> windows;
    for (int w = to_cells(params.min_window); w < max_win; w = 2 * w + 1) windows.push_back(w);
    windows.push_back(max_win);

    Grid<float> surface = g.z;
    Grid<uint8_t> oracle_mask(n, n, 1);
    for (int win : windows) {
        Grid<float> opened = oracle_opening(surface, win);
        for (size_t i = 0; i < surface.v.size(); ++i)
            if (g.z.v[i] - opened.v[i] > float(params.elevation_threshold)) oracle_mask.v[i] = 0;
        surface = opened;
    }
    for (size_t i = 0; i < oracle_mask.v.size(); ++i) {
        CHECK(res.is_ground.v[i] == oracle_mask.v[i]);
        float expect = oracle_mask.v[i] ? g.z.v[i] : surface.v[i];
        CHECK(res.ground.z.v[i] == doctest::Approx(expect));
    }
}

TEST_CASE("objects wider than the maximum window survive as ground") {
    // 300 m wide block on a 600 m grid; max object size 200 m cannot open it
    const int n = 100;
    const double cell = 6.0;
    HeightGrid g = flat_grid(n, n, cell, 0.f);
    for (int r = 25; r < 75; ++r)
        for (int c = 25; c < 75; ++c) g.z.at(r, c) = 20.f;
    GroundFilterResult res = filter_ground(g, {});
    // block interior stays ground (documented limitation of the threshold set)
    CHECK(res.is_ground.at(50, 50) == 1);
    CHECK(res.ground.z.at(50, 50) == 20.f);
}

TEST_CASE("filter_ground is idempotent within the elevation threshold") {
    const int n = 48;
    HeightGrid g = flat_grid(n, n, 2.0, 0.f);
    // gentle terrain + two buildings
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c)
            g.z.at(r, c) = float(0.5 * std::sin(r * 0.1) + 0.3 * std::cos(c * 0.15));
    for (int r = 10; r < 16; ++r)
        for (int c = 8; c < 15; ++c) g.z.at(r, c) += 12.f;
    for (int r = 30; r < 38; ++r)
        for (int c = 28; c < 40; ++c) g.z.at(r, c) += 25.f;

    GroundFilterParams params;
    GroundFilterResult first = filter_ground(g, params);
    GroundFilterResult second = filter_ground(first.ground, params);
    for (size_t i = 0; i < first.ground.z.v.size(); ++i)
        CHECK(std::abs(second.ground.z.v[i] - first.ground.z.v[i]) <=
              params.elevation_threshold + 1e-6);
}

TEST_CASE("extrude_footprint over uniform fields") {
    HeightGrid surface = flat_grid(40, 40, 1.0, 30.f);
    HeightGrid ground = flat_grid(40, 40, 1.0, 2.f);
    Footprint fp = square_footprint("b1", 10, 10, 12);
    Lod1Building b = extrude_footprint(fp, surface, ground);
    CHECK(b.base_elev == doctest::Approx(2.0));
    CHECK(b.roof_elev == doctest::Approx(30.0));
    REQUIRE(b.facades.size() == 4);
    for (const FacadeQuad& q : b.facades) {
        CHECK(q.corners[0].z == doctest::Approx(2.0));
        CHECK(q.corners[2].z == doctest::Approx(30.0));
    }
}

TEST_CASE("extrude_footprint averages mixed surface heights") {
    HeightGrid surface = flat_grid(20, 20, 1.0, 10.f);
    // right half of the footprint at 20 m; footprint covers [4,16) x [4,16)
    for (int r = 0; r < 20; ++r)
        for (int c = 10; c < 20; ++c) surface.z.at(r, c) = 20.f;
    HeightGrid ground = flat_grid(20, 20, 1.0, 0.f);
    Footprint fp = square_footprint("b2", 4, 4, 12);
    Lod1Building b = extrude_footprint(fp, surface, ground);
    CHECK(b.roof_elev == doctest::Approx(15.0));
}

TEST_CASE("extrude_footprint falls back to the floor count without coverage") {
    // footprint smaller than a cell, positioned between cell centers
    HeightGrid surface = flat_grid(4, 4, 10.0, 30.f);
    HeightGrid ground = flat_grid(4, 4, 10.0, 1.f);
    Footprint fp = square_footprint("b3", 11.0, 11.0, 3.0);  // no cell center inside
    fp.floors = 5;
    Lod1Building b = extrude_footprint(fp, surface, ground);
    CHECK(b.base_elev == doctest::Approx(1.0));
    CHECK(b.roof_elev == doctest::Approx(1.0 + 5 * 3.0));

    Footprint no_floors = square_footprint("b4", 11.0, 11.0, 3.0);
    CHECK_THROWS_AS(extrude_footprint(no_floors, surface, ground), NoCoverage);
}

TEST_CASE("extrude_footprint flags degenerate heights") {
    HeightGrid surface = flat_grid(20, 20, 1.0, 2.f);
    HeightGrid ground = flat_grid(20, 20, 1.0, 2.f);
    Footprint fp = square_footprint("b5", 4, 4, 10);
    CHECK_THROWS_AS(extrude_footprint(fp, surface, ground), DegenerateHeight);
}

TEST_CASE("enumerate_faces counts and orients faces") {
    HeightGrid surface = flat_grid(40, 40, 1.0, 20.f);
    HeightGrid ground = flat_grid(40, 40, 1.0, 0.f);

    Footprint sq = square_footprint("s", 10, 10, 10);
    auto faces = enumerate_faces(extrude_footprint(sq, surface, ground));
    CHECK(faces.size() == 5);
    CHECK(faces[0].kind == FaceKind::Roof);
    CHECK(faces[0].normal.z == doctest::Approx(1.0));

    // L-shaped footprint with 6 edges -> 7 faces
    Footprint ell;
    ell.id = "l";
    ell.polygon = {{10, 10}, {26, 10}, {26, 18}, {18, 18}, {18, 26}, {10, 26}};
    auto lfaces = enumerate_faces(extrude_footprint(ell, surface, ground));
    CHECK(lfaces.size() == 7);
}

TEST_CASE("facade normals point outward (polygon-offset oracle)") {
    HeightGrid surface = flat_grid(60, 60, 1.0, 15.f);
    HeightGrid ground = flat_grid(60, 60, 1.0, 0.f);
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        // random convex polygon around a center
        Vec2 c{30 + rng.uniform(-5.0, 5.0), 30 + rng.uniform(-5.0, 5.0)};
        int k = 3 + int(rng.below(5));
        std::vector<double> angles;
        for (int i = 0; i < k; ++i) angles.push_back(rng.uniform(0, 2 * M_PI));
        std::sort(angles.begin(), angles.end());
        bool distinct = true;
        for (size_t i = 1; i < angles.size(); ++i)
            if (angles[i] - angles[i - 1] < 0.2) distinct = false;
        if (!distinct) continue;
        Footprint fp;
        fp.id = "c";
        for (double a : angles)
            fp.polygon.push_back({c.x + 8 * std::cos(a), c.y + 8 * std::sin(a)});

        Lod1Building b = extrude_footprint(fp, surface, ground);
        for (const Face& f : enumerate_faces(b)) {
            if (f.kind != FaceKind::Facade) continue;
            // offset oracle: the edge midpoint nudged along the normal must
            // leave the polygon, nudged against it must fall inside
            Vec2 mid{(f.loop[0].x + f.loop[1].x) / 2, (f.loop[0].y + f.loop[1].y) / 2};
            Vec2 out_pt = mid + f.outward2d * 1e-3;
            Vec2 in_pt = mid - f.outward2d * 1e-3;
            CHECK(!point_in_polygon(out_pt, fp.polygon));
            CHECK(point_in_polygon(in_pt, fp.polygon));
        }
    }
}

TEST_CASE("roof face area equals footprint area and extrusion is translation-equivariant") {
    HeightGrid surface = flat_grid(60, 60, 1.0, 18.f);
    HeightGrid ground = flat_grid(60, 60, 1.0, 0.f);
    Footprint ell;
    ell.id = "l";
    ell.polygon = {{10, 10}, {26, 10}, {26, 18}, {18, 18}, {18, 26}, {10, 26}};
    Lod1Building b = extrude_footprint(ell, surface, ground);

    std::vector<Vec2> roof2d;
    for (const Vec3& v : b.roof_face) roof2d.push_back({v.x, v.y});
    double fp_area = polygon_signed_area(ell.polygon);
    double roof_area = polygon_signed_area(roof2d);
    CHECK(std::abs(roof_area - fp_area) / fp_area < 1e-9);

    // translation equivariance: shift footprint and grids together
    const double dx = 7.0, dy = -3.0;
    Footprint shifted = ell;
    for (Vec2& p : shifted.polygon) p = {p.x + dx, p.y + dy};
    HeightGrid s2 = surface, g2 = ground;
    s2.origin_x += dx;
    s2.origin_y += dy;
    g2.origin_x += dx;
    g2.origin_y += dy;
    Lod1Building b2 = extrude_footprint(shifted, s2, g2);
    REQUIRE(b2.roof_face.size() == b.roof_face.size());
    for (size_t i = 0; i < b.roof_face.size(); ++i) {
        CHECK(b2.roof_face[i].x == doctest::Approx(b.roof_face[i].x + dx).epsilon(1e-12));
        CHECK(b2.roof_face[i].y == doctest::Approx(b.roof_face[i].y + dy).epsilon(1e-12));
        CHECK(b2.roof_face[i].z == doctest::Approx(b.roof_face[i].z).epsilon(1e-12));
    }

    // face loops are closed and non-degenerate
    for (const Face& f : enumerate_faces(b)) {
        REQUIRE(f.loop.size() >= 3);
        if (f.kind == FaceKind::Facade) {
            Vec3 e1 = f.loop[1] - f.loop[0];
            Vec3 e2 = f.loop[3] - f.loop[0];
            CHECK(e1.cross(e2).norm() > 0);
        }
    }
}

TEST_CASE("GeoJSON footprints load, normalize and validate") {
    auto dir = std::filesystem::temp_directory_path() / "bv_test_lod1";
    std::filesystem::create_directories(dir);

    write_text_file(dir / "fp.geojson", R"({
      "type": "FeatureCollection",
      "features": [
        {"type": "Feature",
         "properties": {"id": "a", "floors": 3},
         "geometry": {"type": "Polygon",
           "coordinates": [[[0,0],[0,10],[10,10],[10,0],[0,0]]]}}
      ]})");
    auto fps = load_footprints(dir / "fp.geojson");
    REQUIRE(fps.size() == 1);
    CHECK(fps[0].id == "a");
    CHECK(*fps[0].floors == 3);
    // CW input ring normalized to CCW
    CHECK(polygon_signed_area(fps[0].polygon) > 0);
    CHECK(fps[0].polygon.size() == 4);  // closing vertex dropped

    write_text_file(dir / "holes.geojson", R"({
      "type": "FeatureCollection",
      "features": [
        {"type": "Feature", "properties": {"id": "h"},
         "geometry": {"type": "Polygon",
           "coordinates": [[[0,0],[10,0],[10,10],[0,10],[0,0]],
                           [[4,4],[6,4],[6,6],[4,6],[4,4]]]}}
      ]})");
    CHECK_THROWS_AS(load_footprints(dir / "holes.geojson"), ValidationError);

    write_text_file(dir / "self.geojson", R"({
      "type": "FeatureCollection",
      "features": [
        {"type": "Feature", "properties": {"id": "x"},
         "geometry": {"type": "Polygon",
           "coordinates": [[[0,0],[10,10],[10,0],[0,10],[0,0]]]}}
      ]})");
    CHECK_THROWS_AS(load_footprints(dir / "self.geojson"), ValidationError);
}

TEST_CASE("height grid PFM round trip preserves values and georeferencing") {
    auto dir = std::filesystem::temp_directory_path() / "bv_test_lod1";
    std::filesystem::create_directories(dir);
    Rng rng(21);
    HeightGrid g;
    g.origin_x = 12.5;
    g.origin_y = -3.25;
    g.cell = 0.5;
    g.z = Grid<float>(17, 23);
    for (float& v : g.z.v) v = float(rng.uniform(-5.0, 50.0));
    g.z.at(4, 5) = std::numeric_limits<float>::quiet_NaN();

    save_height_grid(dir / "g.pfm", g);
    HeightGrid r = load_height_grid(dir / "g.pfm");
    CHECK(r.origin_x == g.origin_x);
    CHECK(r.origin_y == g.origin_y);
    CHECK(r.cell == g.cell);
    REQUIRE(r.z.rows == g.z.rows);
    REQUIRE(r.z.cols == g.z.cols);
    for (size_t i = 0; i < g.z.v.size(); ++i) {
        if (std::isnan(g.z.v[i]))
            CHECK(std::isnan(r.z.v[i]));
        else
            CHECK(r.z.v[i] == g.z.v[i]);
    }
}
