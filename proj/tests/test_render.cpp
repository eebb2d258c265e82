#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "bv/io.hpp"
#include "bv/render.hpp"
#include "bv/rng.hpp"

using namespace bv;

namespace {

CameraView make_view(int size, double near, double far, double fov_deg = 60.0) {
    CameraView v;
    v.id = "cam";
    v.width = v.height = size;
    v.near_clip = near;
    v.far_clip = far;
    double f = (size / 2.0) / std::tan(fov_deg * M_PI / 360.0);
    v.proj = projection_from_intrinsics(f, f, size / 2.0, size / 2.0, size, size, near, far);
    return v;  // identity view: camera at origin looking down -z
}

// screen-space distance from a point to a segment
double seg_dist(Vec2 p, Vec2 a, Vec2 b) {
    Vec2 ab = b - a;
    double t = ab.dot(p - a) / std::max(ab.dot(ab), 1e-30);
    t = std::clamp(t, 0.0, 1.0);
    Vec2 q = a + ab * t;
    return (p - q).norm();
}

// marks pixels within `radius` px of any projected triangle edge
Grid<uint8_t> edge_proximity_mask(const TriangleMesh& mesh, const CameraView& view,
                                  double radius) {
    Grid<uint8_t> mask(view.height, view.width, 0);
    for (const auto& tri : mesh.triangles) {
        Vec2 px[3];
        bool ok = true;
        for (int i = 0; i < 3; ++i) {
            Vec3 eye = view.world_to_eye(mesh.vertices[size_t(tri[size_t(i)])]);
            if (eye.z > -view.near_clip) {
                ok = false;  // near-clipped triangles get fully masked below
                break;
            }
            px[i] = ndc_to_pixel(project_point(view, mesh.vertices[size_t(tri[size_t(i)])]).ndc,
                                 view);
        }
        if (!ok) {
            // conservatively mask everything the triangle might touch
            for (auto& m : mask.v) m = 1;
            return mask;
        }
        double min_x = std::min({px[0].x, px[1].x, px[2].x}) - radius - 1;
        double max_x = std::max({px[0].x, px[1].x, px[2].x}) + radius + 1;
        double min_y = std::min({px[0].y, px[1].y, px[2].y}) - radius - 1;
        double max_y = std::max({px[0].y, px[1].y, px[2].y}) + radius + 1;
        for (int r = std::max(0, int(min_y)); r <= std::min(view.height - 1, int(max_y)); ++r)
            for (int c = std::max(0, int(min_x)); c <= std::min(view.width - 1, int(max_x));
                 ++c) {
                Vec2 p{c + 0.5, r + 0.5};
                for (int e = 0; e < 3; ++e)
                    if (seg_dist(p, px[e], px[(e + 1) % 3]) <= radius) {
                        mask.at(r, c) = 1;
                        break;
                    }
            }
    }
    return mask;
}

TriangleMesh quad_mesh(Vec3 a, Vec3 b, Vec3 c, Vec3 d) {
    TriangleMesh m;
    m.vertices = {a, b, c, d};
    m.triangles = {{0, 1, 2}, {0, 2, 3}};
    return m;
}

}  // namespace

TEST_CASE("mesh outside the frustum renders all sentinel") {
    CameraView v = make_view(32, 1, 100);
    TriangleMesh m = quad_mesh({-5, -5, 10}, {5, -5, 10}, {5, 5, 10}, {-5, 5, 10});  // behind
    DepthMap d = render_depth(m, v);
    for (double z : d.z) CHECK(z == DepthMap::kNoHit);
}

TEST_CASE("screen-filling quad at 10 m reads 10 m everywhere") {
    CameraView v = make_view(64, 1, 100);
    TriangleMesh m = quad_mesh({-20, -20, -10}, {20, -20, -10}, {20, 20, -10}, {-20, 20, -10});
    DepthMap d = render_depth(m, v);
    for (int r = 0; r < 64; ++r)
        for (int c = 0; c < 64; ++c) {
            REQUIRE(d.hit(r, c));
            CHECK(std::abs(d.metric(r, c) - 10.0) < 1e-3);
        }
}

TEST_CASE("nearer surface wins the z-buffer") {
    CameraView v = make_view(64, 1, 100);
    TriangleMesh m = quad_mesh({-20, -20, -8}, {20, -20, -8}, {20, 20, -8}, {-20, 20, -8});
    TriangleMesh near_quad =
        quad_mesh({-20, -20, -5}, {20, -20, -5}, {20, 20, -5}, {-20, 20, -5});
    // append the nearer quad second: order must not matter
    m.append(near_quad);
    DepthMap d = render_depth(m, v);
    for (int r = 0; r < 64; ++r)
        for (int c = 0; c < 64; ++c) CHECK(std::abs(d.metric(r, c) - 5.0) < 1e-3);
}

TEST_CASE("two triangles sharing an edge cover each pixel exactly once") {
    CameraView v = make_view(64, 1, 100);
    TriangleMesh t1, t2;
    t1.vertices = t2.vertices = {{-8, -8, -10}, {8, -8, -10}, {8, 8, -10}, {-8, 8, -10}};
    t1.triangles = {{0, 1, 2}};
    t2.triangles = {{0, 2, 3}};
    DepthMap d1 = render_depth(t1, v);
    DepthMap d2 = render_depth(t2, v);
    TriangleMesh both = t1;
    both.triangles.push_back(t2.triangles[0]);
    DepthMap db = render_depth(both, v);
    long count_union = 0, count_sum = 0, count_both = 0;
    for (int i = 0; i < 64 * 64; ++i) {
        bool h1 = d1.z[size_t(i)] < DepthMap::kNoHit;
        bool h2 = d2.z[size_t(i)] < DepthMap::kNoHit;
        bool hb = db.z[size_t(i)] < DepthMap::kNoHit;
        CHECK(!(h1 && h2));  // the shared diagonal belongs to exactly one triangle
        count_union += (h1 || h2) ? 1 : 0;
        count_sum += int(h1) + int(h2);
        count_both += hb ? 1 : 0;
    }
    CHECK(count_union == count_sum);
    CHECK(count_both == count_union);
    CHECK(count_both > 0);
}

TEST_CASE("raycast oracle hits a triangle centroid at its exact depth") {
    CameraView v = make_view(64, 1, 100);
    TriangleMesh m;
    m.vertices = {{-3, -2, -17}, {4, -2, -17}, {0, 5, -17}};
    m.triangles = {{0, 1, 2}};
    Vec3 centroid = (m.vertices[0] + m.vertices[1] + m.vertices[2]) * (1.0 / 3.0);
    Vec2 px = ndc_to_pixel(project_point(v, centroid).ndc, v);
    auto hit = raycast_depth(m, v, px.x, px.y);
    REQUIRE(hit.has_value());
    CHECK(std::abs(*hit - 17.0) < 1e-9);

    auto miss = raycast_depth(m, v, 1.0, 1.0);
    CHECK(!miss.has_value());
}

TEST_CASE("rasterizer agrees with the ray-cast oracle away from edges") {
    Rng rng(42);
    CameraView v = make_view(128, 1, 200);
    TriangleMesh m;
    for (int t = 0; t < 200; ++t) {
        double depth = rng.uniform(8.0, 60.0);
        Vec3 base{rng.uniform(-0.4, 0.4) * depth, rng.uniform(-0.4, 0.4) * depth, -depth};
        int i0 = int(m.vertices.size());
        for (int k = 0; k < 3; ++k)
            m.vertices.push_back(base + Vec3{rng.uniform(-4.0, 4.0), rng.uniform(-4.0, 4.0),
                                             rng.uniform(-2.0, 2.0)});
        m.triangles.push_back({i0, i0 + 1, i0 + 2});
    }
    clean_mesh(m);
    DepthMap d = render_depth(m, v);
    Grid<uint8_t> near_edge = edge_proximity_mask(m, v, 1.0);

    int checked = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        int r = int(rng.below(128)), c = int(rng.below(128));
        if (near_edge.at(r, c)) continue;
        auto oracle = raycast_depth(m, v, c + 0.5, r + 0.5);
        bool raster_hit = d.hit(r, c);
        bool oracle_hit = oracle.has_value() && *oracle <= 200.0;
        CHECK(raster_hit == oracle_hit);
        if (raster_hit && oracle_hit) CHECK(std::abs(d.metric(r, c) - *oracle) < 1e-3);
        ++checked;
    }
    CHECK(checked > 300);  // the mask must not hide everything
}

TEST_CASE("depth buffer is the min over any single-triangle rendering") {
    Rng rng(7);
    CameraView v = make_view(48, 1, 100);
    TriangleMesh m;
    for (int t = 0; t < 30; ++t) {
        double depth = rng.uniform(5.0, 50.0);
        Vec3 base{rng.uniform(-0.3, 0.3) * depth, rng.uniform(-0.3, 0.3) * depth, -depth};
        int i0 = int(m.vertices.size());
        for (int k = 0; k < 3; ++k)
            m.vertices.push_back(base + Vec3{rng.uniform(-6.0, 6.0), rng.uniform(-6.0, 6.0),
                                             rng.uniform(-1.0, 1.0)});
        m.triangles.push_back({i0, i0 + 1, i0 + 2});
    }
    DepthMap full = render_depth(m, v);
    for (size_t t = 0; t < m.triangles.size(); ++t) {
        TriangleMesh single;
        single.vertices = m.vertices;
        single.triangles = {m.triangles[t]};
        DepthMap ds = render_depth(single, v);
        for (size_t i = 0; i < ds.z.size(); ++i) CHECK(full.z[i] <= ds.z[i] + 1e-15);
    }
}

TEST_CASE("rendering is deterministic and triangle-order independent") {
    Rng rng(99);
    CameraView v = make_view(48, 1, 100);
    TriangleMesh m;
    for (int t = 0; t < 60; ++t) {
        double depth = rng.uniform(5.0, 40.0);
        Vec3 base{rng.uniform(-0.3, 0.3) * depth, rng.uniform(-0.3, 0.3) * depth, -depth};
        int i0 = int(m.vertices.size());
        for (int k = 0; k < 3; ++k)
            m.vertices.push_back(base + Vec3{rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0),
                                             rng.uniform(-1.0, 1.0)});
        m.triangles.push_back({i0, i0 + 1, i0 + 2});
    }
    DepthMap a = render_depth(m, v);
    DepthMap b = render_depth(m, v);
    CHECK(a.z == b.z);

    TriangleMesh shuffled = m;
    rng.shuffle(shuffled.triangles);
    DepthMap c = render_depth(shuffled, v);
    CHECK(a.z == c.z);
}

TEST_CASE("render_face_depth: behind camera, fronto-parallel, oblique") {
    CameraView v = make_view(64, 1, 100);

    Face behind;
    behind.kind = FaceKind::Roof;
    behind.loop = {{-5, -5, 10}, {5, -5, 10}, {5, 5, 10}, {-5, 5, 10}};
    behind.normal = {0, 0, 1};
    DepthMap db = render_face_depth(behind, v);
    for (double z : db.z) CHECK(z == DepthMap::kNoHit);

    Face flat;
    flat.kind = FaceKind::Facade;
    flat.loop = {{-8, -8, -20}, {8, -8, -20}, {8, 8, -20}, {-8, 8, -20}};
    flat.normal = {0, 0, 1};
    DepthMap df = render_face_depth(flat, v);
    long hits = 0;
    for (int r = 0; r < 64; ++r)
        for (int c = 0; c < 64; ++c)
            if (df.hit(r, c)) {
                CHECK(std::abs(df.metric(r, c) - 20.0) < 1e-3);
                ++hits;
            }
    CHECK(hits > 500);

    // oblique plane: depth monotone along the tilt direction
    Face oblique;
    oblique.kind = FaceKind::Facade;
    oblique.loop = {{-10, -10, -15}, {10, -10, -25}, {10, 10, -25}, {-10, 10, -15}};
    oblique.normal = Vec3{-10.0 / std::hypot(10.0, 20.0), 0, 20.0 / std::hypot(10.0, 20.0)};
    DepthMap dq = render_face_depth(oblique, v);
    int row = 32;
    double prev = -1;
    for (int c = 0; c < 64; ++c) {
        if (!dq.hit(row, c)) continue;
        double cur = dq.metric(row, c);
        if (prev >= 0) CHECK(cur >= prev - 1e-9);
        prev = cur;
    }
    CHECK(prev > 0);
}

TEST_CASE("non-convex roof polygons rasterize their interior only") {
    CameraView v = make_view(64, 1, 100);
    // L-shape in the z=-20 plane, normal +z toward the camera
    Face ell;
    ell.kind = FaceKind::Roof;
    ell.normal = {0, 0, 1};
    ell.loop = {{-8, -8, -20}, {8, -8, -20}, {8, 0, -20},
                {0, 0, -20},   {0, 8, -20},  {-8, 8, -20}};
    DepthMap d = render_face_depth(ell, v);

    auto pixel_of = [&](double x, double y) {
        return ndc_to_pixel(project_point(v, Vec3{x, y, -20}).ndc, v);
    };
    Vec2 inside = pixel_of(-4, -4);  // lower arm
    Vec2 notch = pixel_of(4, 4);     // cut-out corner
    CHECK(d.hit(int(inside.y), int(inside.x)));
    CHECK(!d.hit(int(notch.y), int(notch.x)));
}

TEST_CASE("depth PFM round trip preserves the buffer") {
    auto dir = std::filesystem::temp_directory_path() / "bv_test_render";
    std::filesystem::create_directories(dir);
    CameraView v = make_view(32, 1, 100);
    TriangleMesh m = quad_mesh({-6, -6, -12}, {6, -6, -12}, {6, 6, -12}, {-6, 6, -12});
    DepthMap d = render_depth(m, v);
    save_depth_pfm(dir / "d.pfm", d);
    DepthMap r = load_depth_pfm(dir / "d.pfm", v.near_clip, v.far_clip);
    REQUIRE(r.width == d.width);
    REQUIRE(r.height == d.height);
    for (size_t i = 0; i < d.z.size(); ++i) CHECK(float(r.z[i]) == float(d.z[i]));
}

TEST_CASE("mesh loaders round trip OBJ and PLY") {
    auto dir = std::filesystem::temp_directory_path() / "bv_test_render";
    std::filesystem::create_directories(dir);
    TriangleMesh m = quad_mesh({0, 0, 0}, {4, 0, 0}, {4, 4, 1}, {0, 4, 1});

    save_obj(dir / "m.obj", m);
    TriangleMesh ro = load_mesh(dir / "m.obj");
    REQUIRE(ro.triangles.size() == 2);
    CHECK(ro.vertices[2].z == doctest::Approx(1.0));

    save_ply(dir / "m.ply", m);
    TriangleMesh rp = load_mesh(dir / "m.ply");
    REQUIRE(rp.triangles.size() == 2);
    CHECK(rp.vertices[3].y == doctest::Approx(4.0));

    // degenerate triangles are cleaned on load
    TriangleMesh bad = m;
    bad.triangles.push_back({0, 1, 1});
    save_obj(dir / "bad.obj", bad);
    CHECK(load_mesh(dir / "bad.obj").triangles.size() == 2);
}

TEST_CASE("rasterize_dsm produces a max-elevation grid") {
    TriangleMesh m = quad_mesh({0, 0, 0}, {20, 0, 0}, {20, 20, 0}, {0, 20, 0});
    TriangleMesh box = quad_mesh({5, 5, 7}, {10, 5, 7}, {10, 10, 7}, {5, 10, 7});
    m.append(box);
    HeightGrid g = rasterize_dsm(m, 1.0);
    double cx = 7.5 - g.origin_x, cy = 7.5 - g.origin_y;
    CHECK(g.z.at(int(cy), int(cx)) == doctest::Approx(7.0));
    CHECK(g.z.at(1, 1) == doctest::Approx(0.0));
}
