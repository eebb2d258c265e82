#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "bv/errors.hpp"
#include "bv/patch.hpp"
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
    return v;
}

}  // namespace

TEST_CASE("dlt identity correspondences give the identity homography") {
    std::vector<Vec2> pts = {{0, 0}, {100, 0}, {100, 80}, {0, 80}, {50, 40}};
    Homography h = dlt_homography(pts, pts);
    for (int i = 0; i < 9; ++i) {
        double expect = (i % 4 == 0) ? 1.0 : 0.0;  // diagonal of the 3x3
        CHECK(h.h.m[size_t(i)] == doctest::Approx(expect).epsilon(1e-9));
    }
}

TEST_CASE("dlt reproduces a square-to-trapezoid map below 1e-9 px") {
    std::vector<Vec2> src = {{0, 0}, {100, 0}, {100, 100}, {0, 100}};
    std::vector<Vec2> dst = {{10, 5}, {90, 12}, {75, 95}, {22, 88}};
    Homography h = dlt_homography(src, dst);
    for (size_t i = 0; i < src.size(); ++i) {
        Vec2 mapped = h.apply(src[i]);
        CHECK(std::abs(mapped.x - dst[i].x) < 1e-9);
        CHECK(std::abs(mapped.y - dst[i].y) < 1e-9);
    }
    // inverse maps back
    Homography inv = h.inverse();
    for (size_t i = 0; i < src.size(); ++i) {
        Vec2 back = inv.apply(dst[i]);
        CHECK(std::abs(back.x - src[i].x) < 1e-8);
        CHECK(std::abs(back.y - src[i].y) < 1e-8);
    }
}

TEST_CASE("dlt recovers a pure in-plane rotation") {
    double c = std::cos(M_PI / 2), s = std::sin(M_PI / 2);
    std::vector<Vec2> src = {{1, 0}, {0, 1}, {-1, 0}, {0, -1}, {2, 3}};
    std::vector<Vec2> dst;
    for (const Vec2& p : src) dst.push_back({c * p.x - s * p.y, s * p.x + c * p.y});
    Homography h = dlt_homography(src, dst);
    // embedded rotation block (normalized so m[8] = 1)
    CHECK(h.h.m[0] == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(h.h.m[1] == doctest::Approx(-1.0).epsilon(1e-9));
    CHECK(h.h.m[3] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(h.h.m[4] == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(h.h.m[6] == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(h.h.m[7] == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("dlt rejects collinear correspondences") {
    std::vector<Vec2> src = {{0, 0}, {1, 1}, {2, 2}, {3, 3}};
    std::vector<Vec2> dst = {{0, 0}, {2, 2}, {4, 4}, {6, 6}};
    CHECK_THROWS_AS(dlt_homography(src, dst), DegenerateConfiguration);
}

TEST_CASE("rectify_patch with identity is bit-exact on the overlap") {
    Rng rng(3);
    RgbImage img{24, 16};
    for (float& p : img.pix) p = float(int(rng.below(256))) / 255.f;
    DepthMap depth(24, 16, 1, 100);
    for (double& z : depth.z) z = 0.2;

    Homography ident;
    RectifiedPatch rp = rectify_patch(img, depth, ident, 24, 16);
    for (int r = 0; r < 16; ++r)
        for (int c = 0; c < 24; ++c) {
            CHECK(rp.color_valid.at(r, c) == 1);
            for (int ch = 0; ch < 3; ++ch) CHECK(rp.color.at(r, c)[ch] == img.at(r, c)[ch]);
        }
}

TEST_CASE("2x scale doubles the checker period and keeps cell-center values") {
    // checkerboard with 4x4 px cells; cell interiors are constant, so any
    // bilinear sample strictly inside a cell is exact
    const int N = 32, cell = 4;
    RgbImage img{N, N};
    for (int r = 0; r < N; ++r)
        for (int c = 0; c < N; ++c) {
            float v = ((r / cell + c / cell) % 2 == 0) ? 1.f : 0.f;
            img.at(r, c)[0] = img.at(r, c)[1] = img.at(r, c)[2] = v;
        }
    DepthMap depth(N, N, 1, 100);

    // H maps image -> rectified; a 2x zoom means rect = 2 * image
    Homography h;
    h.h.m = {2, 0, 0, 0, 2, 0, 0, 0, 1};
    RectifiedPatch rp = rectify_patch(img, depth, h, 2 * N, 2 * N);

    // cell centers keep exact values at the doubled period
    for (int cr = 0; cr < N / cell; ++cr)
        for (int cc = 0; cc < N / cell; ++cc) {
            float want = ((cr + cc) % 2 == 0) ? 1.f : 0.f;
            int rect_r = cr * 2 * cell + cell;  // center of the doubled cell
            int rect_c = cc * 2 * cell + cell;
            CHECK(rp.color.at(rect_r, rect_c)[0] == want);
        }
    // the period doubles: runs along a row switch every 2*cell rect pixels
    int mid = cell;  // a row through cell interiors
    for (int c = 2; c + 2 < 2 * N; ++c) {
        float a = rp.color.at(mid, c)[0];
        if (c % (2 * cell) >= 2 && c % (2 * cell) < 2 * cell - 2) {
            float b = rp.color.at(mid, (c / (2 * cell)) * (2 * cell) + cell)[0];
            CHECK(std::abs(a - b) < 1e-6);  // constant inside each doubled cell
        }
    }
}

TEST_CASE("warp then inverse-warp of a smooth gradient is within 2 levels") {
    const int N = 64;
    RgbImage img{N, N};
    for (int r = 0; r < N; ++r)
        for (int c = 0; c < N; ++c) {
            float v = float((r + c) / (2.0 * (N - 1)));
            img.at(r, c)[0] = img.at(r, c)[1] = img.at(r, c)[2] = v;
        }
    DepthMap depth(N, N, 1, 100);

    // mild projective warp
    std::vector<Vec2> src = {{0, 0}, {double(N), 0}, {double(N), double(N)}, {0, double(N)}};
    std::vector<Vec2> dst = {{3, 2}, {N - 2.0, 4.0}, {N - 4.0, N - 3.0}, {2.0, N - 5.0}};
    Homography h = dlt_homography(src, dst);

    RectifiedPatch warped = rectify_patch(img, depth, h, N, N);
    RgbImage wimg = warped.color;
    RectifiedPatch back = rectify_patch(wimg, depth, h.inverse(), N, N);

    for (int r = 2; r < N - 2; ++r)
        for (int c = 2; c < N - 2; ++c) {
            if (!back.color_valid.at(r, c)) continue;
            // skip pixels whose warped source fell near the border
            Vec2 fwd = h.apply({c + 0.5, r + 0.5});
            if (fwd.x < 2 || fwd.y < 2 || fwd.x > N - 2 || fwd.y > N - 2) continue;
            double err = std::abs(back.color.at(r, c)[0] - img.at(r, c)[0]);
            CHECK(err < 2.0 / 255.0);
        }
}

TEST_CASE("interpolate_face_depth trivial and oracle cases") {
    Grid<double> flat = interpolate_face_depth({12, 12, 12, 12}, 9, 7);
    for (double v : flat.v) CHECK(v == doctest::Approx(12.0));

    // corners 0 on top, 10 on bottom: center is 5
    CHECK(bilinear_corners({0, 0, 10, 10}, 0.5, 0.5) == doctest::Approx(5.0));

    // nested 1D interpolation oracle at (s, t) = (1/4, 3/4), corners TL=1,
    // TR=2, BR=3, BL=4: top = 1.25, bottom = 3.75 (interpolating BL->BR),
    // value = 0.25*1.25 + 0.75*3.75
    double top = 1 + 0.25 * (2 - 1);
    double bottom = 4 + 0.25 * (3 - 4);
    double expect = (1 - 0.75) * top + 0.75 * bottom;
    CHECK(bilinear_corners({1, 2, 3, 4}, 0.25, 0.75) == doctest::Approx(expect).epsilon(1e-12));

    // raster evaluation matches the closed form at pixel centers
    Grid<double> g = interpolate_face_depth({1, 2, 3, 4}, 8, 4);
    for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 8; ++c) {
            double s = (c + 0.5) / 8, t = (r + 0.5) / 4;
            CHECK(g.at(r, c) == doctest::Approx(bilinear_corners({1, 2, 3, 4}, s, t)));
        }
}

TEST_CASE("occlusion_mask basics, boundary rule and analytic two-plane scene") {
    Grid<double> expected(10, 10, 20.0);
    Grid<double> rendered(10, 10, 20.0);
    Grid<uint8_t> all_visible = occlusion_mask(expected, rendered, 2.0);
    for (uint8_t m : all_visible.v) CHECK(m == 1);

    // foreground plane 3 m in front over the left half
    Grid<double> fg = rendered;
    for (int r = 0; r < 10; ++r)
        for (int c = 0; c < 5; ++c) fg.at(r, c) = 17.0;
    Grid<uint8_t> half = occlusion_mask(expected, fg, 2.0);
    for (int r = 0; r < 10; ++r)
        for (int c = 0; c < 10; ++c) CHECK(half.at(r, c) == (c < 5 ? 0 : 1));

    // difference of exactly 2.0 m stays visible (strict inequality)
    Grid<double> at_threshold(10, 10, 18.0);
    Grid<uint8_t> edge = occlusion_mask(expected, at_threshold, 2.0);
    for (uint8_t m : edge.v) CHECK(m == 1);

    // invalid rendered pixels are occluded
    Grid<double> with_nan = rendered;
    with_nan.at(3, 3) = std::numeric_limits<double>::quiet_NaN();
    CHECK(occlusion_mask(expected, with_nan, 2.0).at(3, 3) == 0);

    Grid<double> wrong(9, 10, 0.0);
    CHECK_THROWS_AS(occlusion_mask(expected, wrong, 2.0), DimensionMismatch);
}

TEST_CASE("occlusion mask is monotone in the threshold and translation-equivariant") {
    Rng rng(17);
    Grid<double> expected(20, 20), rendered(20, 20);
    for (size_t i = 0; i < expected.v.size(); ++i) {
        expected.v[i] = rng.uniform(10.0, 30.0);
        rendered.v[i] = rng.uniform(10.0, 30.0);
    }
    Grid<uint8_t> lo = occlusion_mask(expected, rendered, 1.0);
    Grid<uint8_t> hi = occlusion_mask(expected, rendered, 4.0);
    for (size_t i = 0; i < lo.v.size(); ++i) CHECK(hi.v[i] >= lo.v[i]);

    // equivariance: shift both rasters' contents by (2, 3)
    Grid<double> e2(20, 20, 1e6), r2(20, 20, 1e6);
    for (int r = 0; r < 17; ++r)
        for (int c = 0; c < 18; ++c) {
            e2.at(r + 3, c + 2) = expected.at(r, c);
            r2.at(r + 3, c + 2) = rendered.at(r, c);
        }
    Grid<uint8_t> base = occlusion_mask(expected, rendered, 2.0);
    Grid<uint8_t> shifted = occlusion_mask(e2, r2, 2.0);
    for (int r = 0; r < 17; ++r)
        for (int c = 0; c < 18; ++c) CHECK(shifted.at(r + 3, c + 2) == base.at(r, c));
}

TEST_CASE("visible_bbox tightest box, single pixel and empty cases") {
    Grid<uint8_t> all(50, 50, 1);
    auto b = visible_bbox(all);
    REQUIRE(b.has_value());
    CHECK(b->min_x == 0);
    CHECK(b->min_y == 0);
    CHECK(b->max_x == 49);
    CHECK(b->max_y == 49);

    Grid<uint8_t> one(10, 10, 0);
    one.at(3, 7) = 1;
    auto s = visible_bbox(one);
    REQUIRE(s.has_value());
    CHECK(s->min_x == 7);
    CHECK(s->max_x == 7);
    CHECK(s->min_y == 3);
    CHECK(s->max_y == 3);

    Grid<uint8_t> none(10, 10, 0);
    CHECK(!visible_bbox(none).has_value());
}

TEST_CASE("assemble_sample normalization and size rules") {
    PatchSample p;
    const int N = 64;
    p.color = RgbImage{N, N};
    p.rendered_depth = Grid<double>(N, N, 15.0);
    p.expected_depth = Grid<double>(N, N, 15.0);
    p.mask = Grid<uint8_t>(N, N, 1);
    p.bbox = BBox{0, 0, N - 1, N - 1};

    // constant depth -> all-zero depth channel
    SampleImage s = assemble_sample(p, 32);
    for (int r = 0; r < 32; ++r)
        for (int c = 0; c < 32; ++c) CHECK(s.at(3, r, c) == 0.f);

    // depth spanning [10, 30]: a 20 m pixel maps to 0.5
    PatchSample q = p;
    for (int r = 0; r < N; ++r)
        for (int c = 0; c < N; ++c)
            q.rendered_depth.at(r, c) = (r < N / 2) ? 10.0 : 30.0;
    q.rendered_depth.at(16, 16) = 20.0;
    SampleImage sq = assemble_sample(q, N);  // same size: no resampling
    CHECK(sq.at(3, 16, 16) == doctest::Approx(0.5));
    CHECK(sq.at(3, 0, 0) == doctest::Approx(0.0));
    CHECK(sq.at(3, N - 1, 0) == doctest::Approx(1.0));

    // too-small visible bbox
    PatchSample tiny = p;
    tiny.mask = Grid<uint8_t>(N, N, 0);
    for (int r = 0; r < 7; ++r)
        for (int c = 0; c < 20; ++c) tiny.mask.at(r, c) = 1;
    tiny.bbox = visible_bbox(tiny.mask);
    CHECK_THROWS_AS(assemble_sample(tiny, 32), PatchTooSmall);

    PatchSample empty = p;
    empty.bbox.reset();
    CHECK_THROWS_AS(assemble_sample(empty, 32), PatchTooSmall);
}

TEST_CASE("assemble_sample 2x decimation takes block bilinear values") {
    PatchSample p;
    const int N = 448, T = 224;
    p.color = RgbImage{N, N};
    Rng rng(8);
    for (float& v : p.color.pix) v = float(rng.uniform());
    p.rendered_depth = Grid<double>(N, N, 5.0);
    p.expected_depth = Grid<double>(N, N, 5.0);
    p.mask = Grid<uint8_t>(N, N, 1);
    p.bbox = BBox{0, 0, N - 1, N - 1};

    SampleImage s = assemble_sample(p, T);
    for (int r = 0; r < T; r += 17)
        for (int c = 0; c < T; c += 13) {
            // output center maps to the 2x2 block center: plain average
            double expect = 0;
            for (int dr = 0; dr < 2; ++dr)
                for (int dc = 0; dc < 2; ++dc) expect += p.color.at(2 * r + dr, 2 * c + dc)[0];
            expect /= 4;
            CHECK(s.at(0, r, c) == doctest::Approx(expect).epsilon(1e-6));
        }
}

TEST_CASE("face projection area matches the shoelace oracle exactly") {
    CameraView v = make_view(128, 1, 200);
    Face f;
    f.kind = FaceKind::Roof;
    f.building_id = "b";
    f.id = "b/roof";
    f.normal = {0, 0, 1};
    f.loop = {{-10, -10, -40}, {10, -10, -40}, {12, 8, -40}, {-6, 12, -40}};
    FaceProjection fp = project_face(f, v);
    REQUIRE(fp.in_frustum);
    REQUIRE(fp.pixels.size() == 4);
    double shoelace = 0;
    for (size_t i = 0; i < 4; ++i) {
        const Vec2& a = fp.pixels[i];
        const Vec2& b = fp.pixels[(i + 1) % 4];
        shoelace += a.x * b.y - b.x * a.y;
    }
    CHECK(fp.area_px2 == std::abs(shoelace) / 2);

    // behind the camera: flagged out of frustum
    Face behind = f;
    for (Vec3& p : behind.loop) p.z = 40;
    CHECK(!project_face(behind, v).in_frustum);
}

TEST_CASE("end-to-end: occluder hides the lower half of a facade") {
    // Facade A: vertical quad at y=0, x in [-5,5], z in [0,10], seen from a
    // camera at (0, 20, 5) looking along -y. Occluder B at y=5 spans z <= 5.
    // Rays through B's top edge (z=5 at y=5) hit A exactly at z=5: the lower
    // half of A is hidden, the upper half visible.
    CameraView v;
    v.id = "horiz";
    v.width = v.height = 200;
    v.near_clip = 1;
    v.far_clip = 100;
    double f = 100.0 / std::tan(30.0 * M_PI / 180.0);
    v.proj = projection_from_intrinsics(f, f, 100, 100, 200, 200, 1, 100);
    // looking along -y: camera axes s = (-1,0,0), u = (0,0,1), z_cam = (0,1,0)
    std::array<double, 9> rot = {-1, 0, 0, 0, 0, 1, 0, 1, 0};
    v.view = view_from_pose(rot, {0, 20, 5});

    Face a;
    a.building_id = "A";
    a.id = "A/wall0";
    a.kind = FaceKind::Facade;
    a.normal = {0, 1, 0};
    a.outward2d = {0, 1};
    // loop wound so the outward normal faces +y (toward the camera)
    a.loop = {{5, 0, 0}, {-5, 0, 0}, {-5, 0, 10}, {5, 0, 10}};

    TriangleMesh scene;
    // A's own surface
    scene.vertices = {{-5, 0, 0}, {5, 0, 0}, {5, 0, 10}, {-5, 0, 10}};
    scene.triangles = {{0, 1, 2}, {0, 2, 3}};
    // occluder wall at y = 5, z in [0, 5], wider than A
    TriangleMesh occ;
    occ.vertices = {{-8, 5, 0}, {8, 5, 0}, {8, 5, 5}, {-8, 5, 5}};
    occ.triangles = {{0, 1, 2}, {0, 2, 3}};
    scene.append(occ);

    DepthMap depth = render_depth(scene, v);
    RgbImage color{200, 200};
    for (float& px : color.pix) px = 0.5f;

    PatchSample ps = extract_patch(a, v, color, depth, 0.1, 2.0);
    REQUIRE(ps.bbox.has_value());
    // rectified frame: 100x100 px at 0.1 m/px, row 0 = top (z = 10)
    CHECK(ps.mask.rows == 100);
    CHECK(ps.mask.cols == 100);
    // top half visible: bbox covers rows 0..~50, all columns
    CHECK(ps.bbox->min_y <= 1);
    CHECK(std::abs(ps.bbox->max_y - 50) <= 1);
    CHECK(ps.bbox->min_x <= 1);
    CHECK(ps.bbox->max_x >= 98);
    // and the row just below the split is occluded mid-patch
    CHECK(ps.mask.at(55, 50) == 0);
    CHECK(ps.mask.at(45, 50) == 1);
}
