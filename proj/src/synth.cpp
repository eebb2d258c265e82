#include "bv/synth.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "bv/errors.hpp"
#include "bv/io.hpp"
#include "bv/render.hpp"
#include "bv/rng.hpp"

namespace bv {

using nlohmann::json;

namespace {

// integer lattice hash -> [0,1)
double lattice_noise(double x, double y, double z, uint64_t seed) {
    int64_t ix = int64_t(std::floor(x)), iy = int64_t(std::floor(y)), iz = int64_t(std::floor(z));
    uint64_t h = seed * 0x9e3779b97f4a7c15ull;
    h = fnv1a(&ix, sizeof(ix), h);
    h = fnv1a(&iy, sizeof(iy), h);
    h = fnv1a(&iz, sizeof(iz), h);
    return double(h >> 11) * 0x1.0p-53;
}

double fract(double v) { return v - std::floor(v); }

void add_quad(TriangleMesh& mesh, const Vec3& a, const Vec3& b, const Vec3& c, const Vec3& d,
              Material mat) {
    int base = int(mesh.vertices.size());
    mesh.vertices.insert(mesh.vertices.end(), {a, b, c, d});
    mesh.triangles.push_back({base, base + 1, base + 2});
    mesh.triangles.push_back({base, base + 2, base + 3});
    mesh.materials.push_back(int(mat));
    mesh.materials.push_back(int(mat));
}

void add_box(TriangleMesh& mesh, Vec2 center, double sx, double sy, double z0, double z1,
             Material top, Material side) {
    double x0 = center.x - sx / 2, x1 = center.x + sx / 2;
    double y0 = center.y - sy / 2, y1 = center.y + sy / 2;
    // roof (CCW from above)
    add_quad(mesh, {x0, y0, z1}, {x1, y0, z1}, {x1, y1, z1}, {x0, y1, z1}, top);
    // walls
    add_quad(mesh, {x0, y0, z0}, {x1, y0, z0}, {x1, y0, z1}, {x0, y0, z1}, side);  // south
    add_quad(mesh, {x1, y0, z0}, {x1, y1, z0}, {x1, y1, z1}, {x1, y0, z1}, side);  // east
    add_quad(mesh, {x1, y1, z0}, {x0, y1, z0}, {x0, y1, z1}, {x1, y1, z1}, side);  // north
    add_quad(mesh, {x0, y1, z0}, {x0, y0, z0}, {x0, y0, z1}, {x0, y1, z1}, side);  // west
}

CameraView make_view(const std::string& id, Vec3 eye, Vec3 target, const SyntheticSceneSpec& spec,
                     AngleClass angle_class) {
    Vec3 f = (target - eye).normalized();
    Vec3 up{0, 1, 0};
    if (std::abs(f.dot(up)) > 0.999) up = {0, 1, 0};  // nadir keeps +y as image up
    Vec3 s = f.cross(up);
    if (s.norm() < 1e-9) s = {1, 0, 0};
    s = s.normalized();
    Vec3 u = s.cross(f);

    std::array<double, 9> rot = {s.x, s.y, s.z, u.x, u.y, u.z, -f.x, -f.y, -f.z};

    CameraView v;
    v.id = id;
    v.width = v.height = spec.image_size;
    v.near_clip = spec.near_clip;
    v.far_clip = spec.far_clip;
    v.angle_class = angle_class;
    double focal = (spec.image_size / 2.0) / std::tan(spec.fov_deg * M_PI / 360.0);
    v.view = view_from_pose(rot, eye);
    v.proj = projection_from_intrinsics(focal, focal, spec.image_size / 2.0,
                                        spec.image_size / 2.0, spec.image_size, spec.image_size,
                                        spec.near_clip, spec.far_clip);
    v.distortion.cx = spec.image_size / 2.0;
    v.distortion.cy = spec.image_size / 2.0;
    v.distortion.f = focal;
    v.distortion.k1 = spec.distort_k1;
    return v;
}

}  // namespace

SyntheticScene build_scene(const SyntheticSceneSpec& spec) {
    if (spec.grid_nx < 1 || spec.grid_ny < 1) throw SpecError("scene grid must be at least 1x1");
    if (spec.n_nadir < 1 && spec.n_oblique_dirs < 1)
        throw SpecError("scene needs at least one view");
    if (spec.n_oblique_dirs > 0 && spec.views_per_dir < 1)
        throw SpecError("each oblique direction needs at least one view");
    for (auto& [idx, style] : spec.demolished)
        if (idx < 0 || idx >= spec.grid_nx * spec.grid_ny)
            throw SpecError("demolished index " + std::to_string(idx) + " out of range");

    SyntheticScene scene;
    scene.spec = spec;
    Rng rng(spec.seed);

    double extent_x = spec.grid_nx * spec.spacing;
    double extent_y = spec.grid_ny * spec.spacing;
    Vec2 center{extent_x / 2.0, extent_y / 2.0};

    // ground plane with margin
    double margin = 40.0;
    add_quad(scene.mesh, {-margin, -margin, 0}, {extent_x + margin, -margin, 0},
             {extent_x + margin, extent_y + margin, 0}, {-margin, extent_y + margin, 0},
             Material::Ground);

    std::map<int, DemolitionStyle> demolished(spec.demolished.begin(), spec.demolished.end());

    int idx = 0;
    for (int gy = 0; gy < spec.grid_ny; ++gy) {
        for (int gx = 0; gx < spec.grid_nx; ++gx, ++idx) {
            SceneBuilding b;
            char buf[16];
            std::snprintf(buf, sizeof(buf), "b%02d", idx);
            b.id = buf;
            b.center = {(gx + 0.5) * spec.spacing + rng.uniform(-2.0, 2.0),
                        (gy + 0.5) * spec.spacing + rng.uniform(-2.0, 2.0)};
            b.size_x = rng.uniform(spec.min_size, spec.max_size);
            b.size_y = rng.uniform(spec.min_size, spec.max_size);
            b.height = rng.uniform(spec.min_height, spec.max_height);
            b.floors = std::max(1, int(std::lround(b.height / 3.0)));
            auto it = demolished.find(idx);
            b.demolition = it == demolished.end() ? DemolitionStyle::None : it->second;

            if (b.demolition == DemolitionStyle::None) {
                add_box(scene.mesh, b.center, b.size_x, b.size_y, 0, b.height, Material::Roof,
                        Material::Wall);
            } else if (b.demolition == DemolitionStyle::Slab) {
                add_box(scene.mesh, b.center, b.size_x, b.size_y, 0, 3.0, Material::Roof,
                        Material::Rubble);
            } else {
                // rubble: a jumble of small blocks across the footprint
                int nb = 3;
                for (int ry = 0; ry < nb; ++ry)
                    for (int rx = 0; rx < nb; ++rx) {
                        double h = rng.uniform(0.6, 2.4);
                        Vec2 c{b.center.x + (rx - 1) * b.size_x / 3.2 + rng.uniform(-0.5, 0.5),
                               b.center.y + (ry - 1) * b.size_y / 3.2 + rng.uniform(-0.5, 0.5)};
                        add_box(scene.mesh, c, b.size_x / 3.4, b.size_y / 3.4, 0, h,
                                Material::Rubble, Material::Rubble);
                    }
            }

            Footprint fp;
            fp.id = b.id;
            fp.floors = b.floors;
            double x0 = b.center.x - b.size_x / 2, x1 = b.center.x + b.size_x / 2;
            double y0 = b.center.y - b.size_y / 2, y1 = b.center.y + b.size_y / 2;
            fp.polygon = {{x0, y0}, {x1, y0}, {x1, y1}, {x0, y1}};  // CCW
            scene.footprints.push_back(fp);
            scene.changed[b.id] = b.demolition != DemolitionStyle::None;
            scene.buildings.push_back(b);
        }
    }

    Vec3 target{center.x, center.y, 0};
    for (int i = 0; i < spec.n_nadir; ++i) {
        Vec3 eye{center.x + (i > 0 ? rng.uniform(-8.0, 8.0) : 0.0),
                 center.y + (i > 0 ? rng.uniform(-8.0, 8.0) : 0.0), spec.altitude};
        scene.views.push_back(make_view("nadir_" + std::to_string(i), eye,
                                        {eye.x, eye.y, 0}, spec, AngleClass::Nadir));
    }
    double tilt = spec.tilt_deg * M_PI / 180.0;
    double horiz = spec.altitude * std::tan(tilt);
    static const char* kDirName[] = {"s", "e", "n", "w", "se", "ne", "nw", "sw"};
    for (int d = 0; d < spec.n_oblique_dirs; ++d) {
        double ang = 2.0 * M_PI * d / spec.n_oblique_dirs;
        Vec2 dir{std::sin(ang), -std::cos(ang)};  // s, e, n, w for 4 directions
        for (int k = 0; k < spec.views_per_dir; ++k) {
            // ring positions slide sideways for extra parallax; the look-at
            // point slides along, keeping the tilt angle exact
            Vec2 side{-dir.y, dir.x};
            double slide = spec.views_per_dir > 1
                               ? (k - (spec.views_per_dir - 1) / 2.0) * spec.spacing * 0.8
                               : 0.0;
            Vec3 eye{center.x + dir.x * horiz + side.x * slide,
                     center.y + dir.y * horiz + side.y * slide, spec.altitude};
            Vec3 aim = target + Vec3{side.x * slide, side.y * slide, 0.0};
            std::string name = d < 8 ? kDirName[d] : std::to_string(d);
            scene.views.push_back(make_view("obl_" + name + "_" + std::to_string(k), eye, aim,
                                            spec, AngleClass::Oblique));
        }
    }
    return scene;
}

void material_color(Material m, const Vec3& p, uint64_t seed, float rgb[3]) {
    auto noise = [&](double scale, uint64_t salt) {
        return lattice_noise(p.x / scale, p.y / scale, p.z / scale, seed ^ salt);
    };
    switch (m) {
        case Material::Ground: {
            double n = noise(0.9, 11);
            rgb[0] = float(0.42 + 0.12 * n);
            rgb[1] = float(0.40 + 0.10 * n);
            rgb[2] = float(0.34 + 0.08 * n);
            return;
        }
        case Material::Roof: {
            bool a = fract(p.x / 1.8) < 0.5, b = fract(p.y / 1.8) < 0.5;
            double n = 0.05 * noise(0.5, 13);
            if (a != b) {
                rgb[0] = float(0.66 + n);
                rgb[1] = float(0.24 + n);
                rgb[2] = float(0.20 + n);
            } else {
                rgb[0] = float(0.52 + n);
                rgb[1] = float(0.17 + n);
                rgb[2] = float(0.14 + n);
            }
            return;
        }
        case Material::Wall: {
            // window grid: walls are axis-aligned, so x+y tracks the wall's
            // horizontal run whichever way it faces
            double u = p.x + p.y;
            bool win = fract(u / 2.2) > 0.3 && fract(u / 2.2) < 0.75 && fract(p.z / 2.9) > 0.25 &&
                       fract(p.z / 2.9) < 0.7;
            double n = 0.04 * noise(0.7, 17);
            if (win) {
                rgb[0] = float(0.13 + n);
                rgb[1] = float(0.19 + n);
                rgb[2] = float(0.30 + n);
            } else {
                rgb[0] = float(0.78 + n);
                rgb[1] = float(0.74 + n);
                rgb[2] = float(0.66 + n);
            }
            return;
        }
        case Material::Rubble: {
            double n = noise(0.45, 19);
            double n2 = noise(1.7, 23);
            rgb[0] = float(0.30 + 0.25 * n + 0.08 * n2);
            rgb[1] = float(0.28 + 0.22 * n + 0.08 * n2);
            rgb[2] = float(0.26 + 0.20 * n + 0.06 * n2);
            return;
        }
    }
    rgb[0] = rgb[1] = rgb[2] = 0.5f;
}

namespace {

Vec2 invert_brown(const BrownDistortion& d, Vec2 distorted) {
    Vec2 p = distorted;
    for (int i = 0; i < 10; ++i) {
        Vec2 fwd = d.distort(p);
        p = {p.x - (fwd.x - distorted.x), p.y - (fwd.y - distorted.y)};
    }
    return p;
}

}  // namespace

RgbImage render_color_image(const SyntheticScene& scene, const CameraView& view) {
    Grid<int32_t> ids;
    DepthMap depth = render_depth(scene.mesh, view, &ids);

    RgbImage ideal(view.width, view.height);
    for (int r = 0; r < view.height; ++r) {
        for (int c = 0; c < view.width; ++c) {
            float* px = ideal.at(r, c);
            int32_t tri = ids.at(r, c);
            if (tri < 0) {
                px[0] = 0.05f;  // void; should not be visible with a ground plane
                px[1] = 0.05f;
                px[2] = 0.08f;
                continue;
            }
            Vec3 origin, dir;
            pixel_ray(view, c + 0.5, r + 0.5, origin, dir);
            Vec3 world = origin + dir * depth.metric(r, c);
            Material m = Material(scene.mesh.materials.empty() ? 0
                                                               : scene.mesh.materials[size_t(tri)]);
            material_color(m, world, scene.spec.seed, px);
        }
    }
    if (view.distortion.is_identity()) return ideal;

    // emulate the physical (distorted) photograph: D(q) = I(distort^-1(q))
    RgbImage photo(view.width, view.height);
    for (int r = 0; r < view.height; ++r)
        for (int c = 0; c < view.width; ++c) {
            Vec2 src = invert_brown(view.distortion, {c + 0.5, r + 0.5});
            float* px = photo.at(r, c);
            for (int ch = 0; ch < 3; ++ch) {
                double v = bilinear_sample_rgb(ideal, ch, src.x, src.y);
                px[ch] = std::isnan(v) ? 0.f : float(v);
            }
        }
    return photo;
}

void write_scene(const SyntheticScene& scene, const std::filesystem::path& dir, int sample_size,
                 double gsd) {
    std::filesystem::create_directories(dir / "images");
    save_obj(dir / "mesh.obj", scene.mesh);
    save_footprints(dir / "footprints.geojson", scene.footprints);

    json poses = json::array();
    for (const CameraView& v : scene.views) {
        Vec3 c = v.camera_center();
        json rot = json::array();
        for (int r = 0; r < 3; ++r)
            for (int k = 0; k < 3; ++k) rot.push_back(v.view.at(r, k));
        poses.push_back({{"id", v.id},
                         {"width", v.width},
                         {"height", v.height},
                         {"fx", v.proj.at(0, 0) * v.width / 2.0},
                         {"fy", v.proj.at(1, 1) * v.height / 2.0},
                         {"cx", (1.0 - v.proj.at(0, 2)) * v.width / 2.0},
                         {"cy", (v.proj.at(1, 2) + 1.0) * v.height / 2.0},
                         {"k1", v.distortion.k1},
                         {"k2", v.distortion.k2},
                         {"k3", v.distortion.k3},
                         {"p1", v.distortion.p1},
                         {"p2", v.distortion.p2},
                         {"rotation", rot},
                         {"center", {c.x, c.y, c.z}},
                         {"angle_class", v.angle_class == AngleClass::Nadir ? "nadir" : "oblique"}});
    }
    write_text_file(dir / "poses.json", poses.dump(2) + "\n");

    json labels;
    for (auto& [id, ch] : scene.changed) labels[id] = ch;
    write_text_file(dir / "labels.json", json{{"changed", labels}}.dump(2) + "\n");

    for (const CameraView& v : scene.views)
        write_png(dir / "images" / (v.id + ".png"), render_color_image(scene, v));

    json config = {{"pose_file", "poses.json"},
                   {"mesh_files", {"mesh.obj"}},
                   {"footprint_file", "footprints.geojson"},
                   {"labels_file", "labels.json"},
                   {"image_dir", "images"},
                   {"occlusion_threshold_m", 2.0},
                   {"ground_filter",
                    {{"max_object_size_m", 200.0},
                     {"min_window_m", 10.0},
                     {"elevation_threshold_m", 0.2}}},
                   {"gsd_m_per_px", gsd},
                   {"dsm_cell_m", 0.5},
                   {"sample_size_px", sample_size},
                   {"near_clip_m", scene.spec.near_clip},
                   {"far_clip_m", scene.spec.far_clip},
                   {"output_dir", "out"},
                   {"seed", scene.spec.seed},
                   {"background_faces", 24},
                   {"train_min_visible_fraction", 0.5},
                   {"network", {{"base_width", 8}, {"bottleneck", 32}}},
                   {"train",
                    {{"epochs", 50},
                     {"initial_lr", 0.1},
                     {"decay_factor", 0.2},
                     {"decay_every", 10},
                     {"train_fraction", 0.7},
                     {"batch_size", 32},
                     {"early_stop_test_acc", 0.999}}}};
    write_text_file(dir / "config.json", config.dump(2) + "\n");
}

namespace {

void fill_patch_colors(net::Tensor& x, Material mat, uint64_t seed, double world_scale,
                       Vec2 offset) {
    int I = x.dim(1);
    for (int r = 0; r < I; ++r)
        for (int c = 0; c < I; ++c) {
            float rgb[3];
            Vec3 p{offset.x + c * world_scale, offset.y, r * world_scale};
            if (mat == Material::Roof || mat == Material::Ground)
                p = {offset.x + c * world_scale, offset.y + r * world_scale, 0.0};
            material_color(mat, p, seed, rgb);
            for (int ch = 0; ch < 3; ++ch)
                x.data[(size_t(ch) * I + r) * I + c] = double(rgb[ch]);
        }
}

}  // namespace

net::Dataset make_corpus(const CorpusSpec& spec) {
    if (spec.size % 32 != 0) throw SpecError("corpus sample size must be divisible by 32");
    net::Dataset data;
    data.num_classes = 3;
    Rng rng(spec.seed);
    int I = spec.size;

    for (int cls = 0; cls < 3; ++cls) {
        for (int i = 0; i < spec.per_class; ++i) {
            net::Tensor x({4, I, I});
            uint64_t sample_seed = rng.next();
            double scale = rng.uniform(0.22, 0.4);  // meters per sample pixel
            Vec2 offset{rng.uniform(0.0, 50.0), rng.uniform(0.0, 50.0)};

            Material mat;
            if (spec.matched_color) {
                mat = Material::Ground;  // one shared color process for every class
            } else {
                mat = cls == 0 ? Material::Roof : (cls == 1 ? Material::Wall : Material::Rubble);
            }
            fill_patch_colors(x, mat, sample_seed, scale, offset);

            // depth channel carries the class geometry
            if (cls == 0) {
                // flat roof: constant depth collapses to zero under min-max
                for (int r = 0; r < I; ++r)
                    for (int c = 0; c < I; ++c) x.data[(size_t(3) * I + r) * I + c] = 0.0;
            } else if (cls == 1) {
                // facade seen obliquely: monotone ramp, random direction/slope
                double s0 = rng.uniform(0.0, 0.25), s1 = rng.uniform(0.75, 1.0);
                bool flip = rng.uniform() < 0.5;
                for (int r = 0; r < I; ++r) {
                    double tr = double(r) / (I - 1);
                    double v = s0 + (s1 - s0) * (flip ? 1.0 - tr : tr);
                    for (int c = 0; c < I; ++c) x.data[(size_t(3) * I + r) * I + c] = v;
                }
            } else {
                // rubble/ground clutter: blocky random depth
                double cell = rng.uniform(3.0, 6.0);
                uint64_t dseed = rng.next();
                for (int r = 0; r < I; ++r)
                    for (int c = 0; c < I; ++c)
                        x.data[(size_t(3) * I + r) * I + c] =
                            lattice_noise(c / cell, r / cell, 0, dseed);
            }

            net::LabeledSample s;
            s.x = std::move(x);
            s.label = cls;
            data.samples.push_back(std::move(s));
        }
    }
    return data;
}

net::Dataset strip_depth_channel(const net::Dataset& d) {
    net::Dataset out;
    out.num_classes = d.num_classes;
    for (const net::LabeledSample& s : d.samples) {
        int I = s.x.dim(1);
        net::LabeledSample o;
        o.label = s.label;
        o.x = net::Tensor({3, I, I});
        std::copy_n(s.x.data.begin(), size_t(3) * I * I, o.x.data.begin());
        out.samples.push_back(std::move(o));
    }
    return out;
}

}  // namespace bv
