#include "bv/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "bv/errors.hpp"
#include "bv/io.hpp"
#include "bv/patch.hpp"
#include "bv/render.hpp"
#include "bv/rng.hpp"

namespace bv {

using nlohmann::json;
namespace fs = std::filesystem;

PipelineConfig load_config(const fs::path& path) {
    json doc;
    try {
        doc = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw ParseError("config " + path.string() + ": " + e.what());
    }
    PipelineConfig cfg;
    cfg.root = path.has_parent_path() ? path.parent_path() : fs::path(".");
    auto resolve = [&](const std::string& rel) { return cfg.root / rel; };

    cfg.pose_file = resolve(doc.at("pose_file").get<std::string>());
    for (const json& m : doc.at("mesh_files")) cfg.mesh_files.push_back(resolve(m.get<std::string>()));
    cfg.footprint_file = resolve(doc.at("footprint_file").get<std::string>());
    if (doc.contains("labels_file")) cfg.labels_file = resolve(doc["labels_file"].get<std::string>());
    cfg.image_dir = resolve(doc.value("image_dir", "images"));
    cfg.occlusion_threshold_m = doc.value("occlusion_threshold_m", 2.0);
    if (doc.contains("ground_filter")) {
        const json& g = doc["ground_filter"];
        cfg.ground_filter.max_object_size = g.value("max_object_size_m", 200.0);
        cfg.ground_filter.min_window = g.value("min_window_m", 10.0);
        cfg.ground_filter.elevation_threshold = g.value("elevation_threshold_m", 0.2);
    }
    cfg.gsd = doc.value("gsd_m_per_px", 0.1);
    cfg.dsm_cell = doc.value("dsm_cell_m", 0.5);
    cfg.sample_size = doc.value("sample_size_px", 224);
    cfg.near_clip = doc.value("near_clip_m", 1.0);
    cfg.far_clip = doc.value("far_clip_m", 5000.0);
    cfg.background_faces = doc.value("background_faces", 0);
    cfg.train_min_visible_fraction = doc.value("train_min_visible_fraction", 0.5);
    if (doc.contains("network")) {
        cfg.net_base_width = doc["network"].value("base_width", 64);
        cfg.net_bottleneck = doc["network"].value("bottleneck", 256);
    }
    if (doc.contains("train")) {
        const json& t = doc["train"];
        cfg.train.epochs = t.value("epochs", 50);
        cfg.train.initial_lr = t.value("initial_lr", 0.1);
        cfg.train.decay_factor = t.value("decay_factor", 0.2);
        cfg.train.decay_every = t.value("decay_every", 10);
        cfg.train.train_fraction = t.value("train_fraction", 0.7);
        cfg.train.batch_size = t.value("batch_size", 32);
        cfg.train.early_stop_test_acc = t.value("early_stop_test_acc", 2.0);
    }
    cfg.output_dir = resolve(doc.value("output_dir", "out"));
    if (doc.contains("weights_file"))
        cfg.weights_file = resolve(doc["weights_file"].get<std::string>());
    cfg.seed = doc.value("seed", uint64_t(42));
    cfg.train.seed = cfg.seed;

    if (!(cfg.occlusion_threshold_m > 0)) throw ValidationError("occlusion threshold must be positive");
    if (!(cfg.gsd > 0) || !(cfg.dsm_cell > 0)) throw ValidationError("gsd and dsm cell must be positive");
    for (const fs::path& p : {cfg.pose_file, cfg.footprint_file})
        if (!fs::exists(p)) throw MissingInput("config references missing file: " + p.string());
    for (const fs::path& p : cfg.mesh_files)
        if (!fs::exists(p)) throw MissingInput("config references missing mesh: " + p.string());
    return cfg;
}

namespace {

std::string hex64(uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

uint64_t hash_inputs(const std::vector<fs::path>& files, const std::string& params) {
    uint64_t h = fnv1a(params.data(), params.size());
    for (const fs::path& p : files) {
        auto fh = file_content_hash(p);
        if (!fh) throw MissingInput("missing input file: " + p.string());
        h = fnv1a(&*fh, sizeof(*fh), h);
    }
    return h;
}

bool stage_fresh(const PipelineConfig& cfg, const std::string& stage, uint64_t input_hash,
                 bool force) {
    if (force) return false;
    fs::path stamp = cfg.output_dir / "stamps" / (stage + ".json");
    if (!fs::exists(stamp)) return false;
    try {
        json doc = json::parse(read_text_file(stamp));
        return doc.value("inputs", "") == hex64(input_hash);
    } catch (...) {
        return false;
    }
}

void write_stamp(const PipelineConfig& cfg, const std::string& stage, uint64_t input_hash) {
    write_text_file(cfg.output_dir / "stamps" / (stage + ".json"),
                    json{{"inputs", hex64(input_hash)}}.dump(2) + "\n");
}

TriangleMesh load_all_meshes(const PipelineConfig& cfg) {
    TriangleMesh mesh;
    for (const fs::path& p : cfg.mesh_files) {
        if (!fs::exists(p)) throw MissingInput("mesh file not found: " + p.string());
        mesh.append(load_mesh(p));
    }
    if (mesh.empty()) throw ValidationError("no triangles loaded from mesh files");
    return mesh;
}

void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
    jobs = std::max(1, jobs);
    if (jobs == 1) {
        for (int i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    for (int w = 0; w < jobs; ++w)
        pool.emplace_back([&]() {
            for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
        });
    for (std::thread& th : pool) th.join();
}

std::string sanitize(const std::string& s) {
    std::string out = s;
    for (char& c : out)
        if (c == '/' || c == '\\' || c == ' ') c = '-';
    return out;
}

std::map<std::string, bool> load_labels(const PipelineConfig& cfg) {
    std::map<std::string, bool> labels;
    if (cfg.labels_file.empty()) return labels;
    if (!fs::exists(cfg.labels_file))
        throw MissingInput("labels file not found: " + cfg.labels_file.string());
    json doc = json::parse(read_text_file(cfg.labels_file));
    for (auto& [id, v] : doc.at("changed").items()) labels[id] = v.get<bool>();
    return labels;
}

}  // namespace

void stage_render(const PipelineConfig& cfg, bool force, int jobs) {
    std::vector<fs::path> inputs = cfg.mesh_files;
    inputs.push_back(cfg.pose_file);
    uint64_t h = hash_inputs(inputs, "render:" + std::to_string(cfg.near_clip) + ":" +
                                         std::to_string(cfg.far_clip));
    if (stage_fresh(cfg, "render", h, force)) return;

    std::vector<CameraView> views = load_poses(cfg.pose_file, cfg.near_clip, cfg.far_clip);
    TriangleMesh mesh = load_all_meshes(cfg);

    fs::create_directories(cfg.output_dir / "depth");
    json manifest = json::array();
    for (const CameraView& v : views)
        manifest.push_back({{"id", v.id},
                            {"pfm", "depth/" + sanitize(v.id) + ".pfm"},
                            {"width", v.width},
                            {"height", v.height}});

    parallel_for(int(views.size()), jobs, [&](int i) {
        const CameraView& v = views[size_t(i)];
        DepthMap d = render_depth(mesh, v);
        save_depth_pfm(cfg.output_dir / "depth" / (sanitize(v.id) + ".pfm"), d);
    });

    write_text_file(cfg.output_dir / "render_manifest.json",
                    json{{"views", manifest},
                         {"near_clip_m", cfg.near_clip},
                         {"far_clip_m", cfg.far_clip}}
                            .dump(2) +
                        "\n");
    write_stamp(cfg, "render", h);
}

void stage_extrude(const PipelineConfig& cfg, bool force) {
    std::vector<fs::path> inputs = cfg.mesh_files;
    inputs.push_back(cfg.footprint_file);
    std::ostringstream params;
    params << "extrude:" << cfg.dsm_cell << ":" << cfg.ground_filter.max_object_size << ":"
           << cfg.ground_filter.min_window << ":" << cfg.ground_filter.elevation_threshold;
    uint64_t h = hash_inputs(inputs, params.str());
    if (stage_fresh(cfg, "extrude", h, force)) return;

    TriangleMesh mesh = load_all_meshes(cfg);
    HeightGrid dsm = rasterize_dsm(mesh, cfg.dsm_cell, 5.0);
    GroundFilterResult ground = filter_ground(dsm, cfg.ground_filter);
    save_height_grid(cfg.output_dir / "dsm.pfm", dsm);
    save_height_grid(cfg.output_dir / "ground.pfm", ground.ground);

    std::vector<Footprint> fps = load_footprints(cfg.footprint_file);
    json buildings = json::array();
    json failures = json::array();
    for (const Footprint& fp : fps) {
        try {
            Lod1Building b = extrude_footprint(fp, dsm, ground.ground);
            json poly = json::array();
            for (const Vec2& p : b.footprint) poly.push_back({p.x, p.y});
            buildings.push_back({{"id", b.id},
                                 {"base_elev", b.base_elev},
                                 {"roof_elev", b.roof_elev},
                                 {"footprint", poly}});
        } catch (const std::exception& e) {
            failures.push_back({{"id", fp.id}, {"error", e.what()}});
        }
    }
    write_text_file(cfg.output_dir / "lod1.json",
                    json{{"buildings", buildings}, {"failures", failures}}.dump(2) + "\n");
    write_stamp(cfg, "extrude", h);
}

namespace {

std::vector<Lod1Building> load_lod1(const PipelineConfig& cfg, std::vector<std::string>* failures) {
    fs::path path = cfg.output_dir / "lod1.json";
    if (!fs::exists(path))
        throw MissingArtifact("lod1.json not found; run the extrude stage first");
    json doc = json::parse(read_text_file(path));
    std::vector<Lod1Building> out;
    for (const json& e : doc.at("buildings")) {
        Footprint fp;
        fp.id = e.at("id").get<std::string>();
        for (const json& p : e.at("footprint")) fp.polygon.push_back({p[0], p[1]});
        double base = e.at("base_elev").get<double>();
        double roof = e.at("roof_elev").get<double>();
        // rebuild the solid from its persisted footprint and elevations
        Lod1Building b;
        b.id = fp.id;
        b.base_elev = base;
        b.roof_elev = roof;
        b.footprint = fp.polygon;
        for (const Vec2& p : fp.polygon) b.roof_face.push_back({p.x, p.y, roof});
        size_t n = fp.polygon.size();
        for (size_t i = 0; i < n; ++i) {
            Vec2 a = fp.polygon[i], c = fp.polygon[(i + 1) % n];
            Vec2 ev = c - a;
            FacadeQuad q;
            q.outward = Vec2{ev.y, -ev.x}.normalized();
            q.corners = {Vec3{a.x, a.y, base}, Vec3{c.x, c.y, base}, Vec3{c.x, c.y, roof},
                         Vec3{a.x, a.y, roof}};
            b.facades.push_back(q);
        }
        out.push_back(std::move(b));
    }
    if (failures)
        for (const json& e : doc.at("failures")) failures->push_back(e.at("id").get<std::string>());
    return out;
}

json bbox_json(const BBox& b) { return {b.min_x, b.min_y, b.max_x, b.max_y}; }

// Virtual ground/air faces used to harvest background training samples from
// empty terrain.
std::vector<Face> make_background_faces(const PipelineConfig& cfg,
                                        const std::vector<Footprint>& fps,
                                        const HeightGrid& ground) {
    std::vector<Face> faces;
    if (cfg.background_faces <= 0) return faces;
    Rng rng(cfg.seed ^ 0xb6ull);

    double min_x = 1e300, max_x = -1e300, min_y = 1e300, max_y = -1e300;
    for (const Footprint& fp : fps)
        for (const Vec2& p : fp.polygon) {
            min_x = std::min(min_x, p.x);
            max_x = std::max(max_x, p.x);
            min_y = std::min(min_y, p.y);
            max_y = std::max(max_y, p.y);
        }
    auto clear_of_footprints = [&](Vec2 c, double r) {
        for (const Footprint& fp : fps) {
            double fx0 = 1e300, fx1 = -1e300, fy0 = 1e300, fy1 = -1e300;
            for (const Vec2& p : fp.polygon) {
                fx0 = std::min(fx0, p.x);
                fx1 = std::max(fx1, p.x);
                fy0 = std::min(fy0, p.y);
                fy1 = std::max(fy1, p.y);
            }
            if (c.x + r > fx0 - 2 && c.x - r < fx1 + 2 && c.y + r > fy0 - 2 && c.y - r < fy1 + 2)
                return false;
        }
        return true;
    };

    int made = 0, guard = 0;
    while (made < cfg.background_faces && guard++ < cfg.background_faces * 40) {
        Vec2 c{rng.uniform(min_x, max_x), rng.uniform(min_y, max_y)};
        double half = rng.uniform(3.0, 6.0);
        if (!clear_of_footprints(c, half)) continue;
        double gz = ground.sample(c.x, c.y);
        if (std::isnan(gz)) continue;

        Face f;
        f.building_id = "__background__";
        f.id = "bg" + std::to_string(made);
        if (made % 2 == 0) {
            // horizontal patch floating just above the terrain
            double z = gz + 0.05;
            f.kind = FaceKind::Roof;
            f.normal = {0, 0, 1};
            f.loop = {{c.x - half, c.y - half, z},
                      {c.x + half, c.y - half, z},
                      {c.x + half, c.y + half, z},
                      {c.x - half, c.y + half, z}};
        } else {
            // vertical quad over empty ground (the scene behind it shows through)
            double hgt = rng.uniform(4.0, 8.0);
            bool along_x = rng.uniform() < 0.5;
            Vec2 a = along_x ? Vec2{c.x - half, c.y} : Vec2{c.x, c.y - half};
            Vec2 b = along_x ? Vec2{c.x + half, c.y} : Vec2{c.x, c.y + half};
            f.kind = FaceKind::Facade;
            Vec2 ev = (b - a).normalized();
            f.outward2d = {ev.y, -ev.x};
            f.normal = {f.outward2d.x, f.outward2d.y, 0};
            f.loop = {{a.x, a.y, gz}, {b.x, b.y, gz}, {b.x, b.y, gz + hgt}, {a.x, a.y, gz + hgt}};
        }
        faces.push_back(std::move(f));
        ++made;
    }
    return faces;
}

}  // namespace

void stage_extract(const PipelineConfig& cfg, bool force, int jobs) {
    fs::path lod1_path = cfg.output_dir / "lod1.json";
    fs::path render_manifest = cfg.output_dir / "render_manifest.json";
    if (!fs::exists(render_manifest))
        throw MissingArtifact("render_manifest.json not found; run the render stage first");
    if (!fs::exists(lod1_path))
        throw MissingArtifact("lod1.json not found; run the extrude stage first");

    std::vector<fs::path> inputs = {cfg.pose_file, lod1_path, render_manifest};
    std::ostringstream params;
    params << "extract:" << cfg.gsd << ":" << cfg.occlusion_threshold_m << ":" << cfg.sample_size
           << ":" << cfg.background_faces << ":" << cfg.seed;
    uint64_t h = hash_inputs(inputs, params.str());
    if (stage_fresh(cfg, "extract", h, force)) return;

    std::vector<CameraView> views = load_poses(cfg.pose_file, cfg.near_clip, cfg.far_clip);
    std::vector<Lod1Building> buildings = load_lod1(cfg, nullptr);
    std::map<std::string, bool> labels = load_labels(cfg);
    std::vector<Footprint> fps = load_footprints(cfg.footprint_file);

    std::vector<Face> faces;
    for (const Lod1Building& b : buildings)
        for (Face& f : enumerate_faces(b)) faces.push_back(std::move(f));
    if (cfg.background_faces > 0) {
        HeightGrid ground = load_height_grid(cfg.output_dir / "ground.pfm");
        for (Face& f : make_background_faces(cfg, fps, ground)) faces.push_back(std::move(f));
    }

    fs::create_directories(cfg.output_dir / "samples");

    struct ViewData {
        CameraView view;
        RgbImage color;
        DepthMap depth;
    };
    std::vector<ViewData> vds(views.size());
    parallel_for(int(views.size()), jobs, [&](int i) {
        const CameraView& v = views[size_t(i)];
        fs::path img = cfg.image_dir / (v.id + ".png");
        if (!fs::exists(img)) throw MissingInput("view image not found: " + img.string());
        vds[size_t(i)].view = v;
        vds[size_t(i)].color = undistort_image(read_png(img), v.distortion);
        vds[size_t(i)].depth =
            load_depth_pfm(cfg.output_dir / "depth" / (sanitize(v.id) + ".pfm"), cfg.near_clip,
                           cfg.far_clip);
    });

    struct Row {
        SampleRecord rec;
        bool write_files = false;
    };
    std::vector<Row> rows(faces.size() * views.size());

    parallel_for(int(faces.size() * views.size()), jobs, [&](int idx) {
        const Face& face = faces[size_t(idx) / views.size()];
        const ViewData& vd = vds[size_t(idx) % views.size()];

        PatchSample ps = extract_patch(face, vd.view, vd.color, vd.depth, cfg.gsd,
                                       cfg.occlusion_threshold_m);
        Row& row = rows[size_t(idx)];
        row.rec.key = sanitize(face.building_id) + "_" +
                      sanitize(face.id.substr(face.id.find('/') + 1)) + "_" + sanitize(vd.view.id);
        row.rec.building_id = face.building_id;
        row.rec.face_id = face.id;
        row.rec.view_id = vd.view.id;
        row.rec.kind = face.kind;
        row.rec.outward = face.outward2d;
        row.rec.projected_area_px2 = ps.projected_area_px2;
        row.rec.visible_area_px2 = ps.visible_area_px2;

        if (!labels.empty()) {
            bool is_bg = face.building_id == "__background__" ||
                         (labels.count(face.building_id) && labels.at(face.building_id));
            row.rec.label = is_bg ? 2 : (face.kind == FaceKind::Roof ? 0 : 1);
        }

        if (ps.bbox && ps.bbox->width() >= 8 && ps.bbox->height() >= 8) {
            row.rec.usable = true;
            row.rec.bbox = *ps.bbox;
            SampleImage sample = assemble_sample(ps, cfg.sample_size);

            RgbImage png(cfg.sample_size, cfg.sample_size);
            Grid<float> depth_channel(cfg.sample_size, cfg.sample_size);
            for (int r = 0; r < cfg.sample_size; ++r)
                for (int c = 0; c < cfg.sample_size; ++c) {
                    float* px = png.at(r, c);
                    px[0] = sample.at(0, r, c);
                    px[1] = sample.at(1, r, c);
                    px[2] = sample.at(2, r, c);
                    depth_channel.at(r, c) = sample.at(3, r, c);
                }
            write_png(cfg.output_dir / "samples" / (row.rec.key + ".png"), png);
            write_pfm(cfg.output_dir / "samples" / (row.rec.key + ".pfm"), depth_channel);
        }
    });

    std::sort(rows.begin(), rows.end(),
              [](const Row& a, const Row& b) { return a.rec.key < b.rec.key; });
    json manifest = json::array();
    for (const Row& row : rows) {
        const SampleRecord& r = row.rec;
        json e = {{"key", r.key},
                  {"building_id", r.building_id},
                  {"face_id", r.face_id},
                  {"view_id", r.view_id},
                  {"kind", r.kind == FaceKind::Roof ? "roof" : "facade"},
                  {"outward", {r.outward.x, r.outward.y}},
                  {"projected_area_px2", r.projected_area_px2},
                  {"visible_area_px2", r.visible_area_px2},
                  {"usable", r.usable}};
        if (r.usable) e["bbox"] = bbox_json(r.bbox);
        if (r.label >= 0) e["label"] = r.label;
        manifest.push_back(e);
    }
    write_text_file(cfg.output_dir / "samples_manifest.json",
                    json{{"samples", manifest}, {"sample_size_px", cfg.sample_size}}.dump(2) +
                        "\n");
    write_stamp(cfg, "extract", h);
}

std::vector<SampleRecord> load_samples_manifest(const fs::path& path) {
    if (!fs::exists(path))
        throw MissingArtifact("samples manifest not found: " + path.string());
    json doc = json::parse(read_text_file(path));
    std::vector<SampleRecord> out;
    for (const json& e : doc.at("samples")) {
        SampleRecord r;
        r.key = e.at("key").get<std::string>();
        r.building_id = e.at("building_id").get<std::string>();
        r.face_id = e.at("face_id").get<std::string>();
        r.view_id = e.at("view_id").get<std::string>();
        r.kind = e.at("kind").get<std::string>() == "roof" ? FaceKind::Roof : FaceKind::Facade;
        r.outward = {e.at("outward")[0].get<double>(), e.at("outward")[1].get<double>()};
        r.projected_area_px2 = e.at("projected_area_px2").get<double>();
        r.visible_area_px2 = e.at("visible_area_px2").get<double>();
        r.usable = e.at("usable").get<bool>();
        if (r.usable) {
            r.bbox = {e.at("bbox")[0].get<int>(), e.at("bbox")[1].get<int>(),
                      e.at("bbox")[2].get<int>(), e.at("bbox")[3].get<int>()};
        }
        r.label = e.value("label", -1);
        out.push_back(std::move(r));
    }
    return out;
}

net::Tensor load_sample_tensor(const fs::path& samples_dir, const std::string& key) {
    RgbImage png = read_png(samples_dir / (key + ".png"));
    Grid<float> depth = read_pfm(samples_dir / (key + ".pfm"));
    int I = png.width;
    net::Tensor x({4, I, I});
    for (int r = 0; r < I; ++r)
        for (int c = 0; c < I; ++c) {
            const float* px = png.at(r, c);
            x.data[(size_t(0) * I + r) * I + c] = px[0];
            x.data[(size_t(1) * I + r) * I + c] = px[1];
            x.data[(size_t(2) * I + r) * I + c] = px[2];
            x.data[(size_t(3) * I + r) * I + c] = depth.at(r, c);
        }
    return x;
}

void stage_train(const PipelineConfig& cfg, bool force) {
    fs::path manifest_path = cfg.output_dir / "samples_manifest.json";
    if (!fs::exists(manifest_path))
        throw MissingArtifact("samples manifest not found; run the extract stage first");
    uint64_t h = hash_inputs({manifest_path},
                             "train:" + std::to_string(cfg.train.epochs) + ":" +
                                 std::to_string(cfg.train.seed) + ":" +
                                 std::to_string(cfg.net_base_width) + ":" +
                                 std::to_string(cfg.net_bottleneck) + ":" +
                                 std::to_string(cfg.train.early_stop_test_acc) + ":" +
                                 std::to_string(cfg.train_min_visible_fraction));
    if (stage_fresh(cfg, "train", h, force)) return;

    std::vector<SampleRecord> records = load_samples_manifest(manifest_path);
    net::Dataset data;
    for (const SampleRecord& r : records) {
        if (!r.usable || r.label < 0) continue;
        // curate the training set: patches mostly hidden behind occluders
        // carry the occluder's appearance, not their label's
        double fraction = r.projected_area_px2 > 0 ? r.visible_area_px2 / r.projected_area_px2
                                                   : 0.0;
        if (fraction < cfg.train_min_visible_fraction) continue;
        net::LabeledSample s;
        s.x = load_sample_tensor(cfg.output_dir / "samples", r.key);
        s.label = r.label;
        data.samples.push_back(std::move(s));
    }
    if (data.samples.empty())
        throw MissingArtifact("no labeled samples available for training (labels_file missing?)");

    net::FfpConfig ncfg;
    ncfg.in_channels = 4;
    ncfg.base_width = cfg.net_base_width;
    ncfg.bottleneck = cfg.net_bottleneck;
    ncfg.seed = cfg.seed;
    net::FfpNetwork model(ncfg);
    net::TrainResult result = net::train(model, data, cfg.train);

    net::save_weights(cfg.output_dir / "weights.bin", model);
    net::write_train_log_csv(cfg.output_dir / "train_log.csv", result);
    write_stamp(cfg, "train", h);
}

void stage_classify(const PipelineConfig& cfg, bool force) {
    fs::path manifest_path = cfg.output_dir / "samples_manifest.json";
    fs::path weights = cfg.weights_file.empty() ? cfg.output_dir / "weights.bin" : cfg.weights_file;
    if (!fs::exists(manifest_path))
        throw MissingArtifact("samples manifest not found; run the extract stage first");
    if (!fs::exists(weights))
        throw MissingArtifact("weights not found: " + weights.string() + "; run the train stage");

    uint64_t h = hash_inputs({manifest_path, weights}, "classify");
    if (stage_fresh(cfg, "classify", h, force)) return;

    net::FfpNetwork model = net::load_weights(weights);
    std::vector<SampleRecord> records = load_samples_manifest(manifest_path);

    std::ostringstream csv;
    csv << "key,building_id,face_id,view_id,kind,predicted,p_roof,p_facade,p_background\n";
    csv.precision(8);

    std::vector<const SampleRecord*> usable;
    for (const SampleRecord& r : records)
        if (r.usable) usable.push_back(&r);

    const int batch = 32;
    for (size_t b = 0; b < usable.size(); b += batch) {
        size_t e = std::min(usable.size(), b + batch);
        int I = cfg.sample_size;
        net::Tensor x({int(e - b), 4, I, I});
        for (size_t i = b; i < e; ++i) {
            net::Tensor s = load_sample_tensor(cfg.output_dir / "samples", usable[i]->key);
            std::copy(s.data.begin(), s.data.end(), x.data.begin() + int64_t(i - b) * s.numel());
        }
        auto probs = model.predict_probs(x);
        for (size_t i = b; i < e; ++i) {
            const std::vector<double>& p = probs[i - b];
            int arg = 0;
            for (int k = 1; k < 3; ++k)
                if (p[size_t(k)] > p[size_t(arg)]) arg = k;
            const SampleRecord& r = *usable[i];
            csv << r.key << "," << r.building_id << "," << r.face_id << "," << r.view_id << ","
                << (r.kind == FaceKind::Roof ? "roof" : "facade") << "," << arg << "," << p[0]
                << "," << p[1] << "," << p[2] << "\n";
        }
    }
    write_text_file(cfg.output_dir / "predictions.csv", csv.str());
    write_stamp(cfg, "classify", h);
}

namespace {

struct Prediction {
    int predicted = -1;
    double probs[3] = {0, 0, 0};
};

std::map<std::string, Prediction> load_predictions(const fs::path& path) {
    if (!fs::exists(path))
        throw MissingArtifact("predictions.csv not found; run the classify stage first");
    std::map<std::string, Prediction> out;
    std::istringstream in(read_text_file(path));
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (cells.size() < 9) throw ParseError("bad predictions row: " + line);
        Prediction p;
        p.predicted = std::stoi(cells[5]);
        p.probs[0] = std::stod(cells[6]);
        p.probs[1] = std::stod(cells[7]);
        p.probs[2] = std::stod(cells[8]);
        out[cells[0]] = p;
    }
    return out;
}

}  // namespace

void stage_verify(const PipelineConfig& cfg, bool force, const std::string& mode_filter) {
    if (mode_filter != "all" && mode_filter != "nadir" && mode_filter != "oblique" &&
        mode_filter != "3d")
        throw ValidationError("unknown mode: " + mode_filter);
    fs::path manifest_path = cfg.output_dir / "samples_manifest.json";
    fs::path pred_path = cfg.output_dir / "predictions.csv";
    uint64_t h = hash_inputs({manifest_path, pred_path}, "verify:" + mode_filter);
    if (stage_fresh(cfg, "verify", h, force)) return;

    std::vector<SampleRecord> records = load_samples_manifest(manifest_path);
    std::map<std::string, Prediction> preds = load_predictions(pred_path);
    std::map<std::string, bool> labels = load_labels(cfg);

    std::vector<std::string> failures;
    load_lod1(cfg, &failures);

    // group per building
    std::map<std::string, std::vector<ProjectionRecord>> per_building;
    std::map<CandidateRef, PatchVerdict> verdicts;
    std::map<CandidateRef, std::string> ref_key;
    for (const SampleRecord& r : records) {
        if (r.building_id == "__background__") continue;
        ProjectionRecord pr;
        pr.building_id = r.building_id;
        pr.face_id = r.face_id;
        pr.view_id = r.view_id;
        pr.kind = r.kind;
        pr.outward = r.outward;
        pr.projected_area_px2 = r.projected_area_px2;
        pr.visible_area_px2 = r.visible_area_px2;
        pr.usable = r.usable && preds.count(r.key) > 0;
        per_building[r.building_id].push_back(pr);

        if (pr.usable) {
            const Prediction& p = preds.at(r.key);
            PatchVerdict v;
            v.ref = {r.face_id, r.view_id};
            v.predicted = p.predicted;
            v.expected = r.kind == FaceKind::Roof ? 0 : 1;
            v.correct = v.predicted == v.expected;
            v.confidence = p.probs[p.predicted];
            verdicts[v.ref] = v;
            ref_key[v.ref] = r.key;
        }
    }
    for (const std::string& id : failures) per_building.emplace(id, std::vector<ProjectionRecord>{});

    struct ModeRun {
        std::string name;
        VoteMode mode;
    };
    const ModeRun modes[3] = {{"nadir", VoteMode::Nadir},
                              {"oblique", VoteMode::Oblique},
                              {"3d", VoteMode::ThreeD}};

    json summary;
    for (const ModeRun& m : modes) {
        if (mode_filter != "all" && m.name != mode_filter) continue;
        std::ostringstream csv;
        csv << "building_id,decision,n_roof_candidates,n_facade_candidates,n_incorrect,"
               "worst_patch_id\n";
        ConfusionCounts counts;
        long insufficient = 0;
        json decisions;
        for (auto& [bid, recs] : per_building) {
            CandidateSet cs = select_candidates(bid, recs);
            BuildingVerdict bv = vote_single_view_mode(m.mode, cs, verdicts);

            long n_incorrect = 0;
            std::string worst;
            double worst_conf = -1;
            for (const PatchVerdict& pv : bv.patches)
                if (!pv.correct) {
                    ++n_incorrect;
                    if (pv.confidence > worst_conf) {
                        worst_conf = pv.confidence;
                        worst = ref_key.count(pv.ref) ? ref_key.at(pv.ref) : pv.ref.face_id;
                    }
                }
            csv << bid << "," << decision_name(bv.decision) << ","
                << (m.mode == VoteMode::Oblique ? 0 : long(cs.roof.size())) << ","
                << (m.mode == VoteMode::Nadir ? 0 : long(cs.facade.size())) << "," << n_incorrect
                << "," << worst << "\n";
            decisions[bid] = decision_name(bv.decision);

            if (bv.decision == Decision::InsufficientEvidence) ++insufficient;
            if (!labels.empty() && labels.count(bid)) {
                bool truth_changed = labels.at(bid);
                bool flagged = bv.decision != Decision::Unchanged;  // flagged => manual review
                if (truth_changed && flagged) ++counts.tp;
                if (truth_changed && !flagged) ++counts.fn;
                if (!truth_changed && flagged) ++counts.fp;
                if (!truth_changed && !flagged) ++counts.tn;
            }
        }
        write_text_file(cfg.output_dir / ("verdicts_" + m.name + ".csv"), csv.str());

        json ms = {{"TP", counts.tp},
                   {"FN", counts.fn},
                   {"FP", counts.fp},
                   {"TN", counts.tn},
                   {"insufficient", insufficient},
                   {"decisions", decisions}};
        try {
            Metrics metrics = compute_metrics(counts);
            ms["C_P"] = metrics.cp_percent;
            ms["C_N"] = metrics.cn_percent;
        } catch (const UndefinedRatio&) {
            ms["C_P"] = "n/a";
            ms["C_N"] = "n/a";
        }
        summary[m.name] = ms;
    }
    write_text_file(cfg.output_dir / "summary.json", summary.dump(2) + "\n");
    write_stamp(cfg, "verify", h);
}

std::vector<ModeSummary> load_summary(const fs::path& path) {
    if (!fs::exists(path)) throw MissingArtifact("summary.json not found: " + path.string());
    json doc = json::parse(read_text_file(path));
    std::vector<ModeSummary> out;
    for (auto& [mode, e] : doc.items()) {
        ModeSummary s;
        s.mode = mode;
        s.counts.tp = e.at("TP").get<long>();
        s.counts.fn = e.at("FN").get<long>();
        s.counts.fp = e.at("FP").get<long>();
        s.counts.tn = e.at("TN").get<long>();
        s.insufficient = e.at("insufficient").get<long>();
        if (e.at("C_P").is_number()) {
            s.metrics_defined = true;
            s.metrics.cp_percent = e.at("C_P").get<double>();
            s.metrics.cn_percent = e.at("C_N").get<double>();
        }
        for (auto& [bid, d] : e.at("decisions").items()) {
            std::string name = d.get<std::string>();
            s.decisions[bid] = name == "unchanged"
                                   ? Decision::Unchanged
                                   : (name == "changed" ? Decision::Changed
                                                        : Decision::InsufficientEvidence);
        }
        out.push_back(std::move(s));
    }
    return out;
}

void stage_report(const PipelineConfig& cfg) {
    std::vector<ModeSummary> summaries = load_summary(cfg.output_dir / "summary.json");
    std::ostringstream md;
    md << "# Verification report\n\n";
    md << "| mode | TP | FN | FP | TN | C_P | C_N | insufficient |\n";
    md << "|------|----|----|----|----|-----|-----|--------------|\n";
    for (const ModeSummary& s : summaries) {
        md << "| " << s.mode << " | " << s.counts.tp << " | " << s.counts.fn << " | "
           << s.counts.fp << " | " << s.counts.tn << " | ";
        if (s.metrics_defined)
            md << s.metrics.cp_percent << "% | " << s.metrics.cn_percent << "% | ";
        else
            md << "n/a | n/a | ";
        md << s.insufficient << " |\n";
    }
    md << "\nDecisions per building are in verdicts_<mode>.csv; changed and\n"
          "insufficient-evidence buildings are routed to manual review.\n";
    write_text_file(cfg.output_dir / "report.md", md.str());
}

}  // namespace bv
