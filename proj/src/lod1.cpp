#include "bv/lod1.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>

#include <nlohmann/json.hpp>

#include "bv/errors.hpp"
#include "bv/io.hpp"

namespace bv {

using nlohmann::json;

double HeightGrid::sample(double x, double y) const {
    double fx = (x - origin_x) / cell - 0.5;
    double fy = (y - origin_y) / cell - 0.5;
    int c0 = int(std::floor(fx)), r0 = int(std::floor(fy));
    double wx = fx - c0, wy = fy - r0;
    auto val = [&](int r, int c) -> double {
        if (r < 0) r = 0;
        if (c < 0) c = 0;
        if (r >= z.rows) r = z.rows - 1;
        if (c >= z.cols) c = z.cols - 1;
        return z.at(r, c);
    };
    if (fx < -1 || fy < -1 || fx > z.cols || fy > z.rows)
        return std::numeric_limits<double>::quiet_NaN();
    double a = (1 - wx) * val(r0, c0) + wx * val(r0, c0 + 1);
    double b = (1 - wx) * val(r0 + 1, c0) + wx * val(r0 + 1, c0 + 1);
    return (1 - wy) * a + wy * b;
}

namespace {

enum class MinMax { Min, Max };

// 1D sliding min/max with a monotonic deque; NaN treated as missing.
void sliding_extreme_1d(const float* src, float* dst, int n, int stride, int win, MinMax mode) {
    std::deque<int> dq;
    int half = win / 2;
    auto better = [&](float a, float b) { return mode == MinMax::Min ? a <= b : a >= b; };
    for (int i = 0; i < n + half; ++i) {
        if (i < n) {
            float v = src[i * stride];
            if (!std::isnan(v)) {
                while (!dq.empty() && better(v, src[dq.back() * stride])) dq.pop_back();
                dq.push_back(i);
            }
        }
        int out = i - half;
        if (out < 0) continue;
        while (!dq.empty() && dq.front() < out - half) dq.pop_front();
        dst[out * stride] = dq.empty() ? std::numeric_limits<float>::quiet_NaN()
                                       : src[dq.front() * stride];
    }
}

Grid<float> filter_2d(const Grid<float>& g, int win, MinMax mode) {
    Grid<float> tmp(g.rows, g.cols), out(g.rows, g.cols);
    for (int r = 0; r < g.rows; ++r)
        sliding_extreme_1d(&g.v[size_t(r) * g.cols], &tmp.v[size_t(r) * g.cols], g.cols, 1, win,
                           mode);
    for (int c = 0; c < g.cols; ++c)
        sliding_extreme_1d(&tmp.v[size_t(c)], &out.v[size_t(c)], g.rows, g.cols, win, mode);
    return out;
}

Grid<float> morphological_opening(const Grid<float>& g, int win) {
    return filter_2d(filter_2d(g, win, MinMax::Min), win, MinMax::Max);
}

}  // namespace

GroundFilterResult filter_ground(const HeightGrid& grid, const GroundFilterParams& params) {
    if (grid.z.empty()) throw EmptyGrid();
    if (!(params.max_object_size > 0 && params.min_window > 0 && params.elevation_threshold > 0))
        throw ValidationError("ground filter parameters must be positive");
    if (params.min_window > params.max_object_size)
        throw ValidationError("min filtering window exceeds maximum object size");

    auto to_cells = [&](double meters) {
        int w = int(std::ceil(meters / grid.cell));
        if (w % 2 == 0) ++w;  // odd window, centered
        return std::max(w, 3);
    };

    int max_win = to_cells(params.max_object_size);
    std::vector<int> windows;
    for (int w = to_cells(params.min_window); w < max_win; w = 2 * w + 1) windows.push_back(w);
    windows.push_back(max_win);

    // progressive opening; the non-ground test compares the input against the
    // evolving opened surface, so drops cannot accumulate unflagged
    Grid<float> surface = grid.z;
    Grid<uint8_t> is_ground(grid.z.rows, grid.z.cols, 1);
    for (int win : windows) {
        Grid<float> opened = morphological_opening(surface, win);
        for (size_t i = 0; i < surface.v.size(); ++i) {
            float d = grid.z.v[i] - opened.v[i];
            if (!std::isnan(d) && d > float(params.elevation_threshold)) is_ground.v[i] = 0;
        }
        surface = std::move(opened);
    }

    HeightGrid ground;
    ground.origin_x = grid.origin_x;
    ground.origin_y = grid.origin_y;
    ground.cell = grid.cell;
    ground.z = Grid<float>(grid.z.rows, grid.z.cols);
    for (size_t i = 0; i < ground.z.v.size(); ++i)
        ground.z.v[i] = is_ground.v[i] ? grid.z.v[i] : surface.v[i];
    return {std::move(ground), std::move(is_ground)};
}

Lod1Building extrude_footprint(const Footprint& fp, const HeightGrid& surface,
                               const HeightGrid& ground) {
    if (fp.polygon.size() < 3) throw ValidationError("footprint " + fp.id + ": fewer than 3 vertices");
    if (surface.z.empty() || ground.z.empty()) throw EmptyGrid();

    double min_x = fp.polygon[0].x, max_x = min_x, min_y = fp.polygon[0].y, max_y = min_y;
    for (const Vec2& p : fp.polygon) {
        min_x = std::min(min_x, p.x);
        max_x = std::max(max_x, p.x);
        min_y = std::min(min_y, p.y);
        max_y = std::max(max_y, p.y);
    }

    auto col_range = [&](const HeightGrid& g, double lo, double hi, bool is_x) {
        double o = is_x ? g.origin_x : g.origin_y;
        int n = is_x ? g.z.cols : g.z.rows;
        int a = std::max(0, int(std::floor((lo - o) / g.cell - 0.5)));
        int b = std::min(n - 1, int(std::ceil((hi - o) / g.cell - 0.5)));
        return std::pair<int, int>{a, b};
    };

    double roof_sum = 0;
    long roof_n = 0;
    auto [c0, c1] = col_range(surface, min_x, max_x, true);
    auto [r0, r1] = col_range(surface, min_y, max_y, false);
    for (int r = r0; r <= r1; ++r) {
        for (int c = c0; c <= c1; ++c) {
            float v = surface.z.at(r, c);
            if (std::isnan(v)) continue;
            if (point_in_polygon({surface.center_x(c), surface.center_y(r)}, fp.polygon)) {
                roof_sum += v;
                ++roof_n;
            }
        }
    }

    double base = std::numeric_limits<double>::infinity();
    auto [gc0, gc1] = col_range(ground, min_x, max_x, true);
    auto [gr0, gr1] = col_range(ground, min_y, max_y, false);
    for (int r = gr0; r <= gr1; ++r) {
        for (int c = gc0; c <= gc1; ++c) {
            float v = ground.z.at(r, c);
            if (std::isnan(v)) continue;
            if (point_in_polygon({ground.center_x(c), ground.center_y(r)}, fp.polygon))
                base = std::min(base, double(v));
        }
    }

    double roof;
    if (roof_n == 0) {
        // no covered cell center: fall back to attribute-driven extrusion
        Vec2 centroid = polygon_centroid(fp.polygon);
        if (!std::isfinite(base)) {
            double g = ground.sample(centroid.x, centroid.y);
            if (std::isnan(g))
                throw NoCoverage("footprint " + fp.id + ": no grid coverage");
            base = g;
        }
        if (!fp.floors)
            throw NoCoverage("footprint " + fp.id +
                             ": no covered surface cells and no floor attribute");
        roof = base + *fp.floors * 3.0;
    } else {
        roof = roof_sum / double(roof_n);
        if (!std::isfinite(base)) {
            Vec2 centroid = polygon_centroid(fp.polygon);
            double g = ground.sample(centroid.x, centroid.y);
            if (std::isnan(g)) throw NoCoverage("footprint " + fp.id + ": no ground coverage");
            base = g;
        }
    }
    if (!(roof > base))
        throw DegenerateHeight("footprint " + fp.id + ": roof " + std::to_string(roof) +
                               " not above base " + std::to_string(base));

    Lod1Building b;
    b.id = fp.id;
    b.base_elev = base;
    b.roof_elev = roof;
    b.footprint = fp.polygon;
    for (const Vec2& p : fp.polygon) b.roof_face.push_back({p.x, p.y, roof});
    size_t n = fp.polygon.size();
    for (size_t i = 0; i < n; ++i) {
        Vec2 a = fp.polygon[i];
        Vec2 c = fp.polygon[(i + 1) % n];
        Vec2 e = c - a;
        FacadeQuad q;
        q.outward = Vec2{e.y, -e.x}.normalized();  // right of the edge; outward for CCW rings
        q.corners = {Vec3{a.x, a.y, base}, Vec3{c.x, c.y, base}, Vec3{c.x, c.y, roof},
                     Vec3{a.x, a.y, roof}};
        b.facades.push_back(q);
    }
    return b;
}

std::vector<Face> enumerate_faces(const Lod1Building& b) {
    std::vector<Face> faces;
    Face roof;
    roof.id = b.id + "/roof";
    roof.building_id = b.id;
    roof.kind = FaceKind::Roof;
    roof.loop = b.roof_face;
    roof.normal = {0, 0, 1};
    faces.push_back(std::move(roof));
    for (size_t i = 0; i < b.facades.size(); ++i) {
        const FacadeQuad& q = b.facades[i];
        Face f;
        f.id = b.id + "/wall" + std::to_string(i);
        f.building_id = b.id;
        f.kind = FaceKind::Facade;
        f.loop.assign(q.corners.begin(), q.corners.end());
        f.normal = {q.outward.x, q.outward.y, 0};
        f.outward2d = q.outward;
        faces.push_back(std::move(f));
    }
    return faces;
}

std::vector<Footprint> load_footprints(const std::filesystem::path& path) {
    json doc;
    try {
        doc = json::parse(read_text_file(path));
    } catch (const json::parse_error& e) {
        throw ParseError("footprint file " + path.string() + ": " + e.what());
    }
    if (doc.value("type", "") != "FeatureCollection")
        throw ParseError(path.string() + ": expected a GeoJSON FeatureCollection");

    std::vector<Footprint> fps;
    const json& features = doc.at("features");
    for (size_t i = 0; i < features.size(); ++i) {
        const json& f = features[i];
        std::string ctx = path.string() + " feature " + std::to_string(i);
        const json& geom = f.at("geometry");
        if (geom.value("type", "") != "Polygon")
            throw ParseError(ctx + ": only Polygon geometry is supported");
        const json& rings = geom.at("coordinates");
        if (rings.size() != 1)
            throw ValidationError(ctx + ": polygons with holes are not supported");

        Footprint fp;
        const json& props = f.at("properties");
        fp.id = props.at("id").get<std::string>();
        if (props.contains("floors") && !props["floors"].is_null()) {
            int fl = props["floors"].get<int>();
            if (fl < 1) throw ValidationError(ctx + ": floors must be >= 1");
            fp.floors = fl;
        }
        for (const json& c : rings[0])
            fp.polygon.push_back({c.at(0).get<double>(), c.at(1).get<double>()});
        // GeoJSON rings repeat the first vertex
        if (fp.polygon.size() >= 2) {
            Vec2 a = fp.polygon.front(), z = fp.polygon.back();
            if (std::abs(a.x - z.x) < 1e-12 && std::abs(a.y - z.y) < 1e-12) fp.polygon.pop_back();
        }
        if (fp.polygon.size() < 3) throw ValidationError(ctx + ": fewer than 3 vertices");
        if (!polygon_is_simple(fp.polygon))
            throw ValidationError(ctx + ": self-intersecting polygon");
        if (polygon_signed_area(fp.polygon) < 0)
            std::reverse(fp.polygon.begin(), fp.polygon.end());
        fps.push_back(std::move(fp));
    }
    return fps;
}

void save_footprints(const std::filesystem::path& path, const std::vector<Footprint>& fps) {
    json features = json::array();
    for (const Footprint& fp : fps) {
        json ring = json::array();
        for (const Vec2& p : fp.polygon) ring.push_back({p.x, p.y});
        ring.push_back({fp.polygon[0].x, fp.polygon[0].y});
        json props = {{"id", fp.id}};
        if (fp.floors) props["floors"] = *fp.floors;
        features.push_back({{"type", "Feature"},
                            {"properties", props},
                            {"geometry", {{"type", "Polygon"}, {"coordinates", {ring}}}}});
    }
    json doc = {{"type", "FeatureCollection"}, {"features", features}};
    write_text_file(path, doc.dump(2) + "\n");
}

void save_height_grid(const std::filesystem::path& pfm_path, const HeightGrid& g) {
    write_pfm(pfm_path, g.z);
    json sidecar = {{"origin", {g.origin_x, g.origin_y}}, {"cell_size", g.cell}};
    std::filesystem::path sp = pfm_path;
    sp += ".json";
    write_text_file(sp, sidecar.dump(2) + "\n");
}

HeightGrid load_height_grid(const std::filesystem::path& pfm_path) {
    HeightGrid g;
    g.z = read_pfm(pfm_path);
    std::filesystem::path sp = pfm_path;
    sp += ".json";
    json sidecar = json::parse(read_text_file(sp));
    g.origin_x = sidecar.at("origin")[0].get<double>();
    g.origin_y = sidecar.at("origin")[1].get<double>();
    g.cell = sidecar.at("cell_size").get<double>();
    return g;
}

}  // namespace bv
