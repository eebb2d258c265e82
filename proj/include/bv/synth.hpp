#ifndef BV_SYNTH_HPP
#define BV_SYNTH_HPP

#include <filesystem>
#include <map>

#include "bv/camera.hpp"
#include "bv/lod1.hpp"
#include "bv/mesh.hpp"
#include "bv/net/train.hpp"

namespace bv {

// Procedural materials used by the synthetic world and its textures.
enum class Material : int { Ground = 0, Roof = 1, Wall = 2, Rubble = 3 };

enum class DemolitionStyle : int {
    None = 0,
    Rubble = 1,  // building replaced by low rubble; visible from every angle
    Slab = 2,    // flat 3 m platform whose top still looks like a roof from
                 // above; only the missing facades reveal the change
};

struct SceneBuilding {
    std::string id;
    Vec2 center;
    double size_x = 10, size_y = 10;
    double height = 12;
    int floors = 4;
    DemolitionStyle demolition = DemolitionStyle::None;
};

struct SyntheticSceneSpec {
    int grid_nx = 4, grid_ny = 3;
    double spacing = 26.0;
    double min_size = 9.0, max_size = 16.0;
    double min_height = 6.0, max_height = 24.0;
    std::vector<std::pair<int, DemolitionStyle>> demolished;  // building index -> style
    int n_nadir = 1;
    int n_oblique_dirs = 4;
    int views_per_dir = 2;
    double tilt_deg = 45.0;
    double altitude = 140.0;
    int image_size = 384;
    double fov_deg = 62.0;
    double near_clip = 1.0, far_clip = 1000.0;
    double distort_k1 = 0.0;
    uint64_t seed = 1;
};

struct SyntheticScene {
    SyntheticSceneSpec spec;
    std::vector<SceneBuilding> buildings;
    TriangleMesh mesh;  // materials hold Material ids
    std::vector<CameraView> views;
    std::vector<Footprint> footprints;
    std::map<std::string, bool> changed;  // ground-truth demolition labels
};

SyntheticScene build_scene(const SyntheticSceneSpec& spec);

// Procedural world-space texture, deterministic in (material, position, seed).
void material_color(Material m, const Vec3& p, uint64_t seed, float rgb[3]);

// Flat-shaded color photograph of the scene (z-buffer pass plus per-pixel
// world-space texturing). Applies the Brown model forward when the view has
// distortion coefficients, emulating a real (distorted) photograph.
RgbImage render_color_image(const SyntheticScene& scene, const CameraView& view);

// Writes mesh.obj, poses.json, footprints.geojson, labels.json,
// images/<view>.png and a ready-to-run pipeline config.json into dir.
void write_scene(const SyntheticScene& scene, const std::filesystem::path& dir,
                 int sample_size = 224, double gsd = 0.1);

// ---- procedural patch corpus (classifier-scale samples) ----

struct CorpusSpec {
    int per_class = 300;
    int size = 32;  // sample side; must be divisible by 32
    // When set, all classes draw color from the same noise process and only
    // the depth-channel geometry separates them (the depth-ablation corpus).
    bool matched_color = false;
    uint64_t seed = 9;
};

// Classes: 0 roof (tiled texture, flat depth), 1 facade (window texture,
// vertical depth ramp), 2 background (noise texture, rough random depth).
net::Dataset make_corpus(const CorpusSpec& spec);

// Drops the depth channel, giving the color-only ablation arm.
net::Dataset strip_depth_channel(const net::Dataset& d);

}  // namespace bv

#endif
