#ifndef BV_PIPELINE_HPP
#define BV_PIPELINE_HPP

#include <filesystem>

#include "bv/lod1.hpp"
#include "bv/net/train.hpp"
#include "bv/voting.hpp"

namespace bv {

// Batch pipeline configuration (JSON file; relative paths resolve against the
// config file's directory).
struct PipelineConfig {
    std::filesystem::path root;
    std::filesystem::path pose_file;
    std::vector<std::filesystem::path> mesh_files;
    std::filesystem::path footprint_file;
    std::filesystem::path labels_file;  // optional ground-truth change labels
    std::filesystem::path image_dir;
    double occlusion_threshold_m = 2.0;
    GroundFilterParams ground_filter;
    double gsd = 0.1;       // meters per rectified pixel
    double dsm_cell = 0.5;  // meters per DSM cell
    int sample_size = 224;
    double near_clip = 1.0, far_clip = 5000.0;
    int background_faces = 0;  // virtual ground/air faces emitted as background samples
    double train_min_visible_fraction = 0.5;  // training-sample curation threshold
    int net_base_width = 64;
    int net_bottleneck = 256;
    net::TrainConfig train;
    std::filesystem::path output_dir;
    std::filesystem::path weights_file;  // optional override for classify
    uint64_t seed = 42;
};

PipelineConfig load_config(const std::filesystem::path& path);

// Stage entry points. Each is content-addressed: with unchanged inputs and
// force=false the stage is skipped, otherwise outputs are rewritten
// deterministically (temp file + rename). All throw on error; the CLI maps
// exception types to exit codes.
void stage_render(const PipelineConfig& cfg, bool force = false, int jobs = 1);
void stage_extrude(const PipelineConfig& cfg, bool force = false);
void stage_extract(const PipelineConfig& cfg, bool force = false, int jobs = 1);
void stage_train(const PipelineConfig& cfg, bool force = false);
void stage_classify(const PipelineConfig& cfg, bool force = false);
// mode_filter: "all" or one of "nadir" | "oblique" | "3d"
void stage_verify(const PipelineConfig& cfg, bool force = false,
                  const std::string& mode_filter = "all");
void stage_report(const PipelineConfig& cfg);

// One manifest row per (face, view) projection attempt.
struct SampleRecord {
    std::string key;  // file-safe unique id
    std::string building_id, face_id, view_id;
    FaceKind kind = FaceKind::Roof;
    Vec2 outward;
    double projected_area_px2 = 0;
    double visible_area_px2 = 0;
    bool usable = false;
    BBox bbox;         // valid when usable
    int label = -1;    // 0 roof / 1 facade / 2 background; -1 without ground truth
};

std::vector<SampleRecord> load_samples_manifest(const std::filesystem::path& path);

// Loads the persisted PNG+PFM pair of one sample as a (4, S, S) tensor.
net::Tensor load_sample_tensor(const std::filesystem::path& samples_dir, const std::string& key);

struct ModeSummary {
    std::string mode;
    ConfusionCounts counts;
    bool metrics_defined = false;
    Metrics metrics;
    long insufficient = 0;
    std::map<std::string, Decision> decisions;
};

// Parsed back from summary.json for tests and the report stage.
std::vector<ModeSummary> load_summary(const std::filesystem::path& path);

}  // namespace bv

#endif
