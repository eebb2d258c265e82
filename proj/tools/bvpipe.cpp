// bvpipe: batch verification pipeline for existing building footprints
// against multi-view oblique imagery. Subcommands mirror the pipeline
// stages: synth | render | extrude | extract | train | classify | verify |
// report. Exit codes: 0 success, 1 validation, 2 missing input, 3 internal.

#include <CLI11.hpp>

#include <iostream>

#include "bv/errors.hpp"
#include "bv/pipeline.hpp"
#include "bv/synth.hpp"

namespace {

int run_guarded(const std::function<void()>& fn) {
    try {
        fn();
        return 0;
    } catch (const bv::MissingInput& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const bv::MissingArtifact& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const bv::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const bv::ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const bv::SpecError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"building footprint verification against oblique imagery"};
    app.require_subcommand(1);

    std::string config_path = "config.json";
    bool force = false;
    int jobs = 1;
    long seed_override = -1;
    std::string mode = "all";

    auto add_common = [&](CLI::App* cmd, bool with_jobs = true) {
        cmd->add_option("--config", config_path, "pipeline config JSON");
        cmd->add_flag("--force", force, "rebuild even when outputs are up to date");
        if (with_jobs) cmd->add_option("--jobs", jobs, "worker threads for per-view/face stages");
        cmd->add_option("--seed", seed_override, "override the config seed");
    };

    auto load_cfg = [&]() {
        bv::PipelineConfig cfg = bv::load_config(config_path);
        if (seed_override >= 0) {
            cfg.seed = uint64_t(seed_override);
            cfg.train.seed = cfg.seed;
        }
        return cfg;
    };

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic block-world dataset");
    std::string out_dir = "dataset";
    int grid_nx = 4, grid_ny = 3, image_size = 384, views_per_dir = 2, sample_size = 32;
    long synth_seed = 1;
    double tilt = 45.0, gsd = 0.1, distort_k1 = 0.0;
    std::vector<std::string> demolish;  // index:style
    synth->add_option("--out", out_dir, "output dataset directory")->required();
    synth->add_option("--nx", grid_nx, "building grid columns");
    synth->add_option("--ny", grid_ny, "building grid rows");
    synth->add_option("--demolish", demolish,
                      "demolished buildings as index:style (style: rubble|slab)");
    synth->add_option("--image-size", image_size, "rendered image side in pixels");
    synth->add_option("--sample-size", sample_size, "classifier sample side in pixels");
    synth->add_option("--views-per-dir", views_per_dir, "oblique views per direction");
    synth->add_option("--tilt", tilt, "oblique tilt angle from vertical, degrees");
    synth->add_option("--gsd", gsd, "rectified ground sample distance, m/px");
    synth->add_option("--distort-k1", distort_k1, "Brown k1 applied to synthetic photos");
    synth->add_option("--seed", synth_seed, "scene seed");
    synth->callback([&]() {
        std::exit(run_guarded([&]() {
            bv::SyntheticSceneSpec spec;
            spec.grid_nx = grid_nx;
            spec.grid_ny = grid_ny;
            spec.image_size = image_size;
            spec.views_per_dir = views_per_dir;
            spec.tilt_deg = tilt;
            spec.distort_k1 = distort_k1;
            spec.seed = uint64_t(synth_seed);
            for (const std::string& d : demolish) {
                size_t colon = d.find(':');
                int idx = std::stoi(d.substr(0, colon));
                std::string style = colon == std::string::npos ? "rubble" : d.substr(colon + 1);
                if (style != "rubble" && style != "slab")
                    throw bv::SpecError("unknown demolition style: " + style);
                spec.demolished.emplace_back(idx, style == "rubble"
                                                      ? bv::DemolitionStyle::Rubble
                                                      : bv::DemolitionStyle::Slab);
            }
            bv::SyntheticScene scene = bv::build_scene(spec);
            bv::write_scene(scene, out_dir, sample_size, gsd);
            std::cout << "dataset written to " << out_dir << " (" << scene.buildings.size()
                      << " buildings, " << scene.views.size() << " views)\n";
        }));
    });

    auto stage = [&](const char* name, const char* help, auto fn, bool with_jobs = true) {
        auto* cmd = app.add_subcommand(name, help);
        add_common(cmd, with_jobs);
        cmd->callback([&, fn]() { std::exit(run_guarded([&]() { fn(load_cfg()); })); });
        return cmd;
    };

    stage("render", "render per-view depth maps from the mesh",
          [&](const bv::PipelineConfig& cfg) { bv::stage_render(cfg, force, jobs); });
    stage("extrude", "DSM, ground filtering and LOD-1 extrusion",
          [&](const bv::PipelineConfig& cfg) { bv::stage_extrude(cfg, force); }, false);
    stage("extract", "project faces, occlusion-test and assemble patch samples",
          [&](const bv::PipelineConfig& cfg) { bv::stage_extract(cfg, force, jobs); });
    stage("train", "train the fused-pyramid classifier on labeled samples",
          [&](const bv::PipelineConfig& cfg) { bv::stage_train(cfg, force); }, false);
    stage("classify", "classify extracted samples with trained weights",
          [&](const bv::PipelineConfig& cfg) { bv::stage_classify(cfg, force); }, false);
    auto* verify_cmd =
        stage("verify", "candidate selection, multi-view voting and metrics",
              [&](const bv::PipelineConfig& cfg) { bv::stage_verify(cfg, force, mode); }, false);
    verify_cmd->add_option("--mode", mode, "restrict voting to nadir | oblique | 3d");
    stage("report", "summarize verification results as markdown",
          [&](const bv::PipelineConfig& cfg) { bv::stage_report(cfg); }, false);

    auto* all = app.add_subcommand("run", "run every stage in order");
    add_common(all);
    all->callback([&]() {
        std::exit(run_guarded([&]() {
            bv::PipelineConfig cfg = load_cfg();
            bv::stage_render(cfg, force, jobs);
            bv::stage_extrude(cfg, force);
            bv::stage_extract(cfg, force, jobs);
            bv::stage_train(cfg, force);
            bv::stage_classify(cfg, force);
            bv::stage_verify(cfg, force);
            bv::stage_report(cfg);
        }));
    });

    CLI11_PARSE(app, argc, argv);
    return 0;
}
