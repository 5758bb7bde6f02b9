#include "consplat/cli.hpp"

#include "consplat/error.hpp"
#include "consplat/io.hpp"
#include "consplat/mock_predictor.hpp"
#include "consplat/parallel.hpp"
#include "consplat/pipeline.hpp"
#include "consplat/remote.hpp"
#include "consplat/synth.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>

#ifndef CONSPLAT_VERSION
#define CONSPLAT_VERSION "0.0.0"
#endif

namespace consplat {

using nlohmann::json;

namespace {

struct Manifest {
    std::string command;
    std::vector<std::string> argv;
    json inputs = json::object();
    json seeds = json::object();
    std::string config_hash;
    std::vector<std::string> outputs;

    void input(const std::string &role, const fs::path &path) {
        std::ifstream in(path, std::ios::binary);
        std::stringstream ss;
        ss << in.rdbuf();
        inputs[role] = {{"path", path.string()}, {"fnv1a64", hex64(fnv1a64(ss.str()))}};
    }

    void write(const fs::path &dir) const {
        json doc = {{"tool", "consplat"},         {"version", CONSPLAT_VERSION}, {"command", command},
                    {"argv", argv},               {"inputs", inputs},           {"seeds", seeds},
                    {"config_hash", config_hash}, {"outputs", outputs}};
        save_json(doc, dir / "manifest.json");
    }
};

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.9g", v);
    return buf;
}

Vec3 parse_rgb(const std::string &text) {
    std::stringstream ss(text);
    std::string part;
    std::vector<double> v;
    while (std::getline(ss, part, ',')) {
        try {
            std::size_t used = 0;
            v.push_back(std::stod(part, &used));
            if (used != part.size()) throw std::invalid_argument(part);
        } catch (const std::exception &) {
            throw CLI::ValidationError("--background", "expected r,g,b numbers, got '" + text + "'");
        }
    }
    if (v.size() != 3) throw CLI::ValidationError("--background", "expected three comma-separated numbers");
    return Vec3(v[0], v[1], v[2]);
}

std::string metrics_table(const std::vector<IterationMetrics> &metrics) {
    std::string out = "iteration\tsource_inconsistency\tedit_inconsistency\tresidual_inconsistency\t"
                      "render_inconsistency\trender_change\tfinal_loss\n";
    for (const auto &m : metrics) {
        out += std::to_string(m.iteration) + "\t" + fmt(m.source_inconsistency) + "\t" + fmt(m.edit_inconsistency) +
               "\t" + fmt(m.residual_inconsistency) + "\t" + fmt(m.render_inconsistency) + "\t" +
               fmt(m.render_change) + "\t" + fmt(m.final_loss) + "\n";
    }
    return out;
}

void check_views(const std::vector<Image> &images, const CameraSet &cameras, const std::string &what) {
    if (images.size() != cameras.size()) {
        throw AlignmentError(what + ": " + std::to_string(images.size()) + " images for " +
                             std::to_string(cameras.size()) + " cameras");
    }
}

void print_warnings(const Warnings &w, std::ostream &err) {
    for (const auto &line : w) err << "warning: " << line << "\n";
}

} // namespace

int cli_dispatch(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
    CLI::App app{"View-consistent Gaussian-splat scene editing", "consplat"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "Worker thread cap (0 = hardware concurrency)")->check(CLI::NonNegativeNumber);
    app.set_version_flag("--version", CONSPLAT_VERSION);

    Manifest manifest;
    manifest.argv = args;

    // synth
    auto *synth = app.add_subcommand("synth", "Generate a seeded scene and camera ring");
    int synth_n = 40;
    std::string synth_layout = "two-blob";
    std::uint64_t synth_seed = 0;
    std::string synth_out;
    SynthOptions synth_opts;
    synth->add_option("--n", synth_n, "Gaussian count")->check(CLI::PositiveNumber);
    synth->add_option("--layout", synth_layout, "cube | ring | two-blob")
        ->check(CLI::IsMember({"cube", "ring", "two-blob"}));
    synth->add_option("--seed", synth_seed, "Generator seed");
    synth->add_option("--views", synth_opts.views, "Camera count")->check(CLI::PositiveNumber);
    synth->add_option("--width", synth_opts.width, "Image width")->check(CLI::PositiveNumber);
    synth->add_option("--height", synth_opts.height, "Image height")->check(CLI::PositiveNumber);
    synth->add_option("--out", synth_out, "Output directory")->required();

    // render
    auto *render = app.add_subcommand("render", "Render every camera of a scene");
    std::string scene_path, cameras_path, out_dir, background_text = "0,0,0", image_format = "pfm";
    render->add_option("--scene", scene_path, "Scene file (.json or .ply)")->required();
    render->add_option("--cameras", cameras_path, "Camera set file")->required();
    render->add_option("--out-dir", out_dir, "Output directory")->required();
    render->add_option("--background", background_text, "Background color r,g,b");
    render->add_option("--format", image_format, "pfm | ppm")->check(CLI::IsMember({"pfm", "ppm"}));

    // edit
    auto *edit = app.add_subcommand("edit", "Run the iterative multi-view editing loop");
    std::string config_path, predictor_kind = "mock", endpoint = "127.0.0.1:8765", edit_out;
    double timeout = 30.0;
    bool strict_alg1 = false, remote_lpips_flag = false;
    edit->add_option("--scene", scene_path, "Source scene")->required();
    edit->add_option("--cameras", cameras_path, "Camera set file")->required();
    edit->add_option("--config", config_path, "Run configuration (JSON)")->required();
    edit->add_option("--predictor", predictor_kind, "mock | remote")->check(CLI::IsMember({"mock", "remote"}));
    edit->add_option("--endpoint", endpoint, "Editor service address for --predictor remote");
    edit->add_option("--timeout", timeout, "Remote request timeout in seconds")->check(CLI::PositiveNumber);
    edit->add_flag("--strict-alg1", strict_alg1, "Denoise from the clean source latent (literal variant)");
    edit->add_flag("--remote-lpips", remote_lpips_flag, "Use the service's perceptual loss in fine-tuning");
    edit->add_option("--out", edit_out, "Output directory")->required();

    // calibrate
    auto *calibrate = app.add_subcommand("calibrate", "Fit a copy of the scene to images and re-render");
    std::string images_dir;
    calibrate->add_option("--scene", scene_path, "Source scene")->required();
    calibrate->add_option("--cameras", cameras_path, "Camera set file")->required();
    calibrate->add_option("--images-dir", images_dir, "Directory of per-view images")->required();
    calibrate->add_option("--config", config_path, "Run configuration; its ecm section is used")->required();
    calibrate->add_option("--out-dir", out_dir, "Output directory")->required();

    // consolidate
    auto *consolidate_cmd = app.add_subcommand("consolidate", "Consolidate per-view maps through the scene");
    std::string maps_dir, mode = "weight";
    consolidate_cmd->add_option("--scene", scene_path, "Scene")->required();
    consolidate_cmd->add_option("--cameras", cameras_path, "Camera set file")->required();
    consolidate_cmd->add_option("--maps-dir", maps_dir, "Directory of .fmap (or image) maps")->required();
    consolidate_cmd->add_option("--mode", mode, "count | weight")->check(CLI::IsMember({"count", "weight"}));
    consolidate_cmd->add_option("--out-dir", out_dir, "Output directory")->required();

    // metrics
    auto *metrics_cmd = app.add_subcommand("metrics", "Cross-view variance of per-view images");
    std::string metrics_out;
    metrics_cmd->add_option("--scene", scene_path, "Scene")->required();
    metrics_cmd->add_option("--cameras", cameras_path, "Camera set file")->required();
    metrics_cmd->add_option("--images-dir", images_dir, "Directory of per-view images or maps")->required();
    metrics_cmd->add_option("--out", metrics_out, "Also write the report to this file");

    // info
    auto *info = app.add_subcommand("info", "Summarize a scene file");
    info->add_option("--scene", scene_path, "Scene")->required();

    std::vector<std::string> reversed(args.rbegin(), args.rend() - (args.empty() ? 0 : 1));
    try {
        app.parse(reversed);
    } catch (const CLI::CallForHelp &) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::CallForAllHelp &) {
        out << app.help("", CLI::AppFormatMode::All);
        return kExitOk;
    } catch (const CLI::CallForVersion &) {
        out << CONSPLAT_VERSION << "\n";
        return kExitOk;
    } catch (const CLI::ParseError &e) {
        err << "error: " << e.what() << "\n\n";
        const auto subs = app.get_subcommands();
        err << (subs.empty() ? app.help() : subs.front()->help());
        return kExitUsage;
    }

    try {
        set_thread_count(threads);

        if (*synth) {
            const SynthScene scene = synth_scene(synth_n, parse_layout(synth_layout), synth_seed, synth_opts);
            const fs::path dir = synth_out;
            save_scene(scene.cloud, dir / "scene.json");
            save_scene(scene.cloud, dir / "scene.ply");
            save_cameras(scene.cameras, dir / "cameras.json");
            manifest.command = "synth";
            manifest.seeds["synth"] = synth_seed;
            manifest.outputs = {"scene.json", "scene.ply", "cameras.json"};
            manifest.write(dir);
            out << "wrote " << scene.cloud.size() << " Gaussians and " << scene.cameras.size() << " cameras to "
                << dir.string() << "\n";
            return kExitOk;
        }

        if (*render) {
            Warnings w;
            const GaussianCloud cloud = load_scene(scene_path, &w);
            print_warnings(w, err);
            const CameraSet cameras = load_cameras(cameras_path);
            const Vec3 bg = parse_rgb(background_text);
            const auto images = render_views(cloud, cameras, bg);
            const auto paths = save_views(images, out_dir, "." + image_format);
            manifest.command = "render";
            manifest.input("scene", scene_path);
            manifest.input("cameras", cameras_path);
            for (const auto &p : paths) manifest.outputs.push_back(p.filename().string());
            manifest.write(out_dir);
            out << "rendered " << images.size() << " views to " << out_dir << "\n";
            return kExitOk;
        }

        if (*edit) {
            Warnings w;
            const GaussianCloud cloud = load_scene(scene_path, &w);
            print_warnings(w, err);
            const CameraSet cameras = load_cameras(cameras_path);
            RunConfig rc = load_run_config(config_path);
            if (strict_alg1) rc.edit.strict_alg1 = true;

            std::unique_ptr<NoisePredictor> predictor;
            std::unique_ptr<LatentCodec> codec = std::make_unique<IdentityCodec>();
            if (predictor_kind == "mock") {
                predictor = mock_predictor(mock_spec(rc.mock, cloud, cameras, rc.edit));
            } else {
                auto client = std::make_shared<RemoteClient>(Endpoint::parse(endpoint), timeout);
                auto remote = std::make_unique<RemotePredictor>(client);
                if (remote->health().codec != "identity") codec = std::make_unique<RemoteCodec>(client);
                if (remote_lpips_flag) {
                    rc.edit.ecm.perceptual = remote_lpips(client);
                    rc.edit.final_stage.perceptual = remote_lpips(client);
                }
                predictor = std::move(remote);
            }

            const fs::path dir = edit_out;
            fs::create_directories(dir);
            const json config_doc = run_config_to_json(rc);
            save_json(config_doc, dir / "config.json");
            manifest.command = "edit";
            manifest.input("scene", scene_path);
            manifest.input("cameras", cameras_path);
            manifest.input("config", config_path);
            manifest.config_hash = hex64(fnv1a64(config_doc.dump()));
            manifest.seeds["edit"] = rc.edit.seed;
            manifest.seeds["mock"] = rc.mock.seed;
            manifest.outputs.push_back("config.json");

            const RunResult result = run(cloud, cameras, *predictor, *codec, rc.edit,
                                         [&](const IterationMetrics &m, const IterationResult &it) {
                                             const fs::path idir = dir / ("iter_" + std::to_string(m.iteration));
                                             save_views(it.renders, idir / "renders");
                                             save_views(it.guidance, idir / "guidance");
                                             std::ofstream loss(idir / "loss.jsonl", std::ios::binary);
                                             write_loss_report(loss, it.report);
                                             manifest.outputs.push_back(idir.filename().string());
                                             err << "iteration " << m.iteration << " done\n";
                                         });
            save_scene(result.cloud, dir / "scene.json");
            save_scene(result.cloud, dir / "scene.ply");
            const std::string table = metrics_table(result.metrics);
            save_text(table, dir / "metrics.tsv");
            manifest.outputs.insert(manifest.outputs.end(), {"scene.json", "scene.ply", "metrics.tsv"});
            manifest.write(dir);
            out << table;
            return kExitOk;
        }

        if (*calibrate) {
            const GaussianCloud cloud = load_scene(scene_path);
            const CameraSet cameras = load_cameras(cameras_path);
            const RunConfig rc = load_run_config(config_path);
            const std::vector<Image> images = load_views(images_dir);
            check_views(images, cameras, "calibrate");
            FinetuneConfig ecm = rc.edit.ecm;
            ecm.background = rc.edit.background;
            ecm.render = rc.edit.render;
            LossReport report;
            const auto calibrated = calibrate_views(cloud, cameras, images, ecm, &report);
            const auto paths = save_views(calibrated, out_dir);
            {
                std::ofstream loss(fs::path(out_dir) / "loss.jsonl", std::ios::binary);
                write_loss_report(loss, report);
            }
            const double before = view_inconsistency(cloud, cameras, images, rc.edit.render);
            const double after = view_inconsistency(cloud, cameras, calibrated, rc.edit.render);
            const std::string text = "input_inconsistency\t" + fmt(before) + "\noutput_inconsistency\t" + fmt(after) + "\n";
            save_text(text, fs::path(out_dir) / "metrics.tsv");
            manifest.command = "calibrate";
            manifest.input("scene", scene_path);
            manifest.input("cameras", cameras_path);
            manifest.input("config", config_path);
            manifest.config_hash = hex64(fnv1a64(finetune_config_to_json(rc.edit.ecm).dump()));
            for (const auto &p : paths) manifest.outputs.push_back(p.filename().string());
            manifest.outputs.insert(manifest.outputs.end(), {"loss.jsonl", "metrics.tsv"});
            manifest.write(out_dir);
            out << text;
            return kExitOk;
        }

        if (*consolidate_cmd) {
            const GaussianCloud cloud = load_scene(scene_path);
            const CameraSet cameras = load_cameras(cameras_path);
            const ViewMaps maps = load_view_maps(maps_dir);
            const Normalization norm = mode == "count" ? Normalization::Count : Normalization::Weight;
            const ViewMaps result = consolidate(cloud, cameras, maps, norm);
            save_view_maps(result, out_dir);
            const double before = cross_view_variance(cloud, cameras, maps).mean;
            const double after = cross_view_variance(cloud, cameras, result).mean;
            const std::string text = "input_variance\t" + fmt(before) + "\noutput_variance\t" + fmt(after) + "\n";
            save_text(text, fs::path(out_dir) / "metrics.tsv");
            manifest.command = "consolidate";
            manifest.input("scene", scene_path);
            manifest.input("cameras", cameras_path);
            manifest.config_hash = hex64(fnv1a64(mode));
            for (std::size_t v = 0; v < result.size(); ++v) {
                char name[32];
                std::snprintf(name, sizeof name, "view_%03zu.fmap", v);
                manifest.outputs.push_back(name);
            }
            manifest.outputs.push_back("metrics.tsv");
            manifest.write(out_dir);
            out << text;
            return kExitOk;
        }

        if (*metrics_cmd) {
            const GaussianCloud cloud = load_scene(scene_path);
            const CameraSet cameras = load_cameras(cameras_path);
            const ViewMaps maps = load_view_maps(images_dir);
            const VarianceReport report = cross_view_variance(cloud, cameras, maps);
            std::string text = "mean_variance\t" + fmt(report.mean) + "\nincluded\t" + std::to_string(report.included) +
                               "\ngaussians\t" + std::to_string(cloud.size()) + "\n\ngaussian\tviews\tvariance\n";
            for (std::size_t j = 0; j < report.per_gaussian.size(); ++j) {
                text += std::to_string(j) + "\t" + std::to_string(report.views_observed[j]) + "\t" +
                        (std::isnan(report.per_gaussian[j]) ? std::string("nan") : fmt(report.per_gaussian[j])) + "\n";
            }
            if (!metrics_out.empty()) save_text(text, metrics_out);
            out << text;
            return kExitOk;
        }

        if (*info) {
            Warnings w;
            const GaussianCloud cloud = load_scene(scene_path, &w);
            print_warnings(w, err);
            out << "gaussians\t" << cloud.size() << "\n";
            if (!cloud.empty()) {
                Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
                double omin = 1.0, omax = 0.0;
                for (const auto &g : cloud.gaussians()) {
                    lo = lo.cwiseMin(g.mean());
                    hi = hi.cwiseMax(g.mean());
                    omin = std::min(omin, g.opacity());
                    omax = std::max(omax, g.opacity());
                }
                out << "bbox_min\t" << fmt(lo[0]) << "," << fmt(lo[1]) << "," << fmt(lo[2]) << "\n";
                out << "bbox_max\t" << fmt(hi[0]) << "," << fmt(hi[1]) << "," << fmt(hi[2]) << "\n";
                out << "opacity_range\t" << fmt(omin) << "," << fmt(omax) << "\n";
            }
            for (const auto &a : cloud.attachments()) {
                out << "attachment\t" << a.name << "\t" << a.channel_count() << " channels\n";
            }
            return kExitOk;
        }
    } catch (const RemoteError &e) {
        err << "remote error: " << e.what() << "\n";
        return kExitRemote;
    } catch (const CLI::ValidationError &e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const Error &e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const fs::filesystem_error &e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    } catch (const json::exception &e) {
        err << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}

int cli_dispatch(int argc, char **argv) {
    std::vector<std::string> args(argv, argv + argc);
    return cli_dispatch(args, std::cout, std::cerr);
}

} // namespace consplat
