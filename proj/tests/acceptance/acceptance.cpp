// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include "consplat/calibrator.hpp"
#include "consplat/cli.hpp"
#include "consplat/consolidation.hpp"
#include "consplat/io.hpp"
#include "consplat/latent.hpp"
#include "consplat/mock_predictor.hpp"
#include "consplat/pipeline.hpp"
#include "consplat/synth.hpp"

#include "fixtures.hpp"
#include "oracles.hpp"

#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

using namespace consplat;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char *format, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char *format, ...) {
    char buf[512];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buf, sizeof buf, format, args);
    va_end(args);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Outcome gradient_correctness() {
    const auto t0 = std::chrono::steady_clock::now();
    RenderConfig cfg;
    // Footprint cutoff and early termination are piecewise constant in the parameters;
    // pushing both out of reach makes the rendered image smooth for the check.
    cfg.cutoff_sigma = 8.0;
    cfg.early_termination = false;
    SynthOptions opts;
    opts.views = 3;
    opts.width = opts.height = 32;
    const Vec3 bg(0.2, 0.3, 0.4);
    const double h = 1e-6;
    std::size_t checks = 0, failures = 0;
    double worst_rel = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const SynthScene s = synth_scene(20, seed % 2 ? Layout::Cube : Layout::Ring, seed, opts);
        for (std::size_t v = 0; v < s.cameras.size(); ++v) {
            const Image up = gaussian_noise_image(seed, 100 + v, 32, 32, 3);
            const CloudGradients g = grad_render(s.cloud, s.cameras[v], up, bg, cfg);
            for (ParamGroup group : kAllParamGroups) {
                const int width = group_width(group);
                const auto &analytic = g.group(group);
                for (std::size_t j = 0; j < s.cloud.size(); ++j) {
                    for (int k = 0; k < width; ++k) {
                        const double a = analytic[j * width + k];
                        const double n = oracle::finite_difference(s.cloud, s.cameras[v], up, bg, cfg, group, j, k, h);
                        const double err = std::abs(a - n);
                        const double scale = std::max(std::abs(a), std::abs(n));
                        ++checks;
                        if (err > 1e-7 && err > 1e-4 * scale) ++failures;
                        if (err > 1e-7) worst_rel = std::max(worst_rel, err / scale);
                    }
                }
            }
        }
    }
    const double t = seconds_since(t0);
    return {failures == 0 && t < 120.0,
            fmt("%zu gradient entries on 5 scenes, %zu outside 1e-4 rel / 1e-7 abs, worst rel %.2e among "
                "entries above the abs floor; %.1f s (limit 120 s)",
                checks, failures, worst_rel, t)};
}

Outcome compositing_oracle() {
    RenderConfig cfg;
    cfg.early_termination = false;
    std::size_t views = 0, mismatched = 0;
    double worst = 0.0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        const Layout layout = seed % 3 == 0 ? Layout::TwoBlob : (seed % 3 == 1 ? Layout::Cube : Layout::Ring);
        const SynthScene s = synth_scene(30 + 5 * static_cast<int>(seed), layout, seed);
        const Vec3 bg(0.1 * (seed % 4), 0.5, 0.9);
        for (const auto &cam : s.cameras) {
            const Image fast = render_color(s.cloud, cam, bg, cfg).color;
            const Image slow = oracle::brute_force_render(s.cloud, cam, bg, cfg);
            ++views;
            if (!(fast == slow)) {
                ++mismatched;
                worst = std::max(worst, max_abs_difference(fast, slow));
            }
        }
    }
    return {mismatched == 0, fmt("%zu views (10 scenes, 64x64, 8 views), %zu not bit-identical, worst diff %.3g",
                                 views, mismatched, worst)};
}

Outcome ccm_round_trip() {
    SynthScene s = synth_scene(40, Layout::TwoBlob, 5);
    GaussianCloud cloud = s.cloud;
    cloud.remove_attachment("edit_region");
    fixture::add_backdrop(cloud);
    const std::vector<double> constant = {0.7, 0.2};
    ScalarAttachment att = make_attachment("const", {"a", "b"}, cloud.size());
    for (std::size_t j = 0; j < cloud.size(); ++j)
        for (int k = 0; k < 2; ++k) att.at(j, k) = constant[k];
    ViewMaps maps;
    maps.labels = {"a", "b"};
    for (const auto &cam : s.cameras) maps.maps.push_back(render_scalar(cloud, att, cam));

    const Map3D m3 = inverse_render(cloud, s.cameras, maps, Normalization::Weight);
    double recover = 0.0;
    std::size_t observed = 0;
    for (std::size_t j = 0; j < cloud.size(); ++j) {
        if (!m3.observed(j)) continue;
        ++observed;
        for (int k = 0; k < 2; ++k) recover = std::max(recover, std::abs(m3.values.at(j, k) - constant[k]));
    }

    const ViewMaps again = consolidate(cloud, s.cameras, maps, Normalization::Weight);
    double fixed = 0.0;
    for (std::size_t v = 0; v < maps.size(); ++v) fixed = std::max(fixed, max_abs_difference(again.maps[v], maps.maps[v]));

    ViewMaps noisy = maps;
    for (std::size_t v = 0; v < noisy.size(); ++v) {
        const auto n = gaussian_samples(9, v, noisy.maps[v].size());
        for (std::size_t i = 0; i < n.size(); ++i) noisy.maps[v].storage()[i] += 0.1 * n[i];
    }
    const ViewMaps cleaned = consolidate(cloud, s.cameras, noisy, Normalization::Weight);
    const double before = cross_view_variance(cloud, s.cameras, noisy).mean;
    const double after = cross_view_variance(cloud, s.cameras, cleaned).mean;
    const double drop = before / after;
    const bool pass = observed > 0 && recover <= 1e-6 && fixed <= 1e-4 && drop >= 4.0;
    return {pass, fmt("constant recovered within %.2e on %zu observed Gaussians (tol 1e-6); fixed point %.2e/pixel "
                      "(tol 1e-4); noise variance %.3g -> %.3g, drop x%.1f (need >= 4)",
                      recover, observed, fixed, before, after, drop)};
}

Outcome latent_fixed_point() {
    const SynthScene s = synth_scene(40, Layout::TwoBlob, 2);
    EditConfig cfg = fixture::edit_config_for(4);
    cfg.ecm_enabled = false;
    IdentityPredictor predictor;
    IdentityCodec codec;
    const auto source = render_views(s.cloud, s.cameras, cfg.background, cfg.render);
    double worst = 0.0;
    const EditViewsResult r = edit_views(s.cloud, s.cameras, predictor, codec, cfg);
    for (std::size_t v = 0; v < source.size(); ++v) worst = std::max(worst, max_abs_difference(r.images[v], source[v]));
    // Noise offset inverts add_noise at every timestep of the schedule.
    double offset = 0.0;
    const TimestepSchedule sched = cfg.schedule();
    for (std::size_t i = 0; i < sched.size(); ++i) {
        const Image eps = gaussian_noise_image(17, i, 64, 64, 3);
        const Image noisy = add_noise(source[0], sched[i].alpha_bar, eps);
        offset = std::max(offset, max_abs_difference(noise_offset(noisy, source[0], sched[i].alpha_bar), eps));
    }
    return {worst <= 1e-6 && offset <= 1e-12,
            fmt("identity editor over N=%zu steps returns the source within %.2e (tol 1e-6); "
                "noise offset recovers the sampled noise within %.2e (tol 1e-12, round-off)",
                sched.size(), worst, offset)};
}

Outcome ecm_calibration() {
    const EditConfig base = fixture::edit_config_for();
    FinetuneConfig ecm = base.ecm;
    ecm.background = fixture::kGrey;
    std::string detail;
    bool pass = true;
    double slowest = 0.0;
    for (std::uint64_t seed : {1, 2, 3}) {
        const SynthScene s = synth_scene(40, Layout::TwoBlob, seed);
        const auto clean = render_views(s.cloud, s.cameras, fixture::kGrey);
        const auto corrupted = fixture::corrupt_with_patches(clean, 500 + seed, 0.3, 0.10, 8);
        const auto t0 = std::chrono::steady_clock::now();
        const auto calibrated = calibrate_views(s.cloud, s.cameras, corrupted, ecm);
        const double t = seconds_since(t0);
        slowest = std::max(slowest, t);
        const double in = view_inconsistency(s.cloud, s.cameras, corrupted);
        const double out = view_inconsistency(s.cloud, s.cameras, calibrated);
        const double floor = view_inconsistency(s.cloud, s.cameras, clean);
        pass = pass && out <= 0.5 * in && t < 180.0;
        detail += fmt("seed %llu: %.5f -> %.5f (ratio %.2f, clean %.5f); ", static_cast<unsigned long long>(seed), in,
                      out, out / in, floor);
    }
    detail += fmt("need ratio <= 0.5; slowest pass %.1f s (limit 180 s)", slowest);
    return {pass, detail};
}

Outcome ablation() {
    const fixture::EditFixture f = fixture::two_blob_edit();
    std::string detail;
    bool pass = true;
    for (std::uint64_t mock_seed : {11, 12, 13}) {
        MockPredictor predictor(fixture::mock_for(f, 0.2, 0.1, mock_seed));
        IdentityCodec codec;
        double inc[4];
        for (int variant = 0; variant < 4; ++variant) {
            EditConfig cfg = fixture::edit_config_for();
            cfg.ccm_enabled = variant & 1;
            cfg.ecm_enabled = variant & 2;
            const EditViewsResult r = edit_views(f.source, f.cameras, predictor, codec, cfg);
            inc[variant] = view_inconsistency(f.source, f.cameras, r.images, cfg.render);
        }
        const double off = inc[0], ccm = inc[1], both = inc[3];
        const bool ok = both <= 0.5 * off && ccm < off && ccm > both;
        pass = pass && ok;
        detail += fmt("mock seed %llu: off %.5f, ccm %.5f, ecm %.5f, both %.5f (both/off %.2f); ",
                      static_cast<unsigned long long>(mock_seed), off, ccm, inc[2], both, both / off);
    }
    detail += "need both/off <= 0.5 and both < ccm < off";
    return {pass, detail};
}

Outcome convergence() {
    const fixture::EditFixture f = fixture::two_blob_edit();
    MockPredictor predictor(fixture::mock_for(f, 0.0, 0.1, 11));
    IdentityCodec codec;
    EditConfig cfg = fixture::edit_config_for();
    cfg.iterations = 3;
    const auto target = render_views(f.target, f.cameras, fixture::kGrey);
    const auto source = render_views(f.source, f.cameras, fixture::kGrey);
    const auto masks = fixture::region_masks(f.target, f.cameras);
    std::vector<fixture::RegionError> errors;
    run(f.source, f.cameras, predictor, codec, cfg, [&](const IterationMetrics &, const IterationResult &it) {
        errors.push_back(fixture::region_error(it.renders, target, source, masks));
    });
    double worst_non_target = 0.0;
    std::string detail;
    for (std::size_t i = 0; i < errors.size(); ++i) {
        worst_non_target = std::max(worst_non_target, errors[i].non_target);
        detail += fmt("iter %zu: target %.4f, non-target %.4f; ", i + 1, errors[i].target, errors[i].non_target);
    }
    const bool pass = errors.size() == 3 && errors.back().target <= 0.05 && worst_non_target <= 0.02 &&
                      errors[1].target <= errors[0].target;
    detail += "need final target <= 0.05, non-target <= 0.02, iter 2 <= iter 1 (bias 0, attention noise 0.1)";
    return {pass, detail};
}

double mean_displacement(const GaussianCloud &a, const GaussianCloud &b) {
    double d = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) d += (a[j].mean() - b[j].mean()).norm();
    return d / static_cast<double>(a.size());
}

double max_displacement(const GaussianCloud &a, const GaussianCloud &b) {
    double d = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) d = std::max(d, (a[j].mean() - b[j].mean()).cwiseAbs().maxCoeff());
    return d;
}

Outcome anchor_regularization() {
    const SynthScene s = synth_scene(40, Layout::TwoBlob, 6);
    // Targets from a shifted copy pull every position away from its anchor.
    GaussianCloud shifted = clone_cloud(s.cloud);
    for (auto &g : shifted.gaussians()) g.set_mean(g.mean() + Vec3(0.15, -0.05, 0.1));
    const auto targets = render_views(shifted, s.cameras, fixture::kGrey);
    FinetuneConfig cfg;
    cfg.lambda_mae = 10.0;
    cfg.background = fixture::kGrey;
    auto moved = [&](double lambda_anchor, bool max_norm) {
        FinetuneConfig c = cfg;
        c.lambda_anchor = lambda_anchor;
        const FinetuneResult r = finetune(s.cloud, s.cameras, targets, c);
        return max_norm ? max_displacement(r.cloud, s.cloud) : mean_displacement(r.cloud, s.cloud);
    };
    const double free_move = moved(0.0, false);
    const double anchored = moved(50.0, false);
    const double pinned = moved(1e6, true);
    return {anchored < free_move && pinned <= 1e-4,
            fmt("mean displacement %.5f with lambda_anchor 0, %.5f with 50; max coordinate drift %.2e with 1e6 "
                "(tol 1e-4)",
                free_move, anchored, pinned)};
}

int cli(const std::vector<std::string> &args) {
    std::vector<std::string> argv = {"consplat"};
    argv.insert(argv.end(), args.begin(), args.end());
    std::ostringstream out, err;
    const int code = cli_dispatch(argv, out, err);
    if (code != 0) std::fprintf(stderr, "%s", err.str().c_str());
    return code;
}

Outcome determinism() {
    fixture::TempDir dir("determinism");
    const auto root = dir.path();
    RunConfig rc;
    rc.edit = fixture::edit_config_for(5);
    rc.edit.final_stage.steps = 60;
    rc.mock.bias_amplitude = 0.2;
    rc.mock.attention_noise = 0.1;
    rc.mock.attention_downsample = 8;
    rc.mock.seed = 21;
    save_json(run_config_to_json(rc), root / "config.json");
    if (cli({"synth", "--n", "40", "--layout", "two-blob", "--seed", "9", "--out", (root / "scene").string()}) != 0)
        return {false, "synth failed"};
    for (const char *run_dir : {"a", "b"}) {
        if (cli({"edit", "--scene", (root / "scene/scene.json").string(), "--cameras",
                 (root / "scene/cameras.json").string(), "--config", (root / "config.json").string(), "--predictor",
                 "mock", "--out", (root / run_dir).string()}) != 0)
            return {false, "edit failed"};
    }
    std::size_t compared = 0, differing = 0;
    std::string first_diff;
    for (const auto &entry : std::filesystem::recursive_directory_iterator(root / "a")) {
        if (!entry.is_regular_file() || entry.path().filename() == "manifest.json") continue;
        const auto rel = std::filesystem::relative(entry.path(), root / "a");
        ++compared;
        if (fixture::read_file(entry.path()) != fixture::read_file(root / "b" / rel) && differing++ == 0)
            first_diff = " (first: " + rel.string() + ")";
    }
    return {compared > 0 && differing == 0,
            fmt("two mock edit runs with one seed: %zu output files compared (scenes, renders, guidance, losses, "
                "metrics), %zu differ%s",
                compared, differing, first_diff.c_str())};
}

Outcome format_round_trips() {
    SynthScene s = synth_scene(30, Layout::TwoBlob, 8);
    s.cloud.set_attachment(make_attachment("extra", {"x", "y"}, s.cloud.size(), 0.25));
    const GaussianCloud native = scene_from_json(nlohmann::json::parse(scene_to_json(s.cloud).dump()));
    const bool native_ok = native.same_content(s.cloud);

    std::ostringstream first;
    write_ply(first, s.cloud);
    std::istringstream in(first.str());
    const GaussianCloud loaded = read_ply(in);
    std::ostringstream second;
    write_ply(second, loaded);
    const bool ply_ok = first.str() == second.str();

    // Degree-0 SH constant 1 / (2 sqrt(pi)).
    const double expected = 0.5 / std::sqrt(std::acos(-1.0));
    double sh0 = std::abs(kSH0 - expected);
    for (double f : {-1.5, -0.3, 0.0, 0.4, 1.2}) sh0 = std::max(sh0, std::abs(sh0_to_color(f) - (0.5 + expected * f)));
    return {native_ok && ply_ok && sh0 < 5e-13,
            fmt("native scene field-identical: %s; point-file rewrite byte-identical: %s (%zu bytes); SH0 "
                "conversion off by %.1e (need 12 decimals)",
                native_ok ? "yes" : "no", ply_ok ? "yes" : "no", first.str().size(), sh0)};
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"gradient-correctness", gradient_correctness},
        {"compositing-oracle", compositing_oracle},
        {"ccm-round-trip", ccm_round_trip},
        {"latent-fixed-point", latent_fixed_point},
        {"ecm-calibration", ecm_calibration},
        {"pipeline-ablation", ablation},
        {"iterative-convergence", convergence},
        {"anchor-regularization", anchor_regularization},
        {"determinism", determinism},
        {"format-round-trips", format_round_trips},
    };
    int failed = 0;
    for (const auto &[name, check] : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = check();
        } catch (const std::exception &e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        if (!o.pass) ++failed;
        std::printf("%s %s: %s [%.1f s]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), seconds_since(t0));
        std::fflush(stdout);
    }
    std::printf("%zu criteria, %d failed\n", criteria.size(), failed);
    return failed == 0 ? 0 : 1;
}
