#include "consplat/pipeline.hpp"

#include "consplat/error.hpp"
#include "consplat/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace consplat {

EditConfig::EditConfig() {
    // 50 Adam steps at 0.001 move a color by at most 0.05, so unscaled calibration would
    // pull every edit back to the source.
    ecm.lr_scale[static_cast<int>(ParamGroup::Color)] = 20.0;
    final_stage.steps = 400;
}

void EditConfig::validate() const {
    if (schedule_steps < 2 || schedule_steps > total_steps) {
        throw InvalidArgument("schedule_steps must lie in [2, total_steps]");
    }
    if (ecm_period < 1) throw InvalidArgument("ecm_period must be >= 1");
    if (iterations < 1) throw InvalidArgument("iterations must be >= 1");
    if (token_index < 0) throw InvalidArgument("token_index must be non-negative");
    if (!(blend_threshold >= 0.0 && blend_threshold <= 1.0)) {
        throw InvalidArgument("blend_threshold must lie in [0, 1]");
    }
    ecm.validate();
    final_stage.validate();
}

TimestepSchedule EditConfig::schedule() const {
    return make_schedule(total_steps, schedule_steps, beta_start, beta_end);
}

namespace {

// The pipeline's own background and render settings win over the stage configs.
FinetuneConfig stage_config(const FinetuneConfig &stage, const EditConfig &config) {
    FinetuneConfig out = stage;
    out.background = config.background;
    out.render = config.render;
    return out;
}

std::vector<Image> stack_noise(std::uint64_t seed, const std::vector<Image> &like) {
    std::vector<Image> out(like.size());
    for (std::size_t v = 0; v < like.size(); ++v) {
        out[v] = gaussian_noise_image(seed, v, like[v].width(), like[v].height(), like[v].channels());
    }
    return out;
}

template <class F>
auto guarded(const std::string &stage, int t, F &&body) -> decltype(body()) {
    try {
        return body();
    } catch (const PipelineError &) {
        throw;
    } catch (const RemoteError &) {
        throw;
    } catch (const Error &e) {
        throw PipelineError(stage, t, e.what());
    }
}

void check_latents(const std::vector<Image> &latents, std::size_t views, const std::string &stage,
                   int t) {
    if (latents.size() != views) {
        throw PipelineError(stage, t, "codec returned " + std::to_string(latents.size()) +
                                          " arrays for " + std::to_string(views) + " views");
    }
    for (const auto &z : latents) {
        if (!z.same_shape(latents.front())) throw PipelineError(stage, t, "codec output shapes differ");
        for (double x : z.data())
            if (!std::isfinite(x)) throw PipelineError(stage, t, "codec output is not finite");
    }
}

} // namespace

EditViewsResult edit_views(const GaussianCloud &source, const CameraSet &cameras,
                           NoisePredictor &predictor, LatentCodec &codec, const EditConfig &config,
                           int iteration) {
    config.validate();
    const TimestepSchedule schedule = config.schedule();
    const std::size_t V = cameras.size();
    const FinetuneConfig ecm = stage_config(config.ecm, config);

    const std::vector<Image> renders = render_views(source, cameras, config.background, config.render);
    const int t0 = schedule[0].t;
    std::vector<Image> z_ori = guarded("encode", t0, [&] { return codec.encode(renders); });
    check_latents(z_ori, V, "encode", t0);
    std::vector<Image> z_src = z_ori;

    EditViewsResult result;
    for (std::size_t i = 0; i < schedule.size(); ++i) {
        const int t = schedule[i].t;
        const double abar = schedule[i].alpha_bar;
        const std::uint64_t seed = step_seed(config.seed, iteration, static_cast<int>(i));
        const std::vector<Image> eps = stack_noise(seed, z_src);

        std::vector<Image> z_t(V), z_ori_t(V);
        for (std::size_t v = 0; v < V; ++v) {
            z_t[v] = add_noise(z_src[v], abar, eps[v]);
            z_ori_t[v] = add_noise(z_ori[v], abar, eps[v]);
        }

        PredictorRequest request;
        request.request_id = "it" + std::to_string(iteration) + "-s" + std::to_string(i);
        request.timestep = t;
        request.alpha_bar = abar;
        request.seed = seed;
        request.latents = &z_t;
        request.latents_original = &z_ori_t;
        request.prompt_src = config.prompt_src;
        request.prompt_tgt = config.prompt_tgt;
        request.sampled_noise = &eps;

        PredictorResponse response = guarded("predict", t, [&] { return predictor.predict(request); });
        check_response(request, response, "predict");
        ViewMaps blend_maps = response.attention;
        if (config.ccm_enabled) {
            blend_maps = guarded("consolidate", t, [&] {
                return consolidate(source, cameras, response.attention, config.ccm_normalization,
                                   config.render);
            });
            request.injected_attention = &blend_maps;
            request.request_id += "-ccm";
            response = guarded("predict", t, [&] { return predictor.predict(request); });
            check_response(request, response, "predict");
        }
        if (config.token_index >= blend_maps.channels()) {
            throw PipelineError("blend", t, "token_index " + std::to_string(config.token_index) +
                                                " out of range for " +
                                                std::to_string(blend_maps.channels()) + " attention channels");
        }

        std::vector<Image> z_edit(V);
        parallel_for(V, [&](std::size_t v) {
            const Image delta = noise_offset(z_ori_t[v], z_ori[v], abar);
            const Image &base = config.strict_alg1 ? z_src[v] : z_t[v];
            z_edit[v] = denoise_edit(base, response.noise_tgt[v], response.noise_src[v], delta, abar);
        });

        StepTrace step{static_cast<int>(i), t, abar, false, 0.0};
        std::vector<Image> z_con = z_edit;
        if (config.ecm_enabled && i % static_cast<std::size_t>(config.ecm_period) == 0) {
            const std::vector<Image> edited = guarded("decode", t, [&] { return codec.decode(z_edit); });
            const std::vector<Image> calibrated =
                guarded("ecm", t, [&] { return calibrate_views(source, cameras, edited, ecm); });
            z_con = guarded("encode", t, [&] { return codec.encode(calibrated); });
            check_latents(z_con, V, "encode", t);
            step.ecm_applied = true;
        }

        double mask_total = 0.0;
        std::size_t mask_count = 0;
        for (std::size_t v = 0; v < V; ++v) {
            Image mask = extract_channel(blend_maps.maps[v], config.token_index);
            mask = resample_to(mask, z_src[v].width(), z_src[v].height());
            for (double &m : mask.storage()) m = std::clamp(m, 0.0, 1.0);
            for (double m : mask.data()) mask_total += m;
            mask_count += mask.size();
            z_src[v] = guarded("blend", t, [&] {
                return local_blend(mask, z_con[v], z_src[v], config.blend_mode, config.blend_threshold);
            });
        }
        step.mask_mean = mask_count ? mask_total / static_cast<double>(mask_count) : 0.0;
        result.trace.push_back(step);
        if (i + 1 == schedule.size()) result.attention = std::move(blend_maps);
    }

    const int t_last = schedule[schedule.size() - 1].t;
    result.images = guarded("decode", t_last, [&] { return codec.decode(z_src); });
    if (result.images.size() != V) throw PipelineError("decode", t_last, "codec returned wrong view count");
    return result;
}

IterationResult run_iteration(const GaussianCloud &cloud, const CameraSet &cameras,
                              NoisePredictor &predictor, LatentCodec &codec,
                              const EditConfig &config, int iteration) {
    IterationResult out;
    out.source_renders = render_views(cloud, cameras, config.background, config.render);
    EditViewsResult edit = edit_views(cloud, cameras, predictor, codec, config, iteration);
    out.guidance = std::move(edit.images);
    out.trace = std::move(edit.trace);
    FinetuneResult fit = finetune(cloud, cameras, out.guidance, stage_config(config.final_stage, config));
    out.cloud = std::move(fit.cloud);
    // Derived from the input so saved scenes do not depend on process-wide id counters.
    out.cloud.set_id(cloud.id() + "/edit" + std::to_string(iteration + 1));
    out.report = std::move(fit.report);
    out.renders = render_views(out.cloud, cameras, config.background, config.render);
    return out;
}

double view_inconsistency(const GaussianCloud &cloud, const CameraSet &cameras,
                          const std::vector<Image> &images, const RenderConfig &config) {
    return cross_view_variance(cloud, cameras, as_view_maps(images), config).mean;
}

double residual_inconsistency(const GaussianCloud &cloud, const CameraSet &cameras,
                              const std::vector<Image> &images, const std::vector<Image> &reference,
                              const RenderConfig &config) {
    if (images.size() != reference.size()) throw AlignmentError("residual_inconsistency: view counts differ");
    std::vector<Image> residual = images;
    for (std::size_t v = 0; v < residual.size(); ++v) {
        require_same_shape(residual[v], reference[v], "residual_inconsistency");
        for (std::size_t i = 0; i < residual[v].size(); ++i) residual[v].data()[i] -= reference[v].data()[i];
    }
    return view_inconsistency(cloud, cameras, residual, config);
}

double mean_abs_change(const std::vector<Image> &a, const std::vector<Image> &b) {
    if (a.size() != b.size()) throw AlignmentError("mean_abs_change: view counts differ");
    if (a.empty()) return 0.0;
    double total = 0.0;
    for (std::size_t v = 0; v < a.size(); ++v) total += mean_abs_difference(a[v], b[v]);
    return total / static_cast<double>(a.size());
}

RunResult run(const GaussianCloud &cloud, const CameraSet &cameras, NoisePredictor &predictor,
              LatentCodec &codec, const EditConfig &config, const IterationObserver &observer) {
    config.validate();
    RunResult out;
    out.cloud = cloud; // every iteration assigns a derived id
    for (int it = 0; it < config.iterations; ++it) {
        IterationResult step = run_iteration(out.cloud, cameras, predictor, codec, config, it);
        IterationMetrics m;
        m.iteration = it + 1;
        m.source_inconsistency = view_inconsistency(out.cloud, cameras, step.source_renders, config.render);
        m.edit_inconsistency = view_inconsistency(out.cloud, cameras, step.guidance, config.render);
        m.render_inconsistency = view_inconsistency(step.cloud, cameras, step.renders, config.render);
        m.residual_inconsistency =
            residual_inconsistency(step.cloud, cameras, step.guidance, step.renders, config.render);
        m.render_change = mean_abs_change(step.source_renders, step.renders);
        m.final_loss = step.report.empty() ? 0.0 : step.report.back().total;
        if (observer) observer(m, step);
        out.metrics.push_back(m);
        out.renders.push_back(step.renders);
        out.guidance.push_back(step.guidance);
        out.reports.push_back(step.report);
        out.cloud = std::move(step.cloud);
    }
    return out;
}

} // namespace consplat
