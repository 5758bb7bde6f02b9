#pragma once

#include "consplat/calibrator.hpp"
#include "consplat/consolidation.hpp"
#include "consplat/latent.hpp"
#include "consplat/predictor.hpp"
#include "consplat/schedule.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace consplat {

struct EditConfig {
    int total_steps = 1000;   // T
    int schedule_steps = 12;  // N
    double beta_start = 1e-4;
    double beta_end = 0.02;
    int ecm_period = 5;       // ECM on 0-based step indices 0, period, 2 * period, ...
    bool ecm_enabled = true;
    bool ccm_enabled = true;
    int iterations = 2;
    BlendMode blend_mode = BlendMode::Soft;
    double blend_threshold = 0.3;
    int token_index = 0;      // attention channel used as the blend mask
    Normalization ccm_normalization = Normalization::Weight;
    FinetuneConfig ecm;         // 50 steps, color learning rate x20
    FinetuneConfig final_stage; // 400 steps
    std::uint64_t seed = 0;
    bool strict_alg1 = false; // denoise from the clean source latent instead of z_t
    std::string prompt_src;
    std::string prompt_tgt;
    Vec3 background = Vec3::Zero();
    RenderConfig render;

    EditConfig();
    void validate() const;
    TimestepSchedule schedule() const;
};

struct StepTrace {
    int index = 0;
    int t = 0;
    double alpha_bar = 0.0;
    bool ecm_applied = false;
    double mask_mean = 0.0;
};

struct EditViewsResult {
    std::vector<Image> images;   // decoded edited guidance images, one per camera
    ViewMaps attention;          // blend-stage maps of the last step
    std::vector<StepTrace> trace;
};

// Multi-view latent editing of the renders of `source` over the whole schedule.
// `iteration` only feeds the noise seeds.
EditViewsResult edit_views(const GaussianCloud &source, const CameraSet &cameras,
                           NoisePredictor &predictor, LatentCodec &codec, const EditConfig &config,
                           int iteration = 0);

struct IterationResult {
    GaussianCloud cloud;
    std::vector<Image> source_renders;
    std::vector<Image> guidance;  // edited images the final stage was fitted to
    std::vector<Image> renders;   // renders of the returned cloud
    LossReport report;            // final-stage losses
    std::vector<StepTrace> trace;
};

// Render, edit every view, fine-tune a copy of `cloud` on the edits. `cloud` is untouched.
IterationResult run_iteration(const GaussianCloud &cloud, const CameraSet &cameras,
                              NoisePredictor &predictor, LatentCodec &codec,
                              const EditConfig &config, int iteration = 0);

struct IterationMetrics {
    int iteration = 0;              // 1-based
    double source_inconsistency = 0.0; // cross-view variance of the input renders
    double edit_inconsistency = 0.0;   // cross-view variance of the guidance images
    double render_inconsistency = 0.0; // cross-view variance of the output renders
    // Cross-view variance of guidance minus output renders: the part of the edits the
    // fitted cloud could not absorb. Unlike the raw readout variance it is zero for
    // guidance that is itself a render of the output cloud.
    double residual_inconsistency = 0.0;
    double render_change = 0.0;        // mean abs change of renders over all views
    double final_loss = 0.0;           // last final-stage objective
};

struct RunResult {
    GaussianCloud cloud;
    std::vector<IterationMetrics> metrics;
    std::vector<std::vector<Image>> renders;  // per iteration, renders of its output
    std::vector<std::vector<Image>> guidance; // per iteration, edited guidance images
    std::vector<LossReport> reports;
};

using IterationObserver = std::function<void(const IterationMetrics &, const IterationResult &)>;

// Chains `config.iterations` calls to run_iteration, each on the previous output.
RunResult run(const GaussianCloud &cloud, const CameraSet &cameras, NoisePredictor &predictor,
              LatentCodec &codec, const EditConfig &config, const IterationObserver &observer = {});

// Cross-view variance of RGB images read out through `cloud`.
double view_inconsistency(const GaussianCloud &cloud, const CameraSet &cameras,
                          const std::vector<Image> &images, const RenderConfig &config = {});

// view_inconsistency of (images - reference), view by view.
double residual_inconsistency(const GaussianCloud &cloud, const CameraSet &cameras,
                              const std::vector<Image> &images, const std::vector<Image> &reference,
                              const RenderConfig &config = {});

// Mean over views of mean_abs_difference.
double mean_abs_change(const std::vector<Image> &a, const std::vector<Image> &b);

} // namespace consplat
