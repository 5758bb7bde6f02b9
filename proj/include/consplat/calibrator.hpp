#pragma once

#include "consplat/camera.hpp"
#include "consplat/gaussian.hpp"
#include "consplat/image.hpp"
#include "consplat/optimizer.hpp"
#include "consplat/renderer.hpp"

#include <array>
#include <functional>
#include <iosfwd>
#include <optional>
#include <vector>

namespace consplat {

struct LossValue {
    double value = 0.0;
    Image gradient; // d value / d rendered
};

// Optional perceptual term: (rendered, target) -> value and gradient wrt rendered.
using PerceptualHook = std::function<LossValue(const Image &rendered, const Image &target)>;

struct FinetuneConfig {
    double learning_rate = 0.001;
    int steps = 50;
    double lambda_mae = 10.0;
    double lambda_lpips = 10.0; // inert unless `perceptual` is set
    double lambda_anchor = 50.0;
    int views_per_step = 0;     // 0 = every view each step
    // Per-group switches and learning-rate multipliers, indexed by ParamGroup.
    std::array<bool, 5> optimize = {true, true, true, true, true};
    std::array<double, 5> lr_scale = {1.0, 1.0, 1.0, 1.0, 1.0};
    Vec3 background = Vec3::Zero();
    RenderConfig render;
    PerceptualHook perceptual;

    bool optimizes(ParamGroup g) const { return optimize[static_cast<int>(g)]; }
    double group_lr(ParamGroup g) const { return learning_rate * lr_scale[static_cast<int>(g)]; }
    void validate() const;
};

// MAE over pixels and channels, with its (sub)gradient image.
LossValue mae_loss(const Image &rendered, const Image &target);

// Positions of every Gaussian at fine-tune start.
struct AnchorSet {
    std::vector<Vec3> positions;

    static AnchorSet capture(const GaussianCloud &cloud);
};

struct AnchorPenalty {
    double value = 0.0;
    std::vector<double> mean_gradient; // laid out like CloudGradients::mean
};

// lambda * sum_j |P_hat_j - P_j|^2.
AnchorPenalty anchor_penalty(const GaussianCloud &cloud, const AnchorSet &anchors, double lambda);

// Per-group Adam state for a whole cloud.
struct OptimizerState {
    std::array<AdamState, 5> groups;

    AdamState &group(ParamGroup g) { return groups[static_cast<int>(g)]; }
};

// Applies one Adam step to every enabled group, then renormalizes quaternions and
// clamps colors to [0, 1].
void adam_step(GaussianCloud &cloud, const CloudGradients &grads, OptimizerState &state,
               const FinetuneConfig &config);

// One row per optimization step, measured before that step's update. `mae` and
// `lpips` are per-view means over the batch; `total` is the optimized objective
// (lambda-weighted image terms summed over views, plus the anchor penalty).
struct LossRecord {
    int step = 0;
    double mae = 0.0;
    double lpips = 0.0;
    double anchor = 0.0;
    double total = 0.0;
};

using LossReport = std::vector<LossRecord>;

void write_loss_report(std::ostream &out, const LossReport &report);

struct FinetuneResult {
    GaussianCloud cloud;
    LossReport report;
};

// Fits a copy of `cloud` to one target image per camera. The input is not modified.
FinetuneResult finetune(const GaussianCloud &cloud, const CameraSet &cameras,
                        const std::vector<Image> &targets, const FinetuneConfig &config);

// Editing consistency: clone, fine-tune against the edited images, re-render every view.
std::vector<Image> calibrate_views(const GaussianCloud &source, const CameraSet &cameras,
                                   const std::vector<Image> &edited, const FinetuneConfig &config,
                                   LossReport *report = nullptr);

std::vector<Image> render_views(const GaussianCloud &cloud, const CameraSet &cameras,
                                const Vec3 &background = Vec3::Zero(),
                                const RenderConfig &config = {});

} // namespace consplat
