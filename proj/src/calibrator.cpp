#include "consplat/calibrator.hpp"

#include "consplat/error.hpp"
#include "consplat/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace consplat {

void FinetuneConfig::validate() const {
    if (!(learning_rate > 0.0)) throw InvalidArgument("learning_rate must be positive");
    if (steps < 1) throw InvalidArgument("steps must be at least 1");
    if (lambda_mae < 0.0 || lambda_lpips < 0.0 || lambda_anchor < 0.0) {
        throw InvalidArgument("loss weights must be non-negative");
    }
    if (views_per_step < 0) throw InvalidArgument("views_per_step must be non-negative");
    for (double s : lr_scale) {
        if (!(s >= 0.0)) throw InvalidArgument("lr_scale entries must be non-negative");
    }
}

LossValue mae_loss(const Image &rendered, const Image &target) {
    require_same_shape(rendered, target, "mae_loss");
    LossValue out;
    out.gradient = Image(rendered.width(), rendered.height(), rendered.channels());
    const std::size_t n = rendered.size();
    if (n == 0) return out;
    const double inv_n = 1.0 / static_cast<double>(n);
    double sum = 0.0;
    auto r = rendered.data();
    auto t = target.data();
    auto g = out.gradient.data();
    for (std::size_t i = 0; i < n; ++i) {
        const double d = r[i] - t[i];
        sum += std::abs(d);
        g[i] = d > 0.0 ? inv_n : (d < 0.0 ? -inv_n : 0.0);
    }
    out.value = sum * inv_n;
    return out;
}

AnchorSet AnchorSet::capture(const GaussianCloud &cloud) {
    AnchorSet a;
    a.positions.reserve(cloud.size());
    for (const auto &g : cloud.gaussians()) a.positions.push_back(g.mean());
    return a;
}

AnchorPenalty anchor_penalty(const GaussianCloud &cloud, const AnchorSet &anchors, double lambda) {
    if (anchors.positions.size() != cloud.size()) {
        throw DimensionError("anchor set has " + std::to_string(anchors.positions.size()) +
                             " positions for " + std::to_string(cloud.size()) + " Gaussians");
    }
    AnchorPenalty out;
    out.mean_gradient.assign(3 * cloud.size(), 0.0);
    for (std::size_t j = 0; j < cloud.size(); ++j) {
        const Vec3 d = cloud[j].mean() - anchors.positions[j];
        out.value += d.squaredNorm();
        for (int c = 0; c < 3; ++c) out.mean_gradient[3 * j + c] = 2.0 * lambda * d[c];
    }
    out.value *= lambda;
    return out;
}

void adam_step(GaussianCloud &cloud, const CloudGradients &grads, OptimizerState &state,
               const FinetuneConfig &config) {
    for (ParamGroup g : kAllParamGroups) {
        if (!config.optimizes(g)) continue;
        std::vector<double> params = read_group(cloud, g);
        adam_step(params, grads.group(g), state.group(g), config.group_lr(g), group_name(g));
        if (g == ParamGroup::Color) {
            for (double &c : params) c = std::clamp(c, 0.0, 1.0);
        }
        write_group(cloud, g, params); // renormalizes quaternions
    }
}

void write_loss_report(std::ostream &out, const LossReport &report) {
    out.precision(17);
    for (const auto &r : report) {
        out << "{\"step\":" << r.step << ",\"mae\":" << r.mae << ",\"lpips\":" << r.lpips
            << ",\"anchor\":" << r.anchor << ",\"total\":" << r.total << "}\n";
    }
}

std::vector<Image> render_views(const GaussianCloud &cloud, const CameraSet &cameras,
                                const Vec3 &background, const RenderConfig &config) {
    std::vector<Image> out(cameras.size());
    parallel_for(cameras.size(), [&](std::size_t v) {
        out[v] = render_color(cloud, cameras[v], background, config).color;
    });
    return out;
}

FinetuneResult finetune(const GaussianCloud &cloud, const CameraSet &cameras,
                        const std::vector<Image> &targets, const FinetuneConfig &config) {
    config.validate();
    if (targets.size() != cameras.size()) {
        throw AlignmentError("finetune: " + std::to_string(targets.size()) + " targets for " +
                             std::to_string(cameras.size()) + " cameras");
    }
    for (std::size_t v = 0; v < cameras.size(); ++v) {
        if (targets[v].width() != cameras[v].width || targets[v].height() != cameras[v].height ||
            targets[v].channels() != 3) {
            throw DimensionError("finetune: target " + std::to_string(v) +
                                 " does not match its camera resolution");
        }
    }

    FinetuneResult result{clone_cloud(cloud), {}};
    GaussianCloud &work = result.cloud;
    const AnchorSet anchors = AnchorSet::capture(cloud);
    OptimizerState state;
    const std::size_t V = cameras.size();
    const std::size_t batch =
        config.views_per_step > 0 ? std::min<std::size_t>(config.views_per_step, V) : V;

    struct ViewTerm {
        double mae = 0.0, lpips = 0.0;
        CloudGradients grads;
    };

    for (int step = 0; step < config.steps; ++step) {
        // Views are visited cyclically so every view is used equally often.
        std::vector<std::size_t> views(batch);
        for (std::size_t b = 0; b < batch; ++b) views[b] = (step * batch + b) % V;

        std::vector<ViewTerm> terms(batch);
        parallel_for(batch, [&](std::size_t b) {
            const std::size_t v = views[b];
            const Image rendered = render_color(work, cameras[v], config.background, config.render).color;
            LossValue mae = mae_loss(rendered, targets[v]);
            Image upstream = mae.gradient;
            for (double &g : upstream.storage()) g *= config.lambda_mae;
            terms[b].mae = mae.value;
            if (config.perceptual && config.lambda_lpips > 0.0) {
                LossValue p = config.perceptual(rendered, targets[v]);
                require_same_shape(p.gradient, rendered, "perceptual gradient");
                terms[b].lpips = p.value;
                for (std::size_t i = 0; i < upstream.size(); ++i) {
                    upstream.storage()[i] += config.lambda_lpips * p.gradient.storage()[i];
                }
            }
            terms[b].grads = grad_render(work, cameras[v], upstream, config.background, config.render);
        });

        // Reduction in view order keeps the update independent of scheduling.
        CloudGradients grads = CloudGradients::zeros(work.size());
        LossRecord record;
        record.step = step;
        double image_total = 0.0;
        for (const auto &t : terms) {
            grads += t.grads;
            record.mae += t.mae;
            record.lpips += t.lpips;
            image_total += config.lambda_mae * t.mae + config.lambda_lpips * t.lpips;
        }
        record.mae /= static_cast<double>(batch);
        record.lpips /= static_cast<double>(batch);
        if (config.lambda_anchor > 0.0) {
            const AnchorPenalty anchor = anchor_penalty(work, anchors, config.lambda_anchor);
            record.anchor = anchor.value;
            for (std::size_t i = 0; i < grads.mean.size(); ++i) grads.mean[i] += anchor.mean_gradient[i];
        }
        record.total = image_total + record.anchor;
        if (!std::isfinite(record.total)) {
            throw NonFiniteError("finetune: non-finite loss at step " + std::to_string(step));
        }
        result.report.push_back(record);
        adam_step(work, grads, state, config);
    }
    return result;
}

std::vector<Image> calibrate_views(const GaussianCloud &source, const CameraSet &cameras,
                                   const std::vector<Image> &edited, const FinetuneConfig &config,
                                   LossReport *report) {
    FinetuneResult fit = finetune(clone_cloud(source), cameras, edited, config);
    if (report) *report = std::move(fit.report);
    return render_views(fit.cloud, cameras, config.background, config.render);
}

} // namespace consplat
