#include "consplat/mock_predictor.hpp"

#include "consplat/error.hpp"
#include "consplat/latent.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace consplat {

std::vector<Image> make_bias_fields(std::uint64_t seed, std::size_t views, int width, int height,
                                    int channels, double amplitude) {
    std::vector<Image> fields(views, Image(width, height, channels));
    if (amplitude == 0.0) return fields;
    // One plane wave per view and channel, 0.25 to 0.75 cycles across the image.
    for (std::size_t v = 0; v < views; ++v) {
        const auto u = uniform_samples(seed, 0xB1A5 + v, static_cast<std::size_t>(channels) * 3);
        for (int c = 0; c < channels; ++c) {
            const double fx = 0.25 + 0.5 * u[3 * c];
            const double fy = 0.25 + 0.5 * u[3 * c + 1];
            const double phase = 2.0 * std::numbers::pi * u[3 * c + 2];
            for (int y = 0; y < height; ++y)
                for (int x = 0; x < width; ++x)
                    fields[v].at(x, y, c) = amplitude *
                        std::sin(2.0 * std::numbers::pi * (fx * x / width + fy * y / height) + phase);
        }
    }
    Image mean(width, height, channels);
    for (const auto &f : fields)
        for (std::size_t i = 0; i < f.size(); ++i) mean.data()[i] += f.data()[i] / views;
    for (auto &f : fields)
        for (std::size_t i = 0; i < f.size(); ++i) f.data()[i] -= mean.data()[i];
    return fields;
}

MockPredictor::MockPredictor(MockPredictorSpec spec) : spec_(std::move(spec)) {
    if (!(spec_.drift_rate >= 0.0 && spec_.drift_rate <= 1.0)) {
        throw InvalidArgument("mock drift_rate must lie in [0, 1]");
    }
    if (spec_.attention_downsample < 1) throw InvalidArgument("attention_downsample must be >= 1");
    targets_ = render_views(spec_.target_cloud, spec_.cameras, spec_.background, spec_.render);
    const ScalarAttachment *mask = spec_.target_cloud.find_attachment(spec_.attention_source);
    ScalarAttachment fallback;
    if (!mask) {
        fallback = make_attachment("edit", {"edit"}, spec_.target_cloud.size(), 1.0);
        mask = &fallback;
    }
    labels_ = mask->channels;
    for (const auto &cam : spec_.cameras) {
        Image a = render_scalar(spec_.target_cloud, *mask, cam, spec_.render);
        if (spec_.attention_downsample > 1) {
            a = downsample_area(a, std::max(1, cam.width / spec_.attention_downsample),
                                std::max(1, cam.height / spec_.attention_downsample));
        }
        attention_.push_back(std::move(a));
    }
    if (!spec_.cameras.empty()) {
        bias_ = make_bias_fields(spec_.seed, spec_.cameras.size(), spec_.cameras[0].width,
                                 spec_.cameras[0].height, 3, spec_.bias_amplitude);
    }
}

PredictorResponse MockPredictor::predict(const PredictorRequest &request) {
    if (!request.latents) throw InvalidArgument("mock predictor: request carries no latents");
    const auto &latents = *request.latents;
    if (latents.size() != targets_.size()) {
        throw AlignmentError("mock predictor: " + std::to_string(latents.size()) +
                             " latent views for " + std::to_string(targets_.size()) + " cameras");
    }
    const double abar = request.alpha_bar;
    if (!(abar > 0.0 && abar < 1.0)) throw DegenerateScheduleError("mock predictor needs 0 < alpha_bar < 1");
    const double a = std::sqrt(abar), b = std::sqrt(1.0 - abar);
    const double gain = (a / b) * spec_.drift_rate;

    PredictorResponse out;
    for (std::size_t v = 0; v < latents.size(); ++v) {
        const Image &zt = latents[v];
        require_same_shape(zt, targets_[v], "mock predictor latent vs target render");
        const Image eps = request.sampled_noise
                              ? (*request.sampled_noise)[v]
                              : gaussian_noise_image(request.seed, v, zt.width(), zt.height(), zt.channels());
        Image eps_tgt(zt.width(), zt.height(), zt.channels());
        for (std::size_t i = 0; i < zt.size(); ++i) {
            const double z_cur = (zt.data()[i] - b * eps.data()[i]) / a;
            const double goal = targets_[v].data()[i] + bias_[v].data()[i];
            eps_tgt.data()[i] = eps.data()[i] + gain * (z_cur - goal);
        }
        out.noise_src.push_back(eps);
        out.noise_tgt.push_back(std::move(eps_tgt));
    }

    if (request.injected_attention) {
        out.attention = *request.injected_attention;
        return out;
    }
    out.attention.labels = labels_;
    for (std::size_t v = 0; v < attention_.size(); ++v) {
        Image map = attention_[v];
        if (spec_.attention_noise > 0.0) {
            const auto noise = gaussian_samples(splitmix64(spec_.seed) ^ request.seed, 0xA77E + v, map.size());
            for (std::size_t i = 0; i < map.size(); ++i) {
                map.data()[i] = std::clamp(map.data()[i] + spec_.attention_noise * noise[i], 0.0, 1.0);
            }
        }
        out.attention.maps.push_back(std::move(map));
    }
    return out;
}

std::unique_ptr<NoisePredictor> mock_predictor(MockPredictorSpec spec) {
    return std::make_unique<MockPredictor>(std::move(spec));
}

} // namespace consplat
