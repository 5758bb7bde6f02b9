#include "consplat/predictor.hpp"

#include "consplat/error.hpp"
#include "consplat/latent.hpp"

#include <cmath>

namespace consplat {

PredictorResponse IdentityPredictor::predict(const PredictorRequest &request) {
    PredictorResponse out;
    const auto &latents = *request.latents;
    for (std::size_t v = 0; v < latents.size(); ++v) {
        const Image &z = latents[v];
        Image eps = request.sampled_noise
                        ? (*request.sampled_noise)[v]
                        : gaussian_noise_image(request.seed, v, z.width(), z.height(), z.channels());
        out.noise_src.push_back(eps);
        out.noise_tgt.push_back(std::move(eps));
    }
    if (request.injected_attention) {
        out.attention = *request.injected_attention;
    } else {
        out.attention.labels = {"edit"};
        for (const auto &z : latents) out.attention.maps.emplace_back(z.width(), z.height(), 1, 1.0);
    }
    return out;
}

void check_response(const PredictorRequest &request, const PredictorResponse &response,
                    const std::string &stage) {
    const auto &latents = *request.latents;
    auto fail = [&](const std::string &what) { throw PipelineError(stage, request.timestep, what); };
    if (response.noise_src.size() != latents.size() || response.noise_tgt.size() != latents.size()) {
        fail("predictor returned noise for the wrong number of views");
    }
    if (response.attention.size() != latents.size()) {
        fail("predictor returned attention for the wrong number of views");
    }
    for (std::size_t v = 0; v < latents.size(); ++v) {
        if (!response.noise_src[v].same_shape(latents[v]) || !response.noise_tgt[v].same_shape(latents[v])) {
            fail("noise shape differs from latent shape in view " + std::to_string(v));
        }
        for (double x : response.noise_src[v].data())
            if (!std::isfinite(x)) fail("non-finite source noise in view " + std::to_string(v));
        for (double x : response.noise_tgt[v].data())
            if (!std::isfinite(x)) fail("non-finite target noise in view " + std::to_string(v));
        for (double x : response.attention.maps[v].data()) {
            if (!(x >= 0.0 && x <= 1.0)) fail("attention outside [0, 1] in view " + std::to_string(v));
        }
    }
    try {
        response.attention.validate();
    } catch (const Error &e) {
        fail(e.what());
    }
}

} // namespace consplat
