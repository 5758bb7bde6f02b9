#pragma once

#include "consplat/consolidation.hpp"
#include "consplat/image.hpp"

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace consplat {

// One noise-prediction query covering every view at a single timestep.
struct PredictorRequest {
    std::string request_id;
    int timestep = 0;
    double alpha_bar = 1.0;
    std::uint64_t seed = 0;                             // noise seed of this timestep
    const std::vector<Image> *latents = nullptr;        // z_t, queried with prompt_tgt
    const std::vector<Image> *latents_original = nullptr; // z_ori_t, queried with prompt_src
    std::string prompt_src;
    std::string prompt_tgt;
    // Guidance context: the noise sampled for this timestep (one image per view), when
    // the caller has it in process.
    const std::vector<Image> *sampled_noise = nullptr;
    // Consolidated maps the predictor must use in place of its own attention.
    const ViewMaps *injected_attention = nullptr;
};

struct PredictorResponse {
    std::vector<Image> noise_src;
    std::vector<Image> noise_tgt;
    ViewMaps attention; // per view H' x W' x K, values in [0, 1]
};

class NoisePredictor {
public:
    virtual ~NoisePredictor() = default;
    virtual PredictorResponse predict(const PredictorRequest &request) = 0;
    virtual std::string name() const = 0;
};

class LatentCodec {
public:
    virtual ~LatentCodec() = default;
    virtual std::vector<Image> encode(const std::vector<Image> &images) = 0;
    virtual std::vector<Image> decode(const std::vector<Image> &latents) = 0;
    virtual std::string name() const = 0;
};

// Pixel-space latents: decode(encode(x)) == x exactly.
class IdentityCodec final : public LatentCodec {
public:
    std::vector<Image> encode(const std::vector<Image> &images) override { return images; }
    std::vector<Image> decode(const std::vector<Image> &latents) override { return latents; }
    std::string name() const override { return "identity"; }
};

// Predicts the same noise under both prompts, so every edit is the identity. Attention
// maps are all ones (or the injected maps).
class IdentityPredictor final : public NoisePredictor {
public:
    PredictorResponse predict(const PredictorRequest &request) override;
    std::string name() const override { return "identity"; }
};

// Throws PipelineError unless `response` satisfies the contract for `request`.
void check_response(const PredictorRequest &request, const PredictorResponse &response,
                    const std::string &stage);

} // namespace consplat
