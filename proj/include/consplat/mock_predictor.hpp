#pragma once

#include "consplat/calibrator.hpp"
#include "consplat/predictor.hpp"

#include <memory>

namespace consplat {

// Deterministic stand-in for a diffusion editor. Each query pulls the current clean
// latent a fraction `drift_rate` of the way toward the target render plus a per-view
// bias field, and reports the target cloud's edit-region channel as attention.
struct MockPredictorSpec {
    GaussianCloud target_cloud;
    CameraSet cameras;
    double drift_rate = 0.15;
    double bias_amplitude = 0.0;
    std::string attention_source = "edit_region"; // attachment on target_cloud
    double attention_noise = 0.0;                  // per-pixel sigma, per view
    int attention_downsample = 1;                  // attention maps at 1/f resolution
    std::uint64_t seed = 0;
    Vec3 background = Vec3::Zero();
    RenderConfig render;
};

class MockPredictor final : public NoisePredictor {
public:
    explicit MockPredictor(MockPredictorSpec spec);

    PredictorResponse predict(const PredictorRequest &request) override;
    std::string name() const override { return "mock"; }

    const std::vector<Image> &targets() const { return targets_; }
    const std::vector<Image> &bias_fields() const { return bias_; }
    const std::vector<Image> &base_attention() const { return attention_; }
    const MockPredictorSpec &spec() const { return spec_; }

private:
    MockPredictorSpec spec_;
    std::vector<Image> targets_;
    std::vector<Image> bias_;
    std::vector<Image> attention_;
    std::vector<std::string> labels_;
};

std::unique_ptr<NoisePredictor> mock_predictor(MockPredictorSpec spec);

// Smooth per-view fields of peak amplitude about `amplitude`, shifted so their mean
// across views is zero at every pixel.
std::vector<Image> make_bias_fields(std::uint64_t seed, std::size_t views, int width, int height,
                                    int channels, double amplitude);

} // namespace consplat
