#include "fixtures.hpp"

#include "consplat/latent.hpp"
#include "consplat/renderer.hpp"
#include "consplat/synth.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unistd.h>

namespace fixture {

void add_backdrop(GaussianCloud &cloud) {
    for (int b = 0; b < 2; ++b) {
        Gaussian g;
        g.set_mean(Vec3::Zero());
        g.set_scale(Vec3::Constant(1e4));
        g.set_opacity_logit(40.0);
        g.set_color(Vec3::Constant(0.5));
        cloud.push_back(g);
    }
}

std::vector<Image> corrupt_with_patches(const std::vector<Image> &images, std::uint64_t seed,
                                        double amplitude, double fraction, int patch) {
    std::vector<Image> out = images;
    for (std::size_t v = 0; v < images.size(); ++v) {
        const int W = images[v].width(), H = images[v].height();
        std::vector<char> hit(static_cast<std::size_t>(W) * H, 0);
        std::size_t covered = 0;
        const std::size_t need = static_cast<std::size_t>(std::ceil(fraction * W * H));
        const auto u = uniform_samples(seed, v, 3 * static_cast<std::size_t>(W) * H);
        for (std::size_t k = 0; covered < need; ++k) {
            const int x0 = std::min(W - patch, static_cast<int>(u[3 * k] * (W - patch + 1)));
            const int y0 = std::min(H - patch, static_cast<int>(u[3 * k + 1] * (H - patch + 1)));
            const double delta = u[3 * k + 2] < 0.5 ? -amplitude : amplitude;
            for (int y = y0; y < y0 + patch; ++y) {
                for (int x = x0; x < x0 + patch; ++x) {
                    char &h = hit[static_cast<std::size_t>(y) * W + x];
                    if (h) continue; // overlapping patches do not stack
                    h = 1;
                    ++covered;
                    for (int c = 0; c < images[v].channels(); ++c) out[v].at(x, y, c) += delta;
                }
            }
        }
    }
    return out;
}

std::vector<Image> region_masks(const GaussianCloud &cloud, const CameraSet &cameras) {
    std::vector<Image> masks;
    for (const auto &cam : cameras) masks.push_back(render_scalar(cloud, cloud.attachment("edit_region"), cam));
    return masks;
}

RegionError region_error(const std::vector<Image> &renders, const std::vector<Image> &target,
                         const std::vector<Image> &source, const std::vector<Image> &masks) {
    double t = 0.0, n = 0.0;
    std::size_t tn = 0, nn = 0;
    for (std::size_t v = 0; v < renders.size(); ++v) {
        for (int y = 0; y < renders[v].height(); ++y) {
            for (int x = 0; x < renders[v].width(); ++x) {
                const double m = masks[v].at(x, y, 0);
                for (int c = 0; c < 3; ++c) {
                    if (m > 0.5) {
                        t += std::abs(renders[v].at(x, y, c) - target[v].at(x, y, c));
                        ++tn;
                    } else if (m < 0.05) {
                        n += std::abs(renders[v].at(x, y, c) - source[v].at(x, y, c));
                        ++nn;
                    }
                }
            }
        }
    }
    return {tn ? t / tn : 0.0, nn ? n / nn : 0.0};
}

EditFixture two_blob_edit(std::uint64_t scene_seed) {
    SynthScene s = synth_scene(40, Layout::TwoBlob, scene_seed);
    EditFixture f;
    f.target = recolor_region(s.cloud, "edit_region", kBlue);
    f.source = std::move(s.cloud);
    f.cameras = std::move(s.cameras);
    return f;
}

MockPredictorSpec mock_for(const EditFixture &f, double bias, double noise, std::uint64_t seed,
                           int attention_downsample) {
    MockPredictorSpec spec;
    spec.target_cloud = f.target;
    spec.cameras = f.cameras;
    spec.drift_rate = 0.15;
    spec.bias_amplitude = bias;
    spec.attention_noise = noise;
    spec.attention_downsample = attention_downsample;
    spec.seed = seed;
    spec.background = kGrey;
    return spec;
}

EditConfig edit_config_for(std::uint64_t seed) {
    EditConfig cfg;
    cfg.seed = seed;
    cfg.background = kGrey;
    return cfg;
}

TempDir::TempDir(const std::string &tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("consplat-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

std::string read_file(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

} // namespace fixture
