#pragma once

#include "consplat/camera.hpp"
#include "consplat/gaussian.hpp"
#include "consplat/image.hpp"
#include "consplat/mock_predictor.hpp"
#include "consplat/pipeline.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fixture {

using namespace consplat;

// Two coincident, fully opaque Gaussians of scale 1e4 at the origin. Every camera of a
// ring sees them cover the whole image, so coverage is 1 - 1e-8 or better everywhere.
void add_backdrop(GaussianCloud &cloud);

// Adds +-amplitude (random sign per patch) on square patches at random positions until
// at least `fraction` of the pixels are covered. Independent per view.
std::vector<Image> corrupt_with_patches(const std::vector<Image> &images, std::uint64_t seed,
                                        double amplitude, double fraction, int patch);

// Per-view single-channel masks rendered from the "edit_region" attachment.
std::vector<Image> region_masks(const GaussianCloud &cloud, const CameraSet &cameras);

struct RegionError {
    double target = 0.0;     // mean abs error over pixels with mask > 0.5
    double non_target = 0.0; // mean abs error over pixels with mask < 0.05
};

// Renders' error against `target` inside the region and against `source` outside it.
RegionError region_error(const std::vector<Image> &renders, const std::vector<Image> &target,
                         const std::vector<Image> &source, const std::vector<Image> &masks);

// Grey background shared by the closed-loop fixtures.
inline const Vec3 kGrey = Vec3::Constant(0.5);
inline const Vec3 kBlue = Vec3(0.1, 0.3, 0.9);

// Two-blob scene (40 Gaussians, 8 views, 64x64) and its blob-A-recolored target.
struct EditFixture {
    GaussianCloud source;
    GaussianCloud target;
    CameraSet cameras;
};
EditFixture two_blob_edit(std::uint64_t scene_seed = 7);

MockPredictorSpec mock_for(const EditFixture &f, double bias, double noise, std::uint64_t seed,
                           int attention_downsample = 8);

EditConfig edit_config_for(std::uint64_t seed = 3);

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string &tag);
    ~TempDir();
    TempDir(const TempDir &) = delete;
    TempDir &operator=(const TempDir &) = delete;
    const std::filesystem::path &path() const { return path_; }

private:
    std::filesystem::path path_;
};

// Bytes of a file.
std::string read_file(const std::filesystem::path &path);

} // namespace fixture
