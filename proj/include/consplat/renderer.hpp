#pragma once

#include "consplat/camera.hpp"
#include "consplat/gaussian.hpp"
#include "consplat/image.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace consplat {

struct RenderConfig {
    double near_plane = 0.01;       // camera-space z below which Gaussians are dropped
    double dilation = 0.3;          // px^2 added to each diagonal entry of cov2d
    double cutoff_sigma = 3.0;      // footprint radius in standard deviations
    bool early_termination = true;  // stop blending once transmittance < min_transmittance
    double min_transmittance = 1e-4;
    double record_floor = 1e-4;     // contribution records need weight > record_floor
    int max_records = 32;           // per-pixel cap on contribution records, 0 = unlimited
};

// A Gaussian after perspective projection into one camera.
struct ProjectedGaussian {
    std::size_t index = 0;  // ordinal in the source cloud
    Vec2 mean2d = Vec2::Zero();
    Mat2 cov2d = Mat2::Identity();
    Mat2 conic = Mat2::Identity(); // inverse of cov2d
    double depth = 0.0;
    double radius = 0.0;
    double opacity = 0.0;
};

// Projects every Gaussian in front of the near plane; output sorted front to back
// (depth ascending, ties by index).
std::vector<ProjectedGaussian> project(const GaussianCloud &cloud, const Camera &camera,
                                       const RenderConfig &config = {});

// Footprint test and 2D density of a projected Gaussian at pixel center (px, py).
bool footprint_covers(const ProjectedGaussian &pg, double px, double py);
double footprint_density(const ProjectedGaussian &pg, double px, double py);

struct ContributionRecord {
    std::uint32_t gaussian_index = 0;
    std::uint32_t pixel = 0; // y * width + x
    double weight = 0.0;     // alpha_i * G_i * T_i
};

struct RenderOutput {
    Image color;  // H x W x 3
    Image alpha;  // H x W x 1
    // Contribution records grouped by pixel; records of pixel p occupy
    // [contribution_offsets[p], contribution_offsets[p + 1]) in front-to-back order.
    std::vector<ContributionRecord> contributions;
    std::vector<std::size_t> contribution_offsets;

    bool has_contributions() const { return !contribution_offsets.empty(); }
    std::span<const ContributionRecord> records_at(std::size_t pixel) const {
        return std::span<const ContributionRecord>(contributions)
            .subspan(contribution_offsets[pixel],
                     contribution_offsets[pixel + 1] - contribution_offsets[pixel]);
    }
};

RenderOutput render_color(const GaussianCloud &cloud, const Camera &camera,
                          const Vec3 &background = Vec3::Zero(), const RenderConfig &config = {});

// Same compositing with the attachment's K channels as per-Gaussian features and a
// zero background. Throws AttachmentError if the attachment does not fit the cloud.
Image render_scalar(const GaussianCloud &cloud, const ScalarAttachment &attachment,
                    const Camera &camera, const RenderConfig &config = {});

RenderOutput render_with_contributions(const GaussianCloud &cloud, const Camera &camera,
                                       const Vec3 &background = Vec3::Zero(),
                                       const RenderConfig &config = {});

enum class ParamGroup { Color, OpacityLogit, Mean, LogScale, Rotation };

inline constexpr ParamGroup kAllParamGroups[] = {ParamGroup::Color, ParamGroup::OpacityLogit,
                                                 ParamGroup::Mean, ParamGroup::LogScale,
                                                 ParamGroup::Rotation};

constexpr int group_width(ParamGroup g) {
    switch (g) {
    case ParamGroup::OpacityLogit: return 1;
    case ParamGroup::Rotation: return 4;
    default: return 3;
    }
}

const char *group_name(ParamGroup g);

// Per-Gaussian gradients, one flat array per parameter group (group_width values per
// Gaussian).
struct CloudGradients {
    std::vector<double> color;
    std::vector<double> opacity_logit;
    std::vector<double> mean;
    std::vector<double> log_scale;
    std::vector<double> rotation;

    static CloudGradients zeros(std::size_t count);
    std::size_t count() const { return opacity_logit.size(); }

    std::vector<double> &group(ParamGroup g);
    const std::vector<double> &group(ParamGroup g) const;

    CloudGradients &operator+=(const CloudGradients &other);
};

// Gradient of L = sum over pixels of <upstream, rendered color> with respect to all
// five parameter groups, through compositing, the density, the projection and the
// activation transforms.
CloudGradients grad_render(const GaussianCloud &cloud, const Camera &camera, const Image &upstream,
                           const Vec3 &background = Vec3::Zero(), const RenderConfig &config = {});

// Parameter values in the same layout as CloudGradients.
std::vector<double> read_group(const GaussianCloud &cloud, ParamGroup g);
void write_group(GaussianCloud &cloud, ParamGroup g, std::span<const double> values);

} // namespace consplat
