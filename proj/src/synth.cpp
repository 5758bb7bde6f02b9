#include "consplat/synth.hpp"

#include "consplat/error.hpp"
#include "consplat/latent.hpp"

#include <cmath>
#include <numbers>

namespace consplat {

Layout parse_layout(const std::string &name) {
    if (name == "cube") return Layout::Cube;
    if (name == "ring") return Layout::Ring;
    if (name == "two-blob") return Layout::TwoBlob;
    throw InvalidArgument("unknown layout '" + name + "' (expected cube, ring or two-blob)");
}

const char *layout_name(Layout layout) {
    switch (layout) {
    case Layout::Cube: return "cube";
    case Layout::Ring: return "ring";
    case Layout::TwoBlob: return "two-blob";
    }
    return "?";
}

CameraSet ring_cameras(const SynthOptions &options) {
    CameraSet cams;
    for (int v = 0; v < options.views; ++v) {
        const double theta = 2.0 * std::numbers::pi * v / options.views;
        const Vec3 eye(options.ring_radius * std::cos(theta), options.elevation,
                       options.ring_radius * std::sin(theta));
        cams.push_back(look_at("cam" + std::to_string(v), eye, Vec3::Zero(), Vec3(0.0, 1.0, 0.0),
                               options.width, options.height, options.fov_x_degrees));
    }
    return cams;
}

SynthScene synth_scene(int n, Layout layout, std::uint64_t seed, const SynthOptions &options) {
    if (n < 1) throw InvalidArgument("synth_scene needs n >= 1");
    if (options.views < 1 || options.width < 1 || options.height < 1) {
        throw InvalidArgument("synth_scene needs at least one camera with a positive resolution");
    }
    constexpr std::size_t kPerGaussian = 16;
    const auto u = uniform_samples(seed, 0x5CE7E, kPerGaussian * n);
    const auto z = gaussian_samples(seed, 0x5CE7F, 8 * static_cast<std::size_t>(n));
    const int blob_a = n / 2;

    std::vector<Gaussian> gs;
    gs.reserve(n);
    for (int j = 0; j < n; ++j) {
        const double *r = u.data() + kPerGaussian * j;
        const double *g = z.data() + 8 * j;
        Vec3 mean;
        double size = 0.0;
        switch (layout) {
        case Layout::Cube:
            mean = Vec3(2 * r[0] - 1, 2 * r[1] - 1, 2 * r[2] - 1) * 0.8;
            size = 0.08 + 0.12 * r[3];
            break;
        case Layout::Ring: {
            const double phi = 2.0 * std::numbers::pi * (j + 0.5 * r[0]) / n;
            mean = Vec3(std::cos(phi), 0.2 * (2 * r[1] - 1), std::sin(phi)) * 0.9;
            size = 0.08 + 0.1 * r[3];
            break;
        }
        case Layout::TwoBlob: {
            const Vec3 center = j < blob_a ? Vec3(-0.6, 0.0, 0.0) : Vec3(0.6, 0.0, 0.0);
            mean = center + 0.25 * Vec3(g[4], g[5], g[6]);
            size = 0.1 + 0.1 * r[3];
            break;
        }
        }
        const Vec3 scale = size * Vec3(0.6 + 0.8 * r[4], 0.6 + 0.8 * r[5], 0.6 + 0.8 * r[6]);
        Vec4 q(g[0], g[1], g[2], g[3]);
        if (q.norm() < 1e-12) q = Vec4(1.0, 0.0, 0.0, 0.0);
        const double opacity = 0.3 + 0.65 * r[7];
        const Vec3 color(0.15 + 0.7 * r[8], 0.15 + 0.7 * r[9], 0.15 + 0.7 * r[10]);
        gs.push_back(Gaussian::from_activated(mean, q.normalized(), scale, opacity, color));
    }

    const std::string id =
        std::string("synth-") + layout_name(layout) + "-" + std::to_string(n) + "-" + std::to_string(seed);
    SynthScene scene{GaussianCloud(std::move(gs), id), ring_cameras(options)};
    if (layout == Layout::TwoBlob) {
        ScalarAttachment region = make_attachment("edit_region", {"edit"}, n, 0.0);
        for (int j = 0; j < blob_a; ++j) region.at(j, 0) = 1.0;
        scene.cloud.set_attachment(std::move(region));
    }
    return scene;
}

GaussianCloud recolor_region(const GaussianCloud &cloud, const std::string &region, const Vec3 &color) {
    GaussianCloud out = clone_cloud(cloud);
    const ScalarAttachment &mask = cloud.attachment(region);
    for (std::size_t j = 0; j < out.size(); ++j) {
        if (mask.at(j, 0) > 0.0) out[j].set_color(color);
    }
    return out;
}

} // namespace consplat
