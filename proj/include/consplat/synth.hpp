#pragma once

#include "consplat/camera.hpp"
#include "consplat/gaussian.hpp"

#include <cstdint>
#include <string>

namespace consplat {

enum class Layout { Cube, Ring, TwoBlob };

Layout parse_layout(const std::string &name);
const char *layout_name(Layout layout);

struct SynthOptions {
    int views = 8;
    int width = 64;
    int height = 64;
    double ring_radius = 4.0;  // horizontal camera distance from the origin
    double elevation = 1.0;    // camera height above the xz plane
    double fov_x_degrees = 45.0;
};

struct SynthScene {
    GaussianCloud cloud;
    CameraSet cameras;
};

// Seeded scene of n Gaussians with opacities in [0.3, 0.95] and a ring of cameras looking
// at the origin. TwoBlob puts the first n / 2 Gaussians in blob A and tags them with
// value 1 in the single-channel attachment "edit_region" (blob B holds 0).
SynthScene synth_scene(int n, Layout layout, std::uint64_t seed, const SynthOptions &options = {});

CameraSet ring_cameras(const SynthOptions &options);

// Copy of `cloud` where Gaussians with a positive value in channel 0 of `region` take
// `color`.
GaussianCloud recolor_region(const GaussianCloud &cloud, const std::string &region, const Vec3 &color);

} // namespace consplat
