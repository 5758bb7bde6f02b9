#pragma once

// Reference implementations used only by tests. They trade speed for directness and
// must not call the code paths they check.

#include "consplat/camera.hpp"
#include "consplat/consolidation.hpp"
#include "consplat/gaussian.hpp"
#include "consplat/image.hpp"
#include "consplat/renderer.hpp"

#include <string>
#include <vector>

namespace oracle {

using namespace consplat;

// Per-pixel blend over every projected Gaussian, front to back, nothing skipped but
// by the footprint test: C = sum_i c_i a_i prod_{j<i}(1 - a_j) + T_final * bg.
Image brute_force_render(const GaussianCloud &cloud, const Camera &camera, const Vec3 &background,
                         const RenderConfig &config);

// Screen-space mean and covariance of one Gaussian from scalar formulas: world to
// camera, Sigma = R S S^T R^T, pinhole Jacobian, plus dilation.
struct ScreenGaussian {
    bool visible = false;
    double u = 0.0, v = 0.0;
    double a = 0.0, b = 0.0, c = 0.0; // [[a, b], [b, c]]
    double depth = 0.0;
};
ScreenGaussian project_scalar(const Gaussian &g, const Camera &camera, const RenderConfig &config);

// L = sum over pixels and channels of upstream * render_color(cloud).
double weighted_render_sum(const GaussianCloud &cloud, const Camera &camera, const Image &upstream,
                           const Vec3 &background, const RenderConfig &config);

// Central difference of weighted_render_sum in parameter `component` of the given group
// and Gaussian. Parameters are set through the Gaussian setters on a copy.
double finite_difference(const GaussianCloud &cloud, const Camera &camera, const Image &upstream,
                         const Vec3 &background, const RenderConfig &config, ParamGroup group,
                         std::size_t gaussian, int component, double h);

// Variance across views of contribution-weighted per-Gaussian readouts, averaged over
// channels and over Gaussians seen by at least two views. Readouts come from
// brute-force blend weights (same record floor, no record cap).
double readout_variance(const GaussianCloud &cloud, const CameraSet &cameras,
                        const std::vector<Image> &maps, const RenderConfig &config);

// Population variance of a sample.
double variance(const std::vector<double> &x);

} // namespace oracle
