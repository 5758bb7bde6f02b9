#include "oracles.hpp"

#include <algorithm>
#include <cmath>

namespace oracle {

namespace {


bool covers(const ProjectedGaussian &pg, double px, double py) {
    const double dx = px - pg.mean2d.x();
    const double dy = py - pg.mean2d.y();
    return dx * dx + dy * dy <= pg.radius * pg.radius;
}

double density(const ProjectedGaussian &pg, double px, double py) {
    const double dx = px - pg.mean2d.x();
    const double dy = py - pg.mean2d.y();
    return std::exp(-0.5 * (pg.conic(0, 0) * dx * dx + pg.conic(1, 1) * dy * dy) - pg.conic(0, 1) * dx * dy);
}

// Per-pixel list of (gaussian, weight) over all Gaussians, no early termination.
std::vector<std::vector<std::pair<std::size_t, double>>> blend_weights(const GaussianCloud &cloud,
                                                                        const Camera &camera,
                                                                        const RenderConfig &config) {
    const auto proj = project(cloud, camera, config);
    std::vector<std::vector<std::pair<std::size_t, double>>> out(static_cast<std::size_t>(camera.width) *
                                                                 camera.height);
    for (int y = 0; y < camera.height; ++y) {
        for (int x = 0; x < camera.width; ++x) {
            double T = 1.0;
            auto &list = out[static_cast<std::size_t>(y) * camera.width + x];
            for (const auto &pg : proj) {
                if (!covers(pg, x, y)) continue;
                const double a = pg.opacity * density(pg, x, y);
                list.emplace_back(pg.index, a * T);
                T = T * (1.0 - a);
            }
        }
    }
    return out;
}

} // namespace

Image brute_force_render(const GaussianCloud &cloud, const Camera &camera, const Vec3 &background,
                         const RenderConfig &config) {
    // The projection is shared with the library; project_scalar checks it separately.
    const auto proj = project(cloud, camera, config);
    Image out(camera.width, camera.height, 3);
    for (int y = 0; y < camera.height; ++y) {
        for (int x = 0; x < camera.width; ++x) {
            double T = 1.0;
            double acc[3] = {0.0, 0.0, 0.0};
            for (const auto &pg : proj) {
                if (!covers(pg, x, y)) continue;
                const double a = pg.opacity * density(pg, x, y);
                const double w = a * T;
                const Vec3 &col = cloud[pg.index].color();
                for (int c = 0; c < 3; ++c) acc[c] += col[c] * w;
                T = T * (1.0 - a);
                if (config.early_termination && T < config.min_transmittance) break;
            }
            for (int c = 0; c < 3; ++c) out.at(x, y, c) = acc[c] + T * background[c];
        }
    }
    return out;
}

ScreenGaussian project_scalar(const Gaussian &g, const Camera &camera, const RenderConfig &config) {
    const Mat4 &M = camera.world_to_camera;
    double t[3];
    for (int r = 0; r < 3; ++r) {
        t[r] = M(r, 3);
        for (int k = 0; k < 3; ++k) t[r] += M(r, k) * g.mean()[k];
    }
    ScreenGaussian s;
    if (t[2] <= config.near_plane) return s;
    // Rotation from the quaternion, written out.
    const Vec4 q = g.rotation();
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    const double R[3][3] = {{1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)},
                            {2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)},
                            {2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)}};
    const Vec3 sc = g.scale();
    double S[3][3] = {};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) S[i][j] += R[i][k] * sc[k] * sc[k] * R[j][k];
    // Camera-space covariance W S W^T.
    double C[3][3] = {};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k)
                for (int l = 0; l < 3; ++l) C[i][j] += M(i, k) * S[k][l] * M(j, l);
    const double J[2][3] = {{camera.fx / t[2], 0.0, -camera.fx * t[0] / (t[2] * t[2])},
                            {0.0, camera.fy / t[2], -camera.fy * t[1] / (t[2] * t[2])}};
    double P[2][2] = {};
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
            for (int k = 0; k < 3; ++k)
                for (int l = 0; l < 3; ++l) P[i][j] += J[i][k] * C[k][l] * J[j][l];
    s.visible = true;
    s.u = camera.fx * t[0] / t[2] + camera.cx;
    s.v = camera.fy * t[1] / t[2] + camera.cy;
    s.a = P[0][0] + config.dilation;
    s.b = P[0][1];
    s.c = P[1][1] + config.dilation;
    s.depth = t[2];
    return s;
}

double weighted_render_sum(const GaussianCloud &cloud, const Camera &camera, const Image &upstream,
                           const Vec3 &background, const RenderConfig &config) {
    const Image img = render_color(cloud, camera, background, config).color;
    double sum = 0.0;
    for (std::size_t i = 0; i < img.size(); ++i) sum += img.storage()[i] * upstream.storage()[i];
    return sum;
}

namespace {

void nudge(Gaussian &g, ParamGroup group, int k, double delta) {
    switch (group) {
    case ParamGroup::Color: {
        Vec3 c = g.color();
        c[k] += delta;
        g.set_color(c);
        break;
    }
    case ParamGroup::OpacityLogit: g.set_opacity_logit(g.opacity_logit() + delta); break;
    case ParamGroup::Mean: {
        Vec3 m = g.mean();
        m[k] += delta;
        g.set_mean(m);
        break;
    }
    case ParamGroup::LogScale: {
        Vec3 s = g.log_scale();
        s[k] += delta;
        g.set_log_scale(s);
        break;
    }
    case ParamGroup::Rotation: {
        Vec4 q = g.rotation();
        q[k] += delta;
        g.set_rotation(q);
        break;
    }
    }
}

} // namespace

double finite_difference(const GaussianCloud &cloud, const Camera &camera, const Image &upstream,
                         const Vec3 &background, const RenderConfig &config, ParamGroup group,
                         std::size_t gaussian, int component, double h) {
    GaussianCloud plus = clone_cloud(cloud), minus = clone_cloud(cloud);
    nudge(plus[gaussian], group, component, h);
    nudge(minus[gaussian], group, component, -h);
    return (weighted_render_sum(plus, camera, upstream, background, config) -
            weighted_render_sum(minus, camera, upstream, background, config)) /
           (2.0 * h);
}

double variance(const std::vector<double> &x) {
    if (x.empty()) return 0.0;
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    return var / static_cast<double>(x.size());
}

double readout_variance(const GaussianCloud &cloud, const CameraSet &cameras,
                        const std::vector<Image> &maps, const RenderConfig &config) {
    const int K = maps.front().channels();
    // readouts[j][k] collects one entry per view that sees Gaussian j.
    std::vector<std::vector<std::vector<double>>> readouts(cloud.size(),
                                                           std::vector<std::vector<double>>(K));
    for (std::size_t v = 0; v < cameras.size(); ++v) {
        const Image map = resample_to(maps[v], cameras[v].width, cameras[v].height);
        const auto weights = blend_weights(cloud, cameras[v], config);
        std::vector<double> wsum(cloud.size(), 0.0);
        std::vector<std::vector<double>> vsum(cloud.size(), std::vector<double>(K, 0.0));
        for (std::size_t p = 0; p < weights.size(); ++p) {
            const int x = static_cast<int>(p % cameras[v].width), y = static_cast<int>(p / cameras[v].width);
            for (const auto &[j, w] : weights[p]) {
                if (!(w > config.record_floor)) continue;
                wsum[j] += w;
                for (int k = 0; k < K; ++k) vsum[j][k] += w * map.at(x, y, k);
            }
        }
        for (std::size_t j = 0; j < cloud.size(); ++j) {
            if (wsum[j] > 0.0)
                for (int k = 0; k < K; ++k) readouts[j][k].push_back(vsum[j][k] / wsum[j]);
        }
    }
    double total = 0.0;
    std::size_t included = 0;
    for (std::size_t j = 0; j < cloud.size(); ++j) {
        if (readouts[j][0].size() < 2) continue;
        double s = 0.0;
        for (int k = 0; k < K; ++k) s += variance(readouts[j][k]);
        total += s / K;
        ++included;
    }
    return included ? total / static_cast<double>(included) : 0.0;
}

} // namespace oracle
