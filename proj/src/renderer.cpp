#include "consplat/renderer.hpp"

#include "consplat/error.hpp"
#include "consplat/parallel.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>

namespace consplat {

namespace {

using Mat23 = Eigen::Matrix<double, 2, 3>;

// Projection plus the intermediates the backward pass needs.
struct Projection {
    ProjectedGaussian pg;
    Vec3 cam_mean;
    Mat23 jacobian;
    Mat3 cov_cam;
};

std::vector<Projection> project_full(const GaussianCloud &cloud, const Camera &camera,
                                     const RenderConfig &config) {
    const Mat3 W = camera.rotation();
    const Vec3 tr = camera.translation();
    std::vector<Projection> out;
    out.reserve(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Gaussian &g = cloud[i];
        const Vec3 t = W * g.mean() + tr;
        if (t.z() <= config.near_plane) continue;
        const double z = t.z(), inv_z = 1.0 / z, inv_z2 = inv_z * inv_z;
        Projection p;
        p.cam_mean = t;
        p.jacobian << camera.fx * inv_z, 0.0, -camera.fx * t.x() * inv_z2,
                      0.0, camera.fy * inv_z, -camera.fy * t.y() * inv_z2;
        p.cov_cam = W * covariance(g) * W.transpose();
        Mat2 cov2d = p.jacobian * p.cov_cam * p.jacobian.transpose();
        cov2d(0, 1) = cov2d(1, 0) = 0.5 * (cov2d(0, 1) + cov2d(1, 0));
        cov2d(0, 0) += config.dilation;
        cov2d(1, 1) += config.dilation;
        const double det = cov2d.determinant();
        if (!(det > 0.0)) continue;
        p.pg.index = i;
        p.pg.mean2d = Vec2(camera.fx * t.x() * inv_z + camera.cx, camera.fy * t.y() * inv_z + camera.cy);
        p.pg.cov2d = cov2d;
        p.pg.conic << cov2d(1, 1) / det, -cov2d(0, 1) / det, -cov2d(1, 0) / det, cov2d(0, 0) / det;
        p.pg.depth = z;
        const double mid = 0.5 * (cov2d(0, 0) + cov2d(1, 1));
        const double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - det));
        p.pg.radius = config.cutoff_sigma * std::sqrt(lambda_max);
        p.pg.opacity = g.opacity();
        out.push_back(std::move(p));
    }
    std::sort(out.begin(), out.end(), [](const Projection &a, const Projection &b) {
        if (a.pg.depth != b.pg.depth) return a.pg.depth < b.pg.depth;
        return a.pg.index < b.pg.index;
    });
    return out;
}

// For each image row, the projected Gaussians (front to back) whose footprint
// bounding band touches the row.
std::vector<std::vector<std::uint32_t>> bin_rows(const std::vector<ProjectedGaussian> &proj,
                                                 int height) {
    std::vector<std::vector<std::uint32_t>> rows(height);
    for (std::uint32_t k = 0; k < proj.size(); ++k) {
        const auto &pg = proj[k];
        const int lo = std::max(0, static_cast<int>(std::ceil(pg.mean2d.y() - pg.radius)));
        const int hi = std::min(height - 1, static_cast<int>(std::floor(pg.mean2d.y() + pg.radius)));
        for (int y = lo; y <= hi; ++y) rows[y].push_back(k);
    }
    return rows;
}

// Front-to-back blend at one pixel. visit(k, a, G, T) sees each blended Gaussian with
// its alpha a = opacity * G and the transmittance T in front of it. Returns the
// residual transmittance.
template <class Visit>
double composite_pixel(const std::vector<ProjectedGaussian> &proj,
                       const std::vector<std::uint32_t> &row, int x, int y,
                       const RenderConfig &config, Visit &&visit) {
    double T = 1.0;
    for (std::uint32_t k : row) {
        const ProjectedGaussian &pg = proj[k];
        if (!footprint_covers(pg, x, y)) continue;
        const double G = footprint_density(pg, x, y);
        const double a = pg.opacity * G;
        visit(k, a, G, T);
        T = T * (1.0 - a);
        if (config.early_termination && T < config.min_transmittance) break;
    }
    return T;
}

std::vector<ProjectedGaussian> strip(const std::vector<Projection> &full) {
    std::vector<ProjectedGaussian> out;
    out.reserve(full.size());
    for (const auto &p : full) out.push_back(p.pg);
    return out;
}

// Shared forward compositor. feature(k, c) is channel c of projected Gaussian k.
template <class Feature>
void composite_image(const std::vector<ProjectedGaussian> &proj, const Camera &camera,
                     const RenderConfig &config, int channels, Feature &&feature,
                     std::span<const double> background, Image &out, Image *alpha,
                     RenderOutput *records) {
    const auto rows = bin_rows(proj, camera.height);
    std::vector<std::vector<ContributionRecord>> row_records(records ? camera.height : 0);
    std::vector<std::vector<std::size_t>> row_counts(records ? camera.height : 0);

    parallel_for(static_cast<std::size_t>(camera.height), [&](std::size_t yi) {
        const int y = static_cast<int>(yi);
        std::vector<double> acc(channels);
        std::vector<ContributionRecord> pixel_records;
        for (int x = 0; x < camera.width; ++x) {
            std::fill(acc.begin(), acc.end(), 0.0);
            pixel_records.clear();
            const std::uint32_t pixel = static_cast<std::uint32_t>(y * camera.width + x);
            const double T = composite_pixel(proj, rows[y], x, y, config,
                                             [&](std::uint32_t k, double a, double, double Tin) {
                const double w = a * Tin;
                for (int c = 0; c < channels; ++c) acc[c] += feature(k, c) * w;
                if (records && w > config.record_floor) {
                    pixel_records.push_back({static_cast<std::uint32_t>(proj[k].index), pixel, w});
                }
            });
            for (int c = 0; c < channels; ++c) {
                out.at(x, y, c) = background.empty() ? acc[c] : acc[c] + T * background[c];
            }
            if (alpha) alpha->at(x, y, 0) = 1.0 - T;
            if (records) {
                const std::size_t cap = config.max_records > 0 ? config.max_records : pixel_records.size();
                if (pixel_records.size() > cap) {
                    // Keep the `cap` largest weights, earlier records winning ties.
                    std::vector<std::size_t> order(pixel_records.size());
                    std::iota(order.begin(), order.end(), 0);
                    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
                        return pixel_records[a].weight > pixel_records[b].weight;
                    });
                    order.resize(cap);
                    std::sort(order.begin(), order.end());
                    std::vector<ContributionRecord> kept;
                    kept.reserve(cap);
                    for (auto i : order) kept.push_back(pixel_records[i]);
                    pixel_records.swap(kept);
                }
                row_counts[y].push_back(pixel_records.size());
                row_records[y].insert(row_records[y].end(), pixel_records.begin(), pixel_records.end());
            }
        }
    });

    if (records) {
        records->contributions.clear();
        records->contribution_offsets.assign(1, 0);
        records->contribution_offsets.reserve(out.pixel_count() + 1);
        for (int y = 0; y < camera.height; ++y) {
            records->contributions.insert(records->contributions.end(), row_records[y].begin(),
                                          row_records[y].end());
            for (auto n : row_counts[y]) {
                records->contribution_offsets.push_back(records->contribution_offsets.back() + n);
            }
        }
    }
}

RenderOutput render_impl(const GaussianCloud &cloud, const Camera &camera, const Vec3 &background,
                         const RenderConfig &config, bool with_records) {
    camera.validate();
    const auto proj = strip(project_full(cloud, camera, config));
    RenderOutput out;
    out.color = Image(camera.width, camera.height, 3);
    out.alpha = Image(camera.width, camera.height, 1);
    const double bg[3] = {background.x(), background.y(), background.z()};
    composite_image(
        proj, camera, config, 3,
        [&](std::uint32_t k, int c) { return cloud[proj[k].index].color()[c]; },
        std::span<const double>(bg, 3), out.color, &out.alpha, with_records ? &out : nullptr);
    return out;
}

// Gradients of one projected Gaussian with respect to its 2D quantities.
struct Grad2D {
    Vec3 color = Vec3::Zero();
    double opacity = 0.0;
    Vec2 mean2d = Vec2::Zero();
    Mat2 conic = Mat2::Zero();

    Grad2D &operator+=(const Grad2D &o) {
        color += o.color;
        opacity += o.opacity;
        mean2d += o.mean2d;
        conic += o.conic;
        return *this;
    }
};

// d R(q_hat) / d q_hat contracted with dL/dR, for unit q_hat = (w, x, y, z).
Vec4 rotation_backward(const Vec4 &q, const Mat3 &dR) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Vec4 g;
    g[0] = 2.0 * (-z * dR(0, 1) + y * dR(0, 2) + z * dR(1, 0) - x * dR(1, 2) - y * dR(2, 0) + x * dR(2, 1));
    g[1] = 2.0 * (y * dR(0, 1) + z * dR(0, 2) + y * dR(1, 0) - 2.0 * x * dR(1, 1) - w * dR(1, 2) +
                  z * dR(2, 0) + w * dR(2, 1) - 2.0 * x * dR(2, 2));
    g[2] = 2.0 * (-2.0 * y * dR(0, 0) + x * dR(0, 1) + w * dR(0, 2) + x * dR(1, 0) + z * dR(1, 2) -
                  w * dR(2, 0) + z * dR(2, 1) - 2.0 * y * dR(2, 2));
    g[3] = 2.0 * (-2.0 * z * dR(0, 0) - w * dR(0, 1) + x * dR(0, 2) + w * dR(1, 0) - 2.0 * z * dR(1, 1) +
                  y * dR(1, 2) + x * dR(2, 0) + y * dR(2, 1));
    return g;
}

// Fixed band count so the gradient reduction order never depends on thread count.
constexpr int kGradientBands = 8;

} // namespace

bool footprint_covers(const ProjectedGaussian &pg, double px, double py) {
    const double dx = px - pg.mean2d.x();
    const double dy = py - pg.mean2d.y();
    return dx * dx + dy * dy <= pg.radius * pg.radius;
}

double footprint_density(const ProjectedGaussian &pg, double px, double py) {
    const double dx = px - pg.mean2d.x();
    const double dy = py - pg.mean2d.y();
    const double power = -0.5 * (pg.conic(0, 0) * dx * dx + pg.conic(1, 1) * dy * dy) -
                         pg.conic(0, 1) * dx * dy;
    return std::exp(power);
}

std::vector<ProjectedGaussian> project(const GaussianCloud &cloud, const Camera &camera,
                                       const RenderConfig &config) {
    camera.validate();
    return strip(project_full(cloud, camera, config));
}

RenderOutput render_color(const GaussianCloud &cloud, const Camera &camera, const Vec3 &background,
                          const RenderConfig &config) {
    return render_impl(cloud, camera, background, config, false);
}

RenderOutput render_with_contributions(const GaussianCloud &cloud, const Camera &camera,
                                       const Vec3 &background, const RenderConfig &config) {
    return render_impl(cloud, camera, background, config, true);
}

Image render_scalar(const GaussianCloud &cloud, const ScalarAttachment &attachment,
                    const Camera &camera, const RenderConfig &config) {
    if (attachment.channels.empty() ||
        attachment.values.size() != cloud.size() * attachment.channel_count()) {
        throw AttachmentError("attachment '" + attachment.name + "' does not match the cloud (" +
                              std::to_string(attachment.values.size()) + " values for " +
                              std::to_string(cloud.size()) + " Gaussians)");
    }
    camera.validate();
    const auto proj = strip(project_full(cloud, camera, config));
    const int K = static_cast<int>(attachment.channel_count());
    Image out(camera.width, camera.height, K);
    composite_image(
        proj, camera, config, K,
        [&](std::uint32_t k, int c) { return attachment.at(proj[k].index, c); }, {}, out, nullptr,
        nullptr);
    return out;
}

const char *group_name(ParamGroup g) {
    switch (g) {
    case ParamGroup::Color: return "color";
    case ParamGroup::OpacityLogit: return "opacity_logit";
    case ParamGroup::Mean: return "mean";
    case ParamGroup::LogScale: return "log_scale";
    case ParamGroup::Rotation: return "rotation";
    }
    return "unknown";
}

CloudGradients CloudGradients::zeros(std::size_t count) {
    CloudGradients g;
    g.color.assign(3 * count, 0.0);
    g.opacity_logit.assign(count, 0.0);
    g.mean.assign(3 * count, 0.0);
    g.log_scale.assign(3 * count, 0.0);
    g.rotation.assign(4 * count, 0.0);
    return g;
}

std::vector<double> &CloudGradients::group(ParamGroup g) {
    switch (g) {
    case ParamGroup::Color: return color;
    case ParamGroup::OpacityLogit: return opacity_logit;
    case ParamGroup::Mean: return mean;
    case ParamGroup::LogScale: return log_scale;
    case ParamGroup::Rotation: return rotation;
    }
    return color;
}

const std::vector<double> &CloudGradients::group(ParamGroup g) const {
    return const_cast<CloudGradients *>(this)->group(g);
}

CloudGradients &CloudGradients::operator+=(const CloudGradients &other) {
    for (ParamGroup g : kAllParamGroups) {
        auto &mine = group(g);
        const auto &theirs = other.group(g);
        if (mine.size() != theirs.size()) throw DimensionError("gradient size mismatch");
        for (std::size_t i = 0; i < mine.size(); ++i) mine[i] += theirs[i];
    }
    return *this;
}

CloudGradients grad_render(const GaussianCloud &cloud, const Camera &camera, const Image &upstream,
                           const Vec3 &background, const RenderConfig &config) {
    camera.validate();
    if (upstream.width() != camera.width || upstream.height() != camera.height ||
        upstream.channels() != 3) {
        throw DimensionError("upstream gradient image must be H x W x 3 at camera resolution");
    }
    const auto full = project_full(cloud, camera, config);
    const auto proj = strip(full);
    const auto rows = bin_rows(proj, camera.height);

    // Pass 1: per-band accumulation of 2D gradients.
    std::vector<std::vector<Grad2D>> bands(kGradientBands, std::vector<Grad2D>(proj.size()));
    parallel_for(kGradientBands, [&](std::size_t band) {
        auto &acc = bands[band];
        struct Entry {
            std::uint32_t k;
            double a, G, T;
        };
        std::vector<Entry> entries;
        for (int y = static_cast<int>(band); y < camera.height; y += kGradientBands) {
            for (int x = 0; x < camera.width; ++x) {
                const Vec3 up(upstream.at(x, y, 0), upstream.at(x, y, 1), upstream.at(x, y, 2));
                if (up.isZero(0.0)) continue;
                entries.clear();
                composite_pixel(proj, rows[y], x, y, config,
                                [&](std::uint32_t k, double a, double G, double T) {
                                    entries.push_back({k, a, G, T});
                                });
                // Back-to-front: behind holds the color composited behind entry i,
                // background included.
                Vec3 behind = background;
                for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
                    const ProjectedGaussian &pg = proj[it->k];
                    const Vec3 &c = cloud[pg.index].color();
                    Grad2D &g = acc[it->k];
                    g.color += (it->a * it->T) * up;
                    const double dL_da = it->T * up.dot(c - behind);
                    behind = c * it->a + (1.0 - it->a) * behind;
                    g.opacity += dL_da * it->G;
                    const double dL_dpower = dL_da * pg.opacity * it->G;
                    const Vec2 d(x - pg.mean2d.x(), y - pg.mean2d.y());
                    g.mean2d += dL_dpower * (pg.conic * d);
                    g.conic += (-0.5 * dL_dpower) * (d * d.transpose());
                }
            }
        }
    });
    std::vector<Grad2D> g2d(proj.size());
    for (const auto &band : bands)
        for (std::size_t k = 0; k < proj.size(); ++k) g2d[k] += band[k];

    // Pass 2: chain 2D gradients back to the 3D parameters.
    CloudGradients out = CloudGradients::zeros(cloud.size());
    const Mat3 W = camera.rotation();
    for (std::size_t k = 0; k < full.size(); ++k) {
        const Projection &p = full[k];
        const Grad2D &g = g2d[k];
        const std::size_t i = p.pg.index;
        const Gaussian &gs = cloud[i];

        for (int c = 0; c < 3; ++c) out.color[3 * i + c] = g.color[c];
        const double o = p.pg.opacity;
        out.opacity_logit[i] = g.opacity * o * (1.0 - o);

        // conic = cov2d^-1  =>  dL/dcov2d = -conic dL/dconic conic.
        const Mat2 dconic = 0.5 * (g.conic + g.conic.transpose());
        const Mat2 dcov2d = -p.pg.conic * dconic * p.pg.conic;
        const Mat23 &J = p.jacobian;
        const Mat3 dcov_cam = J.transpose() * dcov2d * J;
        const Mat23 dJ = 2.0 * dcov2d * J * p.cov_cam;

        const double tx = p.cam_mean.x(), ty = p.cam_mean.y(), tz = p.cam_mean.z();
        const double iz = 1.0 / tz, iz2 = iz * iz, iz3 = iz2 * iz;
        Vec3 dt = J.transpose() * g.mean2d;
        dt.x() += dJ(0, 2) * (-camera.fx * iz2);
        dt.y() += dJ(1, 2) * (-camera.fy * iz2);
        dt.z() += dJ(0, 0) * (-camera.fx * iz2) + dJ(0, 2) * (2.0 * camera.fx * tx * iz3) +
                  dJ(1, 1) * (-camera.fy * iz2) + dJ(1, 2) * (2.0 * camera.fy * ty * iz3);
        const Vec3 dmean = W.transpose() * dt;
        for (int c = 0; c < 3; ++c) out.mean[3 * i + c] = dmean[c];

        // Sigma = M M^T with M = R S.
        const Mat3 dsigma = W.transpose() * dcov_cam * W;
        const Mat3 R = rotation_matrix(gs.rotation());
        const Vec3 s = gs.scale();
        const Mat3 M = R * s.asDiagonal();
        const Mat3 dM = 2.0 * dsigma * M;
        for (int c = 0; c < 3; ++c) out.log_scale[3 * i + c] = dM.col(c).dot(R.col(c)) * s[c];
        const Mat3 dR = dM * s.asDiagonal();
        const Vec4 &q = gs.rotation();
        const double qn = q.norm();
        const Vec4 q_hat = q / qn;
        const Vec4 dq_hat = rotation_backward(q_hat, dR);
        const Vec4 dq = (dq_hat - q_hat * q_hat.dot(dq_hat)) / qn;
        for (int c = 0; c < 4; ++c) out.rotation[4 * i + c] = dq[c];
    }
    return out;
}

std::vector<double> read_group(const GaussianCloud &cloud, ParamGroup g) {
    const int w = group_width(g);
    std::vector<double> out(cloud.size() * w);
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const Gaussian &gs = cloud[i];
        double *dst = out.data() + i * w;
        switch (g) {
        case ParamGroup::Color: for (int c = 0; c < 3; ++c) dst[c] = gs.color()[c]; break;
        case ParamGroup::OpacityLogit: dst[0] = gs.opacity_logit(); break;
        case ParamGroup::Mean: for (int c = 0; c < 3; ++c) dst[c] = gs.mean()[c]; break;
        case ParamGroup::LogScale: for (int c = 0; c < 3; ++c) dst[c] = gs.log_scale()[c]; break;
        case ParamGroup::Rotation: for (int c = 0; c < 4; ++c) dst[c] = gs.rotation()[c]; break;
        }
    }
    return out;
}

void write_group(GaussianCloud &cloud, ParamGroup g, std::span<const double> values) {
    const int w = group_width(g);
    if (values.size() != cloud.size() * w) throw DimensionError("parameter group size mismatch");
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        Gaussian &gs = cloud[i];
        const double *src = values.data() + i * w;
        switch (g) {
        case ParamGroup::Color: gs.set_color(Vec3(src[0], src[1], src[2])); break;
        case ParamGroup::OpacityLogit: gs.set_opacity_logit(src[0]); break;
        case ParamGroup::Mean: gs.set_mean(Vec3(src[0], src[1], src[2])); break;
        case ParamGroup::LogScale: gs.set_log_scale(Vec3(src[0], src[1], src[2])); break;
        case ParamGroup::Rotation: gs.set_rotation(Vec4(src[0], src[1], src[2], src[3])); break;
        }
    }
}

} // namespace consplat
