#include "consplat/gaussian.hpp"

#include "consplat/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>

namespace consplat {

namespace {

std::string next_cloud_id() {
    static std::atomic<unsigned long long> counter{0};
    return "cloud-" + std::to_string(++counter);
}

} // namespace

Mat3 rotation_matrix(const Vec4 &q_in) {
    const Vec4 q = q_in / q_in.norm();
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 R;
    R << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
        2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
        2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
    return R;
}

Gaussian Gaussian::from_activated(const Vec3 &mean, const Vec4 &rotation, const Vec3 &scale,
                                  double opacity, const Vec3 &color) {
    Gaussian g;
    g.set_mean(mean);
    g.set_rotation(rotation);
    g.set_scale(scale);
    g.set_opacity(opacity);
    g.set_color(color);
    return g;
}

void Gaussian::set_rotation(const Vec4 &q) {
    const double n = q.norm();
    if (!(n > 0.0) || !std::isfinite(n)) {
        throw InvalidArgument("quaternion must be finite and non-zero");
    }
    // Already-unit inputs are kept bit-exact so serialization round trips.
    rotation_ = std::abs(n - 1.0) <= 1e-12 ? q : Vec4(q / n);
}

void Gaussian::set_scale(const Vec3 &scale) {
    if (!(scale.array() > 0.0).all()) {
        throw InvalidArgument("scale components must be positive");
    }
    log_scale_ = scale.array().log();
}

void Gaussian::set_opacity(double opacity) {
    if (!(opacity > 0.0 && opacity < 1.0)) {
        throw InvalidArgument("opacity must lie strictly inside (0, 1)");
    }
    opacity_logit_ = logit(opacity);
}

Mat3 covariance(const Gaussian &g) {
    const Mat3 R = rotation_matrix(g.rotation());
    const Vec3 s2 = g.scale().array().square();
    Mat3 sigma = R * s2.asDiagonal() * R.transpose();
    // Exact symmetry; the product above is symmetric only up to rounding.
    return 0.5 * (sigma + sigma.transpose());
}

double eval_density(const Gaussian &g, const Vec3 &x) {
    // Sigma^-1 = R diag(1/s^2) R^T, so x^T Sigma^-1 x = |diag(1/s) R^T x|^2.
    const Mat3 R = rotation_matrix(g.rotation());
    const Vec3 local = (R.transpose() * x).cwiseQuotient(g.scale());
    return std::exp(-0.5 * local.squaredNorm());
}

ScalarAttachment make_attachment(std::string name, std::vector<std::string> channels,
                                 std::size_t gaussian_count, double fill) {
    ScalarAttachment a;
    a.name = std::move(name);
    a.channels = std::move(channels);
    a.values.assign(gaussian_count * a.channels.size(), fill);
    return a;
}

GaussianCloud::GaussianCloud() : id_(next_cloud_id()) {}

GaussianCloud::GaussianCloud(std::vector<Gaussian> gaussians, std::string id)
    : gaussians_(std::move(gaussians)), id_(id.empty() ? next_cloud_id() : std::move(id)) {}

void GaussianCloud::push_back(const Gaussian &g) {
    if (!attachments_.empty()) {
        throw AttachmentError("cannot append Gaussians to a cloud carrying attachments");
    }
    gaussians_.push_back(g);
}

const ScalarAttachment *GaussianCloud::find_attachment(const std::string &name) const {
    for (const auto &a : attachments_) {
        if (a.name == name) return &a;
    }
    return nullptr;
}

const ScalarAttachment &GaussianCloud::attachment(const std::string &name) const {
    if (const auto *a = find_attachment(name)) return *a;
    throw AttachmentError("no attachment named '" + name + "'");
}

void validate_attachment(const GaussianCloud &cloud, const ScalarAttachment &attachment) {
    if (attachment.channels.empty()) {
        throw AttachmentError("attachment '" + attachment.name + "' has no channels");
    }
    if (attachment.values.size() != cloud.size() * attachment.channels.size()) {
        throw AttachmentError("attachment '" + attachment.name + "' has " +
                              std::to_string(attachment.values.size()) + " values, expected " +
                              std::to_string(cloud.size() * attachment.channels.size()));
    }
    for (double v : attachment.values) {
        if (!std::isfinite(v)) {
            throw AttachmentError("attachment '" + attachment.name + "' has non-finite values");
        }
    }
}

void GaussianCloud::set_attachment(ScalarAttachment attachment) {
    validate_attachment(*this, attachment);
    for (auto &a : attachments_) {
        if (a.name == attachment.name) {
            a = std::move(attachment);
            return;
        }
    }
    attachments_.push_back(std::move(attachment));
}

bool GaussianCloud::remove_attachment(const std::string &name) {
    auto it = std::find_if(attachments_.begin(), attachments_.end(),
                           [&](const ScalarAttachment &a) { return a.name == name; });
    if (it == attachments_.end()) return false;
    attachments_.erase(it);
    return true;
}

bool GaussianCloud::same_content(const GaussianCloud &other) const {
    return gaussians_ == other.gaussians_ && attachments_ == other.attachments_;
}

GaussianCloud clone_cloud(const GaussianCloud &cloud) {
    GaussianCloud copy(cloud.gaussians());
    for (const auto &a : cloud.attachments()) copy.set_attachment(a);
    return copy;
}

GaussianCloud prune_by_opacity(const GaussianCloud &cloud, double threshold) {
    if (!(threshold >= 0.0 && threshold < 1.0)) {
        throw InvalidArgument("prune threshold must lie in [0, 1)");
    }
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (cloud[i].opacity() >= threshold) keep.push_back(i);
    }
    std::vector<Gaussian> survivors;
    survivors.reserve(keep.size());
    for (auto i : keep) survivors.push_back(cloud[i]);
    GaussianCloud out(std::move(survivors));
    for (const auto &a : cloud.attachments()) {
        ScalarAttachment filtered{a.name, a.channels, {}};
        filtered.values.reserve(keep.size() * a.channel_count());
        for (auto i : keep) {
            for (std::size_t k = 0; k < a.channel_count(); ++k) filtered.values.push_back(a.at(i, k));
        }
        out.set_attachment(std::move(filtered));
    }
    return out;
}

ScalarAttachment color_attachment(const GaussianCloud &cloud) {
    auto a = make_attachment("color", {"r", "g", "b"}, cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        for (int c = 0; c < 3; ++c) a.at(i, c) = cloud[i].color()[c];
    }
    return a;
}

} // namespace consplat
