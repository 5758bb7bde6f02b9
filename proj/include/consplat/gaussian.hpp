#pragma once

#include <Eigen/Core>

#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace consplat {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

// Rotation matrix of the normalized quaternion (w, x, y, z).
Mat3 rotation_matrix(const Vec4 &q);

// One anisotropic 3D Gaussian. Opacity and scale are stored as the unconstrained
// logit / log values the optimizer works on; accessors return activated values.
class Gaussian {
public:
    Gaussian() = default;

    static Gaussian from_activated(const Vec3 &mean, const Vec4 &rotation, const Vec3 &scale,
                                   double opacity, const Vec3 &color);

    const Vec3 &mean() const { return mean_; }
    void set_mean(const Vec3 &mean) { mean_ = mean; }

    // Unit quaternion (w, x, y, z).
    const Vec4 &rotation() const { return rotation_; }
    void set_rotation(const Vec4 &q);

    Vec3 scale() const { return log_scale_.array().exp(); }
    const Vec3 &log_scale() const { return log_scale_; }
    void set_scale(const Vec3 &scale);
    void set_log_scale(const Vec3 &log_scale) { log_scale_ = log_scale; }

    double opacity() const { return sigmoid(opacity_logit_); }
    double opacity_logit() const { return opacity_logit_; }
    void set_opacity(double opacity);
    void set_opacity_logit(double value) { opacity_logit_ = value; }

    const Vec3 &color() const { return color_; }
    void set_color(const Vec3 &color) { color_ = color; }

    bool operator==(const Gaussian &other) const = default;

private:
    Vec3 mean_ = Vec3::Zero();
    Vec4 rotation_ = Vec4(1.0, 0.0, 0.0, 0.0);
    Vec3 log_scale_ = Vec3::Zero();
    double opacity_logit_ = 0.0;
    Vec3 color_ = Vec3::Constant(0.5);
};

// Sigma = R diag(s)^2 R^T.
Mat3 covariance(const Gaussian &g);

// exp(-1/2 x^T Sigma^-1 x) for a displacement x from the mean.
double eval_density(const Gaussian &g, const Vec3 &x);

// A named set of K per-Gaussian scalar channels, stored row-major (gaussian, channel).
struct ScalarAttachment {
    std::string name;
    std::vector<std::string> channels;
    std::vector<double> values;

    std::size_t channel_count() const { return channels.size(); }
    std::size_t gaussian_count() const {
        return channels.empty() ? 0 : values.size() / channels.size();
    }
    double at(std::size_t gaussian, std::size_t channel) const {
        return values[gaussian * channels.size() + channel];
    }
    double &at(std::size_t gaussian, std::size_t channel) {
        return values[gaussian * channels.size() + channel];
    }

    bool operator==(const ScalarAttachment &other) const = default;
};

ScalarAttachment make_attachment(std::string name, std::vector<std::string> channels,
                                 std::size_t gaussian_count, double fill = 0.0);

class GaussianCloud {
public:
    GaussianCloud();
    explicit GaussianCloud(std::vector<Gaussian> gaussians, std::string id = {});

    const std::string &id() const { return id_; }
    void set_id(std::string id) { id_ = std::move(id); }

    std::size_t size() const { return gaussians_.size(); }
    bool empty() const { return gaussians_.empty(); }

    const std::vector<Gaussian> &gaussians() const { return gaussians_; }
    std::vector<Gaussian> &gaussians() { return gaussians_; }
    const Gaussian &operator[](std::size_t i) const { return gaussians_[i]; }
    Gaussian &operator[](std::size_t i) { return gaussians_[i]; }

    // Appending is only allowed while no attachments are present.
    void push_back(const Gaussian &g);

    const std::vector<ScalarAttachment> &attachments() const { return attachments_; }
    const ScalarAttachment *find_attachment(const std::string &name) const;
    const ScalarAttachment &attachment(const std::string &name) const;
    // Inserts or replaces by name. Throws AttachmentError on length mismatch or
    // non-finite values.
    void set_attachment(ScalarAttachment attachment);
    bool remove_attachment(const std::string &name);

    // Field-by-field equality, identity excluded.
    bool same_content(const GaussianCloud &other) const;

private:
    std::vector<Gaussian> gaussians_;
    std::vector<ScalarAttachment> attachments_;
    std::string id_;
};

// Deep copy under a fresh identity.
GaussianCloud clone_cloud(const GaussianCloud &cloud);

// Keeps Gaussians with opacity >= threshold, attachments filtered in lockstep.
GaussianCloud prune_by_opacity(const GaussianCloud &cloud, double threshold);

// Checks the ScalarAttachment invariants against a cloud.
void validate_attachment(const GaussianCloud &cloud, const ScalarAttachment &attachment);

// Attachment whose channels are the per-Gaussian RGB color.
ScalarAttachment color_attachment(const GaussianCloud &cloud);

} // namespace consplat
