#pragma once

#include "consplat/gaussian.hpp"

#include <string>
#include <vector>

namespace consplat {

// Pinhole camera. Pixel (u, v) has its center at coordinate (u, v); the camera looks
// down +z with y pointing down the image.
struct Camera {
    std::string id;
    int width = 0;
    int height = 0;
    double fx = 0.0;
    double fy = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    Mat4 world_to_camera = Mat4::Identity();

    Mat3 rotation() const { return world_to_camera.topLeftCorner<3, 3>(); }
    Vec3 translation() const { return world_to_camera.topRightCorner<3, 1>(); }
    Vec3 position() const { return -rotation().transpose() * translation(); }
    // World-space unit vector along the optical axis.
    Vec3 forward() const { return rotation().row(2).transpose(); }

    // Throws InvalidArgument if any Camera invariant is violated.
    void validate() const;

    bool operator==(const Camera &other) const = default;
};

using CameraSet = std::vector<Camera>;

// Camera at `eye` looking at `target`; `up` is the approximate world up direction.
Camera look_at(const std::string &id, const Vec3 &eye, const Vec3 &target, const Vec3 &up,
               int width, int height, double fov_x_degrees);

} // namespace consplat
