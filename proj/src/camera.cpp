#include "consplat/camera.hpp"

#include "consplat/error.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>

namespace consplat {

void Camera::validate() const {
    if (width <= 0 || height <= 0) throw InvalidArgument("camera '" + id + "': empty resolution");
    if (!(fx > 0.0 && fy > 0.0)) throw InvalidArgument("camera '" + id + "': focal lengths must be positive");
    if (!(cx >= 0.0 && cx < width && cy >= 0.0 && cy < height)) {
        throw InvalidArgument("camera '" + id + "': principal point outside the image");
    }
    const Mat3 R = rotation();
    if ((R * R.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9 ||
        std::abs(R.determinant() - 1.0) > 1e-9) {
        throw InvalidArgument("camera '" + id + "': rotation block is not a proper rotation");
    }
    const Eigen::RowVector4d last = world_to_camera.row(3);
    if (last != Eigen::RowVector4d(0.0, 0.0, 0.0, 1.0)) {
        throw InvalidArgument("camera '" + id + "': pose is not a rigid transform");
    }
}

Camera look_at(const std::string &id, const Vec3 &eye, const Vec3 &target, const Vec3 &up,
               int width, int height, double fov_x_degrees) {
    const Vec3 z = (target - eye).normalized();
    const Vec3 x = z.cross(up).normalized(); // x right, y down, z forward
    const Vec3 y = z.cross(x);
    Camera cam;
    cam.id = id;
    cam.width = width;
    cam.height = height;
    const double half = 0.5 * fov_x_degrees * std::numbers::pi / 180.0;
    cam.fx = 0.5 * width / std::tan(half);
    cam.fy = cam.fx;
    cam.cx = 0.5 * (width - 1);
    cam.cy = 0.5 * (height - 1);
    Mat3 R;
    R.row(0) = x.transpose();
    R.row(1) = y.transpose();
    R.row(2) = z.transpose();
    cam.world_to_camera.setIdentity();
    cam.world_to_camera.topLeftCorner<3, 3>() = R;
    cam.world_to_camera.topRightCorner<3, 1>() = -R * eye;
    return cam;
}

} // namespace consplat
