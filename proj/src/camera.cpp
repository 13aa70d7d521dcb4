#include "tsdf/camera.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <stdexcept>

namespace tsdf {

Eigen::Vector3d Camera::center() const {
  const Eigen::Matrix3d r = rotation();
  return -r.transpose() * world_to_camera.topRightCorner<3, 1>();
}

void Camera::validate() const {
  const Eigen::Matrix3d r = rotation();
  const double err = (r.transpose() * r - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
  if (!(err <= 1e-6)) throw std::invalid_argument("camera: rotation is not orthonormal");
  if (!(fx > 0.0 && fy > 0.0)) throw std::invalid_argument("camera: focal length must be positive");
  if (width <= 0 || height <= 0) throw std::invalid_argument("camera: image size must be positive");
  const Eigen::RowVector4d last = world_to_camera.row(3);
  if ((last - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-9)
    throw std::invalid_argument("camera: extrinsic bottom row must be 0 0 0 1");
}

Camera Camera::resized(int w, int h) const {
  Camera c = *this;
  const double sx = static_cast<double>(w) / width, sy = static_cast<double>(h) / height;
  c.fx *= sx;
  c.cx *= sx;
  c.fy *= sy;
  c.cy *= sy;
  c.width = w;
  c.height = h;
  return c;
}

Ray pixel_ray(const Camera& cam, double px, double py) {
  const Eigen::Vector3d d_cam((px + 0.5 - cam.cx) / cam.fx, (py + 0.5 - cam.cy) / cam.fy, 1.0);
  return {cam.center(), (cam.rotation().transpose() * d_cam).normalized()};
}

std::vector<Ray> make_rays(const Camera& cam, const std::vector<Eigen::Vector2i>& pixels) {
  std::vector<Ray> rays;
  rays.reserve(pixels.size());
  for (const auto& px : pixels) {
    if (px.x() < 0 || px.y() < 0 || px.x() >= cam.width || px.y() >= cam.height)
      throw std::out_of_range("make_rays: pixel outside image");
    rays.push_back(pixel_ray(cam, px.x(), px.y()));
  }
  return rays;
}

Eigen::Vector2d project(const Camera& cam, const Eigen::Vector3d& p) {
  const Eigen::Vector3d q = cam.rotation() * p + cam.world_to_camera.topRightCorner<3, 1>();
  return {cam.fx * q.x() / q.z() + cam.cx - 0.5, cam.fy * q.y() / q.z() + cam.cy - 0.5};
}

Camera orbit_camera(double azimuth_deg, double elevation_deg, double radius, double fov_deg, int width,
                    int height) {
  const double az = azimuth_deg * std::numbers::pi / 180.0;
  const double el = elevation_deg * std::numbers::pi / 180.0;
  const Eigen::Vector3d eye = radius * Eigen::Vector3d(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az),
                                                       std::sin(el));
  const Eigen::Vector3d fwd = (-eye).normalized();
  const Eigen::Vector3d right = fwd.cross(Eigen::Vector3d::UnitZ()).normalized();
  const Eigen::Vector3d down = fwd.cross(right);
  Eigen::Matrix3d r;
  r.row(0) = right.transpose();
  r.row(1) = down.transpose();
  r.row(2) = fwd.transpose();
  Camera c;
  c.world_to_camera.setIdentity();
  c.world_to_camera.topLeftCorner<3, 3>() = r;
  c.world_to_camera.topRightCorner<3, 1>() = -r * eye;
  const double f = 0.5 * width / std::tan(0.5 * fov_deg * std::numbers::pi / 180.0);
  c.fx = c.fy = f;
  c.cx = 0.5 * width;
  c.cy = 0.5 * height;
  c.width = width;
  c.height = height;
  return c;
}

std::vector<Camera> read_cameras(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open camera file " + path);
  std::vector<Camera> cams;
  while (true) {
    double v[22];
    int k = 0;
    for (; k < 22 && (in >> v[k]); ++k) {
    }
    if (k == 0 && in.eof()) break;
    if (k != 22) throw std::runtime_error("camera file " + path + ": truncated or malformed camera block");
    Camera c;
    for (int i = 0; i < 16; ++i) c.world_to_camera(i / 4, i % 4) = v[i];
    c.fx = v[16];
    c.fy = v[17];
    c.cx = v[18];
    c.cy = v[19];
    c.width = static_cast<int>(v[20]);
    c.height = static_cast<int>(v[21]);
    if (c.width != v[20] || c.height != v[21]) throw std::runtime_error("camera file " + path + ": non-integer image size");
    c.validate();
    cams.push_back(c);
  }
  return cams;
}

void write_cameras(const std::string& path, const std::vector<Camera>& cams) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write camera file " + path);
  out << std::setprecision(17);
  for (const Camera& c : cams) {
    for (int i = 0; i < 4; ++i) {
      for (int j = 0; j < 4; ++j) out << (j ? " " : "") << c.world_to_camera(i, j);
      out << '\n';
    }
    out << c.fx << ' ' << c.fy << ' ' << c.cx << ' ' << c.cy << ' ' << c.width << ' ' << c.height << "\n\n";
  }
}

}  // namespace tsdf
