#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace tsdf {

/// Pinhole camera with OpenCV axes (x right, y down, z forward). Pixel (x, y)
/// covers [x, x+1) x [y, y+1); rays go through pixel centers.
struct Camera {
  Eigen::Matrix4d world_to_camera = Eigen::Matrix4d::Identity();
  double fx = 1.0, fy = 1.0, cx = 0.0, cy = 0.0;
  int width = 0, height = 0;

  Eigen::Matrix3d rotation() const { return world_to_camera.topLeftCorner<3, 3>(); }
  Eigen::Vector3d center() const;
  /// Throws std::invalid_argument if the rotation is not orthonormal or a
  /// focal length is not positive.
  void validate() const;

  /// Same pose and field of view at a different pixel resolution.
  Camera resized(int w, int h) const;
};

struct Ray {
  Eigen::Vector3d origin;
  Eigen::Vector3d dir;  // unit length
};

Ray pixel_ray(const Camera& cam, double px, double py);
/// Rays through the centers of the given (x, y) pixels.
std::vector<Ray> make_rays(const Camera& cam, const std::vector<Eigen::Vector2i>& pixels);
/// Image-plane position of a world point (pixel-center convention inverse of pixel_ray).
Eigen::Vector2d project(const Camera& cam, const Eigen::Vector3d& p);

/// Camera on a sphere of `radius` around the origin looking at it, z up.
/// Eye = radius * (cos el cos az, cos el sin az, sin el); angles in degrees.
Camera orbit_camera(double azimuth_deg, double elevation_deg, double radius, double fov_deg, int width,
                    int height);

/// Text format: per camera, 16 row-major world-to-camera values then
/// fx fy cx cy w h, whitespace separated.
std::vector<Camera> read_cameras(const std::string& path);
void write_cameras(const std::string& path, const std::vector<Camera>& cams);

}  // namespace tsdf
