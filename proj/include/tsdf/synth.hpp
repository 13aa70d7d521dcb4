#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "tsdf/camera.hpp"
#include "tsdf/image.hpp"

namespace tsdf {

struct Albedo {
  enum class Kind { constant, gradient } kind = Kind::constant;
  Eigen::Vector3d color{0.8, 0.8, 0.8};  // constant color, or color at `from`
  Eigen::Vector3d color_to{0.8, 0.8, 0.8};
  int axis = 2;
  double from = -1.0, to = 1.0;  // gradient range along `axis`

  Eigen::Vector3d at(const Eigen::Vector3d& p) const;
};

struct Primitive {
  enum class Kind { sphere, box, torus } kind = Kind::sphere;
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 0.5;                                  // sphere
  Eigen::Vector3d half_extents{0.5, 0.5, 0.5};          // box
  double major = 0.5, minor = 0.2;                      // torus
  int axis = 2;                                         // torus symmetry axis
  Albedo albedo;
};

struct OrbitRig {
  int views = 8;
  std::vector<double> elevations{-5.0, 15.0, 30.0};  // degrees, cycled over views
  double radius = 2.7;
  double fov = 40.0;  // degrees, horizontal
  int width = 128, height = 128;
  double azimuth_offset = 0.0;  // degrees
};

struct SceneSpec {
  std::vector<Primitive> primitives;
  double blend = 0.0;  // smooth-union radius; 0 is a plain min
  Eigen::Vector3d light{0.0, 0.0, 1.0};  // unit vector pointing toward the light
  double ambient = 0.3;
  OrbitRig rig;
  int heldout_views = 2;

  void validate() const;
};

SceneSpec sphere_scene();
SceneSpec torus_scene();
SceneSpec box_scene();

/// JSON text; unknown keys are rejected.
SceneSpec parse_scene(const std::string& json_text);
SceneSpec load_scene(const std::string& path);
std::string scene_to_json(const SceneSpec& spec);

struct SdfSample {
  double distance;
  Eigen::Vector3d gradient;
  Eigen::Vector3d albedo;
};

double primitive_sdf(const Primitive& prim, const Eigen::Vector3d& p);
SdfSample scene_eval(const SceneSpec& spec, const Eigen::Vector3d& p);
double scene_sdf(const SceneSpec& spec, const Eigen::Vector3d& p);

/// Training cameras on the orbit; held-out cameras sit halfway between
/// training azimuths with the elevation list rotated by one.
std::vector<Camera> orbit_cameras(const SceneSpec& spec);
std::vector<Camera> heldout_cameras(const SceneSpec& spec);

/// Ground-truth render by sphere tracing, one ray per pixel center.
/// rgb = albedo * shading exactly; background black; depth is hit distance.
RenderBundle render_gt(const SceneSpec& spec, const Camera& cam);
/// Per-pixel shading (P x 3) of the same render.
Mat render_gt_shading(const SceneSpec& spec, const Camera& cam);

}  // namespace tsdf
