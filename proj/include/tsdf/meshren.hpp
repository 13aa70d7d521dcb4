#pragma once

#include <memory>
#include <vector>

#include "tsdf/camera.hpp"
#include "tsdf/checkpoint.hpp"
#include "tsdf/image.hpp"
#include "tsdf/mesh.hpp"

namespace tsdf {

struct Hit {
  double t = 0.0;
  int triangle = -1;
  double u = 0.0, v = 0.0;  // point = (1-u-v) a + u b + v c
};

/// Moller-Trumbore test; hits with t <= tmin are ignored.
bool intersect_triangle(const Ray& ray, const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& c,
                        double tmin, Hit& hit);

/// Bounding volume hierarchy over a triangle mesh (median split on the
/// longest centroid axis).
class BVH {
 public:
  explicit BVH(const Mesh& mesh);
  /// Nearest hit with t > 1e-9.
  bool intersect(const Ray& ray, Hit& hit) const;

 private:
  struct Node {
    Eigen::Vector3d lo, hi;
    int left = -1, right = -1;  // children, or -1 for leaves
    int first = 0, count = 0;   // leaf triangle range in order_
  };
  int build(int first, int count);

  const Mesh* mesh_;
  std::vector<Node> nodes_;
  std::vector<int> order_;
  std::vector<Eigen::Vector3d> centroid_;
};

/// Untaped render: nearest hit per pixel, colors decoded from the model at the
/// hit point, mask 1 on hit, depth = hit distance.
RenderBundle raycast_view(const Mesh& mesh, const Model& model, const Camera& cam);

/// Differentiable mesh render. Each chunk of hit pixels has its own tape where
/// the vertex positions are a leaf; hit points are barycentric combinations of
/// them with the barycentrics frozen at their forward values. backward()
/// writes field/head gradients into Parameter::grad and returns dLoss/dVertices.
/// Coverage (the mask) carries no gradient.
class MeshRender {
 public:
  MeshRender(const Mesh& mesh, Model& model, const Camera& cam, int chunk_pixels = 4096);
  MeshRender(const MeshRender&) = delete;
  MeshRender& operator=(const MeshRender&) = delete;
  ~MeshRender();

  const RenderBundle& bundle() const { return bundle_; }
  Mat backward(const Mat& g_rgb, const Mat& g_albedo, const Mat& g_depth);

 private:
  struct Chunk;
  std::vector<std::unique_ptr<Chunk>> chunks_;
  RenderBundle bundle_;
  Eigen::Index num_vertices_ = 0;
};

}  // namespace tsdf
