#pragma once

#include <string>
#include <vector>

#include <Eigen/Core>

#include "tsdf/grad.hpp"

namespace tsdf {

struct Mesh {
  Mat vertices;                             // V x 3
  std::vector<Eigen::Vector3i> triangles;   // counter-clockwise seen from outside
  Mat albedo;                               // V x 3 or empty
  Mat shading;                              // V x 3 or empty

  Eigen::Index num_vertices() const { return vertices.rows(); }
  std::size_t num_triangles() const { return triangles.size(); }
  bool empty() const { return triangles.empty(); }
};

/// True when every undirected edge is used by exactly two triangles.
bool is_watertight(const Mesh& mesh);
/// Divergence-theorem volume; positive for outward-oriented closed meshes.
double signed_volume(const Mesh& mesh);
double surface_area(const Mesh& mesh);
/// Throws std::invalid_argument on out-of-range indices or non-finite vertices.
void validate(const Mesh& mesh);

/// Wavefront OBJ. With `colors` (V x 3) each vertex line is "v x y z r g b".
void write_obj(const std::string& path, const Mesh& mesh, const Mat* colors = nullptr);
/// Reads v/f records (polygons are fan-triangulated; extra vertex fields after
/// xyz are read as colors into Mesh::albedo when present on every vertex).
Mesh read_obj(const std::string& path);

}  // namespace tsdf
