#pragma once

#include <array>
#include <functional>
#include <vector>

#include "tsdf/checkpoint.hpp"
#include "tsdf/mesh.hpp"

namespace tsdf {

/// Dense samples on an M^3 node lattice spanning `bounds`. Node (i, j, k) has
/// index (i*M + j)*M + k and position lo + (hi - lo) * (i, j, k) / (M - 1);
/// cells use the same layout with M - 1 per axis.
struct FlexGrid {
  int resolution = 0;
  Bounds bounds;
  Mat sdf;      // M^3 x 1
  Mat deform;   // M^3 x 1, displacement along the SDF gradient
  Mat weights;  // (M-1)^3 x 8, per-cell corner weights (corner order as in Marching Cubes)

  /// Grid of `fn` values with zero deformation and unit weights.
  static FlexGrid from_sdf(int resolution, const Bounds& bounds, const std::function<double(const Eigen::Vector3d&)>& fn);

  int node_index(int i, int j, int k) const { return (i * resolution + j) * resolution + k; }
  int cell_index(int i, int j, int k) const { return (i * (resolution - 1) + j) * (resolution - 1) + k; }
  Eigen::Vector3d node(int i, int j, int k) const;
  /// Smallest cell edge length.
  double cell_size() const;
};

/// Decodes SDF and deformation at every node and weights at every cell center.
FlexGrid sample_grid(const Model& model, int resolution);
/// Only the node SDF values (deformation zero, weights one).
FlexGrid sample_sdf_grid(const Model& model, int resolution);

/// Normalized central-difference SDF gradient per node (M^3 x 3).
Mat grid_normals(const FlexGrid& grid);

/// Marching Cubes at the zero level with per-edge shared vertices. Corners with
/// s < 0 are inside; triangles face outward.
Mesh marching_cubes(const FlexGrid& grid);

/// Crossing-cell structure of a grid, fixed by the signs of its SDF values.
/// "Active" nodes are the corners of crossing cells; all index lists below are
/// local to the active node / crossing cell lists.
struct FlexTopology {
  int resolution = 0;
  Bounds bounds;
  double h = 0.0;
  std::vector<int> nodes;  // global node ids
  std::vector<int> cells;  // global cell ids
  Mat node_pos;            // A x 3
  Mat normals;             // A x 3, detached
  Mat cell_centers;        // C x 3
  // One entry per (crossing cell, sign-change edge of that cell).
  std::vector<int> edge_a, edge_b;    // active node ids, edge_a inside
  std::vector<int> edge_wa, edge_wb;  // rows of the flattened (C*8) x 1 weights
  SparseMat average;                  // C x E, row c averages the entries of cell c
  // Unique sign-change grid edges.
  std::vector<int> flip_a, flip_b;
  // One quad of cell ids per interior sign-change edge, counter-clockwise seen
  // from the outside.
  std::vector<std::array<int, 4>> quads;

  std::size_t num_cells() const { return cells.size(); }
  std::size_t num_nodes() const { return nodes.size(); }
};

FlexTopology build_topology(const FlexGrid& grid);

/// Dual vertex per crossing cell: the mean over the cell's sign-change edges of
/// the weighted crossing (s_a w_a xb - s_b w_b xa) / (s_a w_a - s_b w_b), where
/// x = node + d * normal. s, d are A x 1 and w is C x 8.
Var dual_vertices(const FlexTopology& topo, Var s, Var d, Var w);
Mat dual_vertices(const FlexTopology& topo, const Mat& s, const Mat& d, const Mat& w);

/// Splits each quad along its shorter diagonal.
std::vector<Eigen::Vector3i> triangulate(const FlexTopology& topo, const Mat& vertices);

/// mean |d| / (h/2) + mean sign-flip cross-entropy + mean (log w)^2.
Var reg_loss(const FlexTopology& topo, Var s, Var d, Var w);
double reg_loss(const FlexTopology& topo, const Mat& s, const Mat& d, const Mat& w);

/// Active-set values of a grid in topology order.
void gather_active(const FlexTopology& topo, const FlexGrid& grid, Mat& s, Mat& d, Mat& w);

/// Untaped dual extraction using the grid's own deformation and weights.
Mesh flexicubes_extract(const FlexGrid& grid);

/// Differentiable extraction from the model: the full SDF grid is evaluated
/// without a tape to fix the topology, then SDF/deformation at active nodes and
/// weights at crossing cells are decoded on `tape`.
struct FlexSurface {
  FlexTopology topo;
  Mesh mesh;     // vertex values and triangles
  Var vertices;  // C x 3
  Var reg;       // 1 x 1
};
FlexSurface flexicubes_extract(Tape& tape, Model& model, int resolution);

/// Per-vertex albedo and shading decoded at the vertex positions.
void attach_colors(Mesh& mesh, const Model& model);

}  // namespace tsdf
