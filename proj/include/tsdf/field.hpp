#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

#include "tsdf/grad.hpp"

namespace tsdf {

struct Bounds {
  Eigen::Vector3d lo{-1.0, -1.0, -1.0};
  Eigen::Vector3d hi{1.0, 1.0, 1.0};

  bool contains(const Eigen::Vector3d& p) const {
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
  }
};

/// Vector-matrix factorized feature grid. Block m (m = X, Y, Z) of a query's
/// feature is lerp(vec[m], p_m) * bilerp(mat[m], p on the complementary plane),
/// with mat[0] = YZ, mat[1] = ZX, mat[2] = XY. Matrix rows are indexed i*N + j
/// where (i, j) = (y, z), (z, x), (x, y) respectively.
///
/// The lattice is node-aligned: node 0 sits on bounds.lo and node N-1 on
/// bounds.hi. Points outside the box are clamped onto it.
class TensorField {
 public:
  TensorField() = default;
  TensorField(int resolution, int channels, Bounds bounds = {});

  /// Factors drawn i.i.d. from U[-scale, scale] with a seeded generator.
  static TensorField random(int resolution, int channels, double scale, std::uint64_t seed,
                            Bounds bounds = {});

  int resolution() const { return n_; }
  int channels() const { return r_; }
  int feature_dim() const { return 3 * r_; }
  const Bounds& bounds() const { return bounds_; }

  std::array<Parameter, 3> vec;  // X, Y, Z: N x R
  std::array<Parameter, 3> mat;  // YZ, ZX, XY: (N*N) x R

  std::vector<Parameter*> parameters();
  std::size_t parameter_count() const;

  /// Untaped evaluation; points is B x 3, result B x 3R.
  Mat query_batch(const Mat& points) const;
  Eigen::VectorXd query(const Eigen::Vector3d& p) const;

  /// Taped evaluation, differentiable w.r.t. the factors and (inside the box)
  /// the point coordinates.
  Var query(Tape& tape, Var points);

 private:
  int n_ = 0;
  int r_ = 0;
  Bounds bounds_;
};

}  // namespace tsdf
