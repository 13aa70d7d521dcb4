#include "tsdf/field.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace tsdf {

namespace {

// Complementary plane coordinates for each block, as (i, j) axis pairs.
constexpr int kPlaneAxes[3][2] = {{1, 2}, {2, 0}, {0, 1}};
const char* const kVecNames[3] = {"field.vec.x", "field.vec.y", "field.vec.z"};
const char* const kMatNames[3] = {"field.mat.yz", "field.mat.zx", "field.mat.xy"};

struct Lerp {
  Eigen::Index i0;
  double f;
};

Lerp locate(double u, int n) {
  const double v = std::clamp(u, 0.0, static_cast<double>(n - 1));
  const Eigen::Index i0 = std::min<Eigen::Index>(static_cast<Eigen::Index>(std::floor(v)), n - 2);
  return {i0, v - static_cast<double>(i0)};
}

}  // namespace

TensorField::TensorField(int resolution, int channels, Bounds bounds)
    : n_(resolution), r_(channels), bounds_(bounds) {
  if (resolution < 2 || channels < 1) throw std::invalid_argument("field: resolution >= 2 and channels >= 1 required");
  if (!((bounds.hi.array() > bounds.lo.array()).all())) throw std::invalid_argument("field: empty bounds");
  for (int m = 0; m < 3; ++m) {
    vec[m].name = kVecNames[m];
    vec[m].value = Mat::Zero(n_, r_);
    vec[m].zero_grad();
    mat[m].name = kMatNames[m];
    mat[m].value = Mat::Zero(static_cast<Eigen::Index>(n_) * n_, r_);
    mat[m].zero_grad();
  }
}

TensorField TensorField::random(int resolution, int channels, double scale, std::uint64_t seed,
                                Bounds bounds) {
  if (!(scale >= 0.0)) throw std::invalid_argument("field: scale must be non-negative");
  TensorField f(resolution, channels, bounds);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-scale, scale);
  auto fill = [&](Mat& m) {
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = scale == 0.0 ? 0.0 : u(rng);
  };
  for (int m = 0; m < 3; ++m) fill(f.vec[m].value);
  for (int m = 0; m < 3; ++m) fill(f.mat[m].value);
  return f;
}

std::vector<Parameter*> TensorField::parameters() {
  return {&vec[0], &vec[1], &vec[2], &mat[0], &mat[1], &mat[2]};
}

std::size_t TensorField::parameter_count() const {
  std::size_t total = 0;
  for (int m = 0; m < 3; ++m) total += vec[m].value.size() + mat[m].value.size();
  return total;
}

Mat TensorField::query_batch(const Mat& points) const {
  if (points.cols() != 3) throw std::invalid_argument("field: points must be B x 3");
  if (!points.allFinite()) throw std::invalid_argument("field: non-finite query point");
  const Eigen::Index b = points.rows();
  Mat out(b, 3 * r_);
  const Eigen::Array3d scale = static_cast<double>(n_ - 1) / (bounds_.hi - bounds_.lo).array();
  for (Eigen::Index k = 0; k < b; ++k) {
    const Eigen::Array3d u = (points.row(k).transpose().array() - bounds_.lo.array()) * scale;
    Lerp l[3];
    for (int a = 0; a < 3; ++a) l[a] = locate(u[a], n_);
    for (int m = 0; m < 3; ++m) {
      const Mat& v = vec[m].value;
      const Mat& t = mat[m].value;
      const Lerp& lv = l[m];
      const Lerp& li = l[kPlaneAxes[m][0]];
      const Lerp& lj = l[kPlaneAxes[m][1]];
      const Eigen::Index r00 = li.i0 * n_ + lj.i0, r10 = r00 + n_;
      for (int c = 0; c < r_; ++c) {
        const double vv = (1.0 - lv.f) * v(lv.i0, c) + lv.f * v(lv.i0 + 1, c);
        const double mm = (1.0 - li.f) * ((1.0 - lj.f) * t(r00, c) + lj.f * t(r00 + 1, c)) +
                          li.f * ((1.0 - lj.f) * t(r10, c) + lj.f * t(r10 + 1, c));
        out(k, m * r_ + c) = vv * mm;
      }
    }
  }
  return out;
}

Eigen::VectorXd TensorField::query(const Eigen::Vector3d& p) const {
  return query_batch(Mat(p.transpose())).row(0).transpose();
}

Var TensorField::query(Tape& tape, Var points) {
  if (points.cols() != 3) throw std::invalid_argument("field: points must be B x 3");
  if (!points.value().allFinite()) throw std::invalid_argument("field: non-finite query point");
  Tape& t = tape;
  Mat scale(1, 3), lo(1, 3);
  for (int a = 0; a < 3; ++a) {
    scale(0, a) = static_cast<double>(n_ - 1) / (bounds_.hi[a] - bounds_.lo[a]);
    lo(0, a) = bounds_.lo[a];
  }
  Var u = clamp(mul(sub(points, t.constant(lo)), t.constant(scale)), 0.0, static_cast<double>(n_ - 1));
  Var axis[3] = {slice_cols(u, 0, 1), slice_cols(u, 1, 1), slice_cols(u, 2, 1)};
  std::vector<Var> blocks;
  for (int m = 0; m < 3; ++m) {
    Var v = lerp_gather(t.parameter(vec[m]), axis[m]);
    Var ij = concat_cols({axis[kPlaneAxes[m][0]], axis[kPlaneAxes[m][1]]});
    Var p = bilerp_gather(t.parameter(mat[m]), ij, n_);
    blocks.push_back(mul(v, p));
  }
  return concat_cols(blocks);
}

}  // namespace tsdf
