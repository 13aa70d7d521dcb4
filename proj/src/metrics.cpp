#include "tsdf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include <Eigen/Geometry>
#include <boost/geometry.hpp>
#include <boost/geometry/index/rtree.hpp>

#include "tsdf/parallel.hpp"

namespace tsdf {

namespace bg = boost::geometry;
namespace bgi = boost::geometry::index;

namespace {

void same_shape(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols() || a.size() == 0) throw std::invalid_argument("metrics: image shapes differ or empty");
}

}  // namespace

double mse(const Mat& a, const Mat& b) {
  same_shape(a, b);
  return (a - b).squaredNorm() / static_cast<double>(a.size());
}

double psnr(const Mat& a, const Mat& b) {
  const double m = mse(a, b);
  if (m <= 0.0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(1.0 / m));
}

double ssim(const Mat& a, const Mat& b, int width, int height) {
  same_shape(a, b);
  if (a.rows() != static_cast<Eigen::Index>(width) * height) throw std::invalid_argument("ssim: size mismatch");
  const int win = std::min({11, width, height});
  std::vector<double> g(win);
  double gs = 0.0;
  for (int i = 0; i < win; ++i) {
    const double x = i - (win - 1) / 2.0;
    g[i] = std::exp(-x * x / (2.0 * 1.5 * 1.5));
    gs += g[i];
  }
  for (double& v : g) v /= gs;
  constexpr double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
  double total = 0.0;
  long count = 0;
  for (Eigen::Index ch = 0; ch < a.cols(); ++ch)
    for (int y = 0; y + win <= height; ++y)
      for (int x = 0; x + win <= width; ++x) {
        double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
        for (int dy = 0; dy < win; ++dy)
          for (int dx = 0; dx < win; ++dx) {
            const double w = g[dy] * g[dx];
            const Eigen::Index p = static_cast<Eigen::Index>(y + dy) * width + x + dx;
            const double va = a(p, ch), vb = b(p, ch);
            ma += w * va;
            mb += w * vb;
            saa += w * va * va;
            sbb += w * vb * vb;
            sab += w * va * vb;
          }
        const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
        total += ((2 * ma * mb + c1) * (2 * cov + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
        ++count;
      }
  return std::clamp(total / static_cast<double>(count), 0.0, 1.0);
}

std::vector<SparseMat> pyramid_operators(int width, int height, int levels) {
  if (levels < 1 || width < 1 || height < 1) throw std::invalid_argument("pyramid: bad size");
  constexpr double k[5] = {1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
  std::vector<SparseMat> ops;
  SparseMat id(static_cast<Eigen::Index>(width) * height, static_cast<Eigen::Index>(width) * height);
  id.setIdentity();
  ops.push_back(id);
  int w = width, h = height;
  for (int l = 1; l < levels; ++l) {
    const int w2 = (w + 1) / 2, h2 = (h + 1) / 2;
    std::vector<Eigen::Triplet<double>> trip;
    for (int y = 0; y < h2; ++y)
      for (int x = 0; x < w2; ++x)
        for (int dy = -2; dy <= 2; ++dy)
          for (int dx = -2; dx <= 2; ++dx) {
            const int sx = std::clamp(2 * x + dx, 0, w - 1), sy = std::clamp(2 * y + dy, 0, h - 1);
            trip.emplace_back(y * w2 + x, sy * w + sx, k[dy + 2] * k[dx + 2]);
          }
    SparseMat down(static_cast<Eigen::Index>(w2) * h2, static_cast<Eigen::Index>(w) * h);
    down.setFromTriplets(trip.begin(), trip.end());
    ops.push_back(SparseMat(down * ops.back()));
    w = w2;
    h = h2;
  }
  return ops;
}

double pproxy(const Mat& a, const Mat& b, int width, int height) {
  same_shape(a, b);
  const auto ops = pyramid_operators(width, height);
  const Mat diff = a - b;
  double total = 0.0;
  for (const SparseMat& op : ops) {
    const Mat d = op * diff;
    total += d.cwiseAbs().sum() / static_cast<double>(d.size());
  }
  return total / static_cast<double>(ops.size());
}

Mat sample_surface(const Mesh& mesh, int n, std::uint64_t seed) {
  if (mesh.empty()) throw std::invalid_argument("sample_surface: empty mesh");
  std::vector<double> cdf(mesh.triangles.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
    const auto& t = mesh.triangles[i];
    const Eigen::Vector3d a = mesh.vertices.row(t[0]).transpose();
    const Eigen::Vector3d b = mesh.vertices.row(t[1]).transpose();
    const Eigen::Vector3d c = mesh.vertices.row(t[2]).transpose();
    acc += 0.5 * (b - a).cross(c - a).norm();
    cdf[i] = acc;
  }
  if (!(acc > 0.0)) throw std::invalid_argument("sample_surface: mesh has zero area");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Mat out(n, 3);
  for (int k = 0; k < n; ++k) {
    const double r = u(rng) * acc;
    const std::size_t i = std::min<std::size_t>(
        static_cast<std::size_t>(std::lower_bound(cdf.begin(), cdf.end(), r) - cdf.begin()), cdf.size() - 1);
    double r1 = u(rng), r2 = u(rng);
    if (r1 + r2 > 1.0) {
      r1 = 1.0 - r1;
      r2 = 1.0 - r2;
    }
    const auto& t = mesh.triangles[i];
    out.row(k) = (1.0 - r1 - r2) * mesh.vertices.row(t[0]) + r1 * mesh.vertices.row(t[1]) + r2 * mesh.vertices.row(t[2]);
  }
  return out;
}

namespace {

using BPoint = bg::model::point<double, 3, bg::cs::cartesian>;

double directed(const Mat& from, const Mat& to) {
  std::vector<BPoint> pts;
  pts.reserve(static_cast<std::size_t>(to.rows()));
  for (Eigen::Index i = 0; i < to.rows(); ++i) pts.emplace_back(to(i, 0), to(i, 1), to(i, 2));
  const bgi::rtree<BPoint, bgi::quadratic<16>> tree(pts.begin(), pts.end());
  double total = 0.0;
  for (Eigen::Index i = 0; i < from.rows(); ++i) {
    const BPoint q(from(i, 0), from(i, 1), from(i, 2));
    std::vector<BPoint> nn;
    tree.query(bgi::nearest(q, 1), std::back_inserter(nn));
    total += bg::distance(q, nn.front());
  }
  return total / static_cast<double>(from.rows());
}

}  // namespace

double chamfer(const Mesh& a, const Mesh& b, int n_samples, std::uint64_t seed) {
  if (n_samples < 1) throw std::invalid_argument("chamfer: n_samples must be positive");
  const Mat pa = sample_surface(a, n_samples, seed);
  const Mat pb = sample_surface(b, n_samples, seed);
  return 0.5 * (directed(pa, pb) + directed(pb, pa));
}

double volume_iou(const BatchSdf& a, const BatchSdf& b, int resolution, const Bounds& bounds) {
  if (resolution < 1) throw std::invalid_argument("volume_iou: resolution must be positive");
  const Eigen::Vector3d step = (bounds.hi - bounds.lo) / resolution;
  long inter = 0, uni = 0;
  Mat pts(static_cast<Eigen::Index>(resolution) * resolution, 3);
  for (int i = 0; i < resolution; ++i) {
    for (int j = 0; j < resolution; ++j)
      for (int k = 0; k < resolution; ++k)
        pts.row(static_cast<Eigen::Index>(j) * resolution + k) =
            (bounds.lo + step.cwiseProduct(Eigen::Vector3d(i + 0.5, j + 0.5, k + 0.5))).transpose();
    const Mat sa = a(pts), sb = b(pts);
    if (sa.rows() != pts.rows() || sb.rows() != pts.rows()) throw std::invalid_argument("volume_iou: SDF returned wrong row count");
    for (Eigen::Index r = 0; r < pts.rows(); ++r) {
      const bool ia = sa(r, 0) < 0.0, ib = sb(r, 0) < 0.0;
      inter += ia && ib;
      uni += ia || ib;
    }
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace tsdf
