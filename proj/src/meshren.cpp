#include "tsdf/meshren.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "tsdf/parallel.hpp"

namespace tsdf {

namespace {

constexpr double kTmin = 1e-9;

Eigen::Vector3d vertex(const Mesh& m, int i) { return m.vertices.row(i).transpose(); }

bool hit_box(const Ray& ray, const Eigen::Vector3d& inv, const Eigen::Vector3d& lo, const Eigen::Vector3d& hi,
             double tmax) {
  double t0 = kTmin, t1 = tmax;
  for (int a = 0; a < 3; ++a) {
    double ta = (lo[a] - ray.origin[a]) * inv[a], tb = (hi[a] - ray.origin[a]) * inv[a];
    if (ta > tb) std::swap(ta, tb);
    if (std::isnan(ta) || std::isnan(tb)) {
      if (ray.origin[a] < lo[a] || ray.origin[a] > hi[a]) return false;
      continue;
    }
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return false;
  }
  return true;
}

}  // namespace

bool intersect_triangle(const Ray& ray, const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& c,
                        double tmin, Hit& hit) {
  const Eigen::Vector3d e1 = b - a, e2 = c - a;
  const Eigen::Vector3d pv = ray.dir.cross(e2);
  const double det = e1.dot(pv);
  if (std::abs(det) < 1e-14) return false;
  const double inv = 1.0 / det;
  const Eigen::Vector3d tv = ray.origin - a;
  const double u = tv.dot(pv) * inv;
  if (u < 0.0 || u > 1.0) return false;
  const Eigen::Vector3d qv = tv.cross(e1);
  const double v = ray.dir.dot(qv) * inv;
  if (v < 0.0 || u + v > 1.0) return false;
  const double t = e2.dot(qv) * inv;
  if (!(t > tmin)) return false;
  hit.t = t;
  hit.u = u;
  hit.v = v;
  return true;
}

BVH::BVH(const Mesh& mesh) : mesh_(&mesh) {
  validate(mesh);
  const int n = static_cast<int>(mesh.triangles.size());
  order_.resize(n);
  std::iota(order_.begin(), order_.end(), 0);
  centroid_.resize(n);
  for (int i = 0; i < n; ++i) {
    const auto& t = mesh.triangles[i];
    centroid_[i] = (vertex(mesh, t[0]) + vertex(mesh, t[1]) + vertex(mesh, t[2])) / 3.0;
  }
  if (n > 0) build(0, n);
}

int BVH::build(int first, int count) {
  Node node;
  node.lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
  node.hi = -node.lo;
  Eigen::Vector3d clo = node.lo, chi = node.hi;
  for (int i = first; i < first + count; ++i) {
    const auto& t = mesh_->triangles[order_[i]];
    for (int k = 0; k < 3; ++k) {
      node.lo = node.lo.cwiseMin(vertex(*mesh_, t[k]));
      node.hi = node.hi.cwiseMax(vertex(*mesh_, t[k]));
    }
    clo = clo.cwiseMin(centroid_[order_[i]]);
    chi = chi.cwiseMax(centroid_[order_[i]]);
  }
  const int id = static_cast<int>(nodes_.size());
  nodes_.push_back(node);
  if (count <= 4) {
    nodes_[id].first = first;
    nodes_[id].count = count;
    return id;
  }
  int axis = 0;
  (chi - clo).maxCoeff(&axis);
  const int mid = first + count / 2;
  std::nth_element(order_.begin() + first, order_.begin() + mid, order_.begin() + first + count,
                   [&](int a, int b) { return centroid_[a][axis] < centroid_[b][axis]; });
  const int left = build(first, mid - first);
  const int right = build(mid, first + count - mid);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

bool BVH::intersect(const Ray& ray, Hit& hit) const {
  if (nodes_.empty()) return false;
  const Eigen::Vector3d inv = ray.dir.cwiseInverse();
  double best = std::numeric_limits<double>::infinity();
  bool found = false;
  int stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& n = nodes_[stack[--top]];
    if (!hit_box(ray, inv, n.lo, n.hi, best)) continue;
    if (n.left < 0) {
      for (int i = n.first; i < n.first + n.count; ++i) {
        const auto& t = mesh_->triangles[order_[i]];
        Hit h;
        if (intersect_triangle(ray, vertex(*mesh_, t[0]), vertex(*mesh_, t[1]), vertex(*mesh_, t[2]), kTmin, h) &&
            h.t < best) {
          best = h.t;
          h.triangle = order_[i];
          hit = h;
          found = true;
        }
      }
    } else {
      stack[top++] = n.left;
      stack[top++] = n.right;
    }
  }
  return found;
}

namespace {

struct PixelHits {
  std::vector<Eigen::Index> rows;
  std::vector<Ray> rays;
  std::vector<Hit> hits;
};

PixelHits trace(const Mesh& mesh, const Camera& cam) {
  PixelHits out;
  if (mesh.empty()) return out;
  const BVH bvh(mesh);
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      const Ray ray = pixel_ray(cam, x, y);
      Hit h;
      if (!bvh.intersect(ray, h)) continue;
      out.rows.push_back(static_cast<Eigen::Index>(y) * cam.width + x);
      out.rays.push_back(ray);
      out.hits.push_back(h);
    }
  return out;
}

SparseMat barycentric_operator(const Mesh& mesh, const std::vector<Hit>& hits, std::size_t b, std::size_t e) {
  std::vector<Eigen::Triplet<double>> trip;
  for (std::size_t i = b; i < e; ++i) {
    const Hit& h = hits[i];
    const auto& t = mesh.triangles[h.triangle];
    const int r = static_cast<int>(i - b);
    trip.emplace_back(r, t[0], 1.0 - h.u - h.v);
    trip.emplace_back(r, t[1], h.u);
    trip.emplace_back(r, t[2], h.v);
  }
  SparseMat op(static_cast<Eigen::Index>(e - b), mesh.num_vertices());
  op.setFromTriplets(trip.begin(), trip.end());
  return op;
}

}  // namespace

RenderBundle raycast_view(const Mesh& mesh, const Model& model, const Camera& cam) {
  RenderBundle out = RenderBundle::zeros(cam.width, cam.height);
  const PixelHits ph = trace(mesh, cam);
  if (ph.hits.empty()) return out;
  const SparseMat op = barycentric_operator(mesh, ph.hits, 0, ph.hits.size());
  const Mat x = op * mesh.vertices;
  const ColorMats c = decode_color(model.heads, head_input(model.field.query_batch(x), x));
  for (std::size_t i = 0; i < ph.rows.size(); ++i) {
    const Eigen::Index o = ph.rows[i], ii = static_cast<Eigen::Index>(i);
    out.albedo.row(o) = c.albedo.row(ii);
    out.rgb.row(o) = c.albedo.row(ii).cwiseProduct(c.shading.row(ii));
    out.mask(o, 0) = 1.0;
    out.depth(o, 0) = (x.row(ii).transpose() - ph.rays[i].origin).dot(ph.rays[i].dir);
  }
  return out;
}

struct MeshRender::Chunk {
  Tape tape;
  std::vector<Eigen::Index> rows;
  Var vertices, rgb, albedo, depth;
};

MeshRender::MeshRender(const Mesh& mesh, Model& model, const Camera& cam, int chunk_pixels)
    : num_vertices_(mesh.num_vertices()) {
  bundle_ = RenderBundle::zeros(cam.width, cam.height);
  const PixelHits ph = trace(mesh, cam);
  const std::size_t chunk = static_cast<std::size_t>(std::max(1, chunk_pixels));
  const std::size_t n_chunks = (ph.hits.size() + chunk - 1) / chunk;
  chunks_.resize(n_chunks);
  parallel_for(n_chunks, [&](std::size_t cb, std::size_t ce, std::size_t) {
    for (std::size_t c = cb; c < ce; ++c) {
      const std::size_t b = c * chunk, e = std::min(ph.hits.size(), b + chunk);
      auto ch = std::make_unique<Chunk>();
      Tape& t = ch->tape;
      ch->rows.assign(ph.rows.begin() + b, ph.rows.begin() + e);
      const Eigen::Index n = static_cast<Eigen::Index>(e - b);
      Mat origin(n, 3), dir(n, 3);
      for (Eigen::Index i = 0; i < n; ++i) {
        origin.row(i) = ph.rays[b + i].origin.transpose();
        dir.row(i) = ph.rays[b + i].dir.transpose();
      }
      ch->vertices = t.variable(mesh.vertices);
      Var x = spmm(barycentric_operator(mesh, ph.hits, b, e), ch->vertices);
      ch->depth = rowwise_sum(mul(sub(x, t.constant(origin)), t.constant(dir)));
      ColorVars col = decode_color(model.heads, head_input(model.field.query(t, x), x));
      ch->albedo = col.albedo;
      ch->rgb = compose_color(col.albedo, col.shading);
      for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index o = ch->rows[i];
        bundle_.rgb.row(o) = ch->rgb.value().row(i);
        bundle_.albedo.row(o) = ch->albedo.value().row(i);
        bundle_.mask(o, 0) = 1.0;
        bundle_.depth(o, 0) = ch->depth.value()(i, 0);
      }
      chunks_[c] = std::move(ch);
    }
  });
}

MeshRender::~MeshRender() = default;

Mat MeshRender::backward(const Mat& g_rgb, const Mat& g_albedo, const Mat& g_depth) {
  const Eigen::Index p = bundle_.pixels();
  if (g_rgb.rows() != p || g_albedo.rows() != p || g_depth.rows() != p)
    throw std::invalid_argument("MeshRender::backward: gradient shape mismatch");
  parallel_for(chunks_.size(), [&](std::size_t cb, std::size_t ce, std::size_t) {
    for (std::size_t c = cb; c < ce; ++c) {
      Chunk& ch = *chunks_[c];
      const Eigen::Index n = static_cast<Eigen::Index>(ch.rows.size());
      Mat seeds[3] = {Mat(n, 3), Mat(n, 3), Mat(n, 1)};
      for (Eigen::Index i = 0; i < n; ++i) {
        seeds[0].row(i) = g_rgb.row(ch.rows[i]);
        seeds[1].row(i) = g_albedo.row(ch.rows[i]);
        seeds[2](i, 0) = g_depth(ch.rows[i], 0);
      }
      const Var outs[3] = {ch.rgb, ch.albedo, ch.depth};
      ch.tape.backward(outs, seeds);
    }
  });
  Mat gv = Mat::Zero(num_vertices_, 3);
  for (auto& ch : chunks_) {
    ch->tape.flush_param_grads();
    if (ch->tape.grad(ch->vertices).size()) gv += ch->tape.grad(ch->vertices);
  }
  return gv;
}

}  // namespace tsdf
