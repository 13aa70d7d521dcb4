#include "tsdf/extract.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_map>

#include "tsdf/parallel.hpp"

namespace tsdf {

namespace mc {
extern const int kEdgeTable[256];
extern const int kTriTable[256][16];
}  // namespace mc

namespace {

constexpr int kCorner[8][3] = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0},
                               {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
constexpr int kEdge[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                              {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

bool inside(double s) { return s < 0.0; }

void check_grid(const FlexGrid& g) {
  const int m = g.resolution;
  if (m < 2) throw std::invalid_argument("grid: resolution >= 2 required");
  const Eigen::Index nodes = static_cast<Eigen::Index>(m) * m * m;
  const Eigen::Index cells = static_cast<Eigen::Index>(m - 1) * (m - 1) * (m - 1);
  if (g.sdf.rows() != nodes || g.deform.rows() != nodes || g.weights.rows() != cells || g.weights.cols() != 8)
    throw std::invalid_argument("grid: array sizes do not match resolution");
  if (!g.sdf.allFinite() || !g.deform.allFinite()) throw std::invalid_argument("grid: non-finite samples");
  if (!(g.weights.array() > 0.0).all()) throw std::invalid_argument("grid: weights must be positive");
}

Mat lattice_points(const FlexGrid& g) {
  const int m = g.resolution;
  Mat p(static_cast<Eigen::Index>(m) * m * m, 3);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < m; ++k) p.row(g.node_index(i, j, k)) = g.node(i, j, k).transpose();
  return p;
}

Mat cell_center_points(const FlexGrid& g) {
  const int c = g.resolution - 1;
  Mat p(static_cast<Eigen::Index>(c) * c * c, 3);
  for (int i = 0; i < c; ++i)
    for (int j = 0; j < c; ++j)
      for (int k = 0; k < c; ++k)
        p.row(g.cell_index(i, j, k)) = (0.5 * (g.node(i, j, k) + g.node(i + 1, j + 1, k + 1))).transpose();
  return p;
}

// Evaluates fn on row blocks of pts in parallel; fn maps (B x 3) -> (B x C).
template <class Fn>
Mat blocked(const Mat& pts, Eigen::Index cols, Fn fn) {
  constexpr Eigen::Index kBlock = 4096;
  Mat out(pts.rows(), cols);
  const std::size_t blocks = static_cast<std::size_t>((pts.rows() + kBlock - 1) / kBlock);
  parallel_for(blocks, [&](std::size_t b0, std::size_t b1, std::size_t) {
    for (std::size_t b = b0; b < b1; ++b) {
      const Eigen::Index s = static_cast<Eigen::Index>(b) * kBlock;
      const Eigen::Index n = std::min(kBlock, pts.rows() - s);
      out.middleRows(s, n) = fn(Mat(pts.middleRows(s, n)));
    }
  });
  return out;
}

}  // namespace

FlexGrid FlexGrid::from_sdf(int resolution, const Bounds& bounds,
                            const std::function<double(const Eigen::Vector3d&)>& fn) {
  if (resolution < 2) throw std::invalid_argument("grid: resolution >= 2 required");
  FlexGrid g;
  g.resolution = resolution;
  g.bounds = bounds;
  const Eigen::Index n = static_cast<Eigen::Index>(resolution) * resolution * resolution;
  const Eigen::Index c = static_cast<Eigen::Index>(resolution - 1) * (resolution - 1) * (resolution - 1);
  g.sdf.resize(n, 1);
  for (int i = 0; i < resolution; ++i)
    for (int j = 0; j < resolution; ++j)
      for (int k = 0; k < resolution; ++k) g.sdf(g.node_index(i, j, k), 0) = fn(g.node(i, j, k));
  g.deform = Mat::Zero(n, 1);
  g.weights = Mat::Ones(c, 8);
  return g;
}

Eigen::Vector3d FlexGrid::node(int i, int j, int k) const {
  const double d = static_cast<double>(resolution - 1);
  return bounds.lo + (bounds.hi - bounds.lo).cwiseProduct(Eigen::Vector3d(i / d, j / d, k / d));
}

double FlexGrid::cell_size() const { return (bounds.hi - bounds.lo).minCoeff() / (resolution - 1); }

FlexGrid sample_sdf_grid(const Model& model, int resolution) {
  FlexGrid g = FlexGrid::from_sdf(resolution, model.field.bounds(), [](const Eigen::Vector3d&) { return 0.0; });
  g.sdf = blocked(lattice_points(g), 1, [&](const Mat& p) {
    return decode_sdf(model.heads, head_input(model.field.query_batch(p), p));
  });
  return g;
}

FlexGrid sample_grid(const Model& model, int resolution) {
  FlexGrid g = sample_sdf_grid(model, resolution);
  const double h = g.cell_size();
  g.deform = blocked(lattice_points(g), 1, [&](const Mat& p) {
    return decode_deform(model.heads, head_input(model.field.query_batch(p), p), h);
  });
  g.weights = blocked(cell_center_points(g), 8, [&](const Mat& p) {
    return decode_weights(model.heads, head_input(model.field.query_batch(p), p));
  });
  return g;
}

Mat grid_normals(const FlexGrid& g) {
  const int m = g.resolution;
  Mat n(g.sdf.rows(), 3);
  const Eigen::Vector3d step = (g.bounds.hi - g.bounds.lo) / (m - 1);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      for (int k = 0; k < m; ++k) {
        const int c[3] = {i, j, k};
        Eigen::Vector3d grad;
        for (int a = 0; a < 3; ++a) {
          int lo[3] = {i, j, k}, hi[3] = {i, j, k};
          lo[a] = std::max(0, c[a] - 1);
          hi[a] = std::min(m - 1, c[a] + 1);
          grad[a] = (g.sdf(g.node_index(hi[0], hi[1], hi[2]), 0) - g.sdf(g.node_index(lo[0], lo[1], lo[2]), 0)) /
                    ((hi[a] - lo[a]) * step[a]);
        }
        const double len = grad.norm();
        n.row(g.node_index(i, j, k)) = len > 0.0 ? Eigen::RowVector3d(grad.transpose() / len) : Eigen::RowVector3d::Zero();
      }
  return n;
}

Mesh marching_cubes(const FlexGrid& g) {
  check_grid(g);
  const int m = g.resolution;
  Mesh mesh;
  std::unordered_map<long long, int> edge_vertex;
  std::vector<Eigen::Vector3d> verts;
  auto vertex_on = [&](int na, int nb, const Eigen::Vector3d& pa, const Eigen::Vector3d& pb) {
    const long long key = static_cast<long long>(std::min(na, nb)) * (static_cast<long long>(m) * m * m) + std::max(na, nb);
    if (auto it = edge_vertex.find(key); it != edge_vertex.end()) return it->second;
    // Interpolate from the lower node id so shared edges give identical points.
    const bool swap = na > nb;
    const double sa = g.sdf(swap ? nb : na, 0), sb = g.sdf(swap ? na : nb, 0);
    const Eigen::Vector3d& a = swap ? pb : pa;
    const Eigen::Vector3d& b = swap ? pa : pb;
    const double f = sa / (sa - sb);
    verts.push_back(a + f * (b - a));
    const int id = static_cast<int>(verts.size()) - 1;
    edge_vertex.emplace(key, id);
    return id;
  };
  for (int i = 0; i + 1 < m; ++i)
    for (int j = 0; j + 1 < m; ++j)
      for (int k = 0; k + 1 < m; ++k) {
        int node[8];
        int cube = 0;
        for (int c = 0; c < 8; ++c) {
          node[c] = g.node_index(i + kCorner[c][0], j + kCorner[c][1], k + kCorner[c][2]);
          if (inside(g.sdf(node[c], 0))) cube |= 1 << c;
        }
        if (mc::kEdgeTable[cube] == 0) continue;
        int ev[12];
        for (int e = 0; e < 12; ++e) {
          if (!(mc::kEdgeTable[cube] & (1 << e))) continue;
          const int a = kEdge[e][0], b = kEdge[e][1];
          ev[e] = vertex_on(node[a], node[b], g.node(i + kCorner[a][0], j + kCorner[a][1], k + kCorner[a][2]),
                            g.node(i + kCorner[b][0], j + kCorner[b][1], k + kCorner[b][2]));
        }
        for (int t = 0; mc::kTriTable[cube][t] != -1; t += 3)
          mesh.triangles.emplace_back(ev[mc::kTriTable[cube][t]], ev[mc::kTriTable[cube][t + 2]],
                                      ev[mc::kTriTable[cube][t + 1]]);
      }
  mesh.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
  for (std::size_t v = 0; v < verts.size(); ++v) mesh.vertices.row(static_cast<Eigen::Index>(v)) = verts[v].transpose();
  return mesh;
}

FlexTopology build_topology(const FlexGrid& g) {
  check_grid(g);
  const int m = g.resolution;
  FlexTopology t;
  t.resolution = m;
  t.bounds = g.bounds;
  t.h = g.cell_size();
  std::vector<int> local(static_cast<std::size_t>(g.sdf.rows()), -1);
  std::vector<int> cell_local(static_cast<std::size_t>(g.weights.rows()), -1);
  for (int i = 0; i + 1 < m; ++i)
    for (int j = 0; j + 1 < m; ++j)
      for (int k = 0; k + 1 < m; ++k) {
        int n_in = 0;
        for (int c = 0; c < 8; ++c)
          n_in += inside(g.sdf(g.node_index(i + kCorner[c][0], j + kCorner[c][1], k + kCorner[c][2]), 0));
        if (n_in == 0 || n_in == 8) continue;
        cell_local[g.cell_index(i, j, k)] = static_cast<int>(t.cells.size());
        t.cells.push_back(g.cell_index(i, j, k));
        for (int c = 0; c < 8; ++c) {
          const int id = g.node_index(i + kCorner[c][0], j + kCorner[c][1], k + kCorner[c][2]);
          if (local[id] < 0) {
            local[id] = static_cast<int>(t.nodes.size());
            t.nodes.push_back(id);
          }
        }
      }
  const Mat normals = grid_normals(g);
  t.node_pos.resize(static_cast<Eigen::Index>(t.nodes.size()), 3);
  t.normals.resize(t.node_pos.rows(), 3);
  const int c1 = m - 1;
  auto node_coords = [m](int id) { return Eigen::Vector3i(id / (m * m), (id / m) % m, id % m); };
  for (std::size_t a = 0; a < t.nodes.size(); ++a) {
    const Eigen::Vector3i c = node_coords(t.nodes[a]);
    t.node_pos.row(static_cast<Eigen::Index>(a)) = g.node(c[0], c[1], c[2]).transpose();
    t.normals.row(static_cast<Eigen::Index>(a)) = normals.row(t.nodes[a]);
  }
  t.cell_centers.resize(static_cast<Eigen::Index>(t.cells.size()), 3);
  std::vector<Eigen::Triplet<double>> avg;
  for (std::size_t ci = 0; ci < t.cells.size(); ++ci) {
    const int id = t.cells[ci];
    const int i = id / (c1 * c1), j = (id / c1) % c1, k = id % c1;
    t.cell_centers.row(static_cast<Eigen::Index>(ci)) = (0.5 * (g.node(i, j, k) + g.node(i + 1, j + 1, k + 1))).transpose();
    const std::size_t first = t.edge_a.size();
    for (int e = 0; e < 12; ++e) {
      int ca = kEdge[e][0], cb = kEdge[e][1];
      int na = g.node_index(i + kCorner[ca][0], j + kCorner[ca][1], k + kCorner[ca][2]);
      int nb = g.node_index(i + kCorner[cb][0], j + kCorner[cb][1], k + kCorner[cb][2]);
      const bool ia = inside(g.sdf(na, 0)), ib = inside(g.sdf(nb, 0));
      if (ia == ib) continue;
      if (!ia) {
        std::swap(ca, cb);
        std::swap(na, nb);
      }
      t.edge_a.push_back(local[na]);
      t.edge_b.push_back(local[nb]);
      t.edge_wa.push_back(static_cast<int>(ci) * 8 + ca);
      t.edge_wb.push_back(static_cast<int>(ci) * 8 + cb);
    }
    const std::size_t count = t.edge_a.size() - first;
    for (std::size_t e = first; e < t.edge_a.size(); ++e)
      avg.emplace_back(static_cast<int>(ci), static_cast<int>(e), 1.0 / static_cast<double>(count));
  }
  t.average.resize(static_cast<Eigen::Index>(t.cells.size()), static_cast<Eigen::Index>(t.edge_a.size()));
  t.average.setFromTriplets(avg.begin(), avg.end());

  constexpr int kPlane[3][2] = {{1, 2}, {2, 0}, {0, 1}};
  constexpr int kRing[4][2] = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  for (std::size_t a = 0; a < t.nodes.size(); ++a) {
    const Eigen::Vector3i c = node_coords(t.nodes[a]);
    const bool in_a = inside(g.sdf(t.nodes[a], 0));
    for (int axis = 0; axis < 3; ++axis) {
      if (c[axis] + 1 >= m) continue;
      Eigen::Vector3i nb = c;
      nb[axis] += 1;
      const int nid = g.node_index(nb[0], nb[1], nb[2]);
      if (in_a == inside(g.sdf(nid, 0))) continue;
      t.flip_a.push_back(static_cast<int>(a));
      t.flip_b.push_back(local[nid]);
      const int u = kPlane[axis][0], v = kPlane[axis][1];
      if (c[u] < 1 || c[u] > m - 2 || c[v] < 1 || c[v] > m - 2) continue;
      std::array<int, 4> quad;
      for (int r = 0; r < 4; ++r) {
        Eigen::Vector3i cc = c;
        cc[u] += kRing[r][0] - 1;
        cc[v] += kRing[r][1] - 1;
        quad[r] = cell_local[g.cell_index(cc[0], cc[1], cc[2])];
      }
      if (!in_a) std::swap(quad[1], quad[3]);
      t.quads.push_back(quad);
    }
  }
  return t;
}

Var dual_vertices(const FlexTopology& topo, Var s, Var d, Var w) {
  Tape& tape = s.tape();
  const Eigen::Index a = static_cast<Eigen::Index>(topo.num_nodes()), c = static_cast<Eigen::Index>(topo.num_cells());
  if (s.rows() != a || s.cols() != 1 || d.rows() != a || d.cols() != 1 || w.rows() != c || w.cols() != 8)
    throw std::invalid_argument("dual_vertices: inputs do not match topology");
  Var x = add(tape.constant(topo.node_pos), mul(d, tape.constant(topo.normals)));
  Var wf = reshape(w, c * 8, 1);
  Var pa = mul(gather_rows(s, topo.edge_a), gather_rows(wf, topo.edge_wa));
  Var pb = mul(gather_rows(s, topo.edge_b), gather_rows(wf, topo.edge_wb));
  Var xa = gather_rows(x, topo.edge_a), xb = gather_rows(x, topo.edge_b);
  Var u = div(sub(mul(pa, xb), mul(pb, xa)), sub(pa, pb));
  return spmm(topo.average, u);
}

Mat dual_vertices(const FlexTopology& topo, const Mat& s, const Mat& d, const Mat& w) {
  if (topo.cells.empty()) return Mat(0, 3);
  Tape tape;
  return dual_vertices(topo, tape.constant(s), tape.constant(d), tape.constant(w)).value();
}

std::vector<Eigen::Vector3i> triangulate(const FlexTopology& topo, const Mat& v) {
  std::vector<Eigen::Vector3i> tris;
  tris.reserve(topo.quads.size() * 2);
  for (const auto& q : topo.quads) {
    const double d02 = (v.row(q[0]) - v.row(q[2])).squaredNorm();
    const double d13 = (v.row(q[1]) - v.row(q[3])).squaredNorm();
    if (d02 <= d13) {
      tris.emplace_back(q[0], q[1], q[2]);
      tris.emplace_back(q[0], q[2], q[3]);
    } else {
      tris.emplace_back(q[0], q[1], q[3]);
      tris.emplace_back(q[1], q[2], q[3]);
    }
  }
  return tris;
}

Var reg_loss(const FlexTopology& topo, Var s, Var d, Var w) {
  Tape& tape = s.tape();
  if (topo.cells.empty()) return tape.constant(0.0);
  Var deform = mean(abs(d)) * (2.0 / topo.h);
  Var total = add(deform, mean(square(log(w))));
  if (!topo.flip_a.empty()) {
    // Each endpoint's SDF is treated as a logit and pulled toward the sign of
    // the other endpoint, which penalizes spurious sign changes.
    Var sa = gather_rows(s, topo.flip_a), sb = gather_rows(s, topo.flip_b);
    const Mat ya = (sb.value().array() > 0.0).cast<double>().matrix();
    const Mat yb = (sa.value().array() > 0.0).cast<double>().matrix();
    Var bce_a = sub(softplus(sa), mul(sa, tape.constant(ya)));
    Var bce_b = sub(softplus(sb), mul(sb, tape.constant(yb)));
    const Var parts[2] = {bce_a, bce_b};
    total = add(total, mean(concat_rows(parts)));
  }
  return total;
}

double reg_loss(const FlexTopology& topo, const Mat& s, const Mat& d, const Mat& w) {
  Tape tape;
  return reg_loss(topo, tape.constant(s), tape.constant(d), tape.constant(w)).item();
}

void gather_active(const FlexTopology& topo, const FlexGrid& grid, Mat& s, Mat& d, Mat& w) {
  s.resize(static_cast<Eigen::Index>(topo.num_nodes()), 1);
  d.resize(s.rows(), 1);
  w.resize(static_cast<Eigen::Index>(topo.num_cells()), 8);
  for (std::size_t a = 0; a < topo.nodes.size(); ++a) {
    s(static_cast<Eigen::Index>(a), 0) = grid.sdf(topo.nodes[a], 0);
    d(static_cast<Eigen::Index>(a), 0) = grid.deform(topo.nodes[a], 0);
  }
  for (std::size_t c = 0; c < topo.cells.size(); ++c) w.row(static_cast<Eigen::Index>(c)) = grid.weights.row(topo.cells[c]);
}

Mesh flexicubes_extract(const FlexGrid& grid) {
  const FlexTopology topo = build_topology(grid);
  Mesh mesh;
  if (topo.cells.empty()) {
    mesh.vertices.resize(0, 3);
    return mesh;
  }
  Mat s, d, w;
  gather_active(topo, grid, s, d, w);
  mesh.vertices = dual_vertices(topo, s, d, w);
  mesh.triangles = triangulate(topo, mesh.vertices);
  return mesh;
}

FlexSurface flexicubes_extract(Tape& tape, Model& model, int resolution) {
  FlexSurface out;
  out.topo = build_topology(sample_sdf_grid(model, resolution));
  if (out.topo.cells.empty()) {
    out.mesh.vertices.resize(0, 3);
    out.vertices = tape.constant(Mat(0, 3));
    out.reg = tape.constant(0.0);
    return out;
  }
  Var p = tape.constant(out.topo.node_pos);
  Var in = head_input(model.field.query(tape, p), p);
  Var s = decode_sdf(model.heads, in);
  Var d = decode_deform(model.heads, in, out.topo.h);
  Var q = tape.constant(out.topo.cell_centers);
  Var w = decode_weights(model.heads, head_input(model.field.query(tape, q), q));
  out.vertices = dual_vertices(out.topo, s, d, w);
  out.reg = reg_loss(out.topo, s, d, w);
  out.mesh.vertices = out.vertices.value();
  out.mesh.triangles = triangulate(out.topo, out.mesh.vertices);
  return out;
}

void attach_colors(Mesh& mesh, const Model& model) {
  if (mesh.num_vertices() == 0) {
    mesh.albedo.resize(0, 3);
    mesh.shading.resize(0, 3);
    return;
  }
  const Mat p = mesh.vertices;
  const ColorMats c = decode_color(model.heads, head_input(model.field.query_batch(p), p));
  mesh.albedo = c.albedo;
  mesh.shading = c.shading;
}

}  // namespace tsdf
