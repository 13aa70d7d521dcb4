#include "tsdf/mesh.hpp"

#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>
#include <stdexcept>

#include <Eigen/Geometry>

namespace tsdf {

bool is_watertight(const Mesh& mesh) {
  std::map<std::pair<int, int>, int> uses;
  for (const auto& t : mesh.triangles)
    for (int e = 0; e < 3; ++e) {
      int a = t[e], b = t[(e + 1) % 3];
      if (a > b) std::swap(a, b);
      ++uses[{a, b}];
    }
  for (const auto& [edge, n] : uses)
    if (n != 2) return false;
  return true;
}

double signed_volume(const Mesh& mesh) {
  double v = 0.0;
  for (const auto& t : mesh.triangles) {
    const Eigen::Vector3d a = mesh.vertices.row(t[0]).transpose();
    const Eigen::Vector3d b = mesh.vertices.row(t[1]).transpose();
    const Eigen::Vector3d c = mesh.vertices.row(t[2]).transpose();
    v += a.dot(b.cross(c));
  }
  return v / 6.0;
}

double surface_area(const Mesh& mesh) {
  double area = 0.0;
  for (const auto& t : mesh.triangles) {
    const Eigen::Vector3d a = mesh.vertices.row(t[0]).transpose();
    const Eigen::Vector3d b = mesh.vertices.row(t[1]).transpose();
    const Eigen::Vector3d c = mesh.vertices.row(t[2]).transpose();
    area += 0.5 * (b - a).cross(c - a).norm();
  }
  return area;
}

void validate(const Mesh& mesh) {
  if (mesh.vertices.cols() != 3 && mesh.vertices.size() != 0) throw std::invalid_argument("mesh: vertices must be V x 3");
  if (!mesh.vertices.allFinite()) throw std::invalid_argument("mesh: non-finite vertex");
  for (const auto& t : mesh.triangles)
    for (int k = 0; k < 3; ++k)
      if (t[k] < 0 || t[k] >= mesh.num_vertices()) throw std::invalid_argument("mesh: triangle index out of range");
}

void write_obj(const std::string& path, const Mesh& mesh, const Mat* colors) {
  if (colors && colors->rows() != mesh.num_vertices()) throw std::invalid_argument("write_obj: one color per vertex required");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << std::setprecision(9);
  for (Eigen::Index i = 0; i < mesh.num_vertices(); ++i) {
    out << "v " << mesh.vertices(i, 0) << ' ' << mesh.vertices(i, 1) << ' ' << mesh.vertices(i, 2);
    if (colors) out << ' ' << (*colors)(i, 0) << ' ' << (*colors)(i, 1) << ' ' << (*colors)(i, 2);
    out << '\n';
  }
  for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
  if (!out) throw std::runtime_error("write failed: " + path);
}

Mesh read_obj(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  std::vector<Eigen::Vector3d> verts;
  std::vector<Eigen::Vector3d> cols;
  Mesh mesh;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ls(line);
    std::string tag;
    if (!(ls >> tag)) continue;
    if (tag == "v") {
      Eigen::Vector3d p, c;
      if (!(ls >> p.x() >> p.y() >> p.z())) throw std::runtime_error(path + ":" + std::to_string(lineno) + ": bad vertex");
      verts.push_back(p);
      if (ls >> c.x() >> c.y() >> c.z()) cols.push_back(c);
    } else if (tag == "f") {
      std::vector<int> idx;
      std::string tok;
      while (ls >> tok) {
        const int v = std::stoi(tok.substr(0, tok.find('/')));
        idx.push_back(v > 0 ? v - 1 : static_cast<int>(verts.size()) + v);
      }
      if (idx.size() < 3) throw std::runtime_error(path + ":" + std::to_string(lineno) + ": face with < 3 vertices");
      for (std::size_t k = 1; k + 1 < idx.size(); ++k) mesh.triangles.emplace_back(idx[0], idx[k], idx[k + 1]);
    }
  }
  mesh.vertices.resize(static_cast<Eigen::Index>(verts.size()), 3);
  for (std::size_t i = 0; i < verts.size(); ++i) mesh.vertices.row(static_cast<Eigen::Index>(i)) = verts[i].transpose();
  if (!cols.empty() && cols.size() == verts.size()) {
    mesh.albedo.resize(mesh.vertices.rows(), 3);
    for (std::size_t i = 0; i < cols.size(); ++i) mesh.albedo.row(static_cast<Eigen::Index>(i)) = cols[i].transpose();
  }
  validate(mesh);
  return mesh;
}

}  // namespace tsdf
