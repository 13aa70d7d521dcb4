#include "tsdf/synth.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "tsdf/field.hpp"
#include "tsdf/parallel.hpp"
#include "tsdf/volren.hpp"

namespace tsdf {

using nlohmann::json;

Eigen::Vector3d Albedo::at(const Eigen::Vector3d& p) const {
  if (kind == Kind::constant) return color;
  const double f = std::clamp((p[axis] - from) / (to - from), 0.0, 1.0);
  return (1.0 - f) * color + f * color_to;
}

void SceneSpec::validate() const {
  if (primitives.empty()) throw std::invalid_argument("scene: no primitives");
  if (std::abs(light.norm() - 1.0) > 1e-9) throw std::invalid_argument("scene: light direction must be unit length");
  if (!(ambient >= 0.0 && ambient <= 1.0)) throw std::invalid_argument("scene: ambient must be in [0, 1]");
  if (!(blend >= 0.0)) throw std::invalid_argument("scene: blend must be non-negative");
  if (rig.views < 1 || rig.width < 1 || rig.height < 1 || !(rig.radius > 0.0) || !(rig.fov > 0.0 && rig.fov < 180.0) ||
      rig.elevations.empty())
    throw std::invalid_argument("scene: invalid camera rig");
  if (heldout_views < 0) throw std::invalid_argument("scene: heldout_views must be >= 0");
  for (const Primitive& p : primitives) {
    if (p.kind == Primitive::Kind::sphere && !(p.radius > 0.0)) throw std::invalid_argument("scene: sphere radius must be positive");
    if (p.kind == Primitive::Kind::box && !(p.half_extents.array() > 0.0).all())
      throw std::invalid_argument("scene: box half extents must be positive");
    if (p.kind == Primitive::Kind::torus && !(p.major > p.minor && p.minor > 0.0))
      throw std::invalid_argument("scene: torus needs major > minor > 0");
    if (p.axis < 0 || p.axis > 2 || p.albedo.axis < 0 || p.albedo.axis > 2) throw std::invalid_argument("scene: axis must be 0, 1 or 2");
    if (p.albedo.kind == Albedo::Kind::gradient && !(p.albedo.to != p.albedo.from))
      throw std::invalid_argument("scene: albedo gradient needs from != to");
    for (const Eigen::Vector3d* c : {&p.albedo.color, &p.albedo.color_to})
      if (!((c->array() >= 0.0).all() && (c->array() <= 1.0).all())) throw std::invalid_argument("scene: albedo outside [0, 1]");
  }
}

SceneSpec sphere_scene() {
  SceneSpec s;
  Primitive p;
  p.kind = Primitive::Kind::sphere;
  p.radius = 0.5;
  p.albedo.color = {0.85, 0.55, 0.35};
  s.primitives.push_back(p);
  s.light = Eigen::Vector3d(0.4, 0.3, 1.0).normalized();
  return s;
}

SceneSpec torus_scene() {
  SceneSpec s = sphere_scene();
  Primitive& p = s.primitives[0];
  p.kind = Primitive::Kind::torus;
  p.major = 0.5;
  p.minor = 0.2;
  p.albedo.color = {0.35, 0.6, 0.85};
  return s;
}

SceneSpec box_scene() {
  SceneSpec s = sphere_scene();
  Primitive& p = s.primitives[0];
  p.kind = Primitive::Kind::box;
  p.half_extents = {0.4, 0.4, 0.4};
  p.albedo.color = {0.7, 0.7, 0.4};
  return s;
}

namespace {

Eigen::Vector3d vec3(const json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument(std::string("scene: ") + what + " must be a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

json to_j(const Eigen::Vector3d& v) { return json::array({v.x(), v.y(), v.z()}); }

void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* where) {
  if (!j.is_object()) throw std::invalid_argument(std::string("scene: ") + where + " must be an object");
  std::set<std::string> ok(allowed.begin(), allowed.end());
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!ok.count(it.key())) throw std::invalid_argument(std::string("scene: unknown key '") + it.key() + "' in " + where);
}

Albedo parse_albedo(const json& j) {
  check_keys(j, {"constant", "gradient"}, "albedo");
  Albedo a;
  if (j.contains("constant")) {
    a.color = vec3(j["constant"], "albedo.constant");
  } else if (j.contains("gradient")) {
    const json& g = j["gradient"];
    check_keys(g, {"axis", "from", "to", "color_from", "color_to"}, "albedo.gradient");
    a.kind = Albedo::Kind::gradient;
    a.axis = g.value("axis", 2);
    a.from = g.value("from", -1.0);
    a.to = g.value("to", 1.0);
    a.color = vec3(g.at("color_from"), "color_from");
    a.color_to = vec3(g.at("color_to"), "color_to");
  } else {
    throw std::invalid_argument("scene: albedo needs 'constant' or 'gradient'");
  }
  return a;
}

}  // namespace

SceneSpec parse_scene(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("scene: ") + e.what());
  }
  SceneSpec s;
  try {
    check_keys(j, {"primitives", "blend", "light", "camera", "heldout_views"}, "scene");
    for (const json& pj : j.at("primitives")) {
      check_keys(pj, {"type", "center", "radius", "half_extents", "radii", "axis", "albedo"}, "primitive");
      Primitive p;
      const std::string type = pj.at("type").get<std::string>();
      if (pj.contains("center")) p.center = vec3(pj["center"], "center");
      if (type == "sphere") {
        p.kind = Primitive::Kind::sphere;
        p.radius = pj.at("radius").get<double>();
      } else if (type == "box") {
        p.kind = Primitive::Kind::box;
        p.half_extents = vec3(pj.at("half_extents"), "half_extents");
      } else if (type == "torus") {
        p.kind = Primitive::Kind::torus;
        const json& r = pj.at("radii");
        if (!r.is_array() || r.size() != 2) throw std::invalid_argument("scene: torus radii must be [major, minor]");
        p.major = r[0].get<double>();
        p.minor = r[1].get<double>();
        p.axis = pj.value("axis", 2);
      } else {
        throw std::invalid_argument("scene: unknown primitive type '" + type + "'");
      }
      if (pj.contains("albedo")) p.albedo = parse_albedo(pj["albedo"]);
      s.primitives.push_back(p);
    }
    s.blend = j.value("blend", 0.0);
    if (j.contains("light")) {
      const json& l = j["light"];
      check_keys(l, {"direction", "ambient"}, "light");
      if (l.contains("direction")) {
        const Eigen::Vector3d d = vec3(l["direction"], "light.direction");
        if (!(d.norm() > 0.0)) throw std::invalid_argument("scene: light direction must be nonzero");
        // Already-unit input is kept verbatim so serialization round-trips exactly.
        s.light = std::abs(d.norm() - 1.0) < 1e-12 ? d : d.normalized();
      }
      s.ambient = l.value("ambient", s.ambient);
    }
    if (j.contains("camera")) {
      const json& c = j["camera"];
      check_keys(c, {"views", "elevations", "radius", "fov", "width", "height", "azimuth_offset"}, "camera");
      s.rig.views = c.value("views", s.rig.views);
      if (c.contains("elevations")) s.rig.elevations = c["elevations"].get<std::vector<double>>();
      s.rig.radius = c.value("radius", s.rig.radius);
      s.rig.fov = c.value("fov", s.rig.fov);
      s.rig.width = c.value("width", s.rig.width);
      s.rig.height = c.value("height", s.rig.height);
      s.rig.azimuth_offset = c.value("azimuth_offset", s.rig.azimuth_offset);
    }
    s.heldout_views = j.value("heldout_views", s.heldout_views);
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("scene: ") + e.what());
  }
  s.validate();
  return s;
}

SceneSpec load_scene(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scene file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scene(ss.str());
}

std::string scene_to_json(const SceneSpec& s) {
  json j;
  j["primitives"] = json::array();
  for (const Primitive& p : s.primitives) {
    json pj;
    pj["center"] = to_j(p.center);
    switch (p.kind) {
      case Primitive::Kind::sphere:
        pj["type"] = "sphere";
        pj["radius"] = p.radius;
        break;
      case Primitive::Kind::box:
        pj["type"] = "box";
        pj["half_extents"] = to_j(p.half_extents);
        break;
      case Primitive::Kind::torus:
        pj["type"] = "torus";
        pj["radii"] = {p.major, p.minor};
        pj["axis"] = p.axis;
        break;
    }
    if (p.albedo.kind == Albedo::Kind::constant)
      pj["albedo"] = {{"constant", to_j(p.albedo.color)}};
    else
      pj["albedo"] = {{"gradient",
                       {{"axis", p.albedo.axis}, {"from", p.albedo.from}, {"to", p.albedo.to},
                        {"color_from", to_j(p.albedo.color)}, {"color_to", to_j(p.albedo.color_to)}}}};
    j["primitives"].push_back(pj);
  }
  j["blend"] = s.blend;
  j["light"] = {{"direction", to_j(s.light)}, {"ambient", s.ambient}};
  j["camera"] = {{"views", s.rig.views},   {"elevations", s.rig.elevations}, {"radius", s.rig.radius},
                 {"fov", s.rig.fov},       {"width", s.rig.width},           {"height", s.rig.height},
                 {"azimuth_offset", s.rig.azimuth_offset}};
  j["heldout_views"] = s.heldout_views;
  return j.dump(2);
}

namespace {

SdfSample eval_primitive(const Primitive& prim, const Eigen::Vector3d& p) {
  const Eigen::Vector3d q = p - prim.center;
  SdfSample out{0.0, Eigen::Vector3d::UnitZ(), prim.albedo.at(p)};
  switch (prim.kind) {
    case Primitive::Kind::sphere: {
      const double len = q.norm();
      out.distance = len - prim.radius;
      if (len > 0.0) out.gradient = q / len;
      break;
    }
    case Primitive::Kind::box: {
      const Eigen::Vector3d d = q.cwiseAbs() - prim.half_extents;
      const Eigen::Vector3d outside = d.cwiseMax(0.0);
      const double olen = outside.norm();
      if (olen > 0.0) {
        out.distance = olen;
        for (int a = 0; a < 3; ++a) out.gradient[a] = (q[a] < 0 ? -1.0 : 1.0) * outside[a] / olen;
      } else {
        int axis = 0;
        out.distance = d.maxCoeff(&axis);
        out.gradient = Eigen::Vector3d::Zero();
        out.gradient[axis] = q[axis] < 0 ? -1.0 : 1.0;
      }
      break;
    }
    case Primitive::Kind::torus: {
      const int a = prim.axis, u = (a + 1) % 3, v = (a + 2) % 3;
      const double rho = std::hypot(q[u], q[v]);
      const double dx = rho - prim.major, dz = q[a];
      const double len = std::hypot(dx, dz);
      out.distance = len - prim.minor;
      if (len > 0.0) {
        out.gradient = Eigen::Vector3d::Zero();
        const double radial = dx / len;
        if (rho > 0.0) {
          out.gradient[u] = radial * q[u] / rho;
          out.gradient[v] = radial * q[v] / rho;
        }
        out.gradient[a] = dz / len;
      }
      break;
    }
  }
  return out;
}

}  // namespace

double primitive_sdf(const Primitive& prim, const Eigen::Vector3d& p) { return eval_primitive(prim, p).distance; }

SdfSample scene_eval(const SceneSpec& spec, const Eigen::Vector3d& p) {
  SdfSample acc = eval_primitive(spec.primitives.front(), p);
  for (std::size_t i = 1; i < spec.primitives.size(); ++i) {
    const SdfSample b = eval_primitive(spec.primitives[i], p);
    if (spec.blend <= 0.0) {
      if (b.distance < acc.distance) acc = b;
      continue;
    }
    // Polynomial smooth minimum.
    const double k = spec.blend;
    const double h = std::clamp(0.5 + 0.5 * (b.distance - acc.distance) / k, 0.0, 1.0);
    SdfSample m;
    m.distance = h * acc.distance + (1.0 - h) * b.distance - k * h * (1.0 - h);
    m.gradient = h * acc.gradient + (1.0 - h) * b.gradient;
    m.albedo = h * acc.albedo + (1.0 - h) * b.albedo;
    acc = m;
  }
  return acc;
}

double scene_sdf(const SceneSpec& spec, const Eigen::Vector3d& p) { return scene_eval(spec, p).distance; }

namespace {

std::vector<Camera> rig_cameras(const SceneSpec& spec, int count, double az_shift, int el_shift) {
  std::vector<Camera> cams;
  const OrbitRig& r = spec.rig;
  const int n_el = static_cast<int>(r.elevations.size());
  for (int i = 0; i < count; ++i) {
    const double az = r.azimuth_offset + az_shift + 360.0 * i / count;
    const double el = r.elevations[(i + el_shift) % n_el];
    cams.push_back(orbit_camera(az, el, r.radius, r.fov, r.width, r.height));
  }
  return cams;
}

struct TraceResult {
  bool hit = false;
  double t = 0.0;
  Eigen::Vector3d albedo = Eigen::Vector3d::Zero();
  Eigen::Vector3d shading = Eigen::Vector3d::Zero();
};

TraceResult trace_pixel(const SceneSpec& spec, const Ray& ray) {
  TraceResult r;
  const Bounds box;
  double near, far;
  if (!ray_box(ray, box, near, far)) return r;
  double t = near;
  for (int step = 0; step < 1024 && t <= far; ++step) {
    const double d = scene_sdf(spec, ray.origin + t * ray.dir);
    if (std::abs(d) < 1e-9) {
      r.hit = true;
      break;
    }
    t += d;
  }
  if (!r.hit) return r;
  const SdfSample s = scene_eval(spec, ray.origin + t * ray.dir);
  const Eigen::Vector3d n = s.gradient.normalized();
  const double lambert = std::max(0.0, n.dot(spec.light));
  r.t = t;
  r.albedo = s.albedo;
  r.shading = Eigen::Vector3d::Constant(spec.ambient + (1.0 - spec.ambient) * lambert);
  return r;
}

}  // namespace

std::vector<Camera> orbit_cameras(const SceneSpec& spec) { return rig_cameras(spec, spec.rig.views, 0.0, 0); }

std::vector<Camera> heldout_cameras(const SceneSpec& spec) {
  if (spec.heldout_views == 0) return {};
  return rig_cameras(spec, spec.heldout_views, 180.0 / spec.rig.views, 1);
}

RenderBundle render_gt(const SceneSpec& spec, const Camera& cam) {
  spec.validate();
  RenderBundle b = RenderBundle::zeros(cam.width, cam.height);
  parallel_for(static_cast<std::size_t>(cam.height), [&](std::size_t y0, std::size_t y1, std::size_t) {
    for (std::size_t y = y0; y < y1; ++y)
      for (int x = 0; x < cam.width; ++x) {
        const TraceResult r = trace_pixel(spec, pixel_ray(cam, x, static_cast<int>(y)));
        if (!r.hit) continue;
        const Eigen::Index o = static_cast<Eigen::Index>(y) * cam.width + x;
        b.albedo.row(o) = r.albedo.transpose();
        b.rgb.row(o) = r.albedo.cwiseProduct(r.shading).transpose();
        b.mask(o, 0) = 1.0;
        b.depth(o, 0) = r.t;
      }
  });
  return b;
}

Mat render_gt_shading(const SceneSpec& spec, const Camera& cam) {
  Mat s = Mat::Zero(static_cast<Eigen::Index>(cam.width) * cam.height, 3);
  for (int y = 0; y < cam.height; ++y)
    for (int x = 0; x < cam.width; ++x) {
      const TraceResult r = trace_pixel(spec, pixel_ray(cam, x, y));
      if (r.hit) s.row(static_cast<Eigen::Index>(y) * cam.width + x) = r.shading.transpose();
    }
  return s;
}

}  // namespace tsdf
